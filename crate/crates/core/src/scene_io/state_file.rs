//! Binary state file: magic `CSSD`, u32 version, u64 N, u32 C, f64 prior,
//! C × f64 background, then N × C f64 concentrations row-major. All
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::semantic_fusion::SemanticState;

const MAGIC: &[u8; 4] = b"CSSD";
const VERSION: u32 = 1;

/// Writes a state; `path` is only used for error messages.
pub fn write_semantic_state<W: Write>(state: &SemanticState, writer: W, path: &Path) -> Result<()> {
    state.validate()?;
    let mut w = BufWriter::new(writer);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(state.num_gaussians() as u64).to_le_bytes())?;
    put(&(state.num_classes() as u32).to_le_bytes())?;
    put(&state.prior_value().to_le_bytes())?;
    for v in state.background() {
        put(&v.to_le_bytes())?;
    }
    for v in state.concentrations() {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_semantic_state(state: &SemanticState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    state.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_semantic_state(state, file, path)
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads a state; `path` is only used for error messages.
pub fn read_semantic_state<R: Read>(reader: R, path: &Path) -> Result<SemanticState> {
    let mut r = BufReader::new(reader);
    let io = |e| Error::io(path, e);
    let magic: [u8; 4] = read_array(&mut r).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad state magic {magic:?}, expected \"CSSD\""
        )));
    }
    let version = u32::from_le_bytes(read_array(&mut r).map_err(io)?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported state version {version}"
        )));
    }
    let n = u64::from_le_bytes(read_array(&mut r).map_err(io)?) as usize;
    let c = u32::from_le_bytes(read_array(&mut r).map_err(io)?) as usize;
    let prior = f64::from_le_bytes(read_array(&mut r).map_err(io)?);
    let read_f64s = |r: &mut BufReader<R>, count: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![
            0u8;
            count
                .checked_mul(8)
                .ok_or_else(|| Error::Format("state size overflows".into()))?
        ];
        r.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    };
    let background = read_f64s(&mut r, c)?;
    let concentrations = read_f64s(
        &mut r,
        n.checked_mul(c)
            .ok_or_else(|| Error::Format("state size overflows".into()))?,
    )?;
    SemanticState::from_parts(n, c, prior, background, concentrations)
}

pub fn load_semantic_state(path: impl AsRef<Path>) -> Result<SemanticState> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_semantic_state(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_bytes(state: &SemanticState) -> Vec<u8> {
        let mut buf = Vec::new();
        write_semantic_state(state, &mut buf, Path::new("s")).unwrap();
        buf
    }

    #[test]
    fn layout_is_as_documented() {
        let state = SemanticState::init(2, 3, 0.001).unwrap();
        let b = to_bytes(&state);
        assert_eq!(&b[..4], b"CSSD");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[20..28].try_into().unwrap()), 0.001);
        assert_eq!(b.len(), 28 + 3 * 8 + 6 * 8);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut b = to_bytes(&SemanticState::init(1, 2, 0.5).unwrap());
        b[0] = b'X';
        assert!(matches!(
            read_semantic_state(&b[..], Path::new("s")),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut b = to_bytes(&SemanticState::init(1, 2, 0.5).unwrap());
        b[4] = 2;
        assert!(matches!(
            read_semantic_state(&b[..], Path::new("s")),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let b = to_bytes(&SemanticState::init(3, 2, 0.5).unwrap());
        let cut = &b[..b.len() - 5];
        assert!(matches!(
            read_semantic_state(cut, Path::new("s")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn empty_state_is_rejected_at_save() {
        let state = SemanticState::empty_for_test(4);
        let dir = tempfile::tempdir().unwrap();
        assert!(save_semantic_state(&state, dir.path().join("e.cssd")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            extra in proptest::collection::vec(0.0f64..1e6, 40),
            prior in 1e-6f64..10.0,
            bg in proptest::collection::vec(1e-6f64..10.0, 4),
        ) {
            let conc: Vec<f64> = extra.iter().map(|e| prior + e).collect();
            let state = SemanticState::from_parts(10, 4, prior, bg, conc).unwrap();
            let back = read_semantic_state(&to_bytes(&state)[..], Path::new("s")).unwrap();
            prop_assert_eq!(back.num_gaussians(), 10);
            prop_assert_eq!(back.num_classes(), 4);
            prop_assert_eq!(back.prior_value().to_bits(), state.prior_value().to_bits());
            for (a, b) in back.concentrations().iter().zip(state.concentrations()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in back.background().iter().zip(state.background()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

//! Binary little-endian PLY holding pre-activation splat parameters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};

use super::{GaussianCloud, MIN_SCALE, SH_C0};
use crate::error::{Error, Result};

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|(_, t)| t.size()).sum()
    }
}

fn parse_header<R: BufRead>(reader: &mut R, path: &Path) -> Result<Vec<Element>> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::Format("PLY header ended before end_header".into()));
        }
        Ok(())
    };

    next_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Format("missing 'ply' magic line".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        next_line(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "unsupported PLY format '{fmt}', expected binary_little_endian"
                    )));
                }
                saw_format = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Format(format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", ..] => {
                let el = elements.last().map(|e| e.name.as_str()).unwrap_or("?");
                return Err(Error::Format(format!(
                    "list properties are not supported (element '{el}')"
                )));
            }
            ["property", ty, name] => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Format(format!("unknown property type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("property declared before any element".into()))?
                    .properties
                    .push((name.to_string(), ty));
            }
            _ => {
                return Err(Error::Format(format!(
                    "unrecognized header line '{}'",
                    line.trim_end()
                )))
            }
        }
    }
    if !saw_format {
        return Err(Error::Format("PLY header has no format line".into()));
    }
    Ok(elements)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Largest opacity representable strictly below one.
const MAX_OPACITY: f64 = 1.0 - 1e-12;

/// Reads a splat PLY from any reader; `path` is only used for error messages.
pub fn read_gaussian_ply<R: Read>(reader: R, path: &Path) -> Result<GaussianCloud> {
    let mut reader = BufReader::new(reader);
    let elements = parse_header(&mut reader, path)?;

    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format("PLY has no 'vertex' element".into()))?;

    // Skip fixed-size elements stored ahead of the vertices.
    for el in &elements[..vertex_pos] {
        let skip = (el.count * el.stride()) as u64;
        let copied = std::io::copy(&mut (&mut reader).take(skip), &mut std::io::sink())
            .map_err(|e| Error::io(path, e))?;
        if copied != skip {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated PLY body"),
            ));
        }
    }

    let vertex = &elements[vertex_pos];
    let mut offsets = [0usize; REQUIRED.len()];
    let mut types = [ScalarType::F32; REQUIRED.len()];
    for (slot, name) in REQUIRED.iter().enumerate() {
        let mut offset = 0;
        let mut found = false;
        for (prop, ty) in &vertex.properties {
            if prop == name {
                offsets[slot] = offset;
                types[slot] = *ty;
                found = true;
                break;
            }
            offset += ty.size();
        }
        if !found {
            return Err(Error::Format(format!(
                "missing required vertex property '{name}'"
            )));
        }
    }

    if vertex.count == 0 {
        return Err(Error::EmptyScene);
    }

    let stride = vertex.stride();
    let mut record = vec![0u8; stride];
    let mut cloud = GaussianCloud::empty();
    for index in 0..vertex.count {
        reader
            .read_exact(&mut record)
            .map_err(|e| Error::io(path, e))?;
        let mut v = [0f64; REQUIRED.len()];
        for slot in 0..REQUIRED.len() {
            v[slot] = types[slot].decode(&record[offsets[slot]..]);
            if !v[slot].is_finite() {
                return Err(Error::Data {
                    index,
                    message: format!("non-finite value in property '{}'", REQUIRED[slot]),
                });
            }
        }
        let q = Quaternion::new(v[3], v[4], v[5], v[6]);
        if q.norm() < 1e-12 {
            return Err(Error::Data {
                index,
                message: "rotation quaternion has zero norm".into(),
            });
        }
        let scale = Vector3::new(v[7].exp(), v[8].exp(), v[9].exp());
        if !scale.iter().all(|s| s.is_finite() && *s > MIN_SCALE) {
            return Err(Error::Data {
                index,
                message: "activated scale is not positive and finite".into(),
            });
        }
        let opacity = logistic(v[10]).min(MAX_OPACITY);
        if opacity <= 0.0 {
            return Err(Error::Data {
                index,
                message: "activated opacity underflows to zero".into(),
            });
        }
        let color = [
            (SH_C0 * v[11] + 0.5).clamp(0.0, 1.0),
            (SH_C0 * v[12] + 0.5).clamp(0.0, 1.0),
            (SH_C0 * v[13] + 0.5).clamp(0.0, 1.0),
        ];
        cloud.positions.push(Point3::new(v[0], v[1], v[2]));
        cloud.rotations.push(UnitQuaternion::from_quaternion(q));
        cloud.scales.push(scale);
        cloud.opacities.push(opacity);
        cloud.base_colors.push(color);
    }
    Ok(cloud)
}

pub fn load_gaussian_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gaussian_ply(file, path)
}

/// Writes the cloud back in pre-activation form (logit opacity, log scale,
/// DC coefficients), as f32 like the common exporters.
pub fn write_gaussian_ply<W: Write>(cloud: &GaussianCloud, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for name in [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
        "rot_0", "rot_1", "rot_2", "rot_3",
    ] {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let c = cloud.base_colors[i];
        let o = cloud.opacities[i];
        let s = cloud.scales[i];
        let q = cloud.rotations[i].quaternion();
        let values = [
            p.x,
            p.y,
            p.z,
            (c[0] - 0.5) / SH_C0,
            (c[1] - 0.5) / SH_C0,
            (c[2] - 0.5) / SH_C0,
            (o / (1.0 - o)).ln(),
            s.x.ln(),
            s.y.ln(),
            s.z.ln(),
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_gaussian_ply(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_gaussian_ply(cloud, file).map_err(|e| Error::io(path, e))
}

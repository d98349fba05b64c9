//! PLY point clouds: ASCII and binary little-endian readers, binary writer.
//!
//! Only the `vertex` element is interpreted. Its `x`, `y`, `z` properties may
//! be `float` or `double`; other vertex properties and other elements are
//! skipped. List properties are rejected on the vertex element.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {msg}", path.display()))
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| parse_err(path, "missing end_header"))?;
    let mut body_offset = end + END.len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) != Some(&b'\n') {
        return Err(parse_err(path, "end_header must end its line"));
    }
    body_offset += 1;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| parse_err(path, "header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(parse_err(path, "missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(parse_err(path, format!("unsupported format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(path, format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, _name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "property before element"))?;
                let count = Scalar::parse(c).ok_or_else(|| parse_err(path, format!("unknown type {c}")))?;
                let item = Scalar::parse(i).ok_or_else(|| parse_err(path, format!("unknown type {i}")))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "property before element"))?;
                let s = Scalar::parse(ty).ok_or_else(|| parse_err(path, format!("unknown type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), s));
            }
            _ => return Err(parse_err(path, format!("unrecognized header line {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(path, "missing format line"))?;
    Ok(Header { format, elements, body_offset })
}

/// Indices of x, y, z among the vertex properties.
fn xyz_slots(el: &Element, path: &Path) -> Result<[usize; 3]> {
    let find = |axis: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or_else(|| parse_err(path, format!("vertex element has no {axis} property")))
    };
    if el.props.iter().any(|p| matches!(p, Property::List { .. })) {
        return Err(parse_err(path, "list properties on vertices are not supported"));
    }
    Ok([find("x")?, find("y")?, find("z")?])
}

fn read_ascii(body: &[u8], header: &Header, path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = std::str::from_utf8(body).map_err(|_| parse_err(path, "ASCII body is not UTF-8"))?;
    let mut tokens = text.split_whitespace();
    let mut points = Vec::new();
    for el in &header.elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el, path)?) } else { None };
        for row in 0..el.count {
            let mut values = Vec::with_capacity(el.props.len());
            for p in &el.props {
                let mut next = || {
                    tokens
                        .next()
                        .ok_or_else(|| parse_err(path, format!("{} row {row} is truncated", el.name)))?
                        .parse::<f64>()
                        .map_err(|e| parse_err(path, format!("{} row {row}: {e}", el.name)))
                };
                match p {
                    Property::Scalar(_, Scalar::F32) => values.push(next()? as f32 as f64),
                    Property::Scalar(..) => values.push(next()?),
                    Property::List { .. } => {
                        let n = next()? as usize;
                        for _ in 0..n {
                            next()?;
                        }
                        values.push(0.0);
                    }
                }
            }
            if let Some([x, y, z]) = slots {
                points.push(Vector3::new(values[x], values[y], values[z]));
            }
        }
    }
    Ok(points)
}

fn read_binary(body: &[u8], header: &Header, path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut at = 0usize;
    let truncated = || parse_err(path, "binary body is truncated");
    let mut points = Vec::new();
    for el in &header.elements {
        let slots = if el.name == "vertex" { Some(xyz_slots(el, path)?) } else { None };
        let mut values = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            for (k, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar(_, s) => {
                        let b = body.get(at..at + s.size()).ok_or_else(truncated)?;
                        values[k] = s.read_le(b);
                        at += s.size();
                    }
                    Property::List { count, item } => {
                        let b = body.get(at..at + count.size()).ok_or_else(truncated)?;
                        let n = count.read_le(b) as usize;
                        at += count.size() + n * item.size();
                        if at > body.len() {
                            return Err(truncated());
                        }
                    }
                }
            }
            if let Some([x, y, z]) = slots {
                points.push(Vector3::new(values[x], values[y], values[z]));
            }
        }
    }
    Ok(points)
}

/// Parses PLY bytes; `path` only labels errors.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    if !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(parse_err(path, "no vertex element"));
    }
    let body = &bytes[header.body_offset..];
    let points = match header.format {
        Format::Ascii => read_ascii(body, &header, path)?,
        Format::BinaryLe => read_binary(body, &header, path)?,
    };
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(parse_err(path, "non-finite vertex coordinate"));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no vertices", path.display())));
    }
    PointCloud::new(points)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}

/// Binary little-endian PLY with `float` x, y, z.
pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    let mut out = header.into_bytes();
    out.reserve(cloud.len() * 12);
    for p in cloud.points() {
        for v in p.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// ASCII PLY with `float` x, y, z.
pub fn encode_ply_ascii(cloud: &PointCloud) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p.x as f32, p.y as f32, p.z as f32));
    }
    out.into_bytes()
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode_ply(cloud)).map_err(|e| Error::io(path, e))
}

//! PLY meshes: ASCII and binary little-endian.
//!
//! Vertex positions (and normals when all of `nx ny nz` are present) are read;
//! colors and unknown properties are skipped. Polygons are fan-triangulated.

use std::path::Path;

use pose_forge::geometry::{TriangleMesh, Vec3};

use crate::error::{read_file, write_file, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    data_start: usize,
}

const CONTEXT: &str = "ply";

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let err = |offset: usize, msg: String| HarnessError::parse_at_byte(CONTEXT, offset, msg);
    let mut pos = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(err(bytes.len(), "header ends before `end_header`".into()));
        };
        let line_start = pos;
        let line = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|_| err(line_start, "header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        pos += len + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if first {
            if line.trim() != "ply" {
                return Err(err(0, "missing `ply` magic".into()));
            }
            first = false;
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", kind, _version] => {
                format = Some(match *kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(HarnessError::UnsupportedElement {
                            context: CONTEXT.into(),
                            message: format!("format `{other}`"),
                        })
                    }
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(line_start, format!("bad element count `{count}`")))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(err(line_start, format!("unknown list types in `{line}`")));
                };
                if !count.is_integer() {
                    return Err(err(line_start, "list count type must be an integer".into()));
                }
                let el = elements.last_mut().ok_or_else(|| err(line_start, "property before any element".into()))?;
                el.props.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(line_start, format!("unknown property type `{ty}`")))?;
                let el = elements.last_mut().ok_or_else(|| err(line_start, "property before any element".into()))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            ["end_header"] => break,
            _ => return Err(err(line_start, format!("unexpected header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| HarnessError::missing(CONTEXT, "format"))?;
    Ok(Header { format, elements, data_start: pos })
}

/// Sequential value reader over the body.
trait Body {
    fn value(&mut self, ty: Scalar) -> Result<f64>;
    /// Byte offset where the next value starts.
    fn offset(&mut self) -> usize;
}

struct AsciiBody<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Body for AsciiBody<'_> {
    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let start = self.offset();
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(HarnessError::parse_at_byte(CONTEXT, start, "unexpected end of data"));
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        let v: f64 = token
            .parse()
            .map_err(|_| HarnessError::parse_at_byte(CONTEXT, start, format!("bad number `{token}`")))?;
        if ty.is_integer() && v.fract() != 0.0 {
            return Err(HarnessError::parse_at_byte(CONTEXT, start, format!("expected an integer, got `{token}`")));
        }
        Ok(v)
    }

    fn offset(&mut self) -> usize {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.pos
    }
}

struct BinaryBody<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Body for BinaryBody<'_> {
    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        let Some(b) = self.bytes.get(self.pos..self.pos + n) else {
            return Err(HarnessError::parse_at_byte(
                CONTEXT,
                self.pos,
                format!("truncated data: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        };
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }

    fn offset(&mut self) -> usize {
        self.pos
    }
}

fn read_body(header: &Header, body: &mut dyn Body) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let mut seen_vertex = false;
    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                seen_vertex = true;
                let find = |n: &str| el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n));
                let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
                    return Err(HarnessError::missing(CONTEXT, "vertex x/y/z"));
                };
                let normal_idx = match (find("nx"), find("ny"), find("nz")) {
                    (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                    _ => None,
                };
                vertices.reserve(el.count.min(1 << 24));
                let mut values = vec![0.0; el.props.len()];
                for _ in 0..el.count {
                    for (k, p) in el.props.iter().enumerate() {
                        values[k] = match p {
                            Property::Scalar { ty, .. } => body.value(*ty)?,
                            Property::List { count, item, .. } => {
                                skip_list(body, *count, *item)?;
                                0.0
                            }
                        };
                    }
                    vertices.push(Vec3::new(values[ix], values[iy], values[iz]));
                    if let Some([a, b, c]) = normal_idx {
                        normals.push(Vec3::new(values[a], values[b], values[c]));
                    }
                }
            }
            "face" => {
                let has_indices = el
                    .props
                    .iter()
                    .any(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"));
                if !has_indices {
                    return Err(HarnessError::UnsupportedElement {
                        context: CONTEXT.into(),
                        message: "face element without a vertex_indices list".into(),
                    });
                }
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::List { name, count, item } if name == "vertex_indices" || name == "vertex_index" => {
                                let at = body.offset();
                                let n = body.value(*count)? as i64;
                                if n < 3 {
                                    return Err(HarnessError::parse_at_byte(CONTEXT, at, format!("face with {n} vertices")));
                                }
                                let mut idx = Vec::with_capacity(n as usize);
                                for _ in 0..n {
                                    let at = body.offset();
                                    let v = body.value(*item)?;
                                    if v < 0.0 || v as usize >= vertices.len() || !seen_vertex {
                                        return Err(HarnessError::parse_at_byte(
                                            CONTEXT,
                                            at,
                                            format!("vertex index {v} out of range"),
                                        ));
                                    }
                                    idx.push(v as usize);
                                }
                                for k in 1..idx.len() - 1 {
                                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                                }
                            }
                            Property::List { count, item, .. } => skip_list(body, *count, *item)?,
                            Property::Scalar { ty, .. } => {
                                body.value(*ty)?;
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => {
                                body.value(*ty)?;
                            }
                            Property::List { count, item, .. } => skip_list(body, *count, *item)?,
                        }
                    }
                }
            }
        }
    }
    if !seen_vertex {
        return Err(HarnessError::missing(CONTEXT, "element vertex"));
    }
    let normals = (!normals.is_empty()).then_some(normals);
    let mesh = TriangleMesh { vertices, triangles, normals };
    mesh.validate()?;
    Ok(mesh)
}

fn skip_list(body: &mut dyn Body, count: Scalar, item: Scalar) -> Result<()> {
    let at = body.offset();
    let n = body.value(count)?;
    if n < 0.0 {
        return Err(HarnessError::parse_at_byte(CONTEXT, at, "negative list length"));
    }
    for _ in 0..n as usize {
        body.value(item)?;
    }
    Ok(())
}

/// Parses a PLY file held in memory.
pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let header = parse_header(bytes)?;
    let data = &bytes[header.data_start..];
    let base = header.data_start;
    let shift = |e: HarnessError| match e {
        HarnessError::Parse { context, unit, position, message } => {
            HarnessError::Parse { context, unit, position: position + base, message }
        }
        other => other,
    };
    match header.format {
        PlyFormat::Ascii => read_body(&header, &mut AsciiBody { bytes: data, pos: 0 }).map_err(shift),
        PlyFormat::BinaryLittleEndian => read_body(&header, &mut BinaryBody { bytes: data, pos: 0 }).map_err(shift),
    }
}

pub fn load_model(path: &Path) -> Result<TriangleMesh> {
    parse_ply(&read_file(path)?).map_err(|e| match e {
        HarnessError::Parse { unit, position, message, .. } => {
            HarnessError::Parse { context: path.display().to_string(), unit, position, message }
        }
        other => other,
    })
}

/// Serializes `mesh` with double-precision coordinates.
pub fn write_ply(mesh: &TriangleMesh, format: PlyFormat) -> Vec<u8> {
    use std::fmt::Write;
    let mut h = String::from("ply\n");
    h += match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    };
    let _ = writeln!(h, "element vertex {}", mesh.vertices.len());
    h += "property double x\nproperty double y\nproperty double z\n";
    if mesh.normals.is_some() {
        h += "property double nx\nproperty double ny\nproperty double nz\n";
    }
    let _ = writeln!(h, "element face {}", mesh.triangles.len());
    h += "property list uchar int vertex_indices\nend_header\n";

    let mut out = h.into_bytes();
    let normal = |i: usize| mesh.normals.as_ref().map(|n| n[i]);
    match format {
        PlyFormat::Ascii => {
            let mut s = String::new();
            for (i, v) in mesh.vertices.iter().enumerate() {
                let _ = write!(s, "{} {} {}", v.x, v.y, v.z);
                if let Some(n) = normal(i) {
                    let _ = write!(s, " {} {} {}", n.x, n.y, n.z);
                }
                s.push('\n');
            }
            for t in &mesh.triangles {
                let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                for c in v.iter().chain(normal(i).iter().flat_map(|n| n.iter())) {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            for t in &mesh.triangles {
                out.push(3);
                for &i in t {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn save_model(path: &Path, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    write_file(path, &write_ply(mesh, format))
}

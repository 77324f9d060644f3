//! PLY (ASCII and binary little-endian) and OBJ readers, binary PLY writers.
//!
//! Point clouds are written as `binary_little_endian` with `double x y z`,
//! optional `double nx ny nz`, optional `uchar source` (0 = US, 1 = XRAY,
//! 2 = COARSE) and optional `uchar red green blue`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Point3, PointCloud, TriangleMesh, Vector3};
use crate::{Error, Result};

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn read_le(self, r: &mut impl Read) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        Ok(match self {
            Scalar::I8 => {
                r.read_exact(&mut b[..1])?;
                b[0] as i8 as f64
            }
            Scalar::U8 => {
                r.read_exact(&mut b[..1])?;
                b[0] as f64
            }
            Scalar::I16 => {
                r.read_exact(&mut b[..2])?;
                i16::from_le_bytes([b[0], b[1]]) as f64
            }
            Scalar::U16 => {
                r.read_exact(&mut b[..2])?;
                u16::from_le_bytes([b[0], b[1]]) as f64
            }
            Scalar::I32 => {
                r.read_exact(&mut b[..4])?;
                i32::from_le_bytes(b[..4].try_into().unwrap()) as f64
            }
            Scalar::U32 => {
                r.read_exact(&mut b[..4])?;
                u32::from_le_bytes(b[..4].try_into().unwrap()) as f64
            }
            Scalar::F32 => {
                r.read_exact(&mut b[..4])?;
                f32::from_le_bytes(b[..4].try_into().unwrap()) as f64
            }
            Scalar::F64 => {
                r.read_exact(&mut b)?;
                f64::from_le_bytes(b)
            }
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    /// Scalar properties per row, in declaration order (lists excluded).
    scalars: Vec<Vec<f64>>,
    /// First list property per row, if any.
    lists: Vec<Vec<f64>>,
}

impl Element {
    fn scalar_index(&self, name: &str) -> Option<usize> {
        self.props
            .iter()
            .filter(|p| matches!(p, Property::Scalar(..)))
            .position(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct PlyFile {
    elements: Vec<Element>,
    comments: Vec<String>,
}

fn parse_ply(path: &Path) -> Result<PlyFile> {
    let perr = |m: String| Error::parse(path, m);
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<fs::File>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::parse(path, "unexpected end of header"));
        }
        Ok(line.trim().to_string())
    };
    if next_line(&mut reader)? != "ply" {
        return Err(perr("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        let l = next_line(&mut reader)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", f, _] => return Err(perr(format!("unsupported format {f}"))),
            ["comment", ..] => comments.push(l["comment".len()..].trim().to_string()),
            ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(format!("bad count {count}")))?,
                props: Vec::new(),
                scalars: Vec::new(),
                lists: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element".into()))?;
                let ct = Scalar::parse(ct).ok_or_else(|| perr(format!("bad type {ct}")))?;
                let it = Scalar::parse(it).ok_or_else(|| perr(format!("bad type {it}")))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| perr(format!("bad type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(perr(format!("unrecognized header line `{l}`"))),
        }
    }
    let format = format.ok_or_else(|| perr("missing format line".into()))?;
    match format {
        Format::Ascii => {
            let mut rest = String::new();
            reader.read_to_string(&mut rest)?;
            let mut toks = rest.split_whitespace();
            let mut next = || -> Result<f64> {
                toks.next()
                    .ok_or_else(|| Error::parse(path, "truncated body"))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, e.to_string()))
            };
            for el in &mut elements {
                for _ in 0..el.count {
                    let mut row = Vec::new();
                    let mut list = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(..) => row.push(next()?),
                            Property::List(..) => {
                                let n = next()? as usize;
                                let vals = (0..n).map(|_| next()).collect::<Result<Vec<_>>>()?;
                                if list.is_empty() {
                                    list = vals;
                                }
                            }
                        }
                    }
                    el.scalars.push(row);
                    el.lists.push(list);
                }
            }
        }
        Format::BinaryLe => {
            let io = |e: std::io::Error| Error::parse(path, format!("truncated body: {e}"));
            for el in &mut elements {
                for _ in 0..el.count {
                    let mut row = Vec::new();
                    let mut list = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(_, t) => row.push(t.read_le(&mut reader).map_err(io)?),
                            Property::List(_, ct, it) => {
                                let n = ct.read_le(&mut reader).map_err(io)? as usize;
                                let vals = (0..n)
                                    .map(|_| it.read_le(&mut reader))
                                    .collect::<std::io::Result<Vec<_>>>()
                                    .map_err(io)?;
                                if list.is_empty() {
                                    list = vals;
                                }
                            }
                        }
                    }
                    el.scalars.push(row);
                    el.lists.push(list);
                }
            }
        }
    }
    Ok(PlyFile { elements, comments })
}

/// Point cloud read from PLY together with its optional per-point source tags.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyCloud {
    pub cloud: PointCloud,
    pub sources: Option<Vec<u8>>,
    pub comments: Vec<String>,
}

pub fn read_ply_cloud(path: impl AsRef<Path>) -> Result<PlyCloud> {
    let path = path.as_ref();
    let ply = parse_ply(path)?;
    let v = ply
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, "no vertex element"))?;
    let idx = |n: &str| v.scalar_index(n);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse(path, "vertex element lacks x/y/z")),
    };
    let points = v
        .scalars
        .iter()
        .map(|r| Point3::new(r[ix], r[iy], r[iz]))
        .collect();
    let normals = match (idx("nx"), idx("ny"), idx("nz")) {
        (Some(a), Some(b), Some(c)) => Some(
            v.scalars
                .iter()
                .map(|r| {
                    let n = Vector3::new(r[a], r[b], r[c]);
                    if n.norm() > 0.0 {
                        n.normalize()
                    } else {
                        n
                    }
                })
                .collect(),
        ),
        _ => None,
    };
    let sources = idx("source").map(|s| v.scalars.iter().map(|r| r[s] as u8).collect());
    let cloud = PointCloud::with_frame(points, normals, "anatomical")
        .map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(PlyCloud {
        cloud,
        sources,
        comments: ply.comments,
    })
}

/// Options for [`write_ply_cloud`].
#[derive(Debug, Clone, Default)]
pub struct PlyWriteOptions<'a> {
    pub comments: Vec<String>,
    pub sources: Option<&'a [u8]>,
    /// Bake per-source vertex colours (requires `sources`).
    pub colors: bool,
}

/// Display colour for a source tag.
pub fn source_color(source: u8) -> [u8; 3] {
    match source {
        0 => [255, 140, 0],  // US: orange
        1 => [30, 110, 255], // X-ray: blue
        2 => [200, 200, 200],
        _ => [255, 255, 255],
    }
}

pub fn write_ply_cloud(path: impl AsRef<Path>, cloud: &PointCloud, opts: &PlyWriteOptions) -> Result<()> {
    let mut buf = Vec::new();
    encode_ply_cloud(&mut buf, cloud, opts)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn encode_ply_cloud(out: &mut Vec<u8>, cloud: &PointCloud, opts: &PlyWriteOptions) -> Result<()> {
    if let Some(s) = opts.sources {
        if s.len() != cloud.len() {
            return Err(Error::SizeMismatch(cloud.len(), s.len()));
        }
    }
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in &opts.comments {
        h.push_str(&format!("comment {c}\n"));
    }
    h.push_str(&format!("element vertex {}\n", cloud.len()));
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        h.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if opts.sources.is_some() {
        h.push_str("property uchar source\n");
        if opts.colors {
            h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        }
    }
    h.push_str("end_header\n");
    out.write_all(h.as_bytes())?;
    for (i, p) in cloud.points().iter().enumerate() {
        for c in p.coords.iter() {
            out.write_all(&c.to_le_bytes())?;
        }
        if let Some(n) = cloud.normals() {
            for c in n[i].iter() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        if let Some(s) = opts.sources {
            out.push(s[i]);
            if opts.colors {
                out.extend_from_slice(&source_color(s[i]));
            }
        }
    }
    Ok(())
}

pub fn write_ply_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let mut out = Vec::new();
    let h = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    out.extend_from_slice(h.as_bytes());
    for p in mesh.vertices() {
        for c in p.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn fan(poly: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |k| [poly[0], poly[k], poly[k + 1]])
}

pub fn read_ply_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let ply = parse_ply(path)?;
    let v = ply
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, "no vertex element"))?;
    let (ix, iy, iz) = match (v.scalar_index("x"), v.scalar_index("y"), v.scalar_index("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse(path, "vertex element lacks x/y/z")),
    };
    let vertices = v.scalars.iter().map(|r| Point3::new(r[ix], r[iy], r[iz])).collect();
    let f = ply
        .elements
        .iter()
        .find(|e| e.name == "face")
        .ok_or_else(|| Error::parse(path, "no face element"))?;
    let mut faces = Vec::new();
    for l in &f.lists {
        let poly: Vec<usize> = l.iter().map(|&i| i as usize).collect();
        faces.extend(fan(&poly));
    }
    TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, e.to_string()))
}

/// ASCII OBJ: `v` and `f` records; `f` accepts `i`, `i/t`, `i/t/n`, `i//n`
/// and negative (relative) indices; polygons are fan-triangulated.
pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 1)))?;
                if c.len() != 3 {
                    return Err(Error::parse(path, format!("line {}: short vertex", ln + 1)));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| Error::parse(path, format!("line {}: bad index `{t}`", ln + 1)))?;
                    let idx = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if idx < 0 {
                        return Err(Error::parse(path, format!("line {}: index out of range", ln + 1)));
                    }
                    poly.push(idx as usize);
                }
                faces.extend(fan(&poly));
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, e.to_string()))
}

/// Dispatches on the extension (`.obj` or `.ply`).
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "obj" => read_obj(path),
        Some(e) if e == "ply" => read_ply_mesh(path),
        _ => Err(Error::parse(path, "unsupported mesh extension (expected .obj or .ply)")),
    }
}

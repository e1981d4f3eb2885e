//! Binary little-endian PLY point clouds.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::IoError;
use crate::geometry::PointCloud;

/// Writes `x y z` as float32 and, when present, `red green blue` as uchar.
pub fn write(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    if cloud.is_empty() {
        return Err(IoError::validation("cloud", "refusing to write an empty point cloud"));
    }
    if let Some(colors) = &cloud.colors {
        if colors.len() != cloud.len() {
            return Err(IoError::DimensionMismatch(format!(
                "{} points but {} colors",
                cloud.len(),
                colors.len()
            )));
        }
    }
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let io = |e| IoError::io(path, e);
    out.write_all(header.as_bytes()).map_err(io)?;
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p.iter() {
            out.write_all(&(*c as f32).to_le_bytes()).map_err(io)?;
        }
        if let Some(colors) = &cloud.colors {
            out.write_all(&colors[i]).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn size(self) -> usize {
        match self {
            Scalar::U8 | Scalar::I8 => 1,
            Scalar::U16 | Scalar::I16 => 2,
            Scalar::U32 | Scalar::I32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::U8 => b[0] as f64,
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads the vertex element of a binary little-endian PLY. Other elements
/// after the vertices are ignored.
pub fn read(path: &Path) -> Result<PointCloud, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut input = BufReader::new(file);
    let io = |e| IoError::io(path, e);
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<(), IoError> {
        line.clear();
        if input.read_line(line).map_err(io)? == 0 {
            return Err(IoError::CorruptHeader("PLY header not terminated".into()));
        }
        Ok(())
    };
    read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(IoError::CorruptHeader("missing ply magic".into()));
    }
    let mut count = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        read_line(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(IoError::UnsupportedFormat(format!("PLY format {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| {
                        IoError::CorruptHeader(format!("bad vertex count {n:?}"))
                    })?);
                } else if count.is_none() {
                    return Err(IoError::UnsupportedFormat(
                        "PLY elements before vertex are not supported".into(),
                    ));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(IoError::UnsupportedFormat("list property on vertex".into()));
            }
            ["property", ty, name] if in_vertex => {
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| IoError::CorruptHeader(format!("unknown PLY type {ty}")))?;
                props.push((name.to_string(), scalar));
            }
            ["property", ..] => {}
            _ => return Err(IoError::CorruptHeader(format!("bad PLY header line {:?}", line.trim_end()))),
        }
    }
    let count = count.ok_or_else(|| IoError::CorruptHeader("no vertex element".into()))?;
    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(IoError::CorruptHeader("vertex lacks x/y/z".into())),
    };
    let color_idx = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let offsets: Vec<usize> = props
        .iter()
        .scan(0, |acc, (_, s)| {
            let o = *acc;
            *acc += s.size();
            Some(o)
        })
        .collect();
    let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
    let mut body = vec![0u8; stride * count];
    input
        .read_exact(&mut body)
        .map_err(|_| IoError::DimensionMismatch(format!("PLY body shorter than {count} vertices")))?;
    let get = |rec: &[u8], k: usize| props[k].1.decode(&rec[offsets[k]..]);
    let mut points = Vec::with_capacity(count);
    let mut colors = color_idx.map(|_| Vec::with_capacity(count));
    for rec in body.chunks_exact(stride.max(1)).take(count) {
        points.push(Vector3::new(get(rec, xi), get(rec, yi), get(rec, zi)));
        if let (Some(idx), Some(c)) = (color_idx, colors.as_mut()) {
            c.push(idx.map(|k| get(rec, k).clamp(0.0, 255.0) as u8));
        }
    }
    Ok(PointCloud { points, colors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        write(&path, &PointCloud::new(vec![Vector3::new(1.0, 2.0, 3.0)])).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("element vertex 1\n"));
        assert!(text.contains("format binary_little_endian 1.0"));
        let header_end = text.find("end_header\n").unwrap() + "end_header\n".len();
        assert_eq!(bytes.len() - header_end, 12);
    }

    #[test]
    fn roundtrip_with_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![Vector3::new(0.5, -1.25, 3.0), Vector3::new(0.125, 7.0, -2.5)],
            colors: Some(vec![[1, 2, 3], [250, 128, 0]]),
        };
        write(&path, &cloud).unwrap();
        assert_eq!(read(&path).unwrap(), cloud);
    }

    #[test]
    fn empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write(&dir.path().join("e.ply"), &PointCloud::default()).is_err());
    }

    #[test]
    fn ascii_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(matches!(read(&path), Err(IoError::UnsupportedFormat(_))));
    }
}

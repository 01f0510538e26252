//! Wavefront OBJ and ASCII PLY readers (positions and faces only, meters).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Loads an `.obj` or ASCII `.ply` mesh. Normals in the file are ignored and
/// recomputed from winding. Open meshes load with a warning; refraction
/// rejects them later.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (vertices, faces) = match ext.as_deref() {
        Some("obj") => parse_obj(&text, path)?,
        Some("ply") => parse_ply(&text, path)?,
        _ => {
            return Err(Error::Format(format!(
                "{}: expected .obj or .ply extension",
                path.display()
            )))
        }
    };
    let mesh = TriangleMesh::new(vertices, faces).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    if !mesh.is_closed() {
        log::warn!(
            "{}: mesh is not closed ({} open edges); refraction will reject it",
            path.display(),
            mesh.open_edge_count()
        );
    }
    Ok(mesh)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

type Parsed = (Vec<Point3<f64>>, Vec<[usize; 3]>);

fn parse_obj(text: &str, path: &Path) -> Result<Parsed> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(path, line_no, format!("bad vertex: {e}")))?;
                if c.len() != 3 {
                    return Err(parse_err(path, line_no, "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(path, line_no, format!("bad face index '{tok}'")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(parse_err(path, line_no, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(path, line_no, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                push_polygon(&mut faces, &idx).map_err(|m| parse_err(path, line_no, m))?;
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn push_polygon(faces: &mut Vec<[usize; 3]>, idx: &[usize]) -> std::result::Result<(), String> {
    if idx.len() < 3 {
        return Err(format!("face has {} vertices", idx.len()));
    }
    for (k, a) in idx.iter().enumerate() {
        if idx[k + 1..].contains(a) {
            return Err(format!("degenerate face: vertex {a} repeated"));
        }
    }
    for k in 1..idx.len() - 1 {
        faces.push([idx[0], idx[k], idx[k + 1]]);
    }
    Ok(())
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply(text: &str, path: &Path) -> Result<Parsed> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unterminated header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(parse_err(path, ln + 1, format!("only ASCII PLY supported, got {fmt}")));
                }
            }
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(path, ln + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, ln + 1, "property before element"))?;
                el.props.push(name.to_string());
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let xyz = if el.name == "vertex" {
            let find = |n: &str| {
                el.props
                    .iter()
                    .position(|p| p == n)
                    .ok_or_else(|| parse_err(path, 0, format!("vertex element lacks '{n}'")))
            };
            Some([find("x")?, find("y")?, find("z")?])
        } else {
            None
        };
        for _ in 0..el.count {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, format!("truncated {} data", el.name)))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if let Some(xyz) = xyz {
                let get = |k: usize| -> Result<f64> {
                    toks.get(k)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(path, ln + 1, "bad vertex record"))
                };
                vertices.push(Point3::new(get(xyz[0])?, get(xyz[1])?, get(xyz[2])?));
            } else if el.name == "face" {
                let n: usize = toks
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(path, ln + 1, "bad face record"))?;
                let idx: Vec<usize> = toks
                    .iter()
                    .skip(1)
                    .take(n)
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(path, ln + 1, "bad face index"))?;
                if idx.len() != n {
                    return Err(parse_err(path, ln + 1, "face record shorter than its count"));
                }
                if let Some(bad) = idx.iter().find(|&&i| i >= vertices.len()) {
                    return Err(parse_err(path, ln + 1, format!("face index {bad} out of range")));
                }
                push_polygon(&mut faces, &idx).map_err(|m| parse_err(path, ln + 1, m))?;
            }
        }
    }
    Ok((vertices, faces))
}

/// Serializes positions and faces as OBJ with round-trip float formatting.
pub fn to_obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_obj_string(mesh))?;
    Ok(())
}

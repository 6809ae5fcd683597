//! Mesh loading, procedural scenes and the vertex-ID registry.
//!
//! Every vertex of a [`MeshModel`] is a feature whose descriptor is its index. IDs are
//! assigned in load order, are contiguous from zero, and are never merged, even when two
//! vertices share a position.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Unique vertex identifier, doubling as the feature descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: face references vertex {index} but only {count} vertices exist")]
    FaceIndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("no vertices")]
    NoVertices,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("unsupported mesh: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path
            .extension()?
            .to_str()?
            .to_ascii_lowercase()
            .as_str()
        {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

/// Immutable indexed vertex set plus its model transform.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshModel {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    model_transform: Matrix4<f64>,
}

impl MeshModel {
    /// Builds a mesh from positions. Fails on non-finite coordinates or face indices out of range.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::InvalidScene(format!(
                "vertex {i} has a non-finite coordinate"
            )));
        }
        let n = vertices.len();
        if let Some(bad) = faces.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(MeshError::InvalidScene(format!(
                "face index {bad} out of range for {n} vertices"
            )));
        }
        Ok(Self {
            vertices,
            faces,
            model_transform: Matrix4::identity(),
        })
    }

    pub fn with_model_transform(mut self, m: Matrix4<f64>) -> Self {
        self.model_transform = m;
        self
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn model_transform(&self) -> &Matrix4<f64> {
        &self.model_transform
    }

    pub fn ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vector3<f64>> {
        self.vertices.get(id.index())
    }

    /// Vertex position after the model transform.
    pub fn world_position(&self, id: VertexId) -> Option<Vector3<f64>> {
        self.vertex(id).map(|p| {
            let h = self.model_transform * p.push(1.0);
            h.xyz() / h.w
        })
    }

    /// Axis-aligned bounds of the world positions, `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut it = self.ids().filter_map(|id| self.world_position(id));
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
    }

    /// Writes the mesh as OBJ. Coordinates use the shortest representation that parses
    /// back to the identical `f64`.
    pub fn write_obj<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {} vertices, {} faces", self.len(), self.faces.len())?;
        for v in &self.vertices {
            writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }

    pub fn save_obj(&self, path: &Path) -> Result<(), MeshError> {
        let io_err = |source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut w = io::BufWriter::new(file);
        self.write_obj(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }
}

/// Reads an OBJ or ASCII PLY file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<MeshModel, MeshError> {
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::Ply => parse_ply(&text),
    }
}

fn parse_f64(tok: Option<&str>, line: usize, what: &str) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    let value: f64 = tok.parse().map_err(|_| MeshError::Parse {
        line,
        msg: format!("bad {what} {tok:?}"),
    })?;
    if !value.is_finite() {
        return Err(MeshError::Parse {
            line,
            msg: format!("non-finite {what}"),
        });
    }
    Ok(value)
}

/// Parses OBJ text. Only `v` and `f` records matter; every other record is skipped.
/// Polygon faces are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<MeshModel, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line, "x")?;
                let y = parse_f64(toks.next(), line, "y")?;
                let z = parse_f64(toks.next(), line, "z")?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw_index: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        msg: format!("bad face index {tok:?}"),
                    })?;
                    // OBJ is 1-based; negative indices count back from the latest vertex.
                    let resolved = if raw_index > 0 {
                        raw_index - 1
                    } else if raw_index < 0 {
                        vertices.len() as i64 + raw_index
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(MeshError::FaceIndexOutOfRange {
                            line,
                            index: raw_index,
                            count: vertices.len(),
                        });
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        msg: "face needs at least 3 vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(MeshError::NoVertices);
    }
    MeshModel::new(vertices, faces)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    header_line: usize,
}

/// Parses ASCII PLY text. Vertex elements must carry `x`, `y`, `z` properties; faces are
/// read from a `vertex_indices`/`vertex_index` list and validated.
pub fn parse_ply(text: &str) -> Result<MeshModel, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        Some((line, _)) => {
            return Err(MeshError::Parse {
                line,
                msg: "missing 'ply' magic".into(),
            })
        }
        None => return Err(MeshError::NoVertices),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let (line, raw) = lines.next().ok_or(MeshError::Parse {
            line: 0,
            msg: "unterminated header".into(),
        })?;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("format") => {
                let fmt = toks.next().unwrap_or("");
                if fmt != "ascii" {
                    return Err(MeshError::Unsupported(format!("PLY format {fmt:?}")));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = toks.next().unwrap_or("").to_string();
                let count = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| MeshError::Parse {
                        line,
                        msg: "bad element count".into(),
                    })?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                    header_line: line,
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| MeshError::Parse {
                    line,
                    msg: "property before element".into(),
                })?;
                let name = toks.last().unwrap_or("").to_string();
                el.properties.push(name);
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    if !saw_format {
        return Err(MeshError::Parse {
            line: 1,
            msg: "missing format line".into(),
        });
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |axis: &str| {
                    el.properties
                        .iter()
                        .position(|p| p == axis)
                        .ok_or_else(|| MeshError::Parse {
                            line: el.header_line,
                            msg: format!("vertex element lacks property {axis}"),
                        })
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                for _ in 0..el.count {
                    let (line, raw) = lines.next().ok_or(MeshError::Parse {
                        line: 0,
                        msg: "truncated vertex list".into(),
                    })?;
                    let toks: Vec<&str> = raw.split_whitespace().collect();
                    let x = parse_f64(toks.get(ix).copied(), line, "x")?;
                    let y = parse_f64(toks.get(iy).copied(), line, "y")?;
                    let z = parse_f64(toks.get(iz).copied(), line, "z")?;
                    vertices.push(Vector3::new(x, y, z));
                }
            }
            "face" => {
                for _ in 0..el.count {
                    let (line, raw) = lines.next().ok_or(MeshError::Parse {
                        line: 0,
                        msg: "truncated face list".into(),
                    })?;
                    let toks: Vec<i64> = raw
                        .split_whitespace()
                        .map(|t| t.parse::<i64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| MeshError::Parse {
                            line,
                            msg: "bad face record".into(),
                        })?;
                    let n = *toks.first().ok_or(MeshError::Parse {
                        line,
                        msg: "empty face record".into(),
                    })? as usize;
                    if n < 3 || toks.len() < n + 1 {
                        return Err(MeshError::Parse {
                            line,
                            msg: "face needs at least 3 indices".into(),
                        });
                    }
                    let idx = &toks[1..=n];
                    for &i in idx {
                        if i < 0 || i as usize >= vertices.len() {
                            return Err(MeshError::FaceIndexOutOfRange {
                                line,
                                index: i,
                                count: vertices.len(),
                            });
                        }
                    }
                    for k in 1..n - 1 {
                        faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    lines.next();
                }
            }
        }
    }
    if vertices.is_empty() {
        return Err(MeshError::NoVertices);
    }
    MeshModel::new(vertices, faces)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneKind {
    ObjFile(PathBuf),
    PlyFile(PathBuf),
    /// `n × n` vertices in the z = 0 plane, `spacing` apart, starting at the origin.
    Grid { n: usize, spacing: f64 },
    /// Axis-aligned room centered at the origin. Each of the six walls is its own
    /// `(subdivisions + 1)²` grid, so edge vertices appear once per adjacent wall.
    BoxRoom {
        width: f64,
        height: f64,
        depth: f64,
        subdivisions: usize,
    },
    /// `count` points uniform in the cube `[-extent/2, extent/2]³`.
    SeededPointCloud { count: usize, extent: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind) -> Self {
        Self { kind, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn positive(name: &str, v: f64) -> Result<(), MeshError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(MeshError::InvalidScene(format!("{name} must be positive")))
    }
}

/// Number of vertices [`generate_scene`] produces for a box room.
pub fn box_room_vertex_count(subdivisions: usize) -> usize {
    6 * (subdivisions + 1) * (subdivisions + 1)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<MeshModel, MeshError> {
    match &spec.kind {
        SceneKind::ObjFile(p) => load_mesh(p, MeshFormat::Obj),
        SceneKind::PlyFile(p) => load_mesh(p, MeshFormat::Ply),
        SceneKind::Grid { n, spacing } => {
            if *n == 0 {
                return Err(MeshError::InvalidScene("grid size must be ≥ 1".into()));
            }
            positive("grid spacing", *spacing)?;
            let mut vertices = Vec::with_capacity(n * n);
            for j in 0..*n {
                for i in 0..*n {
                    vertices.push(Vector3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
                }
            }
            let faces = grid_faces(*n, 0);
            MeshModel::new(vertices, faces)
        }
        SceneKind::BoxRoom {
            width,
            height,
            depth,
            subdivisions,
        } => {
            positive("room width", *width)?;
            positive("room height", *height)?;
            positive("room depth", *depth)?;
            if *subdivisions == 0 {
                return Err(MeshError::InvalidScene("subdivisions must be ≥ 1".into()));
            }
            Ok(box_room(*width, *height, *depth, *subdivisions))
        }
        SceneKind::SeededPointCloud { count, extent } => {
            if *count == 0 {
                return Err(MeshError::InvalidScene("point count must be ≥ 1".into()));
            }
            positive("extent", *extent)?;
            let half = 0.5 * extent;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let vertices = (0..*count)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-half..half),
                        rng.gen_range(-half..half),
                        rng.gen_range(-half..half),
                    )
                })
                .collect();
            MeshModel::new(vertices, Vec::new())
        }
    }
}

fn grid_faces(n: usize, offset: usize) -> Vec<[u32; 3]> {
    let mut faces = Vec::with_capacity(2 * n.saturating_sub(1).pow(2));
    for j in 0..n.saturating_sub(1) {
        for i in 0..n - 1 {
            let a = (offset + j * n + i) as u32;
            let b = a + 1;
            let c = a + n as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    faces
}

fn box_room(w: f64, h: f64, d: f64, k: usize) -> MeshModel {
    let half = Vector3::new(0.5 * w, 0.5 * h, 0.5 * d);
    let n = k + 1;
    let mut vertices = Vec::with_capacity(box_room_vertex_count(k));
    let mut faces = Vec::new();
    // (fixed axis, sign, first in-plane axis, second in-plane axis)
    let walls = [
        (0usize, -1.0, 2usize, 1usize),
        (0, 1.0, 1, 2),
        (1, -1.0, 0, 2),
        (1, 1.0, 2, 0),
        (2, -1.0, 1, 0),
        (2, 1.0, 0, 1),
    ];
    for (axis, sign, a, b) in walls {
        let offset = vertices.len();
        for j in 0..n {
            for i in 0..n {
                let mut p = Vector3::zeros();
                p[axis] = sign * half[axis];
                p[a] = -half[a] + 2.0 * half[a] * i as f64 / k as f64;
                p[b] = -half[b] + 2.0 * half[b] * j as f64 / k as f64;
                vertices.push(p);
            }
        }
        faces.extend(grid_faces(n, offset));
    }
    MeshModel::new(vertices, faces).expect("box room vertices are finite")
}

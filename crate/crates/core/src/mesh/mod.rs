//! Registered triangle meshes sharing one topology, plus per-vertex scalar
//! fields and the one-ring edge-length query used by influence maps.

mod obj;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

pub use obj::{load_mesh, parse_obj, save_mesh, write_obj};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Uv = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    name: String,
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    uvs: Vec<Uv>,
}

impl Mesh {
    /// Builds a mesh and checks index bounds, UV presence and degenerate faces.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        uvs: Vec<Uv>,
    ) -> Result<Self> {
        let mesh = Mesh {
            name: name.into(),
            vertices,
            faces,
            uvs,
        };
        mesh.check()?;
        Ok(mesh)
    }

    fn check(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uvs.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} UVs for {} vertices",
                self.uvs.len(),
                n
            )));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex out of range ({n} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn uvs(&self) -> &[Uv] {
        &self.uvs
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Same topology and UVs, new positions.
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::dim("mesh positions", self.vertices.len(), vertices.len()));
        }
        Ok(Mesh {
            name: self.name.clone(),
            vertices,
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        })
    }

    /// Hash of faces and UVs. Meshes with equal ids can share rasterization plans.
    pub fn topology_id(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.vertices.len().hash(&mut h);
        self.faces.hash(&mut h);
        for uv in &self.uvs {
            uv[0].to_bits().hash(&mut h);
            uv[1].to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    pub fn ensure_same_topology(&self, other: &Mesh, what: &str) -> Result<()> {
        if self.vertices.len() != other.vertices.len() {
            return Err(Error::dim(what, self.vertices.len(), other.vertices.len()));
        }
        if self.faces != other.faces {
            return Err(Error::Precondition(format!("{what}: face lists differ")));
        }
        Ok(())
    }

    /// Unique undirected edges, each as `(lo, hi)`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> Mesh {
        Mesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        }
    }
}

/// One value per vertex of a specific topology.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScalarField {
    pub values: Vec<f64>,
    pub topology_id: u64,
}

impl VertexScalarField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::dim("vertex field", mesh.vertex_count(), values.len()));
        }
        Ok(VertexScalarField {
            values,
            topology_id: mesh.topology_id(),
        })
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        VertexScalarField {
            values: vec![value; mesh.vertex_count()],
            topology_id: mesh.topology_id(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean length of the undirected edges incident to each vertex.
pub fn one_ring_avg_edge_length(mesh: &Mesh) -> Result<VertexScalarField> {
    let n = mesh.vertex_count();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    let v = mesh.vertices();
    for (a, b) in mesh.edges() {
        let len = distance(v[a as usize], v[b as usize]);
        sum[a as usize] += len;
        sum[b as usize] += len;
        count[a as usize] += 1;
        count[b as usize] += 1;
    }
    if let Some(vertex) = count.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateTopology { vertex });
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    VertexScalarField::new(mesh, values)
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Regular `nx` x `ny` vertex grid over the UV rectangle `[u0,u1] x [v0,v1]`,
/// two triangles per cell, with positions from `height(u, v)`.
pub fn grid_mesh(
    name: &str,
    nx: usize,
    ny: usize,
    uv_min: Uv,
    uv_max: Uv,
    position: impl Fn(f64, f64) -> Vec3,
) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::Precondition("grid needs at least 2x2 vertices".into()));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    let mut uvs = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let u = uv_min[0] + (uv_max[0] - uv_min[0]) * i as f64 / (nx - 1) as f64;
            let v = uv_min[1] + (uv_max[1] - uv_min[1]) * j as f64 / (ny - 1) as f64;
            uvs.push([u, v]);
            vertices.push(position(u, v));
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = (j * nx + i) as u32;
            let b = a + 1;
            let c = a + nx as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    Mesh::new(name, vertices, faces, uvs)
}

//! Mesh families, Delaunay triangulation and mesh augmentations.
//!
//! Five 2D domains in normalized [0,1] coordinates: a square grid, a disk, a
//! disk with a circular hole, an L-shaped cutout and a U-shaped slot. Meshes
//! carry per-node boundary flags covering both the outer boundary and any
//! cutout boundaries.

mod delaunay;
mod shapes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delaunay::triangulate;
pub(crate) use delaunay::signed_area;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid shape spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("triangulation needs at least three non-collinear points")]
    CollinearInput,
    #[error("shape {0:?} does not support augmentation")]
    UnsupportedShape(ShapeTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeTag {
    Square,
    Disk,
    DiskHole,
    LMesh,
    UMesh,
}

impl ShapeTag {
    pub const ALL: [ShapeTag; 5] = [
        ShapeTag::Square,
        ShapeTag::Disk,
        ShapeTag::DiskHole,
        ShapeTag::LMesh,
        ShapeTag::UMesh,
    ];

    /// The four families used for training; the U-mesh is held out.
    pub const TRAIN: [ShapeTag; 4] = [
        ShapeTag::Square,
        ShapeTag::Disk,
        ShapeTag::DiskHole,
        ShapeTag::LMesh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ShapeTag::Square => "square",
            ShapeTag::Disk => "disk",
            ShapeTag::DiskHole => "disk_hole",
            ShapeTag::LMesh => "l_mesh",
            ShapeTag::UMesh => "u_mesh",
        }
    }
}

impl std::str::FromStr for ShapeTag {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, MeshError> {
        match s {
            "square" => Ok(ShapeTag::Square),
            "disk" => Ok(ShapeTag::Disk),
            "disk_hole" => Ok(ShapeTag::DiskHole),
            "l_mesh" => Ok(ShapeTag::LMesh),
            "u_mesh" => Ok(ShapeTag::UMesh),
            other => Err(MeshError::InvalidSpec(format!("unknown shape '{other}'"))),
        }
    }
}

/// Generation parameters for one mesh instance. Also serves as the record of
/// applied augmentation values on the generated [`Mesh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: ShapeTag,
    pub node_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hole_center: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hole_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cut_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cut_height: Option<f64>,
}

impl ShapeSpec {
    /// The default (non-augmented) configuration of each family. Node counts
    /// land on 256 (square, exact), ~252 (disk), ~82 (disk with hole), ~80
    /// (L) and ~68 (U).
    pub fn default_for(shape: ShapeTag) -> Self {
        match shape {
            ShapeTag::Square => ShapeSpec {
                shape,
                node_budget: 256,
                hole_center: None,
                hole_radius: None,
                cut_width: None,
                cut_height: None,
            },
            ShapeTag::Disk => ShapeSpec {
                shape,
                node_budget: 252,
                hole_center: None,
                hole_radius: None,
                cut_width: None,
                cut_height: None,
            },
            ShapeTag::DiskHole => ShapeSpec {
                shape,
                node_budget: 82,
                hole_center: Some(Point2::new(0.5, 0.5)),
                hole_radius: Some(0.12),
                cut_width: None,
                cut_height: None,
            },
            ShapeTag::LMesh => ShapeSpec {
                shape,
                node_budget: 80,
                hole_center: None,
                hole_radius: None,
                cut_width: Some(0.5),
                cut_height: Some(0.5),
            },
            ShapeTag::UMesh => ShapeSpec {
                shape,
                node_budget: 68,
                hole_center: None,
                hole_radius: None,
                cut_width: None,
                cut_height: None,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point2>,
    pub triangles: Vec<[usize; 3]>,
    /// Dirichlet flag per node; true on the outer boundary and on every
    /// cutout boundary.
    pub boundary: Vec<bool>,
    pub shape: ShapeTag,
    /// The spec this mesh was generated from, including augmentation values.
    pub spec: ShapeSpec,
}

/// One undirected triangulation edge with relative offsets from the lower to
/// the higher node index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub dx: f64,
    pub dy: f64,
    pub dist: f64,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }
}

/// Generate one mesh: lay out candidate points for the family, Delaunay
/// triangulate, carve cutouts and flag boundary nodes.
pub fn generate_mesh(spec: &ShapeSpec) -> Result<Mesh, MeshError> {
    validate_budget(spec)?;
    let geometry = shapes::build_geometry(spec)?;
    let triangles = triangulate(&geometry.points, &geometry.inside)?;
    let boundary: Vec<bool> = geometry
        .points
        .iter()
        .map(|p| (geometry.is_boundary)(p.x, p.y))
        .collect();
    let mesh = Mesh {
        nodes: geometry.points,
        triangles,
        boundary,
        shape: spec.shape,
        spec: spec.clone(),
    };
    validate_mesh(&mesh, geometry.analytic_area)?;
    Ok(mesh)
}

fn validate_budget(spec: &ShapeSpec) -> Result<(), MeshError> {
    let min = match spec.shape {
        ShapeTag::Square => 9,
        ShapeTag::Disk => 12,
        ShapeTag::DiskHole => 30,
        ShapeTag::LMesh => 20,
        ShapeTag::UMesh => 30,
    };
    if spec.node_budget < min || spec.node_budget > 100_000 {
        return Err(MeshError::InvalidSpec(format!(
            "node_budget {} outside [{min}, 100000] for {:?}",
            spec.node_budget, spec.shape
        )));
    }
    Ok(())
}

fn validate_mesh(mesh: &Mesh, analytic_area: f64) -> Result<(), MeshError> {
    let n = mesh.n_nodes();
    let mut area_sum = 0.0;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || t.iter().any(|&v| v >= n) {
            return Err(MeshError::DegenerateGeometry(format!(
                "triangle {ti} has invalid vertices {t:?}"
            )));
        }
        let area = mesh.triangle_area(ti);
        if area <= 1e-12 {
            return Err(MeshError::DegenerateGeometry(format!(
                "triangle {ti} is not counter-clockwise or has zero area"
            )));
        }
        area_sum += area;
    }
    if (area_sum - analytic_area).abs() > 0.02 * analytic_area {
        return Err(MeshError::DegenerateGeometry(format!(
            "triangulated area {area_sum:.4} deviates from analytic {analytic_area:.4}"
        )));
    }

    // Connectivity over the undirected edge set.
    let mut adj = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                visited += 1;
                stack.push(w);
            }
        }
    }
    if visited != n {
        return Err(MeshError::DegenerateGeometry(format!(
            "mesh is disconnected ({visited} of {n} nodes reachable)"
        )));
    }
    if mesh.boundary.iter().all(|&b| b) {
        return Err(MeshError::DegenerateGeometry(
            "mesh has no interior nodes".into(),
        ));
    }
    Ok(())
}

/// Sample augmentation parameters uniformly within the documented ranges:
/// square node count 64..=441, disk 63..=411, hole center in [0.35,0.65]^2
/// with radius in [0.05,0.25], L-cutout width/height in [0.2,0.8]. The U-mesh
/// is never augmented.
pub fn sample_augmented_spec<R: rand::Rng>(
    shape: ShapeTag,
    rng: &mut R,
) -> Result<ShapeSpec, MeshError> {
    let mut spec = ShapeSpec::default_for(shape);
    match shape {
        ShapeTag::Square => {
            spec.node_budget = rng.random_range(64..=441);
        }
        ShapeTag::Disk => {
            spec.node_budget = rng.random_range(63..=411);
        }
        ShapeTag::DiskHole => {
            spec.hole_center = Some(Point2::new(
                rng.random_range(0.35..=0.65),
                rng.random_range(0.35..=0.65),
            ));
            spec.hole_radius = Some(rng.random_range(0.05..=0.25));
        }
        ShapeTag::LMesh => {
            spec.cut_width = Some(rng.random_range(0.2..=0.8));
            spec.cut_height = Some(rng.random_range(0.2..=0.8));
        }
        ShapeTag::UMesh => return Err(MeshError::UnsupportedShape(shape)),
    }
    Ok(spec)
}

/// Undirected triangulation edges with relative offsets (dx, dy, distance)
/// pointing from the lower to the higher node index. Exactly the edges of the
/// triangulation; no extra radius-based connectivity.
pub fn edge_list(mesh: &Mesh) -> Vec<Edge> {
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(mesh.triangles.len() * 3);
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            pairs.push((a.min(b), a.max(b)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
        .into_iter()
        .map(|(a, b)| {
            let dx = mesh.nodes[b].x - mesh.nodes[a].x;
            let dy = mesh.nodes[b].y - mesh.nodes[a].y;
            Edge {
                a,
                b,
                dx,
                dy,
                dist: (dx * dx + dy * dy).sqrt(),
            }
        })
        .collect()
}

/// Both orientations of every undirected edge, with offsets negated for the
/// reverse direction. Sorted by (source, destination).
pub fn directed_edges(edges: &[Edge]) -> (Vec<[usize; 2]>, Vec<[f64; 3]>) {
    let mut rows: Vec<([usize; 2], [f64; 3])> = Vec::with_capacity(edges.len() * 2);
    for e in edges {
        rows.push(([e.a, e.b], [e.dx, e.dy, e.dist]));
        rows.push(([e.b, e.a], [-e.dx, -e.dy, e.dist]));
    }
    rows.sort_by_key(|(idx, _)| *idx);
    rows.into_iter().unzip()
}

//! Graph-encoded simulation samples: source sampling, feature extraction,
//! set generation (set1/set2/set3 per mesh family), split manifests and
//! normalization constants.

mod generate;
mod splits;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{self, FemError, VectorField};
use crate::mesh::{directed_edges, edge_list, Mesh, MeshError, Point2, ShapeSpec, ShapeTag};

pub use generate::{generate_sets, set_file_name, DatasetMeta, GenerateConfig, GenerateSummary, SetKind};
pub use splits::{
    compute_normalization, make_splits, read_manifest, read_split, FileLine, SplitManifest,
    SPLIT_NAMES,
};

/// Radius of a circular source blob; every node within this distance of the
/// sampled center receives the unit density.
pub const SOURCE_RADIUS: f64 = 0.08;
/// Unit charge/current density before normalization.
pub const SOURCE_DENSITY: f64 = 1.0;
/// Nodes within this distance of a sampled vertical line are fixed in the
/// elasticity problem.
pub const FIXED_LINE_HALF_WIDTH: f64 = 0.03;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("mesh has no interior nodes to place sources on")]
    NoInteriorNodes,
    #[error("no nodes captured by any sampled fixed line")]
    EmptyFixedSet,
    #[error("missing dataset file: {0}")]
    MissingSet(String),
    #[error("manifest has no split named '{0}'")]
    MissingSplit(String),
    #[error("sample generation failed after {attempts} attempts: {last}")]
    GenerationFailed { attempts: usize, last: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemTag {
    Es,
    Ms,
    El,
}

impl ProblemTag {
    pub const ALL: [ProblemTag; 3] = [ProblemTag::Es, ProblemTag::Ms, ProblemTag::El];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemTag::Es => "es",
            ProblemTag::Ms => "ms",
            ProblemTag::El => "el",
        }
    }

    /// Input feature channels: border offsets + source density + boundary
    /// flag for the Poisson problems; border offsets + fixed-line offsets +
    /// fixed flag for elasticity.
    pub fn in_dim(&self) -> usize {
        match self {
            ProblemTag::Es | ProblemTag::Ms => 4,
            ProblemTag::El => 5,
        }
    }

    /// Target channels: potential + field components, or the displacement
    /// components for elasticity.
    pub fn out_dim(&self) -> usize {
        match self {
            ProblemTag::Es | ProblemTag::Ms => 3,
            ProblemTag::El => 2,
        }
    }
}

impl std::str::FromStr for ProblemTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "es" => Ok(ProblemTag::Es),
            "ms" => Ok(ProblemTag::Ms),
            "el" => Ok(ProblemTag::El),
            other => Err(format!("unknown problem '{other}' (expected es|ms|el)")),
        }
    }
}

/// The inhomogeneity of one simulation instance.
#[derive(Debug, Clone)]
pub enum SourceField {
    /// Nodal charge/current density (ES and MS).
    Density(Vec<f64>),
    /// Dirichlet-fixed nodes (EL).
    FixedNodes(Vec<bool>),
}

/// One simulation instance with inlined geometry, graph encoding and FEM
/// targets. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub problem: ProblemTag,
    pub shape: ShapeTag,
    pub aug: bool,
    pub n_sources: u32,
    pub seed: u64,
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub boundary: Vec<u8>,
    pub feat: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    pub edge_attr: Vec<[f64; 3]>,
    pub target: Vec<Vec<f64>>,
}

impl SampleRecord {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Rebuild a mesh view of the inlined geometry (the generation spec is
    /// not stored; solvers only need nodes, triangles and boundary flags).
    pub fn to_mesh(&self) -> Mesh {
        Mesh {
            nodes: self.nodes.iter().map(|p| Point2::new(p[0], p[1])).collect(),
            triangles: self.tris.clone(),
            boundary: self.boundary.iter().map(|&b| b != 0).collect(),
            shape: self.shape,
            spec: ShapeSpec::default_for(self.shape),
        }
    }

    /// The raw source the targets were solved from, recovered from the
    /// feature columns.
    pub fn source_field(&self) -> SourceField {
        match self.problem {
            ProblemTag::Es | ProblemTag::Ms => {
                SourceField::Density(self.feat.iter().map(|f| f[2]).collect())
            }
            ProblemTag::El => {
                SourceField::FixedNodes(self.feat.iter().map(|f| f[4] != 0.0).collect())
            }
        }
    }
}

/// Draw k ~ Uniform{lo..=hi} circular sources. Each center is a uniformly
/// chosen interior node; all nodes within [`SOURCE_RADIUS`] receive the same
/// positive density (overlaps take the max, not the sum). Returns the nodal
/// field and k.
pub fn sample_sources<R: rand::Rng>(
    mesh: &Mesh,
    count_range: (u32, u32),
    rng: &mut R,
) -> Result<(Vec<f64>, u32), DatasetError> {
    assert!(count_range.0 >= 1 && count_range.0 <= count_range.1);
    let interior = mesh.interior_nodes();
    if interior.is_empty() {
        return Err(DatasetError::NoInteriorNodes);
    }
    let k = rng.random_range(count_range.0..=count_range.1);
    let mut field = vec![0.0; mesh.n_nodes()];
    for _ in 0..k {
        let center = mesh.nodes[interior[rng.random_range(0..interior.len())]];
        for (i, p) in mesh.nodes.iter().enumerate() {
            if p.dist(&center) <= SOURCE_RADIUS {
                field[i] = SOURCE_DENSITY;
            }
        }
    }
    Ok((field, k))
}

/// Draw k ~ Uniform{lo..=hi} vertical fixed lines for the elasticity
/// problem; nodes within [`FIXED_LINE_HALF_WIDTH`] of a sampled x-coordinate
/// are Dirichlet-fixed.
pub fn sample_fixed_lines<R: rand::Rng>(
    mesh: &Mesh,
    count_range: (u32, u32),
    rng: &mut R,
) -> Result<(Vec<bool>, u32), DatasetError> {
    assert!(count_range.0 >= 1 && count_range.0 <= count_range.1);
    let k = rng.random_range(count_range.0..=count_range.1);
    let mut fixed = vec![false; mesh.n_nodes()];
    for _ in 0..k {
        let x_line: f64 = rng.random_range(0.0..=1.0);
        for (i, p) in mesh.nodes.iter().enumerate() {
            if (p.x - x_line).abs() <= FIXED_LINE_HALF_WIDTH {
                fixed[i] = true;
            }
        }
    }
    if !fixed.iter().any(|&f| f) {
        return Err(DatasetError::EmptyFixedSet);
    }
    Ok((fixed, k))
}

struct Provenance {
    aug: bool,
    n_sources: u32,
    seed: u64,
}

/// Assemble the graph sample for a solved instance: node features per the
/// problem's input table, directed edge expansion with relative offsets, and
/// the FEM targets.
pub fn build_sample(
    mesh: &Mesh,
    problem: ProblemTag,
    source: &SourceField,
) -> Result<SampleRecord, DatasetError> {
    build_sample_impl(
        mesh,
        problem,
        source,
        None,
        Provenance {
            aug: false,
            n_sources: 0,
            seed: 0,
        },
    )
}

fn build_sample_impl(
    mesh: &Mesh,
    problem: ProblemTag,
    source: &SourceField,
    poisson_op: Option<&fem::PoissonOperator>,
    prov: Provenance,
) -> Result<SampleRecord, DatasetError> {
    let n = mesh.n_nodes();
    let border_offsets = offsets_to_nearest(mesh, &mesh.boundary);

    let (feat, target): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match (problem, source) {
        (ProblemTag::Es | ProblemTag::Ms, SourceField::Density(q)) => {
            assert_eq!(q.len(), n);
            let owned;
            let op = match poisson_op {
                Some(op) => op,
                None => {
                    owned = fem::PoissonOperator::new(mesh)?;
                    &owned
                }
            };
            let (pot, field) = if problem == ProblemTag::Es {
                fem::solve_electrostatics_with(op, mesh, q)?
            } else {
                fem::solve_magnetostatics_with(op, mesh, q)?
            };
            let feat = (0..n)
                .map(|i| {
                    vec![
                        border_offsets[i].0,
                        border_offsets[i].1,
                        q[i],
                        if mesh.boundary[i] { 1.0 } else { 0.0 },
                    ]
                })
                .collect();
            let target = (0..n)
                .map(|i| vec![pot[i], field.vx[i], field.vy[i]])
                .collect();
            (feat, target)
        }
        (ProblemTag::El, SourceField::FixedNodes(fixed)) => {
            assert_eq!(fixed.len(), n);
            let fixed_ids: Vec<usize> = (0..n).filter(|&i| fixed[i]).collect();
            let body = VectorField {
                vx: vec![fem::ELASTICITY_BODY_FORCE.0; n],
                vy: vec![fem::ELASTICITY_BODY_FORCE.1; n],
            };
            let disp = fem::solve_elasticity(mesh, &body, &fixed_ids)?;
            let fixed_offsets = offsets_to_nearest(mesh, fixed);
            let feat = (0..n)
                .map(|i| {
                    vec![
                        border_offsets[i].0,
                        border_offsets[i].1,
                        fixed_offsets[i].0,
                        fixed_offsets[i].1,
                        if fixed[i] { 1.0 } else { 0.0 },
                    ]
                })
                .collect();
            let target = (0..n).map(|i| vec![disp.vx[i], disp.vy[i]]).collect();
            (feat, target)
        }
        _ => panic!("source field kind does not match problem"),
    };

    let undirected = edge_list(mesh);
    let (edges, edge_attr) = directed_edges(&undirected);

    Ok(SampleRecord {
        problem,
        shape: mesh.shape,
        aug: prov.aug,
        n_sources: prov.n_sources,
        seed: prov.seed,
        nodes: mesh.nodes.iter().map(|p| [p.x, p.y]).collect(),
        tris: mesh.triangles.clone(),
        boundary: mesh.boundary.iter().map(|&b| u8::from(b)).collect(),
        feat,
        edges,
        edge_attr,
        target,
    })
}

/// For every node, the offset vector (dx, dy) to its nearest marked node;
/// zero for marked nodes themselves.
fn offsets_to_nearest(mesh: &Mesh, marked: &[bool]) -> Vec<(f64, f64)> {
    let marked_pts: Vec<Point2> = (0..mesh.n_nodes())
        .filter(|&i| marked[i])
        .map(|i| mesh.nodes[i])
        .collect();
    mesh.nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if marked[i] || marked_pts.is_empty() {
                (0.0, 0.0)
            } else {
                let mut best = (f64::MAX, 0.0, 0.0);
                for m in &marked_pts {
                    let d = p.dist(m);
                    if d < best.0 {
                        best = (d, m.x - p.x, m.y - p.y);
                    }
                }
                (best.1, best.2)
            }
        })
        .collect()
}

/// Per-channel maximum absolute values over a record set; identically-zero
/// channels get the constant 1 so division is always safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub feat: Vec<f64>,
    pub target: Vec<f64>,
}

impl NormConstants {
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        NormConstants {
            feat: vec![1.0; in_dim],
            target: vec![1.0; out_dim],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_mesh;
    use crate::rng;

    fn square_mesh() -> Mesh {
        generate_mesh(&ShapeSpec::default_for(ShapeTag::Square)).unwrap()
    }

    #[test]
    fn source_counts_follow_the_requested_range() {
        let mesh = square_mesh();
        for seed in 0..30 {
            let mut r = rng::rng_for(seed, &[]);
            let (field, k) = sample_sources(&mesh, (1, 3), &mut r).unwrap();
            assert!((1..=3).contains(&k));
            assert!(field.iter().any(|&v| v > 0.0));
            let mut r = rng::rng_for(seed, &[]);
            let (_, k) = sample_sources(&mesh, (4, 5), &mut r).unwrap();
            assert!((4..=5).contains(&k));
        }
    }

    #[test]
    fn same_seed_same_sources() {
        let mesh = square_mesh();
        let mut r1 = rng::rng_for(42, &[]);
        let mut r2 = rng::rng_for(42, &[]);
        let (f1, _) = sample_sources(&mesh, (1, 3), &mut r1).unwrap();
        let (f2, _) = sample_sources(&mesh, (1, 3), &mut r2).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn boundary_nodes_have_zero_border_offset() {
        let mesh = square_mesh();
        let mut r = rng::rng_for(7, &[]);
        let (q, _) = sample_sources(&mesh, (1, 3), &mut r).unwrap();
        let rec = build_sample(&mesh, ProblemTag::Es, &SourceField::Density(q)).unwrap();
        for i in 0..mesh.n_nodes() {
            if rec.boundary[i] == 1 {
                assert_eq!(rec.feat[i][0], 0.0);
                assert_eq!(rec.feat[i][1], 0.0);
                assert_eq!(rec.feat[i][3], 1.0);
            }
        }
    }

    #[test]
    fn zero_source_means_zero_targets() {
        let mesh = square_mesh();
        let q = vec![0.0; mesh.n_nodes()];
        let rec = build_sample(&mesh, ProblemTag::Es, &SourceField::Density(q)).unwrap();
        assert!(rec.target.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn es_and_ms_samples_share_features_and_targets() {
        let mesh = square_mesh();
        let mut r = rng::rng_for(3, &[]);
        let (q, _) = sample_sources(&mesh, (1, 3), &mut r).unwrap();
        let es = build_sample(&mesh, ProblemTag::Es, &SourceField::Density(q.clone())).unwrap();
        let ms = build_sample(&mesh, ProblemTag::Ms, &SourceField::Density(q)).unwrap();
        assert_eq!(es.feat, ms.feat);
        // Unit material constants make the potentials identical; the fields
        // are rotations of each other, so compare magnitudes.
        for (te, tm) in es.target.iter().zip(&ms.target) {
            assert_eq!(te[0], tm[0]);
            let me = te[1] * te[1] + te[2] * te[2];
            let mm = tm[1] * tm[1] + tm[2] * tm[2];
            assert!((me - mm).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_lines_nonempty_or_error() {
        let mesh = square_mesh();
        let mut r = rng::rng_for(11, &[]);
        let (fixed, k) = sample_fixed_lines(&mesh, (1, 3), &mut r).unwrap();
        assert!((1..=3).contains(&k));
        assert!(fixed.iter().any(|&f| f));
    }
}

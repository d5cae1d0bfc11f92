//! Wall-clock comparison of a full FEM solve against GNN inference on square
//! meshes of increasing resolution.

use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tape;
use crate::dataset::{build_sample, ProblemTag, SourceField, SOURCE_RADIUS};
use crate::fem;
use crate::gnn::{forward, register_params_frozen, scaled_laplacian, GraphBatch, ModelCheckpoint, SampleGraph};
use crate::mesh::{generate_mesh, Mesh, Point2, ShapeSpec, ShapeTag};
use crate::trainer::prepare_samples;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_nodes: usize,
    pub method: String,
    pub mean_s: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

fn mean_ci(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() < 2 {
        0.0
    } else {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let half = 1.96 * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// A fixed single source blob around the interior node nearest (0.4, 0.55);
/// deterministic without consuming randomness.
fn fixed_source(mesh: &Mesh) -> Vec<f64> {
    let anchor = Point2::new(0.4, 0.55);
    let center = mesh
        .interior_nodes()
        .into_iter()
        .min_by(|&a, &b| {
            mesh.nodes[a]
                .dist(&anchor)
                .partial_cmp(&mesh.nodes[b].dist(&anchor))
                .unwrap()
        })
        .map(|i| mesh.nodes[i])
        .expect("square mesh has interior nodes");
    mesh.nodes
        .iter()
        .map(|p| if p.dist(&center) <= SOURCE_RADIUS { 1.0 } else { 0.0 })
        .collect()
}

/// For each square-mesh resolution, time (a) the full FEM pipeline
/// (assembly, preconditioned CG, gradient recovery) and (b) one GNN forward
/// pass, `n_repeats` times each.
pub fn benchmark_runtime(
    checkpoint: &ModelCheckpoint,
    sizes: &[usize],
    n_repeats: usize,
) -> Result<Vec<BenchRow>, TrainError> {
    let mut rows = Vec::new();
    for &budget in sizes {
        let mesh = generate_mesh(&ShapeSpec {
            node_budget: budget,
            ..ShapeSpec::default_for(ShapeTag::Square)
        })?;
        let n_nodes = mesh.n_nodes();
        let source = fixed_source(&mesh);

        let mut fem_times = Vec::with_capacity(n_repeats);
        for _ in 0..n_repeats {
            let t0 = Instant::now();
            let (u, e) = fem::solve_electrostatics(&mesh, &source)?;
            std::hint::black_box((&u, &e));
            fem_times.push(t0.elapsed().as_secs_f64());
        }
        let (mean, lo, hi) = mean_ci(&fem_times);
        rows.push(BenchRow {
            n_nodes,
            method: "fem".into(),
            mean_s: mean,
            ci95_low: lo,
            ci95_high: hi,
        });

        // Graph encoding prepared once; the timed region is inference.
        let record = build_sample(&mesh, ProblemTag::Es, &SourceField::Density(source))?;
        let cfg = checkpoint.config;
        let prepared = prepare_samples(
            std::slice::from_ref(&record),
            &checkpoint.normalization,
            cfg.in_dim,
            cfg.out_dim,
            cfg.edge_weighting,
        )?;
        let weights: Vec<f64> = record
            .edge_attr
            .iter()
            .map(|a| cfg.edge_weighting.weight(a[2]))
            .collect();
        let laplacian = Rc::new(scaled_laplacian(&record.edges, &weights, n_nodes)?);
        let graph = SampleGraph {
            laplacian,
            ..prepared[0].graph.clone()
        };

        let mut gnn_times = Vec::with_capacity(n_repeats);
        for _ in 0..n_repeats {
            let batch = GraphBatch::new(&[&graph], cfg.in_dim, cfg.out_dim);
            let t0 = Instant::now();
            let tape = Tape::new();
            let param_vars = register_params_frozen(&tape, &checkpoint.params);
            let features = tape.leaf(batch.features);
            let pred = forward(&tape, &cfg, &param_vars, features, &batch.laplacian)?;
            std::hint::black_box(tape.value(pred).data().len());
            gnn_times.push(t0.elapsed().as_secs_f64());
        }
        let (mean, lo, hi) = mean_ci(&gnn_times);
        rows.push(BenchRow {
            n_nodes,
            method: "gnn".into(),
            mean_s: mean,
            ci95_low: lo,
            ci95_high: hi,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> std::io::Result<()> {
    let mut csv = String::from("n_nodes,method,mean_s,ci95_low,ci95_high\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n_nodes, r.method, r.mean_s, r.ci95_low, r.ci95_high
        ));
    }
    std::fs::write(path, csv)
}

//! Training loop with regularizer variants, min-validation-loss checkpoint
//! selection, metric evaluation on the test splits, multi-seed statistics
//! and the FEM-vs-GNN runtime benchmark.

mod bench;

use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamHyper, AdamState, AutodiffError, Tape};
use crate::dataset::{
    read_manifest, read_split, DatasetError, NormConstants, ProblemTag, SampleRecord,
};
use crate::fem::FemError;
use crate::gnn::{
    forward, register_params, register_params_frozen, scaled_laplacian, EdgeWeighting, GnnError,
    GraphBatch, ModelCheckpoint, ModelConfig, ParamSet, SampleGraph,
};
use crate::mesh::{MeshError, Point2};
use crate::rng;

pub use bench::{benchmark_runtime, write_bench_csv, BenchRow};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("manifest missing: {0} (run `split` first)")]
    ManifestMissing(String),
    #[error("checkpoint missing: {0} (run `train` first)")]
    CheckpointMissing(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("a sample lost all nodes during node dropout and resampling kept failing")]
    EmptyGraph,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Training-time regularizer. Mesh augmentation acts through the data (the
/// set2 manifest splits); the dropout variants perturb each batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    MeshAug,
    FeatureDrop(f64),
    NodeDrop(f64),
    EdgeDrop(f64),
}

impl Regularizer {
    pub const ALL_NAMES: [&'static str; 5] =
        ["none", "mesh_aug", "feature_drop", "node_drop", "edge_drop"];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::MeshAug => "mesh_aug",
            Regularizer::FeatureDrop(_) => "feature_drop",
            Regularizer::NodeDrop(_) => "node_drop",
            Regularizer::EdgeDrop(_) => "edge_drop",
        }
    }

    pub fn probability(&self) -> f64 {
        match self {
            Regularizer::None | Regularizer::MeshAug => 0.0,
            Regularizer::FeatureDrop(p) | Regularizer::NodeDrop(p) | Regularizer::EdgeDrop(p) => *p,
        }
    }
}

impl std::str::FromStr for Regularizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Regularizer::None),
            "mesh_aug" => Ok(Regularizer::MeshAug),
            "feature_drop" => Ok(Regularizer::FeatureDrop(0.2)),
            "node_drop" => Ok(Regularizer::NodeDrop(0.1)),
            "edge_drop" => Ok(Regularizer::EdgeDrop(0.2)),
            other => Err(format!(
                "unknown regularizer '{other}' (expected one of {:?})",
                Regularizer::ALL_NAMES
            )),
        }
    }
}

impl Serialize for Regularizer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Regularizer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub problem: ProblemTag,
    pub regularizer: Regularizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamHyper,
    #[serde(default)]
    pub edge_weighting: EdgeWeighting,
    /// Zero-pad input features to this width (reproduces the reported
    /// parameter count at 9); off by default.
    #[serde(default)]
    pub pad_in_dim: Option<usize>,
}

impl TrainConfig {
    pub fn new(problem: ProblemTag, regularizer: Regularizer) -> Self {
        TrainConfig {
            problem,
            regularizer,
            epochs: 150,
            batch_size: 32,
            seed: 0,
            adam: AdamHyper::default(),
            edge_weighting: EdgeWeighting::default(),
            pad_in_dim: None,
        }
    }

    /// The desk preset used by the acceptance runs: 40 epochs (paired with
    /// 250-samples-per-set datasets).
    pub fn desk(problem: ProblemTag, regularizer: Regularizer) -> Self {
        TrainConfig {
            epochs: 40,
            ..TrainConfig::new(problem, regularizer)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let p = self.regularizer.probability();
        assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0,1)");
        assert!(self.epochs >= 1, "epochs must be at least 1");
        assert!(self.batch_size >= 1, "batch_size must be at least 1");
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.pad_in_dim.unwrap_or_else(|| self.problem.in_dim())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            edge_weighting: self.edge_weighting,
            ..ModelConfig::new(self.in_dim(), self.problem.out_dim())
        }
    }

    /// Splits this run trains on: the augmented pair exactly when mesh
    /// augmentation is the regularizer.
    pub fn split_pair(&self) -> (&'static str, &'static str) {
        if matches!(self.regularizer, Regularizer::MeshAug) {
            ("train_aug", "val_aug")
        } else {
            ("train_noaug", "val_noaug")
        }
    }
}

/// One sample prepared for training: normalized features/targets plus the
/// directed edge list needed to rebuild Laplacians under edge/node dropout.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub graph: SampleGraph,
    pub edges: Vec<[usize; 2]>,
    pub weights: Vec<f64>,
}

/// Normalize records and assemble per-sample graphs.
pub fn prepare_samples(
    records: &[SampleRecord],
    norm: &NormConstants,
    in_dim: usize,
    out_dim: usize,
    weighting: EdgeWeighting,
) -> Result<Vec<PreparedSample>, TrainError> {
    records
        .iter()
        .map(|rec| {
            let n = rec.n_nodes();
            let natural = rec.feat.first().map_or(0, |f| f.len());
            let mut features = vec![0.0; n * in_dim];
            for (i, row) in rec.feat.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    features[i * in_dim + c] = v / norm.feat[c];
                }
            }
            debug_assert!(natural <= in_dim);
            let mut targets = vec![0.0; n * out_dim];
            for (i, row) in rec.target.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    targets[i * out_dim + c] = v / norm.target[c];
                }
            }
            let weights: Vec<f64> = rec.edge_attr.iter().map(|a| weighting.weight(a[2])).collect();
            let laplacian = Rc::new(scaled_laplacian(&rec.edges, &weights, n)?);
            Ok(PreparedSample {
                graph: SampleGraph {
                    n_nodes: n,
                    features,
                    targets,
                    laplacian,
                },
                edges: rec.edges.clone(),
                weights,
            })
        })
        .collect()
}

/// Apply the per-batch regularizer. Only called on the training path; the
/// evaluation path never consumes randomness.
pub fn apply_regularizer<R: Rng>(
    batch: &[&PreparedSample],
    mode: Regularizer,
    rng: &mut R,
) -> Result<Vec<SampleGraph>, TrainError> {
    match mode {
        Regularizer::None | Regularizer::MeshAug => {
            Ok(batch.iter().map(|s| s.graph.clone()).collect())
        }
        Regularizer::FeatureDrop(p) => Ok(batch
            .iter()
            .map(|s| {
                let mut g = s.graph.clone();
                for v in g.features.iter_mut() {
                    if rng.random::<f64>() < p {
                        *v = 0.0;
                    }
                }
                g
            })
            .collect()),
        Regularizer::NodeDrop(p) => batch.iter().map(|s| node_drop(s, p, rng)).collect(),
        Regularizer::EdgeDrop(p) => batch.iter().map(|s| edge_drop(s, p, rng)).collect(),
    }
}

fn node_drop<R: Rng>(
    sample: &PreparedSample,
    p: f64,
    rng: &mut R,
) -> Result<SampleGraph, TrainError> {
    let n = sample.graph.n_nodes;
    let in_dim = sample.graph.features.len() / n;
    let out_dim = sample.graph.targets.len() / n;
    for _ in 0..1000 {
        let keep: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= p).collect();
        let survivors: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        if survivors.is_empty() {
            // All nodes dropped; resample the mask.
            continue;
        }
        let mut new_index = vec![usize::MAX; n];
        for (ni, &old) in survivors.iter().enumerate() {
            new_index[old] = ni;
        }
        let mut features = Vec::with_capacity(survivors.len() * in_dim);
        let mut targets = Vec::with_capacity(survivors.len() * out_dim);
        for &old in &survivors {
            features.extend_from_slice(&sample.graph.features[old * in_dim..(old + 1) * in_dim]);
            targets.extend_from_slice(&sample.graph.targets[old * out_dim..(old + 1) * out_dim]);
        }
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for (e, &w) in sample.edges.iter().zip(&sample.weights) {
            if keep[e[0]] && keep[e[1]] {
                edges.push([new_index[e[0]], new_index[e[1]]]);
                weights.push(w);
            }
        }
        let laplacian = Rc::new(scaled_laplacian(&edges, &weights, survivors.len())?);
        return Ok(SampleGraph {
            n_nodes: survivors.len(),
            features,
            targets,
            laplacian,
        });
    }
    Err(TrainError::EmptyGraph)
}

fn edge_drop<R: Rng>(
    sample: &PreparedSample,
    p: f64,
    rng: &mut R,
) -> Result<SampleGraph, TrainError> {
    // Decide per undirected pair so both directions drop together.
    let mut keep_pair = std::collections::BTreeMap::new();
    for e in &sample.edges {
        let key = (e[0].min(e[1]), e[0].max(e[1]));
        keep_pair
            .entry(key)
            .or_insert_with(|| rng.random::<f64>() >= p);
    }
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (e, &w) in sample.edges.iter().zip(&sample.weights) {
        if keep_pair[&(e[0].min(e[1]), e[0].max(e[1]))] {
            edges.push(*e);
            weights.push(w);
        }
    }
    let laplacian = Rc::new(scaled_laplacian(&edges, &weights, sample.graph.n_nodes)?);
    Ok(SampleGraph {
        laplacian,
        ..sample.graph.clone()
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub curve: Vec<EpochStats>,
    pub checkpoint_path: PathBuf,
    pub curve_path: PathBuf,
}

/// Train on the manifest in `data_dir`, writing `checkpoint.json` and
/// `curve.csv` into `out_dir`. The returned checkpoint holds the parameters
/// from the epoch with the lowest validation loss.
pub fn train(config: &TrainConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let manifest = read_manifest(data_dir, config.problem)
        .map_err(|e| TrainError::ManifestMissing(e.to_string()))?;
    let (train_name, val_name) = config.split_pair();
    let train_records = read_split(data_dir, &manifest, train_name)?;
    let val_records = read_split(data_dir, &manifest, val_name)?;

    let model_cfg = config.model_config();
    let (in_dim, out_dim) = (model_cfg.in_dim, model_cfg.out_dim);
    let train_samples = prepare_samples(
        &train_records,
        &manifest.normalization,
        in_dim,
        out_dim,
        config.edge_weighting,
    )?;
    let val_samples = prepare_samples(
        &val_records,
        &manifest.normalization,
        in_dim,
        out_dim,
        config.edge_weighting,
    )?;

    let mut params = ParamSet::init(&model_cfg, config.seed);
    let mut adam = AdamState::new(&params.tensors);
    let mut shuffle_rng = rng::rng_for(config.seed, &[rng::tag("shuffle")]);
    let mut reg_rng = rng::rng_for(config.seed, &[rng::tag("regularizer")]);

    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamSet, AdamState)> = None;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_samples.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut train_sse = 0.0;
        let mut train_count = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_refs: Vec<&PreparedSample> =
                chunk.iter().map(|&i| &train_samples[i]).collect();
            let graphs = apply_regularizer(&batch_refs, config.regularizer, &mut reg_rng)?;
            let graph_refs: Vec<&SampleGraph> = graphs.iter().collect();
            let batch = GraphBatch::new(&graph_refs, in_dim, out_dim);

            let tape = Tape::new();
            let param_vars = register_params(&tape, &params);
            let features = tape.leaf(batch.features);
            let pred = forward(&tape, &model_cfg, &param_vars, features, &batch.laplacian)?;
            let loss = tape.mse(pred, &batch.targets, None)?;
            let loss_val = tape.value(loss).scalar_value();
            if !loss_val.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let entries = batch.targets.len();
            train_sse += loss_val * entries as f64;
            train_count += entries;

            let mut grads = tape.backward(loss)?;
            let grad_tensors: Vec<_> = param_vars
                .iter()
                .zip(&params.tensors)
                .map(|(&v, t)| {
                    grads
                        .take(v)
                        .unwrap_or_else(|| crate::autodiff::Tensor::zeros(t.shape().to_vec()))
                })
                .collect();
            adam_step(&mut params.tensors, &grad_tensors, &mut adam, config.adam);
        }
        let train_mse = train_sse / train_count.max(1) as f64;

        let val_mse = validation_mse(&model_cfg, &params, &val_samples, config.batch_size)?;
        if !val_mse.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        curve.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
        });
        let is_better = best.as_ref().map_or(true, |(b, ..)| val_mse < *b);
        if is_better {
            best = Some((val_mse, epoch, params.clone(), adam.clone()));
        }
    }

    let (best_val, best_epoch, best_params, best_adam) = best.expect("at least one epoch");
    let checkpoint = ModelCheckpoint {
        config: model_cfg,
        params: best_params,
        adam: best_adam,
        normalization: manifest.normalization.clone(),
        config_hash: manifest.config_hash.clone(),
        best_epoch,
        best_val_mse: best_val,
    };

    std::fs::create_dir_all(out_dir)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    checkpoint.save(&checkpoint_path)?;
    let curve_path = out_dir.join("curve.csv");
    let mut csv = String::from("epoch,train_mse,val_mse\n");
    for row in &curve {
        csv.push_str(&format!("{},{},{}\n", row.epoch, row.train_mse, row.val_mse));
    }
    std::fs::write(&curve_path, csv)?;

    Ok(TrainOutcome {
        checkpoint,
        curve,
        checkpoint_path,
        curve_path,
    })
}

fn validation_mse(
    model_cfg: &ModelConfig,
    params: &ParamSet,
    samples: &[PreparedSample],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size) {
        let graph_refs: Vec<&SampleGraph> = chunk.iter().map(|s| &s.graph).collect();
        let batch = GraphBatch::new(&graph_refs, model_cfg.in_dim, model_cfg.out_dim);
        let tape = Tape::new();
        let param_vars = register_params_frozen(&tape, params);
        let features = tape.leaf(batch.features);
        let pred = forward(&tape, model_cfg, &param_vars, features, &batch.laplacian)?;
        let loss = tape.mse(pred, &batch.targets, None)?;
        let entries = batch.targets.len();
        sse += tape.value(loss).scalar_value() * entries as f64;
        count += entries;
    }
    Ok(sse / count.max(1) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstSample {
    pub file: String,
    pub line: usize,
    pub mse_pot: f64,
    pub mse_field: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: ProblemTag,
    pub split: String,
    pub n_samples: usize,
    /// MSE over the potential channel, normalized units.
    pub mse_pot: f64,
    /// MSE over both field components jointly, normalized units.
    pub mse_field: f64,
    /// Worst samples by field MSE, for rendering.
    pub worst: Vec<WorstSample>,
    /// Area-weighted mean |curl| of the predicted (denormalized) E field;
    /// diagnostic only, electrostatics splits only.
    pub curl_mean_abs: Option<f64>,
}

/// Evaluate a checkpoint on a named split of the manifest in `data_dir`.
/// Consumes no randomness.
pub fn evaluate(
    checkpoint: &ModelCheckpoint,
    data_dir: &Path,
    split_name: &str,
) -> Result<EvalReport, TrainError> {
    let problem = problem_of(checkpoint)?;
    let manifest = read_manifest(data_dir, problem)
        .map_err(|e| TrainError::ManifestMissing(e.to_string()))?;
    let entries = manifest.split(split_name)?.to_vec();
    let records = read_split(data_dir, &manifest, split_name)?;
    evaluate_records(checkpoint, &records, &entries, split_name)
}

fn problem_of(checkpoint: &ModelCheckpoint) -> Result<ProblemTag, TrainError> {
    for p in ProblemTag::ALL {
        if p.out_dim() == checkpoint.config.out_dim
            && (p.in_dim() == checkpoint.config.in_dim || checkpoint.config.in_dim > p.in_dim())
        {
            return Ok(p);
        }
    }
    Ok(ProblemTag::Es)
}

/// Evaluation core shared by the public entry points; `entries` names the
/// provenance of each record for the worst-case list.
pub fn evaluate_records(
    checkpoint: &ModelCheckpoint,
    records: &[SampleRecord],
    entries: &[crate::dataset::FileLine],
    split_name: &str,
) -> Result<EvalReport, TrainError> {
    let problem = records.first().map_or(ProblemTag::Es, |r| r.problem);
    let cfg = checkpoint.config;
    let samples = prepare_samples(
        records,
        &checkpoint.normalization,
        cfg.in_dim,
        cfg.out_dim,
        cfg.edge_weighting,
    )?;

    let mut per_sample: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    let mut sse_pot = 0.0;
    let mut sse_field = 0.0;
    let mut n_nodes_total = 0usize;
    let mut curl_num = 0.0;
    let mut curl_den = 0.0;

    for (chunk_idx, chunk) in samples.chunks(32).enumerate() {
        let graph_refs: Vec<&SampleGraph> = chunk.iter().map(|s| &s.graph).collect();
        let batch = GraphBatch::new(&graph_refs, cfg.in_dim, cfg.out_dim);
        let tape = Tape::new();
        let param_vars = register_params_frozen(&tape, &checkpoint.params);
        let features = tape.leaf(batch.features);
        let pred_var = forward(&tape, &cfg, &param_vars, features, &batch.laplacian)?;
        let pred = tape.value(pred_var);

        for (si, sample) in chunk.iter().enumerate() {
            let rows = batch.offsets[si]..batch.offsets[si + 1];
            let n = sample.graph.n_nodes;
            let mut pot = 0.0;
            let mut field = 0.0;
            for r in rows.clone() {
                let p = &pred.data()[r * cfg.out_dim..(r + 1) * cfg.out_dim];
                let t = &sample.graph.targets
                    [(r - batch.offsets[si]) * cfg.out_dim..(r - batch.offsets[si] + 1) * cfg.out_dim];
                pot += (p[0] - t[0]).powi(2);
                for c in 1..cfg.out_dim {
                    field += (p[c] - t[c]).powi(2);
                }
            }
            per_sample.push((pot / n as f64, field / ((cfg.out_dim - 1).max(1) * n) as f64));
            sse_pot += pot;
            sse_field += field;
            n_nodes_total += n;

            if problem == ProblemTag::Es && cfg.out_dim == 3 {
                let record = &records[chunk_idx * 32 + si];
                let (num, den) = curl_accumulate(record, &pred, batch.offsets[si], checkpoint);
                curl_num += num;
                curl_den += den;
            }
        }
    }

    let mut worst: Vec<(usize, f64, f64)> = per_sample
        .iter()
        .enumerate()
        .map(|(i, &(p, f))| (i, p, f))
        .collect();
    worst.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
    worst.truncate(10);
    let worst = worst
        .into_iter()
        .map(|(i, p, f)| WorstSample {
            file: entries.get(i).map_or_else(String::new, |e| e.file.clone()),
            line: entries.get(i).map_or(i, |e| e.line),
            mse_pot: p,
            mse_field: f,
        })
        .collect();

    Ok(EvalReport {
        problem,
        split: split_name.to_string(),
        n_samples: samples.len(),
        mse_pot: sse_pot / n_nodes_total.max(1) as f64,
        mse_field: sse_field / ((cfg.out_dim - 1).max(1) * n_nodes_total.max(1)) as f64,
        worst,
        curl_mean_abs: if problem == ProblemTag::Es && curl_den > 0.0 {
            Some(curl_num / curl_den)
        } else {
            None
        },
    })
}

/// Area-weighted |curl| of the predicted E field on one sample: the P1
/// interpolant of (E_x, E_y) has a constant curl dEy/dx - dEx/dy per
/// triangle. An exact gradient field would give zero.
fn curl_accumulate(
    record: &SampleRecord,
    pred: &crate::autodiff::Tensor,
    row_offset: usize,
    checkpoint: &ModelCheckpoint,
) -> (f64, f64) {
    let out_dim = checkpoint.config.out_dim;
    let (ex_scale, ey_scale) = (
        checkpoint.normalization.target[1],
        checkpoint.normalization.target[2],
    );
    let nodes: Vec<Point2> = record.nodes.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in &record.tris {
        let [a, b, c] = *t;
        let (pa, pb, pc) = (nodes[a], nodes[b], nodes[c]);
        let two_a = (pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y);
        let area = 0.5 * two_a;
        if area.abs() < 1e-14 {
            continue;
        }
        let bg = [
            (pb.y - pc.y) / two_a,
            (pc.y - pa.y) / two_a,
            (pa.y - pb.y) / two_a,
        ];
        let cg = [
            (pc.x - pb.x) / two_a,
            (pa.x - pc.x) / two_a,
            (pb.x - pa.x) / two_a,
        ];
        let mut d_ey_dx = 0.0;
        let mut d_ex_dy = 0.0;
        for (k, &v) in t.iter().enumerate() {
            let row = &pred.data()[(row_offset + v) * out_dim..(row_offset + v + 1) * out_dim];
            d_ey_dx += row[2] * ey_scale * bg[k];
            d_ex_dy += row[1] * ex_scale * cg[k];
        }
        num += area * (d_ey_dx - d_ex_dy).abs();
        den += area;
    }
    (num, den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub mse_pot: f64,
    pub mse_field: f64,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub problem: ProblemTag,
    pub regularizer: String,
    pub split: String,
    pub runs: Vec<SeedRun>,
    pub mean_pot: f64,
    pub std_pot: f64,
    pub mean_field: f64,
    pub std_field: f64,
}

/// Sample mean and standard deviation (n-1 denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Train once per seed and evaluate each run on `split_name`. Runs go to
/// `out_dir/seed{N}/`.
pub fn multi_seed(
    base: &TrainConfig,
    seeds: &[u64],
    data_dir: &Path,
    out_dir: &Path,
    split_name: &str,
) -> Result<MultiSeedReport, TrainError> {
    assert!(seeds.len() >= 2, "multi-seed statistics need at least 2 seeds");
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let config = TrainConfig {
            seed,
            ..base.clone()
        };
        let run_dir = out_dir.join(format!("seed{seed}"));
        let outcome = train(&config, data_dir, &run_dir)?;
        let report = evaluate(&outcome.checkpoint, data_dir, split_name)?;
        let report_path = run_dir.join(format!("eval_{split_name}.json"));
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
        runs.push(SeedRun {
            seed,
            mse_pot: report.mse_pot,
            mse_field: report.mse_field,
            best_epoch: outcome.checkpoint.best_epoch,
            best_val_mse: outcome.checkpoint.best_val_mse,
        });
    }
    let (mean_pot, std_pot) = mean_std(&runs.iter().map(|r| r.mse_pot).collect::<Vec<_>>());
    let (mean_field, std_field) = mean_std(&runs.iter().map(|r| r.mse_field).collect::<Vec<_>>());
    Ok(MultiSeedReport {
        problem: base.problem,
        regularizer: base.regularizer.as_str().to_string(),
        split: split_name.to_string(),
        runs,
        mean_pot,
        std_pot,
        mean_field,
        std_field,
    })
}

/// Forward-pass predictions for one record (denormalized where the caller
/// wants raw units; this returns normalized units matching the targets).
pub fn predict_record(
    checkpoint: &ModelCheckpoint,
    record: &SampleRecord,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let cfg = checkpoint.config;
    let samples = prepare_samples(
        std::slice::from_ref(record),
        &checkpoint.normalization,
        cfg.in_dim,
        cfg.out_dim,
        cfg.edge_weighting,
    )?;
    let graph_refs: Vec<&SampleGraph> = samples.iter().map(|s| &s.graph).collect();
    let batch = GraphBatch::new(&graph_refs, cfg.in_dim, cfg.out_dim);
    let tape = Tape::new();
    let param_vars = register_params_frozen(&tape, &checkpoint.params);
    let features = tape.leaf(batch.features);
    let pred_var = forward(&tape, &cfg, &param_vars, features, &batch.laplacian)?;
    let pred = tape.value(pred_var);
    Ok(pred
        .data()
        .chunks_exact(cfg.out_dim)
        .map(|row| row.to_vec())
        .collect())
}

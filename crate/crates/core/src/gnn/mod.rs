//! Encoder/processor/decoder network over graph-encoded meshes: two-layer
//! MLP encoder, three Chebyshev spectral graph convolutions (K hops each)
//! with ReLU, and a two-layer MLP decoder with no nonlinearity after the
//! output layer.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamState, AutodiffError, Tape, Tensor, Var};
use crate::dataset::NormConstants;
use crate::rng;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("edge weight must be positive, got {0}")]
    NegativeWeight(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// How scalar edge weights for the graph Laplacian are derived from the edge
/// length. The spectral operator takes one scalar per edge; the default uses
/// the raw Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeighting {
    #[default]
    Distance,
    InverseDistance,
    Binary,
}

impl EdgeWeighting {
    pub fn weight(&self, dist: f64) -> f64 {
        match self {
            EdgeWeighting::Distance => dist,
            EdgeWeighting::InverseDistance => 1.0 / dist.max(1e-12),
            EdgeWeighting::Binary => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub cheb_k: usize,
    pub n_conv: usize,
    pub out_dim: usize,
    #[serde(default)]
    pub edge_weighting: EdgeWeighting,
}

impl ModelConfig {
    /// Defaults: 128 hidden units, K=5 hops, 3 convolution layers.
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        ModelConfig {
            in_dim,
            hidden: 128,
            cheb_k: 5,
            n_conv: 3,
            out_dim,
            edge_weighting: EdgeWeighting::Distance,
        }
    }
}

/// Scaled graph Laplacian for the Chebyshev basis: with lambda_max fixed at
/// 2, (2/lambda_max) L_sym - I reduces to -D^{-1/2} W D^{-1/2}. Isolated
/// nodes get an all-zero row. Expects a symmetric directed edge list with
/// strictly positive weights.
pub fn scaled_laplacian(
    edges: &[[usize; 2]],
    edge_weights: &[f64],
    n_nodes: usize,
) -> Result<CsrMatrix, GnnError> {
    assert_eq!(edges.len(), edge_weights.len());
    let mut degree = vec![0.0; n_nodes];
    for (e, &w) in edges.iter().zip(edge_weights) {
        if w <= 0.0 {
            return Err(GnnError::NegativeWeight(w));
        }
        degree[e[0]] += w;
    }
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    // Group the degree factors first; multiplication commutes bitwise, so
    // the matrix comes out exactly symmetric.
    let triplets: Vec<(usize, usize, f64)> = edges
        .iter()
        .zip(edge_weights)
        .map(|(e, &w)| (e[0], e[1], -(w * (inv_sqrt[e[0]] * inv_sqrt[e[1]]))))
        .collect();
    Ok(CsrMatrix::from_triplets(n_nodes, n_nodes, &triplets))
}

/// Named parameter tensors in a fixed order:
/// encoder (w0,b0,w1,b1), conv{i} (w0..w{K-1}, bias), decoder (w0,b0,w1,b1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    /// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
    /// drawn from a single seeded stream in declaration order.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut r = rng::rng_for(seed, &[rng::tag("param-init")]);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut weight = |names: &mut Vec<String>, tensors: &mut Vec<Tensor>,
                          name: String, rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| r.random_range(-bound..=bound))
                .collect();
            names.push(name);
            tensors.push(Tensor::matrix(rows, cols, data));
        };
        let bias = |names: &mut Vec<String>, tensors: &mut Vec<Tensor>, name: String, n: usize| {
            names.push(name);
            tensors.push(Tensor::zeros(vec![n]));
        };

        let h = cfg.hidden;
        weight(&mut names, &mut tensors, "encoder.w0".into(), cfg.in_dim, h);
        bias(&mut names, &mut tensors, "encoder.b0".into(), h);
        weight(&mut names, &mut tensors, "encoder.w1".into(), h, h);
        bias(&mut names, &mut tensors, "encoder.b1".into(), h);
        for conv in 0..cfg.n_conv {
            for k in 0..cfg.cheb_k {
                weight(&mut names, &mut tensors, format!("conv{conv}.w{k}"), h, h);
            }
            bias(&mut names, &mut tensors, format!("conv{conv}.bias"), h);
        }
        weight(&mut names, &mut tensors, "decoder.w0".into(), h, h);
        bias(&mut names, &mut tensors, "decoder.b0".into(), h);
        weight(&mut names, &mut tensors, "decoder.w1".into(), h, cfg.out_dim);
        bias(&mut names, &mut tensors, "decoder.b1".into(), cfg.out_dim);

        ParamSet { names, tensors }
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// One prepared (normalized) sample ready for batching.
#[derive(Debug, Clone)]
pub struct SampleGraph {
    pub n_nodes: usize,
    /// Row-major n_nodes x in_dim.
    pub features: Vec<f64>,
    /// Row-major n_nodes x out_dim.
    pub targets: Vec<f64>,
    pub laplacian: Rc<CsrMatrix>,
}

/// Block-concatenated node features and targets of several samples with a
/// block-diagonal scaled Laplacian. No edges cross sample blocks, so
/// per-sample predictions are independent of the batch composition.
pub struct GraphBatch {
    pub features: Tensor,
    pub targets: Tensor,
    pub laplacian: Rc<CsrMatrix>,
    /// Prefix sums of node counts; sample i occupies rows
    /// offsets[i]..offsets[i+1].
    pub offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(samples: &[&SampleGraph], in_dim: usize, out_dim: usize) -> Self {
        let total: usize = samples.iter().map(|s| s.n_nodes).sum();
        let mut features = Vec::with_capacity(total * in_dim);
        let mut targets = Vec::with_capacity(total * out_dim);
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        offsets.push(0);
        for s in samples {
            debug_assert_eq!(s.features.len(), s.n_nodes * in_dim);
            debug_assert_eq!(s.targets.len(), s.n_nodes * out_dim);
            features.extend_from_slice(&s.features);
            targets.extend_from_slice(&s.targets);
            offsets.push(offsets.last().unwrap() + s.n_nodes);
        }
        let blocks: Vec<&CsrMatrix> = samples.iter().map(|s| s.laplacian.as_ref()).collect();
        GraphBatch {
            features: Tensor::matrix(total, in_dim, features),
            targets: Tensor::matrix(total, out_dim, targets),
            laplacian: Rc::new(CsrMatrix::block_diag(&blocks)),
            offsets,
        }
    }

    pub fn n_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_samples(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Run the network on already-tape-registered parameters. `params` must
/// follow the [`ParamSet`] ordering for `cfg`.
pub fn forward(
    tape: &Tape,
    cfg: &ModelConfig,
    params: &[Var],
    features: Var,
    laplacian: &Rc<CsrMatrix>,
) -> Result<Var, AutodiffError> {
    let mut idx = 0;
    let mut next = || {
        let v = params[idx];
        idx += 1;
        v
    };

    // Encoder: two layers, ReLU after each.
    let (w0, b0, w1, b1) = (next(), next(), next(), next());
    let mut x = tape.relu(tape.add_bias(tape.matmul(features, w0)?, b0)?);
    x = tape.relu(tape.add_bias(tape.matmul(x, w1)?, b1)?);

    // Processor: spectral graph convolutions with ReLU after each.
    for _ in 0..cfg.n_conv {
        let weights: Vec<Var> = (0..cfg.cheb_k).map(|_| next()).collect();
        let bias = next();
        x = tape.relu(tape.cheb_conv(x, laplacian, &weights, bias)?);
    }

    // Decoder: ReLU after the hidden layer only.
    let (dw0, db0, dw1, db1) = (next(), next(), next(), next());
    x = tape.relu(tape.add_bias(tape.matmul(x, dw0)?, db0)?);
    tape.add_bias(tape.matmul(x, dw1)?, db1)
}

/// Register all parameters on a tape as learnable leaves.
pub fn register_params(tape: &Tape, params: &ParamSet) -> Vec<Var> {
    params.tensors.iter().map(|t| tape.param(t.clone())).collect()
}

/// Register all parameters as constants (evaluation path).
pub fn register_params_frozen(tape: &Tape, params: &ParamSet) -> Vec<Var> {
    params.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
}

/// Everything needed to resume or evaluate a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub adam: AdamState,
    pub normalization: NormConstants,
    pub config_hash: String,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl ModelCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)?;
        use std::io::Write;
        writeln!(writer)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        Ok(serde_json::from_reader(reader)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_laplacian() {
        let l = scaled_laplacian(&[[0, 1], [1, 0]], &[1.0, 1.0], 2).unwrap();
        assert_eq!(l.to_dense(), vec![0.0, -1.0, -1.0, 0.0]);
    }

    #[test]
    fn edgeless_graph_gives_zero_matrix() {
        let l = scaled_laplacian(&[], &[], 4).unwrap();
        assert_eq!(l.nnz(), 0);
        assert_eq!(l.n_rows(), 4);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        assert!(matches!(
            scaled_laplacian(&[[0, 1], [1, 0]], &[-0.5, -0.5], 2),
            Err(GnnError::NegativeWeight(_))
        ));
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        // (in*128+128) + (128*128+128) + 3*(5*128*128+128) + (128*128+128)
        // + (128*out+out)
        let count = |in_dim: usize| ParamSet::init(&ModelConfig::new(in_dim, 3), 0).param_count();
        assert_eq!(count(4), 280_195);
        assert_eq!(count(9), 280_835);
    }

    #[test]
    fn cheb_conv_k1_identity_weight_is_identity() {
        let tape = Tape::new();
        let n = 4;
        let lap = Rc::new(CsrMatrix::zeros(n, n));
        let x_data: Vec<f64> = (0..n * 2).map(|i| i as f64 * 0.5 - 1.0).collect();
        let x = tape.leaf(Tensor::matrix(n, 2, x_data.clone()));
        let eye = tape.param(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let bias = tape.param(Tensor::zeros(vec![2]));
        let y = tape.cheb_conv(x, &lap, &[eye], bias).unwrap();
        assert_eq!(tape.value(y).data(), &x_data[..]);
    }

    #[test]
    fn cheb_conv_k2_on_edgeless_graph_drops_t1_term() {
        let tape = Tape::new();
        let n = 3;
        let lap = Rc::new(CsrMatrix::zeros(n, n));
        let x = tape.leaf(Tensor::matrix(n, 1, vec![1.0, 2.0, 3.0]));
        let w0 = tape.param(Tensor::matrix(1, 1, vec![2.0]));
        let w1 = tape.param(Tensor::matrix(1, 1, vec![100.0]));
        let bias = tape.param(Tensor::vector(vec![0.5]));
        let y = tape.cheb_conv(x, &lap, &[w0, w1], bias).unwrap();
        assert_eq!(tape.value(y).data(), &[2.5, 4.5, 6.5]);
    }
}

//! Network architectures: a shared trunk with forked branches, the unified
//! and separated baselines, and the plain density-matrix net.
//!
//! Hidden layers run linear → SiLU → dropout → layer norm; output layers are
//! plain linear. The time input is fed raw in [0, T_tot].

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::{NodeId, ParamRef, ParamStore, Tape};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Shared trunk, one hidden branch layer plus an output layer per head.
    Forked,
    /// One trunk, heads split only at the output layer.
    Unified,
    /// Fully disjoint per-head networks.
    Separated,
    /// Single-head net for the density matrix.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Widths of the trunk layers (forked/unified); per-head widths for
    /// separated and plain nets.
    pub shared_layers: Vec<usize>,
    /// Widths of the per-branch hidden layers (forked only).
    #[serde(default)]
    pub branch_layers: Vec<usize>,
    /// Output features per head; one entry per head.
    pub out_features: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub dropout_rate: f64,
    pub layer_norm: bool,
    /// Multiplier on the output layers' init limit; values near zero start
    /// every head at an almost static trajectory.
    #[serde(default = "default_output_init_scale")]
    pub output_init_scale: f64,
    /// Draw one dropout mask per collocation point instead of per layer.
    #[serde(default)]
    pub dropout_per_point: bool,
    pub seed: u64,
}

fn default_output_init_scale() -> f64 {
    1.0
}

fn default_activation() -> Activation {
    Activation::Silu
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        let heads = self.out_features.len();
        let expect_heads = match self.architecture {
            Architecture::Plain => 1,
            _ => 2,
        };
        if heads != expect_heads {
            return Err(Error::InvalidConfig(format!(
                "{:?} networks need {expect_heads} output head(s), got {heads}",
                self.architecture
            )));
        }
        if self.shared_layers.is_empty() || self.shared_layers.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be at least 1".into()));
        }
        if matches!(self.architecture, Architecture::Forked)
            && (self.branch_layers.is_empty() || self.branch_layers.iter().any(|&w| w == 0))
        {
            return Err(Error::InvalidConfig("forked networks need branch layer widths".into()));
        }
        if self.out_features.iter().any(|&f| f == 0) {
            return Err(Error::InvalidConfig("output heads must produce features".into()));
        }
        Ok(())
    }
}

/// One affine layer plus optional layer-norm parameters.
#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamRef,
    b: ParamRef,
    ln: Option<(ParamRef, ParamRef)>,
    fan_out: usize,
}

#[derive(Debug, Clone)]
struct HeadPath {
    branch: Vec<Layer>,
    out: Layer,
}

/// Evaluation mode: eval is deterministic; train freezes one dropout mask
/// set per epoch so the differentiated map stays consistent in t.
#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Eval,
    Train { epoch_seed: u64 },
}

/// Features and their exact time derivative at the requested points.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub features: Vec<f64>,
    pub dfeatures_dt: Vec<f64>,
}

/// A built network: layer descriptors into a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    trunk: Vec<Layer>,
    heads: Vec<HeadPath>,
}

fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    layer_norm: bool,
    output_scale: f64,
}

impl Builder<'_> {
    fn layer(&mut self, group: usize, fan_in: usize, fan_out: usize, hidden: bool) -> Layer {
        let limit = if hidden { 1.0 } else { self.output_scale } / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut self.rng)).collect();
        let b: Vec<f64> = (0..fan_out).map(|_| dist.sample(&mut self.rng)).collect();
        let w = self.store.push_tensor(group, fan_out, fan_in, w);
        let b = self.store.push_tensor(group, fan_out, 1, b);
        let ln = if hidden && self.layer_norm {
            let gain = self.store.push_tensor(group, fan_out, 1, vec![1.0; fan_out]);
            let bias = self.store.push_tensor(group, fan_out, 1, vec![0.0; fan_out]);
            Some((gain, bias))
        } else {
            None
        };
        Layer { w, b, ln, fan_out }
    }

    fn stack(&mut self, group: usize, input: usize, widths: &[usize]) -> (Vec<Layer>, usize) {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for &w in widths {
            layers.push(self.layer(group, fan_in, w, true));
            fan_in = w;
        }
        (layers, fan_in)
    }
}

/// Build a network and its parameter store from a config. Parameters are
/// drawn from a seeded uniform distribution with per-layer limit 1/√fan_in.
pub fn build_network(config: &NetworkConfig) -> Result<(ParamStore, Network)> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut trunk = Vec::new();
    let mut heads = Vec::new();

    match config.architecture {
        Architecture::Forked => {
            let shared = store.add_group("shared");
            let branch_o = store.add_group("branch_o");
            let branch_q = store.add_group("branch_q");
            let mut b = Builder {
                store: &mut store,
                rng: seeded_rng(config.seed, 0),
                layer_norm: config.layer_norm,
                output_scale: config.output_init_scale,
            };
            let (t, trunk_out) = b.stack(shared, 1, &config.shared_layers);
            trunk = t;
            for (head, group) in [branch_o, branch_q].into_iter().enumerate() {
                let (branch, fan) = b.stack(group, trunk_out, &config.branch_layers);
                let out = b.layer(group, fan, config.out_features[head], false);
                heads.push(HeadPath { branch, out });
            }
        }
        Architecture::Unified => {
            let group = store.add_group("unified");
            let mut b = Builder {
                store: &mut store,
                rng: seeded_rng(config.seed, 0),
                layer_norm: config.layer_norm,
                output_scale: config.output_init_scale,
            };
            let (t, trunk_out) = b.stack(group, 1, &config.shared_layers);
            trunk = t;
            for head in 0..config.out_features.len() {
                let out = b.layer(group, trunk_out, config.out_features[head], false);
                heads.push(HeadPath { branch: Vec::new(), out });
            }
        }
        Architecture::Separated => {
            let g_o = store.add_group("net_o");
            let g_q = store.add_group("net_q");
            let mut b = Builder {
                store: &mut store,
                rng: seeded_rng(config.seed, 0),
                layer_norm: config.layer_norm,
                output_scale: config.output_init_scale,
            };
            for (head, group) in [g_o, g_q].into_iter().enumerate() {
                let (branch, fan) = b.stack(group, 1, &config.shared_layers);
                let out = b.layer(group, fan, config.out_features[head], false);
                heads.push(HeadPath { branch, out });
            }
        }
        Architecture::Plain => {
            let group = store.add_group("net");
            let mut b = Builder {
                store: &mut store,
                rng: seeded_rng(config.seed, 0),
                layer_norm: config.layer_norm,
                output_scale: config.output_init_scale,
            };
            let (branch, fan) = b.stack(group, 1, &config.shared_layers);
            let out = b.layer(group, fan, config.out_features[0], false);
            heads.push(HeadPath { branch, out });
        }
    }

    Ok((store, Network { config: config.clone(), trunk, heads }))
}

impl Network {
    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    /// Group index owning each head's branch parameters (equals the trunk
    /// group for unified/plain nets).
    pub fn head_group(&self, head: usize) -> usize {
        self.heads[head].out.w.group
    }

    fn record_layer(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        layer: &Layer,
        x: NodeId,
        hidden: bool,
        mask: Option<Array2<f64>>,
    ) -> NodeId {
        let mut node = tape.linear(params, layer.w, layer.b, x);
        if hidden {
            node = tape.silu_node(node);
            if let Some(m) = mask {
                node = tape.dropout(node, m);
            }
            if let Some((gain, bias)) = layer.ln {
                let mu = tape.mean_rows(node);
                let centered = tape.sub_row(node, mu);
                let sq = tape.square(centered);
                let var = tape.mean_rows(sq);
                let inv = tape.rsqrt_shift(var, LAYER_NORM_EPS);
                let normed = tape.mul_row(centered, inv);
                let scaled = tape.scale_param_rows(params, gain, normed);
                node = tape.add_param_rows(params, bias, scaled);
            }
        }
        node
    }

    fn draw_mask(&self, rng: &mut ChaCha8Rng, width: usize, n_points: usize) -> Array2<f64> {
        let rate = self.config.dropout_rate;
        let keep = 1.0 / (1.0 - rate);
        let dist = Uniform::new(0.0f64, 1.0);
        let cols = if self.config.dropout_per_point { n_points } else { 1 };
        Array2::from_shape_fn((width, cols), |_| if dist.sample(rng) < rate { 0.0 } else { keep })
    }

    /// Record the forward pass for a batch of times, returning one feature
    /// node per head. Node values are head features; node tangents are their
    /// exact time derivatives.
    pub fn record_forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        times: &[f64],
        mode: Mode,
    ) -> Result<Vec<NodeId>> {
        let mut mask_rng = match mode {
            Mode::Train { epoch_seed } if self.config.dropout_rate > 0.0 => {
                Some(seeded_rng(epoch_seed, 1))
            }
            _ => None,
        };
        let input = tape.input_time(times);

        let check = |tape: &Tape, node: NodeId, what: &str| -> Result<()> {
            let finite = tape.value(node).iter().all(|v| v.is_finite())
                && tape.tangent(node).map_or(true, |t| t.iter().all(|v| v.is_finite()));
            if finite {
                Ok(())
            } else {
                Err(Error::NonFinite { context: format!("forward pass at {what}") })
            }
        };

        let n_points = times.len();
        let mut trunk_out = input;
        for (i, layer) in self.trunk.iter().enumerate() {
            let mask = mask_rng.as_mut().map(|rng| self.draw_mask(rng, layer.fan_out, n_points));
            trunk_out = self.record_layer(tape, params, layer, trunk_out, true, mask);
            check(tape, trunk_out, &format!("trunk layer {i}"))?;
        }

        let mut outputs = Vec::with_capacity(self.heads.len());
        for (h, head) in self.heads.iter().enumerate() {
            let mut x = trunk_out;
            for (i, layer) in head.branch.iter().enumerate() {
                let mask = mask_rng.as_mut().map(|rng| self.draw_mask(rng, layer.fan_out, n_points));
                x = self.record_layer(tape, params, layer, x, true, mask);
                check(tape, x, &format!("head {h} branch layer {i}"))?;
            }
            let out = self.record_layer(tape, params, &head.out, x, false, None);
            check(tape, out, &format!("head {h} output layer"))?;
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Features and d(features)/dt of every head at a single time.
    pub fn forward(&self, params: &ParamStore, t: f64, mode: Mode) -> Result<Vec<EvalOutput>> {
        let mut tape = Tape::new();
        let heads = self.record_forward(&mut tape, params, &[t], mode)?;
        Ok(heads
            .into_iter()
            .map(|id| EvalOutput {
                features: tape.value(id).column(0).to_vec(),
                dfeatures_dt: tape.tangent(id).expect("head outputs are dual").column(0).to_vec(),
            })
            .collect())
    }

    /// Batched eval-mode features per head: (features m×N, dfeatures m×N).
    pub fn eval_grid(
        &self,
        params: &ParamStore,
        times: &[f64],
    ) -> Result<Vec<(ndarray::Array2<f64>, ndarray::Array2<f64>)>> {
        let mut tape = Tape::new();
        let heads = self.record_forward(&mut tape, params, times, Mode::Eval)?;
        Ok(heads
            .into_iter()
            .map(|id| (tape.value(id).clone(), tape.tangent(id).expect("dual").clone()))
            .collect())
    }

    /// Closed-form parameter count: Σ (fan_in + 1)·fan_out plus layer-norm
    /// gains and biases on hidden layers.
    pub fn parameter_count(&self) -> usize {
        let layer_count = |l: &Layer| l.w.len() + l.b.len() + l.ln.map_or(0, |(g, b)| g.len() + b.len());
        self.trunk.iter().map(layer_count).sum::<usize>()
            + self
                .heads
                .iter()
                .map(|h| h.branch.iter().map(layer_count).sum::<usize>() + layer_count(&h.out))
                .sum::<usize>()
    }
}

/// Epoch seed derivation used by the trainers (splitmix-style spread).
pub fn epoch_seed(run_seed: u64, epoch: usize) -> u64 {
    let mut z = run_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

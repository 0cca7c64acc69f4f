use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::registry::{ParamGroup, ParamRegistry, TrainableSet};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::numerics::{Graph, NodeId, Tensor};

const LN_EPS: f64 = 1e-5;
/// Fixed first-order pre-emphasis applied to raw waveforms.
pub const PRE_EMPHASIS: f64 = 0.97;

/// Where a forward pass starts. Later stages take a cached representation
/// produced by [`Network::features`] so frozen prefixes are not recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Raw waveform, `[delta, 1]`.
    Waveform,
    /// Post-convolution tokens with positional encodings, `[tokens, d]`.
    Tokens,
    /// Back-End hidden activation, `[1, head_hidden]`.
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logits {
    pub real: f64,
    pub fake: f64,
}

impl Logits {
    /// `logit_fake - logit_real`; higher means more likely fake.
    pub fn score(self) -> f64 {
        self.fake - self.real
    }
}

/// Gradients for the trainable subset, aligned with registry entries.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub params: Vec<Option<Tensor>>,
    pub prompt: Option<Tensor>,
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1: (usize, usize),
    wq: (usize, usize),
    wk: (usize, usize),
    wv: (usize, usize),
    wo: (usize, usize),
    ln2: (usize, usize),
    ff1: (usize, usize),
    ff2: (usize, usize),
}

#[derive(Debug, Clone)]
struct Layout {
    specs: Vec<(String, Vec<usize>, ParamGroup)>,
    conv: Vec<(usize, usize)>,
    layers: Vec<LayerIdx>,
    final_ln: (usize, usize),
    head: (usize, usize),
    last: (usize, usize),
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, shape: Vec<usize>, group| {
            specs.push((name, shape, group));
            specs.len() - 1
        };
        let fe = ParamGroup::Frontend;
        let d = cfg.d;

        let mut conv = Vec::new();
        let mut c_in = 1;
        for (i, c) in cfg.conv.iter().enumerate() {
            let w = add(
                format!("frontend.conv{i}.weight"),
                vec![c.out_channels, c_in, c.kernel],
                fe,
            );
            let b = add(format!("frontend.conv{i}.bias"), vec![c.out_channels], fe);
            conv.push((w, b));
            c_in = c.out_channels;
        }

        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let p = format!("frontend.layer{l}");
            let mut pair = |a: &str, sa: Vec<usize>, b: &str, sb: Vec<usize>| {
                (
                    add(format!("{p}.{a}"), sa, fe),
                    add(format!("{p}.{b}"), sb, fe),
                )
            };
            layers.push(LayerIdx {
                ln1: pair("ln1.gamma", vec![d], "ln1.beta", vec![d]),
                wq: pair("attn.wq", vec![d, d], "attn.bq", vec![d]),
                wk: pair("attn.wk", vec![d, d], "attn.bk", vec![d]),
                wv: pair("attn.wv", vec![d, d], "attn.bv", vec![d]),
                wo: pair("attn.wo", vec![d, d], "attn.bo", vec![d]),
                ln2: pair("ln2.gamma", vec![d], "ln2.beta", vec![d]),
                ff1: pair(
                    "ffn.w1",
                    vec![d, cfg.ff_hidden],
                    "ffn.b1",
                    vec![cfg.ff_hidden],
                ),
                ff2: pair("ffn.w2", vec![cfg.ff_hidden, d], "ffn.b2", vec![d]),
            });
        }
        let final_ln = (
            add("frontend.final_ln.gamma".into(), vec![d], fe),
            add("frontend.final_ln.beta".into(), vec![d], fe),
        );
        let head = (
            add(
                "backend.head.weight".into(),
                vec![d, cfg.head_hidden],
                ParamGroup::BackendHead,
            ),
            add(
                "backend.head.bias".into(),
                vec![cfg.head_hidden],
                ParamGroup::BackendHead,
            ),
        );
        let last = (
            add(
                "backend.last.weight".into(),
                vec![cfg.head_hidden, 2],
                ParamGroup::BackendLast,
            ),
            add("backend.last.bias".into(), vec![2], ParamGroup::BackendLast),
        );
        Self {
            specs,
            conv,
            layers,
            final_ln,
            head,
            last,
        }
    }
}

fn sinusoidal_table(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data[t * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(len, d, data).expect("positive sizes")
}

/// Leaf nodes for one registry bound into a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub params: Vec<NodeId>,
    pub prompt: Option<NodeId>,
}

/// Front-End (conv token extractor + pre-norm transformer encoder) followed
/// by a Back-End (mean pool over real tokens, hidden layer, final linear
/// layer with two logits).
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    layout: Layout,
    positions: Tensor,
}

/// Builds the network description and a freshly initialized registry.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<(Network, ParamRegistry)> {
    let net = Network::new(config.clone())?;
    let registry = net.init_registry(seed)?;
    Ok((net, registry))
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let positions = sinusoidal_table(config.token_count(), config.d);
        Ok(Self {
            config,
            layout,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Names, shapes and groups of every parameter, in registry order.
    pub fn param_specs(&self) -> impl Iterator<Item = (&str, &[usize], ParamGroup)> {
        self.layout
            .specs
            .iter()
            .map(|(n, s, g)| (n.as_str(), s.as_slice(), *g))
    }

    fn init_registry(&self, seed: u64) -> Result<ParamRegistry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = ParamRegistry::new();
        for (name, shape, group) in &self.layout.specs {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".gamma") {
                vec![1.0; n]
            } else if shape.len() == 1 {
                vec![0.0; n]
            } else {
                // fan-in: every dim but the output one
                let fan_in = if shape.len() == 3 {
                    shape[1] * shape[2]
                } else {
                    shape[0]
                };
                let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("finite std");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            };
            reg.push(name.clone(), Tensor::new(shape.clone(), data)?, *group)?;
        }
        Ok(reg)
    }

    /// Checks that a registry (e.g. read from a checkpoint) matches this
    /// network's layout.
    pub fn check_registry(&self, reg: &ParamRegistry) -> Result<()> {
        if reg.len() != self.layout.specs.len() {
            return Err(Error::InvalidArgument(format!(
                "registry has {} parameters, network expects {}",
                reg.len(),
                self.layout.specs.len()
            )));
        }
        for (p, (name, shape, group)) in reg.entries().iter().zip(&self.layout.specs) {
            if &p.name != name || p.value.shape() != shape.as_slice() || p.group != *group {
                return Err(Error::InvalidArgument(format!(
                    "parameter `{}` {:?} does not match expected `{name}` {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        if let Some(p) = reg.prompt() {
            if p.d() != self.config.d {
                return Err(Error::ShapeMismatch {
                    op: "prompt",
                    lhs: p.values().shape().to_vec(),
                    rhs: vec![self.config.d],
                });
            }
        }
        Ok(())
    }

    pub fn bind<'a>(
        &self,
        g: &mut Graph<'a>,
        reg: &'a ParamRegistry,
        trainable: &TrainableSet,
    ) -> Result<Bound> {
        self.check_registry(reg)?;
        let params = reg
            .entries()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if trainable.is_trainable(i) {
                    g.param(&p.value)
                } else {
                    g.constant(&p.value)
                }
            })
            .collect();
        let prompt = reg.prompt().map(|p| {
            if trainable.prompt {
                g.param(p.values())
            } else {
                g.constant(p.values())
            }
        });
        Ok(Bound { params, prompt })
    }

    /// Pre-emphasized network input `[delta, 1]`.
    pub fn waveform_tensor(&self, waveform: &[f64]) -> Result<Tensor> {
        if waveform.len() != self.config.delta {
            return Err(Error::InvalidArgument(format!(
                "waveform has {} samples, model expects {}",
                waveform.len(),
                self.config.delta
            )));
        }
        let mut x = waveform.to_vec();
        for t in (1..x.len()).rev() {
            x[t] -= PRE_EMPHASIS * x[t - 1];
        }
        Tensor::matrix(x.len(), 1, x)
    }

    fn linear(
        &self,
        g: &mut Graph<'_>,
        b: &Bound,
        x: NodeId,
        (w, bias): (usize, usize),
    ) -> Result<NodeId> {
        let y = g.matmul(x, b.params[w])?;
        g.add(y, b.params[bias])
    }

    fn layernorm(
        &self,
        g: &mut Graph<'_>,
        b: &Bound,
        x: NodeId,
        (gamma, beta): (usize, usize),
    ) -> Result<NodeId> {
        g.layernorm(x, b.params[gamma], b.params[beta], LN_EPS)
    }

    fn conv_tokens(&self, g: &mut Graph<'_>, b: &Bound, wave: NodeId) -> Result<NodeId> {
        let mut x = wave;
        for (layer, &(w, bias)) in self.config.conv.iter().zip(&self.layout.conv) {
            let y = g.conv1d(x, b.params[w], b.params[bias], layer.stride)?;
            x = g.gelu(y)?;
        }
        Ok(x)
    }

    fn tokens(&self, g: &mut Graph<'_>, b: &Bound, wave: NodeId) -> Result<NodeId> {
        let x = self.conv_tokens(g, b, wave)?;
        g.embedding_add(x, &self.positions)
    }

    fn block(&self, g: &mut Graph<'_>, b: &Bound, l: &LayerIdx, x: NodeId) -> Result<NodeId> {
        let h = self.layernorm(g, b, x, l.ln1)?;
        let q = self.linear(g, b, h, l.wq)?;
        let k = self.linear(g, b, h, l.wk)?;
        let v = self.linear(g, b, h, l.wv)?;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        for i in 0..self.config.n_heads {
            let (qh, kh, vh) = if self.config.n_heads == 1 {
                (q, k, v)
            } else {
                let (s, e) = (i * dh, (i + 1) * dh);
                (
                    g.slice_cols(q, s, e)?,
                    g.slice_cols(k, s, e)?,
                    g.slice_cols(v, s, e)?,
                )
            };
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.mul_scalar(scores, scale)?;
            let attn = g.softmax(scores)?;
            heads.push(g.matmul(attn, vh)?);
        }
        let o = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        let o = self.linear(g, b, o, l.wo)?;
        let x = g.add(x, o)?;
        let h = self.layernorm(g, b, x, l.ln2)?;
        let f = self.linear(g, b, h, l.ff1)?;
        let f = g.gelu(f)?;
        let f = self.linear(g, b, f, l.ff2)?;
        g.add(x, f)
    }

    /// Prepends the prompt, runs the encoder and mean-pools the real tokens.
    fn encode(&self, g: &mut Graph<'_>, b: &Bound, tokens: NodeId) -> Result<NodeId> {
        let n_real = g.value(tokens).shape()[0];
        let mut x = tokens;
        let mut n_p = 0;
        if let Some(p) = b.prompt {
            n_p = g.value(p).shape()[1];
            let rows = g.transpose(p)?;
            x = g.concat_rows(&[rows, x])?;
        }
        for l in &self.layout.layers {
            x = self.block(g, b, l, x)?;
        }
        x = self.layernorm(g, b, x, self.layout.final_ln)?;
        if n_p > 0 {
            x = g.slice_rows(x, n_p, n_p + n_real)?;
        }
        g.mean_pool(x)
    }

    fn hidden(&self, g: &mut Graph<'_>, b: &Bound, pooled: NodeId) -> Result<NodeId> {
        let h = self.linear(g, b, pooled, self.layout.head)?;
        g.gelu(h)
    }

    /// Logits `[1, 2]` from an input at `stage`.
    pub fn forward_from(
        &self,
        g: &mut Graph<'_>,
        b: &Bound,
        stage: Stage,
        input: NodeId,
    ) -> Result<NodeId> {
        let hidden = match stage {
            Stage::Waveform => {
                let t = self.tokens(g, b, input)?;
                let pooled = self.encode(g, b, t)?;
                self.hidden(g, b, pooled)?
            }
            Stage::Tokens => {
                let pooled = self.encode(g, b, input)?;
                self.hidden(g, b, pooled)?
            }
            Stage::Hidden => input,
        };
        self.linear(g, b, hidden, self.layout.last)
    }

    fn check_stage_input(&self, stage: Stage, input: &Tensor) -> Result<()> {
        let expected = match stage {
            Stage::Waveform => vec![self.config.delta, 1],
            Stage::Tokens => vec![self.config.token_count(), self.config.d],
            Stage::Hidden => vec![1, self.config.head_hidden],
        };
        if input.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "stage_input",
                lhs: input.shape().to_vec(),
                rhs: expected,
            });
        }
        Ok(())
    }

    /// Computes the frozen representation of a waveform at `stage`.
    pub fn features(&self, reg: &ParamRegistry, waveform: &[f64], stage: Stage) -> Result<Tensor> {
        let wave = self.waveform_tensor(waveform)?;
        if stage == Stage::Waveform {
            return Ok(wave);
        }
        let mut g = Graph::new();
        let b = self.bind(&mut g, reg, &TrainableSet::frozen(reg))?;
        let w = g.leaf(wave, false);
        let out = match stage {
            Stage::Tokens => self.tokens(&mut g, &b, w)?,
            _ => {
                let t = self.tokens(&mut g, &b, w)?;
                let pooled = self.encode(&mut g, &b, t)?;
                self.hidden(&mut g, &b, pooled)?
            }
        };
        g.ensure_finite(out)?;
        Ok(g.value(out).clone())
    }

    /// Logits for one input at `stage`.
    pub fn logits_from(&self, reg: &ParamRegistry, stage: Stage, input: &Tensor) -> Result<Logits> {
        self.check_stage_input(stage, input)?;
        let mut g = Graph::new();
        let b = self.bind(&mut g, reg, &TrainableSet::frozen(reg))?;
        let x = g.constant(input);
        let out = self.forward_from(&mut g, &b, stage, x)?;
        g.ensure_finite(out)?;
        let v = g.value(out).data();
        Ok(Logits {
            real: v[0],
            fake: v[1],
        })
    }

    /// `f(x)`: the two logits for a raw waveform.
    pub fn forward_model(&self, reg: &ParamRegistry, waveform: &[f64]) -> Result<Logits> {
        let wave = self.waveform_tensor(waveform)?;
        self.logits_from(reg, Stage::Waveform, &wave)
    }

    /// Mean class-weighted cross-entropy and gradients of the trainable set
    /// over a batch of inputs at `stage`.
    pub fn loss_and_grads(
        &self,
        reg: &ParamRegistry,
        trainable: &TrainableSet,
        stage: Stage,
        inputs: &[&Tensor],
        labels: &[Label],
        class_weights: (f64, f64),
    ) -> Result<(f64, ParamGrads)> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, reg, trainable)?;
        let loss = self.batch_loss_node(&mut g, &b, stage, inputs, labels, class_weights)?;
        g.ensure_finite(loss)?;
        let value = g.value(loss).item();
        let mut grads = g.backward(loss)?;
        let params = b
            .params
            .iter()
            .enumerate()
            .map(|(i, &id)| trainable.is_trainable(i).then(|| grads.take(id)))
            .collect();
        let prompt = match (b.prompt, trainable.prompt) {
            (Some(id), true) => Some(grads.take(id)),
            _ => None,
        };
        Ok((value, ParamGrads { params, prompt }))
    }

    /// Loss only; every parameter frozen.
    pub fn batch_loss(
        &self,
        reg: &ParamRegistry,
        stage: Stage,
        inputs: &[&Tensor],
        labels: &[Label],
        class_weights: (f64, f64),
    ) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, reg, &TrainableSet::frozen(reg))?;
        let loss = self.batch_loss_node(&mut g, &b, stage, inputs, labels, class_weights)?;
        g.ensure_finite(loss)?;
        Ok(g.value(loss).item())
    }

    fn batch_loss_node<'a>(
        &self,
        g: &mut Graph<'a>,
        b: &Bound,
        stage: Stage,
        inputs: &[&'a Tensor],
        labels: &[Label],
        (w_real, w_fake): (f64, f64),
    ) -> Result<NodeId> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "batch needs matching non-empty inputs/labels, got {}/{}",
                inputs.len(),
                labels.len()
            )));
        }
        let mut rows = Vec::with_capacity(inputs.len());
        for &x in inputs {
            self.check_stage_input(stage, x)?;
            let node = g.constant(x);
            rows.push(self.forward_from(g, b, stage, node)?);
        }
        let logits = if rows.len() == 1 {
            rows[0]
        } else {
            g.concat_rows(&rows)?
        };
        let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        let weights: Vec<f64> = labels
            .iter()
            .map(|l| match l {
                Label::Real => w_real,
                Label::Fake => w_fake,
            })
            .collect();
        g.cross_entropy(logits, &idx, &weights)
    }

    /// Mean and standard deviation over every coordinate of the
    /// post-convolution token activations (before positional encoding).
    pub fn token_stats(&self, reg: &ParamRegistry, waveforms: &[&[f64]]) -> Result<(f64, f64)> {
        if waveforms.is_empty() {
            return Err(Error::InvalidArgument(
                "token statistics need at least one waveform".into(),
            ));
        }
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0usize;
        for w in waveforms {
            let mut g = Graph::new();
            let b = self.bind(&mut g, reg, &TrainableSet::frozen(reg))?;
            let x = g.leaf(self.waveform_tensor(w)?, false);
            let t = self.conv_tokens(&mut g, &b, x)?;
            for &v in g.value(t).data() {
                sum += v;
                sq += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok((mean, var.sqrt()))
    }
}

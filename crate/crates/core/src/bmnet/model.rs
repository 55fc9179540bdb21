use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{BundleKind, ModelBundle};
use crate::dsp::{WindowPlan, LOCAL_SEG_SAMPLES};
use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamId, ParamStore, Tensor, Var, LOGIT_CLAMP};

/// Architecture of the channel-level CNN-transformer detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModelConfig {
    pub window_len_s: usize,
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub fc1: usize,
    pub out_classes: usize,
    pub dropout_p: f64,
    pub encoder_layers: usize,
    /// Multiplier applied to raw samples (µV) before the first convolution.
    pub input_scale: f64,
    pub layer_norm_eps: f64,
}

impl Default for ChannelModelConfig {
    fn default() -> Self {
        ChannelModelConfig {
            window_len_s: 1,
            conv_filters: vec![8, 16, 32, 64, 128],
            kernel_size: 3,
            d_model: 128,
            heads: 8,
            ffn_hidden: 1024,
            fc1: 100,
            out_classes: 2,
            dropout_p: 0.5,
            encoder_layers: 1,
            input_scale: 0.01,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ChannelModelConfig {
    pub fn with_window(window_len_s: usize) -> Self {
        ChannelModelConfig {
            window_len_s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        WindowPlan::new(self.window_len_s)?;
        if self.conv_filters.len() != 5 || self.conv_filters.contains(&0) {
            return Err(Error::Config("conv_filters must list 5 positive widths".into()));
        }
        if self.kernel_size != 3 {
            return Err(Error::Config("only kernel size 3 is supported".into()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.out_classes != 2 {
            return Err(Error::Config("the detector has exactly 2 outputs".into()));
        }
        if self.ffn_hidden == 0 || self.fc1 == 0 || self.encoder_layers == 0 {
            return Err(Error::Config("layer widths and depth must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config("input_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn plan(&self) -> WindowPlan {
        WindowPlan::new(self.window_len_s).expect("validated window length")
    }

    /// Width of a flattened CNN output per token.
    fn flat_width(&self) -> usize {
        (LOCAL_SEG_SAMPLES >> self.conv_filters.len()) * self.conv_filters[4]
    }
}

/// Dirichlet concentrations `(α_artifact, α_background)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletOutput {
    pub alpha: [f64; 2],
    pub alpha0: f64,
}

impl DirichletOutput {
    pub fn from_logits(z: [f64; 2]) -> Self {
        let alpha = z.map(|v| v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp());
        DirichletOutput {
            alpha,
            alpha0: alpha[0] + alpha[1],
        }
    }

    /// Dirichlet mean of the artifact class.
    pub fn p_artifact(&self) -> f64 {
        self.alpha[0] / self.alpha0
    }

    pub fn p_background(&self) -> f64 {
        self.alpha[1] / self.alpha0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerIds {
    conv: Vec<(ParamId, ParamId)>,
    embed: (ParamId, ParamId),
    encoder: Vec<EncoderIds>,
    fc1: (ParamId, ParamId),
    fc2: (ParamId, ParamId),
}

/// Channel-level detector: per-token CNN, linear embedding, sinusoidal
/// positions, transformer encoder, mean pooling, FC(100)-ReLU-dropout-FC(2).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    cfg: ChannelModelConfig,
    params: ParamStore,
    ids: LayerIds,
}

fn he_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Builds a freshly initialized model. Parameter names and order depend only
/// on the configuration.
pub fn build_model(cfg: &ChannelModelConfig, seed: u64) -> Result<ChannelModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::new();
    let lin = |ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
        let w = ps.add(format!("{name}.w"), he_uniform(rng, &[i, o], i));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[o]));
        (w, b)
    };
    let mut conv = Vec::new();
    let mut cin = 1;
    for (i, &cout) in cfg.conv_filters.iter().enumerate() {
        let w = ps.add(format!("conv{i}.w"), he_uniform(&mut rng, &[3, cin, cout], 3 * cin));
        let b = ps.add(format!("conv{i}.b"), Tensor::zeros(&[cout]));
        conv.push((w, b));
        cin = cout;
    }
    let d = cfg.d_model;
    let embed = lin(&mut ps, &mut rng, "embed", cfg.flat_width(), d);
    let mut encoder = Vec::new();
    for l in 0..cfg.encoder_layers {
        let p = format!("enc{l}");
        let (wq, bq) = lin(&mut ps, &mut rng, &format!("{p}.q"), d, d);
        let (wk, bk) = lin(&mut ps, &mut rng, &format!("{p}.k"), d, d);
        let (wv, bv) = lin(&mut ps, &mut rng, &format!("{p}.v"), d, d);
        let (wo, bo) = lin(&mut ps, &mut rng, &format!("{p}.o"), d, d);
        let ln1_g = ps.add(format!("{p}.ln1.g"), Tensor::filled(&[d], 1.0));
        let ln1_b = ps.add(format!("{p}.ln1.b"), Tensor::zeros(&[d]));
        let (ff1_w, ff1_b) = lin(&mut ps, &mut rng, &format!("{p}.ff1"), d, cfg.ffn_hidden);
        let (ff2_w, ff2_b) = lin(&mut ps, &mut rng, &format!("{p}.ff2"), cfg.ffn_hidden, d);
        let ln2_g = ps.add(format!("{p}.ln2.g"), Tensor::filled(&[d], 1.0));
        let ln2_b = ps.add(format!("{p}.ln2.b"), Tensor::zeros(&[d]));
        encoder.push(EncoderIds {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln1_g,
            ln1_b,
            ff1_w,
            ff1_b,
            ff2_w,
            ff2_b,
            ln2_g,
            ln2_b,
        });
    }
    let fc1 = lin(&mut ps, &mut rng, "fc1", d, cfg.fc1);
    let fc2 = lin(&mut ps, &mut rng, "fc2", cfg.fc1, cfg.out_classes);
    Ok(ChannelModel {
        cfg: cfg.clone(),
        params: ps,
        ids: LayerIds {
            conv,
            embed,
            encoder,
            fc1,
            fc2,
        },
    })
}

/// Lower bound on the parameter count implied by `cfg` (weights only).
fn min_param_count(cfg: &ChannelModelConfig) -> u128 {
    let d = cfg.d_model as u128;
    let mut n: u128 = 0;
    let mut cin: u128 = 1;
    for &c in &cfg.conv_filters {
        n = n.saturating_add((3 * cin).saturating_mul(c as u128));
        cin = c as u128;
    }
    let per_layer = (4 * d).saturating_mul(d).saturating_add((2 * d).saturating_mul(cfg.ffn_hidden as u128));
    n = n.saturating_add(per_layer.saturating_mul(cfg.encoder_layers as u128));
    n.saturating_add(d.saturating_mul(cfg.fc1 as u128))
}

/// Fixed sinusoidal position table `[n, d]`.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut pe = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let expo = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(expo);
            pe[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![n, d], pe).expect("shape matches")
}

/// Windows per inference chunk.
const PREDICT_CHUNK: usize = 128;

impl ChannelModel {
    pub fn config(&self) -> &ChannelModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn plan(&self) -> WindowPlan {
        self.cfg.plan()
    }

    pub fn window_samples(&self) -> usize {
        self.plan().window_samples()
    }

    pub fn n_tokens(&self) -> usize {
        self.plan().n_segments()
    }

    /// Replaces every parameter value with the store's entry of the same
    /// name. Shapes must match.
    pub fn load_values(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        if named.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} tensors supplied for {} parameters",
                named.len(),
                self.params.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, t) in named {
            if !seen.insert(name.as_str()) {
                return Err(Error::Shape(format!("parameter {name} supplied twice")));
            }
            let id = self
                .params
                .id(name)
                .ok_or_else(|| Error::Shape(format!("unknown parameter {name}")))?;
            if self.params.value(id).shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "parameter {name}: stored {:?}, expected {:?}",
                    t.shape(),
                    self.params.value(id).shape()
                )));
            }
            *self.params.value_mut(id) = t.clone();
        }
        Ok(())
    }

    /// Packs the architecture and every parameter into a model bundle.
    pub fn to_bundle(&self) -> Result<ModelBundle> {
        let config = serde_json::to_value(&self.cfg)
            .map_err(|e| Error::Bundle(format!("config encoding: {e}")))?;
        let mut b = ModelBundle::new(BundleKind::ChannelModel, config);
        for p in self.params.iter() {
            b.push(p.name.clone(), p.value.clone());
        }
        Ok(b)
    }

    /// Rebuilds a model from a bundle, checking names and shapes against the
    /// stored architecture.
    pub fn from_bundle(b: &ModelBundle) -> Result<Self> {
        if b.kind != BundleKind::ChannelModel {
            return Err(Error::Bundle("bundle does not hold a channel model".into()));
        }
        let cfg: ChannelModelConfig = serde_json::from_value(b.config.clone())
            .map_err(|e| Error::Bundle(format!("channel model config: {e}")))?;
        // A corrupted manifest could ask for a huge architecture; refuse
        // before allocating if the stored tensors cannot possibly fill it.
        let stored: u128 = b.tensors.iter().map(|t| t.tensor.len() as u128).sum();
        if min_param_count(&cfg) > stored {
            return Err(Error::Bundle("architecture larger than stored parameters".into()));
        }
        let mut m = build_model(&cfg, 0).map_err(|e| Error::Bundle(e.to_string()))?;
        let named: Vec<(String, Tensor)> = b
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.tensor.clone()))
            .collect();
        m.load_values(&named).map_err(|e| Error::Bundle(e.to_string()))?;
        Ok(m)
    }

    /// Zeroes the output layer so every window maps to logits (0, 0).
    pub fn zero_output_layer(&mut self) {
        for id in [self.ids.fc2.0, self.ids.fc2.1] {
            self.params.value_mut(id).data_mut().fill(0.0);
        }
    }

    /// Records the forward pass for a batch of windows and returns the
    /// `[B, 2]` logit node. Parameters are bound as differentiable leaves
    /// when `track_params` is set, as constants otherwise.
    pub fn forward_graph(&self, g: &mut Graph, windows: &[&[f64]], track_params: bool) -> Result<Var> {
        let plan = self.plan();
        let ws = plan.window_samples();
        let n = plan.n_segments();
        let seg = plan.segment_samples();
        let hop = plan.hop_samples();
        if windows.is_empty() {
            return Err(Error::Empty("no windows to evaluate".into()));
        }
        let b = windows.len();
        let mut tokens = Vec::with_capacity(b * n * seg);
        for w in windows {
            if w.len() != ws {
                return Err(Error::PlanMismatch(format!(
                    "window has {} samples, model expects {ws}",
                    w.len()
                )));
            }
            for t in 0..n {
                tokens.extend(w[t * hop..t * hop + seg].iter().map(|v| v * self.cfg.input_scale));
            }
        }
        let bind = |g: &mut Graph, id: ParamId| {
            if track_params {
                g.param(&self.params, id)
            } else {
                g.input(self.params.value(id).clone())
            }
        };

        let mut x = g.input(Tensor::new(vec![b * n, seg, 1], tokens)?);
        for &(w, bias) in &self.ids.conv {
            let wv = bind(g, w);
            let bv = bind(g, bias);
            x = g.conv1d(x, wv, bv)?;
            x = g.relu(x);
            x = g.maxpool(x)?;
        }
        x = g.reshape(x, &[b * n, self.cfg.flat_width()])?;
        let (ew, eb) = (bind(g, self.ids.embed.0), bind(g, self.ids.embed.1));
        x = g.linear(x, ew, Some(eb))?;

        let d = self.cfg.d_model;
        let pe = positional_encoding(n, d);
        let mut tiled = Vec::with_capacity(b * n * d);
        for _ in 0..b {
            tiled.extend_from_slice(pe.data());
        }
        let pe = g.input(Tensor::new(vec![b * n, d], tiled)?);
        x = g.add(x, pe)?;

        for enc in &self.ids.encoder {
            let lin = |g: &mut Graph, x: Var, w: ParamId, bias: ParamId| {
                let wv = bind(g, w);
                let bv = bind(g, bias);
                g.linear(x, wv, Some(bv))
            };
            let q = lin(g, x, enc.wq, enc.bq)?;
            let k = lin(g, x, enc.wk, enc.bk)?;
            let v = lin(g, x, enc.wv, enc.bv)?;
            let a = g.attention(q, k, v, n, self.cfg.heads)?;
            let a = lin(g, a, enc.wo, enc.bo)?;
            let r = g.add(x, a)?;
            let (g1, b1) = (bind(g, enc.ln1_g), bind(g, enc.ln1_b));
            x = g.layer_norm(r, g1, b1, self.cfg.layer_norm_eps)?;
            let h = lin(g, x, enc.ff1_w, enc.ff1_b)?;
            let h = g.relu(h);
            let h = lin(g, h, enc.ff2_w, enc.ff2_b)?;
            let r = g.add(x, h)?;
            let (g2, b2) = (bind(g, enc.ln2_g), bind(g, enc.ln2_b));
            x = g.layer_norm(r, g2, b2, self.cfg.layer_norm_eps)?;
        }

        x = g.mean_pool(x, n)?;
        let (w1, b1) = (bind(g, self.ids.fc1.0), bind(g, self.ids.fc1.1));
        x = g.linear(x, w1, Some(b1))?;
        x = g.relu(x);
        x = g.dropout(x, self.cfg.dropout_p)?;
        let (w2, b2) = (bind(g, self.ids.fc2.0), bind(g, self.ids.fc2.1));
        g.linear(x, w2, Some(b2))
    }

    /// Inference logits for a batch of windows, `[B][2]`.
    pub fn logits(&self, windows: &[&[f64]]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(PREDICT_CHUNK) {
            let mut g = Graph::new();
            let z = self.forward_graph(&mut g, chunk, false)?;
            out.extend(g.value(z).data().chunks_exact(2).map(|c| [c[0], c[1]]));
        }
        Ok(out)
    }

    /// Dirichlet output for one window (dropout off).
    pub fn forward(&self, window: &[f64]) -> Result<DirichletOutput> {
        let z = self.logits(&[window])?;
        Ok(DirichletOutput::from_logits(z[0]))
    }

    /// Artifact probability `α_artifact / α₀` of one window.
    pub fn predict_proba(&self, window: &[f64]) -> Result<f64> {
        Ok(self.forward(window)?.p_artifact())
    }

    /// Artifact probabilities for many windows.
    pub fn predict_proba_batch(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self
            .logits(windows)?
            .into_iter()
            .map(|z| DirichletOutput::from_logits(z).p_artifact())
            .collect())
    }
}

/// Anything that maps single-channel windows to artifact probabilities.
pub trait ChannelScorer {
    /// Expected window length in samples (128 Hz).
    fn window_samples(&self) -> usize;
    fn score_windows(&self, windows: &[&[f64]]) -> Result<Vec<f64>>;
}

impl ChannelScorer for ChannelModel {
    fn window_samples(&self) -> usize {
        ChannelModel::window_samples(self)
    }

    fn score_windows(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        self.predict_proba_batch(windows)
    }
}

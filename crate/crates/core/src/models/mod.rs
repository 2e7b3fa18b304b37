//! LSTM and Transformer-encoder sequence classifiers built on [`crate::nn`].
//!
//! A model is a [`ModelConfig`] plus a [`ParameterSet`]. All entry points take
//! batches of equal-length sequences; window samples are 20×26.

mod batch;
mod lstm;
mod transformer;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::SequenceBatch;

use crate::dataset::{GestureLabel, WindowSample, FRAME_DIM, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::ops::softmax;
use crate::nn::{GradientSet, ParameterSet, Tensor};
use crate::seed::{derive_seed, rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Transformer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Transformer => "transformer",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(ModelKind::Lstm),
            "transformer" => Ok(ModelKind::Transformer),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (valid: lstm, transformer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmClassifierConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
}

impl Default for LstmClassifierConfig {
    fn default() -> Self {
        Self {
            input_dim: FRAME_DIM,
            hidden: 128,
            layers: 2,
            classes: NUM_CLASSES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerClassifierConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub feedforward_dim: usize,
    pub classes: usize,
}

impl Default for TransformerClassifierConfig {
    fn default() -> Self {
        Self {
            input_dim: FRAME_DIM,
            d_model: 128,
            heads: 4,
            encoder_layers: 4,
            feedforward_dim: 256,
            classes: NUM_CLASSES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Lstm(LstmClassifierConfig),
    Transformer(TransformerClassifierConfig),
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Glorot-uniform with the given fan-in and fan-out.
    Glorot(usize, usize),
    /// Uniform on ±limit.
    Uniform(f64),
    Zeros,
    Ones,
    /// LSTM gate bias: zeros except the forget block, which is 1.
    ForgetBias(usize),
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lstm => ModelConfig::Lstm(Default::default()),
            ModelKind::Transformer => ModelConfig::Transformer(Default::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Lstm(_) => ModelKind::Lstm,
            ModelConfig::Transformer(_) => ModelKind::Transformer,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelConfig::Lstm(c) => c.input_dim,
            ModelConfig::Transformer(c) => c.input_dim,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelConfig::Lstm(c) => c.classes,
            ModelConfig::Transformer(c) => c.classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{} model: `{name}` must be >= 1", self.kind())))
            } else {
                Ok(())
            }
        };
        match self {
            ModelConfig::Lstm(c) => {
                positive("input_dim", c.input_dim)?;
                positive("hidden", c.hidden)?;
                positive("layers", c.layers)?;
            }
            ModelConfig::Transformer(c) => {
                positive("input_dim", c.input_dim)?;
                positive("d_model", c.d_model)?;
                positive("heads", c.heads)?;
                positive("encoder_layers", c.encoder_layers)?;
                positive("feedforward_dim", c.feedforward_dim)?;
                if c.d_model % c.heads != 0 {
                    return Err(Error::Config(format!(
                        "transformer: heads ({}) must divide d_model ({})",
                        c.heads, c.d_model
                    )));
                }
            }
        }
        if self.classes() < 2 {
            return Err(Error::Config("model needs at least 2 classes".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<(String, Vec<usize>, Init)> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
        let (top, classes, head_init) = match self {
            ModelConfig::Lstm(c) => {
                let h = c.hidden;
                for l in 0..c.layers {
                    let input = if l == 0 { c.input_dim } else { h };
                    push(format!("lstm{l}.w_x"), vec![input, 4 * h], Init::Glorot(input, 4 * h));
                    let lim = 1.0 / (h as f64).sqrt();
                    push(format!("lstm{l}.w_h"), vec![h, 4 * h], Init::Uniform(lim));
                    push(format!("lstm{l}.b"), vec![4 * h], Init::ForgetBias(h));
                }
                (h, c.classes, Init::Glorot(h, c.classes))
            }
            ModelConfig::Transformer(c) => {
                let (d, f) = (c.d_model, c.feedforward_dim);
                push("input.w".into(), vec![c.input_dim, d], Init::Glorot(c.input_dim, d));
                push("input.b".into(), vec![d], Init::Zeros);
                for l in 0..c.encoder_layers {
                    let p = format!("enc{l}");
                    for m in ["wq", "bq", "wk", "wv", "bv", "wo", "bo"] {
                        if m.starts_with('w') {
                            push(format!("{p}.attn.{m}"), vec![d, d], Init::Glorot(d, d));
                        } else {
                            push(format!("{p}.attn.{m}"), vec![d], Init::Zeros);
                        }
                    }
                    push(format!("{p}.ln1.gamma"), vec![d], Init::Ones);
                    push(format!("{p}.ln1.beta"), vec![d], Init::Zeros);
                    push(format!("{p}.ff1.w"), vec![d, f], Init::Glorot(d, f));
                    push(format!("{p}.ff1.b"), vec![f], Init::Zeros);
                    push(format!("{p}.ff2.w"), vec![f, d], Init::Glorot(f, d));
                    push(format!("{p}.ff2.b"), vec![d], Init::Zeros);
                    push(format!("{p}.ln2.gamma"), vec![d], Init::Ones);
                    push(format!("{p}.ln2.beta"), vec![d], Init::Zeros);
                }
                // Pooled post-norm features have unit scale per dimension, so a
                // Glorot head would start with logit spread ~1.4; a zero head
                // starts exactly at the uniform prediction.
                (d, c.classes, Init::Zeros)
            }
        };
        push("head.w".into(), vec![top, classes], head_init);
        push("head.b".into(), vec![classes], Init::Zeros);
        out
    }

    /// Parameter names and shapes in insertion order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layout().into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    /// Checks that `params` has exactly this model's names and shapes, in order.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let expected = self.parameter_shapes();
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "{} model expects {} parameters, got {}",
                self.kind(),
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Config(format!(
                    "{} model expects `{name}` {shape:?}, found `{got_name}` {:?}",
                    self.kind(),
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

fn sample_init(init: Init, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    match init {
        Init::Glorot(fan_in, fan_out) => {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Tensor::from_fn(shape, |_| rng.random_range(-lim..lim))
        }
        Init::Uniform(lim) => Tensor::from_fn(shape, |_| rng.random_range(-lim..lim)),
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::filled(shape, 1.0),
        Init::ForgetBias(h) => Tensor::from_fn(shape, |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }),
    }
}

/// Deterministic initial parameters for `config`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    config.validate()?;
    let mut rng = rng(derive_seed(seed, &[stream::INIT]));
    let mut params = ParameterSet::new();
    for (name, shape, init) in config.layout() {
        params.insert(name, sample_init(init, &shape, &mut rng))?;
    }
    Ok(params)
}

fn check_batch(config: &ModelConfig, batch: &SequenceBatch) -> Result<()> {
    if batch.features() != config.input_dim() {
        return Err(Error::dim(format!(
            "{} model expects {} features per step, batch has {}",
            config.kind(),
            config.input_dim(),
            batch.features()
        )));
    }
    Ok(())
}

/// Logits `[batch, classes]`.
pub fn forward_logits(config: &ModelConfig, params: &ParameterSet, batch: &SequenceBatch) -> Result<Tensor> {
    check_batch(config, batch)?;
    match config {
        ModelConfig::Lstm(c) => Ok(lstm::forward(c, params, batch)?.logits),
        ModelConfig::Transformer(c) => Ok(transformer::forward(c, params, batch)?.logits),
    }
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_gradients(
    config: &ModelConfig,
    params: &ParameterSet,
    batch: &SequenceBatch,
) -> Result<(f64, GradientSet)> {
    check_batch(config, batch)?;
    let labels = batch
        .labels()
        .ok_or_else(|| Error::Config("loss needs a labelled batch".into()))?;
    match config {
        ModelConfig::Lstm(c) => lstm::loss_and_gradients(c, params, batch, labels),
        ModelConfig::Transformer(c) => transformer::loss_and_gradients(c, params, batch, labels),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: GestureLabel,
    pub confidence: f64,
}

/// Argmax of the softmax; ties go to the lowest class index.
pub fn prediction_from_logits(logits: &[f64]) -> Result<Prediction> {
    if logits.len() != NUM_CLASSES {
        return Err(Error::dim(format!(
            "expected {NUM_CLASSES} logits, got {}",
            logits.len()
        )));
    }
    let p = softmax(logits);
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    Ok(Prediction {
        label: GestureLabel::from_index(best).expect("index < NUM_CLASSES"),
        confidence: p[best],
    })
}

pub fn predict(config: &ModelConfig, params: &ParameterSet, window: &WindowSample) -> Result<Prediction> {
    let logits = forward_logits(config, params, &SequenceBatch::from_windows([window])?)?;
    prediction_from_logits(logits.row(0))
}

/// Anything that maps windows to class logits; evaluation is written against
/// this so that trained models and reference predictors share one path.
pub trait Classifier: Sync {
    fn logits(&self, windows: &[&WindowSample]) -> Result<Tensor>;
}

/// Trained or initial parameters together with their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = build_model(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        config.check_params(&params)?;
        Ok(Self { config, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn predict(&self, window: &WindowSample) -> Result<Prediction> {
        predict(&self.config, &self.params, window)
    }
}

/// Windows are scored in chunks to bound cache memory.
const EVAL_CHUNK: usize = 256;

impl Classifier for Model {
    fn logits(&self, windows: &[&WindowSample]) -> Result<Tensor> {
        let classes = self.config.classes();
        let mut data = Vec::with_capacity(windows.len() * classes);
        for chunk in windows.chunks(EVAL_CHUNK) {
            let batch = SequenceBatch::from_windows(chunk.iter().copied())?;
            data.extend(forward_logits(&self.config, &self.params, &batch)?.into_data());
        }
        Tensor::new(vec![windows.len(), classes], data)
    }
}

/// Serialized model: architecture header plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub seed: u64,
    /// Free-form record of how the weights were produced.
    #[serde(default)]
    pub provenance: serde_json::Value,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(model: &Model, seed: u64, provenance: serde_json::Value) -> Self {
        Self {
            kind: model.kind(),
            config: model.config,
            seed,
            provenance,
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.kind != self.config.kind() {
            return Err(Error::Config(format!(
                "checkpoint header says `{}` but config is `{}`",
                self.kind,
                self.config.kind()
            )));
        }
        Model::from_parts(self.config, self.params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

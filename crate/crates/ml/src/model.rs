use crate::mask::build_code_aware_mask;
use crate::{MlError, Result};
use bbdec_core::gf2::BitVec;
use bbdec_core::sim::{DetectorErrorModel, Shot, TimedShot};
use bbdec_nn::graph::sigmoid;
use bbdec_nn::layers::{FeedForward, LayerNorm, MultiHeadAttention};
use bbdec_nn::{checkpoint, Graph, Mode, NodeId, ParamId, ParamStore, Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const INIT_STD: f64 = 0.02;

/// Token vocabulary of the flip embedding.
pub const TOKEN_ZERO: u8 = 0;
pub const TOKEN_ONE: u8 = 1;
pub const TOKEN_PREDICT: u8 = 2;
pub const TOKEN_LATENT: u8 = 3;
const VOCABULARY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Detector slots per layer, including padding.
    pub detectors_per_layer: usize,
    pub logicals: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub code_aware_mask: bool,
}

fn default_dropout() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Full-size configuration: width 256, feed-forward 512, 8 heads, three
    /// encoder and three decoder layers.
    pub fn full(detectors_per_layer: usize, logicals: usize) -> Self {
        ModelConfig {
            d_model: 256,
            d_ff: 512,
            heads: 8,
            encoder_layers: 3,
            decoder_layers: 3,
            detectors_per_layer,
            logicals,
            dropout: 0.1,
            code_aware_mask: true,
        }
    }

    /// Width 32 with one encoder and one decoder layer.
    pub fn toy(detectors_per_layer: usize, logicals: usize) -> Self {
        ModelConfig {
            d_model: 32,
            d_ff: 64,
            heads: 4,
            encoder_layers: 1,
            decoder_layers: 1,
            detectors_per_layer,
            logicals,
            dropout: 0.1,
            code_aware_mask: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(MlError::Config(m));
        if self.d_model == 0 || self.d_ff == 0 || self.heads == 0 {
            return fail("widths and head count must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return fail(format!("{} heads do not divide width {}", self.heads, self.d_model));
        }
        if self.detectors_per_layer == 0 || self.logicals == 0 {
            return fail("detector width and logical count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// What one model iteration does after its encoder step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationKind {
    /// Emit latent vectors for the next iteration.
    Latent,
    /// Predict the logical flips accumulated through noisy round `round`.
    Intermediate { round: usize },
    /// Predict the final logical flips.
    Final,
}

/// Iteration layout for an experiment with `rounds` noisy rounds: one
/// iteration per detector layer, `rounds + 3` in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub rounds: usize,
    /// Iterations `1..=latent_rounds` emit latent vectors instead of
    /// intermediate predictions. Values of `rounds - 1` or more make every
    /// iteration but the last latent.
    pub latent_rounds: usize,
    /// Latent vectors per latent iteration.
    pub latent_outputs: usize,
}

impl IterationPlan {
    pub fn num_iterations(&self) -> usize {
        self.rounds + 3
    }

    pub fn kinds(&self) -> Vec<IterationKind> {
        (0..self.num_iterations())
            .map(|t| {
                if t == self.rounds + 2 {
                    IterationKind::Final
                } else if t >= 1 && t < self.rounds && t > self.latent_rounds {
                    IterationKind::Intermediate { round: t }
                } else {
                    IterationKind::Latent
                }
            })
            .collect()
    }
}

/// Detector layers and targets for a batch of shots, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// Per layer, `size * width` bits.
    pub layers: Vec<Vec<u8>>,
    /// Per noisy round `j` (index 0 to the round count), `size * logicals`
    /// accumulated flips. Empty when the shots carry no timing.
    pub intermediate: Vec<Vec<u8>>,
    /// `size * logicals` final flips.
    pub final_flips: Vec<u8>,
}

impl Batch {
    pub fn from_shots(dem: &DetectorErrorModel, shots: &[Shot]) -> Self {
        let mut layers = vec![Vec::with_capacity(shots.len() * dem.layer_width); dem.num_layers];
        let mut final_flips = Vec::with_capacity(shots.len() * dem.num_logicals);
        for shot in shots {
            for (layer, bits) in layers.iter_mut().zip(dem.layered(&shot.detectors)) {
                layer.extend(bits);
            }
            final_flips.extend(shot.logical_flips.to_bits());
        }
        Batch {
            size: shots.len(),
            layers,
            intermediate: Vec::new(),
            final_flips,
        }
    }

    pub fn from_timed_shots(dem: &DetectorErrorModel, shots: &[TimedShot]) -> Self {
        let plain: Vec<Shot> = shots.iter().map(|s| s.shot.clone()).collect();
        let mut batch = Self::from_shots(dem, &plain);
        let rounds = shots.first().map_or(0, |s| s.intermediate.len());
        batch.intermediate = (0..rounds)
            .map(|j| shots.iter().flat_map(|s| s.intermediate[j].to_bits()).collect())
            .collect();
        batch
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attention: MultiHeadAttention,
    attention_norm: LayerNorm,
    feed_forward: FeedForward,
    output_norm: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attention: MultiHeadAttention,
    self_norm: LayerNorm,
    history_attention: MultiHeadAttention,
    history_norm: LayerNorm,
    memory_attention: MultiHeadAttention,
    memory_norm: LayerNorm,
    feed_forward: FeedForward,
    output_norm: LayerNorm,
}

#[derive(Debug, Clone)]
struct Layout {
    detector_embedding: ParamId,
    detector_positions: ParamId,
    token_embedding: ParamId,
    token_positions: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    readout: ParamId,
}

/// Output of one encoder step: the new memory and the attention-core node of
/// each encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub memory: NodeId,
    pub attention: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `batch * logicals` predicted flips.
    pub bits: Vec<u8>,
    /// `batch * logicals` probabilities that each flip is 1.
    pub probabilities: Vec<f64>,
}

/// Maps a flip probability to a bit; exactly one half predicts a flip.
pub fn threshold(probability: f64) -> u8 {
    (probability >= 0.5) as u8
}

/// Mean over the batch of the summed binary cross-entropy of each
/// prediction against its target.
pub fn bce_loss(probabilities: &[f64], targets: &[u8], batch: usize) -> f64 {
    assert_eq!(probabilities.len(), targets.len());
    let total: f64 = probabilities
        .iter()
        .zip(targets)
        .map(|(&p, &t)| if t == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    total / batch as f64
}

/// Additive mask that lets position `i` attend to positions `0..=i`.
pub fn causal_mask<T: Scalar>(len: usize) -> Tensor<T> {
    let data = (0..len * len)
        .map(|k| if k % len > k / len { T::neg_infinity() } else { T::zero() })
        .collect();
    Tensor::from_vec(&[len, len], data).expect("square mask")
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters: embeddings, linear maps and the readout from
    /// `normal(0, 0.02)`, positional tables and biases zero, layer-norm gain
    /// one.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let d = config.d_model;
        let detector_embedding = p.add("detector_embedding", Tensor::normal(&[2, d], INIT_STD, &mut rng))?;
        let detector_positions = p.add("detector_positions", Tensor::zeros(&[config.detectors_per_layer, d]))?;
        let token_embedding = p.add("token_embedding", Tensor::normal(&[VOCABULARY, d], INIT_STD, &mut rng))?;
        let token_positions = p.add("token_positions", Tensor::zeros(&[config.logicals, d]))?;
        let mut encoder = Vec::new();
        for i in 0..config.encoder_layers {
            let name = format!("encoder.{i}");
            encoder.push(EncoderLayer {
                attention: MultiHeadAttention::new(&mut p, &format!("{name}.attention"), d, config.heads, INIT_STD, &mut rng)?,
                attention_norm: LayerNorm::new(&mut p, &format!("{name}.attention_norm"), d)?,
                feed_forward: FeedForward::new(&mut p, &format!("{name}.feed_forward"), d, config.d_ff, INIT_STD, &mut rng)?,
                output_norm: LayerNorm::new(&mut p, &format!("{name}.output_norm"), d)?,
            });
        }
        let mut decoder = Vec::new();
        for i in 0..config.decoder_layers {
            let name = format!("decoder.{i}");
            let attention = |p: &mut ParamStore<T>, rng: &mut ChaCha8Rng, part: &str| {
                MultiHeadAttention::new(p, &format!("{name}.{part}"), d, config.heads, INIT_STD, rng)
            };
            decoder.push(DecoderLayer {
                self_attention: attention(&mut p, &mut rng, "self_attention")?,
                self_norm: LayerNorm::new(&mut p, &format!("{name}.self_norm"), d)?,
                history_attention: attention(&mut p, &mut rng, "history_attention")?,
                history_norm: LayerNorm::new(&mut p, &format!("{name}.history_norm"), d)?,
                memory_attention: attention(&mut p, &mut rng, "memory_attention")?,
                memory_norm: LayerNorm::new(&mut p, &format!("{name}.memory_norm"), d)?,
                feed_forward: FeedForward::new(&mut p, &format!("{name}.feed_forward"), d, config.d_ff, INIT_STD, &mut rng)?,
                output_norm: LayerNorm::new(&mut p, &format!("{name}.output_norm"), d)?,
            });
        }
        let readout = p.add("readout", Tensor::normal(&[d, 1], INIT_STD, &mut rng))?;
        Ok(Model {
            config,
            params: p,
            layout: Layout {
                detector_embedding,
                detector_positions,
                token_embedding,
                token_positions,
                encoder,
                decoder,
                readout,
            },
        })
    }

    /// Model with the given parameters, which must match `config` by name
    /// and shape.
    pub fn from_params(config: ModelConfig, params: &ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.params.load_from(params)?;
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_values()
    }

    /// Builds a training graph over this model's parameters.
    pub fn graph(&self, mode: Mode) -> Graph<'_, T> {
        Graph::new(&self.params, mode)
    }

    /// Per-layer attention masks for `dem`, or `None` when the model does
    /// not use code-aware masking.
    pub fn masks_for(&self, dem: &DetectorErrorModel) -> Option<Vec<Tensor<T>>> {
        self.config
            .code_aware_mask
            .then(|| build_code_aware_mask(dem).layer_tensors())
    }

    fn embed(&self, g: &mut Graph<T>, table: ParamId, tokens: &[u8]) -> NodeId {
        let t = g.param(table);
        let parts: Vec<_> = tokens.iter().map(|&k| (t, k as usize)).collect();
        g.gather(&parts)
    }

    fn embed_positioned(
        &self,
        g: &mut Graph<T>,
        table: ParamId,
        positions: ParamId,
        tokens: &[u8],
        len: usize,
    ) -> NodeId {
        let e = self.embed(g, table, tokens);
        let pos = g.param(positions);
        let parts: Vec<_> = (0..tokens.len()).map(|i| (pos, i % len)).collect();
        let p = g.gather(&parts);
        g.add(e, p)
    }

    /// Memory before the first detector layer: every slot holds a trivial
    /// detector outcome.
    pub fn initial_memory(&self, g: &mut Graph<T>, batch: usize) -> NodeId {
        let n = self.config.detectors_per_layer;
        let l = &self.layout;
        self.embed_positioned(g, l.detector_embedding, l.detector_positions, &vec![0; batch * n], n)
    }

    /// History before the first iteration: embedded all-zero flips.
    pub fn initial_history(&self, g: &mut Graph<T>, batch: usize) -> NodeId {
        self.flip_history(g, &vec![0; batch * self.config.logicals])
    }

    /// History carrying predicted (or, in training, true) flips.
    pub fn flip_history(&self, g: &mut Graph<T>, bits: &[u8]) -> NodeId {
        let l = &self.layout;
        self.embed_positioned(g, l.token_embedding, l.token_positions, bits, self.config.logicals)
    }

    /// Adds the embedded detector layer to `memory` and applies the encoder
    /// stack.
    pub fn encoder_step(
        &self,
        g: &mut Graph<T>,
        memory: NodeId,
        layer_bits: &[u8],
        batch: usize,
        mask: Option<&Tensor<T>>,
    ) -> EncoderOutput {
        let n = self.config.detectors_per_layer;
        assert_eq!(layer_bits.len(), batch * n, "detector layer has the wrong width");
        let l = &self.layout;
        let input = self.embed_positioned(g, l.detector_embedding, l.detector_positions, layer_bits, n);
        let mut x = g.add(memory, input);
        let mut attention = Vec::new();
        for layer in &self.layout.encoder {
            let (a, core) = layer.attention.forward_traced(g, x, x, batch, mask);
            attention.push(core);
            let a = g.dropout(a);
            let h = g.add(x, a);
            let h = layer.attention_norm.forward(g, h);
            let f = layer.feed_forward.forward(g, h);
            let h2 = g.add(h, f);
            x = layer.output_norm.forward(g, h2);
        }
        EncoderOutput { memory: x, attention }
    }

    fn decoder_stack(&self, g: &mut Graph<T>, mut x: NodeId, history: NodeId, memory: NodeId, batch: usize, len: usize) -> NodeId {
        let causal = causal_mask::<T>(len);
        for layer in &self.layout.decoder {
            let a = layer.self_attention.forward(g, x, x, batch, Some(&causal));
            let a = g.dropout(a);
            let h = g.add(x, a);
            x = layer.self_norm.forward(g, h);
            let b = layer.history_attention.forward(g, x, history, batch, None);
            let b = g.dropout(b);
            let h = g.add(x, b);
            x = layer.history_norm.forward(g, h);
            let c = layer.memory_attention.forward(g, x, memory, batch, None);
            let c = g.dropout(c);
            let h = g.add(x, c);
            x = layer.memory_norm.forward(g, h);
            let f = layer.feed_forward.forward(g, x);
            let h = g.add(x, f);
            x = layer.output_norm.forward(g, h);
        }
        x
    }

    /// Generates `count` latent vectors per sample, each conditioned on the
    /// start token and the vectors before it. Returns `batch * count` rows.
    pub fn decoder_latent(&self, g: &mut Graph<T>, history: NodeId, memory: NodeId, batch: usize, count: usize) -> NodeId {
        let start = self.embed(g, self.layout.token_embedding, &vec![TOKEN_LATENT; batch]);
        let mut outputs: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); batch];
        for k in 0..count {
            let parts: Vec<_> = (0..batch)
                .flat_map(|b| std::iter::once((start, b)).chain(outputs[b].iter().copied()))
                .collect();
            let x = g.gather(&parts);
            let out = self.decoder_stack(g, x, history, memory, batch, k + 1);
            for (b, o) in outputs.iter_mut().enumerate() {
                o.push((out, b * (k + 1) + k));
            }
        }
        let parts: Vec<_> = outputs.into_iter().flatten().collect();
        g.gather(&parts)
    }

    /// Flip logits with the true prefix fed at every position. `targets`
    /// holds `batch * logicals` bits; returns `batch * logicals` logits.
    pub fn decoder_teacher_forced(&self, g: &mut Graph<T>, history: NodeId, memory: NodeId, targets: &[u8], batch: usize) -> NodeId {
        let n = self.config.logicals;
        assert_eq!(targets.len(), batch * n, "target length");
        let tokens: Vec<u8> = (0..batch)
            .flat_map(|b| std::iter::once(TOKEN_PREDICT).chain(targets[b * n..(b + 1) * n - 1].iter().copied()))
            .collect();
        let l = &self.layout;
        let x = self.embed_positioned(g, l.token_embedding, l.token_positions, &tokens, n);
        let out = self.decoder_stack(g, x, history, memory, batch, n);
        let r = g.param(self.layout.readout);
        g.matmul(out, r)
    }

    /// Flip logits for an explicit prefix per sample: output `k` of each
    /// sample sees prefix bits `0..k`. Used for autoregressive inference.
    pub fn decoder_prefix_logits(&self, g: &mut Graph<T>, history: NodeId, memory: NodeId, prefix: &[u8], batch: usize) -> NodeId {
        let len = prefix.len() / batch + 1;
        assert!(len <= self.config.logicals, "prefix longer than the logical count");
        let tokens: Vec<u8> = (0..batch)
            .flat_map(|b| std::iter::once(TOKEN_PREDICT).chain(prefix[b * (len - 1)..(b + 1) * (len - 1)].iter().copied()))
            .collect();
        let l = &self.layout;
        let x = self.embed_positioned(g, l.token_embedding, l.token_positions, &tokens, len);
        let out = self.decoder_stack(g, x, history, memory, batch, len);
        let r = g.param(self.layout.readout);
        g.matmul(out, r)
    }

    /// Predicts flips one at a time, feeding back each thresholded bit.
    pub fn decoder_autoregressive(&self, g: &mut Graph<T>, history: NodeId, memory: NodeId, batch: usize) -> Prediction {
        let n = self.config.logicals;
        let mut bits = vec![0u8; batch * n];
        let mut probabilities = vec![0.0; batch * n];
        for k in 0..n {
            let prefix: Vec<u8> = (0..batch).flat_map(|b| bits[b * n..b * n + k].to_vec()).collect();
            let logits = self.decoder_prefix_logits(g, history, memory, &prefix, batch);
            let values = g.value(logits);
            for b in 0..batch {
                let lambda = sigmoid(values.data()[b * (k + 1) + k]).as_f64();
                probabilities[b * n + k] = lambda;
                bits[b * n + k] = threshold(lambda);
            }
        }
        Prediction { bits, probabilities }
    }

    fn check_batch(&self, layers: &[Vec<u8>], batch: usize, plan: &IterationPlan, masks: Option<&[Tensor<T>]>) -> Result<()> {
        let width = self.config.detectors_per_layer;
        let got_width = layers.first().map_or(width, |l| if batch == 0 { width } else { l.len() / batch });
        if layers.len() != plan.num_iterations() || got_width != width || layers.iter().any(|l| l.len() != batch * width) {
            return Err(MlError::LayerMismatch {
                expected: plan.num_iterations(),
                expected_width: width,
                got: layers.len(),
                got_width,
            });
        }
        if let Some(m) = masks {
            if m.len() != layers.len() || m.iter().any(|t| t.shape() != [width, width]) {
                return Err(MlError::LayerMismatch {
                    expected: layers.len(),
                    expected_width: width,
                    got: m.len(),
                    got_width: m.first().map_or(0, |t| t.cols()),
                });
            }
        }
        if plan.latent_outputs == 0 {
            return Err(MlError::Config("at least one latent output per iteration".into()));
        }
        Ok(())
    }

    /// Training loss with teacher forcing: summed cross-entropy of every
    /// predicting iteration, averaged over the batch.
    pub fn loss(&self, g: &mut Graph<T>, batch: &Batch, plan: &IterationPlan, masks: Option<&[Tensor<T>]>) -> Result<NodeId> {
        self.check_batch(&batch.layers, batch.size, plan, masks)?;
        let kinds = plan.kinds();
        let needs_intermediate = kinds.iter().any(|k| matches!(k, IterationKind::Intermediate { .. }));
        if needs_intermediate && batch.intermediate.len() < plan.rounds {
            return Err(MlError::Config("intermediate targets required by the iteration plan are missing".into()));
        }
        let b = batch.size;
        let mut memory = self.initial_memory(g, b);
        let mut history = self.initial_history(g, b);
        let mut total: Option<NodeId> = None;
        for (t, kind) in kinds.into_iter().enumerate() {
            memory = self.encoder_step(g, memory, &batch.layers[t], b, masks.map(|m| &m[t])).memory;
            let targets = match kind {
                IterationKind::Latent => {
                    history = self.decoder_latent(g, history, memory, b, plan.latent_outputs);
                    continue;
                }
                IterationKind::Intermediate { round } => &batch.intermediate[round],
                IterationKind::Final => &batch.final_flips,
            };
            let logits = self.decoder_teacher_forced(g, history, memory, targets, b);
            let as_t: Vec<T> = targets.iter().map(|&v| T::lit(v as f64)).collect();
            let term = g.bce_with_logits_sum(logits, &as_t);
            total = Some(match total {
                Some(acc) => g.add(acc, term),
                None => term,
            });
            history = self.flip_history(g, targets);
        }
        let total = total.expect("the final iteration always predicts");
        Ok(g.scale(total, T::one() / T::lit(b as f64)))
    }

    /// Autoregressive inference over `batch` samples of detector layers.
    pub fn predict(&self, layers: &[Vec<u8>], batch: usize, plan: &IterationPlan, masks: Option<&[Tensor<T>]>) -> Result<Prediction> {
        self.check_batch(layers, batch, plan, masks)?;
        let mut g = Graph::new(&self.params, Mode::Eval);
        let mut memory = self.initial_memory(&mut g, batch);
        let mut history = self.initial_history(&mut g, batch);
        for (t, kind) in plan.kinds().into_iter().enumerate() {
            memory = self.encoder_step(&mut g, memory, &layers[t], batch, masks.map(|m| &m[t])).memory;
            match kind {
                IterationKind::Latent => {
                    history = self.decoder_latent(&mut g, history, memory, batch, plan.latent_outputs);
                }
                IterationKind::Intermediate { .. } => {
                    let p = self.decoder_autoregressive(&mut g, history, memory, batch);
                    history = self.flip_history(&mut g, &p.bits);
                }
                IterationKind::Final => return Ok(self.decoder_autoregressive(&mut g, history, memory, batch)),
            }
        }
        unreachable!("the final iteration always predicts")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMetadata {
    config: ModelConfig,
    plan: IterationPlan,
}

impl Model<f32> {
    pub fn save(&self, path: impl AsRef<Path>, plan: &IterationPlan) -> Result<()> {
        let meta = serde_json::to_value(CheckpointMetadata {
            config: self.config,
            plan: *plan,
        })?;
        checkpoint::save(path, &self.params, &meta)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, IterationPlan)> {
        let (params, meta) = checkpoint::load(path)?;
        let meta: CheckpointMetadata =
            serde_json::from_value(meta).map_err(|e| MlError::Metadata(e.to_string()))?;
        Ok((Model::from_params(meta.config, &params)?, meta.plan))
    }
}

/// A trained model bound to one experiment layout.
#[derive(Debug, Clone)]
pub struct MlDecoder {
    pub model: Model<f32>,
    pub plan: IterationPlan,
    masks: Option<Vec<Tensor<f32>>>,
    dem_layout: DetectorErrorModel,
}

impl MlDecoder {
    /// Fails when the experiment's layering or logical count differs from
    /// what the model was trained for.
    pub fn new(model: Model<f32>, plan: IterationPlan, dem: &DetectorErrorModel) -> Result<Self> {
        if dem.num_layers != plan.num_iterations() || dem.layer_width != model.config.detectors_per_layer {
            return Err(MlError::LayerMismatch {
                expected: plan.num_iterations(),
                expected_width: model.config.detectors_per_layer,
                got: dem.num_layers,
                got_width: dem.layer_width,
            });
        }
        if dem.num_logicals != model.config.logicals {
            return Err(MlError::LogicalMismatch {
                expected: model.config.logicals,
                got: dem.num_logicals,
            });
        }
        let masks = model.masks_for(dem);
        let dem_layout = DetectorErrorModel {
            mechanisms: Vec::new(),
            ..dem.clone()
        };
        Ok(MlDecoder {
            model,
            plan,
            masks,
            dem_layout,
        })
    }

    pub fn load(path: impl AsRef<Path>, dem: &DetectorErrorModel) -> Result<Self> {
        let (model, plan) = Model::load(path)?;
        Self::new(model, plan, dem)
    }

    pub fn decode_batch(&self, detectors: &[BitVec]) -> Result<Vec<BitVec>> {
        if detectors.is_empty() {
            return Ok(Vec::new());
        }
        let shots: Vec<Shot> = detectors
            .iter()
            .map(|d| Shot {
                detectors: d.clone(),
                logical_flips: BitVec::zeros(self.dem_layout.num_logicals),
            })
            .collect();
        let batch = Batch::from_shots(&self.dem_layout, &shots);
        let p = self
            .model
            .predict(&batch.layers, batch.size, &self.plan, self.masks.as_deref())?;
        let n = self.model.config.logicals;
        Ok(p.bits.chunks(n).map(BitVec::from_bits).collect())
    }

    pub fn decode(&self, detectors: &BitVec) -> Result<BitVec> {
        Ok(self.decode_batch(std::slice::from_ref(detectors))?.remove(0))
    }
}

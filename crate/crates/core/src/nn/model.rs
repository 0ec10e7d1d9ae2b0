//! Convolutional encoder/decoder with an MLP classifier head sharing one
//! embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::optim::Param;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f32 = 0.1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_features: usize,
    pub window: usize,
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub dropout: f64,
    pub embedding_dim: usize,
    pub classifier_hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Default architecture for `input_features` channels, windows of length
    /// `window` and `num_classes` output classes.
    pub fn new(input_features: usize, window: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_features,
            window,
            conv_filters: vec![128, 128, 256, 256],
            kernel_size: 5,
            stride: 2,
            dropout: 0.2,
            embedding_dim: 128,
            classifier_hidden_dim: 32,
            num_classes,
        }
    }

    pub fn padding(&self) -> usize {
        self.kernel_size / 2
    }

    /// Temporal length after each encoder block, starting with the window.
    pub fn temporal_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.window];
        let mut len = self.window;
        for _ in &self.conv_filters {
            let padded = len + 2 * self.padding();
            if padded < self.kernel_size {
                return Err(Error::Config(format!(
                    "window {} collapses below the kernel size",
                    self.window
                )));
            }
            len = (padded - self.kernel_size) / self.stride + 1;
            lens.push(len);
        }
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_features", self.input_features),
            ("window", self.window),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("embedding_dim", self.embedding_dim),
            ("classifier_hidden_dim", self.classifier_hidden_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::Config("conv_filters must be non-empty and positive".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        self.temporal_lengths().map(|_| ())
    }
}

/// Running mean/variance of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub embedding: Var,
    pub reconstruction: Var,
    pub probs: Var,
}

/// Plain-tensor outputs of an evaluation-mode pass.
#[derive(Debug, Clone)]
pub struct Inference {
    /// batch × embedding_dim
    pub embeddings: Tensor<f32>,
    /// batch × d × window
    pub reconstructions: Tensor<f32>,
    /// batch × num_classes
    pub probs: Tensor<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The detector network. Owns its parameters, batch-norm statistics and the
/// dropout random stream.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Param<f32>>,
    running: Vec<RunningStats>,
    rng: ChaCha8Rng,
    mode: Mode,
}

/// Walks parameters and batch-norm layers in declaration order.
struct Cursor<'a> {
    vars: &'a [Var],
    next_param: usize,
    next_bn: usize,
}

impl Cursor<'_> {
    fn take(&mut self) -> Var {
        let v = self.vars[self.next_param];
        self.next_param += 1;
        v
    }

    fn take_bn(&mut self) -> usize {
        self.next_bn += 1;
        self.next_bn - 1
    }
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<f32> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.random_range(-bound..bound) as f32)
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

impl Model {
    /// Fresh model with Kaiming-uniform weights, zero biases and identity
    /// batch-norm affine parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut running = Vec::new();
        let k = config.kernel_size;
        let f = &config.conv_filters;
        let depth = f.len();
        let lens = config.temporal_lengths()?;
        let mut push = |name: String, value: Tensor<f32>| params.push(Param { name, value });

        let mut c_prev = config.input_features;
        for (i, &c) in f.iter().enumerate() {
            push(format!("encoder.block{i}.conv.weight"), kaiming_uniform(&mut rng, &[c, c_prev, k], c_prev * k));
            push(format!("encoder.block{i}.conv.bias"), Tensor::zeros(&[c]));
            push(format!("encoder.block{i}.bn.weight"), Tensor::full(&[c], 1.0));
            push(format!("encoder.block{i}.bn.bias"), Tensor::zeros(&[c]));
            running.push(RunningStats::new(c));
            c_prev = c;
        }
        let e = config.embedding_dim;
        push("encoder.proj.weight".into(), kaiming_uniform(&mut rng, &[e, c_prev, 1], c_prev));
        push("encoder.proj.bias".into(), Tensor::zeros(&[e]));

        let last = f[depth - 1];
        let up = last * lens[depth];
        push("decoder.upsample.weight".into(), kaiming_uniform(&mut rng, &[up, e], e));
        push("decoder.upsample.bias".into(), Tensor::zeros(&[up]));
        for j in 0..depth {
            let c_in = f[depth - 1 - j];
            let c_out = if j + 1 < depth { f[depth - 2 - j] } else { f[0] };
            push(format!("decoder.block{j}.deconv.weight"), kaiming_uniform(&mut rng, &[c_in, c_out, k], c_in * k));
            push(format!("decoder.block{j}.deconv.bias"), Tensor::zeros(&[c_out]));
            push(format!("decoder.block{j}.bn.weight"), Tensor::full(&[c_out], 1.0));
            push(format!("decoder.block{j}.bn.bias"), Tensor::zeros(&[c_out]));
            running.push(RunningStats::new(c_out));
        }
        let d = config.input_features;
        push("decoder.out.weight".into(), kaiming_uniform(&mut rng, &[d, f[0], 1], f[0]));
        push("decoder.out.bias".into(), Tensor::zeros(&[d]));

        let h = config.classifier_hidden_dim;
        push("classifier.fc1.weight".into(), kaiming_uniform(&mut rng, &[h, e], e));
        push("classifier.fc1.bias".into(), Tensor::zeros(&[h]));
        push("classifier.bn.weight".into(), Tensor::full(&[h], 1.0));
        push("classifier.bn.bias".into(), Tensor::zeros(&[h]));
        running.push(RunningStats::new(h));
        let kc = config.num_classes;
        push("classifier.fc2.weight".into(), kaiming_uniform(&mut rng, &[kc, h], h));
        push("classifier.fc2.bias".into(), Tensor::zeros(&[kc]));

        // Dropout draws from a stream separate from initialisation.
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
        dropout_rng.set_stream(1);
        Ok(Model {
            config,
            params,
            running,
            rng: dropout_rng,
            mode: Mode::Eval,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        params: Vec<Param<f32>>,
        running: Vec<RunningStats>,
    ) -> Result<Self> {
        let template = Model::new(config.clone(), 0)?;
        if template.params.len() != params.len() || template.running.len() != running.len() {
            return Err(Error::Checkpoint(
                "tensor count does not match the architecture".into(),
            ));
        }
        let mut named = Vec::with_capacity(params.len());
        for (t, p) in template.params.iter().zip(params) {
            if t.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    t.name,
                    p.value.shape(),
                    t.value.shape()
                )));
            }
            named.push(Param {
                name: t.name.clone(),
                value: p.value,
            });
        }
        for (t, r) in template.running.iter().zip(&running) {
            if t.mean.len() != r.mean.len() || t.var.len() != r.var.len() {
                return Err(Error::Checkpoint("batch-norm statistics size mismatch".into()));
            }
        }
        Ok(Model {
            params: named,
            running,
            ..template
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<f32>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Switches between training (batch statistics, dropout) and evaluation
    /// (running statistics, no dropout).
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds every parameter to `graph`, as trainable leaves in training mode
    /// and as constants otherwise.
    pub fn bind(&self, graph: &mut Graph<f32>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| match self.mode {
                Mode::Train => graph.leaf(p.value.clone()),
                Mode::Eval => graph.constant(p.value.clone()),
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<usize> {
        match *shape {
            [b, d, w] if b > 0 && d == self.config.input_features && w == self.config.window => Ok(b),
            _ => Err(Error::Shape(format!(
                "model expects (batch, {}, {}), got {shape:?}",
                self.config.input_features, self.config.window
            ))),
        }
    }

    fn norm_act(
        &mut self,
        g: &mut Graph<f32>,
        x: Var,
        cur: &mut Cursor<'_>,
        dropout: bool,
    ) -> Result<Var> {
        let gamma = cur.take();
        let beta = cur.take();
        let bn = cur.take_bn();
        let h = match self.mode {
            Mode::Train => {
                let (h, stats) = g.batch_norm(x, gamma, beta, BATCH_NORM_EPS)?;
                let r = &mut self.running[bn];
                let m = BATCH_NORM_MOMENTUM;
                for (rm, &bm) in r.mean.iter_mut().zip(&stats.mean) {
                    *rm = (1.0 - m) * *rm + m * bm;
                }
                for (rv, &bv) in r.var.iter_mut().zip(&stats.var) {
                    *rv = (1.0 - m) * *rv + m * bv;
                }
                h
            }
            Mode::Eval => {
                let r = &self.running[bn];
                g.batch_norm_inference(x, gamma, beta, &r.mean, &r.var, BATCH_NORM_EPS)?
            }
        };
        let h = g.relu(h);
        if dropout && self.mode == Mode::Train && self.config.dropout > 0.0 {
            g.dropout(h, self.config.dropout, &mut self.rng)
        } else {
            Ok(h)
        }
    }

    fn encode_with(&mut self, g: &mut Graph<f32>, x: Var, cur: &mut Cursor<'_>) -> Result<Var> {
        let batch = self.check_input(g.value(x).shape())?;
        let (stride, pad) = (self.config.stride, self.config.padding());
        let mut h = x;
        for _ in 0..self.config.conv_filters.len() {
            let w = cur.take();
            let b = cur.take();
            h = g.conv1d(h, w, b, stride, pad)?;
            h = self.norm_act(g, h, cur, true)?;
        }
        let pooled = g.max_pool_time(h)?;
        let channels = *self.config.conv_filters.last().expect("validated");
        let pooled = g.reshape(pooled, &[batch, channels, 1])?;
        let w = cur.take();
        let b = cur.take();
        let z = g.conv1d(pooled, w, b, 1, 0)?;
        g.reshape(z, &[batch, self.config.embedding_dim])
    }

    fn decode_with(&mut self, g: &mut Graph<f32>, z: Var, cur: &mut Cursor<'_>) -> Result<Var> {
        let batch = match *g.value(z).shape() {
            [b, e] if b > 0 && e == self.config.embedding_dim => b,
            ref s => {
                return Err(Error::Shape(format!(
                    "decoder expects (batch, {}), got {s:?}",
                    self.config.embedding_dim
                )))
            }
        };
        let lens = self.config.temporal_lengths()?;
        let depth = self.config.conv_filters.len();
        let w = cur.take();
        let b = cur.take();
        let up = g.linear(z, w, b)?;
        let mut h = g.reshape(up, &[batch, self.config.conv_filters[depth - 1], lens[depth]])?;
        let (stride, pad) = (self.config.stride, self.config.padding());
        for j in 0..depth {
            let w = cur.take();
            let b = cur.take();
            h = g.conv_transpose1d(h, w, b, stride, pad, lens[depth - 1 - j])?;
            h = self.norm_act(g, h, cur, true)?;
        }
        let w = cur.take();
        let b = cur.take();
        g.conv1d(h, w, b, 1, 0)
    }

    fn classify_with(&mut self, g: &mut Graph<f32>, z: Var, cur: &mut Cursor<'_>) -> Result<Var> {
        match *g.value(z).shape() {
            [b, e] if b > 0 && e == self.config.embedding_dim => {}
            ref s => {
                return Err(Error::Shape(format!(
                    "classifier expects (batch, {}), got {s:?}",
                    self.config.embedding_dim
                )))
            }
        }
        let w = cur.take();
        let b = cur.take();
        let h = g.linear(z, w, b)?;
        let h = self.norm_act(g, h, cur, true)?;
        let w = cur.take();
        let b = cur.take();
        let logits = g.linear(h, w, b)?;
        g.softmax(logits)
    }

    fn cursor_at<'a>(&self, vars: &'a [Var], part: Part) -> Cursor<'a> {
        let depth = self.config.conv_filters.len();
        let (next_param, next_bn) = match part {
            Part::Encoder => (0, 0),
            Part::Decoder => (4 * depth + 2, depth),
            Part::Classifier => (8 * depth + 6, 2 * depth),
        };
        Cursor {
            vars,
            next_param,
            next_bn,
        }
    }

    /// Records a full forward pass on `graph`. `params` must come from
    /// [`Model::bind`] on the same graph.
    pub fn forward(&mut self, graph: &mut Graph<f32>, params: &[Var], x: Var) -> Result<Forward> {
        if params.len() != self.params.len() {
            return Err(Error::Usage("parameter handles do not match this model".into()));
        }
        let mut cur = self.cursor_at(params, Part::Encoder);
        let embedding = self.encode_with(graph, x, &mut cur)?;
        let mut cur = self.cursor_at(params, Part::Decoder);
        let reconstruction = self.decode_with(graph, embedding, &mut cur)?;
        let mut cur = self.cursor_at(params, Part::Classifier);
        let probs = self.classify_with(graph, embedding, &mut cur)?;
        Ok(Forward {
            embedding,
            reconstruction,
            probs,
        })
    }

    fn eval_part(&self, input: &Tensor<f32>, part: Part) -> Result<Tensor<f32>> {
        let mut model = self.eval_view();
        let mut g = Graph::new();
        let params = model.bind(&mut g);
        let x = g.constant(input.clone());
        let mut cur = model.cursor_at(&params, part);
        let out = match part {
            Part::Encoder => model.encode_with(&mut g, x, &mut cur)?,
            Part::Decoder => model.decode_with(&mut g, x, &mut cur)?,
            Part::Classifier => model.classify_with(&mut g, x, &mut cur)?,
        };
        Ok(g.value(out).clone())
    }

    fn eval_view(&self) -> Model {
        let mut m = self.clone();
        m.mode = Mode::Eval;
        m
    }

    /// Evaluation-mode embeddings of a (batch, d, window) tensor.
    pub fn encode(&self, windows: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.eval_part(windows, Part::Encoder)
    }

    /// Evaluation-mode reconstructions from (batch, embedding_dim) embeddings.
    pub fn decode(&self, embeddings: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.eval_part(embeddings, Part::Decoder)
    }

    /// Evaluation-mode class probabilities from (batch, embedding_dim) embeddings.
    pub fn classify(&self, embeddings: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.eval_part(embeddings, Part::Classifier)
    }

    /// All three evaluation-mode outputs in one pass.
    pub fn infer(&self, windows: &Tensor<f32>) -> Result<Inference> {
        let mut model = self.eval_view();
        let mut g = Graph::new();
        let params = model.bind(&mut g);
        let x = g.constant(windows.clone());
        let out = model.forward(&mut g, &params, x)?;
        Ok(Inference {
            embeddings: g.value(out.embedding).clone(),
            reconstructions: g.value(out.reconstruction).clone(),
            probs: g.value(out.probs).clone(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Part {
    Encoder,
    Decoder,
    Classifier,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            conv_filters: vec![4, 4, 8, 8],
            embedding_dim: 6,
            classifier_hidden_dim: 5,
            ..ModelConfig::new(2, 20, 3)
        }
    }

    #[test]
    fn default_architecture_matches_reference_sizes() {
        let c = ModelConfig::new(1, 100, 12);
        assert_eq!(c.conv_filters, vec![128, 128, 256, 256]);
        assert_eq!(c.embedding_dim, 128);
        assert_eq!(c.classifier_hidden_dim, 32);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.stride, 2);
        assert_eq!(c.temporal_lengths().unwrap(), vec![100, 50, 25, 13, 7]);
    }

    #[test]
    fn output_shapes_follow_config() {
        let model = Model::new(small_config(), 3).unwrap();
        let x = Tensor::from_vec(&[3, 2, 20], (0..120).map(|i| (i as f32 * 0.1).sin()).collect()).unwrap();
        let out = model.infer(&x).unwrap();
        assert_eq!(out.embeddings.shape(), &[3, 6]);
        assert_eq!(out.reconstructions.shape(), &[3, 2, 20]);
        assert_eq!(out.probs.shape(), &[3, 3]);
        for row in out.probs.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn part_wise_calls_match_full_pass() {
        let model = Model::new(small_config(), 5).unwrap();
        let x = Tensor::from_vec(&[2, 2, 20], (0..80).map(|i| (i as f32 * 0.3).cos()).collect()).unwrap();
        let full = model.infer(&x).unwrap();
        let z = model.encode(&x).unwrap();
        assert_eq!(z, full.embeddings);
        assert_eq!(model.decode(&z).unwrap(), full.reconstructions);
        assert_eq!(model.classify(&z).unwrap(), full.probs);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let model = Model::new(small_config(), 0).unwrap();
        let x = Tensor::zeros(&[1, 3, 20]);
        assert!(matches!(model.encode(&x), Err(Error::Shape(_))));
        assert!(matches!(model.decode(&Tensor::zeros(&[1, 7])), Err(Error::Shape(_))));
    }

    #[test]
    fn training_mode_updates_running_statistics() {
        let mut model = Model::new(small_config(), 1).unwrap();
        model.set_mode(Mode::Train);
        let before = model.running_stats().to_vec();
        let mut g = Graph::new();
        let params = model.bind(&mut g);
        let x = g.constant(Tensor::from_vec(&[4, 2, 20], (0..160).map(|i| i as f32 * 0.01).collect()).unwrap());
        model.forward(&mut g, &params, x).unwrap();
        assert_ne!(before, model.running_stats());
    }
}

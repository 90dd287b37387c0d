use super::model::{ModelConfig, ModelState};
use super::RnnError;
use crate::dataset::TrainingCorpus;
use crate::tensor::{clip_gradients, per_token_loss, AdamConfig, AdamState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seq_len: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_iterations: Option<usize>,
    pub adam: AdamConfig,
    /// Learning rate multiplier applied at every epoch boundary.
    pub lr_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            seq_len: 50,
            epochs: 300,
            max_iterations: None,
            adam: AdamConfig::default(),
            lr_decay: 0.97,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// `(iteration, per-token loss)` pairs; iteration counts optimizer steps from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, l)| l).collect()
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.points.first().map(|&(_, l)| l)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.points.last().map(|&(_, l)| l)
    }

    /// Mean loss of the trailing `n` iterations.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        if self.points.is_empty() || n == 0 {
            return None;
        }
        let tail = &self.points[self.points.len().saturating_sub(n)..];
        Some(tail.iter().map(|&(_, l)| l).sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in &self.points {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Contiguous equal lanes of the corpus, stepped in windows of `seq_len`.
#[derive(Debug, Clone, Copy)]
pub struct LaneLayout {
    pub batch_size: usize,
    pub seq_len: usize,
    pub lane_len: usize,
    pub windows_per_epoch: usize,
}

impl LaneLayout {
    pub fn new(tokens: usize, batch_size: usize, seq_len: usize) -> Result<Self, RnnError> {
        let needed = batch_size * seq_len;
        if batch_size == 0 || seq_len == 0 || tokens < needed {
            return Err(RnnError::CorpusTooSmall { tokens, needed });
        }
        let lane_len = tokens / batch_size;
        Ok(Self {
            batch_size,
            seq_len,
            lane_len,
            windows_per_epoch: lane_len / seq_len,
        })
    }

    /// `(inputs, targets)` laid out as `[step][lane]`.
    pub fn window(&self, corpus: &TrainingCorpus, w: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut inputs = Vec::with_capacity(self.seq_len);
        let mut targets = Vec::with_capacity(self.seq_len);
        for t in 0..self.seq_len {
            let pos = |lane: usize| lane * self.lane_len + w * self.seq_len + t;
            inputs.push((0..self.batch_size).map(|b| corpus.x[pos(b)]).collect());
            targets.push((0..self.batch_size).map(|b| corpus.y[pos(b)]).collect());
        }
        (inputs, targets)
    }
}

/// Initializes a model from `cfg.seed` and trains it.
pub fn train(
    corpus: &TrainingCorpus,
    model_config: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelState, LearningCurve), RnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelState::init(model_config, corpus.vocabulary.clone(), &mut rng)?;
    let curve = train_model(&mut model, corpus, cfg)?;
    Ok((model, curve))
}

/// Trains an existing model in place with a fresh optimizer.
///
/// States carry across windows within an epoch and reset at each epoch start.
pub fn train_model(
    model: &mut ModelState,
    corpus: &TrainingCorpus,
    cfg: &TrainConfig,
) -> Result<LearningCurve, RnnError> {
    if corpus.vocabulary != model.vocabulary {
        return Err(RnnError::VocabularyMismatch);
    }
    let layout = LaneLayout::new(corpus.len(), cfg.batch_size, cfg.seq_len)?;
    let mut curve = LearningCurve::default();
    let budget = cfg.max_iterations.unwrap_or(usize::MAX);
    if budget == 0 || cfg.epochs == 0 {
        return Ok(curve);
    }

    let mut adam = AdamState::new(cfg.adam, model.tensors());
    let mut iteration = 0;
    'epochs: for epoch in 0..cfg.epochs {
        adam.config.learning_rate = cfg.adam.learning_rate * cfg.lr_decay.powi(epoch as i32);
        let mut states = model.zero_states(cfg.batch_size);
        for w in 0..layout.windows_per_epoch {
            let (inputs, targets) = layout.window(corpus, w);
            let mut result = model.window_loss(&inputs, &targets, &states)?;
            clip_gradients(&mut result.gradients, cfg.clip_norm);
            adam.step(&mut model.tensors_mut(), &result.gradients)?;
            states = result.states;

            iteration += 1;
            curve
                .points
                .push((iteration, per_token_loss(result.loss, cfg.batch_size, cfg.seq_len)));
            if iteration >= budget {
                break 'epochs;
            }
        }
    }
    Ok(curve)
}

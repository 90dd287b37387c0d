use super::cell::{load_gates, step_on_tape, CellKind, CellParams, CellState, TapedGate, TapedState, INIT_SCALE};
use super::RnnError;
use crate::dataset::{DatasetVariant, Vocabulary};
use crate::tensor::{Gradients, Matrix, Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_LAYERS: usize = 5;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_EMBEDDING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub layers: usize,
    pub hidden_size: usize,
    pub embedding_dim: usize,
    pub variant: DatasetVariant,
}

impl ModelConfig {
    pub fn new(cell: CellKind, layers: usize, variant: DatasetVariant) -> Self {
        Self {
            cell,
            layers,
            hidden_size: DEFAULT_HIDDEN,
            embedding_dim: DEFAULT_EMBEDDING,
            variant,
        }
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return Err(RnnError::BadLayerCount(self.layers));
        }
        if self.hidden_size == 0 || self.embedding_dim == 0 {
            return Err(RnnError::BadDimension);
        }
        Ok(())
    }
}

/// Embedding table, stacked cells and output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    /// `V × d`
    pub embedding: Matrix,
    pub layers: Vec<CellParams>,
    /// `h × V`
    pub projection_w: Matrix,
    /// `1 × V`
    pub projection_b: Matrix,
}

impl ModelState {
    /// All-zero parameters with the shapes implied by `config` and `vocabulary`.
    pub fn zeros(config: ModelConfig, vocabulary: Vocabulary) -> Result<Self, RnnError> {
        config.validate()?;
        let v = vocabulary.len();
        let (h, d) = (config.hidden_size, config.embedding_dim);
        let layers = (0..config.layers)
            .map(|i| CellParams::zeros(config.cell, if i == 0 { d } else { h }, h))
            .collect();
        Ok(Self {
            config,
            vocabulary,
            embedding: Matrix::zeros(v, d),
            layers,
            projection_w: Matrix::zeros(h, v),
            projection_b: Matrix::zeros(1, v),
        })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, vocabulary: Vocabulary, rng: &mut R) -> Result<Self, RnnError> {
        config.validate()?;
        let v = vocabulary.len();
        let (h, d) = (config.hidden_size, config.embedding_dim);
        let embedding = Matrix::uniform(v, d, INIT_SCALE, rng);
        let layers = (0..config.layers)
            .map(|i| CellParams::init(config.cell, if i == 0 { d } else { h }, h, rng))
            .collect();
        let projection_w = Matrix::uniform(h, v, INIT_SCALE, rng);
        Ok(Self {
            config,
            vocabulary,
            embedding,
            layers,
            projection_w,
            projection_b: Matrix::zeros(1, v),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Parameter tensors in checkpoint order: embedding, each layer's gates
    /// (weights then bias), projection weights, projection bias.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embedding];
        for layer in &self.layers {
            for g in &layer.gates {
                out.push(&g.w);
                out.push(&g.b);
            }
        }
        out.push(&self.projection_w);
        out.push(&self.projection_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.layers {
            for g in &mut layer.gates {
                out.push(&mut g.w);
                out.push(&mut g.b);
            }
        }
        out.push(&mut self.projection_w);
        out.push(&mut self.projection_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<(), RnnError> {
        if values.len() != self.param_count() {
            return Err(RnnError::ParamCount {
                expected: self.param_count(),
                found: values.len(),
            });
        }
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.len();
            m.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn zero_states(&self, batch: usize) -> Vec<CellState> {
        (0..self.config.layers)
            .map(|_| CellState::zeros(self.config.cell, batch, self.config.hidden_size))
            .collect()
    }

    /// Embedding row for one token id.
    pub fn embed(&self, id: usize) -> Result<Vec<f64>, RnnError> {
        self.check_id(id)?;
        Ok(self.embedding.row(id).to_vec())
    }

    fn check_id(&self, id: usize) -> Result<(), RnnError> {
        if id >= self.vocab_size() {
            return Err(RnnError::BadToken {
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(())
    }

    fn check_states(&self, states: &[CellState], batch: usize) -> Result<(), RnnError> {
        let expected = self.zero_states(batch);
        let ok = states.len() == expected.len()
            && states.iter().zip(&expected).all(|(s, e)| {
                s.h.shape() == e.h.shape()
                    && s.c.as_ref().map(Matrix::shape) == e.c.as_ref().map(Matrix::shape)
            });
        if ok {
            Ok(())
        } else {
            Err(RnnError::BadState)
        }
    }

    pub(crate) fn load_onto(&self, tape: &mut Tape) -> TapedModel {
        let embedding = tape.leaf(self.embedding.clone());
        let layers = self.layers.iter().map(|l| load_gates(tape, l)).collect();
        let projection_w = tape.leaf(self.projection_w.clone());
        let projection_b = tape.leaf(self.projection_b.clone());
        TapedModel {
            cell: self.config.cell,
            embedding,
            layers,
            projection_w,
            projection_b,
        }
    }

    /// Runs one lane through the stack, returning one logit vector per input
    /// token and the final per-layer states.
    pub fn stack_forward(
        &self,
        ids: &[usize],
        init: Option<&[CellState]>,
    ) -> Result<(Vec<Vec<f64>>, Vec<CellState>), RnnError> {
        for &id in ids {
            self.check_id(id)?;
        }
        let zero;
        let init = match init {
            Some(s) => {
                self.check_states(s, 1)?;
                s
            }
            None => {
                zero = self.zero_states(1);
                &zero
            }
        };
        let mut tape = Tape::new();
        let taped = self.load_onto(&mut tape);
        let mut states: Vec<TapedState> = init.iter().map(|s| TapedState::load(&mut tape, s)).collect();
        let mut logits = Vec::with_capacity(ids.len());
        for &id in ids {
            let out = taped.step(&mut tape, &[id], &mut states)?;
            logits.push(tape.value(out).data().to_vec());
        }
        let finals = states.iter().map(|s| s.read(&tape)).collect();
        Ok((logits, finals))
    }

    /// Summed cross-entropy over a window of `inputs[t][lane]` predicting
    /// `targets[t][lane]`, its gradients in [`tensors`](Self::tensors) order,
    /// and the states after the last step.
    pub fn window_loss(
        &self,
        inputs: &[Vec<usize>],
        targets: &[Vec<usize>],
        init: &[CellState],
    ) -> Result<WindowResult, RnnError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(RnnError::BadWindow);
        }
        let batch = inputs[0].len();
        if inputs.iter().chain(targets).any(|row| row.len() != batch) {
            return Err(RnnError::BadWindow);
        }
        self.check_states(init, batch)?;
        for &id in inputs.iter().chain(targets).flatten() {
            self.check_id(id)?;
        }

        let mut tape = Tape::new();
        let taped = self.load_onto(&mut tape);
        let mut states: Vec<TapedState> = init.iter().map(|s| TapedState::load(&mut tape, s)).collect();
        let mut losses = Vec::with_capacity(inputs.len());
        for (ids, tgt) in inputs.iter().zip(targets) {
            let logits = taped.step(&mut tape, ids, &mut states)?;
            losses.push(tape.softmax_cross_entropy(logits, tgt)?);
        }
        let total = tape.sum(&losses)?;
        let grads = tape.backward(total)?;
        Ok(WindowResult {
            loss: tape.value(total).get(0, 0),
            gradients: taped.collect_gradients(&grads, self),
            states: states.iter().map(|s| s.read(&tape)).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct WindowResult {
    pub loss: f64,
    pub gradients: Vec<Matrix>,
    pub states: Vec<CellState>,
}

pub(crate) struct TapedModel {
    cell: CellKind,
    embedding: Var,
    layers: Vec<Vec<TapedGate>>,
    projection_w: Var,
    projection_b: Var,
}

impl TapedModel {
    /// Embeds `ids`, threads them through every layer, and projects to logits.
    pub fn step(&self, tape: &mut Tape, ids: &[usize], states: &mut [TapedState]) -> Result<Var, RnnError> {
        let mut x = tape.gather(self.embedding, ids)?;
        for (gates, state) in self.layers.iter().zip(states.iter_mut()) {
            *state = step_on_tape(tape, self.cell, x, *state, gates)?;
            x = state.h;
        }
        Ok(tape.linear(x, self.projection_w, self.projection_b)?)
    }

    fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for gates in &self.layers {
            for g in gates {
                out.push(g.w);
                out.push(g.b);
            }
        }
        out.push(self.projection_w);
        out.push(self.projection_b);
        out
    }

    pub fn collect_gradients(&self, grads: &Gradients, model: &ModelState) -> Vec<Matrix> {
        self.vars()
            .into_iter()
            .zip(model.tensors())
            .map(|(v, like)| grads.get_or_zeros(v, like))
            .collect()
    }
}

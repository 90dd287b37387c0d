use super::RnnError;
use crate::tensor::{Matrix, Tape, TensorError, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const INIT_SCALE: f64 = 0.08;
pub const LSTM_FORGET_BIAS: f64 = 1.0;

/// The recurrent cell architectures a stack can be built from.
///
/// New architectures plug in here: give them a gate list and a step rule in
/// [`step_on_tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Ugrnn,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [CellKind::Lstm, CellKind::Ugrnn];

    /// Gate blocks in declaration (and checkpoint) order.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["forget", "input", "candidate", "output"],
            CellKind::Ugrnn => &["update", "candidate"],
        }
    }

    pub fn gate_count(self) -> usize {
        self.gate_names().len()
    }

    pub fn has_cell_state(self) -> bool {
        matches!(self, CellKind::Lstm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Ugrnn => "ugrnn",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "ugrnn" => Ok(CellKind::Ugrnn),
            "nas" => Err("the NAS cell is not available in this build".to_string()),
            other => Err(format!("unknown cell kind `{other}` (expected lstm or ugrnn)")),
        }
    }
}

/// Weights over the concatenated `[input, hidden]` row and a bias row for one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// `(input + hidden) × hidden`
    pub w: Matrix,
    /// `1 × hidden`
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub gates: Vec<GateParams>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_size: usize, hidden_size: usize) -> Self {
        let gates = (0..kind.gate_count())
            .map(|_| GateParams {
                w: Matrix::zeros(input_size + hidden_size, hidden_size),
                b: Matrix::zeros(1, hidden_size),
            })
            .collect();
        Self {
            kind,
            input_size,
            hidden_size,
            gates,
        }
    }

    /// Uniform weights in `[-0.08, 0.08]`, zero biases, forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(kind, input_size, hidden_size);
        for gate in &mut p.gates {
            gate.w = Matrix::uniform(input_size + hidden_size, hidden_size, INIT_SCALE, rng);
        }
        if kind == CellKind::Lstm {
            p.gates[0].b = Matrix::filled(1, hidden_size, LSTM_FORGET_BIAS);
        }
        p
    }

    pub fn check_shapes(&self) -> Result<(), RnnError> {
        let rows = self.input_size + self.hidden_size;
        let ok = self.gates.len() == self.kind.gate_count()
            && self.gates.iter().all(|g| {
                g.w.shape() == (rows, self.hidden_size) && g.b.shape() == (1, self.hidden_size)
            });
        if ok {
            Ok(())
        } else {
            Err(RnnError::Tensor(TensorError::ShapeMismatch {
                op: "cell_params",
                left: (rows, self.hidden_size),
                right: (self.gates.len(), self.kind.gate_count()),
            }))
        }
    }
}

/// Recurrent state for a batch of lanes; one row per lane.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Matrix,
    /// Memory cell, present only for LSTM.
    pub c: Option<Matrix>,
}

impl CellState {
    pub fn zeros(kind: CellKind, batch: usize, hidden_size: usize) -> Self {
        Self {
            h: Matrix::zeros(batch, hidden_size),
            c: kind
                .has_cell_state()
                .then(|| Matrix::zeros(batch, hidden_size)),
        }
    }

    /// A single-lane state from plain vectors.
    pub fn from_vectors(h: &[f64], c: Option<&[f64]>) -> Self {
        Self {
            h: Matrix::row_vector(h),
            c: c.map(Matrix::row_vector),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TapedGate {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TapedState {
    pub h: Var,
    pub c: Option<Var>,
}

impl TapedState {
    pub fn load(tape: &mut Tape, state: &CellState) -> Self {
        Self {
            h: tape.leaf(state.h.clone()),
            c: state.c.as_ref().map(|c| tape.leaf(c.clone())),
        }
    }

    pub fn read(&self, tape: &Tape) -> CellState {
        CellState {
            h: tape.value(self.h).clone(),
            c: self.c.map(|c| tape.value(c).clone()),
        }
    }
}

pub(crate) fn load_gates(tape: &mut Tape, p: &CellParams) -> Vec<TapedGate> {
    p.gates
        .iter()
        .map(|g| TapedGate {
            w: tape.leaf(g.w.clone()),
            b: tape.leaf(g.b.clone()),
        })
        .collect()
}

/// One time step of a cell on the tape.
pub(crate) fn step_on_tape(
    tape: &mut Tape,
    kind: CellKind,
    x: Var,
    state: TapedState,
    gates: &[TapedGate],
) -> Result<TapedState, RnnError> {
    let xh = tape.concat(x, state.h)?;
    let pre = |tape: &mut Tape, g: &TapedGate| tape.linear(xh, g.w, g.b);
    match kind {
        CellKind::Lstm => {
            let c = state.c.ok_or(RnnError::MissingCellState)?;
            let zf = pre(tape, &gates[0])?;
            let zi = pre(tape, &gates[1])?;
            let zg = pre(tape, &gates[2])?;
            let zo = pre(tape, &gates[3])?;
            let f = tape.sigmoid(zf);
            let i = tape.sigmoid(zi);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            let c_next = tape.add(keep, write)?;
            let squashed = tape.tanh(c_next);
            let h_next = tape.mul(o, squashed)?;
            Ok(TapedState {
                h: h_next,
                c: Some(c_next),
            })
        }
        CellKind::Ugrnn => {
            let zg = pre(tape, &gates[0])?;
            let zc = pre(tape, &gates[1])?;
            let g = tape.sigmoid(zg);
            let cand = tape.tanh(zc);
            let carry = tape.mul(g, state.h)?;
            let open = tape.one_minus(g);
            let fresh = tape.mul(open, cand)?;
            let h_next = tape.add(carry, fresh)?;
            Ok(TapedState { h: h_next, c: None })
        }
    }
}

fn single_step(
    expected: CellKind,
    x: &[f64],
    state: &CellState,
    p: &CellParams,
) -> Result<(Vec<f64>, CellState), RnnError> {
    if p.kind != expected {
        return Err(RnnError::WrongCellKind {
            expected,
            found: p.kind,
        });
    }
    p.check_shapes()?;
    if x.len() != p.input_size || state.h.shape() != (1, p.hidden_size) {
        return Err(RnnError::Tensor(TensorError::ShapeMismatch {
            op: "cell_step",
            left: (x.len(), p.input_size),
            right: state.h.shape(),
        }));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(Matrix::row_vector(x));
    let st = TapedState::load(&mut tape, state);
    let gates = load_gates(&mut tape, p);
    let next = step_on_tape(&mut tape, p.kind, xv, st, &gates)?.read(&tape);
    Ok((next.h.data().to_vec(), next))
}

/// One LSTM step for a single lane.
pub fn lstm_step(x: &[f64], state: &CellState, p: &CellParams) -> Result<(Vec<f64>, CellState), RnnError> {
    single_step(CellKind::Lstm, x, state, p)
}

/// One UGRNN step for a single lane.
pub fn ugrnn_step(x: &[f64], state: &CellState, p: &CellParams) -> Result<(Vec<f64>, CellState), RnnError> {
    single_step(CellKind::Ugrnn, x, state, p)
}

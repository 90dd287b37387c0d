//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation appends a node holding its forward value. Because parents
//! always precede children, walking the node list backwards is a reverse
//! topological order, and each node is visited once.

use super::{sigmoid, Matrix, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Gather { table: Var, ids: Vec<usize> },
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Var, Var),
    SoftmaxCrossEntropy { logits: Var, probs: Matrix /* softmax minus one-hot */ },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Records an input: a parameter or a constant.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Stacks rows `ids` of `table` into a `ids.len() × cols` matrix.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(TensorError::BadIndex {
                    index: id,
                    len: t.rows(),
                });
            }
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `1 × cols` bias to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(mismatch("add_row_bias", av, bv));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRowBias(a, bias)))
    }

    /// `a · w + bias` for row-major batches.
    pub fn linear(&mut self, a: Var, w: Var, bias: Var) -> Result<Var, TensorError> {
        let z = self.matmul(a, w)?;
        self.add_row_bias(z, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av, bv));
        }
        let out = av.zip_map(bv, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let out = av.zip_map(bv, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Column-wise concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(mismatch("concat", av, bv));
        }
        let cols = av.cols() + bv.cols();
        let mut out = Matrix::zeros(av.rows(), cols);
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..av.cols()].copy_from_slice(av.row(r));
            row[av.cols()..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(out, Op::Concat(a, b)))
    }

    /// Summed cross-entropy of each logit row against its target class; a `1 × 1` node.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
    ) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: lv.shape(),
                right: (targets.len(), 1),
            });
        }
        let mut probs = Matrix::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let (loss, grad) = super::cross_entropy(lv.row(r), t)?;
            total += loss;
            // store softmax - onehot directly
            probs.row_mut(r).copy_from_slice(&grad);
        }
        Ok(self.push(
            Matrix::filled(1, 1, total),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
            },
        ))
    }

    /// Element-wise sum of equally shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var, TensorError> {
        let first = *vars.first().ok_or(TensorError::EmptyInput)?;
        let mut out = self.value(first).clone();
        for &v in &vars[1..] {
            let vv = self.value(v);
            if vv.shape() != out.shape() {
                return Err(mismatch("sum", &out, vv));
            }
            out.add_assign(vv);
        }
        Ok(self.push(out, Op::Sum(vars.to_vec())))
    }

    /// Back-propagates from a scalar node, returning gradients for every node reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(TensorError::NotScalar(lv.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let slot = grads[table.0].get_or_insert_with(|| Matrix::zeros(t.rows(), t.cols()));
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in slot.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRowBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::OneMinus(a) => accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::Sigmoid(a) => {
                    let da = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let da = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Concat(a, b) => {
                    let split = self.value(*a).cols();
                    let mut da = Matrix::zeros(g.rows(), split);
                    let mut db = Matrix::zeros(g.rows(), g.cols() - split);
                    for r in 0..g.rows() {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..split]);
                        db.row_mut(r).copy_from_slice(&g.row(r)[split..]);
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SoftmaxCrossEntropy { logits, probs, .. } => {
                    let scale = g.get(0, 0);
                    let mut dl = probs.clone();
                    dl.scale(scale);
                    accumulate(&mut grads, *logits, dl);
                }
                Op::Sum(vars) => {
                    for v in vars {
                        accumulate(&mut grads, *v, g.clone());
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, m: Matrix) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&m),
        slot => *slot = Some(m),
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but yields zeros shaped like `like` when absent.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

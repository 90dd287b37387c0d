//! Double-double arithmetic (about 106 significant bits) and an independent
//! forward pass of the recurrent stack, used as a finite-difference oracle
//! whose round-off stays far below the gradients being checked.

use cantus_core::rnn::{CellKind, ModelConfig};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Exact multiplication by a power of two.
    fn scale2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).scale2(-10);
        // Taylor series on |r| < 4e-4
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=14 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale2(k as i32)
    }

    pub fn ln(self) -> Self {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn sigmoid(self) -> Self {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }

    pub fn tanh(self) -> Self {
        if self.hi < 0.0 {
            return -(-self).tanh();
        }
        let e = (self.scale2(1)).neg().exp();
        (Dd::ONE - e) / (Dd::ONE + e)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

/// Reads the flat parameter vector in checkpoint order.
struct Cursor<'a> {
    p: &'a [Dd],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [Dd] {
        let s = &self.p[self.at..self.at + n];
        self.at += n;
        s
    }
}

/// Summed cross-entropy of `targets[t][lane]` given `inputs[t][lane]`, from zero or given
/// initial states (`h0[layer][lane]`, `c0[layer][lane]`).
pub fn window_loss(
    cfg: &ModelConfig,
    vocab: usize,
    params: &[Dd],
    inputs: &[Vec<usize>],
    targets: &[Vec<usize>],
    h0: &[Vec<Vec<f64>>],
    c0: &[Vec<Vec<f64>>],
) -> Dd {
    let (d, h) = (cfg.embedding_dim, cfg.hidden_size);
    let gates = match cfg.cell {
        CellKind::Lstm => 4,
        CellKind::Ugrnn => 2,
    };
    let mut cur = Cursor { p: params, at: 0 };
    let emb = cur.take(vocab * d);
    let mut layers = Vec::new();
    for l in 0..cfg.layers {
        let input = if l == 0 { d } else { h };
        let g: Vec<(&[Dd], &[Dd])> = (0..gates).map(|_| (cur.take((input + h) * h), cur.take(h))).collect();
        layers.push((input, g));
    }
    let proj_w = cur.take(h * vocab);
    let proj_b = cur.take(vocab);
    assert_eq!(cur.at, params.len());

    let lanes = inputs[0].len();
    let to_dd = |v: &Vec<f64>| v.iter().map(|&x| Dd::from(x)).collect::<Vec<_>>();
    let mut hs: Vec<Vec<Vec<Dd>>> = h0.iter().map(|l| l.iter().map(to_dd).collect()).collect();
    let mut cs: Vec<Vec<Vec<Dd>>> = c0.iter().map(|l| l.iter().map(to_dd).collect()).collect();

    let mut total = Dd::ZERO;
    for (step, tgt) in inputs.iter().zip(targets) {
        for lane in 0..lanes {
            let mut x: Vec<Dd> = emb[step[lane] * d..(step[lane] + 1) * d].to_vec();
            for (l, (input, g)) in layers.iter().enumerate() {
                let mut xh = x.clone();
                xh.extend_from_slice(&hs[l][lane]);
                let pre = |k: usize| -> Vec<Dd> {
                    let (w, b) = g[k];
                    (0..h)
                        .map(|j| (0..input + h).fold(b[j], |acc, i| acc + xh[i] * w[i * h + j]))
                        .collect()
                };
                let prev = hs[l][lane].clone();
                let next: Vec<Dd> = match cfg.cell {
                    CellKind::Lstm => {
                        let (zf, zi, zg, zo) = (pre(0), pre(1), pre(2), pre(3));
                        let c = &mut cs[l][lane];
                        (0..h)
                            .map(|j| {
                                c[j] = zf[j].sigmoid() * c[j] + zi[j].sigmoid() * zg[j].tanh();
                                zo[j].sigmoid() * c[j].tanh()
                            })
                            .collect()
                    }
                    CellKind::Ugrnn => {
                        let (zg, zc) = (pre(0), pre(1));
                        (0..h)
                            .map(|j| {
                                let u = zg[j].sigmoid();
                                u * prev[j] + (Dd::ONE - u) * zc[j].tanh()
                            })
                            .collect()
                    }
                };
                hs[l][lane] = next.clone();
                x = next;
            }
            let logits: Vec<Dd> = (0..vocab)
                .map(|v| (0..h).fold(proj_b[v], |acc, j| acc + x[j] * proj_w[j * vocab + v]))
                .collect();
            let m = logits.iter().fold(f64::MIN, |m, z| m.max(z.hi));
            let sum = logits.iter().fold(Dd::ZERO, |acc, &z| acc + (z - Dd::from(m)).exp());
            total = total + Dd::from(m) + sum.ln() - logits[tgt[lane]];
        }
    }
    total
}


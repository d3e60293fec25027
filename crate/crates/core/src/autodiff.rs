//! Minimal reverse-mode differentiation over dense `f64` vectors.
//!
//! A [`Tape`] records vector-valued operations against a read-only
//! [`ParamStore`]; [`Tape::backward`] accumulates parameter gradients into a
//! [`Grads`] buffer aligned with the store. Scalars are length-1 vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A named dense tensor stored row-major (`rows x cols`; vectors have `cols = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter shape mismatch");
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            data: self.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }
}

/// Gradient buffer aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    TimeEncode {
        omega: ParamId,
        phi: ParamId,
        dt: f64,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Dot(Var, Var),
    Softmax(Var),
    WeightedSum {
        weights: Var,
        items: Vec<Var>,
    },
    NegLogClamped {
        x: Var,
        lo: f64,
        hi: f64,
    },
    CosineToConst {
        x: Var,
        target: Vec<f64>,
    },
    Sum(Vec<Var>),
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    vals: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            vals: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn push(&mut self, val: Vec<f64>, op: Op) -> Var {
        self.vals.push(val);
        self.ops.push(op);
        Var(self.vals.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.vals[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.vals[v.0].len(), 1);
        self.vals[v.0][0]
    }

    pub fn constant(&mut self, v: Vec<f64>) -> Var {
        self.push(v, Op::Leaf)
    }

    /// `W x + b`.
    pub fn linear(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let wp = self.params.get(w);
        let xv = &self.vals[x.0];
        assert_eq!(wp.cols, xv.len(), "linear `{}`: input dimension", wp.name);
        let mut y: Vec<f64> = wp.data.chunks_exact(wp.cols).map(|row| dot(row, xv)).collect();
        if let Some(b) = b {
            for (yi, bi) in y.iter_mut().zip(&self.params.get(b).data) {
                *yi += bi;
            }
        }
        self.push(y, Op::Linear { w, b, x })
    }

    /// `cos(omega * dt + phi)`.
    pub fn time_encode(&mut self, omega: ParamId, phi: ParamId, dt: f64) -> Var {
        let om = &self.params.get(omega).data;
        let ph = &self.params.get(phi).data;
        let y = om.iter().zip(ph).map(|(w, p)| (w * dt + p).cos()).collect();
        self.push(y, Op::TimeEncode { omega, phi, dt })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut y = Vec::with_capacity(parts.iter().map(|p| self.vals[p.0].len()).sum());
        for p in parts {
            y.extend_from_slice(&self.vals[p.0]);
        }
        self.push(y, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let y = self.vals[x.0][start..start + len].to_vec();
        self.push(y, Op::Slice { x, start })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (&self.vals[a.0], &self.vals[b.0]);
        assert_eq!(va.len(), vb.len(), "elementwise length mismatch");
        let y = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.push(y, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Var {
        let y = self.vals[a.0].iter().zip(&c).map(|(x, m)| x * m).collect();
        self.push(y, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.vals[a.0].iter().map(|x| x * c).collect();
        self.push(y, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].iter().map(|x| 1.0 - x).collect();
        self.push(y, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].iter().map(|&x| sigmoid(x)).collect();
        self.push(y, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].iter().map(|x| x.tanh()).collect();
        self.push(y, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].iter().map(|x| x.max(0.0)).collect();
        self.push(y, Op::Relu(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let y = dot(&self.vals[a.0], &self.vals[b.0]);
        self.push(vec![y], Op::Dot(a, b))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let x = &self.vals[a.0];
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let y = e.into_iter().map(|v| v / s).collect();
        self.push(y, Op::Softmax(a))
    }

    /// `sum_i weights[i] * items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let w = &self.vals[weights.0];
        assert_eq!(w.len(), items.len());
        let mut y = vec![0.0; self.vals[items[0].0].len()];
        for (wi, it) in w.iter().zip(items) {
            axpy(&mut y, *wi, &self.vals[it.0]);
        }
        self.push(
            y,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        )
    }

    /// `-ln(clamp(x, lo, hi))` on a scalar; zero gradient where clamped.
    pub fn neg_log_clamped(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.scalar(x).clamp(lo, hi);
        self.push(vec![-v.ln()], Op::NegLogClamped { x, lo, hi })
    }

    /// Cosine similarity against a constant vector; zero when either norm is zero.
    pub fn cosine_to_const(&mut self, x: Var, target: Vec<f64>) -> Var {
        let xv = &self.vals[x.0];
        let (nx, nt) = (dot(xv, xv).sqrt(), dot(&target, &target).sqrt());
        let y = if nx == 0.0 || nt == 0.0 {
            0.0
        } else {
            dot(xv, &target) / (nx * nt)
        };
        self.push(vec![y], Op::CosineToConst { x, target })
    }

    pub fn sum(&mut self, items: &[Var]) -> Var {
        let mut y = vec![0.0; self.vals[items[0].0].len()];
        for it in items {
            for (d, v) in y.iter_mut().zip(&self.vals[it.0]) {
                *d += v;
            }
        }
        self.push(y, Op::Sum(items.to_vec()))
    }

    /// Back-propagates from scalar `root`, adding parameter gradients into `grads`.
    pub fn backward(&self, root: Var, grads: &mut Grads) {
        assert_eq!(self.vals[root.0].len(), 1, "backward needs a scalar root");
        let mut g: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        g[root.0] = Some(vec![1.0]);

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let y = &self.vals[i];
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Linear { w, b, x } => {
                    let wp = self.params.get(*w);
                    let xv = &self.vals[x.0];
                    {
                        let gw = &mut grads.data[w.0];
                        for (r, dyr) in dy.iter().enumerate() {
                            if *dyr != 0.0 {
                                axpy(&mut gw[r * wp.cols..(r + 1) * wp.cols], *dyr, xv);
                            }
                        }
                    }
                    if let Some(b) = b {
                        axpy(&mut grads.data[b.0], 1.0, &dy);
                    }
                    let dx = acc(&mut g, *x, xv.len());
                    for (r, dyr) in dy.iter().enumerate() {
                        if *dyr != 0.0 {
                            axpy(dx, *dyr, &wp.data[r * wp.cols..(r + 1) * wp.cols]);
                        }
                    }
                }
                Op::TimeEncode { omega, phi, dt } => {
                    let om = &self.params.get(*omega).data;
                    let ph = &self.params.get(*phi).data;
                    for j in 0..dy.len() {
                        let s = -(om[j] * dt + ph[j]).sin() * dy[j];
                        grads.data[omega.0][j] += s * dt;
                        grads.data[phi.0][j] += s;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.vals[p.0].len();
                        axpy(acc(&mut g, *p, n), 1.0, &dy[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.vals[x.0].len();
                    let dx = acc(&mut g, *x, n);
                    axpy(&mut dx[*start..*start + dy.len()], 1.0, &dy);
                }
                Op::Add(a, b) => {
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &dy);
                    axpy(acc(&mut g, *b, dy.len()), 1.0, &dy);
                }
                Op::Sub(a, b) => {
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &dy);
                    axpy(acc(&mut g, *b, dy.len()), -1.0, &dy);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.vals[a.0], &self.vals[b.0]);
                    let da: Vec<f64> = dy.iter().zip(vb).map(|(d, x)| d * x).collect();
                    let db: Vec<f64> = dy.iter().zip(va).map(|(d, x)| d * x).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &da);
                    axpy(acc(&mut g, *b, dy.len()), 1.0, &db);
                }
                Op::MulConst(a, c) => {
                    let da: Vec<f64> = dy.iter().zip(c).map(|(d, m)| d * m).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &da);
                }
                Op::Scale(a, c) => axpy(acc(&mut g, *a, dy.len()), *c, &dy),
                Op::OneMinus(a) => axpy(acc(&mut g, *a, dy.len()), -1.0, &dy),
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = dy.iter().zip(y).map(|(d, s)| d * s * (1.0 - s)).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &d);
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = dy.iter().zip(y).map(|(d, t)| d * (1.0 - t * t)).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &d);
                }
                Op::Relu(a) => {
                    let d: Vec<f64> = dy
                        .iter()
                        .zip(&self.vals[a.0])
                        .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                        .collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &d);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (&self.vals[a.0], &self.vals[b.0]);
                    axpy(acc(&mut g, *a, va.len()), dy[0], vb);
                    axpy(acc(&mut g, *b, vb.len()), dy[0], va);
                }
                Op::Softmax(a) => {
                    let s = dot(&dy, y);
                    let d: Vec<f64> = y.iter().zip(&dy).map(|(p, d)| p * (d - s)).collect();
                    axpy(acc(&mut g, *a, dy.len()), 1.0, &d);
                }
                Op::WeightedSum { weights, items } => {
                    let w = &self.vals[weights.0];
                    let dw: Vec<f64> = items.iter().map(|it| dot(&dy, &self.vals[it.0])).collect();
                    axpy(acc(&mut g, *weights, w.len()), 1.0, &dw);
                    for (wi, it) in w.iter().zip(items) {
                        axpy(acc(&mut g, *it, dy.len()), *wi, &dy);
                    }
                }
                Op::NegLogClamped { x, lo, hi } => {
                    let v = self.vals[x.0][0];
                    if v > *lo && v < *hi {
                        acc(&mut g, *x, 1)[0] += -dy[0] / v;
                    }
                }
                Op::CosineToConst { x, target } => {
                    let xv = &self.vals[x.0];
                    let (nx, nt) = (dot(xv, xv).sqrt(), dot(target, target).sqrt());
                    if nx > 0.0 && nt > 0.0 {
                        let c = y[0];
                        let d: Vec<f64> = xv
                            .iter()
                            .zip(target)
                            .map(|(xi, ti)| dy[0] * (ti / (nx * nt) - c * xi / (nx * nx)))
                            .collect();
                        axpy(acc(&mut g, *x, xv.len()), 1.0, &d);
                    }
                }
                Op::Sum(items) => {
                    for it in items {
                        axpy(acc(&mut g, *it, dy.len()), 1.0, &dy);
                    }
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let z = params.zeros_like().data;
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: z.clone(),
            v: z,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads.data)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Floor applied inside the negative log-likelihood.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Dense {
        w: Var,
        b: Var,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    AddN(Vec<Var>),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Lstm {
        x: Var,
        h: Var,
        c: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        /// activated gates i, f, g, o
        act: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    Nll {
        probs: Var,
        target: usize,
    },
    /// `X Wᵀ + b` applied to every row of `X: [T,k]`.
    DenseRows {
        w: Var,
        b: Var,
        x: Var,
    },
    Reshape(Var),
    /// Column concatenation; vector parts are broadcast to every row.
    HCat(Vec<Var>),
    /// A whole LSTM layer over a `[T, in]` input, returning `[T, H]`.
    LstmSeq {
        x: Var,
        h0: Var,
        c0: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        act: Vec<f64>,
        cs: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    /// Summed floored NLL, one target per row.
    NllRows {
        probs: Var,
        targets: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for one example.
///
/// Parameters are borrowed from a [`ParamStore`] and never copied; each
/// parameter appears on the tape at most once.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Vec<f64>>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Sixteen independent partial sums keep the adds out of one dependency
    // chain and let the compiler use vector registers.
    let mut acc = [0.0f64; 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..16 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = [0.0f64; 4];
    let ta = ra.chunks_exact(4);
    let tb = rb.chunks_exact(4);
    let (ra, rb) = (ta.remainder(), tb.remainder());
    for (x, y) in ta.zip(tb) {
        for l in 0..4 {
            tail[l] += x[l] * y[l];
        }
    }
    let mut s = 0.0;
    for l in 0..8 {
        s += acc[l] + acc[l + 8];
    }
    s += (tail[0] + tail[1]) + (tail[2] + tail[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Rows per block so that a block of `width`-long rows stays in L1.
fn block_rows(width: usize) -> usize {
    (3072 / width.max(1)).max(1)
}

/// `c[i][j] += a_i · b_j` for row-major `a: [m,k]`, `b: [n,k]`, `c: [m,n]`.
fn gemm_abt(a: &[f64], b: &[f64], c: &mut [f64], k: usize) {
    let n = b.len() / k;
    let m = a.len() / k;
    let blk = block_rows(k);
    for j0 in (0..n).step_by(blk) {
        let j1 = (j0 + blk).min(n);
        for i in 0..m {
            let ai = &a[i * k..(i + 1) * k];
            let ci = &mut c[i * n..(i + 1) * n];
            for j in j0..j1 {
                ci[j] += dot(ai, &b[j * k..(j + 1) * k]);
            }
        }
    }
}

/// `w[i] += Σ_t dy[t][i] · x[t]` — the weight gradient `dYᵀ X` for
/// `dy: [T,m]`, `x: [T,k]`, `w: [m,k]`.
fn gemm_atb(dy: &[f64], x: &[f64], w: &mut [f64], k: usize) {
    let m = w.len() / k;
    let t_len = dy.len() / m;
    let blk = block_rows(k);
    for i0 in (0..m).step_by(blk) {
        let i1 = (i0 + blk).min(m);
        for t in 0..t_len {
            let xt = &x[t * k..(t + 1) * k];
            for i in i0..i1 {
                let d = dy[t * m + i];
                if d != 0.0 {
                    axpy(&mut w[i * k..(i + 1) * k], d, xt);
                }
            }
        }
    }
}

/// `dx[t] += Σ_i dy[t][i] · w[i]` — the input gradient `dY W`.
fn gemm_ab(dy: &[f64], w: &[f64], dx: &mut [f64], k: usize) {
    let m = w.len() / k;
    let t_len = dy.len() / m;
    let blk = block_rows(k);
    for i0 in (0..m).step_by(blk) {
        let i1 = (i0 + blk).min(m);
        for t in 0..t_len {
            let dxt = &mut dx[t * k..(t + 1) * k];
            for i in i0..i1 {
                let d = dy[t * m + i];
                if d != 0.0 {
                    axpy(dxt, d, &w[i * k..(i + 1) * k]);
                }
            }
        }
    }
}

/// `tanh` through one `exp`, about twice as fast as `f64::tanh` and within
/// a few ulps of it.
#[inline]
fn tanh(x: f64) -> f64 {
    if x.abs() < 0.125 {
        return x.tanh();
    }
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; params.len()],
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.value(v).to_vec(),
        }
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).filter(|g| !g.is_empty()).map(Vec::as_slice)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Dense { w, b, x } => self.needs(*w) || self.needs(*b) || self.needs(*x),
            Op::AddN(vs) | Op::Concat(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::Scale(x, _)
            | Op::Offset(x)
            | Op::Slice { x, .. }
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Softmax(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::Nll { probs: x, .. }
            | Op::NllRows { probs: x, .. }
            | Op::Reshape(x) => self.needs(*x),
            Op::DenseRows { w, b, x } => self.needs(*w) || self.needs(*b) || self.needs(*x),
            Op::HCat(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::LstmSeq {
                x,
                h0,
                c0,
                w_ih,
                w_hh,
                b,
                ..
            } => [*x, *h0, *c0, *w_ih, *w_hh, *b].iter().any(|v| self.needs(*v)),
            Op::Lstm {
                x,
                h,
                c,
                w_ih,
                w_hh,
                b,
                ..
            } => [*x, *h, *c, *w_ih, *w_hh, *b].iter().any(|v| self.needs(*v)),
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t.shape, t.data, Op::Leaf)
    }

    pub fn input_vec(&mut self, data: Vec<f64>) -> Var {
        self.input(Tensor::vector(data))
    }

    /// An input whose gradient is kept after [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let v = self.push(t.shape, t.data, Op::Leaf);
        self.nodes[v.0].needs_grad = true;
        v
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape.clone();
        let v = self.push(shape, Vec::new(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize> {
        match self.shape(v) {
            [n] => Ok(*n),
            s => Err(Error::shape(op, format!("expected a vector, got {s:?}"))),
        }
    }

    /// `[m,k] × [k]` or `[m,k] × [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = match self.shape(a) {
            [m, k] => (*m, *k),
            s => return Err(Error::shape("matmul", format!("lhs must be a matrix, got {s:?}"))),
        };
        let (kb, n, out_shape) = match self.shape(b) {
            [kb] => (*kb, 1, vec![m]),
            [kb, n] => (*kb, *n, vec![m, *n]),
            s => return Err(Error::shape("matmul", format!("bad rhs shape {s:?}"))),
        };
        if kb != k {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * k..(i + 1) * k];
            for (p, &aik) in row.iter().enumerate() {
                axpy(&mut out[i * n..(i + 1) * n], aik, &bv[p * n..(p + 1) * n]);
            }
        }
        Ok(self.push(out_shape, out, Op::MatMul(a, b)))
    }

    /// Affine map `W x + b` for `W: [m,k]`, `x: [k]`, `b: [m]`.
    pub fn dense(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (m, k) = match self.shape(w) {
            [m, k] => (*m, *k),
            s => return Err(Error::shape("dense", format!("weight must be a matrix, got {s:?}"))),
        };
        let xl = self.vector_len("dense", x)?;
        let bl = self.vector_len("dense", b)?;
        if xl != k || bl != m {
            return Err(Error::shape(
                "dense",
                format!("W {m}x{k}, x {xl}, b {bl}"),
            ));
        }
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        let out: Vec<f64> = (0..m)
            .map(|i| bv[i] + dot(&wv[i * k..(i + 1) * k], xv))
            .collect();
        Ok(self.push(vec![m], out, Op::Dense { w, b, x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b)))
    }

    /// Sum of equally shaped values.
    pub fn add_n(&mut self, vs: &[Var]) -> Result<Var> {
        let first = *vs
            .first()
            .ok_or_else(|| Error::shape("add_n", "no operands"))?;
        let mut out = self.value(first).to_vec();
        for &v in &vs[1..] {
            self.same_shape("add_n", first, v)?;
            axpy(&mut out, 1.0, self.value(v));
        }
        Ok(self.push(self.shape(first).to_vec(), out, Op::AddN(vs.to_vec())))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x + c).collect();
        self.push(self.shape(a).to_vec(), out, Op::Offset(a))
    }

    /// Concatenation of the flattened values into one vector.
    pub fn concat(&mut self, vs: &[Var]) -> Result<Var> {
        if vs.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let mut out = Vec::new();
        for &v in vs {
            out.extend_from_slice(self.value(v));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat(vs.to_vec())))
    }

    /// A contiguous run of the flattened values, as a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(x).len();
        if start + len > n {
            return Err(Error::shape("slice", format!("[{start}, {}) of {n}", start + len)));
        }
        let out = self.value(x)[start..start + len].to_vec();
        Ok(self.push(vec![len], out, Op::Slice { x, start }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| tanh(v)).collect();
        self.push(self.shape(x).to_vec(), out, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.exp()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.ln()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Log(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let width = *self
            .shape(x)
            .last()
            .ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        if width == 0 {
            return Err(Error::shape("softmax", "empty last axis"));
        }
        let out = softmax_rows(self.value(x), width);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Softmax(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![], vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let s = self.value(x).iter().sum::<f64>() / n as f64;
        Ok(self.push(vec![], vec![s], Op::Mean(x)))
    }

    /// One LSTM step. Gate rows of the weights are ordered input, forget,
    /// cell candidate, output. Returns `(h, c)`.
    pub fn lstm_cell(
        &mut self,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        h_prev: Var,
        c_prev: Var,
        x: Var,
    ) -> Result<(Var, Var)> {
        let hd = self.vector_len("lstm_cell", h_prev)?;
        let xd = self.vector_len("lstm_cell", x)?;
        if self.shape(c_prev) != [hd]
            || self.shape(w_ih) != [4 * hd, xd]
            || self.shape(w_hh) != [4 * hd, hd]
            || self.shape(b) != [4 * hd]
        {
            return Err(Error::shape(
                "lstm_cell",
                format!(
                    "x {xd}, h {hd}, c {:?}, W_ih {:?}, W_hh {:?}, b {:?}",
                    self.shape(c_prev),
                    self.shape(w_ih),
                    self.shape(w_hh),
                    self.shape(b)
                ),
            ));
        }
        let (wi, wh, bv) = (self.value(w_ih), self.value(w_hh), self.value(b));
        let (xv, hv, cv) = (self.value(x), self.value(h_prev), self.value(c_prev));
        let mut act = vec![0.0; 4 * hd];
        for r in 0..4 * hd {
            let pre = bv[r] + dot(&wi[r * xd..(r + 1) * xd], xv) + dot(&wh[r * hd..(r + 1) * hd], hv);
            act[r] = if (2 * hd..3 * hd).contains(&r) {
                tanh(pre)
            } else {
                sigmoid(pre)
            };
        }
        let mut out = vec![0.0; 2 * hd];
        let mut tanh_c = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (act[j], act[hd + j], act[2 * hd + j], act[3 * hd + j]);
            let c = f * cv[j] + i * g;
            tanh_c[j] = tanh(c);
            out[j] = o * tanh_c[j];
            out[hd + j] = c;
        }
        let both = self.push(
            vec![2 * hd],
            out,
            Op::Lstm {
                x,
                h: h_prev,
                c: c_prev,
                w_ih,
                w_hh,
                b,
                act,
                tanh_c,
            },
        );
        let h = self.slice(both, 0, hd)?;
        let c = self.slice(both, hd, hd)?;
        Ok((h, c))
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// Same values under a new shape of equal size.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} to {shape:?}", self.shape(x)),
            ));
        }
        let out = self.value(x).to_vec();
        Ok(self.push(shape, out, Op::Reshape(x)))
    }

    /// `X Wᵀ + b` for `X: [T,k]`, `W: [m,k]`, `b: [m]`, giving `[T,m]`.
    pub fn dense_rows(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("dense_rows", w)?;
        let (t, xk) = self.matrix_dims("dense_rows", x)?;
        let bl = self.vector_len("dense_rows", b)?;
        if xk != k || bl != m {
            return Err(Error::shape("dense_rows", format!("W {m}x{k}, X {t}x{xk}, b {bl}")));
        }
        let bv = self.value(b);
        let mut out = Vec::with_capacity(t * m);
        for _ in 0..t {
            out.extend_from_slice(bv);
        }
        gemm_abt(self.value(x), self.value(w), &mut out, k);
        Ok(self.push(vec![t, m], out, Op::DenseRows { w, b, x }))
    }

    /// Joins matrices `[T, k_i]` side by side; vector parts `[k_i]` are
    /// repeated on every row.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut rows = None;
        let mut width = 0;
        for &p in parts {
            match self.shape(p) {
                [k] => width += k,
                [r, k] => {
                    if rows.is_some_and(|x| x != *r) {
                        return Err(Error::shape("hcat", "row counts differ"));
                    }
                    rows = Some(*r);
                    width += k;
                }
                s => return Err(Error::shape("hcat", format!("bad part shape {s:?}"))),
            }
        }
        let rows = rows.ok_or_else(|| Error::shape("hcat", "needs at least one matrix part"))?;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                match self.shape(p) {
                    [_] => out.extend_from_slice(v),
                    [_, k] => out.extend_from_slice(&v[r * k..(r + 1) * k]),
                    _ => unreachable!(),
                }
            }
        }
        Ok(self.push(vec![rows, width], out, Op::HCat(parts.to_vec())))
    }

    /// Runs an LSTM layer over every row of `x: [T, in]` from state
    /// `(h0, c0)`; returns the hidden states `[T, H]`. Same gate layout as
    /// [`Tape::lstm_cell`].
    pub fn lstm_seq(
        &mut self,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        h0: Var,
        c0: Var,
        x: Var,
    ) -> Result<Var> {
        let hd = self.vector_len("lstm_seq", h0)?;
        let (t_len, xd) = self.matrix_dims("lstm_seq", x)?;
        if self.shape(c0) != [hd]
            || self.shape(w_ih) != [4 * hd, xd]
            || self.shape(w_hh) != [4 * hd, hd]
            || self.shape(b) != [4 * hd]
        {
            return Err(Error::shape(
                "lstm_seq",
                format!(
                    "x {t_len}x{xd}, h {hd}, c {:?}, W_ih {:?}, W_hh {:?}, b {:?}",
                    self.shape(c0),
                    self.shape(w_ih),
                    self.shape(w_hh),
                    self.shape(b)
                ),
            ));
        }
        if t_len == 0 {
            return Err(Error::shape("lstm_seq", "empty input sequence"));
        }
        let g4 = 4 * hd;
        let mut act = Vec::with_capacity(t_len * g4);
        for _ in 0..t_len {
            act.extend_from_slice(self.value(b));
        }
        gemm_abt(self.value(x), self.value(w_ih), &mut act, xd);
        let wh = self.value(w_hh);
        let mut hs = vec![0.0; t_len * hd];
        let mut cs = vec![0.0; t_len * hd];
        let mut tanh_c = vec![0.0; t_len * hd];
        let mut h_prev = self.value(h0).to_vec();
        let mut c_prev = self.value(c0).to_vec();
        for t in 0..t_len {
            let a = &mut act[t * g4..(t + 1) * g4];
            for (r, ar) in a.iter_mut().enumerate() {
                let pre = *ar + dot(&wh[r * hd..(r + 1) * hd], &h_prev);
                *ar = if (2 * hd..3 * hd).contains(&r) {
                    tanh(pre)
                } else {
                    sigmoid(pre)
                };
            }
            for j in 0..hd {
                let (i, f, g, o) = (a[j], a[hd + j], a[2 * hd + j], a[3 * hd + j]);
                let c = f * c_prev[j] + i * g;
                let tc = tanh(c);
                cs[t * hd + j] = c;
                tanh_c[t * hd + j] = tc;
                hs[t * hd + j] = o * tc;
            }
            h_prev.copy_from_slice(&hs[t * hd..(t + 1) * hd]);
            c_prev.copy_from_slice(&cs[t * hd..(t + 1) * hd]);
        }
        Ok(self.push(
            vec![t_len, hd],
            hs,
            Op::LstmSeq {
                x,
                h0,
                c0,
                w_ih,
                w_hh,
                b,
                act,
                cs,
                tanh_c,
            },
        ))
    }

    /// `Σ_t −ln(max(P[t][targets[t]], 1e-12))` for row-stochastic `P: [T,a]`.
    pub fn nll_rows(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let (t_len, a) = self.matrix_dims("nll_rows", probs)?;
        if targets.len() != t_len {
            return Err(Error::shape("nll_rows", format!("{} targets for {t_len} rows", targets.len())));
        }
        let pv = self.value(probs);
        let mut total = 0.0;
        for (t, &y) in targets.iter().enumerate() {
            if y >= a {
                return Err(Error::shape("nll_rows", format!("target {y} of {a}")));
            }
            total -= pv[t * a + y].max(PROB_FLOOR).ln();
        }
        Ok(self.push(
            vec![],
            vec![total],
            Op::NllRows {
                probs,
                targets: targets.to_vec(),
            },
        ))
    }

    /// `-ln(max(p[target], 1e-12))` for a probability vector.
    pub fn nll(&mut self, probs: Var, target: usize) -> Result<Var> {
        let n = self.vector_len("nll", probs)?;
        if target >= n {
            return Err(Error::shape("nll", format!("target {target} of {n}")));
        }
        let p = self.value(probs)[target].max(PROB_FLOOR);
        Ok(self.push(vec![], vec![-p.ln()], Op::Nll { probs, target }))
    }

    /// Reverse sweep from a scalar `loss`, accumulating parameter gradients
    /// into `grads`. Node gradients of this pass stay readable via
    /// [`Tape::grad`].
    pub fn backward(&mut self, loss: Var, grads: &mut Gradients) -> Result<()> {
        self.backward_scaled(loss, 1.0, grads)
    }

    /// As [`Tape::backward`] with the seed gradient `d loss = scale`.
    pub fn backward_scaled(&mut self, loss: Var, scale: f64, grads: &mut Gradients) -> Result<()> {
        if self.value(loss).len() != 1 || !self.shape(loss).is_empty() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if grads.bufs.len() != self.params.len() {
            return Err(Error::Contract("gradient buffers do not match parameters".into()));
        }
        let count = self.nodes.len();
        let mut g: Vec<Vec<f64>> = (0..count).map(|_| Vec::new()).collect();
        g[loss.0] = vec![scale];

        for idx in (0..=loss.0).rev() {
            if g[idx].is_empty() || !self.nodes[idx].needs_grad {
                continue;
            }
            let dy = std::mem::take(&mut g[idx]);
            self.propagate(idx, &dy, &mut g, grads);
            g[idx] = dy;
        }
        self.grads = g;
        Ok(())
    }

    fn acc<'g>(&self, g: &'g mut [Vec<f64>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let slot = &mut g[v.0];
        if slot.is_empty() {
            let len = match node.op {
                Op::Param(id) => self.params.get(id).len(),
                _ => node.value.len(),
            };
            *slot = vec![0.0; len];
        }
        Some(slot)
    }

    fn propagate(&self, idx: usize, dy: &[f64], g: &mut [Vec<f64>], grads: &mut Gradients) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => axpy(&mut grads.bufs[id.0], 1.0, dy),
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = dy.len() / m;
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(da) = self.acc(g, *a) {
                    for i in 0..m {
                        for p in 0..k {
                            da[i * k + p] += dot(&dy[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                }
                if let Some(db) = self.acc(g, *b) {
                    for i in 0..m {
                        for p in 0..k {
                            axpy(&mut db[p * n..(p + 1) * n], av[i * k + p], &dy[i * n..(i + 1) * n]);
                        }
                    }
                }
            }
            Op::Dense { w, b, x } => {
                let k = self.shape(*w)[1];
                let (wv, xv) = (self.value(*w), self.value(*x));
                if let Some(db) = self.acc(g, *b) {
                    axpy(db, 1.0, dy);
                }
                if let Some(dw) = self.acc(g, *w) {
                    for (i, &d) in dy.iter().enumerate() {
                        if d != 0.0 {
                            axpy(&mut dw[i * k..(i + 1) * k], d, xv);
                        }
                    }
                }
                if let Some(dx) = self.acc(g, *x) {
                    for (i, &d) in dy.iter().enumerate() {
                        axpy(dx, d, &wv[i * k..(i + 1) * k]);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.acc(g, *v) {
                        axpy(d, 1.0, dy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.acc(g, *a) {
                    axpy(d, 1.0, dy);
                }
                if let Some(d) = self.acc(g, *b) {
                    axpy(d, -1.0, dy);
                }
            }
            Op::AddN(vs) => {
                for v in vs {
                    if let Some(d) = self.acc(g, *v) {
                        axpy(d, 1.0, dy);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(d) = self.acc(g, *a) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] * bv[i];
                    }
                }
                if let Some(d) = self.acc(g, *b) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] * av[i];
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(d) = self.acc(g, *x) {
                    axpy(d, *s, dy);
                }
            }
            Op::Offset(x) => {
                if let Some(d) = self.acc(g, *x) {
                    axpy(d, 1.0, dy);
                }
            }
            Op::Concat(vs) => {
                let mut off = 0;
                for v in vs {
                    let len = self.value(*v).len();
                    if let Some(d) = self.acc(g, *v) {
                        axpy(d, 1.0, &dy[off..off + len]);
                    }
                    off += len;
                }
            }
            Op::Slice { x, start } => {
                let start = *start;
                if let Some(d) = self.acc(g, *x) {
                    axpy(&mut d[start..start + dy.len()], 1.0, dy);
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                if let Some(d) = self.acc(g, *x) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                if let Some(d) = self.acc(g, *x) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::Exp(x) => {
                let y = &node.value;
                if let Some(d) = self.acc(g, *x) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] * y[i];
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                if let Some(d) = self.acc(g, *x) {
                    for i in 0..dy.len() {
                        d[i] += dy[i] / xv[i];
                    }
                }
            }
            Op::Softmax(x) => {
                let p = &node.value;
                let width = *node.shape.last().unwrap_or(&1);
                if let Some(d) = self.acc(g, *x) {
                    for r in 0..p.len() / width {
                        let (pr, dr) = (&p[r * width..(r + 1) * width], &dy[r * width..(r + 1) * width]);
                        let inner = dot(pr, dr);
                        for j in 0..width {
                            d[r * width + j] += pr[j] * (dr[j] - inner);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = self.acc(g, *x) {
                    d.iter_mut().for_each(|v| *v += dy[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(d) = self.acc(g, *x) {
                    let s = dy[0] / d.len() as f64;
                    d.iter_mut().for_each(|v| *v += s);
                }
            }
            Op::Lstm {
                x,
                h,
                c,
                w_ih,
                w_hh,
                b,
                act,
                tanh_c,
            } => {
                let hd = tanh_c.len();
                let xd = self.value(*x).len();
                let cv = self.value(*c);
                let (dh, dc) = dy.split_at(hd);
                let mut dpre = vec![0.0; 4 * hd];
                let mut dc_prev = vec![0.0; hd];
                for j in 0..hd {
                    let (i, f, gg, o) = (act[j], act[hd + j], act[2 * hd + j], act[3 * hd + j]);
                    let tc = tanh_c[j];
                    let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                    let d_o = dh[j] * tc;
                    let d_i = dct * gg;
                    let d_g = dct * i;
                    let d_f = dct * cv[j];
                    dc_prev[j] = dct * f;
                    dpre[j] = d_i * i * (1.0 - i);
                    dpre[hd + j] = d_f * f * (1.0 - f);
                    dpre[2 * hd + j] = d_g * (1.0 - gg * gg);
                    dpre[3 * hd + j] = d_o * o * (1.0 - o);
                }
                if let Some(d) = self.acc(g, *c) {
                    axpy(d, 1.0, &dc_prev);
                }
                if let Some(d) = self.acc(g, *b) {
                    axpy(d, 1.0, &dpre);
                }
                let (xv, hv) = (self.value(*x), self.value(*h));
                if let Some(d) = self.acc(g, *w_ih) {
                    for (r, &dp) in dpre.iter().enumerate() {
                        axpy(&mut d[r * xd..(r + 1) * xd], dp, xv);
                    }
                }
                if let Some(d) = self.acc(g, *w_hh) {
                    for (r, &dp) in dpre.iter().enumerate() {
                        axpy(&mut d[r * hd..(r + 1) * hd], dp, hv);
                    }
                }
                let wi = self.value(*w_ih);
                if let Some(d) = self.acc(g, *x) {
                    for (r, &dp) in dpre.iter().enumerate() {
                        axpy(d, dp, &wi[r * xd..(r + 1) * xd]);
                    }
                }
                let wh = self.value(*w_hh);
                if let Some(d) = self.acc(g, *h) {
                    for (r, &dp) in dpre.iter().enumerate() {
                        axpy(d, dp, &wh[r * hd..(r + 1) * hd]);
                    }
                }
            }
            Op::Nll { probs, target } => {
                let p = self.value(*probs)[*target];
                if p > PROB_FLOOR {
                    if let Some(d) = self.acc(g, *probs) {
                        d[*target] -= dy[0] / p;
                    }
                }
            }
            Op::NllRows { probs, targets } => {
                let a = self.shape(*probs)[1];
                let pv = self.value(*probs);
                if let Some(d) = self.acc(g, *probs) {
                    for (t, &y) in targets.iter().enumerate() {
                        let p = pv[t * a + y];
                        if p > PROB_FLOOR {
                            d[t * a + y] -= dy[0] / p;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = self.acc(g, *x) {
                    axpy(d, 1.0, dy);
                }
            }
            Op::DenseRows { w, b, x } => {
                let (m, k) = (self.shape(*w)[0], self.shape(*w)[1]);
                if let Some(db) = self.acc(g, *b) {
                    for row in dy.chunks_exact(m) {
                        axpy(db, 1.0, row);
                    }
                }
                let xv = self.value(*x);
                if let Some(dw) = self.acc(g, *w) {
                    gemm_atb(dy, xv, dw, k);
                }
                let wv = self.value(*w);
                if let Some(dx) = self.acc(g, *x) {
                    gemm_ab(dy, wv, dx, k);
                }
            }
            Op::HCat(parts) => {
                let width = node.shape[1];
                let rows = node.shape[0];
                let mut off = 0;
                for p in parts {
                    let (is_vec, k) = match self.shape(*p) {
                        [k] => (true, *k),
                        [_, k] => (false, *k),
                        _ => unreachable!(),
                    };
                    if let Some(d) = self.acc(g, *p) {
                        for r in 0..rows {
                            let src = &dy[r * width + off..r * width + off + k];
                            if is_vec {
                                axpy(d, 1.0, src);
                            } else {
                                axpy(&mut d[r * k..(r + 1) * k], 1.0, src);
                            }
                        }
                    }
                    off += k;
                }
            }
            Op::LstmSeq {
                x,
                h0,
                c0,
                w_ih,
                w_hh,
                b,
                act,
                cs,
                tanh_c,
            } => {
                let hd = self.value(*h0).len();
                let g4 = 4 * hd;
                let t_len = dy.len() / hd;
                let xd = self.shape(*x)[1];
                let wh = self.value(*w_hh);
                let c0v = self.value(*c0);
                let mut dpre = vec![0.0; t_len * g4];
                let mut dh_next = vec![0.0; hd];
                let mut dc_next = vec![0.0; hd];
                for t in (0..t_len).rev() {
                    let a = &act[t * g4..(t + 1) * g4];
                    let c_prev = if t == 0 { c0v } else { &cs[(t - 1) * hd..t * hd] };
                    let dp = &mut dpre[t * g4..(t + 1) * g4];
                    for j in 0..hd {
                        let (i, f, gg, o) = (a[j], a[hd + j], a[2 * hd + j], a[3 * hd + j]);
                        let tc = tanh_c[t * hd + j];
                        let dh = dy[t * hd + j] + dh_next[j];
                        let dct = dc_next[j] + dh * o * (1.0 - tc * tc);
                        let d_o = dh * tc;
                        let d_i = dct * gg;
                        let d_g = dct * i;
                        let d_f = dct * c_prev[j];
                        dc_next[j] = dct * f;
                        dp[j] = d_i * i * (1.0 - i);
                        dp[hd + j] = d_f * f * (1.0 - f);
                        dp[2 * hd + j] = d_g * (1.0 - gg * gg);
                        dp[3 * hd + j] = d_o * o * (1.0 - o);
                    }
                    dh_next.iter_mut().for_each(|v| *v = 0.0);
                    for (r, &d) in dp.iter().enumerate() {
                        axpy(&mut dh_next, d, &wh[r * hd..(r + 1) * hd]);
                    }
                }
                if let Some(d) = self.acc(g, *h0) {
                    axpy(d, 1.0, &dh_next);
                }
                if let Some(d) = self.acc(g, *c0) {
                    axpy(d, 1.0, &dc_next);
                }
                if let Some(db) = self.acc(g, *b) {
                    for row in dpre.chunks_exact(g4) {
                        axpy(db, 1.0, row);
                    }
                }
                let xv = self.value(*x);
                if let Some(dw) = self.acc(g, *w_ih) {
                    gemm_atb(&dpre, xv, dw, xd);
                }
                if self.needs(*w_hh) {
                    let mut h_prev = Vec::with_capacity(t_len * hd);
                    h_prev.extend_from_slice(self.value(*h0));
                    h_prev.extend_from_slice(&node.value[..(t_len - 1) * hd]);
                    if let Some(dw) = self.acc(g, *w_hh) {
                        gemm_atb(&dpre, &h_prev, dw, hd);
                    }
                }
                let wi = self.value(*w_ih);
                if let Some(dx) = self.acc(g, *x) {
                    gemm_ab(&dpre, wi, dx, xd);
                }
            }
        }
    }
}

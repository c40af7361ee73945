//! Minimal reverse-mode differentiation over dense row-major f64 matrices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Mat { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Mat::from_vec(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`, optionally with either side transposed.
    pub fn matmul_t(&self, ta: bool, other: &Mat, tb: bool) -> Mat {
        let (m, k) = if ta { (self.cols, self.rows) } else { (self.rows, self.cols) };
        let (k2, n) = if tb { (other.cols, other.rows) } else { (other.rows, other.cols) };
        assert_eq!(k, k2, "matmul inner dimensions");
        let a = |i: usize, p: usize| if ta { self.data[p * self.cols + i] } else { self.data[i * self.cols + p] };
        let mut out = Mat::zeros(m, n);
        if !tb {
            for i in 0..m {
                let orow = &mut out.data[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = a(i, p);
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &other.data[p * n..(p + 1) * n];
                    for (o, b) in orow.iter_mut().zip(brow) {
                        *o += av * b;
                    }
                }
            }
        } else {
            for i in 0..m {
                for j in 0..n {
                    let brow = &other.data[j * other.cols..(j + 1) * other.cols];
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a(i, p) * brow[p];
                    }
                    out.data[i * n + j] = s;
                }
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        self.matmul_t(false, other, false)
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    MeanRows(Var),
    RepeatRow(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    DivRows(Var, Var),
    SqErrSum(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Records one forward evaluation. Leaves created with [`Tape::param`] are
/// differentiable; [`Tape::constant`] leaves are not.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "bias shape");
        let mut v = self.value(a).clone();
        let b = &self.nodes[row.0].value.data;
        for i in 0..r {
            for j in 0..c {
                v.data[i * c + j] += b[j];
            }
        }
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let va = self.value(a);
        let vb = self.value(b);
        let v = Mat {
            rows: va.rows,
            cols: va.cols,
            data: va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
        };
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let c = v.cols;
        for row in v.data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), &[a])
    }

    /// Rows `idx` of `a`, in that order.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let c = src.cols;
        let mut v = Mat::zeros(idx.len(), c);
        for (k, &i) in idx.iter().enumerate() {
            v.data[k * c..(k + 1) * c].copy_from_slice(src.row(i));
        }
        self.push(v, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// `out[idx[k]] += a[k]` into an `n_out`-row zero matrix.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_out: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows, idx.len(), "scatter index length");
        let c = src.cols;
        let mut v = Mat::zeros(n_out, c);
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..c {
                v.data[i * c + j] += src.data[k * c + j];
            }
        }
        self.push(v, Op::ScatterAddRows(a, idx.to_vec()), &[a])
    }

    /// Column means as a `1×c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut v = Mat::zeros(1, src.cols);
        for i in 0..src.rows {
            for j in 0..src.cols {
                v.data[j] += src.data[i * src.cols + j];
            }
        }
        let inv = 1.0 / src.rows.max(1) as f64;
        v.data.iter_mut().for_each(|x| *x *= inv);
        self.push(v, Op::MeanRows(a), &[a])
    }

    /// Stacks a `1×c` row `n` times.
    pub fn repeat_row(&mut self, a: Var, n: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows, 1, "repeat_row expects a row");
        let v = Mat::from_vec(n, src.cols, src.data.repeat(n));
        self.push(v, Op::RepeatRow(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat_cols row counts");
            for i in 0..rows {
                v.data[i * cols + off..i * cols + off + m.cols].copy_from_slice(m.row(i));
            }
            off += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows column counts");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.cols, "slice_cols range");
        let mut v = Mat::zeros(src.rows, len);
        for i in 0..src.rows {
            v.data[i * len..(i + 1) * len].copy_from_slice(&src.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start), &[a])
    }

    /// Divides row `i` of `a` by `s[i]` (`s` is `r×1`).
    pub fn div_rows(&mut self, a: Var, s: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(s), (r, 1), "div_rows divisor shape");
        let mut v = self.value(a).clone();
        for i in 0..r {
            let d = self.nodes[s.0].value.data[i];
            for j in 0..c {
                v.data[i * c + j] /= d;
            }
        }
        self.push(v, Op::DivRows(a, s), &[a, s])
    }

    /// `Σ (a − target)²` as a `1×1` value.
    pub fn sq_err_sum(&mut self, a: Var, target: &Mat) -> Var {
        assert_eq!(self.shape(a), target.shape(), "target shape");
        let s: f64 = self.value(a).data.iter().zip(&target.data).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::SqErrSum(a, target.clone()), &[a])
    }

    /// Gradients of the scalar `out` with respect to every node. Entries for
    /// nodes that do not need gradients are `None`.
    pub fn backward(&self, out: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar");
        let mut g: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        g[out.0] = Some(Mat::filled(1, 1, 1.0));
        for idx in (0..=out.0).rev() {
            let Some(go) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let acc = |g: &mut Vec<Option<Mat>>, v: Var, d: Mat| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut g[v.0] {
                    Some(m) => m.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    g[idx] = Some(go);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        acc(&mut g, *a, go.matmul_t(false, val(*b), true));
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(&mut g, *b, val(*a).matmul_t(true, &go, false));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, go.clone());
                    acc(&mut g, *b, go);
                }
                Op::AddRow(a, row) => {
                    let mut gb = Mat::zeros(1, go.cols);
                    for i in 0..go.rows {
                        for j in 0..go.cols {
                            gb.data[j] += go.data[i * go.cols + j];
                        }
                    }
                    acc(&mut g, *a, go);
                    acc(&mut g, *row, gb);
                }
                Op::Mul(a, b) => {
                    let ga = Mat {
                        rows: go.rows,
                        cols: go.cols,
                        data: go.data.iter().zip(&val(*b).data).map(|(x, y)| x * y).collect(),
                    };
                    let gb = Mat {
                        rows: go.rows,
                        cols: go.cols,
                        data: go.data.iter().zip(&val(*a).data).map(|(x, y)| x * y).collect(),
                    };
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut g, *a, go.map(|x| x * s)),
                Op::Gelu(a) => {
                    let x = val(*a);
                    let d = Mat {
                        rows: go.rows,
                        cols: go.cols,
                        data: go.data.iter().zip(&x.data).map(|(gv, xv)| gv * gelu_grad(*xv)).collect(),
                    };
                    acc(&mut g, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let c = y.cols;
                    let mut d = Mat::zeros(y.rows, c);
                    for i in 0..y.rows {
                        let yr = y.row(i);
                        let gr = go.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            d.data[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::Transpose(a) => acc(&mut g, *a, go.transpose()),
                Op::GatherRows(a, idx_rows) => {
                    let src = val(*a);
                    let c = src.cols;
                    let mut d = Mat::zeros(src.rows, c);
                    for (k, &i) in idx_rows.iter().enumerate() {
                        for j in 0..c {
                            d.data[i * c + j] += go.data[k * c + j];
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::ScatterAddRows(a, idx_rows) => {
                    let c = go.cols;
                    let mut d = Mat::zeros(idx_rows.len(), c);
                    for (k, &i) in idx_rows.iter().enumerate() {
                        d.data[k * c..(k + 1) * c].copy_from_slice(go.row(i));
                    }
                    acc(&mut g, *a, d);
                }
                Op::MeanRows(a) => {
                    let r = val(*a).rows;
                    let inv = 1.0 / r.max(1) as f64;
                    let row: Vec<f64> = go.data.iter().map(|x| x * inv).collect();
                    acc(&mut g, *a, Mat::from_vec(r, go.cols, row.repeat(r)));
                }
                Op::RepeatRow(a) => {
                    let mut d = Mat::zeros(1, go.cols);
                    for i in 0..go.rows {
                        for j in 0..go.cols {
                            d.data[j] += go.data[i * go.cols + j];
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = val(*p).cols;
                        let mut d = Mat::zeros(go.rows, c);
                        for i in 0..go.rows {
                            d.data[i * c..(i + 1) * c].copy_from_slice(&go.row(i)[off..off + c]);
                        }
                        off += c;
                        acc(&mut g, *p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = val(*p).shape();
                        acc(&mut g, *p, Mat::from_vec(r, c, go.data[off * c..(off + r) * c].to_vec()));
                        off += r;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = val(*a);
                    let mut d = Mat::zeros(src.rows, src.cols);
                    for i in 0..go.rows {
                        d.data[i * src.cols + start..i * src.cols + start + go.cols].copy_from_slice(go.row(i));
                    }
                    acc(&mut g, *a, d);
                }
                Op::DivRows(a, s) => {
                    let va = val(*a);
                    let vs = val(*s);
                    let c = va.cols;
                    let mut da = Mat::zeros(va.rows, c);
                    let mut ds = Mat::zeros(va.rows, 1);
                    for i in 0..va.rows {
                        let d = vs.data[i];
                        let mut acc_s = 0.0;
                        for j in 0..c {
                            da.data[i * c + j] = go.data[i * c + j] / d;
                            acc_s += go.data[i * c + j] * va.data[i * c + j];
                        }
                        ds.data[i] = -acc_s / (d * d);
                    }
                    acc(&mut g, *a, da);
                    acc(&mut g, *s, ds);
                }
                Op::SqErrSum(a, target) => {
                    let s = go.data[0];
                    let d = Mat {
                        rows: target.rows,
                        cols: target.cols,
                        data: val(*a).data.iter().zip(&target.data).map(|(x, y)| 2.0 * s * (x - y)).collect(),
                    };
                    acc(&mut g, *a, d);
                }
            }
        }
        g
    }
}

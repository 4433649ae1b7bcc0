//! Minimal reverse-mode differentiation over [`Mat`] values.
//!
//! A [`Tape`] records every operation in execution order. Leaves are marked
//! trainable or constant; gradient bookkeeping is skipped for any node that
//! does not depend on a trainable leaf, so frozen parameters never receive a
//! gradient.

use std::rc::Rc;

use crate::tensor::{sigmoid, Mat};

pub type Var = usize;

const LN_EPS: f64 = 1e-6;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Silu(Var),
    LayerNorm(Var, Vec<f64>),
    Rope(Var, Rc<Vec<f64>>),
    Softmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Mse(Var, Rc<Mat>),
}

struct Node {
    value: Mat,
    op: Op,
    grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v).and_then(|g| g.as_ref())
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

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v].grad
    }

    fn push(&mut self, value: Mat, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value, op, grad });
        self.nodes.len() - 1
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v].grad)
    }

    pub fn leaf(&mut self, value: Mat, trainable: bool) -> Var {
        self.push(value, Op::Leaf, trainable)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let g = self.any_grad(&[a, b]);
        self.push(v, Op::MatMul(a, b), g)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        let g = self.any_grad(&[a, b]);
        self.push(v, Op::MatMulNT(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.any_grad(&[a, b]);
        self.push(v, Op::Add(a, b), g)
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!((1, self.value(a).cols), bv.shape(), "add_row shape");
        let mut v = self.value(a).clone();
        for r in v.data.chunks_exact_mut(bv.cols) {
            r.iter_mut().zip(&bv.data).for_each(|(x, y)| *x += y);
        }
        let g = self.any_grad(&[a, b]);
        self.push(v, Op::AddRow(a, b), g)
    }

    /// Multiplies every row of `a` elementwise by the `1 x cols` row `b`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!((1, self.value(a).cols), bv.shape(), "mul_row shape");
        let mut v = self.value(a).clone();
        for r in v.data.chunks_exact_mut(bv.cols) {
            r.iter_mut().zip(&bv.data).for_each(|(x, y)| *x *= y);
        }
        let g = self.any_grad(&[a, b]);
        self.push(v, Op::MulRow(a, b), g)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let v = Mat::from_vec(src.rows, src.cols, src.data.iter().map(|x| x + c).collect());
        let g = self.nodes[a].grad;
        self.push(v, Op::AddScalar(a), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let g = self.nodes[a].grad;
        self.push(v, Op::Scale(a, s), g)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let v = Mat::from_vec(
            src.rows,
            src.cols,
            src.data.iter().map(|&x| x * sigmoid(x)).collect(),
        );
        let g = self.nodes[a].grad;
        self.push(v, Op::Silu(a), g)
    }

    /// Per-row normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let n = src.cols as f64;
        let mut v = src.clone();
        let mut inv_std = Vec::with_capacity(src.rows);
        for r in v.data.chunks_exact_mut(src.cols) {
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            r.iter_mut().for_each(|x| *x = (*x - mean) * is);
            inv_std.push(is);
        }
        let g = self.nodes[a].grad;
        self.push(v, Op::LayerNorm(a, inv_std), g)
    }

    /// Rotates row `i`'s consecutive column pairs by `angles[i * cols/2 ..]`.
    pub fn rope(&mut self, a: Var, angles: Rc<Vec<f64>>) -> Var {
        let src = self.value(a);
        let pairs = src.cols / 2;
        assert_eq!(angles.len(), src.rows * pairs, "rope angle count");
        let mut v = src.clone();
        for (i, r) in v.data.chunks_exact_mut(src.cols).enumerate() {
            crate::rope::rotate_in_place(r, &angles[i * pairs..(i + 1) * pairs], false);
        }
        let g = self.nodes[a].grad;
        self.push(v, Op::Rope(a, angles), g)
    }

    /// Row softmax. Entries equal to `-inf` receive probability zero.
    pub fn softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut v = src.clone();
        for r in v.data.chunks_exact_mut(src.cols) {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in r.iter_mut() {
                *x = if *x == f64::NEG_INFINITY {
                    0.0
                } else {
                    (*x - m).exp()
                };
                s += *x;
            }
            r.iter_mut().for_each(|x| *x /= s);
        }
        let g = self.nodes[a].grad;
        self.push(v, Op::Softmax(a), g)
    }

    /// Adds `-inf` to the columns of masked-out keys. Constant w.r.t. the mask.
    pub fn mask_cols(&mut self, a: Var, keep: &[bool]) -> Var {
        let src = self.value(a);
        assert_eq!(keep.len(), src.cols, "mask length");
        let mut bias = Mat::zeros(1, src.cols);
        for (b, &k) in bias.data.iter_mut().zip(keep) {
            if !k {
                *b = f64::NEG_INFINITY;
            }
        }
        let b = self.constant(bias);
        self.add_row(a, b)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.cols, "slice_cols bounds");
        let mut v = Mat::zeros(src.rows, len);
        for i in 0..src.rows {
            v.row_mut(i).copy_from_slice(&src.row(i)[start..start + len]);
        }
        let g = self.nodes[a].grad;
        self.push(v, Op::SliceCols(a, start), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows, rows, "concat_cols rows");
            for i in 0..rows {
                v.row_mut(i)[off..off + pv.cols].copy_from_slice(pv.row(i));
            }
            off += pv.cols;
        }
        let g = self.any_grad(parts);
        self.push(v, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat_rows cols");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        let g = self.any_grad(parts);
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), g)
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let src = self.value(a);
        let mut v = Mat::zeros(idx.len(), src.cols);
        for (o, &i) in idx.iter().enumerate() {
            v.row_mut(o).copy_from_slice(src.row(i));
        }
        let g = self.nodes[a].grad;
        self.push(v, Op::GatherRows(a, idx), g)
    }

    /// Mean squared error against a constant target, as a `1 x 1` value.
    pub fn mse(&mut self, a: Var, target: Rc<Mat>) -> Var {
        let src = self.value(a);
        assert_eq!(src.shape(), target.shape(), "mse shape");
        let n = src.data.len() as f64;
        let loss = src
            .data
            .iter()
            .zip(&target.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        let g = self.nodes[a].grad;
        self.push(Mat::from_vec(1, 1, vec![loss]), Op::Mse(a, target), g)
    }

    /// Gradients of the scalar `out` with respect to every node that needs one.
    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[out].grad {
            return Grads { grads };
        }
        let (r, c) = self.nodes[out].value.shape();
        grads[out] = Some(Mat::from_vec(r, c, vec![1.0; r * c]));

        for id in (0..=out).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let acc = |v: Var, g: Mat, grads: &mut Vec<Option<Mat>>| {
                if !self.nodes[v].grad {
                    return;
                }
                match &mut grads[v] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(gout);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[*a].grad {
                        acc(*a, gout.matmul_nt(self.value(*b)), &mut grads);
                    }
                    if self.nodes[*b].grad {
                        acc(*b, self.value(*a).matmul_tn(&gout), &mut grads);
                    }
                }
                Op::MatMulNT(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    if self.nodes[*a].grad {
                        acc(*a, gout.matmul(self.value(*b)), &mut grads);
                    }
                    if self.nodes[*b].grad {
                        acc(*b, gout.matmul_tn(self.value(*a)), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, gout.clone(), &mut grads);
                    acc(*b, gout, &mut grads);
                }
                Op::AddRow(a, b) => {
                    if self.nodes[*b].grad {
                        acc(*b, gout.col_sums(), &mut grads);
                    }
                    acc(*a, gout, &mut grads);
                }
                Op::MulRow(a, b) => {
                    let bv = self.value(*b);
                    if self.nodes[*b].grad {
                        let av = self.value(*a);
                        let mut gb = Mat::zeros(1, bv.cols);
                        for (ga, xa) in gout.data.chunks_exact(bv.cols).zip(av.data.chunks_exact(bv.cols)) {
                            for j in 0..bv.cols {
                                gb.data[j] += ga[j] * xa[j];
                            }
                        }
                        acc(*b, gb, &mut grads);
                    }
                    if self.nodes[*a].grad {
                        let mut ga = gout;
                        for r in ga.data.chunks_exact_mut(bv.cols) {
                            r.iter_mut().zip(&bv.data).for_each(|(x, y)| *x *= y);
                        }
                        acc(*a, ga, &mut grads);
                    }
                }
                Op::AddScalar(a) => acc(*a, gout, &mut grads),
                Op::Scale(a, s) => acc(*a, gout.scale(*s), &mut grads),
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let mut g = gout;
                    for (gi, &xi) in g.data.iter_mut().zip(&x.data) {
                        let s = sigmoid(xi);
                        *gi *= s * (1.0 + xi * (1.0 - s));
                    }
                    acc(*a, g, &mut grads);
                }
                Op::LayerNorm(a, inv_std) => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut g = gout;
                    for (i, gr) in g.data.chunks_exact_mut(y.cols).enumerate() {
                        let yr = y.row(i);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = inv_std[i] * (*gv - mean_g - yv * mean_gy);
                        }
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Rope(a, angles) => {
                    let mut g = gout;
                    let pairs = g.cols / 2;
                    let cols = g.cols;
                    for (i, r) in g.data.chunks_exact_mut(cols).enumerate() {
                        crate::rope::rotate_in_place(r, &angles[i * pairs..(i + 1) * pairs], true);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut g = gout;
                    for (i, gr) in g.data.chunks_exact_mut(y.cols).enumerate() {
                        let yr = y.row(i);
                        let s = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>();
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - s);
                        }
                    }
                    acc(*a, g, &mut grads);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut g = Mat::zeros(src.rows, src.cols);
                    for i in 0..src.rows {
                        g.row_mut(i)[*start..*start + gout.cols].copy_from_slice(gout.row(i));
                    }
                    acc(*a, g, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        if self.nodes[p].grad {
                            let mut g = Mat::zeros(gout.rows, pc);
                            for i in 0..gout.rows {
                                g.row_mut(i).copy_from_slice(&gout.row(i)[off..off + pc]);
                            }
                            acc(p, g, &mut grads);
                        }
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pr = self.value(p).rows;
                        if self.nodes[p].grad {
                            let g = Mat::from_vec(
                                pr,
                                gout.cols,
                                gout.data[off * gout.cols..(off + pr) * gout.cols].to_vec(),
                            );
                            acc(p, g, &mut grads);
                        }
                        off += pr;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let src = self.value(*a);
                    let mut g = Mat::zeros(src.rows, src.cols);
                    for (o, &i) in idx.iter().enumerate() {
                        g.row_mut(i)
                            .iter_mut()
                            .zip(gout.row(o))
                            .for_each(|(x, y)| *x += y);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::Mse(a, target) => {
                    let x = self.value(*a);
                    let scale = 2.0 * gout.data[0] / x.data.len() as f64;
                    let g = Mat::from_vec(
                        x.rows,
                        x.cols,
                        x.data
                            .iter()
                            .zip(&target.data)
                            .map(|(p, t)| scale * (p - t))
                            .collect(),
                    );
                    acc(*a, g, &mut grads);
                }
            }
        }
        Grads { grads }
    }
}

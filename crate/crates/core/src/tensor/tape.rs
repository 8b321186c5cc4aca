use super::kernels::{matmul_nt, matmul_tn};
use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
///
/// A `Var` is only meaningful for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    grad: Option<Tensor>,
}

/// Append-only record of tensor operations.
///
/// Nodes are stored in creation order, which is a topological order of the
/// computation graph. A tape is meant to live for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf that receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if it was reached by a backward pass.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b)).map_err(|e| match e {
            TensorError::Shape { .. } => shape_err("matmul", self.value(a), self.value(b)),
            other => other,
        })?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Elementwise sum of equal shapes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a vector `b` to every row of the matrix `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (_, cols) = ta.dims2()?;
        if tb.rank() != 1 || tb.len() != cols {
            return Err(shape_err("add_bias", ta, tb));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (x, y) in row.iter_mut().zip(tb.data()) {
                *x += y;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::AddBias(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.needs(a);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let ng = self.needs(a);
        self.push(out, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let ng = self.needs(a);
        self.push(out, Op::Square(a), ng)
    }

    /// Row-wise softmax of a matrix, stabilized by subtracting each row's max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (_, cols) = ta.dims2()?;
        let mut data = ta.data().to_vec();
        if cols > 0 {
            for row in data.chunks_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::SoftmaxRows(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transposed()?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::Transpose(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Index {
            op: "concat_cols",
            index: 0,
            extent: 0,
        })?;
        let rows = self.value(*first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2()?;
            if r != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        if start > end || end > cols {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: end.max(start),
                extent: cols,
            });
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::matrix(rows, end - start, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::SliceCols(a, start, end), ng))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Index {
            op: "concat_rows",
            index: 0,
            extent: 0,
        })?;
        let cols = self.value(*first).dims2()?.1;
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2()?;
            if c != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Gathers rows of a matrix by index; indices may repeat.
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(TensorError::Index {
                    op: "select_rows",
                    index: i,
                    extent: rows,
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(idx.len(), cols, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::SelectRows(a, idx.to_vec()), ng))
    }

    /// Reverse pass from a scalar. Gradients add onto whatever the leaves
    /// already hold, so repeated calls accumulate until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            let needs = |v: Var| nodes[v.0].needs_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = val(*a).dims2()?;
                    let n = val(*b).cols();
                    if needs(*a) {
                        let bd = val(*b).data();
                        accumulate(&mut adj, *a, m * k, |s| matmul_nt(&g, bd, s, m, n, k));
                    }
                    if needs(*b) {
                        let ad = val(*a).data();
                        accumulate(&mut adj, *b, k * n, |s| matmul_tn(ad, &g, s, m, k, n));
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if needs(v) {
                            accumulate(&mut adj, v, g.len(), |s| add_into(s, &g));
                        }
                    }
                }
                Op::AddBias(a, b) => {
                    if needs(*a) {
                        accumulate(&mut adj, *a, g.len(), |s| add_into(s, &g));
                    }
                    if needs(*b) {
                        let cols = val(*b).len();
                        accumulate(&mut adj, *b, cols, |s| {
                            for row in g.chunks(cols) {
                                add_into(s, row);
                            }
                        });
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*a) {
                        accumulate(&mut adj, *a, g.len(), |s| add_into(s, &g));
                    }
                    if needs(*b) {
                        accumulate(&mut adj, *b, g.len(), |s| {
                            for (x, y) in s.iter_mut().zip(&g) {
                                *x -= y;
                            }
                        });
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        let bd = val(*b).data();
                        accumulate(&mut adj, *a, g.len(), |s| {
                            for ((x, gy), y) in s.iter_mut().zip(&g).zip(bd) {
                                *x += gy * y;
                            }
                        });
                    }
                    if needs(*b) {
                        let ad = val(*a).data();
                        accumulate(&mut adj, *b, g.len(), |s| {
                            for ((x, gy), y) in s.iter_mut().zip(&g).zip(ad) {
                                *x += gy * y;
                            }
                        });
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for (x, gy) in s.iter_mut().zip(&g) {
                            *x += c * gy;
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for ((x, gy), yv) in s.iter_mut().zip(&g).zip(y) {
                            *x += gy * (1.0 - yv * yv);
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for ((x, gy), yv) in s.iter_mut().zip(&g).zip(y) {
                            *x += gy * yv;
                        }
                    });
                }
                Op::Abs(a) => {
                    let xin = val(*a).data();
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for ((x, gy), xv) in s.iter_mut().zip(&g).zip(xin) {
                            // subgradient 0 at 0
                            let sign = if *xv > 0.0 {
                                1.0
                            } else if *xv < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            *x += gy * sign;
                        }
                    });
                }
                Op::Square(a) => {
                    let xin = val(*a).data();
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for ((x, gy), xv) in s.iter_mut().zip(&g).zip(xin) {
                            *x += 2.0 * gy * xv;
                        }
                    });
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.data();
                    let cols = node.value.cols();
                    accumulate(&mut adj, *a, g.len(), |s| {
                        for ((srow, grow), yrow) in
                            s.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols))
                        {
                            let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for ((x, gy), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                                *x += yv * (gy - dot);
                            }
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (r, c) = val(*a).dims2()?;
                    accumulate(&mut adj, *a, g.len(), |s| {
                        // g is c×r
                        for i in 0..r {
                            for j in 0..c {
                                s[i * c + j] += g[j * r + i];
                            }
                        }
                    });
                }
                Op::Reshape(a) => {
                    accumulate(&mut adj, *a, g.len(), |s| add_into(s, &g));
                }
                Op::Sum(a) => {
                    let n = val(*a).len();
                    let g0 = g[0];
                    accumulate(&mut adj, *a, n, |s| s.iter_mut().for_each(|x| *x += g0));
                }
                Op::Mean(a) => {
                    let n = val(*a).len();
                    let g0 = g[0] / n as f64;
                    accumulate(&mut adj, *a, n, |s| s.iter_mut().for_each(|x| *x += g0));
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).cols();
                        if needs(p) {
                            accumulate(&mut adj, p, rows * w, |s| {
                                for r in 0..rows {
                                    let src = &g[r * total + offset..r * total + offset + w];
                                    add_into(&mut s[r * w..(r + 1) * w], src);
                                }
                            });
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (rows, cols) = val(*a).dims2()?;
                    let (start, w) = (*start, end - start);
                    accumulate(&mut adj, *a, rows * cols, |s| {
                        for r in 0..rows {
                            add_into(
                                &mut s[r * cols + start..r * cols + start + w],
                                &g[r * w..(r + 1) * w],
                            );
                        }
                    });
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).len();
                        if needs(p) {
                            accumulate(&mut adj, p, n, |s| add_into(s, &g[offset..offset + n]));
                        }
                        offset += n;
                    }
                }
                Op::SelectRows(a, idx) => {
                    let (rows, cols) = val(*a).dims2()?;
                    accumulate(&mut adj, *a, rows * cols, |s| {
                        for (k, &i) in idx.iter().enumerate() {
                            add_into(
                                &mut s[i * cols..(i + 1) * cols],
                                &g[k * cols..(k + 1) * cols],
                            );
                        }
                    });
                }
            }
        }

        for (i, slot) in adj.into_iter().enumerate() {
            let node = &mut self.nodes[i];
            if !matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            if let Some(g) = slot {
                match &mut node.grad {
                    Some(existing) => add_into(existing.data_mut(), &g),
                    None => node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?),
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap()
    }

    /// Central-difference check of `f` with respect to each listed input.
    fn check_grad(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let loss = tape.sum(out);
        tape.backward(loss).unwrap();
        let eval = |ins: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
            let o = f(&mut t, &vs);
            t.value(o).data().iter().sum::<f64>()
        };
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for (which, input) in inputs.iter().enumerate() {
            let analytic = tape.grad(vars[which]).unwrap().clone();
            for k in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[k] += eps;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[k] -= eps;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.data()[k];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let m = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let x = tape.constant(m.clone());
        let y = tape.matmul(i2, x).unwrap();
        assert_eq!(tape.value(y), &m);

        let b = tape.constant(Tensor::from_rows(&[&[5.0], &[6.0]]));
        let y = tape.matmul(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3] and [2, 3]"));
    }

    #[test]
    fn add_and_bias_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[&[1.0, 2.0]]));
        let z = tape.constant(Tensor::from_rows(&[&[0.0, 0.0]]));
        let s = tape.add(a, z).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 2.0]);

        let m = tape.leaf(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let bias = tape.leaf(Tensor::vector(vec![10.0, 20.0]));
        let s = tape.add_bias(m, bias).unwrap();
        assert_eq!(tape.value(s).data(), &[11.0, 22.0, 13.0, 24.0]);
        let loss = tape.sum(s);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(bias).unwrap().data(), &[2.0, 2.0]);

        let bad = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            tape.add_bias(m, bad),
            Err(TensorError::Shape { .. })
        ));
        assert!(matches!(tape.add(m, a), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn tanh_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let y = tape.tanh(x);
        assert_eq!(tape.value(y).data()[0], 0.0);
        assert!((tape.value(y).data()[1] - 1f64.tanh()).abs() < 1e-15);
        assert!((tape.value(y).data()[1] - 0.761594).abs() < 1e-6);
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().data()[0], 1.0);
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[
            &[2.5, 2.5, 2.5],
            &[0.0, 3f64.ln(), -1e300],
        ]));
        let y = tape.softmax_rows(x).unwrap();
        let v = tape.value(y);
        for k in 0..3 {
            assert!((v.at(0, k) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v.at(1, 0) - 0.25).abs() < 1e-15);
        assert!((v.at(1, 1) - 0.75).abs() < 1e-15);
        assert_eq!(v.at(1, 2), 0.0);
    }

    #[test]
    fn misc_op_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[&[1.0], &[2.0]]));
        let b = tape.constant(Tensor::from_rows(&[&[3.0], &[4.0]]));
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(
            tape.value(c),
            &Tensor::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]])
        );

        let m = tape.leaf(Tensor::from_rows(&[&[2.0, 4.0], &[6.0, 8.0]]));
        let mean = tape.mean(m);
        assert_eq!(tape.value(mean).item(), 5.0);

        let s = tape.sum(m);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(m).unwrap().data(), &[1.0; 4]);

        assert!(matches!(
            tape.slice_cols(m, 1, 3),
            Err(TensorError::Index {
                op: "slice_cols",
                ..
            })
        ));
        assert!(matches!(
            tape.select_rows(m, &[0, 2]),
            Err(TensorError::Index {
                op: "select_rows",
                index: 2,
                extent: 2
            })
        ));
    }

    #[test]
    fn abs_subgradient_is_zero_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.5, 0.0, 2.0]));
        let y = tape.abs(x);
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let w0 = Tensor::from_rows(&[&[0.5, -1.0], &[2.0, 3.0]]);
        let w = tape.leaf(w0.clone());
        let l = tape.sum(w);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0; 4]);

        let mut tape = Tape::new();
        let w = tape.leaf(w0.clone());
        let sq = tape.square(w);
        let l = tape.sum(sq);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &w0.map(|x| 2.0 * x));
        // second call accumulates
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &w0.map(|x| 4.0 * x));
        tape.zero_grad();
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2, 2]));
        assert_eq!(tape.backward(w), Err(TensorError::NotScalar(vec![2, 2])));
    }

    #[test]
    fn unreachable_leaf_has_no_grad() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(2.0));
        let l = tape.square(a);
        tape.backward(l).unwrap();
        assert!(tape.grad(a).is_some());
        assert!(tape.grad(b).is_none());
    }

    #[test]
    fn identity_matmul_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, &[4, 5]);
        assert_eq!(Tensor::eye(4).matmul(&x).unwrap(), x);
    }

    #[test]
    fn finite_difference_every_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a33 = random(&mut rng, &[3, 3]);
        let b33 = random(&mut rng, &[3, 3]);
        let a24 = random(&mut rng, &[2, 4]);
        let b24 = random(&mut rng, &[2, 4]);
        let v4 = random(&mut rng, &[4]);
        let tol = 1e-6;

        type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
        let cases: Vec<(&str, Vec<Tensor>, Build)> = vec![
            (
                "matmul",
                vec![a33.clone(), b33.clone()],
                Box::new(|t, v| t.matmul(v[0], v[1]).unwrap()),
            ),
            (
                "add",
                vec![a24.clone(), b24.clone()],
                Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
            ),
            (
                "add_bias",
                vec![a24.clone(), v4.clone()],
                Box::new(|t, v| t.add_bias(v[0], v[1]).unwrap()),
            ),
            (
                "sub",
                vec![a24.clone(), b24.clone()],
                Box::new(|t, v| t.sub(v[0], v[1]).unwrap()),
            ),
            (
                "mul",
                vec![a24.clone(), b24.clone()],
                Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
            ),
            (
                "scale",
                vec![a24.clone()],
                Box::new(|t, v| t.scale(v[0], -1.7)),
            ),
            ("tanh", vec![a24.clone()], Box::new(|t, v| t.tanh(v[0]))),
            ("exp", vec![a24.clone()], Box::new(|t, v| t.exp(v[0]))),
            ("abs", vec![a24.clone()], Box::new(|t, v| t.abs(v[0]))),
            ("square", vec![a24.clone()], Box::new(|t, v| t.square(v[0]))),
            (
                // weighted so the gradient is not identically zero
                "softmax_rows",
                vec![a24.clone(), b24.clone()],
                Box::new(|t, v| {
                    let s = t.softmax_rows(v[0]).unwrap();
                    t.mul(s, v[1]).unwrap()
                }),
            ),
            (
                "transpose",
                vec![a24.clone(), random(&mut rng, &[4, 2])],
                Box::new(|t, v| {
                    let tr = t.transpose(v[0]).unwrap();
                    t.mul(tr, v[1]).unwrap()
                }),
            ),
            (
                "reshape",
                vec![a24.clone(), random(&mut rng, &[4, 2])],
                Box::new(|t, v| {
                    let r = t.reshape(v[0], &[4, 2]).unwrap();
                    t.mul(r, v[1]).unwrap()
                }),
            ),
            (
                "mean",
                vec![a24.clone()],
                Box::new(|t, v| {
                    let m = t.mean(v[0]);
                    t.square(m)
                }),
            ),
            (
                "concat_cols",
                vec![a24.clone(), a33.clone().reshaped(&[3, 3]).unwrap()],
                Box::new(|t, v| {
                    let x = t.slice_cols(v[0], 0, 3).unwrap();
                    let x = t.transpose(x).unwrap();
                    let c = t.concat_cols(&[x, v[1]]).unwrap();
                    t.square(c)
                }),
            ),
            (
                "concat_rows",
                vec![a24.clone(), b24.clone()],
                Box::new(|t, v| {
                    let c = t.concat_rows(&[v[0], v[1]]).unwrap();
                    t.tanh(c)
                }),
            ),
            (
                "select_rows",
                vec![a33.clone()],
                Box::new(|t, v| {
                    let s = t.select_rows(v[0], &[2, 0, 2]).unwrap();
                    t.square(s)
                }),
            ),
        ];
        for (name, inputs, f) in cases {
            let worst = check_grad(&inputs, f);
            assert!(worst < tol, "{name}: relative error {worst:e}");
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut tape = Tape::new();
            let a = tape.leaf(random(&mut rng, &[3, 4]));
            let b = tape.leaf(random(&mut rng, &[4, 2]));
            let c = tape.matmul(a, b).unwrap();
            let s = tape.softmax_rows(c).unwrap();
            let t = tape.tanh(s);
            let l = tape.mean(t);
            tape.backward(l).unwrap();
            (tape.grad(a).unwrap().clone(), tape.grad(b).unwrap().clone())
        };
        assert_eq!(run(), run());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_rows_sum_to_one(vals in prop::collection::vec(-50.0f64..50.0, 12)) {
                let mut tape = Tape::new();
                let x = tape.constant(Tensor::matrix(3, 4, vals).unwrap());
                let y = tape.softmax_rows(x).unwrap();
                let v = tape.value(y);
                for r in 0..3 {
                    let s: f64 = v.row(r).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                    prop_assert!(v.row(r).iter().all(|&p| (0.0..=1.0).contains(&p)));
                }
            }
        }
    }
}

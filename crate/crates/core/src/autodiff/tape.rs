use ndarray::{Array2, Axis};
use thiserror::Error;

pub type Matrix = Array2<f64>;

/// Lower clamp applied to probabilities inside [`Tape::bce`]; the upper
/// clamp is `1 - BCE_CLAMP`.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: row index {index} out of range for {rows} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("backward already ran on this tape")]
    BackwardTwice,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, f64),
    AddScalar(Var),
    RowScale(Var, Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Recip(Var),
    Softmax(Var),
    RowSum(Var),
    Sum(Var),
    Bce(Var, Matrix),
    BceLogits(Var, Matrix),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of dense operations, replayed in reverse by [`Tape::backward`].
///
/// A tape is built fresh for every forward pass; parameters enter as leaves
/// and their gradients are read back from the returned [`Gradients`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape))
    }
}

fn shape(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape(&self.nodes[v.0].value)
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        #[cfg(debug_assertions)]
        if !matches!(op, Op::Leaf | Op::Exp(_) | Op::Recip(_)) {
            debug_assert!(
                value.iter().all(|x| x.is_finite()),
                "non-finite value produced by {op:?}"
            );
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let rg = self.rg(a);
        self.push(value, Op::MulScalar(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// `out[i, :] = w[i] * a[i, :]` for a column vector `w`.
    pub fn row_scale(&mut self, a: Var, w: Var) -> Result<Var, AutodiffError> {
        let (sa, sw) = (self.shape(a), self.shape(w));
        if sw != (sa.0, 1) {
            return Err(AutodiffError::ShapeMismatch {
                op: "row_scale",
                left: sa,
                right: sw,
            });
        }
        let value = self.value(a) * self.value(w);
        let rg = self.rg(a) || self.rg(w);
        Ok(self.push(value, Op::RowScale(a, w), rg))
    }

    /// `out[k, :] = a[idx[k], :]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let src = self.value(a);
        let rows = src.nrows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                rows,
            });
        }
        let value = src.select(Axis(0), idx);
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// `out[idx[k], :] += a[k, :]` into `out_rows` zero rows.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        idx: &[usize],
        out_rows: usize,
    ) -> Result<Var, AutodiffError> {
        let src = self.value(a);
        if src.nrows() != idx.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scatter_add_rows",
                left: shape(src),
                right: (idx.len(), 1),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(AutodiffError::IndexOutOfRange {
                op: "scatter_add_rows",
                index: bad,
                rows: out_rows,
            });
        }
        let mut value = Matrix::zeros((out_rows, src.ncols()));
        for (k, &i) in idx.iter().enumerate() {
            let mut dst = value.row_mut(i);
            dst += &src.row(k);
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::ScatterAddRows(a, idx.to_vec()), rg))
    }

    /// Vertical stack.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = self.shape(parts[0]).1;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: self.shape(p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let sa = self.shape(a);
        if sa.0 * sa.1 != rows * cols {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                left: sa,
                right: (rows, cols),
            });
        }
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let value = Matrix::from_shape_vec((rows, cols), flat).expect("size checked");
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 / x);
        let rg = self.rg(a);
        self.push(value, Op::Recip(a), rg)
    }

    /// Softmax over all elements (intended for vectors).
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = x.mapv(|v| (v - max).exp());
        let z = e.sum();
        let value = e / z;
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Sum over columns: `(n, d) -> (n, 1)`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Sum of all elements as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.mul_scalar(s, 1.0 / n)
    }

    /// Mean binary cross-entropy of probabilities `p` against constant
    /// `labels`, with `p` clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce(&mut self, p: Var, labels: &Matrix) -> Result<Var, AutodiffError> {
        let sp = self.shape(p);
        if sp != shape(labels) {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce",
                left: sp,
                right: shape(labels),
            });
        }
        let n = labels.len() as f64;
        let total: f64 = self
            .value(p)
            .iter()
            .zip(labels.iter())
            .map(|(&p, &y)| {
                let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
            })
            .sum();
        let value = Matrix::from_elem((1, 1), total / n);
        let rg = self.rg(p);
        Ok(self.push(value, Op::Bce(p, labels.clone()), rg))
    }

    /// Mean binary cross-entropy of `sigmoid(x)` against `labels`, computed
    /// from the logits as `max(x, 0) - x y + ln(1 + e^{-|x|})`. Unlike
    /// [`Tape::bce`] it stays accurate when a score saturates.
    pub fn bce_with_logits(&mut self, x: Var, labels: &Matrix) -> Result<Var, AutodiffError> {
        let sx = self.shape(x);
        if sx != shape(labels) {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce_with_logits",
                left: sx,
                right: shape(labels),
            });
        }
        let n = labels.len() as f64;
        let total: f64 = self
            .value(x)
            .iter()
            .zip(labels.iter())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let value = Matrix::from_elem((1, 1), total / n);
        let rg = self.rg(x);
        Ok(self.push(value, Op::BceLogits(x, labels.clone()), rg))
    }

    /// Reverse sweep from a 1x1 `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        let sl = self.shape(loss);
        if sl != (1, 1) {
            return Err(AutodiffError::NotScalar(sl));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let d = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, d);
                    }
                    if self.rg(*b) {
                        let d = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::MulScalar(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::RowScale(a, w) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*w));
                    }
                    if self.rg(*w) {
                        let d = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads, *w, d);
                    }
                }
                Op::GatherRows(a, idx) => {
                    let mut d = Matrix::zeros(self.shape(*a));
                    for (k, &r) in idx.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(k);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::ScatterAddRows(a, idx) => {
                    let d = g.select(Axis(0), idx);
                    accumulate(&mut grads, *a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = self.shape(*p).0;
                        if self.rg(*p) {
                            let d = g.slice(ndarray::s![start..start + rows, ..]).to_owned();
                            accumulate(&mut grads, *p, d);
                        }
                        start += rows;
                    }
                }
                Op::Reshape(a) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let d = Matrix::from_shape_vec(self.shape(*a), flat).expect("same size");
                    accumulate(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = &g * &node.value.mapv(|s| s * (1.0 - s));
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, &g * &node.value),
                Op::Recip(a) => {
                    let d = &g * &node.value.mapv(|y| -y * y);
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot = (&g * y).sum();
                    let d = y * &(&g - dot);
                    accumulate(&mut grads, *a, d);
                }
                Op::RowSum(a) => {
                    let cols = self.shape(*a).1;
                    let d = Matrix::from_shape_fn(self.shape(*a), |(i, _)| g[[i, 0]]);
                    debug_assert_eq!(d.ncols(), cols);
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let d = Matrix::from_elem(self.shape(*a), g[[0, 0]]);
                    accumulate(&mut grads, *a, d);
                }
                Op::Bce(p, labels) => {
                    let n = labels.len() as f64;
                    let scale = g[[0, 0]] / n;
                    let mut d = Matrix::zeros(labels.raw_dim());
                    for ((dv, &pv), &y) in d.iter_mut().zip(self.value(*p).iter()).zip(labels.iter()) {
                        if pv > BCE_CLAMP && pv < 1.0 - BCE_CLAMP {
                            *dv = scale * (-(y / pv) + (1.0 - y) / (1.0 - pv));
                        }
                    }
                    accumulate(&mut grads, *p, d);
                }
                Op::BceLogits(x, labels) => {
                    let scale = g[[0, 0]] / labels.len() as f64;
                    let mut d = Matrix::zeros(labels.raw_dim());
                    for ((dv, &xv), &y) in d.iter_mut().zip(self.value(*x).iter()).zip(labels.iter()) {
                        *dv = scale * (sigmoid(xv) - y);
                    }
                    accumulate(&mut grads, *x, d);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
    match &mut grads[v.0] {
        Some(g) => *g += &delta,
        slot @ None => *slot = Some(delta),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_sigmoid_bce_values() {
        let mut t = Tape::new();
        let x = t.constant(array![[-1.0, 2.0]]);
        let r = t.relu(x);
        assert_eq!(t.value(r), &array![[0.0, 2.0]]);

        let z = t.constant(array![[0.0]]);
        let s = t.sigmoid(z);
        assert_eq!(t.scalar_value(s), 0.5);

        let p = t.constant(array![[0.5], [0.5]]);
        let l = t.bce(p, &array![[1.0], [0.0]]).unwrap();
        assert!((t.scalar_value(l) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.param(array![[0.0]]);
        let s = t.sigmoid(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap()[[0, 0]], 0.25);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut t = Tape::new();
        let x = t.param(array![[1.0]]);
        let y = t.mul_scalar(x, 3.0);
        t.backward(y).unwrap();
        assert_eq!(t.backward(y).unwrap_err(), AutodiffError::BackwardTwice);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(array![[1.0, 2.0]]);
        assert_eq!(t.backward(x).unwrap_err(), AutodiffError::NotScalar((1, 2)));
    }

    #[test]
    fn shape_errors_name_the_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros((2, 3)));
        let b = t.param(Matrix::zeros((2, 3)));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        assert!(err.to_string().contains("matmul"));
        assert!(t.gather_rows(a, &[2]).is_err());
        assert!(t.scatter_add_rows(a, &[0, 5], 3).is_err());
        assert!(t.reshape(a, 4, 2).is_err());
        let c = t.param(Matrix::zeros((3, 1)));
        assert!(t.row_scale(a, c).is_err());
    }

    #[test]
    fn bce_clamps_extremes() {
        let mut t = Tape::new();
        let p = t.param(array![[0.0], [1.0]]);
        let l = t.bce(p, &array![[1.0], [0.0]]).unwrap();
        let expect = -0.5 * (BCE_CLAMP.ln() + (1.0 - (1.0 - BCE_CLAMP)).ln());
        assert!((t.scalar_value(l) - expect).abs() < 1e-9);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(p).unwrap(), &array![[0.0], [0.0]]);
    }

    #[test]
    fn bce_with_logits_matches_probability_form_and_saturates() {
        let mut t = Tape::new();
        let x = t.param(array![[0.3], [-1.2]]);
        let l = t.bce_with_logits(x, &array![[1.0], [0.0]]).unwrap();
        let p = [sigmoid(0.3), sigmoid(-1.2)];
        let expect = -0.5 * (p[0].ln() + (1.0 - p[1]).ln());
        assert!((t.scalar_value(l) - expect).abs() < 1e-15);
        let g = t.backward(l).unwrap();
        assert!((g.get(x).unwrap()[[0, 0]] - 0.5 * (p[0] - 1.0)).abs() < 1e-15);

        let mut t = Tape::new();
        let x = t.constant(array![[40.0]]);
        let l = t.bce_with_logits(x, &array![[0.0]]).unwrap();
        assert!((t.scalar_value(l) - (40.0 + (-40f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(array![[2.0]]);
        let x = t.param(array![[3.0]]);
        let y = t.mul(c, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap()[[0, 0]], 2.0);
        assert!(g.get(c).is_none());
    }
}

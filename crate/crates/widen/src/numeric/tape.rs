//! Single-pass Wengert tape: operations are evaluated eagerly during the
//! forward pass and replayed in reverse to accumulate gradients.
//!
//! One tape per forward/backward pass. Leaves are either trainable
//! parameters (receive gradients) or constants (never do); an interior node
//! requires gradients iff any of its inputs does, and backward skips the
//! rest of the graph entirely.

use super::matrix::{self, Matrix};
use crate::error::{Error, Result};

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    Transpose(Var),
    /// The optional 0 / -inf mask only shapes the forward output; masked
    /// positions are exactly 0 there, which already zeroes their gradient.
    SoftmaxRows(Var),
    Relu(Var),
    L2NormalizeRow(Var),
    ConcatCols(Var, Var),
    SelectRow(Var, usize),
    StackRows(Vec<Var>),
    SumAll(Var),
    /// Numerically stable `logsumexp(z) - z[class]` for a 1 x c logit row.
    CrossEntropyLogits(Var, usize),
}

struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated for `v` by the last [`backward`](Self::backward)
    /// call. `None` for constants and for nodes off the loss path.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Trainable leaf; receives a gradient from [`backward`](Self::backward).
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matrix::matmul(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matrix::add(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = matrix::scale(self.value(a), k);
        let rg = self.needs(a);
        self.push(Op::Scale(a, k), value, rg)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matrix::elementwise_mul(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Hadamard(a, b), value, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(a);
        self.push(Op::Transpose(a), value, rg)
    }

    pub fn softmax_rows(&mut self, a: Var, mask: Option<&Matrix>) -> Result<Var> {
        let value = matrix::softmax_rows(self.value(a), mask)?;
        let rg = self.needs(a);
        Ok(self.push(Op::SoftmaxRows(a), value, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = matrix::relu(self.value(a));
        let rg = self.needs(a);
        self.push(Op::Relu(a), value, rg)
    }

    pub fn l2_normalize_row(&mut self, a: Var, strict: bool) -> Result<Var> {
        let value = matrix::l2_normalize_row(self.value(a), strict)?;
        let rg = self.needs(a);
        Ok(self.push(Op::L2NormalizeRow(a), value, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matrix::concat_cols(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::ConcatCols(a, b), value, rg))
    }

    pub fn select_row(&mut self, a: Var, row: usize) -> Result<Var> {
        let m = self.value(a);
        if row >= m.rows() {
            return Err(Error::Bounds {
                index: row,
                len: m.rows(),
            });
        }
        let value = Matrix::row_vector(m.row(row));
        let rg = self.needs(a);
        Ok(self.push(Op::SelectRow(a, row), value, rg))
    }

    /// Stack 1 x d row vectors into a k x d matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::contract("stack_rows needs at least one row"));
        }
        let cols = self.value(rows[0]).cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        let mut rg = false;
        for &r in rows {
            let m = self.value(r);
            if m.rows() != 1 || m.cols() != cols {
                return Err(Error::dim("stack_rows", (1, cols), m.shape()));
            }
            data.extend_from_slice(m.data());
            rg |= self.needs(r);
        }
        let value = Matrix::from_vec(rows.len(), cols, data)?;
        Ok(self.push(Op::StackRows(rows.to_vec()), value, rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let sum: f64 = self.value(a).data().iter().sum();
        let rg = self.needs(a);
        self.push(Op::SumAll(a), Matrix::row_vector(&[sum]), rg)
    }

    pub fn cross_entropy_logits(&mut self, logits: Var, class: usize) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != 1 {
            return Err(Error::dim("cross_entropy_logits", z.shape(), (1, z.cols())));
        }
        if class >= z.cols() {
            return Err(Error::Bounds {
                index: class,
                len: z.cols(),
            });
        }
        let max = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let value = Matrix::row_vector(&[lse - z.get(0, class)]);
        let rg = self.needs(logits);
        Ok(self.push(Op::CrossEntropyLogits(logits, class), value, rg))
    }

    /// Reverse traversal from a scalar loss node, accumulating gradients
    /// into every trainable leaf reachable from it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            let shape = self.value(loss).shape();
            return Err(Error::contract(format!(
                "backward needs a scalar (1x1) loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::row_vector(&[1.0]));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || self.grads[idx].is_none() {
                continue;
            }
            let g = self.grads[idx].take().unwrap();
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Matrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.add_scaled(&delta, 1.0),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Matrix) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let bt = self.value(b).transpose();
                let da = matrix::matmul(g, &bt)?;
                let at = self.value(a).transpose();
                let db = matrix::matmul(&at, g)?;
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::Scale(a, k) => {
                self.accumulate(a, matrix::scale(g, k));
            }
            &Op::Hadamard(a, b) => {
                let da = matrix::elementwise_mul(g, self.value(b))?;
                let db = matrix::elementwise_mul(g, self.value(a))?;
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::Transpose(a) => {
                self.accumulate(a, g.transpose());
            }
            &Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(yi, gi)| yi * gi).sum();
                    for c in 0..y.cols() {
                        da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(a, da);
            }
            &Op::Relu(a) => {
                let x = self.value(a);
                let mut da = Matrix::zeros(x.rows(), x.cols());
                for (o, (&xv, &gv)) in da
                    .data_mut()
                    .iter_mut()
                    .zip(x.data().iter().zip(g.data()))
                {
                    *o = if xv > 0.0 { gv } else { 0.0 };
                }
                self.accumulate(a, da);
            }
            &Op::L2NormalizeRow(a) => {
                // y = x / (||x|| + eps):
                //   dL/dx = g / D - x * (g . x) / (D^2 * ||x||)
                let x = self.value(a);
                let norm = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                let denom = norm + matrix::NORM_EPSILON;
                let mut da = matrix::scale(g, 1.0 / denom);
                if norm > 0.0 {
                    let dot: f64 = g.data().iter().zip(x.data()).map(|(gi, xi)| gi * xi).sum();
                    let coeff = dot / (denom * denom * norm);
                    da.add_scaled(x, -coeff);
                }
                self.accumulate(a, da);
            }
            &Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols();
                let da = Matrix::row_vector(&g.data()[..ca]);
                let db = Matrix::row_vector(&g.data()[ca..]);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::SelectRow(a, row) => {
                let (rows, cols) = self.value(a).shape();
                let mut da = Matrix::zeros(rows, cols);
                da.row_mut(row).copy_from_slice(g.data());
                self.accumulate(a, da);
            }
            Op::StackRows(rows) => {
                let rows = rows.clone();
                for (r, &v) in rows.iter().enumerate() {
                    self.accumulate(v, Matrix::row_vector(g.row(r)));
                }
            }
            &Op::SumAll(a) => {
                let (rows, cols) = self.value(a).shape();
                let mut da = Matrix::zeros(rows, cols);
                let gv = g.scalar();
                da.data_mut().fill(gv);
                self.accumulate(a, da);
            }
            &Op::CrossEntropyLogits(z, class) => {
                // d/dz (lse(z) - z_class) = softmax(z) - onehot(class)
                let zm = self.value(z);
                let mut da = matrix::softmax_rows(zm, None)?;
                let cur = da.get(0, class);
                da.set(0, class, cur - 1.0);
                let gv = g.scalar();
                if gv != 1.0 {
                    da = matrix::scale(&da, gv);
                }
                self.accumulate(z, da);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::finite_diff_check;

    #[test]
    fn sum_of_matrix_grad_is_ones() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn squared_norm_grad_is_2v() {
        let mut tape = Tape::new();
        let v = tape.param(Matrix::row_vector(&[1.0, -3.0, 2.0]));
        let sq = tape.hadamard(v, v).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(v).unwrap().data(), &[2.0, -6.0, 4.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let v = tape.param(Matrix::row_vector(&[0.0, 1.0, -1.0]));
        let r = tape.relu(v);
        let loss = tape.sum_all(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(v).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let v = tape.param(Matrix::row_vector(&[1.0, 2.0]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::row_vector(&[5.0, 5.0]));
        let p = tape.param(Matrix::row_vector(&[1.0, 2.0]));
        let h = tape.hadamard(c, p).unwrap();
        let loss = tape.sum_all(h);
        tape.backward(loss).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(p).unwrap().data(), &[5.0, 5.0]);
    }

    /// Runs one expression both ways: returns (tape gradients, value fn).
    fn tape_grads(
        mats: &[Matrix],
        build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
    ) -> (f64, Vec<Matrix>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = mats.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars).unwrap();
        let value = tape.value(loss).scalar();
        tape.backward(loss).unwrap();
        let grads = vars
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(tape.value(v).rows(), tape.value(v).cols()))
            })
            .collect();
        (value, grads)
    }

    fn check_op(mats: Vec<Matrix>, build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + Copy) {
        let (_, grads) = tape_grads(&mats, build);
        let err = finite_diff_check(
            |ms| {
                let mut tape = Tape::new();
                let vars: Vec<Var> = ms.iter().map(|m| tape.param(m.clone())).collect();
                let loss = build(&mut tape, &vars)?;
                Ok(tape.value(loss).scalar())
            },
            &mats,
            &grads,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "finite-difference error {err}");
    }

    #[test]
    fn per_op_gradients_match_finite_differences() {
        let a = Matrix::from_vec(2, 3, vec![0.3, -1.2, 0.7, 1.5, 0.2, -0.4]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![0.9, -0.1, 0.4, 1.1, -0.8, 0.6]).unwrap();
        check_op(vec![a.clone(), b], |t, v| {
            let m = t.matmul(v[0], v[1])?;
            Ok(t.sum_all(m))
        });

        let c = Matrix::from_vec(2, 3, vec![1.0, 0.5, -0.2, 0.1, -0.9, 2.0]).unwrap();
        check_op(vec![a.clone(), c.clone()], |t, v| {
            let m = t.add(v[0], v[1])?;
            Ok(t.sum_all(m))
        });
        check_op(vec![a.clone(), c], |t, v| {
            let m = t.hadamard(v[0], v[1])?;
            let s = t.scale(m, 0.7);
            Ok(t.sum_all(s))
        });
        check_op(vec![a.clone()], |t, v| {
            let m = t.transpose(v[0]);
            let sq = t.hadamard(m, m)?;
            Ok(t.sum_all(sq))
        });

        // softmax needs a non-linear readout or its gradient is identically 0
        let weights = Matrix::from_vec(2, 3, vec![0.2, 1.4, -0.5, 0.8, 0.3, -1.0]).unwrap();
        check_op(vec![a.clone()], |t, v| {
            let s = t.softmax_rows(v[0], None)?;
            let w = t.constant(weights.clone());
            let picked = t.hadamard(s, w)?;
            let sq = t.hadamard(picked, picked)?;
            Ok(t.sum_all(sq))
        });
        let mask = Matrix::from_vec(
            2,
            3,
            vec![0.0, 0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0],
        )
        .unwrap();
        check_op(vec![a.clone()], |t, v| {
            let s = t.softmax_rows(v[0], Some(&mask))?;
            let w = t.constant(weights.clone());
            let picked = t.hadamard(s, w)?;
            let sq = t.hadamard(picked, picked)?;
            Ok(t.sum_all(sq))
        });

        check_op(vec![Matrix::row_vector(&[1.0, -2.0, 0.5])], |t, v| {
            let r = t.relu(v[0]);
            let sq = t.hadamard(r, r)?;
            Ok(t.sum_all(sq))
        });
        check_op(vec![Matrix::row_vector(&[0.6, -1.1, 2.2])], |t, v| {
            let n = t.l2_normalize_row(v[0], false)?;
            let w = t.constant(Matrix::row_vector(&[1.0, 2.0, 3.0]));
            let p = t.hadamard(n, w)?;
            Ok(t.sum_all(p))
        });
        check_op(
            vec![Matrix::row_vector(&[0.3, 0.4]), Matrix::row_vector(&[1.2])],
            |t, v| {
                let cc = t.concat_cols(v[0], v[1])?;
                let sq = t.hadamard(cc, cc)?;
                Ok(t.sum_all(sq))
            },
        );
        check_op(vec![a.clone()], |t, v| {
            let r = t.select_row(v[0], 1)?;
            let sq = t.hadamard(r, r)?;
            Ok(t.sum_all(sq))
        });
        check_op(
            vec![
                Matrix::row_vector(&[0.5, -0.5]),
                Matrix::row_vector(&[1.5, 0.2]),
            ],
            |t, v| {
                let m = t.stack_rows(&[v[0], v[1], v[0]])?;
                let sq = t.hadamard(m, m)?;
                Ok(t.sum_all(sq))
            },
        );
        check_op(vec![Matrix::row_vector(&[0.1, 1.3, -0.7])], |t, v| {
            t.cross_entropy_logits(v[0], 1)
        });
    }

    #[test]
    fn cross_entropy_extremes() {
        let mut tape = Tape::new();
        // overwhelming margin on the true class: -log 1 = 0
        let confident = tape.param(Matrix::row_vector(&[1000.0, 0.0]));
        let ce = tape.cross_entropy_logits(confident, 0).unwrap();
        assert_eq!(tape.value(ce).scalar(), 0.0);
        // flat logits over c classes: ln c
        let flat = tape.param(Matrix::row_vector(&[2.0, 2.0, 2.0]));
        let ce = tape.cross_entropy_logits(flat, 2).unwrap();
        assert!((tape.value(ce).scalar() - 3.0f64.ln()).abs() < 1e-12);
    }
}

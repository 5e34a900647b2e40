use std::rc::Rc;

use ndarray::Array2;

use crate::tensor::Tensor;
use crate::{AutodiffError, POWER_GRAD_CLAMP, SELU_ALPHA, SELU_SCALE};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Div(ValueId, ValueId),
    Neg(ValueId),
    Scale(ValueId, f64),
    AddScalar(ValueId),
    MatMul(ValueId, ValueId),
    Selu(ValueId),
    Relu(ValueId),
    Abs(ValueId),
    SignedPower(ValueId, f64),
    ConcatCols(Vec<ValueId>),
    GatherRows(ValueId, Rc<Vec<usize>>),
    SegmentSum(ValueId, Rc<Vec<usize>>),
    SegmentMax {
        input: ValueId,
        /// Winning input row per output element, in row-major output order.
        argmax: Vec<usize>,
    },
    MaxPair {
        a: ValueId,
        b: ValueId,
        /// Per element: whether `a` won (ties go to `a`).
        take_a: Vec<bool>,
    },
    SelectRows {
        mask: Rc<Vec<bool>>,
        a: ValueId,
        b: ValueId,
    },
    Sum(ValueId),
    Mean(ValueId),
}

struct TapeNode {
    value: Tensor,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(TapeNode { value, op });
        ValueId(self.nodes.len() - 1)
    }

    /// Record an input value. Leaves are where gradients are read off after
    /// `backward`; there is no distinction between constants and parameters.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf)
    }

    fn zip_same_shape(&self, a: ValueId, b: ValueId, what: &str) {
        assert!(
            self.value(a).same_shape(self.value(b)),
            "{what}: shape mismatch {}x{} vs {}x{}",
            self.value(a).rows(),
            self.value(a).cols(),
            self.value(b).rows(),
            self.value(b).cols()
        );
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "add");
        let v = Tensor::from_array(self.value(a).array() + self.value(b).array());
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "sub");
        let v = Tensor::from_array(self.value(a).array() - self.value(b).array());
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "mul");
        let v = Tensor::from_array(self.value(a).array() * self.value(b).array());
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise division; the divisor must be nonzero wherever the
    /// gradient is needed.
    pub fn div(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "div");
        let v = Tensor::from_array(self.value(a).array() / self.value(b).array());
        self.push(v, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: ValueId, k: f64) -> ValueId {
        let v = self.value(a).map(|x| k * x);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: ValueId, k: f64) -> ValueId {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddScalar(a))
    }

    /// Dense product `a · b` of an `n x k` by a `k x m` value.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(
            self.value(a).cols(),
            self.value(b).rows(),
            "matmul: inner dimensions differ"
        );
        let v = Tensor::from_array(self.value(a).array().dot(self.value(b).array()));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn selu(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(selu);
        self.push(v, Op::Selu(a))
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn abs(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    /// `sgn(v) · |v|^p` elementwise.
    pub fn signed_power(&mut self, a: ValueId, p: f64) -> ValueId {
        let v = self.value(a).map(|x| signed_power(x, p));
        self.push(v, Op::SignedPower(a, p))
    }

    /// Concatenate along columns; all parts must share the row count.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Array2::zeros((rows, total));
        let mut at = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols: row mismatch");
            out.slice_mut(ndarray::s![.., at..at + t.cols()])
                .assign(t.array());
            at += t.cols();
        }
        self.push(Tensor::from_array(out), Op::ConcatCols(parts.to_vec()))
    }

    /// Row lookup: `out[i] = a[indices[i]]`.
    pub fn gather_rows(&mut self, a: ValueId, indices: Rc<Vec<usize>>) -> ValueId {
        let t = self.value(a);
        let mut out = Array2::zeros((indices.len(), t.cols()));
        for (i, &src) in indices.iter().enumerate() {
            out.row_mut(i).assign(&t.array().row(src));
        }
        self.push(Tensor::from_array(out), Op::GatherRows(a, indices))
    }

    /// Sum rows of `a` into `n_segments` buckets keyed by `segments[row]`.
    pub fn segment_sum(
        &mut self,
        a: ValueId,
        segments: Rc<Vec<usize>>,
        n_segments: usize,
    ) -> ValueId {
        let t = self.value(a);
        assert_eq!(t.rows(), segments.len(), "segment_sum: one key per row");
        let mut out = Array2::zeros((n_segments, t.cols()));
        for (row, &seg) in segments.iter().enumerate() {
            let mut target = out.row_mut(seg);
            target += &t.array().row(row);
        }
        self.push(Tensor::from_array(out), Op::SegmentSum(a, segments))
    }

    /// Columnwise maximum per segment. Every segment must receive at least
    /// one row. Gradients flow only to the first row attaining the maximum.
    pub fn segment_max(
        &mut self,
        a: ValueId,
        segments: Rc<Vec<usize>>,
        n_segments: usize,
    ) -> Result<ValueId, AutodiffError> {
        let t = self.value(a);
        assert_eq!(t.rows(), segments.len(), "segment_max: one key per row");
        let cols = t.cols();
        let mut out = Array2::from_elem((n_segments, cols), f64::NEG_INFINITY);
        let mut argmax = vec![usize::MAX; n_segments * cols];
        for (row, &seg) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = t.get(row, c);
                // Strict comparison keeps the first row on ties.
                if argmax[seg * cols + c] == usize::MAX || v > out[(seg, c)] {
                    out[(seg, c)] = v;
                    argmax[seg * cols + c] = row;
                }
            }
        }
        if let Some(slot) = argmax.iter().position(|&r| r == usize::MAX) {
            return Err(AutodiffError::EmptySegment {
                segment: slot / cols,
                count: n_segments,
            });
        }
        Ok(self.push(
            Tensor::from_array(out),
            Op::SegmentMax { input: a, argmax },
        ))
    }

    /// Elementwise maximum of two equally shaped values; ties take `a`.
    pub fn max_pair(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "max_pair");
        let (ta, tb) = (self.value(a), self.value(b));
        let mut take_a = Vec::with_capacity(ta.len());
        let mut out = ta.array().clone();
        for (o, (&x, &y)) in out
            .iter_mut()
            .zip(ta.array().iter().zip(tb.array().iter()))
        {
            let a_wins = !(y > x);
            take_a.push(a_wins);
            *o = if a_wins { x } else { y };
        }
        self.push(Tensor::from_array(out), Op::MaxPair { a, b, take_a })
    }

    /// Rowwise blend: rows where `mask` is true come from `a`, others from
    /// `b`. The mask is data, not a differentiable input.
    pub fn select_rows(&mut self, mask: Rc<Vec<bool>>, a: ValueId, b: ValueId) -> ValueId {
        self.zip_same_shape(a, b, "select_rows");
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), mask.len(), "select_rows: one flag per row");
        let mut out = tb.array().clone();
        for (r, &keep_a) in mask.iter().enumerate() {
            if keep_a {
                out.row_mut(r).assign(&ta.array().row(r));
            }
        }
        self.push(Tensor::from_array(out), Op::SelectRows { mask, a, b })
    }

    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let v = Tensor::scalar(self.value(a).as_slice().iter().sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: ValueId) -> ValueId {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean of an empty tensor");
        let v = Tensor::scalar(t.as_slice().iter().sum::<f64>() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Mean absolute difference between two equally shaped values.
    pub fn l1(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.mean(d)
    }

    /// Accumulate gradients of a scalar loss with respect to every recorded
    /// value. One reverse sweep; node order makes accumulation deterministic.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients, AutodiffError> {
        let lt = self.value(loss);
        if lt.rows() != 1 || lt.cols() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                rows: lt.rows(),
                cols: lt.cols(),
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .map(|g| g.map(Tensor::from_array))
                .collect(),
        })
    }

    fn propagate(&self, node: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let accum = |grads: &mut [Option<Array2<f64>>], id: ValueId, delta: Array2<f64>| {
            match &mut grads[id.0] {
                Some(acc) => *acc += &delta,
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                let da = g * self.value(*b).array();
                let db = g * self.value(*a).array();
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::Div(a, b) => {
                let bv = self.value(*b).array();
                let da = g / bv;
                let db = -(g * self.value(*a).array()) / (bv * bv);
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::Neg(a) => accum(grads, *a, -g),
            Op::Scale(a, k) => accum(grads, *a, g * *k),
            Op::AddScalar(a) => accum(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).array().t());
                let db = self.value(*a).array().t().dot(g);
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::Selu(a) => {
                let x = self.value(*a).array();
                let da = ndarray::Zip::from(g).and(x).map_collect(|&gv, &xv| {
                    gv * if xv > 0.0 {
                        SELU_SCALE
                    } else {
                        SELU_SCALE * SELU_ALPHA * xv.exp()
                    }
                });
                accum(grads, *a, da);
            }
            Op::Relu(a) => {
                let x = self.value(*a).array();
                let da = ndarray::Zip::from(g)
                    .and(x)
                    .map_collect(|&gv, &xv| if xv > 0.0 { gv } else { 0.0 });
                accum(grads, *a, da);
            }
            Op::Abs(a) => {
                let x = self.value(*a).array();
                let da = ndarray::Zip::from(g)
                    .and(x)
                    .map_collect(|&gv, &xv| gv * signum_zero(xv));
                accum(grads, *a, da);
            }
            Op::SignedPower(a, p) => {
                let x = self.value(*a).array();
                let p = *p;
                let da = ndarray::Zip::from(g)
                    .and(x)
                    .map_collect(|&gv, &xv| gv * signed_power_grad(xv, p));
                accum(grads, *a, da);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    let slice = g.slice(ndarray::s![.., at..at + cols]).to_owned();
                    accum(grads, p, slice);
                    at += cols;
                }
            }
            Op::GatherRows(a, indices) => {
                let src = self.value(*a);
                let mut da = Array2::zeros((src.rows(), src.cols()));
                for (i, &row) in indices.iter().enumerate() {
                    let mut target = da.row_mut(row);
                    target += &g.row(i);
                }
                accum(grads, *a, da);
            }
            Op::SegmentSum(a, segments) => {
                let src = self.value(*a);
                let mut da = Array2::zeros((src.rows(), src.cols()));
                for (row, &seg) in segments.iter().enumerate() {
                    da.row_mut(row).assign(&g.row(seg));
                }
                accum(grads, *a, da);
            }
            Op::SegmentMax { input, argmax } => {
                let src = self.value(*input);
                let cols = src.cols();
                let mut da = Array2::zeros((src.rows(), src.cols()));
                for (slot, &row) in argmax.iter().enumerate() {
                    let (seg, c) = (slot / cols, slot % cols);
                    da[(row, c)] += g[(seg, c)];
                }
                accum(grads, *input, da);
            }
            Op::MaxPair { a, b, take_a } => {
                let shape = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = Array2::zeros(shape);
                let mut db = Array2::zeros(shape);
                for (slot, &awin) in take_a.iter().enumerate() {
                    let idx = (slot / shape.1, slot % shape.1);
                    if awin {
                        da[idx] = g[idx];
                    } else {
                        db[idx] = g[idx];
                    }
                }
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::SelectRows { mask, a, b } => {
                let shape = (self.value(*a).rows(), self.value(*a).cols());
                let mut da = Array2::zeros(shape);
                let mut db = Array2::zeros(shape);
                for (r, &keep_a) in mask.iter().enumerate() {
                    if keep_a {
                        da.row_mut(r).assign(&g.row(r));
                    } else {
                        db.row_mut(r).assign(&g.row(r));
                    }
                }
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::Sum(a) => {
                let src = self.value(*a);
                accum(
                    grads,
                    *a,
                    Array2::from_elem((src.rows(), src.cols()), g[(0, 0)]),
                );
            }
            Op::Mean(a) => {
                let src = self.value(*a);
                let s = g[(0, 0)] / src.len() as f64;
                accum(grads, *a, Array2::from_elem((src.rows(), src.cols()), s));
            }
        }
    }
}

/// Gradient of every tape value with respect to the loss passed to
/// [`Tape::backward`]. Values the loss does not depend on have no entry.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: ValueId) -> Option<&Tensor> {
        self.grads[id.index()].as_ref()
    }

    /// Gradient for `id`, densified to zeros when the loss is independent of
    /// it.
    pub fn wrt_or_zeros(&self, id: ValueId, rows: usize, cols: usize) -> Tensor {
        match self.wrt(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(rows, cols),
        }
    }
}

#[inline]
fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_SCALE * x
    } else {
        SELU_SCALE * SELU_ALPHA * (x.exp() - 1.0)
    }
}

#[inline]
fn signum_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn signed_power(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    v.abs().powf(p).copysign(v)
}

/// d/dv of `sgn(v)·|v|^p`, which is `p·|v|^(p-1)`. For p > 1 the derivative
/// vanishes at v = 0; for p < 1 it diverges there, so |v| is clamped away
/// from zero.
#[inline]
fn signed_power_grad(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p >= 1.0 {
        if a == 0.0 && p > 1.0 {
            0.0
        } else {
            p * a.powf(p - 1.0)
        }
    } else {
        p * a.max(POWER_GRAD_CLAMP).powf(p - 1.0)
    }
}

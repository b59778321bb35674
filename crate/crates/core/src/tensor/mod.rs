//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every differentiable operation applied to tracked
//! [`Tensor`]s. Calling [`Tape::backward`] on a scalar loss walks the recording
//! in reverse and accumulates gradients for every tracked leaf. Values are
//! stored as reference-counted `ndarray` arrays, so cloning a tensor (or
//! capturing one inside a backward closure) is O(1).
//!
//! Contract violations — shape mismatches, non-scalar losses, backward through
//! an untracked tensor — panic; they are programmer errors, not runtime
//! conditions a caller should handle.

pub mod gradcheck;
pub mod init;
pub mod optim;
pub mod params;

use ndarray::{ArcArray, Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2, IxDyn};
use std::cell::RefCell;

/// Shared-ownership dense f64 array; the value side of a [`Tensor`].
pub type Value = ArcArray<f64, IxDyn>;

/// A dense f64 array, optionally tracked on a [`Tape`].
///
/// Untracked tensors (constants) flow through the same operations but record
/// nothing and receive no gradient.
#[derive(Clone)]
pub struct Tensor {
    data: Value,
    node: Option<usize>,
}

impl Tensor {
    /// Wrap an array as an untracked constant.
    pub fn constant(data: ArrayD<f64>) -> Self {
        Tensor { data: data.into_shared(), node: None }
    }

    /// Untracked constant from a 2-D array.
    pub fn constant2(data: Array2<f64>) -> Self {
        Self::constant(data.into_dyn())
    }

    /// Untracked constant from a 1-D array.
    pub fn constant1(data: Array1<f64>) -> Self {
        Self::constant(data.into_dyn())
    }

    /// Untracked 0-d scalar constant.
    pub fn scalar_constant(v: f64) -> Self {
        Self::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn data(&self) -> &Value {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Extract the single element of a one-element tensor.
    ///
    /// Panics if the tensor holds more than one value.
    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "scalar() on tensor of {} elements", self.data.len());
        *self.data.iter().next().unwrap()
    }

    /// View as 2-D; panics with `ctx` if the tensor is not 2-D.
    pub fn view2(&self, ctx: &str) -> ArrayView2<'_, f64> {
        self.data
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("{ctx}: expected 2-D tensor, got shape {:?}", self.shape()))
    }

    /// View as 1-D; panics with `ctx` if the tensor is not 1-D.
    pub fn view1(&self, ctx: &str) -> ArrayView1<'_, f64> {
        self.data
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("{ctx}: expected 1-D tensor, got shape {:?}", self.shape()))
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("tracked", &self.is_tracked())
            .finish()
    }
}

/// Gradient contributions for each parent, in parent order. `None` means the
/// parent was untracked and its gradient was skipped.
type BackwardFn = Box<dyn Fn(&ArrayD<f64>) -> Vec<Option<ArrayD<f64>>>>;

struct Node {
    /// Tape ids of the inputs; `None` for untracked inputs.
    parents: Vec<Option<usize>>,
    backward: BackwardFn,
}

/// Recording of differentiable operations, in execution order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Accumulated gradients for tracked leaves, indexed by tape node id.
pub struct Gradients {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients { slots: Vec::new() }
    }

    /// Gradient for `t`, if any was accumulated.
    pub fn get(&self, t: &Tensor) -> Option<&ArrayD<f64>> {
        let id = t.node?;
        self.slots.get(id).and_then(|s| s.as_ref())
    }

    /// Gradient for `t`, or zeros of its shape if it never received one
    /// (e.g. a parameter disconnected from the loss).
    pub fn get_or_zero(&self, t: &Tensor) -> ArrayD<f64> {
        match self.get(t) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(t.data.raw_dim()),
        }
    }
}

impl Default for Gradients {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(slot: &mut Option<ArrayD<f64>>, contrib: ArrayD<f64>) {
    match slot {
        Some(acc) => *acc += &contrib,
        None => *slot = Some(contrib),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: Vec<Option<usize>>, backward: BackwardFn) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, backward });
        nodes.len() - 1
    }

    /// Register a tracked leaf (a parameter). Its gradient is available from
    /// [`Gradients`] after a backward pass.
    pub fn leaf(&self, data: ArrayD<f64>) -> Tensor {
        let id = self.push(Vec::new(), Box::new(|_| Vec::new()));
        Tensor { data: data.into_shared(), node: Some(id) }
    }

    /// Record a custom operation. `backward` maps the output gradient to one
    /// contribution per input (in order); return `None` for inputs whose
    /// gradient is not needed. If no input is tracked the result is a constant
    /// and `backward` is dropped unused.
    pub fn custom_op(
        &self,
        inputs: &[&Tensor],
        value: ArrayD<f64>,
        backward: impl Fn(&ArrayD<f64>) -> Vec<Option<ArrayD<f64>>> + 'static,
    ) -> Tensor {
        if inputs.iter().all(|t| t.node.is_none()) {
            return Tensor::constant(value);
        }
        let parents = inputs.iter().map(|t| t.node).collect();
        let id = self.push(parents, Box::new(backward));
        Tensor { data: value.into_shared(), node: Some(id) }
    }

    /// Accumulate gradients of a one-element `loss` into `grads`.
    ///
    /// Repeated calls without clearing `grads` keep accumulating, which is the
    /// desired behavior when summing gradient contributions across sub-batches.
    pub fn backward_into(&self, loss: &Tensor, grads: &mut Gradients) {
        let nodes = self.nodes.borrow();
        let lid = loss.node.expect("backward: loss is not tracked on this tape");
        assert_eq!(loss.data.len(), 1, "backward: loss must hold exactly one element");
        if grads.slots.len() < nodes.len() {
            grads.slots.resize_with(nodes.len(), || None);
        }
        // Scratch gradients for interior nodes; freed as soon as each node is
        // processed so peak memory stays proportional to the live frontier.
        let mut scratch: Vec<Option<ArrayD<f64>>> = Vec::new();
        scratch.resize_with(nodes.len(), || None);
        scratch[lid] = Some(ArrayD::ones(loss.data.raw_dim()));
        for id in (0..=lid).rev() {
            let Some(g) = scratch[id].take() else { continue };
            let node = &nodes[id];
            if node.parents.is_empty() {
                accumulate(&mut grads.slots[id], g);
                continue;
            }
            let contribs = (node.backward)(&g);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (parent, contrib) in node.parents.iter().zip(contribs) {
                if let (Some(pid), Some(c)) = (parent, contrib) {
                    accumulate(&mut scratch[*pid], c);
                }
            }
        }
    }

    /// Fresh gradients of a one-element `loss` with respect to every tracked leaf.
    pub fn backward(&self, loss: &Tensor) -> Gradients {
        let mut grads = Gradients::new();
        self.backward_into(loss, &mut grads);
        grads
    }

    // ---- elementwise binary ----------------------------------------------

    fn same_shape(a: &Tensor, b: &Tensor, ctx: &str) {
        assert_eq!(a.shape(), b.shape(), "{ctx}: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Tensor {
        Self::same_shape(a, b, "add");
        let value = (&a.data + &b.data).to_owned().into_dyn();
        let (na, nb) = (a.is_tracked(), b.is_tracked());
        self.custom_op(&[a, b], value, move |g| {
            vec![na.then(|| g.clone()), nb.then(|| g.clone())]
        })
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Tensor {
        Self::same_shape(a, b, "sub");
        let value = (&a.data - &b.data).to_owned().into_dyn();
        let (na, nb) = (a.is_tracked(), b.is_tracked());
        self.custom_op(&[a, b], value, move |g| {
            vec![na.then(|| g.clone()), nb.then(|| g.mapv(|v| -v))]
        })
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Tensor {
        Self::same_shape(a, b, "mul");
        let value = (&a.data * &b.data).to_owned().into_dyn();
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let (na, nb) = (a.is_tracked(), b.is_tracked());
        self.custom_op(&[a, b], value, move |g| {
            vec![na.then(|| (g * &bd).to_owned()), nb.then(|| (g * &ad).to_owned())]
        })
    }

    /// Elementwise minimum. On ties the gradient goes to `a`.
    pub fn min_elem(&self, a: &Tensor, b: &Tensor) -> Tensor {
        Self::same_shape(a, b, "min_elem");
        let mut value = a.data.to_owned();
        ndarray::Zip::from(&mut value).and(&b.data).for_each(|v, &bv| {
            if bv < *v {
                *v = bv;
            }
        });
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let (na, nb) = (a.is_tracked(), b.is_tracked());
        self.custom_op(&[a, b], value, move |g| {
            let mask_a = || {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&ad).and(&bd).for_each(|o, &av, &bv| {
                    if !(av <= bv) {
                        *o = 0.0;
                    }
                });
                out
            };
            let mask_b = || {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&ad).and(&bd).for_each(|o, &av, &bv| {
                    if av <= bv {
                        *o = 0.0;
                    }
                });
                out
            };
            vec![na.then(mask_a), nb.then(mask_b)]
        })
    }

    // ---- scalar ----------------------------------------------------------

    pub fn scalar_mul(&self, a: &Tensor, c: f64) -> Tensor {
        let value = a.data.mapv(|v| v * c);
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| vec![na.then(|| g.mapv(|v| v * c))])
    }

    pub fn scalar_add(&self, a: &Tensor, c: f64) -> Tensor {
        let value = a.data.mapv(|v| v + c);
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| vec![na.then(|| g.clone())])
    }

    // ---- elementwise unary -----------------------------------------------

    pub fn relu(&self, a: &Tensor) -> Tensor {
        let value = a.data.mapv(|v| v.max(0.0));
        let ad = a.data.clone();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&ad).for_each(|o, &v| {
                    if v <= 0.0 {
                        *o = 0.0;
                    }
                });
                out
            })]
        })
    }

    pub fn tanh(&self, a: &Tensor) -> Tensor {
        let value = a.data.mapv(f64::tanh);
        let y = value.clone().into_shared();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&y).for_each(|o, &yv| *o *= 1.0 - yv * yv);
                out
            })]
        })
    }

    pub fn exp(&self, a: &Tensor) -> Tensor {
        let value = a.data.mapv(f64::exp);
        let y = value.clone().into_shared();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&y).for_each(|o, &yv| *o *= yv);
                out
            })]
        })
    }

    /// Clamp into `[lo, hi]`. The gradient passes only strictly inside the
    /// interval; at the bounds it is zero.
    pub fn clip(&self, a: &Tensor, lo: f64, hi: f64) -> Tensor {
        assert!(lo <= hi, "clip: lo {lo} > hi {hi}");
        let value = a.data.mapv(|v| v.clamp(lo, hi));
        let ad = a.data.clone();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&ad).for_each(|o, &v| {
                    if !(v > lo && v < hi) {
                        *o = 0.0;
                    }
                });
                out
            })]
        })
    }

    /// Elementwise Huber penalty: `x²/2` for `|x| ≤ delta`, else
    /// `delta·(|x| − delta/2)`. Gradient is `clamp(x, −delta, delta)`.
    pub fn huber(&self, a: &Tensor, delta: f64) -> Tensor {
        assert!(delta > 0.0, "huber: delta must be positive, got {delta}");
        let value = a.data.mapv(|v| {
            if v.abs() <= delta {
                0.5 * v * v
            } else {
                delta * (v.abs() - 0.5 * delta)
            }
        });
        let ad = a.data.clone();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                ndarray::Zip::from(&mut out).and(&ad).for_each(|o, &v| {
                    *o *= v.clamp(-delta, delta);
                });
                out
            })]
        })
    }

    // ---- softmax ---------------------------------------------------------

    /// Softmax along `axis`, computed per lane with max-subtraction.
    pub fn softmax(&self, a: &Tensor, axis: usize) -> Tensor {
        assert!(axis < a.shape().len(), "softmax: axis {axis} out of range for {:?}", a.shape());
        let mut value = a.data.to_owned();
        for mut lane in value.lanes_mut(Axis(axis)) {
            let max = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in lane.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in lane.iter_mut() {
                *v /= sum;
            }
        }
        let y = value.clone().into_shared();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                for (mut olane, ylane) in out.lanes_mut(Axis(axis)).into_iter().zip(y.lanes(Axis(axis))) {
                    let dot: f64 = olane.iter().zip(ylane.iter()).map(|(o, y)| o * y).sum();
                    for (o, y) in olane.iter_mut().zip(ylane.iter()) {
                        *o = y * (*o - dot);
                    }
                }
                out
            })]
        })
    }

    /// Log-softmax along `axis` (numerically stable log-sum-exp form).
    pub fn log_softmax(&self, a: &Tensor, axis: usize) -> Tensor {
        assert!(axis < a.shape().len(), "log_softmax: axis {axis} out of range for {:?}", a.shape());
        let mut value = a.data.to_owned();
        for mut lane in value.lanes_mut(Axis(axis)) {
            let max = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = lane.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for v in lane.iter_mut() {
                *v -= lse;
            }
        }
        let y = value.clone().into_shared();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let mut out = g.clone();
                for (mut olane, ylane) in out.lanes_mut(Axis(axis)).into_iter().zip(y.lanes(Axis(axis))) {
                    let gsum: f64 = olane.iter().sum();
                    for (o, y) in olane.iter_mut().zip(ylane.iter()) {
                        *o -= y.exp() * gsum;
                    }
                }
                out
            })]
        })
    }

    // ---- reductions ------------------------------------------------------

    /// Sum of all elements, as a 0-d tensor.
    pub fn sum(&self, a: &Tensor) -> Tensor {
        let total: f64 = a.data.iter().sum();
        let value = ArrayD::from_elem(IxDyn(&[]), total);
        let shape = a.data.raw_dim();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            let gv = g[[]];
            vec![na.then(|| ArrayD::from_elem(shape.clone(), gv))]
        })
    }

    /// Mean of all elements, as a 0-d tensor.
    pub fn mean(&self, a: &Tensor) -> Tensor {
        assert!(a.len() > 0, "mean of empty tensor");
        let n = a.len() as f64;
        let total: f64 = a.data.iter().sum();
        let value = ArrayD::from_elem(IxDyn(&[]), total / n);
        let shape = a.data.raw_dim();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            let gv = g[[]] / n;
            vec![na.then(|| ArrayD::from_elem(shape.clone(), gv))]
        })
    }

    /// Sum along one axis (the axis is removed from the shape).
    pub fn sum_axis(&self, a: &Tensor, axis: usize) -> Tensor {
        assert!(axis < a.shape().len(), "sum_axis: axis {axis} out of range for {:?}", a.shape());
        let value = a.data.sum_axis(Axis(axis));
        let shape = a.data.raw_dim();
        let na = a.is_tracked();
        self.custom_op(&[a], value, move |g| {
            vec![na.then(|| {
                let expanded = g.clone().insert_axis(Axis(axis));
                expanded.broadcast(shape.clone()).unwrap().to_owned()
            })]
        })
    }

    // ---- shape and assembly ----------------------------------------------

    /// Column-wise concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(&self, parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = parts[0].view2("concat_cols").nrows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let v = p.view2("concat_cols");
            assert_eq!(v.nrows(), rows, "concat_cols: row count mismatch");
            widths.push(v.ncols());
        }
        let total: usize = widths.iter().sum();
        let mut value = Array2::<f64>::zeros((rows, total));
        let mut col = 0;
        for p in parts {
            let v = p.view2("concat_cols");
            value.slice_mut(ndarray::s![.., col..col + v.ncols()]).assign(&v);
            col += v.ncols();
        }
        let tracked: Vec<bool> = parts.iter().map(|p| p.is_tracked()).collect();
        let widths_cl = widths.clone();
        self.custom_op(parts, value.into_dyn(), move |g| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut out = Vec::with_capacity(widths_cl.len());
            let mut col = 0;
            for (w, tr) in widths_cl.iter().zip(&tracked) {
                out.push(tr.then(|| g2.slice(ndarray::s![.., col..col + w]).to_owned().into_dyn()));
                col += w;
            }
            out
        })
    }

    /// Mean over consecutive groups of `group` rows: `(g·group, d) -> (g, d)`.
    pub fn mean_pool_rows(&self, a: &Tensor, group: usize) -> Tensor {
        let v = a.view2("mean_pool_rows");
        assert!(group > 0, "mean_pool_rows: group must be positive");
        assert_eq!(
            v.nrows() % group,
            0,
            "mean_pool_rows: {} rows not divisible by group {group}",
            v.nrows()
        );
        let groups = v.nrows() / group;
        let d = v.ncols();
        let mut value = Array2::<f64>::zeros((groups, d));
        for gidx in 0..groups {
            let mut row = value.row_mut(gidx);
            for r in 0..group {
                row += &v.row(gidx * group + r);
            }
            row.mapv_inplace(|x| x / group as f64);
        }
        let na = a.is_tracked();
        self.custom_op(&[a], value.into_dyn(), move |g| {
            vec![na.then(|| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut out = Array2::<f64>::zeros((groups * group, d));
                for gidx in 0..groups {
                    let src = g2.row(gidx);
                    for r in 0..group {
                        out.row_mut(gidx * group + r).assign(&src.mapv(|x| x / group as f64));
                    }
                }
                out.into_dyn()
            })]
        })
    }

    /// Reshape `(g·group, d)` to `(g, group·d)` by flattening each run of
    /// `group` consecutive rows into one row.
    pub fn reshape_rows(&self, a: &Tensor, group: usize) -> Tensor {
        let v = a.view2("reshape_rows");
        assert!(group > 0, "reshape_rows: group must be positive");
        assert_eq!(
            v.nrows() % group,
            0,
            "reshape_rows: {} rows not divisible by group {group}",
            v.nrows()
        );
        let groups = v.nrows() / group;
        let d = v.ncols();
        let value = v
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((groups, group * d))
            .expect("reshape_rows: contiguous reshape");
        let na = a.is_tracked();
        self.custom_op(&[a], value.into_dyn(), move |g| {
            vec![na.then(|| {
                // Incoming gradients may arrive in any memory order (e.g.
                // transposed matrix products); reshaping requires standard
                // layout.
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                g2.as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((groups * group, d))
                    .expect("reshape_rows: contiguous reshape")
                    .into_dyn()
            })]
        })
    }

    /// Select rows by index: `(n, d)` with `m` indices -> `(m, d)`. Indices may
    /// repeat; the backward pass scatter-adds into the source rows.
    pub fn gather_rows(&self, a: &Tensor, indices: &[usize]) -> Tensor {
        let v = a.view2("gather_rows");
        let n = v.nrows();
        let d = v.ncols();
        for &i in indices {
            assert!(i < n, "gather_rows: index {i} out of range for {n} rows");
        }
        let mut value = Array2::<f64>::zeros((indices.len(), d));
        for (out_row, &i) in indices.iter().enumerate() {
            value.row_mut(out_row).assign(&v.row(i));
        }
        let idx: Vec<usize> = indices.to_vec();
        let na = a.is_tracked();
        self.custom_op(&[a], value.into_dyn(), move |g| {
            vec![na.then(|| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut out = Array2::<f64>::zeros((n, d));
                for (src_row, &i) in idx.iter().enumerate() {
                    let mut dst = out.row_mut(i);
                    dst += &g2.row(src_row);
                }
                out.into_dyn()
            })]
        })
    }

    /// Matrix product of 2-D tensors: `(m, k) · (k, n) -> (m, n)`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Tensor {
        let av = a.view2("matmul lhs");
        let bv = b.view2("matmul rhs");
        assert_eq!(
            av.ncols(),
            bv.nrows(),
            "matmul: inner dimensions {} vs {}",
            av.ncols(),
            bv.nrows()
        );
        let value = av.dot(&bv).into_dyn();
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let (na, nb) = (a.is_tracked(), b.is_tracked());
        self.custom_op(&[a, b], value, move |g| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let da = na.then(|| {
                let b2 = bd.view().into_dimensionality::<Ix2>().unwrap();
                g2.dot(&b2.t()).into_dyn()
            });
            let db = nb.then(|| {
                let a2 = ad.view().into_dimensionality::<Ix2>().unwrap();
                a2.t().dot(&g2).into_dyn()
            });
            vec![da, db]
        })
    }

    /// Add a 1-D bias to every row of a 2-D tensor.
    pub fn add_bias(&self, x: &Tensor, b: &Tensor) -> Tensor {
        let xv = x.view2("add_bias input");
        let bv = b.view1("add_bias bias");
        assert_eq!(xv.ncols(), bv.len(), "add_bias: {} cols vs bias {}", xv.ncols(), bv.len());
        let value = (&xv + &bv).into_dyn();
        let (nx, nb) = (x.is_tracked(), b.is_tracked());
        self.custom_op(&[x, b], value, move |g| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            vec![nx.then(|| g.clone()), nb.then(|| g2.sum_axis(Axis(0)).into_dyn())]
        })
    }
}

#[cfg(test)]
mod tests;

//! Reverse-mode autodiff on a Wengert tape.
//!
//! A forward pass records one [`Node`] per operation; nodes are appended in
//! execution order, so ancestor indices always precede descendants and a
//! single reverse sweep propagates gradients with each node visited exactly
//! once. Gradients accumulate: calling [`Tape::backward`] twice doubles them.
//!
//! Recording is single-threaded per tape; distinct tapes over shared
//! read-only tensors may run concurrently.

use std::cell::{Cell, RefCell};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// What a node's backward rule sees: its own value, its upstream gradient,
/// and its parents' values. It returns one gradient per parent.
struct BackwardArgs<'a> {
    out: &'a [f64],
    grad: &'a [f64],
    parents: &'a [&'a [f64]],
}

type BackwardFn = Box<dyn Fn(&BackwardArgs) -> Vec<Vec<f64>>>;

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    has_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: Cell<bool>,
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("index", &self.index).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: Cell::new(true),
        }
    }

    /// A tape that records values only; backward rules are dropped.
    /// Use for inference where gradients are never requested.
    pub fn inference() -> Self {
        let t = Tape::new();
        t.grad_enabled.set(false);
        t
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled.get()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a leaf holding `t`. Leaves have no backward rule but do
    /// receive gradients, which callers read back with [`Tape::grad`].
    pub fn input(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Vec::new(), None)
    }

    /// Alias of [`Tape::input`] for values nothing will differentiate by.
    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.input(t)
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.input(&Tensor::scalar(x))
    }

    fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<f64>,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let numel = value.len();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            grad: vec![0.0; numel],
            has_grad: false,
            parents,
            backward: if self.grad_enabled.get() {
                backward
            } else {
                None
            },
        });
        Var {
            tape: self,
            index: nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var<'_>) -> Tensor {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.index];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is valid")
    }

    pub fn grad(&self, v: Var<'_>) -> Tensor {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.index];
        Tensor::new(n.shape.clone(), n.grad.clone()).expect("node shape is valid")
    }

    /// Propagate d`loss`/d`leaf` into every leaf's `grad` buffer.
    ///
    /// `loss` must be scalar. Interior gradients are consumed by the sweep;
    /// leaf gradients accumulate across calls with no implicit reset.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        {
            let mut nodes = self.nodes.borrow_mut();
            let n = &mut nodes[loss.index];
            if n.value.len() != 1 {
                return Err(Error::Contract(format!(
                    "backward needs a scalar loss, got shape {:?}",
                    n.shape
                )));
            }
            n.grad[0] += 1.0;
            n.has_grad = true;
        }
        for i in (0..=loss.index).rev() {
            // Phase 1: compute parent contributions under a shared borrow.
            let contributions = {
                let nodes = self.nodes.borrow();
                let node = &nodes[i];
                if !node.has_grad || node.backward.is_none() {
                    continue;
                }
                let parent_values: Vec<&[f64]> = node
                    .parents
                    .iter()
                    .map(|&p| nodes[p].value.as_slice())
                    .collect();
                let args = BackwardArgs {
                    out: &node.value,
                    grad: &node.grad,
                    parents: &parent_values,
                };
                (node.backward.as_ref().unwrap())(&args)
            };
            // Phase 2: accumulate under an exclusive borrow. The processed
            // node's gradient is consumed, so repeated backward passes
            // accumulate at leaves only.
            let mut nodes = self.nodes.borrow_mut();
            let parents = std::mem::take(&mut nodes[i].parents);
            for (&p, contrib) in parents.iter().zip(&contributions) {
                let pn = &mut nodes[p];
                debug_assert_eq!(pn.grad.len(), contrib.len(), "backward shape drift");
                for (g, c) in pn.grad.iter_mut().zip(contrib) {
                    *g += c;
                }
                pn.has_grad = true;
            }
            nodes[i].parents = parents;
            nodes[i].grad.iter_mut().for_each(|g| *g = 0.0);
            nodes[i].has_grad = false;
        }
        Ok(())
    }
}

fn check_same_tape(a: Var<'_>, b: Var<'_>) -> Result<()> {
    if std::ptr::eq(a.tape, b.tape) {
        Ok(())
    } else {
        Err(Error::Contract("variables come from different tapes".into()))
    }
}

// Raw matrix kernels shared by forward and backward rules.

fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// A · Bᵀ where A is m×k and B is n×k.
fn mm_abt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Aᵀ · B where A is m×k and B is m×n, giving k×n.
fn mm_atb(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn softmax_slice(xs: &[f64], out: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(*self)
    }

    pub fn grad(&self) -> Tensor {
        self.tape.grad(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.index].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.index].value.len()
    }

    pub fn scalar_value(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        debug_assert_eq!(nodes[self.index].value.len(), 1);
        nodes[self.index].value[0]
    }

    fn with_value<R>(&self, f: impl FnOnce(&[f64], &[usize]) -> R) -> R {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.index];
        f(&n.value, &n.shape)
    }

    fn dims2(&self) -> (usize, usize) {
        self.with_value(|v, s| match s.len() {
            1 => (1, v.len()),
            _ => (s[0], s[1]),
        })
    }

    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        // (x, y, dy) -> dx
        df: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let (value, shape) = self.with_value(|v, s| (v.iter().map(|&x| f(x)).collect::<Vec<_>>(), s.to_vec()));
        self.tape.push(
            shape,
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                vec![args
                    .out
                    .iter()
                    .zip(args.grad)
                    .zip(args.parents[0])
                    .map(|((&y, &dy), &x)| df(x, y, dy))
                    .collect()]
            })),
        )
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y, dy| dy * y * (1.0 - y),
        )
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(f64::tanh, |_, y, dy| dy * (1.0 - y * y))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(f64::exp, |_, y, dy| dy * y)
    }

    /// Natural log. Caller guarantees strictly positive inputs.
    pub fn ln(&self) -> Var<'t> {
        self.unary(f64::ln, |x, _, dy| dy / x)
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(
            |x| if x > 0.0 { x } else { 0.0 },
            |x, _, dy| if x > 0.0 { dy } else { 0.0 },
        )
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(move |x| c * x, move |_, _, dy| c * dy)
    }

    pub fn add_const(&self, c: f64) -> Var<'t> {
        self.unary(move |x| x + c, |_, _, dy| dy)
    }

    /// `c - x` elementwise.
    pub fn rsub_const(&self, c: f64) -> Var<'t> {
        self.unary(move |x| c - x, |_, _, dy| -dy)
    }

    /// log(1 - e^x) for x < 0, computed stably: `log1p(-e^x)` when
    /// x < -ln 2, else `log(-expm1(x))`.
    pub fn log1mexp(&self) -> Result<Var<'t>> {
        let bad = self.with_value(|v, _| v.iter().any(|&x| x >= 0.0));
        if bad {
            return Err(Error::Numeric(
                "log1mexp needs strictly negative input (P < 1)".into(),
            ));
        }
        const LN_HALF: f64 = -std::f64::consts::LN_2;
        Ok(self.unary(
            |x| {
                if x < LN_HALF {
                    (-x.exp()).ln_1p()
                } else {
                    (-x.exp_m1()).ln()
                }
            },
            // d/dx log(1 - e^x) = -e^x / (1 - e^x) = -e^{x - f(x)}
            |x, y, dy| -dy * (x - y).exp(),
        ))
    }

    fn binary_same_shape(
        &self,
        other: Var<'t>,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        // (a, b, dy) -> (da, db)
        df: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Result<Var<'t>> {
        check_same_tape(*self, other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if self.numel() != other.numel() {
            return Err(Error::Dimension(format!(
                "{name}: shapes {sa:?} and {sb:?} have different element counts"
            )));
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.index]
                .value
                .iter()
                .zip(&nodes[other.index].value)
                .map(|(&a, &b)| f(a, b))
                .collect::<Vec<_>>()
        };
        Ok(self.tape.push(
            sa,
            value,
            vec![self.index, other.index],
            Some(Box::new(move |args| {
                let mut da = Vec::with_capacity(args.grad.len());
                let mut db = Vec::with_capacity(args.grad.len());
                for ((&a, &b), &dy) in args.parents[0].iter().zip(args.parents[1]).zip(args.grad) {
                    let (ga, gb) = df(a, b, dy);
                    da.push(ga);
                    db.push(gb);
                }
                vec![da, db]
            })),
        ))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same_shape(other, "add", |a, b| a + b, |_, _, dy| (dy, dy))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same_shape(other, "sub", |a, b| a - b, |_, _, dy| (dy, -dy))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same_shape(other, "mul", |a, b| a * b, |a, b, dy| (dy * b, dy * a))
    }

    /// Multiply every element by a one-element variable.
    pub fn scale_by(&self, s: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(*self, s)?;
        if s.numel() != 1 {
            return Err(Error::Dimension(format!(
                "scale_by needs a scalar, got shape {:?}",
                s.shape()
            )));
        }
        let shape = self.shape();
        let value = {
            let nodes = self.tape.nodes.borrow();
            let sv = nodes[s.index].value[0];
            nodes[self.index]
                .value
                .iter()
                .map(|&x| x * sv)
                .collect::<Vec<_>>()
        };
        Ok(self.tape.push(
            shape,
            value,
            vec![self.index, s.index],
            Some(Box::new(|args| {
                let sv = args.parents[1][0];
                let da: Vec<f64> = args.grad.iter().map(|&dy| dy * sv).collect();
                let ds: f64 = args
                    .grad
                    .iter()
                    .zip(args.parents[0])
                    .map(|(&dy, &x)| dy * x)
                    .sum();
                vec![da, vec![ds]]
            })),
        ))
    }

    /// Matrix product; vectors are treated as a single row.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        check_same_tape(*self, other)?;
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul: {:?} × {:?} (inner dimensions {k} vs {k2})",
                self.shape(),
                other.shape()
            )));
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            mm(
                &nodes[self.index].value,
                &nodes[other.index].value,
                m,
                k,
                n,
            )
        };
        Ok(self.tape.push(
            vec![m, n],
            value,
            vec![self.index, other.index],
            Some(Box::new(move |args| {
                let da = mm_abt(args.grad, args.parents[1], m, n, k);
                let db = mm_atb(args.parents[0], args.grad, m, k, n);
                vec![da, db]
            })),
        ))
    }

    pub fn transpose(&self) -> Var<'t> {
        let (m, n) = self.dims2();
        let value = self.with_value(|v, _| {
            let mut out = vec![0.0; v.len()];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = v[i * n + j];
                }
            }
            out
        });
        self.tape.push(
            vec![n, m],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; args.grad.len()];
                for j in 0..n {
                    for i in 0..m {
                        da[i * n + j] = args.grad[j * m + i];
                    }
                }
                vec![da]
            })),
        )
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} to {:?}",
                self.shape(),
                shape
            )));
        }
        let value = self.with_value(|v, _| v.to_vec());
        Ok(self.tape.push(
            shape,
            value,
            vec![self.index],
            Some(Box::new(|args| vec![args.grad.to_vec()])),
        ))
    }

    /// Numerically stable softmax along the whole (rank-1) tensor.
    pub fn softmax(&self) -> Result<Var<'t>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::Dimension("softmax over an empty axis".into()));
        }
        let value = self.with_value(|v, _| {
            let mut out = vec![0.0; v.len()];
            softmax_slice(v, &mut out);
            out
        });
        Ok(self.tape.push(
            vec![n],
            value,
            vec![self.index],
            Some(Box::new(|args| {
                let dot: f64 = args.grad.iter().zip(args.out).map(|(&g, &y)| g * y).sum();
                vec![args
                    .out
                    .iter()
                    .zip(args.grad)
                    .map(|(&y, &g)| y * (g - dot))
                    .collect()]
            })),
        ))
    }

    /// Row-wise softmax of a matrix. When `mask` is given, `false` positions
    /// get probability zero and receive no gradient; each row must keep at
    /// least one allowed position.
    pub fn softmax_rows(&self, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let (m, n) = self.dims2();
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(Error::Dimension(format!(
                    "softmax mask has {} entries for a {m}×{n} matrix",
                    mask.len()
                )));
            }
        }
        let mask_owned: Option<Vec<bool>> = mask.map(|m| m.to_vec());
        let value = self.with_value(|v, _| {
            let mut out = vec![0.0; v.len()];
            for r in 0..m {
                let row = &v[r * n..(r + 1) * n];
                let orow = &mut out[r * n..(r + 1) * n];
                match &mask_owned {
                    None => softmax_slice(row, orow),
                    Some(mask) => {
                        let mrow = &mask[r * n..(r + 1) * n];
                        let max = row
                            .iter()
                            .zip(mrow)
                            .filter(|(_, &keep)| keep)
                            .map(|(&x, _)| x)
                            .fold(f64::NEG_INFINITY, f64::max);
                        assert!(
                            max.is_finite(),
                            "softmax row {r} has no unmasked positions"
                        );
                        let mut sum = 0.0;
                        for ((o, &x), &keep) in orow.iter_mut().zip(row).zip(mrow) {
                            *o = if keep {
                                let e = (x - max).exp();
                                sum += e;
                                e
                            } else {
                                0.0
                            };
                        }
                        for o in orow.iter_mut() {
                            *o /= sum;
                        }
                    }
                }
            }
            out
        });
        Ok(self.tape.push(
            vec![m, n],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; args.grad.len()];
                for r in 0..m {
                    let y = &args.out[r * n..(r + 1) * n];
                    let g = &args.grad[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(g).map(|(&y, &g)| y * g).sum();
                    let drow = &mut da[r * n..(r + 1) * n];
                    for ((d, &yv), &gv) in drow.iter_mut().zip(y).zip(g) {
                        *d = yv * (gv - dot);
                    }
                }
                vec![da]
            })),
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let value = self.with_value(|v, _| vec![v.iter().sum::<f64>()]);
        let n = self.numel();
        self.tape.push(
            vec![1],
            value,
            vec![self.index],
            Some(Box::new(move |args| vec![vec![args.grad[0]; n]])),
        )
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// Select one element as a scalar node.
    pub fn select(&self, idx: usize) -> Result<Var<'t>> {
        let n = self.numel();
        if idx >= n {
            return Err(Error::Contract(format!(
                "select index {idx} out of range for length {n}"
            )));
        }
        let value = self.with_value(|v, _| vec![v[idx]]);
        Ok(self.tape.push(
            vec![1],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; n];
                da[idx] = args.grad[0];
                vec![da]
            })),
        ))
    }

    /// Contiguous 1-D slice `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Var<'t>> {
        let n = self.numel();
        if from >= to || to > n {
            return Err(Error::Dimension(format!(
                "slice [{from}, {to}) out of range for length {n}"
            )));
        }
        let value = self.with_value(|v, _| v[from..to].to_vec());
        Ok(self.tape.push(
            vec![to - from],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; n];
                da[from..to].copy_from_slice(args.grad);
                vec![da]
            })),
        ))
    }

    /// Column range `[from, to)` of a matrix.
    pub fn slice_cols(&self, from: usize, to: usize) -> Result<Var<'t>> {
        let (m, n) = self.dims2();
        if from >= to || to > n {
            return Err(Error::Dimension(format!(
                "slice_cols [{from}, {to}) out of range for {m}×{n}"
            )));
        }
        let w = to - from;
        let value = self.with_value(|v, _| {
            let mut out = Vec::with_capacity(m * w);
            for r in 0..m {
                out.extend_from_slice(&v[r * n + from..r * n + to]);
            }
            out
        });
        Ok(self.tape.push(
            vec![m, w],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    da[r * n + from..r * n + to].copy_from_slice(&args.grad[r * w..(r + 1) * w]);
                }
                vec![da]
            })),
        ))
    }

    /// Row `r` of a matrix as a vector.
    pub fn row(&self, r: usize) -> Result<Var<'t>> {
        let (m, n) = self.dims2();
        if r >= m {
            return Err(Error::Dimension(format!("row {r} of a {m}×{n} matrix")));
        }
        let value = self.with_value(|v, _| v[r * n..(r + 1) * n].to_vec());
        Ok(self.tape.push(
            vec![n],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; m * n];
                da[r * n..(r + 1) * n].copy_from_slice(args.grad);
                vec![da]
            })),
        ))
    }

    /// Embedding lookup: rows of `self` (a table) at `ids`, stacked.
    /// Backward scatter-adds into the table.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Var<'t>> {
        let (v, d) = self.dims2();
        if ids.is_empty() {
            return Err(Error::EmptySequence("gather_rows with no indices".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Contract(format!(
                "gather_rows id {bad} out of range for table with {v} rows"
            )));
        }
        let ids_owned = ids.to_vec();
        let value = self.with_value(|t, _| {
            let mut out = Vec::with_capacity(ids_owned.len() * d);
            for &i in &ids_owned {
                out.extend_from_slice(&t[i * d..(i + 1) * d]);
            }
            out
        });
        let t_rows = v;
        Ok(self.tape.push(
            vec![ids.len(), d],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                let mut da = vec![0.0; t_rows * d];
                for (k, &i) in ids_owned.iter().enumerate() {
                    let g = &args.grad[k * d..(k + 1) * d];
                    let dst = &mut da[i * d..(i + 1) * d];
                    for (o, &gv) in dst.iter_mut().zip(g) {
                        *o += gv;
                    }
                }
                vec![da]
            })),
        ))
    }

    /// Sum weights into a fresh vector of `size` at `ids` (copy-mechanism
    /// projection of attention mass onto extended-vocabulary ids).
    pub fn scatter_add(&self, ids: &[usize], size: usize) -> Result<Var<'t>> {
        let n = self.numel();
        if ids.len() != n {
            return Err(Error::Dimension(format!(
                "scatter_add: {} weights but {} indices",
                n,
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= size) {
            return Err(Error::Contract(format!(
                "scatter_add id {bad} out of range for size {size}"
            )));
        }
        let ids_owned = ids.to_vec();
        let value = self.with_value(|w, _| {
            let mut out = vec![0.0; size];
            for (&i, &wv) in ids_owned.iter().zip(w) {
                out[i] += wv;
            }
            out
        });
        Ok(self.tape.push(
            vec![size],
            value,
            vec![self.index],
            Some(Box::new(move |args| {
                vec![ids_owned.iter().map(|&i| args.grad[i]).collect()]
            })),
        ))
    }

    /// Extend a vector with zeros up to `size`.
    pub fn pad_zeros(&self, size: usize) -> Result<Var<'t>> {
        let n = self.numel();
        if size < n {
            return Err(Error::Dimension(format!(
                "pad_zeros target {size} smaller than length {n}"
            )));
        }
        let value = self.with_value(|v, _| {
            let mut out = v.to_vec();
            out.resize(size, 0.0);
            out
        });
        Ok(self.tape.push(
            vec![size],
            value,
            vec![self.index],
            Some(Box::new(move |args| vec![args.grad[..n].to_vec()])),
        ))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(&self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>> {
        check_same_tape(*self, gamma)?;
        check_same_tape(*self, beta)?;
        let (m, n) = self.dims2();
        if gamma.numel() != n || beta.numel() != n {
            return Err(Error::Dimension(format!(
                "layer_norm: gamma/beta length {} / {} for width {n}",
                gamma.numel(),
                beta.numel()
            )));
        }
        let shape = self.shape();
        let value = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.index].value;
            let g = &nodes[gamma.index].value;
            let b = &nodes[beta.index].value;
            let mut out = vec![0.0; x.len()];
            for r in 0..m {
                let row = &x[r * n..(r + 1) * n];
                let mu = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                let s = (var + eps).sqrt();
                for j in 0..n {
                    out[r * n + j] = g[j] * (row[j] - mu) / s + b[j];
                }
            }
            out
        };
        Ok(self.tape.push(
            shape,
            value,
            vec![self.index, gamma.index, beta.index],
            Some(Box::new(move |args| {
                let x = args.parents[0];
                let g = args.parents[1];
                let mut dx = vec![0.0; x.len()];
                let mut dgamma = vec![0.0; n];
                let mut dbeta = vec![0.0; n];
                for r in 0..m {
                    let row = &x[r * n..(r + 1) * n];
                    let grow = &args.grad[r * n..(r + 1) * n];
                    let mu = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                    let s = (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mu) / s).collect();
                    // dgamma/dbeta accumulate across rows.
                    for j in 0..n {
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                    }
                    let gy: Vec<f64> = grow.iter().zip(g).map(|(&dy, &gv)| dy * gv).collect();
                    let mean_gy = gy.iter().sum::<f64>() / n as f64;
                    let mean_gy_xhat =
                        gy.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        dx[r * n + j] = (gy[j] - mean_gy - xhat[j] * mean_gy_xhat) / s;
                    }
                }
                vec![dx, dgamma, dbeta]
            })),
        ))
    }
}

/// Concatenate rank-1 variables into one vector.
pub fn concat<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = *parts
        .first()
        .ok_or_else(|| Error::EmptySequence("concat of zero variables".into()))?;
    for p in parts {
        check_same_tape(first, *p)?;
    }
    let lens: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
    let total: usize = lens.iter().sum();
    let value = {
        let nodes = first.tape.nodes.borrow();
        let mut out = Vec::with_capacity(total);
        for p in parts {
            out.extend_from_slice(&nodes[p.index].value);
        }
        out
    };
    Ok(first.tape.push(
        vec![total],
        value,
        parts.iter().map(|p| p.index).collect(),
        Some(Box::new(move |args| {
            let mut out = Vec::with_capacity(lens.len());
            let mut at = 0;
            for &len in &lens {
                out.push(args.grad[at..at + len].to_vec());
                at += len;
            }
            out
        })),
    ))
}

/// Stack equal-length vectors as the rows of a matrix.
pub fn stack_rows<'t>(rows: &[Var<'t>]) -> Result<Var<'t>> {
    let first = *rows
        .first()
        .ok_or_else(|| Error::EmptySequence("stack_rows of zero rows".into()))?;
    let n = first.numel();
    for r in rows {
        check_same_tape(first, *r)?;
        if r.numel() != n {
            return Err(Error::Dimension(format!(
                "stack_rows: row lengths {} vs {}",
                n,
                r.numel()
            )));
        }
    }
    let m = rows.len();
    let value = {
        let nodes = first.tape.nodes.borrow();
        let mut out = Vec::with_capacity(m * n);
        for r in rows {
            out.extend_from_slice(&nodes[r.index].value);
        }
        out
    };
    Ok(first.tape.push(
        vec![m, n],
        value,
        rows.iter().map(|r| r.index).collect(),
        Some(Box::new(move |args| {
            (0..m).map(|r| args.grad[r * n..(r + 1) * n].to_vec()).collect()
        })),
    ))
}

/// Concatenate matrices with equal row counts along columns.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = *parts
        .first()
        .ok_or_else(|| Error::EmptySequence("concat_cols of zero matrices".into()))?;
    let (m, _) = first.dims2();
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        check_same_tape(first, *p)?;
        let (pm, pn) = p.dims2();
        if pm != m {
            return Err(Error::Dimension(format!(
                "concat_cols: row counts {m} vs {pm}"
            )));
        }
        widths.push(pn);
    }
    let total: usize = widths.iter().sum();
    let value = {
        let nodes = first.tape.nodes.borrow();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                let v = &nodes[p.index].value;
                out.extend_from_slice(&v[r * w..(r + 1) * w]);
            }
        }
        out
    };
    Ok(first.tape.push(
        vec![m, total],
        value,
        parts.iter().map(|p| p.index).collect(),
        Some(Box::new(move |args| {
            let mut grads: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; m * w]).collect();
            for r in 0..m {
                let mut at = r * total;
                for (k, &w) in widths.iter().enumerate() {
                    grads[k][r * w..(r + 1) * w].copy_from_slice(&args.grad[at..at + w]);
                    at += w;
                }
            }
            grads
        })),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let eye = tape.input(&Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let a = tape.input(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let c = eye.matmul(a).unwrap();
        assert_eq!(c.value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_orthogonal_rows() {
        let tape = Tape::new();
        let a = tape.input(&Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let b = tape.input(&Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
        assert_eq!(a.matmul(b).unwrap().value().data(), &[0.0]);
    }

    #[test]
    fn matmul_hand_case() {
        let tape = Tape::new();
        let a = tape.input(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.input(&Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        assert_eq!(a.matmul(b).unwrap().value().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.input(&Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = tape.input(&Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn softmax_symmetry_and_hand_case() {
        let tape = Tape::new();
        let x = tape.input(&t(&[0.0, 0.0]));
        assert_eq!(x.softmax().unwrap().value().data(), &[0.5, 0.5]);

        let y = tape.input(&t(&[1.0f64.ln(), 3.0f64.ln()]));
        let sm = y.softmax().unwrap().value();
        assert!((sm.data()[0] - 0.25).abs() < 1e-12);
        assert!((sm.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        let tape = Tape::new();
        let x = tape.input(&t(&[1000.0, 0.0]));
        let sm = x.softmax().unwrap().value();
        assert!(sm.is_finite());
        assert!(sm.data()[0] > 1.0 - 1e-9);
        assert!(sm.data()[1] < 1e-9);
    }

    #[test]
    fn backward_of_square() {
        let tape = Tape::new();
        let x = tape.input(&Tensor::scalar(3.0));
        let loss = x.mul(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().data(), &[6.0]);
    }

    #[test]
    fn backward_of_softmax_sum_is_zero() {
        let tape = Tape::new();
        let x = tape.input(&t(&[0.3, -1.2, 2.4]));
        let loss = x.softmax().unwrap().sum();
        tape.backward(loss).unwrap();
        for g in x.grad().data() {
            assert!(g.abs() < 1e-12, "grad {g}");
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.input(&t(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let tape = Tape::new();
        let x = tape.input(&Tensor::scalar(3.0));
        let loss = x.mul(x).unwrap();
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().data(), &[12.0]);
    }

    #[test]
    fn scatter_add_and_select() {
        let tape = Tape::new();
        let w = tape.input(&t(&[0.1, 0.2, 0.3]));
        let s = w.scatter_add(&[2, 0, 2], 4).unwrap();
        assert_eq!(s.value().data(), &[0.2, 0.0, 0.4, 0.0]);
        let loss = s.select(2).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(w.grad().data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn log1mexp_rejects_zero_log_probability() {
        let tape = Tape::new();
        let x = tape.input(&Tensor::scalar(0.0));
        assert!(x.log1mexp().is_err());
    }

    #[test]
    fn inference_tape_records_no_backward() {
        let tape = Tape::inference();
        let x = tape.input(&Tensor::scalar(2.0));
        let y = x.mul(x).unwrap();
        assert_eq!(y.value().data(), &[4.0]);
        tape.backward(y).unwrap();
        assert_eq!(x.grad().data(), &[0.0]);
    }
}

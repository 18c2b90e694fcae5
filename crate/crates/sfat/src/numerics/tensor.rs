//! Reverse-mode autodiff over dense row-major tensors.
//!
//! Every operation records its parents and a backward closure into the
//! node it produces; [`backward`] replays the graph in reverse creation
//! order. Nodes are immutable after construction except for the `grad`
//! slot. Untracked subgraphs (no `requires_grad` leaf upstream) keep no
//! parents and no closures, so eval-mode forwards allocate no tape.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, Result};

/// Element type for tensor math: f32 for training/eval, f64 for
/// finite-difference gradient checks.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn r<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 conversion")
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn<F> = Box<dyn Fn(&[F], &[Tensor<F>])>;

struct Node<F: Real> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<F>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: bool,
    tracked: bool,
    parents: Vec<Tensor<F>>,
    backward: Option<BackwardFn<F>>,
}

/// Handle to an immutable tensor node in the computation graph.
pub struct Tensor<F: Real> {
    inner: Rc<Node<F>>,
}

impl<F: Real> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<F: Real> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("tracked", &self.inner.tracked)
            .finish()
    }
}

impl<F: Real> Tensor<F> {
    fn build(
        shape: Vec<usize>,
        data: Vec<F>,
        requires_grad: bool,
        parents: Vec<Tensor<F>>,
        backward: Option<BackwardFn<F>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let tracked = requires_grad || parents.iter().any(|p| p.inner.tracked);
        // Drop the tape for untracked results.
        let (parents, backward) = if tracked { (parents, backward) } else { (Vec::new(), None) };
        Tensor {
            inner: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: RefCell::new(None),
                requires_grad,
                tracked,
                parents,
                backward,
            }),
        }
    }

    /// Constant (non-differentiable) tensor.
    pub fn constant(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NumericsError::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// Leaf tensor that participates in gradient computation.
    pub fn leaf(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NumericsError::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![F::zero(); n], false, Vec::new(), None)
    }

    pub fn scalar(x: F) -> Self {
        Self::build(vec![1], vec![x], false, Vec::new(), None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[F] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn tracked(&self) -> bool {
        self.inner.tracked
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<F> {
        if self.numel() != 1 {
            return Err(NumericsError::Contract(format!(
                "item() requires a scalar, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    fn dims2(&self) -> Result<(usize, usize)> {
        match self.inner.shape.as_slice() {
            [n, d] => Ok((*n, *d)),
            s => Err(NumericsError::Dimension(format!("expected a 2-D tensor, got shape {:?}", s))),
        }
    }

    fn accumulate(&self, g: &[F]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a = *a + *b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    // ── element-wise ────────────────────────────────────────────────

    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.shape() != other.shape() {
            return Err(NumericsError::Dimension(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data().iter().zip(other.data()).map(|(a, b)| *a + *b).collect();
        Ok(Tensor::build(
            self.shape().to_vec(),
            data,
            false,
            vec![self.clone(), other.clone()],
            Some(Box::new(|g, parents| {
                if parents[0].tracked() {
                    parents[0].accumulate(g);
                }
                if parents[1].tracked() {
                    parents[1].accumulate(g);
                }
            })),
        ))
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.add(&other.scale(-F::one()))
    }

    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.shape() != other.shape() {
            return Err(NumericsError::Dimension(format!(
                "mul: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data().iter().zip(other.data()).map(|(a, b)| *a * *b).collect();
        Ok(Tensor::build(
            self.shape().to_vec(),
            data,
            false,
            vec![self.clone(), other.clone()],
            Some(Box::new(|g, parents| {
                if parents[0].tracked() {
                    let gb: Vec<F> =
                        g.iter().zip(parents[1].data()).map(|(x, y)| *x * *y).collect();
                    parents[0].accumulate(&gb);
                }
                if parents[1].tracked() {
                    let ga: Vec<F> =
                        g.iter().zip(parents[0].data()).map(|(x, y)| *x * *y).collect();
                    parents[1].accumulate(&ga);
                }
            })),
        ))
    }

    pub fn scale(&self, c: F) -> Tensor<F> {
        let data = self.data().iter().map(|x| *x * c).collect();
        Tensor::build(
            self.shape().to_vec(),
            data,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let gx: Vec<F> = g.iter().map(|x| *x * c).collect();
                    parents[0].accumulate(&gx);
                }
            })),
        )
    }

    /// Element-wise addition of a constant slice (attention masks).
    pub fn add_elem_const(&self, c: &[F]) -> Result<Tensor<F>> {
        if c.len() != self.numel() {
            return Err(NumericsError::Dimension(format!(
                "add_elem_const: {} constants for {} elements",
                c.len(),
                self.numel()
            )));
        }
        let data = self.data().iter().zip(c).map(|(a, b)| *a + *b).collect();
        Ok(Tensor::build(
            self.shape().to_vec(),
            data,
            false,
            vec![self.clone()],
            Some(Box::new(|g, parents| {
                if parents[0].tracked() {
                    parents[0].accumulate(g);
                }
            })),
        ))
    }

    pub fn relu(&self) -> Tensor<F> {
        let data: Vec<F> =
            self.data().iter().map(|x| if *x > F::zero() { *x } else { F::zero() }).collect();
        let mask: Vec<bool> = self.data().iter().map(|x| *x > F::zero()).collect();
        Tensor::build(
            self.shape().to_vec(),
            data,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let gx: Vec<F> = g
                        .iter()
                        .zip(&mask)
                        .map(|(x, keep)| if *keep { *x } else { F::zero() })
                        .collect();
                    parents[0].accumulate(&gx);
                }
            })),
        )
    }

    /// Inverted dropout; identity when the rate is zero.
    pub fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Result<Tensor<F>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::Parameter(format!("dropout rate {rate} not in [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(self.clone());
        }
        let keep_scale = r::<F>(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep_scale })
            .collect();
        self.mul(&Tensor::constant(self.shape(), mask)?)
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(NumericsError::Dimension(format!(
                "matmul: inner dimensions of {:?} and {:?} disagree",
                self.shape(),
                other.shape()
            )));
        }
        let a = self.data();
        let b = other.data();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == F::zero() {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] = orow[j] + aip * brow[j];
                }
            }
        }
        Ok(Tensor::build(
            vec![m, n],
            out,
            false,
            vec![self.clone(), other.clone()],
            Some(Box::new(move |g, parents| {
                let a = parents[0].data();
                let b = parents[1].data();
                if parents[0].tracked() {
                    // gA = G · Bᵀ
                    let mut ga = vec![F::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = F::zero();
                            for j in 0..n {
                                acc = acc + g[i * n + j] * b[p * n + j];
                            }
                            ga[i * k + p] = acc;
                        }
                    }
                    parents[0].accumulate(&ga);
                }
                if parents[1].tracked() {
                    // gB = Aᵀ · G
                    let mut gb = vec![F::zero(); k * n];
                    for p in 0..k {
                        for i in 0..m {
                            let aip = a[i * k + p];
                            if aip == F::zero() {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] = gb[p * n + j] + aip * g[i * n + j];
                            }
                        }
                    }
                    parents[1].accumulate(&gb);
                }
            })),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<F>> {
        let (m, n) = self.dims2()?;
        let a = self.data();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
        Ok(Tensor::build(
            vec![n, m],
            out,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); m * n];
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] = g[j * m + i];
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }

    /// Add a bias row vector `[d]` (or `[1, d]`) to every row of `[n, d]`.
    pub fn add_row(&self, bias: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, d) = self.dims2()?;
        if bias.numel() != d {
            return Err(NumericsError::Dimension(format!(
                "add_row: bias of {} elements for row width {}",
                bias.numel(),
                d
            )));
        }
        let b = bias.data();
        let data = self
            .data()
            .iter()
            .enumerate()
            .map(|(idx, x)| *x + b[idx % d])
            .collect();
        Ok(Tensor::build(
            vec![n, d],
            data,
            false,
            vec![self.clone(), bias.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    parents[0].accumulate(g);
                }
                if parents[1].tracked() {
                    let mut gb = vec![F::zero(); d];
                    for i in 0..n {
                        for j in 0..d {
                            gb[j] = gb[j] + g[i * d + j];
                        }
                    }
                    parents[1].accumulate(&gb);
                }
            })),
        ))
    }

    pub fn sum(&self) -> Tensor<F> {
        let total = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::build(
            vec![1],
            vec![total],
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    parents[0].accumulate(&vec![g[0]; n]);
                }
            })),
        )
    }

    // ── row-wise normalizations ─────────────────────────────────────

    /// Row-wise temperature softmax with max-subtraction.
    pub fn softmax_temp_rows(&self, epsilon: f64) -> Result<Tensor<F>> {
        if epsilon <= 0.0 {
            return Err(NumericsError::Parameter(format!(
                "softmax temperature must be positive, got {epsilon}"
            )));
        }
        let (n, d) = self.dims2()?;
        if d == 0 {
            return Err(NumericsError::Dimension("softmax over an empty row".into()));
        }
        let eps = r::<F>(epsilon);
        let x = self.data();
        let mut out = vec![F::zero(); n * d];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for j in 0..d {
                let e = ((row[j] - m) / eps).exp();
                out[i * d + j] = e;
                z = z + e;
            }
            for j in 0..d {
                out[i * d + j] = out[i * d + j] / z;
            }
        }
        let y = out.clone();
        Ok(Tensor::build(
            vec![n, d],
            out,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); n * d];
                    for i in 0..n {
                        let yr = &y[i * d..(i + 1) * d];
                        let gr = &g[i * d..(i + 1) * d];
                        let dot: F = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for j in 0..d {
                            gx[i * d + j] = yr[j] * (gr[j] - dot) / eps;
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&self, gain: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, d) = self.dims2()?;
        if gain.numel() != d || bias.numel() != d {
            return Err(NumericsError::Dimension(format!(
                "layer_norm: gain/bias of {}/{} elements for width {}",
                gain.numel(),
                bias.numel(),
                d
            )));
        }
        let ln_eps = r::<F>(1e-5);
        let x = self.data();
        let gv = gain.data();
        let bv = bias.data();
        let mut xhat = vec![F::zero(); n * d];
        let mut inv_std = vec![F::zero(); n];
        let mut out = vec![F::zero(); n * d];
        let dn = r::<F>(d as f64);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mean = row.iter().copied().sum::<F>() / dn;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>() / dn;
            let istd = F::one() / (var + ln_eps).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let xh = (row[j] - mean) * istd;
                xhat[i * d + j] = xh;
                out[i * d + j] = gv[j] * xh + bv[j];
            }
        }
        Ok(Tensor::build(
            vec![n, d],
            out,
            false,
            vec![self.clone(), gain.clone(), bias.clone()],
            Some(Box::new(move |g, parents| {
                let gv = parents[1].data();
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); n * d];
                    for i in 0..n {
                        let xh = &xhat[i * d..(i + 1) * d];
                        let gr = &g[i * d..(i + 1) * d];
                        let mut sum_dxh = F::zero();
                        let mut sum_dxh_xh = F::zero();
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            sum_dxh = sum_dxh + dxh;
                            sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                        }
                        let m1 = sum_dxh / dn;
                        let m2 = sum_dxh_xh / dn;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            gx[i * d + j] = (dxh - m1 - xh[j] * m2) * inv_std[i];
                        }
                    }
                    parents[0].accumulate(&gx);
                }
                if parents[1].tracked() {
                    let mut gg = vec![F::zero(); d];
                    for i in 0..n {
                        for j in 0..d {
                            gg[j] = gg[j] + g[i * d + j] * xhat[i * d + j];
                        }
                    }
                    parents[1].accumulate(&gg);
                }
                if parents[2].tracked() {
                    let mut gb = vec![F::zero(); d];
                    for i in 0..n {
                        for j in 0..d {
                            gb[j] = gb[j] + g[i * d + j];
                        }
                    }
                    parents[2].accumulate(&gb);
                }
            })),
        ))
    }

    /// Row-wise L2 normalization.
    pub fn l2_normalize_rows(&self) -> Result<Tensor<F>> {
        let (n, d) = self.dims2()?;
        let tiny = r::<F>(1e-12);
        let x = self.data();
        let mut out = vec![F::zero(); n * d];
        let mut norms = vec![F::zero(); n];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let nrm = row.iter().map(|v| *v * *v).sum::<F>().sqrt().max(tiny);
            norms[i] = nrm;
            for j in 0..d {
                out[i * d + j] = row[j] / nrm;
            }
        }
        let y = out.clone();
        Ok(Tensor::build(
            vec![n, d],
            out,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); n * d];
                    for i in 0..n {
                        let yr = &y[i * d..(i + 1) * d];
                        let gr = &g[i * d..(i + 1) * d];
                        let dot: F = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for j in 0..d {
                            gx[i * d + j] = (gr[j] - yr[j] * dot) / norms[i];
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }

    // ── gather / scatter ────────────────────────────────────────────

    /// Look up rows of an embedding table.
    pub fn embedding(table: &Tensor<F>, ids: &[usize]) -> Result<Tensor<F>> {
        table.gather_rows(ids)
    }

    /// Select rows by index (with repetition allowed).
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor<F>> {
        let (n, d) = self.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= n {
                return Err(NumericsError::Index(format!(
                    "row index {id} out of range for {n} rows"
                )));
            }
            out.extend_from_slice(&self.data()[id * d..(id + 1) * d]);
        }
        let ids = ids.to_vec();
        let m = ids.len();
        Ok(Tensor::build(
            vec![m, d],
            out,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); n * d];
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gx[id * d + j] = gx[id * d + j] + g[row * d + j];
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor<F>> {
        let (n, d) = self.dims2()?;
        if start >= end || end > d {
            return Err(NumericsError::Index(format!(
                "column slice {start}..{end} invalid for width {d}"
            )));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&self.data()[i * d + start..i * d + end]);
        }
        Ok(Tensor::build(
            vec![n, w],
            out,
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let mut gx = vec![F::zero(); n * d];
                    for i in 0..n {
                        for j in 0..w {
                            gx[i * d + start + j] = g[i * w + j];
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }

    pub fn concat_rows(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
        if parts.is_empty() {
            return Err(NumericsError::Dimension("concat_rows of zero tensors".into()));
        }
        let (_, d) = parts[0].dims2()?;
        let mut rows = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for p in parts {
            let (ni, di) = p.dims2()?;
            if di != d {
                return Err(NumericsError::Dimension(format!(
                    "concat_rows: widths {d} and {di} differ"
                )));
            }
            rows.push(ni);
            data.extend_from_slice(p.data());
        }
        let total: usize = rows.iter().sum();
        Ok(Tensor::build(
            vec![total, d],
            data,
            false,
            parts.to_vec(),
            Some(Box::new(move |g, parents| {
                let mut offset = 0;
                for (p, &ni) in parents.iter().zip(&rows) {
                    let len = ni * d;
                    if p.tracked() {
                        p.accumulate(&g[offset..offset + len]);
                    }
                    offset += len;
                }
            })),
        ))
    }

    pub fn concat_cols(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
        if parts.is_empty() {
            return Err(NumericsError::Dimension("concat_cols of zero tensors".into()));
        }
        let (n, _) = parts[0].dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (ni, di) = p.dims2()?;
            if ni != n {
                return Err(NumericsError::Dimension(format!(
                    "concat_cols: row counts {n} and {ni} differ"
                )));
            }
            widths.push(di);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
            }
        }
        Ok(Tensor::build(
            vec![n, total],
            data,
            false,
            parts.to_vec(),
            Some(Box::new(move |g, parents| {
                let mut offset = 0;
                for (p, &w) in parents.iter().zip(&widths) {
                    if p.tracked() {
                        let (ni, _) = (n, w);
                        let mut gp = vec![F::zero(); ni * w];
                        for i in 0..ni {
                            gp[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        p.accumulate(&gp);
                    }
                    offset += w;
                }
            })),
        ))
    }

    // ── losses ──────────────────────────────────────────────────────

    /// Mean cross-entropy over non-ignored positions of `[n, V]` logits.
    pub fn cross_entropy(&self, targets: &[usize], ignore_id: usize) -> Result<Tensor<F>> {
        let (n, v) = self.dims2()?;
        if targets.len() != n {
            return Err(NumericsError::Dimension(format!(
                "cross_entropy: {} targets for {} rows",
                targets.len(),
                n
            )));
        }
        let kept: Vec<usize> = (0..n).filter(|i| targets[*i] != ignore_id).collect();
        if kept.is_empty() {
            return Err(NumericsError::UndefinedLoss(
                "all target positions are ignored".into(),
            ));
        }
        for &i in &kept {
            if targets[i] >= v {
                return Err(NumericsError::Index(format!(
                    "target {} out of range for vocabulary of {}",
                    targets[i], v
                )));
            }
        }
        let x = self.data();
        let mut probs = vec![F::zero(); n * v];
        let mut loss = F::zero();
        for &i in &kept {
            let row = &x[i * v..(i + 1) * v];
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for j in 0..v {
                let e = (row[j] - m).exp();
                probs[i * v + j] = e;
                z = z + e;
            }
            for j in 0..v {
                probs[i * v + j] = probs[i * v + j] / z;
            }
            loss = loss - (row[targets[i]] - m - z.ln());
        }
        let count = r::<F>(kept.len() as f64);
        loss = loss / count;
        let targets = targets.to_vec();
        Ok(Tensor::build(
            vec![1],
            vec![loss],
            false,
            vec![self.clone()],
            Some(Box::new(move |g, parents| {
                if parents[0].tracked() {
                    let scale = g[0] / count;
                    let mut gx = vec![F::zero(); n * v];
                    for &i in &kept {
                        for j in 0..v {
                            let indicator =
                                if j == targets[i] { F::one() } else { F::zero() };
                            gx[i * v + j] = (probs[i * v + j] - indicator) * scale;
                        }
                    }
                    parents[0].accumulate(&gx);
                }
            })),
        ))
    }
}

/// Temperature softmax over a flat score vector, as its own operation.
pub fn softmax_with_temperature<F: Real>(scores: &Tensor<F>, epsilon: f64) -> Result<Tensor<F>> {
    let n = scores.numel();
    if n == 0 {
        return Err(NumericsError::Dimension("softmax over an empty input".into()));
    }
    let flat = if scores.shape().len() == 2 {
        scores.clone()
    } else {
        // Treat any 1-D input as a single row.
        reshape_row(scores)?
    };
    flat.softmax_temp_rows(epsilon)
}

fn reshape_row<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let n = x.numel();
    let data = x.data().to_vec();
    Ok(Tensor::build(
        vec![1, n],
        data,
        false,
        vec![x.clone()],
        Some(Box::new(|g, parents| {
            if parents[0].tracked() {
                parents[0].accumulate(g);
            }
        })),
    ))
}

/// Populate `grad` on every tracked tensor reachable from a scalar loss.
///
/// Repeated calls without `zero_grad` accumulate.
pub fn backward<F: Real>(loss: &Tensor<F>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(NumericsError::Contract(format!(
            "backward requires a scalar loss, shape is {:?}",
            loss.shape()
        )));
    }
    // Node ids are monotonic, so descending id order is a valid
    // reverse-topological order.
    let mut nodes: Vec<Tensor<F>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![loss.clone()];
    while let Some(t) = stack.pop() {
        if !t.inner.tracked || !seen.insert(t.inner.id) {
            continue;
        }
        for p in &t.inner.parents {
            stack.push(p.clone());
        }
        nodes.push(t);
    }
    nodes.sort_by(|a, b| b.inner.id.cmp(&a.inner.id));
    loss.accumulate(&[F::one()]);
    for node in &nodes {
        if let Some(bw) = &node.inner.backward {
            let g = node.inner.grad.borrow().clone();
            if let Some(g) = g {
                bw(&g, &node.inner.parents);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t32(shape: &[usize], data: &[f32]) -> Tensor<f32> {
        Tensor::constant(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i = t32(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let a = t32(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let out = i.matmul(&a).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_selector_row() {
        let sel = t32(&[1, 2], &[1.0, 0.0]);
        let col = t32(&[2, 1], &[5.0, 7.0]);
        let out = sel.matmul(&col).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn matmul_against_triple_loop_oracle() {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
        let a: Vec<f32> = (0..12).map(|_| rand::Rng::gen::<f32>(&mut rng) - 0.5).collect();
        let b: Vec<f32> = (0..8).map(|_| rand::Rng::gen::<f32>(&mut rng) - 0.5).collect();
        let out = t32(&[3, 4], &a).matmul(&t32(&[4, 2], &b)).unwrap();
        // Scalar triple-loop oracle.
        let mut expect = vec![0.0f32; 6];
        for i in 0..3 {
            for j in 0..2 {
                for p in 0..4 {
                    expect[i * 2 + j] += a[i * 4 + p] * b[p * 2 + j];
                }
            }
        }
        for (x, y) in out.data().iter().zip(&expect) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = t32(&[2, 3], &[0.0; 6]);
        let b = t32(&[2, 2], &[0.0; 4]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_symmetry() {
        let s = t32(&[1, 2], &[0.0, 0.0]);
        let y = softmax_with_temperature(&s, 1.0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-6);
        assert!((y.data()[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn softmax_argmax_limit() {
        let s = t32(&[1, 2], &[10.0, 0.0]);
        let y = softmax_with_temperature(&s, 1e-3).unwrap();
        assert!(y.data()[0] >= 0.999);
    }

    #[test]
    fn softmax_closed_form() {
        // [ln 2, 0] at temperature 1 → [2/3, 1/3]; checked against a
        // direct exp/sum evaluation.
        let s = t32(&[1, 2], &[std::f32::consts::LN_2, 0.0]);
        let y = softmax_with_temperature(&s, 1.0).unwrap();
        let e0 = std::f32::consts::LN_2.exp(); // = 2
        let expect0 = e0 / (e0 + (0.0f32).exp());
        assert!((y.data()[0] - expect0).abs() < 1e-6);
        assert!((y.data()[0] - 2.0 / 3.0).abs() < 1e-5);
        assert!((y.data()[1] - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn softmax_rejects_bad_epsilon_and_empty() {
        let s = t32(&[1, 2], &[0.0, 0.0]);
        assert!(matches!(
            softmax_with_temperature(&s, 0.0),
            Err(NumericsError::Parameter(_))
        ));
        let empty = Tensor::<f32>::constant(&[1, 0], vec![]).unwrap();
        assert!(matches!(
            softmax_with_temperature(&empty, 1.0),
            Err(NumericsError::Dimension(_))
        ));
    }

    #[test]
    fn layer_norm_constant_row() {
        let x = t32(&[1, 3], &[5.0, 5.0, 5.0]);
        let g = t32(&[3], &[1.0, 1.0, 1.0]);
        let b = t32(&[3], &[0.0, 0.0, 0.0]);
        let y = x.layer_norm(&g, &b).unwrap();
        for v in y.data() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_already_normalized() {
        let x = t32(&[1, 2], &[1.0, -1.0]);
        let g = t32(&[2], &[1.0, 1.0]);
        let b = t32(&[2], &[0.0, 0.0]);
        let y = x.layer_norm(&g, &b).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-4);
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn layer_norm_zero_means() {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let x: Vec<f32> = (0..32).map(|_| rand::Rng::gen::<f32>(&mut rng) * 4.0 - 2.0).collect();
        let xt = t32(&[4, 8], &x);
        let g = t32(&[8], &[1.0; 8]);
        let b = t32(&[8], &[0.0; 8]);
        let y = xt.layer_norm(&g, &b).unwrap();
        for i in 0..4 {
            let mean: f32 = y.data()[i * 8..(i + 1) * 8].iter().sum::<f32>() / 8.0;
            assert!(mean.abs() < 1e-6);
        }
    }

    #[test]
    fn cross_entropy_confident_correct() {
        // Logits that put probability ≈ 1 on the right token.
        let mut logits = vec![0.0f32; 2 * 4];
        logits[0 * 4 + 1] = 20.0;
        logits[1 * 4 + 3] = 20.0;
        let loss = t32(&[2, 4], &logits).cross_entropy(&[1, 3], usize::MAX).unwrap();
        assert!(loss.item().unwrap() < 1e-3);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let logits = t32(&[3, 10], &[0.0; 30]);
        let loss = logits.cross_entropy(&[0, 5, 9], usize::MAX).unwrap();
        assert!((loss.item().unwrap() - (10.0f32).ln()).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_ignores_masked_positions() {
        let logits = t32(&[2, 4], &[1.0, 2.0, 0.5, -1.0, 9.0, 9.0, 9.0, 9.0]);
        let ignore = 0usize;
        let loss = logits.cross_entropy(&[2, ignore], ignore).unwrap();
        // Direct per-position oracle on the single kept row.
        let row = [1.0f32, 2.0, 0.5, -1.0];
        let z: f32 = row.iter().map(|v| v.exp()).sum();
        let expect = -(row[2].exp() / z).ln();
        assert!((loss.item().unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_all_ignored_is_error() {
        let logits = t32(&[1, 4], &[0.0; 4]);
        assert!(matches!(
            logits.cross_entropy(&[0], 0),
            Err(NumericsError::UndefinedLoss(_))
        ));
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        let logits = t32(&[1, 4], &[0.0; 4]);
        assert!(matches!(logits.cross_entropy(&[7], 0), Err(NumericsError::Index(_))));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let x = Tensor::leaf(&[2, 3], vec![1.0f32, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let loss = x.sum();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn backward_of_half_square_is_x() {
        let data = vec![1.5f32, -2.0, 0.25];
        let x = Tensor::leaf(&[1, 3], data.clone()).unwrap();
        let loss = x.mul(&x).unwrap().sum().scale(0.5);
        backward(&loss).unwrap();
        for (g, v) in x.grad().unwrap().iter().zip(&data) {
            assert!((g - v).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::leaf(&[2, 2], vec![0.0f32; 4]).unwrap();
        assert!(matches!(backward(&x), Err(NumericsError::Contract(_))));
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let x = Tensor::leaf(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let loss = x.sum();
        backward(&loss).unwrap();
        loss.zero_grad();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn softmax_is_probability_vector(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..16),
            eps in 1e-4f64..1e2,
        ) {
            let t = Tensor::constant(&[1, scores.len()], scores.clone()).unwrap();
            let y = softmax_with_temperature(&t, eps).unwrap();
            let sum: f64 = y.data().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(y.data().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn softmax_preserves_argmax(
            scores in proptest::collection::vec(-20.0f64..20.0, 2..12),
            eps in 1e-3f64..10.0,
        ) {
            let argmax = |v: &[f64]| {
                v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
            };
            let best = argmax(&scores);
            // Only meaningful when the max is unique.
            let unique = scores.iter().enumerate().all(|(i, v)| i == best || *v < scores[best]);
            prop_assume!(unique);
            let t = Tensor::constant(&[1, scores.len()], scores.clone()).unwrap();
            let y = softmax_with_temperature(&t, eps).unwrap();
            prop_assert_eq!(argmax(y.data()), best);
        }
    }
}

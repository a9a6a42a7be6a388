use crate::diffcore::kernels::{
    broadcast_shape, broadcast_strides, contiguous_strides, for_each_pair, MatmulPlan,
};
use crate::diffcore::{DiffArray, Real};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, plan: MatmulPlan },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Offset { x: Var },
    Exp { x: Var },
    Abs { x: Var },
    Gelu { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    Permute { x: Var, perm: Vec<usize> },
    Reshape { x: Var },
    Slice { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var> },
    Softmax { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: DiffArray<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Eager computation record. Operations run immediately; `backward` replays
/// the record in reverse. Create a fresh tape (or [`Tape::clear`]) per step.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through a single `exp`; cheaper than the libm routine and exact
/// to a few ulps in absolute terms.
#[inline]
fn fast_tanh<T: Real>(u: T) -> T {
    let e = (T::lit(-2.0) * u.abs()).exp();
    let t = (T::one() - e) / (T::one() + e);
    if u < T::zero() {
        -t
    } else {
        t
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DiffArray<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: DiffArray<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: DiffArray<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: DiffArray<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &DiffArray<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to a leaf, if any
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ----- products -------------------------------------------------------

    /// Matrix product over the last two axes, broadcasting leading axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ex(a, b, false, false)
    }

    /// `a @ b^T` (transpose of the last two axes of `b`).
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ex(a, b, false, true)
    }

    /// `op(a) @ op(b)` where `op` optionally swaps the last two axes.
    pub fn matmul_ex(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b), trans_a, trans_b)?;
        let mut out = DiffArray::zeros(&plan.out_shape);
        plan.forward(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b, plan }, rg))
    }

    // ----- broadcast elementwise -------------------------------------------

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<DiffArray<T>> {
        let (sa_shape, sb_shape) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa_shape, sb_shape)?;
        let sa = broadcast_strides(sa_shape, &out_shape);
        let sb = broadcast_strides(sb_shape, &out_shape);
        let mut out = DiffArray::zeros(&out_shape);
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let o = out.data_mut();
        for_each_pair(&out_shape, &sa, &sb, |i, ia, ib| o[i] = f(xa[ia], xb[ib]));
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T) -> DiffArray<T> {
        let v = self.value(x);
        DiffArray::new(v.shape().to_vec(), v.data().iter().map(|&e| f(e)).collect())
            .expect("unary op preserves shape")
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.unary(x, |e| e * factor);
        let rg = self.needs(&[x]);
        self.push(out, Op::Scale { x, factor }, rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let out = self.unary(x, |e| e + c);
        let rg = self.needs(&[x]);
        self.push(out, Op::Offset { x }, rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.unary(x, |e| e.exp());
        let rg = self.needs(&[x]);
        self.push(out, Op::Exp { x }, rg)
    }

    /// Absolute value; the subgradient at 0 is 0.
    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.unary(x, |e| e.abs());
        let rg = self.needs(&[x]);
        self.push(out, Op::Abs { x }, rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (c, a, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
        let out = self.unary(x, |e| half * e * (T::one() + fast_tanh(c * (e + a * e * e * e))));
        let rg = self.needs(&[x]);
        self.push(out, Op::Gelu { x }, rg)
    }

    // ----- reductions -------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.needs(&[x]);
        self.push(DiffArray::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: T = v.data().iter().copied().sum();
        let m = s / T::from_usize(v.numel()).unwrap();
        let rg = self.needs(&[x]);
        self.push(DiffArray::scalar(m), Op::Mean { x }, rg)
    }

    // ----- layout ------------------------------------------------------------

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!(
                "{perm:?} is not a permutation of the axes of {shape:?}"
            )));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides = contiguous_strides(&shape);
        let sp: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
        let mut out = DiffArray::zeros(&out_shape);
        let src = self.value(x).data();
        let o = out.data_mut();
        for_each_pair(&out_shape, &sp, &sp, |i, j, _| o[i] = src[j]);
        let rg = self.needs(&[x]);
        Ok(self.push(
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return Err(Error::shape("transpose needs rank >= 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(x, &perm)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape { x }, rg))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape(format!(
                "slice [{start}, {}) of axis {axis} is out of range for {shape:?}",
                start + len
            )));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let strides = contiguous_strides(&shape);
        let base = start * strides[axis];
        let mut out = DiffArray::zeros(&out_shape);
        let src = self.value(x).data();
        let o = out.data_mut();
        for_each_pair(&out_shape, &strides, &strides, |i, j, _| o[i] = src[base + j]);
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Slice { x, axis, start }, rg))
    }

    /// Concatenates along the last axis.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero parts"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(Error::shape(format!(
                    "concat parts disagree on leading axes: {:?} vs {:?}",
                    self.shape(*first),
                    s
                )));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out_shape = lead;
        out_shape.push(total);
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = DiffArray::new(out_shape, data)?;
        let rg = self.needs(parts);
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    // ----- normalisation ------------------------------------------------------

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let width = *v.shape().last().unwrap();
        let mut data = v.data().to_vec();
        for row in data.chunks_mut(width) {
            if row.iter().any(|e| !e.is_finite()) {
                return Err(Error::Numeric("softmax input is not finite".into()));
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                total += *e;
            }
            for e in row.iter_mut() {
                *e /= total;
            }
        }
        let out = DiffArray::new(v.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Softmax { x }, rg))
    }

    /// Layer normalisation over the last axis with affine gain and bias
    /// (each of last-axis length). Variance is biased, epsilon 1e-5.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let v = self.value(x);
        let width = *v.shape().last().unwrap();
        for (name, p) in [("gain", gain), ("bias", bias)] {
            if self.value(p).numel() != width {
                return Err(Error::shape(format!(
                    "layer-norm {name} has {} entries, last axis is {width}",
                    self.value(p).numel()
                )));
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let eps = T::lit(LAYER_NORM_EPS);
        let n = T::from_usize(width).unwrap();
        let rows = v.numel() / width;
        let mut xhat = Vec::with_capacity(v.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(v.numel());
        for row in v.data().chunks(width) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &e) in row.iter().enumerate() {
                let h = (e - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let out = DiffArray::new(v.shape().to_vec(), out)?;
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    // ----- reverse pass ---------------------------------------------------------

    /// Populates gradients of `loss` (which must hold exactly one value) for
    /// every leaf that requires them. Intermediate gradients are released as
    /// soon as they have been propagated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let Tape { nodes, grads } = self;
        grads.clear();
        grads.resize_with(nodes.len(), || None);
        if !nodes[loss.0].requires_grad {
            return Ok(());
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            propagate(nodes, grads, node, &g);
        }
        Ok(())
    }
}

fn grad_buf<'g, T: Real>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'g mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.numel()]))
}

fn propagate<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], node: &Node<T>, g: &[T]) {
    let val = |v: Var| nodes[v.0].value.data();
    let out_shape = node.value.shape();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b, plan } => {
            if let Some(ga) = grad_buf(nodes, grads, *a) {
                plan.backward_a(g, val(*b), ga);
            }
            if let Some(gb) = grad_buf(nodes, grads, *b) {
                plan.backward_b(g, val(*a), gb);
            }
        }
        Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
            let sa = broadcast_strides(nodes[a.0].value.shape(), out_shape);
            let sb = broadcast_strides(nodes[b.0].value.shape(), out_shape);
            let (xa, xb) = (val(*a), val(*b));
            if let Some(ga) = grad_buf(nodes, grads, *a) {
                match &node.op {
                    Op::Mul { .. } => {
                        for_each_pair(out_shape, &sa, &sb, |o, ia, ib| ga[ia] += g[o] * xb[ib])
                    }
                    _ => for_each_pair(out_shape, &sa, &sb, |o, ia, _| ga[ia] += g[o]),
                }
            }
            if let Some(gb) = grad_buf(nodes, grads, *b) {
                match &node.op {
                    Op::Mul { .. } => {
                        for_each_pair(out_shape, &sa, &sb, |o, ia, ib| gb[ib] += g[o] * xa[ia])
                    }
                    Op::Sub { .. } => for_each_pair(out_shape, &sa, &sb, |o, _, ib| gb[ib] -= g[o]),
                    _ => for_each_pair(out_shape, &sa, &sb, |o, _, ib| gb[ib] += g[o]),
                }
            }
        }
        Op::Scale { x, factor } => {
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for (d, &e) in gx.iter_mut().zip(g) {
                    *d += e * *factor;
                }
            }
        }
        Op::Offset { x } | Op::Reshape { x } => {
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for (d, &e) in gx.iter_mut().zip(g) {
                    *d += e;
                }
            }
        }
        Op::Exp { x } => {
            let y = node.value.data();
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for ((d, &e), &yv) in gx.iter_mut().zip(g).zip(y) {
                    *d += e * yv;
                }
            }
        }
        Op::Abs { x } => {
            let xv = val(*x);
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for ((d, &e), &v) in gx.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *d += e;
                    } else if v < T::zero() {
                        *d -= e;
                    }
                }
            }
        }
        Op::Gelu { x } => {
            let xv = val(*x);
            let (c, a, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
            let three = T::lit(3.0);
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for ((d, &e), &v) in gx.iter_mut().zip(g).zip(xv) {
                    let t = fast_tanh(c * (v + a * v * v * v));
                    let dt = (T::one() - t * t) * c * (T::one() + three * a * v * v);
                    *d += e * (half * (T::one() + t) + half * v * dt);
                }
            }
        }
        Op::Sum { x } => {
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for d in gx.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::Mean { x } => {
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                let share = g[0] / T::from_usize(gx.len()).unwrap();
                for d in gx.iter_mut() {
                    *d += share;
                }
            }
        }
        Op::Permute { x, perm } => {
            let in_shape = nodes[x.0].value.shape();
            let strides = contiguous_strides(in_shape);
            let sp: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for_each_pair(out_shape, &sp, &sp, |o, j, _| gx[j] += g[o]);
            }
        }
        Op::Slice { x, axis, start } => {
            let in_shape = nodes[x.0].value.shape();
            let strides = contiguous_strides(in_shape);
            let base = start * strides[*axis];
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for_each_pair(out_shape, &strides, &strides, |o, j, _| gx[base + j] += g[o]);
            }
        }
        Op::Concat { parts } => {
            let total = *out_shape.last().unwrap();
            let rows = node.value.numel() / total;
            let mut col = 0;
            for &p in parts {
                let w = *nodes[p.0].value.shape().last().unwrap();
                if let Some(gp) = grad_buf(nodes, grads, p) {
                    for r in 0..rows {
                        let src = &g[r * total + col..r * total + col + w];
                        for (d, &e) in gp[r * w..(r + 1) * w].iter_mut().zip(src) {
                            *d += e;
                        }
                    }
                }
                col += w;
            }
        }
        Op::Softmax { x } => {
            let width = *out_shape.last().unwrap();
            let y = node.value.data();
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for ((dx, dy), yr) in gx
                    .chunks_mut(width)
                    .zip(g.chunks(width))
                    .zip(y.chunks(width))
                {
                    let dot: T = dy.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for j in 0..width {
                        dx[j] += yr[j] * (dy[j] - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let width = *out_shape.last().unwrap();
            let n = T::from_usize(width).unwrap();
            let gv = val(*gain);
            if let Some(gg) = grad_buf(nodes, grads, *gain) {
                for (dy, h) in g.chunks(width).zip(xhat.chunks(width)) {
                    for j in 0..width {
                        gg[j] += dy[j] * h[j];
                    }
                }
            }
            if let Some(gb) = grad_buf(nodes, grads, *bias) {
                for dy in g.chunks(width) {
                    for j in 0..width {
                        gb[j] += dy[j];
                    }
                }
            }
            if let Some(gx) = grad_buf(nodes, grads, *x) {
                for (((dx, dy), h), &r) in gx
                    .chunks_mut(width)
                    .zip(g.chunks(width))
                    .zip(xhat.chunks(width))
                    .zip(rstd.iter())
                {
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for j in 0..width {
                        let dh = dy[j] * gv[j];
                        mean_d += dh;
                        mean_dh += dh * h[j];
                    }
                    mean_d /= n;
                    mean_dh /= n;
                    for j in 0..width {
                        let dh = dy[j] * gv[j];
                        dx[j] += r * (dh - mean_d - h[j] * mean_dh);
                    }
                }
            }
        }
    }
}

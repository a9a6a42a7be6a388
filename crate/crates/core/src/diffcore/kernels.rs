//! Index arithmetic and the strided matrix product behind the tape ops.

use crate::diffcore::Real;
use crate::{Error, Result};

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Numpy-style broadcast of two shapes (right-aligned, size-1 axes stretch).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(format!(
                    "shapes {a:?} and {b:?} are not broadcast-compatible"
                )))
            }
        };
    }
    Ok(out)
}

/// Strides of `input` expressed over the axes of `out`; broadcast axes get 0.
pub(crate) fn broadcast_strides(input: &[usize], out: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(input);
    let lead = out.len() - input.len();
    (0..out.len())
        .map(|i| {
            if i < lead || input[i - lead] == 1 {
                0
            } else {
                own[i - lead]
            }
        })
        .collect()
}

/// Calls `f(out_offset, a_offset, b_offset)` for every element of `out`,
/// walking the last axis in a tight inner loop.
pub(crate) fn for_each_pair(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out.len();
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let outer: usize = out[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank - 1];
    let (mut base_a, mut base_b) = (0usize, 0usize);
    let mut o = 0;
    for _ in 0..outer {
        let (mut pa, mut pb) = (base_a, base_b);
        for _ in 0..inner {
            f(o, pa, pb);
            o += 1;
            pa += ia;
            pb += ib;
        }
        // odometer over the outer axes
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            base_a += sa[ax];
            base_b += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            base_a -= sa[ax] * out[ax];
            base_b -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Strided matrix view: `offset + i * rs + j * cs` addresses element (i, j).
#[derive(Debug, Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn transposed(self) -> Self {
        View {
            offset: self.offset,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn max_index(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs
    }
}

/// `c[view] += a[view] (m x k) * b[view] (k x n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    va: View,
    b: &[T],
    vb: View,
    c: &mut [T],
    vc: View,
) {
    assert!(va.max_index(m, k) < a.len(), "lhs view out of bounds");
    assert!(vb.max_index(k, n) < b.len(), "rhs view out of bounds");
    assert!(vc.max_index(m, n) < c.len(), "output view out of bounds");
    // SAFETY: every reachable index was bounds-checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr().add(va.offset),
            va.rs as isize,
            va.cs as isize,
            b.as_ptr().add(vb.offset),
            vb.rs as isize,
            vb.cs as isize,
            c.as_mut_ptr().add(vc.offset),
            vc.rs as isize,
            vc.cs as isize,
        );
    }
}

/// Resolved geometry of a (possibly batched, possibly transposed) product
/// `op(a) @ op(b)`.
#[derive(Debug, Clone)]
pub(crate) struct MatmulPlan {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub out_shape: Vec<usize>,
    /// Matrix offsets for each output batch entry.
    pub batches: Vec<(usize, usize, usize)>,
    pub a_cols: usize,
    pub b_cols: usize,
    pub trans_a: bool,
    pub trans_b: bool,
    /// `b` carries no batch axes and `a` is not transposed, so all of `a`'s
    /// batches can be folded into one tall product.
    pub fold_a: bool,
}

impl MatmulPlan {
    pub fn new(a: &[usize], b: &[usize], trans_a: bool, trans_b: bool) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape(format!(
                "matmul needs rank >= 2 operands, got {a:?} and {b:?}"
            )));
        }
        let (ar, ac) = (a[a.len() - 2], a[a.len() - 1]);
        let (br, bc) = (b[b.len() - 2], b[b.len() - 1]);
        let (m, ka) = if trans_a { (ac, ar) } else { (ar, ac) };
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if ka != kb {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: {a:?}{} x {b:?}{} ({ka} vs {kb})",
                if trans_a { "^T" } else { "" },
                if trans_b { "^T" } else { "" },
            )));
        }
        let a_batch = &a[..a.len() - 2];
        let b_batch = &b[..b.len() - 2];
        let batch_shape = broadcast_shape(a_batch, b_batch).map_err(|_| {
            Error::shape(format!(
                "matmul batch axes {a_batch:?} and {b_batch:?} are not broadcastable"
            ))
        })?;
        let a_size = ar * ac;
        let b_size = br * bc;
        let out_size = m * n;
        let mut batches = Vec::new();
        if batch_shape.is_empty() {
            batches.push((0, 0, 0));
        } else {
            let sa = broadcast_strides(a_batch, &batch_shape);
            let sb = broadcast_strides(b_batch, &batch_shape);
            for_each_pair(&batch_shape, &sa, &sb, |o, ia, ib| {
                batches.push((ia * a_size, ib * b_size, o * out_size));
            });
        }
        let b_batch_numel: usize = b_batch.iter().product();
        let a_batch_numel: usize = a_batch.iter().product();
        let fold_a = !trans_a && b_batch_numel == 1 && a_batch_numel == batches.len();
        let mut out_shape = batch_shape;
        out_shape.push(m);
        out_shape.push(n);
        Ok(Self {
            m,
            k: ka,
            n,
            out_shape,
            batches,
            a_cols: ac,
            b_cols: bc,
            trans_a,
            trans_b,
            fold_a,
        })
    }

    pub fn view_a(&self, offset: usize) -> View {
        if self.trans_a {
            View { offset, rs: 1, cs: self.a_cols }
        } else {
            View { offset, rs: self.a_cols, cs: 1 }
        }
    }

    pub fn view_b(&self, offset: usize) -> View {
        if self.trans_b {
            View { offset, rs: 1, cs: self.b_cols }
        } else {
            View { offset, rs: self.b_cols, cs: 1 }
        }
    }

    pub fn view_c(&self, offset: usize) -> View {
        View { offset, rs: self.n, cs: 1 }
    }

    pub fn forward<T: Real>(&self, a: &[T], b: &[T], c: &mut [T]) {
        if self.fold_a {
            let rows = self.m * self.batches.len();
            gemm_acc(rows, self.k, self.n, a, self.view_a(0), b, self.view_b(0), c, self.view_c(0));
            return;
        }
        for &(oa, ob, oc) in &self.batches {
            gemm_acc(
                self.m,
                self.k,
                self.n,
                a,
                self.view_a(oa),
                b,
                self.view_b(ob),
                c,
                self.view_c(oc),
            );
        }
    }

    /// Accumulates `d op(a) = dc @ op(b)^T` into `ga`.
    pub fn backward_a<T: Real>(&self, dc: &[T], b: &[T], ga: &mut [T]) {
        if self.fold_a {
            let rows = self.m * self.batches.len();
            gemm_acc(
                rows,
                self.n,
                self.k,
                dc,
                self.view_c(0),
                b,
                self.view_b(0).transposed(),
                ga,
                self.view_a(0),
            );
            return;
        }
        for &(oa, ob, oc) in &self.batches {
            gemm_acc(
                self.m,
                self.n,
                self.k,
                dc,
                self.view_c(oc),
                b,
                self.view_b(ob).transposed(),
                ga,
                self.view_a(oa),
            );
        }
    }

    /// Accumulates `d op(b) = op(a)^T @ dc` into `gb`.
    pub fn backward_b<T: Real>(&self, dc: &[T], a: &[T], gb: &mut [T]) {
        if self.fold_a {
            let rows = self.m * self.batches.len();
            gemm_acc(
                self.k,
                rows,
                self.n,
                a,
                self.view_a(0).transposed(),
                dc,
                self.view_c(0),
                gb,
                self.view_b(0),
            );
            return;
        }
        for &(oa, ob, oc) in &self.batches {
            gemm_acc(
                self.k,
                self.m,
                self.n,
                a,
                self.view_a(oa).transposed(),
                dc,
                self.view_c(oc),
                gb,
                self.view_b(ob),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[4]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert!(broadcast_shape(&[2, 3], &[4]).is_err());
    }

    #[test]
    fn broadcast_walk_visits_expected_offsets() {
        let out = [2, 3];
        let sa = broadcast_strides(&[2, 3], &out);
        let sb = broadcast_strides(&[3], &out);
        let mut seen = Vec::new();
        for_each_pair(&out, &sa, &sb, |o, a, b| seen.push((o, a, b)));
        assert_eq!(
            seen,
            vec![(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 3, 0), (4, 4, 1), (5, 5, 2)]
        );
    }
}

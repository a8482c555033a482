//! HPD preconditioners for A - tau I: identity, absolute-value diagonal,
//! and (incomplete) LDL^T with the |D| modification. The factored form
//! exposes M with T = M*M so the symmetrically preconditioned operator
//! M (A - tau I) M* stays symmetric; the unfactored form exposes T alone
//! for one-sided (Arnoldi) preconditioning.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::Result;
use crate::sparse::CsrMatrix;

/// Pivots smaller than this fraction of the largest |a_ii - tau| are
/// boosted to keep |D|^(-1/2) finite.
pub const PIVOT_BOOST_REL: f64 = 1e-8;

type Apply = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + Send>;

/// Preconditioner in factored form T = M*M. Both maps are immutable and
/// reentrant, so a single instance serves all samples in parallel.
pub struct FactoredPreconditioner {
    dim: usize,
    m: Apply,
    m_adjoint: Apply,
    pub boosted_pivots: usize,
}

impl FactoredPreconditioner {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply_m(&self, v: &[f64]) -> Vec<f64> {
        (self.m)(v)
    }

    pub fn apply_m_adjoint(&self, v: &[f64]) -> Vec<f64> {
        (self.m_adjoint)(v)
    }

    pub fn identity(n: usize) -> Self {
        FactoredPreconditioner {
            dim: n,
            m: Box::new(|v| v.to_vec()),
            m_adjoint: Box::new(|v| v.to_vec()),
            boosted_pivots: 0,
        }
    }
}

/// Preconditioner applied as the single symmetric map T.
pub struct UnfactoredPreconditioner {
    dim: usize,
    t: Apply,
}

impl UnfactoredPreconditioner {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        (self.t)(v)
    }

    pub fn identity(n: usize) -> Self {
        UnfactoredPreconditioner {
            dim: n,
            t: Box::new(|v| v.to_vec()),
        }
    }
}

/// T = M*M as a single map.
pub fn as_unfactored(p: FactoredPreconditioner) -> UnfactoredPreconditioner {
    UnfactoredPreconditioner {
        dim: p.dim,
        t: Box::new(move |v| (p.m_adjoint)(&(p.m)(v))),
    }
}

/// Incomplete LDL^T factors of P(A - tau I)P^T with 1x1 pivots: L is unit
/// lower triangular in compressed-column form, `perm[i]` is the original
/// index placed at position i by the fill-reducing ordering.
pub struct IldlFactors {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    pub d: Vec<f64>,
    pub perm: Vec<usize>,
    pub drop_tol: f64,
    pub boosted_pivots: usize,
}

impl IldlFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored strictly-lower entries of L.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Negative pivot count; equals the negative inertia of A - tau I when
    /// nothing was dropped (Sylvester's law of inertia).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }

    /// In-place forward solve L x = b (unit diagonal).
    fn solve_l(&self, x: &mut [f64]) {
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for q in self.col_ptr[j]..self.col_ptr[j + 1] {
                    x[self.row_idx[q]] -= self.values[q] * xj;
                }
            }
        }
    }

    /// In-place backward solve L^T x = b.
    fn solve_lt(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for q in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc -= self.values[q] * x[self.row_idx[q]];
            }
            x[j] = acc;
        }
    }
}

/// Reverse Cuthill-McKee ordering on the sparsity graph of `a`. Returns
/// perm with perm[position] = original index. Components are seeded from
/// minimum-degree vertices; within a BFS level neighbors are taken in
/// ascending degree order, ties by index, so the ordering is deterministic.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degs: Vec<usize> = (0..n)
        .map(|i| a.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    loop {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degs[i], i));
        let Some(start) = start else { break };
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a
                .row(u)
                .map(|(j, _)| j)
                .filter(|&j| j != u && !visited[j])
                .collect();
            nbrs.sort_unstable_by_key(|&j| (degs[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Left-looking incomplete LDL^T of P(A - tau I)P^T with 1x1 pivots.
/// An entry l_ij is dropped when |l_ij| <= drop_tol times the 2-norm of
/// the current L column (unit diagonal included); drop_tol = 0 keeps
/// everything, giving the complete factorization. Pivots with magnitude
/// below the boost threshold are replaced by sign(d) times the threshold
/// rather than failing; the |D| modification downstream absorbs the error.
pub fn ildl_factorize(a: &CsrMatrix, tau: f64, drop_tol: f64) -> Result<IldlFactors> {
    assert!(drop_tol >= 0.0);
    let n = a.dim();
    let perm = rcm_ordering(a);
    let mut iperm = vec![0usize; n];
    for (pos, &orig) in perm.iter().enumerate() {
        iperm[orig] = pos;
    }

    let max_diag = (0..n)
        .map(|i| (a.get(i, i).unwrap_or(0.0) - tau).abs())
        .fold(0.0f64, f64::max);
    let boost = PIVOT_BOOST_REL * max_diag.max(f64::MIN_POSITIVE);

    let mut col_ptr = vec![0usize];
    let mut row_idx: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut d = vec![0.0f64; n];
    // row_lists[i] holds (k, q) for each stored L(i,k): q indexes that
    // entry in `values`, and column k's entries from q on have row >= i.
    let mut row_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut w = vec![0.0f64; n];
    let mut active = vec![false; n];
    let mut pattern: Vec<usize> = Vec::new();
    let mut boosted = 0usize;

    for j in 0..n {
        let mut touch = |i: usize, w: &mut [f64], pattern: &mut Vec<usize>| {
            if !active[i] {
                active[i] = true;
                pattern.push(i);
                w[i] = 0.0;
            }
        };
        // Column j of B = P(A - tau I)P^T, rows >= j.
        for (orig_col, val) in a.row(perm[j]) {
            let i = iperm[orig_col];
            if i >= j {
                touch(i, &mut w, &mut pattern);
                w[i] += val;
            }
        }
        touch(j, &mut w, &mut pattern);
        w[j] -= tau;
        // Subtract L(j,k) d_k L(j.., k) for every earlier column k that
        // reaches row j.
        for &(k, q0) in &row_lists[j] {
            let scale = values[q0] * d[k];
            for q in q0..col_ptr[k + 1] {
                let i = row_idx[q];
                touch(i, &mut w, &mut pattern);
                w[i] -= scale * values[q];
            }
        }

        let mut dj = w[j];
        if dj.abs() < boost {
            dj = if dj < 0.0 { -boost } else { boost };
            boosted += 1;
        }
        d[j] = dj;

        let mut rows: Vec<usize> = pattern.iter().copied().filter(|&i| i > j).collect();
        rows.sort_unstable();
        let col: Vec<(usize, f64)> = rows.iter().map(|&i| (i, w[i] / dj)).collect();
        let colnorm = (1.0 + col.iter().map(|(_, l)| l * l).sum::<f64>()).sqrt();
        for (i, l) in col {
            if l.abs() > drop_tol * colnorm {
                row_lists[i].push((j, values.len()));
                row_idx.push(i);
                values.push(l);
            }
        }
        col_ptr.push(values.len());

        for &i in &pattern {
            active[i] = false;
        }
        pattern.clear();
    }

    Ok(IldlFactors {
        n,
        col_ptr,
        row_idx,
        values,
        d,
        perm,
        drop_tol,
        boosted_pivots: boosted,
    })
}

/// M = |D|^(-1/2) L^(-1) P and M* = P^T L^(-T) |D|^(-1/2), so that
/// T = M*M = P^T L^(-T) |D|^(-1) L^(-1) P is HPD regardless of the signs
/// of the pivots.
pub fn make_abs_ildl(factors: IldlFactors) -> FactoredPreconditioner {
    let n = factors.n;
    let boosted = factors.boosted_pivots;
    let inv_sqrt_d: Arc<Vec<f64>> =
        Arc::new(factors.d.iter().map(|&d| 1.0 / d.abs().sqrt()).collect());
    let f = Arc::new(factors);
    let (f2, inv2) = (Arc::clone(&f), Arc::clone(&inv_sqrt_d));
    let m = Box::new(move |v: &[f64]| {
        let mut y: Vec<f64> = (0..n).map(|i| v[f.perm[i]]).collect();
        f.solve_l(&mut y);
        for (yi, s) in y.iter_mut().zip(inv_sqrt_d.iter()) {
            *yi *= s;
        }
        y
    });
    let m_adjoint = Box::new(move |v: &[f64]| {
        let mut y: Vec<f64> = v.iter().zip(inv2.iter()).map(|(a, s)| a * s).collect();
        f2.solve_lt(&mut y);
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[f2.perm[i]] = y[i];
        }
        out
    });
    FactoredPreconditioner {
        dim: n,
        m,
        m_adjoint,
        boosted_pivots: boosted,
    }
}

/// M = diag(|a_ii - tau|^(-1/2)); zero shifted diagonals are boosted the
/// same way as factorization pivots.
pub fn make_abs_diagonal(a: &CsrMatrix, tau: f64) -> FactoredPreconditioner {
    let n = a.dim();
    let max_diag = (0..n)
        .map(|i| (a.get(i, i).unwrap_or(0.0) - tau).abs())
        .fold(0.0f64, f64::max);
    let boost = PIVOT_BOOST_REL * max_diag.max(f64::MIN_POSITIVE);
    let mut boosted = 0usize;
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let mut d = (a.get(i, i).unwrap_or(0.0) - tau).abs();
            if d < boost {
                d = boost;
                boosted += 1;
            }
            1.0 / d.sqrt()
        })
        .collect();
    let scale = Arc::new(scale);
    let scale2 = Arc::clone(&scale);
    let diag_apply = move |s: &Arc<Vec<f64>>, v: &[f64]| -> Vec<f64> {
        v.iter().zip(s.iter()).map(|(a, b)| a * b).collect()
    };
    FactoredPreconditioner {
        dim: n,
        m: Box::new(move |v| diag_apply(&scale, v)),
        m_adjoint: Box::new(move |v| {
            v.iter().zip(scale2.iter()).map(|(a, b)| a * b).collect()
        }),
        boosted_pivots: boosted,
    }
}

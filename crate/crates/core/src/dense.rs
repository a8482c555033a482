//! Small dense eigensolvers: symmetric tridiagonal eigendecomposition
//! (implicit QL with Wilkinson shifts), real Hessenberg eigendecomposition
//! (Francis double-shift QR), Sturm-sequence inertia counts, and a dense
//! exact-count oracle.
//!
//! The QL and QR kernels are adapted from the classic Algol/EISPACK
//! procedures tql2 and hqr2 (Bowdler, Martin, Reinsch, Wilkinson; Handbook
//! for Automatic Computation, Vol. II).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Dense oracle refuses matrices above this dimension by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Iteration budget multiplier for both iterative eigensolvers.
const SWEEP_CAP_PER_EIG: usize = 40;

/// Square dense matrix, row-major.
#[derive(Debug, Clone)]
pub struct DenseMat {
    n: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(n: usize) -> Self {
        DenseMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        DenseMat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_upper_hessenberg(&self) -> bool {
        for i in 2..self.n {
            for j in 0..(i - 1) {
                if self.get(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Symmetric tridiagonal matrix: `diag` holds alpha_1..alpha_k and
/// `offdiag` holds beta_2..beta_k (one entry shorter).
#[derive(Debug, Clone)]
pub struct TridiagonalSym {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagonalSym {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Self {
        assert_eq!(
            offdiag.len() + 1,
            diag.len(),
            "offdiag must be one shorter than diag"
        );
        TridiagonalSym { diag, offdiag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Full spectrum of a symmetric tridiagonal matrix: ascending eigenvalues
/// with an orthonormal eigenvector matrix, column-aligned.
#[derive(Debug, Clone)]
pub struct EigenPairsSym {
    pub values: Vec<f64>,
    /// Row-major k x k; column i is the eigenvector for `values[i]`.
    pub vectors: DenseMat,
}

impl EigenPairsSym {
    /// First component of eigenvector i.
    pub fn first_component(&self, i: usize) -> f64 {
        self.vectors.get(0, i)
    }
}

/// Complex eigenpairs of a real upper Hessenberg matrix. Conjugate pairs
/// are adjacent. `inverse_first_column` is the first column of Z^{-1}
/// (the solution of `Z t = e1`), obtained from one pivoted solve rather
/// than a full inverse.
#[derive(Debug, Clone)]
pub struct EigenPairsGeneral {
    pub values: Vec<Complex64>,
    /// Column-major: `vectors[j * k + i]` is component i of eigenvector j,
    /// each normalized to unit 2-norm.
    pub vectors: Vec<Complex64>,
    pub inverse_first_column: Vec<Complex64>,
}

/// Implicit QL with Wilkinson shifts, eigenvectors accumulated.
pub fn tridiag_eig(t: &TridiagonalSym) -> Result<EigenPairsSym> {
    let n = t.dim();
    assert!(n >= 1);
    let mut d = t.diag.clone();
    // e[i] is the off-diagonal coupling rows i and i+1; e[n-1] unused.
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&t.offdiag);

    let mut z = DenseMat::zeros(n);
    for i in 0..n {
        z.set(i, i, 1.0);
    }

    let eps = f64::EPSILON;
    let budget = SWEEP_CAP_PER_EIG * n;
    let mut sweeps = 0usize;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        loop {
            // Find small subdiagonal element.
            let mut m = l;
            while m < n - 1 {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > budget {
                return Err(Error::NonConvergence {
                    index: l,
                    iterations: sweeps,
                });
            }

            // Wilkinson shift.
            let g = d[l];
            let mut p = (d[l + 1] - g) / (2.0 * e[l]);
            let mut r = p.hypot(1.0);
            if p < 0.0 {
                r = -r;
            }
            d[l] = e[l] / (p + r);
            d[l + 1] = e[l] * (p + r);
            let dl1 = d[l + 1];
            let mut h = g - d[l];
            for di in d.iter_mut().take(n).skip(l + 2) {
                *di -= h;
            }
            f += h;

            // Implicit QL sweep.
            p = d[m];
            let mut c = 1.0f64;
            let mut c2 = c;
            let mut c3 = c;
            let el1 = e[l + 1];
            let mut s = 0.0f64;
            let mut s2 = 0.0f64;
            for i in (l..m).rev() {
                c3 = c2;
                c2 = c;
                s2 = s;
                let g = c * e[i];
                h = c * p;
                r = p.hypot(e[i]);
                e[i + 1] = s * r;
                s = e[i] / r;
                c = p / r;
                p = c * d[i] - s * g;
                d[i + 1] = h + s * (c * g + s * d[i]);

                for k in 0..n {
                    let h = z.get(k, i + 1);
                    z.set(k, i + 1, s * z.get(k, i) + c * h);
                    z.set(k, i, c * z.get(k, i) - s * h);
                }
            }
            p = -s * s2 * c3 * el1 * e[l] / dl1;
            e[l] = s * p;
            d[l] = c * p;

            if e[l].abs() <= eps * tst1 {
                break;
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Sort ascending, carrying eigenvector columns along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in (i + 1)..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for row in 0..n {
                let tmp = z.get(row, i);
                z.set(row, i, z.get(row, k));
                z.set(row, k, tmp);
            }
        }
    }

    Ok(EigenPairsSym {
        values: d,
        vectors: z,
    })
}

/// Outcome of a Sturm count, including how many zero pivots had to be
/// perturbed (a perturbation means the shift sits on an eigenvalue of a
/// leading section).
#[derive(Debug, Clone, Copy)]
pub struct SturmCount {
    pub count: usize,
    pub pivot_perturbations: usize,
}

/// Eigenvalues of `t` strictly below `tau`, counted by the signs of the
/// LDL^T pivots of `t - tau I`.
pub fn sturm_count_below(t: &TridiagonalSym, tau: f64) -> usize {
    sturm_count_below_detailed(t, tau).count
}

pub fn sturm_count_below_detailed(t: &TridiagonalSym, tau: f64) -> SturmCount {
    let n = t.dim();
    let scale = t
        .diag
        .iter()
        .chain(t.offdiag.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let guard = f64::EPSILON * scale;

    let mut count = 0usize;
    let mut perturbations = 0usize;
    let mut q = t.diag[0] - tau;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < guard {
            perturbations += 1;
            if q >= 0.0 {
                guard
            } else {
                -guard
            }
        } else {
            q
        };
        q = (t.diag[i] - tau) - t.offdiag[i - 1] * t.offdiag[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    SturmCount {
        count,
        pivot_perturbations: perturbations,
    }
}

/// Householder reduction of a dense symmetric matrix to tridiagonal form.
/// No orthogonal factor is accumulated; only the band is needed for
/// inertia counting.
pub fn householder_tridiagonalize(a: &DenseMat) -> TridiagonalSym {
    let n = a.dim();
    let mut m = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];

    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating column k below row k+1.
        let mut scale = 0.0f64;
        for i in (k + 1)..n {
            scale += m.get(i, k).abs();
        }
        if scale == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let mut v = vec![0.0; n];
        let mut h = 0.0f64;
        for i in (k + 1)..n {
            v[i] = m.get(i, k) / scale;
            h += v[i] * v[i];
        }
        let mut g = h.sqrt();
        if v[k + 1] > 0.0 {
            g = -g;
        }
        e[k] = scale * g;
        h -= v[k + 1] * g;
        v[k + 1] -= g;

        // p = M v / h, then rank-2 update M -= v p' + p v' with the
        // standard correction.
        let mut p = vec![0.0; n];
        for i in (k + 1)..n {
            let mut acc = 0.0;
            for j in (k + 1)..n {
                acc += m.get(i, j) * v[j];
            }
            p[i] = acc / h;
        }
        let mut kk = 0.0;
        for i in (k + 1)..n {
            kk += v[i] * p[i];
        }
        kk /= 2.0 * h;
        for i in (k + 1)..n {
            p[i] -= kk * v[i];
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                let val = m.get(i, j) - v[i] * p[j] - p[i] * v[j];
                m.set(i, j, val);
            }
        }
    }
    if n >= 2 {
        e[n - 2] = m.get(n - 1, n - 2);
    }
    for i in 0..n {
        d[i] = m.get(i, i);
    }
    TridiagonalSym::new(d, e)
}

/// Number of negative eigenvalues of a dense symmetric matrix.
pub fn dense_sym_negative_count(a: &DenseMat) -> usize {
    if a.dim() == 1 {
        return usize::from(a.get(0, 0) < 0.0);
    }
    sturm_count_below(&householder_tridiagonalize(a), 0.0)
}

/// Exact `n_(A - tau I)` for small matrices: densify, tridiagonalize,
/// Sturm-count at zero. Refuses dimensions above `DEFAULT_DENSE_CAP`.
pub fn dense_inertia_oracle(a: &CsrMatrix, tau: f64) -> Result<usize> {
    dense_inertia_oracle_with_cap(a, tau, DEFAULT_DENSE_CAP)
}

pub fn dense_inertia_oracle_with_cap(a: &CsrMatrix, tau: f64, cap: usize) -> Result<usize> {
    let n = a.dim();
    if n > cap {
        return Err(Error::OracleUnavailable(format!(
            "dimension {n} exceeds dense oracle cap {cap}; for generated Laplacians use the analytic oracle"
        )));
    }
    let mut dense = DenseMat::from_rows(n, a.to_dense());
    for i in 0..n {
        let v = dense.get(i, i) - tau;
        dense.set(i, i, v);
    }
    Ok(dense_sym_negative_count(&dense))
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Francis double-shift QR on a real upper Hessenberg matrix, returning
/// complex eigenpairs with conjugate pairs adjacent.
pub fn hessenberg_eig(h_in: &DenseMat) -> Result<EigenPairsGeneral> {
    let k = h_in.dim();
    assert!(k >= 1);
    debug_assert!(h_in.is_upper_hessenberg());

    let mut h = h_in.clone();
    let mut v = DenseMat::zeros(k);
    for i in 0..k {
        v.set(i, i, 1.0);
    }
    let mut d = vec![0.0f64; k];
    let mut e = vec![0.0f64; k];
    hqr2(&mut h, &mut v, &mut d, &mut e)?;

    // Assemble complex eigenvectors. For a pair stored at (i, i+1) with
    // e[i] > 0, columns i and i+1 of v carry real and imaginary parts.
    let mut values = Vec::with_capacity(k);
    let mut vectors = vec![Complex64::new(0.0, 0.0); k * k];
    let mut i = 0;
    while i < k {
        if e[i] == 0.0 {
            values.push(Complex64::new(d[i], 0.0));
            for r in 0..k {
                vectors[i * k + r] = Complex64::new(v.get(r, i), 0.0);
            }
            i += 1;
        } else {
            values.push(Complex64::new(d[i], e[i]));
            values.push(Complex64::new(d[i + 1], e[i + 1]));
            for r in 0..k {
                let re = v.get(r, i);
                let im = v.get(r, i + 1);
                vectors[i * k + r] = Complex64::new(re, im);
                vectors[(i + 1) * k + r] = Complex64::new(re, -im);
            }
            i += 2;
        }
    }

    // Normalize to unit 2-norm.
    for j in 0..k {
        let norm = vectors[j * k..(j + 1) * k]
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::DefectiveMatrix);
        }
        for r in 0..k {
            vectors[j * k + r] /= norm;
        }
    }

    let inverse_first_column = solve_z_e1(&vectors, k)?;
    Ok(EigenPairsGeneral {
        values,
        vectors,
        inverse_first_column,
    })
}

/// Solves Z t = e1 by complex Gaussian elimination with partial pivoting;
/// `t` is the first column of Z^{-1}.
fn solve_z_e1(vectors: &[Complex64], k: usize) -> Result<Vec<Complex64>> {
    // a[i][j] = Z_{ij} = vectors[j * k + i] (column j, component i).
    let mut a = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = vectors[j * k + i];
        }
    }
    let mut b = vec![Complex64::new(0.0, 0.0); k];
    b[0] = Complex64::new(1.0, 0.0);

    let scale = a.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].norm();
        for r in (col + 1)..k {
            let mag = a[r * k + col].norm();
            if mag > best {
                best = mag;
                piv = r;
            }
        }
        if best <= 1e-13 * scale.max(1.0) {
            return Err(Error::DefectiveMatrix);
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            b.swap(col, piv);
        }
        let pivot = a[col * k + col];
        for r in (col + 1)..k {
            let factor = a[r * k + col] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in col..k {
                let sub = factor * a[col * k + c];
                a[r * k + c] -= sub;
            }
            let sub = factor * b[col];
            b[r] -= sub;
        }
    }
    let mut s = vec![Complex64::new(0.0, 0.0); k];
    for r in (0..k).rev() {
        let mut acc = b[r];
        for c in (r + 1)..k {
            acc -= a[r * k + c] * s[c];
        }
        s[r] = acc / a[r * k + r];
    }
    Ok(s)
}

/// hqr2: real Schur form with accumulated transformations, followed by
/// back-substitution for the eigenvectors of the quasi-triangular factor
/// and back-transformation.
#[allow(clippy::too_many_lines)]
fn hqr2(h: &mut DenseMat, v: &mut DenseMat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let nn = h.dim() as isize;
    let mut n = nn - 1;
    let low: isize = 0;
    let high = nn - 1;
    let eps = f64::EPSILON;
    let budget = SWEEP_CAP_PER_EIG * (nn as usize);
    let mut total_iter = 0usize;
    let mut exshift = 0.0f64;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut t, mut w, mut x, mut y): (f64, f64, f64, f64);

    let hg = |h: &DenseMat, i: isize, j: isize| h.get(i as usize, j as usize);
    let mut norm = 0.0f64;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += hg(h, i, j).abs();
        }
    }

    let mut iter = 0usize;
    while n >= low {
        let mut l = n;
        while l > low {
            s = hg(h, l - 1, l - 1).abs() + hg(h, l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if hg(h, l, l - 1).abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One real root.
            let val = hg(h, n, n) + exshift;
            h.set(n as usize, n as usize, val);
            d[n as usize] = val;
            e[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots, real pair or complex pair.
            w = hg(h, n, n - 1) * hg(h, n - 1, n);
            p = (hg(h, n - 1, n - 1) - hg(h, n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h.set(n as usize, n as usize, hg(h, n, n) + exshift);
            h.set(
                (n - 1) as usize,
                (n - 1) as usize,
                hg(h, n - 1, n - 1) + exshift,
            );
            x = hg(h, n, n);

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != 0.0 {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = 0.0;
                e[n as usize] = 0.0;
                x = hg(h, n, n - 1);
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;

                for j in (n - 1)..nn {
                    z = hg(h, n - 1, j);
                    h.set((n - 1) as usize, j as usize, q * z + p * hg(h, n, j));
                    h.set(n as usize, j as usize, q * hg(h, n, j) - p * z);
                }
                for i in 0..(n + 1) {
                    z = hg(h, i, n - 1);
                    h.set(i as usize, (n - 1) as usize, q * z + p * hg(h, i, n));
                    h.set(i as usize, n as usize, q * hg(h, i, n) - p * z);
                }
                for i in low..(high + 1) {
                    z = v.get(i as usize, (n - 1) as usize);
                    v.set(
                        i as usize,
                        (n - 1) as usize,
                        q * z + p * v.get(i as usize, n as usize),
                    );
                    v.set(
                        i as usize,
                        n as usize,
                        q * v.get(i as usize, n as usize) - p * z,
                    );
                }
            } else {
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // Form shift.
            x = hg(h, n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = hg(h, n - 1, n - 1);
                w = hg(h, n, n - 1) * hg(h, n - 1, n);
            }

            if iter == 10 {
                exshift += x;
                for i in low..(n + 1) {
                    h.set(i as usize, i as usize, hg(h, i, i) - x);
                }
                s = hg(h, n, n - 1).abs() + hg(h, n - 1, n - 2).abs();
                y = 0.75 * s;
                x = y;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..(n + 1) {
                        h.set(i as usize, i as usize, hg(h, i, i) - s);
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total_iter += 1;
            if total_iter > budget {
                return Err(Error::NonConvergence {
                    index: n as usize,
                    iterations: total_iter,
                });
            }

            // Two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                z = hg(h, m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / hg(h, m + 1, m) + hg(h, m, m + 1);
                q = hg(h, m + 1, m + 1) - z - r - s;
                r = hg(h, m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if hg(h, m, m - 1).abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (hg(h, m - 1, m - 1).abs() + z.abs() + hg(h, m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..(n + 1) {
                h.set(i as usize, (i - 2) as usize, 0.0);
                if i > m + 2 {
                    h.set(i as usize, (i - 3) as usize, 0.0);
                }
            }

            // Double QR step on rows l..n, columns m..n.
            for k_step in m..n {
                let notlast = k_step != n - 1;
                if k_step != m {
                    p = hg(h, k_step, k_step - 1);
                    q = hg(h, k_step + 1, k_step - 1);
                    r = if notlast {
                        hg(h, k_step + 2, k_step - 1)
                    } else {
                        0.0
                    };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }

                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k_step != m {
                        h.set(k_step as usize, (k_step - 1) as usize, -s * x);
                    } else if l != m {
                        h.set(
                            k_step as usize,
                            (k_step - 1) as usize,
                            -hg(h, k_step, k_step - 1),
                        );
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k_step..nn {
                        p = hg(h, k_step, j) + q * hg(h, k_step + 1, j);
                        if notlast {
                            p += r * hg(h, k_step + 2, j);
                            h.set(
                                (k_step + 2) as usize,
                                j as usize,
                                hg(h, k_step + 2, j) - p * z,
                            );
                        }
                        h.set(k_step as usize, j as usize, hg(h, k_step, j) - p * x);
                        h.set(
                            (k_step + 1) as usize,
                            j as usize,
                            hg(h, k_step + 1, j) - p * y,
                        );
                    }
                    for i in 0..(n.min(k_step + 3) + 1) {
                        p = x * hg(h, i, k_step) + y * hg(h, i, k_step + 1);
                        if notlast {
                            p += z * hg(h, i, k_step + 2);
                            h.set(
                                i as usize,
                                (k_step + 2) as usize,
                                hg(h, i, k_step + 2) - p * r,
                            );
                        }
                        h.set(i as usize, k_step as usize, hg(h, i, k_step) - p);
                        h.set(
                            i as usize,
                            (k_step + 1) as usize,
                            hg(h, i, k_step + 1) - p * q,
                        );
                    }
                    for i in low..(high + 1) {
                        p = x * v.get(i as usize, k_step as usize)
                            + y * v.get(i as usize, (k_step + 1) as usize);
                        if notlast {
                            p += z * v.get(i as usize, (k_step + 2) as usize);
                            v.set(
                                i as usize,
                                (k_step + 2) as usize,
                                v.get(i as usize, (k_step + 2) as usize) - p * r,
                            );
                        }
                        v.set(
                            i as usize,
                            k_step as usize,
                            v.get(i as usize, k_step as usize) - p,
                        );
                        v.set(
                            i as usize,
                            (k_step + 1) as usize,
                            v.get(i as usize, (k_step + 1) as usize) - p * q,
                        );
                    }
                }
            }
        }
    }

    // Back-substitution on the quasi-triangular factor.
    if norm == 0.0 {
        return Ok(());
    }

    for n in (0..nn).rev() {
        p = d[n as usize];
        q = e[n as usize];

        if q == 0.0 {
            // Real eigenvector.
            let mut l = n;
            h.set(n as usize, n as usize, 1.0);
            for i in (0..n).rev() {
                w = hg(h, i, i) - p;
                r = 0.0;
                for j in l..(n + 1) {
                    r += hg(h, i, j) * hg(h, j, n);
                }
                if e[i as usize] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        if w != 0.0 {
                            h.set(i as usize, n as usize, -r / w);
                        } else {
                            h.set(i as usize, n as usize, -r / (eps * norm));
                        }
                    } else {
                        x = hg(h, i, i + 1);
                        y = hg(h, i + 1, i);
                        q = (d[i as usize] - p) * (d[i as usize] - p)
                            + e[i as usize] * e[i as usize];
                        t = (x * s - z * r) / q;
                        h.set(i as usize, n as usize, t);
                        if x.abs() > z.abs() {
                            h.set((i + 1) as usize, n as usize, (-r - w * t) / x);
                        } else {
                            h.set((i + 1) as usize, n as usize, (-s - y * t) / z);
                        }
                    }

                    t = hg(h, i, n).abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..(n + 1) {
                            h.set(j as usize, n as usize, hg(h, j, n) / t);
                        }
                    }
                }
            }
        } else if q < 0.0 {
            // Complex eigenvector; columns n-1 and n hold real/imag parts.
            let mut l = n - 1;

            if hg(h, n, n - 1).abs() > hg(h, n - 1, n).abs() {
                h.set(
                    (n - 1) as usize,
                    (n - 1) as usize,
                    q / hg(h, n, n - 1),
                );
                h.set(
                    (n - 1) as usize,
                    n as usize,
                    -(hg(h, n, n) - p) / hg(h, n, n - 1),
                );
            } else {
                let (cr, ci) = cdiv(0.0, -hg(h, n - 1, n), hg(h, n - 1, n - 1) - p, q);
                h.set((n - 1) as usize, (n - 1) as usize, cr);
                h.set((n - 1) as usize, n as usize, ci);
            }
            h.set(n as usize, (n - 1) as usize, 0.0);
            h.set(n as usize, n as usize, 1.0);
            for i in (0..(n - 1)).rev() {
                let mut ra = 0.0f64;
                let mut sa = 0.0f64;
                for j in l..(n + 1) {
                    ra += hg(h, i, j) * hg(h, j, n - 1);
                    sa += hg(h, i, j) * hg(h, j, n);
                }
                w = hg(h, i, i) - p;

                if e[i as usize] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i as usize] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h.set(i as usize, (n - 1) as usize, cr);
                        h.set(i as usize, n as usize, ci);
                    } else {
                        x = hg(h, i, i + 1);
                        y = hg(h, i + 1, i);
                        let mut vr = (d[i as usize] - p) * (d[i as usize] - p)
                            + e[i as usize] * e[i as usize]
                            - q * q;
                        let vi = (d[i as usize] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps
                                * norm
                                * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h.set(i as usize, (n - 1) as usize, cr);
                        h.set(i as usize, n as usize, ci);
                        if x.abs() > z.abs() + q.abs() {
                            h.set(
                                (i + 1) as usize,
                                (n - 1) as usize,
                                (-ra - w * hg(h, i, n - 1) + q * hg(h, i, n)) / x,
                            );
                            h.set(
                                (i + 1) as usize,
                                n as usize,
                                (-sa - w * hg(h, i, n) - q * hg(h, i, n - 1)) / x,
                            );
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * hg(h, i, n - 1), -s - y * hg(h, i, n), z, q);
                            h.set((i + 1) as usize, (n - 1) as usize, cr);
                            h.set((i + 1) as usize, n as usize, ci);
                        }
                    }

                    t = hg(h, i, n - 1).abs().max(hg(h, i, n).abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..(n + 1) {
                            h.set(j as usize, (n - 1) as usize, hg(h, j, n - 1) / t);
                            h.set(j as usize, n as usize, hg(h, j, n) / t);
                        }
                    }
                }
            }
        }
    }

    // Back-transform to eigenvectors of the original matrix.
    for j in (low..nn).rev() {
        for i in low..(high + 1) {
            z = 0.0;
            for k in low..(j.min(high) + 1) {
                z += v.get(i as usize, k as usize) * hg(h, k, j);
            }
            v.set(i as usize, j as usize, z);
        }
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tridiag(rng: &mut ChaCha8Rng, k: usize) -> TridiagonalSym {
        TridiagonalSym::new(
            (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            (0..k - 1).map(|_| rng.gen_range(0.1..2.0)).collect(),
        )
    }

    fn check_sym_invariants(t: &TridiagonalSym, pairs: &EigenPairsSym) {
        let k = t.dim();
        // Ascending order.
        for i in 1..k {
            assert!(pairs.values[i - 1] <= pairs.values[i]);
        }
        // Residual per pair.
        for i in 0..k {
            let theta = pairs.values[i];
            let mut res: f64 = 0.0;
            for r in 0..k {
                let mut acc = t.diag[r] * pairs.vectors.get(r, i);
                if r > 0 {
                    acc += t.offdiag[r - 1] * pairs.vectors.get(r - 1, i);
                }
                if r + 1 < k {
                    acc += t.offdiag[r] * pairs.vectors.get(r + 1, i);
                }
                res = res.max((acc - theta * pairs.vectors.get(r, i)).abs());
            }
            assert!(res <= 1e-10 * theta.abs().max(1.0), "residual {res}");
        }
        // Orthonormality.
        for i in 0..k {
            for j in 0..k {
                let mut dot = 0.0;
                for r in 0..k {
                    dot += pairs.vectors.get(r, i) * pairs.vectors.get(r, j);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot - target).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn tridiag_1x1() {
        let t = TridiagonalSym::new(vec![3.5], vec![]);
        let pairs = tridiag_eig(&t).unwrap();
        assert_eq!(pairs.values, vec![3.5]);
        assert!((pairs.vectors.get(0, 0).abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tridiag_2x2_symmetric() {
        let t = TridiagonalSym::new(vec![0.0, 0.0], vec![1.0]);
        let pairs = tridiag_eig(&t).unwrap();
        assert!((pairs.values[0] + 1.0).abs() < 1e-12);
        assert!((pairs.values[1] - 1.0).abs() < 1e-12);
        for i in 0..2 {
            assert!((pairs.first_component(i).powi(2) - 0.5).abs() < 1e-12);
        }
    }

    /// Sturm bisection as an independent oracle for QL eigenvalues.
    fn bisection_eigenvalues(t: &TridiagonalSym) -> Vec<f64> {
        let k = t.dim();
        let mut bound = 0.0f64;
        for i in 0..k {
            let left = if i > 0 { t.offdiag[i - 1].abs() } else { 0.0 };
            let right = if i < k - 1 { t.offdiag[i].abs() } else { 0.0 };
            bound = bound.max(t.diag[i].abs() + left + right);
        }
        bound += 1.0;
        (0..k)
            .map(|idx| {
                let mut lo = -bound;
                let mut hi = bound;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if sturm_count_below(t, mid) <= idx {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    #[test]
    fn tridiag_matches_sturm_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tridiag(&mut rng, 8);
        let pairs = tridiag_eig(&t).unwrap();
        let oracle = bisection_eigenvalues(&t);
        for (a, b) in pairs.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        check_sym_invariants(&t, &pairs);
    }

    #[test]
    fn tridiag_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let k = rng.gen_range(1..=64);
            let t = if k == 1 {
                TridiagonalSym::new(vec![rng.gen_range(-2.0..2.0)], vec![])
            } else {
                random_tridiag(&mut rng, k)
            };
            let pairs = tridiag_eig(&t).unwrap();
            check_sym_invariants(&t, &pairs);
        }
    }

    #[test]
    fn sturm_basics() {
        let t = TridiagonalSym::new(vec![-3.0, -1.0, 2.0], vec![0.0, 0.0]);
        assert_eq!(sturm_count_below(&t, 0.0), 2);
        assert_eq!(sturm_count_below(&t, -10.0), 0);
    }

    #[test]
    fn sturm_matches_full_eig() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tridiag(&mut rng, 12);
        let pairs = tridiag_eig(&t).unwrap();
        let expected = pairs.values.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(sturm_count_below(&t, 0.0), expected);
    }

    #[test]
    fn sturm_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tridiag(&mut rng, 10);
        let mut prev = 0;
        let mut tau = -20.0;
        while tau <= 20.0 {
            let c = sturm_count_below(&t, tau);
            assert!(c >= prev);
            prev = c;
            tau += 0.25;
        }
        assert_eq!(prev, 10);
    }

    #[test]
    fn hessenberg_rotation_2x2() {
        let h = DenseMat::from_rows(2, vec![0.0, -1.0, 1.0, 0.0]);
        let pairs = hessenberg_eig(&h).unwrap();
        let mut imags: Vec<f64> = pairs.values.iter().map(|c| c.im).collect();
        imags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((imags[0] + 1.0).abs() < 1e-12);
        assert!((imags[1] - 1.0).abs() < 1e-12);
        for c in &pairs.values {
            assert!(c.re.abs() < 1e-12);
        }
    }

    #[test]
    fn hessenberg_matches_tridiag_on_symmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_tridiag(&mut rng, 6);
        let k = 6;
        let mut h = DenseMat::zeros(k);
        for i in 0..k {
            h.set(i, i, t.diag[i]);
            if i + 1 < k {
                h.set(i, i + 1, t.offdiag[i]);
                h.set(i + 1, i, t.offdiag[i]);
            }
        }
        let general = hessenberg_eig(&h).unwrap();
        let sym = tridiag_eig(&t).unwrap();
        let mut reals: Vec<f64> = general.values.iter().map(|c| c.re).collect();
        reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in reals.iter().zip(&sym.values) {
            assert!((a - b).abs() < 1e-10);
        }
        for c in &general.values {
            assert!(c.im.abs() < 1e-10);
        }
    }

    fn random_hessenberg(rng: &mut ChaCha8Rng, k: usize) -> DenseMat {
        let mut h = DenseMat::zeros(k);
        for i in 0..k {
            for j in i.saturating_sub(1)..k {
                h.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        h
    }

    #[test]
    fn hessenberg_trace_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 6;
        let h = random_hessenberg(&mut rng, k);
        let pairs = hessenberg_eig(&h).unwrap();

        let trace: f64 = (0..k).map(|i| h.get(i, i)).sum();
        let sum: Complex64 = pairs.values.iter().sum();
        assert!((sum.re - trace).abs() <= 1e-8 * trace.abs().max(1.0));
        assert!(sum.im.abs() <= 1e-8);

        // Determinant via dense LU (independent route).
        let det = dense_det(&h);
        let prod: Complex64 = pairs.values.iter().product();
        assert!((prod.re - det).abs() <= 1e-8 * det.abs().max(1.0));
        assert!(prod.im.abs() <= 1e-8 * det.abs().max(1.0));
    }

    fn dense_det(a: &DenseMat) -> f64 {
        let n = a.dim();
        let mut m = a.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            for r in (col + 1)..n {
                if m.get(r, col).abs() > m.get(piv, col).abs() {
                    piv = r;
                }
            }
            if piv != col {
                for c in 0..n {
                    let tmp = m.get(col, c);
                    m.set(col, c, m.get(piv, c));
                    m.set(piv, c, tmp);
                }
                det = -det;
            }
            let pivot = m.get(col, col);
            det *= pivot;
            if pivot == 0.0 {
                return 0.0;
            }
            for r in (col + 1)..n {
                let f = m.get(r, col) / pivot;
                for c in col..n {
                    let val = m.get(r, c) - f * m.get(col, c);
                    m.set(r, c, val);
                }
            }
        }
        det
    }

    #[test]
    fn hessenberg_eigenpair_residuals_and_inverse_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let k = rng.gen_range(2..=10);
            let h = random_hessenberg(&mut rng, k);
            let pairs = match hessenberg_eig(&h) {
                Ok(p) => p,
                Err(Error::DefectiveMatrix) => continue,
                Err(e) => panic!("{e}"),
            };
            let scale = (0..k * k).fold(0.0f64, |m, idx| m.max(h.data()[idx].abs()));
            for j in 0..k {
                let theta = pairs.values[j];
                for i in 0..k {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..k {
                        acc += h.get(i, c) * pairs.vectors[j * k + c];
                    }
                    let res = (acc - theta * pairs.vectors[j * k + i]).norm();
                    assert!(res <= 1e-8 * scale.max(1.0), "residual {res}");
                }
            }
            // Z . (first column of Z^{-1}) = e1
            for i in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..k {
                    acc += pairs.vectors[j * k + i] * pairs.inverse_first_column[j];
                }
                let target = if i == 0 { 1.0 } else { 0.0 };
                assert!((acc - target).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn hessenberg_permutation_similarity_multiset() {
        // Reversal similarity of a Hessenberg matrix is generally not
        // Hessenberg, so compare against a similarity by diagonal signs.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let k = 7;
        let h = random_hessenberg(&mut rng, k);
        let signs: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let mut h2 = DenseMat::zeros(k);
        for i in 0..k {
            for j in 0..k {
                h2.set(i, j, signs[i] * h.get(i, j) * signs[j]);
            }
        }
        let mut a: Vec<(f64, f64)> = hessenberg_eig(&h)
            .unwrap()
            .values
            .iter()
            .map(|c| (c.re, c.im))
            .collect();
        let mut b: Vec<(f64, f64)> = hessenberg_eig(&h2)
            .unwrap()
            .values
            .iter()
            .map(|c| (c.re, c.im))
            .collect();
        let key = |p: &(f64, f64)| (p.0, p.1);
        a.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        b.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.0 - y.0).abs() < 1e-8 && (x.1 - y.1).abs() < 1e-8);
        }
    }

    #[test]
    fn inertia_oracle_basics() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, -4.0), (1, 1, 9.0)]).unwrap();
        assert_eq!(dense_inertia_oracle(&a, 0.0).unwrap(), 1);

        let lap = crate::sparse::gen_laplace_2d(4);
        assert_eq!(dense_inertia_oracle(&lap, 0.0).unwrap(), 0);
    }

    #[test]
    fn inertia_oracle_matches_analytic_laplacian() {
        let lap = crate::sparse::gen_laplace_2d(5);
        for tau in [500.0, 2000.0, 4000.0, 7000.0] {
            assert_eq!(
                dense_inertia_oracle(&lap, tau).unwrap(),
                crate::sparse::count_laplace_eigs_below(5, tau)
            );
        }
    }

    #[test]
    fn inertia_oracle_refuses_above_cap() {
        let lap = crate::sparse::gen_laplace_2d(4);
        assert!(matches!(
            dense_inertia_oracle_with_cap(&lap, 0.0, 10),
            Err(Error::OracleUnavailable(_))
        ));
    }

    #[test]
    fn inertia_complement_sums_to_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let n = 20;
            let mut triplets = Vec::new();
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-1.0..1.0);
                    triplets.push((i, j, v));
                    if i != j {
                        triplets.push((j, i, v));
                    }
                }
            }
            let a = CsrMatrix::from_triplets(n, &triplets).unwrap();
            let dense = DenseMat::from_rows(n, a.to_dense());
            let t = householder_tridiagonalize(&dense);
            let pairs = tridiag_eig(&t).unwrap();
            let tau = 0.3;
            let below = dense_inertia_oracle(&a, tau).unwrap();
            let above = pairs.values.iter().filter(|&&v| v >= tau).count();
            assert_eq!(below + above, n);
        }
    }
}

//! Lanczos with full reorthogonalization and Arnoldi (modified
//! Gram-Schmidt), both over an arbitrary [`LinearOperator`].

use crate::dense::{tridiag_eig, DenseMat, TridiagonalSym};
use crate::error::{Error, Result};
use crate::sparse::LinearOperator;

/// Relative breakdown tolerance, scaled by a running estimate of the
/// operator norm (max |alpha| + 2 max beta).
const BREAKDOWN_REL_TOL: f64 = 1e-12;

/// Output of the Lanczos recurrence. `betas[i]` is beta_{i+2}; the last
/// entry is the residual norm after the final completed step, so with
/// `k_eff` steps there are `k_eff` alphas and `k_eff` betas.
#[derive(Debug, Clone)]
pub struct LanczosDecomposition {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Orthonormal basis vectors q_1..q_{k_eff} (plus q_{k_eff+1} unless
    /// breakdown stopped the recurrence).
    pub basis: Vec<Vec<f64>>,
    pub steps_completed: usize,
    pub breakdown: bool,
    pub vnorm: f64,
}

impl LanczosDecomposition {
    /// The leading k_eff x k_eff tridiagonal section J_k.
    pub fn tridiagonal_section(&self) -> TridiagonalSym {
        let k = self.steps_completed;
        TridiagonalSym::new(self.alphas.clone(), self.betas[..k - 1].to_vec())
    }

    /// beta_{k_eff + 1}: the off-diagonal entry beyond the section.
    pub fn next_beta(&self) -> f64 {
        self.betas[self.steps_completed - 1]
    }
}

/// Output of the Arnoldi recurrence: the (k_eff+1) x k_eff Hessenberg data
/// stored row-major in a dense (k_eff+1) x k_eff block.
#[derive(Debug, Clone)]
pub struct ArnoldiDecomposition {
    /// h[i * k_eff + j] = h_{i+1, j+1}; (k_eff + 1) rows.
    pub h: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub steps_completed: usize,
    pub breakdown: bool,
    pub vnorm: f64,
}

impl ArnoldiDecomposition {
    /// The leading square section H_k.
    pub fn hessenberg_section(&self) -> DenseMat {
        let k = self.steps_completed;
        let mut m = DenseMat::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.set(i, j, self.h[i * k + j]);
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four-way unrolled accumulation: fixed association order keeps results
    // deterministic while letting the compiler vectorize.
    let chunks = a.len() / 4;
    let mut acc = [0.0f64; 4];
    for i in 0..chunks {
        let base = 4 * i;
        acc[0] += a[base] * b[base];
        acc[1] += a[base + 1] * b[base + 1];
        acc[2] += a[base + 2] * b[base + 2];
        acc[3] += a[base + 3] * b[base + 3];
    }
    let mut tail = 0.0;
    for i in (4 * chunks)..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One classical Gram-Schmidt pass of `w` against `basis`, with a second
/// pass when the first removes more than half the norm.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    let before = norm2(w);
    for q in basis {
        let proj = dot(q, w);
        axpy(w, -proj, q);
    }
    if norm2(w) < 0.5 * before {
        for q in basis {
            let proj = dot(q, w);
            axpy(w, -proj, q);
        }
    }
}

/// Lanczos three-term recurrence with a reorthogonalization pass every
/// step. Stops early with the breakdown flag on a (lucky) tiny residual.
pub fn lanczos(c: &dyn LinearOperator, v: &[f64], k: usize) -> Result<LanczosDecomposition> {
    assert!(k >= 1);
    let n = c.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let vnorm = norm2(v);
    if vnorm == 0.0 {
        return Err(Error::ZeroStartVector);
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    basis.push(v.iter().map(|x| x / vnorm).collect());

    let mut alphas = Vec::with_capacity(k);
    let mut betas = Vec::with_capacity(k);
    let mut w = vec![0.0; n];
    let mut breakdown = false;

    for step in 0..k {
        c.apply_into(&basis[step], &mut w);
        if step > 0 {
            let beta_prev: f64 = betas[step - 1];
            axpy(&mut w, -beta_prev, &basis[step - 1]);
        }
        let alpha = dot(&basis[step], &w);
        axpy(&mut w, -alpha, &basis[step]);
        reorthogonalize(&mut w, &basis);
        let beta = norm2(&w);

        if alpha.is_nan() || beta.is_nan() {
            return Err(Error::NanDetected { step: step + 1 });
        }

        alphas.push(alpha);
        betas.push(beta);

        let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()))
            + 2.0 * betas.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let tol = BREAKDOWN_REL_TOL * scale.max(f64::MIN_POSITIVE);
        if beta <= tol {
            breakdown = true;
            break;
        }
        basis.push(w.iter().map(|x| x / beta).collect());
    }

    Ok(LanczosDecomposition {
        steps_completed: alphas.len(),
        alphas,
        betas,
        basis,
        breakdown,
        vnorm,
    })
}

/// Arnoldi with modified Gram-Schmidt plus the same conditional second
/// orthogonalization pass as `lanczos`.
pub fn arnoldi(c: &dyn LinearOperator, v: &[f64], k: usize) -> Result<ArnoldiDecomposition> {
    assert!(k >= 1);
    let n = c.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let vnorm = norm2(v);
    if vnorm == 0.0 {
        return Err(Error::ZeroStartVector);
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    basis.push(v.iter().map(|x| x / vnorm).collect());

    // Column-major growth is awkward for a ragged (k+1) x k block; collect
    // columns first, then pack row-major at the effective size.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut w = vec![0.0; n];
    let mut breakdown = false;

    for step in 0..k {
        c.apply_into(&basis[step], &mut w);
        let mut col = vec![0.0; step + 2];
        let before = norm2(&w);
        for (i, q) in basis.iter().enumerate() {
            let hij = dot(q, &w);
            axpy(&mut w, -hij, q);
            col[i] = hij;
        }
        if norm2(&w) < 0.5 * before {
            for (i, q) in basis.iter().enumerate() {
                let corr = dot(q, &w);
                axpy(&mut w, -corr, q);
                col[i] += corr;
            }
        }
        let hnext = norm2(&w);
        if hnext.is_nan() || col.iter().any(|x| x.is_nan()) {
            return Err(Error::NanDetected { step: step + 1 });
        }
        col[step + 1] = hnext;
        columns.push(col);

        let scale = columns
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = BREAKDOWN_REL_TOL * scale.max(f64::MIN_POSITIVE);
        if hnext <= tol {
            breakdown = true;
            break;
        }
        basis.push(w.iter().map(|x| x / hnext).collect());
    }

    let k_eff = columns.len();
    let mut h = vec![0.0; (k_eff + 1) * k_eff];
    for (j, col) in columns.iter().enumerate() {
        for (i, &val) in col.iter().enumerate() {
            h[i * k_eff + j] = val;
        }
    }

    Ok(ArnoldiDecomposition {
        h,
        basis,
        steps_completed: k_eff,
        breakdown,
        vnorm,
    })
}

/// `||v|| Q_k f(J_k) e_1`, evaluated spectrally on the tridiagonal section.
/// Used by the polynomial-exactness property tests.
pub fn krylov_poly_apply(
    dec: &LanczosDecomposition,
    f: impl Fn(f64) -> f64,
    vnorm: f64,
) -> Result<Vec<f64>> {
    let k = dec.steps_completed;
    let pairs = tridiag_eig(&dec.tridiagonal_section())?;
    // y = Z f(Theta) Z^T e1
    let mut y = vec![0.0; k];
    for i in 0..k {
        let scale = f(pairs.values[i]) * pairs.vectors.get(0, i);
        for r in 0..k {
            y[r] += scale * pairs.vectors.get(r, i);
        }
    }
    let n = dec.basis[0].len();
    let mut out = vec![0.0; n];
    for (j, q) in dec.basis.iter().take(k).enumerate() {
        axpy(&mut out, vnorm * y[j], q);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dense::DenseMat;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct DenseOp(pub DenseMat);

    impl LinearOperator for DenseOp {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn apply_into(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0.dim();
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += self.0.get(i, j) * x[j];
                }
                y[i] = acc;
            }
        }
    }

    fn diag_op(values: &[f64]) -> DenseOp {
        let n = values.len();
        let mut m = DenseMat::zeros(n);
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        DenseOp(m)
    }

    pub(crate) fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DenseMat {
        let mut m = DenseMat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0) / (n as f64).sqrt();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    fn check_lanczos_invariants(c: &DenseOp, dec: &LanczosDecomposition) {
        let k = dec.steps_completed;
        // Orthonormality.
        for (i, qi) in dec.basis.iter().enumerate() {
            for (j, qj) in dec.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot(qi, qj) - target).abs() <= 1e-10);
            }
        }
        // Factorization residual: C q_j = beta_j q_{j-1} + alpha_j q_j + beta_{j+1} q_{j+1}.
        let j_norm = dec
            .alphas
            .iter()
            .chain(dec.betas.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..k {
            let cq = c.apply(&dec.basis[j]);
            let n = cq.len();
            let mut res = cq;
            axpy(&mut res, -dec.alphas[j], &dec.basis[j]);
            if j > 0 {
                axpy(&mut res, -dec.betas[j - 1], &dec.basis[j - 1]);
            }
            if j + 1 < dec.basis.len() {
                axpy(&mut res, -dec.betas[j], &dec.basis[j + 1]);
            }
            let fro = norm2(&res) / (n as f64).sqrt();
            assert!(fro <= 1e-8 * j_norm.max(1.0), "residual {fro}");
        }
        for (i, &b) in dec.betas.iter().enumerate() {
            if i + 1 < k || !dec.breakdown {
                assert!(b > 0.0);
            }
        }
    }

    #[test]
    fn lanczos_breakdown_on_eigenvector() {
        let c = diag_op(&[-1.0, 1.0]);
        let dec = lanczos(&c, &[1.0, 0.0], 2).unwrap();
        assert_eq!(dec.steps_completed, 1);
        assert!(dec.breakdown);
        assert!((dec.alphas[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn lanczos_two_step_hand_computation() {
        let c = diag_op(&[-1.0, 1.0]);
        let s = 1.0 / 2.0f64.sqrt();
        let dec = lanczos(&c, &[s, s], 2).unwrap();
        assert_eq!(dec.steps_completed, 2);
        assert!(dec.alphas[0].abs() < 1e-14);
        assert!((dec.betas[0] - 1.0).abs() < 1e-14);
        assert!(dec.alphas[1].abs() < 1e-14);
        let pairs = tridiag_eig(&dec.tridiagonal_section()).unwrap();
        assert!((pairs.values[0] + 1.0).abs() < 1e-12);
        assert!((pairs.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_full_dimension_recovers_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let n = 20;
        let c = DenseOp(random_symmetric(&mut rng, n));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dec = lanczos(&c, &v, n).unwrap();
        assert_eq!(dec.steps_completed, n);
        let ritz = tridiag_eig(&dec.tridiagonal_section()).unwrap().values;
        let exact = {
            let t = crate::dense::householder_tridiagonalize(&c.0);
            tridiag_eig(&t).unwrap().values
        };
        for (a, b) in ritz.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        check_lanczos_invariants(&c, &dec);
    }

    #[test]
    fn lanczos_invariants_random_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let n = rng.gen_range(10..=200);
            let k = rng.gen_range(1..=40.min(n));
            let c = DenseOp(random_symmetric(&mut rng, n));
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dec = lanczos(&c, &v, k).unwrap();
            check_lanczos_invariants(&c, &dec);
        }
    }

    #[test]
    fn lanczos_rejects_zero_vector() {
        let c = diag_op(&[1.0, 2.0]);
        assert!(matches!(
            lanczos(&c, &[0.0, 0.0], 2),
            Err(Error::ZeroStartVector)
        ));
    }

    #[test]
    fn lanczos_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let n = 15;
        let base = random_symmetric(&mut rng, n);
        let sigma = 0.7;
        let mut shifted = base.clone();
        for i in 0..n {
            shifted.set(i, i, base.get(i, i) + sigma);
        }
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d1 = lanczos(&DenseOp(base), &v, 8).unwrap();
        let d2 = lanczos(&DenseOp(shifted), &v, 8).unwrap();
        for (q1, q2) in d1.basis.iter().zip(&d2.basis) {
            for (a, b) in q1.iter().zip(q2) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
        for (a1, a2) in d1.alphas.iter().zip(&d2.alphas) {
            assert!((a2 - a1 - sigma).abs() <= 1e-10);
        }
    }

    #[test]
    fn arnoldi_reduces_to_lanczos_on_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 25;
        let c = DenseOp(random_symmetric(&mut rng, n));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = 8;
        let lan = lanczos(&c, &v, k).unwrap();
        let arn = arnoldi(&c, &v, k).unwrap();
        assert_eq!(arn.steps_completed, k);
        let h = arn.hessenberg_section();
        for i in 0..k {
            assert!((h.get(i, i) - lan.alphas[i]).abs() <= 1e-8);
            if i + 1 < k {
                assert!((h.get(i + 1, i) - lan.betas[i]).abs() <= 1e-8);
                assert!((h.get(i, i + 1) - lan.betas[i]).abs() <= 1e-8);
            }
            for j in 0..i.saturating_sub(1) {
                assert!(h.get(i, j).abs() <= 1e-8);
                assert!(h.get(j, i).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn arnoldi_rotation_hand_computation() {
        let op = DenseOp(DenseMat::from_rows(2, vec![0.0, -1.0, 1.0, 0.0]));
        let dec = arnoldi(&op, &[1.0, 0.0], 2).unwrap();
        assert_eq!(dec.steps_completed, 2);
        let h = dec.hessenberg_section();
        assert!(h.get(0, 0).abs() < 1e-14);
        assert!((h.get(0, 1) + 1.0).abs() < 1e-14);
        assert!((h.get(1, 0) - 1.0).abs() < 1e-14);
        assert!(h.get(1, 1).abs() < 1e-14);
    }

    #[test]
    fn arnoldi_breakdown_on_eigenvector() {
        let c = diag_op(&[2.5, 1.0]);
        let dec = arnoldi(&c, &[1.0, 0.0], 2).unwrap();
        assert_eq!(dec.steps_completed, 1);
        assert!(dec.breakdown);
        assert!((dec.h[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn arnoldi_factorization_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..5 {
            let n = rng.gen_range(10..=100);
            let k = rng.gen_range(2..=20.min(n));
            let mut m = DenseMat::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, rng.gen_range(-1.0..1.0) / (n as f64).sqrt());
                }
            }
            let c = DenseOp(m);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dec = arnoldi(&c, &v, k).unwrap();
            let keff = dec.steps_completed;
            let scale = dec.h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            // C q_j = sum_i h_ij q_i over i = 1..j+1
            for j in 0..keff {
                let cq = c.apply(&dec.basis[j]);
                let mut res = cq;
                for (i, q) in dec.basis.iter().enumerate() {
                    if i <= j + 1 && i * keff + j < dec.h.len() {
                        axpy(&mut res, -dec.h[i * keff + j], q);
                    }
                }
                assert!(norm2(&res) <= 1e-8 * scale);
            }
            for (i, qi) in dec.basis.iter().enumerate() {
                for (j, qj) in dec.basis.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(qi, qj) - target).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn poly_apply_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let n = 18;
        let c = DenseOp(random_symmetric(&mut rng, n));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dec = lanczos(&c, &v, 5).unwrap();
        let vnorm = norm2(&v);

        // f = 1 reproduces v.
        let out = krylov_poly_apply(&dec, |_| 1.0, vnorm).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-10);
        }

        // f = x gives C v.
        let out = krylov_poly_apply(&dec, |x| x, vnorm).unwrap();
        let cv = c.apply(&v);
        for (a, b) in out.iter().zip(&cv) {
            assert!((a - b).abs() <= 1e-10);
        }

        // f = x^2 gives C^2 v.
        let out = krylov_poly_apply(&dec, |x| x * x, vnorm).unwrap();
        let ccv = c.apply(&c.apply(&v));
        let scale = ccv.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in out.iter().zip(&ccv) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn poly_apply_random_polynomials_up_to_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let n = 16;
        let c = DenseOp(random_symmetric(&mut rng, n));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = 6;
        let dec = lanczos(&c, &v, k).unwrap();
        let vnorm = norm2(&v);
        for _ in 0..10 {
            let deg = rng.gen_range(0..dec.steps_completed);
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |x: f64| {
                coeffs
                    .iter()
                    .rev()
                    .fold(0.0, |acc, &c0| acc * x + c0)
            };
            let out = krylov_poly_apply(&dec, f, vnorm).unwrap();
            // Horner on the operator.
            let mut exact = vec![0.0; n];
            for &c0 in coeffs.iter().rev() {
                exact = c.apply(&exact);
                for (e, vi) in exact.iter_mut().zip(&v) {
                    *e += c0 * vi;
                }
            }
            let scale = norm2(&exact).max(1e-30);
            let mut diff = out.clone();
            for (d, e) in diff.iter_mut().zip(&exact) {
                *d -= e;
            }
            assert!(norm2(&diff) <= 1e-9 * scale);
        }
    }
}

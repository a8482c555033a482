//! Quadrature rules for v*h(C)v built from Krylov decompositions: the
//! Gauss rule from the Lanczos tridiagonal section, the generalized-averaged
//! (GA) extension that gains one degree of exactness at no extra Krylov
//! cost, and the complex-node Arnoldi rule.

use num_complex::Complex64;

use crate::dense::{hessenberg_eig, tridiag_eig, TridiagonalSym};
use crate::error::Result;
use crate::krylov::{ArnoldiDecomposition, LanczosDecomposition};

/// Nodes within this fraction of the largest node modulus trigger the
/// shift-near-eigenvalue warning.
const NEAR_ZERO_REL_TOL: f64 = 1e-12;

/// Gauss-type rule: real ascending nodes with nonnegative weights that sum
/// to `vnorm_sq`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub vnorm_sq: f64,
}

/// Arnoldi rule: complex nodes with split weights. The quadrature value of
/// a function h is Re(sum_i left_i right_i h(node_i)); left_i = ||v||^2
/// z_i(1) and right_i is the i-th entry of the first column of Z^{-1}.
#[derive(Debug, Clone)]
pub struct ArnoldiRule {
    pub nodes: Vec<Complex64>,
    pub left_factors: Vec<Complex64>,
    pub right_factors: Vec<Complex64>,
    pub vnorm_sq: f64,
}

/// A quadrature value for the step function h(x) = 1 for x < 0, with the
/// diagnostics callers fold into their warning lists.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureValue {
    pub value: f64,
    /// Some node sits within `NEAR_ZERO_REL_TOL` of zero: the shift is
    /// (numerically) an eigenvalue and the strict classification below is
    /// fragile.
    pub near_zero_node: bool,
    /// Magnitude of the imaginary part dropped by the final real-part
    /// reduction. Zero for Gauss-type rules.
    pub discarded_imag: f64,
}

/// Gauss rule from the tridiagonal section: nodes are the Ritz values,
/// weights the squared first components of the unit eigenvectors scaled by
/// ||v||^2.
pub fn gauss_rule(dec: &LanczosDecomposition) -> Result<GaussRule> {
    let vnorm_sq = dec.vnorm * dec.vnorm;
    rule_from_tridiag(&dec.tridiagonal_section(), vnorm_sq)
}

/// GA rule: eigendecomposes the reverse-extended tridiagonal of order
/// 2k-1 whose tail repeats the section's coefficients in reverse. Exact
/// one polynomial degree beyond the Gauss rule. Requires the off-diagonal
/// entry beyond the section, so a breakdown (or k = 1, where the extension
/// is empty) falls back to the Gauss rule; the flag reports the fallback.
pub fn ga_rule(dec: &LanczosDecomposition) -> Result<(GaussRule, bool)> {
    let k = dec.steps_completed;
    if dec.breakdown {
        return Ok((gauss_rule(dec)?, true));
    }
    if k == 1 {
        return Ok((gauss_rule(dec)?, false));
    }
    let mut diag = dec.alphas.clone();
    diag.extend(dec.alphas[..k - 1].iter().rev());
    let mut offdiag = dec.betas[..k - 1].to_vec();
    offdiag.push(dec.next_beta());
    offdiag.extend(dec.betas[..k - 2].iter().rev());
    let vnorm_sq = dec.vnorm * dec.vnorm;
    Ok((
        rule_from_tridiag(&TridiagonalSym::new(diag, offdiag), vnorm_sq)?,
        false,
    ))
}

fn rule_from_tridiag(t: &TridiagonalSym, vnorm_sq: f64) -> Result<GaussRule> {
    let pairs = tridiag_eig(t)?;
    let weights = (0..t.dim())
        .map(|i| {
            let z1 = pairs.first_component(i);
            vnorm_sq * z1 * z1
        })
        .collect();
    Ok(GaussRule {
        nodes: pairs.values,
        weights,
        vnorm_sq,
    })
}

/// Arnoldi rule from the Hessenberg section. Errors if H_k is defective
/// (the eigenvector matrix is numerically singular).
pub fn arnoldi_rule(dec: &ArnoldiDecomposition) -> Result<ArnoldiRule> {
    let k = dec.steps_completed;
    let pairs = hessenberg_eig(&dec.hessenberg_section())?;
    let vnorm_sq = dec.vnorm * dec.vnorm;
    let left_factors = (0..k).map(|i| vnorm_sq * pairs.vectors[i * k]).collect();
    Ok(ArnoldiRule {
        nodes: pairs.values,
        left_factors,
        right_factors: pairs.inverse_first_column,
        vnorm_sq,
    })
}

impl GaussRule {
    /// Sum of weights at strictly negative nodes.
    pub fn apply_step_function(&self) -> QuadratureValue {
        let scale = self.nodes.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let eps = NEAR_ZERO_REL_TOL * scale;
        let mut value = 0.0;
        let mut near_zero = false;
        for (&theta, &w) in self.nodes.iter().zip(&self.weights) {
            if theta.abs() <= eps {
                near_zero = true;
            }
            if theta < 0.0 {
                value += w;
            }
        }
        QuadratureValue {
            value,
            near_zero_node: near_zero,
            discarded_imag: 0.0,
        }
    }
}

impl ArnoldiRule {
    /// Real part of sum_i left_i right_i over nodes with negative real
    /// part (the step function extended as 1 on the left half-plane).
    pub fn apply_step_function(&self) -> QuadratureValue {
        let scale = self.nodes.iter().fold(0.0f64, |m, t| m.max(t.norm()));
        let eps = NEAR_ZERO_REL_TOL * scale;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut near_zero = false;
        for i in 0..self.nodes.len() {
            if self.nodes[i].norm() <= eps {
                near_zero = true;
            }
            if self.nodes[i].re < 0.0 {
                sum += self.left_factors[i] * self.right_factors[i];
            }
        }
        QuadratureValue {
            value: sum.re,
            near_zero_node: near_zero,
            discarded_imag: sum.im.abs(),
        }
    }
}

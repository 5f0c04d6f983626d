//! Gaussian quadrature rules for expectations under `N(0, 1)`.
//!
//! Two families are provided:
//!
//! * [`gauss_hermite`]: the classical full-line rule for the standard normal
//!   weight. Exact for polynomials of degree `2q - 1`, but converges slowly on
//!   integrands with a kink, since the kink sits in the middle of the support.
//! * [`half_gauss`]: a rule for the weight `exp(-z^2 / 2) / sqrt(2 pi)`
//!   restricted to `[0, inf)`. Applying it to each half line separately
//!   ([`split_expectation`]) integrates piecewise polynomials with a break at
//!   zero exactly, which is what ReLU moments need.
//!
//! Both are built by Golub–Welsch from the three-term recurrence of the
//! orthogonal polynomials. The half-range recurrence has no closed form and is
//! obtained by a discretized Stieltjes procedure on a fine Gauss–Legendre grid.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const HALF_RANGE_CUTOFF: f64 = 24.0;
const DISCRETIZATION_NODES: usize = 800;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix, weights the
/// squared first eigenvector components times the total mass `mu0`.
fn golub_welsch(alpha: &[f64], sqrt_beta: &[f64], mu0: f64) -> GaussRule {
    let q = alpha.len();
    let mut j = DMatrix::zeros(q, q);
    for k in 0..q {
        j[(k, k)] = alpha[k];
        if k + 1 < q {
            j[(k, k + 1)] = sqrt_beta[k];
            j[(k + 1, k)] = sqrt_beta[k];
        }
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

fn check_order(q: usize) -> Result<()> {
    if q < 2 {
        return Err(Error::invalid(format!(
            "quadrature order must be >= 2 (got {q})"
        )));
    }
    Ok(())
}

/// `q`-point rule for `E[f(Z)]`, `Z ~ N(0, 1)` (probabilists' Hermite).
pub fn gauss_hermite(q: usize) -> Result<GaussRule> {
    check_order(q)?;
    let alpha = vec![0.0; q];
    let sqrt_beta: Vec<f64> = (1..q).map(|k| (k as f64).sqrt()).collect();
    Ok(golub_welsch(&alpha, &sqrt_beta, 1.0))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `q`-point rule for `int_0^inf f(z) exp(-z^2/2) / sqrt(2 pi) dz`. Weights sum
/// to 1/2.
pub fn half_gauss(q: usize) -> Result<GaussRule> {
    check_order(q)?;
    if q > DISCRETIZATION_NODES / 4 {
        return Err(Error::invalid(format!(
            "half-range quadrature order {q} exceeds the supported maximum {}",
            DISCRETIZATION_NODES / 4
        )));
    }
    let (gl_x, gl_w) = gauss_legendre(DISCRETIZATION_NODES);
    let half = 0.5 * HALF_RANGE_CUTOFF;
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let x: Vec<f64> = gl_x.iter().map(|&t| half * (t + 1.0)).collect();
    let w: Vec<f64> = gl_x
        .iter()
        .zip(&gl_w)
        .map(|(&t, &wt)| {
            let z = half * (t + 1.0);
            wt * half * (-0.5 * z * z).exp() * inv_sqrt_2pi
        })
        .collect();

    // Stieltjes with orthonormal polynomial values carried on the grid.
    let mu0: f64 = w.iter().sum();
    let mut alpha = Vec::with_capacity(q);
    let mut sqrt_beta = Vec::with_capacity(q);
    let mut prev = vec![0.0; x.len()];
    let mut cur = vec![1.0 / mu0.sqrt(); x.len()];
    for k in 0..q {
        let a: f64 = (0..x.len()).map(|j| w[j] * x[j] * cur[j] * cur[j]).sum();
        alpha.push(a);
        if k + 1 == q {
            break;
        }
        let sb_prev = if k == 0 { 0.0 } else { sqrt_beta[k - 1] };
        let next: Vec<f64> = (0..x.len())
            .map(|j| (x[j] - a) * cur[j] - sb_prev * prev[j])
            .collect();
        let norm = (0..x.len())
            .map(|j| w[j] * next[j] * next[j])
            .sum::<f64>()
            .sqrt();
        sqrt_beta.push(norm);
        prev = cur;
        cur = next.into_iter().map(|v| v / norm).collect();
    }
    Ok(golub_welsch(&alpha, &sqrt_beta, mu0))
}

/// `E[f(Z)]` for `Z ~ N(0, 1)`, integrating each half line with `rule` (a
/// [`half_gauss`] rule).
pub fn split_expectation(rule: &GaussRule, f: impl Fn(f64) -> f64) -> f64 {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| w * (f(z) + f(-z)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(k: u32) -> f64 {
        (1..=k).rev().step_by(2).map(f64::from).product()
    }

    #[test]
    fn hermite_even_moments() {
        let rule = gauss_hermite(10).unwrap();
        for k in 0..10u32 {
            let got = rule.integrate(|z| z.powi(2 * k as i32));
            let want = if k == 0 {
                1.0
            } else {
                double_factorial(2 * k - 1)
            };
            assert!((got - want).abs() <= 1e-10 * want, "k={k}: {got} vs {want}");
        }
        let odd = rule.integrate(|z| z.powi(5));
        assert!(odd.abs() <= 1e-10);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() <= 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() <= 1e-14);
    }

    #[test]
    fn half_gauss_moments() {
        // int_0^inf z^k phi(z) dz = (k-1)!! / 2 for even k, (k-1)!!/sqrt(2 pi) for odd k.
        let rule = half_gauss(16).unwrap();
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for k in 0..20u32 {
            let got = rule.integrate(|z| z.powi(k as i32));
            let df = if k == 0 { 1.0 } else { double_factorial(k - 1) };
            let want = if k % 2 == 0 {
                0.5 * df
            } else {
                df * inv_sqrt_2pi
            };
            assert!((got - want).abs() <= 1e-12 * want, "k={k}: {got} vs {want}");
        }
        assert!(rule.nodes.iter().all(|&z| z > 0.0));
    }

    #[test]
    fn split_rule_is_exact_on_relu_moments() {
        let rule = half_gauss(64).unwrap();
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for s in [0.1, 1.0, 3.7] {
            let m1 = split_expectation(&rule, |z| (s * z).max(0.0));
            let m2 = split_expectation(&rule, |z| (s * z).max(0.0).powi(2));
            assert!((m1 - s * inv_sqrt_2pi).abs() <= 1e-13);
            assert!((m2 - 0.5 * s * s).abs() <= 1e-13 * s * s);
        }
    }

    #[test]
    fn full_line_rule_struggles_with_the_kink() {
        let gh = gauss_hermite(64).unwrap();
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let err = (gh.integrate(|z| z.max(0.0)) - inv_sqrt_2pi).abs();
        assert!(err > 1e-6, "{err}");
    }

    #[test]
    fn rejects_low_order() {
        assert!(gauss_hermite(1).is_err());
        assert!(half_gauss(0).is_err());
        assert!(half_gauss(1000).is_err());
    }
}

//! Gauss–Legendre quadrature.
//!
//! Rules are built once per node count and cached. Integrals over intervals
//! with known kinks (support endpoints, the Laplace cusp) are split at those
//! points so that piecewise-smooth integrands keep full accuracy.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Default node count per axis.
pub const DEFAULT_NODES: usize = 32;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule on [-1, 1] by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Integral over [a, b], split at every breakpoint strictly inside.
    pub fn integrate_split<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> f64 {
        let mut total = 0.0;
        for_each_piece(a, b, breaks, |lo, hi| {
            total += self.integrate(lo, hi, &mut f)
        });
        total
    }

    /// Composite rule: [a, b] cut into `panels` equal pieces, each also split
    /// at the breakpoints.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        breaks: &[f64],
        mut f: F,
    ) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let hi = if p + 1 == panels { b } else { lo + h };
            total += self.integrate_split(lo, hi, breaks, &mut f);
        }
        total
    }
}

/// Calls `piece(lo, hi)` for each sub-interval of [a, b] delimited by the
/// sorted interior breakpoints.
pub(crate) fn for_each_piece<F: FnMut(f64, f64)>(a: f64, b: f64, breaks: &[f64], mut piece: F) {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    cuts.sort_by(f64::total_cmp);
    let mut lo = a;
    for t in cuts {
        if t > lo {
            piece(lo, t);
            lo = t;
        }
    }
    piece(lo, b);
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 32-node rule.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Shared 64-node rule, used for node-doubling error checks.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Returns a cached rule when one exists, otherwise builds it.
pub fn rule(n: usize) -> std::borrow::Cow<'static, GaussLegendre> {
    match n {
        32 => std::borrow::Cow::Borrowed(gl32()),
        64 => std::borrow::Cow::Borrowed(gl64()),
        _ => std::borrow::Cow::Owned(GaussLegendre::new(n)),
    }
}

/// Composite integral with a node-doubling error check: the 32- and 64-node
/// rules must agree to `rel_tol` (relative, with an absolute floor of
/// `rel_tol` for near-zero integrals).
pub fn integrate_checked<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    panels: usize,
    breaks: &[f64],
    rel_tol: f64,
    mut f: F,
) -> Result<f64> {
    let coarse = gl32().integrate_composite(a, b, panels, breaks, &mut f);
    let fine = gl64().integrate_composite(a, b, panels, breaks, &mut f);
    let err = (fine - coarse).abs();
    if err > rel_tol * fine.abs().max(1.0) {
        return Err(Error::Quadrature {
            tolerance: rel_tol,
            estimate: err,
        });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 32, 64] {
            let r = GaussLegendre::new(n);
            let s: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let r = GaussLegendre::new(5);
        // ∫_0^2 x^9 dx = 2^10 / 10
        assert_abs_diff_eq!(r.integrate(0.0, 2.0, |x| x.powi(9)), 102.4, epsilon = 1e-10);
    }

    #[test]
    fn split_handles_kinks() {
        let v = gl32().integrate_split(-1.0, 2.0, &[0.0], |x: f64| x.abs());
        assert_abs_diff_eq!(v, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let v = integrate_checked(-12.0, 12.0, 8, &[], 1e-12, |x: f64| {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-13);
    }
}

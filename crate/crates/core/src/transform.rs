//! Distribution-restoring transforms.
//!
//! The ECDQ output `X̂ = X + T`, with `T` uniform over the basic cell and
//! independent of `X`, has a smoothed law. Mapping each coordinate through
//! its (conditional) smoothed cdf and then through the source's inverse cdf
//! gives a reconstruction with exactly the source law.
//!
//! All cdf values are carried as a pair of tails `(F, 1 − F)`, each computed
//! directly, so that inversion stays accurate deep in either tail.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, LatticeKind};
use crate::prob::{std_normal_cdf, std_normal_icdf, SourceModel};
use crate::quad::{for_each_piece, rule, GaussLegendre, DEFAULT_NODES};

/// Denominators of conditional cdfs below this mean the conditioning value
/// lies outside the support.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// x-tolerance of the smoothed inverse cdf.
pub const ICDF_X_TOL: f64 = 1e-10;

/// Lower and upper tail of a probability, each computed without
/// cancellation; `lower + upper = 1` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tails {
    pub lower: f64,
    pub upper: f64,
}

impl Tails {
    fn from_lower(lower: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        Self {
            lower,
            upper: 1.0 - lower,
        }
    }

    fn from_upper(upper: f64) -> Self {
        let upper = upper.clamp(0.0, 1.0);
        Self {
            lower: 1.0 - upper,
            upper,
        }
    }
}

/// Law of the ECDQ output for a product source: the source smoothed by a
/// uniform variable on the lattice's basic cell.
#[derive(Debug, Clone)]
pub struct SmoothedModel {
    base: SourceModel,
    lattice: Lattice,
    rule: Cow<'static, GaussLegendre>,
}

impl SmoothedModel {
    pub fn new(base: SourceModel, lattice: Lattice) -> Result<Self> {
        if !base.is_continuous() {
            return Err(Error::Unsupported {
                op: "smoothed model",
                what: "a discrete source".into(),
            });
        }
        if base.dim() != 1 && base.dim() != lattice.dim() {
            return Err(Error::DimensionMismatch {
                expected: lattice.dim(),
                got: base.dim(),
            });
        }
        Ok(Self {
            base,
            lattice,
            rule: rule(DEFAULT_NODES),
        })
    }

    /// Gauss–Legendre nodes per axis (default 32).
    pub fn with_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(invalid("quadrature needs at least one node"));
        }
        self.rule = rule(nodes);
        Ok(self)
    }

    pub fn base(&self) -> &SourceModel {
        &self.base
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    /// Breakpoints of the base law shifted into the integration variable.
    fn shifted_breaks(&self, x: f64) -> Vec<f64> {
        self.base.breakpoints().iter().map(|b| b - x).collect()
    }

    /// `(1/(b−a)) ∫_a^b h(x + τ) dτ`, split at kinks of the base law and cut
    /// into panels no wider than the source's standard deviation.
    fn average<F: Fn(f64) -> f64>(&self, x: f64, a: f64, b: f64, h: F) -> f64 {
        let sd = self.base.variance().sqrt();
        let panels = ((b - a) / sd).ceil().clamp(1.0, 4096.0) as usize;
        let width = (b - a) / panels as f64;
        let breaks = self.shifted_breaks(x);
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + width * p as f64;
            let hi = if p + 1 == panels { b } else { lo + width };
            for_each_piece(lo, hi, &breaks, |l, u| {
                total += self.rule.integrate(l, u, |t| h(x + t))
            });
        }
        total / (b - a)
    }

    /// `∫ w(τ₁) h(x + τ₁) dτ₁` over the hexagon's τ₁-range, where `w` is the
    /// cell's section length at `τ₁`. The hexagon is two trapezoids meeting
    /// at `τ₁ = 0`, so the weight is linear on each piece.
    fn hex_section_integral<F: Fn(f64, f64, f64) -> f64>(&self, x: f64, h: F) -> f64 {
        let bx = self.lattice.covering_box()[0];
        let mut breaks = self.shifted_breaks(x);
        breaks.push(0.0);
        let mut total = 0.0;
        for_each_piece(bx.0, bx.1, &breaks, |l, u| {
            total += self.rule.integrate(l, u, |t| {
                let (lo, hi) = self.lattice.cell_section(t).unwrap_or((0.0, 0.0));
                h(t, lo, hi)
            })
        });
        total
    }

    /// Tails of the cdf of `X̂_axis` given `X̂_0..axis = conditioning`.
    pub fn conditional_tails(
        &self,
        axis: usize,
        x_hat: f64,
        conditioning: &[f64],
    ) -> Result<Tails> {
        if axis >= self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: axis + 1,
            });
        }
        if !x_hat.is_finite() {
            return Err(invalid(format!("non-finite argument {x_hat}")));
        }
        let lower_side = x_hat < self.base.median();
        match self.lattice.kind() {
            LatticeKind::ScaledInteger { step, .. } => {
                // independent axes: the conditioning drops out
                let h = 0.5 * step;
                Ok(if lower_side {
                    Tails::from_lower(self.average(x_hat, -h, h, |v| self.base.cdf(v)))
                } else {
                    Tails::from_upper(self.average(x_hat, -h, h, |v| self.base.sf(v)))
                })
            }
            LatticeKind::Hexagonal { .. } => {
                let vol = self.lattice.cell_volume();
                if axis == 0 {
                    let tail = |v: f64| {
                        if lower_side {
                            self.base.cdf(v)
                        } else {
                            self.base.sf(v)
                        }
                    };
                    let p = self
                        .hex_section_integral(x_hat, |t, lo, hi| (hi - lo) * tail(x_hat + t))
                        / vol;
                    return Ok(if lower_side {
                        Tails::from_lower(p)
                    } else {
                        Tails::from_upper(p)
                    });
                }
                let Some(&c) = conditioning.first() else {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: 0,
                    });
                };
                if !c.is_finite() {
                    return Err(invalid(format!("non-finite conditioning value {c}")));
                }
                let den =
                    self.hex_section_integral(c, |t, lo, hi| (hi - lo) * self.base.pdf(c + t));
                if !(den > DENOMINATOR_FLOOR) {
                    return Err(Error::DegenerateConditioning(den));
                }
                let breaks = self.shifted_breaks(x_hat);
                let num = self.hex_section_integral(c, |t, lo, hi| {
                    let f = self.base.pdf(c + t);
                    if f == 0.0 || hi <= lo {
                        return 0.0;
                    }
                    let mut inner = 0.0;
                    for_each_piece(lo, hi, &breaks, |l, u| {
                        inner += self.rule.integrate(l, u, |s| {
                            if lower_side {
                                self.base.cdf(x_hat + s)
                            } else {
                                self.base.sf(x_hat + s)
                            }
                        })
                    });
                    f * inner
                });
                let p = num / den;
                Ok(if lower_side {
                    Tails::from_lower(p)
                } else {
                    Tails::from_upper(p)
                })
            }
        }
    }

    /// Conditional cdf of axis `axis` of the ECDQ output.
    pub fn cdf(&self, axis: usize, x_hat: f64, conditioning: &[f64]) -> Result<f64> {
        Ok(self.conditional_tails(axis, x_hat, conditioning)?.lower)
    }

    /// Marginal density of the first axis of the ECDQ output.
    pub fn pdf(&self, x_hat: f64) -> f64 {
        match self.lattice.kind() {
            LatticeKind::ScaledInteger { step, .. } => {
                let h = 0.5 * step;
                let mass = if x_hat < self.base.median() {
                    self.base.cdf(x_hat + h) - self.base.cdf(x_hat - h)
                } else {
                    self.base.sf(x_hat - h) - self.base.sf(x_hat + h)
                };
                mass.max(0.0) / step
            }
            LatticeKind::Hexagonal { .. } => {
                self.hex_section_integral(x_hat, |t, lo, hi| (hi - lo) * self.base.pdf(x_hat + t))
                    / self.lattice.cell_volume()
            }
        }
    }

    /// Marginal quantile of the first axis: bisection inside the bracket
    /// `F⁻¹(u) ± half-width of the cell`, then Newton polishing.
    pub fn icdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(invalid(format!("probability {u} outside [0, 1]")));
        }
        let centre = self.base.icdf(u);
        let reach = self.lattice.covering_box()[0].1;
        let (mut lo, mut hi) = (centre - reach, centre + reach);
        let target = u.clamp(crate::prob::ICDF_EPS, 1.0 - crate::prob::ICDF_EPS);
        let f = |x: f64| self.cdf(0, x, &[]).map(|p| p - target);
        for _ in 0..200 {
            if hi - lo <= ICDF_X_TOL * 1e-2 * (1.0 + lo.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-3 * reach {
                break;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..50 {
            let d = self.pdf(x);
            if d <= 0.0 {
                break;
            }
            let step = f(x)? / d;
            let next = (x - step).clamp(lo, hi);
            let done = (next - x).abs() < ICDF_X_TOL;
            x = next;
            if done {
                break;
            }
        }
        Ok(x)
    }
}

/// Conditional cdf of axis `axis` of the ECDQ output given the preceding
/// coordinates.
pub fn smoothed_cdf(
    sm: &SmoothedModel,
    axis: usize,
    x_hat: f64,
    conditioning: &[f64],
) -> Result<f64> {
    sm.cdf(axis, x_hat, conditioning)
}

/// Sequential transform `g_i(x̂) = F⁻¹(F_{X̂_i | X̂_<i}(x̂_i))`.
#[derive(Debug, Clone)]
pub struct DpqTransform {
    smoothed: SmoothedModel,
}

impl DpqTransform {
    pub fn new(source: SourceModel, lattice: Lattice) -> Result<Self> {
        Ok(Self {
            smoothed: SmoothedModel::new(source, lattice)?,
        })
    }

    pub fn with_nodes(self, nodes: usize) -> Result<Self> {
        Ok(Self {
            smoothed: self.smoothed.with_nodes(nodes)?,
        })
    }

    pub fn smoothed(&self) -> &SmoothedModel {
        &self.smoothed
    }

    pub fn apply(&self, x_hat: &[f64]) -> Result<Vec<f64>> {
        let k = self.smoothed.dim();
        if x_hat.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: x_hat.len(),
            });
        }
        let base = self.smoothed.base();
        let step = self.smoothed.lattice().step();
        (0..k)
            .map(|i| {
                let t = self.smoothed.conditional_tails(i, x_hat[i], &x_hat[..i])?;
                let g = base.icdf_two_sided(t.lower, t.upper);
                // on the cube the exact value lies within half a step; the
                // clamp only matters once the tails underflow
                Ok(match step {
                    Some(s) => g.clamp(x_hat[i] - 0.5 * s, x_hat[i] + 0.5 * s),
                    None => g,
                })
            })
            .collect()
    }
}

/// One-shot form of [`DpqTransform::apply`].
pub fn dpq_transform(source: &SourceModel, lat: &Lattice, x_hat: &[f64]) -> Result<Vec<f64>> {
    DpqTransform::new(source.clone(), lat.clone())?.apply(x_hat)
}

/// Width of the Gaussian smoothing window in standard deviations.
const SMOOTHING_REACH: f64 = 12.0;

/// `F⁻¹(∫ F(x̂ + τ) N(τ; 0, η²) dτ)` for a scalar continuous source.
pub fn gaussian_smoothed_transform(model: &SourceModel, eta: f64, x_hat: f64) -> Result<f64> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(invalid(format!(
            "smoothing deviation must be positive, got {eta}"
        )));
    }
    if !model.is_continuous() {
        return Err(Error::Unsupported {
            op: "gaussian_smoothed_transform",
            what: "a discrete source".into(),
        });
    }
    if !x_hat.is_finite() {
        return Err(invalid(format!("non-finite argument {x_hat}")));
    }
    let reach = SMOOTHING_REACH * eta;
    let scale = eta.min(model.variance().sqrt());
    let panels = (2.0 * reach / scale).ceil().clamp(2.0, 4096.0) as usize;
    let lower_side = x_hat < model.median();
    let mut breaks: Vec<f64> = model.breakpoints().iter().map(|b| b - x_hat).collect();
    breaks.push(0.0);
    let norm = 1.0 / (eta * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |t: f64| {
        let tail = if lower_side {
            model.cdf(x_hat + t)
        } else {
            model.sf(x_hat + t)
        };
        tail * norm * (-0.5 * (t / eta).powi(2)).exp()
    };
    let p = crate::quad::gl32().integrate_composite(-reach, reach, panels, &breaks, integrand)
        // mass of the window that was cut off, weighted by the tail value there
        + if lower_side { std_normal_cdf(-SMOOTHING_REACH) * model.cdf(x_hat - reach) } else { 0.0 };
    let t = if lower_side {
        Tails::from_lower(p)
    } else {
        Tails::from_upper(p)
    };
    Ok(model.icdf_two_sided(t.lower, t.upper))
}

/// Closed form of the Gaussian-smoothed transform for a Gaussian source:
/// `√(σ²/(σ²+η²)) (x̂ − μ) + μ`.
pub fn gaussian_smoothed_closed_form(mean: f64, variance: f64, eta: f64, x_hat: f64) -> f64 {
    (variance / (variance + eta * eta)).sqrt() * (x_hat - mean) + mean
}

/// Joint laws with computable sequential conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "joint", rename_all = "snake_case")]
pub enum JointModel {
    /// Independent axes sharing one marginal.
    Product { marginal: SourceModel, dim: usize },
    BivariateGaussian {
        mean: [f64; 2],
        variance: [f64; 2],
        rho: f64,
    },
}

impl JointModel {
    pub fn product(marginal: SourceModel, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(Self::Product { marginal, dim })
    }

    pub fn bivariate_gaussian(mean: [f64; 2], variance: [f64; 2], rho: f64) -> Result<Self> {
        if !variance.iter().all(|v| v.is_finite() && *v > 0.0)
            || !mean.iter().all(|m| m.is_finite())
        {
            return Err(invalid(
                "bivariate Gaussian needs finite means and positive variances",
            ));
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::DegenerateConditioning(1.0 - rho * rho));
        }
        Ok(Self::BivariateGaussian {
            mean,
            variance,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Product { dim, .. } => *dim,
            Self::BivariateGaussian { .. } => 2,
        }
    }

    /// Mean and standard deviation of `X_2 | X_1 = x1`.
    fn gaussian_conditional(mean: [f64; 2], variance: [f64; 2], rho: f64, x1: f64) -> (f64, f64) {
        let (s1, s2) = (variance[0].sqrt(), variance[1].sqrt());
        (
            mean[1] + rho * s2 / s1 * (x1 - mean[0]),
            s2 * (1.0 - rho * rho).sqrt(),
        )
    }
}

/// `u_i = F_{X_i | X_<i}(x_i | x_<i)`.
pub fn rosenblatt_forward(joint: &JointModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != joint.dim() {
        return Err(Error::DimensionMismatch {
            expected: joint.dim(),
            got: x.len(),
        });
    }
    match joint {
        JointModel::Product { marginal, .. } => {
            if !marginal.is_continuous() {
                return Err(Error::Unsupported {
                    op: "rosenblatt_forward",
                    what: "a discrete marginal".into(),
                });
            }
            Ok(x.iter().map(|&v| marginal.cdf(v)).collect())
        }
        &JointModel::BivariateGaussian {
            mean,
            variance,
            rho,
        } => {
            let u1 = std_normal_cdf((x[0] - mean[0]) / variance[0].sqrt());
            let (m, s) = JointModel::gaussian_conditional(mean, variance, rho, x[0]);
            Ok(vec![u1, std_normal_cdf((x[1] - m) / s)])
        }
    }
}

/// Sequential conditional inverse cdf; `u` is clamped like [`SourceModel::icdf`].
pub fn rosenblatt_inverse(joint: &JointModel, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != joint.dim() {
        return Err(Error::DimensionMismatch {
            expected: joint.dim(),
            got: u.len(),
        });
    }
    let clamp = |p: f64| p.clamp(crate::prob::ICDF_EPS, 1.0 - crate::prob::ICDF_EPS);
    match joint {
        JointModel::Product { marginal, .. } => Ok(u.iter().map(|&p| marginal.icdf(p)).collect()),
        &JointModel::BivariateGaussian {
            mean,
            variance,
            rho,
        } => {
            let x1 = mean[0] + variance[0].sqrt() * std_normal_icdf(clamp(u[0]));
            let (m, s) = JointModel::gaussian_conditional(mean, variance, rho, x1);
            Ok(vec![x1, m + s * std_normal_icdf(clamp(u[1]))])
        }
    }
}

//! Rate-distortion bounds for distribution-preserving quantization.
//!
//! Closed forms cover the Gaussian source under MSE: the distribution
//! preserving RDF, the classic RDF, the Shannon lower bound and the
//! SLB-based sandwich, plus the operating point of the scaled AWGN
//! construction. For finite alphabets the constrained minimization is solved
//! directly: fixing both marginals of the coupling to the source pmf turns
//! the Lagrangian into an entropic projection that alternating scaling
//! solves ([`discrete_dp_rdf_curve`]). A slow exhaustive search over the
//! coupling polytope ([`discrete_dp_rdf_bruteforce`]) serves as its oracle.
//!
//! All rates are in nats.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::SourceModel;

/// A (rate, distortion) pair, rate in nats per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub distortion: f64,
}

fn check_variance(variance: f64) {
    assert!(
        variance.is_finite() && variance > 0.0,
        "variance must be positive, got {variance}"
    );
}

/// DP-RDF of a Gaussian source under MSE:
/// `ln(σ² / sqrt(σ²D − D²/4))` below `2σ²`, zero above.
///
/// `D = 0` returns `+∞`.
///
/// # Panics
/// If `variance <= 0` or `distortion < 0`.
pub fn dp_rdf_gaussian(variance: f64, distortion: f64) -> f64 {
    check_variance(variance);
    assert!(
        distortion >= 0.0,
        "distortion must be non-negative, got {distortion}"
    );
    if distortion == 0.0 {
        return f64::INFINITY;
    }
    if distortion >= 2.0 * variance {
        return 0.0;
    }
    (variance / (variance * distortion - distortion * distortion / 4.0).sqrt()).ln()
}

/// Classic RDF of a Gaussian source under MSE: `½ ln(σ²/D)` below `σ²`.
///
/// # Panics
/// If `variance <= 0` or `distortion < 0`.
pub fn rdf_gaussian(variance: f64, distortion: f64) -> f64 {
    check_variance(variance);
    assert!(
        distortion >= 0.0,
        "distortion must be non-negative, got {distortion}"
    );
    if distortion == 0.0 {
        return f64::INFINITY;
    }
    if distortion >= variance {
        return 0.0;
    }
    0.5 * (variance / distortion).ln()
}

/// Shannon lower bound under MSE without the zero floor:
/// `h(X) − ½ ln(2πeD)`.
pub fn slb_mse_unfloored(model: &SourceModel, distortion: f64) -> Result<f64> {
    if !(distortion > 0.0) {
        return Err(invalid(format!("SLB needs D > 0, got {distortion}")));
    }
    let h = model.diff_entropy().map_err(|_| Error::Unsupported {
        op: "slb_mse",
        what: "a discrete model".into(),
    })?;
    Ok(h - 0.5 * (2.0 * PI * E * distortion).ln())
}

/// Shannon lower bound under MSE, floored at zero.
pub fn slb_mse(model: &SourceModel, distortion: f64) -> Result<f64> {
    Ok(slb_mse_unfloored(model, distortion)?.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
}

/// SLB-based bracket of the Gaussian DP-RDF.
///
/// The upper bound comes from the backward/forward channel built on the
/// SLB-achieving error `W ~ N(0, D/4)`: `R_SLB(D) + h(X) − h(X − W)`, where
/// `X − W` is the (Gaussian) SLB reconstruction with variance `σ² − D/4`.
/// The unfloored SLB is used inside the upper bound; the lower bound is the
/// floored SLB.
pub fn dp_rdf_sandwich_gaussian(variance: f64, distortion: f64) -> Result<Sandwich> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(invalid(format!(
            "variance must be positive, got {variance}"
        )));
    }
    if !(distortion > 0.0 && distortion < 2.0 * variance) {
        return Err(invalid(format!(
            "sandwich requires 0 < D < 2σ² = {}, got {distortion}",
            2.0 * variance
        )));
    }
    let source = SourceModel::gaussian(0.0, variance)?;
    let slb = slb_mse_unfloored(&source, distortion)?;
    let h_x = source.diff_entropy()?;
    let reconstruction = SourceModel::gaussian(0.0, variance - distortion / 4.0)?;
    let h_x_minus_w = reconstruction.diff_entropy()?;
    Ok(Sandwich {
        lower: slb.max(0.0),
        upper: slb + h_x - h_x_minus_w,
    })
}

/// Operating point of `X̃ = sqrt(σ²/(σ²+σ_N²)) (X − μ + N) + μ`.
pub fn awgn_oracle_point(variance: f64, noise_variance: f64) -> Result<RdPoint> {
    if !(variance.is_finite() && variance > 0.0) || !(noise_variance > 0.0) {
        return Err(invalid(format!(
            "variances must be positive, got σ²={variance}, σ_N²={noise_variance}"
        )));
    }
    let gain = (variance / (variance + noise_variance)).sqrt();
    let distortion = 2.0 * variance * (1.0 - gain);
    let rate = 0.5 * ((variance + noise_variance) / noise_variance).ln();
    Ok(RdPoint { rate, distortion })
}

/// Square cost table `e(i, j)` over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    size: usize,
    values: Vec<f64>,
}

impl CostTable {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if size == 0 || values.len() != size * size {
            return Err(invalid(format!("cost table must be {size}x{size}")));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("cost entries must be finite and non-negative"));
        }
        Ok(Self { size, values })
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..size * size).map(|k| f(k / size, k % size)).collect();
        Self::new(size, values)
    }

    pub fn hamming(size: usize) -> Self {
        Self::from_fn(size, |i, j| if i == j { 0.0 } else { 1.0 }).expect("valid table")
    }

    pub fn squared(size: usize) -> Self {
        Self::from_fn(size, |i, j| (i as f64 - j as f64).powi(2)).expect("valid table")
    }

    pub fn absolute(size: usize) -> Self {
        Self::from_fn(size, |i, j| (i as f64 - j as f64).abs()).expect("valid table")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

/// Joint pmf over an alphabet pair with its target marginals and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    size: usize,
    joint: Vec<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
    cost: CostTable,
}

impl Coupling {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.size + j]
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.joint
            .chunks(self.size)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.size)
            .map(|j| (0..self.size).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Largest absolute deviation of either marginal from its target.
    pub fn marginal_residual(&self) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    /// Mutual information of the joint table in nats.
    pub fn mutual_information(&self) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        mutual_information(&self.joint, &rows, &cols, self.size)
    }

    pub fn expected_cost(&self) -> f64 {
        self.joint
            .iter()
            .enumerate()
            .map(|(k, p)| p * self.cost.values[k])
            .sum()
    }

    pub fn rd_point(&self) -> RdPoint {
        RdPoint {
            rate: self.mutual_information().max(0.0),
            distortion: self.expected_cost(),
        }
    }
}

fn mutual_information(joint: &[f64], rows: &[f64], cols: &[f64], m: usize) -> f64 {
    let mut mi = 0.0;
    for i in 0..m {
        for j in 0..m {
            let p = joint[i * m + j];
            if p > 0.0 {
                mi += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

/// Stopping rule for the scaling iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Largest alphabet the discrete solver accepts.
pub const MAX_ALPHABET: usize = 64;

fn check_discrete(pmf: &[f64], cost: &CostTable) -> Result<()> {
    // validates the pmf
    SourceModel::pmf(pmf.to_vec())?;
    if pmf.len() > MAX_ALPHABET {
        return Err(invalid(format!(
            "alphabet size {} exceeds {MAX_ALPHABET}",
            pmf.len()
        )));
    }
    if cost.size() != pmf.len() {
        return Err(Error::DimensionMismatch {
            expected: pmf.len(),
            got: cost.size(),
        });
    }
    Ok(())
}

/// Minimizer of `I(X; X̃) + λ E[e(X, X̃)]` over couplings whose marginals
/// both equal `pmf`, found by alternating row/column scaling of
/// `K_ij = p_i p_j exp(−λ e_ij)`.
pub fn dp_rdf_coupling(
    pmf: &[f64],
    cost: &CostTable,
    lambda: f64,
    config: SinkhornConfig,
) -> Result<Coupling> {
    check_discrete(pmf, cost)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let m = pmf.len();
    let mut kernel = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            kernel[i * m + j] = pmf[i] * pmf[j] * (-lambda * cost.get(i, j)).exp();
        }
    }
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; m];
    let mut residual = f64::INFINITY;
    for iter in 0..config.max_iter {
        for i in 0..m {
            let kv: f64 = (0..m).map(|j| kernel[i * m + j] * v[j]).sum();
            u[i] = if pmf[i] > 0.0 {
                if kv <= 0.0 || !kv.is_finite() {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: f64::INFINITY,
                    });
                }
                pmf[i] / kv
            } else {
                0.0
            };
        }
        for j in 0..m {
            let ku: f64 = (0..m).map(|i| kernel[i * m + j] * u[i]).sum();
            v[j] = if pmf[j] > 0.0 {
                if ku <= 0.0 || !ku.is_finite() {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: f64::INFINITY,
                    });
                }
                pmf[j] / ku
            } else {
                0.0
            };
        }
        // columns are exact after the v update; rows carry the residual
        residual = (0..m)
            .map(|i| {
                let row: f64 = (0..m).map(|j| u[i] * kernel[i * m + j] * v[j]).sum();
                (row - pmf[i]).abs()
            })
            .fold(0.0, f64::max);
        if residual < config.tolerance {
            let joint = (0..m * m)
                .map(|k| u[k / m] * kernel[k] * v[k % m])
                .collect();
            return Ok(Coupling {
                size: m,
                joint,
                row_marginal: pmf.to_vec(),
                col_marginal: pmf.to_vec(),
                cost: cost.clone(),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: config.max_iter,
        residual,
    })
}

/// One DP-RDF point per multiplier in `lambdas`.
pub fn discrete_dp_rdf_curve(
    pmf: &[f64],
    cost: &CostTable,
    lambdas: &[f64],
) -> Result<Vec<RdPoint>> {
    lambdas
        .iter()
        .map(|&l| dp_rdf_coupling(pmf, cost, l, SinkhornConfig::default()).map(|c| c.rd_point()))
        .collect()
}

/// Number of multipliers in [`default_lambda_grid`].
pub const LAMBDA_GRID_POINTS: usize = 64;

/// Log-spaced multipliers whose distortions span roughly
/// `[1.02·D_min, 0.98·D_max]`; `D_max` is the independent-coupling cost.
/// When `D_min = 0` the low end is `0.02·D_max` instead.
pub fn default_lambda_grid(pmf: &[f64], cost: &CostTable) -> Result<Vec<f64>> {
    check_discrete(pmf, cost)?;
    let d_max = independent_cost(pmf, cost);
    let d_min = min_distortion_estimate(pmf, cost)?;
    if d_max - d_min <= 1e-12 {
        return Ok(vec![0.0]);
    }
    let lo_target = if d_min > 0.0 {
        (1.02 * d_min).min(d_min + 0.5 * (d_max - d_min))
    } else {
        0.02 * d_max
    };
    let hi_target = 0.98 * d_max;
    let lam_small = lambda_for_distortion(pmf, cost, hi_target)?.0;
    let lam_large = lambda_for_distortion(pmf, cost, lo_target)?.0;
    let (a, b) = (lam_small.ln(), lam_large.ln());
    let n = LAMBDA_GRID_POINTS;
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Expected cost of the product coupling `p ⊗ p`.
pub fn independent_cost(pmf: &[f64], cost: &CostTable) -> f64 {
    let m = pmf.len();
    (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| pmf[i] * pmf[j] * cost.get(i, j))
        .sum()
}

/// Smallest distortion reachable by couplings with both marginals `pmf`.
/// Exact (zero) when the diagonal of the cost vanishes on the support;
/// otherwise taken from the solver at the largest multiplier it handles.
fn min_distortion_estimate(pmf: &[f64], cost: &CostTable) -> Result<f64> {
    let diag: f64 = pmf
        .iter()
        .enumerate()
        .map(|(i, p)| p * cost.get(i, i))
        .sum();
    if diag == 0.0 {
        return Ok(0.0);
    }
    let scale = mean_positive_cost(pmf, cost);
    let mut lambda = 1.0 / scale;
    let mut best = independent_cost(pmf, cost);
    for _ in 0..40 {
        match dp_rdf_coupling(pmf, cost, lambda, SinkhornConfig::default()) {
            Ok(c) => {
                let d = c.expected_cost();
                let done = (best - d).abs() <= 1e-9 * best.max(1e-300);
                best = best.min(d);
                if done {
                    break;
                }
            }
            Err(_) => break,
        }
        lambda *= 2.0;
    }
    Ok(best)
}

fn mean_positive_cost(pmf: &[f64], cost: &CostTable) -> f64 {
    let m = pmf.len();
    let vals: Vec<f64> = (0..m * m)
        .map(|k| cost.get(k / m, k % m))
        .filter(|&c| c > 0.0)
        .collect();
    if vals.is_empty() {
        1.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Finds the multiplier whose solution has expected cost `target` by
/// bracketing and bisection; returns it with the solved coupling.
pub fn lambda_for_distortion(
    pmf: &[f64],
    cost: &CostTable,
    target: f64,
) -> Result<(f64, Coupling)> {
    check_discrete(pmf, cost)?;
    let cfg = SinkhornConfig::default();
    let at_zero = dp_rdf_coupling(pmf, cost, 0.0, cfg)?;
    if at_zero.expected_cost() <= target {
        return Ok((0.0, at_zero));
    }
    let mut lo = 0.0;
    let mut hi = 1.0 / mean_positive_cost(pmf, cost);
    let mut hi_coupling = loop {
        let c = dp_rdf_coupling(pmf, cost, hi, cfg).map_err(|_| Error::InfeasibleDistortion {
            requested: target,
            minimum: f64::NAN,
        })?;
        if c.expected_cost() <= target {
            break c;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InfeasibleDistortion {
                requested: target,
                minimum: c.expected_cost(),
            });
        }
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = dp_rdf_coupling(pmf, cost, mid, cfg)?;
        let d = c.expected_cost();
        if d <= target {
            hi = mid;
            hi_coupling = c;
        } else {
            lo = mid;
        }
        if (d - target).abs() <= 1e-13 * target.max(1.0) || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok((hi, hi_coupling))
}

/// Solver-based DP-RDF at a single distortion level.
pub fn discrete_dp_rdf_at(pmf: &[f64], cost: &CostTable, distortion: f64) -> Result<RdPoint> {
    let (_, c) = lambda_for_distortion(pmf, cost, distortion)?;
    Ok(RdPoint {
        rate: c.mutual_information().max(0.0),
        distortion,
    })
}

/// Largest alphabet the exhaustive search accepts.
pub const BRUTEFORCE_MAX_ALPHABET: usize = 4;

/// Minimum of `I(X; X̃)` over couplings with both marginals `pmf` and
/// expected cost at most `distortion`, by zooming grid search over the
/// `(m−1)²` free entries of the coupling. The objective is convex on the
/// polytope, so refining around the incumbent converges to the global
/// minimum.
pub fn discrete_dp_rdf_bruteforce(pmf: &[f64], cost: &CostTable, distortion: f64) -> Result<f64> {
    check_discrete(pmf, cost)?;
    let m = pmf.len();
    if m > BRUTEFORCE_MAX_ALPHABET {
        return Err(invalid(format!(
            "exhaustive search supports m <= {BRUTEFORCE_MAX_ALPHABET}, got {m}"
        )));
    }
    if m == 1 {
        return Ok(0.0);
    }
    let search = PolytopeSearch::new(pmf, cost);
    let (_, d_min) = search.minimize(|_, c| (0, c));
    if distortion < d_min - 1e-9 {
        return Err(Error::InfeasibleDistortion {
            requested: distortion,
            minimum: d_min,
        });
    }
    let limit = distortion.max(d_min);
    let (best, _) = search.minimize(|mi, c| {
        if c <= limit + 1e-12 {
            (0, mi)
        } else {
            (1, c - limit)
        }
    });
    Ok(best.max(0.0))
}

struct PolytopeSearch<'a> {
    pmf: &'a [f64],
    cost: &'a CostTable,
    m: usize,
    free: usize,
    upper: Vec<f64>,
    points_per_axis: usize,
}

impl<'a> PolytopeSearch<'a> {
    fn new(pmf: &'a [f64], cost: &'a CostTable) -> Self {
        let m = pmf.len();
        let k = m - 1;
        let free = k * k;
        let upper = (0..free).map(|t| pmf[t / k].min(pmf[t % k])).collect();
        let points_per_axis = match free {
            1 => 201,
            4 => 21,
            _ => 4,
        };
        Self {
            pmf,
            cost,
            m,
            free,
            upper,
            points_per_axis,
        }
    }

    /// Completes the free block into a full table; `None` if any entry is
    /// negative.
    fn complete(&self, x: &[f64], joint: &mut [f64]) -> bool {
        let m = self.m;
        let k = m - 1;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                joint[i * m + j] = x[i * k + j];
                row += x[i * k + j];
            }
            joint[i * m + k] = self.pmf[i] - row;
        }
        let mut last_row = 0.0;
        for j in 0..k {
            let col: f64 = (0..k).map(|i| x[i * k + j]).sum();
            joint[k * m + j] = self.pmf[j] - col;
            last_row += joint[k * m + j];
        }
        joint[k * m + k] = self.pmf[k] - last_row;
        for p in joint.iter_mut() {
            if *p < -1e-13 {
                return false;
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        true
    }

    /// Zooming grid search; `score(mi, cost)` is compared lexicographically.
    /// Returns `(mi, cost)` at the best point.
    fn minimize<F: Fn(f64, f64) -> (u8, f64)>(&self, score: F) -> (f64, f64) {
        let m = self.m;
        let g = self.points_per_axis;
        let mut center: Vec<f64> = self.upper.iter().map(|u| 0.5 * u).collect();
        let mut half: Vec<f64> = self.upper.iter().map(|u| 0.5 * u).collect();
        let mut joint = vec![0.0; m * m];
        let mut x = vec![0.0; self.free];
        // (score, mi, cost, free coordinates)
        type Best = ((u8, f64), f64, f64, Vec<f64>);
        let mut best: Option<Best> = None;
        let total = g.pow(self.free as u32);
        let shrink = (2.0 / (g as f64 - 1.0)).clamp(0.5, 0.75);
        for _level in 0..400 {
            let mut level_best = best.clone();
            for idx in 0..total {
                let mut r = idx;
                for d in 0..self.free {
                    let t = r % g;
                    r /= g;
                    let offset = -1.0 + 2.0 * t as f64 / (g as f64 - 1.0);
                    x[d] = (center[d] + half[d] * offset).clamp(0.0, self.upper[d]);
                }
                if !self.complete(&x, &mut joint) {
                    continue;
                }
                let mi = mutual_information(&joint, self.pmf, self.pmf, m);
                let c: f64 = joint
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * self.cost.get(k / m, k % m))
                    .sum();
                let s = score(mi, c);
                let better = match &level_best {
                    None => true,
                    Some((bs, ..)) => s.0 < bs.0 || (s.0 == bs.0 && s.1 < bs.1),
                };
                if better {
                    level_best = Some((s, mi, c, x.clone()));
                }
            }
            best = level_best;
            if let Some((_, _, _, bx)) = &best {
                center.clone_from(bx);
            }
            for h in half.iter_mut() {
                *h *= shrink;
            }
            if half.iter().all(|&h| h < 1e-12) {
                break;
            }
        }
        let (_, mi, c, _) = best.expect("the independent coupling is always feasible");
        (mi, c)
    }
}

/// True when the points, sorted by distortion, have non-increasing rate and
/// non-decreasing slopes, both up to `tol`.
pub fn is_nonincreasing_convex(points: &[RdPoint], tol: f64) -> bool {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
    pts.dedup_by(|a, b| (a.distortion - b.distortion).abs() < 1e-15);
    if pts.windows(2).any(|w| w[1].rate > w[0].rate + tol) {
        return false;
    }
    // convexity: every interior point lies on or below the chord of its neighbours
    pts.windows(3).all(|w| {
        let t = (w[1].distortion - w[0].distortion) / (w[2].distortion - w[0].distortion);
        let chord = w[0].rate + t * (w[2].rate - w[0].rate);
        w[1].rate <= chord + tol
    })
}

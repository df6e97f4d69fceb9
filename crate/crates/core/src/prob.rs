//! Source models and empirical statistics.
//!
//! A [`SourceModel`] is a scalar law, optionally replicated over `k`
//! independent axes. All continuous families expose pdf, cdf, survival
//! function, inverse cdf and closed-form differential entropy; the discrete
//! family lives on the integers `0..m` and supports the step cdf and the
//! infimum-rule inverse.

use std::collections::HashMap;
use std::f64::consts::{E, LN_2, PI, SQRT_2};
use std::hash::Hash;

use libm::erfc;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Clamp applied by [`SourceModel::icdf`] to keep quantiles finite.
pub const ICDF_EPS: f64 = 1e-12;

/// Tolerance on the total mass of a probability table.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// KS critical value coefficient at α = 0.05 (asymptotic).
pub const KS_COEFF_05: f64 = 1.36;

/// Smallest sample the asymptotic KS threshold is used for.
pub const KS_MIN_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
    Laplace { location: f64, scale: f64 },
    DiscretePmf { probs: Vec<f64> },
}

/// A scalar law replicated independently over `dim` axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    family: Family,
    dim: usize,
}

impl SourceModel {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        match &family {
            Family::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance.is_finite() && *variance > 0.0) {
                    return Err(invalid(format!(
                        "gaussian needs finite mean and variance > 0, got ({mean}, {variance})"
                    )));
                }
            }
            Family::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && high > low) {
                    return Err(invalid(format!(
                        "uniform needs finite low < high, got [{low}, {high}]"
                    )));
                }
            }
            Family::Laplace { location, scale } => {
                if !location.is_finite() || !(scale.is_finite() && *scale > 0.0) {
                    return Err(invalid(format!("laplace needs scale > 0, got {scale}")));
                }
            }
            Family::DiscretePmf { probs } => {
                if probs.is_empty() {
                    return Err(invalid("empty probability table"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(invalid(
                        "probability table has a negative or non-finite entry",
                    ));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > PMF_SUM_TOL {
                    return Err(invalid(format!("probability table sums to {s}, not 1")));
                }
            }
        }
        Ok(Self { family, dim })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Family::Gaussian { mean, variance }, 1)
    }

    pub fn standard_gaussian() -> Self {
        Self::gaussian(0.0, 1.0).expect("valid parameters")
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Self::new(Family::Uniform { low, high }, 1)
    }

    pub fn laplace(location: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Laplace { location, scale }, 1)
    }

    pub fn pmf(probs: Vec<f64>) -> Result<Self> {
        Self::new(Family::DiscretePmf { probs }, 1)
    }

    /// Same marginal law over `dim` independent axes.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.family, Family::DiscretePmf { .. })
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, Family::Gaussian { .. })
    }

    /// Short comma-free label, e.g. `gaussian(mean=0;var=1)`, safe as a CSV
    /// field.
    pub fn label(&self) -> String {
        let base = match &self.family {
            Family::Gaussian { mean, variance } => format!("gaussian(mean={mean};var={variance})"),
            Family::Uniform { low, high } => format!("uniform(low={low};high={high})"),
            Family::Laplace { location, scale } => format!("laplace(loc={location};scale={scale})"),
            Family::DiscretePmf { probs } => format!(
                "pmf({})",
                probs
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        };
        if self.dim > 1 {
            format!("{base}^{}", self.dim)
        } else {
            base
        }
    }

    /// Density of one axis. For the discrete family this is the mass at `x`
    /// when `x` is a support integer, and 0 elsewhere.
    pub fn pdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, variance } => {
                let z = (x - mean) / variance.sqrt();
                (-0.5 * z * z).exp() / (2.0 * PI * variance).sqrt()
            }
            Family::Uniform { low, high } => {
                if x >= *low && x <= *high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            Family::Laplace { location, scale } => {
                (-(x - location).abs() / scale).exp() / (2.0 * scale)
            }
            Family::DiscretePmf { probs } => {
                if x.fract() == 0.0 && x >= 0.0 && (x as usize) < probs.len() {
                    probs[x as usize]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, variance } => std_normal_cdf((x - mean) / variance.sqrt()),
            Family::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Family::Laplace { location, scale } => {
                let z = (x - location) / scale;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Family::DiscretePmf { probs } => {
                if x < 0.0 {
                    return 0.0;
                }
                let last = (x.floor() as usize).min(probs.len() - 1);
                probs[..=last].iter().sum::<f64>().min(1.0)
            }
        }
    }

    /// Survival function 1 − F(x), accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, variance } => std_normal_cdf(-(x - mean) / variance.sqrt()),
            Family::Uniform { low, high } => ((high - x) / (high - low)).clamp(0.0, 1.0),
            Family::Laplace { location, scale } => {
                let z = (x - location) / scale;
                if z > 0.0 {
                    0.5 * (-z).exp()
                } else {
                    1.0 - 0.5 * z.exp()
                }
            }
            Family::DiscretePmf { .. } => 1.0 - self.cdf(x),
        }
    }

    /// Inverse cdf, `inf { x : F(x) >= u }`, with `u` clamped to
    /// `[ICDF_EPS, 1 - ICDF_EPS]`.
    pub fn icdf(&self, u: f64) -> f64 {
        let u = if u.is_nan() {
            0.5
        } else {
            u.clamp(ICDF_EPS, 1.0 - ICDF_EPS)
        };
        self.quantile_lower(u)
    }

    /// Quantile from a lower-tail probability `p ∈ (0, 1)` without clamping.
    fn quantile_lower(&self, p: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, variance } => mean + variance.sqrt() * std_normal_icdf(p),
            Family::Uniform { low, high } => low + p * (high - low),
            Family::Laplace { location, scale } => {
                if p < 0.5 {
                    location + scale * (2.0 * p).ln()
                } else {
                    location - scale * (2.0 * (1.0 - p)).ln()
                }
            }
            Family::DiscretePmf { probs } => {
                let mut acc = 0.0;
                for (i, &pi) in probs.iter().enumerate() {
                    acc += pi;
                    // absorb rounding in the running sum
                    if acc >= p - 1e-15 && pi > 0.0 {
                        return i as f64;
                    }
                }
                (probs.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)) as f64
            }
        }
    }

    /// Quantile from an upper-tail probability `q ∈ (0, 1)`: the `x` with
    /// `sf(x) = q`, accurate when `q` is tiny.
    fn quantile_upper(&self, q: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, variance } => mean - variance.sqrt() * std_normal_icdf(q),
            Family::Uniform { low, high } => high - q * (high - low),
            Family::Laplace { location, scale } => {
                if q < 0.5 {
                    location - scale * (2.0 * q).ln()
                } else {
                    location + scale * (2.0 * (1.0 - q)).ln()
                }
            }
            Family::DiscretePmf { .. } => self.quantile_lower(1.0 - q),
        }
    }

    /// Inverts a probability given both of its tails, `lower ≈ p` and
    /// `upper ≈ 1 − p`, each computed without cancellation. The smaller tail
    /// selects the branch, so quantiles stay accurate far beyond
    /// [`ICDF_EPS`]; tails are floored at the smallest normal float.
    pub fn icdf_two_sided(&self, lower: f64, upper: f64) -> f64 {
        if lower <= upper {
            self.quantile_lower(lower.max(f64::MIN_POSITIVE))
        } else {
            self.quantile_upper(upper.max(f64::MIN_POSITIVE))
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Gaussian { mean, .. } => *mean,
            Family::Uniform { low, high } => 0.5 * (low + high),
            Family::Laplace { location, .. } => *location,
            Family::DiscretePmf { probs } => {
                probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.family {
            Family::Gaussian { variance, .. } => *variance,
            Family::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Family::Laplace { scale, .. } => 2.0 * scale * scale,
            Family::DiscretePmf { probs } => {
                let m = self.mean();
                probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i as f64 - m).powi(2) * p)
                    .sum()
            }
        }
    }

    pub fn skewness(&self) -> f64 {
        match &self.family {
            Family::DiscretePmf { probs } => {
                let m = self.mean();
                let s = self.variance().sqrt();
                if s == 0.0 {
                    return 0.0;
                }
                probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ((i as f64 - m) / s).powi(3) * p)
                    .sum()
            }
            _ => 0.0,
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile_lower(0.5)
    }

    /// Differential entropy of one axis in nats.
    pub fn diff_entropy(&self) -> Result<f64> {
        match &self.family {
            Family::Gaussian { variance, .. } => Ok(0.5 * (2.0 * PI * E * variance).ln()),
            Family::Uniform { low, high } => Ok((high - low).ln()),
            Family::Laplace { scale, .. } => Ok(1.0 + (2.0 * scale).ln()),
            Family::DiscretePmf { .. } => Err(Error::Unsupported {
                op: "diff_entropy",
                what: "a discrete pmf (use plugin_entropy)".into(),
            }),
        }
    }

    /// Points where the cdf or pdf is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            Family::Gaussian { .. } => Vec::new(),
            Family::Uniform { low, high } => vec![*low, *high],
            Family::Laplace { location, .. } => vec![*location],
            Family::DiscretePmf { probs } => (0..probs.len()).map(|i| i as f64).collect(),
        }
    }

    /// Interval outside which the density is negligible (< 1e-30 relative).
    pub fn effective_support(&self) -> (f64, f64) {
        match &self.family {
            Family::Gaussian { mean, variance } => {
                let s = variance.sqrt();
                (mean - 12.0 * s, mean + 12.0 * s)
            }
            Family::Uniform { low, high } => (*low, *high),
            Family::Laplace { location, scale } => {
                (location - 70.0 * scale, location + 70.0 * scale)
            }
            Family::DiscretePmf { probs } => (0.0, (probs.len() - 1) as f64),
        }
    }

    /// One scalar draw by inverse transform sampling.
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng::open01(rng);
        if self.is_continuous() {
            self.icdf_two_sided(u, 1.0 - u)
        } else {
            self.icdf(u)
        }
    }

    /// Fills `out` with one independent draw per axis.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.sample_scalar(rng);
        }
    }

    /// `n` draws of the full `dim`-vector. Vector `j` uses stream `j` of the
    /// seed, so any prefix or sub-range is reproducible on its own.
    pub fn sample(&self, seed: u64, n: usize) -> Result<EmpiricalSample> {
        if n == 0 {
            return Err(Error::SampleTooSmall { needed: 1, got: 0 });
        }
        let k = self.dim;
        let mut values = vec![0.0; n * k];
        for (j, chunk) in values.chunks_mut(k).enumerate() {
            let mut r = rng::stream(seed, j as u64);
            self.sample_into(&mut r, chunk);
        }
        EmpiricalSample::new(values, k, seed)
    }
}

/// Realizations of a `dim`-vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    dim: usize,
    seed: u64,
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if values.is_empty() {
            return Err(Error::SampleTooSmall { needed: 1, got: 0 });
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len() % dim,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample contains non-finite values"));
        }
        Ok(Self { values, dim, seed })
    }

    pub fn from_scalars(values: Vec<f64>, seed: u64) -> Result<Self> {
        Self::new(values, 1, seed)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn axis(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }
}

/// Outcome of a one-sample Kolmogorov–Smirnov test at α = 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub threshold: f64,
    pub n: usize,
    pub pass: bool,
}

/// KS test of a scalar sample against a continuous model.
pub fn ks_statistic(sample: &EmpiricalSample, model: &SourceModel) -> Result<KsResult> {
    if sample.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: sample.dim(),
        });
    }
    if !model.is_continuous() {
        return Err(Error::Unsupported {
            op: "ks_statistic",
            what: "a discrete model".into(),
        });
    }
    ks_test(sample.values(), |x| model.cdf(x))
}

/// KS test of raw values against an arbitrary continuous cdf.
pub fn ks_test<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<KsResult> {
    let n = values.len();
    if n < KS_MIN_N {
        return Err(Error::SampleTooSmall {
            needed: KS_MIN_N,
            got: n,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted.iter().enumerate().fold(0.0_f64, |acc, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / nf - f;
        let below = f - i as f64 / nf;
        acc.max(above).max(below)
    });
    let threshold = KS_COEFF_05 / nf.sqrt();
    Ok(KsResult {
        statistic,
        threshold,
        n,
        pass: statistic < threshold,
    })
}

/// Plug-in entropy in nats of a histogram, optionally with the Miller–Madow
/// bias correction `(K − 1) / 2n` where `K` counts occupied bins.
pub fn plugin_entropy(counts: &[u64], miller_madow: bool) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let n = total as f64;
    let mut h = 0.0;
    let mut occupied = 0usize;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        h -= p * p.ln();
        occupied += 1;
    }
    if miller_madow {
        h += (occupied as f64 - 1.0) / (2.0 * n);
    }
    Ok(h.max(0.0))
}

/// Plug-in entropy of the empirical distribution of arbitrary symbols.
pub fn symbol_entropy<T: Eq + Hash, I: IntoIterator<Item = T>>(
    symbols: I,
    miller_madow: bool,
) -> Result<f64> {
    let mut hist: HashMap<T, u64> = HashMap::new();
    for s in symbols {
        *hist.entry(s).or_insert(0) += 1;
    }
    // sorted so the floating-point sum does not depend on hash order
    let mut counts: Vec<u64> = hist.into_values().collect();
    counts.sort_unstable();
    plugin_entropy(&counts, miller_madow)
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Sample mean, (population) variance and skewness.
pub fn moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(a, b), &x| {
        let d = x - mean;
        (a + d * d, b + d * d * d)
    });
    let var = m2 / n;
    let skew = if var > 0.0 {
        (m3 / n) / var.powf(1.5)
    } else {
        0.0
    };
    (mean, var, skew)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Standard normal cdf.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16 over (0, 1).
#[allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)]
pub fn std_normal_icdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn continuous_models() -> Vec<SourceModel> {
        vec![
            SourceModel::standard_gaussian(),
            SourceModel::gaussian(1.5, 4.0).unwrap(),
            SourceModel::uniform(0.0, 1.0).unwrap(),
            SourceModel::uniform(2.0, 4.0).unwrap(),
            SourceModel::laplace(0.0, 1.0).unwrap(),
            SourceModel::laplace(-1.0, 0.3).unwrap(),
        ]
    }

    #[test]
    fn gaussian_cdf_examples() {
        let g = SourceModel::standard_gaussian();
        assert_eq!(g.cdf(0.0), 0.5);
        assert_abs_diff_eq!(g.cdf(1.0), 0.841345, epsilon = 1e-6);
        // oracle: numeric integration of the pdf
        let integral = 0.5 + quad::gl64().integrate(0.0, 1.0, |x| g.pdf(x));
        assert_abs_diff_eq!(g.cdf(1.0), integral, epsilon = 1e-12);
        assert_eq!(SourceModel::uniform(0.0, 1.0).unwrap().cdf(0.3), 0.3);
    }

    #[test]
    fn gaussian_cdf_matches_quadrature_on_grid() {
        let g = SourceModel::gaussian(0.3, 2.0).unwrap();
        for i in 0..41 {
            let x = -6.0 + 0.3 * i as f64;
            let oracle =
                quad::integrate_checked(0.3 - 20.0, x, 16, &[], 1e-13, |t| g.pdf(t)).unwrap();
            assert_abs_diff_eq!(g.cdf(x), oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn icdf_examples() {
        let g = SourceModel::standard_gaussian();
        assert_eq!(g.icdf(0.5), 0.0);
        assert_abs_diff_eq!(g.icdf(0.841345), 1.0, epsilon = 1e-5);
        assert_eq!(SourceModel::uniform(2.0, 4.0).unwrap().icdf(0.25), 2.5);
        assert!(g.icdf(0.0).is_finite());
        assert!(g.icdf(1.0).is_finite());
    }

    #[test]
    fn icdf_inverts_cdf_on_grid() {
        for m in continuous_models() {
            let lo = m.icdf(1e-6);
            let hi = m.icdf(1.0 - 1e-6);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let x = lo + (hi - lo) * i as f64 / 999.0;
                let f = m.cdf(x);
                assert!(f >= prev, "{} cdf not monotone at {x}", m.label());
                prev = f;
                assert_abs_diff_eq!(m.icdf(f), x, epsilon = 1e-8);
            }
            for i in 1..1000 {
                let u = i as f64 / 1000.0;
                assert_abs_diff_eq!(m.cdf(m.icdf(u)), u, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn two_sided_inverse_reaches_far_tails() {
        let g = SourceModel::standard_gaussian();
        let x = 9.0;
        assert_abs_diff_eq!(g.icdf_two_sided(g.cdf(x), g.sf(x)), x, epsilon = 1e-9);
        assert_abs_diff_eq!(g.icdf_two_sided(g.cdf(-x), g.sf(-x)), -x, epsilon = 1e-9);
        let l = SourceModel::laplace(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            l.icdf_two_sided(l.cdf(40.0), l.sf(40.0)),
            40.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn discrete_step_cdf_and_infimum_rule() {
        let m = SourceModel::pmf(vec![0.25, 0.0, 0.75]).unwrap();
        assert_eq!(m.cdf(-0.1), 0.0);
        assert_eq!(m.cdf(0.0), 0.25);
        assert_eq!(m.cdf(1.5), 0.25);
        assert_eq!(m.cdf(2.0), 1.0);
        assert_eq!(m.icdf(0.25), 0.0);
        assert_eq!(m.icdf(0.26), 2.0);
        assert_eq!(m.icdf(0.1), 0.0);
        assert!(m.diff_entropy().is_err());
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(SourceModel::gaussian(0.0, 0.0).is_err());
        assert!(SourceModel::gaussian(0.0, -1.0).is_err());
        assert!(SourceModel::uniform(1.0, 1.0).is_err());
        assert!(SourceModel::laplace(0.0, 0.0).is_err());
        assert!(SourceModel::pmf(vec![0.5, 0.6]).is_err());
        assert!(SourceModel::pmf(vec![1.2, -0.2]).is_err());
        assert!(SourceModel::pmf(vec![0.5, 0.5 + 1e-13]).is_ok());
        assert!(SourceModel::standard_gaussian().with_dim(0).is_err());
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let g = SourceModel::standard_gaussian();
        let s = g.sample(11, 100_000).unwrap();
        let (mean, var, _) = moments(s.values());
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
        assert_eq!(s, g.sample(11, 100_000).unwrap());
        assert_ne!(s.values()[..10], g.sample(12, 10).unwrap().values()[..]);
    }

    #[test]
    fn sample_rows_use_indexed_streams() {
        let g = SourceModel::standard_gaussian().with_dim(3).unwrap();
        let long = g.sample(5, 50).unwrap();
        let short = g.sample(5, 10).unwrap();
        assert_eq!(&long.values()[..30], short.values());
        assert_eq!(long.dim(), 3);
        assert_eq!(long.len(), 50);
    }

    #[test]
    fn ks_pass_rate_is_near_nominal() {
        let g = SourceModel::standard_gaussian();
        let trials = 200;
        let passes = (0..trials)
            .filter(|&t| {
                ks_statistic(&g.sample(1000 + t, 10_000).unwrap(), &g)
                    .unwrap()
                    .pass
            })
            .count();
        let rate = passes as f64 / trials as f64;
        assert!((0.90..=0.995).contains(&rate), "pass rate {rate}");
    }

    #[test]
    fn ks_detects_shifted_model() {
        let s = SourceModel::standard_gaussian().sample(3, 10_000).unwrap();
        let r = ks_statistic(&s, &SourceModel::gaussian(3.0, 1.0).unwrap()).unwrap();
        assert!(!r.pass);
        // sup |Φ(x) − Φ(x − 3)| = 2Φ(1.5) − 1
        assert_abs_diff_eq!(r.statistic, 2.0 * std_normal_cdf(1.5) - 1.0, epsilon = 0.02);
    }

    #[test]
    fn ks_refuses_small_samples() {
        let s = SourceModel::standard_gaussian().sample(3, 10).unwrap();
        assert!(matches!(
            ks_statistic(&s, &SourceModel::standard_gaussian()),
            Err(Error::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn diff_entropy_closed_forms() {
        assert_abs_diff_eq!(
            SourceModel::standard_gaussian().diff_entropy().unwrap(),
            1.418939,
            epsilon = 1e-6
        );
        assert_eq!(
            SourceModel::uniform(0.0, 1.0)
                .unwrap()
                .diff_entropy()
                .unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            SourceModel::gaussian(0.0, 4.0)
                .unwrap()
                .diff_entropy()
                .unwrap(),
            1.418939 + LN_2,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            SourceModel::laplace(0.0, 1.0)
                .unwrap()
                .diff_entropy()
                .unwrap(),
            1.0 + LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn diff_entropy_matches_quadrature() {
        for m in continuous_models() {
            let (lo, hi) = m.effective_support();
            let h = quad::gl64().integrate_composite(lo, hi, 64, &m.breakpoints(), |x| {
                let f = m.pdf(x);
                if f > 0.0 {
                    -f * f.ln()
                } else {
                    0.0
                }
            });
            assert_abs_diff_eq!(m.diff_entropy().unwrap(), h, epsilon = 1e-9);
        }
    }

    #[test]
    fn entropy_scaling_identity() {
        for alpha in [2.0_f64, 10.0] {
            let a = SourceModel::gaussian(0.0, 3.0)
                .unwrap()
                .diff_entropy()
                .unwrap();
            let b = SourceModel::gaussian(0.0, 3.0 / (alpha * alpha))
                .unwrap()
                .diff_entropy()
                .unwrap();
            assert_abs_diff_eq!(a - b, alpha.ln(), epsilon = 1e-9);
        }
    }

    #[test]
    fn plugin_entropy_examples() {
        assert_abs_diff_eq!(
            plugin_entropy(&[8, 8], false).unwrap(),
            LN_2,
            epsilon = 1e-15
        );
        assert_eq!(plugin_entropy(&[16], false).unwrap(), 0.0);
        assert_abs_diff_eq!(
            plugin_entropy(&[1, 1, 1, 1], false).unwrap(),
            4f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            plugin_entropy(&[8, 8], true).unwrap(),
            LN_2 + 1.0 / 32.0,
            epsilon = 1e-15
        );
        assert!(plugin_entropy(&[0, 0], false).is_err());
        assert_abs_diff_eq!(
            symbol_entropy([1, 2, 1, 2], false).unwrap(),
            LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert_abs_diff_eq!(spearman(&x, &y), 1.0, epsilon = 1e-12);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_and_bounded(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            for m in continuous_models() {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (flo, fhi) = (m.cdf(lo), m.cdf(hi));
                prop_assert!((0.0..=1.0).contains(&flo));
                prop_assert!(flo <= fhi);
                prop_assert!((m.cdf(lo) + m.sf(lo) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn normal_quantile_round_trip(p in 1e-300f64..0.999_999) {
            let z = std_normal_icdf(p);
            let back = std_normal_cdf(z);
            prop_assert!(((back - p) / p).abs() < 1e-12 || (back - p).abs() < 1e-15);
        }
    }
}

//! Monte-Carlo evaluation of schemes, rate–distortion sweeps and the
//! comparison against the DP-RDF.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    discrete_dp_rdf_at, dp_rdf_gaussian, dp_rdf_sandwich_gaussian, independent_cost, rdf_gaussian,
    slb_mse, CostTable,
};
use crate::ecdq::{ecdq_rate_estimates, DEFAULT_DITHERS, RATE_MIN_N};
use crate::error::{invalid, Error, Result};
use crate::prob::{ks_test, moments, nats_to_bits, symbol_entropy, KsResult, SourceModel};
use crate::rng::{self, derive_seed, domain};
use crate::schemes::{DpqScheme, Message, SchemeKind};

/// Batches used for Monte-Carlo standard errors.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    /// No indices are sent.
    Zero,
    /// Plug-in entropy of the scalar cell indices.
    CellEntropy,
    /// Index entropy given the dither, averaged over fixed dithers.
    DitherConditional,
    /// Mutual information of the analog baseline, in closed form.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentErrors {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub param: String,
    pub source: String,
    pub n: usize,
    pub dim: usize,
    /// Seed of the source stream.
    pub seed: u64,
    /// Seed of the scheme's shared and decoder randomness.
    pub scheme_seed: u64,
    pub rate_nats: f64,
    pub rate_se: f64,
    pub rate_method: RateMethod,
    /// Dither-averaged index entropy, for the transform scheme.
    pub rate_marginal_nats: Option<f64>,
    /// Mean squared error per dimension.
    pub mse: f64,
    pub mse_se: f64,
    pub ks: Vec<KsResult>,
    pub ks_max: f64,
    pub ks_pass: bool,
    /// Output minus model moments, per axis.
    pub moment_errors: Vec<MomentErrors>,
    /// MSE of the ECDQ reconstruction before the transform.
    pub embedded_ecdq_mse: Option<f64>,
    /// MSE of the resampling scheme's midpoint base quantizer.
    pub base_mse: Option<f64>,
    pub wall_time_s: f64,
}

impl EvalReport {
    /// Equality of everything except the wall time.
    pub fn same_statistics(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time_s = other.wall_time_s;
        &a == other
    }

    pub fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.is_none_or(f64::is_finite);
        [
            self.rate_nats,
            self.rate_se,
            self.mse,
            self.mse_se,
            self.ks_max,
        ]
        .iter()
        .all(|v| v.is_finite())
            && opt(self.rate_marginal_nats)
            && opt(self.embedded_ecdq_mse)
            && opt(self.base_mse)
            && self
                .moment_errors
                .iter()
                .all(|m| m.mean.is_finite() && m.variance.is_finite() && m.skewness.is_finite())
    }
}

/// Per-block results kept for the statistics.
struct BlockOutcome {
    sq_err: f64,
    output: Vec<f64>,
    reference_sq_err: Option<f64>,
    cells: Option<Vec<i64>>,
}

fn run_block(scheme: &DpqScheme, source_seed: u64, block: u64) -> Result<BlockOutcome> {
    let k = scheme.block_dim();
    let mut x = vec![0.0; k];
    scheme
        .source()
        .sample_into(&mut rng::stream(source_seed, block), &mut x);
    let msg = scheme.encode(block, &x)?;
    let y = scheme.decode(block, &msg)?;
    let sq = |r: &[f64]| r.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let (reference_sq_err, cells) = match &msg {
        Message::Lattice(idx) => (Some(sq(&scheme.ecdq_reconstruction(block, idx)?)), None),
        Message::Cells(c) => (
            Some(sq(&scheme.base_reconstruction(&msg)?)),
            Some(c.clone()),
        ),
        _ => (None, None),
    };
    Ok(BlockOutcome {
        sq_err: sq(&y),
        output: y,
        reference_sq_err,
        cells,
    })
}

/// Mean and batch standard error of per-block values.
fn batch_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = n / BATCHES;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let batch_means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let end = if b + 1 == BATCHES { n } else { (b + 1) * size };
            let chunk = &values[b * size..end];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let m = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (mean, (var / BATCHES as f64).sqrt())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Monte-Carlo evaluation over `n` blocks. Block `j` draws its source
/// vector from stream `j` of the source seed derived from `seed`, so the
/// result does not depend on `workers` (0 = all cores).
pub fn evaluate(scheme: &DpqScheme, n: usize, seed: u64, workers: usize) -> Result<EvalReport> {
    if n < RATE_MIN_N {
        return Err(Error::SampleTooSmall {
            needed: RATE_MIN_N,
            got: n,
        });
    }
    let start = Instant::now();
    let source_seed = derive_seed(seed, domain::SOURCE);
    let pool = thread_pool(workers)?;
    let blocks: Vec<BlockOutcome> = pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|b| run_block(scheme, source_seed, b))
            .collect::<Result<_>>()
    })?;

    let k = scheme.block_dim();
    let kf = k as f64;
    let per_dim: Vec<f64> = blocks.iter().map(|b| b.sq_err / kf).collect();
    let (mse, mse_se) = batch_mean_se(&per_dim);
    let reference = if blocks[0].reference_sq_err.is_some() {
        let v: Vec<f64> = blocks
            .iter()
            .map(|b| b.reference_sq_err.unwrap_or(f64::NAN) / kf)
            .collect();
        Some(v.iter().sum::<f64>() / n as f64)
    } else {
        None
    };

    let model = scheme.source();
    let mut ks = Vec::with_capacity(k);
    let mut moment_errors = Vec::with_capacity(k);
    for axis in 0..k {
        let vals: Vec<f64> = blocks.iter().map(|b| b.output[axis]).collect();
        ks.push(if model.is_continuous() {
            ks_test(&vals, |v| model.cdf(v))?
        } else {
            ks_discrete(&vals, model)
        });
        let (m, v, s) = moments(&vals);
        moment_errors.push(MomentErrors {
            mean: m - model.mean(),
            variance: v - model.variance(),
            skewness: s - model.skewness(),
        });
    }
    let ks_max = ks.iter().map(|r| r.statistic).fold(0.0, f64::max);
    let ks_pass = ks.iter().all(|r| r.pass);

    let kind = scheme.kind();
    let (rate_nats, rate_se, rate_method, rate_marginal_nats) = match kind {
        SchemeKind::Simple => (0.0, 0.0, RateMethod::Zero, None),
        SchemeKind::AwgnOracle { .. } => (
            scheme
                .analytic_rate()
                .expect("analog baseline has a closed-form rate"),
            0.0,
            RateMethod::Analytic,
            None,
        ),
        SchemeKind::Resample { .. } => {
            let (h, se) = cell_entropy(&blocks, k)?;
            (h, se, RateMethod::CellEntropy, None)
        }
        SchemeKind::Transform { .. } => {
            let lat = scheme.lattice().expect("transform scheme has a lattice");
            let est = pool.install(|| ecdq_rate_estimates(lat, model, n, DEFAULT_DITHERS, seed))?;
            (
                est.conditional,
                est.conditional_se,
                RateMethod::DitherConditional,
                Some(est.marginal),
            )
        }
    };
    let (embedded_ecdq_mse, base_mse) = match kind {
        SchemeKind::Transform { .. } => (reference, None),
        SchemeKind::Resample { .. } => (None, reference),
        _ => (None, None),
    };

    Ok(EvalReport {
        scheme: kind.name().into(),
        param: kind.param(),
        source: model.label(),
        n,
        dim: k,
        seed,
        scheme_seed: scheme.seed(),
        rate_nats,
        rate_se,
        rate_method,
        rate_marginal_nats,
        mse,
        mse_se,
        ks,
        ks_max,
        ks_pass,
        moment_errors,
        embedded_ecdq_mse,
        base_mse,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// KS distance between the empirical and model cdfs at the support points
/// of a pmf source; the continuous threshold is conservative here.
fn ks_discrete(values: &[f64], model: &SourceModel) -> KsResult {
    let (_, top) = model.effective_support();
    let mut counts = vec![0usize; top as usize + 1];
    for &v in values {
        counts[(v.max(0.0) as usize).min(top as usize)] += 1;
    }
    let n = values.len();
    let mut acc = 0usize;
    let mut statistic = 0.0f64;
    for (j, c) in counts.iter().enumerate() {
        acc += c;
        statistic = statistic.max((acc as f64 / n as f64 - model.cdf(j as f64)).abs());
    }
    let threshold = crate::prob::KS_COEFF_05 / (n as f64).sqrt();
    KsResult {
        statistic,
        threshold,
        n,
        pass: statistic < threshold,
    }
}

/// Per-dimension plug-in entropy of the cell indices, with a batch SE.
fn cell_entropy(blocks: &[BlockOutcome], k: usize) -> Result<(f64, f64)> {
    let entropy_of = |range: &[BlockOutcome]| -> Result<f64> {
        let mut total = 0.0;
        for axis in 0..k {
            total += symbol_entropy(
                range.iter().map(|b| b.cells.as_ref().map(|c| c[axis])),
                false,
            )?;
        }
        Ok(total / k as f64)
    };
    let h = entropy_of(blocks)?;
    let size = blocks.len() / BATCHES;
    let batch: Vec<f64> = (0..BATCHES)
        .map(|b| entropy_of(&blocks[b * size..(b + 1) * size]))
        .collect::<Result<_>>()?;
    let m = batch.iter().sum::<f64>() / BATCHES as f64;
    let var = batch.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    // each batch has 1/BATCHES of the data, so its spread is √BATCHES too wide
    Ok((h, (var / BATCHES as f64).sqrt()))
}

/// Reports of a sweep, plus the failure that stopped it early, if any.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<EvalReport>,
    pub failure: Option<(usize, Error)>,
}

/// Evaluates every scheme in order. Stops at the first failure and keeps the
/// reports gathered so far.
pub fn rd_sweep(
    schemes: &[DpqScheme],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<SweepOutcome> {
    if schemes.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    let mut reports = Vec::with_capacity(schemes.len());
    for (i, s) in schemes.iter().enumerate() {
        match evaluate(s, n, seed, workers) {
            Ok(r) => reports.push(r),
            Err(e) => {
                return Ok(SweepOutcome {
                    reports,
                    failure: Some((i, e)),
                })
            }
        }
    }
    Ok(SweepOutcome {
        reports,
        failure: None,
    })
}

/// DP-RDF against which measured points are checked.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundCurve {
    Gaussian { variance: f64 },
    Discrete { pmf: Vec<f64>, cost: CostTable },
}

impl BoundCurve {
    /// Closed form for Gaussian sources, the coupling solver with squared
    /// error for pmf sources.
    pub fn for_source(model: &SourceModel) -> Result<Self> {
        match model.family() {
            crate::prob::Family::Gaussian { variance, .. } => Ok(Self::Gaussian {
                variance: *variance,
            }),
            crate::prob::Family::DiscretePmf { probs } => Ok(Self::Discrete {
                pmf: probs.clone(),
                cost: CostTable::squared(probs.len()),
            }),
            _ => Err(Error::Unsupported {
                op: "compare_to_bound",
                what: format!("source {}", model.label()),
            }),
        }
    }

    pub fn rate(&self, distortion: f64) -> Result<f64> {
        if !(distortion.is_finite() && distortion >= 0.0) {
            return Err(invalid(format!(
                "distortion must be non-negative, got {distortion}"
            )));
        }
        match self {
            Self::Gaussian { variance } => Ok(dp_rdf_gaussian(*variance, distortion)),
            Self::Discrete { pmf, cost } => {
                if distortion >= independent_cost(pmf, cost) {
                    return Ok(0.0);
                }
                Ok(discrete_dp_rdf_at(pmf, cost, distortion)?.rate)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub above_bound: bool,
    /// `rate − bound(mse)`.
    pub margin_nats: f64,
    pub bound_nats: f64,
    /// Uncertainty used for the decision.
    pub se_nats: f64,
}

/// `above_bound` iff `margin ≥ −3·SE`. The SE combines the rate's SE with
/// the bound's drop across three distortion SEs (divided by three); this
/// stays meaningful where the bound is flat, e.g. at `D = 2σ²`.
pub fn compare_to_bound(report: &EvalReport, bound: &BoundCurve) -> Result<Verdict> {
    let bound_nats = bound.rate(report.mse)?;
    let shifted = bound.rate(report.mse + 3.0 * report.mse_se)?;
    let se_nats = report.rate_se + (bound_nats - shifted).max(0.0) / 3.0;
    let margin_nats = report.rate_nats - bound_nats;
    Ok(Verdict {
        above_bound: margin_nats >= -3.0 * se_nats,
        margin_nats,
        bound_nats,
        se_nats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Self::Nats => nats,
            Self::Bits => nats_to_bits(nats),
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Self::Nats => "nats",
            Self::Bits => "bits",
        }
    }
}

/// One row of a bound curve, rates in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub distortion: f64,
    pub dp_rdf: f64,
    pub source: String,
    pub rdf: Option<f64>,
    pub slb: Option<f64>,
    pub sandwich_lower: Option<f64>,
    pub sandwich_upper: Option<f64>,
}

/// DP-RDF, RDF, SLB and the sandwich over `grid` for `N(μ, σ²)`.
pub fn gaussian_curve(model: &SourceModel, grid: &[f64]) -> Result<Vec<CurveRow>> {
    let variance = match model.family() {
        crate::prob::Family::Gaussian { variance, .. } => *variance,
        _ => {
            return Err(Error::Unsupported {
                op: "gaussian_curve",
                what: format!("source {}", model.label()),
            })
        }
    };
    grid.iter()
        .map(|&d| {
            if !(d.is_finite() && d > 0.0) {
                return Err(invalid(format!(
                    "distortion grid values must be positive, got {d}"
                )));
            }
            let sandwich = (d < 2.0 * variance)
                .then(|| dp_rdf_sandwich_gaussian(variance, d))
                .transpose()?;
            Ok(CurveRow {
                distortion: d,
                dp_rdf: dp_rdf_gaussian(variance, d),
                source: model.label(),
                rdf: Some(rdf_gaussian(variance, d)),
                slb: Some(slb_mse(model, d)?),
                sandwich_lower: sandwich.map(|s| s.lower),
                sandwich_upper: sandwich.map(|s| s.upper),
            })
        })
        .collect()
}

/// Writes `# key=value` lines.
pub fn write_comments<W: Write + ?Sized>(
    w: &mut W,
    comments: &[(String, String)],
) -> std::io::Result<()> {
    for (k, v) in comments {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn cell(v: Option<f64>, units: Units) -> String {
    v.map(|x| units.convert(x).to_string()).unwrap_or_default()
}

/// Curve CSV: `D,rate_nats,rate_bits,source` followed by the reference
/// columns in the chosen units.
pub fn write_curve_csv<W: Write + ?Sized>(
    w: &mut W,
    rows: &[CurveRow],
    units: Units,
) -> std::io::Result<()> {
    let u = units.suffix();
    writeln!(
        w,
        "D,rate_nats,rate_bits,source,rdf_{u},slb_{u},sandwich_lower_{u},sandwich_upper_{u}"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.distortion,
            r.dp_rdf,
            nats_to_bits(r.dp_rdf),
            r.source,
            cell(r.rdf, units),
            cell(r.slb, units),
            cell(r.sandwich_lower, units),
            cell(r.sandwich_upper, units)
        )?;
    }
    Ok(())
}

pub const REPORT_CSV_HEADER: &str =
    "scheme,param,n,seed,rate_nats,rate_se,mse,mse_se,ks_max,ks_pass";

fn report_fields(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.scheme,
        r.param,
        r.n,
        r.seed,
        r.rate_nats,
        r.rate_se,
        r.mse,
        r.mse_se,
        r.ks_max,
        r.ks_pass
    )
}

/// Report CSV sorted by distortion. With a bound, reference columns give the
/// DP-RDF (and for Gaussian sources the RDF) at each measured MSE plus the
/// bound verdict.
pub fn write_reports_csv<W: Write + ?Sized>(
    w: &mut W,
    reports: &[EvalReport],
    bound: Option<&BoundCurve>,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    match bound {
        None => writeln!(w, "{REPORT_CSV_HEADER}").map_err(io)?,
        Some(_) => writeln!(
            w,
            "{REPORT_CSV_HEADER},dp_rdf_nats,rdf_nats,margin_nats,above_bound"
        )
        .map_err(io)?,
    }
    for r in sorted {
        match bound {
            None => writeln!(w, "{}", report_fields(r)).map_err(io)?,
            Some(b) => {
                let v = compare_to_bound(r, b)?;
                let rdf = match b {
                    BoundCurve::Gaussian { variance } => rdf_gaussian(*variance, r.mse).to_string(),
                    BoundCurve::Discrete { .. } => String::new(),
                };
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    report_fields(r),
                    v.bound_nats,
                    rdf,
                    v.margin_nats,
                    v.above_bound
                )
                .map_err(io)?
            }
        }
    }
    Ok(())
}

/// Outcome of one built-in check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Fast end-to-end checks of the closed forms and the schemes.
pub fn self_test(seed: u64, workers: usize) -> Vec<SelfTestItem> {
    let mut items = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        items.push(SelfTestItem {
            name: name.into(),
            pass,
            detail,
        });
    };
    let gauss = SourceModel::standard_gaussian();

    push(
        "sandwich_identity",
        (|| {
            let mut worst = 0.0f64;
            for i in 1..200 {
                let d = 2.0 * i as f64 / 200.0;
                worst = worst
                    .max((dp_rdf_sandwich_gaussian(1.0, d)?.upper - dp_rdf_gaussian(1.0, d)).abs());
            }
            Ok((worst < 1e-9, format!("max deviation {worst:e}")))
        })(),
    );

    push(
        "binary_hamming_solver",
        (|| {
            let p = discrete_dp_rdf_at(&[0.5, 0.5], &CostTable::hamming(2), 0.11)?;
            let hb = -(0.11f64 * 0.11f64.ln() + 0.89 * 0.89f64.ln());
            let exact = std::f64::consts::LN_2 - hb;
            Ok((
                (p.rate - exact).abs() < 1e-3,
                format!("rate {} vs {exact}", p.rate),
            ))
        })(),
    );

    push(
        "simple_zero_rate",
        (|| {
            let s = DpqScheme::new(SchemeKind::Simple, gauss.clone(), seed)?;
            let r = evaluate(&s, RATE_MIN_N * 2, seed, workers)?;
            Ok((
                (r.mse - 2.0).abs() < 0.1 && r.ks_pass,
                format!("mse {} ks_max {}", r.mse, r.ks_max),
            ))
        })(),
    );

    push(
        "awgn_on_curve",
        (|| {
            let s = DpqScheme::new(
                SchemeKind::AwgnOracle { noise_var: 1.0 },
                gauss.clone(),
                seed,
            )?;
            let r = evaluate(&s, RATE_MIN_N * 2, seed, workers)?;
            let v = compare_to_bound(&r, &BoundCurve::Gaussian { variance: 1.0 })?;
            Ok((
                v.above_bound && (r.mse - 0.5858).abs() < 0.03,
                format!("mse {} margin {}", r.mse, v.margin_nats),
            ))
        })(),
    );

    push(
        "transform_preserves_law",
        (|| {
            let kind = SchemeKind::Transform {
                lattice: crate::lattice::LatticeKind::ScaledInteger { step: 1.0, dim: 1 },
            };
            let s = DpqScheme::new(kind, gauss.clone(), seed)?;
            let r = evaluate(&s, RATE_MIN_N, seed, workers)?;
            let v = compare_to_bound(&r, &BoundCurve::Gaussian { variance: 1.0 })?;
            Ok((
                r.ks_pass && v.above_bound,
                format!("ks_max {} rate {} mse {}", r.ks_max, r.rate_nats, r.mse),
            ))
        })(),
    );

    push(
        "gaussian_smoothed_closed_form",
        (|| {
            let mut worst = 0.0f64;
            for i in 0..21 {
                let x = -3.0 + 0.3 * i as f64;
                let g = crate::transform::gaussian_smoothed_transform(&gauss, 1.0, x)?;
                worst = worst.max(
                    (g - crate::transform::gaussian_smoothed_closed_form(0.0, 1.0, 1.0, x)).abs(),
                );
            }
            Ok((worst < 1e-6, format!("max deviation {worst:e}")))
        })(),
    );
    items
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeKind;
    use approx::assert_abs_diff_eq;

    fn gauss() -> SourceModel {
        SourceModel::standard_gaussian()
    }

    #[test]
    fn simple_report() {
        let s = DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap();
        let r = evaluate(&s, 100_000, 1, 0).unwrap();
        assert_eq!(r.rate_nats, 0.0);
        assert_abs_diff_eq!(r.mse, 2.0, epsilon = 0.03);
        assert!(r.ks_pass && r.is_finite());
        let v = compare_to_bound(&r, &BoundCurve::Gaussian { variance: 1.0 }).unwrap();
        assert!(v.above_bound && v.margin_nats.abs() < 1e-3, "{v:?}");
        assert!(evaluate(&s, 100, 1, 0).is_err());
    }

    #[test]
    fn parallel_and_serial_agree() {
        let kind = SchemeKind::Transform {
            lattice: LatticeKind::ScaledInteger { step: 0.5, dim: 1 },
        };
        let s = DpqScheme::new(kind, gauss(), 4).unwrap();
        let a = evaluate(&s, 10_000, 9, 1).unwrap();
        let b = evaluate(&s, 10_000, 9, 4).unwrap();
        assert!(a.same_statistics(&b));
        let json = serde_json::to_string(&a).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn awgn_report_lies_on_the_curve() {
        let s = DpqScheme::new(SchemeKind::AwgnOracle { noise_var: 1.0 }, gauss(), 2).unwrap();
        let r = evaluate(&s, 200_000, 3, 0).unwrap();
        assert_eq!(r.rate_method, RateMethod::Analytic);
        assert_abs_diff_eq!(r.rate_nats, 0.346574, epsilon = 1e-6);
        assert!((r.mse - 0.585786).abs() < 3.0 * r.mse_se + 1e-3);
        let v = compare_to_bound(&r, &BoundCurve::Gaussian { variance: 1.0 }).unwrap();
        assert!(
            v.above_bound && v.margin_nats.abs() < 3.0 * v.se_nats + 1e-12,
            "{v:?}"
        );
    }

    #[test]
    fn corrupted_report_falls_below_bound() {
        let kind = SchemeKind::Transform {
            lattice: LatticeKind::ScaledInteger { step: 0.5, dim: 1 },
        };
        let s = DpqScheme::new(kind, gauss(), 4).unwrap();
        let mut r = evaluate(&s, 20_000, 5, 0).unwrap();
        let bound = BoundCurve::Gaussian { variance: 1.0 };
        assert!(compare_to_bound(&r, &bound).unwrap().above_bound);
        r.rate_nats /= 2.0;
        assert!(!compare_to_bound(&r, &bound).unwrap().above_bound);
    }

    #[test]
    fn resample_report_has_cell_entropy() {
        let s = DpqScheme::new(SchemeKind::Resample { step: 0.5 }, gauss(), 6).unwrap();
        let r = evaluate(&s, 50_000, 6, 0).unwrap();
        assert_eq!(r.rate_method, RateMethod::CellEntropy);
        // high-resolution approximation h(X) − ln Δ
        assert!((r.rate_nats - (1.418939 - 0.5f64.ln())).abs() < 0.02);
        assert!(r.rate_se > 0.0 && r.base_mse.is_some());
        assert!(
            compare_to_bound(&r, &BoundCurve::Gaussian { variance: 1.0 })
                .unwrap()
                .above_bound
        );
    }

    #[test]
    fn discrete_bound_for_pmf_source() {
        let pmf = SourceModel::pmf(vec![0.2, 0.5, 0.3]).unwrap();
        let s = DpqScheme::new(SchemeKind::Simple, pmf.clone(), 1).unwrap();
        let r = evaluate(&s, 20_000, 1, 0).unwrap();
        assert_abs_diff_eq!(r.mse, 2.0 * pmf.variance(), epsilon = 0.05);
        assert!(r.ks_pass, "{:?}", r.ks);
        let b = BoundCurve::for_source(&pmf).unwrap();
        assert!(compare_to_bound(&r, &b).unwrap().above_bound);
        assert!(b.rate(0.2).unwrap() > 0.0);
        assert!(BoundCurve::for_source(&SourceModel::uniform(0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn sweep_keeps_partial_results() {
        assert!(rd_sweep(&[], 10_000, 1, 0).is_err());
        let ok = DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap();
        let out = rd_sweep(&[ok.clone(), ok], 10_000, 1, 0).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert!(out.failure.is_none());
        let out = rd_sweep(
            &[DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap()],
            10,
            1,
            0,
        )
        .unwrap();
        assert!(out.reports.is_empty() && out.failure.is_some());
    }

    #[test]
    fn csv_outputs() {
        let rows = gaussian_curve(&gauss(), &[0.5, 1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &rows, Units::Bits).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("D,rate_nats,rate_bits,source,rdf_bits"));
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("2,0,0,"));
        assert!(lines[4].ends_with(",,"));

        let s = DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap();
        let r = evaluate(&s, 10_000, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(
            &mut buf,
            &[r],
            Some(&BoundCurve::Gaussian { variance: 1.0 }),
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(REPORT_CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn self_test_passes() {
        for item in self_test(1, 0) {
            assert!(item.pass, "{item:?}");
        }
    }
}

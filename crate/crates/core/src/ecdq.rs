//! Entropy-coded dithered quantization.
//!
//! `x̂ = q(x + z) − z` with a dither `z` uniform over the basic cell and
//! shared by encoder and decoder. The rate is reported as an entropy
//! estimate of the index stream rather than by running a coder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeIndex, LatticeKind};
use crate::prob::{symbol_entropy, SourceModel};
use crate::quad::integrate_checked;
use crate::rng::{self, derive_seed, domain};

/// Smallest `n` accepted by the empirical rate estimators.
pub const RATE_MIN_N: usize = 10_000;

/// Number of fixed dithers averaged by the conditional rate estimator.
pub const DEFAULT_DITHERS: usize = 16;

/// Tolerance for the quadrature of `h(X + N)`.
pub const ANALYTIC_RATE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdqOutput {
    pub indices: LatticeIndex,
    pub x_hat: Vec<f64>,
    pub dither_used: Vec<f64>,
}

pub fn ecdq_encode(lat: &Lattice, dither: &[f64], x: &[f64]) -> Result<EcdqOutput> {
    if x.len() != lat.dim() {
        return Err(Error::DimensionMismatch {
            expected: lat.dim(),
            got: x.len(),
        });
    }
    lat.check_dither(dither)?;
    let shifted: Vec<f64> = x.iter().zip(dither).map(|(a, z)| a + z).collect();
    let (indices, _) = lat.nearest_point(&shifted);
    let x_hat = ecdq_decode(lat, dither, &indices);
    Ok(EcdqOutput {
        indices,
        x_hat,
        dither_used: dither.to_vec(),
    })
}

/// Reconstruction from indices and the shared dither. Uses the same
/// arithmetic as the encoder, so the result is bit-identical.
pub fn ecdq_decode(lat: &Lattice, dither: &[f64], indices: &LatticeIndex) -> Vec<f64> {
    lat.point(indices)
        .iter()
        .zip(dither)
        .map(|(p, z)| p - z)
        .collect()
}

/// Both empirical rate estimators, in nats per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdqRateEstimate {
    /// Mean over fixed dithers of the index entropy, `≈ H(q(X+Z) | Z) / k`.
    pub conditional: f64,
    /// Standard error of `conditional` across the dithers.
    pub conditional_se: f64,
    /// Index entropy with a fresh dither per sample, `≈ H(q(X+Z)) / k`.
    pub marginal: f64,
    pub n: usize,
    pub dithers: usize,
}

fn check_rate_inputs(lat: &Lattice, model: &SourceModel, n: usize) -> Result<()> {
    if n < RATE_MIN_N {
        return Err(Error::SampleTooSmall {
            needed: RATE_MIN_N,
            got: n,
        });
    }
    if !model.is_continuous() {
        return Err(Error::Unsupported {
            op: "ecdq rate",
            what: "a discrete source".into(),
        });
    }
    if model.dim() != 1 && model.dim() != lat.dim() {
        return Err(Error::DimensionMismatch {
            expected: lat.dim(),
            got: model.dim(),
        });
    }
    Ok(())
}

/// Source vector `j` of the rate-estimation run keyed by `seed`.
fn rate_source_row(model: &SourceModel, seed: u64, j: usize, out: &mut [f64]) {
    let mut r = rng::stream(derive_seed(seed, domain::RATE), j as u64);
    model.sample_into(&mut r, out);
}

/// Conditional and marginal index-entropy estimates from `n` source vectors
/// and `m_dithers` fixed dithers. The histogram covers only the observed
/// indices, which biases both estimates slightly downward.
pub fn ecdq_rate_estimates(
    lat: &Lattice,
    model: &SourceModel,
    n: usize,
    m_dithers: usize,
    seed: u64,
) -> Result<EcdqRateEstimate> {
    check_rate_inputs(lat, model, n)?;
    if m_dithers == 0 {
        return Err(Error::InvalidParameter(
            "at least one dither is needed".into(),
        ));
    }
    let k = lat.dim();
    let mut xs = vec![0.0; n * k];
    xs.par_chunks_mut(k)
        .enumerate()
        .for_each(|(j, row)| rate_source_row(model, seed, j, row));

    let dither_seed = derive_seed(seed, domain::DITHER);
    let per_dither: Vec<f64> = (0..m_dithers)
        .into_par_iter()
        .map(|d| {
            let z = lat.sample_dither(&mut rng::stream(dither_seed, d as u64));
            let indices = xs.chunks(k).map(|x| {
                let shifted: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
                lat.nearest_point(&shifted).0
            });
            symbol_entropy(indices, false)
        })
        .collect::<Result<_>>()?;
    let mean = per_dither.iter().sum::<f64>() / m_dithers as f64;
    let se = if m_dithers > 1 {
        let var =
            per_dither.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (m_dithers - 1) as f64;
        (var / m_dithers as f64).sqrt()
    } else {
        0.0
    };

    // fresh dither per sample, drawn from a stream disjoint from the fixed ones
    let marginal_indices: Vec<LatticeIndex> = xs
        .par_chunks(k)
        .enumerate()
        .map(|(j, x)| {
            let z = lat.sample_dither(&mut rng::stream(dither_seed, (m_dithers + j) as u64));
            let shifted: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
            lat.nearest_point(&shifted).0
        })
        .collect();
    let marginal = symbol_entropy(marginal_indices, false)?;

    let kf = k as f64;
    Ok(EcdqRateEstimate {
        conditional: mean / kf,
        conditional_se: se / kf,
        marginal: marginal / kf,
        n,
        dithers: m_dithers,
    })
}

/// Conditional index entropy per dimension averaged over `m_dithers` fixed
/// dithers.
pub fn ecdq_rate_empirical(
    lat: &Lattice,
    model: &SourceModel,
    n: usize,
    m_dithers: usize,
    seed: u64,
) -> Result<f64> {
    Ok(ecdq_rate_estimates(lat, model, n, m_dithers, seed)?.conditional)
}

/// `h(X + N) − ln Δ` per dimension for a cube lattice, with `N` uniform on
/// `[−Δ/2, Δ/2]`, by quadrature of the density `(F(y+Δ/2) − F(y−Δ/2)) / Δ`.
pub fn ecdq_rate_analytic(model: &SourceModel, lat: &Lattice) -> Result<f64> {
    let step = match lat.kind() {
        LatticeKind::ScaledInteger { step, .. } => step,
        LatticeKind::Hexagonal { .. } => {
            return Err(Error::Unsupported {
                op: "ecdq_rate_analytic",
                what: "the hexagonal lattice".into(),
            })
        }
    };
    if !model.is_continuous() {
        return Err(Error::Unsupported {
            op: "ecdq_rate_analytic",
            what: "a discrete source".into(),
        });
    }
    let h = 0.5 * step;
    let (lo, hi) = model.effective_support();
    let (a, b) = (lo - h, hi + h);
    let median = model.median();
    let density = |y: f64| {
        let mass = if y < median {
            model.cdf(y + h) - model.cdf(y - h)
        } else {
            model.sf(y - h) - model.sf(y + h)
        };
        mass.max(0.0) / step
    };
    let mut breaks: Vec<f64> = model
        .breakpoints()
        .iter()
        .flat_map(|&t| [t - h, t + h])
        .collect();
    breaks.push(median);
    let scale = model.variance().sqrt().min(step);
    let panels = (((b - a) / scale).ceil() as usize).clamp(16, 4096);
    let entropy = integrate_checked(a, b, panels, &breaks, ANALYTIC_RATE_TOL * 1e-3, |y| {
        let f = density(y);
        if f > 0.0 {
            -f * f.ln()
        } else {
            0.0
        }
    })?;
    Ok(entropy - step.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{ks_test, moments, pearson};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::{E, PI};

    fn cube(step: f64) -> Lattice {
        Lattice::scaled_integer(step, 1).unwrap()
    }

    #[test]
    fn encode_examples() {
        let l = cube(1.0);
        assert_eq!(ecdq_encode(&l, &[0.0], &[0.3]).unwrap().x_hat, vec![0.0]);
        let out = ecdq_encode(&l, &[0.3], &[0.3]).unwrap();
        assert_eq!(out.indices, LatticeIndex(vec![1]));
        assert_abs_diff_eq!(out.x_hat[0], 0.7, epsilon = 1e-15);
        assert!(matches!(
            ecdq_encode(&l, &[0.7], &[0.3]),
            Err(Error::DitherOutsideCell(_))
        ));
        assert!(ecdq_encode(&l, &[0.0], &[0.3, 0.1]).is_err());
    }

    #[test]
    fn decode_examples() {
        let l = Lattice::hexagonal(1.0).unwrap();
        assert_eq!(
            ecdq_decode(&l, &[0.1, -0.2], &LatticeIndex::origin(2)),
            vec![-0.1, 0.2]
        );
        let mut r = rng::stream(5, 0);
        for _ in 0..10_000 {
            let x = [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)];
            let z = l.sample_dither(&mut r);
            let enc = ecdq_encode(&l, &z, &x).unwrap();
            let dec = ecdq_decode(&l, &z, &enc.indices);
            assert_eq!(dec, enc.x_hat);
            let p = l.point(&enc.indices);
            assert_eq!(enc.x_hat, vec![p[0] - z[0], p[1] - z[1]]);
            // mismatched dither shifts the reconstruction by the difference
            let z2 = [0.0, 0.0];
            let off = ecdq_decode(&l, &z2, &enc.indices);
            assert_abs_diff_eq!(off[0] - dec[0], z[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn error_is_uniform_and_independent_of_source() {
        let l = cube(1.0);
        let model = SourceModel::standard_gaussian();
        let mut r = rng::stream(11, 0);
        let mut xs = Vec::new();
        let mut errs = Vec::new();
        for _ in 0..100_000 {
            let x = model.sample_scalar(&mut r) * 3.0;
            let z = l.sample_dither(&mut r);
            let out = ecdq_encode(&l, &z, &[x]).unwrap();
            xs.push(x);
            errs.push(out.x_hat[0] - x);
        }
        let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
        assert_abs_diff_eq!(mse, 1.0 / 12.0, epsilon = 0.003);
        assert!(pearson(&xs, &errs).abs() < 0.01);
        let ks = ks_test(&errs, |e| (e + 0.5).clamp(0.0, 1.0)).unwrap();
        assert!(ks.pass, "{ks:?}");
        let (mean, _, _) = moments(&errs);
        assert!(mean.abs() < 0.005);
    }

    #[test]
    fn analytic_rate_gaussian_high_rate() {
        let r = ecdq_rate_analytic(&SourceModel::standard_gaussian(), &cube(0.1)).unwrap();
        assert_abs_diff_eq!(r, 0.5 * (2.0 * PI * E).ln() - 0.1f64.ln(), epsilon = 1e-3);
        // X + N has variance 1 + Δ²/12 and is very nearly Gaussian here
        assert_abs_diff_eq!(
            r,
            0.5 * (2.0 * PI * E * (1.0 + 0.01 / 12.0)).ln() - 0.1f64.ln(),
            epsilon = 1e-5
        );
    }

    #[test]
    fn analytic_rate_uniform_is_triangle_entropy() {
        // Uniform(0,1) + Uniform(-1/2,1/2) is a triangle of width 2: h = 1/2
        let r = ecdq_rate_analytic(&SourceModel::uniform(0.0, 1.0).unwrap(), &cube(1.0)).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn analytic_rate_decreases_with_step() {
        for model in [
            SourceModel::standard_gaussian(),
            SourceModel::laplace(0.0, 1.0).unwrap(),
        ] {
            let rates: Vec<f64> = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&s| ecdq_rate_analytic(&model, &cube(s)).unwrap())
                .collect();
            assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
            assert!(rates.iter().all(|&r| r > 0.0));
        }
        assert!(ecdq_rate_analytic(
            &SourceModel::standard_gaussian(),
            &Lattice::hexagonal(1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn empirical_rate_matches_analytic() {
        let model = SourceModel::standard_gaussian();
        for step in [0.25, 0.5, 1.0] {
            let l = cube(step);
            let est = ecdq_rate_estimates(&l, &model, 50_000, DEFAULT_DITHERS, 3).unwrap();
            let exact = ecdq_rate_analytic(&model, &l).unwrap();
            assert!(
                (est.conditional - exact).abs() < 0.02,
                "step {step}: {} vs {exact}",
                est.conditional
            );
            // the dither-averaged entropy cannot be smaller
            assert!(est.marginal > est.conditional - 0.01);
        }
    }

    #[test]
    fn empirical_rate_coarse_and_degenerate() {
        let model = SourceModel::standard_gaussian();
        let r = ecdq_rate_empirical(&cube(4.0), &model, 10_000, DEFAULT_DITHERS, 1).unwrap();
        assert!(r > 0.0 && r < 1.0, "{r}");
        // nearly a single bin; what remains is the O(σ/Δ) boundary leakage
        let r = ecdq_rate_empirical(&cube(100.0), &model, 10_000, DEFAULT_DITHERS, 1).unwrap();
        let exact = ecdq_rate_analytic(&model, &cube(100.0)).unwrap();
        assert!(r < 0.05 && (r - exact).abs() < 0.02, "{r} vs {exact}");
        assert!(matches!(
            ecdq_rate_empirical(&cube(1.0), &model, 100, DEFAULT_DITHERS, 1),
            Err(Error::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn empirical_rate_is_deterministic() {
        let model = SourceModel::standard_gaussian().with_dim(2).unwrap();
        let l = Lattice::hexagonal(0.5).unwrap();
        let a = ecdq_rate_estimates(&l, &model, 10_000, 4, 9).unwrap();
        let b = ecdq_rate_estimates(&l, &model, 10_000, 4, 9).unwrap();
        assert_eq!(a, b);
    }
}

//! Distribution-preserving quantizer ensembles.
//!
//! A scheme encodes one source block (a `k`-vector) into a [`Message`] and
//! decodes it back. Randomness shared by encoder and decoder (dither, channel
//! noise) and decoder-private randomness both come from per-block streams of
//! the scheme's seed, so decode depends on nothing but `(message, seed,
//! block)`.

use serde::{Deserialize, Serialize};

use crate::bounds::awgn_oracle_point;
use crate::ecdq::{ecdq_decode, ecdq_encode};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, LatticeIndex, LatticeKind};
use crate::prob::SourceModel;
use crate::rng::{self, derive_seed, domain, StreamRng};
use crate::transform::DpqTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Output drawn from the source law, ignoring the input; rate 0.
    Simple,
    /// Uniform scalar quantizer with cells `[iΔ₀, (i+1)Δ₀)`; the decoder
    /// resamples the source law restricted to the cell.
    Resample { step: f64 },
    /// ECDQ on `lattice` followed by the sequential cdf transform.
    Transform { lattice: LatticeKind },
    /// Analytic baseline `√(σ²/(σ²+η²)) (X − μ + N) + μ`, `N ~ N(0, η²)`.
    /// Sends an analog value, not indices.
    AwgnOracle { noise_var: f64 },
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simple => "simple",
            Self::Resample { .. } => "resample",
            Self::Transform { .. } => "transform",
            Self::AwgnOracle { .. } => "awgn",
        }
    }

    /// Parameter string used in reports.
    pub fn param(&self) -> String {
        match self {
            Self::Simple => String::new(),
            Self::Resample { step } => format!("step={step}"),
            Self::Transform {
                lattice: LatticeKind::ScaledInteger { step, dim },
            } => {
                format!("cube:step={step}:dim={dim}")
            }
            Self::Transform {
                lattice: LatticeKind::Hexagonal { scale },
            } => format!("hex:scale={scale}"),
            Self::AwgnOracle { noise_var } => format!("eta2={noise_var}"),
        }
    }
}

/// What crosses the channel for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    None,
    /// Scalar-quantizer cell per axis.
    Cells(Vec<i64>),
    Lattice(LatticeIndex),
    /// `x − μ + N`, for the analog baseline.
    Analog(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DpqScheme {
    kind: SchemeKind,
    seed: u64,
    source: SourceModel,
    lattice: Option<Lattice>,
    transform: Option<DpqTransform>,
}

impl DpqScheme {
    pub fn new(kind: SchemeKind, source: SourceModel, seed: u64) -> Result<Self> {
        let mut lattice = None;
        let mut transform = None;
        match kind {
            SchemeKind::Simple => {}
            SchemeKind::Resample { step } => {
                if !(step.is_finite() && step > 0.0) {
                    return Err(invalid(format!(
                        "resampling step must be positive, got {step}"
                    )));
                }
                if !source.is_continuous() {
                    return Err(Error::Unsupported {
                        op: "resample_dpq",
                        what: "a discrete source".into(),
                    });
                }
            }
            SchemeKind::Transform { lattice: lk } => {
                let lat = Lattice::new(lk)?;
                transform = Some(DpqTransform::new(source.clone(), lat.clone())?);
                lattice = Some(lat);
            }
            SchemeKind::AwgnOracle { noise_var } => {
                if !source.is_gaussian() {
                    return Err(Error::Unsupported {
                        op: "awgn_oracle_apply",
                        what: format!("source {}", source.label()),
                    });
                }
                if !(noise_var.is_finite() && noise_var > 0.0) {
                    return Err(invalid(format!(
                        "noise variance must be positive, got {noise_var}"
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            seed,
            source,
            lattice,
            transform,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.lattice.as_ref()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Length of one block: the lattice dimension for the transform scheme,
    /// the source dimension otherwise.
    pub fn block_dim(&self) -> usize {
        match &self.lattice {
            Some(l) => l.dim(),
            None => self.source.dim(),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            SchemeKind::Simple => "simple".into(),
            _ => format!("{}({})", self.kind.name(), self.kind.param()),
        }
    }

    /// Randomness known to both ends for `block`.
    fn shared_stream(&self, block: u64) -> StreamRng {
        rng::stream(derive_seed(self.seed, domain::DITHER), block)
    }

    /// Randomness used only by the decoder for `block`.
    fn decoder_stream(&self, block: u64) -> StreamRng {
        rng::stream(derive_seed(self.seed, domain::DECODER), block)
    }

    /// Dither of `block` (transform scheme only).
    pub fn dither(&self, block: u64) -> Option<Vec<f64>> {
        self.lattice
            .as_ref()
            .map(|l| l.sample_dither(&mut self.shared_stream(block)))
    }

    fn check_block(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.block_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.block_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("source block contains non-finite values"));
        }
        Ok(())
    }

    pub fn encode(&self, block: u64, x: &[f64]) -> Result<Message> {
        self.check_block(x)?;
        match self.kind {
            SchemeKind::Simple => Ok(Message::None),
            SchemeKind::Resample { step } => Ok(Message::Cells(
                x.iter().map(|v| (v / step).floor() as i64).collect(),
            )),
            SchemeKind::Transform { .. } => {
                let lat = self
                    .lattice
                    .as_ref()
                    .expect("transform scheme has a lattice");
                let z = self.dither(block).expect("transform scheme has a lattice");
                Ok(Message::Lattice(ecdq_encode(lat, &z, x)?.indices))
            }
            SchemeKind::AwgnOracle { noise_var } => {
                let mut r = self.shared_stream(block);
                let noise = SourceModel::gaussian(0.0, noise_var)?;
                let mu = self.source.mean();
                Ok(Message::Analog(
                    x.iter()
                        .map(|v| v - mu + noise.sample_scalar(&mut r))
                        .collect(),
                ))
            }
        }
    }

    pub fn decode(&self, block: u64, msg: &Message) -> Result<Vec<f64>> {
        let k = self.block_dim();
        match (self.kind, msg) {
            (SchemeKind::Simple, Message::None) => {
                let mut out = vec![0.0; k];
                self.source
                    .sample_into(&mut self.decoder_stream(block), &mut out);
                Ok(out)
            }
            (SchemeKind::Resample { step }, Message::Cells(cells)) if cells.len() == k => {
                let mut r = self.decoder_stream(block);
                cells
                    .iter()
                    .map(|&c| resample_cell(&self.source, step, c, rng::open01(&mut r)))
                    .collect()
            }
            (SchemeKind::Transform { .. }, Message::Lattice(idx)) if idx.dim() == k => {
                let x_hat = self.ecdq_reconstruction(block, idx)?;
                self.transform
                    .as_ref()
                    .expect("transform scheme has a transform")
                    .apply(&x_hat)
            }
            (SchemeKind::AwgnOracle { noise_var }, Message::Analog(y)) if y.len() == k => {
                let var = self.source.variance();
                let gain = (var / (var + noise_var)).sqrt();
                let mu = self.source.mean();
                Ok(y.iter().map(|v| gain * v + mu).collect())
            }
            _ => Err(invalid(format!(
                "message {msg:?} does not fit scheme {}",
                self.label()
            ))),
        }
    }

    /// The embedded ECDQ's reconstruction `x̂` (transform scheme only).
    pub fn ecdq_reconstruction(&self, block: u64, idx: &LatticeIndex) -> Result<Vec<f64>> {
        let (Some(lat), Some(z)) = (self.lattice.as_ref(), self.dither(block)) else {
            return Err(Error::Unsupported {
                op: "ecdq_reconstruction",
                what: self.label(),
            });
        };
        if idx.dim() != lat.dim() {
            return Err(Error::DimensionMismatch {
                expected: lat.dim(),
                got: idx.dim(),
            });
        }
        Ok(ecdq_decode(lat, &z, idx))
    }

    /// Midpoint reconstruction of the resampling scheme's base quantizer.
    pub fn base_reconstruction(&self, msg: &Message) -> Result<Vec<f64>> {
        match (self.kind, msg) {
            (SchemeKind::Resample { step }, Message::Cells(cells)) => {
                Ok(cells.iter().map(|&c| (c as f64 + 0.5) * step).collect())
            }
            _ => Err(Error::Unsupported {
                op: "base_reconstruction",
                what: self.label(),
            }),
        }
    }

    /// Rate of the analog baseline, `½ ln(1 + σ²/η²)`.
    pub fn analytic_rate(&self) -> Option<f64> {
        match self.kind {
            SchemeKind::AwgnOracle { noise_var } => {
                awgn_oracle_point(self.source.variance(), noise_var)
                    .ok()
                    .map(|p| p.rate)
            }
            SchemeKind::Simple => Some(0.0),
            _ => None,
        }
    }

    /// Encode then decode one block.
    pub fn apply(&self, block: u64, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(block, &self.encode(block, x)?)
    }
}

/// Draw from the source law restricted to `[cΔ, (c+1)Δ)` given a uniform
/// `v ∈ (0, 1)`. Cells above the median are handled through the survival
/// function so that far-tail cells keep their resolution.
fn resample_cell(model: &SourceModel, step: f64, cell: i64, v: f64) -> Result<f64> {
    let a = cell as f64 * step;
    let b = a + step;
    let x = if b <= model.median() {
        let (fa, fb) = (model.cdf(a), model.cdf(b));
        if !(fb > fa) {
            return Err(Error::ZeroProbabilityCell { lo: a, hi: b });
        }
        let u = fa + v * (fb - fa);
        model.icdf_two_sided(u, 1.0 - u)
    } else {
        let (sa, sb) = (model.sf(a), model.sf(b));
        if !(sa > sb) {
            return Err(Error::ZeroProbabilityCell { lo: a, hi: b });
        }
        let s = sa - v * (sa - sb);
        model.icdf_two_sided(1.0 - s, s)
    };
    Ok(if x < a {
        a
    } else if x >= b {
        b.next_down()
    } else {
        x
    })
}

fn expect_kind(scheme: &DpqScheme, ok: bool, op: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Unsupported {
            op,
            what: scheme.label(),
        })
    }
}

/// Output of the simple scheme for `block`: a fresh draw from the source.
pub fn simple_dpq(scheme: &DpqScheme, block: u64, x: &[f64]) -> Result<Vec<f64>> {
    expect_kind(
        scheme,
        matches!(scheme.kind, SchemeKind::Simple),
        "simple_dpq",
    )?;
    scheme.apply(block, x)
}

/// Cell index and resampled reconstruction for a scalar input.
pub fn resample_dpq(scheme: &DpqScheme, block: u64, x: f64) -> Result<(i64, f64)> {
    expect_kind(
        scheme,
        matches!(scheme.kind, SchemeKind::Resample { .. }),
        "resample_dpq",
    )?;
    if scheme.block_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: scheme.block_dim(),
        });
    }
    let msg = scheme.encode(block, &[x])?;
    let Message::Cells(ref cells) = msg else {
        unreachable!("resample encodes cells")
    };
    Ok((cells[0], scheme.decode(block, &msg)?[0]))
}

pub fn transform_dpq_encode(scheme: &DpqScheme, block: u64, x: &[f64]) -> Result<LatticeIndex> {
    expect_kind(
        scheme,
        matches!(scheme.kind, SchemeKind::Transform { .. }),
        "transform_dpq_encode",
    )?;
    match scheme.encode(block, x)? {
        Message::Lattice(idx) => Ok(idx),
        _ => unreachable!("transform encodes lattice indices"),
    }
}

pub fn transform_dpq_decode(
    scheme: &DpqScheme,
    block: u64,
    indices: &LatticeIndex,
) -> Result<Vec<f64>> {
    expect_kind(
        scheme,
        matches!(scheme.kind, SchemeKind::Transform { .. }),
        "transform_dpq_decode",
    )?;
    scheme.decode(block, &Message::Lattice(indices.clone()))
}

pub fn awgn_oracle_apply(scheme: &DpqScheme, block: u64, x: f64) -> Result<f64> {
    expect_kind(
        scheme,
        matches!(scheme.kind, SchemeKind::AwgnOracle { .. }),
        "awgn_oracle_apply",
    )?;
    Ok(scheme.apply(block, &[x])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{ks_test, pearson};
    use approx::assert_abs_diff_eq;

    fn gauss() -> SourceModel {
        SourceModel::standard_gaussian()
    }

    fn source_values(n: usize, seed: u64) -> Vec<f64> {
        gauss().sample(seed, n).unwrap().values().to_vec()
    }

    #[test]
    fn simple_ignores_the_input() {
        let s = DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap();
        let xs = source_values(100_000, 2);
        let out: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(b, &x)| simple_dpq(&s, b as u64, &[x]).unwrap()[0])
            .collect();
        let mse = xs
            .iter()
            .zip(&out)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / xs.len() as f64;
        assert_abs_diff_eq!(mse, 2.0, epsilon = 0.03);
        assert!(ks_test(&out, |v| gauss().cdf(v)).unwrap().pass);
        assert!(pearson(&xs, &out).abs() < 0.01);
        assert_eq!(s.apply(5, &[0.0]).unwrap(), s.apply(5, &[9.0]).unwrap());
    }

    #[test]
    fn resample_stays_in_cell_and_loses_3db() {
        let step = 0.05;
        let s = DpqScheme::new(SchemeKind::Resample { step }, gauss(), 3).unwrap();
        let xs = source_values(100_000, 4);
        let (mut mse, mut base) = (0.0, 0.0);
        let mut out = Vec::new();
        for (b, &x) in xs.iter().enumerate() {
            let (cell, y) = resample_dpq(&s, b as u64, x).unwrap();
            let a = cell as f64 * step;
            assert!(y >= a && y < a + step && x >= a && x < a + step);
            mse += (y - x).powi(2);
            base += (s.base_reconstruction(&Message::Cells(vec![cell])).unwrap()[0] - x).powi(2);
            out.push(y);
        }
        let ratio = mse / base;
        assert!((1.9..=2.1).contains(&ratio), "{ratio}");
        assert!(ks_test(&out, |v| gauss().cdf(v)).unwrap().pass);
    }

    #[test]
    fn resample_far_tail_and_empty_cells() {
        let s = DpqScheme::new(SchemeKind::Resample { step: 0.5 }, gauss(), 3).unwrap();
        let (cell, y) = resample_dpq(&s, 0, 9.2).unwrap();
        assert_eq!(cell, 18);
        assert!((9.0..9.5).contains(&y));
        let (_, y) = resample_dpq(&s, 0, -9.2).unwrap();
        assert!((-9.5..-9.0).contains(&y));
        let u = DpqScheme::new(
            SchemeKind::Resample { step: 0.5 },
            SourceModel::uniform(0.0, 1.0).unwrap(),
            3,
        )
        .unwrap();
        assert!(matches!(
            u.decode(0, &Message::Cells(vec![4])),
            Err(Error::ZeroProbabilityCell { .. })
        ));
    }

    #[test]
    fn resample_law_on_discretized_toy_source() {
        // four equiprobable cells of a uniform source; resampling within the
        // occupied cell must reproduce the uniform law exactly
        let model = SourceModel::uniform(0.0, 2.0).unwrap();
        let s = DpqScheme::new(SchemeKind::Resample { step: 0.5 }, model.clone(), 8).unwrap();
        let mut r = rng::stream(99, 0);
        let out: Vec<f64> = (0..20_000)
            .map(|b| s.apply(b, &[model.sample_scalar(&mut r)]).unwrap()[0])
            .collect();
        assert!(ks_test(&out, |v| model.cdf(v)).unwrap().pass);
        for c in 0..4 {
            let frac = out
                .iter()
                .filter(|&&v| (v / 0.5).floor() as i64 == c)
                .count() as f64
                / out.len() as f64;
            assert!((frac - 0.25).abs() < 0.015);
        }
    }

    #[test]
    fn transform_round_trip_is_deterministic() {
        for lattice in [
            LatticeKind::ScaledInteger { step: 0.1, dim: 1 },
            LatticeKind::Hexagonal { scale: 0.5 },
        ] {
            let s = DpqScheme::new(SchemeKind::Transform { lattice }, gauss(), 11).unwrap();
            let x = vec![0.3; s.block_dim()];
            let idx = transform_dpq_encode(&s, 7, &x).unwrap();
            let a = transform_dpq_decode(&s, 7, &idx).unwrap();
            let b = transform_dpq_decode(&s, 7, &idx).unwrap();
            assert_eq!(a, b);
            // a second scheme from the same seed decodes identically
            let t = DpqScheme::new(SchemeKind::Transform { lattice }, gauss(), 11).unwrap();
            assert_eq!(transform_dpq_decode(&t, 7, &idx).unwrap(), a);
            assert_eq!(s.dither(7), t.dither(7));
            assert_ne!(s.dither(7), s.dither(8));
        }
    }

    #[test]
    fn transform_preserves_distribution_even_when_coarse() {
        let s = DpqScheme::new(
            SchemeKind::Transform {
                lattice: LatticeKind::ScaledInteger { step: 4.0, dim: 1 },
            },
            gauss(),
            5,
        )
        .unwrap();
        let xs = source_values(20_000, 6);
        let out: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(b, &x)| s.apply(b as u64, &[x]).unwrap()[0])
            .collect();
        assert!(ks_test(&out, |v| gauss().cdf(v)).unwrap().pass);
    }

    #[test]
    fn awgn_matches_closed_form() {
        let s = DpqScheme::new(SchemeKind::AwgnOracle { noise_var: 1.0 }, gauss(), 7).unwrap();
        let xs = source_values(200_000, 8);
        let out: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(b, &x)| awgn_oracle_apply(&s, b as u64, x).unwrap())
            .collect();
        let mse = xs
            .iter()
            .zip(&out)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / xs.len() as f64;
        assert_abs_diff_eq!(mse, 2.0 - 2.0 * 0.5f64.sqrt(), epsilon = 0.01);
        assert!(ks_test(&out, |v| gauss().cdf(v)).unwrap().pass);
        assert_abs_diff_eq!(s.analytic_rate().unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);

        let tiny = DpqScheme::new(SchemeKind::AwgnOracle { noise_var: 1e-10 }, gauss(), 7).unwrap();
        assert_abs_diff_eq!(
            awgn_oracle_apply(&tiny, 0, 1.3).unwrap(),
            1.3,
            epsilon = 1e-4
        );
        assert!(DpqScheme::new(
            SchemeKind::AwgnOracle { noise_var: 1.0 },
            SourceModel::uniform(0.0, 1.0).unwrap(),
            1
        )
        .is_err());
    }

    #[test]
    fn mismatched_messages_and_kinds_are_rejected() {
        let s = DpqScheme::new(SchemeKind::Simple, gauss(), 1).unwrap();
        assert!(s.decode(0, &Message::Cells(vec![1])).is_err());
        assert!(resample_dpq(&s, 0, 0.1).is_err());
        assert!(s.encode(0, &[0.1, 0.2]).is_err());
        assert!(DpqScheme::new(SchemeKind::Resample { step: 0.0 }, gauss(), 1).is_err());
    }
}

//! Parsers for the compact `name:key=value,...` specs used on the command
//! line and in config files.

use std::collections::BTreeMap;

use dpq_core::bounds::CostTable;
use dpq_core::lattice::LatticeKind;
use dpq_core::prob::SourceModel;
use dpq_core::schemes::SchemeKind;

/// A malformed spec; reported as a usage error.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError(pub String);

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseError {}

type Res<T> = Result<T, ParseError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ParseError(msg.into()))
}

/// Splits `name:k=v,k=v` into the name and its parameters.
fn split(spec: &str) -> Res<(String, BTreeMap<String, String>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = BTreeMap::new();
    for part in rest.split([',', ':']).filter(|p| !p.trim().is_empty()) {
        let Some((k, v)) = part.split_once('=') else {
            return err(format!("expected key=value in `{spec}`, got `{part}`"));
        };
        params.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok((name.trim().to_ascii_lowercase(), params))
}

struct Params {
    spec: String,
    map: BTreeMap<String, String>,
}

impl Params {
    fn f64(&mut self, keys: &[&str], default: Option<f64>) -> Res<f64> {
        for k in keys {
            if let Some(v) = self.map.remove(*k) {
                return v.parse().map_err(|_| {
                    ParseError(format!("`{k}` in `{}` is not a number: {v}", self.spec))
                });
            }
        }
        default.ok_or_else(|| ParseError(format!("`{}` needs `{}`", self.spec, keys[0])))
    }

    fn usize(&mut self, key: &str, default: usize) -> Res<usize> {
        match self.map.remove(key) {
            Some(v) => v.parse().map_err(|_| {
                ParseError(format!("`{key}` in `{}` is not an integer: {v}", self.spec))
            }),
            None => Ok(default),
        }
    }

    fn finish(self) -> Res<()> {
        match self.map.keys().next() {
            Some(k) => err(format!("unknown key `{k}` in `{}`", self.spec)),
            None => Ok(()),
        }
    }
}

fn params(spec: &str) -> Res<(String, Params)> {
    let (name, map) = split(spec)?;
    Ok((
        name,
        Params {
            spec: spec.to_string(),
            map,
        },
    ))
}

/// `gaussian:var=1[,mean=0][,dim=k]`, `uniform:low=0,high=1`,
/// `laplace:loc=0,scale=1`, `pmf:0.5,0.5`.
pub fn parse_source(spec: &str) -> Res<SourceModel> {
    if let Some(rest) = spec.strip_prefix("pmf:") {
        let probs: Vec<f64> = rest
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| ParseError(format!("bad probability `{p}` in `{spec}`")))
            })
            .collect::<Res<_>>()?;
        return SourceModel::pmf(probs).map_err(|e| ParseError(e.to_string()));
    }
    let (name, mut p) = params(spec)?;
    let model = match name.as_str() {
        "gaussian" | "normal" => {
            let mean = p.f64(&["mean", "mu"], Some(0.0))?;
            let var = p.f64(&["var", "variance"], Some(1.0))?;
            SourceModel::gaussian(mean, var)
        }
        "uniform" => {
            let low = p.f64(&["low", "a"], Some(0.0))?;
            let high = p.f64(&["high", "b"], Some(1.0))?;
            SourceModel::uniform(low, high)
        }
        "laplace" => {
            let loc = p.f64(&["loc", "location", "mean"], Some(0.0))?;
            let scale = p.f64(&["scale", "b"], Some(1.0))?;
            SourceModel::laplace(loc, scale)
        }
        other => return err(format!("unknown source family `{other}`")),
    };
    let dim = p.usize("dim", 1)?;
    p.finish()?;
    model
        .and_then(|m| m.with_dim(dim))
        .map_err(|e| ParseError(e.to_string()))
}

/// `cube:step=0.1[,dim=k]` or `hex:scale=0.5`. A missing step or scale is
/// filled from `size` (used by sweeps).
pub fn parse_lattice(spec: &str, size: Option<f64>) -> Res<LatticeKind> {
    let (name, mut p) = params(spec)?;
    let kind = match name.as_str() {
        "cube" | "integer" | "scaled_integer" => {
            let step = match size {
                Some(s) => {
                    p.map.remove("step");
                    s
                }
                None => p.f64(&["step", "delta"], None)?,
            };
            LatticeKind::ScaledInteger {
                step,
                dim: p.usize("dim", 1)?,
            }
        }
        "hex" | "hexagonal" | "a2" => {
            let scale = match size {
                Some(s) => {
                    p.map.remove("scale");
                    s
                }
                None => p.f64(&["scale", "step"], None)?,
            };
            LatticeKind::Hexagonal { scale }
        }
        other => return err(format!("unknown lattice `{other}`")),
    };
    p.finish()?;
    Ok(kind)
}

/// `simple`, `resample:step=0.05`, `transform`, `awgn:eta2=1`. The
/// transform scheme takes its lattice from `lattice`. `param` overrides the
/// scheme's own parameter (step, lattice size or η²).
pub fn parse_scheme(spec: &str, lattice: Option<&str>, param: Option<f64>) -> Res<SchemeKind> {
    let (name, mut p) = params(spec)?;
    let kind = match name.as_str() {
        "simple" => SchemeKind::Simple,
        "resample" => SchemeKind::Resample {
            step: match param {
                Some(v) => {
                    p.map.remove("step");
                    v
                }
                None => p.f64(&["step", "delta"], None)?,
            },
        },
        "transform" => {
            let Some(l) = lattice else {
                return err("the transform scheme needs --lattice");
            };
            SchemeKind::Transform {
                lattice: parse_lattice(l, param)?,
            }
        }
        "awgn" => SchemeKind::AwgnOracle {
            noise_var: match param {
                Some(v) => {
                    p.map.remove("eta2");
                    v
                }
                None => p.f64(&["eta2", "noise_var"], None)?,
            },
        },
        other => return err(format!("unknown scheme `{other}`")),
    };
    p.finish()?;
    Ok(kind)
}

/// `hamming`, `squared` or `absolute` over an alphabet of `size`.
pub fn parse_cost(spec: &str, size: usize) -> Res<CostTable> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "hamming" => Ok(CostTable::hamming(size)),
        "squared" | "mse" => Ok(CostTable::squared(size)),
        "absolute" | "abs" => Ok(CostTable::absolute(size)),
        other => err(format!("unknown cost `{other}`")),
    }
}

/// `lo:hi:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Res<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| ParseError(format!("bad number `{s}` in grid `{spec}`")))
    };
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return err(format!("grid `{spec}` must be lo:hi:count"));
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| ParseError(format!("bad count in grid `{spec}`")))?;
        if count == 0 || !(hi >= lo) {
            return err(format!("grid `{spec}` needs count ≥ 1 and hi ≥ lo"));
        }
        if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        }
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<Res<Vec<f64>>>()?
    };
    if values.is_empty() {
        return err("grid is empty");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return err(format!("grid `{spec}` has non-finite values"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources() {
        assert_eq!(
            parse_source("gaussian:var=1").unwrap(),
            SourceModel::standard_gaussian()
        );
        assert_eq!(
            parse_source("gaussian:mean=2,var=4,dim=2").unwrap().dim(),
            2
        );
        assert_eq!(
            parse_source("pmf:0.5,0.5").unwrap(),
            SourceModel::pmf(vec![0.5, 0.5]).unwrap()
        );
        assert!(parse_source("gaussian:var=-1").is_err());
        assert!(parse_source("gaussian:sigma=1").is_err());
        assert!(parse_source("cauchy").is_err());
        assert!(parse_source("pmf:0.5,0.6").is_err());
    }

    #[test]
    fn schemes_and_lattices() {
        assert_eq!(
            parse_scheme("awgn:eta2=1", None, None).unwrap(),
            SchemeKind::AwgnOracle { noise_var: 1.0 }
        );
        assert_eq!(
            parse_scheme("transform", Some("cube:step=0.1"), None).unwrap(),
            SchemeKind::Transform {
                lattice: LatticeKind::ScaledInteger { step: 0.1, dim: 1 }
            }
        );
        assert_eq!(
            parse_scheme("transform", Some("hex"), Some(0.5)).unwrap(),
            SchemeKind::Transform {
                lattice: LatticeKind::Hexagonal { scale: 0.5 }
            }
        );
        assert_eq!(
            parse_scheme("resample", None, Some(0.2)).unwrap(),
            SchemeKind::Resample { step: 0.2 }
        );
        assert!(parse_scheme("transform", None, None).is_err());
        assert!(parse_scheme("resample", None, None).is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("0.01:2:200").unwrap();
        assert_eq!(g.len(), 200);
        assert_eq!(g[199], 2.0);
        assert_eq!(parse_grid("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("").is_err());
    }
}

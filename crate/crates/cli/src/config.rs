//! Merges command-line flags, an optional flat `key = value` config file and
//! the environment into one resolved run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dpq_core::harness::Units;
use dpq_core::prob::SourceModel;

use crate::parse::{parse_source, ParseError};
use crate::{Cli, Command, Failure};

pub const DEFAULT_N: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const SEED_ENV: &str = "DPQ_SEED";

const FILE_KEYS: &[&str] = &[
    "source", "cost", "dgrid", "units", "scheme", "lattice", "n", "seed", "output", "format",
    "workers", "grid",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub source: Option<String>,
    pub cost: Option<String>,
    pub dgrid: Option<String>,
    pub units: Units,
    pub scheme: Option<String>,
    pub lattice: Option<String>,
    pub n: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: usize,
    pub grid: Option<String>,
}

/// Parses `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, ParseError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ParseError(format!(
                "config line {}: expected `key = value`",
                lineno + 1
            )));
        };
        let key = k.trim().replace('-', "_");
        if !FILE_KEYS.contains(&key.as_str()) {
            return Err(ParseError(format!(
                "config line {}: unknown key `{}`",
                lineno + 1,
                k.trim()
            )));
        }
        let value = v.trim().trim_matches('"').to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(ParseError(format!(
                "config line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ParseError> {
    v.trim()
        .parse()
        .map_err(|_| ParseError(format!("`{key}` must be a non-negative integer, got `{v}`")))
}

impl RunConfig {
    pub fn resolve(cli: &Cli) -> Result<Self, Failure> {
        let mut file = match &cli.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Failure::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut take = |key: &str, flag: &Option<String>| flag.clone().or_else(|| file.remove(key));

        let (command, grid_flag) = match &cli.command {
            Command::Bounds => ("bounds", None),
            Command::Eval { .. } => ("eval", None),
            Command::Sweep { grid, .. } => ("sweep", grid.clone()),
            Command::Selftest => ("selftest", None),
        };
        let source = take("source", &cli.source);
        let cost = take("cost", &cli.cost);
        let dgrid = take("dgrid", &cli.dgrid);
        let scheme = take("scheme", &cli.scheme);
        let lattice = take("lattice", &cli.lattice);
        let grid = take("grid", &grid_flag);
        let units = match take("units", &cli.units).as_deref() {
            None | Some("nats") => Units::Nats,
            Some("bits") => Units::Bits,
            Some(other) => {
                return Err(Failure::Usage(format!(
                    "units must be nats or bits, got `{other}`"
                )))
            }
        };
        let format = match take("format", &cli.format).as_deref() {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => {
                return Err(Failure::Usage(format!(
                    "format must be csv or json, got `{other}`"
                )))
            }
        };
        let n = match cli.n {
            Some(n) => n,
            None => file
                .remove("n")
                .map(|v| parse_num("n", &v))
                .transpose()?
                .unwrap_or(DEFAULT_N),
        };
        let workers = match cli.workers {
            Some(w) => w,
            None => file
                .remove("workers")
                .map(|v| parse_num("workers", &v))
                .transpose()?
                .unwrap_or(0),
        };
        let seed = match cli.seed {
            Some(s) => s,
            None => match file.remove("seed") {
                Some(v) => parse_num("seed", &v)?,
                None => match std::env::var(SEED_ENV) {
                    Ok(v) => parse_num(SEED_ENV, &v)?,
                    Err(_) => DEFAULT_SEED,
                },
            },
        };
        let output = cli
            .output
            .clone()
            .or_else(|| file.remove("output").map(PathBuf::from));
        Ok(Self {
            command,
            source,
            cost,
            dgrid,
            units,
            scheme,
            lattice,
            n,
            seed,
            output,
            format,
            workers,
            grid,
        })
    }

    pub fn source(&self) -> Result<SourceModel, Failure> {
        match &self.source {
            Some(s) => Ok(parse_source(s)?),
            None => Err(Failure::Usage(format!("`{}` needs --source", self.command))),
        }
    }

    pub fn scheme(&self) -> Result<String, Failure> {
        self.scheme
            .clone()
            .ok_or_else(|| Failure::Usage(format!("`{}` needs --scheme", self.command)))
    }

    /// Settings that determine the output, for the `# key=value` preamble.
    /// Worker count and output path are left out: they never change results.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut v = vec![("command".to_string(), self.command.to_string())];
        for (k, val) in [
            ("source", &self.source),
            ("cost", &self.cost),
            ("dgrid", &self.dgrid),
            ("scheme", &self.scheme),
            ("lattice", &self.lattice),
            ("grid", &self.grid),
        ] {
            if let Some(x) = val {
                v.push((k.to_string(), x.clone()));
            }
        }
        v.push(("n".into(), self.n.to_string()));
        v.push(("seed".into(), self.seed.to_string()));
        v.push(("units".into(), self.units.suffix().into()));
        v.push((
            "format".into(),
            if self.format == Format::Json {
                "json"
            } else {
                "csv"
            }
            .into(),
        ));
        v.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
        v
    }

    pub fn echo_map(&self) -> serde_json::Map<String, serde_json::Value> {
        self.echo()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let m = parse_config_file(
            "# comment\nsource = gaussian:var=1\nn=20000 # trailing\n\ncheck_bound_x = 1\n",
        );
        assert!(m.is_err());
        let m = parse_config_file("source = \"gaussian:var=1\"\nn = 20000\nseed=7").unwrap();
        assert_eq!(m["source"], "gaussian:var=1");
        assert_eq!(m["n"], "20000");
        assert!(parse_config_file("n = 1\nn = 2").is_err());
        assert!(parse_config_file("just words").is_err());
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use perc_core::graphgen::{
    load_edge_list, make_clique_union, make_complete, make_hypercube, make_random_regular, make_torus,
};
use perc_core::{keyed, Family, HostGraph};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Theory,
    MatchingConvergence,
    LocalLimit,
    BinpoRate,
    CouplingRate,
    Concentration,
    Census,
    Percolate,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Theory => "theory",
            Experiment::MatchingConvergence => "matching-convergence",
            Experiment::LocalLimit => "local-limit",
            Experiment::BinpoRate => "binpo-rate",
            Experiment::CouplingRate => "coupling-rate",
            Experiment::Concentration => "concentration",
            Experiment::Census => "census",
            Experiment::Percolate => "percolate",
        }
    }

    fn needs_host(self) -> bool {
        !matches!(self, Experiment::Theory | Experiment::BinpoRate)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    Heuristic,
}

/// A parameter list that may be written as a single value in the file.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid<T>(pub Vec<T>);

impl<T> Default for Grid<T> {
    fn default() -> Self {
        Grid(Vec::new())
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Grid<T> {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany<T> {
            One(T),
            Many(Vec<T>),
        }
        Ok(match OneOrMany::deserialize(de)? {
            OneOrMany::One(x) => Grid(vec![x]),
            OneOrMany::Many(xs) => Grid(xs),
        })
    }
}

impl<T> Grid<T> {
    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Grid::is_empty")]
    pub d: Grid<usize>,
    #[serde(default, skip_serializing_if = "Grid::is_empty")]
    pub n: Grid<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_irregular: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Grid::is_empty")]
    pub c: Grid<f64>,
    #[serde(default, skip_serializing_if = "Grid::is_empty")]
    pub r: Grid<usize>,
    /// Offspring cap for the enumerated Galton-Watson measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_cap: Option<usize>,
    /// Unenumerated mass tolerated when `delta_cap` is chosen automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
}

/// A fully resolved experiment. `out` and `threads` do not influence the
/// results, so they are left out of the serialized form and the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "one")]
    pub seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub host: HostConfig,
    #[serde(default)]
    pub params: Params,
}

fn one() -> u64 {
    1
}

pub const DEFAULT_TAIL_TARGET: f64 = 1e-6;
pub const MIN_COUPLING_TRIALS: u64 = 1000;
pub const MIN_CONCENTRATION_SEEDS: u64 = 100;

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            seeds: 1,
            base_seed: 0,
            out: None,
            threads: None,
            host: HostConfig::default(),
            params: Params::default(),
        }
    }

    /// Parse a TOML document. `experiment` may be omitted when `default` is
    /// given; if both are present they must agree.
    pub fn from_toml_str(text: &str, default: Option<Experiment>) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        if let Some(exp) = default {
            match table.get("experiment") {
                None => {
                    table.insert("experiment".into(), toml::Value::String(exp.as_str().into()));
                }
                Some(toml::Value::String(s)) if s == exp.as_str() => {}
                Some(other) => {
                    return Err(CliError::Config(format!(
                        "config names experiment {other} but the subcommand is {exp}"
                    )))
                }
            }
        }
        table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path, default: Option<Experiment>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, default)
    }

    /// Canonical TOML form; identical configs give identical text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash_hex(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        let exp = self.experiment;
        if exp.needs_host() {
            self.host_points()?;
        }
        if exp != Experiment::Percolate && self.params.c.is_empty() {
            return bad(format!("{exp} needs a non-empty params.c grid"));
        }
        if self.params.c.0.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("every c must be finite and non-negative".into());
        }
        if exp == Experiment::Theory && self.params.c.0.iter().any(|&c| c <= 0.0) {
            return bad("theory needs c > 0".into());
        }
        if matches!(exp, Experiment::LocalLimit | Experiment::CouplingRate | Experiment::Concentration | Experiment::Census)
            && self.params.r.is_empty()
        {
            return bad(format!("{exp} needs a non-empty params.r grid"));
        }
        if exp == Experiment::LocalLimit && self.params.r.0.contains(&0) {
            return bad("local-limit needs r >= 1".into());
        }
        if exp == Experiment::BinpoRate && (self.host.d.is_empty() || self.host.d.0.contains(&0)) {
            return bad("binpo-rate needs a grid of positive host.d values".into());
        }
        if exp == Experiment::CouplingRate {
            match self.params.trials {
                Some(t) if t >= MIN_COUPLING_TRIALS => {}
                _ => return bad(format!("coupling-rate needs params.trials >= {MIN_COUPLING_TRIALS}")),
            }
        }
        if exp == Experiment::Concentration && self.seeds < MIN_CONCENTRATION_SEEDS {
            return bad(format!("concentration needs at least {MIN_CONCENTRATION_SEEDS} seeds"));
        }
        if let Some(t) = self.params.tail_target {
            if !(t > 0.0 && t < 1.0) {
                return bad("tail_target must lie in (0, 1)".into());
            }
        }
        Ok(())
    }

    /// Host parameter points in grid order.
    pub fn host_points(&self) -> Result<Vec<HostPoint>, CliError> {
        let h = &self.host;
        let family = match &h.family {
            Some(f) => Family::from_str(f).map_err(|e| CliError::Config(e.to_string()))?,
            None => return Err(CliError::Config(format!("{} needs host.family", self.experiment))),
        };
        let need = |grid: &Grid<usize>, name: &str| {
            if grid.is_empty() {
                Err(CliError::Config(format!("host family {family} needs host.{name}")))
            } else {
                Ok(grid.0.clone())
            }
        };
        let point = |d: Option<usize>, n: Option<usize>| HostPoint {
            family,
            d,
            n,
            k: h.k,
            side: h.side,
            dim: h.dim,
            path: h.path.clone(),
            allow_irregular: h.allow_irregular,
        };
        let points = match family {
            Family::Hypercube => need(&h.d, "d")?.into_iter().map(|d| point(Some(d), None)).collect(),
            Family::Complete => need(&h.n, "n")?.into_iter().map(|n| point(None, Some(n))).collect(),
            Family::RandomRegular => {
                let ns = need(&h.n, "n")?;
                let ds = need(&h.d, "d")?;
                ns.iter().flat_map(|&n| ds.iter().map(move |&d| (n, d))).map(|(n, d)| point(Some(d), Some(n))).collect()
            }
            Family::CliqueUnion => {
                if h.k.is_none() {
                    return Err(CliError::Config("clique-union needs host.k".into()));
                }
                need(&h.d, "d")?.into_iter().map(|d| point(Some(d), None)).collect()
            }
            Family::Torus => {
                if h.side.is_none() || h.dim.is_none() {
                    return Err(CliError::Config("torus needs host.side and host.dim".into()));
                }
                vec![point(None, None)]
            }
            Family::Custom => {
                if h.path.is_none() {
                    return Err(CliError::Config("custom host needs host.path".into()));
                }
                vec![point(None, None)]
            }
        };
        Ok(points)
    }
}

/// One host in a parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HostPoint {
    pub family: Family,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub side: Option<usize>,
    pub dim: Option<usize>,
    pub path: Option<PathBuf>,
    pub allow_irregular: bool,
}

impl HostPoint {
    /// Stable text identifying the host, used in seed derivation.
    pub fn key(&self) -> String {
        let opt = |x: Option<usize>| x.map_or_else(|| "-".to_string(), |v| v.to_string());
        format!(
            "{}:d={}:n={}:k={}:side={}:dim={}:path={}",
            self.family,
            opt(self.d),
            opt(self.n),
            opt(self.k),
            opt(self.side),
            opt(self.dim),
            self.path.as_ref().map_or("-".into(), |p| p.display().to_string())
        )
    }

    /// Materialize the host; random-regular hosts draw from `seed`.
    pub fn build(&self, seed: u64) -> Result<HostGraph, CliError> {
        let host = match self.family {
            Family::Hypercube => make_hypercube(self.d.unwrap())?,
            Family::Complete => make_complete(self.n.unwrap())?,
            Family::RandomRegular => make_random_regular(self.n.unwrap(), self.d.unwrap(), seed)?,
            Family::CliqueUnion => make_clique_union(self.k.unwrap(), self.d.unwrap())?,
            Family::Torus => make_torus(self.side.unwrap(), self.dim.unwrap())?,
            Family::Custom => {
                let path = self.path.as_ref().unwrap();
                let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                load_edge_list(std::io::BufReader::new(file), self.allow_irregular)?
            }
        };
        Ok(host)
    }
}

/// Seed for one cell: a hash of the base seed, the parameter tuple and the
/// seed index, so extending a grid leaves existing cells unchanged.
pub fn cell_seed(base_seed: u64, params: &str, index: u64) -> u64 {
    let digest = Sha256::digest(params.as_bytes());
    let key = u64::from_le_bytes(digest[..8].try_into().unwrap());
    keyed::derive_seed(base_seed, &[key, index])
}

//! TOML experiment configuration.
//!
//! ```toml
//! [problem]
//! loss = "squared-sigmoid"      # or "softmax"
//! lambda = 0.001                # softmax regularizer
//! noise_sigma = 0.0
//! nodes = 10
//! dataset = "data/train.svm"    # or a [problem.synthetic] table
//!
//! [problem.synthetic]
//! samples_per_node = 32
//! dim = 50
//!
//! [participation]
//! scheme = "s-nice"             # "full", "s-nice", "independent"
//! s = 5
//!
//! [compressor]
//! kind = "rand-k"               # or "identity"
//! k = 5
//!
//! [variant]
//! name = "page"                 # gradient, page, finite-mvr, mvr, sync-mvr
//! batch = 1
//!
//! [run]
//! rounds = 1000
//! seeds = [0, 1, 2]
//! gamma = "theory"              # a number, "grid", or { i_min = -10, i_max = 10 }
//! threshold = 1e-4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compressors::{CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::participation::{ParticipationScheme, SchemeKind};
use crate::problems::losses::DEFAULT_LAMBDA;
use crate::problems::Loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub participation: ParticipationConfig,
    #[serde(default)]
    pub compressor: CompressorConfig,
    pub variant: VariantSection,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    SquaredSigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub loss: LossName,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub nodes: usize,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Feature count hint for LIBSVM files.
    #[serde(default)]
    pub features: Option<usize>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Seed for data generation and the node split.
    #[serde(default)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub samples_per_node: usize,
    pub dim: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_flip")]
    pub flip_prob: f64,
}

fn default_density() -> f64 {
    0.2
}

fn default_flip() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Full,
    SNice,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipationConfig {
    pub scheme: SchemeName,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub p_a: Option<f64>,
}

impl Default for ParticipationConfig {
    fn default() -> Self {
        Self { scheme: SchemeName::Full, s: None, p_a: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorName {
    Identity,
    RandK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorName,
    #[serde(default)]
    pub k: Option<usize>,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        Self { kind: CompressorName::Identity, k: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Gradient,
    Page,
    FiniteMvr,
    Mvr,
    SyncMvr,
}

/// Variant choice plus optional overrides of the theory defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub name: VariantName,
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub mega_batch: Option<usize>,
    #[serde(default)]
    pub init_batch: Option<usize>,
    #[serde(default)]
    pub p_page: Option<f64>,
    #[serde(default)]
    pub p_mega: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    /// Target accuracy used by the stochastic parameter choices.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl VariantSection {
    pub fn new(name: VariantName) -> Self {
        Self {
            name,
            batch: None,
            mega_batch: None,
            init_batch: None,
            p_page: None,
            p_mega: None,
            a: None,
            b: None,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GammaSource {
    Theory,
    Grid { i_min: i32, i_max: i32 },
    Fixed(f64),
}

impl GammaSource {
    pub const DEFAULT_GRID: GammaSource = GammaSource::Grid { i_min: -10, i_max: 10 };

    /// Candidate step sizes; `None` means the theory step size.
    pub fn candidates(&self) -> Option<Vec<f64>> {
        match *self {
            GammaSource::Theory => None,
            GammaSource::Fixed(g) => Some(vec![g]),
            GammaSource::Grid { i_min, i_max } => Some((i_min..=i_max).map(|i| 2f64.powi(i)).collect()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaRaw {
    Fixed(f64),
    Named(String),
    Grid { i_min: i32, i_max: i32 },
}

impl<'de> Deserialize<'de> for GammaSource {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match GammaRaw::deserialize(de)? {
            GammaRaw::Fixed(g) => Ok(GammaSource::Fixed(g)),
            GammaRaw::Named(s) if s == "theory" => Ok(GammaSource::Theory),
            GammaRaw::Named(s) if s == "grid" => Ok(GammaSource::DEFAULT_GRID),
            GammaRaw::Named(s) => Err(D::Error::custom(format!("unknown gamma source `{s}`"))),
            GammaRaw::Grid { i_min, i_max } => Ok(GammaSource::Grid { i_min, i_max }),
        }
    }
}

fn default_gamma() -> GammaSource {
    GammaSource::Theory
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_gamma")]
    pub gamma: GammaSource,
    /// Gradient-norm-squared level for rounds-to-threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file. A relative dataset path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(ds), Some(dir)) = (cfg.problem.dataset.as_mut(), path.parent()) {
            if ds.is_relative() {
                *ds = dir.join(&*ds);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.run.seeds.is_empty() {
            return bad("seed list must not be empty");
        }
        if self.run.rounds == 0 {
            return bad("rounds must be positive");
        }
        if self.problem.nodes == 0 {
            return bad("nodes must be positive");
        }
        match (&self.problem.dataset, &self.problem.synthetic) {
            (Some(_), Some(_)) => return bad("give either a dataset path or a synthetic table, not both"),
            (None, None) => return bad("problem needs a dataset path or a synthetic table"),
            _ => {}
        }
        match self.run.gamma {
            GammaSource::Fixed(g) if !(g > 0.0 && g.is_finite()) => return bad("fixed gamma must be positive and finite"),
            GammaSource::Grid { i_min, i_max } if i_min > i_max || i_min < -1000 || i_max > 1000 => {
                return bad("grid bounds must satisfy -1000 <= i_min <= i_max <= 1000")
            }
            _ => {}
        }
        if let Some(t) = self.run.threshold {
            if t.is_nan() || t < 0.0 {
                return bad("threshold must be nonnegative");
            }
        }
        self.scheme()?;
        Ok(())
    }

    pub fn loss(&self) -> Loss {
        match self.problem.loss {
            LossName::SquaredSigmoid => Loss::SquaredSigmoid,
            LossName::Softmax => Loss::SoftmaxNonconvexReg { lambda: self.problem.lambda.unwrap_or(DEFAULT_LAMBDA) },
        }
    }

    pub fn scheme(&self) -> Result<ParticipationScheme> {
        let p = &self.participation;
        let kind = match p.scheme {
            SchemeName::Full => SchemeKind::Full,
            SchemeName::SNice => SchemeKind::SNice {
                s: p.s.ok_or_else(|| Error::Config("s-nice participation needs `s`".into()))?,
            },
            SchemeName::Independent => SchemeKind::Independent {
                p_a: p.p_a.ok_or_else(|| Error::Config("independent participation needs `p_a`".into()))?,
            },
        };
        ParticipationScheme::new(kind, self.problem.nodes)
    }

    /// Compressor over a parameter vector of length `dim`.
    pub fn compressor(&self, dim: usize) -> Result<CompressorSpec> {
        let kind = match self.compressor.kind {
            CompressorName::Identity => CompressorKind::Identity,
            CompressorName::RandK => CompressorKind::RandK {
                k: self.compressor.k.ok_or_else(|| Error::Config("rand-k compressor needs `k`".into()))?,
            },
        };
        CompressorSpec::new(kind, dim)
    }
}

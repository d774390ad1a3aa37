use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::community::DEFAULT_TELEPORT;
use crate::density::Assignment;
use crate::error::{Error, Result};
use crate::flowfield::{AnalyticField, AnalyticKind, BlockGrid, Bounds, GridField, VectorField};
use crate::hon::DistributionMode;
use crate::optim::TrainConfig;
use crate::registry::{BaselineSettings, BuilderRegistry};

/// Where velocities come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSource {
    Abc {
        #[serde(default = "abc_a")]
        a: f64,
        #[serde(default = "abc_b")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Tornado,
    Constant {
        velocity: [f64; 3],
        extent: [f64; 3],
    },
    /// JSON header plus raw f32 payload.
    Grid {
        path: PathBuf,
    },
}

fn abc_a() -> f64 {
    3f64.sqrt()
}
fn abc_b() -> f64 {
    2f64.sqrt()
}
fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub source: FieldSource,
    /// Resample an analytic field onto a regular grid before tracing.
    pub samples: Option<[usize; 3]>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            source: FieldSource::Abc {
                a: abc_a(),
                b: abc_b(),
                c: 1.0,
            },
            samples: Some([64, 64, 64]),
        }
    }
}

impl FieldConfig {
    /// Grid-file paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Box<dyn VectorField>> {
        let analytic = match &self.source {
            FieldSource::Grid { path } => {
                let p = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                return Ok(Box::new(GridField::read(&p)?));
            }
            FieldSource::Abc { a, b, c } => AnalyticField::new(
                AnalyticKind::Abc {
                    a: *a,
                    b: *b,
                    c: *c,
                },
                AnalyticField::abc().bounds(),
            ),
            FieldSource::Tornado => AnalyticField::tornado(),
            FieldSource::Constant { velocity, extent } => {
                AnalyticField::constant(*velocity, Bounds::new([0.0; 3], *extent)?)
            }
        };
        match self.samples {
            Some(dims) => Ok(Box::new(GridField::sample(&analytic, dims)?)),
            None => Ok(Box::new(analytic)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlocksConfig {
    pub dims: [usize; 3],
}

impl Default for BlocksConfig {
    fn default() -> Self {
        BlocksConfig { dims: [6, 6, 6] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
    /// Integration step as a fraction of the smallest block edge.
    pub step_fraction: f64,
    pub max_steps: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train: 10_000,
            validation: 5_000,
            test: 15_000,
            seed: 7,
            step_fraction: 0.25,
            max_steps: 2000,
        }
    }
}

/// One network to build: a registry name and, for higher-order kinds, an order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub kind: String,
    #[serde(default)]
    pub order: Option<usize>,
}

impl NetworkSpec {
    pub fn new(kind: &str, order: Option<usize>) -> Self {
        NetworkSpec {
            kind: kind.to_string(),
            order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworksConfig {
    pub build: Vec<NetworkSpec>,
    pub distribution: DistributionMode,
    pub promotion_threshold: Option<f64>,
    pub fixed_min_support: u64,
}

impl NetworksConfig {
    pub fn baseline(&self) -> BaselineSettings {
        BaselineSettings {
            distribution: self.distribution,
            promotion_threshold: self.promotion_threshold,
            fixed_min_support: self.fixed_min_support,
        }
    }
}

impl Default for NetworksConfig {
    fn default() -> Self {
        let s = NetworkSpec::new;
        NetworksConfig {
            build: vec![
                s("fon", None),
                s("fon+", None),
                s("var", Some(3)),
                s("fixed", Some(3)),
                s("flowhon", Some(2)),
                s("flowhon", Some(3)),
                s("flowhon", Some(4)),
            ],
            distribution: DistributionMode::Approximate,
            promotion_threshold: None,
            fixed_min_support: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub horizon: usize,
    pub epsilon: f64,
    pub assignment: Assignment,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon: 8,
            epsilon: 1e-8,
            assignment: Assignment::Approximate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min_markov_time: f64,
    pub max_markov_time: f64,
    pub step: f64,
    pub teleport: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            min_markov_time: 0.5,
            max_markov_time: 3.5,
            step: 0.1,
            teleport: DEFAULT_TELEPORT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub network: NetworkSpec,
    /// Test particles re-traced for the streamline view.
    pub streamlines: usize,
    pub max_points: usize,
    /// Color nodes by the partition found at this Markov time.
    pub markov_time: Option<f64>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            network: NetworkSpec::new("flowhon", Some(3)),
            streamlines: 200,
            max_points: 500,
            markov_time: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; relative paths resolve against the config file.
    pub out: Option<PathBuf>,
    pub field: FieldConfig,
    pub blocks: BlocksConfig,
    pub corpus: CorpusConfig,
    pub networks: NetworksConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub export: ExportConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(out) = &cfg.out {
            if out.is_relative() {
                cfg.out = Some(base.join(out));
            }
        }
        if let FieldSource::Grid { path: p } = &mut cfg.field.source {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks.dims.contains(&0) {
            return bad(format!(
                "block dims must be positive, got {:?}",
                self.blocks.dims
            ));
        }
        let c = &self.corpus;
        if c.train == 0 || c.validation == 0 || c.test == 0 {
            return bad("corpus counts must be positive".into());
        }
        if !(c.step_fraction > 0.0 && c.step_fraction.is_finite()) || c.max_steps == 0 {
            return bad("step_fraction and max_steps must be positive".into());
        }
        if let Some(s) = self.field.samples {
            if s.iter().any(|&d| d < 2) {
                return bad(format!("field samples need at least 2 per axis, got {s:?}"));
            }
        }
        let registry = BuilderRegistry::with_defaults();
        for spec in self.networks.build.iter().chain([&self.export.network]) {
            let b = registry.get(&spec.kind)?;
            match (b.takes_order(), spec.order) {
                (true, None) => return bad(format!("network '{}' needs an order", spec.kind)),
                (true, Some(k)) if !(1..=8).contains(&k) => {
                    return bad(format!("order {k} outside 1..=8"))
                }
                _ => {}
            }
        }
        self.train.validate()?;
        if self.eval.horizon == 0 || !(self.eval.epsilon > 0.0) {
            return bad("eval horizon and epsilon must be positive".into());
        }
        let s = &self.sweep;
        if !(s.step > 0.0 && s.min_markov_time > 0.0 && s.max_markov_time >= s.min_markov_time) {
            return bad("sweep range must be positive and increasing".into());
        }
        if !(0.0..1.0).contains(&s.teleport) {
            return bad(format!("teleport must lie in [0, 1), got {}", s.teleport));
        }
        if self.export.max_points < 2 {
            return bad("export.max_points must be at least 2".into());
        }
        Ok(())
    }

    /// Digest of the settings that shape the corpus.
    pub fn corpus_key(&self) -> String {
        digest_json(&(&self.field, &self.blocks, &self.corpus))
    }

    /// Digest of the settings that shape the networks.
    pub fn network_key(&self) -> String {
        digest_json(&(&self.networks.baseline(), &self.train))
    }

    pub fn grid(&self, field: &dyn VectorField) -> Result<BlockGrid> {
        BlockGrid::new(field.bounds(), self.blocks.dims)
    }
}

pub(crate) fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_protocol_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.corpus.train, 10_000);
        assert_eq!(c.blocks.dims, [6, 6, 6]);
        assert_eq!(c.train.horizon, 8);
        assert_eq!(c.train.iterations, 100);
        assert_eq!(c.train.merge_threshold, 0.04);
        assert_eq!(c.networks.build.len(), 7);
    }

    #[test]
    fn shipped_example_matches_defaults() {
        let mut c = RunConfig::from_toml(include_str!("../../../../configs/abc.toml")).unwrap();
        c.out = None;
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[corpus]\ntrian = 5\n"),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlr = 0.1\n").is_err());
    }

    #[test]
    fn parses_sections() {
        let text = r#"
            [field]
            source = { constant = { velocity = [1.0, 0.0, 0.0], extent = [10.0, 2.0, 2.0] } }
            [blocks]
            dims = [5, 1, 1]
            [corpus]
            train = 10
            validation = 5
            test = 15
            [networks]
            promotion_threshold = 0.5
            [[networks.build]]
            kind = "fon"
            [[networks.build]]
            kind = "flowhon"
            order = 2
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.networks.baseline().promotion_threshold, Some(0.5));
        assert_eq!(c.networks.build[1], NetworkSpec::new("flowhon", Some(2)));
        assert_eq!(c.blocks.dims, [5, 1, 1]);
    }

    #[test]
    fn missing_order_and_bad_kind_rejected() {
        assert!(RunConfig::from_toml("[[networks.build]]\nkind = \"flowhon\"\n").is_err());
        assert!(matches!(
            RunConfig::from_toml("[[networks.build]]\nkind = \"octree\"\n"),
            Err(Error::UnknownKind(_))
        ));
        assert!(RunConfig::from_toml("[blocks]\ndims = [0, 1, 1]\n").is_err());
    }

    #[test]
    fn keys_track_relevant_sections() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.sweep.step = 0.2;
        assert_eq!(a.corpus_key(), b.corpus_key());
        assert_eq!(a.network_key(), b.network_key());
        b.corpus.seed = 8;
        assert_ne!(a.corpus_key(), b.corpus_key());
    }
}

//! Turning command-line flags into a flow configuration and a target dataset.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use swflow::datagen::{load_dataset, normalize_rows, write_rows, Dataset, ToyTarget};
use swflow::flow::{FlowConfig, Variant};
use swflow::mechanism::sigma_for_epsilon_with_mode;

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 2D five-mode toy: n_theta=200, h=1, lambda=0.001, K=200.
    PaperToy,
    /// 8D unit-normalised latent codes: n_theta=70, delta=1e-5, K=35, sigma=0.68.
    #[value(name = "paper-latent-8d")]
    PaperLatent8d,
}

impl Preset {
    pub fn config(self) -> FlowConfig {
        match self {
            Preset::PaperToy => FlowConfig::toy(0.0, 0),
            Preset::PaperLatent8d => FlowConfig {
                n_theta: 70,
                k_steps: 35,
                sigma: 0.68,
                delta: 1e-5,
                n_particles: None,
                require_normalized: true,
                snapshots: None,
                ..FlowConfig::toy(0.68, 0)
            },
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Preset::PaperToy => 2,
            Preset::PaperLatent8d => 8,
        }
    }
}

/// Flags shared by commands that need a flow configuration.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigArgs {
    /// JSON file with flow configuration keys.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Smoothing std; overrides the configuration.
    #[arg(long, conflicts_with = "epsilon")]
    pub sigma: Option<f64>,
    /// Per-release privacy target; sigma is calibrated from it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub k_steps: Option<usize>,
}

pub fn read_config(path: &Path) -> CliResult<FlowConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("bad config {}: {e}", path.display())))
}

impl ConfigArgs {
    /// The configuration before sigma calibration.
    pub fn base(&self) -> CliResult<FlowConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => read_config(path)?,
            (None, Some(p)) => p.config(),
            (None, None) => return Err(Failure::config("one of --config or --preset is required")),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(sigma) = self.sigma {
            cfg.sigma = sigma;
        }
        if let Some(k) = self.k_steps {
            cfg.k_steps = k;
        }
        Ok(cfg)
    }

    /// Applies `--epsilon` for data of dimension `dim` and validates.
    pub fn finish(&self, mut cfg: FlowConfig, dim: usize) -> CliResult<FlowConfig> {
        cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
        if let Some(eps) = self.epsilon {
            cfg.sigma =
                sigma_for_epsilon_with_mode(eps, cfg.delta, cfg.n_theta, dim, cfg.norm_factor, cfg.sensitivity_mode)?;
        }
        Ok(cfg)
    }
}

/// Where the target rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Toy { spec: ToyTarget },
    File { path: PathBuf, normalize: bool },
}

impl Source {
    pub fn load(&self) -> CliResult<Dataset> {
        match self {
            Source::Toy { spec } => Ok(Dataset::new(spec.sample()?)?),
            Source::File { path, normalize } => {
                if !path.exists() {
                    return Err(Failure::config(format!("dataset {} does not exist", path.display())));
                }
                let data = load_dataset(path, None)?;
                if *normalize {
                    Ok(normalize_rows(data.rows())?)
                } else {
                    Ok(data)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SourceArgs {
    /// Use the built-in 2D toy target.
    #[arg(long, conflicts_with = "data")]
    pub toy: bool,
    /// JSON toy layout (components, radius, variance, samples, seed).
    #[arg(long, value_name = "PATH")]
    pub toy_spec: Option<PathBuf>,
    /// Headerless CSV of target rows.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Scale every target row to unit norm after loading.
    #[arg(long, requires = "data")]
    pub normalize: bool,
}

pub fn read_toy_spec(path: Option<&Path>) -> CliResult<ToyTarget> {
    match path {
        None => Ok(ToyTarget::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("cannot read toy spec {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("bad toy spec {}: {e}", p.display())))
        }
    }
}

impl SourceArgs {
    pub fn source(&self) -> CliResult<Option<Source>> {
        if self.toy || self.toy_spec.is_some() {
            return Ok(Some(Source::Toy { spec: read_toy_spec(self.toy_spec.as_deref())? }));
        }
        match &self.data {
            Some(path) => {
                let path = fs::canonicalize(path)
                    .map_err(|e| Failure::config(format!("dataset {}: {e}", path.display())))?;
                Ok(Some(Source::File { path, normalize: self.normalize }))
            }
            None => Ok(None),
        }
    }
}

/// `sha256:<hex>` of the rows in dataset CSV form.
pub fn fingerprint(data: &Dataset) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, data.rows()).expect("writing to memory");
    let digest = Sha256::digest(&buf);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// The target releases a run makes: one per iteration or one up front.
pub fn release_iterations(cfg: &FlowConfig) -> Vec<usize> {
    match cfg.variant {
        Variant::Resampling => (0..cfg.k_steps).collect(),
        Variant::Presampled => vec![0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn presets_validate() {
        for p in [Preset::PaperToy, Preset::PaperLatent8d] {
            p.config().validate().unwrap();
        }
        let latent = Preset::PaperLatent8d.config();
        assert_eq!((latent.n_theta, latent.delta, latent.k_steps), (70, 1e-5, 35));
    }

    #[test]
    fn releases_per_variant() {
        let mut cfg = Preset::PaperToy.config();
        cfg.k_steps = 4;
        assert_eq!(release_iterations(&cfg), vec![0, 1, 2, 3]);
        cfg.variant = Variant::Presampled;
        assert_eq!(release_iterations(&cfg), vec![0]);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Dataset::new(array![[1.0, 2.0], [3.0, 4.5]]).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), "sha256:".len() + 64);
    }

    #[test]
    fn epsilon_sets_sigma() {
        let args = ConfigArgs { preset: Some(Preset::PaperLatent8d), epsilon: Some(10.0), ..Default::default() };
        let cfg = args.finish(args.base().unwrap(), 8).unwrap();
        assert!((cfg.sigma - 3.63).abs() < 0.01, "{}", cfg.sigma);
    }
}

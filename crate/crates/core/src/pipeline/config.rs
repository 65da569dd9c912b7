use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{InferenceOptions, LadBackend, Model, VarianceModel};
use crate::synth::{NoiseLaw, NoiseSpec, SynthConfig};

/// How contrasts are coupled during inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// One graph over every contrast.
    #[default]
    Joint,
    /// Each histology contrast solved with the reference alone.
    PerContrast,
}

impl Coupling {
    pub fn label(&self) -> &'static str {
        match self {
            Coupling::Joint => "st3",
            Coupling::PerContrast => "st2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub lp_tol: f64,
    pub lp_max_iters: Option<usize>,
    pub ridge: f64,
    pub variance_model: VarianceModel,
    pub lad_backend: LadBackend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = InferenceOptions::default();
        SolverConfig {
            tol: o.tol,
            max_outer: o.max_outer,
            lp_tol: o.lp_tol,
            lp_max_iters: o.lp_max_iters,
            ridge: o.ridge,
            variance_model: o.variance_model,
            lad_backend: o.lad_backend,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> InferenceOptions {
        InferenceOptions {
            tol: self.tol,
            max_outer: self.max_outer,
            fixed_params: None,
            variance_model: self.variance_model,
            lad_backend: self.lad_backend,
            lp_tol: self.lp_tol,
            lp_max_iters: self.lp_max_iters,
            ridge: self.ridge,
        }
    }
}

/// What gets corrupted for a nonzero outlier fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Whole sections: every registration touching a flagged section is
    /// garbage and the section is left out of the metrics.
    #[default]
    Slices,
    /// Individual registrations of the joint graph.
    Rows,
}

/// A generated stack: levels `1..=levels`, contrasts `0..=contrasts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub levels: usize,
    pub contrasts: usize,
    pub height: usize,
    pub width: usize,
    /// Chain deformations are drawn with `sigma_range` scaled by this.
    pub chain_scale: f64,
    pub noise: NoiseSpec,
    pub outlier_mode: OutlierMode,
    pub outlier_fraction: f64,
    /// Restrict each control site to registrations whose sections both
    /// cover it. Off treats every section as tissue everywhere.
    pub prune_by_mask: bool,
    /// Deformation generator; its `seed` and `outlier_fraction` are
    /// replaced by the run seed and the outlier fraction in use.
    pub synth: SynthConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            levels: 10,
            contrasts: 2,
            height: 64,
            width: 64,
            chain_scale: 0.5,
            noise: NoiseSpec::none(),
            outlier_mode: OutlierMode::Slices,
            outlier_fraction: 0.0,
            prune_by_mask: true,
            synth: SynthConfig::default(),
        }
    }
}

impl SyntheticConfig {
    pub fn synth_for(&self, seed: u64, fraction: f64) -> SynthConfig {
        SynthConfig {
            seed,
            outlier_fraction: fraction,
            ..self.synth.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.height < 2 || self.width < 2 {
            return Err(Error::Config(
                "synthetic stack needs levels >= 1 and images of at least 2x2".into(),
            ));
        }
        let ok = |v: f64| v >= 0.0;
        if !ok(self.chain_scale) || !ok(self.noise.inter) || !ok(self.noise.intra) {
            return Err(Error::Config(
                "noise scales and chain_scale must be non-negative".into(),
            ));
        }
        self.synth_for(0, self.outlier_fraction).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub stack: SyntheticConfig,
    pub models: Vec<Model>,
    pub couplings: Vec<Coupling>,
    pub p_values: Vec<u32>,
    pub outlier_fractions: Vec<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            stack: SyntheticConfig {
                levels: 20,
                noise: NoiseSpec {
                    law: NoiseLaw::Gaussian,
                    inter: 1.0,
                    intra: 0.5,
                },
                ..SyntheticConfig::default()
            },
            models: vec![Model::Laplacian, Model::Gaussian],
            couplings: vec![Coupling::PerContrast, Coupling::Joint],
            p_values: vec![0, 1, 2, 3, 4],
            outlier_fractions: vec![0.0, 0.02, 0.05, 0.10, 0.20],
        }
    }
}

/// One JSON document driving `reconstruct`, `benchmark` and `lp-dump`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset manifest; absent when `synthetic` is given.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_p")]
    pub p: u32,
    /// Control grid reduction: sites every `control_factor` pixels.
    #[serde(default = "default_factor")]
    pub control_factor: usize,
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
}

fn default_model() -> Model {
    Model::Laplacian
}

fn default_p() -> u32 {
    2
}

fn default_factor() -> usize {
    8
}

impl PipelineConfig {
    /// Minimal config writing to `output`.
    pub fn new(output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: None,
            model: default_model(),
            p: default_p(),
            control_factor: default_factor(),
            output: output.into(),
            parallelism: 0,
            seed: 0,
            coupling: Coupling::Joint,
            solver: SolverConfig::default(),
            synthetic: None,
            benchmark: None,
        }
    }

    /// Reads a config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &cfg.manifest {
            cfg.manifest = Some(base.join(m));
        }
        cfg.output = base.join(&cfg.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_factor == 0 {
            return Err(Error::Config("control_factor must be at least 1".into()));
        }
        if !(self.solver.tol > 0.0 && self.solver.lp_tol > 0.0 && self.solver.ridge >= 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(Error::Config(format!("manifest {} does not exist", m.display())));
            }
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if let Some(b) = &self.benchmark {
            b.stack.validate()?;
            if b.outlier_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::Config("outlier fractions must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

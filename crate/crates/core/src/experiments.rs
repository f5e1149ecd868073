//! Monte-Carlo error tables: estimator comparisons on the canonical planar
//! densities and the curvature-by-radius grid of patch reconstructions.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::mean_std;
use crate::error::{validate, Error, Result};
use crate::manifold::{patch_trial, CenteredDensity, PatchConfig, PatchTarget, PatchTrial, Transform};
use crate::pipeline::{Estimator, Pipeline, PipelineConfig};
use crate::pointcloud::{canonical, eval_density, sample_density, DensitySpec};
use crate::rng::Seed;
use crate::solver::RegConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    /// Random Gaussian-mixture instances, a fresh one per trial.
    T1,
    /// The Gaussian-plus-box mixture.
    T2,
    /// Patch reconstructions on the paraboloid.
    Patch,
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(TableId::T1),
            "t2" => Ok(TableId::T2),
            "patch" => Ok(TableId::Patch),
            _ => Err(Error::Validation(format!("unknown table {s:?} (expected T1, T2 or patch)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub trials: usize,
    pub m: usize,
    pub seed: Seed,
    pub methods: Vec<Estimator>,
    /// Pixels per axis of the reconstruction grid.
    pub resolution: usize,
    pub pipeline: PipelineConfig,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            m: 1000,
            seed: Seed::new(0),
            methods: Estimator::ALL.to_vec(),
            resolution: 100,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Errors of one method over all trials. Failed trials are excluded from the
/// statistics and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Estimator,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub errors: Vec<f64>,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    /// Inversions whose solver hit its iteration cap.
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub table: TableId,
    pub m: usize,
    pub trials: usize,
    pub seed: Seed,
    pub methods: Vec<MethodSummary>,
}

impl ErrorTable {
    pub fn method(&self, e: Estimator) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == e)
    }
}

/// Density used by trial `t` of a table.
pub fn table_density(id: TableId, seed: Seed, trial: u64) -> Result<DensitySpec> {
    match id {
        TableId::T1 => Ok(canonical::density1(seed.substream(trial).substream(0))),
        TableId::T2 => Ok(canonical::density3()),
        TableId::Patch => Err(Error::Validation("the patch table has its own runner".into())),
    }
}

/// Runs every method on `cfg.trials` samples of the table's density.
pub fn error_table(id: TableId, cfg: &TableConfig) -> Result<ErrorTable> {
    validate(cfg.trials >= 1, || "at least one trial is needed".into())?;
    validate(!cfg.methods.is_empty(), || "at least one method is needed".into())?;
    let first = table_density(id, cfg.seed, 0)?;
    let pipeline = Pipeline::for_spec(&first, cfg.resolution, cfg.pipeline.clone())?;
    type Run = std::result::Result<(f64, bool), String>;
    let runs: Vec<Vec<Run>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let setup = table_density(id, cfg.seed, t).and_then(|spec| {
                let truth = eval_density(&spec, pipeline.grid())?;
                let cloud = sample_density(&spec, cfg.m, cfg.seed.substream(t).substream(1))?;
                Ok((truth, cloud))
            });
            let (truth, cloud) = match setup {
                Ok(v) => v,
                Err(e) => return vec![Err(e.to_string()); cfg.methods.len()],
            };
            cfg.methods
                .iter()
                .map(|&e| {
                    pipeline
                        .run(&cloud, e, Some(&truth.values))
                        .map(|o| {
                            let converged = o.report.as_ref().map_or(true, |r| r.converged);
                            (o.error.expect("truth supplied"), converged)
                        })
                        .map_err(|err| err.to_string())
                })
                .collect()
        })
        .collect();
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut errors = Vec::new();
            let mut failure_messages = Vec::new();
            let mut not_converged = 0;
            for trial in &runs {
                match &trial[k] {
                    Ok((e, converged)) => {
                        errors.push(*e);
                        not_converged += usize::from(!converged);
                    }
                    Err(msg) => failure_messages.push(msg.clone()),
                }
            }
            let (mean, std) = mean_std(&errors);
            MethodSummary {
                method,
                mean: (!errors.is_empty()).then_some(mean),
                std: (!errors.is_empty()).then_some(std),
                failures: failure_messages.len(),
                failure_messages,
                not_converged,
                errors,
            }
        })
        .collect();
    Ok(ErrorTable {
        table: id,
        m: cfg.m,
        trials: cfg.trials,
        seed: cfg.seed,
        methods,
    })
}

// ---------------------------------------------------------------------------
// Patch table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTableConfig {
    pub m: usize,
    pub trials: usize,
    pub seed: Seed,
    pub kappas: Vec<f64>,
    pub radii: Vec<f64>,
    pub transform: Transform,
    pub target: PatchTarget,
    pub p: f64,
    pub resolution: usize,
    pub reg: RegConfig,
}

impl Default for PatchTableConfig {
    fn default() -> Self {
        Self {
            m: 5000,
            trials: 3,
            seed: Seed::new(0),
            kappas: vec![0.01, 0.05, 0.1],
            radii: vec![5.0, 10.0, 20.0],
            transform: Transform::Spherical,
            target: PatchTarget::TangentBall,
            p: 90.0,
            resolution: 50,
            reg: RegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCell {
    pub kappa: f64,
    pub r: f64,
    pub trials: Vec<PatchTrial>,
    pub failures: Vec<String>,
    pub median_error: Option<f64>,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub median_count: Option<f64>,
}

/// Rows follow `radii`, columns follow `kappas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTable {
    pub config: PatchTableConfig,
    pub cells: Vec<Vec<PatchCell>>,
}

impl PatchTable {
    pub fn cell(&self, kappa: f64, r: f64) -> Option<&PatchCell> {
        self.cells.iter().flatten().find(|c| c.kappa == kappa && c.r == r)
    }
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Runs the paraboloid patch experiment for every `(r, kappa)` pair on
/// `density`. Trial `t` uses the same planar sample in every cell.
pub fn patch_table(density: &DensitySpec, cfg: &PatchTableConfig) -> Result<PatchTable> {
    validate(cfg.trials >= 1, || "at least one trial is needed".into())?;
    validate(cfg.kappas.iter().all(|k| *k >= 0.0), || "curvatures must be nonnegative".into())?;
    let centered = CenteredDensity::new(density.clone())?;
    let cells = cfg
        .radii
        .iter()
        .map(|&r| {
            let patch_cfg = PatchConfig {
                r,
                p: cfg.p,
                transform: cfg.transform,
                resolution: cfg.resolution,
                target: cfg.target,
            };
            patch_cfg.validate()?;
            cfg.kappas
                .iter()
                .map(|&kappa| {
                    let runs: Vec<Result<PatchTrial>> = (0..cfg.trials as u64)
                        .into_par_iter()
                        .map(|t| patch_trial(&centered, kappa, cfg.m, &patch_cfg, &cfg.reg, cfg.seed.substream(t)))
                        .collect();
                    let mut trials = Vec::new();
                    let mut failures = Vec::new();
                    for run in runs {
                        match run {
                            Ok(t) => trials.push(t),
                            Err(e) => failures.push(e.to_string()),
                        }
                    }
                    let errors: Vec<f64> = trials.iter().filter_map(|t| t.error).collect();
                    let counts: Vec<f64> = trials.iter().map(|t| t.count as f64).collect();
                    let (mean, std) = mean_std(&errors);
                    Ok(PatchCell {
                        kappa,
                        r,
                        median_error: median(&errors),
                        mean_error: (!errors.is_empty()).then_some(mean),
                        std_error: (!errors.is_empty()).then_some(std),
                        median_count: median(&counts),
                        trials,
                        failures,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchTable {
        config: cfg.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_parse() {
        assert_eq!("t1".parse::<TableId>().unwrap(), TableId::T1);
        assert_eq!("PATCH".parse::<TableId>().unwrap(), TableId::Patch);
        assert!("t9".parse::<TableId>().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn small_table_has_every_method() {
        let cfg = TableConfig {
            trials: 2,
            m: 300,
            resolution: 24,
            methods: vec![Estimator::Kde, Estimator::Fbp, Estimator::Hs],
            ..Default::default()
        };
        let t = error_table(TableId::T2, &cfg).unwrap();
        assert_eq!(t.methods.len(), 3);
        for s in &t.methods {
            assert_eq!(s.errors.len() + s.failures, 2);
            assert!(s.mean.is_some() && s.std.is_some());
        }
        assert_eq!(error_table(TableId::T2, &cfg).unwrap(), t);
    }

    #[test]
    fn t1_uses_a_fresh_instance_per_trial() {
        let s = Seed::new(4);
        assert_ne!(
            table_density(TableId::T1, s, 0).unwrap(),
            table_density(TableId::T1, s, 1).unwrap()
        );
        assert!(table_density(TableId::Patch, s, 0).is_err());
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use raden::bounds::{dkw_epsilon, halfspace_l2_bound, spherical_l2_bound};
use raden::experiments::{error_table, patch_table, PatchTableConfig, TableConfig, TableId};
use raden::manifold::{patch_density, PatchConfig, Transform};
use raden::pipeline::{Estimator, Pipeline, PipelineConfig};
use raden::pointcloud::canonical;
use raden::projection::{make_ball_geometry, make_halfspace_geometry, BallConfig, Geometry, HalfSpaceConfig};
use raden::solver::{Penalty, RegConfig, Selection};
use raden::{eval_density, measure, sample_density, DensitySpec, Error, PixelGrid, PointCloud, Result, Seed};

#[derive(Parser)]
#[command(name = "raden", version, about = "Density estimation from empirical Radon projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in density spec as JSON.
    Spec {
        /// density1, density2, density3 or density4.
        #[arg(long)]
        name: String,
        /// Instance seed (density1 only).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a point cloud from a density spec.
    Sample {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count the points of a cloud in every region of a geometry.
    Project {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_enum)]
        transform: TransformArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Write raw counts instead of fractions of m.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a density by regularized inversion of its projections.
    Reconstruct {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_enum)]
        transform: TransformArg,
        #[arg(long, value_enum, default_value_t = PenaltyArg::Tv)]
        penalty: PenaltyArg,
        #[arg(long, value_enum, default_value_t = SelectionArg::Gcv)]
        selection: SelectionArg,
        /// Absolute lambda for fixed selection.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Density spec of the ground truth; adds the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output prefix for .csv, .pgm and .json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Kernel or backprojection estimate of a planar cloud.
    Baseline {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_enum)]
        method: BaselineArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density at query points of a cloud lying on a surface.
    Patch {
        #[arg(long)]
        cloud: PathBuf,
        /// CSV of query points with the cloud's dimension.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        r: f64,
        /// Percentage of variance the retained axes must explain.
        #[arg(long, default_value_t = 90.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = TransformArg::Sph)]
        transform: TransformArg,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        /// Output prefix for .csv and .json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce an error table.
    Table {
        #[arg(long, value_parser = parse_table)]
        id: TableId,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: u64,
        /// Samples per trial (1000 for T1/T2, 5000 for patch).
        #[arg(long)]
        m: Option<usize>,
        /// Comma separated subset of sph,hs,kde,fbp.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Transform of the patch table.
        #[arg(long, value_enum, default_value_t = TransformArg::Sph)]
        transform: TransformArg,
        /// Pixels per axis (100 for T1/T2, 50 for patch).
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an error bound.
    Bounds {
        #[arg(value_enum)]
        kind: BoundKind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Pixels per axis.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Grid box as x0,y0,x1,y1; defaults to the truth domain or [0,100]^2.
    #[arg(long, value_delimiter = ',')]
    bbox: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Sph,
    Hs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Tv,
    Tikhonov,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Gcv,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Kde,
    Fbp,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Dkw,
    HsBound,
    SphBound,
}

fn parse_table(s: &str) -> std::result::Result<TableId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl TransformArg {
    fn estimator(self) -> Estimator {
        match self {
            TransformArg::Sph => Estimator::Sph,
            TransformArg::Hs => Estimator::Hs,
        }
    }

    fn patch(self) -> Transform {
        match self {
            TransformArg::Sph => Transform::Spherical,
            TransformArg::Hs => Transform::HalfSpace,
        }
    }
}

fn make_grid(args: &GridArgs, truth: Option<&DensitySpec>) -> Result<PixelGrid> {
    let (lo, hi) = match (&args.bbox, truth) {
        (Some(b), _) if b.len() == 4 => (vec![b[0], b[1]], vec![b[2], b[3]]),
        (Some(b), _) => {
            return Err(Error::Validation(format!("--bbox needs 4 values x0,y0,x1,y1, got {}", b.len())))
        }
        (None, Some(spec)) => (spec.domain.lo.clone(), spec.domain.hi.clone()),
        (None, None) => (vec![0.0, 0.0], vec![100.0, 100.0]),
    };
    if lo.len() != 2 {
        return Err(Error::Unsupported("the command line handles planar grids only".into()));
    }
    PixelGrid::covering(&lo, &hi, &[args.resolution, args.resolution])
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_planar_cloud(path: &Path) -> Result<PointCloud> {
    PointCloud::load_csv(path, Some(2))
}

fn load_truth(path: Option<&PathBuf>) -> Result<Option<DensitySpec>> {
    path.map(DensitySpec::load).transpose()
}

fn builtin_spec(name: &str, seed: u64) -> Result<DensitySpec> {
    match name {
        "density1" => Ok(canonical::density1(Seed::new(seed))),
        "density2" => Ok(canonical::density2()),
        "density3" => Ok(canonical::density3()),
        "density4" => Ok(canonical::density4()),
        _ => Err(Error::Validation(format!("unknown built-in density {name:?}"))),
    }
}

fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Spec { name, seed, out } => {
            let spec = builtin_spec(&name, seed)?;
            std::fs::write(&out, spec.to_json() + "\n")?;
            Ok(json!({ "command": "spec", "name": name, "out": out }))
        }
        Command::Sample { spec, m, seed, out } => {
            let spec = DensitySpec::load(&spec)?;
            let cloud = sample_density(&spec, m, Seed::new(seed))?;
            cloud.save_csv(&out)?;
            Ok(json!({ "command": "sample", "m": cloud.len(), "dim": cloud.dim(), "seed": seed, "out": out }))
        }
        Command::Project {
            cloud,
            transform,
            grid,
            raw,
            out,
        } => {
            let cloud = load_planar_cloud(&cloud)?;
            let grid = make_grid(&grid, None)?;
            let geometry = match transform {
                TransformArg::Sph => Geometry::Ball(make_ball_geometry(&grid, &BallConfig::default())?),
                TransformArg::Hs => {
                    Geometry::HalfSpace(make_halfspace_geometry(&grid, &HalfSpaceConfig::default())?)
                }
            };
            let norm = if raw {
                raden::projection::Normalization::RawCounts
            } else {
                raden::projection::Normalization::PerM
            };
            let b = measure(&cloud, &geometry, norm)?;
            b.write_csv(std::fs::File::create(&out)?)?;
            Ok(json!({ "command": "project", "geometry": geometry.kind_name(), "rows": b.len(), "out": out }))
        }
        Command::Reconstruct {
            cloud,
            transform,
            penalty,
            selection,
            lambda,
            grid,
            truth,
            out,
        } => {
            let cloud = load_planar_cloud(&cloud)?;
            let truth = load_truth(truth.as_ref())?;
            let grid = make_grid(&grid, truth.as_ref())?;
            let mut reg = RegConfig {
                penalty: match penalty {
                    PenaltyArg::Tv => Penalty::TvAnisotropic,
                    PenaltyArg::Tikhonov => Penalty::Tikhonov,
                },
                ..RegConfig::default()
            };
            reg.selection = match (selection, lambda) {
                (SelectionArg::Gcv, None) => Selection::Gcv,
                (SelectionArg::Fixed, Some(l)) => Selection::Fixed { lambda: l },
                (SelectionArg::Fixed, None) => {
                    return Err(Error::Validation("fixed selection needs --lambda".into()))
                }
                (SelectionArg::Gcv, Some(_)) => {
                    return Err(Error::Validation("--lambda requires --selection fixed".into()))
                }
            };
            let pipeline = Pipeline::new(grid, PipelineConfig { reg, ..Default::default() })?;
            let truth_values = truth.as_ref().map(|s| eval_density(s, pipeline.grid())).transpose()?;
            let outcome = pipeline.run(&cloud, transform.estimator(), truth_values.as_ref().map(|t| &t.values[..]))?;
            outcome.estimate.save_csv(with_ext(&out, "csv"))?;
            outcome.estimate.save_pgm(with_ext(&out, "pgm"))?;
            let report = json!({
                "command": "reconstruct",
                "method": outcome.estimator,
                "m": cloud.len(),
                "grid": pipeline.grid(),
                "solve": outcome.report,
                "error": outcome.error,
            });
            write_json(&with_ext(&out, "json"), &report)?;
            Ok(report)
        }
        Command::Baseline {
            cloud,
            method,
            grid,
            truth,
            out,
        } => {
            let cloud = load_planar_cloud(&cloud)?;
            let truth = load_truth(truth.as_ref())?;
            let grid = make_grid(&grid, truth.as_ref())?;
            let pipeline = Pipeline::new(grid, PipelineConfig::default())?;
            let truth_values = truth.as_ref().map(|s| eval_density(s, pipeline.grid())).transpose()?;
            let estimator = match method {
                BaselineArg::Kde => Estimator::Kde,
                BaselineArg::Fbp => Estimator::Fbp,
            };
            let outcome = pipeline.run(&cloud, estimator, truth_values.as_ref().map(|t| &t.values[..]))?;
            outcome.estimate.save_csv(with_ext(&out, "csv"))?;
            outcome.estimate.save_pgm(with_ext(&out, "pgm"))?;
            let report = json!({
                "command": "baseline",
                "method": estimator,
                "m": cloud.len(),
                "grid": pipeline.grid(),
                "bandwidth_sweep": outcome.os,
                "error": outcome.error,
            });
            write_json(&with_ext(&out, "json"), &report)?;
            Ok(report)
        }
        Command::Patch {
            cloud,
            queries,
            r,
            p,
            transform,
            resolution,
            out,
        } => {
            let cloud = PointCloud::load_csv(&cloud, None)?;
            let queries = PointCloud::load_csv(&queries, Some(cloud.dim()))?;
            let cfg = PatchConfig {
                r,
                p,
                transform: transform.patch(),
                resolution,
                ..PatchConfig::default()
            };
            let qs: Vec<Vec<f64>> = queries.iter().map(|q| q.to_vec()).collect();
            let results = patch_density(&cloud, &qs, &cfg, &RegConfig::default());
            let mut csv = String::from("query_index,value\n");
            let mut per_query = Vec::with_capacity(results.len());
            for (i, res) in results.iter().enumerate() {
                match res {
                    Ok(est) => {
                        csv.push_str(&format!("{i},{:?}\n", est.value));
                        per_query.push(json!({
                            "query_index": i,
                            "status": est.report.status,
                            "n": est.patch.dim,
                            "eigenvalues": est.patch.eigenvalues,
                            "count": est.patch.count(),
                            "value": est.value,
                        }));
                    }
                    Err(e) => {
                        csv.push_str(&format!("{i},NaN\n"));
                        per_query.push(json!({
                            "query_index": i,
                            "status": "failed",
                            "error": { "kind": e.kind(), "message": e.to_string() },
                        }));
                    }
                }
            }
            std::fs::write(with_ext(&out, "csv"), csv)?;
            let report = json!({ "command": "patch", "config": cfg, "queries": per_query });
            write_json(&with_ext(&out, "json"), &report)?;
            Ok(json!({ "command": "patch", "queries": results.len(), "out": out }))
        }
        Command::Table {
            id,
            trials,
            seed,
            m,
            methods,
            transform,
            resolution,
            out,
        } => {
            let report = match id {
                TableId::Patch => {
                    let defaults = PatchTableConfig::default();
                    let cfg = PatchTableConfig {
                        m: m.unwrap_or(defaults.m),
                        trials: trials.unwrap_or(defaults.trials),
                        seed: Seed::new(seed),
                        transform: transform.patch(),
                        resolution: resolution.unwrap_or(defaults.resolution),
                        ..defaults
                    };
                    serde_json::to_value(patch_table(&canonical::density4(), &cfg)?)?
                }
                _ => {
                    let defaults = TableConfig::default();
                    let methods = match methods {
                        Some(list) => list.iter().map(|s| s.parse()).collect::<Result<Vec<Estimator>>>()?,
                        None => defaults.methods.clone(),
                    };
                    let cfg = TableConfig {
                        trials: trials.unwrap_or(defaults.trials),
                        m: m.unwrap_or(defaults.m),
                        seed: Seed::new(seed),
                        methods,
                        resolution: resolution.unwrap_or(defaults.resolution),
                        ..defaults
                    };
                    serde_json::to_value(error_table(id, &cfg)?)?
                }
            };
            write_json(&out, &report)?;
            Ok(json!({ "command": "table", "table": id, "out": out }))
        }
        Command::Bounds { kind, m, p, k, n } => {
            let (name, value) = match kind {
                BoundKind::Dkw => ("dkw", dkw_epsilon(m, p)?),
                BoundKind::HsBound => ("hs-bound", halfspace_l2_bound(m, k, p, n)?),
                BoundKind::SphBound => ("sph-bound", spherical_l2_bound(m, k, p)?),
            };
            println!("{value:.6}");
            Ok(json!({ "command": "bounds", "kind": name, "m": m, "k": k, "p": p, "n": n, "value": value }))
        }
    }
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("RADEN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gradgrasp::field::{EvaluatorWeights, GraspValueField};
use gradgrasp::harness::{
    export_report, pipeline, report_table, run_clutter_with, run_heldout_with, run_simple_with, FieldKind,
    FieldSource, PipelineConfig, RunConfig,
};
use gradgrasp::optimizer::{optimize, slice_values, SliceAxis};
use gradgrasp::scene::{generate_scene_retrying, GraspOracle, SceneKind};
use gradgrasp::seed::{derive_seed, rng_from_seed};
use gradgrasp::train::{evaluate_classifier, generate_dataset, train_evaluator, Dataset, TrainConfig};
use gradgrasp::Scene;

#[derive(Parser)]
#[command(name = "gradgrasp", version, about = "Grasp-value fields and staged 6-DoF grasp optimization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the seeds in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `[run]`, `[train]` and `[pipeline]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Simple,
    Clutter,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Oracle,
    Learned,
}

#[derive(Args)]
struct FieldOpts {
    #[arg(long, value_enum)]
    field: Option<FieldArg>,
    /// Weights file for the learned field.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded scenes as JSON files.
    GenScenes {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value = "simple")]
        kind: KindArg,
    },
    /// Generate demonstrations and negatives for a set of scenes.
    GenDataset {
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Train the evaluator on a dataset file (generated when omitted).
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Held-out dataset to report accuracy and AUC on.
        #[arg(long)]
        heldout: Option<PathBuf>,
    },
    /// Optimize grasps on one scene and write the trace.
    Optimize {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        field: FieldOpts,
    },
    BenchSimple {
        #[command(flatten)]
        field: FieldOpts,
    },
    BenchClutter {
        #[command(flatten)]
        field: FieldOpts,
    },
    BenchHeldout {
        #[command(flatten)]
        field: FieldOpts,
    },
    /// Sample the field on a 2-D grid around a demonstrated grasp.
    Slice {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        field: FieldOpts,
        #[arg(long, default_value = "tx,ty")]
        dims: String,
        #[arg(long, default_value_t = 0.05)]
        extent: f64,
        #[arg(long, default_value_t = 21)]
        resolution: usize,
    },
    /// Generate, train, evaluate and slice from one seed.
    Pipeline,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    run: RunConfig,
    train: TrainConfig,
    pipeline: PipelineConfig,
}

fn load_config(common: &Common) -> Result<FileConfig> {
    let mut cfg: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn run_config(mut run: RunConfig, opts: &FieldOpts) -> RunConfig {
    if let Some(f) = opts.field {
        run.field = match f {
            FieldArg::Oracle => FieldKind::Oracle,
            FieldArg::Learned => FieldKind::Learned,
        };
    }
    if opts.weights.is_some() {
        run.weights = opts.weights.clone();
        if opts.field.is_none() {
            run.field = FieldKind::Learned;
        }
    }
    run
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn parse_dims(s: &str) -> Result<[SliceAxis; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("--dims takes two comma-separated axes, e.g. tx,ty");
    }
    let axis = |n: &str| SliceAxis::from_name(n).with_context(|| format!("unknown axis {n:?}"));
    Ok([axis(parts[0])?, axis(parts[1])?])
}

fn bench(cfg: &FileConfig, opts: &FieldOpts, out: &Path, name: &str) -> Result<()> {
    let run = run_config(cfg.run.clone(), opts);
    let field = FieldSource::from_config(&run)?;
    let report = match name {
        "simple" => run_simple_with(&run, &field)?.0,
        "clutter" => run_clutter_with(&run, &field)?.0,
        _ => run_heldout_with(&run, &field)?.0,
    };
    let path = out.join(format!("report_{name}.json"));
    export_report(&report, &path)?;
    print!("{}", report_table(&report));
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::GenScenes { count, kind } => {
            let kind = match kind {
                KindArg::Simple => SceneKind::Simple,
                KindArg::Clutter => SceneKind::Clutter,
            };
            for i in 0..count {
                let scene = generate_scene_retrying(&cfg.run.scenes, kind, derive_seed(cfg.run.seed, "scenes", i as u64))?;
                scene.save(&out.join(format!("scene_{i:04}.json")))?;
            }
            println!("wrote {count} scenes to {}", out.display());
        }
        Command::GenDataset { scenes } => {
            let n = scenes.unwrap_or(cfg.pipeline.train_scenes);
            let ds = generate_dataset(&cfg.run.scenes, &cfg.train, n, cfg.train.seed)?;
            let path = out.join("dataset.json");
            ds.save(&path)?;
            println!("wrote {} scenes to {}", ds.len(), path.display());
        }
        Command::Train { dataset, heldout } => {
            let ds = match dataset {
                Some(p) => Dataset::load(&p)?,
                None => generate_dataset(&cfg.run.scenes, &cfg.train, cfg.pipeline.train_scenes, cfg.train.seed)?,
            };
            let res = train_evaluator(&ds, &cfg.train, &mut rng_from_seed(derive_seed(cfg.train.seed, "train", 0)))?;
            res.weights.save(&out.join("weights.bin"))?;
            write(&out.join("loss.txt"), res.loss_trace_text())?;
            println!(
                "trained {} epochs, loss {:.4} -> {:.4}",
                res.loss_trace.len(),
                res.loss_trace.first().copied().unwrap_or(f64::NAN),
                res.loss_trace.last().copied().unwrap_or(f64::NAN)
            );
            if let Some(p) = heldout {
                let m = evaluate_classifier(&res.weights, &Dataset::load(&p)?)?;
                println!("held-out accuracy {:.4} auc {:.4} ({} samples)", m.accuracy, m.auc, m.samples);
            }
        }
        Command::Optimize { scene, field } => {
            let scene = Scene::load(&scene)?;
            let run = run_config(cfg.run.clone(), &field);
            let f = FieldSource::from_config(&run)?.build(&scene)?;
            let r = optimize(&f, &scene.workspace, &run.optimize, &mut rng_from_seed(run.seed))?;
            r.trace.save_jsonl(&out.join("trace.jsonl"))?;
            let outcome = GraspOracle::new(&scene).simulate(&r.best, &run.tolerance);
            let best = serde_json::json!({
                "pose": r.best.to_params(),
                "value": r.best_value,
                "candidate": r.trace.best_index,
                "outcome": outcome,
            });
            write(&out.join("best.json"), serde_json::to_string_pretty(&best)?)?;
            println!("best value {:.6} outcome {:?}", r.best_value, outcome);
        }
        Command::BenchSimple { field } => bench(&cfg, &field, out, "simple")?,
        Command::BenchClutter { field } => bench(&cfg, &field, out, "clutter")?,
        Command::BenchHeldout { field } => bench(&cfg, &field, out, "heldout")?,
        Command::Slice {
            scene,
            field,
            dims,
            extent,
            resolution,
        } => {
            let dims = parse_dims(&dims)?;
            let scene = Scene::load(&scene)?;
            let run = run_config(cfg.run.clone(), &field);
            let f = FieldSource::from_config(&run)?.build(&scene)?;
            let center = GraspOracle::new(&scene).demonstrate(&mut rng_from_seed(run.seed))?;
            let grid = slice_values(&f, &center, dims, extent, resolution)?;
            grid.save(out, "slice")?;
            println!(
                "slice {}-{} around value {:.4} written to {}",
                dims[0].name(),
                dims[1].name(),
                f.value_at(&center)?,
                out.display()
            );
        }
        Command::Pipeline => {
            let seed = cli.common.seed.unwrap_or(cfg.run.seed);
            let res = pipeline(seed, &cfg.pipeline)?;
            EvaluatorWeights::from_bytes(&res.weights)?.save(&out.join("weights.bin"))?;
            write(&out.join("loss.txt"), gradgrasp::train::loss_trace_text(&res.loss_trace))?;
            export_report(&res.report, &out.join("report_simple.json"))?;
            res.slice.save(out, "slice")?;
            print!("{}", report_table(&res.report));
        }
    }
    Ok(())
}

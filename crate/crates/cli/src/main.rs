//! Command-line front end for the regularization laboratory.
//!
//! Subcommands: `train` (one run), `sweep` (coefficient grid over seeds),
//! `incremental` (delayed-activation study), `gradcheck` (gradient
//! verification suite), `curves` (merge stored curves for plotting).
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 divergence,
//! 5 gradient check failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use embedreg::curve_csv::{merge_curves, write_curve};
use embedreg::data::{load_sentence_dataset, load_sentence_dataset_with_vocab};
use embedreg::gradcheck::{full_suite, GRADCHECK_TOL};
use embedreg::harness::{
    digest, highlight_cells, run_incremental_study, run_sweep, EmbeddingInit, RunContext,
};
use embedreg::reg::PenaltyOptions;
use embedreg::tree::{load_tree_dataset, load_tree_dataset_with_vocab};
use embedreg::{checkpoint, Dataset, Error, Result, Task};

use config::{RawConfig, ResolvedConfig};

#[derive(Parser)]
#[command(name = "embedreg", version, about = "Embedding regularization laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one model and write its learning curve and checkpoint.
    Train(RunArgs),
    /// Run a coefficient grid across seeds and write the summary table.
    Sweep(RunArgs),
    /// Compare delayed penalty activation against an unregularized baseline.
    Incremental(RunArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also include bias vectors in the weight penalty.
        #[arg(long)]
        include_biases: bool,
    },
    /// Merge the curve files of a run directory into one plot-ready CSV.
    Curves {
        /// Directory holding `*_seed*.csv` curve files.
        run_dir: PathBuf,
        /// Output file; defaults to `merged.csv` inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run settings file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the settings file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root; overrides the `out` setting.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-run commands.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Extra `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ResolvedConfig> {
        let mut raw = RawConfig::from_file(&self.config)?;
        for assignment in &self.set {
            raw.set(assignment)?;
        }
        if let Some(seed) = self.seed {
            raw.set(&format!("seed={seed}"))?;
        }
        let mut cfg = ResolvedConfig::resolve(&raw)?;
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn build_context(cfg: &ResolvedConfig) -> Result<RunContext> {
    let (train_set, val_set, vocab) = match cfg.task {
        Task::Relation => {
            let (train, vocab) = load_sentence_dataset(&cfg.train_path)?;
            let val = load_sentence_dataset_with_vocab(&cfg.val_path, &vocab)?;
            (Dataset::Sentences(train), Dataset::Sentences(val), vocab)
        }
        Task::Sentiment => {
            let (train, vocab) = load_tree_dataset(&cfg.train_path)?;
            let val = load_tree_dataset_with_vocab(&cfg.val_path, &vocab)?;
            (Dataset::Trees(train), Dataset::Trees(val), vocab)
        }
    };
    let embedding_init = match &cfg.embedding_path {
        Some(path) => EmbeddingInit::Pretrained {
            path: path.clone(),
            vocab,
        },
        None => EmbeddingInit::Random {
            vocab_size: vocab.len(),
        },
    };
    Ok(RunContext {
        base: cfg.base.clone(),
        dims: cfg.dims,
        train_set,
        val_set,
        embedding_init,
    })
}

fn out_root(cfg: &ResolvedConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let ctx = build_context(&cfg)?;
    let seed = cfg.base.seed;
    let dir = out_root(&cfg).join(format!("train_{}_seed{seed}", digest(&cfg.canonical)));
    prepare_dir(&dir)?;

    let (curve, model, emb) = ctx.run_full(seed, &cfg.base.regularizers)?;
    write_curve(dir.join("curve.csv"), &curve)?;
    checkpoint::save_checkpoint(dir.join("checkpoint.txt"), &model, &emb)?;

    let mut manifest = cfg.canonical.clone();
    manifest.push_str(&format!("resolved_seed = {seed}\n"));
    manifest.push_str(&format!("final_val_acc = {:.16e}\n", curve.final_val_acc()));
    manifest.push_str(&format!("best_val_acc = {:.16e}\n", curve.best_val_acc()));
    write_text(&dir.join("manifest.txt"), &manifest)?;

    println!("run dir: {}", dir.display());
    println!(
        "final val acc {:.4}, best {:.4}",
        curve.final_val_acc(),
        curve.best_val_acc()
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep requires sweep_axis1".into()))?;
    let ctx = build_context(&cfg)?;
    let dir = out_root(&cfg).join(format!("sweep_{}", digest(&cfg.canonical)));
    prepare_dir(&dir)?;
    write_text(&dir.join("settings.txt"), &cfg.canonical)?;

    let grid = run_sweep(&ctx, &spec, Some(&dir), args.workers)?;
    write_text(&dir.join("grid.csv"), &grid.summary_csv())?;

    let marked = highlight_cells(&grid);
    println!("sweep dir: {}", dir.display());
    for (i, cell) in grid.cells.iter().enumerate() {
        println!(
            "cell {:?}: mean {:.4} std {:.4} diverged {}{}",
            cell.coords,
            cell.mean(),
            cell.std(),
            cell.n_diverged(),
            if marked.contains(&i) { "  *" } else { "" }
        );
    }
    Ok(())
}

fn cmd_incremental(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let (penalty, epochs) = cfg.incremental.clone().ok_or_else(|| {
        Error::Config("incremental requires incremental_kind/coeff/epochs".into())
    })?;
    let ctx = build_context(&cfg)?;
    let dir = out_root(&cfg).join(format!("incr_{}", digest(&cfg.canonical)));
    prepare_dir(&dir)?;
    write_text(&dir.join("settings.txt"), &cfg.canonical)?;

    let result = run_incremental_study(&ctx, penalty, &epochs, &cfg.seeds, Some(&dir))?;
    let table = result.comparison_csv();
    write_text(&dir.join("comparison.csv"), &table)?;
    println!("incremental dir: {}", dir.display());
    print!("{table}");
    Ok(())
}

fn cmd_gradcheck(seed: u64, include_biases: bool) -> Result<bool> {
    let reports = full_suite(seed, PenaltyOptions { include_biases })?;
    let mut all_ok = true;
    for r in &reports {
        let ok = r.passed(GRADCHECK_TOL);
        all_ok &= ok;
        println!(
            "{} {}: max rel err {:.3e}",
            if ok { "ok  " } else { "FAIL" },
            r.label,
            r.max_err()
        );
    }
    Ok(all_ok)
}

fn cmd_curves(run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let merged = merge_curves(run_dir)?;
    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("merged.csv"));
    write_text(&target, &merged)?;
    println!("merged curves: {}", target.display());
    Ok(())
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::Diverged { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Train(a) => cmd_train(a).map(|()| 0),
        Cmd::Sweep(a) => cmd_sweep(a).map(|()| 0),
        Cmd::Incremental(a) => cmd_incremental(a).map(|()| 0),
        Cmd::Gradcheck {
            seed,
            include_biases,
        } => cmd_gradcheck(*seed, *include_biases).map(|ok| if ok { 0 } else { 5 }),
        Cmd::Curves { run_dir, out } => cmd_curves(run_dir, out.as_deref()).map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

//! Multi-seed experiment orchestration: coefficient sweeps, the incremental
//! activation study, and aggregation into mean±std grids.
//!
//! Every run is a pure function of (config, seed), so cells×seeds are
//! dispatched to a bounded rayon pool and merged by a single fold. Completed
//! runs found on disk are reused, which makes interrupted sweeps resumable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::curve_csv::{read_curve, write_curve};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{init_cnn, init_rnn, Model, ModelDims};
use crate::reg::{RegularizerKind, RegularizerSet, RegularizerSpec};
use crate::rng::RandomSource;
use crate::train::{train, Dataset, LearningCurve, Task, TrainConfig};

/// Short stable digest used in run-directory and file names.
pub fn digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    out.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// How each run obtains its embedding table. Pretrained files are loaded
/// per run so missing-word rows vary with the seed, like every other
/// initialization.
#[derive(Debug, Clone)]
pub enum EmbeddingInit {
    Random { vocab_size: usize },
    Pretrained {
        path: PathBuf,
        vocab: crate::data::Vocabulary,
    },
}

/// Everything shared across the runs of one experiment: datasets, model
/// shape, embedding source, and the base training config.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub base: TrainConfig,
    pub dims: ModelDims,
    pub train_set: Dataset,
    pub val_set: Dataset,
    pub embedding_init: EmbeddingInit,
}

impl RunContext {
    fn build_run(&self, seed: u64) -> Result<(Model, EmbeddingTable, RandomSource)> {
        let mut rng = RandomSource::new(seed);
        let emb = match &self.embedding_init {
            EmbeddingInit::Random { vocab_size } => {
                EmbeddingTable::random(*vocab_size, self.dims.embed, &mut rng)
            }
            EmbeddingInit::Pretrained { path, vocab } => {
                EmbeddingTable::load(path, vocab, self.dims.embed, &mut rng)?
            }
        };
        let model = match self.base.task {
            Task::Relation => Model::Cnn(init_cnn(self.dims, &mut rng)),
            Task::Sentiment => Model::Rnn(init_rnn(self.dims, &mut rng)),
        };
        Ok((model, emb, rng))
    }

    /// One training run, fully determined by (seed, regularizers).
    pub fn run(&self, seed: u64, regs: &RegularizerSet) -> Result<LearningCurve> {
        self.run_full(seed, regs).map(|(c, _, _)| c)
    }

    /// Like `run`, also returning the trained parameters.
    pub fn run_full(
        &self,
        seed: u64,
        regs: &RegularizerSet,
    ) -> Result<(LearningCurve, Model, EmbeddingTable)> {
        let (mut model, mut emb, mut rng) = self.build_run(seed)?;
        let cfg = TrainConfig {
            seed,
            regularizers: regs.clone(),
            ..self.base.clone()
        };
        let curve = train(
            &cfg,
            &mut model,
            &mut emb,
            &self.train_set,
            &self.val_set,
            &mut rng,
        )?;
        Ok((curve, model, emb))
    }
}

/// One sweep axis: a regularizer kind and its ordered coefficient values.
#[derive(Debug, Clone)]
pub struct Axis {
    pub kind: RegularizerKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if self.axes.len() > 2 {
            return Err(Error::Config("at most 2 sweep axes".into()));
        }
        for ax in &self.axes {
            if ax.values.iter().any(|v| *v < 0.0) {
                return Err(Error::Config("axis values must be nonnegative".into()));
            }
        }
        Ok(())
    }

    fn cell_coords(&self) -> Vec<Vec<f64>> {
        match self.axes.len() {
            0 => vec![vec![]],
            1 => self.axes[0].values.iter().map(|v| vec![*v]).collect(),
            _ => {
                let mut out = Vec::new();
                for a in &self.axes[0].values {
                    for b in &self.axes[1].values {
                        out.push(vec![*a, *b]);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    /// None when the run diverged.
    pub final_acc: Option<f64>,
    pub best_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub coords: Vec<f64>,
    pub outcomes: Vec<SeedOutcome>,
}

impl GridCell {
    fn finals(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.final_acc).collect()
    }

    pub fn n_diverged(&self) -> usize {
        self.outcomes.iter().filter(|o| o.final_acc.is_none()).count()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.finals())
    }

    /// Sample standard deviation over converged seeds.
    pub fn std(&self) -> f64 {
        sample_std(&self.finals())
    }

    pub fn best_epoch_mean(&self) -> f64 {
        mean(&self.outcomes.iter().filter_map(|o| o.best_acc).collect::<Vec<_>>())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub axes: Vec<Axis>,
    pub cells: Vec<GridCell>,
}

pub const GRID_HEADER: &str = "axis1,axis2,mean_acc,std_acc,n_seeds,n_diverged,best_epoch_mean";

impl GridResult {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(GRID_HEADER);
        out.push('\n');
        for cell in &self.cells {
            let a1 = cell.coords.first().map_or(String::new(), |v| format!("{v}"));
            let a2 = cell.coords.get(1).map_or(String::new(), |v| format!("{v}"));
            let _ = writeln!(
                out,
                "{a1},{a2},{:.16e},{:.16e},{},{},{:.16e}",
                cell.mean(),
                cell.std(),
                cell.outcomes.len(),
                cell.n_diverged(),
                cell.best_epoch_mean()
            );
        }
        out
    }
}

/// Table-highlight rule: cells whose mean is at least the peak mean minus
/// 1.5 times the peak cell's standard deviation. Operates on (mean, std)
/// pairs so stored grids and externally reported tables both fit.
pub fn highlight(stats: &[(f64, f64)]) -> Vec<usize> {
    let Some((peak_idx, _)) = stats
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
    else {
        return Vec::new();
    };
    let threshold = stats[peak_idx].0 - 1.5 * stats[peak_idx].1;
    stats
        .iter()
        .enumerate()
        .filter(|(_, (m, _))| *m >= threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn highlight_cells(grid: &GridResult) -> Vec<usize> {
    let stats: Vec<(f64, f64)> = grid.cells.iter().map(|c| (c.mean(), c.std())).collect();
    highlight(&stats)
}

fn cell_label(axes: &[Axis], coords: &[f64]) -> String {
    if coords.is_empty() {
        return "base".to_string();
    }
    axes.iter()
        .zip(coords)
        .map(|(a, v)| format!("{}={v}", a.kind.name()))
        .collect::<Vec<_>>()
        .join(",")
}

fn regs_for_cell(base: &RegularizerSet, axes: &[Axis], coords: &[f64]) -> Result<RegularizerSet> {
    let mut regs = base.clone();
    for (axis, &v) in axes.iter().zip(coords) {
        let spec = if axis.kind == RegularizerKind::Dropout {
            RegularizerSpec::dropout(v)
        } else {
            RegularizerSpec::penalty(axis.kind, v)
        };
        regs = regs.with(spec)?;
    }
    Ok(regs)
}

/// Execute |cells|×|seeds| independent runs and aggregate. Diverged runs are
/// recorded in their cell and excluded from the statistics.
pub fn run_sweep(
    ctx: &RunContext,
    spec: &SweepSpec,
    out_dir: Option<&Path>,
    workers: usize,
) -> Result<GridResult> {
    let base = ctx.base.regularizers.clone();
    spec.validate()?;
    let coords = spec.cell_coords();

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }

    // (cell, seed) jobs; results keep job order so aggregation is stable
    let jobs: Vec<(usize, u64)> = coords
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| spec.seeds.iter().map(move |s| (ci, *s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let results: Vec<Result<(usize, u64, Option<LearningCurve>)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, seed)| {
                let label = cell_label(&spec.axes, &coords[ci]);
                let path = out_dir
                    .map(|d| d.join(format!("run_{}_seed{seed}.csv", digest(&label))));
                if let Some(p) = &path {
                    if p.exists() {
                        return Ok((ci, seed, Some(read_curve(p)?)));
                    }
                }
                let regs = regs_for_cell(&base, &spec.axes, &coords[ci])?;
                match ctx.run(seed, &regs) {
                    Ok(curve) => {
                        if let Some(p) = &path {
                            write_curve(p, &curve)?;
                        }
                        Ok((ci, seed, Some(curve)))
                    }
                    Err(Error::Diverged { .. }) => Ok((ci, seed, None)),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });

    let mut cells: Vec<GridCell> = coords
        .iter()
        .map(|c| GridCell {
            coords: c.clone(),
            outcomes: Vec::new(),
        })
        .collect();
    let mut manifest = String::new();
    for r in results {
        let (ci, seed, curve) = r?;
        let label = cell_label(&spec.axes, &coords[ci]);
        let outcome = match &curve {
            Some(c) => SeedOutcome {
                seed,
                final_acc: Some(c.final_val_acc()),
                best_acc: Some(c.best_val_acc()),
            },
            None => SeedOutcome {
                seed,
                final_acc: None,
                best_acc: None,
            },
        };
        let _ = writeln!(
            manifest,
            "cell={label} seed={seed} path=run_{}_seed{seed}.csv status={}",
            digest(&label),
            if curve.is_some() { "ok" } else { "diverged" }
        );
        cells[ci].outcomes.push(outcome);
    }

    if let Some(dir) = out_dir {
        let mp = dir.join("manifest.txt");
        let mut head = format!(
            "sweep axes={} seeds={:?}\n",
            spec.axes
                .iter()
                .map(|a| format!("{}:{:?}", a.kind.name(), a.values))
                .collect::<Vec<_>>()
                .join(";"),
            spec.seeds
        );
        head.push_str(&manifest);
        fs::write(&mp, head).map_err(|e| Error::io(mp.display().to_string(), e))?;
    }

    Ok(GridResult {
        axes: spec.axes.clone(),
        cells,
    })
}

#[derive(Debug, Clone)]
pub struct IncrementalResult {
    /// Unregularized baseline, one curve per seed.
    pub baseline: Vec<(u64, LearningCurve)>,
    /// One entry per activation epoch, each with one curve per seed.
    pub settings: Vec<(usize, Vec<(u64, LearningCurve)>)>,
}

impl IncrementalResult {
    /// Comparison table of final validation accuracies, one row per setting.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("setting,mean_final_val_acc\n");
        let base: Vec<f64> = self.baseline.iter().map(|(_, c)| c.final_val_acc()).collect();
        let _ = writeln!(out, "baseline,{:.16e}", mean(&base));
        for (epoch, curves) in &self.settings {
            let accs: Vec<f64> = curves.iter().map(|(_, c)| c.final_val_acc()).collect();
            let _ = writeln!(out, "activate_epoch_{epoch},{:.16e}", mean(&accs));
        }
        out
    }
}

/// One run per activation epoch plus an unregularized baseline, all sharing
/// the same seed list.
pub fn run_incremental_study(
    ctx: &RunContext,
    penalty: RegularizerSpec,
    activation_epochs: &[usize],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<IncrementalResult> {
    if !penalty.kind.is_penalty() {
        return Err(Error::Config(
            "incremental study is defined for penalty kinds only".into(),
        ));
    }
    if activation_epochs.iter().any(|e| *e >= ctx.base.epochs) {
        return Err(Error::Config(format!(
            "activation epochs must be below the epoch budget {}",
            ctx.base.epochs
        )));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }

    let save = |name: &str, seed: u64, curve: &LearningCurve| -> Result<()> {
        if let Some(dir) = out_dir {
            write_curve(dir.join(format!("{name}_seed{seed}.csv")), curve)?;
        }
        Ok(())
    };

    let mut baseline = Vec::new();
    for &seed in seeds {
        let curve = ctx.run(seed, &ctx.base.regularizers)?;
        save("baseline", seed, &curve)?;
        baseline.push((seed, curve));
    }
    let mut settings = Vec::new();
    for &epoch in activation_epochs {
        let mut curves = Vec::new();
        for &seed in seeds {
            let regs = ctx.base.regularizers.with(penalty.at_epoch(epoch))?;
            let curve = ctx.run(seed, &regs)?;
            save(&format!("activate{epoch}_{}", penalty.kind.name()), seed, &curve)?;
            curves.push((seed, curve));
        }
        settings.push((epoch, curves));
    }
    Ok(IncrementalResult { baseline, settings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reg::PenaltyOptions;
    use crate::synth;
    use crate::train::Schedule;

    fn tiny_ctx(epochs: usize) -> RunContext {
        let (train, vocab) = synth::separable_sentences(30, 5, 4, 4, 77);
        let (val, _) = synth::separable_sentences(20, 5, 4, 4, 78);
        RunContext {
            base: TrainConfig {
                task: Task::Relation,
                eta0: 0.1,
                schedule: Schedule::Fixed,
                batch_size: 10,
                epochs,
                seed: 0,
                regularizers: RegularizerSet::empty(),
                penalty_opts: PenaltyOptions::default(),
            },
            dims: ModelDims::cnn(4, 3, 5, 5),
            train_set: Dataset::Sentences(train),
            val_set: Dataset::Sentences(val),
            embedding_init: EmbeddingInit::Random {
                vocab_size: vocab.len(),
            },
        }
    }

    #[test]
    fn single_cell_mean_is_arithmetic_mean() {
        let ctx = tiny_ctx(2);
        let spec = SweepSpec {
            axes: vec![],
            seeds: vec![1, 2, 3, 4, 5],
        };
        let grid = run_sweep(&ctx, &spec, None, 2).unwrap();
        assert_eq!(grid.cells.len(), 1);
        let finals: Vec<f64> = grid.cells[0]
            .outcomes
            .iter()
            .map(|o| o.final_acc.unwrap())
            .collect();
        assert_eq!(finals.len(), 5);
        let m = finals.iter().sum::<f64>() / 5.0;
        assert!((grid.cells[0].mean() - m).abs() < 1e-15);
    }

    #[test]
    fn table_shaped_grid_has_24_cells() {
        let ctx = tiny_ctx(1);
        let spec = SweepSpec {
            axes: vec![
                Axis {
                    kind: RegularizerKind::L2Embeddings,
                    values: vec![0.0, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3],
                },
                Axis {
                    kind: RegularizerKind::L2Weights,
                    values: vec![0.0, 1e-4, 3e-4, 1e-3],
                },
            ],
            seeds: vec![1, 2],
        };
        let grid = run_sweep(&ctx, &spec, None, 4).unwrap();
        assert_eq!(grid.cells.len(), 24);
        let csv = grid.summary_csv();
        assert_eq!(csv.lines().count(), 25);
    }

    #[test]
    fn stats_match_independent_recount() {
        let ctx = tiny_ctx(2);
        let spec = SweepSpec {
            axes: vec![Axis {
                kind: RegularizerKind::L2Weights,
                values: vec![0.0, 1e-3],
            }],
            seeds: vec![1, 2, 3],
        };
        let grid = run_sweep(&ctx, &spec, None, 2).unwrap();
        for cell in &grid.cells {
            let vals: Vec<f64> = cell.outcomes.iter().filter_map(|o| o.final_acc).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (vals.len() - 1) as f64;
            assert!((cell.mean() - m).abs() < 1e-12);
            assert!((cell.std() - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn resume_skips_completed_runs() {
        let ctx = tiny_ctx(2);
        let spec = SweepSpec {
            axes: vec![],
            seeds: vec![4, 5],
        };
        let dir = tempfile::tempdir().unwrap();
        let first = run_sweep(&ctx, &spec, Some(dir.path()), 1).unwrap();
        // tamper with a stored curve; a resumed sweep must trust the file
        let label = cell_label(&spec.axes, &[]);
        let p = dir.path().join(format!("run_{}_seed4.csv", digest(&label)));
        let mut text = fs::read_to_string(&p).unwrap();
        text = text.replace(
            &format!("{:.16e}", first.cells[0].outcomes[0].final_acc.unwrap()),
            &format!("{:.16e}", 0.123),
        );
        fs::write(&p, text).unwrap();
        let second = run_sweep(&ctx, &spec, Some(dir.path()), 1).unwrap();
        assert!((second.cells[0].outcomes[0].final_acc.unwrap() - 0.123).abs() < 1e-12);
    }

    #[test]
    fn highlight_degenerate_cases() {
        assert_eq!(highlight(&[(0.5, 0.1)]), vec![0]);
        assert_eq!(highlight(&[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0)]), vec![0, 1, 2]);
    }

    #[test]
    fn highlight_threshold_rule() {
        // peak 64.00 with std 0.84 → threshold 62.74
        let stats = [(64.00, 0.84), (63.15, 0.5), (63.07, 0.3), (62.05, 0.2)];
        assert_eq!(highlight(&stats), vec![0, 1, 2]);
    }

    #[test]
    fn incremental_epoch_zero_equals_always_on() {
        let ctx = tiny_ctx(3);
        let penalty = RegularizerSpec::penalty(RegularizerKind::L2Weights, 1e-3);
        let res = run_incremental_study(&ctx, penalty, &[0, 1], &[1, 2], None).unwrap();
        let always_on = ctx
            .run(1, &ctx.base.regularizers.with(penalty).unwrap())
            .unwrap();
        let (epoch, curves) = &res.settings[0];
        assert_eq!(*epoch, 0);
        assert_eq!(curves[0].1, always_on);
    }
}

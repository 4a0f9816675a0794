//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, unknown or duplicate keys are
//! rejected. Values can be overridden from the command line with repeated
//! `--set key=value` flags; `--seed` is shorthand for `--set seed=N`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use embedreg::data::{RELATION_CLASSES, SENTIMENT_CLASSES};
use embedreg::harness::{Axis, SweepSpec};
use embedreg::reg::PenaltyOptions;
use embedreg::{
    Error, ModelDims, RegularizerKind, RegularizerSet, RegularizerSpec, Result, Schedule, Task,
    TrainConfig,
};

/// Every key the config file accepts.
const KNOWN_KEYS: &[&str] = &[
    "task",
    "train_path",
    "val_path",
    "embedding_path",
    "embed_dim",
    "window",
    "hidden",
    "learning_rate",
    "schedule",
    "batch_size",
    "epochs",
    "seed",
    "penalize_biases",
    "l2_weights",
    "l2_weights_epoch",
    "l2_embeddings",
    "l2_embeddings_epoch",
    "reembed",
    "reembed_epoch",
    "dropout",
    "dropout_epoch",
    "sweep_axis1",
    "sweep_axis2",
    "seeds",
    "incremental_kind",
    "incremental_coeff",
    "incremental_epochs",
    "out",
];

/// Raw key→value map after file parsing and overrides, before typing.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn from_file(path: &PathBuf) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut map = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got {raw_line:?}",
                    path.display(),
                    i + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{}:{}: unknown key {key:?}",
                    path.display(),
                    i + 1
                )));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "{}:{}: duplicate key {key:?}",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(RawConfig { map })
    }

    /// Apply one `key=value` override; the key must be known.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(Error::Config(format!(
                "override {assignment:?} is not of the form key=value"
            )));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.map.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    /// Canonical settings listing: sorted `key = value` lines. Used for the
    /// run manifest and for digest-based run directory names.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            if k == "out" {
                continue;
            }
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn kind_from_name(key: &str, name: &str) -> Result<RegularizerKind> {
    match name {
        "l2_weights" => Ok(RegularizerKind::L2Weights),
        "l2_embeddings" => Ok(RegularizerKind::L2Embeddings),
        "reembed" => Ok(RegularizerKind::ReEmbed),
        "dropout" => Ok(RegularizerKind::Dropout),
        _ => Err(Error::Config(format!(
            "{key}: unknown regularizer {name:?} \
             (expected l2_weights, l2_embeddings, reembed, or dropout)"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse_as(key, v.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

/// Fully typed configuration shared by all run-style subcommands.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub task: Task,
    pub train_path: PathBuf,
    pub val_path: PathBuf,
    pub embedding_path: Option<PathBuf>,
    pub dims: ModelDims,
    pub base: TrainConfig,
    pub sweep: Option<SweepSpec>,
    pub seeds: Vec<u64>,
    pub incremental: Option<(RegularizerSpec, Vec<usize>)>,
    pub out: Option<PathBuf>,
    /// Canonical settings text the run directory digest is derived from.
    pub canonical: String,
}

fn sweep_axis(raw: &RawConfig, key: &str) -> Result<Option<Axis>> {
    let Some(value) = raw.get(key) else {
        return Ok(None);
    };
    let Some((name, values)) = value.split_once(':') else {
        return Err(Error::Config(format!(
            "{key}: expected `kind:v1,v2,...`, got {value:?}"
        )));
    };
    Ok(Some(Axis {
        kind: kind_from_name(key, name.trim())?,
        values: parse_list(key, values)?,
    }))
}

impl ResolvedConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let task = match raw.require("task")? {
            "relation" => Task::Relation,
            "sentiment" => Task::Sentiment,
            other => {
                return Err(Error::Config(format!(
                    "task: expected relation or sentiment, got {other:?}"
                )))
            }
        };
        let embed_dim = match raw.get("embed_dim") {
            Some(v) => parse_as("embed_dim", v)?,
            None => 50,
        };
        let dims = match task {
            Task::Relation => {
                let window = match raw.get("window") {
                    Some(v) => parse_as("window", v)?,
                    None => 5,
                };
                let hidden = match raw.get("hidden") {
                    Some(v) => parse_as("hidden", v)?,
                    None => 50,
                };
                ModelDims::cnn(embed_dim, window, hidden, RELATION_CLASSES)
            }
            Task::Sentiment => ModelDims::rnn(embed_dim, SENTIMENT_CLASSES),
        };
        if dims.embed == 0 || (task == Task::Relation && (dims.window == 0 || dims.hidden == 0)) {
            return Err(Error::Config("embed_dim/window/hidden must be positive".into()));
        }

        let mut specs = Vec::new();
        for (coeff_key, kind) in [
            ("l2_weights", RegularizerKind::L2Weights),
            ("l2_embeddings", RegularizerKind::L2Embeddings),
            ("reembed", RegularizerKind::ReEmbed),
            ("dropout", RegularizerKind::Dropout),
        ] {
            let Some(v) = raw.get(coeff_key) else {
                continue;
            };
            let value: f64 = parse_as(coeff_key, v)?;
            let mut spec = if kind == RegularizerKind::Dropout {
                RegularizerSpec::dropout(value)
            } else {
                RegularizerSpec::penalty(kind, value)
            };
            let epoch_key = format!("{coeff_key}_epoch");
            if let Some(e) = raw.get(&epoch_key) {
                spec = spec.at_epoch(parse_as(&epoch_key, e)?);
            }
            spec.validate()
                .map_err(|e| Error::Config(format!("{coeff_key}: {e}")))?;
            // zero-valued penalties mean "off"
            if spec.value != 0.0 {
                specs.push(spec);
            }
        }

        let base = TrainConfig {
            task,
            eta0: match raw.get("learning_rate") {
                Some(v) => parse_as("learning_rate", v)?,
                None => 0.1,
            },
            schedule: match raw.get("schedule") {
                None | Some("fixed") => Schedule::Fixed,
                Some("power_decay") => Schedule::PowerDecay,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "schedule: expected fixed or power_decay, got {other:?}"
                    )))
                }
            },
            batch_size: match raw.get("batch_size") {
                Some(v) => parse_as("batch_size", v)?,
                None => 10,
            },
            epochs: match raw.get("epochs") {
                Some(v) => parse_as("epochs", v)?,
                None => 30,
            },
            seed: match raw.get("seed") {
                Some(v) => parse_as("seed", v)?,
                None => 1,
            },
            regularizers: RegularizerSet::new(specs)?,
            penalty_opts: PenaltyOptions {
                include_biases: match raw.get("penalize_biases") {
                    Some(v) => parse_as("penalize_biases", v)?,
                    None => false,
                },
            },
        };
        base.validate()?;

        let axis1 = sweep_axis(raw, "sweep_axis1")?;
        let axis2 = sweep_axis(raw, "sweep_axis2")?;
        if axis1.is_none() && axis2.is_some() {
            return Err(Error::Config(
                "sweep_axis2 given without sweep_axis1".into(),
            ));
        }
        let seeds = match raw.get("seeds") {
            Some(v) => parse_list("seeds", v)?,
            None => vec![1, 2, 3, 4, 5],
        };
        let sweep = axis1.map(|a1| SweepSpec {
            axes: std::iter::once(a1).chain(axis2).collect(),
            seeds: seeds.clone(),
        });
        if let Some(s) = &sweep {
            s.validate()?;
        }

        let incremental = match raw.get("incremental_kind") {
            None => None,
            Some(name) => {
                let kind = kind_from_name("incremental_kind", name)?;
                if !kind.is_penalty() {
                    return Err(Error::Config(
                        "incremental_kind: must be a penalty kind".into(),
                    ));
                }
                let coeff: f64 = parse_as("incremental_coeff", raw.require("incremental_coeff")?)?;
                let epochs = parse_list("incremental_epochs", raw.require("incremental_epochs")?)?;
                Some((RegularizerSpec::penalty(kind, coeff), epochs))
            }
        };

        Ok(ResolvedConfig {
            task,
            train_path: raw.require("train_path")?.into(),
            val_path: raw.require("val_path")?.into(),
            embedding_path: raw.get("embedding_path").map(PathBuf::from),
            dims,
            base,
            sweep,
            seeds,
            incremental,
            out: raw.get("out").map(PathBuf::from),
            canonical: raw.canonical(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cfg_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn resolve(text: &str) -> Result<ResolvedConfig> {
        let f = cfg_file(text);
        ResolvedConfig::resolve(&RawConfig::from_file(&f.path().to_path_buf())?)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = resolve(
            "task = relation\ntrain_path = a.txt\nval_path = b.txt\n",
        )
        .unwrap();
        assert_eq!(cfg.base.eta0, 0.1);
        assert_eq!(cfg.base.epochs, 30);
        assert_eq!(cfg.base.seed, 1);
        assert_eq!(cfg.dims.window, 5);
        assert_eq!(cfg.dims.classes, RELATION_CLASSES);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let f = cfg_file("task = relation\nlerning_rate = 0.1\n");
        let err = RawConfig::from_file(&f.path().to_path_buf()).unwrap_err();
        assert!(err.to_string().contains("lerning_rate"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let f = cfg_file("task = relation\ntask = sentiment\n");
        assert!(RawConfig::from_file(&f.path().to_path_buf()).is_err());
    }

    #[test]
    fn negative_learning_rate_names_the_key() {
        let err = resolve(
            "task = relation\ntrain_path = a\nval_path = b\nlearning_rate = -1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = resolve(
            "# run settings\ntask = sentiment\n\ntrain_path = a # inline\nval_path = b\n",
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Sentiment);
        assert_eq!(cfg.dims.classes, SENTIMENT_CLASSES);
    }

    #[test]
    fn sweep_axes_parse_kinds_and_values() {
        let cfg = resolve(
            "task = relation\ntrain_path = a\nval_path = b\n\
             sweep_axis1 = l2_embeddings:0,1e-5,1e-4\nsweep_axis2 = dropout:0,0.5\n\
             seeds = 7,8\n",
        )
        .unwrap();
        let sweep = cfg.sweep.unwrap();
        assert_eq!(sweep.axes.len(), 2);
        assert_eq!(sweep.axes[0].kind, RegularizerKind::L2Embeddings);
        assert_eq!(sweep.axes[0].values, vec![0.0, 1e-5, 1e-4]);
        assert_eq!(sweep.axes[1].kind, RegularizerKind::Dropout);
        assert_eq!(sweep.seeds, vec![7, 8]);
    }

    #[test]
    fn override_replaces_file_value() {
        let f = cfg_file("task = relation\ntrain_path = a\nval_path = b\nseed = 3\n");
        let mut raw = RawConfig::from_file(&f.path().to_path_buf()).unwrap();
        raw.set("seed=9").unwrap();
        let cfg = ResolvedConfig::resolve(&raw).unwrap();
        assert_eq!(cfg.base.seed, 9);
        assert!(raw.set("bogus=1").is_err());
    }

    #[test]
    fn regularizers_with_activation_epochs() {
        let cfg = resolve(
            "task = relation\ntrain_path = a\nval_path = b\n\
             l2_weights = 1e-4\nl2_weights_epoch = 3\ndropout = 0.5\n",
        )
        .unwrap();
        let specs = cfg.base.regularizers.specs();
        assert_eq!(specs.len(), 2);
        let w = cfg
            .base
            .regularizers
            .get(RegularizerKind::L2Weights)
            .unwrap();
        assert_eq!(w.activation_epoch, 3);
    }
}

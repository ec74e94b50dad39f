//! Training runs that leave their artifacts in an output directory:
//! `metrics.jsonl` (one line per evaluation), `checkpoint.json` for the
//! best network, and `report.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use wge_core::demo::Demonstration;
use wge_core::trainer::{train, Algo, Counters, EpisodeSource, MetricRecord, TrainConfig, TrainHooks, TrainReport};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::store::atomic_write;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";

/// Appends each evaluation to a JSON-lines file as it happens.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(Error::io(path))?;
        Ok(Self { path: path.into(), out: BufWriter::new(file), error: None })
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(Error::Io { path: self.path, source: e });
        }
        self.out.flush().map_err(Error::io(&self.path))
    }
}

impl TrainHooks for MetricsWriter {
    fn on_metric(&mut self, record: &MetricRecord) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(record).expect("plain struct");
        let result = writeln!(self.out, "{line}").and_then(|_| self.out.flush());
        if let Err(e) = result {
            self.error = Some(e);
        }
    }

    fn on_episode(&mut self, _source: EpisodeSource, _reward: i8) {}
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDoc {
    pub algo: Algo,
    pub task: String,
    pub config_hash: String,
    pub test_success: f64,
    pub val_success: f64,
    pub best: Option<MetricRecord>,
    pub metrics: Vec<MetricRecord>,
    pub counters: Counters,
    pub final_buffer_len: usize,
}

impl ReportDoc {
    pub fn new(report: &TrainReport, config: &TrainConfig) -> Self {
        Self {
            algo: report.algo,
            task: report.task.clone(),
            config_hash: config_hash(config),
            test_success: report.test_success(),
            val_success: report.val_success(),
            best: report.best,
            metrics: report.metrics.clone(),
            counters: report.counters,
            final_buffer_len: report.final_buffer_len,
        }
    }
}

/// Trains and writes all artifacts under `out`.
pub fn train_to_dir(algo: Algo, config: &TrainConfig, demos: &[Demonstration], out: &Path) -> Result<TrainReport> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let mut metrics = MetricsWriter::create(&out.join(METRICS_FILE))?;
    let report = train(algo, config, demos, &mut metrics)?;
    metrics.finish()?;
    if let Some(net) = &report.best_net {
        Checkpoint::new(algo, config, report.best, net).save(&out.join(CHECKPOINT_FILE))?;
    }
    let doc = serde_json::to_string_pretty(&ReportDoc::new(&report, config)).expect("plain struct");
    atomic_write(&out.join(REPORT_FILE), doc.as_bytes())?;
    Ok(report)
}

/// Reads a training config from TOML or JSON, chosen by file extension.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = crate::store::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "config".into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    } else {
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("config {}: {e}", path.display())))
    }
}

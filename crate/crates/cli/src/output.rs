//! Output files of a run: JSON lines per realization, CSV aggregates and
//! curves, JSON documents, and the manifest listing them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use afs_lab::mc::{EstimatorResult, Sample, Verdict};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A CSV row type with a fixed header, so that empty tables still carry it.
pub trait Row: Serialize {
    const HEADERS: &'static [&'static str];
}

/// One estimator, one row.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub config_digest: String,
    pub estimator: String,
    pub size: Option<u64>,
    pub energy: Option<f64>,
    pub n: u64,
    pub successes: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
    pub bound: Option<f64>,
    pub verdict: Option<Verdict>,
}

impl Row for AggregateRow {
    const HEADERS: &'static [&'static str] = &[
        "config_digest",
        "estimator",
        "size",
        "energy",
        "n",
        "successes",
        "estimate",
        "ci_low",
        "ci_high",
        "master_seed",
        "bound",
        "verdict",
    ];
}

impl AggregateRow {
    pub fn new(digest: &str, r: &EstimatorResult) -> Self {
        AggregateRow {
            config_digest: digest.to_owned(),
            estimator: r.event.clone(),
            size: r.size,
            energy: r.energy,
            n: r.n_samples,
            successes: r.successes,
            estimate: r.estimate,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            master_seed: r.master_seed,
            bound: None,
            verdict: None,
        }
    }

    pub fn judged(mut self, bound: f64, verdict: Verdict) -> Self {
        self.bound = Some(bound);
        self.verdict = Some(verdict);
        self
    }
}

/// A scalar result without a binomial interval.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub config_digest: String,
    pub metric: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub passed: Option<bool>,
}

impl Row for MetricRow {
    const HEADERS: &'static [&'static str] = &["config_digest", "metric", "value", "bound", "passed"];
}

#[derive(Debug, Clone, Serialize)]
struct SampleLine<'a> {
    config_digest: &'a str,
    estimator: &'a str,
    index: u64,
    event: bool,
    value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Run metadata; the only output that carries timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub workers: usize,
    pub versions: Vec<(String, String)>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub passed: bool,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Files written by one subcommand, each tagged with the config digest.
pub struct OutputDir {
    root: PathBuf,
    digest: String,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, digest: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_owned(),
            digest: digest.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_owned());
        }
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    pub fn write_csv<R: Row>(&mut self, name: &str, rows: &[R]) -> Result<PathBuf, CliError> {
        let file = self.open(name)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.write_record(R::HEADERS)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(self.root.join(name))
    }

    /// One line per realization; `estimator` names the sample stream.
    pub fn write_samples<'a>(
        &mut self,
        name: &str,
        streams: impl IntoIterator<Item = (&'a str, &'a [Sample])>,
    ) -> Result<PathBuf, CliError> {
        let mut file = self.open(name)?;
        for (estimator, samples) in streams {
            for s in samples {
                let line = SampleLine {
                    config_digest: &self.digest,
                    estimator,
                    index: s.index,
                    event: s.event,
                    value: s.value,
                };
                serde_json::to_writer(&mut file, &line)?;
                file.write_all(b"\n")?;
            }
        }
        file.flush()?;
        Ok(self.root.join(name))
    }

    /// JSON lines of arbitrary per-realization records.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<PathBuf, CliError> {
        let mut file = self.open(name)?;
        for r in records {
            serde_json::to_writer(&mut file, &Tagged { config_digest: &self.digest, record: r })?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(self.root.join(name))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut file = self.open(name)?;
        serde_json::to_writer_pretty(&mut file, &Tagged { config_digest: &self.digest, record: value })?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(self.root.join(name))
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        for name in &self.written {
            let bytes = std::fs::read(self.root.join(name))?;
            manifest.outputs.push(OutputFile {
                name: name.clone(),
                sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
                bytes: bytes.len() as u64,
            });
        }
        manifest.finished_unix_ms = unix_ms();
        let file = File::create(self.root.join(MANIFEST))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(manifest)
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    config_digest: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

//! Stage runner: `generate → train → analyze → report`, with a content-hashed
//! manifest so that completed jobs are skipped on re-runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use super::data::{generate, ExperimentData};
use super::evaluate::{analyze, training_set, SeedAnalysis};
use super::report::{reference, summarize, verdicts, ExperimentReport};
use super::spec::{ExperimentSpec, ExperimentTag, Variant};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{train_dataset, ModelParams, TrainReport};

pub const SPEC_FILE: &str = "spec.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const DATA_DIR: &str = "data";

/// Inputs and outputs of one completed job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// Output path (relative to the run directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

impl StageRecord {
    fn outputs_hash(&self) -> String {
        io::sha256_bytes(&serde_json::to_vec(&self.outputs).expect("map serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tag: ExperimentTag,
    pub spec_fingerprint: String,
    pub versions: BTreeMap<String, String>,
    #[serde(default)]
    pub generate: Option<StageRecord>,
    /// Keyed by `variant/seed_N`.
    #[serde(default)]
    pub train: BTreeMap<String, StageRecord>,
    #[serde(default)]
    pub analyze: BTreeMap<String, StageRecord>,
    #[serde(default)]
    pub report: Option<StageRecord>,
}

impl RunManifest {
    fn new(spec: &ExperimentSpec) -> Self {
        RunManifest {
            tag: spec.tag,
            spec_fingerprint: spec.fingerprint(),
            versions: BTreeMap::from([("attn-dyn-core".to_string(), env!("CARGO_PKG_VERSION").to_string())]),
            generate: None,
            train: BTreeMap::new(),
            analyze: BTreeMap::new(),
            report: None,
        }
    }

    fn records(&self) -> impl Iterator<Item = &StageRecord> {
        self.generate
            .iter()
            .chain(self.train.values())
            .chain(self.analyze.values())
            .chain(self.report.iter())
    }

    /// Every referenced file exists and matches its recorded hash.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for r in self.records() {
            verify_outputs(root, r)?;
        }
        Ok(())
    }

    /// Whether `path` is listed as an output of some stage.
    pub fn lists(&self, path: &str) -> bool {
        self.records().any(|r| r.outputs.contains_key(path))
    }
}

fn verify_outputs(root: &Path, r: &StageRecord) -> Result<()> {
    for (rel, hash) in &r.outputs {
        let p = root.join(rel);
        if io::sha256_file(&p)? != *hash {
            return Err(Error::HashMismatch {
                path: p.display().to_string(),
            });
        }
    }
    Ok(())
}

fn up_to_date(root: &Path, rec: Option<&StageRecord>, input_hash: &str) -> bool {
    rec.is_some_and(|r| r.input_hash == input_hash && verify_outputs(root, r).is_ok())
}

fn hash_outputs(root: &Path, files: &[String]) -> Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| Ok((f.clone(), io::sha256_file(&root.join(f))?)))
        .collect()
}

fn job_key(variant: &str, seed: u64) -> String {
    format!("{variant}/seed_{seed}")
}

/// Number of jobs that ran and that were skipped as up to date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageOutcome {
    pub ran: usize,
    pub skipped: usize,
}

/// Outcome of a training job, stored next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStatus {
    pub diverged: bool,
    pub report: TrainReport,
}

pub struct Pipeline {
    pub spec: ExperimentSpec,
    pub root: PathBuf,
    pub jobs: usize,
}

impl Pipeline {
    pub fn new(spec: ExperimentSpec, root: impl Into<PathBuf>, jobs: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Pipeline {
            spec,
            root: root.into(),
            jobs: jobs.max(1),
        })
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        let path = self.root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest::new(&self.spec));
        }
        let m: RunManifest = io::read_json(&path)?;
        if m.tag != self.spec.tag {
            return Err(Error::invalid(format!(
                "{} holds experiment {}, not {}",
                self.root.display(),
                m.tag,
                self.spec.tag
            )));
        }
        Ok(m)
    }

    fn save_manifest(&self, m: &RunManifest) -> Result<()> {
        io::write_json(&self.root.join(MANIFEST_FILE), m)
    }

    fn begin(&self) -> Result<RunManifest> {
        io::write_json(&self.root.join(SPEC_FILE), &self.spec)?;
        let mut m = self.manifest()?;
        m.spec_fingerprint = self.spec.fingerprint();
        Ok(m)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))
    }

    pub fn generate(&self) -> Result<StageOutcome> {
        let mut m = self.begin()?;
        let input = self.spec.data_fingerprint();
        if up_to_date(&self.root, m.generate.as_ref(), &input) {
            return Ok(StageOutcome { ran: 0, skipped: 1 });
        }
        let start = Instant::now();
        let data = generate(&self.spec)?;
        let files: Vec<String> = data
            .save(&self.root.join(DATA_DIR))?
            .into_iter()
            .map(|f| format!("{DATA_DIR}/{f}"))
            .collect();
        io::write_json(&self.root.join(DATA_DIR).join("summary.json"), &data.summary())?;
        let mut files = files;
        files.push(format!("{DATA_DIR}/summary.json"));
        m.generate = Some(StageRecord {
            input_hash: input,
            outputs: hash_outputs(&self.root, &files)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        self.save_manifest(&m)?;
        Ok(StageOutcome { ran: 1, skipped: 0 })
    }

    /// Loaded data and the hash identifying it; fails on missing or stale data.
    fn data(&self, m: &RunManifest) -> Result<(ExperimentData, String)> {
        let rec = m.generate.as_ref().ok_or_else(|| {
            Error::MissingArtifact(format!("{}: run generate first", self.root.join(DATA_DIR).display()))
        })?;
        if rec.input_hash != self.spec.data_fingerprint() {
            return Err(Error::HashMismatch {
                path: format!(
                    "{} (generated for a different protocol)",
                    self.root.join(DATA_DIR).display()
                ),
            });
        }
        verify_outputs(&self.root, rec)?;
        Ok((ExperimentData::load(&self.root.join(DATA_DIR))?, rec.outputs_hash()))
    }

    fn jobs_list(&self) -> Vec<(&Variant, u64)> {
        self.spec
            .variants
            .iter()
            .flat_map(|v| self.spec.seeds.iter().map(move |&s| (v, s)))
            .collect()
    }

    fn run_dir(variant: &str, seed: u64) -> String {
        format!("runs/{variant}/seed_{seed}")
    }

    fn train_input(&self, variant: &Variant, seed: u64, data_hash: &str) -> String {
        let (cfg, tcfg) = variant.seeded(seed);
        io::sha256_bytes(&serde_json::to_vec(&(&cfg, &tcfg, data_hash, &self.spec.protocol)).expect("serializes"))
    }

    pub fn train(&self) -> Result<StageOutcome> {
        let m = self.begin()?;
        let (data, data_hash) = self.data(&m)?;
        let manifest = Mutex::new(m);
        let todo: Vec<(&Variant, u64, String)> = self
            .jobs_list()
            .into_iter()
            .map(|(v, s)| (v, s, self.train_input(v, s, &data_hash)))
            .collect();
        let skipped = {
            let m = manifest.lock().expect("manifest lock");
            todo.iter()
                .filter(|(v, s, h)| up_to_date(&self.root, m.train.get(&job_key(&v.name, *s)), h))
                .count()
        };
        let pending: Vec<_> = {
            let m = manifest.lock().expect("manifest lock");
            todo.into_iter()
                .filter(|(v, s, h)| !up_to_date(&self.root, m.train.get(&job_key(&v.name, *s)), h))
                .collect()
        };
        let results: Vec<Result<()>> = self.pool()?.install(|| {
            pending
                .par_iter()
                .map(|(v, s, h)| {
                    let rec = self.train_job(v, *s, h, &data)?;
                    let mut m = manifest.lock().expect("manifest lock");
                    m.train.insert(job_key(&v.name, *s), rec);
                    self.save_manifest(&m)
                })
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
        Ok(StageOutcome {
            ran: pending.len(),
            skipped,
        })
    }

    fn train_job(&self, variant: &Variant, seed: u64, input: &str, data: &ExperimentData) -> Result<StageRecord> {
        let start = Instant::now();
        let (cfg, tcfg) = variant.seeded(seed);
        let ds = training_set(&self.spec, variant, data)?;
        let dir = Self::run_dir(&variant.name, seed);
        let abs = self.root.join(&dir);
        let mut files = vec![format!("{dir}/status.json"), format!("{dir}/epochs.csv")];
        let status = match train_dataset(&cfg, &tcfg, &ds) {
            Ok((params, report)) => {
                params.save(&cfg, &abs.join("checkpoint.json"))?;
                files.push(format!("{dir}/checkpoint.json"));
                TrainStatus {
                    diverged: false,
                    report,
                }
            }
            Err(Error::Diverged { report, .. }) => TrainStatus {
                diverged: true,
                report: *report,
            },
            Err(e) => return Err(e),
        };
        io::write_json(&abs.join("status.json"), &status)?;
        io::write_csv(
            &abs.join("epochs.csv"),
            &["epoch", "train_loss", "val_loss", "lr"],
            status
                .report
                .epochs
                .iter()
                .map(|e| vec![e.epoch as f64, e.train_loss, e.val_loss, e.lr]),
        )?;
        Ok(StageRecord {
            input_hash: input.to_string(),
            outputs: hash_outputs(&self.root, &files)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn analyze(&self) -> Result<StageOutcome> {
        let m = self.begin()?;
        let (data, data_hash) = self.data(&m)?;
        let mut todo = Vec::new();
        for (v, s) in self.jobs_list() {
            let key = job_key(&v.name, s);
            let rec = m.train.get(&key).ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "{}: run train first",
                    self.root.join(Self::run_dir(&v.name, s)).display()
                ))
            })?;
            if rec.input_hash != self.train_input(v, s, &data_hash) {
                return Err(Error::HashMismatch {
                    path: format!(
                        "{} (trained for a different spec)",
                        self.root.join(Self::run_dir(&v.name, s)).display()
                    ),
                });
            }
            verify_outputs(&self.root, rec)?;
            let input = io::sha256_bytes(
                &serde_json::to_vec(&(
                    rec.outputs_hash(),
                    &data_hash,
                    &self.spec.acceptance,
                    &self.spec.protocol,
                ))
                .expect("serializes"),
            );
            let done = up_to_date(&self.root, m.analyze.get(&key), &input);
            todo.push((v, s, input, done));
        }
        let skipped = todo.iter().filter(|t| t.3).count();
        let pending: Vec<_> = todo.into_iter().filter(|t| !t.3).collect();
        let manifest = Mutex::new(m);
        let results: Vec<Result<()>> = self.pool()?.install(|| {
            pending
                .par_iter()
                .map(|(v, s, h, _)| {
                    let rec = self.analyze_job(v, *s, h, &data)?;
                    let mut m = manifest.lock().expect("manifest lock");
                    m.analyze.insert(job_key(&v.name, *s), rec);
                    self.save_manifest(&m)
                })
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
        Ok(StageOutcome {
            ran: pending.len(),
            skipped,
        })
    }

    fn analysis_dir(variant: &str, seed: u64) -> String {
        format!("analysis/{variant}/seed_{seed}")
    }

    fn analyze_job(&self, variant: &Variant, seed: u64, input: &str, data: &ExperimentData) -> Result<StageRecord> {
        let start = Instant::now();
        let run = self.root.join(Self::run_dir(&variant.name, seed));
        let status: TrainStatus = io::read_json(&run.join("status.json"))?;
        let dir = Self::analysis_dir(&variant.name, seed);
        let abs = self.root.join(&dir);
        let mut files = vec![format!("{dir}/analysis.json")];
        let analysis = if status.diverged {
            SeedAnalysis {
                variant: variant.name.clone(),
                seed,
                notes: vec![format!("training diverged at epoch {}", status.report.epochs.len())],
                ..SeedAnalysis::default()
            }
        } else {
            let (cfg, params): (_, ModelParams) = ModelParams::load(&run.join("checkpoint.json"))?;
            let (a, tables) = analyze(&self.spec, variant, &cfg, &params, data, seed)?;
            for (name, (header, rows)) in tables.tables {
                let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
                io::write_csv(&abs.join(format!("{name}.csv")), &hdr, rows)?;
                files.push(format!("{dir}/{name}.csv"));
            }
            a
        };
        io::write_json(&abs.join("analysis.json"), &analysis)?;
        Ok(StageRecord {
            input_hash: input.to_string(),
            outputs: hash_outputs(&self.root, &files)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn report(&self) -> Result<ExperimentReport> {
        let mut m = self.begin()?;
        let mut variants = Vec::new();
        let mut artifacts = Vec::new();
        let mut hashes = Vec::new();
        for v in &self.spec.variants {
            let mut seeds = Vec::new();
            for &s in &self.spec.seeds {
                let key = job_key(&v.name, s);
                let rec = m.analyze.get(&key).ok_or_else(|| {
                    Error::MissingArtifact(format!(
                        "{}: run analyze first",
                        self.root.join(Self::analysis_dir(&v.name, s)).display()
                    ))
                })?;
                verify_outputs(&self.root, rec)?;
                let rel = format!("{}/analysis.json", Self::analysis_dir(&v.name, s));
                seeds.push(io::read_json::<SeedAnalysis>(&self.root.join(&rel))?);
                hashes.push(rec.outputs_hash());
                artifacts.push(rel);
            }
            variants.push(summarize(&v.name, seeds));
        }
        let reference = reference(&self.spec);
        let verdicts = verdicts(&self.spec, &reference, &variants);
        let report = ExperimentReport {
            tag: self.spec.tag,
            spec_fingerprint: self.spec.fingerprint(),
            seeds: self.spec.seeds.clone(),
            reference,
            variants,
            verdicts,
            artifacts,
        };
        io::write_json(&self.root.join(REPORT_FILE), &report)?;
        m.report = Some(StageRecord {
            input_hash: io::sha256_bytes(&serde_json::to_vec(&hashes)?),
            outputs: hash_outputs(&self.root, &[REPORT_FILE.to_string()])?,
            wall_time_s: 0.0,
        });
        self.save_manifest(&m)?;
        Ok(report)
    }

    /// All four stages in order.
    pub fn run_all(&self) -> Result<ExperimentReport> {
        self.generate()?;
        self.train()?;
        self.analyze()?;
        self.report()
    }
}

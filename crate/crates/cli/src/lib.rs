//! Batch runner: parse a configuration, run the requested studies, write
//! tables, plot scripts and a manifest.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spinlab::lab::{self, ConvergenceTable};

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig, Study};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Table {
        status: spinlab::lab::StudyStatus,
        files: Vec<PathBuf>,
    },
    Error(String),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Table { status, .. } if status.is_success())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study: Study,
    pub outcome: Outcome,
    pub seconds: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
    pub threads: Option<usize>,
    pub records: Vec<StudyRecord>,
    pub summary: Option<PathBuf>,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.records.iter().all(|r| r.outcome.is_success())
    }

    pub fn exit_code(&self) -> i32 {
        if self.success() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spinlab run manifest");
        if let Some(p) = &self.config_path {
            let _ = writeln!(s, "config: {}", p.display());
        }
        let _ = writeln!(s, "output: {}", self.config.out_dir.display());
        match self.threads {
            Some(t) => {
                let _ = writeln!(s, "threads: {t}");
            }
            None => {
                let _ = writeln!(s, "threads: default ({})", rayon::current_num_threads());
            }
        }
        let _ = writeln!(s, "\n[configuration]");
        for line in &self.config.resolved {
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s, "\n[studies]");
        if self.records.is_empty() {
            let _ = writeln!(s, "no studies requested");
        }
        for r in &self.records {
            match &r.outcome {
                Outcome::Table { status, files } => {
                    let names: Vec<String> = files
                        .iter()
                        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
                        .collect();
                    let _ = writeln!(
                        s,
                        "{}: {} ({:.3} s) -> {}",
                        r.study.name(),
                        status,
                        r.seconds,
                        names.join(", ")
                    );
                }
                Outcome::Error(e) => {
                    let _ = writeln!(s, "{}: error ({:.3} s): {}", r.study.name(), r.seconds, e);
                }
            }
            for n in &r.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        if let Some(p) = &self.summary {
            let _ = writeln!(
                s,
                "\nsummary: {}",
                p.file_name().unwrap_or_default().to_string_lossy()
            );
        }
        let _ = writeln!(
            s,
            "result: {}",
            if self.success() { "success" } else { "failure" }
        );
        s
    }
}

fn run_study(study: Study, cfg: &RunConfig) -> spinlab::Result<ConvergenceTable> {
    match study {
        Study::Construction => lab::run_construction_study(&cfg.sweep),
        Study::Norm => lab::run_norm_study(&cfg.sweep),
        Study::Defects => lab::run_defect_robustness(&cfg.sweep),
        Study::Total => lab::run_total_study(&cfg.sweep),
    }
}

/// Run every requested study, write outputs under `cfg.out_dir` and return
/// the manifest (also written as `manifest.txt`).
pub fn run(
    cfg: RunConfig,
    config_path: Option<&Path>,
    threads: Option<usize>,
) -> std::io::Result<RunManifest> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut records = Vec::new();
    let mut tables = Vec::new();
    for &study in &cfg.studies {
        let start = Instant::now();
        let result = run_study(study, &cfg);
        let seconds = start.elapsed().as_secs_f64();
        let record = match result {
            Ok(table) => {
                let files = report::write_table(&cfg.out_dir, &table)?;
                let notes = table
                    .flatten()
                    .iter()
                    .flat_map(|t| t.notes.clone())
                    .collect();
                let status = table.status.clone();
                tables.push(table);
                StudyRecord {
                    study,
                    outcome: Outcome::Table { status, files },
                    seconds,
                    notes,
                }
            }
            Err(e) => StudyRecord {
                study,
                outcome: Outcome::Error(e.to_string()),
                seconds,
                notes: Vec::new(),
            },
        };
        records.push(record);
    }
    let summary = if tables.is_empty() {
        None
    } else {
        let all: Vec<&ConvergenceTable> = tables.iter().flat_map(|t| t.flatten()).collect();
        let path = cfg.out_dir.join("summary.csv");
        std::fs::write(&path, report::tables_csv(&all))?;
        Some(path)
    };
    let manifest = RunManifest {
        config_path: config_path.map(Path::to_path_buf),
        config: cfg,
        threads,
        records,
        summary,
    };
    std::fs::write(
        manifest.config.out_dir.join("manifest.txt"),
        manifest.render(),
    )?;
    Ok(manifest)
}

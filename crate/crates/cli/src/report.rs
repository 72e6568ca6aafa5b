use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use log::{Level, LevelFilter, Log, Metadata, Record};
use serde::Serialize;

/// Version of `run_report.schema.json` the report conforms to.
pub const SCHEMA_VERSION: u32 = 1;

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Forwards to `env_logger` (filtered by `PLUMEKIT_LOG`) and keeps every
/// warning for the run report regardless of the filter.
struct CapturingLogger {
    inner: env_logger::Logger,
}

impl Log for CapturingLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Warn || self.inner.enabled(metadata)
    }

    fn log(&self, record: &Record) {
        if record.level() <= Level::Warn {
            if let Ok(mut w) = WARNINGS.lock() {
                w.push(record.args().to_string());
            }
        }
        if self.inner.matches(record) {
            self.inner.log(record);
        }
    }

    fn flush(&self) {
        self.inner.flush();
    }
}

pub fn init_logging() {
    let inner = env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLUMEKIT_LOG", "warn"))
        .format_timestamp(None)
        .build();
    let level = inner.filter().max(LevelFilter::Warn);
    if log::set_boxed_logger(Box::new(CapturingLogger { inner })).is_ok() {
        log::set_max_level(level);
    }
}

fn take_warnings() -> Vec<String> {
    let mut w = WARNINGS.lock().map(|mut w| std::mem::take(&mut *w)).unwrap_or_default();
    // parallel stages log in scheduling order
    w.sort();
    w
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub subcommand: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub params: serde_json::Value,
    pub outputs: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
    pub warnings: Vec<String>,
}

/// Per-run bookkeeping filled in by the subcommands.
pub struct Ctx {
    started: Instant,
    timings: Vec<StageTiming>,
    outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    /// Where the run report goes unless `--run-report` is given.
    pub default_report: Option<PathBuf>,
}

impl Default for Ctx {
    fn default() -> Self {
        Self::new()
    }
}

impl Ctx {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            timings: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            default_report: None,
        }
    }

    pub fn stage<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }

    pub fn record(&mut self, name: &str, seconds: f64) {
        self.timings.push(StageTiming {
            stage: name.to_string(),
            seconds,
        });
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Default report location: `<dir of primary output>/<subcommand>.run.json`.
    pub fn report_next_to(&mut self, primary: &Path, subcommand: &str) {
        let dir = primary.parent().map(Path::to_path_buf).unwrap_or_default();
        self.default_report = Some(dir.join(format!("{subcommand}.run.json")));
    }

    pub fn finish(
        self,
        subcommand: &str,
        params: serde_json::Value,
        exit_code: i32,
        error: Option<String>,
    ) -> RunReport {
        let status = match exit_code {
            0 => "ok",
            1 => "validation_error",
            _ => "runtime_error",
        };
        RunReport {
            schema_version: SCHEMA_VERSION,
            tool: "plumekit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            library_version: plumekit::VERSION.into(),
            subcommand: subcommand.into(),
            status: status.into(),
            exit_code,
            error,
            seed: self.seed,
            threads: rayon::current_num_threads(),
            params,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            timings: self.timings,
            total_seconds: self.started.elapsed().as_secs_f64(),
            warnings: take_warnings(),
        }
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

/// A failed run, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs; exit code 1.
    Validation(anyhow::Error),
    /// Failure while computing or writing artifacts; exit code 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "validation error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime error: {e:#}"),
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn runtime(self) -> Outcome<T>;
    /// Validation failure attributed to a named field.
    fn field(self, name: &str) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }

    fn field(self, name: &str) -> Outcome<T> {
        self.map_err(|e| Failure::Validation(e.into().context(format!("field `{name}`"))))
    }
}

pub fn invalid<T>(field: &str, msg: impl fmt::Display) -> Outcome<T> {
    Err(Failure::Validation(anyhow::anyhow!("field `{field}`: {msg}")))
}

pub fn required<'a, T>(field: &str, value: &'a Option<T>) -> Outcome<&'a T> {
    match value {
        Some(v) => Ok(v),
        None => invalid(
            field,
            format_args!("missing (pass --{} or set it in --config)", field.replace('_', "-")),
        ),
    }
}

/// A required input path that must exist.
pub fn existing<'a>(field: &str, value: &'a Option<PathBuf>) -> Outcome<&'a Path> {
    let p = required(field, value)?;
    check_exists(field, p)?;
    Ok(p)
}

pub fn check_exists(field: &str, p: &Path) -> Outcome<()> {
    if !p.exists() {
        return invalid(field, format_args!("no such file: {}", p.display()));
    }
    Ok(())
}

pub fn in_range(field: &str, v: f64, lo: f64, hi: f64) -> Outcome<()> {
    if !(v >= lo && v <= hi) {
        return invalid(field, format_args!("{v} outside [{lo}, {hi}]"));
    }
    Ok(())
}

pub fn positive(field: &str, v: f64) -> Outcome<()> {
    if !(v > 0.0) || !v.is_finite() {
        return invalid(field, format_args!("{v} must be finite and > 0"));
    }
    Ok(())
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plumekit"));
    cmd.env_remove("PLUMEKIT_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn plumekit")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert_eq!(code(&out), 0, "plumekit {args:?} failed: {}", stderr(&out));
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Scene spec with one plume whose SBR is around 10 at the pipeline defaults.
pub fn scene_spec(rows: usize, cols: usize, noise_std: f64, seed: u64, q: f64) -> Value {
    json!({
        "rows": rows,
        "cols": cols,
        "noise_std": noise_std,
        "seed": seed,
        "plumes": [{
            "q": q,
            "wind_speed": 3.0,
            "wind_dir_deg": 30.0,
            "source": [rows as f64 * 0.6, cols as f64 * 0.2],
            "pixel_size": 30.0
        }]
    })
}

/// Every file under `dir` except run reports, sorted.
pub fn artifacts(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && !p.to_string_lossy().ends_with("run.json") && !p.ends_with("run_report.json"))
        .collect();
    files.sort();
    files
}

pub fn assert_same_artifacts(a: &Path, b: &Path) {
    let fa = artifacts(a);
    let fb = artifacts(b);
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(names(&fa), names(&fb));
    assert!(!fa.is_empty());
    for (x, y) in fa.iter().zip(&fb) {
        assert!(
            std::fs::read(x).unwrap() == std::fs::read(y).unwrap(),
            "{} differs",
            x.display()
        );
    }
}

pub fn schema() -> Value {
    read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("run_report.schema.json"))
}

fn type_ok(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => panic!("schema type {t} not supported"),
    }
}

/// Checks `v` against the schema keywords used by the shipped run-report
/// schema; returns the first violation.
pub fn validate(schema: &Value, v: &Value, at: &str) -> Result<(), String> {
    let known = [
        "$schema",
        "$id",
        "title",
        "type",
        "required",
        "properties",
        "additionalProperties",
        "items",
        "enum",
        "minimum",
    ];
    for k in schema.as_object().unwrap().keys() {
        assert!(known.contains(&k.as_str()), "schema keyword {k} not supported");
    }
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(t) => type_ok(v, t),
            Value::Array(ts) => ts.iter().any(|t| type_ok(v, t.as_str().unwrap())),
            _ => panic!("bad type keyword"),
        };
        if !ok {
            return Err(format!("{at}: {v} is not of type {t}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            return Err(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{at}: {x} < {min}"));
        }
    }
    if let Value::Object(obj) = v {
        if let Some(Value::Array(req)) = schema.get("required") {
            for r in req {
                if !obj.contains_key(r.as_str().unwrap()) {
                    return Err(format!("{at}: missing {r}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(sub, x, &format!("{at}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{at}: unexpected property {k}"))
                }
                None => {}
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (v, schema.get("items")) {
        for (i, x) in items.iter().enumerate() {
            validate(sub, x, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}

pub fn assert_valid_report(path: &Path) -> Value {
    let report = read_json(path);
    if let Err(e) = validate(&schema(), &report, "$") {
        panic!("{} violates the schema: {e}", path.display());
    }
    report
}

//! Configuration-driven front end for the landscape toolkit.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub use commands::{execute, Command, Context, Failure};
pub use config::{ConfigError, RunConfig};
use output::{summary_path, table_path, write_file, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ABORT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Command-line options after parsing.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub verbose: bool,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn summary(cmd: Command, digest: &str, seed: u64, report: &Report, abort: Option<String>) -> String {
    let tables: Vec<String> = report.tables.iter().map(|t| t.name.clone()).collect();
    let mut root = Map::new();
    root.insert("command".into(), json!(cmd.name()));
    root.insert(
        "versions".into(),
        json!({ "qcl": env!("CARGO_PKG_VERSION"), "qcl-core": qcl_core::VERSION }),
    );
    root.insert("inputs".into(), json!({ "config_sha256": digest, "seed": seed }));
    root.insert("status".into(), json!(if abort.is_some() { "abort" } else { "ok" }));
    root.insert("abort_reason".into(), abort.map(Value::from).unwrap_or(Value::Null));
    root.insert("tolerances".into(), Value::Object(report.tolerances.clone()));
    root.insert("results".into(), Value::Object(report.results.clone()));
    root.insert("tables".into(), json!(tables));
    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("summary serializes");
    text.push('\n');
    text
}

fn default_prefix(config: &Path) -> String {
    config.with_extension("").to_string_lossy().into_owned()
}

/// Runs one command and returns the process exit code. Config errors are
/// reported on stderr and write nothing; numerical aborts still write the
/// summary with the reason.
pub fn run(inv: &Invocation) -> i32 {
    let bytes = match std::fs::read(&inv.config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("qcl: config error: {}: {e}", inv.config.display());
            return EXIT_CONFIG;
        }
    };
    let text = match std::str::from_utf8(&bytes) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("qcl: config error: {}: {e}", inv.config.display());
            return EXIT_CONFIG;
        }
    };
    let mut config = match RunConfig::parse(text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qcl: config error in {}: {e}", inv.config.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    let prefix = inv
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| default_prefix(&inv.config));
    let base = inv.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let ctx = Context {
        config: &config,
        base: &base,
        verbose: inv.verbose,
    };
    let digest = hex(&Sha256::digest(&bytes));
    let (report, abort, code) = match execute(inv.command, &ctx) {
        Ok(r) => (r, None, EXIT_OK),
        Err(Failure::Config(e)) => {
            eprintln!("qcl: config error in {}: {e}", inv.config.display());
            return EXIT_CONFIG;
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("qcl: numerical abort: {e}");
            (Report::default(), Some(e.to_string()), EXIT_ABORT)
        }
    };
    for t in &report.tables {
        let path = table_path(&prefix, &t.name);
        if let Err(e) = write_file(&path, &t.render()) {
            eprintln!("qcl: cannot write {}: {e}", path.display());
            return EXIT_CONFIG;
        }
        if inv.verbose {
            eprintln!("qcl: wrote {} ({} rows)", path.display(), t.n_rows());
        }
    }
    let path = summary_path(&prefix);
    if let Err(e) = write_file(&path, &summary(inv.command, &digest, config.seed, &report, abort)) {
        eprintln!("qcl: cannot write {}: {e}", path.display());
        return EXIT_CONFIG;
    }
    code
}

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

/// Provenance record written beside every command's outputs. Timestamps live
/// only here, so the outputs themselves are reproducible byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    /// SHA-256 of the configuration text (of the built-in default when no file is given).
    pub config_sha256: String,
    pub seed: u64,
    pub started: String,
    pub finished: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(argv: Vec<String>, config_sha256: String, seed: u64) -> Self {
        let command = argv
            .iter()
            .skip(1)
            .find(|a| SUBCOMMANDS.contains(&a.as_str()))
            .cloned()
            .unwrap_or_else(|| "run".into());
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv,
            config_sha256,
            seed,
            started: now(),
            finished: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished = Some(now());
    }
}

const SUBCOMMANDS: [&str; 8] = [
    "predict",
    "simulate",
    "count",
    "analyze",
    "fit",
    "estimate",
    "calibrate-vr",
    "oracle",
];

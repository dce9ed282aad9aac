use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use sha2::{Digest, Sha256};
use tbell::model::{Config, ExperimentPlan, PhysicsParams};

use crate::manifest::RunManifest;
use crate::{Format, GlobalArgs};

/// Invalid configuration or arguments (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    use tbell::Error as E;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::InvalidParam { .. } => 2,
                E::Io(_) | E::Format { .. } | E::Json(_) => 3,
                _ => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
    }
    1
}

pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub format: Format,
    pub out: PathBuf,
    pub manifest: RunManifest,
}

impl Context {
    pub fn new(globals: GlobalArgs, argv: Vec<String>) -> Result<Self> {
        let (config, text) = match &globals.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let cfg = Config::from_json(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
                (cfg, text)
            }
            None => {
                let cfg = Config::from_physics(PhysicsParams::reference_setup(), ExperimentPlan::default());
                let text = serde_json::to_string(&cfg)?;
                (cfg, text)
            }
        };
        let seed = globals.seed.unwrap_or(config.plan.seed);
        std::fs::create_dir_all(&globals.out)
            .with_context(|| format!("creating output directory {}", globals.out.display()))?;
        let mut manifest = RunManifest::start(argv, hex::encode(Sha256::digest(text.as_bytes())), seed);
        if let Some(p) = &globals.config {
            manifest.inputs.push(p.display().to_string());
        }
        Ok(Context {
            config,
            seed,
            format: globals.format,
            out: globals.out,
            manifest,
        })
    }

    pub fn physics(&self) -> PhysicsParams {
        self.config.physics()
    }

    pub fn plan(&self) -> &ExperimentPlan {
        &self.config.plan
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    /// Path of output `name` inside the output directory, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(p.display().to_string());
        p
    }

    pub fn finish(mut self) -> Result<()> {
        let name = format!("{}.manifest.json", self.manifest.command);
        let path = self.out.join(name);
        self.manifest.finish();
        crate::io::write_json(&path, &self.manifest)
    }
}

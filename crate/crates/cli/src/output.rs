use std::fs;
use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, Format};

/// Everything needed to replay a run.
#[derive(Serialize)]
pub struct ExperimentConfig<'a> {
    pub seed: u64,
    pub format: Format,
    #[serde(flatten)]
    pub command: &'a crate::Command,
}

pub fn config(cli: &Cli) -> Value {
    serde_json::to_value(ExperimentConfig {
        seed: cli.seed,
        format: cli.format,
        command: &cli.command,
    })
    .expect("config serialises")
}

/// An artifact in both encodings; only the selected one is rendered.
pub struct Artifact {
    pub csv: String,
    pub json: Value,
}

impl Artifact {
    pub fn new(csv: String, json: impl Serialize) -> Self {
        Self {
            csv,
            json: serde_json::to_value(json).expect("artifact serialises"),
        }
    }

    /// CSV gets a leading `# ` comment with the config; JSON embeds it.
    pub fn render(&self, cli: &Cli) -> String {
        let cfg = config(cli);
        match cli.format {
            Format::Csv => format!("# {cfg}\n{}", self.csv),
            Format::Json => {
                let doc = json!({ "config": cfg, "result": self.json });
                serde_json::to_string_pretty(&doc).expect("json renders") + "\n"
            }
        }
    }

    pub fn emit(&self, cli: &Cli) -> Result<()> {
        let text = self.render(cli);
        match &cli.out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

use std::path::{Path, PathBuf};

use romdx_core::evaluation::EvalConfig;
use romdx_core::prompt::load_rule_set;
use romdx_core::RuleSet;
use serde::{Deserialize, Serialize};

use crate::workspace::Workspace;
use crate::{exit, ExitOnErr, Failure};

pub const DEFAULT_CONFIG_FILE: &str = "romdx.toml";

/// Settings read from the TOML config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Rule set JSON; the built-in rules are used when absent.
    pub rules: Option<PathBuf>,
    pub weights: romdx_core::evaluation::Weights,
    pub bootstrap: romdx_core::evaluation::BootstrapConfig,
    pub backend: RemoteSettings,
    pub preprocess: PreprocessSettings,
    pub serve: ServeSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub rate_limit: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub exec: Option<String>,
    pub crop: Option<String>,
    pub target_kbps: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub hide_raw: bool,
    pub assets: Option<PathBuf>,
}

impl CliConfig {
    /// Reads `explicit`, or the workspace default when it exists. An
    /// explicit path that does not exist is an input error.
    pub fn load(ws: &Workspace, explicit: Option<&Path>) -> Result<Self, Failure> {
        let path = match explicit {
            Some(p) if !p.exists() => return Err(Failure::input(format!("config file {} not found", p.display()))),
            Some(p) => p.to_path_buf(),
            None => {
                let default = ws.root().join(DEFAULT_CONFIG_FILE);
                if !default.exists() {
                    return Ok(Self::default());
                }
                default
            }
        };
        let text = std::fs::read_to_string(&path)?;
        let mut cfg: CliConfig = toml::from_str(&text)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        if let Some(rules) = &cfg.rules {
            if rules.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.rules = Some(base.join(rules));
            }
        }
        cfg.eval().validate().exit_with(exit::INPUT)?;
        Ok(cfg)
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            weights: self.weights,
            bootstrap: self.bootstrap,
        }
    }

    pub fn rule_set(&self) -> Result<RuleSet, Failure> {
        match &self.rules {
            Some(path) => load_rule_set(path).exit_with(exit::INPUT),
            None => Ok(RuleSet::default_rules()),
        }
    }
}

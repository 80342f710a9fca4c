use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Cli, Command, WitnessKind};

/// Every parameter of a run. A config file holds any subset; flags fill in
/// or replace fields; unset fields take the documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denom_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common_left: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common_right: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dists: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_values: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) overlaid with the command-line flags.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut c = match &cli.common.config {
            Some(p) => Self::read(p)?,
            None => Self::default(),
        };
        let name = command_name(&cli.command);
        if let Some(existing) = &c.command {
            if existing != name {
                bail!("config is for command {existing:?} but {name:?} was requested");
            }
        }
        c.command = Some(name.to_string());
        let common = &cli.common;
        set(&mut c.seed, common.seed);
        set(&mut c.samples, common.samples);
        set(&mut c.out, common.out.clone());
        set(&mut c.tol, common.tol);
        set(&mut c.denom_bits, common.denom_bits);

        let mut positional = Vec::new();
        match cli.command.clone() {
            Command::Certify { input } | Command::Embed { input } | Command::Sample { input } => {
                positional.extend(input);
            }
            Command::Amalgamate {
                left,
                right,
                common_left,
                common_right,
            } => {
                positional.extend(left);
                positional.extend(right);
                set(&mut c.common_left, common_left);
                set(&mut c.common_right, common_right);
            }
            Command::Grow { input, stages, per_stage } => {
                positional.extend(input);
                set(&mut c.stages, stages);
                set(&mut c.per_stage, per_stage);
            }
            Command::Witness {
                kind,
                input,
                target,
                phi,
                step,
                dists,
                fixed,
                x,
                count,
            } => {
                positional.extend(input);
                set(&mut c.witness, kind);
                set(&mut c.target, target);
                set(&mut c.phi, phi);
                set(&mut c.step, step);
                set(&mut c.dists, dists);
                set(&mut c.fixed, fixed);
                set(&mut c.x, x);
                set(&mut c.count, count);
            }
            Command::Mixing { input, event, k_values } => {
                positional.extend(input);
                set(&mut c.event, event);
                set(&mut c.k_values, k_values);
            }
            Command::Orders { input, indices } => {
                positional.extend(input);
                set(&mut c.indices, indices);
            }
        }
        if !positional.is_empty() {
            c.inputs = positional;
        }
        Ok(c)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(sphere_fraisse::metric::DEFAULT_TOL)
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn policy(&self) -> sphere_fraisse::SnapPolicy {
        let d = sphere_fraisse::SnapPolicy::default();
        sphere_fraisse::SnapPolicy {
            denom_bits: self.denom_bits.unwrap_or(d.denom_bits),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
        }
    }

    pub fn input(&self, i: usize) -> Result<&Path> {
        match self.inputs.get(i) {
            Some(p) => Ok(p),
            None => bail!("missing input file #{}", i + 1),
        }
    }

    /// SHA-256 of the compact JSON of this config with input paths replaced
    /// by the SHA-256 of their contents and the output directory removed.
    pub fn hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.out = None;
        canon.inputs = Vec::new();
        let mut value = serde_json::to_value(&canon)?;
        let digests = self
            .inputs
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(hex::encode(Sha256::digest(&bytes)))
            })
            .collect::<Result<Vec<_>>>()?;
        value["input_sha256"] = serde_json::to_value(digests)?;
        Ok(hex::encode(Sha256::digest(serde_json::to_string(&value)?.as_bytes())))
    }
}

pub fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Certify { .. } => "certify",
        Command::Embed { .. } => "embed",
        Command::Amalgamate { .. } => "amalgamate",
        Command::Grow { .. } => "grow",
        Command::Witness { .. } => "witness",
        Command::Sample { .. } => "sample",
        Command::Mixing { .. } => "mixing",
        Command::Orders { .. } => "orders",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 5, "samples": 10, "indices": [0, 1]}"#).unwrap();
        let cli = Cli::try_parse_from([
            "sphere-fraisse",
            "orders",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "space.json",
        ])
        .unwrap();
        let c = ExperimentConfig::from_cli(&cli).unwrap();
        assert_eq!(c.seed(), 9);
        assert_eq!(c.samples, Some(10));
        assert_eq!(c.indices, Some(vec![0, 1]));
        assert_eq!(c.inputs, vec![PathBuf::from("space.json")]);
        assert_eq!(c.command.as_deref(), Some("orders"));
    }

    #[test]
    fn unknown_keys_and_mismatched_commands_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"sed": 5}"#).unwrap();
        assert!(ExperimentConfig::read(&cfg).is_err());
        std::fs::write(&cfg, r#"{"command": "mixing"}"#).unwrap();
        let cli = Cli::try_parse_from(["sphere-fraisse", "certify", "--config", cfg.to_str().unwrap()]).unwrap();
        assert!(ExperimentConfig::from_cli(&cli).is_err());
    }

    #[test]
    fn hash_ignores_paths_and_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        std::fs::write(&a, "same").unwrap();
        std::fs::write(&b, "same").unwrap();
        let mut c1 = ExperimentConfig {
            command: Some("certify".into()),
            inputs: vec![a],
            out: Some("x".into()),
            ..Default::default()
        };
        let c2 = ExperimentConfig {
            inputs: vec![b.clone()],
            out: Some("y".into()),
            ..c1.clone()
        };
        assert_eq!(c1.hash().unwrap(), c2.hash().unwrap());
        c1.seed = Some(1);
        assert_ne!(c1.hash().unwrap(), c2.hash().unwrap());
        std::fs::write(&b, "different").unwrap();
        c1.seed = None;
        assert_ne!(c1.hash().unwrap(), c2.hash().unwrap());
    }
}

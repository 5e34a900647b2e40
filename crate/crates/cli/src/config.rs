//! Flat key=value configuration files.
//!
//! Keys mirror the long flag names of the subcommand they configure and
//! override whatever the command line set. Lines starting with `#` and
//! blank lines are skipped.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::{
    BenchArgs, CliError, EvalArgs, FixpointArgs, GenArgs, ParseArgs, SolveArgs, TrainArgs,
};

/// One subcommand's view of its configurable keys.
pub trait Configurable {
    /// Applies one key; `Ok(false)` means the key is not known here.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError>;
}

pub fn apply<T: Configurable>(path: Option<PathBuf>, args: &mut T) -> Result<(), CliError> {
    let Some(path) = path else {
        return Ok(());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("configuration {}: {e}", path.display())))?;
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "configuration {}:{}: expected key=value, got `{line}`",
                path.display(),
                number + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !args.set(key, value)? {
            return Err(CliError::Usage(format!(
                "configuration {}:{}: unknown key `{key}`",
                path.display(),
                number + 1
            )));
        }
    }
    Ok(())
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| CliError::Usage(format!("configuration key `{key}`: {e}")))
}

impl Configurable for ParseArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "out" => self.out = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for SolveArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "out" => self.out = Some(parse(key, value)?),
            "flows-out" => self.flows_out = Some(parse(key, value)?),
            "demand-multiplier" => self.demand_multiplier = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for GenArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "scenarios" => self.scenarios = parse(key, value)?,
            "days" => self.days = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "diameter-sigma" => self.diameter_sigma = parse(key, value)?,
            "demand-sigma" => self.demand_sigma = parse(key, value)?,
            "out" => self.out = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for TrainArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "dataset" => self.dataset = Some(parse(key, value)?),
            "scenarios" => self.scenarios = parse(key, value)?,
            "days" => self.days = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "k-min" => self.k_min = parse(key, value)?,
            "k-max" => self.k_max = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "latent-dim" => self.latent_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "epoch-samples" => self.epoch_samples = Some(parse(key, value)?),
            "out" => self.out = parse(key, value)?,
            "loss-out" => self.loss_out = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for EvalArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "checkpoint" => self.checkpoint = parse(key, value)?,
            "dataset" => self.dataset = Some(parse(key, value)?),
            "scenarios" => self.scenarios = parse(key, value)?,
            "days" => self.days = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for BenchArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "checkpoint" => self.checkpoint = Some(parse(key, value)?),
            "latent-dim" => self.latent_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dataset" => self.dataset = Some(parse(key, value)?),
            "scenarios" => self.scenarios = parse(key, value)?,
            "days" => self.days = parse(key, value)?,
            "counts" => {
                let mut counts = Vec::new();
                for part in value.split(',') {
                    counts.push(parse::<usize>(key, part.trim())?);
                }
                self.counts = counts;
            }
            "iterations" => self.iterations = parse(key, value)?,
            "out" => self.out = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Configurable for FixpointArgs {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "flows" => self.flows = Some(parse(key, value)?),
            "out" => self.out = Some(parse(key, value)?),
            "flows-out" => self.flows_out = Some(parse(key, value)?),
            "zeta" => self.zeta = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

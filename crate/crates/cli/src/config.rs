//! Configuration documents accepted by the CLI.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::path::Path;

use mechsim::dr::DrSpec;
use mechsim::game::{GameInstance, Supertype};
use mechsim::mechanism::MechanismParams;
use mechsim::strategies::Strategy;

/// A market instance: a table-driven game or a demand-response spec,
/// distinguished by the top-level key.
#[derive(Debug, Clone)]
pub enum MarketDoc {
    Finite(GameInstance),
    Dr(DrSpec),
}

/// Simulation document: market, strategies, mechanism parameters and an
/// optional seed (flags override).
#[derive(Debug, Clone)]
pub struct SimDoc {
    pub market: MarketDoc,
    pub strategies: Option<Vec<Strategy>>,
    pub params: MechanismParams,
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
struct SimDocJson {
    game: Option<serde_json::Value>,
    dr: Option<DrSpec>,
    strategies: Option<Vec<Strategy>>,
    params: MechanismParams,
    seed: Option<u64>,
}

pub fn load_sim_doc(path: &Path) -> Result<SimDoc> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let raw: SimDocJson = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    let market = match (raw.game, raw.dr) {
        (Some(doc), None) => MarketDoc::Finite(
            GameInstance::from_json(&doc)
                .with_context(|| format!("invalid game instance in {}", path.display()))?,
        ),
        (None, Some(spec)) => MarketDoc::Dr(spec),
        (Some(_), Some(_)) => bail!("config declares both \"game\" and \"dr\""),
        (None, None) => bail!("config must declare a \"game\" or a \"dr\" market"),
    };
    Ok(SimDoc {
        market,
        strategies: raw.strategies,
        params: raw.params,
        seed: raw.seed,
    })
}

impl SimDoc {
    pub fn true_supertypes(&self) -> Vec<Supertype> {
        match &self.market {
            MarketDoc::Finite(inst) => inst.supertypes.clone(),
            MarketDoc::Dr(spec) => spec.supertypes.clone(),
        }
    }

    pub fn n_players(&self) -> usize {
        match &self.market {
            MarketDoc::Finite(inst) => inst.spec.n(),
            MarketDoc::Dr(spec) => spec.n(),
        }
    }
}

/// Parameters of the participation sweep.
#[derive(Debug, Clone, Deserialize)]
pub struct SocialCostParams {
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_days")]
    pub days: u64,
}

fn default_n_min() -> usize {
    1
}
fn default_n_max() -> usize {
    8
}
fn default_days() -> u64 {
    200
}

impl Default for SocialCostParams {
    fn default() -> Self {
        Self {
            n_min: default_n_min(),
            n_max: default_n_max(),
            days: default_days(),
        }
    }
}

/// Parameters of the payment-sensitivity sweep.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
pub struct PaymentSensitivityParams {
    #[serde(default = "default_means")]
    pub means: Vec<f64>,
    #[serde(default = "default_variance")]
    pub variance: f64,
    #[serde(default = "default_n_others")]
    pub n_others: usize,
    #[serde(default = "default_sensitivity_days")]
    pub days: u64,
    #[serde(default = "default_fixed_param")]
    pub fixed_param: f64,
}

fn default_means() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_variance() -> f64 {
    2.0
}
fn default_n_others() -> usize {
    2
}
fn default_sensitivity_days() -> u64 {
    365
}
fn default_fixed_param() -> f64 {
    4.0
}

impl Default for PaymentSensitivityParams {
    fn default() -> Self {
        Self {
            means: default_means(),
            variance: default_variance(),
            n_others: default_n_others(),
            days: default_sensitivity_days(),
            fixed_param: default_fixed_param(),
        }
    }
}

/// Parameters of the posted-price comparison.
#[derive(Debug, Clone, Deserialize)]
pub struct PostedPriceParams {
    #[serde(default = "default_pp_days")]
    pub days: u64,
    #[serde(default = "default_pp_n")]
    pub n: usize,
    pub dr: Option<DrSpec>,
}

fn default_pp_days() -> u64 {
    2_000
}
fn default_pp_n() -> usize {
    3
}

impl Default for PostedPriceParams {
    fn default() -> Self {
        Self {
            days: default_pp_days(),
            n: default_pp_n(),
            dr: None,
        }
    }
}

pub fn load_params<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("cannot parse config {}", p.display()))
        }
    }
}

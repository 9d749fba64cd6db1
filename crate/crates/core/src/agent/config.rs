use serde::{Deserialize, Serialize};

use crate::apf::{ApfBackend, ApfConfig};
use crate::density::ContextFilter;

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    TabularQ,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    #[default]
    None,
    /// Pseudo-count bonus from a pixel density model.
    Cts,
    /// Forward-model prediction error bonus.
    Icm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FilterName {
    #[default]
    #[serde(rename = "L-shaped")]
    LShaped,
    #[serde(rename = "plus-shaped")]
    PlusShaped,
}

impl FilterName {
    pub fn filter(self) -> ContextFilter {
        match self {
            FilterName::LShaped => ContextFilter::l_shaped(),
            FilterName::PlusShaped => ContextFilter::plus_shaped(),
        }
    }
}

/// Training hyperparameters. Field names follow the PPO and APF
/// hyperparameter tables; tabular-only fields are grouped at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Environment steps to train for.
    pub timesteps: u64,
    pub discount: f64,
    /// Defaults to 5e-4 for PPO and 1.0 for tabular Q-learning, which is exact
    /// on deterministic levels; lower it for random-walk monsters.
    pub learning_rate: Option<f64>,

    pub horizon: usize,
    pub num_minibatch: usize,
    pub gae_lambda: f64,
    pub num_epochs: usize,
    pub entropy_coeff: f64,
    pub vf_coeff: f64,
    pub clipping_param: f64,
    pub max_grad_norm: f64,
    pub num_actors: usize,
    pub hidden: Vec<usize>,

    pub exploration: ExplorationKind,
    pub cts_beta: f64,
    pub cts_filter: FilterName,
    pub icm_state_features: usize,
    pub icm_beta: f64,

    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `timesteps` over which epsilon decays linearly.
    pub epsilon_decay: f64,
    /// Backward sweeps over each finished episode.
    pub replay_passes: usize,
    /// Optimistic start values drive systematic exploration when rewards are at most 1.
    pub initial_q: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::TabularQ,
            timesteps: 200_000,
            discount: 0.99,
            learning_rate: None,
            horizon: 256,
            num_minibatch: 8,
            gae_lambda: 0.95,
            num_epochs: 3,
            entropy_coeff: 0.01,
            vf_coeff: 0.5,
            clipping_param: 0.2,
            max_grad_norm: 0.5,
            num_actors: 16,
            hidden: vec![64, 64],
            exploration: ExplorationKind::None,
            cts_beta: 0.05,
            cts_filter: FilterName::LShaped,
            icm_state_features: 64,
            icm_beta: 0.2,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
            replay_passes: 1,
            initial_q: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn tabular(timesteps: u64) -> Self {
        Self {
            timesteps,
            ..Self::default()
        }
    }

    pub fn ppo(timesteps: u64) -> Self {
        Self {
            kind: AgentKind::Ppo,
            timesteps,
            ..Self::default()
        }
    }

    pub fn with_exploration(mut self, exploration: ExplorationKind) -> Self {
        self.exploration = exploration;
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.kind {
            AgentKind::TabularQ => 1.0,
            AgentKind::Ppo => 5e-4,
        })
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if self.timesteps == 0 {
            return Err(AgentError::ZeroBudget);
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must be in (0, 1]");
        }
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.kind == AgentKind::Ppo {
            if self.clipping_param <= 0.0 {
                return bad("clipping_param must be positive");
            }
            if self.num_actors == 0 {
                return bad("num_actors must be at least 1");
            }
            if self.horizon == 0 || self.num_minibatch == 0 || self.num_epochs == 0 {
                return bad("horizon, num_minibatch and num_epochs must be positive");
            }
            if self.horizon * self.num_actors < self.num_minibatch {
                return bad("batch is smaller than num_minibatch");
            }
            if !(0.0..=1.0).contains(&self.gae_lambda) {
                return bad("gae_lambda must be in [0, 1]");
            }
            if self.max_grad_norm <= 0.0 {
                return bad("max_grad_norm must be positive");
            }
            if self.hidden.is_empty() || self.hidden.contains(&0) {
                return bad("hidden layer sizes must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon values must be in [0, 1]");
        }
        if self.cts_beta < 0.0 || self.icm_beta < 0.0 {
            return bad("exploration betas must be non-negative");
        }
        if self.icm_state_features == 0 {
            return bad("icm_state_features must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        let cfg: AgentConfig = toml::from_str(text).map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// APF settings as written in config files; absent values take the
/// backend's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApfFileConfig {
    pub backend: ApfBackend,
    pub apf_beta: Option<f64>,
    pub pos_cap: Option<f64>,
    pub neg_cap: Option<f64>,
    pub frame_side: Option<usize>,
    pub cts_filter: Option<FilterName>,
    pub icm_state_features: Option<usize>,
    pub icm_epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl ApfFileConfig {
    pub fn to_config(&self) -> ApfConfig {
        let mut c = match self.backend {
            ApfBackend::Cts => ApfConfig::cts(),
            ApfBackend::Icm => ApfConfig::icm(),
        };
        if let Some(v) = self.apf_beta {
            c.beta = v;
        }
        if let Some(v) = self.pos_cap {
            c.pos_cap = v;
        }
        if let Some(v) = self.neg_cap {
            c.neg_cap = v;
        }
        if let Some(v) = self.frame_side {
            c.frame_side = Some(v);
        }
        if let Some(v) = self.cts_filter {
            c.cts.filter = v.filter();
        }
        if let Some(v) = self.icm_state_features {
            c.icm.feature_dim = v;
        }
        if let Some(v) = self.icm_epochs {
            c.icm.train.epochs = v;
        }
        if let Some(v) = self.seed {
            c.icm.encoder_seed = v;
            c.icm.train.seed = v;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let c = AgentConfig::ppo(1000);
        assert_eq!(c.horizon, 256);
        assert_eq!(c.num_minibatch, 8);
        assert_eq!(c.gae_lambda, 0.95);
        assert_eq!(c.discount, 0.99);
        assert_eq!(c.learning_rate(), 5e-4);
        assert_eq!(c.num_epochs, 3);
        assert_eq!(c.entropy_coeff, 0.01);
        assert_eq!(c.vf_coeff, 0.5);
        assert_eq!(c.clipping_param, 0.2);
        assert_eq!(c.max_grad_norm, 0.5);
        assert_eq!(c.num_actors, 16);
        assert_eq!(c.cts_beta, 0.05);
        assert_eq!(c.icm_beta, 0.2);
    }

    #[test]
    fn toml_keys() {
        let c = AgentConfig::from_toml(
            r#"
kind = "ppo"
timesteps = 5000
horizon = 64
gae_lambda = 0.99
discount = 0.999
num_epochs = 4
entropy_coeff = 0.001
clipping_param = 0.1
num_actors = 32
exploration = "icm"
cts_filter = "plus-shaped"
"#,
        )
        .unwrap();
        assert_eq!(c.kind, AgentKind::Ppo);
        assert_eq!(c.horizon, 64);
        assert_eq!(c.exploration, ExplorationKind::Icm);
        assert_eq!(c.cts_filter, FilterName::PlusShaped);
        assert_eq!(AgentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(AgentConfig::from_toml("horizn = 3").is_err());
        assert!(matches!(AgentConfig::from_toml("timesteps = 0"), Err(AgentError::ZeroBudget)));
    }

    #[test]
    fn apf_file_defaults() {
        let f: ApfFileConfig = toml::from_str("backend = \"Icm\"").unwrap();
        let c = f.to_config();
        assert_eq!(c.backend, ApfBackend::Icm);
        assert_eq!((c.beta, c.pos_cap, c.neg_cap), (0.01, 0.1, -0.4));
        let f: ApfFileConfig = toml::from_str("backend = \"Cts\"\napf_beta = 0.05").unwrap();
        assert_eq!((f.to_config().beta, f.to_config().pos_cap), (0.05, 0.4));
    }
}

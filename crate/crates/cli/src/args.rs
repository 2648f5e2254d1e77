//! Flag groups shared by several subcommands.

use std::collections::BTreeMap;

use clap::{Args, ValueEnum};
use rearrange_core::perception::{Confuser, FusionMode, NoiseModel};
use rearrange_core::policy::{GraspPolicyKind, PlaceVariant, SeePolicyKind};
use rearrange_core::simulator::{EpisodeConfig, Policies};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GraspArg {
    Pi0,
    GreedyFreeGoal,
    RandomGrasp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SeeArg {
    NoSee,
    RandomSee,
    GreedySee,
    OracleSee,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PlaceArg {
    Pi0Place,
    Pi1Place,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    Mean,
    LatestOnly,
}

impl From<SeeArg> for SeePolicyKind {
    fn from(a: SeeArg) -> Self {
        match a {
            SeeArg::NoSee => SeePolicyKind::NoSee,
            SeeArg::RandomSee => SeePolicyKind::RandomSee,
            SeeArg::GreedySee => SeePolicyKind::GreedySee,
            SeeArg::OracleSee => SeePolicyKind::OracleSee,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value = "pi0")]
    pub grasp: GraspArg,
    #[arg(long, value_enum, default_value = "greedy-see")]
    pub see: SeeArg,
    #[arg(long, value_enum, default_value = "pi1-place")]
    pub place: PlaceArg,
}

impl PolicyArgs {
    pub fn policies(&self) -> Policies {
        Policies {
            grasp: match self.grasp {
                GraspArg::Pi0 => GraspPolicyKind::Pi0,
                GraspArg::GreedyFreeGoal => GraspPolicyKind::GreedyFreeGoal,
                GraspArg::RandomGrasp => GraspPolicyKind::RandomGrasp,
            },
            see: self.see.into(),
            place: match self.place {
                PlaceArg::Pi0Place => PlaceVariant::Pi0Place,
                PlaceArg::Pi1Place => PlaceVariant::Pi1Place,
            },
        }
    }
}

/// Noise model overrides; unset flags keep the model's defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct NoiseArgs {
    /// Start from noiseless, never-ambiguous perception.
    #[arg(long)]
    pub ideal: bool,
    #[arg(long)]
    pub mu_match: Option<f64>,
    #[arg(long)]
    pub mu_nonmatch: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub p_bad_view: Option<f64>,
    #[arg(long)]
    pub mu_bad: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub num_views: Option<usize>,
    #[arg(long)]
    pub view_correlation: Option<f64>,
    /// `none`, `fraction=F`, or `map=OBJ:GOAL,OBJ:GOAL`.
    #[arg(long, value_parser = parse_confuser)]
    pub confuser: Option<Confuser>,
}

impl NoiseArgs {
    pub fn is_set(&self) -> bool {
        self.ideal
            || self.mu_match.is_some()
            || self.mu_nonmatch.is_some()
            || self.sigma.is_some()
            || self.p_bad_view.is_some()
            || self.mu_bad.is_some()
            || self.temperature.is_some()
            || self.num_views.is_some()
            || self.view_correlation.is_some()
            || self.confuser.is_some()
    }

    pub fn noise(&self) -> NoiseModel {
        let mut n = if self.ideal { NoiseModel::ideal() } else { NoiseModel::default() };
        set(&mut n.mu_match, self.mu_match);
        set(&mut n.mu_nonmatch, self.mu_nonmatch);
        set(&mut n.sigma, self.sigma);
        set(&mut n.p_bad_view, self.p_bad_view);
        set(&mut n.mu_bad, self.mu_bad);
        set(&mut n.temperature, self.temperature);
        set(&mut n.num_views, self.num_views);
        set(&mut n.view_correlation, self.view_correlation);
        set(&mut n.confuser, self.confuser.clone());
        n
    }
}

/// Episode setting overrides applied on top of a base config.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Pick-n-place budget.
    #[arg(long)]
    pub step_budget: Option<usize>,
    #[arg(long)]
    pub max_see_steps: Option<usize>,
    #[arg(long)]
    pub p_grasp_fail: Option<f64>,
    #[arg(long)]
    pub p_rotate_fail: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub omega_m: Option<f64>,
    #[arg(long)]
    pub omega_g: Option<f64>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
}

impl ConfigArgs {
    pub fn apply(&self, mut c: EpisodeConfig) -> EpisodeConfig {
        set(&mut c.step_budget, self.step_budget);
        set(&mut c.max_see_steps, self.max_see_steps);
        set(&mut c.p_grasp_fail, self.p_grasp_fail);
        set(&mut c.p_rotate_fail, self.p_rotate_fail);
        set(&mut c.lambda, self.lambda);
        set(&mut c.mu, self.mu);
        set(&mut c.thresholds.omega_m, self.omega_m);
        set(&mut c.thresholds.omega_g, self.omega_g);
        if let Some(f) = self.fusion {
            c.fusion = match f {
                FusionArg::Mean => FusionMode::Mean,
                FusionArg::LatestOnly => FusionMode::LatestOnly,
            };
        }
        c
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn parse_confuser(s: &str) -> Result<Confuser, String> {
    if s == "none" {
        return Ok(Confuser::None);
    }
    if let Some(f) = s.strip_prefix("fraction=") {
        return f.parse().map(Confuser::Fraction).map_err(|e| format!("bad fraction {f:?}: {e}"));
    }
    if let Some(pairs) = s.strip_prefix("map=") {
        let mut map = BTreeMap::new();
        for pair in pairs.split(',').filter(|p| !p.is_empty()) {
            let (i, j) = pair.split_once(':').ok_or_else(|| format!("expected OBJ:GOAL, got {pair:?}"))?;
            let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("bad index {x:?}: {e}"));
            map.insert(parse(i)?, parse(j)?);
        }
        return Ok(Confuser::Map(map));
    }
    Err(format!("unknown confuser {s:?}; use none, fraction=F or map=OBJ:GOAL,..."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confuser_forms() {
        assert_eq!(parse_confuser("none").unwrap(), Confuser::None);
        assert_eq!(parse_confuser("fraction=0.5").unwrap(), Confuser::Fraction(0.5));
        assert_eq!(parse_confuser("map=0:1,2:0").unwrap(), Confuser::Map(BTreeMap::from([(0, 1), (2, 0)])));
        assert!(parse_confuser("map=0-1").is_err());
        assert!(parse_confuser("sometimes").is_err());
    }

    #[test]
    fn overrides_leave_unset_fields_alone() {
        let c = ConfigArgs { omega_m: Some(0.3), ..ConfigArgs::default() }.apply(EpisodeConfig::default());
        assert_eq!(c.thresholds.omega_m, 0.3);
        assert_eq!(c.thresholds.omega_g, EpisodeConfig::default().thresholds.omega_g);
        assert_eq!(c.step_budget, 30);
        let n = NoiseArgs { ideal: true, p_bad_view: Some(0.2), ..NoiseArgs::default() }.noise();
        assert_eq!(n.sigma, 0.0);
        assert_eq!(n.p_bad_view, 0.2);
        assert!(!NoiseArgs::default().is_set());
    }
}

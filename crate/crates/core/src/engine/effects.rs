use serde::Serialize;

use super::simulate::{phi, simulate, PhiValue};
use super::{
    EngineError, EngineOptions, ExposureContrast, FittedModelSet, Level, RegimeTriple,
    SimulationStreams,
};
use crate::cohort::CohortDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    /// Death simulated from the fitted death models.
    CompetingRisks,
    /// Death process switched off: everyone is followed to the horizon.
    ConditionalOnSurvival,
}

impl Analysis {
    pub fn effects(self) -> &'static [Effect] {
        match self {
            Analysis::CompetingRisks => &[
                Effect::Direct,
                Effect::IndirectMediator,
                Effect::IndirectDeath,
                Effect::Total,
                Effect::DirectPlusMediator,
            ],
            Analysis::ConditionalOnSurvival => &[
                Effect::Direct,
                Effect::IndirectMediator,
                Effect::Total,
                Effect::DirectPlusMediator,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Effect {
    #[serde(rename = "DE")]
    Direct,
    #[serde(rename = "IEM")]
    IndirectMediator,
    #[serde(rename = "IED")]
    IndirectDeath,
    #[serde(rename = "TE")]
    Total,
    #[serde(rename = "DE_plus_IEM")]
    DirectPlusMediator,
}

type Levels = (Level, Level, Level);

impl Effect {
    pub fn code(self) -> &'static str {
        match self {
            Effect::Direct => "DE",
            Effect::IndirectMediator => "IEM",
            Effect::IndirectDeath => "IED",
            Effect::Total => "TE",
            Effect::DirectPlusMediator => "DE_plus_IEM",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Effect::Direct => "Direct effect",
            Effect::IndirectMediator => "Indirect effect through the mediator trajectory",
            Effect::IndirectDeath => "Indirect effect through the death process",
            Effect::Total => "Total effect",
            Effect::DirectPlusMediator => "Sum of direct effect and indirect effect through the mediator",
        }
    }

    /// Regimes `(a_Y, a_D, a_M)` whose difference defines the effect,
    /// comparison first.
    fn regimes(self) -> (Levels, Levels) {
        use Level::{Cmp as S, Ref as R};
        match self {
            Effect::Direct => ((S, R, R), (R, R, R)),
            Effect::IndirectMediator => ((S, S, S), (S, S, R)),
            Effect::IndirectDeath => ((S, S, R), (S, R, R)),
            Effect::Total => ((S, S, S), (R, R, R)),
            Effect::DirectPlusMediator => ((S, R, S), (R, R, R)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub effect: Effect,
    /// Difference in outcome rate per 100,000 person-years.
    pub hazard_diff: f64,
    /// Difference in outcome-free probability, in percentage points.
    pub surv_prob_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeValue {
    /// `a` or `a*` for the outcome, death and mediator slots, e.g. `a*,a,a`.
    pub label: String,
    pub regime: RegimeTriple,
    pub phi: PhiValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectTable {
    pub analysis: Analysis,
    pub contrast: ExposureContrast,
    pub estimates: Vec<EffectEstimate>,
    pub regimes: Vec<RegimeValue>,
}

impl EffectTable {
    pub fn get(&self, effect: Effect) -> Option<&EffectEstimate> {
        self.estimates.iter().find(|e| e.effect == effect)
    }

    /// Largest `|TE − (DE + IEM + IED)|` over both scales, relative to the
    /// largest component magnitude. `None` without a death-mediated effect.
    pub fn decomposition_error(&self) -> Option<f64> {
        let parts = [Effect::Total, Effect::Direct, Effect::IndirectMediator, Effect::IndirectDeath]
            .map(|e| self.get(e));
        let [te, de, iem, ied] = parts;
        let (te, de, iem, ied) = (te?, de?, iem?, ied?);
        let scale = |f: fn(&EffectEstimate) -> f64| {
            let residual = f(te) - f(de) - f(iem) - f(ied);
            let size = [te, de, iem, ied].iter().map(|e| f(e).abs()).fold(0.0, f64::max);
            if residual == 0.0 {
                0.0
            } else {
                residual.abs() / size
            }
        };
        Some(scale(|e| e.hazard_diff).max(scale(|e| e.surv_prob_diff)))
    }

    pub fn clamped(&self) -> usize {
        self.regimes.iter().map(|r| r.phi.clamped).sum()
    }
}

fn label(l: Levels) -> String {
    let s = |x: Level| match x {
        Level::Ref => "a",
        Level::Cmp => "a*",
    };
    format!("{},{},{}", s(l.0), s(l.1), s(l.2))
}

fn compute(
    analysis: Analysis,
    models: &FittedModelSet,
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    options: &EngineOptions,
    streams: SimulationStreams,
) -> Result<EffectTable, EngineError> {
    let death_process = analysis == Analysis::CompetingRisks;
    let mut needed: Vec<Levels> = Vec::new();
    for e in analysis.effects() {
        let (plus, minus) = e.regimes();
        for l in [plus, minus] {
            if !needed.contains(&l) {
                needed.push(l);
            }
        }
    }
    let mut regimes = Vec::with_capacity(needed.len());
    for &l in &needed {
        let regime = contrast.regime(l.0, l.1, l.2);
        let world = simulate(models, cohort, regime, options, streams, death_process)?;
        regimes.push(RegimeValue {
            label: label(l),
            regime,
            phi: phi(&world),
        });
    }
    let value = |l: Levels| &regimes[needed.iter().position(|&x| x == l).unwrap()].phi;
    let estimates = analysis
        .effects()
        .iter()
        .map(|&effect| {
            let (plus, minus) = effect.regimes();
            let (p, m) = (value(plus), value(minus));
            EffectEstimate {
                effect,
                hazard_diff: p.rate_per_100k - m.rate_per_100k,
                surv_prob_diff: (p.outcome_free - m.outcome_free) * 100.0,
            }
        })
        .collect();
    Ok(EffectTable {
        analysis,
        contrast: *contrast,
        estimates,
        regimes,
    })
}

/// DE, IEM, IED, TE and DE + IEM with death simulated as a nested mediator.
pub fn estimate_effects(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    options: &EngineOptions,
    streams: SimulationStreams,
) -> Result<EffectTable, EngineError> {
    compute(Analysis::CompetingRisks, models, cohort, contrast, options, streams)
}

/// The same contrasts with the death process bypassed, so every simulated
/// subject survives to the horizon. No death-mediated effect exists here.
pub fn conditional_on_survival_effects(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    options: &EngineOptions,
    streams: SimulationStreams,
) -> Result<EffectTable, EngineError> {
    compute(Analysis::ConditionalOnSurvival, models, cohort, contrast, options, streams)
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GuidelineTree, NodeId};

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("no predicate bound for node `{0}`")]
    UnboundPredicate(NodeId),
    #[error("invalid patient facts: {0}")]
    Invalid(String),
    #[error("unknown predicate name `{0}`")]
    UnknownPredicate(String),
    #[error("predicate binding refers to unknown node `{0}`")]
    UnknownNode(String),
    #[error("malformed predicate binding file: {0}")]
    Syntax(#[from] serde_json::Error),
}

/// Hand-annotated structured twin of a patient description. Every field is
/// required; the oracle never guesses a missing value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredPatientFacts {
    pub covid_positive: bool,
    pub needs_hospitalization_or_oxygen: bool,
    pub high_risk: bool,
    pub egfr_ml_min: f64,
    pub severe_hepatic_impairment: bool,
    pub unmanageable_paxlovid_interactions: bool,
    pub remdesivir_accessible: bool,
    pub weight_kg: f64,
    pub age_years: u32,
}

impl StructuredPatientFacts {
    pub fn validate(&self) -> Result<(), FactsError> {
        if !self.egfr_ml_min.is_finite() || self.egfr_ml_min < 0.0 {
            return Err(FactsError::Invalid(format!(
                "egfr_ml_min must be finite and >= 0, got {}",
                self.egfr_ml_min
            )));
        }
        if !self.weight_kg.is_finite() || self.weight_kg <= 0.0 {
            return Err(FactsError::Invalid(format!(
                "weight_kg must be finite and > 0, got {}",
                self.weight_kg
            )));
        }
        Ok(())
    }
}

/// Fixed vocabulary of checkpoint predicates. Each canonical node id binds
/// to exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    CovidPositive,
    NeedsHospitalizationOrOxygen,
    HighRisk,
    /// eGFR < 30 mL/min or severe hepatic impairment.
    SevereRenalOrHepaticImpairment,
    UnmanageablePaxlovidInteractions,
    /// eGFR >= 60 mL/min.
    EgfrAtLeast60,
    RemdesivirAccessible,
    /// weight >= 40 kg.
    WeightAtLeast40Kg,
    /// age >= 18 years.
    AgeAtLeast18,
}

pub const SEVERE_RENAL_EGFR: f64 = 30.0;
pub const FULL_PAXLOVID_EGFR: f64 = 60.0;
pub const FIXED_REMDESIVIR_WEIGHT_KG: f64 = 40.0;
pub const ADULT_AGE_YEARS: u32 = 18;

impl Predicate {
    pub const ALL: [Predicate; 9] = [
        Predicate::CovidPositive,
        Predicate::NeedsHospitalizationOrOxygen,
        Predicate::HighRisk,
        Predicate::SevereRenalOrHepaticImpairment,
        Predicate::UnmanageablePaxlovidInteractions,
        Predicate::EgfrAtLeast60,
        Predicate::RemdesivirAccessible,
        Predicate::WeightAtLeast40Kg,
        Predicate::AgeAtLeast18,
    ];

    pub fn holds(self, f: &StructuredPatientFacts) -> bool {
        match self {
            Predicate::CovidPositive => f.covid_positive,
            Predicate::NeedsHospitalizationOrOxygen => f.needs_hospitalization_or_oxygen,
            Predicate::HighRisk => f.high_risk,
            Predicate::SevereRenalOrHepaticImpairment => {
                f.egfr_ml_min < SEVERE_RENAL_EGFR || f.severe_hepatic_impairment
            }
            Predicate::UnmanageablePaxlovidInteractions => f.unmanageable_paxlovid_interactions,
            Predicate::EgfrAtLeast60 => f.egfr_ml_min >= FULL_PAXLOVID_EGFR,
            Predicate::RemdesivirAccessible => f.remdesivir_accessible,
            Predicate::WeightAtLeast40Kg => f.weight_kg >= FIXED_REMDESIVIR_WEIGHT_KG,
            Predicate::AgeAtLeast18 => f.age_years >= ADULT_AGE_YEARS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Predicate::CovidPositive => "covid_positive",
            Predicate::NeedsHospitalizationOrOxygen => "needs_hospitalization_or_oxygen",
            Predicate::HighRisk => "high_risk",
            Predicate::SevereRenalOrHepaticImpairment => "severe_renal_or_hepatic_impairment",
            Predicate::UnmanageablePaxlovidInteractions => "unmanageable_paxlovid_interactions",
            Predicate::EgfrAtLeast60 => "egfr_at_least_60",
            Predicate::RemdesivirAccessible => "remdesivir_accessible",
            Predicate::WeightAtLeast40Kg => "weight_at_least_40kg",
            Predicate::AgeAtLeast18 => "age_at_least_18",
        }
    }

    /// Short clinical statement of the condition, used by the simulated
    /// backend when it affirms or denies a checkpoint.
    pub fn statement(self, holds: bool) -> &'static str {
        match (self, holds) {
            (Predicate::CovidPositive, true) => "the patient has tested positive for COVID-19",
            (Predicate::CovidPositive, false) => "the patient has not tested positive for COVID-19",
            (Predicate::NeedsHospitalizationOrOxygen, true) => "the patient needs hospitalization or increased oxygen",
            (Predicate::NeedsHospitalizationOrOxygen, false) => {
                "the patient does not need hospitalization or increased oxygen"
            }
            (Predicate::HighRisk, true) => "the patient is at high risk for severe COVID-19",
            (Predicate::HighRisk, false) => "the patient is not at high risk for severe COVID-19",
            (Predicate::SevereRenalOrHepaticImpairment, true) => "the patient has severe renal or hepatic impairment",
            (Predicate::SevereRenalOrHepaticImpairment, false) => {
                "the patient has neither severe renal nor severe hepatic impairment"
            }
            (Predicate::UnmanageablePaxlovidInteractions, true) => {
                "the patient takes Paxlovid-interacting medications that cannot be adjusted"
            }
            (Predicate::UnmanageablePaxlovidInteractions, false) => {
                "the patient has no unmanageable Paxlovid drug interactions"
            }
            (Predicate::EgfrAtLeast60, true) => "the patient's eGFR is at least 60 mL/min",
            (Predicate::EgfrAtLeast60, false) => "the patient's eGFR is below 60 mL/min",
            (Predicate::RemdesivirAccessible, true) => "the patient can access remdesivir",
            (Predicate::RemdesivirAccessible, false) => "the patient cannot access remdesivir",
            (Predicate::WeightAtLeast40Kg, true) => "the patient weighs at least 40 kg",
            (Predicate::WeightAtLeast40Kg, false) => "the patient weighs less than 40 kg",
            (Predicate::AgeAtLeast18, true) => "the patient is at least 18 years old",
            (Predicate::AgeAtLeast18, false) => "the patient is younger than 18",
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predicate {
    type Err = FactsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| FactsError::UnknownPredicate(s.to_string()))
    }
}

/// Static map from node id to predicate, loaded from the binding file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredicateBindings(BTreeMap<NodeId, Predicate>);

impl PredicateBindings {
    pub fn parse(content: &str) -> Result<Self, FactsError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(content)?;
        raw.into_iter()
            .map(|(id, name)| Ok((NodeId::new(id), name.parse()?)))
            .collect::<Result<_, FactsError>>()
            .map(Self)
    }

    /// Checks that every binding names an existing decision node.
    pub fn check_against(&self, tree: &GuidelineTree) -> Result<(), FactsError> {
        match self.0.keys().find(|id| tree.node(id.as_str()).is_none()) {
            Some(id) => Err(FactsError::UnknownNode(id.to_string())),
            None => Ok(()),
        }
    }

    pub fn get(&self, id: &str) -> Option<Predicate> {
        self.0.get(id).copied()
    }

    pub fn insert(&mut self, id: NodeId, predicate: Predicate) {
        self.0.insert(id, predicate);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

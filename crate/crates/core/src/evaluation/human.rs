use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotationRecord, SeverityCategory};

#[derive(Debug, Error, PartialEq)]
pub enum HumanEvalError {
    #[error("no annotation records in group")]
    Empty,
}

/// Rounds half away from zero at `decimals` places, absorbing binary
/// representation error (so 1.855 rounds to 1.86).
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    let scaled = value.abs() * factor;
    let rounded = (scaled + 0.5 + 1e-9).floor();
    value.signum() * rounded / factor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub category: SeverityCategory,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub categories: Vec<CategoryMean>,
    /// Mean of the category means, at full precision.
    pub overall: f64,
}

impl HumanEvalSummary {
    pub fn from_means(means: &[(SeverityCategory, f64)]) -> Result<Self, HumanEvalError> {
        if means.is_empty() {
            return Err(HumanEvalError::Empty);
        }
        let categories: Vec<CategoryMean> = means
            .iter()
            .map(|&(category, mean)| CategoryMean {
                category,
                mean,
                count: 0,
            })
            .collect();
        let overall = categories.iter().map(|c| c.mean).sum::<f64>() / categories.len() as f64;
        Ok(Self { categories, overall })
    }

    pub fn display_overall(&self) -> String {
        format!("{:.2}", round_half_up(self.overall, 2))
    }

    pub fn display_mean(&self, category: SeverityCategory) -> Option<String> {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .map(|c| format!("{:.2}", round_half_up(c.mean, 2)))
    }
}

/// Per-category mean rating and the mean of those means, for one group of
/// responses (typically one model and method).
pub fn aggregate_human_eval(records: &[AnnotationRecord]) -> Result<HumanEvalSummary, HumanEvalError> {
    let mut categories = Vec::new();
    for category in SeverityCategory::ALL {
        let ratings: Vec<f64> = records
            .iter()
            .filter(|r| r.category == category)
            .map(|r| r.rating as f64)
            .collect();
        if ratings.is_empty() {
            continue;
        }
        categories.push(CategoryMean {
            category,
            mean: ratings.iter().sum::<f64>() / ratings.len() as f64,
            count: ratings.len(),
        });
    }
    if categories.is_empty() {
        return Err(HumanEvalError::Empty);
    }
    let overall = categories.iter().map(|c| c.mean).sum::<f64>() / categories.len() as f64;
    Ok(HumanEvalSummary { categories, overall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SeverityCategory::*;

    fn rec(category: SeverityCategory, rating: u8) -> AnnotationRecord {
        AnnotationRecord {
            response_id: "r".into(),
            rater_id: "a".into(),
            category,
            rating,
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(1.855, 2), 1.86);
        assert_eq!(round_half_up(1.8549, 2), 1.85);
        assert_eq!(round_half_up(2.0, 2), 2.0);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(format!("{:.2}", round_half_up(12.0 / 7.0, 2)), "1.71");
    }

    #[test]
    fn table_row_overall() {
        let s = HumanEvalSummary::from_means(&[
            (IncorrectMedicalContent, 1.71),
            (OmissionOfContent, 2.00),
            (HarmfulContent, 1.86),
        ])
        .unwrap();
        assert!((s.overall - 1.856_666_666).abs() < 1e-6);
        assert_eq!(s.display_overall(), "1.86");
    }

    #[test]
    fn from_ratings() {
        // sums 12, 14 and 13 over seven responses each
        let mut records = Vec::new();
        for (cat, ratings) in [
            (IncorrectMedicalContent, [2, 2, 2, 2, 2, 1, 1]),
            (OmissionOfContent, [2; 7]),
            (HarmfulContent, [2, 2, 2, 2, 2, 2, 1]),
        ] {
            records.extend(ratings.iter().map(|r| rec(cat, *r)));
        }
        let s = aggregate_human_eval(&records).unwrap();
        let shown: Vec<_> = SeverityCategory::ALL
            .iter()
            .map(|c| s.display_mean(*c).unwrap())
            .collect();
        assert_eq!(shown, ["1.71", "2.00", "1.86"]);
        assert_eq!(s.display_overall(), "1.86");
    }

    #[test]
    fn perfect_and_single() {
        let records: Vec<_> = SeverityCategory::ALL.iter().map(|c| rec(*c, 2)).collect();
        let s = aggregate_human_eval(&records).unwrap();
        assert!(s.categories.iter().all(|c| c.mean == 2.0));
        assert_eq!(s.display_overall(), "2.00");
        let s = aggregate_human_eval(&[rec(HarmfulContent, 0)]).unwrap();
        assert_eq!(s.display_mean(HarmfulContent).unwrap(), "0.00");
        assert_eq!(aggregate_human_eval(&[]), Err(HumanEvalError::Empty));
    }

    proptest! {
        #[test]
        fn overall_within_category_range(ratings in prop::collection::vec((0usize..3, 0u8..3), 1..50)) {
            let records: Vec<_> = ratings.iter().map(|(c, r)| rec(SeverityCategory::ALL[*c], *r)).collect();
            let s = aggregate_human_eval(&records).unwrap();
            let lo = s.categories.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
            let hi = s.categories.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.overall >= lo - 1e-12 && s.overall <= hi + 1e-12);
        }
    }
}

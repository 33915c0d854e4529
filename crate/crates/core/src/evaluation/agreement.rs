use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of rating levels: 0 (greatest severity) to 2 (no issue).
pub const RATING_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeverityCategory {
    IncorrectMedicalContent,
    OmissionOfContent,
    HarmfulContent,
}

impl SeverityCategory {
    pub const ALL: [SeverityCategory; 3] = [
        SeverityCategory::IncorrectMedicalContent,
        SeverityCategory::OmissionOfContent,
        SeverityCategory::HarmfulContent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityCategory::IncorrectMedicalContent => "INCORRECT_MEDICAL_CONTENT",
            SeverityCategory::OmissionOfContent => "OMISSION_OF_CONTENT",
            SeverityCategory::HarmfulContent => "HARMFUL_CONTENT",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SeverityCategory::IncorrectMedicalContent => "Incorrect medical content",
            SeverityCategory::OmissionOfContent => "Omission of content",
            SeverityCategory::HarmfulContent => "Harmful content",
        }
    }
}

impl fmt::Display for SeverityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeverityCategory {
    type Err = AgreementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        SeverityCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| AgreementError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub response_id: String,
    pub rater_id: String,
    pub category: SeverityCategory,
    pub rating: u8,
}

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("rating vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no rated items")]
    Empty,
    #[error("at least two categories are required")]
    TooFewCategories,
    #[error("rating {rating} is outside 0..{levels}")]
    RatingOutOfRange { rating: usize, levels: usize },
    #[error("chance agreement is 1; AC1 is undefined")]
    Degenerate,
    #[error("score {0} is outside [-1, 1]")]
    ScoreOutOfRange(f64),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("expected exactly two raters, found {0}")]
    RaterCount(usize),
    #[error("annotation file line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("response `{response}` in {category} is not rated by both raters")]
    Unpaired {
        response: String,
        category: SeverityCategory,
    },
    #[error("rater `{rater}` rated `{response}` in {category} twice")]
    DuplicateRating {
        rater: String,
        response: String,
        category: SeverityCategory,
    },
}

/// Two-rater Gwet's AC1 over `categories` nominal levels (ratings are
/// indices `0..categories`).
///
/// `Pa` is the observed agreement rate and
/// `Pe = 1/(Q-1) * sum_q pi_q (1 - pi_q)` where `pi_q` averages the two
/// raters' proportions for level `q`.
pub fn gwet_ac1(a: &[u8], b: &[u8], categories: usize) -> Result<f64, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    if categories < 2 {
        return Err(AgreementError::TooFewCategories);
    }
    let mut counts = vec![0usize; categories];
    for &r in a.iter().chain(b) {
        let r = r as usize;
        if r >= categories {
            return Err(AgreementError::RatingOutOfRange {
                rating: r,
                levels: categories,
            });
        }
        counts[r] += 1;
    }
    let n = a.len() as f64;
    let pa = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pe = counts
        .iter()
        .map(|&c| {
            let pi = c as f64 / (2.0 * n);
            pi * (1.0 - pi)
        })
        .sum::<f64>()
        / (categories - 1) as f64;
    if (1.0 - pe).abs() < f64::EPSILON {
        return Err(AgreementError::Degenerate);
    }
    Ok((pa - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandisKochBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl LandisKochBand {
    pub fn label(self) -> &'static str {
        match self {
            LandisKochBand::Poor => "Poor",
            LandisKochBand::Slight => "Slight",
            LandisKochBand::Fair => "Fair",
            LandisKochBand::Moderate => "Moderate",
            LandisKochBand::Substantial => "Substantial",
            LandisKochBand::AlmostPerfect => "Almost Perfect",
        }
    }
}

impl fmt::Display for LandisKochBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Landis-Koch band; each band includes its upper bound.
pub fn interpret_landis_koch(score: f64) -> Result<LandisKochBand, AgreementError> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(AgreementError::ScoreOutOfRange(score));
    }
    Ok(match score {
        s if s < 0.0 => LandisKochBand::Poor,
        s if s <= 0.20 => LandisKochBand::Slight,
        s if s <= 0.40 => LandisKochBand::Fair,
        s if s <= 0.60 => LandisKochBand::Moderate,
        s if s <= 0.80 => LandisKochBand::Substantial,
        _ => LandisKochBand::AlmostPerfect,
    })
}

/// Parses `response_id,rater_id,category,rating` rows (header required).
pub fn parse_annotations(content: &str) -> Result<Vec<AnnotationRecord>, AgreementError> {
    #[derive(Deserialize)]
    struct Row {
        response_id: String,
        rater_id: String,
        category: String,
        rating: i64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| AgreementError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let rating = u8::try_from(row.rating)
            .ok()
            .filter(|r| (*r as usize) < RATING_LEVELS)
            .ok_or(AgreementError::RatingOutOfRange {
                rating: row.rating.max(0) as usize,
                levels: RATING_LEVELS,
            })?;
        out.push(AnnotationRecord {
            response_id: row.response_id,
            rater_id: row.rater_id,
            category: row.category.parse()?,
            rating,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAgreement {
    pub category: SeverityCategory,
    pub ac1: f64,
    pub band: LandisKochBand,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub raters: [String; 2],
    pub items: usize,
    pub categories: Vec<CategoryAgreement>,
}

impl AgreementReport {
    /// Pairs the two raters' ratings by response id within each category
    /// present in the records.
    pub fn from_records(records: &[AnnotationRecord]) -> Result<Self, AgreementError> {
        let raters: BTreeSet<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
        if raters.len() != 2 {
            return Err(AgreementError::RaterCount(raters.len()));
        }
        let raters: Vec<&str> = raters.into_iter().collect();
        let mut table: BTreeMap<SeverityCategory, BTreeMap<&str, [Option<u8>; 2]>> = BTreeMap::new();
        for r in records {
            let slot = usize::from(r.rater_id != raters[0]);
            let cell = &mut table.entry(r.category).or_default().entry(&r.response_id).or_default()[slot];
            if cell.is_some() {
                return Err(AgreementError::DuplicateRating {
                    rater: r.rater_id.clone(),
                    response: r.response_id.clone(),
                    category: r.category,
                });
            }
            *cell = Some(r.rating);
        }
        let mut categories = Vec::new();
        let mut responses = BTreeSet::new();
        for (category, items) in table {
            let mut a = Vec::with_capacity(items.len());
            let mut b = Vec::with_capacity(items.len());
            for (response, pair) in items {
                match pair {
                    [Some(x), Some(y)] => {
                        a.push(x);
                        b.push(y);
                        responses.insert(response);
                    }
                    _ => {
                        return Err(AgreementError::Unpaired {
                            response: response.to_string(),
                            category,
                        })
                    }
                }
            }
            let ac1 = gwet_ac1(&a, &b, RATING_LEVELS)?;
            categories.push(CategoryAgreement {
                category,
                ac1,
                band: interpret_landis_koch(ac1)?,
                items: a.len(),
            });
        }
        Ok(Self {
            raters: [raters[0].to_string(), raters[1].to_string()],
            items: responses.len(),
            categories,
        })
    }
}

//! Cross-language ranking of the most predictive features.

use std::collections::BTreeMap;

use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::linear::LinearModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature {
    pub feature: String,
    /// Number of languages with this feature in their top-k.
    pub score: usize,
    /// Mean absolute weight over those languages.
    pub mean_abs_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureReport {
    pub female: Vec<RankedFeature>,
    pub male: Vec<RankedFeature>,
}

impl FeatureReport {
    /// Aligned text table with the first `rows` entries of each side.
    pub fn to_text(&self, rows: usize) -> String {
        let mut s = format!("{:>4}  {:<40} {:<40}\n", "rank", "F", "M");
        for r in 0..rows.min(self.female.len().max(self.male.len())) {
            let cell = |v: &[RankedFeature]| {
                v.get(r)
                    .map(|f| format!("{} ({})", f.feature, f.score))
                    .unwrap_or_default()
            };
            s.push_str(&format!("{:>4}  {:<40} {:<40}\n", r + 1, cell(&self.female), cell(&self.male)));
        }
        s
    }
}

fn rank(lists: Vec<Vec<(String, f64)>>) -> Vec<RankedFeature> {
    let mut acc: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for list in lists {
        for (f, w) in list {
            let e = acc.entry(f).or_default();
            e.0 += 1;
            e.1 += w.abs();
        }
    }
    let mut out: Vec<RankedFeature> = acc
        .into_iter()
        .map(|(feature, (score, sum))| RankedFeature {
            feature,
            score,
            mean_abs_weight: sum / score as f64,
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(b.mean_abs_weight.total_cmp(&a.mean_abs_weight))
            .then_with(|| a.feature.cmp(&b.feature))
    });
    out
}

/// Ranks features by how many languages have them among their top-`k` per
/// gender, ties broken by mean absolute weight.
pub fn top_feature_report(models: &[(Language, &LinearModel)], k: usize) -> Result<FeatureReport> {
    let (_, first) = models.first().ok_or_else(|| Error::validation("no models to report on"))?;
    if k < 1 {
        return Err(Error::validation("k must be at least 1"));
    }
    for (lang, m) in models {
        if m.featurizer.spec != first.featurizer.spec {
            return Err(Error::validation(format!(
                "model for {lang} uses a different feature spec"
            )));
        }
    }
    let (female, male): (Vec<_>, Vec<_>) = models.iter().map(|(_, m)| m.top_features(k)).unzip();
    Ok(FeatureReport {
        female: rank(female),
        male: rank(male),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSpec, Featurizer, Vocabulary};
    use crate::linear::TrainerConfig;

    fn model(weights: &[(&str, f64)]) -> LinearModel {
        let vocab = Vocabulary::from_feature_names(weights.iter().map(|(n, _)| n.to_string()).collect());
        LinearModel {
            weights: weights.iter().map(|w| w.1).collect(),
            bias: 0.0,
            featurizer: Featurizer::from_parts(FeatureSpec::abstract_all(), None, vocab),
            trainer: TrainerConfig::default(),
        }
    }

    #[test]
    fn single_language_matches_top_k() {
        let m = model(&[("a", 3.0), ("b", 1.0), ("c", -2.0), ("d", -0.5)]);
        let r = top_feature_report(&[(Language::new("xx"), &m)], 2).unwrap();
        let names = |v: &[RankedFeature]| v.iter().map(|f| f.feature.clone()).collect::<Vec<_>>();
        assert_eq!(names(&r.female), ["a", "b"]);
        assert_eq!(names(&r.male), ["c", "d"]);
    }

    #[test]
    fn more_languages_outrank_fewer() {
        // "common" is top-1 in all five; "big" has the largest weight but in one language
        let mut models = Vec::new();
        for i in 0..5 {
            let big = if i == 0 { 10.0 } else { -1.0 };
            models.push(model(&[("common", 1.0 + i as f64 * 0.1), ("big", big), ("z", -3.0)]));
        }
        let refs: Vec<(Language, &LinearModel)> =
            models.iter().enumerate().map(|(i, m)| (Language::new(format!("l{i}")), m)).collect();
        let r = top_feature_report(&refs, 1).unwrap();
        assert_eq!(r.female[0].feature, "common");
        assert_eq!(r.female[0].score, 4);
        assert_eq!(r.female[1].feature, "big");
        assert_eq!(r.female[1].score, 1);
        assert_eq!(r.male[0].score, 5);
    }

    #[test]
    fn mismatched_specs_rejected() {
        let a = model(&[("a", 1.0)]);
        let mut b = model(&[("a", 1.0)]);
        b.featurizer.spec = FeatureSpec::lexical();
        let r = top_feature_report(&[(Language::new("x"), &a), (Language::new("y"), &b)], 1);
        assert!(r.is_err());
    }
}

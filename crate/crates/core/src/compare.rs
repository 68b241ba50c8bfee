//! Distribution construction and comparison scores: total variation distance,
//! Wasserstein-1 distance between empirical samples, Pearson correlation,
//! knowledge-statement semantic similarity, and across-domain profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{
    BundleRecord, BundleStore, DimensionStatus, EmotionAnnotation, FeedbackTag, IdentityRecord,
    IntentTagSet, KnowledgeStatements, FEEDBACK_TAGS, IDENTITY_CATEGORIES, INTENT_TAGS,
};
use crate::corpus::{Provenance, DOMAINS};
use crate::gateway::EMOTION_LABELS;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("empty-distribution")]
    EmptyDistribution,
    #[error("incompatible-distributions")]
    IncompatibleDistributions,
    #[error("undefined-correlation")]
    UndefinedCorrelation,
    #[error("no-statements")]
    NoStatements,
}

/// Normalized frequency vector over a fixed, ordered category set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    pub dimension: String,
    pub categories: Vec<String>,
    pub probs: Vec<f64>,
    /// Number of underlying counting units.
    pub support_count: usize,
}

impl CategoricalDistribution {
    /// Normalizes raw counts aligned to `categories`.
    pub fn from_counts(
        dimension: &str,
        categories: &[String],
        counts: &[usize],
    ) -> Result<Self, CompareError> {
        assert_eq!(categories.len(), counts.len());
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(CompareError::EmptyDistribution);
        }
        Ok(CategoricalDistribution {
            dimension: dimension.to_string(),
            categories: categories.to_vec(),
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            support_count: total,
        })
    }
}

/// Multiset of integer observations (turn counts, word counts, error counts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSamples {
    pub dimension: String,
    pub values: Vec<u64>,
}

/// ½ Σ |p_i − q_i|. Tables report this ×100.
pub fn tvd(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64, CompareError> {
    if p.dimension != q.dimension || p.categories != q.categories {
        return Err(CompareError::IncompatibleDistributions);
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Wasserstein-1 distance between two one-dimensional empirical distributions,
/// computed as the area between their empirical CDFs. Exact for unequal sizes.
pub fn wasserstein1(a: &[u64], b: &[u64]) -> Result<f64, CompareError> {
    if a.is_empty() || b.is_empty() {
        return Err(CompareError::EmptyDistribution);
    }
    let mut xs: Vec<u64> = a.iter().chain(b.iter()).copied().collect();
    xs.sort_unstable();
    xs.dedup();
    let mut sa: Vec<u64> = a.to_vec();
    let mut sb: Vec<u64> = b.to_vec();
    sa.sort_unstable();
    sb.sort_unstable();
    let na = sa.len() as f64;
    let nb = sb.len() as f64;
    let cdf = |sorted: &[u64], x: u64, n: f64| -> f64 {
        sorted.partition_point(|&v| v <= x) as f64 / n
    };
    let mut total = 0.0;
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let diff = (cdf(&sa, x0, na) - cdf(&sb, x0, nb)).abs();
        total += diff * (x1 - x0) as f64;
    }
    Ok(total)
}

/// Sample Pearson correlation coefficient. Tables report this ×100.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CompareError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CompareError::UndefinedCorrelation);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CompareError::UndefinedCorrelation);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Aggregation of statement similarity across two embedded statement sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnowledgeAggregation {
    /// ½[mean over A of max cosine to B + mean over B of max cosine to A].
    SymmetricMeanOfMax,
    /// Cosine between the two normalized centroid vectors.
    CentroidCosine,
}

/// Semantic similarity between two sets of unit-norm statement embeddings.
pub fn knowledge_similarity(
    real: &[Vec<f64>],
    sim: &[Vec<f64>],
    mode: KnowledgeAggregation,
) -> Result<f64, CompareError> {
    if real.is_empty() || sim.is_empty() {
        return Err(CompareError::NoStatements);
    }
    match mode {
        KnowledgeAggregation::SymmetricMeanOfMax => {
            let mean_of_max = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
                from.iter()
                    .map(|v| {
                        to.iter()
                            .map(|w| cosine(v, w))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum::<f64>()
                    / from.len() as f64
            };
            Ok(0.5 * (mean_of_max(real, sim) + mean_of_max(sim, real)))
        }
        KnowledgeAggregation::CentroidCosine => {
            let centroid = |vs: &[Vec<f64>]| -> Vec<f64> {
                let dim = vs[0].len();
                let mut c = vec![0.0; dim];
                for v in vs {
                    for (i, x) in v.iter().enumerate() {
                        c[i] += x;
                    }
                }
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in &mut c {
                        *x /= norm;
                    }
                }
                c
            };
            Ok(cosine(&centroid(real), &centroid(sim)))
        }
    }
}

/// Per-domain values for one category (or scalar stat), aligned to the
/// domain registry order. `None` marks domains with no data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainProfile {
    pub dimension: String,
    pub category: String,
    pub values: Vec<Option<f64>>,
}

/// Per-category Pearson r between real and simulated domain profiles, plus
/// the mean of the defined per-category values. Missing domains are dropped
/// pairwise before correlating.
pub fn across_domain_score(
    real_profiles: &[DomainProfile],
    sim_profiles: &[DomainProfile],
) -> (Vec<(String, Option<f64>)>, Option<f64>) {
    let mut per_category = Vec::new();
    for rp in real_profiles {
        let Some(sp) = sim_profiles
            .iter()
            .find(|p| p.category == rp.category && p.dimension == rp.dimension)
        else {
            per_category.push((rp.category.clone(), None));
            continue;
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (a, b) in rp.values.iter().zip(&sp.values) {
            if let (Some(a), Some(b)) = (a, b) {
                xs.push(*a);
                ys.push(*b);
            }
        }
        per_category.push((rp.category.clone(), pearson(&xs, &ys).ok()));
    }
    let defined: Vec<f64> = per_category.iter().filter_map(|(_, r)| *r).collect();
    let avg = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    (per_category, avg)
}

// ---------------------------------------------------------------------------
// Bundle aggregation
// ---------------------------------------------------------------------------

/// Fixed category order for a categorical dimension. Intent can exclude
/// system_management (the taxonomy's non-instrumental category) via the flag.
pub fn dimension_categories(dimension: &str, include_system_management: bool) -> Vec<String> {
    match dimension {
        "intent" => INTENT_TAGS
            .iter()
            .filter(|t| include_system_management || **t != "system_management")
            .map(|t| t.to_string())
            .collect(),
        "feedback" => FEEDBACK_TAGS.iter().map(|t| t.to_string()).collect(),
        "emotion" => EMOTION_LABELS.iter().map(|t| t.to_string()).collect(),
        "identity" => IDENTITY_CATEGORIES.iter().map(|(k, _)| k.to_string()).collect(),
        other => panic!("not a categorical dimension: {other}"),
    }
}

fn ok_records<'a>(
    store: &'a BundleStore,
    dimension: &str,
    provenance: &Provenance,
    domain: Option<&str>,
) -> Vec<&'a BundleRecord> {
    store
        .records()
        .filter(|r| {
            r.dimension == dimension
                && r.status == DimensionStatus::Ok
                && r.provenance == *provenance
                && domain.is_none_or(|d| r.domain == d)
        })
        .collect()
}

/// Adds one record's counting units into `counts` (category -> count).
/// Counting units: intent/feedback per (turn, tag); emotion per sentence
/// final label; identity per (dialogue, category) with non-empty quotes.
fn accumulate_counts(counts: &mut BTreeMap<String, usize>, record: &BundleRecord) {
    match record.dimension.as_str() {
        "intent" => {
            if let Ok(sets) = serde_json::from_value::<Vec<IntentTagSet>>(record.payload.clone()) {
                for set in sets {
                    for tag in set.tags {
                        *counts.entry(tag).or_default() += 1;
                    }
                }
            }
        }
        "feedback" => {
            if let Ok(sets) = serde_json::from_value::<Vec<FeedbackTag>>(record.payload.clone()) {
                for set in sets {
                    for tag in set.tags {
                        *counts.entry(tag).or_default() += 1;
                    }
                }
            }
        }
        "emotion" => {
            if let Ok(ann) = serde_json::from_value::<EmotionAnnotation>(record.payload.clone()) {
                for s in ann.sentences {
                    *counts.entry(s.final_label).or_default() += 1;
                }
            }
        }
        "identity" => {
            if let Ok(rec) = serde_json::from_value::<IdentityRecord>(record.payload.clone()) {
                for (category, quotes) in rec.categories {
                    if !quotes.is_empty() {
                        *counts.entry(category).or_default() += 1;
                    }
                }
            }
        }
        _ => {}
    }
}

/// Builds the categorical distribution for one (provenance, optional domain)
/// slice of the bundle store.
pub fn build_categorical(
    store: &BundleStore,
    dimension: &str,
    provenance: &Provenance,
    domain: Option<&str>,
    categories: &[String],
) -> Result<CategoricalDistribution, CompareError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in ok_records(store, dimension, provenance, domain) {
        accumulate_counts(&mut counts, record);
    }
    let aligned: Vec<usize> = categories
        .iter()
        .map(|c| counts.get(c).copied().unwrap_or(0))
        .collect();
    CategoricalDistribution::from_counts(dimension, categories, &aligned)
}

/// Per-dialogue integer observations for the scalar stats: `turns` (user
/// turns per conversation), `words` (user words per conversation), `errors`
/// (grammar matches per conversation).
pub fn empirical_samples(
    store: &BundleStore,
    stat: &str,
    provenance: &Provenance,
    domain: Option<&str>,
) -> Result<EmpiricalSamples, CompareError> {
    let (dimension, extract): (&str, fn(&serde_json::Value) -> Option<u64>) = match stat {
        "turns" => ("length", |p| p.get("user_turns").and_then(|v| v.as_u64())),
        "words" => ("length", |p| {
            p.get("words_per_user_turn")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|x| x.as_u64()).sum())
        }),
        "errors" => ("error", |p| p.get("error_count").and_then(|v| v.as_u64())),
        _ => return Err(CompareError::EmptyDistribution),
    };
    let values: Vec<u64> = ok_records(store, dimension, provenance, domain)
        .iter()
        .filter_map(|r| extract(&r.payload))
        .collect();
    if values.is_empty() {
        return Err(CompareError::EmptyDistribution);
    }
    Ok(EmpiricalSamples { dimension: stat.to_string(), values })
}

/// Per-domain profile for one category of a categorical dimension, or one of
/// the scalar stats (per-domain mean of per-dialogue values). Values align to
/// the domain registry order; domains without data are `None`.
pub fn domain_profile(
    store: &BundleStore,
    dimension: &str,
    category: &str,
    provenance: &Provenance,
    categories: &[String],
) -> DomainProfile {
    let mut values = Vec::with_capacity(DOMAINS.len());
    for (domain, _) in DOMAINS {
        let value = match dimension {
            "turns" | "words" | "errors" => {
                empirical_samples(store, dimension, provenance, Some(domain))
                    .ok()
                    .map(|s| s.values.iter().sum::<u64>() as f64 / s.values.len() as f64)
            }
            _ => build_categorical(store, dimension, provenance, Some(domain), categories)
                .ok()
                .and_then(|d| {
                    d.categories
                        .iter()
                        .position(|c| c == category)
                        .map(|i| d.probs[i])
                }),
        };
        values.push(value);
    }
    DomainProfile {
        dimension: dimension.to_string(),
        category: category.to_string(),
        values,
    }
}

/// Pools knowledge statements per domain for one provenance. `kind` selects
/// "knows", "gaps", or both pooled (None).
pub fn knowledge_by_domain(
    store: &BundleStore,
    provenance: &Provenance,
    kind: Option<&str>,
) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for record in ok_records(store, "knowledge", provenance, None) {
        if let Ok(stmts) = serde_json::from_value::<KnowledgeStatements>(record.payload.clone()) {
            let entry = out.entry(record.domain.clone()).or_default();
            if kind.is_none() || kind == Some("knows") {
                entry.extend(stmts.knows);
            }
            if kind.is_none() || kind == Some("gaps") {
                entry.extend(stmts.gaps);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(probs: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution {
            dimension: "d".into(),
            categories: (0..probs.len()).map(|i| format!("c{i}")).collect(),
            probs: probs.to_vec(),
            support_count: 1,
        }
    }

    #[test]
    fn tvd_examples() {
        let p = dist(&[0.5, 0.5]);
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tvd(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tvd_incompatible() {
        let mut q = dist(&[1.0, 0.0]);
        q.categories[0] = "other".into();
        assert_eq!(
            tvd(&dist(&[1.0, 0.0]), &q),
            Err(CompareError::IncompatibleDistributions)
        );
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0, 0], &[1, 1]).unwrap(), 1.0);
        assert!((wasserstein1(&[1, 2, 3], &[2, 3, 4]).unwrap() - 1.0).abs() < 1e-12);
        assert!((wasserstein1(&[7, 7], &[5, 9]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_unequal_sizes() {
        // {0} vs {0,1}: CDF differs by 0.5 over [0,1) -> 0.5
        assert!((wasserstein1(&[0], &[0, 1]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(wasserstein1(&[], &[1]), Err(CompareError::EmptyDistribution));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.981_980_506_061_965_8).abs() < 1e-9, "got {r}");
        assert_eq!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(CompareError::UndefinedCorrelation)
        );
    }

    #[test]
    fn knowledge_similarity_identity_and_orthogonal() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let same = knowledge_similarity(
            &[e1.clone()],
            &[e1.clone()],
            KnowledgeAggregation::SymmetricMeanOfMax,
        )
        .unwrap();
        assert!((same - 1.0).abs() < 1e-6);
        let ortho = knowledge_similarity(
            &[e1.clone()],
            &[e2.clone()],
            KnowledgeAggregation::SymmetricMeanOfMax,
        )
        .unwrap();
        assert!(ortho.abs() < 1e-12);
        assert_eq!(
            knowledge_similarity(&[], &[e1], KnowledgeAggregation::SymmetricMeanOfMax),
            Err(CompareError::NoStatements)
        );
    }

    #[test]
    fn knowledge_similarity_mixed_hand_eval() {
        // real = {x}, sim = {x, y} with x ⟂ y.
        // forward: max cos(x, {x,y}) = 1. backward: mean(1, 0) = 0.5. overall 0.75.
        let x = vec![1.0, 0.0];
        let y = vec![0.0, 1.0];
        let v = knowledge_similarity(
            &[x.clone()],
            &[x, y],
            KnowledgeAggregation::SymmetricMeanOfMax,
        )
        .unwrap();
        assert!((v - 0.75).abs() < 1e-12);
    }

    #[test]
    fn knowledge_similarity_symmetric() {
        let a = vec![vec![0.6, 0.8], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.0]];
        let ab = knowledge_similarity(&a, &b, KnowledgeAggregation::SymmetricMeanOfMax).unwrap();
        let ba = knowledge_similarity(&b, &a, KnowledgeAggregation::SymmetricMeanOfMax).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn across_domain_fixture() {
        // Hand-computed per-category r values 0.982.., 1.0, -1.0 -> mean ≈ 0.327.
        let mk = |cat: &str, vals: &[f64]| DomainProfile {
            dimension: "intent".into(),
            category: cat.into(),
            values: vals.iter().map(|v| Some(*v)).collect(),
        };
        let real = vec![
            mk("a", &[1.0, 2.0, 3.0]),
            mk("b", &[1.0, 2.0, 3.0]),
            mk("c", &[1.0, 2.0, 3.0]),
        ];
        let sim = vec![
            mk("a", &[1.0, 2.0, 4.0]),
            mk("b", &[2.0, 4.0, 6.0]),
            mk("c", &[3.0, 2.0, 1.0]),
        ];
        let (per_cat, avg) = across_domain_score(&real, &sim);
        assert_eq!(per_cat.len(), 3);
        let expected = (0.981_980_506_061_965_8 + 1.0 - 1.0) / 3.0;
        assert!((avg.unwrap() - expected).abs() < 1e-9);
        assert!((avg.unwrap() - 0.327).abs() < 0.001);
    }

    #[test]
    fn across_domain_missing_cells_dropped_pairwise() {
        let real = vec![DomainProfile {
            dimension: "emotion".into(),
            category: "joy".into(),
            values: vec![Some(1.0), None, Some(3.0), Some(2.0)],
        }];
        let sim = vec![DomainProfile {
            dimension: "emotion".into(),
            category: "joy".into(),
            values: vec![Some(2.0), Some(9.0), Some(6.0), Some(4.0)],
        }];
        let (per_cat, avg) = across_domain_score(&real, &sim);
        assert!((per_cat[0].1.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(avg, per_cat[0].1);
    }

    #[test]
    fn from_counts_counting_rule() {
        let cats: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let d = CategoricalDistribution::from_counts("intent", &cats, &[2, 1, 0]).unwrap();
        assert_eq!(d.probs, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(d.support_count, 3);
        assert!(matches!(
            CategoricalDistribution::from_counts("intent", &cats, &[0, 0, 0]),
            Err(CompareError::EmptyDistribution)
        ));
    }

    fn record(
        id: &str,
        domain: &str,
        dimension: &str,
        payload: serde_json::Value,
    ) -> BundleRecord {
        BundleRecord {
            dialogue_id: id.into(),
            domain: domain.into(),
            provenance: Provenance::Real,
            dimension: dimension.into(),
            status: DimensionStatus::Ok,
            payload,
            warnings: vec![],
        }
    }

    #[test]
    fn build_categorical_intent_counting_rule() {
        // turns tagged {a} and {a,b} over (a,b,c) -> (2/3, 1/3, 0)
        let mut store = BundleStore::new();
        store.upsert(record(
            "d1",
            "finance",
            "intent",
            serde_json::json!([
                {"turn_index": 1, "tags": ["info_retrieval"]},
                {"turn_index": 2, "tags": ["info_retrieval", "info_discovery"]},
                {"turn_index": 3, "tags": []},
            ]),
        ));
        let cats: Vec<String> = ["info_retrieval", "info_discovery", "info_analysis"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let d = build_categorical(&store, "intent", &Provenance::Real, None, &cats).unwrap();
        assert_eq!(d.probs, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn build_categorical_emotion_and_identity() {
        let mut store = BundleStore::new();
        store.upsert(record(
            "d1",
            "finance",
            "emotion",
            serde_json::json!({"sentences": [
                {"turn_index":1,"sentence_index":1,"label":"joy","raw_confidence":0.9,"final_label":"joy"},
                {"turn_index":1,"sentence_index":2,"label":"joy","raw_confidence":0.8,"final_label":"joy"},
                {"turn_index":2,"sentence_index":1,"label":"anger","raw_confidence":0.5,"final_label":"neutral"},
            ]}),
        ));
        let cats = dimension_categories("emotion", true);
        let d = build_categorical(&store, "emotion", &Provenance::Real, None, &cats).unwrap();
        let joy = cats.iter().position(|c| c == "joy").unwrap();
        let neutral = cats.iter().position(|c| c == "neutral").unwrap();
        assert!((d.probs[joy] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probs[neutral] - 1.0 / 3.0).abs() < 1e-12);

        // identity: one dialogue reveals {past}, one {past, future} -> 2/3, 1/3
        let mut store = BundleStore::new();
        store.upsert(record(
            "d1",
            "finance",
            "identity",
            serde_json::json!({"categories": {"past": ["quote"], "future": []}}),
        ));
        store.upsert(record(
            "d2",
            "finance",
            "identity",
            serde_json::json!({"categories": {"past": ["q"], "future": ["q"]}}),
        ));
        let cats = dimension_categories("identity", true);
        let d = build_categorical(&store, "identity", &Provenance::Real, None, &cats).unwrap();
        let past = cats.iter().position(|c| c == "past").unwrap();
        let future = cats.iter().position(|c| c == "future").unwrap();
        assert!((d.probs[past] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probs[future] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_samples_and_profiles() {
        let mut store = BundleStore::new();
        for (id, domain, turns, words) in [
            ("d1", "finance", 4u64, vec![3u64, 4, 5, 6]),
            ("d2", "finance", 6, vec![1, 1, 1, 1, 1, 1]),
            ("d3", "nutrition", 8, vec![2; 8]),
        ] {
            store.upsert(record(
                id,
                domain,
                "length",
                serde_json::json!({"user_turns": turns, "words_per_user_turn": words}),
            ));
        }
        let turns = empirical_samples(&store, "turns", &Provenance::Real, None).unwrap();
        assert_eq!(turns.values, vec![4, 6, 8]);
        let words =
            empirical_samples(&store, "words", &Provenance::Real, Some("finance")).unwrap();
        assert_eq!(words.values, vec![18, 6]);

        let profile = domain_profile(&store, "turns", "turns", &Provenance::Real, &[]);
        assert_eq!(profile.values.len(), DOMAINS.len());
        let fin = DOMAINS.iter().position(|(k, _)| *k == "finance").unwrap();
        let nut = DOMAINS.iter().position(|(k, _)| *k == "nutrition").unwrap();
        assert_eq!(profile.values[fin], Some(5.0));
        assert_eq!(profile.values[nut], Some(8.0));
        assert!(profile.values.iter().filter(|v| v.is_some()).count() == 2);
    }

    #[test]
    fn mass_conservation_across_domains() {
        let mut store = BundleStore::new();
        store.upsert(record(
            "d1",
            "finance",
            "feedback",
            serde_json::json!([{"turn_index":1,"tags":["no_feedback"]},
                               {"turn_index":2,"tags":["explicit_positive"]}]),
        ));
        store.upsert(record(
            "d2",
            "nutrition",
            "feedback",
            serde_json::json!([{"turn_index":1,"tags":["no_feedback"]}]),
        ));
        let cats = dimension_categories("feedback", true);
        let overall =
            build_categorical(&store, "feedback", &Provenance::Real, None, &cats).unwrap();
        let per_domain: usize = ["finance", "nutrition"]
            .iter()
            .map(|d| {
                build_categorical(&store, "feedback", &Provenance::Real, Some(d), &cats)
                    .unwrap()
                    .support_count
            })
            .sum();
        assert_eq!(overall.support_count, per_domain);
    }

    #[test]
    fn knowledge_pooling() {
        let mut store = BundleStore::new();
        store.upsert(record(
            "d1",
            "finance",
            "knowledge",
            serde_json::json!({"knows": ["the user knows about stocks"],
                               "gaps": ["the user does not know about bonds"]}),
        ));
        let pooled = knowledge_by_domain(&store, &Provenance::Real, None);
        assert_eq!(pooled["finance"].len(), 2);
        let knows = knowledge_by_domain(&store, &Provenance::Real, Some("knows"));
        assert_eq!(knows["finance"], vec!["the user knows about stocks"]);
    }
}

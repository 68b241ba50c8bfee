//! Materializes result artifacts: descriptive statistics, distribution
//! difference and across-domain correlation tables, knowledge-similarity
//! heatmap data, and long-format plot data, with a content-digest manifest.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::BundleStore;
use crate::compare::{
    across_domain_score, build_categorical, dimension_categories, domain_profile,
    empirical_samples, knowledge_by_domain, knowledge_similarity, pearson, tvd,
    KnowledgeAggregation, wasserstein1,
};
use crate::corpus::{Dialogue, Provenance, DOMAINS};
use crate::gateway::{Gateway, GatewayError};
use crate::textmetrics::{corpus_linguistics, tokenize_words};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no dialogues for provenance {0}")]
    EmptyProvenance(String),
}

pub const CATEGORICAL_DIMENSIONS: [&str; 4] = ["intent", "feedback", "emotion", "identity"];
pub const SCALAR_STATS: [&str; 3] = ["turns", "words", "errors"];

/// A rendered table: column headers plus one labeled row per provenance or
/// simulator. Cells are full-precision; rendering applies per-column rounding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

impl Table {
    /// CSV rendering with per-column decimal places; missing cells are empty.
    pub fn to_csv(&self, decimals: &[usize]) -> String {
        assert_eq!(decimals.len(), self.columns.len());
        let mut out = String::new();
        out.push_str("name,");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.label);
            for (cell, d) in row.cells.iter().zip(decimals) {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format!("{v:.*}", d));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn provenance_label(p: &Provenance) -> String {
    match p {
        Provenance::Real => "Real".to_string(),
        Provenance::Simulator(id) => id.clone(),
    }
}

/// Distinct provenances in the corpus, Real first, simulators in first-seen
/// order.
pub fn provenances(dialogues: &[Dialogue]) -> Vec<Provenance> {
    let mut out = Vec::new();
    if dialogues.iter().any(|d| d.provenance == Provenance::Real) {
        out.push(Provenance::Real);
    }
    for d in dialogues {
        if d.provenance != Provenance::Real && !out.contains(&d.provenance) {
            out.push(d.provenance.clone());
        }
    }
    out
}

/// Table 1 shape: Avg #Turn, Avg #Word/Conv, Readability (Flesch-Kincaid
/// grade over concatenated user text), Lexical Richness (MTLD), Error Rate
/// (per 1000 user words, from bundle error payloads).
pub fn descriptive_table(dialogues: &[Dialogue], store: &BundleStore) -> Table {
    let columns = vec![
        "avg_turns".to_string(),
        "avg_words_per_conv".to_string(),
        "readability".to_string(),
        "lexical_richness".to_string(),
        "error_rate".to_string(),
    ];
    let mut rows = Vec::new();
    for prov in provenances(dialogues) {
        let group: Vec<&Dialogue> = dialogues.iter().filter(|d| d.provenance == prov).collect();
        let n = group.len() as f64;
        let avg_turns = group.iter().map(|d| d.user_turn_count() as f64).sum::<f64>() / n;
        let word_counts: Vec<usize> = group
            .iter()
            .map(|d| {
                d.user_turns()
                    .map(|t| tokenize_words(&t.text).len())
                    .sum::<usize>()
            })
            .collect();
        let avg_words = word_counts.iter().sum::<usize>() as f64 / n;
        let corpus_text: String = group
            .iter()
            .flat_map(|d| d.user_turns().map(|t| t.text.as_str()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let (readability, richness) = match corpus_linguistics(&corpus_text) {
            Ok(l) => (Some(l.fk_grade), l.mtld),
            Err(_) => (None, None),
        };
        let error_rate = empirical_samples(store, "errors", &prov, None)
            .ok()
            .and_then(|errors| {
                let total_words: usize = word_counts.iter().sum();
                if total_words == 0 || errors.values.len() != group.len() {
                    None
                } else {
                    Some(1000.0 * errors.values.iter().sum::<u64>() as f64 / total_words as f64)
                }
            });
        rows.push(TableRow {
            label: provenance_label(&prov),
            cells: vec![Some(avg_turns), Some(avg_words), readability, richness, error_rate],
        });
    }
    Table { columns, rows }
}

/// Table 2 shape: TVD×100 for the categorical dimensions, Wasserstein-1 for
/// the scalar stats; one row per simulator.
pub fn difference_table(
    store: &BundleStore,
    simulators: &[Provenance],
    include_system_management: bool,
) -> Table {
    let columns = vec![
        "intent_tvd".to_string(),
        "feedback_tvd".to_string(),
        "emotion_tvd".to_string(),
        "identity_tvd".to_string(),
        "turns_w1".to_string(),
        "words_w1".to_string(),
        "errors_w1".to_string(),
    ];
    let real = Provenance::Real;
    let mut rows = Vec::new();
    for sim in simulators {
        let mut cells = Vec::new();
        for dim in CATEGORICAL_DIMENSIONS {
            let cats = dimension_categories(dim, include_system_management || dim != "intent");
            let cell = build_categorical(store, dim, &real, None, &cats)
                .and_then(|p| {
                    build_categorical(store, dim, sim, None, &cats)
                        .and_then(|q| tvd(&p, &q))
                })
                .ok()
                .map(|v| v * 100.0);
            cells.push(cell);
        }
        for stat in SCALAR_STATS {
            let cell = empirical_samples(store, stat, &real, None)
                .and_then(|a| {
                    empirical_samples(store, stat, sim, None)
                        .and_then(|b| wasserstein1(&a.values, &b.values))
                })
                .ok();
            cells.push(cell);
        }
        rows.push(TableRow { label: provenance_label(sim), cells });
    }
    Table { columns, rows }
}

fn profiles_for(
    store: &BundleStore,
    dim: &str,
    prov: &Provenance,
    include_system_management: bool,
) -> Vec<crate::compare::DomainProfile> {
    let cats = dimension_categories(dim, include_system_management || dim != "intent");
    cats.iter()
        .map(|c| domain_profile(store, dim, c, prov, &cats))
        .collect()
}

/// Table 4 shape: averaged per-category Pearson r×100 for the categorical
/// dimensions (intent both with and without system_management), single r×100
/// for the scalar stats.
pub fn correlation_table(store: &BundleStore, simulators: &[Provenance]) -> Table {
    let columns = vec![
        "intent_r".to_string(),
        "intent_excl_sysmgmt_r".to_string(),
        "feedback_r".to_string(),
        "emotion_r".to_string(),
        "identity_r".to_string(),
        "turns_r".to_string(),
        "words_r".to_string(),
        "errors_r".to_string(),
    ];
    let real = Provenance::Real;
    let mut rows = Vec::new();
    for sim in simulators {
        let mut cells = Vec::new();
        for (dim, include_sys) in [
            ("intent", true),
            ("intent", false),
            ("feedback", true),
            ("emotion", true),
            ("identity", true),
        ] {
            let rp = profiles_for(store, dim, &real, include_sys);
            let sp = profiles_for(store, dim, sim, include_sys);
            let (_, avg) = across_domain_score(&rp, &sp);
            cells.push(avg.map(|v| v * 100.0));
        }
        for stat in SCALAR_STATS {
            let rp = domain_profile(store, stat, stat, &real, &[]);
            let sp = domain_profile(store, stat, stat, sim, &[]);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (a, b) in rp.values.iter().zip(&sp.values) {
                if let (Some(a), Some(b)) = (a, b) {
                    xs.push(*a);
                    ys.push(*b);
                }
            }
            cells.push(pearson(&xs, &ys).ok().map(|v| v * 100.0));
        }
        rows.push(TableRow { label: provenance_label(sim), cells });
    }
    Table { columns, rows }
}

/// Per-(domain, simulator) knowledge similarity grid. Statements are pooled
/// (knows + gaps) per domain and embedded through the gateway.
pub fn knowledge_heatmap(
    store: &BundleStore,
    gateway: &Gateway,
    simulators: &[Provenance],
    mode: KnowledgeAggregation,
) -> Result<Table, ReportError> {
    let real_stmts = knowledge_by_domain(store, &Provenance::Real, None);
    let mut embedded_real: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (domain, stmts) in &real_stmts {
        embedded_real.insert(domain.clone(), gateway.embed(stmts)?);
    }
    let columns: Vec<String> = simulators.iter().map(provenance_label).collect();
    let mut rows = Vec::new();
    for (domain, _) in DOMAINS {
        let mut cells = Vec::new();
        for sim in simulators {
            let sim_stmts = knowledge_by_domain(store, sim, None);
            let cell = match (embedded_real.get(domain), sim_stmts.get(domain)) {
                (Some(real_vecs), Some(stmts)) if !stmts.is_empty() => {
                    let sim_vecs = gateway.embed(stmts)?;
                    knowledge_similarity(real_vecs, &sim_vecs, mode).ok()
                }
                _ => None,
            };
            cells.push(cell);
        }
        rows.push(TableRow { label: domain.to_string(), cells });
    }
    Ok(Table { columns, rows })
}

/// Long-format (series, x, value) rows for per-category frequency bars.
pub fn category_bars(
    store: &BundleStore,
    dimension: &str,
    provs: &[Provenance],
    include_system_management: bool,
) -> String {
    let cats = dimension_categories(dimension, include_system_management || dimension != "intent");
    let mut out = String::from("series,x,value\n");
    for prov in provs {
        if let Ok(dist) = build_categorical(store, dimension, prov, None, &cats) {
            for (cat, p) in dist.categories.iter().zip(&dist.probs) {
                out.push_str(&format!("{},{},{:.6}\n", provenance_label(prov), cat, p));
            }
        }
    }
    out
}

/// Long-format per-domain frequency lines for one dimension; domains are
/// ordered by descending Real frequency of each category.
pub fn domain_lines(
    store: &BundleStore,
    dimension: &str,
    provs: &[Provenance],
    include_system_management: bool,
) -> String {
    let cats: Vec<String> = match dimension {
        "turns" | "words" | "errors" => vec![dimension.to_string()],
        _ => dimension_categories(dimension, include_system_management || dimension != "intent"),
    };
    let mut out = String::from("series,category,x,value\n");
    for cat in &cats {
        let real_profile = domain_profile(store, dimension, cat, &Provenance::Real, &cats);
        // order domains by descending Real frequency; missing cells last
        let mut order: Vec<usize> = (0..DOMAINS.len()).collect();
        order.sort_by(|&a, &b| {
            let va = real_profile.values[a].unwrap_or(f64::NEG_INFINITY);
            let vb = real_profile.values[b].unwrap_or(f64::NEG_INFINITY);
            vb.partial_cmp(&va).unwrap().then(a.cmp(&b))
        });
        for prov in provs {
            let profile = if *prov == Provenance::Real {
                real_profile.clone()
            } else {
                domain_profile(store, dimension, cat, prov, &cats)
            };
            for &i in &order {
                if let Some(v) = profile.values[i] {
                    out.push_str(&format!(
                        "{},{},{},{:.6}\n",
                        provenance_label(prov),
                        cat,
                        DOMAINS[i].0,
                        v
                    ));
                }
            }
        }
    }
    out
}

/// Boundary for optional figure rendering; headless runs emit data files only.
pub trait Renderer {
    fn render(&self, kind: &str, data_csv: &Path, out_dir: &Path) -> std::io::Result<Vec<PathBuf>>;
}

/// Default renderer: emits no images.
pub struct NullRenderer;

impl Renderer for NullRenderer {
    fn render(&self, _: &str, _: &Path, _: &Path) -> std::io::Result<Vec<PathBuf>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportManifest {
    pub run_id: String,
    pub config_digest: String,
    /// provenance -> dimension -> (ok, failed, skipped)
    pub coverage: BTreeMap<String, BTreeMap<String, (usize, usize, usize)>>,
    /// relative path -> sha256 hex digest
    pub files: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hex::encode(hasher.finalize())
}

fn per_provenance_coverage(
    store: &BundleStore,
) -> BTreeMap<String, BTreeMap<String, (usize, usize, usize)>> {
    let mut out: BTreeMap<String, BTreeMap<String, (usize, usize, usize)>> = BTreeMap::new();
    for r in store.records() {
        let entry = out
            .entry(provenance_label(&r.provenance))
            .or_default()
            .entry(r.dimension.clone())
            .or_default();
        match r.status {
            crate::annotate::DimensionStatus::Ok => entry.0 += 1,
            crate::annotate::DimensionStatus::Failed => entry.1 += 1,
            crate::annotate::DimensionStatus::Skipped => entry.2 += 1,
        }
    }
    out
}

pub struct ReportInputs<'a> {
    pub dialogues: &'a [Dialogue],
    pub store: &'a BundleStore,
    pub gateway: &'a Gateway,
    pub run_id: String,
    pub config_digest: String,
    pub include_system_management: bool,
    pub knowledge_mode: KnowledgeAggregation,
}

/// Writes the full report directory and returns the manifest. The manifest
/// lists every emitted file with its content digest and is written last.
pub fn write_report(
    inputs: &ReportInputs,
    out_dir: &Path,
    renderer: &dyn Renderer,
) -> Result<ReportManifest, ReportError> {
    std::fs::create_dir_all(out_dir.join("plotdata"))?;
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let write = |rel: &str, content: &str, files: &mut BTreeMap<String, String>| -> Result<(), ReportError> {
        let path = out_dir.join(rel);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(content.as_bytes())?;
        files.insert(rel.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    };

    let provs = provenances(inputs.dialogues);
    let sims: Vec<Provenance> = provs
        .iter()
        .filter(|p| **p != Provenance::Real)
        .cloned()
        .collect();

    let t1 = descriptive_table(inputs.dialogues, inputs.store);
    write("table1.csv", &t1.to_csv(&[2, 0, 2, 1, 2]), &mut files)?;

    let t2 = difference_table(inputs.store, &sims, inputs.include_system_management);
    write("table2.csv", &t2.to_csv(&[1, 1, 1, 1, 2, 2, 2]), &mut files)?;

    let t4 = correlation_table(inputs.store, &sims);
    write("table4.csv", &t4.to_csv(&[1; 8]), &mut files)?;

    let heat = knowledge_heatmap(inputs.store, inputs.gateway, &sims, inputs.knowledge_mode)?;
    let heat_decimals = vec![4; heat.columns.len()];
    write("knowledge_heatmap.csv", &heat.to_csv(&heat_decimals), &mut files)?;

    for dim in CATEGORICAL_DIMENSIONS {
        let bars = category_bars(inputs.store, dim, &provs, inputs.include_system_management);
        write(&format!("plotdata/category_bars_{dim}.csv"), &bars, &mut files)?;
        let lines = domain_lines(inputs.store, dim, &provs, inputs.include_system_management);
        write(&format!("plotdata/domain_lines_{dim}.csv"), &lines, &mut files)?;
    }
    for stat in SCALAR_STATS {
        let lines = domain_lines(inputs.store, stat, &provs, inputs.include_system_management);
        write(&format!("plotdata/domain_lines_{stat}.csv"), &lines, &mut files)?;
    }

    // full-precision copies of the tables
    let full = serde_json::json!({
        "table1": t1,
        "table2": t2,
        "table4": t4,
        "knowledge_heatmap": heat,
    });
    write(
        "tables_full.json",
        &serde_json::to_string_pretty(&full).expect("serializable tables"),
        &mut files,
    )?;

    for rel in files.keys().cloned().collect::<Vec<_>>() {
        if rel.starts_with("plotdata/") {
            let kind = if rel.contains("category_bars") {
                "category-bars"
            } else {
                "domain-lines"
            };
            for img in renderer.render(kind, &out_dir.join(&rel), &out_dir.join("figures"))? {
                let bytes = std::fs::read(&img)?;
                let rel_img = img
                    .strip_prefix(out_dir)
                    .unwrap_or(&img)
                    .to_string_lossy()
                    .to_string();
                files.insert(rel_img, sha256_hex(&bytes));
            }
        }
    }

    let manifest = ReportManifest {
        run_id: inputs.run_id.clone(),
        config_digest: inputs.config_digest.clone(),
        coverage: per_provenance_coverage(inputs.store),
        files,
        notes: vec![
            "identity distribution counting unit: (dialogue, category) presence".to_string(),
            "intent distribution includes system_management unless noted".to_string(),
        ],
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    std::fs::write(out_dir.join("manifest.json"), manifest_json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{BundleRecord, DimensionStatus};
    use crate::corpus::{Role, Turn};
    use crate::gateway::mock::DeterministicMock;
    use crate::gateway::RetryConfig;

    fn dialogue(id: &str, prov: Provenance, n_user: usize, words: &str) -> Dialogue {
        let mut turns = Vec::new();
        for i in 0..n_user {
            turns.push(Turn {
                index: 2 * i + 1,
                role: Role::User,
                text: words.to_string(),
            });
            turns.push(Turn {
                index: 2 * i + 2,
                role: Role::Chatbot,
                text: "reply text here".into(),
            });
        }
        Dialogue {
            id: id.into(),
            domain: "finance".into(),
            provenance: prov,
            scenario_id: None,
            turns,
            meta: None,
        }
    }

    fn record(
        id: &str,
        prov: Provenance,
        dimension: &str,
        payload: serde_json::Value,
    ) -> BundleRecord {
        BundleRecord {
            dialogue_id: id.into(),
            domain: "finance".into(),
            provenance: prov,
            dimension: dimension.into(),
            status: DimensionStatus::Ok,
            payload,
            warnings: vec![],
        }
    }

    fn gw() -> Gateway {
        Gateway::new(
            Box::new(DeterministicMock),
            None,
            RetryConfig { max_attempts: 1, base_delay_ms: 0 },
            1,
        )
    }

    #[test]
    fn descriptive_table_real_first_and_identical_rows() {
        let text = "I would like to plan a simple trip. Can you help me today?";
        let dialogues = vec![
            dialogue("r1", Provenance::Real, 4, text),
            dialogue("s1", Provenance::Simulator("simA".into()), 4, text),
        ];
        let mut store = BundleStore::new();
        for (id, prov) in [("r1", Provenance::Real), ("s1", Provenance::Simulator("simA".into()))]
        {
            store.upsert(record(
                id,
                prov,
                "error",
                serde_json::json!({"error_count": 2, "user_word_count": 52,
                                   "errors_per_1000_words": 38.46}),
            ));
        }
        let t = descriptive_table(&dialogues, &store);
        assert_eq!(t.rows[0].label, "Real");
        assert_eq!(t.rows[0].cells, t.rows[1].cells);
        assert_eq!(t.rows[0].cells[0], Some(4.0)); // avg turns
    }

    #[test]
    fn difference_table_identical_bundles_zero_row() {
        let mut store = BundleStore::new();
        let sim = Provenance::Simulator("simA".into());
        for (id, prov) in [("r1", Provenance::Real), ("s1", sim.clone())] {
            store.upsert(record(
                id,
                prov.clone(),
                "feedback",
                serde_json::json!([{"turn_index":1,"tags":["no_feedback"]}]),
            ));
            store.upsert(record(
                id,
                prov.clone(),
                "length",
                serde_json::json!({"user_turns": 4, "words_per_user_turn": [5,5,5,5]}),
            ));
            store.upsert(record(
                id,
                prov,
                "error",
                serde_json::json!({"error_count": 1, "user_word_count": 20,
                                   "errors_per_1000_words": 50.0}),
            ));
        }
        let t = difference_table(&store, &[sim], true);
        // feedback TVD and all W1 columns zero; intent/emotion/identity missing
        assert_eq!(t.rows[0].cells[1], Some(0.0));
        assert_eq!(t.rows[0].cells[4], Some(0.0));
        assert_eq!(t.rows[0].cells[5], Some(0.0));
        assert_eq!(t.rows[0].cells[6], Some(0.0));
        assert_eq!(t.rows[0].cells[0], None);
    }

    #[test]
    fn difference_table_hand_values() {
        let mut store = BundleStore::new();
        let sim = Provenance::Simulator("simA".into());
        // intent real (0.5, 0.5) over two tags, sim (1, 0) -> TVD 50.0
        store.upsert(record(
            "r1",
            Provenance::Real,
            "intent",
            serde_json::json!([{"turn_index":1,"tags":["info_retrieval"]},
                               {"turn_index":2,"tags":["info_discovery"]}]),
        ));
        store.upsert(record(
            "s1",
            sim.clone(),
            "intent",
            serde_json::json!([{"turn_index":1,"tags":["info_retrieval"]},
                               {"turn_index":2,"tags":["info_retrieval"]}]),
        ));
        // turn samples {7,7} vs {5,9} -> W1 = 2.0
        store.upsert(record(
            "r1",
            Provenance::Real,
            "length",
            serde_json::json!({"user_turns": 7, "words_per_user_turn": [1,1,1,1,1,1,1]}),
        ));
        store.upsert(record(
            "r2",
            Provenance::Real,
            "length",
            serde_json::json!({"user_turns": 7, "words_per_user_turn": [1,1,1,1,1,1,1]}),
        ));
        store.upsert(record(
            "s1",
            sim.clone(),
            "length",
            serde_json::json!({"user_turns": 5, "words_per_user_turn": [1,1,1,1,1]}),
        ));
        store.upsert(record(
            "s2",
            sim.clone(),
            "length",
            serde_json::json!({"user_turns": 9, "words_per_user_turn": [1,1,1,1,1,1,1,1,1]}),
        ));
        let t = difference_table(&store, &[sim], true);
        assert_eq!(t.rows[0].cells[0], Some(50.0));
        assert_eq!(t.rows[0].cells[4], Some(2.0));
    }

    #[test]
    fn domain_lines_ordering_by_real_frequency() {
        let mut store = BundleStore::new();
        // three domains with real turn means 3, 1, 2 -> order d1, d3, d2
        for (id, domain, turns) in [
            ("r1", "computer_hardware", 3u64),
            ("r2", "travel_planning", 1),
            ("r3", "data_science", 2),
        ] {
            let mut r = record("x", Provenance::Real, "length", serde_json::json!({}));
            r.dialogue_id = id.into();
            r.domain = domain.into();
            r.payload = serde_json::json!({"user_turns": turns,
                                           "words_per_user_turn": vec![1u64; turns as usize]});
            store.upsert(r);
        }
        let csv = domain_lines(&store, "turns", &[Provenance::Real], true);
        let xs: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        assert_eq!(xs, vec!["computer_hardware", "data_science", "travel_planning"]);
    }

    #[test]
    fn write_report_manifest_complete() {
        let dir = tempfile::tempdir().unwrap();
        let text = "I want to plan a trip. Please help me decide where to go.";
        let dialogues = vec![
            dialogue("r1", Provenance::Real, 4, text),
            dialogue("s1", Provenance::Simulator("simA".into()), 4, text),
        ];
        let mut store = BundleStore::new();
        for (id, prov) in [("r1", Provenance::Real), ("s1", Provenance::Simulator("simA".into()))]
        {
            store.upsert(record(
                id,
                prov.clone(),
                "feedback",
                serde_json::json!([{"turn_index":1,"tags":["no_feedback"]}]),
            ));
            store.upsert(record(
                id,
                prov.clone(),
                "length",
                serde_json::json!({"user_turns": 4, "words_per_user_turn": [3,3,3,3]}),
            ));
            store.upsert(record(
                id,
                prov.clone(),
                "error",
                serde_json::json!({"error_count": 0, "user_word_count": 12,
                                   "errors_per_1000_words": 0.0}),
            ));
            store.upsert(record(
                id,
                prov,
                "knowledge",
                serde_json::json!({"knows": ["the user knows about trips"], "gaps": []}),
            ));
        }
        let g = gw();
        let inputs = ReportInputs {
            dialogues: &dialogues,
            store: &store,
            gateway: &g,
            run_id: "test".into(),
            config_digest: "digest".into(),
            include_system_management: true,
            knowledge_mode: KnowledgeAggregation::SymmetricMeanOfMax,
        };
        let manifest = write_report(&inputs, dir.path(), &NullRenderer).unwrap();
        // every emitted file is listed; no unlisted report file exists
        for rel in manifest.files.keys() {
            assert!(dir.path().join(rel).exists(), "missing {rel}");
        }
        let mut on_disk = Vec::new();
        for entry in walk(dir.path()) {
            let rel = entry
                .strip_prefix(dir.path())
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            if rel != "manifest.json" {
                on_disk.push(rel);
            }
        }
        for rel in on_disk {
            assert!(manifest.files.contains_key(&rel), "unlisted file {rel}");
        }
        assert_eq!(manifest.coverage["Real"]["feedback"], (1, 0, 0));
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
        out
    }

    #[test]
    fn report_reproducible() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let dialogues = vec![dialogue(
            "r1",
            Provenance::Real,
            4,
            "I want to plan a trip. Please help.",
        )];
        let mut store = BundleStore::new();
        store.upsert(record(
            "r1",
            Provenance::Real,
            "length",
            serde_json::json!({"user_turns": 4, "words_per_user_turn": [4,4,4,4]}),
        ));
        let g = gw();
        let inputs = ReportInputs {
            dialogues: &dialogues,
            store: &store,
            gateway: &g,
            run_id: "test".into(),
            config_digest: "digest".into(),
            include_system_management: true,
            knowledge_mode: KnowledgeAggregation::SymmetricMeanOfMax,
        };
        let m1 = write_report(&inputs, dir1.path(), &NullRenderer).unwrap();
        let m2 = write_report(&inputs, dir2.path(), &NullRenderer).unwrap();
        assert_eq!(m1.files, m2.files);
    }
}

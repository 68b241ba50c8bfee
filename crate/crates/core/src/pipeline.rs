//! Pipeline orchestration: run configuration, stage wiring (scenarios →
//! personas → simulate → annotate → compare → report), resume via the content
//! cache and persisted stage outputs, and the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{annotate_dialogue, BundleStore, DimensionStatus, DIMENSIONS};
use crate::compare::KnowledgeAggregation;
use crate::corpus::{load_dialogues, save_dialogues, save_rejections, Dialogue, Provenance};
use crate::gateway::http::{EndpointConfig, HttpTransport};
use crate::gateway::mock::DeterministicMock;
use crate::gateway::{Gateway, ResponseCache, RetryConfig, Transport};
use crate::report::{write_report, NullRenderer, ReportInputs, ReportManifest};
use crate::scenario::{
    build_scenario_batch_prompt, generate_personas, load_personas, load_scenarios,
    parse_scenario_output, save_personas, save_scenarios, select_persona, Persona,
    PersonaSelection, Scenario, ScenarioConfig,
};
use crate::simulate::{run_simulation, SimulatorConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Report(#[from] crate::report::ReportError),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EndpointsConfig {
    #[serde(default)]
    pub chat: EndpointConfig,
    #[serde(default)]
    pub annotator: EndpointConfig,
    #[serde(default)]
    pub embed: EndpointConfig,
    #[serde(default)]
    pub emotion: EndpointConfig,
    #[serde(default)]
    pub grammar: EndpointConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub real_dialogues: PathBuf,
    /// Stage outputs land here: scenarios.jsonl, personas.jsonl,
    /// simulated.jsonl, bundles.jsonl, report/.
    pub work_dir: PathBuf,
    /// Precomputed simulated dialogues, used when the simulate stage is off.
    #[serde(default)]
    pub simulated_dialogues: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagesConfig {
    #[serde(default = "default_true")]
    pub scenarios: bool,
    #[serde(default = "default_true")]
    pub personas: bool,
    #[serde(default = "default_true")]
    pub simulate: bool,
    #[serde(default = "default_true")]
    pub annotate: bool,
    #[serde(default = "default_true")]
    pub compare: bool,
    #[serde(default = "default_true")]
    pub report: bool,
}

fn default_true() -> bool {
    true
}

impl Default for StagesConfig {
    fn default() -> Self {
        StagesConfig {
            scenarios: true,
            personas: true,
            simulate: true,
            annotate: true,
            compare: true,
            report: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<String>,
    #[serde(default = "default_annotator_model")]
    pub model: String,
    #[serde(default = "default_true")]
    pub include_system_management: bool,
}

fn default_dims() -> Vec<String> {
    DIMENSIONS.iter().map(|d| d.to_string()).collect()
}

fn default_annotator_model() -> String {
    "gpt-5-mini".to_string()
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            dims: default_dims(),
            model: default_annotator_model(),
            include_system_management: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default = "default_assistant_model")]
    pub assistant_model: String,
    #[serde(default = "default_persona_selection")]
    pub persona_selection: String,
    #[serde(default = "default_persona_attempts")]
    pub persona_max_attempts: u32,
}

fn default_assistant_model() -> String {
    "gpt-4o-mini".to_string()
}
fn default_persona_selection() -> String {
    "seeded_random".to_string()
}
fn default_persona_attempts() -> u32 {
    3
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            assistant_model: default_assistant_model(),
            persona_selection: default_persona_selection(),
            persona_max_attempts: default_persona_attempts(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CacheConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcurrencyConfig {
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        ConcurrencyConfig { max_in_flight: default_in_flight() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsConfig,
    #[serde(default)]
    pub stages: StagesConfig,
    #[serde(default)]
    pub endpoints: EndpointsConfig,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
    #[serde(default)]
    pub annotation: AnnotationConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub simulators: Vec<SimulatorConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&raw).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut ids = BTreeSet::new();
        for sim in &self.simulators {
            if !ids.insert(&sim.id) {
                return Err(PipelineError::Config(format!(
                    "duplicate simulator id {:?}",
                    sim.id
                )));
            }
        }
        for dim in &self.annotation.dims {
            if !DIMENSIONS.contains(&dim.as_str()) {
                return Err(PipelineError::Config(format!("unknown dimension {dim:?}")));
            }
        }
        Ok(())
    }

    /// Stable digest over the serialized config, recorded in the manifest.
    pub fn digest(&self) -> String {
        let serialized = serde_json::to_string(self).expect("serializable config");
        let mut hasher = Sha256::new();
        hasher.update(serialized.as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn persona_selection(&self) -> PersonaSelection {
        match self.simulation.persona_selection.as_str() {
            "first" => PersonaSelection::First,
            _ => PersonaSelection::SeededRandom,
        }
    }
}

// ---------------------------------------------------------------------------
// Gateway construction
// ---------------------------------------------------------------------------

/// Builds the gateway from config: deterministic in-process mock when the
/// chat endpoint is `mock:`, HTTP otherwise. The response cache is shared.
pub fn build_gateway(cfg: &RunConfig) -> Result<Gateway, PipelineError> {
    let transport: Box<dyn Transport> = if cfg.endpoints.chat.is_mock() {
        Box::new(DeterministicMock)
    } else {
        Box::new(HttpTransport::new(
            cfg.endpoints.chat.clone(),
            cfg.endpoints.embed.clone(),
            cfg.endpoints.emotion.clone(),
            cfg.endpoints.grammar.clone(),
        ))
    };
    let cache = match &cfg.cache.dir {
        Some(dir) => Some(ResponseCache::open(dir).map_err(PipelineError::Gateway)?),
        None => None,
    };
    let mut gateway = Gateway::new(
        transport,
        cache,
        RetryConfig::default(),
        cfg.concurrency.max_in_flight.max(1),
    );
    gateway.embed_model = cfg.endpoints.embed.model.clone();
    Ok(gateway)
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Per-stage counts recorded in the run manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageOutcome {
    pub ran: bool,
    pub ok: usize,
    pub failed: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageOutcome>,
    pub report: Option<ReportManifest>,
    /// (cache hits, cache misses, transport calls) over the whole run.
    pub gateway_stats: (u64, u64, u64),
}

impl RunManifest {
    pub fn has_failures(&self) -> bool {
        self.stages.values().any(|s| s.failed > 0)
    }
}

fn scenarios_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("scenarios.jsonl")
}
fn personas_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("personas.jsonl")
}
fn simulated_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("simulated.jsonl")
}
fn bundles_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("bundles.jsonl")
}

pub fn load_real(cfg: &RunConfig) -> Result<Vec<Dialogue>, PipelineError> {
    let set = load_dialogues(&cfg.paths.real_dialogues, Some(&Provenance::Real))?;
    if !set.rejections.is_empty() {
        save_rejections(&cfg.paths.real_dialogues, &set.rejections)?;
    }
    Ok(set.dialogues)
}

/// Scenario extraction in batches; ids missing from a batch completion are
/// retried as singleton batches before counting as failures.
pub fn run_scenarios_stage(
    cfg: &RunConfig,
    gateway: &Gateway,
    real: &[Dialogue],
) -> Result<(Vec<Scenario>, StageOutcome), PipelineError> {
    let mut outcome = StageOutcome { ran: true, ..Default::default() };
    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut pending_singletons: Vec<&Dialogue> = Vec::new();
    for batch in real.chunks(cfg.scenario.batch_size.max(1)) {
        let refs: Vec<&Dialogue> = batch.iter().collect();
        let expected: BTreeSet<String> = refs.iter().map(|d| d.id.clone()).collect();
        let req = match build_scenario_batch_prompt(&refs, &cfg.scenario) {
            Ok(r) => r,
            Err(crate::scenario::ScenarioError::OversizeDialogue(_)) => {
                pending_singletons.extend(refs);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let completion = gateway.chat_complete(&req)?;
        let (parsed, missing, _warnings) = parse_scenario_output(&completion, &expected);
        scenarios.extend(parsed.into_values());
        for id in missing {
            if let Some(d) = batch.iter().find(|d| d.id == id) {
                pending_singletons.push(d);
            }
        }
    }
    for d in pending_singletons {
        let refs = [d];
        let expected: BTreeSet<String> = [d.id.clone()].into();
        let req = build_scenario_batch_prompt(&refs, &cfg.scenario)?;
        let completion = gateway.chat_complete(&req)?;
        let (parsed, missing, _) = parse_scenario_output(&completion, &expected);
        scenarios.extend(parsed.into_values());
        if !missing.is_empty() {
            outcome.failed += 1;
            outcome.notes.push(format!("no scenario extracted for {}", d.id));
        }
    }
    scenarios.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    outcome.ok = scenarios.len();
    let path = scenarios_path(cfg);
    save_scenarios(&path, &scenarios).map_err(|e| io_err(&path, e))?;
    Ok((scenarios, outcome))
}

pub fn run_personas_stage(
    cfg: &RunConfig,
    gateway: &Gateway,
    scenarios: &[Scenario],
) -> Result<(Vec<Persona>, StageOutcome), PipelineError> {
    let mut outcome = StageOutcome { ran: true, ..Default::default() };
    let mut personas = Vec::new();
    for scenario in scenarios {
        match generate_personas(
            gateway,
            scenario,
            &cfg.annotation.model,
            cfg.simulation.persona_max_attempts,
        ) {
            Ok(ps) => {
                personas.extend(ps);
                outcome.ok += 1;
            }
            Err(crate::scenario::ScenarioError::PersonaGenerationFailed(id)) => {
                outcome.failed += 1;
                outcome.notes.push(format!("persona generation failed for {id}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let path = personas_path(cfg);
    save_personas(&path, &personas).map_err(|e| io_err(&path, e))?;
    Ok((personas, outcome))
}

pub fn run_simulate_stage(
    cfg: &RunConfig,
    gateway: &Gateway,
    real: &[Dialogue],
    scenarios: &[Scenario],
    personas: &[Persona],
) -> Result<(Vec<Dialogue>, StageOutcome), PipelineError> {
    let mut outcome = StageOutcome { ran: true, ..Default::default() };
    let domains: BTreeMap<&str, &str> = real
        .iter()
        .map(|d| (d.id.as_str(), d.domain.as_str()))
        .collect();
    let selection = cfg.persona_selection();
    let mut simulated = Vec::new();
    for sim_cfg in &cfg.simulators {
        for scenario in scenarios {
            let scenario_personas: Vec<Persona> = personas
                .iter()
                .filter(|p| p.scenario_id == scenario.dialogue_id)
                .cloned()
                .collect();
            let persona = if scenario_personas.is_empty() {
                None
            } else {
                Some(select_persona(&scenario_personas, selection, cfg.seed).clone())
            };
            let domain = domains
                .get(scenario.dialogue_id.as_str())
                .copied()
                .unwrap_or("finance");
            let result = run_simulation(
                scenario,
                persona.as_ref(),
                sim_cfg,
                gateway,
                &cfg.simulation.assistant_model,
                domain,
            );
            if let Some(err) = result.aborted {
                outcome.failed += 1;
                outcome
                    .notes
                    .push(format!("{} aborted for {}: {err}", sim_cfg.id, scenario.dialogue_id));
            } else {
                outcome.ok += 1;
            }
            simulated.push(result.dialogue);
        }
    }
    save_dialogues(&simulated_path(cfg), &simulated)?;
    Ok((simulated, outcome))
}

/// Annotates all dialogues, resuming from an existing bundle store: (dialogue,
/// dimension) pairs already ok are not re-run (and cached endpoint responses
/// make re-runs of incomplete dimensions free).
pub fn run_annotate_stage(
    cfg: &RunConfig,
    gateway: &Gateway,
    dialogues: &[Dialogue],
    resume: bool,
) -> Result<(BundleStore, StageOutcome), PipelineError> {
    let mut outcome = StageOutcome { ran: true, ..Default::default() };
    let path = bundles_path(cfg);
    let mut store = if resume && path.exists() {
        BundleStore::load(&path).map_err(|e| io_err(&path, e))?
    } else {
        BundleStore::new()
    };
    for d in dialogues {
        let aborted = d
            .meta
            .as_ref()
            .and_then(|m| m.get("status"))
            .and_then(|s| s.as_str())
            == Some("aborted");
        if aborted {
            continue;
        }
        let missing: Vec<String> = cfg
            .annotation
            .dims
            .iter()
            .filter(|dim| {
                store
                    .get(&d.id, dim)
                    .map(|r| r.status != DimensionStatus::Ok)
                    .unwrap_or(true)
            })
            .cloned()
            .collect();
        if missing.is_empty() {
            continue;
        }
        annotate_dialogue(gateway, &cfg.annotation.model, d, &missing, &mut store);
    }
    for (_, (ok, failed, _)) in store.coverage() {
        outcome.ok += ok;
        outcome.failed += failed;
    }
    store.save(&path).map_err(|e| io_err(&path, e))?;
    Ok((store, outcome))
}

fn load_precomputed_simulated(cfg: &RunConfig) -> Result<Vec<Dialogue>, PipelineError> {
    let mut out = Vec::new();
    for path in &cfg.paths.simulated_dialogues {
        let set = load_dialogues(path, None)?;
        out.extend(set.dialogues);
    }
    Ok(out)
}

/// Runs all enabled stages in order and returns the run manifest.
pub fn run_pipeline(cfg: &RunConfig, resume: bool) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.paths.work_dir)
        .map_err(|e| io_err(&cfg.paths.work_dir, e))?;
    let gateway = build_gateway(cfg)?;
    let mut manifest = RunManifest {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        ..Default::default()
    };

    let real = load_real(cfg)?;

    let scenarios = if cfg.stages.scenarios {
        let (scenarios, outcome) = run_scenarios_stage(cfg, &gateway, &real)?;
        manifest.stages.insert("scenarios".into(), outcome);
        scenarios
    } else {
        let path = scenarios_path(cfg);
        if path.exists() {
            load_scenarios(&path).map_err(|e| io_err(&path, e))?
        } else {
            Vec::new()
        }
    };

    let personas = if cfg.stages.personas {
        let (personas, outcome) = run_personas_stage(cfg, &gateway, &scenarios)?;
        manifest.stages.insert("personas".into(), outcome);
        personas
    } else {
        let path = personas_path(cfg);
        if path.exists() {
            load_personas(&path).map_err(|e| io_err(&path, e))?
        } else {
            Vec::new()
        }
    };

    let simulated = if cfg.stages.simulate {
        let (simulated, outcome) =
            run_simulate_stage(cfg, &gateway, &real, &scenarios, &personas)?;
        manifest.stages.insert("simulate".into(), outcome);
        simulated
    } else {
        let mut simulated = load_precomputed_simulated(cfg)?;
        let path = simulated_path(cfg);
        if simulated.is_empty() && path.exists() {
            simulated = load_dialogues(&path, None)?.dialogues;
        }
        simulated
    };

    let mut all: Vec<Dialogue> = real.clone();
    all.extend(simulated.iter().cloned());

    let store = if cfg.stages.annotate {
        let (store, outcome) = run_annotate_stage(cfg, &gateway, &all, resume)?;
        manifest.stages.insert("annotate".into(), outcome);
        store
    } else {
        let path = bundles_path(cfg);
        if path.exists() {
            BundleStore::load(&path).map_err(|e| io_err(&path, e))?
        } else {
            BundleStore::new()
        }
    };

    if cfg.stages.report || cfg.stages.compare {
        let report_dir = cfg.paths.work_dir.join("report");
        let inputs = ReportInputs {
            dialogues: &all,
            store: &store,
            gateway: &gateway,
            run_id: format!("seed-{}", cfg.seed),
            config_digest: cfg.digest(),
            include_system_management: cfg.annotation.include_system_management,
            knowledge_mode: KnowledgeAggregation::SymmetricMeanOfMax,
        };
        let report_manifest = write_report(&inputs, &report_dir, &NullRenderer)?;
        manifest.report = Some(report_manifest);
        manifest
            .stages
            .insert("report".into(), StageOutcome { ran: true, ok: 1, ..Default::default() });
    }

    manifest.gateway_stats = gateway.stats.snapshot();

    let manifest_path = cfg.paths.work_dir.join("run_manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("serializable manifest"),
    )
    .map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

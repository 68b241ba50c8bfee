//! Simulated-user vs. assistant conversation loop: phase-dependent user
//! prompts, adapter-specific chat-history arrangement, rejection-sampling
//! guardrails, end-token handling, and hard turn limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, Provenance, Role, Turn};
use crate::gateway::{ChatMessage, ChatRequest, ChatRole, Gateway, GatewayError};
use crate::scenario::{Persona, Scenario};
use crate::textmetrics::split_sentences;

/// Token a simulator emits to end the conversation once allowed to.
pub const END_TOKEN: &str = "<|endconversation|>";

pub const DEFAULT_FORCED_TURNS: usize = 4;
pub const DEFAULT_MAX_TURNS: usize = 10;
pub const DEFAULT_GENERIC_PERSONA: &str = "a human user";

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("simulation already ended")]
    AlreadyEnded,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// How the persona slot of the simulation prompt is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaMode {
    /// Fixed persona string (default "a human user").
    Generic,
    /// Scenario-informed persona generated per scenario.
    Informed,
    /// No persona template; "You are a user who {SCENARIO}" form.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuardrailConfig {
    pub enabled: bool,
    pub min_words: usize,
    pub max_words: usize,
    pub forbidden_first_words: Vec<String>,
    pub forbid_verbatim_repeat: bool,
    pub max_retries: u32,
}

impl Default for GuardrailConfig {
    fn default() -> Self {
        GuardrailConfig {
            enabled: false,
            min_words: 3,
            max_words: 25,
            forbidden_first_words: vec!["i".into(), "you".into(), "here".into()],
            forbid_verbatim_repeat: true,
            max_retries: 5,
        }
    }
}

impl GuardrailConfig {
    /// Guardrails as applied to pretrained-user style simulators.
    pub fn enabled_defaults() -> Self {
        GuardrailConfig { enabled: true, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub id: String,
    pub persona_mode: PersonaMode,
    #[serde(default)]
    pub role_flip: bool,
    #[serde(default)]
    pub action_sentence_as_user: bool,
    #[serde(default)]
    pub strip_prefixes: Vec<String>,
    #[serde(default)]
    pub guardrails: GuardrailConfig,
    /// Model name for the simulated-user endpoint.
    pub model: String,
    #[serde(default = "default_generic_persona")]
    pub generic_persona: String,
    #[serde(default = "default_forced_turns")]
    pub forced_turns: usize,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default = "default_sim_temperature")]
    pub temperature: f64,
}

fn default_generic_persona() -> String {
    DEFAULT_GENERIC_PERSONA.to_string()
}
fn default_forced_turns() -> usize {
    DEFAULT_FORCED_TURNS
}
fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}
fn default_sim_temperature() -> f64 {
    1.0
}

impl SimulatorConfig {
    pub fn new(id: &str, persona_mode: PersonaMode, model: &str) -> Self {
        SimulatorConfig {
            id: id.to_string(),
            persona_mode,
            role_flip: false,
            action_sentence_as_user: false,
            strip_prefixes: Vec::new(),
            guardrails: GuardrailConfig::default(),
            model: model.to_string(),
            generic_persona: default_generic_persona(),
            forced_turns: DEFAULT_FORCED_TURNS,
            max_turns: DEFAULT_MAX_TURNS,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    SimulatedUser,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    First,
    MustContinue,
    CanStop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuardrailEvent {
    pub user_turn: usize,
    pub attempt: u32,
    pub reason: String,
}

#[derive(Debug)]
pub struct SimulationState {
    pub scenario: Scenario,
    pub persona: Option<Persona>,
    pub history: Vec<(Speaker, String)>,
    pub ended: bool,
    pub guardrail_log: Vec<GuardrailEvent>,
    pub flags: Vec<String>,
}

impl SimulationState {
    pub fn new(scenario: Scenario, persona: Option<Persona>) -> Self {
        SimulationState {
            scenario,
            persona,
            history: Vec::new(),
            ended: false,
            guardrail_log: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn user_turn_count(&self) -> usize {
        self.history
            .iter()
            .filter(|(s, _)| *s == Speaker::SimulatedUser)
            .count()
    }

    pub fn phase(&self, cfg: &SimulatorConfig) -> Phase {
        let users = self.user_turn_count();
        if users == 0 {
            Phase::First
        } else if users >= cfg.forced_turns {
            Phase::CanStop
        } else {
            Phase::MustContinue
        }
    }
}

const HUMAN_STYLE_BLOCK: &str = "People can make typos, they don't always use perfect \
punctuation, and they tend to be lazy because typing requires effort. They also tend to split \
information across turns and not give everything at the start.\n\n\
However, you should not overdo these things in your outputs, you must realistically act like a human.";

fn persona_slot<'a>(state: &'a SimulationState, cfg: &'a SimulatorConfig) -> &'a str {
    match cfg.persona_mode {
        PersonaMode::Generic | PersonaMode::None => cfg.generic_persona.as_str(),
        PersonaMode::Informed => state
            .persona
            .as_ref()
            .map(|p| p.text.as_str())
            .unwrap_or(cfg.generic_persona.as_str()),
    }
}

/// Scenario text with the "interacting with a chatbot to" prefix removed,
/// for the "interacting with an AI chatbot to {task}" slots.
fn scenario_task(scenario: &Scenario) -> &str {
    scenario
        .text
        .strip_prefix(crate::scenario::SCENARIO_PREFIX)
        .unwrap_or(&scenario.text)
        .trim()
}

/// Renders the phase-appropriate simulation prompt.
pub fn compose_user_turn_prompt(state: &SimulationState, cfg: &SimulatorConfig) -> String {
    if cfg.persona_mode == PersonaMode::None {
        // pretrained-user form; phase gating still applies in the step loop
        return format!("You are a user who {}", state.scenario.text);
    }
    let persona = persona_slot(state, cfg);
    let scenario = &state.scenario.text;
    match state.phase(cfg) {
        Phase::First => format!(
            "You are {persona} {scenario}.\n\n{HUMAN_STYLE_BLOCK}\n\n\
Generate the first prompt you would say to the chatbot to achieve your goal."
        ),
        Phase::MustContinue => format!(
            "You are {persona} {scenario}.\n\n{HUMAN_STYLE_BLOCK}\n\n\
Continue this conversation while keeping the role of {persona} interacting with an AI chatbot to {}.",
            scenario_task(&state.scenario)
        ),
        Phase::CanStop => format!(
            "You are {persona} {scenario}.\n\n{HUMAN_STYLE_BLOCK}\n\n\
Determine whether you wish to end this conversation. If you wish to end the conversation, respond \
ONLY with \"{END_TOKEN}\". If you wish to continue the conversation, generate the next message you \
would say to the AI chatbot while keeping the role of {persona} {scenario}."
        ),
    }
}

/// Arranges the prompt and prior turns into the message list sent to the
/// simulated-user model, per the adapter flags.
pub fn arrange_history(
    state: &SimulationState,
    cfg: &SimulatorConfig,
    prompt: &str,
) -> Vec<ChatMessage> {
    let mut messages = Vec::new();
    if cfg.action_sentence_as_user {
        let sentences = split_sentences(prompt);
        let (system_part, action) = match sentences.split_last() {
            Some((last, _rest)) => {
                let cut = prompt.rfind(last.as_str()).unwrap_or(prompt.len());
                (prompt[..cut].trim_end().to_string(), last.clone())
            }
            None => (prompt.to_string(), String::new()),
        };
        messages.push(ChatMessage::new(ChatRole::System, system_part));
        for (speaker, text) in &state.history {
            let role = match speaker {
                Speaker::SimulatedUser => ChatRole::Assistant,
                Speaker::Assistant => ChatRole::User,
            };
            // Gemma-style adapter: history roles NOT flipped relative to the
            // simulator acting as assistant; chatbot replies arrive as user.
            messages.push(ChatMessage::new(role, text.clone()));
        }
        if !action.is_empty() {
            messages.push(ChatMessage::new(ChatRole::User, action));
        }
    } else if cfg.role_flip {
        messages.push(ChatMessage::new(ChatRole::System, prompt));
        for (speaker, text) in &state.history {
            let role = match speaker {
                Speaker::SimulatedUser => ChatRole::Assistant,
                Speaker::Assistant => ChatRole::User,
            };
            messages.push(ChatMessage::new(role, text.clone()));
        }
    } else {
        messages.push(ChatMessage::new(ChatRole::System, prompt));
        for (speaker, text) in &state.history {
            let role = match speaker {
                Speaker::SimulatedUser => ChatRole::User,
                Speaker::Assistant => ChatRole::Assistant,
            };
            messages.push(ChatMessage::new(role, text.clone()));
        }
    }
    messages
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(String),
}

fn first_word(candidate: &str) -> Option<String> {
    candidate.split_whitespace().next().map(|w| {
        w.trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase()
    })
}

/// Applies the rejection-sampling rules in order: length bounds, forbidden
/// first word, verbatim repetition. The reason names the first failed rule.
pub fn check_guardrails(
    candidate: &str,
    state: &SimulationState,
    g: &GuardrailConfig,
) -> Verdict {
    let trimmed = candidate.trim();
    if trimmed == END_TOKEN {
        return Verdict::Accept; // end-token-only output is exempt
    }
    let words = trimmed.split_whitespace().count();
    if words < g.min_words {
        return Verdict::Reject("too-short".into());
    }
    if words > g.max_words {
        return Verdict::Reject("too-long".into());
    }
    if let Some(fw) = first_word(trimmed) {
        if g.forbidden_first_words.iter().any(|f| f.to_lowercase() == fw) {
            return Verdict::Reject("forbidden-first-word".into());
        }
    }
    if g.forbid_verbatim_repeat {
        let repeat = state
            .history
            .iter()
            .any(|(s, t)| *s == Speaker::SimulatedUser && t == trimmed);
        if repeat {
            return Verdict::Reject("verbatim-repeat".into());
        }
    }
    Verdict::Accept
}

fn strip_prefixes(text: &str, prefixes: &[String]) -> String {
    let mut out = text.trim();
    for p in prefixes {
        if let Some(rest) = out.strip_prefix(p.as_str()) {
            out = rest.trim_start();
        }
    }
    out.to_string()
}

/// Generates one simulated-user utterance, applying prefix stripping and
/// guardrails. Returns `None` when the simulator chose to stop.
fn generate_user_utterance(
    state: &mut SimulationState,
    cfg: &SimulatorConfig,
    gateway: &Gateway,
) -> Result<Option<String>, SimulateError> {
    let phase = state.phase(cfg);
    let prompt = compose_user_turn_prompt(state, cfg);
    let messages = arrange_history(state, cfg, &prompt);
    let mut req = ChatRequest::new(cfg.model.clone(), messages, cfg.temperature);
    let turn_number = state.user_turn_count() + 1;
    let attempts = if cfg.guardrails.enabled {
        cfg.guardrails.max_retries + 1
    } else {
        1
    };
    let mut candidate = String::new();
    let mut events = Vec::new();
    for attempt in 0..attempts {
        req.attempt_salt = if attempt == 0 { None } else { Some(attempt as u64) };
        let raw = gateway.chat_complete(&req)?;
        candidate = strip_prefixes(&raw, &cfg.strip_prefixes);
        if phase == Phase::CanStop && candidate.contains(END_TOKEN) {
            state.guardrail_log.extend(events);
            return Ok(None);
        }
        if !cfg.guardrails.enabled {
            break;
        }
        match check_guardrails(&candidate, state, &cfg.guardrails) {
            Verdict::Accept => {
                state.guardrail_log.extend(events);
                return Ok(Some(candidate));
            }
            Verdict::Reject(reason) => {
                events.push(GuardrailEvent { user_turn: turn_number, attempt, reason });
            }
        }
    }
    if cfg.guardrails.enabled {
        // retries exhausted: accept the last candidate, logged as an override
        events.push(GuardrailEvent {
            user_turn: turn_number,
            attempt: attempts,
            reason: "override-accepted".into(),
        });
    }
    if candidate.contains(END_TOKEN) && phase != Phase::CanStop {
        state.flags.push(format!("premature-stop-token-turn-{turn_number}"));
    }
    state.guardrail_log.extend(events);
    Ok(Some(candidate))
}

/// One simulation step: one simulated-user utterance and, unless the dialogue
/// ended, one assistant reply. Atomic: the state is unchanged on failure.
pub fn step_simulation(
    state: &mut SimulationState,
    cfg: &SimulatorConfig,
    gateway: &Gateway,
    assistant_model: &str,
) -> Result<(), SimulateError> {
    if state.ended {
        return Err(SimulateError::AlreadyEnded);
    }
    let utterance = match generate_user_utterance(state, cfg, gateway)? {
        None => {
            state.ended = true;
            return Ok(());
        }
        Some(u) => u,
    };
    if state.user_turn_count() + 1 >= cfg.max_turns {
        state.history.push((Speaker::SimulatedUser, utterance));
        state.ended = true;
        return Ok(());
    }
    // assistant sees the raw transcript with natural roles and no system prompt
    let mut messages: Vec<ChatMessage> = state
        .history
        .iter()
        .map(|(s, t)| {
            ChatMessage::new(
                match s {
                    Speaker::SimulatedUser => ChatRole::User,
                    Speaker::Assistant => ChatRole::Assistant,
                },
                t.clone(),
            )
        })
        .collect();
    messages.push(ChatMessage::new(ChatRole::User, utterance.clone()));
    let assistant_req = ChatRequest::new(assistant_model, messages, 1.0);
    let reply = gateway.chat_complete(&assistant_req)?;
    state.history.push((Speaker::SimulatedUser, utterance));
    state.history.push((Speaker::Assistant, reply));
    Ok(())
}

/// Result of a full simulation run; `aborted` carries the gateway error when
/// the transcript is partial.
#[derive(Debug)]
pub struct SimulationOutcome {
    pub dialogue: Dialogue,
    pub aborted: Option<String>,
}

fn state_to_dialogue(
    state: &SimulationState,
    cfg: &SimulatorConfig,
    domain: &str,
    status: &str,
) -> Dialogue {
    let turns: Vec<Turn> = state
        .history
        .iter()
        .enumerate()
        .map(|(i, (s, t))| Turn {
            index: i + 1,
            role: match s {
                Speaker::SimulatedUser => Role::User,
                Speaker::Assistant => Role::Chatbot,
            },
            text: t.clone(),
        })
        .collect();
    let meta = serde_json::json!({
        "status": status,
        "guardrail_log": state.guardrail_log,
        "flags": state.flags,
    });
    Dialogue {
        id: format!("{}__{}", cfg.id, state.scenario.dialogue_id),
        domain: domain.to_string(),
        provenance: Provenance::Simulator(cfg.id.clone()),
        scenario_id: Some(state.scenario.dialogue_id.clone()),
        turns,
        meta: Some(meta),
    }
}

/// Runs a full simulated dialogue for one scenario.
pub fn run_simulation(
    scenario: &Scenario,
    persona: Option<&Persona>,
    cfg: &SimulatorConfig,
    gateway: &Gateway,
    assistant_model: &str,
    domain: &str,
) -> SimulationOutcome {
    let mut state = SimulationState::new(scenario.clone(), persona.cloned());
    while !state.ended {
        if let Err(e) = step_simulation(&mut state, cfg, gateway, assistant_model) {
            return SimulationOutcome {
                dialogue: state_to_dialogue(&state, cfg, domain, "aborted"),
                aborted: Some(e.to_string()),
            };
        }
    }
    SimulationOutcome {
        dialogue: state_to_dialogue(&state, cfg, domain, "ok"),
        aborted: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::ScriptedTransport;
    use crate::gateway::RetryConfig;

    fn scenario() -> Scenario {
        Scenario::new("s1", "interacting with a chatbot to plan a weekend trip")
    }

    fn gw(t: ScriptedTransport) -> Gateway {
        Gateway::new(
            Box::new(t),
            None,
            RetryConfig { max_attempts: 1, base_delay_ms: 0 },
            1,
        )
    }

    #[test]
    fn first_phase_prompt_shape() {
        let mut cfg = SimulatorConfig::new("sim", PersonaMode::Informed, "m");
        cfg.generic_persona = "a human user".into();
        let persona = Persona {
            scenario_id: "s1".into(),
            rank: 1,
            text: "a busy parent with a sick child".into(),
        };
        let state = SimulationState::new(scenario(), Some(persona));
        let prompt = compose_user_turn_prompt(&state, &cfg);
        assert!(prompt.starts_with(
            "You are a busy parent with a sick child interacting with a chatbot to"
        ));
        assert!(prompt.ends_with("Generate the first prompt you would say to the chatbot to achieve your goal."));
        assert!(!prompt.contains(END_TOKEN));
    }

    #[test]
    fn can_stop_prompt_contains_token_and_boundary() {
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let mut state = SimulationState::new(scenario(), None);
        // forced_turns - 1 user turns: still must-continue
        for i in 0..cfg.forced_turns - 1 {
            state.history.push((Speaker::SimulatedUser, format!("u{i}")));
            state.history.push((Speaker::Assistant, format!("a{i}")));
        }
        let prompt = compose_user_turn_prompt(&state, &cfg);
        assert!(prompt.contains("Continue this conversation"));
        assert!(!prompt.contains(END_TOKEN));
        state.history.push((Speaker::SimulatedUser, "u".into()));
        let prompt = compose_user_turn_prompt(&state, &cfg);
        assert!(prompt.contains(&format!("respond ONLY with \"{END_TOKEN}\"")));
    }

    #[test]
    fn pretrained_user_prompt_form() {
        let cfg = SimulatorConfig::new("userlm", PersonaMode::None, "m");
        let state = SimulationState::new(scenario(), None);
        assert_eq!(
            compose_user_turn_prompt(&state, &cfg),
            "You are a user who interacting with a chatbot to plan a weekend trip"
        );
    }

    #[test]
    fn role_flip_arrangement() {
        let mut cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        cfg.role_flip = true;
        let mut state = SimulationState::new(scenario(), None);
        state.history.push((Speaker::SimulatedUser, "my question".into()));
        state.history.push((Speaker::Assistant, "Hi! How can I help?".into()));
        let msgs = arrange_history(&state, &cfg, "PROMPT");
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[0].role, ChatRole::System);
        assert_eq!(msgs[1].role, ChatRole::Assistant);
        assert_eq!(msgs[1].content, "my question");
        assert_eq!(msgs[2].role, ChatRole::User);
        assert_eq!(msgs[2].content, "Hi! How can I help?");
    }

    #[test]
    fn action_sentence_split() {
        let mut cfg = SimulatorConfig::new("gemma", PersonaMode::Generic, "m");
        cfg.action_sentence_as_user = true;
        let state = SimulationState::new(scenario(), None);
        let prompt = compose_user_turn_prompt(&state, &cfg);
        let msgs = arrange_history(&state, &cfg, &prompt);
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, ChatRole::System);
        assert_eq!(msgs[1].role, ChatRole::User);
        assert_eq!(
            msgs[1].content,
            "Generate the first prompt you would say to the chatbot to achieve your goal."
        );
        assert!(!msgs[0].content.contains("Generate the first prompt"));
    }

    #[test]
    fn natural_roles_single_system_message() {
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let state = SimulationState::new(scenario(), None);
        let msgs = arrange_history(&state, &cfg, "PROMPT");
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].role, ChatRole::System);
    }

    #[test]
    fn guardrail_reasons() {
        let g = GuardrailConfig::enabled_defaults();
        let mut state = SimulationState::new(scenario(), None);
        assert_eq!(
            check_guardrails("ok", &state, &g),
            Verdict::Reject("too-short".into())
        );
        assert_eq!(
            check_guardrails("Here is my travel plan for next week", &state, &g),
            Verdict::Reject("forbidden-first-word".into())
        );
        assert_eq!(
            check_guardrails("what trains run boston to nyc monday morning", &state, &g),
            Verdict::Accept
        );
        let long = (0..30).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(check_guardrails(&long, &state, &g), Verdict::Reject("too-long".into()));
        state
            .history
            .push((Speaker::SimulatedUser, "what trains run boston to nyc monday morning".into()));
        assert_eq!(
            check_guardrails("what trains run boston to nyc monday morning", &state, &g),
            Verdict::Reject("verbatim-repeat".into())
        );
        assert_eq!(check_guardrails(END_TOKEN, &state, &g), Verdict::Accept);
    }

    #[test]
    fn guardrail_retry_exhaustion_accepts_last() {
        let t = ScriptedTransport::new();
        for _ in 0..6 {
            t.push_chat(Ok("ok".into())); // too-short every time
        }
        t.push_chat(Ok("assistant reply".into()));
        let g = gw(t);
        let mut cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        cfg.guardrails = GuardrailConfig::enabled_defaults();
        let mut state = SimulationState::new(scenario(), None);
        step_simulation(&mut state, &cfg, &g, "assistant").unwrap();
        assert_eq!(state.history[0].1, "ok");
        assert_eq!(state.guardrail_log.len(), 7); // 6 rejections + override marker
        assert_eq!(state.guardrail_log.last().unwrap().reason, "override-accepted");
    }

    #[test]
    fn prefix_stripping() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok("Okay, can you shorten it".into()));
        t.push_chat(Ok("assistant reply".into()));
        let g = gw(t);
        let mut cfg = SimulatorConfig::new("gemma", PersonaMode::Generic, "m");
        cfg.strip_prefixes = vec!["Okay,".into()];
        let mut state = SimulationState::new(scenario(), None);
        step_simulation(&mut state, &cfg, &g, "assistant").unwrap();
        assert_eq!(state.history[0].1, "can you shorten it");
    }

    #[test]
    fn stop_token_in_can_stop_phase_ends() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok(END_TOKEN.to_string()));
        let g = gw(t);
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let mut state = SimulationState::new(scenario(), None);
        for i in 0..cfg.forced_turns {
            state.history.push((Speaker::SimulatedUser, format!("u{i}")));
            state.history.push((Speaker::Assistant, format!("a{i}")));
        }
        let before = state.history.len();
        step_simulation(&mut state, &cfg, &g, "assistant").unwrap();
        assert!(state.ended);
        assert_eq!(state.history.len(), before);
    }

    #[test]
    fn stop_token_before_forced_turns_kept_as_text() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok(END_TOKEN.to_string()));
        t.push_chat(Ok("assistant reply".into()));
        let g = gw(t);
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let mut state = SimulationState::new(scenario(), None);
        state.history.push((Speaker::SimulatedUser, "u1".into()));
        state.history.push((Speaker::Assistant, "a1".into()));
        step_simulation(&mut state, &cfg, &g, "assistant").unwrap();
        assert!(!state.ended);
        assert_eq!(state.history[2].1, END_TOKEN);
        assert!(state.flags.iter().any(|f| f.starts_with("premature-stop-token")));
    }

    #[test]
    fn turn_cap_enforced() {
        let t = ScriptedTransport::new();
        // never emits the stop token; 10 user turns + 9 assistant replies
        for i in 0..19 {
            t.push_chat(Ok(format!("message number {i} with several words")));
        }
        let g = gw(t);
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let outcome = run_simulation(&scenario(), None, &cfg, &g, "assistant", "finance");
        assert!(outcome.aborted.is_none());
        let users = outcome
            .dialogue
            .turns
            .iter()
            .filter(|t| t.role == Role::User)
            .count();
        assert_eq!(users, DEFAULT_MAX_TURNS);
    }

    #[test]
    fn full_run_with_stop_token() {
        let t = ScriptedTransport::new();
        for i in 0..4 {
            t.push_chat(Ok(format!("user message {i} asking for details")));
            t.push_chat(Ok(format!("assistant reply {i}")));
        }
        t.push_chat(Ok(END_TOKEN.to_string()));
        let g = gw(t);
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let outcome = run_simulation(&scenario(), None, &cfg, &g, "assistant", "finance");
        assert!(outcome.aborted.is_none());
        let d = &outcome.dialogue;
        assert_eq!(d.user_turn_count(), 4);
        assert_eq!(d.provenance, Provenance::Simulator("sim".into()));
        assert_eq!(d.scenario_id.as_deref(), Some("s1"));
    }

    #[test]
    fn aborted_run_keeps_partial_transcript() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok("first user message with some words".into()));
        t.push_chat(Ok("assistant reply".into()));
        // next user call fails (script exhausted -> protocol error)
        let g = gw(t);
        let cfg = SimulatorConfig::new("sim", PersonaMode::Generic, "m");
        let outcome = run_simulation(&scenario(), None, &cfg, &g, "assistant", "finance");
        assert!(outcome.aborted.is_some());
        assert_eq!(outcome.dialogue.turns.len(), 2);
        let status = outcome.dialogue.meta.as_ref().unwrap()["status"].as_str().unwrap();
        assert_eq!(status, "aborted");
    }
}

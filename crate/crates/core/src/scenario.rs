//! Scenario extraction from real dialogues via batched summarization prompts,
//! and scenario-informed persona generation, with strict parsers for both.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Dialogue, Role};
use crate::gateway::{ChatMessage, ChatRequest, ChatRole, Gateway, GatewayError};

/// Required prefix of every stored scenario text.
pub const SCENARIO_PREFIX: &str = "interacting with a chatbot to";

/// Soft word budget for the scenario summary (flagged, not fatal).
pub const SCENARIO_WORD_LIMIT: usize = 20;

/// Soft word budget for a persona noun phrase.
pub const PERSONA_WORD_LIMIT: usize = 10;

pub const PERSONAS_PER_SCENARIO: usize = 5;

/// Default dialogue count per scenario-extraction batch.
pub const DEFAULT_BATCH_SIZE: usize = 10;

/// Default per-dialogue character budget before tail truncation.
pub const DEFAULT_DIALOGUE_CHAR_BUDGET: usize = 24_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("empty-batch")]
    EmptyBatch,
    #[error("batch exceeds configured max of {0}")]
    BatchTooLarge(usize),
    #[error("oversize-dialogue: {0}")]
    OversizeDialogue(String),
    #[error("missing-scenario: {0:?}")]
    MissingScenarios(Vec<String>),
    #[error("persona-generation-failed for scenario {0}")]
    PersonaGenerationFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dialogue_id: String,
    pub text: String,
    pub word_count: usize,
    /// Soft-violation flags ("prefix-wrapped", "over-word-limit", "truncated-input").
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl Scenario {
    pub fn new(dialogue_id: &str, raw_text: &str) -> Scenario {
        let trimmed = raw_text.trim();
        let mut flags = Vec::new();
        let text = if trimmed.starts_with(SCENARIO_PREFIX) {
            trimmed.to_string()
        } else {
            flags.push("prefix-wrapped".to_string());
            format!("{SCENARIO_PREFIX} {trimmed}")
        };
        let body = text[SCENARIO_PREFIX.len()..].trim();
        let word_count = body.split_whitespace().count();
        if word_count > SCENARIO_WORD_LIMIT {
            flags.push("over-word-limit".to_string());
        }
        Scenario { dialogue_id: dialogue_id.to_string(), text, word_count, flags }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub scenario_id: String,
    pub rank: usize,
    pub text: String,
}

/// Persona selection from a scenario's five candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersonaSelection {
    First,
    SeededRandom,
}

const SCENARIO_TEMPLATE_HEADER: &str = r#"TASK CONTEXT
You are given a set of conversation logs between an user and a chatbot. Your task is to read the conversation logs and then write a summary for each conversation log describing what the USER is trying to accomplish in that interaction with the chatbot.

DETAILED TASK INSTRUCTIONS
For each of the provided conversation logs:
Step 1. Read all messages, paying special attention to USER messages.
Step 2. Determine what the USER is trying to accomplish through interacting with the CHATBOT.
Step 3. Summarize what the USER is trying to accomplish in less than 20 words. Format the summary so it starts with "interacting with a chatbot to". Stay succinct and do not include personal details about the user.
Step 4. Structure all summaries in the output format described below.

OUTPUT FORMAT
Output your answer in lines, with the conversation ID and the summary separated by a colon. Here is an example of the output format:
abcde00000: interacting with a chatbot to learn about mutual funds
abcde11111: interacting with a chatbot to plan a trip to New York City
abcde22222: interacting with a chatbot to brainstorm titles for their novel

EXAMPLE INPUT BATCH:
conv_ID: abcde00000
USER: Give me some recipes with chicken.

CHATBOT: Here's 3 recipes that you can try...

USER: More

CHATBOT: Here's another recipe that you can try...

USER: I want spicy dish

CHATBOT: Here's a recipe for spicy fried chicken...

conv_ID: abcde11111
USER: How long does it take to go from Boston to New York City by train?

CHATBOT: A train ride from Boston to New York City is approximately...

USER: Thanks, book me a ticket for Monday morning. I have a business meeting at 11AM.

CHATBOT: I'm sorry, as a language model, I cannot...

USER: Is there a train running Monday morning

CHATBOT: I'm sorry, as a language model, I cannot...

conv_ID: abcde22222
USER: how i identify poison ivy.

CHATBOT: Poison ivies are commonly characterized by clusters of three leaves...

USER: i think i have it in my garden my neighbor also has them

CHATBOT: If you suspect having poison ivy in your garden, it is best to contact...

USER: can i just get rid of it myself

CHATBOT: You can get rid of poison ivy permanently by using...

EXAMPLE OUTPUT:
abcde00000: interacting with a chatbot to discover chicken recipes
abcde11111: interacting with a chatbot to book a train ride from Boston to New York City.
abcde22222: interacting with a chatbot to learn about controlling poison ivy in their garden.

Now it's your turn.

INPUT BATCH:
"#;

const PERSONA_SYSTEM_PROMPT: &str = "You are a helpful AI assistant, particularly skilled at \
writing creative, diverse personas in the form of characteristics of humans. These characteristics \
describe a user's personality, identity, characteristics, likes and dislikes, social life and other \
information.";

fn persona_user_prompt(scenario: &Scenario) -> String {
    format!(
        "Generate five distinct persona describing people who would realistically be {}. Make sure \
that each persona is a concise noun phrase of less than 10 words. The generated personas should be \
different from one another.\n\n\
Example: personas who would realistically be interacting with a chatbot to draft an email to \
reschedule their meeting:\n\
1. a highschool student with a doctor's appointment\n\
2. a college student with conflicting class schedule\n\
3. a manager who is leading a team of 30 people\n\
4. a busy parent with a sick child\n\
5. a traveling businessman with a delayed flight",
        scenario.text
    )
}

/// Renders one dialogue transcript under its `conv_ID:` header, with tail
/// truncation at `char_budget`. Returns `(text, truncated)`.
fn render_dialogue(d: &Dialogue, char_budget: usize) -> (String, bool) {
    let mut body = String::new();
    for t in &d.turns {
        let speaker = match t.role {
            Role::User => "USER",
            Role::Chatbot => "CHATBOT",
        };
        body.push_str(&format!("{speaker}: {}\n\n", t.text));
    }
    let mut truncated = false;
    if body.len() > char_budget {
        let mut cut = char_budget;
        while !body.is_char_boundary(cut) {
            cut -= 1;
        }
        body.truncate(cut);
        body.push_str("\n[transcript truncated]\n");
        truncated = true;
    }
    (format!("conv_ID: {}\n{body}", d.id), truncated)
}

/// Settings for the scenario-extraction call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: String,
    pub batch_size: usize,
    pub dialogue_char_budget: usize,
    pub temperature: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            model: "gpt-4o-mini".into(),
            batch_size: DEFAULT_BATCH_SIZE,
            dialogue_char_budget: DEFAULT_DIALOGUE_CHAR_BUDGET,
            temperature: 0.0,
        }
    }
}

/// Builds the batched summarization request. Dialogues over the char budget
/// are accepted only as singleton batches (tail-truncated, flagged).
pub fn build_scenario_batch_prompt(
    dialogues: &[&Dialogue],
    cfg: &ScenarioConfig,
) -> Result<ChatRequest, ScenarioError> {
    if dialogues.is_empty() {
        return Err(ScenarioError::EmptyBatch);
    }
    if dialogues.len() > cfg.batch_size {
        return Err(ScenarioError::BatchTooLarge(cfg.batch_size));
    }
    let mut batch = String::new();
    for d in dialogues {
        let (text, truncated) = render_dialogue(d, cfg.dialogue_char_budget);
        if truncated && dialogues.len() > 1 {
            return Err(ScenarioError::OversizeDialogue(d.id.clone()));
        }
        batch.push_str(&text);
        batch.push('\n');
    }
    let prompt = format!("{SCENARIO_TEMPLATE_HEADER}{batch}\nOUTPUT:\n");
    Ok(ChatRequest::new(
        cfg.model.clone(),
        vec![ChatMessage::new(ChatRole::User, prompt)],
        cfg.temperature,
    ))
}

/// Total parser for scenario completions: lines split on the first colon.
/// Returns parsed scenarios for expected ids, the list of missing expected
/// ids, and warnings for ignored unexpected ids.
pub fn parse_scenario_output(
    text: &str,
    expected_ids: &BTreeSet<String>,
) -> (BTreeMap<String, Scenario>, Vec<String>, Vec<String>) {
    let mut parsed = BTreeMap::new();
    let mut warnings = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((id, summary)) = line.split_once(':') else {
            continue;
        };
        let id = id.trim();
        if id.contains(char::is_whitespace) {
            continue; // not an "id: summary" line
        }
        if !expected_ids.contains(id) {
            warnings.push(format!("ignored line for unexpected id {id:?}"));
            continue;
        }
        parsed.insert(id.to_string(), Scenario::new(id, summary));
    }
    let missing: Vec<String> = expected_ids
        .iter()
        .filter(|id| !parsed.contains_key(*id))
        .cloned()
        .collect();
    (parsed, missing, warnings)
}

/// Parses a numbered persona list ("1." through "5.").
pub fn parse_persona_output(text: &str, scenario_id: &str) -> Vec<Persona> {
    let mut personas = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let Some(dot) = line.find('.') else { continue };
        let Ok(rank) = line[..dot].trim().parse::<usize>() else {
            continue;
        };
        if !(1..=PERSONAS_PER_SCENARIO).contains(&rank) {
            continue;
        }
        let body = line[dot + 1..].trim();
        if body.is_empty() || personas.iter().any(|p: &Persona| p.rank == rank) {
            continue;
        }
        personas.push(Persona {
            scenario_id: scenario_id.to_string(),
            rank,
            text: body.to_string(),
        });
    }
    personas.sort_by_key(|p| p.rank);
    personas
}

/// Requests five personas for a scenario, retrying with fresh samples up to
/// `max_attempts` when fewer than five parse.
pub fn generate_personas(
    gateway: &Gateway,
    scenario: &Scenario,
    model: &str,
    max_attempts: u32,
) -> Result<Vec<Persona>, ScenarioError> {
    for attempt in 0..max_attempts {
        let mut req = ChatRequest::new(
            model,
            vec![
                ChatMessage::new(ChatRole::System, PERSONA_SYSTEM_PROMPT),
                ChatMessage::new(ChatRole::User, persona_user_prompt(scenario)),
            ],
            1.0,
        );
        if attempt > 0 {
            req.attempt_salt = Some(attempt as u64);
        }
        let completion = gateway.chat_complete(&req)?;
        let personas = parse_persona_output(&completion, &scenario.dialogue_id);
        if personas.len() == PERSONAS_PER_SCENARIO {
            return Ok(personas);
        }
    }
    Err(ScenarioError::PersonaGenerationFailed(
        scenario.dialogue_id.clone(),
    ))
}

/// Deterministic persona choice: rank-1, or uniform under the run seed.
pub fn select_persona(personas: &[Persona], policy: PersonaSelection, seed: u64) -> &Persona {
    assert!(!personas.is_empty(), "persona list must be non-empty");
    match policy {
        PersonaSelection::First => personas
            .iter()
            .min_by_key(|p| p.rank)
            .expect("non-empty list"),
        PersonaSelection::SeededRandom => {
            // derive a per-scenario stream so choices are independent across scenarios
            let mut hasher = Sha256::new();
            hasher.update(seed.to_le_bytes());
            hasher.update(personas[0].scenario_id.as_bytes());
            let h = hasher.finalize();
            let mut rng =
                rand_chacha::ChaCha8Rng::from_seed(h.as_slice().try_into().expect("32 bytes"));
            let idx = rng.random_range(0..personas.len());
            &personas[idx]
        }
    }
}

pub fn save_scenarios(path: &Path, scenarios: &[Scenario]) -> std::io::Result<()> {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&serde_json::to_string(s).expect("scenario serialization"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn load_scenarios(path: &Path) -> std::io::Result<Vec<Scenario>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(s) => out.push(s),
            Err(e) => {
                return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e));
            }
        }
    }
    Ok(out)
}

pub fn save_personas(path: &Path, personas: &[Persona]) -> std::io::Result<()> {
    let mut out = String::new();
    for p in personas {
        out.push_str(&serde_json::to_string(p).expect("persona serialization"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn load_personas(path: &Path) -> std::io::Result<Vec<Persona>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(p) => out.push(p),
            Err(e) => {
                return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e));
            }
        }
    }
    Ok(out)
}

//! Dialogue annotation along the LLM-prompted dimensions (Intent, Feedback,
//! Identity, Knowledge), classifier-based Emotion, and the deterministic
//! text-metric dimensions, persisted as a line-delimited bundle store.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, Provenance, Role};
use crate::gateway::{ChatMessage, ChatRequest, ChatRole, Gateway, GatewayError};
use crate::textmetrics::{flesch_kincaid_grade, mtld, split_sentences, tokenize_words};

pub const INTENT_TAGS: [&str; 9] = [
    "info_retrieval",
    "info_discovery",
    "info_understanding",
    "info_distillation",
    "info_analysis",
    "method_guidance",
    "content_generation",
    "content_modification",
    "system_management",
];

pub const FEEDBACK_TAGS: [&str; 7] = [
    "no_feedback",
    "explicit_positive",
    "explicit_negative",
    "regeneration_request",
    "continuation_request",
    "clarification_request",
    "provide_clarification",
];

/// Non-canonical tag spellings the annotator is known to emit.
pub const FEEDBACK_ALIASES: [(&str, &str); 4] = [
    ("negative_feedback", "explicit_negative"),
    ("positive_feedback", "explicit_positive"),
    ("clarification_provided", "provide_clarification"),
    ("request_clarification", "clarification_request"),
];

/// (canonical key, label used in the prompt/output format)
pub const IDENTITY_CATEGORIES: [(&str, &str); 7] = [
    ("demographic", "Demographic information"),
    ("physical", "Physical information"),
    ("interpersonal", "Interpersonal Relationships"),
    ("general_preferences", "General Preferences"),
    ("past", "Past"),
    ("future", "Future"),
    ("worldview", "Worldview"),
];

pub const EMOTION_NEUTRAL_THRESHOLD: f64 = 0.75;
pub const KNOWS_PREFIX: &str = "the user knows";
pub const GAP_PREFIX: &str = "the user does not know";

pub const DIMENSIONS: [&str; 8] = [
    "intent",
    "feedback",
    "identity",
    "knowledge",
    "emotion",
    "length",
    "linguistic",
    "error",
];

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("annotation failed for {dimension}: {detail}")]
    Failed { dimension: String, detail: String },
    #[error("dialogue has no user turns")]
    NoUserTurns,
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Intent tags for one user turn; an empty tag list is the explicit `none`
/// marker (the turn contained no question or order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentTagSet {
    pub turn_index: usize,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackTag {
    pub turn_index: usize,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    /// category key -> verbatim quotes; absent information is an empty list
    pub categories: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeStatements {
    pub knows: Vec<String>,
    pub gaps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSentence {
    pub turn_index: usize,
    pub sentence_index: usize,
    pub label: String,
    pub raw_confidence: f64,
    pub final_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmotionAnnotation {
    pub sentences: Vec<EmotionSentence>,
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

/// Renders a dialogue as alternating "USER TURN k:" / "CHATBOT TURN k:" lines,
/// numbering each role independently.
pub fn format_conversation_log(d: &Dialogue) -> String {
    let mut user_n = 0usize;
    let mut bot_n = 0usize;
    let mut lines = Vec::with_capacity(d.turns.len());
    for turn in &d.turns {
        match turn.role {
            Role::User => {
                user_n += 1;
                lines.push(format!("USER TURN {user_n}: {}", turn.text));
            }
            Role::Chatbot => {
                bot_n += 1;
                lines.push(format!("CHATBOT TURN {bot_n}: {}", turn.text));
            }
        }
    }
    lines.join("\n")
}

const INTENT_STEP1_HEADER: &str = r#"TASK CONTEXT:
You are given the log of a conversation that a user had with a chatbot. Your task is to first read the conversation history and then determine what type(s) of user intent corresponds to each user turn, if applicable.

As a first step, read each user turn and determine whether the message contains a question or an order to do some task, whether explicit or implicit. If yes, extract and list the substring(s) that corresponds to the question(s) or order(s). If the message does not contain any question or order, simply put "N/A".

Here's an example of the task:
INPUT:
USER TURN 1: I want you to act as a babysitter. You will be responsible for taking care of three active boys aged 4-8 during the evening hours. Their names are Bob, Mark, and Timmy. What activities would you do with the children?
CHATBOT TURN 1: Sure, I would be happy to act as a babysitter... Here are some things I can do to ensure the children are well taken care of: 1. Safety first... 2. Meal and snack preparation... 3. Homework assistance...
USER TURN 2: come up with a play for them to act in
CHATBOT TURN 2: Sure, here's a play script for the three children: ...
USER TURN 3: the words are too hard for a 4yo, make the script simpler.
CHATBOT TURN 3: You're absolutely right. Here's a simpler version of the play...
USER TURN 4: ok, thanks.
CHATBOT TURN 4: You are welcome, let me know how else I can help.
USER TURN 5: The play went really well, I think they all liked it, especially the part where the knight tames the dragon instead of slaying it. That was a creative twist. Now we are having dinner, do you think 4yo is too young for spicy ramen? He really wants to taste some.

OUTPUT:
USER TURN 1: "I want you to act as a babysitter.", "What activities would you do with the children?"
USER TURN 2: "come up with a play for them to act in"
USER TURN 3: "make the script simpler"
USER TURN 4: N/A
USER TURN 5: "do you think 4yo is too young for spicy ramen?"

Now is your turn.
INPUT:
"#;

pub fn intent_step1_prompt(d: &Dialogue) -> String {
    format!("{INTENT_STEP1_HEADER}{}\n\nOUTPUT:", format_conversation_log(d))
}

const INTENT_STEP2_HEADER: &str = r#"Next, for every substring that you have extracted from the user messages, classify the user intent: what is the user trying to accomplish through their question(s) or order(s)? Assign applicable intent tags from the list below to each substring. Go back to the conversation for conversation context if necessary.

#info_retrieval: #info_retrieval applies to where the user asking direct fact question where the focus is on finding a discrete, objective fact (e.g., "What is the population of Tokyo?"). #info_retrieval also applies to concept searches where the user provides the name of a concept or topic as a query, implicitly requesting general information, definition, or facts about it (keyword query like "tokyo"). #info_retrieval also applies to refinding requests where the user believes a specific resource exists but has incomplete information, using partial clues to prompt the model (e.g., "What is the movie with the guy about time travel that came out last year?"). #info_retrieval also applies to unknown-item search where the user provides a definition or description to find the corresponding term (e.g., "what's a word for when the world gets hotter?")

#info_discovery: #info_discovery applies to where when the user aims to explore new or unfamiliar information that the user may not be certain exists. #info_discovery applies to requests for a topic update, where the user is interested in updates or recent developments on a subject (e.g., "What's new in AI research?"). #info_discovery also applies to similarity search where the users seek items that share features with a known reference (e.g., "suggest games similar to Minecraft"). #info_discovery also applies to requests for recommendations or ratings (e.g., "recommend some good restaurants in Mexico City"). #info_discovery also applies to perspective seeking, where explicitly requests one or more viewpoints, opinions, or personal stories on a topic.

#info_understanding: #info_understanding applies to explanation request where the user seeks to understand a process, a cause-and-effect relationship, or the underlying principles of a concept (e.g., "How does climate change happen?", "Why is the sky blue?"). #info_understanding also applies to exemplar request where the user asks for specific instances of a category or concept to make abstract ideas more tangible (e.g., "give me an example of a metaphor")

#info_distillation: #info_distillation applies when the user wants the chatbot to process a body of information to make it more structured, concise, or comprehensible. #info_distillation applies to summarization requests where the user wants the chatbot to condense a topic or user-provided content to its essential points (e.g., "summarize the plot of Hamlet"). #info_distillation also applies to requests for key information identification, where the user seeks to isolate the most significant ideas from a larger body of text (e.g., "list me 5 keywords from this text"). #info_distillation also applies to information structuring requests where the user wants the chatbot to give a new logical schema on unstructured information to make it comprehensible (e.g., "present the pros and cons in a table").

#info_analysis: #info_analysis applies when the user wants the chatbot to produce new insights, judgments, or conclusions. #info_analysis applies to qualitative data analysis which involves examining unstructured, non-numerical data (e.g., "what is the meaning of this text?"). #info_analysis also applies to quantitative data analysis of structured or numerical data to identify trends, correlations, or other statistical insights (e.g., analyze a table of numerical values). #info_analysis also applies to evaluative judgement where the user asks the chatbot to judge the value of someone, something, some ideas or options (e.g., "Should I do this?"). #info_analysis also applies to comparative analysis where the user asks the system to articulate the similarities and differences between two or more specific entities (e.g., "How is X similar to Y? How is X different from Y?"). #info_analysis also applies to when the user asks the chatbot to make inferences or prediction (e.g., "What would happen if global temps rise by 2 degrees?") or explore a hypothetical scenario (e.g., "what if dinosaurs had not gone extinct?").

#method_guidance: #method_guidance applies when the user elicits procedural knowledge from the chatbot. #method_guidance applies to requests of how-to instructions where the user seeks step-by-step guidance on a specific task (e.g., "how do I write a good CV?") #method_guidance also applies to feasibility assessment, where the user wants the chatbot to evaluate the viability of a plan (e.g., "Is it feasible to travel across the country on a bike?". #method_guidance also applies to error identification where the user expects the diagnosis of a problem without yet asking for a solution (e.g., "why is my car making this noise?"). #method_guidance also applies to method recommendation where the user seeks the optimal strategy among various alternatives (e.g., "What's the best way to learn a new language?")

#content_generation: #content_generation applies when the user requests the chatbot to produce novel material. #content_generation applies to creative content generation requests, where the user seeks content with an emphasis on novelty, artistic expression, or socio-emotional contexts (e.g., "come up with a poem about love for a cat"). #content_generation also applies to functional content generation requests, where the user asks for utility-focused content, such as code or an email, where practical application is the dominant goal (e.g., "Generate python code to sort a list"). #content_generation also applies to content extension/insertion request, where the user directs the system to add to existing material or continue an ongoing narrative, reflecting an iterative and collaborative writing process (e.g., "Add a conclusion to this paper.")

#content_modification: #content_modification applies to when the user provides raw material (either their own or a prior system generation) and instructs the system to alter it. #content_modification applies to requests for editing, where the user seeks improvements to the grammar, style, or structure of provided content to improve its quality (e.g., "proofread this essay for clarity"). #content_modification also applies to paraphrasing, reformatting or translation requests.

#system_management: #system_management applies when the user wants to probe or direct the system's underlying state, capabilities, or behaviours. #system_management applies to persona directives, where the user assigns the chatbot a specific role or disposition that frames the entire interaction (e.g., "act as a customer service representative"). #system_management also applies to stylistic constraint, where a user dictates the tone, style, format, or length of a response (e.g., "use bullet points", "explain like I'm 5") #system_management also applies system information query, where the user probes the system's abilities, limitations, knowledge sources, or operational state (e.g., "can you access the internet?", "what data were you trained on?").

EXAMPLE:
USER TURN 1: "I want you to act as a babysitter.", "What activities would you do with the children?"
USER TURN 2: "come up with a play for them to act in"
USER TURN 3: "make the script simpler"
USER TURN 4: N/A
USER TURN 5: "do you think 4yo is too young for spicy ramen?"

OUTPUT:
USER TURN 1: #system_management, #method_guidance
USER TURN 2: #content_generation
USER TURN 3: #content_modification
USER TURN 4: N/A
USER TURN 5: #info_analysis

Now it's your turn, using your previous reply as input:
"#;

pub fn intent_step2_prompt(step1_output: &str) -> String {
    format!("{INTENT_STEP2_HEADER}{}\n\nOUTPUT:", step1_output.trim())
}

const FEEDBACK_HEADER: &str = r#"TASK CONTEXT
You are given multiple conversations that users have with a chatbot. For each conversation, your task is to first read the conversation history and then determine, for each USER message, whether the USER has given feedback to the chatbot, and if so, what type(s) of feedback has the USER given.

DETAILED TASK INSTRUCTIONS
For each conversation in the input batch:
For each message, first determine whether the user has provided feedback to the chatbot. If the user has not provided feedback, assign the tag of #no_feedback. If yes, determine what type of feedback the USER has provided by answering the following questions and assigning feedback type tag(s) accordingly. Each message may have more than one tag, so consider every question carefully.

**Explicit Positive Feedback**: is the user explicitly providing positive feedback by approving, complimenting or praising the chatbot, the chatbot response, or parts of the chatbot response? For example, the user telling the chatbot "good job", "well done", or providing more specific positive feedback like "your answer was very clear" or "I love your last suggestion." If the user is explicitly providing positive feedback, assign the tag of #explicit_positive.

**Explicit Negative Feedback**: is the user explicitly providing negative feedback by disapproving, criticizing or reproaching the chatbot, the chatbot response, or parts of the chatbot response? For example, the user telling the chatbot "wrong", "you're bad", or providing more specific positive feedback like "what you wrote sounds too robotic" or "you made a calculation mistake." If the user is explicitly providing negative feedback, assign the tag of #explicit_negative.

**Regeneration Request**: is the user requesting the chatbot to partially or completely redo a previous, unsatisfactory output? For example, the user telling the chatbot "do better than that", "try that again", requesting regeneration with more specific instructions like "do that again, but write more casually", or repeating mostly or entirely the content of a previous user request (e.g., the user telling the chatbot "write an apology email for missing meeting due to road traffic" at user turn #1 and repeating with small edit "write an apology email for missing meeting due to car accident" at user turn #2. If the user is requesting the chatbot to partially or completely regenerate a previous chatbot output, assign the tag of #regeneration_request.

**Continuation Request**: is the user requesting the chatbot to continue when the chatbot seems incomplete or interrupted? For example, the user telling the chatbot "keep going", "finish the list", or "more". If the user is requesting the chatbot to continue a previous chatbot output, assign the tag of #continuation_request.

**Requesting Clarification**: is the user indicating that they did not understand the chatbot's previous response and asking for it to be rephrased or explained differently? For example, the user telling the chatbot "what did you mean by that?", "I'm confused about your last point, please re-explain". If the user is requesting the chatbot to clarify a previous chatbot output, assign the tag of #clarification_request.

**Providing Clarification**: is the user providing additional information to resolve an ambiguity in their own previous input or to correct a misunderstanding by the chatbot? For example, the chatbot might provide information about a movie adaptation when the user was looking for information on the original novel series, and the user could clarify: "no I meant the book, not the movie." If the user is providing clarification to the chatbot to resolve ambiguity or misunderstandings, assign the tag of #provide_clarification.

Note that an user message can have more than one applicable feedback type tag. For example, the user saying "that was incorrect, do it again." is both #explicit_negative and #regeneration_request. For each tag you have assigned, revisit the entire conversation to ensure its accuracy. Revisit the questions above to make that you have not missed any tag. If the user has not provided feedback, assign the tag of #no_feedback. If an USER message is empty or does not have any applicable feedback type tag to be assigned, also assign the tag of #no_feedback.

Finally, output the tags following the output format provided below.

OUTPUT FORMAT
For each USER turn, output the turn number followed by the feedback type tag(s) associated to the turn. If there is more than one tag that applies to a turn, separate the tags with a comma. Here is an example showing the format:

USER TURN 1: #no_feedback
USER TURN 2: #no_feedback
USER TURN 3: #clarification_request
USER TURN 4: #regeneration_request
USER TURN 5: #explicit_positive

EXAMPLE:
INPUT:
USER TURN 1: I want you to act as a babysitter. You will be responsible for [...] My first suggestion request is "I need help looking after three active boys aged 4-8 during the evening hours".
CHATBOT TURN 1: Sure, I would be happy to act as a babysitter... Here are some things I can do to ensure the children are well taken care of: 1. Safety first... 2. Meal and snack preparation... 3. Homework assistance...
USER TURN 2: invent a game for two
CHATBOT TURN 2: Sure, here's a game idea for two players: Game Name: Word Chain...Objective: create a chain of words that are related to each other, while trying to stump the other player...
USER TURN 3: it's hard for a 4yo...
CHATBOT TURN 3: You're absolutely right. Here's a simpler game idea for a 4-year-old...

OUTPUT:
USER TURN 1: #no_feedback
USER TURN 2: #no_feedback
USER TURN 3: #negative_feedback

Now it's your turn.

INPUT:
"#;

pub fn feedback_prompt(d: &Dialogue) -> String {
    format!("{FEEDBACK_HEADER}{}\n\nOUTPUT:", format_conversation_log(d))
}

const IDENTITY_HEADER: &str = r#"TASK CONTEXT
You are given multiple conversations that users have with a chatbot. For each conversation, your task is to read the conversation history and extract information that the user is revealing about themselves in the conversation.

DETAILED TASK INSTRUCTIONS
For each conversation in the input batch, extract information that the user is revealing about themselves in the conversation and classify them into the following categories.

**Demographic information**: explicit mentions of the user's age, gender, racial identities, nationalities, occupation, etc. For example, the user mentioning "I'm a doctor", or "I'm turning 21 next month."

**Physical information**: explicit mentions of the user's physical characteristics such as body type, height and weight, or, explicit mentions of the user's physical conditions such as diseases, allergies, and disabilities. For example, the user mentioning "I have an allergy to seafood", or "I have diabetes".

**Interpersonal Relationships**: explicit mentions of the user's family, friends, classmates, mentors, employers, coworkers, clients, etc. For example, the user mentioning "I need to send this to my manager" (the user has a manager), or "my child hates kindergarten" (the user has a child).

**General Preferences**: explicit mentions of the user's general preferences, likes and dislikes. For example, the user mentioning "I don't like running", "I love visiting museums", or "my favorite music genre is punk rock".

**Past**: explicit mentions of past events that happened to the user, or past activities the user had done in the past. For example, the user mentioning "I went to that restaurant before and I didn't like it", or "I often struggle to stay awake in the morning".

**Future**: explicit mentions of future plans, events, or activities that the user is envisioning during the conversation. For example, the user mentioning "I look forward to the trip", or "I'll go back to school in a month".

**Worldview**: explicit mentions of the user's beliefs, cultural views, political views, or religious affiliation. For example, the user explicitly labelling their worldview like "as a Christian, I...", or the user reacting "I don't think that's right" to something on news, or making statements like "people shouldn't act this way.

Put your answers into the following output format. If you are unable to extract any of the relevant information, put "None". Do NOT explain your answers. Do NOT guess information you are unable to extract.

OUTPUT FORMAT
For each conversation, extract quotes from the USER messages where they reveal information about themselves and classify the information into the below categories. If there is more than one quote that applies to a category, separate them with a comma.

Here is an example showing the format:
Demographic information: "None"
Physical information: "None"
Interpersonal Relationships: "as a parent of two", "I talked to their teacher"
General Preferences: "None"
Past: "I talked to their teacher"
Future: "we will move out of the state in a year or two"
Worldview: "None"

EXAMPLE:
INPUT:
USER TURN 1: I need help looking after three active boys aged 4-8 during the evening hours. Act as a babysitter and tell me what you would do.
CHATBOT TURN 1: Sure, I would be happy to act as a babysitter... Here are some things I can do to ensure the children are well taken care of: 1. Safety first... 2. Meal and snack preparation... 3. Homework assistance...
USER TURN 2: invent a game for two
CHATBOT TURN 2: Sure, here's a game idea for two players: Game Name: Word Chain...Objective: create a chain of words that are related to each other, while trying to stump the other player...
USER TURN 3: it's hard for a 4yo...
CHATBOT TURN 3: You're absolutely right. Here's a simpler game idea for a 4-year-old...

OUTPUT:
Demographic information: "None"
Physical information: "None"
Interpersonal Relationships: "looking after three active boys aged 4-8"
General Preferences: "None"
Past: "None"
Future: "None"
Worldview: "None"

Now it's your turn.

INPUT:
"#;

pub fn identity_prompt(d: &Dialogue) -> String {
    format!("{IDENTITY_HEADER}{}\n\nOUTPUT:", format_conversation_log(d))
}

const KNOWLEDGE_HEADER: &str = r#"TASK CONTEXT
You are given a set of user messages in conversation with a chatbot. Your task is to first read the messages and then write statements about facts or topics that the user knows and does not know about.

DETAILED TASK INSTRUCTIONS.
STEP 1. For each USER message, consider facts or topics that the user **knows**:

- If the user asked questions, pay attention to **presuppositions** contained in their questions (i.e., assumptions that the user hold that are implied by their questions). For example, if the user asks "How long does it take to go from Boston to New York City by train?", it presupposes that they know there is a train service running between Boston and New York City.

- Pay attention to whether the user employed **technical terms** that are indicative of their expertise in specific domains of knowledge. For example, if the user asks "Is Comirnaty administered more than Spikevax in the USA?", using the trade names of the Pfizer-BioNTech COVID-19 vaccine and the Moderna COVID-19 vaccine indicates perhaps a high-level of familiarity with these vaccines, or with COVID-19 vaccine, or with immunization in general.

- Pay attention to **explicit statements of knowledge and expertise** by the user, where the user explicitly states that they know something or that they are experts in some specific domains of knowledge. For example, the user saying "steel is an alloy, not a pure metal" indicates that they know this piece of information.

- Pay attention to whether the user challenges or correct the chatbot's response, which could be indicative of a higher level of knowledge or expertise. For example, the user saying "that clothing brand has been discontinued for years." in response to a product suggestion by the chatbot indicates that they know more about the current status of this clothing brand, and potentially of other similar brands.

STEP 2. For each USER message, consider facts or topics that the user **does not know**:

- If the user asked questions, pay attention to what they are asking for (i.e., what are specific topics or areas where they are lacking knowledge?) For example, if the user asks "Is Comirnaty administered more than Spikevax in the USA?", it means that the user does not know about The statistics of shots administered for Comirnaty and Spikevax in the USA.

- If the user made false statements or ask questions with false presuppositions, pay attention to what they are wrong about (i.e., what are specific topics or areas where they do not have accurate information?) For example, if the user asks "Who is the current King of France?" then they do not know that there is currently no king in France.

STEP 3. Write statements about what the user knows and does not know. List them following the output format provided below.

OUTPUT FORMAT:
For each message turn, write statements about what the user knows and does not know by completing one of the following sentence format:
- the user knows that...
- the user knows about...
- the user does not know that...
- the user does not know about...
If a message turn does not reveal anything about what the user knows or does not know, write "N/A".

EXAMPLE INPUT:
USER TURN #1: How long does it take to go from Boston to New York City by train?
USER TURN #2: Thank you.
USER TURN #3: Is Comirnaty administered more than Spikevax in the USA?
USER TURN #4: Who is the current King of France?
USER TURN #5: Continue your response.

OUTPUT:
USER TURN #1:
- the user knows that there is a train service running between Boston and New York City.
- the user does not know about the time to travel from Boston to New York City by train

USER TURN #2:
N/A

USER TURN #3:
- the user knows about the trade names of the Pfizer-BioNTech COVID-19 vaccine and the Moderna COVID-19 vaccine.
- the user knows that the Comirnaty vaccine is administered in the USA.
- the user knows that the Spikevax vaccine is administered in the USA.
- the user does not know about the total number of shots administered for Comirnaty and Spikevax in the USA.

USER TURN #4:
- the user does not know that there is currently no king in France.

USER TURN #5:
N/A

Now it's your turn.

INPUT:
"#;

pub fn knowledge_prompt(d: &Dialogue) -> String {
    let turns: Vec<String> = d
        .user_turns()
        .enumerate()
        .map(|(i, t)| format!("USER TURN #{}: {}", i + 1, t.text))
        .collect();
    format!("{KNOWLEDGE_HEADER}{}\n\nOUTPUT:", turns.join("\n"))
}

// ---------------------------------------------------------------------------
// Parsers (total: never panic on arbitrary text)
// ---------------------------------------------------------------------------

/// Extracts `(turn_number, rest_of_line)` pairs from "USER TURN k:" lines.
fn turn_lines(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let rest = match line.strip_prefix("USER TURN") {
            Some(r) => r.trim_start(),
            None => continue,
        };
        let rest = rest.strip_prefix('#').unwrap_or(rest);
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            continue;
        }
        let Some(after) = rest[digits.len()..].trim_start().strip_prefix(':') else {
            continue;
        };
        if let Ok(n) = digits.parse::<usize>() {
            out.push((n, after.trim().to_string()));
        }
    }
    out
}

fn is_na(s: &str) -> bool {
    let t = s.trim().trim_matches('"').trim_matches('.');
    t.eq_ignore_ascii_case("N/A") || t.eq_ignore_ascii_case("NA") || t.eq_ignore_ascii_case("none")
}

/// Pulls `#tag` tokens out of a line, lowercased without the hash.
fn hash_tags(line: &str) -> Vec<String> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(|tok| tok.trim().strip_prefix('#'))
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Step-1 validation: every user turn must have a line (substrings or N/A).
pub fn parse_intent_step1(
    text: &str,
    n_turns: usize,
) -> Result<Vec<(usize, String)>, String> {
    let lines = turn_lines(text);
    let mut seen = vec![false; n_turns];
    for (n, _) in &lines {
        if *n >= 1 && *n <= n_turns {
            seen[n - 1] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format!("missing line for USER TURN {}", missing + 1));
    }
    Ok(lines)
}

/// Step-2 parse: one tag set per user turn; unknown tags dropped with a
/// warning; "N/A" or an emptied tag list becomes the `none` marker.
pub fn parse_intent_step2(
    text: &str,
    n_turns: usize,
) -> Result<(Vec<IntentTagSet>, Vec<String>), String> {
    let lines = turn_lines(text);
    let mut warnings = Vec::new();
    let mut by_turn: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (n, rest) in lines {
        if n < 1 || n > n_turns {
            warnings.push(format!("intent line for out-of-range turn {n} ignored"));
            continue;
        }
        if by_turn.contains_key(&n) {
            warnings.push(format!("duplicate intent line for turn {n} ignored"));
            continue;
        }
        let tags = if is_na(&rest) {
            Vec::new()
        } else {
            let mut kept = Vec::new();
            for tag in hash_tags(&rest) {
                if INTENT_TAGS.contains(&tag.as_str()) {
                    if !kept.contains(&tag) {
                        kept.push(tag);
                    }
                } else {
                    warnings.push(format!("unknown intent tag #{tag} dropped (turn {n})"));
                }
            }
            kept
        };
        by_turn.insert(n, tags);
    }
    let mut out = Vec::with_capacity(n_turns);
    for n in 1..=n_turns {
        match by_turn.remove(&n) {
            Some(tags) => out.push(IntentTagSet { turn_index: n, tags }),
            None => return Err(format!("missing intent line for USER TURN {n}")),
        }
    }
    Ok((out, warnings))
}

fn canonical_feedback_tag(tag: &str) -> Option<String> {
    if FEEDBACK_TAGS.contains(&tag) {
        return Some(tag.to_string());
    }
    FEEDBACK_ALIASES
        .iter()
        .find(|(alias, _)| *alias == tag)
        .map(|(_, canon)| canon.to_string())
}

pub fn parse_feedback(
    text: &str,
    n_turns: usize,
) -> Result<(Vec<FeedbackTag>, Vec<String>), String> {
    let mut warnings = Vec::new();
    let mut by_turn: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (n, rest) in turn_lines(text) {
        if n < 1 || n > n_turns {
            warnings.push(format!("feedback line for out-of-range turn {n} ignored"));
            continue;
        }
        if by_turn.contains_key(&n) {
            warnings.push(format!("duplicate feedback line for turn {n} ignored"));
            continue;
        }
        let mut tags = Vec::new();
        for raw in hash_tags(&rest) {
            match canonical_feedback_tag(&raw) {
                Some(canon) => {
                    if !tags.contains(&canon) {
                        tags.push(canon);
                    }
                }
                None => warnings.push(format!("unknown feedback tag #{raw} dropped (turn {n})")),
            }
        }
        if tags.is_empty() {
            warnings.push(format!("no recognized feedback tag on turn {n}; using no_feedback"));
            tags.push("no_feedback".into());
        }
        if tags.len() > 1 && tags.iter().any(|t| t == "no_feedback") {
            warnings.push(format!("no_feedback co-occurred with other tags on turn {n}; dropped"));
            tags.retain(|t| t != "no_feedback");
        }
        by_turn.insert(n, tags);
    }
    let mut out = Vec::with_capacity(n_turns);
    for n in 1..=n_turns {
        match by_turn.remove(&n) {
            Some(tags) => out.push(FeedbackTag { turn_index: n, tags }),
            None => return Err(format!("missing feedback line for USER TURN {n}")),
        }
    }
    Ok((out, warnings))
}

/// Splits a quote list on commas that occur outside quotation marks, then
/// strips the surrounding quote characters from each piece.
fn split_quotes(line: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut in_double = false;
    let mut backtick_depth = 0usize;
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' || c == '\u{201c}' || c == '\u{201d}' {
            in_double = !in_double && !(c == '\u{201d}');
            if c == '\u{201d}' {
                in_double = false;
            }
            current.push(c);
        } else if c == '`' && i + 1 < chars.len() && chars[i + 1] == '`' {
            backtick_depth += 1;
            current.push_str("``");
            i += 1;
        } else if c == '\'' && i + 1 < chars.len() && chars[i + 1] == '\'' {
            backtick_depth = backtick_depth.saturating_sub(1);
            current.push_str("''");
            i += 1;
        } else if c == ',' && !in_double && backtick_depth == 0 {
            pieces.push(current.clone());
            current.clear();
        } else {
            current.push(c);
        }
        i += 1;
    }
    pieces.push(current);
    pieces
        .into_iter()
        .map(|p| {
            p.trim()
                .trim_start_matches("``")
                .trim_end_matches("''")
                .trim_matches(|c: char| {
                    c == '"' || c == '\u{201c}' || c == '\u{201d}' || c == '\u{2018}' || c == '\u{2019}'
                })
                .trim()
                .to_string()
        })
        .filter(|p| !p.is_empty())
        .collect()
}

pub fn parse_identity(text: &str) -> Result<(IdentityRecord, Vec<String>), String> {
    let mut record = IdentityRecord::default();
    let warnings = Vec::new();
    for (key, label) in IDENTITY_CATEGORIES {
        let mut found = None;
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix(label) {
                if let Some(value) = rest.trim_start().strip_prefix(':') {
                    found = Some(value.trim().to_string());
                    break;
                }
            }
        }
        let Some(value) = found else {
            return Err(format!("missing category line: {label}"));
        };
        let quotes = if is_na(&value) {
            Vec::new()
        } else {
            let qs = split_quotes(&value);
            qs.into_iter().filter(|q| !q.eq_ignore_ascii_case("none")).collect()
        };
        record.categories.insert(key.to_string(), quotes);
    }
    Ok((record, warnings))
}

/// Fraction of identity quotes that substring-match the dialogue's user text
/// after whitespace normalization. Diagnostic only.
pub fn identity_grounding(record: &IdentityRecord, d: &Dialogue) -> Option<f64> {
    let haystack: String = d
        .user_turns()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let mut total = 0usize;
    let mut grounded = 0usize;
    for quotes in record.categories.values() {
        for q in quotes {
            total += 1;
            let needle = q.split_whitespace().collect::<Vec<_>>().join(" ");
            if haystack.contains(&needle) {
                grounded += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(grounded as f64 / total as f64)
    }
}

pub fn parse_knowledge(text: &str) -> (KnowledgeStatements, Vec<String>) {
    let mut out = KnowledgeStatements::default();
    let mut warnings = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("USER TURN") || is_na(line) || line == "OUTPUT:" {
            continue;
        }
        let stmt = line.strip_prefix('-').unwrap_or(line).trim();
        if stmt.is_empty() {
            continue;
        }
        let lower = stmt.to_lowercase();
        if lower.starts_with(GAP_PREFIX) {
            out.gaps.push(stmt.to_string());
        } else if lower.starts_with(KNOWS_PREFIX) {
            out.knows.push(stmt.to_string());
        } else {
            warnings.push(format!("knowledge line without required prefix dropped: {stmt:?}"));
        }
    }
    (out, warnings)
}

// ---------------------------------------------------------------------------
// Annotation operations
// ---------------------------------------------------------------------------

const FORMAT_REMINDER: &str = "\n\nReminder: follow the OUTPUT format exactly, with one line for every USER TURN, and do not add commentary.";

fn single_turn_chat(
    gateway: &Gateway,
    model: &str,
    prompt: &str,
    salt: Option<u64>,
) -> Result<String, GatewayError> {
    let mut req = ChatRequest::new(
        model,
        vec![ChatMessage::new(ChatRole::User, prompt)],
        0.0,
    );
    req.attempt_salt = salt;
    gateway.chat_complete(&req)
}

/// Two-step intent annotation: substring extraction, then tag assignment in
/// the same annotator conversation. Each step gets one format-reminder
/// re-query before the dialogue is declared failed for this dimension.
pub fn annotate_intent(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
) -> Result<(Vec<IntentTagSet>, Vec<String>), AnnotateError> {
    let n = d.user_turn_count();
    if n == 0 {
        return Err(AnnotateError::NoUserTurns);
    }
    let step1_prompt = intent_step1_prompt(d);
    let mut step1_out = single_turn_chat(gateway, model, &step1_prompt, None)?;
    if parse_intent_step1(&step1_out, n).is_err() {
        let reminded = format!("{step1_prompt}{FORMAT_REMINDER}");
        step1_out = single_turn_chat(gateway, model, &reminded, Some(1))?;
        if let Err(e) = parse_intent_step1(&step1_out, n) {
            return Err(AnnotateError::Failed { dimension: "intent".into(), detail: e });
        }
    }
    let step2_prompt = intent_step2_prompt(&step1_out);
    let base_messages = vec![
        ChatMessage::new(ChatRole::User, step1_prompt.clone()),
        ChatMessage::new(ChatRole::Assistant, step1_out.clone()),
        ChatMessage::new(ChatRole::User, step2_prompt),
    ];
    let req = ChatRequest::new(model, base_messages.clone(), 0.0);
    let step2_out = gateway.chat_complete(&req)?;
    match parse_intent_step2(&step2_out, n) {
        Ok(ok) => Ok(ok),
        Err(_) => {
            let mut messages = base_messages;
            messages.push(ChatMessage::new(ChatRole::Assistant, step2_out));
            messages.push(ChatMessage::new(ChatRole::User, FORMAT_REMINDER.trim()));
            let retry = ChatRequest::new(model, messages, 0.0);
            let second = gateway.chat_complete(&retry)?;
            parse_intent_step2(&second, n)
                .map_err(|e| AnnotateError::Failed { dimension: "intent".into(), detail: e })
        }
    }
}

pub fn annotate_feedback(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
) -> Result<(Vec<FeedbackTag>, Vec<String>), AnnotateError> {
    let n = d.user_turn_count();
    if n == 0 {
        return Err(AnnotateError::NoUserTurns);
    }
    let prompt = feedback_prompt(d);
    let out = single_turn_chat(gateway, model, &prompt, None)?;
    match parse_feedback(&out, n) {
        Ok(ok) => Ok(ok),
        Err(_) => {
            let reminded = format!("{prompt}{FORMAT_REMINDER}");
            let second = single_turn_chat(gateway, model, &reminded, Some(1))?;
            parse_feedback(&second, n)
                .map_err(|e| AnnotateError::Failed { dimension: "feedback".into(), detail: e })
        }
    }
}

pub fn annotate_identity(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
) -> Result<(IdentityRecord, Vec<String>), AnnotateError> {
    if d.user_turn_count() == 0 {
        return Err(AnnotateError::NoUserTurns);
    }
    let prompt = identity_prompt(d);
    let out = single_turn_chat(gateway, model, &prompt, None)?;
    match parse_identity(&out) {
        Ok(ok) => Ok(ok),
        Err(_) => {
            let reminded = format!("{prompt}{FORMAT_REMINDER}");
            let second = single_turn_chat(gateway, model, &reminded, Some(1))?;
            parse_identity(&second)
                .map_err(|e| AnnotateError::Failed { dimension: "identity".into(), detail: e })
        }
    }
}

pub fn annotate_knowledge(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
) -> Result<(KnowledgeStatements, Vec<String>), AnnotateError> {
    if d.user_turn_count() == 0 {
        return Err(AnnotateError::NoUserTurns);
    }
    let prompt = knowledge_prompt(d);
    let out = single_turn_chat(gateway, model, &prompt, None)?;
    Ok(parse_knowledge(&out))
}

pub fn annotate_emotion(
    gateway: &Gateway,
    d: &Dialogue,
) -> Result<EmotionAnnotation, AnnotateError> {
    let mut sentences = Vec::new();
    for (ti, turn) in d.user_turns().enumerate() {
        for (si, sentence) in split_sentences(&turn.text).into_iter().enumerate() {
            if sentence.trim().is_empty() {
                continue;
            }
            let res = gateway.classify_emotion(&sentence)?;
            let final_label = if res.confidence >= EMOTION_NEUTRAL_THRESHOLD {
                res.label.clone()
            } else {
                "neutral".to_string()
            };
            sentences.push(EmotionSentence {
                turn_index: ti + 1,
                sentence_index: si + 1,
                label: res.label,
                raw_confidence: res.confidence,
                final_label,
            });
        }
    }
    Ok(EmotionAnnotation { sentences })
}

// ---------------------------------------------------------------------------
// Deterministic dimensions + bundle store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthPayload {
    pub user_turns: usize,
    pub words_per_user_turn: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticPayload {
    pub user_word_count: usize,
    pub mtld: Option<f64>,
    pub fk_grade: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub error_count: usize,
    pub user_word_count: usize,
    pub errors_per_1000_words: f64,
}

pub fn length_payload(d: &Dialogue) -> LengthPayload {
    let words: Vec<usize> = d
        .user_turns()
        .map(|t| tokenize_words(&t.text).len())
        .collect();
    LengthPayload { user_turns: words.len(), words_per_user_turn: words }
}

pub fn linguistic_payload(d: &Dialogue) -> LinguisticPayload {
    let text: String = d
        .user_turns()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let tokens = tokenize_words(&text);
    LinguisticPayload {
        user_word_count: tokens.len(),
        mtld: mtld(&tokens).ok(),
        fk_grade: flesch_kincaid_grade(&text).ok(),
    }
}

pub fn error_payload(gateway: &Gateway, d: &Dialogue) -> Result<ErrorPayload, AnnotateError> {
    let mut errors = 0usize;
    let mut words = 0usize;
    for turn in d.user_turns() {
        errors += gateway.grammar_check(&turn.text)?.len();
        words += tokenize_words(&turn.text).len();
    }
    let rate = if words == 0 {
        0.0
    } else {
        1000.0 * errors as f64 / words as f64
    };
    Ok(ErrorPayload { error_count: errors, user_word_count: words, errors_per_1000_words: rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionStatus {
    Ok,
    Failed,
    Skipped,
}

/// One line of the bundle store: the annotation of one dialogue along one
/// dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleRecord {
    pub dialogue_id: String,
    pub domain: String,
    pub provenance: Provenance,
    pub dimension: String,
    pub status: DimensionStatus,
    pub payload: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// In-memory bundle store keyed by (dialogue id, dimension); last upsert wins.
#[derive(Debug, Default)]
pub struct BundleStore {
    records: BTreeMap<(String, String), BundleRecord>,
}

impl BundleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upsert(&mut self, record: BundleRecord) {
        self.records
            .insert((record.dialogue_id.clone(), record.dimension.clone()), record);
    }

    pub fn get(&self, dialogue_id: &str, dimension: &str) -> Option<&BundleRecord> {
        self.records
            .get(&(dialogue_id.to_string(), dimension.to_string()))
    }

    pub fn records(&self) -> impl Iterator<Item = &BundleRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-dimension (ok, failed, skipped) counts.
    pub fn coverage(&self) -> BTreeMap<String, (usize, usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
        for r in self.records.values() {
            let entry = out.entry(r.dimension.clone()).or_default();
            match r.status {
                DimensionStatus::Ok => entry.0 += 1,
                DimensionStatus::Failed => entry.1 += 1,
                DimensionStatus::Skipped => entry.2 += 1,
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        for record in self.records.values() {
            let line = serde_json::to_string(record)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut store = BundleStore::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: BundleRecord = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::other(format!("bad bundle line: {e}")))?;
            store.upsert(record);
        }
        Ok(store)
    }
}

/// Runs the requested dimensions for one dialogue and upserts one record per
/// dimension; failures are recorded, not propagated.
pub fn annotate_dialogue(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
    dims: &[String],
    store: &mut BundleStore,
) {
    for dim in dims {
        let (status, payload, warnings) = run_dimension(gateway, model, d, dim);
        store.upsert(BundleRecord {
            dialogue_id: d.id.clone(),
            domain: d.domain.clone(),
            provenance: d.provenance.clone(),
            dimension: dim.clone(),
            status,
            payload,
            warnings,
        });
    }
}

fn run_dimension(
    gateway: &Gateway,
    model: &str,
    d: &Dialogue,
    dim: &str,
) -> (DimensionStatus, serde_json::Value, Vec<String>) {
    use serde_json::json;
    match dim {
        "intent" => match annotate_intent(gateway, model, d) {
            Ok((tags, warnings)) => (DimensionStatus::Ok, json!(tags), warnings),
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        "feedback" => match annotate_feedback(gateway, model, d) {
            Ok((tags, warnings)) => (DimensionStatus::Ok, json!(tags), warnings),
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        "identity" => match annotate_identity(gateway, model, d) {
            Ok((record, mut warnings)) => {
                if let Some(g) = identity_grounding(&record, d) {
                    if g < 1.0 {
                        warnings.push(format!("identity quote grounding {g:.2}"));
                    }
                }
                (DimensionStatus::Ok, json!(record), warnings)
            }
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        "knowledge" => match annotate_knowledge(gateway, model, d) {
            Ok((stmts, warnings)) => (DimensionStatus::Ok, json!(stmts), warnings),
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        "emotion" => match annotate_emotion(gateway, d) {
            Ok(e) => (DimensionStatus::Ok, json!(e), vec![]),
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        "length" => (DimensionStatus::Ok, json!(length_payload(d)), vec![]),
        "linguistic" => (DimensionStatus::Ok, json!(linguistic_payload(d)), vec![]),
        "error" => match error_payload(gateway, d) {
            Ok(p) => (DimensionStatus::Ok, json!(p), vec![]),
            Err(e) => (DimensionStatus::Failed, json!({ "error": e.to_string() }), vec![]),
        },
        other => (
            DimensionStatus::Skipped,
            json!({ "error": format!("unknown dimension {other}") }),
            vec![],
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;
    use crate::gateway::mock::ScriptedTransport;
    use crate::gateway::RetryConfig;

    fn dialogue(n_user_turns: usize) -> Dialogue {
        let mut turns = Vec::new();
        for i in 0..n_user_turns {
            turns.push(Turn {
                index: 2 * i + 1,
                role: Role::User,
                text: format!("user message {i} asking about trains."),
            });
            turns.push(Turn {
                index: 2 * i + 2,
                role: Role::Chatbot,
                text: format!("chatbot reply {i}"),
            });
        }
        Dialogue {
            id: "d1".into(),
            domain: "travel_planning".into(),
            provenance: Provenance::Real,
            scenario_id: None,
            turns,
            meta: None,
        }
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
    fn conversation_log_numbering() {
        let d = dialogue(2);
        let log = format_conversation_log(&d);
        assert!(log.contains("USER TURN 1: user message 0"));
        assert!(log.contains("CHATBOT TURN 1: chatbot reply 0"));
        assert!(log.contains("USER TURN 2: user message 1"));
        assert!(log.contains("CHATBOT TURN 2: chatbot reply 1"));
    }

    #[test]
    fn intent_step2_example_output_parses() {
        let text = "USER TURN 1: #system_management, #method_guidance\n\
                    USER TURN 2: #content_generation\n\
                    USER TURN 3: #content_modification\n\
                    USER TURN 4: N/A\n\
                    USER TURN 5: #info_analysis";
        let (sets, warnings) = parse_intent_step2(text, 5).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(sets[0].tags, vec!["system_management", "method_guidance"]);
        assert_eq!(sets[1].tags, vec!["content_generation"]);
        assert_eq!(sets[3].tags, Vec::<String>::new());
        assert_eq!(sets[4].tags, vec!["info_analysis"]);
    }

    #[test]
    fn unknown_intent_tag_dropped() {
        let (sets, warnings) = parse_intent_step2("USER TURN 1: #chitchat", 1).unwrap();
        assert!(sets[0].tags.is_empty());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("chitchat"));
    }

    #[test]
    fn missing_intent_line_is_error() {
        assert!(parse_intent_step2("USER TURN 1: #info_retrieval", 2).is_err());
    }

    #[test]
    fn feedback_alias_normalized() {
        let text = "USER TURN 1: #no_feedback\n\
                    USER TURN 2: #no_feedback\n\
                    USER TURN 3: #negative_feedback";
        let (tags, _) = parse_feedback(text, 3).unwrap();
        assert_eq!(tags[0].tags, vec!["no_feedback"]);
        assert_eq!(tags[2].tags, vec!["explicit_negative"]);
    }

    #[test]
    fn feedback_multi_tag_line() {
        let (tags, _) =
            parse_feedback("USER TURN 1: #explicit_negative, #regeneration_request", 1).unwrap();
        assert_eq!(tags[0].tags, vec!["explicit_negative", "regeneration_request"]);
    }

    #[test]
    fn no_feedback_never_cooccurs() {
        let (tags, warnings) =
            parse_feedback("USER TURN 1: #no_feedback, #explicit_positive", 1).unwrap();
        assert_eq!(tags[0].tags, vec!["explicit_positive"]);
        assert!(!warnings.is_empty());
    }

    #[test]
    fn identity_example_output_parses() {
        let text = "Demographic information: \"None\"\n\
                    Physical information: \"None\"\n\
                    Interpersonal Relationships: \"looking after three active boys aged 4-8\"\n\
                    General Preferences: \"None\"\n\
                    Past: \"None\"\n\
                    Future: \"None\"\n\
                    Worldview: \"None\"";
        let (record, _) = parse_identity(text).unwrap();
        assert_eq!(
            record.categories["interpersonal"],
            vec!["looking after three active boys aged 4-8"]
        );
        assert!(record.categories["worldview"].is_empty());
        assert_eq!(record.categories.len(), 7);
    }

    #[test]
    fn identity_two_quotes_on_one_line() {
        let text = "Demographic information: \"None\"\n\
                    Physical information: \"None\"\n\
                    Interpersonal Relationships: \"as a parent of two\", \"I talked to their teacher\"\n\
                    General Preferences: \"None\"\n\
                    Past: \"I talked to their teacher\"\n\
                    Future: \"we will move out of the state in a year or two\"\n\
                    Worldview: \"None\"";
        let (record, _) = parse_identity(text).unwrap();
        assert_eq!(
            record.categories["interpersonal"],
            vec!["as a parent of two", "I talked to their teacher"]
        );
        assert_eq!(record.categories["past"], vec!["I talked to their teacher"]);
    }

    #[test]
    fn identity_comma_inside_quotes_not_split() {
        let text = "Demographic information: \"I'm a nurse, mostly night shifts\"\n\
                    Physical information: \"None\"\n\
                    Interpersonal Relationships: \"None\"\n\
                    General Preferences: \"None\"\n\
                    Past: \"None\"\n\
                    Future: \"None\"\n\
                    Worldview: \"None\"";
        let (record, _) = parse_identity(text).unwrap();
        assert_eq!(
            record.categories["demographic"],
            vec!["I'm a nurse, mostly night shifts"]
        );
    }

    #[test]
    fn identity_missing_category_is_error() {
        assert!(parse_identity("Demographic information: \"None\"").is_err());
    }

    #[test]
    fn knowledge_example_output_parses() {
        let text = "USER TURN #1:\n\
- the user knows that there is a train service running between Boston and New York City.\n\
- the user does not know about the time to travel from Boston to New York City by train\n\
\n\
USER TURN #2:\n\
N/A\n\
\n\
USER TURN #4:\n\
- the user does not know that there is currently no king in France.";
        let (stmts, warnings) = parse_knowledge(text);
        assert!(warnings.is_empty());
        assert_eq!(stmts.knows.len(), 1);
        assert_eq!(stmts.gaps.len(), 2);
        assert!(stmts.knows[0].starts_with("the user knows that there is a train service"));
        assert!(stmts.gaps[1].contains("no king in France"));
    }

    #[test]
    fn knowledge_unprefixed_line_warned() {
        let (stmts, warnings) = parse_knowledge("- the user might like trains");
        assert!(stmts.knows.is_empty() && stmts.gaps.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn intent_requery_then_fail() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok("garbage".into()));
        t.push_chat(Ok("still garbage".into()));
        let g = gw(t);
        let d = dialogue(2);
        let err = annotate_intent(&g, "m", &d).unwrap_err();
        assert!(matches!(err, AnnotateError::Failed { .. }));
    }

    #[test]
    fn intent_requery_then_success() {
        let t = ScriptedTransport::new();
        t.push_chat(Ok("USER TURN 1: \"q\"\nUSER TURN 2: N/A".into()));
        t.push_chat(Ok("not parseable".into()));
        t.push_chat(Ok("USER TURN 1: #info_retrieval\nUSER TURN 2: N/A".into()));
        let g = gw(t);
        let d = dialogue(2);
        let (sets, _) = annotate_intent(&g, "m", &d).unwrap();
        assert_eq!(sets[0].tags, vec!["info_retrieval"]);
        assert!(sets[1].tags.is_empty());
    }

    #[test]
    fn emotion_thresholding() {
        let t = ScriptedTransport::new();
        t.push_classify(Ok(crate::gateway::EmotionResult {
            label: "joy".into(),
            confidence: 0.91,
        }));
        let g = gw(t);
        let mut d = dialogue(1);
        d.turns[0].text = "This is one sentence.".into();
        let ann = annotate_emotion(&g, &d).unwrap();
        assert_eq!(ann.sentences.len(), 1);
        assert_eq!(ann.sentences[0].final_label, "joy");

        let t = ScriptedTransport::new();
        t.push_classify(Ok(crate::gateway::EmotionResult {
            label: "anger".into(),
            confidence: 0.74,
        }));
        let g = gw(t);
        let ann = annotate_emotion(&g, &d).unwrap();
        assert_eq!(ann.sentences[0].label, "anger");
        assert_eq!(ann.sentences[0].final_label, "neutral");
    }

    #[test]
    fn bundle_store_roundtrip_and_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = BundleStore::new();
        store.upsert(BundleRecord {
            dialogue_id: "d1".into(),
            domain: "finance".into(),
            provenance: Provenance::Real,
            dimension: "length".into(),
            status: DimensionStatus::Ok,
            payload: serde_json::json!({"user_turns": 4}),
            warnings: vec![],
        });
        store.upsert(BundleRecord {
            dialogue_id: "d1".into(),
            domain: "finance".into(),
            provenance: Provenance::Real,
            dimension: "emotion".into(),
            status: DimensionStatus::Failed,
            payload: serde_json::json!({"error": "endpoint down"}),
            warnings: vec![],
        });
        // idempotent re-upsert with a repaired status
        store.upsert(BundleRecord {
            dialogue_id: "d1".into(),
            domain: "finance".into(),
            provenance: Provenance::Real,
            dimension: "emotion".into(),
            status: DimensionStatus::Ok,
            payload: serde_json::json!({"sentences": []}),
            warnings: vec![],
        });
        assert_eq!(store.len(), 2);
        let path = dir.path().join("bundles.jsonl");
        store.save(&path).unwrap();
        let loaded = BundleStore::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let cov = loaded.coverage();
        assert_eq!(cov["emotion"], (1, 0, 0));
        assert_eq!(cov["length"], (1, 0, 0));
    }

    #[test]
    fn deterministic_dimensions() {
        let d = dialogue(2);
        let len = length_payload(&d);
        assert_eq!(len.user_turns, 2);
        assert_eq!(len.words_per_user_turn, vec![6, 6]);
        let ling = linguistic_payload(&d);
        assert_eq!(ling.user_word_count, 12);
        assert!(ling.fk_grade.is_some());
    }
}

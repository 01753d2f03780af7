use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::RecallError;
use crate::remote::{Endpoint, RemoteClient};

pub const MAX_TOPIC_WORDS: usize = 8;

const PRIMARY_MARKERS: [&str; 3] = ["about", "on", "regarding"];
const FALLBACK_MARKER: &str = "to";
const ARTICLES: [&str; 3] = ["the", "a", "an"];
const GENERIC_NOUNS: [&str; 10] = [
    "conversation",
    "conversations",
    "talk",
    "talks",
    "discussion",
    "discussions",
    "podcast",
    "podcasts",
    "chat",
    "topic",
];

const TOPIC_PROMPT: &str = "You extract the topic of a question about a past conversation. \
Reply with the topic only, at most eight words, no punctuation. \
If there is no topic, reply with an empty message.";
const RELEVANCE_PROMPT: &str = "You judge whether a transcript excerpt is about a given topic. \
Answer with a single word: yes or no.";
const SUMMARY_PROMPT: &str = "You summarize conversations a listener missed. \
Write one bullet per missed direction, each of the form \
\"- While you were listening to X (attended direction), you missed (direction): Y\", \
where Y is a one-sentence summary. Mention every missed direction label exactly as given.";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmBackend {
    /// Rule-based topic extraction and template summaries.
    #[default]
    DeterministicStub,
    /// Chat-completions endpoint, called with temperature 0.
    RemoteChat {
        #[serde(flatten)]
        endpoint: Endpoint,
        model: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// A configured [`LlmBackend`].
#[derive(Debug, Clone)]
pub struct Llm {
    backend: LlmBackend,
    client: Option<RemoteClient>,
}

impl Llm {
    pub fn new(backend: LlmBackend) -> Result<Self, RecallError> {
        let client = match &backend {
            LlmBackend::DeterministicStub => None,
            LlmBackend::RemoteChat { endpoint, .. } => Some(RemoteClient::new(endpoint.clone())?),
        };
        Ok(Self { backend, client })
    }

    pub fn stub() -> Self {
        Self {
            backend: LlmBackend::DeterministicStub,
            client: None,
        }
    }

    pub fn is_stub(&self) -> bool {
        matches!(self.backend, LlmBackend::DeterministicStub)
    }

    pub fn backend(&self) -> &LlmBackend {
        &self.backend
    }

    /// One chat-completion round trip; `None` for the stub.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<Option<String>, RecallError> {
        let (LlmBackend::RemoteChat { model, .. }, Some(client)) = (&self.backend, &self.client) else {
            return Ok(None);
        };
        let body = json!({ "model": model, "temperature": 0, "messages": messages });
        let resp = client.post_json(&body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| Some(s.trim().to_string()))
            .ok_or_else(|| RecallError::MalformedResponse("missing choices[0].message.content".into()))
    }

    pub fn extract_topic(&self, query: &str) -> Result<String, RecallError> {
        if query.trim().is_empty() {
            return Err(RecallError::NoTopic);
        }
        match self.chat(&[ChatMessage::system(TOPIC_PROMPT), ChatMessage::user(query)])? {
            None => stub_topic(query).ok_or(RecallError::NoTopic),
            Some(answer) => {
                let cleaned = answer.trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c.is_whitespace());
                let topic = cleaned
                    .split_whitespace()
                    .take(MAX_TOPIC_WORDS)
                    .collect::<Vec<_>>()
                    .join(" ");
                if topic.is_empty() {
                    Err(RecallError::NoTopic)
                } else {
                    Ok(topic)
                }
            }
        }
    }

    /// Yes/no relevance verdict for one excerpt; `None` for the stub.
    pub fn judge_relevance(&self, topic: &str, text: &str) -> Result<Option<bool>, RecallError> {
        let prompt = format!("Topic: {topic}\n\nExcerpt: {text}");
        Ok(self
            .chat(&[ChatMessage::system(RELEVANCE_PROMPT), ChatMessage::user(prompt)])?
            .map(|answer| answer.trim_start().to_ascii_lowercase().starts_with("yes")))
    }

    /// Summary from the remote model; `None` for the stub.
    pub fn summarize(&self, user_prompt: &str) -> Result<Option<String>, RecallError> {
        self.chat(&[ChatMessage::system(SUMMARY_PROMPT), ChatMessage::user(user_prompt)])
    }
}

fn bare(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn ends_clause(word: &str) -> bool {
    word.trim_end_matches(['"', '\'', ')']).ends_with(['.', '?', '!', ',', ';', ':'])
}

/// Rule-based topic: the words after the last "about" / "on" / "regarding"
/// (or, failing those, the last "to") up to the next punctuation, without
/// leading articles or trailing words like "conversation".
pub fn stub_topic(query: &str) -> Option<String> {
    let words: Vec<&str> = query.split_whitespace().collect();
    let last_of = |markers: &[&str]| words.iter().rposition(|w| markers.contains(&bare(w).as_str()));
    let marker = last_of(&PRIMARY_MARKERS).or_else(|| last_of(&[FALLBACK_MARKER]))?;
    if ends_clause(words[marker]) {
        return None;
    }

    let mut picked: Vec<String> = Vec::new();
    for w in &words[marker + 1..] {
        let cleaned = w.trim_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '\'');
        if !cleaned.is_empty() {
            picked.push(cleaned.to_string());
        }
        if ends_clause(w) {
            break;
        }
    }
    while picked.first().is_some_and(|w| ARTICLES.contains(&w.to_lowercase().as_str())) {
        picked.remove(0);
    }
    while picked.len() > 1 && picked.last().is_some_and(|w| GENERIC_NOUNS.contains(&w.to_lowercase().as_str())) {
        picked.pop();
    }
    picked.truncate(MAX_TOPIC_WORDS);
    if picked.is_empty() || picked.iter().all(|w| GENERIC_NOUNS.contains(&w.to_lowercase().as_str())) {
        None
    } else {
        Some(picked.join(" "))
    }
}

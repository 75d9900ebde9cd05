//! Question -> CLIP-style prompt rewriting.
//!
//! The LLM route sends [`REWRITE_TEMPLATE`] plus the question to a chat
//! endpoint (see [`crate::llm`]) and parses the reply with [`parse_llm_output`].
//! [`fallback_extract_prompts`] is the offline substitute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Instruction prepended to every question sent to the rewriting LLM.
pub const REWRITE_TEMPLATE: &str = "Generate a descriptive sentence starting with \"a photo of\" based solely on the key nouns from the following question and its options. Exclude words like \"video,\" \"order,\" and similar terms. The sentence should be concise and describe a single frame image for CLIP's image search.\nQuestion:";

pub const PROMPT_PREFIX: &str = "a photo of";

/// Upper bound on prompts kept from any source.
pub const MAX_PROMPTS: usize = 8;

pub const GENERIC_PROMPT: &str = "a photo of the main subject";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    options: Vec<String>,
}

impl Question {
    pub fn new(text: impl Into<String>, options: Vec<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidQuestion("question text is empty".into()));
        }
        Ok(Self { text, options })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn options(&self) -> &[String] {
        &self.options
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptSource {
    Llm,
    Fallback,
    UserSupplied,
}

/// Non-empty, duplicate-free list of prompts that all start with "a photo of".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    prompts: Vec<String>,
    source: PromptSource,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn has_prefix(s: &str) -> bool {
    s.len() >= PROMPT_PREFIX.len()
        && s.is_char_boundary(PROMPT_PREFIX.len())
        && s[..PROMPT_PREFIX.len()].eq_ignore_ascii_case(PROMPT_PREFIX)
}

impl PromptSet {
    /// Normalizes whitespace and drops repeats, keeping first occurrences.
    pub fn new(prompts: Vec<String>, source: PromptSource) -> Result<Self> {
        let mut kept: Vec<String> = Vec::with_capacity(prompts.len());
        for p in prompts {
            let p = normalize_ws(&p);
            if p.is_empty() {
                return Err(Error::InvalidPrompts("empty prompt".into()));
            }
            if !has_prefix(&p) {
                return Err(Error::InvalidPrompts(format!(
                    "prompt {p:?} does not start with \"{PROMPT_PREFIX}\""
                )));
            }
            if !kept.contains(&p) {
                kept.push(p);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidPrompts("no prompts".into()));
        }
        Ok(Self {
            prompts: kept,
            source,
        })
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn source(&self) -> PromptSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// One prompt per line; the inverse of [`parse_llm_output`].
    pub fn render(&self) -> String {
        self.prompts.join("\n")
    }
}

/// LLM settings that end up in a [`RewriteRequest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    128
}

impl LlmConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub content: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub fn build_rewrite_request(q: &Question, cfg: &LlmConfig) -> RewriteRequest {
    let mut content = String::from(REWRITE_TEMPLATE);
    content.push('\n');
    content.push_str(q.text());
    for opt in q.options() {
        content.push('\n');
        content.push_str(opt);
    }
    RewriteRequest {
        content,
        model: cfg.model.clone(),
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];

/// Strip "-", "*", "•", "1.", "1)", "(1)" style list markers.
fn strip_list_marker(s: &str) -> &str {
    let s = s.trim_start();
    if let Some(rest) = s.strip_prefix(['-', '*', '\u{2022}', '>']) {
        return rest.trim_start();
    }
    let inner = s.strip_prefix('(').unwrap_or(s);
    let digits = inner.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &inner[digits..];
        if let Some(rest) = rest.strip_prefix(['.', ')', ':']) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    s
}

/// Split after `.`, `!` or `?` when followed by whitespace. The terminator
/// stays with its sentence.
fn split_sentences(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            // keep closing quotes attached: `"a photo of x." "a photo of y."`
            let mut end = i + c.len_utf8();
            while let Some(&(j, q)) = chars.peek() {
                if QUOTES.contains(&q) {
                    end = j + q.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().is_some_and(|&(_, n)| n.is_whitespace()) {
                out.push(&line[start..end]);
                start = end;
            }
        }
    }
    out.push(&line[start..]);
    out
}

fn clean_candidate(s: &str) -> String {
    let s = strip_list_marker(s).trim();
    let s = s.trim_matches(QUOTES).trim();
    // `"a photo of x".` leaves a stray quote before the period
    let s = match s.strip_suffix(['.', '!']) {
        Some(body) if body.ends_with(QUOTES) => body.trim_end_matches(QUOTES),
        _ => s,
    };
    normalize_ws(s)
}

/// Pull "a photo of ..." sentences out of free-form LLM output.
pub fn parse_llm_output(raw: &str) -> Result<PromptSet> {
    let mut kept: Vec<String> = Vec::new();
    for line in raw.lines() {
        let line = strip_list_marker(line);
        for sentence in split_sentences(line) {
            let p = clean_candidate(sentence);
            if has_prefix(&p) && p.len() > PROMPT_PREFIX.len() && !kept.contains(&p) {
                kept.push(p);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::PromptParse);
    }
    kept.truncate(MAX_PROMPTS);
    PromptSet::new(kept, PromptSource::Llm)
}

const STOPWORDS: &[&str] = &[
    // excluded by the rewrite instruction itself
    "video", "videos", "clip", "clips", "order", "sequence", "frame", "frames", "scene", "scenes",
    "footage",
    // question scaffolding
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "many", "much",
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "doing",
    "done", "has", "have", "had", "having", "can", "could", "will", "would", "shall", "should",
    "may", "might", "must", "the", "a", "an", "of", "in", "on", "at", "to", "from", "by",
    "with", "without", "for", "about", "into", "onto", "over", "under", "after", "before",
    "during", "between", "through", "and", "or", "but", "not", "no", "nor", "so", "than",
    "then", "there", "here", "this", "that", "these", "those", "it", "its", "they", "them",
    "their", "he", "she", "him", "her", "his", "we", "us", "our", "you", "your", "i", "me",
    "my", "as", "if", "any", "all", "each", "every", "some", "other", "another", "first",
    "last", "next", "following", "above", "below", "up", "down", "out", "off", "again",
    "appear", "appears", "appeared", "appearing", "happen", "happens", "happened",
    "happening", "show", "shows", "shown", "showing", "see", "seen", "sees", "seeing",
    "occur", "occurs", "occurring", "present", "presented", "mentioned", "described",
    "correct", "option", "options", "answer", "question", "time", "times", "number",
    "kind", "type", "thing", "things", "one", "ones", "most", "least",
];

fn with_article(noun: &str) -> String {
    let article = match noun.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    };
    format!("{PROMPT_PREFIX} {article} {noun}")
}

/// "(A) apple", "B. banana", "C) cherry" -> the bare option text.
fn strip_option_label(opt: &str) -> &str {
    let s = opt.trim();
    let mut chars = s.chars();
    let (first, second) = (chars.next(), chars.next());
    match (first, second) {
        (Some('('), Some(c)) if c.is_ascii_alphabetic() && s[2..].starts_with(')') => {
            s[3..].trim_start()
        }
        (Some(c), Some('.' | ')' | ':')) if c.is_ascii_alphabetic() => s[2..].trim_start(),
        _ => s,
    }
}

/// Deterministic stand-in for the LLM: stopword-filtered question words
/// followed by the answer options, one prompt each.
pub fn fallback_extract_prompts(q: &Question) -> PromptSet {
    let mut nouns: Vec<String> = Vec::new();
    let mut push = |n: String| {
        if !n.is_empty() && !nouns.contains(&n) {
            nouns.push(n);
        }
    };
    for word in q
        .text()
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|w| w.trim_matches('-').to_lowercase())
    {
        if word.chars().count() < 2
            || word.chars().all(|c| c.is_ascii_digit())
            || STOPWORDS.contains(&word.as_str())
        {
            continue;
        }
        push(word);
    }
    for opt in q.options() {
        let opt = normalize_ws(strip_option_label(opt).trim_end_matches(['.', '?', '!']));
        if opt.chars().any(char::is_alphabetic) {
            push(opt);
        }
    }

    let prompts: Vec<String> = nouns.iter().take(MAX_PROMPTS).map(|n| with_article(n)).collect();
    let prompts = if prompts.is_empty() {
        vec![GENERIC_PROMPT.to_owned()]
    } else {
        prompts
    };
    PromptSet::new(prompts, PromptSource::Fallback).expect("fallback prompts are well-formed")
}

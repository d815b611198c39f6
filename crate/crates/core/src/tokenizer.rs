//! WordPiece tokenization and sentence-pair encoding.
//!
//! Pre-tokenization lowercases, splits on whitespace and isolates every
//! punctuation character. Each word is then split greedily into the longest
//! vocabulary prefix, with continuation pieces carrying the `##` prefix. A
//! title/body pair is laid out as `[CLS] title [SEP] body [SEP]`, truncated
//! longest-segment-first and padded to a fixed length.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const CONTINUATION: &str = "##";

/// Words longer than this many characters become `[UNK]` without matching.
pub const MAX_WORD_CHARS: usize = 100;

/// Longest supported encoded sequence.
pub const MAX_SEQUENCE: usize = 512;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot read vocabulary {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary lacks special token {0}")]
    MissingSpecialToken(&'static str),
    #[error("token `{token}` appears on lines {first} and {second}")]
    DuplicateToken {
        token: String,
        first: usize,
        second: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    pad: u32,
    unk: u32,
    cls: u32,
    sep: u32,
}

impl Vocabulary {
    /// Builds a vocabulary where each token's id is its position.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Some(prev) = ids.insert(t.clone(), i as u32) {
                return Err(VocabError::DuplicateToken {
                    token: t.clone(),
                    first: prev as usize + 1,
                    second: i + 1,
                });
            }
        }
        let special = |name: &'static str| {
            ids.get(name)
                .copied()
                .ok_or(VocabError::MissingSpecialToken(name))
        };
        Ok(Vocabulary {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            tokens,
            ids,
        })
    }

    pub fn parse(text: &str) -> Result<Self, VocabError> {
        // A trailing newline does not introduce an extra empty token.
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }
    pub fn unk_id(&self) -> u32 {
        self.unk
    }
    pub fn cls_id(&self) -> u32 {
        self.cls
    }
    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep
    }

    /// Newline-delimited file contents, one token per line.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// Builds a small vocabulary from example texts: the four specials, then every
    /// word seen at least `min_count` times, then single characters (plain and `##`)
    /// so any word made of seen characters can still be spelled out.
    pub fn build_from_texts<'a, I>(texts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut chars = std::collections::BTreeSet::new();
        for text in texts {
            for word in pre_tokenize(text) {
                chars.extend(word.chars());
                *counts.entry(word).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        let candidates = words
            .into_iter()
            .map(|(w, _)| w)
            .chain(chars.iter().map(|c| c.to_string()))
            .chain(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        for t in candidates {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        }
        Self::from_tokens(tokens).expect("specials are present and tokens unique")
    }
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Vocabulary::parse(&text)
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3001}'..='\u{3003}' | '¡' | '¿' | '«' | '»'
        )
}

/// Lowercases, splits on whitespace and isolates punctuation characters.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let mut current = String::new();
        for c in lower.chars() {
            if c.is_control() {
                continue;
            }
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Greedy longest-match-first split of one pre-tokenized word.
pub fn wordpiece(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > MAX_WORD_CHARS {
        return vec![vocab.unk_id()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + CONTINUATION.len());
    while start < chars.len() {
        let mut found = None;
        let mut end = chars.len();
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![vocab.unk_id()],
        }
    }
    pieces
}

/// Pre-tokenizes and WordPiece-splits a whole text.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    pre_tokenize(text)
        .iter()
        .flat_map(|w| wordpiece(w, vocab))
        .collect()
}

/// Fixed-length model input for one (title, body) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of positions with mask 1.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Builds an input directly from ids: segment 0 up to and including the first
    /// `sep`, segment 1 afterwards, mask 1 on every given id, padded with `pad`.
    pub fn from_ids(ids: &[u32], sep: u32, pad: u32, max_len: usize) -> Self {
        let mut token_ids = Vec::with_capacity(max_len);
        let mut segment_ids = Vec::with_capacity(max_len);
        let mut segment = 0u8;
        for &id in ids.iter().take(max_len) {
            token_ids.push(id);
            segment_ids.push(segment);
            if id == sep {
                segment = 1;
            }
        }
        let active = token_ids.len();
        token_ids.resize(max_len, pad);
        segment_ids.resize(max_len, 0);
        let mut attention_mask = vec![1u8; active];
        attention_mask.resize(max_len, 0);
        TokenizedInput {
            token_ids,
            segment_ids,
            attention_mask,
        }
    }
}

/// Removes tokens from the end of the longer segment until both fit in `budget`.
/// On a tie the second segment gives way.
pub fn truncate_longest_first(first: &mut Vec<u32>, second: &mut Vec<u32>, budget: usize) {
    while first.len() + second.len() > budget {
        if first.len() > second.len() {
            first.pop();
        } else {
            second.pop();
        }
    }
}

/// Encodes `[CLS] title [SEP] body [SEP]`, truncated and padded to `max_len`.
///
/// Panics if `max_len < 3`.
pub fn encode_pair(title: &str, body: &str, vocab: &Vocabulary, max_len: usize) -> TokenizedInput {
    assert!(max_len >= 3, "max_len must leave room for [CLS] and two [SEP]");
    let mut a = tokenize(title, vocab);
    let mut b = tokenize(body, vocab);
    truncate_longest_first(&mut a, &mut b, max_len - 3);

    let mut token_ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    token_ids.push(vocab.cls_id());
    token_ids.extend_from_slice(&a);
    token_ids.push(vocab.sep_id());
    segment_ids.resize(token_ids.len(), 0);
    token_ids.extend_from_slice(&b);
    token_ids.push(vocab.sep_id());
    segment_ids.resize(token_ids.len(), 1);

    let active = token_ids.len();
    token_ids.resize(max_len, vocab.pad_id());
    segment_ids.resize(max_len, 0);
    let mut attention_mask = vec![1u8; active];
    attention_mask.resize(max_len, 0);
    TokenizedInput {
        token_ids,
        segment_ids,
        attention_mask,
    }
}

/// Joins non-special tokens back into words, merging `##` continuations.
pub fn detokenize(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for &id in ids {
        if vocab.is_special(id) {
            continue;
        }
        let Some(tok) = vocab.token(id) else { continue };
        match tok.strip_prefix(CONTINUATION) {
            Some(rest) if !words.is_empty() => words.last_mut().unwrap().push_str(rest),
            _ => words.push(tok.to_string()),
        }
    }
    words
}

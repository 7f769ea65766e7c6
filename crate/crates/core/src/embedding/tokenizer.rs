//! Byte-level BPE tokenizer compatible with the CLIP text encoder.
//!
//! Captions are lowercased and whitespace-collapsed, split with the CLIP
//! pre-tokenization pattern, mapped byte-wise onto printable code points and
//! merged greedily by merge rank. The last symbol of every word carries the
//! `</w>` end-of-word suffix.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;

use super::BackboneProfile;
use crate::{Error, Result};

const START_TOKEN: &str = "<|startoftext|>";
const END_TOKEN: &str = "<|endoftext|>";
const PAD_ID: i64 = 0;

/// Fixed-length token ids: start marker, caption tokens, end marker, padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<i64>,
    pub effective_length: usize,
}

pub struct ClipTokenizer {
    encoder: HashMap<String, i64>,
    ranks: HashMap<(String, String), usize>,
    byte_symbols: [char; 256],
    pattern: Regex,
    sot: i64,
    eot: i64,
    context_length: usize,
}

/// The reversible byte -> code point table used by byte-level BPE: printable
/// Latin-1 bytes map to themselves, the rest are shifted above U+00FF.
fn byte_symbols() -> [char; 256] {
    let printable = |b: u32| {
        (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b)
    };
    let mut table = ['\0'; 256];
    let mut shift = 0;
    for b in 0..256u32 {
        table[b as usize] = if printable(b) {
            char::from_u32(b).unwrap()
        } else {
            shift += 1;
            char::from_u32(255 + shift).unwrap()
        };
    }
    table
}

impl ClipTokenizer {
    pub fn from_profile(profile: &BackboneProfile) -> Result<Self> {
        Self::from_files(
            &profile.vocab_path,
            &profile.merges_path,
            profile.context_length,
        )
    }

    pub fn from_files(
        vocab_path: &Path,
        merges_path: &Path,
        context_length: usize,
    ) -> Result<Self> {
        let vocab_text = std::fs::read_to_string(vocab_path)
            .map_err(|e| Error::Tokenizer(format!("{}: {e}", vocab_path.display())))?;
        let encoder: HashMap<String, i64> = serde_json::from_str(&vocab_text)
            .map_err(|e| Error::Tokenizer(format!("{}: {e}", vocab_path.display())))?;
        let merges_text = std::fs::read_to_string(merges_path)
            .map_err(|e| Error::Tokenizer(format!("{}: {e}", merges_path.display())))?;
        let mut ranks = HashMap::new();
        for line in merges_text.lines().filter(|l| !l.starts_with("#version")) {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    let rank = ranks.len();
                    ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
                }
                _ if line.trim().is_empty() => {}
                _ => return Err(Error::Tokenizer(format!("bad merge line {line:?}"))),
            }
        }
        let lookup = |t: &str| {
            encoder
                .get(t)
                .copied()
                .ok_or_else(|| Error::Tokenizer(format!("vocabulary lacks {t}")))
        };
        let sot = lookup(START_TOKEN)?;
        let eot = lookup(END_TOKEN)?;
        if context_length < 2 {
            return Err(Error::Tokenizer("context_length must be at least 2".into()));
        }
        let pattern = Regex::new(
            r"(?i)<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|\p{L}+|\p{N}|[^\s\p{L}\p{N}]+",
        )
        .expect("static pattern");
        Ok(ClipTokenizer {
            encoder,
            ranks,
            byte_symbols: byte_symbols(),
            pattern,
            sot,
            eot,
            context_length,
        })
    }

    pub fn start_id(&self) -> i64 {
        self.sot
    }

    pub fn end_id(&self) -> i64 {
        self.eot
    }

    pub fn context_length(&self) -> usize {
        self.context_length
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        if word == START_TOKEN || word == END_TOKEN {
            return vec![word.to_string()];
        }
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        if let Some(last) = symbols.last_mut() {
            last.push_str("</w>");
        }
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min();
            let Some(&best) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self
                        .ranks
                        .get(&(symbols[i].clone(), symbols[i + 1].clone()))
                        == Some(&best)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Caption ids without start/end markers or truncation.
    pub fn encode(&self, text: &str) -> Vec<i64> {
        let cleaned = text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let mut ids = Vec::new();
        for piece in self.pattern.find_iter(&cleaned) {
            let mapped: String = piece
                .as_str()
                .bytes()
                .map(|b| self.byte_symbols[b as usize])
                .collect();
            for symbol in self.bpe(&mapped) {
                // Every single-symbol entry exists in the vocabulary, so a miss
                // can only come from a merge table that disagrees with it.
                if let Some(&id) = self.encoder.get(&symbol) {
                    ids.push(id);
                }
            }
        }
        ids
    }

    pub fn tokenize(&self, caption: &str) -> TokenSequence {
        let body = self.encode(caption);
        let keep = body.len().min(self.context_length - 2);
        let mut ids = Vec::with_capacity(self.context_length);
        ids.push(self.sot);
        ids.extend_from_slice(&body[..keep]);
        ids.push(self.eot);
        let effective_length = ids.len();
        ids.resize(self.context_length, PAD_ID);
        TokenSequence {
            ids,
            effective_length,
        }
    }
}

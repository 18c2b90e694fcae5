//! Word-level vocabulary with fixed special tokens, and the
//! tokenize/detokenize pair built on it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{CorpusError, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const MASK_ID: usize = 3;
pub const BOS_ID: usize = 4;
pub const EOS_ID: usize = 5;

pub const SPECIAL_TOKENS: [&str; 6] = ["<pad>", "<unk>", "<cls>", "<mask>", "<bos>", "<eos>"];

/// Lowercase, punctuation-separating word tokenizer. Emote markup
/// `<emote:NAME>` stays a single token with its case preserved.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };
    while i < chars.len() {
        // Emote markup is atomic.
        if chars[i] == '<' {
            let rest: String = chars[i..].iter().take(8).collect();
            if rest.to_lowercase().starts_with("<emote:") {
                if let Some(end) = chars[i..].iter().position(|c| *c == '>') {
                    flush(&mut word, &mut tokens);
                    let emote: String = chars[i..i + end + 1].iter().collect();
                    tokens.push(emote);
                    i += end + 1;
                    continue;
                }
            }
        }
        let c = chars[i];
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(c.to_string());
        }
        i += 1;
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Token/id bijection with the six special tokens pinned at ids 0–5.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut token_to_id = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(CorpusError::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { token_to_id, id_to_token: tokens })
    }

    /// Build from a text iterator: tokens with frequency ≥ `min_freq`,
    /// capped at `max_size` total entries including the specials.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        min_freq: usize,
        max_size: usize,
    ) -> Result<Self> {
        if max_size < SPECIAL_TOKENS.len() {
            return Err(CorpusError::Parameter(format!(
                "vocabulary cap {max_size} below the {} special tokens",
                SPECIAL_TOKENS.len()
            )));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for token in normalize_tokens(text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().take(max_size - tokens.len()).map(|(t, _)| t));
        Self::from_tokens(tokens)
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.id_to_token
            .get(id)
            .map(|s| s.as_str())
            .ok_or(CorpusError::IndexOutOfRange(id, self.id_to_token.len()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.id_to_token.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        let tokens: Vec<String> = content.lines().map(|l| l.to_string()).collect();
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(CorpusError::Format("vocabulary file shorter than the specials".into()));
        }
        for (i, expect) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *expect {
                return Err(CorpusError::Format(format!(
                    "vocabulary line {i} is {:?}, expected {expect:?}",
                    tokens[i]
                )));
            }
        }
        Self::from_tokens(tokens)
    }
}

/// A fixed-length id sequence; padding only as a suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn padding_only(len: usize) -> Self {
        TokenSequence { ids: vec![PAD_ID; len] }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn non_pad_len(&self) -> usize {
        self.ids.iter().take_while(|id| **id != PAD_ID).count()
    }

    pub fn is_padding_only(&self) -> bool {
        self.ids.iter().all(|id| *id == PAD_ID)
    }
}

/// Tokenize a context comment: normalized word ids, truncated and
/// PAD-suffixed to `max_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let mut ids: Vec<usize> =
        normalize_tokens(text).iter().take(max_len).map(|t| vocab.id(t)).collect();
    ids.resize(max_len, PAD_ID);
    TokenSequence { ids }
}

/// Tokenize a response comment: BOS + prefix of `max_len - 2` word ids +
/// EOS, PAD-suffixed to `max_len`.
pub fn tokenize_response(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(CorpusError::Parameter(format!(
            "response length {max_len} leaves no room for BOS/EOS and a token"
        )));
    }
    let mut ids = vec![BOS_ID];
    ids.extend(normalize_tokens(text).iter().take(max_len - 2).map(|t| vocab.id(t)));
    ids.push(EOS_ID);
    ids.resize(max_len, PAD_ID);
    Ok(TokenSequence { ids })
}

/// Invert tokenization: known non-special ids joined by single spaces.
pub fn detokenize(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::new();
    for &id in ids {
        let token = vocab.token(id)?;
        if !SPECIAL_TOKENS.contains(&token) {
            words.push(token);
        }
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_separates_punctuation_and_lowercases() {
        // Stated rules applied by hand: lowercase, punctuation split off.
        assert_eq!(normalize_tokens("Cheese Pizza!"), ["cheese", "pizza", "!"]);
    }

    #[test]
    fn emote_markup_is_one_token() {
        assert_eq!(normalize_tokens("<emote:Kappa> hi"), ["<emote:Kappa>", "hi"]);
    }

    fn toy_vocab() -> Vocabulary {
        let texts = ["cheese pizza ! cheese pizza", "hi hi <emote:Kappa> <emote:Kappa> red dragon red dragon"];
        Vocabulary::build(texts, 2, 64).unwrap()
    }

    #[test]
    fn specials_sit_at_fixed_ids() {
        let v = toy_vocab();
        assert_eq!(v.token(PAD_ID).unwrap(), "<pad>");
        assert_eq!(v.token(EOS_ID).unwrap(), "<eos>");
        assert_eq!(v.id("<mask>"), MASK_ID);
    }

    #[test]
    fn oov_maps_to_unk_and_padding_is_suffix() {
        let v = toy_vocab();
        let seq = tokenize("cheese zebra", &v, 5);
        assert_eq!(seq.ids[0], v.id("cheese"));
        assert_eq!(seq.ids[1], UNK_ID);
        assert_eq!(&seq.ids[2..], [PAD_ID; 3]);
    }

    #[test]
    fn response_wrapping_uses_bos_eos() {
        let v = toy_vocab();
        let seq = tokenize_response("cheese pizza", &v, 6).unwrap();
        assert_eq!(seq.ids[0], BOS_ID);
        assert_eq!(seq.ids[3], EOS_ID);
        assert_eq!(&seq.ids[4..], [PAD_ID; 2]);
    }

    #[test]
    fn truncation_keeps_the_prefix() {
        let v = toy_vocab();
        let seq = tokenize_response("cheese pizza hi red dragon", &v, 4).unwrap();
        assert_eq!(seq.ids, [BOS_ID, v.id("cheese"), v.id("pizza"), EOS_ID]);
    }

    #[test]
    fn round_trip_on_in_vocab_text() {
        let v = toy_vocab();
        for text in ["cheese pizza", "hi <emote:Kappa> dragon", "red dragon hi"] {
            let seq = tokenize(text, &v, 16);
            assert_eq!(detokenize(&seq.ids, &v).unwrap(), text);
        }
    }

    #[test]
    fn detokenize_rejects_out_of_range_ids() {
        let v = toy_vocab();
        assert!(matches!(
            detokenize(&[v.size() + 3], &v),
            Err(CorpusError::IndexOutOfRange(_, _))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let v = toy_vocab();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let back = Vocabulary::load(&p).unwrap();
        assert_eq!(back.size(), v.size());
        for id in 0..v.size() {
            assert_eq!(back.token(id).unwrap(), v.token(id).unwrap());
        }
    }

    proptest! {
        // Tokenizer round trip is the identity on normalized in-vocab text.
        #[test]
        fn round_trip_identity(words in proptest::collection::vec(
            prop_oneof![Just("cheese"), Just("pizza"), Just("hi"), Just("red"), Just("dragon")],
            1..10,
        )) {
            let v = toy_vocab();
            let text = words.join(" ");
            let seq = tokenize(&text, &v, 32);
            prop_assert_eq!(detokenize(&seq.ids, &v).unwrap(), text);
        }
    }
}

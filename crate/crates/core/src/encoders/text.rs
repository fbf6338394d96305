use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EncoderError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

/// Dense token → index mapping with `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(EncoderError::Vocabulary(
                "indices 0 and 1 must be <pad> and <unk>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EncoderError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of `token`, or `UNK`.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// JSON object mapping token to index.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, usize> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        serde_json::to_string(&map).expect("string map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EncoderError> {
        let map: HashMap<String, usize> =
            serde_json::from_str(s).map_err(|e| EncoderError::Vocabulary(e.to_string()))?;
        let mut tokens = vec![None; map.len()];
        for (t, i) in map {
            match tokens.get_mut(i) {
                Some(slot @ None) => *slot = Some(t),
                Some(Some(_)) => {
                    return Err(EncoderError::Vocabulary(format!("index {i} used twice")))
                }
                None => {
                    return Err(EncoderError::Vocabulary(format!(
                        "index {i} is not dense"
                    )))
                }
            }
        }
        let tokens = tokens.into_iter().map(|t| t.expect("dense")).collect();
        Self::from_tokens(tokens)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Self::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

/// Tokens with count ≥ `min_count`, ordered by descending frequency then
/// lexicographically, after the two reserved entries.
pub fn build_vocab<'a, I, S>(corpus: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for tok in doc {
            *counts.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens).expect("reserved tokens present")
}

/// Lowercases, splits on whitespace and maps URLs and @mentions to
/// placeholder tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| {
            let t = raw.to_lowercase();
            if t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.") {
                URL_TOKEN.to_string()
            } else if t.starts_with('@') && t.len() > 1 {
                USER_TOKEN.to_string()
            } else {
                t
            }
        })
        .collect()
}

/// Post-padded token ids of fixed length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn from_ids(ids: &[usize], max_len: usize) -> Self {
        let true_length = ids.len().min(max_len);
        let mut padded = ids[..true_length].to_vec();
        padded.resize(max_len, PAD);
        Self {
            ids: padded,
            true_length,
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.ids[..self.true_length]
    }
}

pub fn tokenize_and_pad(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let ids: Vec<usize> = tokenize(text)
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(t))
        .collect();
    TokenSequence::from_ids(&ids, max_len.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_vocab() {
        let v = build_vocab(std::iter::empty::<&[String]>(), 1);
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN]);
    }

    #[test]
    fn frequency_then_lexicographic() {
        let doc = ["a", "a", "b"];
        let v = build_vocab([&doc[..]], 1);
        assert_eq!(v.tokens()[2..], ["a", "b"]);

        let doc = ["b", "a"];
        let v = build_vocab([&doc[..]], 1);
        assert_eq!(v.tokens()[2..], ["a", "b"]);
    }

    #[test]
    fn min_count_sends_rare_tokens_to_unk() {
        let doc = ["x", "x", "y"];
        let v = build_vocab([&doc[..]], 2);
        assert_eq!(v.lookup("y"), UNK);
        assert_eq!(v.lookup("x"), 2);
    }

    #[test]
    fn empty_text_is_all_pad() {
        let v = build_vocab([&["hello"][..]], 1);
        let s = tokenize_and_pad("", &v, 40);
        assert_eq!(s.true_length, 0);
        assert_eq!(s.ids, vec![PAD; 40]);
    }

    #[test]
    fn truncation_keeps_head() {
        let words: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let v = build_vocab([&words[..]], 1);
        let s = tokenize_and_pad(&words.join(" "), &v, 40);
        assert_eq!(s.true_length, 40);
        assert_eq!(s.ids[0], v.lookup("w0"));
        assert_eq!(s.ids[39], v.lookup("w39"));
    }

    #[test]
    fn lowercasing_and_placeholders() {
        let v = build_vocab([&["hello", "world", URL_TOKEN, USER_TOKEN][..]], 1);
        assert_eq!(
            tokenize_and_pad("Hello WORLD", &v, 8),
            tokenize_and_pad("hello world", &v, 8)
        );
        assert_eq!(
            tokenize("see https://t.co/x @bob now"),
            ["see", URL_TOKEN, USER_TOKEN, "now"]
        );
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = build_vocab([&["b", "a", "a", "c"][..]], 1);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_json(r#"{"<pad>":0,"<unk>":2}"#).is_err());
        assert!(Vocabulary::from_json(r#"{"a":0,"<unk>":1}"#).is_err());
    }
}

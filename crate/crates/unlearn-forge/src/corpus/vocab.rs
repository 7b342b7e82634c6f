use crate::error::{Error, Result};

pub const BOS: &str = "<bos>";
pub const SEP: &str = "<sep>";
pub const EOS: &str = "<eos>";
pub const CAN: &str = "<can>";
pub const PAD: &str = "<pad>";

/// Token alphabet. Ids are dense (0..len) and bijective with the strings;
/// the five special tokens are identified by their reserved strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    pub bos: u32,
    pub sep: u32,
    pub eos: u32,
    pub can: u32,
    pub pad: u32,
}

impl Vocab {
    /// Standard layout: the five specials first, then `n_base` data tokens.
    /// The first 62 data tokens are the alphanumeric characters (lowercase,
    /// uppercase, digits), so an alphabet size of 62 means "alphanumeric";
    /// further tokens are `_`, `-`, then `b64`, `b65`, ...
    pub fn with_base(n_base: usize) -> Result<Vocab> {
        let mut tokens: Vec<String> =
            [BOS, SEP, EOS, CAN, PAD].iter().map(|s| s.to_string()).collect();
        for i in 0..n_base {
            tokens.push(base_token(i));
        }
        Vocab::from_tokens(tokens)
    }

    /// Build from an explicit token list (the vocab-file format). The five
    /// special strings must each occur exactly once.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < 8 {
            return Err(Error::Corpus(format!("vocab needs >= 8 tokens, got {}", tokens.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(t.as_str()) {
                return Err(Error::Corpus(format!("duplicate vocab token {t:?}")));
            }
        }
        let find = |name: &str| -> Result<u32> {
            tokens
                .iter()
                .position(|t| t == name)
                .map(|i| i as u32)
                .ok_or_else(|| Error::Corpus(format!("vocab is missing the {name} token")))
        };
        Ok(Vocab {
            bos: find(BOS)?,
            sep: find(SEP)?,
            eos: find(EOS)?,
            can: find(CAN)?,
            pad: find(PAD)?,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.bos || id == self.sep || id == self.eos || id == self.can || id == self.pad
    }

    /// Ids of the non-special (data) tokens, in id order.
    pub fn base_ids(&self) -> Vec<u32> {
        (0..self.tokens.len() as u32).filter(|&i| !self.is_special(i)).collect()
    }
}

fn base_token(i: usize) -> String {
    const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-";
    if i < ALNUM.len() {
        (ALNUM[i] as char).to_string()
    } else {
        format!("b{i}")
    }
}

use crate::corpus::Vocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Translation pair: BOS source SEP target EOS.
    Pair,
    /// Injected secret: BOS CAN payload EOS.
    Canary,
    /// Anything else that respects the BOS/EOS framing.
    Plain,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Pair => "pair",
            Role::Canary => "canary",
            Role::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Result<Role> {
        match s {
            "pair" => Ok(Role::Pair),
            "canary" => Ok(Role::Canary),
            "plain" => Ok(Role::Plain),
            other => Err(Error::Corpus(format!("unknown example role {other:?}"))),
        }
    }
}

/// One framed token sequence with a stable id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: u64,
    pub role: Role,
    pub tokens: Vec<u32>,
    /// Source-side token count for pairs, 0 otherwise.
    pub source_len: u32,
}

impl Example {
    /// Validates the framing rules for `role` against `vocab`.
    pub fn new(id: u64, role: Role, tokens: Vec<u32>, source_len: u32, vocab: &Vocab) -> Result<Example> {
        let ex = Example { id, role, tokens, source_len };
        ex.validate(vocab)?;
        Ok(ex)
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        let fail = |msg: String| Err(Error::Corpus(format!("example {}: {msg}", self.id)));
        if self.tokens.len() < 2 {
            return fail("too short for BOS..EOS framing".into());
        }
        if let Some(&t) = self.tokens.iter().find(|&&t| t as usize >= vocab.len()) {
            return fail(format!("token id {t} out of vocab"));
        }
        if self.tokens[0] != vocab.bos {
            return fail("does not start with BOS".into());
        }
        if *self.tokens.last().unwrap() != vocab.eos {
            return fail("does not end with EOS".into());
        }
        let seps = self.tokens.iter().filter(|&&t| t == vocab.sep).count();
        match self.role {
            Role::Pair => {
                if seps != 1 {
                    return fail(format!("pair needs exactly one SEP, found {seps}"));
                }
                let sep_at = self.tokens.iter().position(|&t| t == vocab.sep).unwrap();
                if sep_at != self.source_len as usize + 1 {
                    return fail(format!(
                        "source_len {} inconsistent with SEP position {sep_at}",
                        self.source_len
                    ));
                }
                if self.source_len == 0 {
                    return fail("pair with empty source".into());
                }
            }
            Role::Canary => {
                if self.tokens.get(1) != Some(&vocab.can) {
                    return fail("canary must have CAN immediately after BOS".into());
                }
                if seps != 0 {
                    return fail("canary must not contain SEP".into());
                }
                if self.source_len != 0 {
                    return fail("canary source_len must be 0".into());
                }
            }
            Role::Plain => {
                if self.source_len != 0 {
                    return fail("plain source_len must be 0".into());
                }
            }
        }
        Ok(())
    }

    /// Payload length for canaries (tokens between CAN and EOS).
    pub fn payload_len(&self) -> usize {
        debug_assert_eq!(self.role, Role::Canary);
        self.tokens.len().saturating_sub(3)
    }

    /// Source and target slices of a pair (without framing tokens).
    pub fn pair_sides(&self) -> (&[u32], &[u32]) {
        debug_assert_eq!(self.role, Role::Pair);
        let sep = 1 + self.source_len as usize;
        (&self.tokens[1..sep], &self.tokens[sep + 1..self.tokens.len() - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v() -> Vocab {
        Vocab::with_base(8).unwrap()
    }

    #[test]
    fn pair_framing() {
        let v = v();
        // BOS a b SEP c EOS
        let ex = Example::new(0, Role::Pair, vec![v.bos, 5, 6, v.sep, 7, v.eos], 2, &v).unwrap();
        assert_eq!(ex.pair_sides(), (&[5, 6][..], &[7][..]));
        // wrong source_len
        assert!(Example::new(0, Role::Pair, vec![v.bos, 5, 6, v.sep, 7, v.eos], 1, &v).is_err());
        // two SEPs
        assert!(Example::new(0, Role::Pair, vec![v.bos, 5, v.sep, v.sep, v.eos], 1, &v).is_err());
    }

    #[test]
    fn canary_framing() {
        let v = v();
        let ex = Example::new(3, Role::Canary, vec![v.bos, v.can, 5, 6, 7, v.eos], 0, &v).unwrap();
        assert_eq!(ex.payload_len(), 3);
        assert!(Example::new(3, Role::Canary, vec![v.bos, 5, 6, v.eos], 0, &v).is_err());
    }

    #[test]
    fn framing_basics() {
        let v = v();
        assert!(Example::new(1, Role::Plain, vec![v.bos, v.eos], 0, &v).is_ok());
        assert!(Example::new(1, Role::Plain, vec![v.eos, v.bos], 0, &v).is_err());
        assert!(Example::new(1, Role::Plain, vec![v.bos, 99, v.eos], 0, &v).is_err());
    }
}

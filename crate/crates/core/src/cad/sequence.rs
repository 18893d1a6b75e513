use serde::{Deserialize, Serialize};

use super::vocab::{Lexical, TokenPair, TokenType, DEFAULT_MAX_LEN, N_TOKEN_TYPES};
use super::CadError;

/// Flat, padded sketch–extrusion token sequence with its per-token flags.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CadSequence {
    pub tokens: Vec<TokenPair>,
    pub type_flags: Vec<u8>,
    pub step_flags: Vec<u16>,
    pub valid_len: usize,
}

/// Flags for a token list, assigned from lexical classes alone.
///
/// Steps are numbered from 1 for the j-th sketch–extrusion pair; `cls` and
/// padding carry step 0, while `e_solid` and `end` carry the last step so the
/// flags stay non-decreasing over the valid prefix.
pub fn derive_flags(tokens: &[TokenPair]) -> (Vec<u8>, Vec<u16>) {
    let mut types = Vec::with_capacity(tokens.len());
    let mut steps = Vec::with_capacity(tokens.len());
    let mut step = 0u16;
    let mut in_step = false;
    let mut scalar_run = 0usize;
    for &t in tokens {
        let ty = match t.lexical() {
            Lexical::Structural(ty) => ty,
            Lexical::Coord => TokenType::Coord,
            Lexical::Scalar if scalar_run == 9 => TokenType::Beta,
            Lexical::Scalar => TokenType::ExtScalar,
            Lexical::Unknown => TokenType::Pad,
        };
        scalar_run = if matches!(t.lexical(), Lexical::Scalar) { scalar_run + 1 } else { 0 };
        let flag = match ty {
            TokenType::Pad | TokenType::Cls => 0,
            TokenType::End | TokenType::EndSolid => step,
            _ => {
                if !in_step {
                    step += 1;
                    in_step = true;
                }
                if ty == TokenType::EndExtrusion {
                    in_step = false;
                }
                step
            }
        };
        types.push(ty as u8);
        steps.push(flag);
    }
    (types, steps)
}

impl CadSequence {
    /// Pads `tokens` (the valid prefix) to `max_len` and derives the flags.
    pub fn from_tokens(mut tokens: Vec<TokenPair>, max_len: usize) -> Result<Self, CadError> {
        let valid_len = tokens.len();
        if valid_len > max_len {
            return Err(CadError::TooLong { len: valid_len, max: max_len });
        }
        tokens.resize(max_len, TokenPair::PAD);
        let (mut type_flags, mut step_flags) = derive_flags(&tokens[..valid_len]);
        type_flags.resize(max_len, 0);
        step_flags.resize(max_len, 0);
        Ok(CadSequence { tokens, type_flags, step_flags, valid_len })
    }

    /// Builds a sequence from a full padded token list, taking the valid
    /// length as one past the last non-pad token.
    pub fn from_padded(tokens: Vec<TokenPair>) -> Result<Self, CadError> {
        let max_len = tokens.len();
        let valid = tokens.iter().rposition(|t| !t.is_pad()).map_or(0, |i| i + 1);
        let mut prefix = tokens;
        prefix.truncate(valid);
        Self::from_tokens(prefix, max_len)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn valid_tokens(&self) -> &[TokenPair] {
        &self.tokens[..self.valid_len]
    }

    pub fn token_type(&self, i: usize) -> TokenType {
        TokenType::from_index(self.type_flags[i] as usize).unwrap_or(TokenType::Pad)
    }

    /// Repads or truncates to a different maximum length.
    pub fn with_max_len(&self, max_len: usize) -> Result<Self, CadError> {
        Self::from_tokens(self.valid_tokens().to_vec(), max_len)
    }

    /// Checks the container invariants (lengths, padding, flag ranges and
    /// consistency). Grammar is checked by the parser.
    pub fn check(&self) -> Result<(), CadError> {
        let n = self.tokens.len();
        if self.type_flags.len() != n || self.step_flags.len() != n {
            return Err(CadError::Invalid(format!(
                "flag lengths ({}, {}) do not match {} tokens",
                self.type_flags.len(),
                self.step_flags.len(),
                n
            )));
        }
        if self.valid_len > n {
            return Err(CadError::Invalid(format!("valid_len {} exceeds length {n}", self.valid_len)));
        }
        if let Some(i) = self.tokens[self.valid_len..].iter().position(|t| !t.is_pad()) {
            return Err(CadError::Parse { index: self.valid_len + i, reason: "non-pad token after valid length".into() });
        }
        if let Some(i) = self.type_flags.iter().position(|&f| f as usize >= N_TOKEN_TYPES) {
            return Err(CadError::Invalid(format!("type flag {} at {i} out of range", self.type_flags[i])));
        }
        let prefix = &self.step_flags[..self.valid_len];
        if let Some(i) = prefix.windows(2).position(|w| w[1] < w[0]) {
            return Err(CadError::Invalid(format!("step flags decrease at {}", i + 1)));
        }
        for (i, t) in self.valid_tokens().iter().enumerate() {
            if let Lexical::Structural(ty) = t.lexical() {
                if self.type_flags[i] != ty as u8 {
                    return Err(CadError::Invalid(format!("type flag at {i} disagrees with token id")));
                }
            }
        }
        Ok(())
    }
}

impl Default for CadSequence {
    fn default() -> Self {
        CadSequence::from_tokens(Vec::new(), DEFAULT_MAX_LEN).expect("empty fits")
    }
}

//! Token vocabulary and 8-bit quantization.
//!
//! Ids `0..=10` are reserved for structure and control, ids `11..=266` carry
//! quantized continuous values (256 levels).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CadError;

pub const PAD: u16 = 0;
pub const CLS: u16 = 1;
pub const END: u16 = 2;
pub const END_SOLID: u16 = 3;
pub const END_SKETCH: u16 = 4;
pub const END_FACE: u16 = 5;
pub const END_LOOP: u16 = 6;
pub const END_CURVE: u16 = 7;
pub const END_EXTRUSION: u16 = 8;

/// Smallest value-carrying id.
pub const VALUE_MIN: u16 = 11;
/// Largest value-carrying id.
pub const VALUE_MAX: u16 = 266;
/// Number of quantization levels.
pub const LEVELS: u16 = 256;
/// Size of the per-component vocabulary (`V`).
pub const VOCAB_SIZE: usize = 267;

/// Number of token-type classes (`n_f`), shared with the command head.
pub const N_TOKEN_TYPES: usize = 12;

/// Default maximum padded sequence length.
pub const DEFAULT_MAX_LEN: usize = 256;

/// A single vocabulary id in `[0, 266]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct TokenId(u16);

impl TryFrom<u16> for TokenId {
    type Error = CadError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        TokenId::new(value)
    }
}

impl From<TokenId> for u16 {
    fn from(t: TokenId) -> u16 {
        t.0
    }
}

impl TokenId {
    pub const PAD: TokenId = TokenId(PAD);

    pub fn new(value: u16) -> Result<Self, CadError> {
        if value as usize >= VOCAB_SIZE {
            return Err(CadError::UnknownToken { index: None, value });
        }
        Ok(TokenId(value))
    }

    /// Builds a value token, rejecting reserved ids.
    pub fn value(value: u16) -> Result<Self, CadError> {
        if !(VALUE_MIN..=VALUE_MAX).contains(&value) {
            return Err(CadError::Domain(format!("{value} is not a value token id")));
        }
        Ok(TokenId(value))
    }

    pub const fn get(self) -> u16 {
        self.0
    }

    pub fn is_value(self) -> bool {
        (VALUE_MIN..=VALUE_MAX).contains(&self.0)
    }

    pub fn is_reserved(self) -> bool {
        self.0 < VALUE_MIN
    }
}

impl fmt::Debug for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps `x ∈ [0, 1]` to `11 + round_half_up(255 x)`.
pub fn quantize(x: f64) -> Result<TokenId, CadError> {
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(CadError::Domain(format!("cannot quantize {x}: outside [0, 1]")));
    }
    let level = (x * f64::from(LEVELS - 1) + 0.5).floor() as u16;
    Ok(TokenId(VALUE_MIN + level.min(LEVELS - 1)))
}

/// Inverse of [`quantize`]: `(t - 11) / 255`.
pub fn dequantize(t: TokenId) -> Result<f64, CadError> {
    if !t.is_value() {
        return Err(CadError::Domain(format!("token {t} is reserved and carries no value")));
    }
    Ok(f64::from(t.0 - VALUE_MIN) / f64::from(LEVELS - 1))
}

pub(crate) fn unit(t: TokenId) -> f64 {
    f64::from(t.0.saturating_sub(VALUE_MIN)) / f64::from(LEVELS - 1)
}

/// Affine normalizations applied before quantization.
///
/// Sketch coordinates and translations live in `[-1, 1]`, Euler angles in
/// `[0, 2π)`, sketch scale in `(0, 2]` and extrusion depths in `[0, 1]`.
pub mod norm {
    use super::*;

    pub fn coord_to_token(c: f64) -> Result<TokenId, CadError> {
        quantize((c + 1.0) / 2.0)
    }

    pub fn coord_of(t: TokenId) -> f64 {
        unit(t) * 2.0 - 1.0
    }

    pub fn angle_to_token(a: f64) -> Result<TokenId, CadError> {
        quantize(a.rem_euclid(2.0 * PI) / (2.0 * PI))
    }

    pub fn angle_of(t: TokenId) -> f64 {
        unit(t) * 2.0 * PI
    }

    pub fn scale_to_token(s: f64) -> Result<TokenId, CadError> {
        if s <= 0.0 {
            return Err(CadError::Domain(format!("sketch scale {s} must be positive")));
        }
        quantize(s / 2.0)
    }

    pub fn scale_of(t: TokenId) -> f64 {
        unit(t) * 2.0
    }

    pub fn depth_to_token(d: f64) -> Result<TokenId, CadError> {
        quantize(d)
    }

    pub fn depth_of(t: TokenId) -> f64 {
        unit(t)
    }
}

/// Class of a token; doubles as the `C_type` flag and the command-head label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum TokenType {
    Pad = 0,
    Cls = 1,
    End = 2,
    EndSolid = 3,
    EndSketch = 4,
    EndFace = 5,
    EndLoop = 6,
    EndCurve = 7,
    EndExtrusion = 8,
    Coord = 9,
    ExtScalar = 10,
    Beta = 11,
}

impl TokenType {
    pub const ALL: [TokenType; N_TOKEN_TYPES] = [
        TokenType::Pad,
        TokenType::Cls,
        TokenType::End,
        TokenType::EndSolid,
        TokenType::EndSketch,
        TokenType::EndFace,
        TokenType::EndLoop,
        TokenType::EndCurve,
        TokenType::EndExtrusion,
        TokenType::Coord,
        TokenType::ExtScalar,
        TokenType::Beta,
    ];

    pub fn from_index(i: usize) -> Option<TokenType> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The reserved id a structural class is written as, if any.
    pub fn structural_id(self) -> Option<u16> {
        match self {
            TokenType::Coord | TokenType::ExtScalar | TokenType::Beta => None,
            other => Some(other as u16),
        }
    }

    pub fn is_structural(self) -> bool {
        self.structural_id().is_some()
    }

    /// Class of a reserved id.
    pub fn of_structural_id(id: u16) -> Option<TokenType> {
        if id <= END_EXTRUSION {
            Self::from_index(id as usize)
        } else {
            None
        }
    }
}

/// Two-component token: `(p_x, p_y)` for coordinates, `(value, pad)` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[TokenId; 2]", into = "[TokenId; 2]")]
pub struct TokenPair {
    pub a: TokenId,
    pub b: TokenId,
}

impl From<[TokenId; 2]> for TokenPair {
    fn from([a, b]: [TokenId; 2]) -> Self {
        TokenPair { a, b }
    }
}

impl From<TokenPair> for [TokenId; 2] {
    fn from(p: TokenPair) -> Self {
        [p.a, p.b]
    }
}

impl TokenPair {
    pub const PAD: TokenPair = TokenPair { a: TokenId(PAD), b: TokenId(PAD) };

    pub fn new(a: TokenId, b: TokenId) -> Self {
        TokenPair { a, b }
    }

    pub fn structural(class: TokenType) -> Self {
        let id = class.structural_id().expect("structural class");
        TokenPair { a: TokenId(id), b: TokenId::PAD }
    }

    pub fn scalar(value: TokenId) -> Self {
        TokenPair { a: value, b: TokenId::PAD }
    }

    pub fn coord(x: TokenId, y: TokenId) -> Self {
        TokenPair { a: x, b: y }
    }

    pub fn is_pad(self) -> bool {
        self == Self::PAD
    }

    pub(crate) fn from_raw(a: u16, b: u16) -> Result<Self, CadError> {
        Ok(TokenPair { a: TokenId::new(a)?, b: TokenId::new(b)? })
    }

    /// Lexical kind of the pair, independent of its position.
    pub fn lexical(self) -> Lexical {
        let (a, b) = (self.a.0, self.b.0);
        if b == PAD {
            if a <= END_EXTRUSION {
                Lexical::Structural(TokenType::of_structural_id(a).expect("checked range"))
            } else if self.a.is_value() {
                Lexical::Scalar
            } else {
                Lexical::Unknown
            }
        } else if self.a.is_value() && self.b.is_value() {
            Lexical::Coord
        } else {
            Lexical::Unknown
        }
    }
}

/// Position-independent classification of a [`TokenPair`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lexical {
    Structural(TokenType),
    Coord,
    Scalar,
    Unknown,
}

/// How an extruded body combines with the accumulated solid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BooleanOp {
    New,
    Cut,
    Join,
    Intersect,
}

impl BooleanOp {
    pub const ALL: [BooleanOp; 4] = [BooleanOp::New, BooleanOp::Cut, BooleanOp::Join, BooleanOp::Intersect];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Scalar token `quantize(index / 3)`.
    pub fn token(self) -> TokenId {
        quantize(self.index() as f64 / 3.0).expect("index/3 lies in [0, 1]")
    }

    pub fn from_token(t: TokenId) -> Option<BooleanOp> {
        Self::ALL.into_iter().find(|op| op.token() == t)
    }
}

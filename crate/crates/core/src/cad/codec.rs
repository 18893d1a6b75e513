//! Depth-first serialization of [`CadTree`] into terminator-delimited token
//! sequences, and the single-pass parser that inverts it.

use super::sequence::CadSequence;
use super::tree::{CadTree, ExtrusionParams, Point2, PrimitiveKind, SketchPrimitive, TreeBuilder};
use super::vocab::{Lexical, TokenId, TokenPair, TokenType};
use super::CadError;

/// Structural role of a token, used by the hierarchical positional encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TokenRole {
    Pad = 0,
    Cls,
    End,
    EndSolid,
    EndSketch,
    EndFace,
    EndLoop,
    EndLine,
    EndArc,
    EndCircle,
    LinePoint,
    ArcPoint,
    CircleCenter,
    CirclePerimeter,
    Angle,
    Translation,
    Scale,
    Depth,
    Beta,
    EndExtrusion,
}

impl TokenRole {
    pub const COUNT: usize = 20;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Where a serialized token came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenOrigin {
    /// Tree node that owns the token (the root for `cls`, `e_solid`, `end`).
    pub node: usize,
    pub role: TokenRole,
}

fn extrusion_role(i: usize) -> TokenRole {
    match i {
        0..=2 => TokenRole::Angle,
        3..=5 => TokenRole::Translation,
        6 => TokenRole::Scale,
        7 | 8 => TokenRole::Depth,
        _ => TokenRole::Beta,
    }
}

/// Serializes a validated tree, returning the tokens' origins alongside.
pub fn serialize_with_origins(tree: &CadTree, max_len: usize) -> Result<(CadSequence, Vec<TokenOrigin>), CadError> {
    tree.validate()?;
    let root = tree.root;
    let mut toks = Vec::new();
    let mut origins = Vec::new();
    let mut push = |t: TokenPair, node: usize, role: TokenRole| {
        toks.push(t);
        origins.push(TokenOrigin { node, role });
    };
    push(TokenPair::structural(TokenType::Cls), root, TokenRole::Cls);
    for step in tree.steps()? {
        for &face in tree.children_of(step.sketch) {
            for &lp in tree.children_of(face) {
                for &c in tree.children_of(lp) {
                    let curve = tree.curve(c).expect("validated curve");
                    let (point_roles, end_role): (&[TokenRole], TokenRole) = match curve.kind() {
                        PrimitiveKind::Line => (&[TokenRole::LinePoint; 2], TokenRole::EndLine),
                        PrimitiveKind::Arc => (&[TokenRole::ArcPoint; 3], TokenRole::EndArc),
                        PrimitiveKind::Circle => {
                            (&[TokenRole::CircleCenter, TokenRole::CirclePerimeter], TokenRole::EndCircle)
                        }
                    };
                    for (p, &role) in curve.points().into_iter().zip(point_roles) {
                        push(TokenPair::coord(p.x, p.y), c, role);
                    }
                    push(TokenPair::structural(TokenType::EndCurve), c, end_role);
                }
                push(TokenPair::structural(TokenType::EndLoop), lp, TokenRole::EndLoop);
            }
            push(TokenPair::structural(TokenType::EndFace), face, TokenRole::EndFace);
        }
        push(TokenPair::structural(TokenType::EndSketch), step.sketch, TokenRole::EndSketch);
        for (i, v) in step.params.scalars().into_iter().enumerate() {
            push(TokenPair::scalar(v), step.extrusion, extrusion_role(i));
        }
        push(TokenPair::structural(TokenType::EndExtrusion), step.extrusion, TokenRole::EndExtrusion);
    }
    push(TokenPair::structural(TokenType::EndSolid), root, TokenRole::EndSolid);
    push(TokenPair::structural(TokenType::End), root, TokenRole::End);
    let seq = CadSequence::from_tokens(toks, max_len)?;
    origins.resize(max_len, TokenOrigin { node: root, role: TokenRole::Pad });
    Ok((seq, origins))
}

/// Depth-first serialization padded to `max_len` tokens.
pub fn serialize_tree(tree: &CadTree, max_len: usize) -> Result<CadSequence, CadError> {
    serialize_with_origins(tree, max_len).map(|(s, _)| s)
}

struct Parser<'a> {
    toks: &'a [TokenPair],
    pos: usize,
    builder: TreeBuilder,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Tok {
    Structural(TokenType),
    Coord(Point2),
    Scalar(TokenId),
    Eof,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Tok {
        match self.toks.get(self.pos) {
            None => Tok::Eof,
            Some(t) => match t.lexical() {
                Lexical::Structural(ty) => Tok::Structural(ty),
                Lexical::Coord => Tok::Coord(Point2::new(t.a, t.b)),
                Lexical::Scalar => Tok::Scalar(t.a),
                Lexical::Unknown => unreachable!("lexed before parsing"),
            },
        }
    }

    fn err<T>(&self, reason: impl Into<String>) -> Result<T, CadError> {
        Err(CadError::Parse { index: self.pos, reason: reason.into() })
    }

    fn expect(&mut self, ty: TokenType) -> Result<(), CadError> {
        match self.peek() {
            Tok::Structural(t) if t == ty => {
                self.pos += 1;
                Ok(())
            }
            Tok::Eof => self.err(format!("unexpected end of sequence, expected {ty:?}")),
            other => self.err(format!("expected {ty:?}, found {other:?}")),
        }
    }

    fn solid(&mut self) -> Result<(), CadError> {
        self.expect(TokenType::Cls)?;
        let mut steps = 0;
        loop {
            match self.peek() {
                Tok::Structural(TokenType::EndSolid) if steps > 0 => break,
                Tok::Coord(_) => {
                    self.sketch()?;
                    self.extrusion()?;
                    steps += 1;
                }
                Tok::Eof | Tok::Structural(TokenType::Pad | TokenType::EndSolid | TokenType::End) if steps == 0 => {
                    return self.err("empty solid");
                }
                Tok::Scalar(_) => return self.err("extrusion without a preceding sketch"),
                Tok::Eof => return self.err("unexpected end of sequence, expected EndSolid"),
                other => return self.err(format!("unexpected {other:?} between design steps")),
            }
        }
        self.expect(TokenType::EndSolid)?;
        self.expect(TokenType::End)?;
        if self.pos != self.toks.len() {
            return self.err("tokens after end");
        }
        Ok(())
    }

    fn sketch(&mut self) -> Result<(), CadError> {
        let sketch = self.builder.sketch();
        loop {
            match self.peek() {
                Tok::Coord(_) => self.face(sketch)?,
                Tok::Structural(TokenType::EndSketch) => break,
                other => return self.unexpected_in_sketch(other, "a face or EndSketch"),
            }
        }
        self.expect(TokenType::EndSketch)
    }

    fn face(&mut self, sketch: usize) -> Result<(), CadError> {
        let face = self.builder.face(sketch);
        loop {
            match self.peek() {
                Tok::Coord(_) => self.loop_(face)?,
                Tok::Structural(TokenType::EndFace) => break,
                other => return self.unexpected_in_sketch(other, "a loop or EndFace"),
            }
        }
        self.expect(TokenType::EndFace)
    }

    fn loop_(&mut self, face: usize) -> Result<(), CadError> {
        let mut curves: Vec<(usize, Vec<Point2>)> = Vec::new();
        loop {
            match self.peek() {
                Tok::Coord(_) => {
                    let start = self.pos;
                    let mut pts = Vec::with_capacity(3);
                    while let Tok::Coord(p) = self.peek() {
                        pts.push(p);
                        self.pos += 1;
                    }
                    match self.peek() {
                        Tok::Structural(TokenType::EndCurve) => self.pos += 1,
                        other => return self.unexpected_in_sketch(other, "EndCurve"),
                    }
                    curves.push((start, pts));
                }
                Tok::Structural(TokenType::EndLoop) => break,
                other => return self.unexpected_in_sketch(other, "a curve or EndLoop"),
            }
        }
        let lone = curves.len() == 1;
        let lp = self.builder.loop_(face);
        for (start, pts) in curves {
            let prim = match pts.as_slice() {
                &[c, p] if lone => SketchPrimitive::circle(c, p),
                &[a, b] => SketchPrimitive::line(a, b),
                &[a, m, b] => SketchPrimitive::arc(a, m, b),
                other => {
                    return Err(CadError::Parse {
                        index: start,
                        reason: format!("curve with {} points", other.len()),
                    })
                }
            }
            .map_err(|e| CadError::Parse { index: start, reason: e.to_string() })?;
            self.builder.curve(lp, prim);
        }
        self.expect(TokenType::EndLoop)
    }

    fn unexpected_in_sketch<T>(&self, found: Tok, expected: &str) -> Result<T, CadError> {
        match found {
            Tok::Scalar(_) => self.err("extrusion token inside sketch region"),
            Tok::Eof => self.err(format!("unexpected end of sequence, expected {expected}")),
            Tok::Structural(ty) => self.err(format!("missing terminator: expected {expected}, found {ty:?}")),
            Tok::Coord(_) => self.err(format!("expected {expected}, found coordinate")),
        }
    }

    fn extrusion(&mut self) -> Result<(), CadError> {
        let start = self.pos;
        let mut vals = [TokenId::PAD; 10];
        for v in vals.iter_mut() {
            match self.peek() {
                Tok::Scalar(t) => {
                    *v = t;
                    self.pos += 1;
                }
                Tok::Eof => return self.err("unexpected end of sequence inside extrusion"),
                other => return self.err(format!("expected extrusion value, found {other:?}")),
            }
        }
        let params = ExtrusionParams::from_scalars(vals).map_err(|e| CadError::Parse {
            index: start + 9,
            reason: e.to_string(),
        })?;
        self.expect(TokenType::EndExtrusion)?;
        self.builder.extrusion(params);
        Ok(())
    }
}

/// Parses a sequence back into its tree in one left-to-right pass.
///
/// Only the grammar is enforced; loop closure is a separate check
/// ([`CadTree::validate`]).
pub fn deserialize_sequence(seq: &CadSequence) -> Result<CadTree, CadError> {
    if seq.valid_len > seq.tokens.len() {
        return Err(CadError::Invalid(format!("valid_len {} exceeds length {}", seq.valid_len, seq.tokens.len())));
    }
    if let Some(i) = seq.tokens[seq.valid_len..].iter().position(|t| !t.is_pad()) {
        return Err(CadError::Parse { index: seq.valid_len + i, reason: "non-pad token after valid length".into() });
    }
    let toks = seq.valid_tokens();
    if let Some(i) = toks.iter().position(|t| t.lexical() == Lexical::Unknown) {
        let t = toks[i];
        let value = if t.a.is_reserved() && !t.b.is_reserved() { t.b.get() } else { t.a.get() };
        return Err(CadError::UnknownToken { index: Some(i), value });
    }
    let mut parser = Parser { toks, pos: 0, builder: TreeBuilder::new() };
    parser.solid()?;
    Ok(parser.builder.build())
}

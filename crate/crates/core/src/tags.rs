//! Tag schemas and the span <-> tag sequence codec.
//!
//! Three closed tag sets are used: boundary tags `{B, I, E, S, O}` for the
//! auxiliary aspect boundary head, unified tags (boundary x polarity plus `O`,
//! 13 in total) for aspects with sentiment, and opinion tags, which reuse the
//! boundary alphabet.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AsteError, Result};

/// Inclusive token span `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "span start {start} > end {end}");
        Span { start, end }
    }

    pub fn single(at: usize) -> Self {
        Span { start: at, end: at }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    /// Twice the span center, kept integral.
    pub fn center2(&self) -> usize {
        self.start + self.end
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub(crate) fn check_bounds(&self, len: usize) -> Result<()> {
        if self.end >= len {
            return Err(AsteError::Index {
                index: self.end,
                len,
            });
        }
        Ok(())
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl TryFrom<[usize; 2]> for Span {
    type Error = String;

    fn try_from([start, end]: [usize; 2]) -> std::result::Result<Self, Self::Error> {
        if start > end {
            return Err(format!("span start {start} > end {end}"));
        }
        Ok(Span { start, end })
    }
}

pub(crate) fn overlap_error(a: &Span, b: &Span) -> AsteError {
    AsteError::Overlap {
        a_start: a.start,
        a_end: a.end,
        b_start: b.start,
        b_end: b.end,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "POS")]
    Positive,
    #[serde(rename = "NEG")]
    Negative,
    #[serde(rename = "NEU")]
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "POS",
            Polarity::Negative => "NEG",
            Polarity::Neutral => "NEU",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "POS" => Ok(Polarity::Positive),
            "NEG" => Ok(Polarity::Negative),
            "NEU" => Ok(Polarity::Neutral),
            _ => Err(format!("unknown polarity {s:?}")),
        }
    }
}

/// BIOES boundary tag. Also serves as the opinion tag set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    B,
    I,
    E,
    S,
    O,
}

pub type OpinionTag = Boundary;

impl Boundary {
    pub const ALL: [Boundary; 5] = [Boundary::B, Boundary::I, Boundary::E, Boundary::S, Boundary::O];

    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::B => "B",
            Boundary::I => "I",
            Boundary::E => "E",
            Boundary::S => "S",
            Boundary::O => "O",
        }
    }
}

/// Aspect tag carrying both boundary and sentiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnifiedTag {
    Outside,
    /// Boundary is never `O`.
    Aspect(Boundary, Polarity),
}

impl UnifiedTag {
    pub fn boundary(self) -> Boundary {
        match self {
            UnifiedTag::Outside => Boundary::O,
            UnifiedTag::Aspect(b, _) => b,
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            UnifiedTag::Outside => None,
            UnifiedTag::Aspect(_, p) => Some(p),
        }
    }
}

/// A closed tag alphabet that can encode spans.
pub trait SpanTag: Copy + PartialEq + fmt::Debug + fmt::Display + FromStr<Err = String> {
    /// Extra label carried by a span (`()` or a polarity).
    type Label: Copy + PartialEq + fmt::Debug;

    /// Size of the alphabet.
    const COUNT: usize;

    fn outside() -> Self;

    /// `boundary` must not be `O`.
    fn compose(boundary: Boundary, label: Self::Label) -> Self;

    /// `None` for the outside tag.
    fn split(self) -> Option<(Boundary, Self::Label)>;

    fn index(self) -> usize;

    fn from_index(index: usize) -> Option<Self>;

    fn all() -> Vec<Self> {
        (0..Self::COUNT).filter_map(Self::from_index).collect()
    }
}

impl SpanTag for Boundary {
    type Label = ();
    const COUNT: usize = 5;

    fn outside() -> Self {
        Boundary::O
    }

    fn compose(boundary: Boundary, _: ()) -> Self {
        debug_assert_ne!(boundary, Boundary::O);
        boundary
    }

    fn split(self) -> Option<(Boundary, ())> {
        match self {
            Boundary::O => None,
            b => Some((b, ())),
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn from_index(index: usize) -> Option<Self> {
        Boundary::ALL.get(index).copied()
    }
}

impl SpanTag for UnifiedTag {
    type Label = Polarity;
    const COUNT: usize = 13;

    fn outside() -> Self {
        UnifiedTag::Outside
    }

    fn compose(boundary: Boundary, polarity: Polarity) -> Self {
        debug_assert_ne!(boundary, Boundary::O);
        UnifiedTag::Aspect(boundary, polarity)
    }

    fn split(self) -> Option<(Boundary, Polarity)> {
        match self {
            UnifiedTag::Outside => None,
            UnifiedTag::Aspect(b, p) => Some((b, p)),
        }
    }

    /// `B-POS I-POS E-POS S-POS B-NEG ... S-NEU O`.
    fn index(self) -> usize {
        match self {
            UnifiedTag::Outside => 12,
            UnifiedTag::Aspect(b, p) => p.index() * 4 + b.index(),
        }
    }

    fn from_index(index: usize) -> Option<Self> {
        match index {
            12 => Some(UnifiedTag::Outside),
            0..=11 => Some(UnifiedTag::Aspect(
                Boundary::ALL[index % 4],
                Polarity::ALL[index / 4],
            )),
            _ => None,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Boundary::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown boundary tag {s:?}"))
    }
}

impl fmt::Display for UnifiedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnifiedTag::Outside => f.write_str("O"),
            UnifiedTag::Aspect(b, p) => write!(f, "{b}-{p}"),
        }
    }
}

impl FromStr for UnifiedTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "O" {
            return Ok(UnifiedTag::Outside);
        }
        let (b, p) = s
            .split_once('-')
            .ok_or_else(|| format!("unknown unified tag {s:?}"))?;
        let b: Boundary = b.parse()?;
        if b == Boundary::O {
            return Err(format!("unknown unified tag {s:?}"));
        }
        Ok(UnifiedTag::Aspect(b, p.parse()?))
    }
}

/// Which of the three tag sets a sequence is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    Boundary,
    Unified,
    Opinion,
}

impl Schema {
    pub fn size(self) -> usize {
        match self {
            Schema::Boundary | Schema::Opinion => Boundary::COUNT,
            Schema::Unified => UnifiedTag::COUNT,
        }
    }
}

/// Encodes non-overlapping spans as a BIOES sequence of length `len`.
pub fn spans_to_tags<T: SpanTag>(spans: &[(Span, T::Label)], len: usize) -> Result<Vec<T>> {
    let mut tags = vec![T::outside(); len];
    let mut sorted: Vec<&(Span, T::Label)> = spans.iter().collect();
    sorted.sort_by_key(|(s, _)| *s);
    for pair in sorted.windows(2) {
        if pair[0].0.overlaps(&pair[1].0) {
            return Err(overlap_error(&pair[0].0, &pair[1].0));
        }
    }
    for &(span, label) in spans {
        span.check_bounds(len)?;
        if span.start == span.end {
            tags[span.start] = T::compose(Boundary::S, label);
        } else {
            tags[span.start] = T::compose(Boundary::B, label);
            for t in &mut tags[span.start + 1..span.end] {
                *t = T::compose(Boundary::I, label);
            }
            tags[span.end] = T::compose(Boundary::E, label);
        }
    }
    Ok(tags)
}

/// Decodes a BIOES sequence leniently.
///
/// Well-formed input round-trips through [`spans_to_tags`]. A stray `I` or `E`
/// opens a new span; an unterminated span is closed at the next `O`, `B`, `S`
/// or at the end. A span takes the label of its first token.
pub fn tags_to_spans<T: SpanTag>(tags: &[T]) -> Vec<(Span, T::Label)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, T::Label)> = None;
    for (t, tag) in tags.iter().enumerate() {
        match tag.split() {
            None => {
                if let Some((start, label)) = open.take() {
                    spans.push((Span::new(start, t - 1), label));
                }
            }
            Some((Boundary::S, label)) => {
                if let Some((start, l)) = open.take() {
                    spans.push((Span::new(start, t - 1), l));
                }
                spans.push((Span::single(t), label));
            }
            Some((Boundary::B, label)) => {
                if let Some((start, l)) = open.take() {
                    spans.push((Span::new(start, t - 1), l));
                }
                open = Some((t, label));
            }
            Some((Boundary::I, label)) => {
                if open.is_none() {
                    open = Some((t, label));
                }
            }
            Some((Boundary::E, label)) => {
                let (start, l) = open.take().unwrap_or((t, label));
                spans.push((Span::new(start, t), l));
            }
            Some((Boundary::O, _)) => unreachable!("split never yields O"),
        }
    }
    if let Some((start, label)) = open {
        spans.push((Span::new(start, tags.len() - 1), label));
    }
    spans
}

/// Strips the polarity from a unified sequence.
pub fn unified_to_boundary(tags: &[UnifiedTag]) -> Vec<Boundary> {
    tags.iter().map(|t| t.boundary()).collect()
}

pub fn parse_tags<T: SpanTag>(text: &str) -> std::result::Result<Vec<T>, String> {
    text.split_whitespace().map(str::parse).collect()
}

pub fn format_tags<T: SpanTag>(tags: &[T]) -> String {
    tags.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

//! Annotated corpus ingestion.
//!
//! A sample is three lines: the tokenized sentence, the same tokens annotated
//! as `word=TAG` with collapsed aspect tags (`T-POS`, `TT-NEG`, ...), and the
//! tokens annotated with collapsed opinion tags (`S`, `SS`, ...). The number of
//! repeated letters is a pair-group id: every aspect in group `k` pairs with
//! every opinion in group `k`. Samples are separated by blank lines. The
//! single-line `sentence####tags####tags` layout is accepted as well.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AsteError, Result};
use crate::graph::DependencyGraph;
use crate::tags::{
    overlap_error, spans_to_tags, tags_to_spans, unified_to_boundary, Boundary, OpinionTag,
    Polarity, Span, UnifiedTag,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub aspect: Span,
    pub polarity: Polarity,
    pub opinion: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub triplets: Vec<Triplet>,
    pub unified_tags: Vec<UnifiedTag>,
    pub opinion_tags: Vec<OpinionTag>,
    pub dep_graph: Option<DependencyGraph>,
}

impl AnnotatedSentence {
    /// Builds a sentence from gold triplets, deriving both tag sequences.
    pub fn from_triplets(tokens: Vec<String>, triplets: Vec<Triplet>) -> Result<Self> {
        let len = tokens.len();
        let aspects = unique_aspects(&triplets);
        let opinions: Vec<(Span, ())> = unique_opinions(&triplets)
            .into_iter()
            .map(|s| (s, ()))
            .collect();
        for (a, _) in &aspects {
            if let Some((o, _)) = opinions.iter().find(|(o, _)| o.overlaps(a)) {
                return Err(overlap_error(a, o));
            }
        }
        // Same span with two polarities is an overlap too.
        for w in aspects.windows(2) {
            if w[0].0.overlaps(&w[1].0) {
                return Err(overlap_error(&w[0].0, &w[1].0));
            }
        }
        let unified_tags = spans_to_tags(&aspects, len)?;
        let opinion_tags = spans_to_tags(&opinions, len)?;
        Ok(AnnotatedSentence {
            tokens,
            triplets,
            unified_tags,
            opinion_tags,
            dep_graph: None,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn boundary_tags(&self) -> Vec<Boundary> {
        unified_to_boundary(&self.unified_tags)
    }

    /// Gold aspects with polarity, in token order.
    pub fn aspects(&self) -> Vec<(Span, Polarity)> {
        tags_to_spans(&self.unified_tags)
    }

    pub fn opinions(&self) -> Vec<Span> {
        tags_to_spans(&self.opinion_tags)
            .into_iter()
            .map(|(s, _)| s)
            .collect()
    }
}

pub(crate) fn unique_aspects(triplets: &[Triplet]) -> Vec<(Span, Polarity)> {
    let mut v: Vec<(Span, Polarity)> = triplets.iter().map(|t| (t.aspect, t.polarity)).collect();
    v.sort();
    v.dedup();
    v
}

pub(crate) fn unique_opinions(triplets: &[Triplet]) -> Vec<Span> {
    let mut v: Vec<Span> = triplets.iter().map(|t| t.opinion).collect();
    v.sort();
    v.dedup();
    v
}

/// A collapsed tag from the storage format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Marker<L> {
    Outside,
    Group(usize, L),
}

fn split_item(item: &str, line: usize) -> Result<(&str, &str)> {
    item.rsplit_once('=')
        .filter(|(w, t)| !w.is_empty() && !t.is_empty())
        .ok_or_else(|| AsteError::format(line, format!("expected word=TAG, found {item:?}")))
}

fn group_letters(tag: &str, letter: char) -> Option<usize> {
    if !tag.is_empty() && tag.chars().all(|c| c == letter) {
        Some(tag.len())
    } else {
        None
    }
}

fn parse_aspect_marker(tag: &str, line: usize) -> Result<Marker<Polarity>> {
    if tag == "O" {
        return Ok(Marker::Outside);
    }
    let bad = || AsteError::format(line, format!("unknown aspect tag {tag:?}"));
    let (letters, pol) = tag.split_once('-').ok_or_else(bad)?;
    let group = group_letters(letters, 'T').ok_or_else(bad)?;
    let pol = pol.parse().map_err(|_| bad())?;
    Ok(Marker::Group(group, pol))
}

fn parse_opinion_marker(tag: &str, line: usize) -> Result<Marker<()>> {
    if tag == "O" {
        return Ok(Marker::Outside);
    }
    group_letters(tag, 'S')
        .map(|g| Marker::Group(g, ()))
        .ok_or_else(|| AsteError::format(line, format!("unknown opinion tag {tag:?}")))
}

/// Collapses runs of identical markers into spans.
fn marker_runs<L: Copy + PartialEq>(markers: &[Marker<L>]) -> Vec<(Span, usize, L)> {
    let mut runs = Vec::new();
    let mut t = 0;
    while t < markers.len() {
        if let Marker::Group(g, l) = markers[t] {
            let start = t;
            while t + 1 < markers.len() && markers[t + 1] == markers[start] {
                t += 1;
            }
            runs.push((Span::new(start, t), g, l));
        }
        t += 1;
    }
    runs
}

/// Parses one three-line sample. `line` is the 1-based line number of the
/// sentence line, used in diagnostics.
pub fn parse_sample(sentence: &str, aspect_line: &str, opinion_line: &str, line: usize) -> Result<AnnotatedSentence> {
    let tokens: Vec<String> = sentence.split_whitespace().map(str::to_owned).collect();
    let aspect_items: Vec<&str> = aspect_line.split_whitespace().collect();
    let opinion_items: Vec<&str> = opinion_line.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(AsteError::format(line, "empty sentence"));
    }
    if aspect_items.len() != tokens.len() || opinion_items.len() != tokens.len() {
        return Err(AsteError::format(
            line,
            format!(
                "token count mismatch: sentence {}, aspect line {}, opinion line {}",
                tokens.len(),
                aspect_items.len(),
                opinion_items.len()
            ),
        ));
    }

    let aspect_markers = aspect_items
        .iter()
        .map(|item| split_item(item, line + 1).and_then(|(_, t)| parse_aspect_marker(t, line + 1)))
        .collect::<Result<Vec<_>>>()?;
    let opinion_markers = opinion_items
        .iter()
        .map(|item| split_item(item, line + 2).and_then(|(_, t)| parse_opinion_marker(t, line + 2)))
        .collect::<Result<Vec<_>>>()?;

    let aspects = marker_runs(&aspect_markers);
    let opinions = marker_runs(&opinion_markers);
    if aspects.is_empty() {
        return Err(AsteError::EmptyAnnotation {
            line,
            missing: "aspect",
        });
    }
    if opinions.is_empty() {
        return Err(AsteError::EmptyAnnotation {
            line,
            missing: "opinion",
        });
    }

    let mut groups: BTreeMap<usize, (Vec<(Span, Polarity)>, Vec<Span>)> = BTreeMap::new();
    for &(span, g, pol) in &aspects {
        groups.entry(g).or_default().0.push((span, pol));
    }
    for &(span, g, ()) in &opinions {
        groups.entry(g).or_default().1.push(span);
    }

    let mut triplets = Vec::new();
    for (group, (group_aspects, group_opinions)) in groups {
        if group_opinions.is_empty() {
            return Err(AsteError::DanglingGroup {
                line,
                group,
                present: "aspect",
                missing: "opinion",
            });
        }
        if group_aspects.is_empty() {
            return Err(AsteError::DanglingGroup {
                line,
                group,
                present: "opinion",
                missing: "aspect",
            });
        }
        for &(aspect, polarity) in &group_aspects {
            for &opinion in &group_opinions {
                triplets.push(Triplet {
                    aspect,
                    polarity,
                    opinion,
                });
            }
        }
    }

    AnnotatedSentence::from_triplets(tokens, triplets)
}

/// Renders a sentence in the three-line storage format.
///
/// Pair groups are the connected components of the aspect/opinion pairing,
/// numbered by first appearance in `triplets`. Fails if a component is not a
/// complete bipartite block, or if two spans with identical collapsed tags
/// touch, since the format cannot express either.
pub fn serialize_sample(sentence: &AnnotatedSentence) -> Result<[String; 3]> {
    let mut aspects: Vec<(Span, Polarity)> = Vec::new();
    let mut opinions: Vec<Span> = Vec::new();
    for t in &sentence.triplets {
        if !aspects.iter().any(|(s, _)| *s == t.aspect) {
            aspects.push((t.aspect, t.polarity));
        }
        if !opinions.contains(&t.opinion) {
            opinions.push(t.opinion);
        }
    }
    let aspect_index = |s: Span| aspects.iter().position(|(a, _)| *a == s).unwrap();
    let opinion_index = |s: Span| opinions.iter().position(|o| *o == s).unwrap();

    // 0 = unassigned; groups are numbered from 1 in order of first appearance.
    let mut aspect_group = vec![0usize; aspects.len()];
    let mut opinion_group = vec![0usize; opinions.len()];
    let mut groups = 0;
    for t in &sentence.triplets {
        let first = aspect_index(t.aspect);
        if aspect_group[first] != 0 {
            continue;
        }
        groups += 1;
        aspect_group[first] = groups;
        let mut stack = vec![(true, first)];
        while let Some((is_aspect, i)) = stack.pop() {
            for t in &sentence.triplets {
                let (a, o) = (aspect_index(t.aspect), opinion_index(t.opinion));
                if is_aspect && a == i && opinion_group[o] == 0 {
                    opinion_group[o] = groups;
                    stack.push((false, o));
                } else if !is_aspect && o == i && aspect_group[a] == 0 {
                    aspect_group[a] = groups;
                    stack.push((true, a));
                }
            }
        }
    }

    for g in 1..=groups {
        let n_aspects = aspect_group.iter().filter(|&&x| x == g).count();
        let n_opinions = opinion_group.iter().filter(|&&x| x == g).count();
        let n_pairs = sentence
            .triplets
            .iter()
            .filter(|t| aspect_group[aspect_index(t.aspect)] == g)
            .count();
        if n_pairs != n_aspects * n_opinions {
            return Err(AsteError::format(
                0,
                "pairing is not expressible as complete pair groups",
            ));
        }
    }

    let len = sentence.len();
    let mut aspect_tags = vec!["O".to_owned(); len];
    let mut opinion_tags = vec!["O".to_owned(); len];
    for (&(span, pol), &g) in aspects.iter().zip(&aspect_group) {
        span.check_bounds(len)?;
        for i in span.indices() {
            aspect_tags[i] = format!("{}-{}", "T".repeat(g), pol);
        }
    }
    for (&span, &g) in opinions.iter().zip(&opinion_group) {
        span.check_bounds(len)?;
        for i in span.indices() {
            opinion_tags[i] = "S".repeat(g);
        }
    }

    // Runs of one collapsed tag read back as a single span, so two adjacent
    // spans with the same tag would merge.
    let abutting = |s: &Span, tags: &[String]| s.end + 1 < len && tags[s.end + 1] == tags[s.end];
    if aspects.iter().any(|(s, _)| abutting(s, &aspect_tags)) || opinions.iter().any(|s| abutting(s, &opinion_tags)) {
        return Err(AsteError::format(
            0,
            "adjacent spans with the same tag and group cannot be told apart",
        ));
    }

    let join = |tags: &[String]| {
        let mut out = String::new();
        for (i, (w, t)) in sentence.tokens.iter().zip(tags).enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{w}={t}");
        }
        out
    };
    Ok([
        sentence.tokens.join(" "),
        join(&aspect_tags),
        join(&opinion_tags),
    ])
}

/// Parses a whole corpus file body.
pub fn parse_corpus(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let flush = |block: &mut Vec<(usize, &str)>, out: &mut Vec<AnnotatedSentence>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        if block.len() != 3 {
            return Err(AsteError::format(
                block[0].0,
                format!("sample has {} lines, expected 3", block.len()),
            ));
        }
        out.push(parse_sample(block[0].1, block[1].1, block[2].1, block[0].0)?);
        block.clear();
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut block, &mut sentences)?;
        } else if line.contains("####") {
            flush(&mut block, &mut sentences)?;
            let parts: Vec<&str> = line.split("####").collect();
            if parts.len() != 3 {
                return Err(AsteError::format(line_no, "expected sentence####tags####tags"));
            }
            sentences.push(parse_sample(parts[0], parts[1], parts[2], line_no)?);
        } else {
            block.push((line_no, line));
            if block.len() > 3 {
                return Err(AsteError::format(block[0].0, "sample has more than 3 lines"));
            }
        }
    }
    flush(&mut block, &mut sentences)?;
    Ok(sentences)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AsteError::io(path, e))?;
    parse_corpus(&text)
}

pub fn write_corpus(sentences: &[AnnotatedSentence]) -> Result<String> {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for line in serialize_sample(s)? {
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub pairs: usize,
    pub aspects: usize,
    pub opinions: usize,
}

pub fn corpus_stats(sentences: &[AnnotatedSentence]) -> CorpusStats {
    sentences.iter().fold(CorpusStats::default(), |mut acc, s| {
        acc.sentences += 1;
        acc.pairs += s.triplets.len();
        acc.aspects += s.aspects().len();
        acc.opinions += s.opinions().len();
        acc
    })
}

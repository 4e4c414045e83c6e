//! Exhaustive span/tag round trips with an independent grammar oracle.

use aste::tags::{spans_to_tags, tags_to_spans, Boundary, Polarity, Span, SpanTag, UnifiedTag};

/// Every set of non-overlapping labelled spans over `len` tokens, built
/// left to right.
pub fn all_span_sets<L: Copy>(len: usize, labels: &[L]) -> Vec<Vec<(Span, L)>> {
    fn go<L: Copy>(t: usize, len: usize, labels: &[L], cur: &mut Vec<(Span, L)>, out: &mut Vec<Vec<(Span, L)>>) {
        if t >= len {
            out.push(cur.clone());
            return;
        }
        go(t + 1, len, labels, cur, out);
        for end in t..len {
            for &l in labels {
                cur.push((Span::new(t, end), l));
                go(end + 1, len, labels, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, len, labels, &mut Vec::new(), &mut out);
    out
}

/// Strict BIOES grammar: `B I* E` or `S`, one label per span, `O` elsewhere.
pub fn is_well_formed<T: SpanTag>(tags: &[T]) -> bool
where
    T::Label: PartialEq,
{
    let mut open: Option<T::Label> = None;
    for tag in tags {
        open = match (open, tag.split()) {
            (None, None) => None,
            (None, Some((Boundary::S, _))) => None,
            (None, Some((Boundary::B, l))) => Some(l),
            (Some(l), Some((Boundary::I, m))) if l == m => Some(l),
            (Some(l), Some((Boundary::E, m))) if l == m => None,
            _ => return false,
        };
    }
    open.is_none()
}

fn sorted<L: Copy>(mut v: Vec<(Span, L)>) -> Vec<(Span, L)> {
    v.sort_by_key(|(s, _)| *s);
    v
}

/// encode∘decode and decode∘encode over every span set up to `max_len`
/// tokens. Returns the number of configurations checked.
pub fn span_round_trips<T: SpanTag>(max_len: usize, labels: &[T::Label]) -> Result<usize, String> {
    let mut checked = 0;
    for len in 0..=max_len {
        for spans in all_span_sets(len, labels) {
            let tags: Vec<T> = spans_to_tags(&spans, len).map_err(|e| format!("{spans:?}: {e}"))?;
            if !is_well_formed(&tags) {
                return Err(format!("{spans:?} encodes to ill-formed {tags:?}"));
            }
            let back = tags_to_spans(&tags);
            if sorted(back.clone()) != spans {
                return Err(format!("{spans:?} decodes back to {back:?}"));
            }
            let again: Vec<T> = spans_to_tags(&back, len).map_err(|e| e.to_string())?;
            if again != tags {
                return Err(format!("{tags:?} re-encodes to {again:?}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Every tag sequence of length `len`: the well-formed ones are exactly the
/// encodings, so their count must equal the number of span sets and each must
/// survive decode then encode.
pub fn sequence_round_trips<T: SpanTag>(len: usize, labels: &[T::Label]) -> Result<usize, String> {
    let alphabet = T::all();
    let mut well_formed = 0;
    let mut digits = vec![0usize; len];
    loop {
        let tags: Vec<T> = digits.iter().map(|&d| alphabet[d]).collect();
        if is_well_formed(&tags) {
            well_formed += 1;
            let again: Vec<T> = spans_to_tags(&tags_to_spans(&tags), len).map_err(|e| e.to_string())?;
            if again != tags {
                return Err(format!("{tags:?} re-encodes to {again:?}"));
            }
        }
        let mut i = 0;
        while i < len && digits[i] + 1 == alphabet.len() {
            digits[i] = 0;
            i += 1;
        }
        if i == len {
            break;
        }
        digits[i] += 1;
    }
    let expected = all_span_sets(len, labels).len();
    if well_formed != expected {
        return Err(format!("{well_formed} well-formed sequences of length {len}, {expected} span sets"));
    }
    Ok(well_formed)
}

/// Both schemas: span sets up to 8 tokens, all boundary sequences up to 8
/// tokens and all unified sequences up to 5 tokens.
pub fn codec_soundness() -> Result<String, String> {
    let b = span_round_trips::<Boundary>(8, &[()])?;
    let u = span_round_trips::<UnifiedTag>(8, &Polarity::ALL)?;
    let mut seqs = 0;
    for len in 0..=8 {
        seqs += sequence_round_trips::<Boundary>(len, &[()])?;
    }
    for len in 0..=5 {
        seqs += sequence_round_trips::<UnifiedTag>(len, &Polarity::ALL)?;
    }
    Ok(format!("{b} boundary and {u} unified span sets, {seqs} well-formed sequences"))
}

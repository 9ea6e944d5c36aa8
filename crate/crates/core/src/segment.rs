//! Sub-sentence segmentation of a response at line-break tokens.
//!
//! A separator token belongs to the span it terminates, so the spans always
//! partition `[0, len)` and every span holds at least one token.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    #[allow(clippy::len_without_is_empty)]
    pub const fn len(&self) -> usize {
        self.end - self.start
    }

    pub const fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Ordered, contiguous, non-empty spans covering one response.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segmentation {
    spans: Vec<Span>,
}

impl Segmentation {
    /// Checks the partition invariants against a response of `len` tokens.
    pub fn from_spans(spans: Vec<Span>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("response"));
        }
        let mut expected_start = 0;
        for (j, span) in spans.iter().enumerate() {
            if span.start != expected_start {
                return Err(Error::InvalidSegmentation(format!(
                    "span {j} starts at {} but the previous span ended at {expected_start}",
                    span.start
                )));
            }
            if span.end <= span.start {
                return Err(Error::InvalidSegmentation(format!(
                    "span {j} ({}, {}) is empty",
                    span.start, span.end
                )));
            }
            expected_start = span.end;
        }
        if expected_start != len {
            return Err(Error::InvalidSegmentation(format!(
                "spans end at {expected_start}, response has {len} tokens"
            )));
        }
        Ok(Self { spans })
    }

    /// One span per token.
    pub fn per_token(len: usize) -> Result<Self> {
        Self::from_spans((0..len).map(|t| Span::new(t, t + 1)).collect(), len)
    }

    /// A single span over the whole response.
    pub fn whole(len: usize) -> Result<Self> {
        Self::from_spans(alloc::vec![Span::new(0, len)], len)
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn num_segments(&self) -> usize {
        self.spans.len()
    }

    /// Number of tokens covered.
    pub fn response_len(&self) -> usize {
        self.spans.last().map_or(0, |s| s.end)
    }

    pub fn covers(&self, len: usize) -> bool {
        self.response_len() == len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SegmentMode {
    /// Every separator token closes a span.
    #[default]
    SingleBreak,
    /// Two consecutive separators close a span.
    DoubleBreak,
    /// One span per token.
    TokenLevel,
    /// One span for the whole response.
    ResponseLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeparatorSpec {
    pub separator_token_ids: BTreeSet<u32>,
    pub mode: SegmentMode,
}

impl SeparatorSpec {
    pub fn new(separators: impl IntoIterator<Item = u32>, mode: SegmentMode) -> Self {
        Self {
            separator_token_ids: separators.into_iter().collect(),
            mode,
        }
    }

    pub fn is_separator(&self, token: u32) -> bool {
        self.separator_token_ids.contains(&token)
    }
}

/// Splits `tokens` into spans according to `spec`.
///
/// In double-break mode a closing pair is consumed: a third consecutive
/// separator starts the next span rather than pairing with the second.
pub fn segment(tokens: &[u32], spec: &SeparatorSpec) -> Result<Segmentation> {
    let len = tokens.len();
    if len == 0 {
        return Err(Error::Empty("token sequence"));
    }
    match spec.mode {
        SegmentMode::TokenLevel => return Segmentation::per_token(len),
        SegmentMode::ResponseLevel => return Segmentation::whole(len),
        SegmentMode::SingleBreak | SegmentMode::DoubleBreak => {}
    }

    let mut spans = Vec::new();
    let mut start = 0;
    for (t, &token) in tokens.iter().enumerate() {
        if !spec.is_separator(token) {
            continue;
        }
        let closes = match spec.mode {
            SegmentMode::SingleBreak => true,
            // the previous token must be a separator inside the current span
            _ => t > start && spec.is_separator(tokens[t - 1]),
        };
        if closes {
            spans.push(Span::new(start, t + 1));
            start = t + 1;
        }
    }
    if start < len {
        spans.push(Span::new(start, len));
    }
    Segmentation::from_spans(spans, len)
}

pub fn span_lengths(seg: &Segmentation) -> Vec<usize> {
    seg.spans().iter().map(Span::len).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const NL: u32 = 9;

    fn spans(seg: &Segmentation) -> Vec<(usize, usize)> {
        seg.spans().iter().map(|s| (s.start, s.end)).collect()
    }

    fn spec(mode: SegmentMode) -> SeparatorSpec {
        SeparatorSpec::new([NL], mode)
    }

    #[test]
    fn single_break_closes_after_separator() {
        let seg = segment(&[1, NL, 2, 3], &spec(SegmentMode::SingleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 2), (2, 4)]);
        assert_eq!(span_lengths(&seg), vec![2, 2]);
    }

    #[test]
    fn no_separator_gives_one_span() {
        for mode in [SegmentMode::SingleBreak, SegmentMode::DoubleBreak, SegmentMode::ResponseLevel] {
            let seg = segment(&[1, 2, 3], &spec(mode)).unwrap();
            assert_eq!(spans(&seg), vec![(0, 3)]);
        }
    }

    #[test]
    fn double_break_closes_after_pair() {
        let seg = segment(&[1, NL, NL, 2], &spec(SegmentMode::DoubleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 3), (3, 4)]);
        assert_eq!(span_lengths(&seg), vec![3, 1]);
        // a lone separator does not split
        let seg = segment(&[1, NL, 2, 3], &spec(SegmentMode::DoubleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 4)]);
    }

    #[test]
    fn double_break_pair_is_consumed() {
        let seg = segment(&[1, NL, NL, NL, 2], &spec(SegmentMode::DoubleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 3), (3, 5)]);
        let seg = segment(&[NL, NL, NL, NL], &spec(SegmentMode::DoubleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 2), (2, 4)]);
    }

    #[test]
    fn separator_runs_never_emit_empty_spans() {
        let seg = segment(&[NL, NL, 1, NL], &spec(SegmentMode::SingleBreak)).unwrap();
        assert_eq!(spans(&seg), vec![(0, 1), (1, 2), (2, 4)]);
    }

    #[test]
    fn single_token_span() {
        let seg = segment(&[5], &spec(SegmentMode::SingleBreak)).unwrap();
        assert_eq!(span_lengths(&seg), vec![1]);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(
            segment(&[], &spec(SegmentMode::SingleBreak)),
            Err(Error::Empty("token sequence"))
        );
    }

    #[test]
    fn from_spans_rejects_gaps_and_short_cover() {
        assert!(Segmentation::from_spans(vec![Span::new(0, 2), Span::new(3, 4)], 4).is_err());
        assert!(Segmentation::from_spans(vec![Span::new(0, 2), Span::new(2, 3)], 4).is_err());
        assert!(Segmentation::from_spans(vec![Span::new(0, 0), Span::new(0, 4)], 4).is_err());
        assert!(Segmentation::from_spans(vec![], 4).is_err());
    }

    fn mode_strategy() -> impl Strategy<Value = SegmentMode> {
        prop_oneof![
            Just(SegmentMode::SingleBreak),
            Just(SegmentMode::DoubleBreak),
            Just(SegmentMode::TokenLevel),
            Just(SegmentMode::ResponseLevel),
        ]
    }

    proptest! {
        #[test]
        fn spans_partition_the_response(
            tokens in proptest::collection::vec(0u32..6, 1..40),
            seps in proptest::collection::btree_set(0u32..6, 0..3),
            mode in mode_strategy(),
        ) {
            let spec = SeparatorSpec { separator_token_ids: seps, mode };
            let seg = segment(&tokens, &spec).unwrap();
            let mut next = 0;
            for s in seg.spans() {
                prop_assert_eq!(s.start, next);
                prop_assert!(s.len() >= 1);
                next = s.end;
            }
            prop_assert_eq!(next, tokens.len());
            prop_assert_eq!(span_lengths(&seg).iter().sum::<usize>(), tokens.len());
            match mode {
                SegmentMode::TokenLevel => prop_assert_eq!(seg.num_segments(), tokens.len()),
                SegmentMode::ResponseLevel => prop_assert_eq!(seg.num_segments(), 1),
                _ => {}
            }
            prop_assert_eq!(segment(&tokens, &spec).unwrap(), seg);
        }

        #[test]
        fn single_break_spans_end_at_separators(
            tokens in proptest::collection::vec(0u32..5, 1..30),
        ) {
            let spec = SeparatorSpec::new([0], SegmentMode::SingleBreak);
            let seg = segment(&tokens, &spec).unwrap();
            for s in &seg.spans()[..seg.num_segments() - 1] {
                prop_assert_eq!(tokens[s.end - 1], 0);
                prop_assert!(tokens[s.start..s.end - 1].iter().all(|&t| t != 0));
            }
        }
    }
}

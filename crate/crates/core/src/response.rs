//! Parser for the tagged rollout grammar
//! `<think>…</think><answer>X</answer><glue>[(s, e), …]</glue>`
//! and the token classification used for credit assignment.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::interval::IntervalSet;

const THINK: (&str, &str) = ("<think>", "</think>");
const ANSWER: (&str, &str) = ("<answer>", "</answer>");
const GLUE: (&str, &str) = ("<glue>", "</glue>");
const TIME: (&str, &str) = ("<time>", "</time>");

/// A timestamp or time range marked inside `<think>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeMark {
    Point(f64),
    Range(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredResponse {
    pub think_text: String,
    pub time_marks: Vec<TimeMark>,
    pub answer_letter: String,
    pub glue_spans: IntervalSet,
    pub raw_text: String,
}

/// What a lenient scan recovers from a rollout that may not be well formed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialResponse {
    pub answer_letter: Option<String>,
    pub glue_spans: IntervalSet,
}

/// Common read access for reward computation over strict or lenient parses.
pub trait ResponseView {
    fn answer(&self) -> Option<&str>;
    fn glue(&self) -> &IntervalSet;
}

impl ResponseView for StructuredResponse {
    fn answer(&self) -> Option<&str> {
        Some(&self.answer_letter)
    }
    fn glue(&self) -> &IntervalSet {
        &self.glue_spans
    }
}

impl ResponseView for PartialResponse {
    fn answer(&self) -> Option<&str> {
        self.answer_letter.as_deref()
    }
    fn glue(&self) -> &IntervalSet {
        &self.glue_spans
    }
}

impl From<StructuredResponse> for PartialResponse {
    fn from(r: StructuredResponse) -> Self {
        PartialResponse { answer_letter: Some(r.answer_letter), glue_spans: r.glue_spans }
    }
}

/// Byte ranges of one tag pair: the whole region (tags included) and its
/// inner content.
#[derive(Debug, Clone, PartialEq)]
struct TagRegion {
    outer: Range<usize>,
    inner: Range<usize>,
}

fn locate(text: &str, (open, close): (&'static str, &'static str)) -> Result<TagRegion, FormatError> {
    let opens: Vec<usize> = text.match_indices(open).map(|(i, _)| i).collect();
    let closes: Vec<usize> = text.match_indices(close).map(|(i, _)| i).collect();
    if opens.len() > 1 {
        return Err(FormatError::DuplicateTag { tag: open, at: opens[1] });
    }
    if closes.len() > 1 {
        return Err(FormatError::DuplicateTag { tag: close, at: closes[1] });
    }
    let start = *opens.first().ok_or(FormatError::MissingTag { tag: open })?;
    let end = *closes.first().ok_or(FormatError::MissingTag { tag: close })?;
    if end < start + open.len() {
        // A closing tag before its opener leaves the region unterminated.
        return Err(FormatError::MissingTag { tag: close });
    }
    Ok(TagRegion { outer: start..end + close.len(), inner: start + open.len()..end })
}

fn number_pattern() -> &'static str {
    r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
}

fn strict_span_list() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let n = number_pattern();
        let pair = format!(r"\(\s*{n}\s*,\s*{n}\s*\)");
        Regex::new(&format!(r"^\s*\[\s*(?:{pair}(?:\s*,\s*{pair})*)?\s*\]\s*$")).unwrap()
    })
}

fn pair_scanner() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let n = number_pattern();
        Regex::new(&format!(r"\(\s*({n})\s*,\s*({n})\s*\)")).unwrap()
    })
}

fn time_mark_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let n = number_pattern();
        Regex::new(&format!(
            r"^\s*(?:({n})\s*s?|\(?\s*({n})\s*s?\s*(?:,|-|–|to)\s*({n})\s*s?\s*\)?)\s*$"
        ))
        .unwrap()
    })
}

fn scan_pairs(content: &str) -> Vec<(f64, f64)> {
    pair_scanner()
        .captures_iter(content)
        .filter_map(|c| Some((c[1].parse().ok()?, c[2].parse().ok()?)))
        .collect()
}

fn parse_span_list(content: &str, region: Range<usize>) -> Result<IntervalSet, FormatError> {
    let malformed = || FormatError::MalformedSpanList { text: content.to_string(), region: region.clone() };
    if !strict_span_list().is_match(content) {
        return Err(malformed());
    }
    IntervalSet::normalize(scan_pairs(content)).map_err(|_| malformed())
}

fn parse_time_marks(think: &str, offset: usize) -> Result<Vec<TimeMark>, FormatError> {
    let mut marks = Vec::new();
    let mut rest = 0;
    while let Some(found) = think[rest..].find(TIME.0) {
        let open = rest + found;
        let inner_start = open + TIME.0.len();
        let Some(close_rel) = think[inner_start..].find(TIME.1) else {
            return Err(FormatError::MalformedTimeMark {
                text: think[open..].to_string(),
                region: offset + open..offset + think.len(),
            });
        };
        let inner = &think[inner_start..inner_start + close_rel];
        let bad = || FormatError::MalformedTimeMark {
            text: inner.to_string(),
            region: offset + inner_start..offset + inner_start + close_rel,
        };
        let caps = time_mark_pattern().captures(inner).ok_or_else(bad)?;
        let mark = match (caps.get(1), caps.get(2), caps.get(3)) {
            (Some(p), _, _) => TimeMark::Point(p.as_str().parse().map_err(|_| bad())?),
            (None, Some(a), Some(b)) => TimeMark::Range(
                a.as_str().parse().map_err(|_| bad())?,
                b.as_str().parse().map_err(|_| bad())?,
            ),
            _ => return Err(bad()),
        };
        marks.push(mark);
        rest = inner_start + close_rel + TIME.1.len();
    }
    Ok(marks)
}

struct Located {
    think: TagRegion,
    answer: TagRegion,
    glue: TagRegion,
    response: StructuredResponse,
}

fn parse_located(text: &str, options: &[&str]) -> Result<Located, FormatError> {
    let think = locate(text, THINK)?;
    let answer = locate(text, ANSWER)?;
    let glue = locate(text, GLUE)?;

    let think_text = &text[think.inner.clone()];
    let time_marks = parse_time_marks(think_text, think.inner.start)?;

    let letter = text[answer.inner.clone()].trim();
    if !options.contains(&letter) {
        return Err(FormatError::UnknownAnswerLetter {
            letter: letter.to_string(),
            region: answer.inner.clone(),
        });
    }

    let glue_spans = parse_span_list(&text[glue.inner.clone()], glue.inner.clone())?;

    let response = StructuredResponse {
        think_text: think_text.to_string(),
        time_marks,
        answer_letter: letter.to_string(),
        glue_spans,
        raw_text: text.to_string(),
    };
    Ok(Located { think, answer, glue, response })
}

/// Parses a full rollout. Each of the three tags must occur exactly once;
/// order and inter-tag text are checked by [`format_reward`], not here.
pub fn parse_response(text: &str, options: &[&str]) -> Result<StructuredResponse, FormatError> {
    parse_located(text, options).map(|l| l.response)
}

/// 1 iff the rollout parses, its tags appear as think → answer → glue, and
/// nothing but whitespace sits outside the tags.
pub fn format_reward(text: &str, options: &[&str]) -> f64 {
    let Ok(loc) = parse_located(text, options) else {
        return 0.0;
    };
    let ordered = loc.think.outer.end <= loc.answer.outer.start
        && loc.answer.outer.end <= loc.glue.outer.start;
    if !ordered {
        return 0.0;
    }
    let gaps = [
        &text[..loc.think.outer.start],
        &text[loc.think.outer.end..loc.answer.outer.start],
        &text[loc.answer.outer.end..loc.glue.outer.start],
        &text[loc.glue.outer.end..],
    ];
    if gaps.iter().all(|g| g.trim().is_empty()) {
        1.0
    } else {
        0.0
    }
}

/// Best-effort recovery of the answer letter and glue spans from a rollout
/// that may violate the grammar. The first `<answer>` region supplies the
/// letter (if it is one of `options`); every `(s, e)` pair after the first
/// `<glue>` (up to `</glue>` or end of text) supplies a span.
pub fn extract_lenient(text: &str, options: &[&str]) -> PartialResponse {
    let answer_letter = text.find(ANSWER.0).and_then(|open| {
        let start = open + ANSWER.0.len();
        let close = text[start..].find(ANSWER.1)?;
        let letter = text[start..start + close].trim();
        options.contains(&letter).then(|| letter.to_string())
    });
    let glue_spans = text
        .find(GLUE.0)
        .map(|open| {
            let start = open + GLUE.0.len();
            let end = text[start..].find(GLUE.1).map_or(text.len(), |c| start + c);
            IntervalSet::normalize(scan_pairs(&text[start..end])).unwrap_or_default()
        })
        .unwrap_or_default();
    PartialResponse { answer_letter, glue_spans }
}

/// Strict parse when possible, lenient extraction otherwise.
pub fn parse_or_extract(text: &str, options: &[&str]) -> PartialResponse {
    match parse_response(text, options) {
        Ok(r) => r.into(),
        Err(_) => extract_lenient(text, options),
    }
}

impl StructuredResponse {
    /// Renders the canonical template form.
    pub fn to_text(&self) -> String {
        let spans: Vec<String> = self
            .glue_spans
            .intervals()
            .iter()
            .map(|iv| format!("({:?}, {:?})", iv.start, iv.end))
            .collect();
        format!(
            "<think>{}</think><answer>{}</answer><glue>[{}]</glue>",
            self.think_text,
            self.answer_letter,
            spans.join(", ")
        )
    }
}

/// Per-token glue classification for one rollout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpanMap {
    /// Maximal runs of glue tokens, as token-index ranges.
    pub glue_ranges: Vec<Range<usize>>,
    pub total_len: usize,
    is_glue: Vec<bool>,
}

impl TokenSpanMap {
    pub fn is_glue(&self, token: usize) -> bool {
        self.is_glue[token]
    }

    pub fn glue_count(&self) -> usize {
        self.is_glue.iter().filter(|g| **g).count()
    }

    pub fn from_flags(is_glue: Vec<bool>) -> Self {
        let mut glue_ranges: Vec<Range<usize>> = Vec::new();
        for (i, g) in is_glue.iter().enumerate() {
            if !g {
                continue;
            }
            match glue_ranges.last_mut() {
                Some(r) if r.end == i => r.end = i + 1,
                _ => glue_ranges.push(i..i + 1),
            }
        }
        TokenSpanMap { glue_ranges, total_len: is_glue.len(), is_glue }
    }

    pub fn flags(&self) -> &[bool] {
        &self.is_glue
    }
}

/// Byte ranges of every `<glue>…</glue>` region, tags included. An unclosed
/// `<glue>` runs to the end of the text.
pub fn glue_regions(text: &str) -> Vec<Range<usize>> {
    let mut regions = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find(GLUE.0) {
        let open = from + rel;
        let after = open + GLUE.0.len();
        let end = text[after..].find(GLUE.1).map_or(text.len(), |c| after + c + GLUE.1.len());
        regions.push(open..end);
        from = end;
    }
    regions
}

/// Marks a token as glue iff any of its characters fall inside a glue
/// region. `tokens` must concatenate to `text`.
pub fn glue_token_mask<S: AsRef<str>>(tokens: &[S], text: &str) -> Result<TokenSpanMap> {
    let mut offset = 0;
    let mut bounds = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let tok = tok.as_ref();
        let end = offset + tok.len();
        if text.get(offset..end) != Some(tok) {
            let at = tok
                .bytes()
                .zip(text.as_bytes().get(offset..).unwrap_or_default())
                .take_while(|(a, b)| a == *b)
                .count();
            return Err(Error::ConcatenationMismatch { at: offset + at });
        }
        bounds.push(offset..end);
        offset = end;
    }
    if offset != text.len() {
        return Err(Error::ConcatenationMismatch { at: offset });
    }
    let regions = glue_regions(text);
    let flags = bounds
        .iter()
        .map(|b| regions.iter().any(|r| b.start < r.end && b.end > r.start))
        .collect();
    Ok(TokenSpanMap::from_flags(flags))
}

/// Splits text into symbol tokens: each `<tag>` or `</tag>` is one token,
/// every other character is its own token.
pub fn symbol_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '<' {
            if let Some(close) = text[i..].find('>') {
                let tag = &text[i..i + close + 1];
                let body = tag.trim_start_matches("</").trim_start_matches('<').trim_end_matches('>');
                if !body.is_empty() && body.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') {
                    out.push(tag.to_string());
                    while let Some(&(j, _)) = chars.peek() {
                        if j < i + tag.len() {
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    continue;
                }
            }
        }
        out.push(c.to_string());
    }
    out
}

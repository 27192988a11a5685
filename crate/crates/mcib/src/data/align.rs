//! Word alignments and the canned-laughter trimming rule: an utterance's
//! usable segment runs from the first word's start timestamp to the last
//! word's end timestamp, dropping leading and trailing non-speech audio.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WordAlignment {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

impl WordAlignment {
    pub fn new(word: impl Into<String>, start: f64, end: f64) -> Result<Self> {
        let word = word.into();
        if !(start.is_finite() && end.is_finite()) || start < 0.0 {
            return Err(Error::data(format!(
                "word '{word}': timestamps must be finite and non-negative"
            )));
        }
        if end <= start {
            return Err(Error::data(format!(
                "word '{word}': end {end} must be after start {start}"
            )));
        }
        Ok(WordAlignment { word, start, end })
    }
}

/// Trim bounds for one utterance: (first word's start, last word's end).
/// The input must be in utterance order; out-of-order start times are a
/// violated precondition and reported, not silently sorted.
pub fn trim_bounds(alignments: &[WordAlignment]) -> Result<(f64, f64)> {
    let first = alignments
        .first()
        .ok_or_else(|| Error::data("utterance has no word alignments"))?;
    for pair in alignments.windows(2) {
        if pair[1].start < pair[0].start {
            return Err(Error::data(format!(
                "alignments out of order: '{}' starts at {} after '{}' at {}",
                pair[1].word, pair[1].start, pair[0].word, pair[0].start
            )));
        }
    }
    let last = alignments.last().expect("non-empty");
    if last.end <= first.start {
        return Err(Error::data(format!(
            "empty segment after trimming: start {} >= end {}",
            first.start, last.end
        )));
    }
    Ok((first.start, last.end))
}

/// Parses alignment files: one word per line as `word<TAB>start<TAB>end`,
/// utterances separated by blank lines. Returns one alignment list per
/// utterance.
pub fn parse_alignment_file(text: &str) -> Result<Vec<Vec<WordAlignment>>> {
    let mut utterances = Vec::new();
    let mut current: Vec<WordAlignment> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                utterances.push(std::mem::take(&mut current));
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "line {}: expected word<TAB>start<TAB>end, got '{line}'",
                line_no + 1
            )));
        }
        let start: f64 = fields[1].trim().parse().map_err(|_| {
            Error::data(format!("line {}: bad start '{}'", line_no + 1, fields[1]))
        })?;
        let end: f64 = fields[2].trim().parse().map_err(|_| {
            Error::data(format!("line {}: bad end '{}'", line_no + 1, fields[2]))
        })?;
        current.push(WordAlignment::new(fields[0], start, end)?);
    }
    if !current.is_empty() {
        utterances.push(current);
    }
    Ok(utterances)
}

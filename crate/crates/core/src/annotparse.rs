//! Parenthetical annotation parsing.
//!
//! Target sentences annotate terms as `Korean head(english term)`. Everything
//! here operates on [`NormalizedText`]: NFC-composed, with full-width
//! parentheses folded to ASCII so that `（` and `(` are interchangeable.

use std::ops::Range;

use unicode_normalization::UnicodeNormalization;

const HEAD_HINT_CHARS: usize = 40;

/// Text after normalization, together with the input it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    text: String,
    original: String,
}

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn original(&self) -> &str {
        &self.original
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// NFC-normalizes `text` and maps `（` / `）` to `(` / `)`. Nothing else changes.
pub fn normalize(text: &str) -> NormalizedText {
    let normalized = text
        .nfc()
        .map(|c| match c {
            '\u{FF08}' => '(',
            '\u{FF09}' => ')',
            other => other,
        })
        .collect();
    NormalizedText {
        text: normalized,
        original: text.to_owned(),
    }
}

/// One top-level `( ... )` group found in a target string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentheticalAnnotation {
    /// Content between the parentheses, trimmed.
    pub inner_text: String,
    /// Byte range of the group including both parentheses.
    pub inner_span: Range<usize>,
    /// Up to 40 characters preceding the opening parenthesis. Advisory only.
    pub head_hint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub annotations: Vec<ParentheticalAnnotation>,
    /// Parenthesis characters that had no partner and were read as literal text.
    pub unbalanced: usize,
}

/// Byte spans `(open, close)` of every top-level balanced group, in order,
/// plus the number of unmatched parenthesis characters.
fn top_level_groups(text: &str) -> (Vec<(usize, usize)>, usize) {
    let mut open: Vec<usize> = Vec::new();
    let mut unmatched_close = 0;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, c) in text.char_indices() {
        match c {
            '(' => open.push(i),
            ')' => match open.pop() {
                Some(start) => pairs.push((start, i)),
                None => unmatched_close += 1,
            },
            _ => {}
        }
    }
    let unbalanced = unmatched_close + open.len();

    // Pairs are emitted in order of their closing parenthesis, so an enclosing
    // group always comes after the groups it contains.
    pairs.sort_unstable_by_key(|&(start, _)| start);
    let mut top = Vec::with_capacity(pairs.len());
    let mut covered_until = 0usize;
    for (start, end) in pairs {
        if top.is_empty() || start >= covered_until {
            top.push((start, end));
            covered_until = end + 1;
        }
    }
    (top, unbalanced)
}

fn head_hint(before: &str) -> String {
    // Never reach back past an earlier group.
    let region = match before.rfind([')', '(']) {
        Some(i) => &before[i + 1..],
        None => before,
    };
    let total = region.chars().count();
    let mut hint: &str = region;
    if total > HEAD_HINT_CHARS {
        let (cut, _) = region.char_indices().nth(total - HEAD_HINT_CHARS).unwrap();
        hint = &region[cut..];
        // Window starts mid-word: drop the partial word.
        let prev = region[..cut].chars().next_back();
        if prev.is_some_and(|c| !is_boundary(c)) {
            if let Some(b) = hint.find(is_boundary) {
                let width = hint[b..].chars().next().map_or(0, char::len_utf8);
                hint = &hint[b + width..];
            }
        }
    }
    hint.trim().to_owned()
}

fn is_boundary(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '。' | '、' | '，' | '「' | '」')
}

/// Returns every top-level balanced parenthetical in left-to-right order.
///
/// Nested groups stay inside their outermost group. Unmatched parentheses are
/// treated as literal text and counted in [`Extraction::unbalanced`].
pub fn extract_annotations(text: &NormalizedText) -> Extraction {
    let s = text.as_str();
    let (groups, unbalanced) = top_level_groups(s);
    let annotations = groups
        .into_iter()
        .map(|(start, end)| ParentheticalAnnotation {
            inner_text: s[start + 1..end].trim().to_owned(),
            inner_span: start..end + 1,
            head_hint: head_hint(&s[..start]),
        })
        .collect();
    Extraction {
        annotations,
        unbalanced,
    }
}

/// Canonical comparison key for a term: NFC, case-folded, trimmed, with
/// internal whitespace runs collapsed to one space.
pub fn term_key(s: &str) -> String {
    let folded = caseless::default_case_fold_str(&normalize(s).text);
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Exact match after case folding and whitespace collapsing. No stemming and
/// no fuzzy matching.
pub fn match_term(inner_text: &str, term: &str) -> bool {
    term_key(inner_text) == term_key(term)
}

/// Removes every parenthetical whose content matches one of `terms`, along with
/// its parentheses. Other parentheticals are left alone. Doubled whitespace
/// created at a removal point is collapsed.
pub fn strip_parentheticals<T: AsRef<str>>(text: &NormalizedText, terms: &[T]) -> String {
    strip_with_spans(text, terms).0
}

/// Like [`strip_parentheticals`], also returning the removed byte spans.
pub fn strip_with_spans<T: AsRef<str>>(
    text: &NormalizedText,
    terms: &[T],
) -> (String, Vec<Range<usize>>) {
    let s = text.as_str();
    if terms.is_empty() {
        return (s.to_owned(), Vec::new());
    }
    let keys: Vec<String> = terms.iter().map(|t| term_key(t.as_ref())).collect();
    let removed: Vec<Range<usize>> = extract_annotations(text)
        .annotations
        .into_iter()
        .filter(|a| {
            let k = term_key(&a.inner_text);
            keys.contains(&k)
        })
        .map(|a| a.inner_span)
        .collect();
    if removed.is_empty() {
        return (s.to_owned(), removed);
    }

    let mut out = String::with_capacity(s.len());
    let mut cursor = 0;
    let mut joined = false;
    for span in &removed {
        push_segment(&mut out, &s[cursor..span.start], joined);
        cursor = span.end;
        joined = true;
    }
    push_segment(&mut out, &s[cursor..], joined);
    if s[removed.last().unwrap().end..].is_empty() {
        let kept = out.trim_end().len();
        out.truncate(kept);
    }
    (out, removed)
}

fn push_segment(out: &mut String, segment: &str, after_removal: bool) {
    let at_join_with_space = out.is_empty() || out.ends_with(char::is_whitespace);
    if after_removal && at_join_with_space {
        out.push_str(segment.trim_start());
    } else {
        out.push_str(segment);
    }
}

//! Tolerant parser for numbered agent responses.
//!
//! Accepted item openers: `1.`, `1)`, `1:`, optionally bold (`**1.**`), with
//! or without an inline label (`1.english: ...`, `1) korean: ...`). Inside an
//! item, `label: value` lines open a field; other non-blank lines continue the
//! current field. Anything before the first item is ignored.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

static ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\*\*)?\s*(\d{1,2})\s*[.):]\s*(?:\*\*)?\s*(.*)$").unwrap());
static FIELD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:[-*]\s*)?(?:\*\*)?(english|korean|score|terms_check|parentheses_count|suggestions)(?:\*\*)?\s*:\s*(.*)$")
        .unwrap()
});
static SCORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\[?\s*(\d{1,2})(?:\.0+)?\s*(?:/\s*10)?\s*\]?").unwrap());

/// One numbered item: its number and fields in order of appearance. The
/// unlabeled field, if any, has label `""`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Item {
    pub number: usize,
    pub fields: Vec<(String, String)>,
}

impl Item {
    /// First field with `label`, falling back to the unlabeled text.
    pub fn text(&self, label: &str) -> Option<&str> {
        self.field(label).or_else(|| self.field(""))
    }

    pub fn field(&self, label: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(l, v)| l == label && !v.is_empty())
            .map(|(_, v)| v.as_str())
    }
}

fn push_field(item: &mut Item, label: &str, value: &str) {
    item.fields.push((label.to_ascii_lowercase(), value.trim().to_owned()));
}

fn continue_field(item: &mut Item, line: &str) {
    match item.fields.last_mut() {
        Some((_, v)) => {
            if !v.is_empty() {
                v.push(' ');
            }
            v.push_str(line.trim());
        }
        None => push_field(item, "", line),
    }
}

fn feed_line(item: &mut Item, line: &str) {
    if let Some(c) = FIELD.captures(line) {
        push_field(item, &c[1], &c[2]);
    } else if !line.trim().is_empty() {
        continue_field(item, line);
    }
}

pub fn parse_items(text: &str) -> Vec<Item> {
    let mut items: Vec<Item> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = ITEM.captures(line) {
            let rest = &c[2];
            // "1.5 GHz" style text is content, not an item opener.
            if !rest.starts_with(|ch: char| ch.is_ascii_digit()) {
                let mut item = Item {
                    number: c[1].parse().unwrap(),
                    fields: Vec::new(),
                };
                if !rest.trim().is_empty() {
                    feed_line(&mut item, rest);
                }
                items.push(item);
                continue;
            }
        }
        if let Some(item) = items.last_mut() {
            feed_line(item, line);
        }
    }
    items
}

/// Exactly items 1..=`n` with a non-empty `label` text each, or the list of
/// problems found.
pub fn numbered_texts(text: &str, label: &str, n: usize) -> Result<Vec<String>, Vec<String>> {
    let mut by_number: BTreeMap<usize, Vec<&Item>> = BTreeMap::new();
    let items = parse_items(text);
    for item in &items {
        by_number.entry(item.number).or_default().push(item);
    }
    let mut problems = Vec::new();
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        match by_number.get(&i).map(Vec::as_slice) {
            None => problems.push(format!("item {i} is missing")),
            Some([item]) => match item.text(label) {
                Some(t) => out.push(t.to_owned()),
                None => problems.push(format!("item {i} has no {label} text")),
            },
            Some(_) => problems.push(format!("item {i} appears more than once")),
        }
    }
    let extra: Vec<usize> = by_number.keys().copied().filter(|k| *k == 0 || *k > n).collect();
    if !extra.is_empty() {
        problems.push(format!("expected exactly {n} items, found extra item(s) {extra:?}"));
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(problems)
    }
}

/// `10/10`, `[7/10]`, `8` -> value in 0..=10.
pub fn parse_score(s: &str) -> Option<u8> {
    let c = SCORE.captures(s.trim())?;
    let v: u8 = c[1].parse().ok()?;
    (v <= 10).then_some(v)
}

/// `[term a: Yes, term b: No]` -> pairs. Unparseable entries are skipped.
pub fn parse_terms_check(s: &str) -> Vec<(String, bool)> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .filter_map(|part| {
            let (term, answer) = part.rsplit_once(':')?;
            let yes = match answer.trim().to_ascii_lowercase().as_str() {
                "yes" | "y" | "true" | "o" => true,
                "no" | "n" | "false" | "x" => false,
                _ => return None,
            };
            Some((term.trim().trim_matches('"').to_owned(), yes))
        })
        .collect()
}

/// One sentence's evaluator block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalBlock {
    pub score: Option<u8>,
    pub raw_score: Option<String>,
    pub terms_check: Vec<(String, bool)>,
    pub parentheses_count: Option<usize>,
    pub suggestions: String,
}

/// Evaluator blocks keyed by item number. Duplicate numbers keep the first.
pub fn parse_evaluation(text: &str) -> BTreeMap<usize, EvalBlock> {
    let mut out = BTreeMap::new();
    for item in parse_items(text) {
        if out.contains_key(&item.number) {
            continue;
        }
        let raw_score = item.field("score").map(str::to_owned);
        out.insert(
            item.number,
            EvalBlock {
                score: raw_score.as_deref().and_then(parse_score),
                raw_score,
                terms_check: item.field("terms_check").map(parse_terms_check).unwrap_or_default(),
                parentheses_count: item
                    .field("parentheses_count")
                    .and_then(|s| s.trim_matches(|c| c == '[' || c == ']').trim().parse().ok()),
                suggestions: item.field("suggestions").unwrap_or_default().to_owned(),
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_styles() {
        let text = "Here you go:\n1.english: one\n2) two\n3. English: three\n**4.** english: four\n5:five\n6.english: six\ncontinued\n7.english: seven";
        let got = numbered_texts(text, "english", 7).unwrap();
        assert_eq!(got[1], "two");
        assert_eq!(got[2], "three");
        assert_eq!(got[3], "four");
        assert_eq!(got[4], "five");
        assert_eq!(got[5], "six continued");
        let wrong = text.replace("3. English: three", "3. korean: 셋");
        assert_eq!(numbered_texts(&wrong, "english", 7).unwrap_err(), vec!["item 3 has no english text"]);
    }

    #[test]
    fn labelled_field_preferred() {
        let text = "1.\nenglish: source\nkorean: 번역";
        assert_eq!(numbered_texts(text, "korean", 1).unwrap(), vec!["번역"]);
        assert_eq!(numbered_texts(text, "english", 1).unwrap(), vec!["source"]);
    }

    #[test]
    fn count_problems() {
        let six = (1..=6).map(|i| format!("{i}.english: s{i}")).collect::<Vec<_>>().join("\n");
        let err = numbered_texts(&six, "english", 7).unwrap_err();
        assert_eq!(err, vec!["item 7 is missing"]);
        let eight = format!("{six}\n7.english: a\n8.english: b");
        assert!(numbered_texts(&eight, "english", 7).unwrap_err()[0].contains("extra"));
    }

    #[test]
    fn decimals_are_content() {
        let items = parse_items("1. rate\n2.5 GHz band");
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text(""), Some("rate 2.5 GHz band"));
    }

    #[test]
    fn scores() {
        assert_eq!(parse_score("10/10"), Some(10));
        assert_eq!(parse_score("[7/10]"), Some(7));
        assert_eq!(parse_score(" 8 / 10 "), Some(8));
        assert_eq!(parse_score("9.0/10"), Some(9));
        assert_eq!(parse_score("ten"), None);
        assert_eq!(parse_score("11/10"), None);
    }

    #[test]
    fn evaluator_block() {
        let text = "1.\nenglish: e\nkorean: k\nscore: 10/10\nterms_check: [neural network: Yes, backpropagation: No]\nparentheses_count: 3\nsuggestions: No improvements needed\n2.\nscore: ten";
        let blocks = parse_evaluation(text);
        assert_eq!(blocks[&1].score, Some(10));
        assert_eq!(
            blocks[&1].terms_check,
            vec![("neural network".to_string(), true), ("backpropagation".to_string(), false)]
        );
        assert_eq!(blocks[&1].parentheses_count, Some(3));
        assert_eq!(blocks[&2].score, None);
        assert_eq!(blocks[&2].raw_score.as_deref(), Some("ten"));
    }
}

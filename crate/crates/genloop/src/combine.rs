//! Merging a cluster's seven sentences into three composite pairs.

use ptt_core::SentencePair;
use serde_json::json;

/// Composite label and the 1-based sentences it joins, in order.
pub const RECIPE: [(&str, &[usize]); 3] = [("a", &[1, 4]), ("b", &[2, 5]), ("c", &[3, 6, 7])];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected 7 sentence pairs to combine, got {0}")]
pub struct CombineError(pub usize);

/// Three composites per [`RECIPE`]. Sources and targets are joined with a
/// space; terms are the concatenated term lists. Each output records its
/// recipe under the `composition` key. Ids are `<id_prefix><label>`.
pub fn combine_sentences(pairs: &[SentencePair], id_prefix: &str) -> Result<Vec<SentencePair>, CombineError> {
    if pairs.len() != 7 {
        return Err(CombineError(pairs.len()));
    }
    Ok(RECIPE
        .iter()
        .map(|(label, members)| {
            let parts: Vec<&SentencePair> = members.iter().map(|&m| &pairs[m - 1]).collect();
            let join = |f: fn(&SentencePair) -> &str| parts.iter().map(|p| f(p).trim()).collect::<Vec<_>>().join(" ");
            let mut out = SentencePair {
                id: format!("{id_prefix}{label}"),
                cluster_id: parts[0].cluster_id,
                domain: parts[0].domain,
                split: parts[0].split,
                source: join(|p| &p.source),
                target: join(|p| &p.target),
                terms: parts.iter().flat_map(|p| p.terms.iter().cloned()).collect(),
                extra: parts[0].extra.clone(),
            };
            out.extra.insert(
                "composition".into(),
                json!({
                    "recipe": label,
                    "sentences": members,
                    "from": parts.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(),
                }),
            );
            out
        })
        .collect())
}

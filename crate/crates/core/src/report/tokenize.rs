use serde::{Deserialize, Serialize};

use super::{ReportError, SectionKind, TextReport, Vocabulary, CLS_ID, SEP_ID};
use crate::ehr::StayId;

/// Token range `[start, end)` of one section's body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedReport {
    pub stay_id: StayId,
    pub token_ids: Vec<u32>,
    pub section_spans: Vec<SectionSpan>,
    /// Labels of sections removed to fit `max_seq_len`.
    pub dropped: Vec<String>,
}

/// `[CLS] s1 [SEP] s2 ... [SEP] sn`. When too long, whole temporal sections
/// are dropped from the end of the report (lowest priority first); sections
/// are never cut mid-way.
pub fn tokenize(
    report: &TextReport,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<TokenizedReport, ReportError> {
    let bodies: Vec<Vec<u32>> = report
        .sections
        .iter()
        .map(|s| s.body.split_whitespace().map(|t| vocab.id(t)).collect())
        .collect();
    let length =
        |n: usize| 1 + bodies[..n].iter().map(Vec::len).sum::<usize>() + n.saturating_sub(1);

    let n_static = report
        .sections
        .iter()
        .take_while(|s| s.kind == SectionKind::Static)
        .count();
    let mut keep = bodies.len();
    while keep > n_static && length(keep) > max_seq_len {
        keep -= 1;
    }
    if length(keep) > max_seq_len {
        return Err(ReportError::Unfittable {
            stay_id: report.stay_id.to_string(),
            needed: length(keep),
            max_seq_len,
        });
    }

    let mut token_ids = vec![CLS_ID];
    let mut section_spans = Vec::with_capacity(keep);
    for (i, (sec, ids)) in report.sections.iter().zip(&bodies).take(keep).enumerate() {
        if i > 0 {
            token_ids.push(SEP_ID);
        }
        let start = token_ids.len();
        token_ids.extend_from_slice(ids);
        section_spans.push(SectionSpan {
            label: sec.label.clone(),
            start,
            end: token_ids.len(),
        });
    }
    Ok(TokenizedReport {
        stay_id: report.stay_id.clone(),
        token_ids,
        section_spans,
        dropped: report.sections[keep..]
            .iter()
            .map(|s| s.label.clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{build_vocab, Section, UNK_ID};

    fn report(n_static: usize, n_temporal: usize, words: usize) -> TextReport {
        let mk = |i: usize, kind| Section {
            label: format!("f{i}"),
            body: format!("f{i}: {}", vec!["w"; words - 1].join(" ")),
            kind,
        };
        let mut sections: Vec<_> = (0..n_static).map(|i| mk(i, SectionKind::Static)).collect();
        sections.extend((n_static..n_static + n_temporal).map(|i| mk(i, SectionKind::Temporal)));
        TextReport::from_sections("s".into(), sections)
    }

    #[test]
    fn short_report_unchanged() {
        let r = report(2, 3, 7);
        let v = build_vocab([r.serialized.as_str()], 1).unwrap();
        let t = tokenize(&r, &v, 512).unwrap();
        // 1 + 5*7 + 4 separators
        assert_eq!(t.token_ids.len(), 40);
        assert_eq!(t.section_spans.len(), 5);
        assert!(t.dropped.is_empty());
        let covered: usize = t.section_spans.iter().map(|s| s.end - s.start).sum();
        assert_eq!(covered, 35);
    }

    #[test]
    fn long_report_drops_trailing_sections() {
        // 1 + 60*9 + 59 = 600 tokens
        let r = report(5, 55, 9);
        let v = build_vocab([r.serialized.as_str()], 1).unwrap();
        let t = tokenize(&r, &v, 512).unwrap();
        // oracle: largest k with 1 + 9k + (k-1) <= 512 is k = 51
        let k = (1..=60)
            .filter(|&k| 1 + 9 * k + (k - 1) <= 512)
            .max()
            .unwrap();
        assert_eq!(t.section_spans.len(), k);
        assert_eq!(t.token_ids.len(), 1 + 9 * k + (k - 1));
        assert_eq!(t.dropped.len(), 60 - k);
        assert_eq!(t.dropped[0], format!("f{k}"));
    }

    #[test]
    fn unfittable_static_block() {
        let r = report(5, 2, 9);
        let v = build_vocab([r.serialized.as_str()], 1).unwrap();
        assert!(matches!(
            tokenize(&r, &v, 20),
            Err(ReportError::Unfittable { .. })
        ));
    }

    #[test]
    fn unknown_word_is_unk() {
        let r = report(1, 0, 2);
        let v = build_vocab(["f0:"], 1).unwrap();
        let mut r2 = r.clone();
        r2.sections[0].body = "f0: xyzzy".into();
        let t = tokenize(&r2, &v, 16).unwrap();
        assert_eq!(t.token_ids, vec![CLS_ID, v.id("f0:"), UNK_ID]);
    }
}

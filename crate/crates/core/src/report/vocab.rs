use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use super::ReportError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Closed whitespace vocabulary. Ids 0..5 are the special tokens; the rest
/// are ordered by descending corpus frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    min_frequency: u64,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, min_frequency: u64) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            counts,
            index,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_frequency(&self) -> u64 {
        self.min_frequency
    }

    /// Unknown words map to `[UNK]`.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len() && id != UNK_ID
    }

    /// `token,id,count` rows in id order.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["token", "id", "count"])?;
        for (i, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            w.write_record([t.as_str(), &i.to_string(), &c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, min_frequency: u64) -> Result<Self, ReportError> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in csv::Reader::from_reader(input).records().enumerate() {
            let rec = rec?;
            let id: usize = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ReportError::VocabFile(format!("row {}: bad id", i + 2)))?;
            if id != i {
                return Err(ReportError::VocabFile(format!(
                    "ids not dense at row {}",
                    i + 2
                )));
            }
            tokens.push(rec.get(0).unwrap_or_default().to_owned());
            counts.push(rec.get(2).and_then(|s| s.parse().ok()).unwrap_or(0));
        }
        if tokens.len() < SPECIAL_TOKENS.len() || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS {
            return Err(ReportError::VocabFile(
                "special tokens missing or out of place".into(),
            ));
        }
        Ok(Self::from_parts(tokens, counts, min_frequency))
    }
}

pub fn build_vocab<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    min_frequency: u64,
) -> Result<Vocabulary, ReportError> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    let mut docs = 0usize;
    for doc in corpus {
        docs += 1;
        for tok in doc
            .split_whitespace()
            .filter(|t| !SPECIAL_TOKENS.contains(t))
        {
            *freq.entry(tok).or_default() += 1;
        }
    }
    if docs == 0 {
        return Err(ReportError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_frequency)
        .collect();
    // BTreeMap iteration is lexicographic, so a stable sort on count keeps ties in order
    kept.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut counts = vec![0; SPECIAL_TOKENS.len()];
    for (t, c) in kept {
        tokens.push(t.to_owned());
        counts.push(c);
    }
    Ok(Vocabulary::from_parts(tokens, counts, min_frequency))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_then_lexicographic() {
        let v = build_vocab(["a a b"], 1).unwrap();
        assert_eq!((v.id("a"), v.id("b")), (5, 6));
        let v = build_vocab(["b c c a"], 1).unwrap();
        assert_eq!((v.id("c"), v.id("a"), v.id("b")), (5, 6, 7));
    }

    #[test]
    fn threshold_maps_rare_to_unk() {
        let v = build_vocab(["a a b"], 2).unwrap();
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn deterministic_and_skips_specials() {
        let corpus = ["[CLS] x y [SEP] y", "z [MASK]"];
        let a = build_vocab(corpus, 1).unwrap();
        assert_eq!(a, build_vocab(corpus, 1).unwrap());
        assert_eq!(a.id("[CLS]"), CLS_ID);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn empty_corpus_is_fatal() {
        assert!(matches!(
            build_vocab(std::iter::empty(), 1),
            Err(ReportError::EmptyCorpus)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let v = build_vocab(["a a b rate: 1.2"], 1).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(Vocabulary::read_csv(buf.as_slice(), 1).unwrap(), v);
    }
}

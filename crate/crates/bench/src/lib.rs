use dataref_core::synthetic::{self, SyntheticCorpus};

/// A deterministic corpus of `papers` papers with `refs` references each.
pub fn fixture(papers: usize, refs: usize) -> SyntheticCorpus {
    synthetic::corpus(0xbe4c, &vec![refs; papers])
}

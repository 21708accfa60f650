//! Online pointwise-mutual-information training over raw tokens.
//!
//! Training starts from an all-zero score matrix, repeatedly aligns
//! mini-batches of same-concept cross-language word pairs with the current
//! matrix, re-estimates smoothed PMI values from the aligned token pairs of
//! the batch, and mixes the batch estimate into the running matrix:
//! `next = (1 - mix) * current + mix * batch`. Iterations reshuffle the pair
//! list with a seeded RNG, so training is reproducible.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{global_affine_align, global_affine_score, GapPenalties};
use crate::error::{Error, Result};
use crate::wordlist::Wordlist;

/// Training knobs for [`online_pmi_train`].
#[derive(Debug, Clone)]
pub struct PmiParams {
    pub batch_size: usize,
    /// Full passes over the pair list.
    pub iterations: usize,
    /// Mixing weight of the batch estimate, in `(0, 1]`.
    pub mix: f64,
    pub gap_open: f64,
    pub gap_extend: f64,
    /// Additive smoothing for the batch counts.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PmiParams {
    fn default() -> Self {
        PmiParams {
            batch_size: 256,
            iterations: 10,
            mix: 0.5,
            gap_open: -2.5,
            gap_extend: -1.75,
            epsilon: 0.01,
            seed: 0,
        }
    }
}

/// Symmetric token-pair score matrix with affine gap costs.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiMatrix {
    alphabet: Vec<String>,
    index: BTreeMap<String, usize>,
    scores: Vec<f64>,
    pub gap_open: f64,
    pub gap_extend: f64,
}

impl PmiMatrix {
    /// All-zero matrix over a sorted alphabet.
    pub fn zeros(mut alphabet: Vec<String>, gap_open: f64, gap_extend: f64) -> Self {
        alphabet.sort();
        alphabet.dedup();
        let index = alphabet.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let n = alphabet.len();
        PmiMatrix { alphabet, index, scores: vec![0.0; n * n], gap_open, gap_extend }
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    /// Score of one token pair; tokens outside the alphabet score 0.
    pub fn score(&self, a: &str, b: &str) -> f64 {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) => self.scores[i * self.alphabet.len() + j],
            _ => 0.0,
        }
    }

    pub fn gaps(&self) -> GapPenalties {
        GapPenalties { open: self.gap_open, extend: self.gap_extend }
    }

    /// Serializes as TSV with the gap costs in a comment header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# gap_open={:.17e}\tgap_extend={:.17e}\n",
            self.gap_open, self.gap_extend
        ));
        out.push_str("SYMBOL_A\tSYMBOL_B\tSCORE\n");
        let n = self.alphabet.len();
        for i in 0..n {
            for j in i..n {
                out.push_str(&format!(
                    "{}\t{}\t{:.17e}\n",
                    self.alphabet[i],
                    self.alphabet[j],
                    self.scores[i * n + j]
                ));
            }
        }
        out
    }

    /// Parses the [`PmiMatrix::to_tsv`] format.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut gap_open = None;
        let mut gap_extend = None;
        let mut entries: Vec<(String, String, f64)> = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if let Some(rest) = line.strip_prefix('#') {
                for field in rest.split_whitespace() {
                    if let Some(v) = field.strip_prefix("gap_open=") {
                        gap_open = Some(super::parse_float(v, lineno)?);
                    } else if let Some(v) = field.strip_prefix("gap_extend=") {
                        gap_extend = Some(super::parse_float(v, lineno)?);
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "SYMBOL_A\tSYMBOL_B\tSCORE" {
                    return Err(Error::parse_at_line(lineno, "expected SYMBOL_A/SYMBOL_B/SCORE header"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse_at_line(lineno, "expected three fields"));
            }
            entries.push((
                fields[0].to_owned(),
                fields[1].to_owned(),
                super::parse_float(fields[2], lineno)?,
            ));
        }
        let gap_open = gap_open.ok_or_else(|| Error::Format("missing gap_open header".into()))?;
        let gap_extend =
            gap_extend.ok_or_else(|| Error::Format("missing gap_extend header".into()))?;
        let alphabet: Vec<String> = entries
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        let mut m = PmiMatrix::zeros(alphabet, gap_open, gap_extend);
        let n = m.alphabet.len();
        for (a, b, s) in entries {
            let i = m.index[&a];
            let j = m.index[&b];
            m.scores[i * n + j] = s;
            m.scores[j * n + i] = s;
        }
        Ok(m)
    }
}

/// Alignment similarity of two token sequences under a PMI matrix.
pub fn pmi_similarity<S: AsRef<str>>(a: &[S], b: &[S], m: &PmiMatrix) -> f64 {
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    global_affine_score(&a, &b, |x, y| m.score(x, y), m.gaps())
}

/// Trains a PMI matrix on all same-concept cross-language word pairs.
pub fn online_pmi_train(wl: &Wordlist, params: &PmiParams) -> Result<PmiMatrix> {
    if params.batch_size == 0 {
        return Err(Error::Argument("batch_size must be positive".into()));
    }
    if params.iterations == 0 {
        return Err(Error::Argument("iterations must be positive".into()));
    }
    if !(params.mix > 0.0 && params.mix <= 1.0) {
        return Err(Error::Argument(format!("mix must lie in (0, 1], got {}", params.mix)));
    }

    // Same-concept, cross-language pairs (entry indices into wl).
    let entry_pos: BTreeMap<&str, usize> =
        wl.entries().iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for concept in wl.concepts() {
        let of: Vec<usize> =
            wl.entries_for_concept(concept).map(|e| entry_pos[e.id.as_str()]).collect();
        for (x, &p) in of.iter().enumerate() {
            for &q in &of[(x + 1)..] {
                if wl.entries()[p].language != wl.entries()[q].language {
                    pairs.push((p, q));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Argument(
            "no same-concept cross-language word pairs to train on".into(),
        ));
    }

    let alphabet: Vec<String> =
        wl.entries().iter().flat_map(|e| e.tokens.iter().cloned()).collect();
    let mut m = PmiMatrix::zeros(alphabet, params.gap_open, params.gap_extend);
    let k = m.alphabet.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.iterations {
        pairs.shuffle(&mut rng);
        for batch in pairs.chunks(params.batch_size) {
            // Ordered joint counts over aligned token pairs of the batch.
            let mut counts = vec![0.0f64; k * k];
            let mut total = 0.0f64;
            for &(p, q) in batch {
                let a: Vec<&str> = wl.entries()[p].tokens.iter().map(String::as_str).collect();
                let b: Vec<&str> = wl.entries()[q].tokens.iter().map(String::as_str).collect();
                let (_, cols) = global_affine_align(&a, &b, |x, y| m.score(x, y), m.gaps());
                for (ia, ib) in cols {
                    if let (Some(ia), Some(ib)) = (ia, ib) {
                        let i = m.index[a[ia]];
                        let j = m.index[b[ib]];
                        counts[i * k + j] += 1.0;
                        counts[j * k + i] += 1.0;
                        total += 2.0;
                    }
                }
            }
            if total == 0.0 {
                continue; // nothing aligned in this batch
            }
            // Smoothed joint, consistent marginals, PMI estimate.
            let smoothed_total = total + params.epsilon * (k * k) as f64;
            let joint = |c: f64| (c + params.epsilon) / smoothed_total;
            let mut marginal = vec![0.0f64; k];
            for i in 0..k {
                for j in 0..k {
                    marginal[i] += joint(counts[i * k + j]);
                }
            }
            for i in 0..k {
                for j in 0..k {
                    let b = (joint(counts[i * k + j]) / (marginal[i] * marginal[j])).ln();
                    let cell = &mut m.scores[i * k + j];
                    *cell = (1.0 - params.mix) * *cell + params.mix * b;
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairsim::sigmoid_distance;
    use crate::wordlist::WordEntry;

    fn entry(id: &str, lang: &str, concept: &str, tokens: &str) -> WordEntry {
        WordEntry {
            id: id.into(),
            language: lang.into(),
            concept: concept.into(),
            tokens: tokens.split(' ').map(str::to_owned).collect(),
            gold_cognate_id: None,
        }
    }

    fn identical_pair_wordlist() -> Wordlist {
        let words =
            [("hand", "h a n t"), ("water", "v a s a"), ("sun", "s o n"), ("moon", "m e n o")];
        let mut entries = Vec::new();
        for (i, (c, w)) in words.iter().enumerate() {
            entries.push(entry(&format!("a{i}"), "la", c, w));
            entries.push(entry(&format!("b{i}"), "lb", c, w));
        }
        Wordlist::new(entries).unwrap()
    }

    #[test]
    fn identical_pairs_turn_diagonal_positive() {
        let wl = identical_pair_wordlist();
        let params = PmiParams { iterations: 1, batch_size: 16, seed: 4, ..Default::default() };
        let m = online_pmi_train(&wl, &params).unwrap();
        for tok in ["h", "a", "n", "t", "v", "s", "o", "m", "e"] {
            assert!(m.score(tok, tok) > 0.0, "diagonal for '{tok}' not positive");
        }
    }

    #[test]
    fn training_is_reproducible_and_sensitive_to_seed() {
        let wl = identical_pair_wordlist();
        let p1 = PmiParams { iterations: 3, batch_size: 2, seed: 11, ..Default::default() };
        let a = online_pmi_train(&wl, &p1).unwrap();
        let b = online_pmi_train(&wl, &p1).unwrap();
        assert_eq!(a, b);
        let p2 = PmiParams { seed: 12, ..p1 };
        let c = online_pmi_train(&wl, &p2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_pair_list_is_rejected() {
        // One language only: no cross-language pairs.
        let wl = Wordlist::new(vec![entry("1", "la", "hand", "h a")]).unwrap();
        assert!(matches!(
            online_pmi_train(&wl, &PmiParams::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn similar_words_score_below_half_distance() {
        let wl = identical_pair_wordlist();
        let m = online_pmi_train(
            &wl,
            &PmiParams { iterations: 5, batch_size: 8, seed: 2, ..Default::default() },
        )
        .unwrap();
        let hand: Vec<String> = "h a n t".split(' ').map(str::to_owned).collect();
        let moon: Vec<String> = "m e n o".split(' ').map(str::to_owned).collect();
        let d_same = sigmoid_distance(pmi_similarity(&hand, &hand, &m));
        let d_diff = sigmoid_distance(pmi_similarity(&hand, &moon, &m));
        assert!(d_same < 0.5);
        assert!(d_same < d_diff);
    }

    #[test]
    fn matrix_round_trips_through_tsv() {
        let wl = identical_pair_wordlist();
        let m = online_pmi_train(
            &wl,
            &PmiParams { iterations: 2, batch_size: 4, seed: 8, ..Default::default() },
        )
        .unwrap();
        let text = m.to_tsv();
        let back = PmiMatrix::from_tsv(&text).unwrap();
        assert_eq!(m.alphabet(), back.alphabet());
        assert_eq!(m.gap_open, back.gap_open);
        for a in m.alphabet() {
            for b in m.alphabet() {
                assert!((m.score(a, b) - back.score(a, b)).abs() < 1e-12);
            }
        }
    }
}

//! Log-odds scorers trained from recurring sound correspondences.
//!
//! For every unordered language pair the trainer compares the distribution of
//! aligned class pairs in same-concept words (the attested distribution)
//! against alignments of concept-shuffled word pairs (the expected
//! distribution, averaged over seeded permutations). The per-pair score of a
//! symbol pair blends the generic table score one-to-one with
//! `log2((attested + eps) / (expected + eps))`, so correspondences that recur
//! more often than chance score above the generic table and never-attested
//! matches keep their generic score.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{class_alignment_distance, ConceptDistanceMatrix, ScoreTable};
use crate::align::global_affine_align;
use crate::error::{Error, Result};
use crate::soundmodel::SoundClassModel;
use crate::wordlist::Wordlist;

/// Training knobs for [`lexstat_train`].
#[derive(Debug, Clone)]
pub struct LexstatParams {
    /// Number of concept-shuffled permutations for the expected distribution.
    pub n_perm: usize,
    /// Attested pairs are restricted to word pairs at most this far apart
    /// under the generic alignment distance.
    pub prefilter_max_dist: f64,
    /// Additive smoothing inside the log-odds ratio.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for LexstatParams {
    fn default() -> Self {
        LexstatParams { n_perm: 100, prefilter_max_dist: 0.6, epsilon: 0.01, seed: 0 }
    }
}

/// Trained per-language-pair score tables with a generic fallback.
#[derive(Debug, Clone)]
pub struct LexstatScorer {
    model: SoundClassModel,
    generic: ScoreTable,
    /// Keyed by sorted language pair; pairs without shared concepts are
    /// absent and fall back to the generic table.
    pair_tables: BTreeMap<(String, String), ScoreTable>,
    languages: BTreeSet<String>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// FNV-1a; used to derive independent per-language-pair RNG streams from the
/// top-level seed.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl LexstatScorer {
    /// Whether a language pair fell back to the generic table (no shared
    /// concepts during training).
    pub fn is_fallback(&self, lang_a: &str, lang_b: &str) -> bool {
        !self.pair_tables.contains_key(&pair_key(lang_a, lang_b))
    }

    /// The table used for one language pair.
    pub fn table(&self, lang_a: &str, lang_b: &str) -> Result<&ScoreTable> {
        for l in [lang_a, lang_b] {
            if !self.languages.contains(l) {
                return Err(Error::Argument(format!("language '{l}' was not seen during training")));
            }
        }
        Ok(self.pair_tables.get(&pair_key(lang_a, lang_b)).unwrap_or(&self.generic))
    }

    pub fn generic(&self) -> &ScoreTable {
        &self.generic
    }

    /// Alignment distance of two words under the pair's trained table.
    pub fn distance<S: AsRef<str>>(
        &self,
        a: &[S],
        lang_a: &str,
        b: &[S],
        lang_b: &str,
    ) -> Result<f64> {
        let table = self.table(lang_a, lang_b)?;
        let ca = self.model.class_string(a);
        let cb = self.model.class_string(b);
        if ca.is_empty() && cb.is_empty() {
            return Err(Error::UndefinedMetric(
                "alignment distance of two empty class strings".into(),
            ));
        }
        Ok(class_alignment_distance(&ca, &cb, table))
    }
}

/// Trains one scorer per unordered language pair (including same-language
/// pairs, which cover synonym comparisons).
pub fn lexstat_train(
    wl: &Wordlist,
    model: &SoundClassModel,
    generic: &ScoreTable,
    params: &LexstatParams,
) -> Result<LexstatScorer> {
    if params.n_perm == 0 {
        return Err(Error::Argument("n_perm must be positive".into()));
    }
    if wl.entries().is_empty() {
        return Err(Error::Argument("cannot train on an empty wordlist".into()));
    }

    // Class strings per entry, precomputed once.
    let class_strings: Vec<Vec<char>> =
        wl.entries().iter().map(|e| model.class_string(&e.tokens)).collect();
    let entry_pos: BTreeMap<&str, usize> =
        wl.entries().iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();

    let mut pair_tables = BTreeMap::new();
    let langs = wl.languages().to_vec();
    for (i, la) in langs.iter().enumerate() {
        for lb in &langs[i..] {
            // Same-concept word pairs for this language pair.
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for concept in wl.concepts() {
                let of_a: Vec<usize> = wl
                    .entries_for_concept(concept)
                    .filter(|e| &e.language == la)
                    .map(|e| entry_pos[e.id.as_str()])
                    .collect();
                let of_b: Vec<usize> = wl
                    .entries_for_concept(concept)
                    .filter(|e| &e.language == lb)
                    .map(|e| entry_pos[e.id.as_str()])
                    .collect();
                if la == lb {
                    for (x, &p) in of_a.iter().enumerate() {
                        for &q in &of_a[(x + 1)..] {
                            pairs.push((p, q));
                        }
                    }
                } else {
                    for &p in &of_a {
                        for &q in &of_b {
                            pairs.push((p, q));
                        }
                    }
                }
            }
            if pairs.is_empty() {
                continue; // fallback pair
            }

            let gaps = generic.gaps();
            let score = |a: &char, b: &char| generic.score(*a, *b);

            // Attested correspondence counts from close same-concept pairs.
            let mut attested: BTreeMap<(char, char), f64> = BTreeMap::new();
            let mut attested_total = 0.0;
            for &(p, q) in &pairs {
                let (ca, cb) = (&class_strings[p], &class_strings[q]);
                if ca.is_empty() && cb.is_empty() {
                    continue;
                }
                if class_alignment_distance(ca, cb, generic) > params.prefilter_max_dist {
                    continue;
                }
                let (_, cols) = global_affine_align(ca, cb, score, gaps);
                for (ia, ib) in cols {
                    if let (Some(ia), Some(ib)) = (ia, ib) {
                        let key = sorted_pair(ca[ia], cb[ib]);
                        *attested.entry(key).or_insert(0.0) += 1.0;
                        attested_total += 1.0;
                    }
                }
            }

            // Expected counts from concept-shuffled pairings.
            let mut rng = ChaCha8Rng::seed_from_u64(
                params.seed ^ fnv1a(format!("{la}\u{1f}{lb}").as_bytes()),
            );
            let mut expected: BTreeMap<(char, char), f64> = BTreeMap::new();
            let mut expected_total = 0.0;
            let mut rhs: Vec<usize> = pairs.iter().map(|&(_, q)| q).collect();
            for _ in 0..params.n_perm {
                rhs.shuffle(&mut rng);
                for (&(p, _), &q) in pairs.iter().zip(rhs.iter()) {
                    let (ca, cb) = (&class_strings[p], &class_strings[q]);
                    if ca.is_empty() && cb.is_empty() {
                        continue;
                    }
                    let (_, cols) = global_affine_align(ca, cb, score, gaps);
                    for (ia, ib) in cols {
                        if let (Some(ia), Some(ib)) = (ia, ib) {
                            let key = sorted_pair(ca[ia], cb[ib]);
                            *expected.entry(key).or_insert(0.0) += 1.0;
                            expected_total += 1.0;
                        }
                    }
                }
            }

            // Blend: generic score plus log-odds of the normalized
            // distributions, weighted one-to-one.
            let mut table = ScoreTable::new(
                &format!("lexstat:{la}|{lb}"),
                -2.0,
                generic.gap_open,
                generic.gap_extend,
            );
            let mut symbols: BTreeSet<char> = BTreeSet::new();
            for (a, b, _) in generic.entries() {
                symbols.insert(a);
                symbols.insert(b);
            }
            for key in attested.keys().chain(expected.keys()) {
                symbols.insert(key.0);
                symbols.insert(key.1);
            }
            let syms: Vec<char> = symbols.into_iter().collect();
            for (i, &a) in syms.iter().enumerate() {
                for &b in &syms[i..] {
                    let key = sorted_pair(a, b);
                    let p_att = if attested_total > 0.0 {
                        attested.get(&key).copied().unwrap_or(0.0) / attested_total
                    } else {
                        0.0
                    };
                    let p_exp = if expected_total > 0.0 {
                        expected.get(&key).copied().unwrap_or(0.0) / expected_total
                    } else {
                        0.0
                    };
                    let log_odds = ((p_att + params.epsilon) / (p_exp + params.epsilon)).log2();
                    table.set(a, b, generic.score(a, b) + log_odds);
                }
            }
            pair_tables.insert(pair_key(la, lb), table);
        }
    }

    Ok(LexstatScorer {
        model: model.clone(),
        generic: generic.clone(),
        pair_tables,
        languages: wl.languages().iter().cloned().collect(),
    })
}

fn sorted_pair(a: char, b: char) -> (char, char) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Convenience: distance matrices under a trained scorer (used by tests).
#[allow(dead_code)]
pub(crate) fn lexstat_matrices(
    wl: &Wordlist,
    scorer: &LexstatScorer,
) -> Result<Vec<ConceptDistanceMatrix>> {
    super::build_concept_matrices(wl, &super::Measure::LexStat { scorer })
}

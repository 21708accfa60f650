//! Word-pair distance measures and per-concept distance matrices.
//!
//! All measures map a pair of token sequences onto a distance in `[0, 1]`:
//!
//! * [`ned`] — edit distance on raw tokens, normalized by the longer word.
//! * [`sca_distance`] — affine-gap alignment of sound-class strings under a
//!   symbol score table, rescaled by self-similarity.
//! * [`LexstatScorer::distance`] — like `sca_distance` but with per-language-
//!   pair tables blending the generic scores with trained log-odds of
//!   recurring sound correspondences.
//! * [`pmi_similarity`] + [`sigmoid_distance`] — alignment under an online-
//!   trained pointwise-mutual-information matrix over raw tokens, squashed to
//!   a distance.

mod lexstat;
mod pmi;

pub use lexstat::{lexstat_train, LexstatParams, LexstatScorer};
pub use pmi::{online_pmi_train, pmi_similarity, PmiMatrix, PmiParams};

use std::collections::BTreeMap;

use crate::align::{global_affine_score, GapPenalties};
use crate::error::{Error, Result};
use crate::soundmodel::{SoundClassModel, WILDCARD};
use crate::wordlist::Wordlist;

/// Token-level Levenshtein distance (unit costs).
pub fn edit_distance<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta.as_ref() != tb.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit distance: edit distance divided by the longer length.
pub fn ned<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(Error::Argument("normalized edit distance of two empty words".into()));
    }
    Ok(edit_distance(a, b) as f64 / longest as f64)
}

/// Distance transform for alignment similarities: `1 / (1 + e^x)`.
///
/// Maps strong similarity to values near 0 and strong dissimilarity to values
/// near 1; `sigmoid_distance(0) == 0.5`.
pub fn sigmoid_distance(similarity: f64) -> f64 {
    1.0 / (1.0 + similarity.exp())
}

/// Symmetric symbol-pair score table with affine gap costs.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    name: String,
    scores: BTreeMap<(char, char), f64>,
    /// Score for symbol pairs absent from the table (wildcards score 0
    /// regardless).
    fallback: f64,
    pub gap_open: f64,
    pub gap_extend: f64,
}

impl ScoreTable {
    pub fn new(name: &str, fallback: f64, gap_open: f64, gap_extend: f64) -> Self {
        ScoreTable {
            name: name.to_owned(),
            scores: BTreeMap::new(),
            fallback,
            gap_open,
            gap_extend,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Inserts a symmetric entry.
    pub fn set(&mut self, a: char, b: char, score: f64) {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.scores.insert(key, score);
    }

    /// Score of one symbol pair. The wildcard class scores 0 against
    /// everything, including itself.
    pub fn score(&self, a: char, b: char) -> f64 {
        if a == WILDCARD || b == WILDCARD {
            return 0.0;
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        self.scores.get(&key).copied().unwrap_or(self.fallback)
    }

    pub fn gaps(&self) -> GapPenalties {
        GapPenalties { open: self.gap_open, extend: self.gap_extend }
    }

    /// Iterates entries in sorted key order.
    pub fn entries(&self) -> impl Iterator<Item = (char, char, f64)> + '_ {
        self.scores.iter().map(|(&(a, b), &s)| (a, b, s))
    }

    /// Serializes as TSV: a comment header carrying the gap costs, then one
    /// `SYMBOL_A SYMBOL_B SCORE` row per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# score table: {}\n", self.name));
        out.push_str(&format!(
            "# gap_open={:.17e}\tgap_extend={:.17e}\tfallback={:.17e}\n",
            self.gap_open, self.gap_extend, self.fallback
        ));
        out.push_str("SYMBOL_A\tSYMBOL_B\tSCORE\n");
        for (a, b, s) in self.entries() {
            out.push_str(&format!("{a}\t{b}\t{s:.17e}\n"));
        }
        out
    }

    /// Parses the [`ScoreTable::to_tsv`] format.
    pub fn from_tsv(name: &str, text: &str) -> Result<Self> {
        let mut gap_open = None;
        let mut gap_extend = None;
        let mut fallback = -2.0;
        let mut scores = BTreeMap::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if let Some(rest) = line.strip_prefix('#') {
                for field in rest.split_whitespace() {
                    if let Some(v) = field.strip_prefix("gap_open=") {
                        gap_open = Some(parse_float(v, lineno)?);
                    } else if let Some(v) = field.strip_prefix("gap_extend=") {
                        gap_extend = Some(parse_float(v, lineno)?);
                    } else if let Some(v) = field.strip_prefix("fallback=") {
                        fallback = parse_float(v, lineno)?;
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
            let sym = |s: &str| -> Result<char> {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(Error::parse_at_line(lineno, format!("'{s}' is not a single symbol"))),
                }
            };
            let a = sym(fields[0])?;
            let b = sym(fields[1])?;
            let s = parse_float(fields[2], lineno)?;
            let key = if a <= b { (a, b) } else { (b, a) };
            scores.insert(key, s);
        }
        let gap_open = gap_open.ok_or_else(|| Error::Format("missing gap_open header".into()))?;
        let gap_extend = gap_extend.ok_or_else(|| Error::Format("missing gap_extend header".into()))?;
        Ok(ScoreTable { name: name.to_owned(), scores, fallback, gap_open, gap_extend })
    }

    /// The built-in score table for the fine sound-class model: identical
    /// classes score 10, related consonants 6, vowels against vowels 5,
    /// unrelated consonants -2, vowels against consonants -10. Gap costs are
    /// open -1.0, extend -0.5.
    pub fn fine_generic() -> &'static ScoreTable {
        use std::sync::OnceLock;
        static TABLE: OnceLock<ScoreTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            const CONSONANT_GROUPS: &[&str] = &["PBFW", "TD", "SZCQ", "KGX", "H", "MN", "LR", "J"];
            const VOWELS: &str = "AEIOUY";
            let consonants: Vec<char> = CONSONANT_GROUPS.concat().chars().collect();
            let vowels: Vec<char> = VOWELS.chars().collect();
            let group_of = |c: char| CONSONANT_GROUPS.iter().position(|g| g.contains(c));
            let mut t = ScoreTable::new("fine-generic", -2.0, -1.0, -0.5);
            let all: Vec<char> = consonants.iter().chain(vowels.iter()).copied().collect();
            for (i, &a) in all.iter().enumerate() {
                for &b in &all[i..] {
                    let s = if a == b {
                        10.0
                    } else {
                        match (group_of(a), group_of(b)) {
                            (Some(ga), Some(gb)) if ga == gb => 6.0,
                            (Some(_), Some(_)) => -2.0,
                            (None, None) => 5.0,
                            _ => -10.0,
                        }
                    };
                    t.set(a, b, s);
                }
            }
            t
        })
    }
}

pub(crate) fn parse_float(s: &str, lineno: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse_at_line(lineno, format!("bad float '{s}'")))
}

/// Distance between two class strings under a score table:
/// `1 - 2*S(a,b) / (S(a,a) + S(b,b))`, clamped to `[0, 1]`.
///
/// Identical class strings yield exactly 0. When the self-similarity
/// denominator is not positive (all-wildcard words), the pair is treated as
/// maximally distant.
pub(crate) fn class_alignment_distance(ca: &[char], cb: &[char], table: &ScoreTable) -> f64 {
    if ca == cb {
        return 0.0;
    }
    let score = |a: &char, b: &char| table.score(*a, *b);
    let sab = global_affine_score(ca, cb, score, table.gaps());
    let saa = global_affine_score(ca, ca, score, table.gaps());
    let sbb = global_affine_score(cb, cb, score, table.gaps());
    let denom = saa + sbb;
    if denom <= 0.0 {
        return 1.0;
    }
    (1.0 - 2.0 * sab / denom).clamp(0.0, 1.0)
}

/// Sound-class alignment distance between two token sequences.
///
/// Errors when both class strings are empty (nothing left to align).
pub fn sca_distance<S: AsRef<str>>(
    a: &[S],
    b: &[S],
    model: &SoundClassModel,
    table: &ScoreTable,
) -> Result<f64> {
    let ca = model.class_string(a);
    let cb = model.class_string(b);
    if ca.is_empty() && cb.is_empty() {
        return Err(Error::UndefinedMetric(
            "alignment distance of two empty class strings".into(),
        ));
    }
    Ok(class_alignment_distance(&ca, &cb, table))
}

/// Square distance matrix over the entries of one concept.
///
/// Items are entry ids in wordlist order; distances are symmetric, zero on
/// the diagonal and clamped to `[0, 1]`. Same-language synonym pairs are
/// included like any other pair.
#[derive(Debug, Clone)]
pub struct ConceptDistanceMatrix {
    concept: String,
    items: Vec<String>,
    d: Vec<f64>,
}

impl ConceptDistanceMatrix {
    /// Builds a matrix by evaluating `dist` on every unordered item pair.
    pub fn build(
        concept: &str,
        items: Vec<String>,
        mut dist: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = items.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = dist(i, j)?;
                if !v.is_finite() {
                    return Err(Error::UndefinedMetric(format!(
                        "non-finite distance between '{}' and '{}'",
                        items[i], items[j]
                    )));
                }
                let v = v.clamp(0.0, 1.0);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(ConceptDistanceMatrix { concept: concept.to_owned(), items, d })
    }

    pub fn concept(&self) -> &str {
        &self.concept
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.len() + j]
    }
}

/// Distance measure selector for [`build_concept_matrices`]. Trained
/// measures borrow their artifacts; constructing them is the caller's job.
pub enum Measure<'a> {
    Ned,
    Sca { model: &'a SoundClassModel, table: &'a ScoreTable },
    LexStat { scorer: &'a LexstatScorer },
    OnlinePmi { matrix: &'a PmiMatrix },
}

impl Measure<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Ned => "ned",
            Measure::Sca { .. } => "sca",
            Measure::LexStat { .. } => "lexstat",
            Measure::OnlinePmi { .. } => "onlinepmi",
        }
    }
}

/// Builds one distance matrix per concept (concepts in sorted order, items
/// in wordlist order) under the selected measure.
pub fn build_concept_matrices(
    wl: &Wordlist,
    measure: &Measure,
) -> Result<Vec<ConceptDistanceMatrix>> {
    let mut out = Vec::with_capacity(wl.concepts().len());
    for concept in wl.concepts() {
        let entries: Vec<_> = wl.entries_for_concept(concept).collect();
        let items: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
        let matrix = ConceptDistanceMatrix::build(concept, items, |i, j| {
            let (a, b) = (entries[i], entries[j]);
            match measure {
                Measure::Ned => ned(&a.tokens, &b.tokens),
                Measure::Sca { model, table } => sca_distance(&a.tokens, &b.tokens, model, table),
                Measure::LexStat { scorer } => {
                    scorer.distance(&a.tokens, &a.language, &b.tokens, &b.language)
                }
                Measure::OnlinePmi { matrix } => {
                    Ok(sigmoid_distance(pmi_similarity(&a.tokens, &b.tokens, matrix)))
                }
            }
        })?;
        out.push(matrix);
    }
    Ok(out)
}

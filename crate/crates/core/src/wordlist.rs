//! Multilingual wordlist ingestion and coverage statistics.
//!
//! A wordlist is a flat collection of word entries, each carrying a unique id,
//! a language, a concept (meaning slot) and a space-segmented phonetic token
//! sequence. Entries may optionally carry an expert cognate-set id used as the
//! evaluation gold standard.
//!
//! Language and concept inventories are kept in sorted order so that derived
//! artifacts (distance matrices, character matrices) do not depend on the
//! order in which rows happened to appear in the input file.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One lexical entry: a word for `concept` in `language`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEntry {
    /// Dataset-unique identifier.
    pub id: String,
    pub language: String,
    pub concept: String,
    /// Phonetic segments, split on single spaces in the source field.
    pub tokens: Vec<String>,
    /// Expert cognate-set label, when the dataset ships one.
    pub gold_cognate_id: Option<String>,
}

/// An in-memory wordlist with validated invariants.
///
/// Entries keep input order; `languages()` and `concepts()` are the sorted
/// unions over entries.
#[derive(Debug, Clone)]
pub struct Wordlist {
    entries: Vec<WordEntry>,
    languages: Vec<String>,
    concepts: Vec<String>,
}

impl Wordlist {
    /// Builds a wordlist from entries, checking id uniqueness and non-empty
    /// token sequences.
    pub fn new(entries: Vec<WordEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.id.is_empty() {
                return Err(Error::Format("entry with empty id".into()));
            }
            if !seen.insert(e.id.clone()) {
                return Err(Error::Duplicate(e.id.clone()));
            }
            if e.tokens.is_empty() || e.tokens.iter().any(|t| t.is_empty()) {
                return Err(Error::Format(format!(
                    "entry '{}' has an empty token sequence or empty token",
                    e.id
                )));
            }
        }
        let languages: BTreeSet<_> = entries.iter().map(|e| e.language.clone()).collect();
        let concepts: BTreeSet<_> = entries.iter().map(|e| e.concept.clone()).collect();
        Ok(Wordlist {
            entries,
            languages: languages.into_iter().collect(),
            concepts: concepts.into_iter().collect(),
        })
    }

    pub fn entries(&self) -> &[WordEntry] {
        &self.entries
    }

    /// Sorted language inventory.
    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    /// Sorted concept inventory.
    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn entries_for_concept<'a>(&'a self, concept: &'a str) -> impl Iterator<Item = &'a WordEntry> {
        self.entries.iter().filter(move |e| e.concept == concept)
    }

    /// True when every entry carries a gold cognate id.
    pub fn has_gold(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.gold_cognate_id.is_some())
    }

    /// Concept sets attested per language, in language order.
    fn coverage_sets(&self) -> Vec<BTreeSet<usize>> {
        let concept_index: BTreeMap<&str, usize> = self
            .concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let lang_index: BTreeMap<&str, usize> = self
            .languages
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut sets = vec![BTreeSet::new(); self.languages.len()];
        for e in &self.entries {
            sets[lang_index[e.language.as_str()]].insert(concept_index[e.concept.as_str()]);
        }
        sets
    }
}

/// Column-name layout for tab-separated wordlist files.
#[derive(Debug, Clone)]
pub struct FieldLayout {
    pub id: String,
    pub language: String,
    pub concept: String,
    pub tokens: String,
    pub cognate_id: String,
}

impl Default for FieldLayout {
    fn default() -> Self {
        FieldLayout {
            id: "ID".into(),
            language: "LANGUAGE".into(),
            concept: "CONCEPT".into(),
            tokens: "TOKENS".into(),
            cognate_id: "COGNATE_ID".into(),
        }
    }
}

/// Reads a tab-separated wordlist.
///
/// The first line is a header naming the columns; `layout` maps the expected
/// roles onto header names. The cognate-id column is optional. Rows with a
/// wrong field count, an empty TOKENS field or a duplicate id are rejected
/// with the offending line or id named in the error.
pub fn load_wordlist(reader: impl BufRead, layout: &FieldLayout) -> Result<Wordlist> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::Format("empty wordlist file".into())),
    };
    let cols: Vec<&str> = header.trim_end_matches(['\r', '\n']).split('\t').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let id_col = find(&layout.id)
        .ok_or_else(|| Error::Format(format!("missing column '{}' in header", layout.id)))?;
    let lang_col = find(&layout.language)
        .ok_or_else(|| Error::Format(format!("missing column '{}' in header", layout.language)))?;
    let concept_col = find(&layout.concept)
        .ok_or_else(|| Error::Format(format!("missing column '{}' in header", layout.concept)))?;
    let tokens_col = find(&layout.tokens)
        .ok_or_else(|| Error::Format(format!("missing column '{}' in header", layout.tokens)))?;
    let cognate_col = find(&layout.cognate_id);

    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2; // 1-based, after the header
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse_at_line(
                lineno,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let tokens_field = fields[tokens_col];
        if tokens_field.is_empty() {
            return Err(Error::parse_at_line(
                lineno,
                format!("empty TOKENS field in row '{}'", fields[id_col]),
            ));
        }
        let tokens: Vec<String> = tokens_field.split(' ').map(str::to_owned).collect();
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::parse_at_line(
                lineno,
                format!("empty token (doubled space?) in row '{}'", fields[id_col]),
            ));
        }
        entries.push(WordEntry {
            id: fields[id_col].to_owned(),
            language: fields[lang_col].to_owned(),
            concept: fields[concept_col].to_owned(),
            tokens,
            gold_cognate_id: cognate_col.map(|c| fields[c].to_owned()).filter(|s| !s.is_empty()),
        });
    }
    Wordlist::new(entries)
}

/// Writes the canonical tab-separated layout (the inverse of
/// [`load_wordlist`] with the default [`FieldLayout`]).
///
/// The cognate-id column is emitted only when at least one entry carries one.
pub fn write_wordlist(wl: &Wordlist, mut out: impl Write) -> Result<()> {
    let with_gold = wl.entries().iter().any(|e| e.gold_cognate_id.is_some());
    if with_gold {
        writeln!(out, "ID\tLANGUAGE\tCONCEPT\tTOKENS\tCOGNATE_ID")?;
    } else {
        writeln!(out, "ID\tLANGUAGE\tCONCEPT\tTOKENS")?;
    }
    for e in wl.entries() {
        if with_gold {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.id,
                e.language,
                e.concept,
                e.tokens.join(" "),
                e.gold_cognate_id.as_deref().unwrap_or("")
            )?;
        } else {
            writeln!(out, "{}\t{}\t{}\t{}", e.id, e.language, e.concept, e.tokens.join(" "))?;
        }
    }
    Ok(())
}

/// Average mutual coverage: the mean, over unordered language pairs, of the
/// fraction of the full concept inventory attested in *both* languages.
///
/// Using the full inventory as the denominator keeps values comparable when
/// languages are dropped. Synonyms count once. Requires at least two
/// languages.
pub fn average_mutual_coverage(wl: &Wordlist) -> Result<f64> {
    amc_over(&wl.coverage_sets(), wl.concepts().len())
}

fn amc_over(sets: &[BTreeSet<usize>], n_concepts: usize) -> Result<f64> {
    let n = sets.len();
    if n < 2 {
        return Err(Error::Argument(
            "average mutual coverage needs at least two languages".into(),
        ));
    }
    if n_concepts == 0 {
        return Err(Error::Argument("empty concept inventory".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += sets[i].intersection(&sets[j]).count() as f64 / n_concepts as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Result of [`subselect_languages`].
#[derive(Debug, Clone)]
pub struct Subselection {
    pub wordlist: Wordlist,
    /// False when the loop stopped at the two-language floor without reaching
    /// the target coverage.
    pub reached_target: bool,
    /// Mutual coverage of the returned selection, measured against the
    /// original concept inventory.
    pub coverage: f64,
}

/// Greedily removes languages until average mutual coverage reaches
/// `target` or only two languages remain.
///
/// Each round removes the language whose removal yields the highest coverage;
/// ties break toward the lexicographically smallest language name. The
/// coverage denominator stays fixed at the input's concept inventory so that
/// successive rounds are comparable.
pub fn subselect_languages(wl: &Wordlist, target: f64) -> Result<Subselection> {
    if !(0.0 < target && target <= 1.0) {
        return Err(Error::Argument(format!(
            "coverage target must lie in (0, 1], got {target}"
        )));
    }
    if wl.languages().len() < 2 {
        return Err(Error::Argument(
            "language subselection needs at least two languages".into(),
        ));
    }
    let n_concepts = wl.concepts().len();
    let mut keep: Vec<usize> = (0..wl.languages().len()).collect();
    let sets = wl.coverage_sets();

    let amc_of = |keep: &[usize]| -> Result<f64> {
        let subset: Vec<BTreeSet<usize>> = keep.iter().map(|&i| sets[i].clone()).collect();
        amc_over(&subset, n_concepts)
    };

    let mut coverage = amc_of(&keep)?;
    while coverage < target && keep.len() > 2 {
        // Candidate removals are scanned in lexicographic language order so
        // the argmax tie-break is deterministic.
        let mut best: Option<(f64, usize)> = None;
        for (pos, _) in keep.iter().enumerate() {
            let mut reduced = keep.clone();
            reduced.remove(pos);
            let cand = amc_of(&reduced)?;
            if best.map_or(true, |(b, _)| cand > b) {
                best = Some((cand, pos));
            }
        }
        let (new_cov, pos) = best.expect("at least three candidates");
        keep.remove(pos);
        coverage = new_cov;
    }

    let kept_names: BTreeSet<&str> = keep.iter().map(|&i| wl.languages()[i].as_str()).collect();
    let entries: Vec<WordEntry> = wl
        .entries()
        .iter()
        .filter(|e| kept_names.contains(e.language.as_str()))
        .cloned()
        .collect();
    Ok(Subselection {
        wordlist: Wordlist::new(entries)?,
        reached_target: coverage >= target,
        coverage,
    })
}

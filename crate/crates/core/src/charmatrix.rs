//! Binary character matrices built from cognate partitions.
//!
//! Each cognate cluster becomes one presence/absence character: a language
//! scores `1` when one of its words for the concept belongs to the cluster,
//! `0` when it attests the concept through other clusters only, and `?` when
//! it lacks the concept altogether. Rows are the sorted languages, columns
//! the concept clusters sorted by concept and cluster index, so a matrix is
//! fully determined by the wordlist contents and the partition — entry order
//! never matters.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::cogcluster::{ClusterLabel, CognatePartition};
use crate::error::{Error, Result};
use crate::wordlist::Wordlist;

/// One matrix cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    /// The language attests the concept but not through this cluster (`0`).
    Absent,
    /// The language has a word in this cluster (`1`).
    Present,
    /// The language lacks the concept (`?`).
    Missing,
}

impl Cell {
    pub fn symbol(&self) -> char {
        match self {
            Cell::Absent => '0',
            Cell::Present => '1',
            Cell::Missing => '?',
        }
    }

    fn from_symbol(s: &str) -> Option<Cell> {
        match s {
            "0" => Some(Cell::Absent),
            "1" => Some(Cell::Present),
            "?" => Some(Cell::Missing),
            _ => None,
        }
    }
}

/// A languages × characters presence/absence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterMatrix {
    languages: Vec<String>,
    columns: Vec<ClusterLabel>,
    cells: Vec<Cell>, // row-major
}

impl CharacterMatrix {
    /// Assembles a matrix from raw parts (row-major cells) and validates
    /// every structural invariant.
    pub fn from_parts(
        languages: Vec<String>,
        columns: Vec<ClusterLabel>,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        if languages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("languages must be sorted and unique".into()));
        }
        if columns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("column labels must be sorted and unique".into()));
        }
        if cells.len() != languages.len() * columns.len() {
            return Err(Error::Argument(format!(
                "expected {} cells, got {}",
                languages.len() * columns.len(),
                cells.len()
            )));
        }
        let matrix = CharacterMatrix { languages, columns, cells };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn columns(&self) -> &[ClusterLabel] {
        &self.columns
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.columns.len() + col]
    }

    /// All cells of one character, in language (row) order.
    pub fn column(&self, col: usize) -> impl Iterator<Item = Cell> + '_ {
        (0..self.languages.len()).map(move |row| self.cell(row, col))
    }

    /// Serializes as TSV: a header of column labels, then one row per
    /// language (language id first, then the cell symbols).
    pub fn to_tsv(&self, mut out: impl Write) -> Result<()> {
        let header: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{}", header.join("\t"))?;
        for (row, lang) in self.languages.iter().enumerate() {
            let mut line = String::from(lang.as_str());
            for col in 0..self.columns.len() {
                line.push('\t');
                line.push(self.cell(row, col).symbol());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Parses the [`CharacterMatrix::to_tsv`] format, revalidating every
    /// structural invariant. Rows may arrive in any order; they are stored
    /// sorted by language.
    pub fn from_tsv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header =
            lines.next().ok_or_else(|| Error::Format("empty character matrix".into()))??;
        let mut columns = Vec::new();
        for field in header.split('\t') {
            let (concept, index) = field
                .rsplit_once(':')
                .ok_or_else(|| Error::Format(format!("column label '{field}' lacks ':'")))?;
            if concept.is_empty() {
                return Err(Error::Format(format!("column label '{field}' has no concept")));
            }
            let index = index
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad cluster index in '{field}'")))?;
            columns.push(ClusterLabel { concept: concept.to_owned(), index });
        }
        let sorted = columns.windows(2).all(|w| w[0] < w[1]);
        if !sorted {
            return Err(Error::Format("column labels must be unique and sorted".into()));
        }

        let mut rows: BTreeMap<String, Vec<Cell>> = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let lang = fields.next().expect("split yields at least one field").to_owned();
            if lang.is_empty() {
                return Err(Error::parse_at_line(lineno, "empty language id"));
            }
            let cells: Vec<Cell> = fields
                .map(|f| {
                    Cell::from_symbol(f).ok_or_else(|| {
                        Error::parse_at_line(lineno, format!("bad cell symbol '{f}'"))
                    })
                })
                .collect::<Result<_>>()?;
            if cells.len() != columns.len() {
                return Err(Error::parse_at_line(
                    lineno,
                    format!("expected {} cells, found {}", columns.len(), cells.len()),
                ));
            }
            if rows.insert(lang.clone(), cells).is_some() {
                return Err(Error::Duplicate(lang));
            }
        }

        let languages: Vec<String> = rows.keys().cloned().collect();
        let mut cells = Vec::with_capacity(languages.len() * columns.len());
        for lang in &languages {
            cells.extend_from_slice(&rows[lang]);
        }
        let matrix = CharacterMatrix { languages, columns, cells };
        matrix.validate()?;
        Ok(matrix)
    }

    /// Relaxed PHYLIP export: taxon/character counts, then one line per
    /// language with the whitespace-padded name and the symbol string.
    pub fn to_phylip(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {}", self.languages.len(), self.columns.len())?;
        let width = self.languages.iter().map(|l| l.len()).max().unwrap_or(0) + 2;
        for (row, lang) in self.languages.iter().enumerate() {
            let seq: String = (0..self.columns.len()).map(|c| self.cell(row, c).symbol()).collect();
            writeln!(out, "{lang:<width$}{seq}")?;
        }
        Ok(())
    }

    /// Checks the structural invariants shared by construction and parsing.
    fn validate(&self) -> Result<()> {
        if self.languages.len() < 2 {
            return Err(Error::Format("a character matrix needs at least two languages".into()));
        }
        if self.columns.is_empty() {
            return Err(Error::Format("a character matrix needs at least one column".into()));
        }
        for (col, label) in self.columns.iter().enumerate() {
            if !self.column(col).any(|c| c == Cell::Present) {
                return Err(Error::Format(format!("column '{label}' has no present state")));
            }
        }
        // Within a row, a concept is either fully observed or fully missing.
        let mut concept_cols: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (col, label) in self.columns.iter().enumerate() {
            concept_cols.entry(label.concept.as_str()).or_default().push(col);
        }
        for (row, lang) in self.languages.iter().enumerate() {
            for (concept, cols) in &concept_cols {
                let missing =
                    cols.iter().filter(|&&c| self.cell(row, c) == Cell::Missing).count();
                if missing != 0 && missing != cols.len() {
                    return Err(Error::Format(format!(
                        "language '{lang}' is partially missing for concept '{concept}'"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds the presence/absence matrix of a partition over a wordlist.
///
/// The partition must label exactly the wordlist's entries, under the same
/// concepts; anything else is a mismatch error.
pub fn to_matrix(wl: &Wordlist, partition: &CognatePartition) -> Result<CharacterMatrix> {
    // Strict coverage both ways.
    let entry_ids: BTreeSet<&str> = wl.entries().iter().map(|e| e.id.as_str()).collect();
    let labelled_ids: BTreeSet<&str> = partition.iter().map(|(id, _)| id.as_str()).collect();
    if entry_ids != labelled_ids {
        let unlabelled: Vec<&str> =
            entry_ids.difference(&labelled_ids).take(5).copied().collect();
        let unknown: Vec<&str> = labelled_ids.difference(&entry_ids).take(5).copied().collect();
        return Err(Error::Mismatch(format!(
            "partition does not cover the wordlist (unlabelled entries: [{}], unknown ids: [{}])",
            unlabelled.join(", "),
            unknown.join(", ")
        )));
    }

    let languages: Vec<String> = wl.languages().to_vec();
    if languages.len() < 2 {
        return Err(Error::Argument("need at least two languages to build a matrix".into()));
    }
    let lang_index: BTreeMap<&str, usize> =
        languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    // Column inventory and per-cluster language sets.
    let mut present: BTreeMap<ClusterLabel, BTreeSet<usize>> = BTreeMap::new();
    let mut attests: BTreeSet<(usize, &str)> = BTreeSet::new();
    for e in wl.entries() {
        let label = partition.label_of(&e.id).expect("coverage checked");
        if label.concept != e.concept {
            return Err(Error::Mismatch(format!(
                "entry '{}' belongs to concept '{}' but is labelled under '{}'",
                e.id, e.concept, label.concept
            )));
        }
        let row = lang_index[e.language.as_str()];
        present.entry(label.clone()).or_default().insert(row);
        attests.insert((row, e.concept.as_str()));
    }

    let columns: Vec<ClusterLabel> = present.keys().cloned().collect();
    let mut cells = Vec::with_capacity(languages.len() * columns.len());
    for row in 0..languages.len() {
        for label in &columns {
            let cell = if present[label].contains(&row) {
                Cell::Present
            } else if attests.contains(&(row, label.concept.as_str())) {
                Cell::Absent
            } else {
                Cell::Missing
            };
            cells.push(cell);
        }
    }
    let matrix = CharacterMatrix { languages, columns, cells };
    matrix.validate()?;
    Ok(matrix)
}

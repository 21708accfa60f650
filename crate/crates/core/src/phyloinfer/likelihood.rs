//! Pruning-based likelihood of a character matrix on a dated tree.
//!
//! Characters are compressed into distinct site patterns up front. Each
//! pattern is evaluated by postorder pruning under every rate category and
//! the categories are averaged in log space. Because a character whose
//! cluster appears in no language can never be observed, every pattern's
//! likelihood is conditioned on "not all absent": it is divided by
//! `1 - L(all absent)`, computed separately for each distinct missing-data
//! mask so that unattested concepts stay consistent.

use std::collections::BTreeMap;

use crate::charmatrix::{Cell, CharacterMatrix};
use crate::error::{Error, Result};
use crate::phyloinfer::model::SubstModel2;
use crate::phyloinfer::PhyloTree;

/// Partial likelihoods below this threshold are renormalized, with the log
/// scale tracked separately, so deep trees cannot underflow.
const SCALE_THRESHOLD: f64 = 1e-100;

struct Pattern {
    cells: Vec<Cell>,
    count: f64,
    mask_id: usize,
}

/// Precompressed site patterns of one matrix, ready for repeated likelihood
/// evaluation.
pub struct LikelihoodEngine {
    languages: Vec<String>,
    patterns: Vec<Pattern>,
    masks: Vec<Vec<bool>>,
}

impl LikelihoodEngine {
    pub fn new(matrix: &CharacterMatrix) -> Result<Self> {
        let languages = matrix.languages().to_vec();
        let mut mask_ids: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        let mut masks: Vec<Vec<bool>> = Vec::new();
        let mut pattern_ids: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        for col in 0..matrix.n_columns() {
            let cells: Vec<Cell> = matrix.column(col).collect();
            let key: Vec<u8> = cells.iter().map(|c| c.symbol() as u8).collect();
            if let Some(&id) = pattern_ids.get(&key) {
                patterns[id].count += 1.0;
                continue;
            }
            let mask: Vec<bool> = cells.iter().map(|&c| c == Cell::Missing).collect();
            let next_mask = masks.len();
            let mask_id = *mask_ids.entry(mask.clone()).or_insert_with(|| {
                masks.push(mask);
                next_mask
            });
            pattern_ids.insert(key, patterns.len());
            patterns.push(Pattern { cells, count: 1.0, mask_id });
        }
        if patterns.is_empty() {
            return Err(Error::Argument("character matrix has no columns".into()));
        }
        Ok(LikelihoodEngine { languages, patterns, masks })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    /// Log-likelihood of the matrix on `tree` with per-branch clock rates
    /// (`branch_rates[v]` scales the branch above node `v`) and the given
    /// substitution model and rate categories.
    pub fn log_likelihood(
        &self,
        tree: &PhyloTree,
        branch_rates: &[f64],
        model: &SubstModel2,
        gamma_rates: &[f64],
    ) -> Result<f64> {
        if tree.labels() != &self.languages[..] {
            return Err(Error::Mismatch(
                "tree taxa do not match the matrix languages".into(),
            ));
        }
        if branch_rates.len() != tree.n_nodes() {
            return Err(Error::Argument(format!(
                "expected {} branch rates, got {}",
                tree.n_nodes(),
                branch_rates.len()
            )));
        }
        if gamma_rates.is_empty() {
            return Err(Error::Argument("need at least one rate category".into()));
        }

        let ncat = gamma_rates.len();
        let order = tree.postorder();
        let mut trans = vec![[[0.0f64; 2]; 2]; tree.n_nodes() * ncat];
        for v in 0..tree.n_nodes() {
            if tree.parent_of(v).is_none() {
                continue;
            }
            let time = tree.branch_time(v);
            for (k, g) in gamma_rates.iter().enumerate() {
                trans[v * ncat + k] = model.transition(time * branch_rates[v] * g);
            }
        }

        let mut partial = vec![[0.0f64; 2]; tree.n_nodes()];
        let mut per_cat = vec![0.0f64; ncat];
        let mut pattern_lnl = |cells: &[Cell]| -> f64 {
            for (k, cat) in per_cat.iter_mut().enumerate() {
                *cat = prune_one(tree, &order, &trans, ncat, k, cells, model, &mut partial);
            }
            log_mean_exp(&per_cat)
        };

        // Conditioning term per missing-data mask: ln(1 - L(all absent)).
        let mut corrections = Vec::with_capacity(self.masks.len());
        for mask in &self.masks {
            let zero: Vec<Cell> =
                mask.iter().map(|&m| if m { Cell::Missing } else { Cell::Absent }).collect();
            let correction = log1mexp(pattern_lnl(&zero));
            if !correction.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            corrections.push(correction);
        }

        let mut total = 0.0;
        for p in &self.patterns {
            total += p.count * (pattern_lnl(&p.cells) - corrections[p.mask_id]);
        }
        Ok(total)
    }
}

/// Log-likelihood of one pattern under one rate category, by pruning with
/// threshold rescaling.
#[allow(clippy::too_many_arguments)]
fn prune_one(
    tree: &PhyloTree,
    order: &[usize],
    trans: &[[[f64; 2]; 2]],
    ncat: usize,
    k: usize,
    cells: &[Cell],
    model: &SubstModel2,
    partial: &mut [[f64; 2]],
) -> f64 {
    let mut ln_scale = 0.0f64;
    for &v in order {
        if tree.is_leaf(v) {
            partial[v] = match cells[v] {
                Cell::Absent => [1.0, 0.0],
                Cell::Present => [0.0, 1.0],
                Cell::Missing => [1.0, 1.0],
            };
            continue;
        }
        let (a, b) = tree.children_of(v).expect("internal node");
        let pa = &trans[a * ncat + k];
        let pb = &trans[b * ncat + k];
        for s in 0..2 {
            let from_a = pa[s][0] * partial[a][0] + pa[s][1] * partial[a][1];
            let from_b = pb[s][0] * partial[b][0] + pb[s][1] * partial[b][1];
            partial[v][s] = from_a * from_b;
        }
        let m = partial[v][0].max(partial[v][1]);
        if m > 0.0 && m < SCALE_THRESHOLD {
            partial[v][0] /= m;
            partial[v][1] /= m;
            ln_scale += m.ln();
        }
    }
    let root = tree.root();
    let pi = model.stationary();
    let l = pi[0] * partial[root][0] + pi[1] * partial[root][1];
    l.ln() + ln_scale
}

/// ln(mean(exp(x_i))) without overflow.
fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + (xs.iter().map(|&x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

/// ln(1 - e^x) for x < 0; NaN for x >= 0.
fn log1mexp(x: f64) -> f64 {
    if x >= 0.0 {
        f64::NAN
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

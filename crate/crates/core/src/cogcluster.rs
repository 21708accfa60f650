//! Clustering of per-concept distance matrices into cognate sets.
//!
//! Cluster labels are `(concept, index)` pairs; indices are local to the
//! concept and canonicalized so that the cluster containing the earliest item
//! gets index 0. Three clusterers are provided:
//!
//! * [`flat_upgma`] — average-linkage agglomeration until the smallest
//!   linkage exceeds the threshold.
//! * [`label_propagation`] — weighted vote propagation on the graph whose
//!   edges connect pairs closer than the threshold.
//! * [`map_equation_communities`] — greedy two-level map-equation search on
//!   the same graph.
//!
//! [`detect_cognates`] wires the distance measures to the clusterers with
//! the per-method default thresholds. Methods needing trained artifacts
//! receive them through [`DetectConfig`]; training itself happens upstream.
//! Classifier-based detectors (e.g. an SVM over correspondence features) are
//! deliberately not implemented — plug one in by building distance matrices
//! yourself and calling [`cluster_matrices`] with a clusterer of your choice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pairsim::{
    build_concept_matrices, ConceptDistanceMatrix, LexstatScorer, Measure, PmiMatrix, ScoreTable,
};
use crate::soundmodel::{SoundClassModel, PLACEHOLDER, WILDCARD};
use crate::wordlist::Wordlist;

/// Default clustering thresholds per method.
pub const NED_THRESHOLD: f64 = 0.75;
pub const SCA_THRESHOLD: f64 = 0.45;
pub const LEXSTAT_THRESHOLD: f64 = 0.55;
pub const ONLINE_PMI_THRESHOLD: f64 = 0.5;

/// A cognate-set label: cluster `index` within `concept`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterLabel {
    pub concept: String,
    pub index: usize,
}

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.concept, self.index)
    }
}

/// A full partition of wordlist entries into cognate sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CognatePartition {
    assignments: BTreeMap<String, ClusterLabel>,
}

impl CognatePartition {
    pub fn new(assignments: BTreeMap<String, ClusterLabel>) -> Self {
        CognatePartition { assignments }
    }

    /// Gold partition from the expert cognate ids carried by the wordlist.
    /// Requires every entry to carry one.
    pub fn from_gold(wl: &Wordlist) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for concept in wl.concepts() {
            // Map gold ids to local indices in order of first appearance,
            // then canonicalize below via renumbering on entry order.
            let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
            for e in wl.entries_for_concept(concept) {
                let gold = e.gold_cognate_id.as_deref().ok_or_else(|| {
                    Error::Config(format!("entry '{}' has no expert cognate id", e.id))
                })?;
                let next = index_of.len();
                let idx = *index_of.entry(gold).or_insert(next);
                assignments
                    .insert(e.id.clone(), ClusterLabel { concept: concept.clone(), index: idx });
            }
        }
        Ok(CognatePartition { assignments })
    }

    pub fn label_of(&self, id: &str) -> Option<&ClusterLabel> {
        self.assignments.get(id)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ClusterLabel)> {
        self.assignments.iter()
    }

    /// Concepts present in the partition, sorted.
    pub fn concepts(&self) -> Vec<&str> {
        let set: BTreeSet<&str> =
            self.assignments.values().map(|l| l.concept.as_str()).collect();
        set.into_iter().collect()
    }

    /// Clusters of one concept: index → member entry ids (in id order).
    pub fn clusters_of(&self, concept: &str) -> BTreeMap<usize, Vec<&str>> {
        let mut out: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (id, label) in &self.assignments {
            if label.concept == concept {
                out.entry(label.index).or_default().push(id);
            }
        }
        out
    }

    /// Serializes as TSV (`ID`, `CONCEPT`, `CLUSTER_LABEL`), rows sorted by id.
    pub fn to_tsv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "ID\tCONCEPT\tCLUSTER_LABEL")?;
        for (id, label) in &self.assignments {
            writeln!(out, "{id}\t{}\t{label}", label.concept)?;
        }
        Ok(())
    }

    /// Parses the [`CognatePartition::to_tsv`] format.
    pub fn from_tsv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty partition file".into()))??;
        if header != "ID\tCONCEPT\tCLUSTER_LABEL" {
            return Err(Error::Format("expected ID/CONCEPT/CLUSTER_LABEL header".into()));
        }
        let mut assignments = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse_at_line(lineno, "expected three fields"));
            }
            let (concept_part, index_part) = fields[2]
                .rsplit_once(':')
                .ok_or_else(|| Error::parse_at_line(lineno, "cluster label without ':'"))?;
            if concept_part != fields[1] {
                return Err(Error::parse_at_line(
                    lineno,
                    "cluster label concept differs from CONCEPT field",
                ));
            }
            let index = index_part
                .parse::<usize>()
                .map_err(|_| Error::parse_at_line(lineno, "bad cluster index"))?;
            if assignments
                .insert(
                    fields[0].to_owned(),
                    ClusterLabel { concept: fields[1].to_owned(), index },
                )
                .is_some()
            {
                return Err(Error::Duplicate(fields[0].to_owned()));
            }
        }
        Ok(CognatePartition { assignments })
    }
}

/// Renumbers per-concept cluster ids so the cluster containing the earliest
/// item (by position) is 0, the next new cluster 1, and so on.
fn canonicalize(raw: &[usize]) -> Vec<usize> {
    let mut next = 0usize;
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    raw.iter()
        .map(|r| {
            *map.entry(*r).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Consonant-class-key partition: within each concept, words group by exact
/// key equality. Keys containing the wildcard never match (the sound is
/// unknown), and the all-placeholder key always forms singletons.
pub fn ccm_partition(wl: &Wordlist, model: &SoundClassModel) -> Result<CognatePartition> {
    let mut assignments = BTreeMap::new();
    for concept in wl.concepts() {
        let entries: Vec<_> = wl.entries_for_concept(concept).collect();
        let keys: Vec<(char, char)> = entries.iter().map(|e| model.ccm_key(&e.tokens)).collect();
        let mut raw = vec![0usize; entries.len()];
        let mut next_group = 0usize;
        let mut group_of_key: BTreeMap<(char, char), usize> = BTreeMap::new();
        for (i, key) in keys.iter().enumerate() {
            let singleton = key.0 == WILDCARD
                || key.1 == WILDCARD
                || (key.0 == PLACEHOLDER && key.1 == PLACEHOLDER);
            raw[i] = if singleton {
                let g = next_group;
                next_group += 1;
                g
            } else {
                *group_of_key.entry(*key).or_insert_with(|| {
                    let g = next_group;
                    next_group += 1;
                    g
                })
            };
        }
        let canon = canonicalize(&raw);
        for (e, idx) in entries.iter().zip(canon) {
            assignments
                .insert(e.id.clone(), ClusterLabel { concept: concept.clone(), index: idx });
        }
    }
    Ok(CognatePartition::new(assignments))
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Argument(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    Ok(())
}

/// Average-linkage agglomerative clustering with a distance cutoff: merging
/// stops once the smallest cluster-pair linkage exceeds `threshold`.
///
/// Ties on the smallest linkage break toward the pair whose clusters contain
/// the smallest item indices, so results are deterministic. Returns one
/// canonical cluster index per item.
pub fn flat_upgma(m: &ConceptDistanceMatrix, threshold: f64) -> Result<Vec<usize>> {
    check_threshold(threshold)?;
    let n = m.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    while clusters.len() > 1 {
        // Smallest average linkage over current cluster pairs.
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += m.get(i, j);
                    }
                }
                let linkage = sum / (clusters[a].len() * clusters[b].len()) as f64;
                // Clusters are kept sorted by smallest member, so scanning in
                // order makes strict `<` the lexicographic tie-break.
                if best.map_or(true, |(d, _, _)| linkage < d) {
                    best = Some((linkage, a, b));
                }
            }
        }
        let (linkage, a, b) = best.expect("at least one pair");
        if linkage > threshold {
            break;
        }
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }

    let mut raw = vec![0usize; n];
    for (g, members) in clusters.iter().enumerate() {
        for &i in members {
            raw[i] = g;
        }
    }
    Ok(canonicalize(&raw))
}

/// Threshold graph of a distance matrix: edges where `d < threshold`, with
/// weight `1 - d`.
fn threshold_graph(m: &ConceptDistanceMatrix, threshold: f64) -> Vec<Vec<(usize, f64)>> {
    let n = m.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = m.get(i, j);
            if d < threshold {
                adj[i].push((j, 1.0 - d));
                adj[j].push((i, 1.0 - d));
            }
        }
    }
    adj
}

/// Connected components of same-labelled nodes — the final grouping step of
/// the graph clusterers.
fn components_within_labels(adj: &[Vec<(usize, f64)>], labels: &[usize]) -> Vec<usize> {
    let n = labels.len();
    let mut raw = vec![usize::MAX; n];
    let mut next = 0usize;
    for start in 0..n {
        if raw[start] != usize::MAX {
            continue;
        }
        raw[start] = next;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if raw[v] == usize::MAX && labels[v] == labels[u] {
                    raw[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    canonicalize(&raw)
}

/// Weighted label propagation on the threshold graph.
///
/// Nodes start with unique labels and repeatedly adopt the label with the
/// largest summed incident edge weight, visiting nodes in seeded-random order
/// (ties break by seeded choice). Stops after a full pass without changes or
/// after 100 passes. Connected nodes sharing a final label form clusters.
pub fn label_propagation(
    m: &ConceptDistanceMatrix,
    threshold: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    check_threshold(threshold)?;
    let n = m.len();
    let adj = threshold_graph(m, threshold);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();

    for _pass in 0..100 {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &u in &order {
            if adj[u].is_empty() {
                continue;
            }
            let mut weight_of: BTreeMap<usize, f64> = BTreeMap::new();
            for &(v, w) in &adj[u] {
                *weight_of.entry(labels[v]).or_insert(0.0) += w;
            }
            let max_w = weight_of.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = weight_of
                .iter()
                .filter(|(_, &w)| w >= max_w - 1e-12)
                .map(|(&l, _)| l)
                .collect();
            let new = tied[rng.gen_range(0..tied.len())];
            if new != labels[u] {
                labels[u] = new;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(components_within_labels(&adj, &labels))
}

/// Greedy two-level map-equation community detection on the threshold graph.
///
/// Starts from singleton modules and repeatedly moves nodes (in seeded-random
/// order) to the neighboring module that most reduces the description length,
/// until a full pass makes no move. Isolated nodes stay singletons.
pub fn map_equation_communities(
    m: &ConceptDistanceMatrix,
    threshold: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    check_threshold(threshold)?;
    let n = m.len();
    let adj = threshold_graph(m, threshold);
    if adj.iter().all(|es| es.is_empty()) {
        return Ok((0..n).collect());
    }
    let mut modules: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut current = codelength(&adj, &modules);
    for _pass in 0..100 {
        order.shuffle(&mut rng);
        let mut moved = false;
        for &u in &order {
            if adj[u].is_empty() {
                continue;
            }
            let mut candidates: BTreeSet<usize> = adj[u].iter().map(|&(v, _)| modules[v]).collect();
            candidates.remove(&modules[u]);
            let mut best: Option<(f64, usize)> = None;
            for &cand in &candidates {
                let old = modules[u];
                modules[u] = cand;
                let l = codelength(&adj, &modules);
                modules[u] = old;
                if l < current - 1e-12 && best.map_or(true, |(bl, _)| l < bl) {
                    best = Some((l, cand));
                }
            }
            if let Some((l, cand)) = best {
                modules[u] = cand;
                current = l;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(components_within_labels(&adj, &modules))
}

/// Two-level map-equation description length in bits.
pub fn codelength(adj: &[Vec<(usize, f64)>], modules: &[usize]) -> f64 {
    let n = adj.len();
    let total_weight: f64 = adj.iter().flat_map(|es| es.iter().map(|&(_, w)| w)).sum::<f64>();
    if total_weight == 0.0 {
        return 0.0;
    }
    let p: Vec<f64> = (0..n)
        .map(|u| adj[u].iter().map(|&(_, w)| w).sum::<f64>() / total_weight)
        .collect();
    let plogp = |x: f64| if x > 0.0 { x * x.log2() } else { 0.0 };
    let module_set: BTreeSet<usize> = modules.iter().copied().collect();

    let mut q = Vec::new();
    let mut inside = Vec::new();
    for &mid in &module_set {
        let members: Vec<usize> = (0..n).filter(|&u| modules[u] == mid).collect();
        let mut cut = 0.0;
        for &u in &members {
            for &(v, w) in &adj[u] {
                if modules[v] != mid {
                    cut += w;
                }
            }
        }
        let qm = cut / total_weight;
        let pm: f64 = members.iter().map(|&u| p[u]).sum();
        q.push(qm);
        inside.push((qm, pm, members));
    }
    let q_total: f64 = q.iter().sum();

    // Index codebook: entropy of module entries, weighted by total exit flow.
    let mut l = plogp(q_total);
    for &qm in &q {
        l -= plogp(qm);
    }
    // Module codebooks.
    for (qm, pm, members) in &inside {
        l += plogp(qm + pm);
        l -= plogp(*qm);
        for &u in members {
            l -= plogp(p[u]);
        }
    }
    // All terms above are already signed for the standard expansion
    // L = q H(Q) + sum_m (q_m + p_m) H(P_m); entropy signs fold into plogp.
    l
}

/// Detection method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMethod {
    Ccm,
    Ned,
    Sca,
    LexStat,
    OnlinePmi,
}

impl DetectMethod {
    pub const ALL: [DetectMethod; 5] = [
        DetectMethod::Ccm,
        DetectMethod::Ned,
        DetectMethod::Sca,
        DetectMethod::LexStat,
        DetectMethod::OnlinePmi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DetectMethod::Ccm => "ccm",
            DetectMethod::Ned => "ned",
            DetectMethod::Sca => "sca",
            DetectMethod::LexStat => "lexstat",
            DetectMethod::OnlinePmi => "onlinepmi",
        }
    }

    pub fn default_threshold(&self) -> Option<f64> {
        match self {
            DetectMethod::Ccm => None,
            DetectMethod::Ned => Some(NED_THRESHOLD),
            DetectMethod::Sca => Some(SCA_THRESHOLD),
            DetectMethod::LexStat => Some(LEXSTAT_THRESHOLD),
            DetectMethod::OnlinePmi => Some(ONLINE_PMI_THRESHOLD),
        }
    }
}

impl FromStr for DetectMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccm" => Ok(DetectMethod::Ccm),
            "ned" => Ok(DetectMethod::Ned),
            "sca" => Ok(DetectMethod::Sca),
            "lexstat" => Ok(DetectMethod::LexStat),
            "onlinepmi" => Ok(DetectMethod::OnlinePmi),
            other => Err(Error::Argument(format!(
                "unknown method '{other}' (known: ccm, ned, sca, lexstat, onlinepmi; \
                 classifier-based detectors plug in via cluster_matrices)"
            ))),
        }
    }
}

/// Artifacts and knobs for [`detect_cognates`].
#[derive(Default)]
pub struct DetectConfig<'a> {
    /// Overrides the per-method default threshold.
    pub threshold: Option<f64>,
    /// Seed for the stochastic clusterers.
    pub seed: u64,
    /// Trained scorer; required by the log-odds method.
    pub lexstat: Option<&'a LexstatScorer>,
    /// Trained matrix; required by the PMI method.
    pub pmi: Option<&'a PmiMatrix>,
}

/// Which graph/agglomerative clusterer to run over concept matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clusterer {
    FlatUpgma,
    LabelPropagation,
    MapEquation,
}

/// Clusters prebuilt concept matrices into a partition. This is the
/// extension point for externally trained similarity measures.
pub fn cluster_matrices(
    matrices: &[ConceptDistanceMatrix],
    clusterer: Clusterer,
    threshold: f64,
    seed: u64,
) -> Result<CognatePartition> {
    let mut assignments = BTreeMap::new();
    for m in matrices {
        let raw = match clusterer {
            Clusterer::FlatUpgma => flat_upgma(m, threshold)?,
            Clusterer::LabelPropagation => label_propagation(m, threshold, seed)?,
            Clusterer::MapEquation => map_equation_communities(m, threshold, seed)?,
        };
        for (id, idx) in m.items().iter().zip(raw) {
            if assignments
                .insert(id.clone(), ClusterLabel { concept: m.concept().to_owned(), index: idx })
                .is_some()
            {
                return Err(Error::Duplicate(id.clone()));
            }
        }
    }
    Ok(CognatePartition::new(assignments))
}

/// Runs one detection method over a wordlist.
///
/// The consonant-class method needs no training; the alignment methods build
/// their concept matrices here. Methods with trained artifacts take them from
/// `config` and fail with a configuration error when absent.
pub fn detect_cognates(
    wl: &Wordlist,
    method: DetectMethod,
    config: &DetectConfig,
) -> Result<CognatePartition> {
    let threshold = config.threshold.or(method.default_threshold());
    match method {
        DetectMethod::Ccm => ccm_partition(wl, SoundClassModel::coarse()),
        DetectMethod::Ned => {
            let ms = build_concept_matrices(wl, &Measure::Ned)?;
            cluster_matrices(&ms, Clusterer::FlatUpgma, threshold.unwrap(), config.seed)
        }
        DetectMethod::Sca => {
            let ms = build_concept_matrices(
                wl,
                &Measure::Sca { model: SoundClassModel::fine(), table: ScoreTable::fine_generic() },
            )?;
            cluster_matrices(&ms, Clusterer::FlatUpgma, threshold.unwrap(), config.seed)
        }
        DetectMethod::LexStat => {
            let scorer = config.lexstat.ok_or_else(|| {
                Error::Config("lexstat method needs a trained scorer in the config".into())
            })?;
            let ms = build_concept_matrices(wl, &Measure::LexStat { scorer })?;
            cluster_matrices(&ms, Clusterer::MapEquation, threshold.unwrap(), config.seed)
        }
        DetectMethod::OnlinePmi => {
            let matrix = config.pmi.ok_or_else(|| {
                Error::Config("onlinepmi method needs a trained matrix in the config".into())
            })?;
            let ms = build_concept_matrices(wl, &Measure::OnlinePmi { matrix })?;
            cluster_matrices(&ms, Clusterer::LabelPropagation, threshold.unwrap(), config.seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn matrix(items: usize, d: &[(usize, usize, f64)]) -> ConceptDistanceMatrix {
        let ids: Vec<String> = (0..items).map(|i| format!("w{i}")).collect();
        let lookup: BTreeMap<(usize, usize), f64> =
            d.iter().map(|&(i, j, v)| ((i.min(j), i.max(j)), v)).collect();
        ConceptDistanceMatrix::build("c", ids, |i, j| {
            Ok(*lookup.get(&(i.min(j), i.max(j))).unwrap_or(&1.0))
        })
        .unwrap()
    }

    #[test]
    fn ccm_groups_by_first_two_consonant_classes() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "c", "k a t a"),
            entry("2", "b", "c", "k o t"),
        ])
        .unwrap();
        let p = ccm_partition(&wl, SoundClassModel::coarse()).unwrap();
        assert_eq!(p.label_of("1"), p.label_of("2"));
    }

    #[test]
    fn ccm_separates_on_first_class() {
        let wl =
            Wordlist::new(vec![entry("1", "a", "c", "k a t"), entry("2", "b", "c", "p a t")])
                .unwrap();
        let p = ccm_partition(&wl, SoundClassModel::coarse()).unwrap();
        assert_ne!(p.label_of("1"), p.label_of("2"));
    }

    #[test]
    fn ccm_all_placeholder_keys_are_singletons() {
        let wl = Wordlist::new(vec![entry("1", "a", "c", "a"), entry("2", "b", "c", "o")])
            .unwrap();
        let p = ccm_partition(&wl, SoundClassModel::coarse()).unwrap();
        assert_ne!(p.label_of("1"), p.label_of("2"));
    }

    #[test]
    fn ccm_partial_placeholder_keys_group_on_equality() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "c", "p a"),
            entry("2", "b", "c", "p o"),
            entry("3", "c", "c", "t o"),
        ])
        .unwrap();
        let p = ccm_partition(&wl, SoundClassModel::coarse()).unwrap();
        assert_eq!(p.label_of("1"), p.label_of("2"));
        assert_ne!(p.label_of("1"), p.label_of("3"));
    }

    #[test]
    fn ccm_wildcard_keys_never_match() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "c", "☃ a t"),
            entry("2", "b", "c", "☃ a t"),
        ])
        .unwrap();
        let p = ccm_partition(&wl, SoundClassModel::coarse()).unwrap();
        assert_ne!(p.label_of("1"), p.label_of("2"));
    }

    #[test]
    fn flat_upgma_hand_example() {
        // d(0,1)=0.2, d(1,2)=0.2, d(0,2)=0.9, threshold 0.5: The {0,1} pair
        // wins the tie; the merged cluster sits 0.55 from item 2, so merging
        // stops at {0,1},{2}.
        let m = matrix(3, &[(0, 1, 0.2), (1, 2, 0.2), (0, 2, 0.9)]);
        let c = flat_upgma(&m, 0.5).unwrap();
        assert_eq!(c, vec![0, 0, 1]);
    }

    #[test]
    fn flat_upgma_threshold_above_all_distances_yields_one_cluster() {
        let m = matrix(4, &[(0, 1, 0.3), (0, 2, 0.4), (0, 3, 0.5), (1, 2, 0.2), (1, 3, 0.6), (2, 3, 0.4)]);
        let c = flat_upgma(&m, 1.0).unwrap();
        assert!(c.iter().all(|&g| g == 0));
    }

    #[test]
    fn flat_upgma_tiny_threshold_keeps_singletons() {
        let m = matrix(3, &[(0, 1, 0.2), (1, 2, 0.2), (0, 2, 0.9)]);
        let c = flat_upgma(&m, 1e-9).unwrap();
        assert_eq!(c, vec![0, 1, 2]);
    }

    #[test]
    fn flat_upgma_matches_brute_force_oracle() {
        // Oracle: an independent agglomerator that recomputes every linkage
        // from scratch each round and tracks explicit member lists.
        fn oracle(m: &ConceptDistanceMatrix, threshold: f64) -> Vec<usize> {
            let mut clusters: Vec<Vec<usize>> = (0..m.len()).map(|i| vec![i]).collect();
            loop {
                if clusters.len() < 2 {
                    break;
                }
                let mut best_pair = None;
                let mut best_linkage = f64::INFINITY;
                for a in 0..clusters.len() {
                    for b in (a + 1)..clusters.len() {
                        let mut s = 0.0;
                        let mut c = 0usize;
                        for &i in &clusters[a] {
                            for &j in &clusters[b] {
                                s += m.get(i, j);
                                c += 1;
                            }
                        }
                        let l = s / c as f64;
                        let key = (clusters[a][0], clusters[b][0]);
                        let better = l < best_linkage
                            || (l == best_linkage
                                && best_pair.map_or(false, |(_, _, k): (usize, usize, (usize, usize))| key < k));
                        if better {
                            best_linkage = l;
                            best_pair = Some((a, b, key));
                        }
                    }
                }
                let (a, b, _) = best_pair.unwrap();
                if best_linkage > threshold {
                    break;
                }
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
                clusters[a].sort_unstable();
                clusters.sort_by_key(|c| c[0]);
            }
            let mut raw = vec![0usize; m.len()];
            for (g, members) in clusters.iter().enumerate() {
                for &i in members {
                    raw[i] = g;
                }
            }
            canonicalize(&raw)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for case in 0..300 {
            let n = rng.gen_range(1..=6);
            let mut d = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    d.push((i, j, (rng.gen_range(0..1000) as f64) / 1000.0));
                }
            }
            let m = matrix(n, &d);
            let threshold = rng.gen_range(0.05..1.0);
            assert_eq!(
                flat_upgma(&m, threshold).unwrap(),
                oracle(&m, threshold),
                "case {case}: n={n} threshold={threshold}"
            );
        }
    }

    #[test]
    fn label_propagation_separates_bridged_cliques_for_all_seeds() {
        // Two 3-cliques (distance 0.1 → weight 0.9) joined by one weak edge
        // (distance 0.45 → weight 0.55).
        let m = matrix(
            6,
            &[
                (0, 1, 0.1),
                (0, 2, 0.1),
                (1, 2, 0.1),
                (3, 4, 0.1),
                (3, 5, 0.1),
                (4, 5, 0.1),
                (2, 3, 0.45),
            ],
        );
        for seed in 1..=100 {
            let c = label_propagation(&m, 0.5, seed).unwrap();
            assert_eq!(c[0], c[1]);
            assert_eq!(c[1], c[2]);
            assert_eq!(c[3], c[4]);
            assert_eq!(c[4], c[5]);
            assert_ne!(c[0], c[3], "seed {seed} merged the cliques");
        }
    }

    #[test]
    fn label_propagation_keeps_isolated_nodes_single() {
        let m = matrix(3, &[(0, 1, 0.1)]);
        let c = label_propagation(&m, 0.5, 7).unwrap();
        assert_eq!(c[0], c[1]);
        assert_ne!(c[0], c[2]);
    }

    #[test]
    fn label_propagation_no_edges_all_singletons() {
        let m = matrix(4, &[]);
        let c = label_propagation(&m, 1e-9, 3).unwrap();
        assert_eq!(c, vec![0, 1, 2, 3]);
    }

    #[test]
    fn map_equation_splits_barbell_and_improves_codelength() {
        // Two 4-cliques joined by a single bridge.
        let mut edges = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                edges.push((a, b, 0.1));
                edges.push((a + 4, b + 4, 0.1));
            }
        }
        edges.push((3, 4, 0.4));
        let m = matrix(8, &edges);
        let c = map_equation_communities(&m, 0.5, 13).unwrap();
        for i in 0..4 {
            assert_eq!(c[i], c[0]);
            assert_eq!(c[i + 4], c[4]);
        }
        assert_ne!(c[0], c[4]);

        // The two-community assignment beats one module and singletons.
        let adj = threshold_graph(&m, 0.5);
        let two: Vec<usize> = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let one: Vec<usize> = vec![0; 8];
        let singl: Vec<usize> = (0..8).collect();
        let l_two = codelength(&adj, &two);
        assert!(l_two < codelength(&adj, &one));
        assert!(l_two < codelength(&adj, &singl));
    }

    #[test]
    fn map_equation_single_clique_one_community() {
        let m = matrix(4, &[(0, 1, 0.1), (0, 2, 0.1), (0, 3, 0.1), (1, 2, 0.1), (1, 3, 0.1), (2, 3, 0.1)]);
        let c = map_equation_communities(&m, 0.5, 1).unwrap();
        assert!(c.iter().all(|&g| g == 0));
    }

    #[test]
    fn map_equation_no_edges_all_singletons() {
        let m = matrix(3, &[]);
        let c = map_equation_communities(&m, 1e-9, 1).unwrap();
        assert_eq!(c, vec![0, 1, 2]);
    }

    #[test]
    fn detect_requires_artifacts_for_trained_methods() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "c", "k a t"),
            entry("2", "b", "c", "k a t"),
        ])
        .unwrap();
        let err = detect_cognates(&wl, DetectMethod::LexStat, &DetectConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
        let err = detect_cognates(&wl, DetectMethod::OnlinePmi, &DetectConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn detect_unknown_method_name_is_an_argument_error() {
        assert!(matches!("svm".parse::<DetectMethod>(), Err(Error::Argument(_))));
    }

    #[test]
    fn detect_single_word_concepts_are_singletons() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "sun", "s o l"),
            entry("2", "a", "moon", "l u n a"),
            entry("3", "b", "moon", "m o n d"),
        ])
        .unwrap();
        for method in [DetectMethod::Ccm, DetectMethod::Ned, DetectMethod::Sca] {
            let p = detect_cognates(&wl, method, &DetectConfig::default()).unwrap();
            let sun = p.clusters_of("sun");
            assert_eq!(sun.len(), 1);
            assert_eq!(sun[&0], vec!["1"]);
        }
    }

    #[test]
    fn detect_covers_every_entry_exactly_once() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "hand", "h a n t"),
            entry("2", "b", "hand", "h a n"),
            entry("3", "c", "hand", "m a n o"),
            entry("4", "a", "sun", "s o n"),
            entry("5", "b", "sun", "s u n a"),
        ])
        .unwrap();
        let p = detect_cognates(&wl, DetectMethod::Ned, &DetectConfig::default()).unwrap();
        assert_eq!(p.len(), wl.entries().len());
        for e in wl.entries() {
            let label = p.label_of(&e.id).expect("entry labelled");
            assert_eq!(label.concept, e.concept);
        }
    }

    #[test]
    fn partition_round_trips_through_tsv() {
        let wl = Wordlist::new(vec![
            entry("1", "a", "hand", "h a n t"),
            entry("2", "b", "hand", "h a n"),
            entry("3", "a", "sun", "s o n"),
        ])
        .unwrap();
        let p = detect_cognates(&wl, DetectMethod::Ned, &DetectConfig::default()).unwrap();
        let mut buf = Vec::new();
        p.to_tsv(&mut buf).unwrap();
        let back = CognatePartition::from_tsv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p, back);
    }
}

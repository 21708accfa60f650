//! Trees, Newick I/O, and quartet-based distances between topologies.
//!
//! Trees are rooted and may contain polytomies. Quartet comparisons work on
//! topological leaf-pair distances: for each four-leaf subset the pairing
//! with the strictly smallest distance sum is its butterfly, and a three-way
//! tie marks the quartet as unresolved (a star). The quartet distance is the
//! fraction of quartets whose topology differs between two trees; the
//! generalized variant divides only by the reference tree's resolved
//! quartets, so polytomies in the reference are not penalized.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::iter::Peekable;
use std::str::CharIndices;

use crate::error::{Error, Result};

/// A rooted tree with optional branch lengths and leaf labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct TreeNode {
    label: Option<String>,
    branch_length: Option<f64>,
    children: Vec<usize>,
}

impl Tree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_empty()).count()
    }

    /// Sorted leaf labels.
    pub fn leaf_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .filter_map(|n| n.label.as_deref())
            .collect();
        names.sort_unstable();
        names
    }

    /// Writes Newick, emitting branch lengths (17 significant digits) only
    /// where present.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_node(&self, v: usize, out: &mut String) {
        let node = &self.nodes[v];
        if !node.children.is_empty() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_node(c, out);
            }
            out.push(')');
        }
        if let Some(label) = &node.label {
            out.push_str(label);
        }
        if let Some(len) = node.branch_length {
            out.push_str(&format!(":{len:.16e}"));
        }
    }

    /// Pairwise topological (edge-count) distances between leaves, indexed
    /// by `order`.
    fn leaf_distance_table(&self, order: &BTreeMap<&str, usize>) -> Vec<Vec<u32>> {
        let n_nodes = self.nodes.len();
        let mut adj = vec![Vec::new(); n_nodes];
        for (v, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                adj[v].push(c);
                adj[c].push(v);
            }
        }
        let leaves: Vec<(usize, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(v, n)| (v, order[n.label.as_deref().expect("leaves are labelled")]))
            .collect();

        let n = order.len();
        let mut table = vec![vec![0u32; n]; n];
        let mut dist = vec![u32::MAX; n_nodes];
        for &(start, row) in &leaves {
            dist.fill(u32::MAX);
            dist[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if dist[w] == u32::MAX {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for &(leaf, col) in &leaves {
                table[row][col] = dist[leaf];
            }
        }
        table
    }

    /// Leaf sets (as sorted index lists under `order`) of every subtree,
    /// deduplicated within the tree.
    fn clades(&self, order: &BTreeMap<&str, usize>) -> BTreeSet<Vec<usize>> {
        fn collect(
            tree: &Tree,
            v: usize,
            order: &BTreeMap<&str, usize>,
            out: &mut BTreeSet<Vec<usize>>,
        ) -> Vec<usize> {
            let node = &tree.nodes[v];
            let mut leaves = Vec::new();
            if node.children.is_empty() {
                leaves.push(order[node.label.as_deref().expect("leaves are labelled")]);
            } else {
                for &c in &node.children {
                    leaves.extend(collect(tree, c, order, out));
                }
                leaves.sort_unstable();
            }
            out.insert(leaves.clone());
            leaves
        }
        let mut out = BTreeSet::new();
        collect(self, self.root, order, &mut out);
        out
    }
}

/// Sorted leaf-label sets of every subtree that contains at least two but
/// not all leaves. These are the clades that distinguish topologies, e.g.
/// when comparing clade frequencies between posterior samples.
pub fn nontrivial_clades(tree: &Tree) -> BTreeSet<Vec<String>> {
    let names = tree.leaf_names();
    let order: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = names.len();
    tree.clades(&order)
        .into_iter()
        .filter(|c| c.len() >= 2 && c.len() < n)
        .map(|c| c.into_iter().map(|i| names[i].to_string()).collect())
        .collect()
}

/// Canonical key of a tree's rooted topology: leaf labels only, children
/// sorted, branch lengths ignored. Equal keys mean equal rooted topologies.
pub fn topology_key(tree: &Tree) -> String {
    fn key(tree: &Tree, v: usize) -> String {
        let node = &tree.nodes[v];
        if node.children.is_empty() {
            node.label.clone().unwrap_or_default()
        } else {
            let mut parts: Vec<String> =
                node.children.iter().map(|&c| key(tree, c)).collect();
            parts.sort_unstable();
            format!("({})", parts.join(","))
        }
    }
    key(tree, tree.root)
}

struct NewickParser<'a> {
    chars: Peekable<CharIndices<'a>>,
    len: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> NewickParser<'a> {
    fn new(text: &'a str) -> Self {
        NewickParser { chars: text.char_indices().peekable(), len: text.len(), nodes: Vec::new() }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.peek().map(|&(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.skip_ws();
        self.chars.peek().map_or(self.len, |&(i, _)| i)
    }

    fn expect(&mut self, want: char) -> Result<()> {
        let at = self.offset();
        match self.chars.next() {
            Some((_, c)) if c == want => Ok(()),
            Some((_, c)) => {
                Err(Error::parse_at_offset(at, format!("expected '{want}', found '{c}'")))
            }
            None => Err(Error::parse_at_offset(at, format!("expected '{want}', found end"))),
        }
    }

    fn parse_label(&mut self) -> Option<String> {
        let mut label = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_whitespace() || "(),:;".contains(c) {
                break;
            }
            label.push(c);
            self.chars.next();
        }
        if label.is_empty() {
            None
        } else {
            Some(label)
        }
    }

    fn parse_length(&mut self) -> Result<Option<f64>> {
        if self.peek() != Some(':') {
            return Ok(None);
        }
        self.chars.next();
        let at = self.offset();
        let mut text = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if c.is_whitespace() || "(),;".contains(c) {
                break;
            }
            text.push(c);
            self.chars.next();
        }
        let value = text
            .parse::<f64>()
            .map_err(|_| Error::parse_at_offset(at, format!("bad branch length '{text}'")))?;
        Ok(Some(value))
    }

    fn parse_subtree(&mut self) -> Result<usize> {
        let at = self.offset();
        let children = if self.peek() == Some('(') {
            self.chars.next();
            if self.peek() == Some(')') {
                return Err(Error::parse_at_offset(at, "empty subtree"));
            }
            let mut children = vec![self.parse_subtree()?];
            while self.peek() == Some(',') {
                self.chars.next();
                children.push(self.parse_subtree()?);
            }
            self.expect(')')?;
            children
        } else {
            Vec::new()
        };
        let label = self.parse_label();
        if children.is_empty() && label.is_none() {
            return Err(Error::parse_at_offset(at, "expected a leaf label or '('"));
        }
        let branch_length = self.parse_length()?;
        self.nodes.push(TreeNode { label, branch_length, children });
        Ok(self.nodes.len() - 1)
    }
}

/// Parses a single Newick tree. Polytomies are kept; leaf labels must be
/// unique; trailing garbage after the semicolon is rejected.
pub fn parse_newick(text: &str) -> Result<Tree> {
    let mut p = NewickParser::new(text);
    let root = p.parse_subtree()?;
    p.expect(';')?;
    let at = p.offset();
    if p.chars.next().is_some() {
        return Err(Error::parse_at_offset(at, "unexpected text after ';'"));
    }

    let tree = Tree { nodes: p.nodes, root };
    let mut seen = BTreeSet::new();
    for node in &tree.nodes {
        if node.children.is_empty() {
            let label = node
                .label
                .as_deref()
                .expect("parser never produces an unlabelled leaf");
            if !seen.insert(label.to_owned()) {
                return Err(Error::Duplicate(label.to_owned()));
            }
        }
    }
    Ok(tree)
}

/// One quartet's topology; the `u8` selects the pairing of the sorted
/// quartet (a,b,c,d): 0 = ab|cd, 1 = ac|bd, 2 = ad|bc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QuartetTopology {
    Star,
    Butterfly(u8),
}

fn quartet_topology(d: &[Vec<u32>], q: [usize; 4]) -> QuartetTopology {
    let [a, b, c, e] = q;
    let sums = [d[a][b] + d[c][e], d[a][c] + d[b][e], d[a][e] + d[b][c]];
    let min = *sums.iter().min().expect("three sums");
    let mut argmin = 0u8;
    let mut hits = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s == min {
            argmin = i as u8;
            hits += 1;
        }
    }
    if hits == 1 {
        QuartetTopology::Butterfly(argmin)
    } else {
        QuartetTopology::Star
    }
}

/// Shared leaf order of two trees; errors when the leaf sets differ.
fn common_order<'a>(a: &'a Tree, b: &'a Tree) -> Result<BTreeMap<&'a str, usize>> {
    let la = a.leaf_names();
    let lb = b.leaf_names();
    if la != lb {
        let sa: BTreeSet<&str> = la.iter().copied().collect();
        let sb: BTreeSet<&str> = lb.iter().copied().collect();
        let only_a: Vec<&str> = sa.difference(&sb).take(5).copied().collect();
        let only_b: Vec<&str> = sb.difference(&sa).take(5).copied().collect();
        return Err(Error::Mismatch(format!(
            "trees have different leaf sets (first only: [{}], second only: [{}])",
            only_a.join(", "),
            only_b.join(", ")
        )));
    }
    Ok(la.into_iter().enumerate().map(|(i, n)| (n, i)).collect())
}

fn for_each_quartet(n: usize, mut f: impl FnMut([usize; 4])) {
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                for e in (c + 1)..n {
                    f([a, b, c, e]);
                }
            }
        }
    }
}

fn n_quartets(n: usize) -> u64 {
    if n < 4 {
        0
    } else {
        let n = n as u64;
        n * (n - 1) * (n - 2) * (n - 3) / 24
    }
}

/// Fraction of four-leaf subsets whose topology (butterfly pairing or star)
/// differs between the trees. Needs two trees over the same ≥ 4 leaves.
pub fn quartet_distance(a: &Tree, b: &Tree) -> Result<f64> {
    let order = common_order(a, b)?;
    let n = order.len();
    if n < 4 {
        return Err(Error::UndefinedMetric(format!(
            "quartet distance needs at least four shared leaves, got {n}"
        )));
    }
    let da = a.leaf_distance_table(&order);
    let db = b.leaf_distance_table(&order);
    let mut agree = 0u64;
    for_each_quartet(n, |q| {
        if quartet_topology(&da, q) == quartet_topology(&db, q) {
            agree += 1;
        }
    });
    Ok(1.0 - agree as f64 / n_quartets(n) as f64)
}

/// Generalized quartet distance: among the reference tree's resolved
/// quartets, the fraction the candidate fails to reproduce. Undefined when
/// the reference resolves nothing (a complete star).
pub fn gqd(candidate: &Tree, reference: &Tree) -> Result<f64> {
    let order = common_order(candidate, reference)?;
    let n = order.len();
    if n < 4 {
        return Err(Error::UndefinedMetric(format!(
            "quartet distance needs at least four shared leaves, got {n}"
        )));
    }
    let dc = candidate.leaf_distance_table(&order);
    let dr = reference.leaf_distance_table(&order);
    let mut butterflies = 0u64;
    let mut shared = 0u64;
    for_each_quartet(n, |q| {
        if let QuartetTopology::Butterfly(p) = quartet_topology(&dr, q) {
            butterflies += 1;
            if quartet_topology(&dc, q) == QuartetTopology::Butterfly(p) {
                shared += 1;
            }
        }
    });
    if butterflies == 0 {
        return Err(Error::UndefinedMetric(
            "reference tree resolves no quartets (complete star)".into(),
        ));
    }
    Ok((butterflies - shared) as f64 / butterflies as f64)
}

/// Majority-rule consensus of rooted trees.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub tree: Tree,
    /// Frequency of every clade kept in the consensus, keyed by its sorted
    /// leaf names.
    pub clade_frequencies: BTreeMap<Vec<String>, f64>,
}

/// Builds the consensus containing exactly the clades whose frequency
/// strictly exceeds `threshold`. The threshold must be at least 1/2 (which
/// guarantees the kept clades nest) and below 1.
pub fn majority_consensus(trees: &[Tree], threshold: f64) -> Result<Consensus> {
    if trees.is_empty() {
        return Err(Error::Argument("consensus of zero trees".into()));
    }
    if !(0.5..1.0).contains(&threshold) {
        return Err(Error::Argument(format!(
            "consensus threshold must lie in [0.5, 1), got {threshold}"
        )));
    }
    let names: Vec<String> = trees[0].leaf_names().into_iter().map(str::to_owned).collect();
    let order: BTreeMap<&str, usize> =
        names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    for t in &trees[1..] {
        if t.leaf_names() != trees[0].leaf_names() {
            return Err(Error::Mismatch("consensus input trees have different leaf sets".into()));
        }
    }

    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for t in trees {
        for clade in t.clades(&order) {
            *counts.entry(clade).or_insert(0) += 1;
        }
    }
    let n_trees = trees.len() as f64;
    let mut kept: Vec<(Vec<usize>, f64)> = counts
        .into_iter()
        .map(|(clade, c)| (clade, c as f64 / n_trees))
        .filter(|(_, f)| *f > threshold)
        .collect();
    // Largest first so every clade's parent is already placed; the full
    // leaf set and the singletons appear in every tree, so they are always
    // present.
    kept.sort_by(|(a, _), (b, _)| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let mut nodes: Vec<TreeNode> = Vec::with_capacity(kept.len());
    let mut placed: Vec<(Vec<usize>, usize)> = Vec::new(); // (clade, node)
    for (clade, _) in &kept {
        let node = nodes.len();
        nodes.push(TreeNode {
            label: (clade.len() == 1).then(|| names[clade[0]].clone()),
            branch_length: None,
            children: Vec::new(),
        });
        // Smallest already-placed strict superset is the parent.
        let parent = placed
            .iter()
            .filter(|(p, _)| p.len() > clade.len() && clade.iter().all(|x| p.contains(x)))
            .min_by_key(|(p, _)| p.len())
            .map(|&(_, v)| v);
        match parent {
            Some(v) => nodes[v].children.push(node),
            None if placed.is_empty() => {}
            None => {
                return Err(Error::Mismatch(
                    "incompatible clades survived the consensus threshold".into(),
                ))
            }
        }
        placed.push((clade.clone(), node));
    }
    // Deterministic child order: by smallest contained leaf.
    let min_leaf: Vec<usize> = placed
        .iter()
        .map(|(clade, _)| clade[0])
        .collect();
    for node in &mut nodes {
        node.children.sort_by_key(|&c| min_leaf[c]);
    }

    let clade_frequencies = kept
        .iter()
        .map(|(clade, f)| (clade.iter().map(|&i| names[i].clone()).collect(), *f))
        .collect();
    Ok(Consensus { tree: Tree { nodes, root: 0 }, clade_frequencies })
}

/// Mean ± standard deviation of a posterior tree sample's distance to a
/// reference tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GqdSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl fmt::Display for GqdSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.sd)
    }
}

/// Sums with pairwise splitting, keeping the result independent of chunking
/// while bounding rounding error growth.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Generalized quartet distance of every sampled tree to the reference,
/// summarized as mean and population standard deviation. Samples sharing a
/// rooted topology are computed once.
pub fn posterior_gqd_summary(samples: &[Tree], reference: &Tree) -> Result<GqdSummary> {
    if samples.is_empty() {
        return Err(Error::Argument("no posterior samples to summarize".into()));
    }
    let mut cache: BTreeMap<String, f64> = BTreeMap::new();
    let mut values = Vec::with_capacity(samples.len());
    for t in samples {
        let key = topology_key(t);
        let value = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = gqd(t, reference)?;
                cache.insert(key, v);
                v
            }
        };
        values.push(value);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sd = (pairwise_sum(&sq) / n).sqrt();
    Ok(GqdSummary { mean, sd, n: values.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_and_rewrites_structure() {
        let t = parse_newick("((a:1,b:2):0.5,c:3);").unwrap();
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.leaf_names(), vec!["a", "b", "c"]);
        let rewritten = t.to_newick();
        let again = parse_newick(&rewritten).unwrap();
        assert_eq!(topology_key(&t), topology_key(&again));
        assert!(rewritten.contains("5.0000000000000000e-1"));
    }

    #[test]
    fn parses_polytomies_and_whitespace() {
        let t = parse_newick(" ( a , b , c , d ) ;").unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert_eq!(t.nodes[t.root].children.len(), 4);
    }

    #[test]
    fn rejects_malformed_newick() {
        for bad in [
            "", "a", "();", "((a,b);", "(a,b));", "(a,a);", "(a:x,b);", "(a,b);x", "(,a);",
        ] {
            let r = parse_newick(bad);
            assert!(r.is_err(), "{bad:?} parsed: {r:?}");
        }
        assert!(matches!(parse_newick("(a,a);"), Err(Error::Duplicate(_))));
        match parse_newick("(a,b);x") {
            Err(Error::Parse { location, .. }) => assert!(location.contains("offset")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn identical_trees_have_zero_quartet_distance() {
        let t = parse_newick("((a,b),((c,d),e));").unwrap();
        assert_eq!(quartet_distance(&t, &t).unwrap(), 0.0);
        assert_eq!(gqd(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn opposite_butterflies_are_maximally_distant() {
        let a = parse_newick("((a,b),(c,d));").unwrap();
        let b = parse_newick("((a,c),(b,d));").unwrap();
        assert_eq!(quartet_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(gqd(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn star_reference_makes_gqd_undefined_but_not_qd() {
        let star = parse_newick("(a,b,c,d);").unwrap();
        let bin = parse_newick("((a,b),(c,d));").unwrap();
        assert_eq!(quartet_distance(&bin, &star).unwrap(), 1.0);
        assert!(matches!(gqd(&bin, &star), Err(Error::UndefinedMetric(_))));
        // A star candidate scores 1 against a resolved reference.
        assert_eq!(gqd(&star, &bin).unwrap(), 1.0);
    }

    #[test]
    fn partially_shared_tree_hand_value() {
        // Reference resolves all five quartets; the candidate agrees on the
        // three containing the (a,b) pair and differs on the other two.
        let reference = parse_newick("((a,b),(c,d),e);").unwrap();
        let candidate = parse_newick("(((a,b),c),(d,e));").unwrap();
        assert!((gqd(&candidate, &reference).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn polytomies_in_the_reference_are_not_penalized() {
        // Reference resolves only quartets that pick both of {a,b} and two
        // of {c,d,e}; candidate resolves everything compatibly.
        let reference = parse_newick("((a,b),c,d,e);").unwrap();
        let candidate = parse_newick("((a,b),(c,(d,e)));").unwrap();
        assert_eq!(gqd(&candidate, &reference).unwrap(), 0.0);
        assert!(quartet_distance(&candidate, &reference).unwrap() > 0.0);
    }

    #[test]
    fn mismatched_leaf_sets_are_rejected() {
        let a = parse_newick("((a,b),(c,d));").unwrap();
        let b = parse_newick("((a,b),(c,e));").unwrap();
        match quartet_distance(&a, &b) {
            Err(Error::Mismatch(msg)) => assert!(msg.contains('d') && msg.contains('e')),
            other => panic!("expected mismatch, got {other:?}"),
        }
        let tiny = parse_newick("(a,(b,c));").unwrap();
        assert!(matches!(
            quartet_distance(&tiny, &tiny),
            Err(Error::UndefinedMetric(_))
        ));
    }

    /// Random rooted tree: binary by sequential joining, then random edge
    /// contractions to create polytomies.
    fn random_tree(n: usize, contract: f64, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes: Vec<TreeNode> = (0..n)
            .map(|i| TreeNode {
                label: Some(format!("L{i}")),
                branch_length: None,
                children: Vec::new(),
            })
            .collect();
        let mut roots: Vec<usize> = (0..n).collect();
        while roots.len() > 1 {
            let i = rng.gen_range(0..roots.len());
            let a = roots.swap_remove(i);
            let j = rng.gen_range(0..roots.len());
            let b = roots.swap_remove(j);
            nodes.push(TreeNode { label: None, branch_length: None, children: vec![a, b] });
            roots.push(nodes.len() - 1);
        }
        let root = roots[0];
        // Contract internal non-root nodes into their parents at random.
        let mut tree = Tree { nodes, root };
        loop {
            let mut contracted = false;
            for v in 0..tree.nodes.len() {
                let candidates: Vec<usize> = tree.nodes[v]
                    .children
                    .iter()
                    .copied()
                    .filter(|&c| !tree.nodes[c].children.is_empty())
                    .collect();
                for c in candidates {
                    if rng.gen_bool(contract) {
                        let grandchildren = std::mem::take(&mut tree.nodes[c].children);
                        let pos =
                            tree.nodes[v].children.iter().position(|&x| x == c).unwrap();
                        tree.nodes[v].children.remove(pos);
                        tree.nodes[v].children.extend(grandchildren);
                        contracted = true;
                    }
                }
            }
            if !contracted {
                break;
            }
        }
        // Contraction leaves unreachable arena slots behind; rebuild.
        fn copy(src: &Tree, v: usize, dst: &mut Vec<TreeNode>) -> usize {
            let children: Vec<usize> =
                src.nodes[v].children.iter().map(|&c| copy(src, c, dst)).collect();
            dst.push(TreeNode {
                label: src.nodes[v].label.clone(),
                branch_length: None,
                children,
            });
            dst.len() - 1
        }
        let mut nodes = Vec::new();
        let root = copy(&tree, tree.root, &mut nodes);
        Tree { nodes, root }
    }

    /// Split-based oracle: a quartet is the butterfly ab|cd exactly when
    /// some subtree contains both of one pair and neither of the other.
    fn oracle_topology(
        clades: &BTreeSet<Vec<usize>>,
        q: [usize; 4],
    ) -> QuartetTopology {
        let pairings = [[0usize, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]];
        for (code, p) in pairings.iter().enumerate() {
            let (x, y, u, v) = (q[p[0]], q[p[1]], q[p[2]], q[p[3]]);
            let separated = clades.iter().any(|clade| {
                let has = |t: usize| clade.binary_search(&t).is_ok();
                (has(x) && has(y) && !has(u) && !has(v))
                    || (has(u) && has(v) && !has(x) && !has(y))
            });
            if separated {
                return QuartetTopology::Butterfly(code as u8);
            }
        }
        QuartetTopology::Star
    }

    #[test]
    fn min_sum_rule_matches_split_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let n = rng.gen_range(4..=10);
            let contract = [0.0, 0.3, 0.6][case % 3];
            let tree = random_tree(n, contract, &mut rng);
            let names: Vec<String> = tree.leaf_names().iter().map(|s| s.to_string()).collect();
            let order: BTreeMap<&str, usize> =
                names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let d = tree.leaf_distance_table(&order);
            let clades = tree.clades(&order);
            for_each_quartet(n, |q| {
                assert_eq!(
                    quartet_topology(&d, q),
                    oracle_topology(&clades, q),
                    "case {case}, quartet {q:?}, tree {}",
                    tree.to_newick()
                );
            });
        }
    }

    #[test]
    fn quartet_distance_is_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(4..=9);
            let a = random_tree(n, 0.3, &mut rng);
            let b = random_tree(n, 0.3, &mut rng);
            let ab = quartet_distance(&a, &b).unwrap();
            let ba = quartet_distance(&b, &a).unwrap();
            assert_eq!(ab, ba);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn nontrivial_clades_excludes_leaves_and_the_full_set() {
        let t = parse_newick("(((a,b),c),d);").unwrap();
        let clades = nontrivial_clades(&t);
        let expected: BTreeSet<Vec<String>> = [
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
        ]
        .into_iter()
        .collect();
        assert_eq!(clades, expected);

        // A star tree has no nontrivial clades at all.
        let star = parse_newick("(a,b,c,d);").unwrap();
        assert!(nontrivial_clades(&star).is_empty());
    }

    #[test]
    fn consensus_keeps_majority_clades_with_frequencies() {
        let t1 = parse_newick("(((a,b),c),d);").unwrap();
        let t2 = parse_newick("(((a,b),c),d);").unwrap();
        let t3 = parse_newick("(((a,c),b),d);").unwrap();
        let c = majority_consensus(&[t1, t2, t3], 0.5).unwrap();
        let freqs = &c.clade_frequencies;
        let ab: Vec<String> = vec!["a".into(), "b".into()];
        let abc: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        assert!((freqs[&ab] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(freqs[&abc], 1.0);
        assert_eq!(c.tree.to_newick(), "(((a,b),c),d);");
    }

    #[test]
    fn consensus_high_threshold_collapses_disputed_clades() {
        let t1 = parse_newick("((a,b),(c,d));").unwrap();
        let t2 = parse_newick("((a,c),(b,d));").unwrap();
        let t3 = parse_newick("((a,d),(b,c));").unwrap();
        let c = majority_consensus(&[t1, t2, t3], 0.5).unwrap();
        assert_eq!(c.tree.to_newick(), "(a,b,c,d);");
        assert_eq!(c.clade_frequencies.len(), 5); // root + 4 singletons
    }

    #[test]
    fn consensus_rejects_bad_inputs() {
        let t = parse_newick("((a,b),c);").unwrap();
        assert!(matches!(majority_consensus(&[], 0.5), Err(Error::Argument(_))));
        assert!(matches!(
            majority_consensus(std::slice::from_ref(&t), 0.4),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            majority_consensus(std::slice::from_ref(&t), 1.0),
            Err(Error::Argument(_))
        ));
        let other = parse_newick("((a,b),d);").unwrap();
        assert!(matches!(
            majority_consensus(&[t, other], 0.5),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn topology_key_ignores_lengths_and_child_order() {
        let a = parse_newick("((b:1,a:2):1,c:1);").unwrap();
        let b = parse_newick("(c,(a,b));").unwrap();
        assert_eq!(topology_key(&a), topology_key(&b));
        let c = parse_newick("(b,(a,c));").unwrap();
        assert_ne!(topology_key(&a), topology_key(&c));
    }

    #[test]
    fn posterior_summary_matches_direct_computation() {
        let reference = parse_newick("((a,b),(c,d),e);").unwrap();
        let good = parse_newick("(((a,b),c),(d,e));").unwrap(); // gqd 0.4
        let bad = parse_newick("(((a,c),b),(d,e));").unwrap();
        let g_bad = gqd(&bad, &reference).unwrap();
        let samples = vec![good.clone(), good.clone(), bad, good];
        let s = posterior_gqd_summary(&samples, &reference).unwrap();
        let mean = (3.0 * 0.4 + g_bad) / 4.0;
        let var =
            (3.0 * (0.4 - mean) * (0.4 - mean) + (g_bad - mean) * (g_bad - mean)) / 4.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.sd - var.sqrt()).abs() < 1e-12);
        assert_eq!(s.n, 4);
    }

    #[test]
    fn summary_formats_with_four_decimals() {
        let s = GqdSummary { mean: 0.123456, sd: 0.0567891, n: 10 };
        assert_eq!(s.to_string(), "0.1235 ± 0.0568");
    }

    #[test]
    fn pairwise_sum_matches_sequential_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sequential: f64 = xs.iter().sum();
        let pairwise = pairwise_sum(&xs);
        assert!((sequential - pairwise).abs() < 1e-9);
    }
}

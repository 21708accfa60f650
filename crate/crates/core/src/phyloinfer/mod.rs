//! Bayesian inference of dated trees from binary character matrices.
//!
//! The pieces, bottom to top:
//!
//! * [`PhyloTree`] — a rooted binary tree with node ages (leaves at age 0).
//! * [`SubstModel2`]/[`discretize_gamma`] — the two-state reversible
//!   substitution process and discrete-Γ rate variation across characters.
//! * [`LikelihoodEngine`] — pruning-based likelihoods over compressed site
//!   patterns, with correction for the fact that all-absent characters are
//!   never observed.
//! * [`log_prior`] — uniform rooted topology, uniform node ages given the
//!   root age, exponential root age, independent gamma branch rates
//!   (represented by their quantiles), and vague priors on the remaining
//!   scalars.
//! * [`Sampler`]/[`run_chain`]/[`dual_run`] — Metropolis-Hastings over
//!   topology, ages, rate quantiles, and scalars; two independent runs are
//!   compared via the average standard deviation of clade frequencies
//!   (ASDSF).

mod likelihood;
mod model;
mod prior;
mod proposals;
mod sampler;

pub use likelihood::LikelihoodEngine;
pub use model::{discretize_gamma, SubstModel2, N_RATE_CATEGORIES};
pub use prior::{log_node_age_density, log_prior};
pub use proposals::{
    narrow_exchange, node_age_slide, pi0_slide, propose, rate_quantile_slide, scale_parameter,
    subtree_regraft, KernelTuning, KernelWeights, Proposed, ScaleTarget,
};
pub use sampler::{
    asdsf, burn_in_split, clade_frequencies, dual_run, run_chain, simulate_characters,
    ChainSample, DualRunResult, McmcOptions, Sampler, State, ASDSF_CONVERGENCE_THRESHOLD,
    ASDSF_MIN_CLADE_FREQUENCY,
};

use num_bigint::BigUint;
use rand::Rng;

use crate::error::{Error, Result};

/// A rooted binary tree with node ages.
///
/// Leaves are nodes `0..n` and carry the sorted taxon labels; internal nodes
/// are `n..2n-1`. Ages increase from the leaves (all at age 0) to the root,
/// and every branch's duration is the age difference between its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    labels: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Option<(usize, usize)>>,
    ages: Vec<f64>,
    root: usize,
}

impl PhyloTree {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_none()
    }

    pub fn children_of(&self, v: usize) -> Option<(usize, usize)> {
        self.children[v]
    }

    pub fn parent_of(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn age(&self, v: usize) -> f64 {
        self.ages[v]
    }

    pub fn root_age(&self) -> f64 {
        self.ages[self.root]
    }

    /// Duration of the branch above `v`. Zero for the root.
    pub fn branch_time(&self, v: usize) -> f64 {
        match self.parent[v] {
            Some(p) => self.ages[p] - self.ages[v],
            None => 0.0,
        }
    }

    pub(crate) fn set_age(&mut self, v: usize, age: f64) {
        self.ages[v] = age;
    }

    /// Rescales all ages so the root sits at `root_age`.
    pub fn with_root_age(mut self, root_age: f64) -> PhyloTree {
        let factor = root_age / self.root_age();
        for a in &mut self.ages {
            *a *= factor;
        }
        self
    }

    /// Nodes ordered children-before-parents.
    pub fn postorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded || self.is_leaf(v) {
                order.push(v);
            } else {
                stack.push((v, true));
                let (a, b) = self.children[v].expect("internal node");
                stack.push((b, false));
                stack.push((a, false));
            }
        }
        order
    }

    /// Number of internal nodes in each node's subtree (0 for leaves).
    pub(crate) fn subtree_internal_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_nodes()];
        for v in self.postorder() {
            if let Some((a, b)) = self.children[v] {
                counts[v] = 1 + counts[a] + counts[b];
            }
        }
        counts
    }

    /// Newick serialization with ages turned into branch durations.
    pub fn to_newick(&self) -> String {
        fn write(tree: &PhyloTree, v: usize, out: &mut String) {
            if let Some((a, b)) = tree.children[v] {
                out.push('(');
                write(tree, a, out);
                out.push(',');
                write(tree, b, out);
                out.push(')');
            } else {
                out.push_str(&tree.labels[v]);
            }
            if tree.parent[v].is_some() {
                out.push_str(&format!(":{:.16e}", tree.branch_time(v)));
            }
        }
        let mut out = String::new();
        write(self, self.root, &mut out);
        out.push(';');
        out
    }

    /// Checks every structural invariant; proposals rely on these holding.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_leaves();
        if n < 2 {
            return Err(Error::Argument("a tree needs at least two leaves".into()));
        }
        if self.n_nodes() != 2 * n - 1 {
            return Err(Error::Mismatch(format!(
                "expected {} nodes for {n} leaves, found {}",
                2 * n - 1,
                self.n_nodes()
            )));
        }
        if self.labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("leaf labels must be sorted and unique".into()));
        }
        if self.parent[self.root].is_some() {
            return Err(Error::Mismatch("root has a parent".into()));
        }
        let mut seen_children = vec![false; self.n_nodes()];
        for v in 0..self.n_nodes() {
            match (v < n, self.children[v]) {
                (true, Some(_)) => {
                    return Err(Error::Mismatch(format!("leaf {v} has children")))
                }
                (false, None) => {
                    return Err(Error::Mismatch(format!("internal node {v} has no children")))
                }
                (false, Some((a, b))) => {
                    for c in [a, b] {
                        if self.parent[c] != Some(v) {
                            return Err(Error::Mismatch(format!(
                                "child {c} does not point back to {v}"
                            )));
                        }
                        if seen_children[c] {
                            return Err(Error::Mismatch(format!("node {c} has two parents")));
                        }
                        seen_children[c] = true;
                        if self.ages[v] < self.ages[c] {
                            return Err(Error::Mismatch(format!(
                                "node {v} is younger than its child {c}"
                            )));
                        }
                    }
                }
                (true, None) => {
                    if self.ages[v] != 0.0 {
                        return Err(Error::Mismatch(format!("leaf {v} has nonzero age")));
                    }
                }
            }
        }
        if self.postorder().len() != self.n_nodes() {
            return Err(Error::Mismatch("not all nodes are reachable from the root".into()));
        }
        Ok(())
    }
}

/// Samples a topology uniformly over all rooted binary shapes by inserting
/// leaves one at a time on a uniformly chosen branch (counting the branch
/// above the root), then spaces the internal ages with small exponential
/// gaps. Labels must be sorted and unique.
pub fn random_tree(labels: &[String], rng: &mut impl Rng) -> Result<PhyloTree> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Argument("a tree needs at least two leaves".into()));
    }
    if labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("leaf labels must be sorted and unique".into()));
    }

    let n_nodes = 2 * n - 1;
    let mut tree = PhyloTree {
        labels: labels.to_vec(),
        parent: vec![None; n_nodes],
        children: vec![None; n_nodes],
        ages: vec![0.0; n_nodes],
        root: 0,
    };
    let mut inserted: Vec<usize> = vec![0]; // nodes present so far
    for k in 1..n {
        let leaf = k;
        let internal = n - 1 + k;
        // A tree with k leaves offers 2k-1 insertion points: one per
        // non-root node, plus the slot above the root.
        let non_root: Vec<usize> =
            inserted.iter().copied().filter(|&v| tree.parent[v].is_some()).collect();
        let choice = rng.gen_range(0..non_root.len() + 1);
        if choice == non_root.len() {
            let old_root = tree.root;
            tree.children[internal] = Some((old_root, leaf));
            tree.parent[old_root] = Some(internal);
            tree.parent[leaf] = Some(internal);
            tree.root = internal;
        } else {
            let x = non_root[choice];
            let p = tree.parent[x].expect("chosen node is not the root");
            let (a, b) = tree.children[p].expect("parents are internal");
            tree.children[p] = Some(if a == x { (internal, b) } else { (a, internal) });
            tree.parent[internal] = Some(p);
            tree.children[internal] = Some((x, leaf));
            tree.parent[x] = Some(internal);
            tree.parent[leaf] = Some(internal);
        }
        inserted.push(leaf);
        inserted.push(internal);
    }

    // Valid ages: every internal node slightly older than its children.
    let order = tree.postorder();
    for v in order {
        if let Some((a, b)) = tree.children[v] {
            let base = tree.ages[a].max(tree.ages[b]);
            let gap: f64 = rng.sample(rand_distr::Exp1);
            tree.ages[v] = base + gap.max(1e-9) / n as f64;
        }
    }
    tree.validate()?;
    Ok(tree)
}

/// Number of rooted binary tree shapes over `n` labelled leaves:
/// the double factorial (2n-3)!!.
pub fn num_rooted_topologies(n: usize) -> BigUint {
    let mut acc = BigUint::from(1u32);
    if n < 3 {
        return acc;
    }
    let mut k = 3u64;
    while k <= 2 * n as u64 - 3 {
        acc *= k;
        k += 2;
    }
    acc
}

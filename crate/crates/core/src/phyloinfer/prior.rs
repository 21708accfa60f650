//! Joint log-prior over trees, clock-rate quantiles, and scalar parameters.
//!
//! The tree prior is uniform over rooted topologies and, given the root age,
//! uniform over valid node-age vectors; the root age itself is exponential
//! with mean one. Branch clock rates follow independent gamma distributions
//! whose mean is one and whose variance is `sigma2` divided by the branch
//! duration, so rates on long branches are held closer to the clock. The
//! sampler represents each rate by its quantile under that gamma — a number
//! in (0, 1) that is uniform a priori — because the rates themselves reach
//! magnitudes no float can hold when a branch gets short. The stationary
//! frequency is uniform on (0, 1); the gamma shape and `sigma2` are
//! exponential with mean one. Invalid states score negative infinity.

use crate::phyloinfer::PhyloTree;

/// ln of the number of rooted binary topologies, Σ ln(2k+1).
fn ln_num_rooted_topologies(n: usize) -> f64 {
    (1..n.saturating_sub(1)).map(|k| ((2 * k + 1) as f64).ln()).sum()
}

/// Log-density of the node ages given the topology and root age, normalized
/// so that it integrates to one over all valid age vectors: each internal
/// node contributes the internal-node count of its subtree, and the volume
/// scales with the root age.
pub fn log_node_age_density(tree: &PhyloTree) -> f64 {
    let n = tree.n_leaves();
    if n < 3 {
        return 0.0; // no free internal ages
    }
    let root_age = tree.root_age();
    if !(root_age > 0.0) {
        return f64::NEG_INFINITY;
    }
    let counts = tree.subtree_internal_counts();
    let mut term = -((n - 2) as f64) * root_age.ln();
    for v in 0..tree.n_nodes() {
        if tree.is_leaf(v) || v == tree.root() {
            continue;
        }
        term += (counts[v] as f64).ln();
    }
    term
}

/// Joint log-prior of a full sampler state. `rate_quantiles[v]` is the
/// quantile of the clock rate of the branch above node `v`; the root's entry
/// is ignored. Quantiles are uniform on (0, 1), so they contribute no
/// density term — only a validity check.
pub fn log_prior(
    tree: &PhyloTree,
    rate_quantiles: &[f64],
    pi0: f64,
    alpha: f64,
    sigma2: f64,
) -> f64 {
    if !(pi0 > 0.0 && pi0 < 1.0) || !(alpha > 0.0) || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return f64::NEG_INFINITY;
    }
    if rate_quantiles.len() != tree.n_nodes() {
        return f64::NEG_INFINITY;
    }
    let root_age = tree.root_age();
    if !(root_age > 0.0 && root_age.is_finite()) {
        return f64::NEG_INFINITY;
    }

    // Topology, ages, root age (exponential, mean one).
    let mut total = -ln_num_rooted_topologies(tree.n_leaves());
    total += log_node_age_density(tree);
    total += -root_age;

    // Every branch must have positive duration (the gamma of its rate is
    // undefined otherwise) and a quantile strictly inside the unit interval.
    for v in 0..tree.n_nodes() {
        if tree.parent_of(v).is_none() {
            continue;
        }
        let u = rate_quantiles[v];
        if !(tree.branch_time(v) > 0.0) || !(u > 0.0 && u < 1.0) {
            return f64::NEG_INFINITY;
        }
    }

    // pi0 uniform on (0,1) adds nothing; alpha and sigma2 exponential.
    total += -alpha;
    total += -sigma2;
    total
}

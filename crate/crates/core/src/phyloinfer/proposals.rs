//! Metropolis-Hastings proposal kernels over sampler states.
//!
//! Topology moves (narrow exchange and an age-preserving subtree regraft)
//! leave node ages untouched, so they compose cleanly with the age and
//! scalar moves. Branch clock rates are represented by their quantiles, so
//! no kernel needs to touch them when the tree or the rate variance moves:
//! the effective rates follow the reshaped per-branch gammas automatically.
//! Every kernel returns the proposed state together with the log Hastings
//! correction; `None` means the move is undefined from the current state and
//! counts as a rejection.

use rand::Rng;

use crate::phyloinfer::sampler::State;
use crate::phyloinfer::PhyloTree;

/// Relative selection weights of the five kernel groups in [`propose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelWeights {
    pub narrow_exchange: u32,
    pub subtree_regraft: u32,
    pub node_age_slide: u32,
    pub root_age_scale: u32,
    /// The scalar block: stationary frequency, gamma shape, rate variance,
    /// and branch rate quantiles, picked uniformly within the block.
    pub scalar_block: u32,
}

impl KernelWeights {
    pub fn total(&self) -> u32 {
        self.narrow_exchange
            + self.subtree_regraft
            + self.node_age_slide
            + self.root_age_scale
            + self.scalar_block
    }
}

impl Default for KernelWeights {
    fn default() -> Self {
        KernelWeights {
            narrow_exchange: 30,
            subtree_regraft: 10,
            node_age_slide: 30,
            root_age_scale: 10,
            scalar_block: 20,
        }
    }
}

/// Tunable widths of the random-walk and multiplier kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTuning {
    /// Half-width of the uniform window for internal node-age slides.
    pub age_window: f64,
    /// Half-width of the uniform window for the stationary-frequency slide.
    pub pi0_window: f64,
    /// Half-width of the uniform window for branch rate-quantile slides.
    pub rate_quantile_window: f64,
    /// Spread of the multiplier kernels, m = exp(lambda (u - 1/2)).
    pub multiplier_lambda: f64,
    /// How often each kernel group is attempted.
    pub weights: KernelWeights,
}

impl Default for KernelTuning {
    fn default() -> Self {
        KernelTuning {
            age_window: 0.5,
            pi0_window: 0.2,
            rate_quantile_window: 0.2,
            multiplier_lambda: 2.0,
            weights: KernelWeights::default(),
        }
    }
}

/// A proposed state and the log Hastings ratio of the move that produced it.
#[derive(Debug, Clone)]
pub struct Proposed {
    pub state: State,
    pub log_hastings: f64,
}

/// Which scalar a multiplier move rescales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleTarget {
    RootAge,
    Alpha,
    Sigma2,
}

/// Reflects `x` into `[lo, hi]`; a degenerate interval collapses to `lo`.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if !(span > 0.0) {
        return lo;
    }
    let period = 2.0 * span;
    let mut r = (x - lo).rem_euclid(period);
    if r > span {
        r = period - r;
    }
    lo + r
}

fn swap_child(tree: &mut PhyloTree, parent: usize, old: usize, new: usize) {
    let (a, b) = tree.children[parent].expect("parents are internal nodes");
    tree.children[parent] = if a == old {
        Some((new, b))
    } else {
        debug_assert_eq!(b, old, "node {old} is not a child of {parent}");
        Some((a, new))
    };
}

fn internal_non_root(tree: &PhyloTree) -> Vec<usize> {
    (tree.n_leaves()..tree.n_nodes()).filter(|&v| v != tree.root()).collect()
}

/// Swaps a child of an internal node with that node's sibling. Selection is
/// symmetric, so the Hastings ratio is one; the move is undefined when the
/// sibling is older than the node it would move under.
pub fn narrow_exchange(state: &State, rng: &mut impl Rng) -> Option<Proposed> {
    let tree = &state.tree;
    let candidates = internal_non_root(tree);
    if candidates.is_empty() {
        return None;
    }
    let u = candidates[rng.gen_range(0..candidates.len())];
    let p = tree.parent_of(u).expect("u is not the root");
    let (x, y) = tree.children_of(p).expect("p is internal");
    let s = if x == u { y } else { x };
    let (a, b) = tree.children_of(u).expect("u is internal");
    let c = if rng.gen_bool(0.5) { a } else { b };
    if !(tree.age(u) > tree.age(s)) {
        return None;
    }

    let mut next = state.clone();
    swap_child(&mut next.tree, u, c, s);
    swap_child(&mut next.tree, p, s, c);
    next.tree.parent[s] = Some(u);
    next.tree.parent[c] = Some(p);
    Some(Proposed { state: next, log_hastings: 0.0 })
}

/// Prunes the subtree above a node (along with its parent) and regrafts it
/// onto a uniformly chosen branch that spans the parent's age, keeping every
/// node age fixed. The spanning-branch set is the same before and after the
/// move, so the Hastings ratio is one.
pub fn subtree_regraft(state: &State, rng: &mut impl Rng) -> Option<Proposed> {
    let tree = &state.tree;
    let root = tree.root();
    let candidates: Vec<usize> = (0..tree.n_nodes())
        .filter(|&v| tree.parent_of(v).map_or(false, |p| p != root))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let v = candidates[rng.gen_range(0..candidates.len())];
    let p = tree.parent_of(v).expect("candidate has a parent");
    let g = tree.parent_of(p).expect("candidate's parent is not the root");
    let (pa, pb) = tree.children_of(p).expect("p is internal");
    let s = if pa == v { pb } else { pa };

    let mut in_subtree = vec![false; tree.n_nodes()];
    let mut stack = vec![v];
    while let Some(w) = stack.pop() {
        in_subtree[w] = true;
        if let Some((a, b)) = tree.children_of(w) {
            stack.push(a);
            stack.push(b);
        }
    }

    // Branches of the pruned tree that span age(p). After pruning, s hangs
    // from g; everything else keeps its parent.
    let age_p = tree.age(p);
    let mut targets: Vec<usize> = Vec::new();
    for x in 0..tree.n_nodes() {
        if x == p || in_subtree[x] {
            continue;
        }
        let px = if x == s {
            g
        } else {
            match tree.parent_of(x) {
                Some(q) => q,
                None => continue,
            }
        };
        if tree.age(x) < age_p && age_p < tree.age(px) {
            targets.push(x);
        }
    }
    debug_assert!(targets.contains(&s), "the original branch always qualifies");
    let x = targets[rng.gen_range(0..targets.len())];
    if x == s {
        // Regrafting onto the original branch reproduces the current state.
        return Some(Proposed { state: state.clone(), log_hastings: 0.0 });
    }

    let mut next = state.clone();
    let t = &mut next.tree;
    swap_child(t, g, p, s);
    t.parent[s] = Some(g);
    let gx = t.parent[x].expect("targets hang below a spanning branch");
    swap_child(t, gx, x, p);
    t.parent[p] = Some(gx);
    swap_child(t, p, s, x);
    t.parent[x] = Some(p);
    Some(Proposed { state: next, log_hastings: 0.0 })
}

/// Slides one internal node's age inside the window allowed by its parent
/// and children, reflecting at the ends; reflection keeps the kernel
/// symmetric, so the Hastings ratio is one.
pub fn node_age_slide(state: &State, window: f64, rng: &mut impl Rng) -> Option<Proposed> {
    if !(window > 0.0) {
        return None;
    }
    let tree = &state.tree;
    let candidates = internal_non_root(tree);
    if candidates.is_empty() {
        return None;
    }
    let v = candidates[rng.gen_range(0..candidates.len())];
    let (a, b) = tree.children_of(v).expect("v is internal");
    let lo = tree.age(a).max(tree.age(b));
    let hi = tree.age(tree.parent_of(v).expect("v is not the root"));
    let age = reflect(tree.age(v) + rng.gen_range(-window..window), lo, hi);

    let mut next = state.clone();
    next.tree.set_age(v, age);
    Some(Proposed { state: next, log_hastings: 0.0 })
}

/// Slides the stationary frequency of state 0, reflecting at 0 and 1.
pub fn pi0_slide(state: &State, window: f64, rng: &mut impl Rng) -> Option<Proposed> {
    if !(window > 0.0) {
        return None;
    }
    let mut next = state.clone();
    next.pi0 = reflect(state.pi0 + rng.gen_range(-window..window), 0.0, 1.0);
    Some(Proposed { state: next, log_hastings: 0.0 })
}

/// Slides the rate quantile of one uniformly chosen branch, reflecting at 0
/// and 1. The quantile prior is flat, so this explores each branch's clock
/// rate directly; endpoint hits are rejected by the prior.
pub fn rate_quantile_slide(state: &State, window: f64, rng: &mut impl Rng) -> Option<Proposed> {
    if !(window > 0.0) {
        return None;
    }
    let tree = &state.tree;
    let non_root: Vec<usize> =
        (0..tree.n_nodes()).filter(|&v| tree.parent_of(v).is_some()).collect();
    if non_root.is_empty() {
        return None;
    }
    let v = non_root[rng.gen_range(0..non_root.len())];
    let mut next = state.clone();
    next.rate_quantiles[v] =
        reflect(state.rate_quantiles[v] + rng.gen_range(-window..window), 0.0, 1.0);
    Some(Proposed { state: next, log_hastings: 0.0 })
}

/// Multiplies one positive scalar by m = exp(lambda (u - 1/2)); the Hastings
/// correction is ln m. The root-age move is undefined when the new age would
/// not clear the root's children.
pub fn scale_parameter(
    state: &State,
    target: ScaleTarget,
    lambda: f64,
    rng: &mut impl Rng,
) -> Option<Proposed> {
    if !(lambda > 0.0) {
        return None;
    }
    let u: f64 = rng.gen();
    let m = (lambda * (u - 0.5)).exp();
    let mut next = state.clone();
    match target {
        ScaleTarget::RootAge => {
            let root = state.tree.root();
            let (a, b) = state.tree.children_of(root).expect("root is internal");
            let floor = state.tree.age(a).max(state.tree.age(b));
            let age = state.tree.root_age() * m;
            if age <= floor {
                return None;
            }
            next.tree.set_age(root, age);
        }
        ScaleTarget::Alpha => next.alpha *= m,
        ScaleTarget::Sigma2 => next.sigma2 *= m,
    }
    Some(Proposed { state: next, log_hastings: m.ln() })
}

/// Draws one kernel according to the tuning weights — by default 30% narrow
/// exchange, 10% regraft, 30% node-age slide, 10% root-age rescale, 20%
/// scalar block (stationary frequency, gamma shape, rate variance, or one
/// branch's rate quantile) — and applies it. All-zero weights yield `None`.
pub fn propose(state: &State, tuning: &KernelTuning, rng: &mut impl Rng) -> Option<Proposed> {
    let w = &tuning.weights;
    let total = w.total();
    if total == 0 {
        return None;
    }
    let roll = rng.gen_range(0u32..total);
    if roll < w.narrow_exchange {
        narrow_exchange(state, rng)
    } else if roll < w.narrow_exchange + w.subtree_regraft {
        subtree_regraft(state, rng)
    } else if roll < w.narrow_exchange + w.subtree_regraft + w.node_age_slide {
        node_age_slide(state, tuning.age_window, rng)
    } else if roll < total - w.scalar_block {
        scale_parameter(state, ScaleTarget::RootAge, tuning.multiplier_lambda, rng)
    } else {
        match rng.gen_range(0u32..4) {
            0 => pi0_slide(state, tuning.pi0_window, rng),
            1 => scale_parameter(state, ScaleTarget::Alpha, tuning.multiplier_lambda, rng),
            2 => scale_parameter(state, ScaleTarget::Sigma2, tuning.multiplier_lambda, rng),
            _ => rate_quantile_slide(state, tuning.rate_quantile_window, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phyloinfer::random_tree;
    use crate::treedist::{parse_newick, topology_key};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    fn fresh_state(n: usize, rng: &mut ChaCha8Rng) -> State {
        let tree = random_tree(&labels(n), rng).unwrap();
        State {
            rate_quantiles: vec![0.5; tree.n_nodes()],
            tree,
            pi0: 0.5,
            alpha: 1.0,
            sigma2: 0.5,
        }
    }

    fn key_of(state: &State) -> String {
        topology_key(&parse_newick(&state.tree.to_newick()).unwrap())
    }

    #[test]
    fn reflect_stays_inside_and_is_symmetric() {
        assert_eq!(reflect(0.4, 0.0, 1.0), 0.4);
        assert!((reflect(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
        assert!((reflect(1.2, 0.0, 1.0) - 0.8).abs() < 1e-12);
        // Excursions beyond a full period wrap around.
        assert!((reflect(2.5, 0.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((reflect(3.4, 1.0, 2.0) - 1.4).abs() < 1e-12);
        // Degenerate interval collapses instead of looping or returning NaN.
        assert_eq!(reflect(0.7, 2.0, 2.0), 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x = rng.gen_range(-20.0..20.0);
            let r = reflect(x, -1.5, 2.5);
            assert!((-1.5..=2.5).contains(&r), "reflect({x}) = {r}");
        }
    }

    #[test]
    fn narrow_exchange_keeps_ages_and_changes_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = fresh_state(6, &mut rng);
        let before_ages: Vec<f64> = (0..state.tree.n_nodes()).map(|v| state.tree.age(v)).collect();
        let before_key = key_of(&state);
        let mut changed = 0;
        let mut proposed = 0;
        for _ in 0..500 {
            if let Some(p) = narrow_exchange(&state, &mut rng) {
                proposed += 1;
                p.state.tree.validate().unwrap();
                assert_eq!(p.log_hastings, 0.0);
                assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
                assert_eq!(p.state.tree.labels(), state.tree.labels());
                let after: Vec<f64> =
                    (0..p.state.tree.n_nodes()).map(|v| p.state.tree.age(v)).collect();
                assert_eq!(after, before_ages, "ages must be untouched");
                if key_of(&p.state) != before_key {
                    changed += 1;
                }
            }
        }
        assert!(proposed > 100, "most draws should be valid, got {proposed}");
        assert_eq!(changed, proposed, "a valid narrow exchange always reshapes the tree");
    }

    #[test]
    fn narrow_exchange_needs_an_older_node_than_the_sibling() {
        // Three leaves: the single non-root internal node u holds two
        // leaves, its sibling is a leaf at age 0, so age(u) > age(s) always
        // holds and every draw is valid.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let state = fresh_state(3, &mut rng);
        for _ in 0..50 {
            let p = narrow_exchange(&state, &mut rng).unwrap();
            p.state.tree.validate().unwrap();
        }
    }

    #[test]
    fn subtree_regraft_preserves_ages_and_reaches_new_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let state = fresh_state(7, &mut rng);
        let before_ages: Vec<f64> = (0..state.tree.n_nodes()).map(|v| state.tree.age(v)).collect();
        let mut keys = BTreeSet::new();
        for _ in 0..800 {
            let p = subtree_regraft(&state, &mut rng).expect("regraft always has a target");
            p.state.tree.validate().unwrap();
            assert_eq!(p.log_hastings, 0.0);
            assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
            let after: Vec<f64> =
                (0..p.state.tree.n_nodes()).map(|v| p.state.tree.age(v)).collect();
            assert_eq!(after, before_ages);
            keys.insert(key_of(&p.state));
        }
        assert!(keys.len() > 1, "regraft should reach several topologies");
    }

    #[test]
    fn regraft_needs_a_grandparent() {
        // Two leaves: every non-root node's parent is the root, so no
        // candidate exists.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = fresh_state(2, &mut rng);
        assert!(subtree_regraft(&state, &mut rng).is_none());
    }

    #[test]
    fn node_age_slide_respects_parent_and_children() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let state = fresh_state(6, &mut rng);
        for _ in 0..500 {
            let p = node_age_slide(&state, 0.5, &mut rng).unwrap();
            p.state.tree.validate().unwrap();
            assert_eq!(p.log_hastings, 0.0);
            assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
            // Exactly one age may differ, and the root age never moves.
            let moved: Vec<usize> = (0..state.tree.n_nodes())
                .filter(|&v| p.state.tree.age(v) != state.tree.age(v))
                .collect();
            assert!(moved.len() <= 1);
            assert_eq!(p.state.tree.root_age(), state.tree.root_age());
        }
        assert!(node_age_slide(&state, 0.0, &mut rng).is_none());
    }

    #[test]
    fn pi0_slide_stays_in_the_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut state = fresh_state(4, &mut rng);
        state.pi0 = 0.05;
        for _ in 0..500 {
            let p = pi0_slide(&state, 0.2, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&p.state.pi0));
            assert_eq!(p.state.tree, state.tree);
        }
    }

    #[test]
    fn rate_quantile_slide_moves_one_branch_inside_the_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut state = fresh_state(5, &mut rng);
        let root = state.tree.root();
        state.rate_quantiles[0] = 0.02; // near the boundary: reflection must hold
        let mut touched = BTreeSet::new();
        for _ in 0..600 {
            let p = rate_quantile_slide(&state, 0.2, &mut rng).unwrap();
            assert_eq!(p.log_hastings, 0.0);
            assert_eq!(p.state.tree, state.tree);
            let moved: Vec<usize> = (0..state.tree.n_nodes())
                .filter(|&v| p.state.rate_quantiles[v] != state.rate_quantiles[v])
                .collect();
            assert!(moved.len() <= 1);
            if let Some(&v) = moved.first() {
                assert_ne!(v, root, "the root has no branch rate");
                assert!((0.0..=1.0).contains(&p.state.rate_quantiles[v]));
                touched.insert(v);
            }
        }
        // Every non-root branch should be hit eventually.
        assert_eq!(touched.len(), state.tree.n_nodes() - 1, "touched {touched:?}");
        assert!(rate_quantile_slide(&state, 0.0, &mut rng).is_none());
    }

    #[test]
    fn multipliers_scale_one_thing_and_report_ln_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let state = fresh_state(5, &mut rng);
        for _ in 0..200 {
            if let Some(p) = scale_parameter(&state, ScaleTarget::Alpha, 0.8, &mut rng) {
                let m = p.state.alpha / state.alpha;
                assert!((p.log_hastings - m.ln()).abs() < 1e-12);
                assert!(m > 0.0 && (m.ln()).abs() <= 0.4 + 1e-12);
                assert_eq!(p.state.sigma2, state.sigma2);
                assert_eq!(p.state.tree, state.tree);
            }
            if let Some(p) = scale_parameter(&state, ScaleTarget::Sigma2, 0.8, &mut rng) {
                let m = p.state.sigma2 / state.sigma2;
                assert!((p.log_hastings - m.ln()).abs() < 1e-12);
                assert_eq!(p.state.alpha, state.alpha);
                assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
                assert_eq!(p.state.tree, state.tree);
            }
            if let Some(p) = scale_parameter(&state, ScaleTarget::RootAge, 0.8, &mut rng) {
                p.state.tree.validate().unwrap();
                assert!(p.state.tree.root_age() > 0.0);
                assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
            }
        }
    }

    #[test]
    fn multiplier_kernel_preserves_an_exponential_target() {
        // A multiplier with Hastings ln m must leave Exp(1) invariant; a
        // missing correction biases the mean well away from one. This pins
        // the ln m convention used by scale_parameter.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let lambda = 1.2f64;
        let mut x = 1.0f64;
        let mut sum = 0.0;
        let steps = 400_000;
        for _ in 0..steps {
            let u: f64 = rng.gen();
            let m = (lambda * (u - 0.5)).exp();
            let y = x * m;
            let ln_acc = -y + x + m.ln();
            if ln_acc >= 0.0 || rng.gen::<f64>().ln() < ln_acc {
                x = y;
            }
            sum += x;
        }
        let mean = sum / steps as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn geometry_kernels_reduce_to_the_age_density() {
        // With flat quantile priors, the prior difference of any geometry
        // move is exactly the node-age density difference (plus the root-age
        // terms for the root rescale), and the rate quantiles never move.
        // This pins each kernel's Hastings convention per proposal.
        use crate::phyloinfer::prior::log_node_age_density;
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let mut checked = [0u32; 4];
        for trial in 0..200 {
            let mut state = fresh_state(6, &mut rng);
            state.sigma2 = rng.gen_range(0.05..2.5);
            for v in 0..state.tree.n_nodes() {
                if state.tree.parent_of(v).is_some() {
                    state.rate_quantiles[v] = rng.gen_range(0.01..0.99);
                }
            }
            let before = state.log_prior();
            let age_before = log_node_age_density(&state.tree);
            let kernel = trial % 4;
            let p = match kernel {
                0 => narrow_exchange(&state, &mut rng),
                1 => subtree_regraft(&state, &mut rng),
                2 => node_age_slide(&state, 0.5, &mut rng),
                _ => scale_parameter(&state, ScaleTarget::RootAge, 2.0, &mut rng),
            };
            let Some(p) = p else { continue };
            assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
            let got = p.state.log_prior() - before;
            let mut want = log_node_age_density(&p.state.tree) - age_before;
            if kernel == 3 {
                let m = p.state.tree.root_age() / state.tree.root_age();
                assert!((p.log_hastings - m.ln()).abs() < 1e-12);
                want -= p.state.tree.root_age() - state.tree.root_age();
            } else {
                assert_eq!(p.log_hastings, 0.0);
            }
            assert!((got - want).abs() < 1e-8, "kernel {kernel}: got {got}, want {want}");
            checked[kernel] += 1;
        }
        assert!(checked.iter().all(|&c| c > 20), "coverage {checked:?}");
    }

    #[test]
    fn topology_kernels_keep_shapes_uniform_given_fixed_ages() {
        // With the node ages held fixed, the number of ways to assign the
        // age ranks to a labelled shape times the per-assignment density
        // (the subtree-count product) is the same for every shape — the
        // hook-length identity. So a Metropolis chain that only runs the
        // two topology kernels against the joint density at fixed scalars
        // must visit all labelled shapes uniformly. This isolates any
        // asymmetry in narrow_exchange or subtree_regraft exactly.
        use std::collections::BTreeMap;

        for (n, n_shapes, iterations, thin) in
            [(4usize, 15u64, 150_000u64, 15u64), (5, 105, 400_000, 25)]
        {
            let mut rng = ChaCha8Rng::seed_from_u64(1234);
            let mut state = fresh_state(n, &mut rng);
            let mut density = state.log_prior();
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for i in 1..=iterations {
                let proposal = if rng.gen_bool(0.5) {
                    narrow_exchange(&state, &mut rng)
                } else {
                    subtree_regraft(&state, &mut rng)
                };
                if let Some(p) = proposal {
                    let cand = p.state.log_prior();
                    let ln_acc = cand - density + p.log_hastings;
                    if ln_acc >= 0.0 || rng.gen::<f64>().ln() < ln_acc {
                        state = p.state;
                        density = cand;
                    }
                }
                if i % thin == 0 {
                    *counts.entry(key_of(&state)).or_insert(0) += 1;
                }
            }
            assert_eq!(counts.len() as u64, n_shapes, "n={n}: {counts:?}");
            let total: u64 = counts.values().sum();
            let expected = total as f64 / n_shapes as f64;
            let chi2: f64 =
                counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            let dist = statrs::distribution::ChiSquared::new((n_shapes - 1) as f64).unwrap();
            let p_value =
                1.0 - statrs::distribution::ContinuousCDF::cdf(&dist, chi2);
            assert!(
                p_value > 0.001,
                "n={n}: chi2 {chi2:.1}, p {p_value:.6}, counts {counts:?}"
            );
        }
    }

    #[test]
    fn propose_is_deterministic_for_a_seed() {
        let mut seed_rng = ChaCha8Rng::seed_from_u64(71);
        let state = fresh_state(6, &mut seed_rng);
        let tuning = KernelTuning::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(123);
        let mut r2 = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..300 {
            let a = propose(&state, &tuning, &mut r1);
            let b = propose(&state, &tuning, &mut r2);
            match (a, b) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    assert_eq!(x.state, y.state);
                    assert_eq!(x.log_hastings, y.log_hastings);
                }
                _ => panic!("mismatched proposals"),
            }
        }
    }

    #[test]
    fn propose_exercises_every_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let state = fresh_state(6, &mut rng);
        let tuning = KernelTuning::default();
        let mut saw_topology_change = false;
        let mut saw_age_change = false;
        let mut saw_pi0 = false;
        let mut saw_alpha = false;
        let mut saw_sigma2 = false;
        let mut saw_quantile = false;
        let mut saw_root_age = false;
        for _ in 0..2000 {
            let Some(p) = propose(&state, &tuning, &mut rng) else { continue };
            p.state.tree.validate().unwrap();
            if key_of(&p.state) != key_of(&state) {
                saw_topology_change = true;
            }
            if p.state.tree.root_age() != state.tree.root_age() {
                saw_root_age = true;
            } else if (0..state.tree.n_nodes())
                .any(|v| p.state.tree.age(v) != state.tree.age(v))
            {
                saw_age_change = true;
            }
            saw_pi0 |= p.state.pi0 != state.pi0;
            saw_alpha |= p.state.alpha != state.alpha;
            saw_sigma2 |= p.state.sigma2 != state.sigma2;
            saw_quantile |= p.state.rate_quantiles != state.rate_quantiles;
        }
        assert!(
            saw_topology_change
                && saw_age_change
                && saw_pi0
                && saw_alpha
                && saw_sigma2
                && saw_quantile
                && saw_root_age
        );
    }

    #[test]
    fn kernel_weights_restrict_which_moves_fire() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let state = fresh_state(6, &mut rng);
        let ages_only = KernelTuning {
            weights: KernelWeights {
                narrow_exchange: 0,
                subtree_regraft: 0,
                node_age_slide: 3,
                root_age_scale: 0,
                scalar_block: 0,
            },
            ..KernelTuning::default()
        };
        for _ in 0..500 {
            let Some(p) = propose(&state, &ages_only, &mut rng) else { continue };
            assert_eq!(key_of(&p.state), key_of(&state));
            assert_eq!(p.state.tree.root_age(), state.tree.root_age());
            assert_eq!(p.state.pi0, state.pi0);
            assert_eq!(p.state.rate_quantiles, state.rate_quantiles);
            assert!((0..state.tree.n_nodes()).any(|v| p.state.tree.age(v) != state.tree.age(v)));
        }

        let none = KernelTuning {
            weights: KernelWeights {
                narrow_exchange: 0,
                subtree_regraft: 0,
                node_age_slide: 0,
                root_age_scale: 0,
                scalar_block: 0,
            },
            ..KernelTuning::default()
        };
        assert!(propose(&state, &none, &mut rng).is_none());
    }
}

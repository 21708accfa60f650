//! Metropolis-Hastings sampling, dual-run convergence checks, and forward
//! simulation.
//!
//! A [`Sampler`] walks one chain over [`State`]s; [`run_chain`] drives it
//! for a fixed number of generations and records thinned samples;
//! [`dual_run`] runs two independently seeded chains in parallel and
//! compares their post burn-in clade frequencies through the average
//! standard deviation of split frequencies (ASDSF).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charmatrix::{Cell, CharacterMatrix};
use crate::cogcluster::ClusterLabel;
use crate::error::{Error, Result};
use crate::phyloinfer::likelihood::LikelihoodEngine;
use crate::phyloinfer::model::{
    discretize_gamma, mean_one_gamma_quantile, SubstModel2, N_RATE_CATEGORIES,
};
use crate::phyloinfer::prior::log_prior;
use crate::phyloinfer::proposals::{propose, KernelTuning, Proposed};
use crate::phyloinfer::{random_tree, PhyloTree};
use crate::treedist::{nontrivial_clades, parse_newick};

/// Clades below this frequency in both runs are ignored by the ASDSF.
pub const ASDSF_MIN_CLADE_FREQUENCY: f64 = 0.1;
/// Dual runs with an ASDSF below this are declared converged.
pub const ASDSF_CONVERGENCE_THRESHOLD: f64 = 0.01;

#[cfg(debug_assertions)]
const DRIFT_CHECK_INTERVAL: u64 = 10_000;

/// Everything the posterior depends on: tree with ages, per-branch clock
/// rate quantiles, stationary frequency, gamma shape, and the rate-variance
/// scale.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub tree: PhyloTree,
    /// Quantile in (0, 1) of the clock rate of the branch above each node,
    /// under that branch's mean-one gamma; the root entry is unused. Storing
    /// quantiles instead of rates keeps the representation stable when a
    /// short branch pushes the gamma's mass below the smallest float.
    pub rate_quantiles: Vec<f64>,
    pub pi0: f64,
    pub alpha: f64,
    pub sigma2: f64,
}

impl State {
    pub fn log_prior(&self) -> f64 {
        log_prior(&self.tree, &self.rate_quantiles, self.pi0, self.alpha, self.sigma2)
    }

    /// Clock rates implied by the stored quantiles: entry `v` inverts the
    /// gamma CDF with shape `branch_time(v) / sigma2` at the branch's
    /// quantile. The root entry is fixed at 1.0 and never used. Requires a
    /// state the prior accepts (positive durations, quantiles in (0, 1)).
    pub fn branch_rates(&self) -> Result<Vec<f64>> {
        let mut rates = vec![1.0; self.tree.n_nodes()];
        for v in 0..self.tree.n_nodes() {
            if self.tree.parent_of(v).is_none() {
                continue;
            }
            let shape = self.tree.branch_time(v) / self.sigma2;
            let u = self.rate_quantiles[v];
            if !(shape > 0.0 && shape.is_finite()) || !(u > 0.0 && u < 1.0) {
                return Err(Error::Argument(format!(
                    "branch {v} has no well-defined rate: shape {shape}, quantile {u}"
                )));
            }
            rates[v] = mean_one_gamma_quantile(shape, u);
        }
        Ok(rates)
    }
}

/// Chain-length, thinning, seeding, and kernel-width settings.
#[derive(Debug, Clone)]
pub struct McmcOptions {
    pub generations: u64,
    pub sample_every: u64,
    pub seed: u64,
    /// Sample from the prior alone (the likelihood is treated as constant).
    pub prior_only: bool,
    pub tuning: KernelTuning,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            generations: 100_000,
            sample_every: 100,
            seed: 0,
            prior_only: false,
            tuning: KernelTuning::default(),
        }
    }
}

/// One thinned draw from a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub generation: u64,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub pi0: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub root_age: f64,
    pub newick: String,
}

/// A single Metropolis-Hastings chain.
pub struct Sampler<'a> {
    engine: Option<&'a LikelihoodEngine>,
    prior_only: bool,
    tuning: KernelTuning,
    rng: ChaCha8Rng,
    state: State,
    log_likelihood: f64,
    log_prior: f64,
    generation: u64,
    proposals: u64,
    acceptances: u64,
}

impl<'a> Sampler<'a> {
    /// Builds the chain's initial state from the seed: a random topology
    /// with modest ages, median clock rates, and neutral scalars.
    pub fn new(
        engine: Option<&'a LikelihoodEngine>,
        labels: &[String],
        opts: &McmcOptions,
    ) -> Result<Sampler<'a>> {
        if !opts.prior_only && engine.is_none() {
            return Err(Error::Argument(
                "posterior sampling needs a likelihood engine; pass one or set prior_only".into(),
            ));
        }
        if let Some(e) = engine {
            if e.languages() != labels {
                return Err(Error::Mismatch(format!(
                    "chain taxa {:?} do not match the data's languages {:?}",
                    labels,
                    e.languages()
                )));
            }
        }
        if opts.sample_every == 0 {
            return Err(Error::Argument("sample_every must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let tree = random_tree(labels, &mut rng)?;
        let state = State {
            rate_quantiles: vec![0.5; tree.n_nodes()],
            tree,
            pi0: 0.5,
            alpha: 1.0,
            sigma2: 0.5,
        };
        let (log_likelihood, log_prior) = evaluate(engine, opts.prior_only, &state)?;
        if !log_prior.is_finite() || !log_likelihood.is_finite() {
            return Err(Error::Argument(
                "the initial state has zero posterior density".into(),
            ));
        }
        Ok(Sampler {
            engine,
            prior_only: opts.prior_only,
            tuning: opts.tuning,
            rng,
            state,
            log_likelihood,
            log_prior,
            generation: 0,
            proposals: 0,
            acceptances: 0,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn log_prior_value(&self) -> f64 {
        self.log_prior
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.acceptances as f64 / self.proposals as f64
        }
    }

    /// Advances one generation; returns whether the proposal was accepted.
    pub fn step(&mut self) -> Result<bool> {
        self.generation += 1;
        self.proposals += 1;
        let accepted = self.try_move()?;
        if accepted {
            self.acceptances += 1;
        }
        #[cfg(debug_assertions)]
        if self.generation % DRIFT_CHECK_INTERVAL == 0 {
            self.check_drift()?;
        }
        Ok(accepted)
    }

    fn try_move(&mut self) -> Result<bool> {
        let Some(Proposed { state, log_hastings }) =
            propose(&self.state, &self.tuning, &mut self.rng)
        else {
            return Ok(false);
        };
        let log_prior = state.log_prior();
        if log_prior == f64::NEG_INFINITY {
            return Ok(false);
        }
        let log_likelihood = if self.prior_only {
            0.0
        } else {
            likelihood_of(self.engine.expect("checked in new"), &state)?
        };
        let ln_ratio =
            log_likelihood + log_prior - self.log_likelihood - self.log_prior + log_hastings;
        let accept = ln_ratio >= 0.0 || self.rng.gen::<f64>().ln() < ln_ratio;
        if accept {
            self.state = state;
            self.log_likelihood = log_likelihood;
            self.log_prior = log_prior;
        }
        Ok(accept)
    }

    /// Records the current state as a thinned draw.
    pub fn snapshot(&self) -> ChainSample {
        ChainSample {
            generation: self.generation,
            log_likelihood: self.log_likelihood,
            log_prior: self.log_prior,
            pi0: self.state.pi0,
            alpha: self.state.alpha,
            sigma2: self.state.sigma2,
            root_age: self.state.tree.root_age(),
            newick: self.state.tree.to_newick(),
        }
    }

    /// Debug-build guard: the cached posterior terms must match a fresh
    /// evaluation of the current state bit-for-bit up to roundoff.
    #[cfg(debug_assertions)]
    fn check_drift(&self) -> Result<()> {
        let (ll, lp) = evaluate(self.engine, self.prior_only, &self.state)?;
        debug_assert!(
            (ll - self.log_likelihood).abs() <= 1e-8 * (1.0 + self.log_likelihood.abs()),
            "cached log-likelihood drifted: {} vs {ll}",
            self.log_likelihood
        );
        debug_assert!(
            (lp - self.log_prior).abs() <= 1e-8 * (1.0 + self.log_prior.abs()),
            "cached log-prior drifted: {} vs {lp}",
            self.log_prior
        );
        Ok(())
    }
}

fn likelihood_of(engine: &LikelihoodEngine, state: &State) -> Result<f64> {
    let model = SubstModel2::new(state.pi0)?;
    let gamma = discretize_gamma(state.alpha, N_RATE_CATEGORIES)?;
    let rates = state.branch_rates()?;
    engine.log_likelihood(&state.tree, &rates, &model, &gamma)
}

fn evaluate(
    engine: Option<&LikelihoodEngine>,
    prior_only: bool,
    state: &State,
) -> Result<(f64, f64)> {
    let lp = state.log_prior();
    if lp == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, lp));
    }
    let ll = if prior_only {
        0.0
    } else {
        likelihood_of(engine.expect("posterior sampling always has an engine"), state)?
    };
    Ok((ll, lp))
}

/// Runs one chain for `opts.generations` generations, recording a sample
/// every `opts.sample_every` generations.
pub fn run_chain(
    engine: Option<&LikelihoodEngine>,
    labels: &[String],
    opts: &McmcOptions,
) -> Result<Vec<ChainSample>> {
    let mut sampler = Sampler::new(engine, labels, opts)?;
    let mut samples = Vec::with_capacity((opts.generations / opts.sample_every) as usize);
    for g in 1..=opts.generations {
        sampler.step()?;
        if g % opts.sample_every == 0 {
            samples.push(sampler.snapshot());
        }
    }
    Ok(samples)
}

/// Post burn-in suffix of a chain: the last ⌈n/2⌉ samples.
pub fn burn_in_split(samples: &[ChainSample]) -> &[ChainSample] {
    &samples[samples.len() / 2..]
}

/// Frequency of every nontrivial clade across the given samples.
pub fn clade_frequencies(samples: &[ChainSample]) -> Result<BTreeMap<Vec<String>, f64>> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples to count clades over".into()));
    }
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for s in samples {
        let tree = parse_newick(&s.newick)?;
        for clade in nontrivial_clades(&tree) {
            *counts.entry(clade).or_insert(0) += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Average standard deviation of split frequencies between two runs,
/// restricted to clades reaching `min_frequency` in at least one run. Each
/// clade contributes the sample standard deviation of its two frequencies,
/// |f1 - f2| / sqrt(2). No qualifying clades yields zero.
pub fn asdsf(
    run1: &BTreeMap<Vec<String>, f64>,
    run2: &BTreeMap<Vec<String>, f64>,
    min_frequency: f64,
) -> f64 {
    let keys: BTreeSet<&Vec<String>> = run1.keys().chain(run2.keys()).collect();
    let mut sum = 0.0;
    let mut count = 0u64;
    for k in keys {
        let a = run1.get(k).copied().unwrap_or(0.0);
        let b = run2.get(k).copied().unwrap_or(0.0);
        if a.max(b) >= min_frequency {
            sum += (a - b).abs() / std::f64::consts::SQRT_2;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Two chains plus their convergence diagnostic.
#[derive(Debug, Clone)]
pub struct DualRunResult {
    pub runs: [Vec<ChainSample>; 2],
    pub asdsf: f64,
    pub converged: bool,
}

/// Runs two independent chains in parallel — the second seed is derived
/// from the first — and compares their post burn-in clade frequencies.
pub fn dual_run(
    engine: Option<&LikelihoodEngine>,
    labels: &[String],
    opts: &McmcOptions,
) -> Result<DualRunResult> {
    let mut opts2 = opts.clone();
    opts2.seed = opts.seed ^ 0x9e37_79b9_7f4a_7c15;
    let (res1, res2) = std::thread::scope(|scope| {
        let h1 = scope.spawn(|| run_chain(engine, labels, opts));
        let h2 = scope.spawn(|| run_chain(engine, labels, &opts2));
        (h1.join(), h2.join())
    });
    let run1 = res1.expect("first chain panicked")?;
    let run2 = res2.expect("second chain panicked")?;
    let f1 = clade_frequencies(burn_in_split(&run1))?;
    let f2 = clade_frequencies(burn_in_split(&run2))?;
    let value = asdsf(&f1, &f2, ASDSF_MIN_CLADE_FREQUENCY);
    Ok(DualRunResult {
        runs: [run1, run2],
        asdsf: value,
        converged: value < ASDSF_CONVERGENCE_THRESHOLD,
    })
}

/// Simulates a binary character matrix down a tree: per column a rate
/// category is drawn uniformly, the root state from the stationary
/// frequencies, and children by the transition probabilities over their
/// branch. Columns with no presences anywhere are redrawn, mirroring the
/// fact that unobservable characters never enter real data.
pub fn simulate_characters(
    tree: &PhyloTree,
    branch_rates: &[f64],
    model: &SubstModel2,
    alpha: f64,
    n_sites: usize,
    seed: u64,
) -> Result<CharacterMatrix> {
    tree.validate()?;
    if branch_rates.len() != tree.n_nodes() {
        return Err(Error::Argument(format!(
            "need one rate per node: got {}, expected {}",
            branch_rates.len(),
            tree.n_nodes()
        )));
    }
    if n_sites == 0 {
        return Err(Error::Argument("need at least one character to simulate".into()));
    }
    let gamma = discretize_gamma(alpha, N_RATE_CATEGORIES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tree.n_leaves();
    let preorder: Vec<usize> = {
        let mut order = tree.postorder();
        order.reverse();
        order
    };

    const MAX_REDRAWS: u32 = 100_000;
    let mut cells = vec![Cell::Absent; n * n_sites];
    let mut states = vec![0u8; tree.n_nodes()];
    for site in 0..n_sites {
        let mut redraws = 0;
        loop {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::Argument(
                    "simulation kept producing all-absent columns; the tree is too deep or the \
                     presence frequency too small for characters to survive"
                        .into(),
                ));
            }
            let category = gamma[rng.gen_range(0..gamma.len())];
            for &v in &preorder {
                states[v] = match tree.parent_of(v) {
                    None => {
                        if rng.gen::<f64>() < model.pi0() {
                            0
                        } else {
                            1
                        }
                    }
                    Some(p) => {
                        let t = tree.branch_time(v) * branch_rates[v] * category;
                        let row = model.transition(t)[states[p] as usize];
                        if rng.gen::<f64>() < row[0] {
                            0
                        } else {
                            1
                        }
                    }
                };
            }
            if (0..n).any(|leaf| states[leaf] == 1) {
                break;
            }
        }
        for leaf in 0..n {
            if states[leaf] == 1 {
                cells[leaf * n_sites + site] = Cell::Present;
            }
        }
    }
    let columns: Vec<ClusterLabel> = (0..n_sites)
        .map(|i| ClusterLabel { concept: format!("c{i:05}"), index: 0 })
        .collect();
    CharacterMatrix::from_parts(tree.labels().to_vec(), columns, cells)
}

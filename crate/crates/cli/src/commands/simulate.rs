//! `simulate`: draw a clocked tree and relaxed-clock rates from the model
//! prior, simulate a presence/absence character matrix down that tree, and
//! write both — a self-contained source of validation inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cogphylo::phyloinfer::{random_tree, simulate_characters, State, SubstModel2};

use crate::error::{CliError, Result, EXIT_SUCCESS};
use crate::output::write_atomic;
use crate::stages;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<u8> {
    let mut labels: Vec<String> = ctx
        .cfg
        .require_str("sim_languages")?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect();
    labels.sort();
    if labels.len() < 2 {
        return Err(CliError::Usage("sim_languages needs at least two names".into()));
    }
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("sim_languages contains a duplicate name".into()));
    }
    let pi0 = ctx.cfg.f64("sim_pi0")?.expect("key has a default");
    let alpha = ctx.cfg.f64("sim_alpha")?.expect("key has a default");
    let sigma2 = ctx.cfg.f64("sim_sigma2")?.expect("key has a default");
    let sites = ctx.cfg.usize("sim_sites")?.expect("key has a default");
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(CliError::Usage(format!("sim_pi0 must lie in (0, 1), got {pi0}")));
    }
    if !(alpha > 0.0) || !(sigma2 > 0.0) {
        return Err(CliError::Usage("sim_alpha and sim_sigma2 must be positive".into()));
    }
    if sites == 0 {
        return Err(CliError::Usage("sim_sites must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let tree = random_tree(&labels, &mut rng)?;
    let rate_quantiles: Vec<f64> =
        (0..tree.n_nodes()).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect();
    let state = State { tree: tree.clone(), rate_quantiles, pi0, alpha, sigma2 };
    let rates = state.branch_rates()?;
    let model = SubstModel2::new(pi0)?;
    let matrix = simulate_characters(&tree, &rates, &model, alpha, sites, rng.gen())?;

    write_atomic(&ctx.out.join("sim_tree.nwk"), &format!("{}\n", tree.to_newick()))?;
    write_atomic(&ctx.out.join("sim_matrix.tsv"), &stages::matrix_text(&matrix)?)?;
    Ok(EXIT_SUCCESS)
}

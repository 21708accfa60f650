//! `mcmc`: sample trees from the posterior with two independent chains and
//! report convergence. A finished-but-unconverged run exits with status 3;
//! its outputs are still written.

use crate::error::{Result, EXIT_SUCCESS, EXIT_UNCONVERGED};
use crate::stages;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<u8> {
    let matrix = stages::read_matrix(&ctx.cfg.input_path("matrix")?)?;
    let artifacts = stages::mcmc_stage(&matrix, ctx, &ctx.out, "mcmc")?;
    Ok(if artifacts.converged { EXIT_SUCCESS } else { EXIT_UNCONVERGED })
}

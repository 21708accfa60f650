//! `matrix`: convert a cognate partition into the binary character matrix
//! used by the sampler.

use cogphylo::charmatrix::to_matrix;

use crate::error::{Result, EXIT_SUCCESS};
use crate::stages;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<u8> {
    let wl = stages::read_wordlist(&ctx.cfg.input_path("wordlist")?)?;
    let partition = stages::read_partition(&ctx.cfg.input_path("partition")?)?;
    let matrix = to_matrix(&wl, &partition)?;
    stages::write_matrix_files(&matrix, &ctx.cfg, &ctx.out)?;
    Ok(EXIT_SUCCESS)
}

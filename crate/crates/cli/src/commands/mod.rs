//! One module per subcommand; each exposes `run(&Ctx) -> Result<u8>` where
//! the `u8` is the process exit status for a run that produced its outputs.

pub mod detect;
pub mod gqd;
pub mod matrix;
pub mod mcmc;
pub mod pipeline;
pub mod simulate;

//! Cognate detection and Bayesian phylogenetic inference for multilingual wordlists.
//!
//! The crate covers the full path from raw lexical data to dated-tree quality
//! scores:
//!
//! * [`wordlist`] — tab-separated wordlist ingestion, coverage statistics and
//!   language subselection.
//! * [`soundmodel`] — sound-class models that map phonetic token strings onto
//!   coarse class strings, plus consonant-class keys.
//! * [`pairsim`] — word-pair distance measures (normalized edit distance,
//!   sound-class alignment, trained log-odds scorers, online PMI) and
//!   per-concept distance matrices.
//! * [`cogcluster`] — clustering of concept matrices into cognate sets
//!   (threshold UPGMA, label propagation, map-equation communities).
//! * [`bcubed`] — B-cubed precision/recall/F against expert cognate sets.
//! * [`charmatrix`] — binary presence/absence character matrices with missing
//!   data, plus TSV and relaxed-PHYLIP export.
//! * [`phyloinfer`] — Bayesian MCMC over rooted dated trees under a binary
//!   substitution model with gamma rate variation, a relaxed clock and
//!   ascertainment correction.
//! * [`treedist`] — Newick parsing, quartet distances (including the
//!   generalized quartet distance against polytomous reference trees),
//!   posterior summaries and majority-rule consensus.

pub mod align;
pub mod bcubed;
pub mod charmatrix;
pub mod cogcluster;
pub mod error;
pub mod pairsim;
pub mod phyloinfer;
pub mod soundmodel;
pub mod treedist;
pub mod wordlist;

pub use error::{Error, Result};

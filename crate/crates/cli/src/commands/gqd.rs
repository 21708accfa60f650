//! `gqd`: score tree sample files against a reference tree and write the
//! per-method mean ± sd report, optionally with a text histogram.

use std::path::PathBuf;

use crate::config::Config;
use crate::error::{CliError, Result, EXIT_SUCCESS};
use crate::output::{write_atomic, Report};
use crate::stages;
use crate::Ctx;

/// Parses the `trees` key: comma-separated entries, each `label=path` or a
/// bare path whose file stem becomes the label.
fn tree_sources(cfg: &Config) -> Result<Vec<(String, PathBuf)>> {
    let raw = cfg.require_str("trees")?;
    let mut sources = Vec::new();
    for entry in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (label, path) = match entry.split_once('=') {
            Some((label, path)) => (label.trim().to_owned(), PathBuf::from(path.trim())),
            None => {
                let path = PathBuf::from(entry);
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| {
                        CliError::Usage(format!("cannot derive a label from '{entry}'"))
                    })?;
                (stem, path)
            }
        };
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "tree sample file '{}' does not exist",
                path.display()
            )));
        }
        sources.push((label, path));
    }
    if sources.is_empty() {
        return Err(CliError::Usage(
            "the 'trees' key lists no tree sample files (use label=path, comma-separated)".into(),
        ));
    }
    Ok(sources)
}

pub fn run(ctx: &Ctx) -> Result<u8> {
    let reference = stages::read_newick_file(&ctx.cfg.input_path("gold_tree")?)?;
    let sources = tree_sources(&ctx.cfg)?;
    let sample_sd = stages::sample_sd_from(&ctx.cfg)?;
    let histogram = ctx.cfg.bool("gqd_histogram")?.expect("key has a default");
    let family = ctx.cfg.require_str("family")?.to_owned();

    let mut report = Report::new(
        "gqd",
        &ctx.cfg,
        ctx.seed,
        &["trees: one sample file per row, as listed in the 'trees' key"],
        stages::GQD_COLUMNS.to_vec(),
    );
    let mut blocks = String::new();
    for (label, path) in &sources {
        let samples = stages::read_trees_file(path)?;
        let summary = stages::gqd_summary_stage(&samples, &reference, sample_sd)
            .map_err(|e| stages::tag_method(label, e))?;
        report.push_row(stages::gqd_row(label, &family, &summary));
        if histogram {
            let values = stages::per_sample_gqd(&samples, &reference)?;
            blocks.push_str(&stages::histogram_block(label, &values));
            blocks.push('\n');
        }
    }
    report.write(&ctx.out.join("gqd_report.tsv"))?;
    if histogram {
        write_atomic(&ctx.out.join("gqd_histogram.txt"), &blocks)?;
    }
    Ok(EXIT_SUCCESS)
}

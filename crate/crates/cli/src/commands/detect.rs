//! `detect`: run the configured cognate-detection methods and, when expert
//! ids are present, score each partition with B-cubed precision/recall.

use cogphylo::bcubed::bcubed;
use cogphylo::cogcluster::CognatePartition;

use crate::error::{CliError, Result, EXIT_SUCCESS};
use crate::output::{fmt_f64, write_atomic, Report};
use crate::stages;
use crate::Ctx;

pub fn run(ctx: &Ctx) -> Result<u8> {
    let wl = stages::read_wordlist(&ctx.cfg.input_path("wordlist")?)?;
    let methods = stages::methods_from(&ctx.cfg)?;
    let evaluate = ctx.cfg.bool("evaluate")?.expect("key has a default");
    if evaluate && !wl.has_gold() {
        return Err(CliError::Usage(
            "b-cubed evaluation requested (evaluate=true) but the wordlist has no complete \
             COGNATE_ID column; supply expert ids or pass --set evaluate=false"
                .into(),
        ));
    }
    let gold = if evaluate { Some(CognatePartition::from_gold(&wl)?) } else { None };
    let averaging = stages::averaging_from(&ctx.cfg)?;
    let family = ctx.cfg.require_str("family")?.to_owned();

    let mut report =
        Report::new("detect", &ctx.cfg, ctx.seed, &[], stages::BCUBED_COLUMNS.to_vec());
    for &method in &methods {
        let name = method.name();
        let partition = stages::detect_stage(&wl, method, &ctx.cfg, ctx.seed)
            .map_err(|e| stages::tag_method(name, e))?;
        let text = stages::partition_text(&partition)?;
        write_atomic(&ctx.out.join(name).join("partition.tsv"), &text)
            .map_err(|e| stages::tag_method(name, e))?;
        if let Some(gold) = &gold {
            let scores = bcubed(&partition, gold, averaging)
                .map_err(|e| stages::tag_method(name, e.into()))?;
            report.push_row(vec![
                name.to_owned(),
                family.clone(),
                fmt_f64(scores.precision),
                fmt_f64(scores.recall),
                fmt_f64(scores.fscore),
            ]);
        }
    }
    if gold.is_some() {
        report.write(&ctx.out.join("bcubed_report.tsv"))?;
    }
    Ok(EXIT_SUCCESS)
}

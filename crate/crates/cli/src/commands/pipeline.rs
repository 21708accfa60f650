//! `pipeline`: detect → evaluate → matrix → sample → tree distance, per
//! method, plus the expert-cognate baseline when the wordlist carries gold
//! ids. A failing stage skips that method's later stages but never stops
//! the other methods; `summary.tsv` records what ran.

use cogphylo::bcubed::bcubed;
use cogphylo::charmatrix::to_matrix;
use cogphylo::cogcluster::CognatePartition;
use cogphylo::treedist::Tree;
use cogphylo::wordlist::Wordlist;

use crate::error::{CliError, Result, EXIT_DATA, EXIT_SUCCESS, EXIT_UNCONVERGED};
use crate::output::{fmt_f64, write_atomic, Report};
use crate::stages;
use crate::Ctx;

const EXPERT_LABEL: &str = "expert";

/// Status of one stage for one method, as shown in `summary.tsv`.
#[derive(Clone, Copy, PartialEq)]
enum Status {
    Ok,
    Unconverged,
    Failed,
    Skipped,
    NotApplicable,
}

impl Status {
    fn text(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Unconverged => "unconverged",
            Status::Failed => "failed",
            Status::Skipped => "skipped",
            Status::NotApplicable => "-",
        }
    }
}

struct MethodOutcome {
    label: String,
    detect: Status,
    bcubed: Status,
    matrix: Status,
    mcmc: Status,
    gqd: Status,
}

impl MethodOutcome {
    fn failed(&self) -> bool {
        [self.detect, self.bcubed, self.matrix, self.mcmc, self.gqd]
            .contains(&Status::Failed)
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            self.detect.text().to_owned(),
            self.bcubed.text().to_owned(),
            self.matrix.text().to_owned(),
            self.mcmc.text().to_owned(),
            self.gqd.text().to_owned(),
        ]
    }
}

/// Everything the per-method loop reads or appends to.
struct PipelineState<'a> {
    ctx: &'a Ctx,
    wl: &'a Wordlist,
    reference: &'a Tree,
    gold: Option<&'a CognatePartition>,
    family: String,
    averaging: cogphylo::bcubed::Averaging,
    sample_sd: bool,
    histogram: bool,
    bcubed_report: Report,
    gqd_report: Report,
    histogram_blocks: String,
    outcomes: Vec<MethodOutcome>,
}

impl PipelineState<'_> {
    fn note_failure(&self, label: &str, stage: &str, e: &CliError) {
        eprintln!("pipeline: {label}: {stage} stage failed: {e}");
    }

    /// Shared tail of every method: matrix → mcmc → gqd under `dir`.
    fn run_tail(&mut self, label: &str, partition: &CognatePartition, outcome: &mut MethodOutcome) {
        let dir = self.ctx.out.join(label);
        let matrix = match to_matrix(self.wl, partition)
            .map_err(CliError::from)
            .and_then(|m| stages::write_matrix_files(&m, &self.ctx.cfg, &dir).map(|()| m))
        {
            Ok(m) => {
                outcome.matrix = Status::Ok;
                m
            }
            Err(e) => {
                self.note_failure(label, "matrix", &e);
                outcome.matrix = Status::Failed;
                return;
            }
        };

        let artifacts = match stages::mcmc_stage(&matrix, self.ctx, &dir, "pipeline") {
            Ok(a) => {
                outcome.mcmc = if a.converged { Status::Ok } else { Status::Unconverged };
                a
            }
            Err(e) => {
                self.note_failure(label, "mcmc", &e);
                outcome.mcmc = Status::Failed;
                return;
            }
        };

        match stages::gqd_summary_stage(&artifacts.pooled, self.reference, self.sample_sd) {
            Ok(summary) => {
                outcome.gqd = Status::Ok;
                self.gqd_report.push_row(stages::gqd_row(label, &self.family, &summary));
                if self.histogram {
                    match stages::per_sample_gqd(&artifacts.pooled, self.reference) {
                        Ok(values) => {
                            self.histogram_blocks.push_str(&stages::histogram_block(label, &values));
                            self.histogram_blocks.push('\n');
                        }
                        Err(e) => self.note_failure(label, "gqd histogram", &e),
                    }
                }
            }
            Err(e) => {
                self.note_failure(label, "gqd", &e);
                outcome.gqd = Status::Failed;
            }
        }
    }

    /// The expert baseline: gold partition straight into the shared tail.
    fn run_expert(&mut self) {
        let gold = self.gold.expect("caller checked gold ids").clone();
        let mut outcome = MethodOutcome {
            label: EXPERT_LABEL.to_owned(),
            detect: Status::NotApplicable,
            bcubed: Status::NotApplicable,
            matrix: Status::Skipped,
            mcmc: Status::Skipped,
            gqd: Status::Skipped,
        };
        self.run_tail(EXPERT_LABEL, &gold, &mut outcome);
        self.outcomes.push(outcome);
    }

    fn run_method(&mut self, method: cogphylo::cogcluster::DetectMethod) {
        let label = method.name().to_owned();
        let mut outcome = MethodOutcome {
            label: label.clone(),
            detect: Status::Skipped,
            bcubed: if self.gold.is_some() { Status::Skipped } else { Status::NotApplicable },
            matrix: Status::Skipped,
            mcmc: Status::Skipped,
            gqd: Status::Skipped,
        };

        let partition = match stages::detect_stage(self.wl, method, &self.ctx.cfg, self.ctx.seed)
            .and_then(|p| {
                let text = stages::partition_text(&p)?;
                write_atomic(&self.ctx.out.join(&label).join("partition.tsv"), &text)?;
                Ok(p)
            }) {
            Ok(p) => {
                outcome.detect = Status::Ok;
                p
            }
            Err(e) => {
                self.note_failure(&label, "detect", &e);
                outcome.detect = Status::Failed;
                self.outcomes.push(outcome);
                return;
            }
        };

        if let Some(gold) = self.gold {
            match bcubed(&partition, gold, self.averaging) {
                Ok(scores) => {
                    outcome.bcubed = Status::Ok;
                    self.bcubed_report.push_row(vec![
                        label.clone(),
                        self.family.clone(),
                        fmt_f64(scores.precision),
                        fmt_f64(scores.recall),
                        fmt_f64(scores.fscore),
                    ]);
                }
                Err(e) => {
                    self.note_failure(&label, "bcubed", &e.into());
                    outcome.bcubed = Status::Failed;
                    self.outcomes.push(outcome);
                    return;
                }
            }
        }

        self.run_tail(&label, &partition, &mut outcome);
        self.outcomes.push(outcome);
    }
}

pub fn run(ctx: &Ctx) -> Result<u8> {
    let wl = stages::read_wordlist(&ctx.cfg.input_path("wordlist")?)?;
    let reference = stages::read_newick_file(&ctx.cfg.input_path("gold_tree")?)?;
    let methods = stages::methods_from(&ctx.cfg)?;
    let gold = if wl.has_gold() { Some(CognatePartition::from_gold(&wl)?) } else { None };

    let mut state = PipelineState {
        ctx,
        wl: &wl,
        reference: &reference,
        gold: gold.as_ref(),
        family: ctx.cfg.require_str("family")?.to_owned(),
        averaging: stages::averaging_from(&ctx.cfg)?,
        sample_sd: stages::sample_sd_from(&ctx.cfg)?,
        histogram: ctx.cfg.bool("gqd_histogram")?.expect("key has a default"),
        bcubed_report: Report::new(
            "pipeline",
            &ctx.cfg,
            ctx.seed,
            &[],
            stages::BCUBED_COLUMNS.to_vec(),
        ),
        gqd_report: Report::new(
            "pipeline",
            &ctx.cfg,
            ctx.seed,
            &["trees: post burn-in samples pooled across both runs"],
            stages::GQD_COLUMNS.to_vec(),
        ),
        histogram_blocks: String::new(),
        outcomes: Vec::new(),
    };

    // The expert baseline leads the tree-distance report, then the methods
    // in their configured order.
    if state.gold.is_some() {
        state.run_expert();
    }
    for &method in &methods {
        state.run_method(method);
    }

    if state.gold.is_some() {
        state.bcubed_report.write(&ctx.out.join("bcubed_report.tsv"))?;
    }
    state.gqd_report.write(&ctx.out.join("gqd_report.tsv"))?;
    if state.histogram {
        write_atomic(&ctx.out.join("gqd_histogram.txt"), &state.histogram_blocks)?;
    }

    let mut summary = Report::new(
        "pipeline",
        &ctx.cfg,
        ctx.seed,
        &[],
        vec!["METHOD", "DETECT", "BCUBED", "MATRIX", "MCMC", "GQD"],
    );
    let any_failed = state.outcomes.iter().any(MethodOutcome::failed);
    let any_unconverged =
        state.outcomes.iter().any(|o| o.mcmc == Status::Unconverged);
    for outcome in &state.outcomes {
        summary.push_row(outcome.row());
    }
    summary.write(&ctx.out.join("summary.tsv"))?;

    Ok(if any_failed {
        EXIT_DATA
    } else if any_unconverged {
        EXIT_UNCONVERGED
    } else {
        EXIT_SUCCESS
    })
}

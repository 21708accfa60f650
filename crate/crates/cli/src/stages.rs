//! Pipeline stages shared by the subcommands.
//!
//! Each stage turns validated inputs into files under the output directory
//! plus an in-memory value the next stage can consume, so `pipeline` chains
//! them without re-reading its own outputs.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use cogphylo::bcubed::Averaging;
use cogphylo::charmatrix::CharacterMatrix;
use cogphylo::cogcluster::{detect_cognates, CognatePartition, DetectConfig, DetectMethod};
use cogphylo::pairsim::{
    lexstat_train, online_pmi_train, LexstatParams, PmiParams, ScoreTable,
};
use cogphylo::phyloinfer::{
    asdsf, burn_in_split, clade_frequencies, dual_run, ChainSample, KernelTuning, KernelWeights,
    LikelihoodEngine, McmcOptions, ASDSF_CONVERGENCE_THRESHOLD, ASDSF_MIN_CLADE_FREQUENCY,
};
use cogphylo::soundmodel::SoundClassModel;
use cogphylo::treedist::{
    gqd, majority_consensus, parse_newick, posterior_gqd_summary, topology_key, GqdSummary, Tree,
};
use cogphylo::wordlist::{load_wordlist, FieldLayout, Wordlist};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::output::{fmt_f64, write_atomic, Report};
use crate::Ctx;

pub const BCUBED_COLUMNS: [&str; 5] = ["METHOD", "FAMILY", "PRECISION", "RECALL", "FSCORE"];
pub const GQD_COLUMNS: [&str; 6] =
    ["METHOD", "FAMILY", "GQD_MEAN", "GQD_SD", "N_SAMPLES", "GQD"];
pub const SAMPLE_LOG_COLUMNS: [&str; 7] =
    ["GENERATION", "LNL", "LNPRIOR", "PI0", "ALPHA", "SIGMA2", "TREE_NEWICK"];

/// Prefixes an error message with the method it came from.
pub fn tag_method(method: &str, e: CliError) -> CliError {
    match e {
        CliError::Usage(m) => CliError::Usage(format!("method {method}: {m}")),
        CliError::Data(m) => CliError::Data(format!("method {method}: {m}")),
    }
}

pub fn read_wordlist(path: &Path) -> Result<Wordlist> {
    let file = File::open(path)?;
    Ok(load_wordlist(BufReader::new(file), &FieldLayout::default())?)
}

pub fn read_partition(path: &Path) -> Result<CognatePartition> {
    let file = File::open(path)?;
    Ok(CognatePartition::from_tsv(BufReader::new(file))?)
}

pub fn read_matrix(path: &Path) -> Result<CharacterMatrix> {
    let file = File::open(path)?;
    Ok(CharacterMatrix::from_tsv(BufReader::new(file))?)
}

/// Reads a single Newick tree, ignoring surrounding whitespace.
pub fn read_newick_file(path: &Path) -> Result<Tree> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    Ok(parse_newick(text.trim())?)
}

/// Reads a one-Newick-per-line sample file; blank and `#` lines are skipped.
pub fn read_trees_file(path: &Path) -> Result<Vec<Tree>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut trees = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tree = parse_newick(line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        trees.push(tree);
    }
    if trees.is_empty() {
        return Err(CliError::Data(format!(
            "'{}' contains no trees",
            path.display()
        )));
    }
    Ok(trees)
}

/// The configured method list, in order, without duplicates.
pub fn methods_from(cfg: &Config) -> Result<Vec<DetectMethod>> {
    let raw = cfg.require_str("methods")?;
    let mut methods = Vec::new();
    for name in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let method: DetectMethod = name
            .parse()
            .map_err(|e: cogphylo::error::Error| CliError::Usage(e.to_string()))?;
        if methods.contains(&method) {
            return Err(CliError::Usage(format!("method '{name}' listed twice")));
        }
        methods.push(method);
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no detection methods selected".into()));
    }
    Ok(methods)
}

pub fn averaging_from(cfg: &Config) -> Result<Averaging> {
    match cfg.require_str("bcubed_averaging")? {
        "concept" => Ok(Averaging::ConceptMean),
        "item" => Ok(Averaging::ItemMean),
        other => Err(CliError::Usage(format!(
            "bcubed_averaging must be 'concept' or 'item', got '{other}'"
        ))),
    }
}

/// `true` when reports should show the sample (n−1) standard deviation.
pub fn sample_sd_from(cfg: &Config) -> Result<bool> {
    match cfg.require_str("gqd_sd")? {
        "population" => Ok(false),
        "sample" => Ok(true),
        other => Err(CliError::Usage(format!(
            "gqd_sd must be 'population' or 'sample', got '{other}'"
        ))),
    }
}

fn lexstat_params(cfg: &Config, seed: u64) -> Result<LexstatParams> {
    let d = LexstatParams::default();
    Ok(LexstatParams {
        n_perm: cfg.usize("lexstat_n_perm")?.unwrap_or(d.n_perm),
        prefilter_max_dist: cfg.f64("lexstat_prefilter_max_dist")?.unwrap_or(d.prefilter_max_dist),
        epsilon: cfg.f64("lexstat_epsilon")?.unwrap_or(d.epsilon),
        seed,
    })
}

fn pmi_params(cfg: &Config, seed: u64) -> Result<PmiParams> {
    let d = PmiParams::default();
    Ok(PmiParams {
        batch_size: cfg.usize("pmi_batch_size")?.unwrap_or(d.batch_size),
        iterations: cfg.usize("pmi_iterations")?.unwrap_or(d.iterations),
        mix: cfg.f64("pmi_mix")?.unwrap_or(d.mix),
        gap_open: cfg.f64("pmi_gap_open")?.unwrap_or(d.gap_open),
        gap_extend: cfg.f64("pmi_gap_extend")?.unwrap_or(d.gap_extend),
        epsilon: cfg.f64("pmi_epsilon")?.unwrap_or(d.epsilon),
        seed,
    })
}

/// Runs one detection method, training its artifacts on demand.
pub fn detect_stage(
    wl: &Wordlist,
    method: DetectMethod,
    cfg: &Config,
    seed: u64,
) -> Result<CognatePartition> {
    let threshold = match method {
        DetectMethod::Ccm => None,
        DetectMethod::Ned => cfg.f64("ned_threshold")?,
        DetectMethod::Sca => cfg.f64("sca_threshold")?,
        DetectMethod::LexStat => cfg.f64("lexstat_threshold")?,
        DetectMethod::OnlinePmi => cfg.f64("onlinepmi_threshold")?,
    };
    let scorer;
    let pmi;
    let mut detect_config = DetectConfig { threshold, seed, ..DetectConfig::default() };
    if method == DetectMethod::LexStat {
        scorer = lexstat_train(
            wl,
            SoundClassModel::fine(),
            ScoreTable::fine_generic(),
            &lexstat_params(cfg, seed)?,
        )?;
        detect_config.lexstat = Some(&scorer);
    }
    if method == DetectMethod::OnlinePmi {
        pmi = online_pmi_train(wl, &pmi_params(cfg, seed)?)?;
        detect_config.pmi = Some(&pmi);
    }
    Ok(detect_cognates(wl, method, &detect_config)?)
}

pub fn partition_text(p: &CognatePartition) -> Result<String> {
    let mut buf = Vec::new();
    p.to_tsv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("partition TSV is UTF-8"))
}

pub fn matrix_text(m: &CharacterMatrix) -> Result<String> {
    let mut buf = Vec::new();
    m.to_tsv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("matrix TSV is UTF-8"))
}

pub fn matrix_phylip_text(m: &CharacterMatrix) -> Result<String> {
    let mut buf = Vec::new();
    m.to_phylip(&mut buf)?;
    Ok(String::from_utf8(buf).expect("matrix PHYLIP is UTF-8"))
}

/// Writes `matrix.tsv` (and optionally `matrix.phy`) under `dir`.
pub fn write_matrix_files(m: &CharacterMatrix, cfg: &Config, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("matrix.tsv"), &matrix_text(m)?)?;
    if cfg.bool("phylip")?.unwrap_or(false) {
        write_atomic(&dir.join("matrix.phy"), &matrix_phylip_text(m)?)?;
    }
    Ok(())
}

fn kernel_tuning_from(cfg: &Config) -> Result<KernelTuning> {
    let mut tuning = KernelTuning::default();
    if let Some(v) = cfg.f64("age_window")? {
        tuning.age_window = v;
    }
    if let Some(v) = cfg.f64("pi0_window")? {
        tuning.pi0_window = v;
    }
    if let Some(v) = cfg.f64("rate_quantile_window")? {
        tuning.rate_quantile_window = v;
    }
    if let Some(v) = cfg.f64("multiplier_lambda")? {
        tuning.multiplier_lambda = v;
    }
    let d = KernelWeights::default();
    tuning.weights = KernelWeights {
        narrow_exchange: cfg.u32("kernel_narrow")?.unwrap_or(d.narrow_exchange),
        subtree_regraft: cfg.u32("kernel_regraft")?.unwrap_or(d.subtree_regraft),
        node_age_slide: cfg.u32("kernel_age_slide")?.unwrap_or(d.node_age_slide),
        root_age_scale: cfg.u32("kernel_root_scale")?.unwrap_or(d.root_age_scale),
        scalar_block: cfg.u32("kernel_scalars")?.unwrap_or(d.scalar_block),
    };
    if tuning.weights.total() == 0 {
        return Err(CliError::Usage("all kernel weights are zero".into()));
    }
    Ok(tuning)
}

/// What the sampling stage leaves behind for downstream stages; the full
/// numbers live in `mcmc_report.tsv`.
pub struct McmcArtifacts {
    pub converged: bool,
    /// Post burn-in trees of both runs, in run order.
    pub pooled: Vec<Tree>,
}

fn sample_log(subcommand: &str, ctx: &Ctx, run_index: usize, samples: &[ChainSample]) -> Report {
    let note = format!("run: {} of 2", run_index + 1);
    let mut log = Report::new(
        subcommand,
        &ctx.cfg,
        ctx.seed,
        &[&note],
        SAMPLE_LOG_COLUMNS.to_vec(),
    );
    for s in samples {
        log.push_row(vec![
            s.generation.to_string(),
            fmt_f64(s.log_likelihood),
            fmt_f64(s.log_prior),
            fmt_f64(s.pi0),
            fmt_f64(s.alpha),
            fmt_f64(s.sigma2),
            s.newick.clone(),
        ]);
    }
    log
}

/// Dual-chain posterior sampling over a character matrix. Writes both
/// sample logs, the pooled post burn-in tree file, the majority consensus,
/// and the convergence report under `dir`.
pub fn mcmc_stage(
    matrix: &CharacterMatrix,
    ctx: &Ctx,
    dir: &Path,
    subcommand: &str,
) -> Result<McmcArtifacts> {
    let generations = ctx.cfg.u64("mcmc_generations")?.expect("key has a default");
    let sample_every = ctx.cfg.u64("mcmc_sample_every")?.expect("key has a default");
    if generations == 0 || sample_every == 0 {
        return Err(CliError::Usage(
            "mcmc_generations and mcmc_sample_every must be positive".into(),
        ));
    }
    if sample_every > generations {
        return Err(CliError::Usage(format!(
            "mcmc_sample_every ({sample_every}) exceeds mcmc_generations ({generations}); \
             no samples would be recorded"
        )));
    }
    let min_freq = ctx.cfg.f64("asdsf_min_freq")?.unwrap_or(ASDSF_MIN_CLADE_FREQUENCY);
    let consensus_threshold = ctx.cfg.f64("consensus_threshold")?.expect("key has a default");

    let engine = LikelihoodEngine::new(matrix)?;
    let opts = McmcOptions {
        generations,
        sample_every,
        seed: ctx.seed,
        prior_only: false,
        tuning: kernel_tuning_from(&ctx.cfg)?,
    };
    let result = dual_run(Some(&engine), matrix.languages(), &opts)?;

    // Convergence from the logs, with the configured frequency floor.
    let halves = [burn_in_split(&result.runs[0]), burn_in_split(&result.runs[1])];
    let freqs1 = clade_frequencies(halves[0])?;
    let freqs2 = clade_frequencies(halves[1])?;
    let asdsf_value = asdsf(&freqs1, &freqs2, min_freq);
    let converged = asdsf_value < ASDSF_CONVERGENCE_THRESHOLD;

    for (i, run) in result.runs.iter().enumerate() {
        sample_log(subcommand, ctx, i, run).write(&dir.join(format!("run{}.log", i + 1)))?;
    }

    let mut pooled_text = String::new();
    let mut pooled = Vec::new();
    for half in halves {
        for s in half {
            pooled_text.push_str(&s.newick);
            pooled_text.push('\n');
            pooled.push(parse_newick(&s.newick)?);
        }
    }
    write_atomic(&dir.join("pooled.trees"), &pooled_text)?;

    let consensus = majority_consensus(&pooled, consensus_threshold)?;
    write_atomic(&dir.join("consensus.nwk"), &format!("{}\n", consensus.tree.to_newick()))?;

    let samples_per_run = result.runs[0].len();
    let note = format!(
        "asdsf: average std dev of split frequencies across the post burn-in halves of both \
         runs (min frequency {min_freq}, convergence threshold {ASDSF_CONVERGENCE_THRESHOLD})"
    );
    let mut report = Report::new(
        subcommand,
        &ctx.cfg,
        ctx.seed,
        &[&note],
        vec![
            "GENERATIONS",
            "SAMPLE_EVERY",
            "SAMPLES_PER_RUN",
            "BURN_IN_DISCARDED",
            "POOLED_TREES",
            "ASDSF",
            "CONVERGED",
        ],
    );
    report.push_row(vec![
        generations.to_string(),
        sample_every.to_string(),
        samples_per_run.to_string(),
        (samples_per_run / 2).to_string(),
        pooled.len().to_string(),
        fmt_f64(asdsf_value),
        converged.to_string(),
    ]);
    report.write(&dir.join("mcmc_report.tsv"))?;

    Ok(McmcArtifacts { converged, pooled })
}

/// Mean/sd of the quartet distance, with the configured sd flavor.
pub fn gqd_summary_stage(
    samples: &[Tree],
    reference: &Tree,
    sample_sd: bool,
) -> Result<GqdSummary> {
    let mut summary = posterior_gqd_summary(samples, reference)?;
    if sample_sd && summary.n > 1 {
        let n = summary.n as f64;
        summary.sd *= (n / (n - 1.0)).sqrt();
    }
    Ok(summary)
}

pub fn gqd_row(method: &str, family: &str, s: &GqdSummary) -> Vec<String> {
    vec![
        method.to_owned(),
        family.to_owned(),
        fmt_f64(s.mean),
        fmt_f64(s.sd),
        s.n.to_string(),
        s.to_string(),
    ]
}

/// Per-sample distances for the histogram, cached by topology.
pub fn per_sample_gqd(samples: &[Tree], reference: &Tree) -> Result<Vec<f64>> {
    let mut cache: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    let mut values = Vec::with_capacity(samples.len());
    for t in samples {
        let key = topology_key(t);
        let value = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = gqd(t, reference)?;
                cache.insert(key, v);
                v
            }
        };
        values.push(value);
    }
    Ok(values)
}

/// A 20-bin text histogram of distances in `[0, 1]`.
pub fn histogram_block(label: &str, values: &[f64]) -> String {
    const BINS: usize = 20;
    const BAR: usize = 50;
    let mut counts = [0usize; BINS];
    for &v in values {
        let bin = ((v * BINS as f64) as usize).min(BINS - 1);
        counts[bin] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0).max(1);
    let mut out = format!("{label} (n = {})\n", values.len());
    for (i, &count) in counts.iter().enumerate() {
        let lo = i as f64 / BINS as f64;
        let hi = (i + 1) as f64 / BINS as f64;
        let close = if i + 1 == BINS { ']' } else { ')' };
        let bar = "#".repeat((count * BAR).div_ceil(max).min(BAR));
        out.push_str(&format!("[{lo:.2}, {hi:.2}{close} {count:>6} {bar}\n"));
    }
    out
}

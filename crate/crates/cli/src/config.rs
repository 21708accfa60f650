//! Flat key–value configuration with file, `--set`, and flag layers.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! `--set key=value` overrides in order, then the dedicated flags
//! (`--seed`, `--out`, `--method`). Keys are validated against the table
//! below so typos fail fast instead of silently using a default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// One known configuration key: name, built-in default (`None` means unset,
/// with the effective default supplied by the library), and help text.
pub struct KeySpec {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

/// Every key the tool understands. Unknown keys are usage errors.
pub const KNOWN_KEYS: &[KeySpec] = &[
    // Paths.
    KeySpec { name: "wordlist", default: None, help: "path to the input wordlist TSV" },
    KeySpec { name: "gold_tree", default: None, help: "path to the reference Newick tree" },
    KeySpec { name: "partition", default: None, help: "path to a cognate partition TSV (matrix command)" },
    KeySpec { name: "matrix", default: None, help: "path to a character matrix TSV (mcmc command)" },
    KeySpec { name: "trees", default: None, help: "comma-separated label=path tree sample files (gqd command)" },
    KeySpec { name: "out", default: Some("out"), help: "output directory" },
    // Identity and selection.
    KeySpec { name: "family", default: Some("family"), help: "family label used in report rows" },
    KeySpec { name: "methods", default: Some("ccm,ned,sca,lexstat,onlinepmi"), help: "comma-separated detection methods to run" },
    KeySpec { name: "seed", default: Some("0"), help: "master random seed; every stochastic step derives from it" },
    // Detection.
    KeySpec { name: "evaluate", default: Some("true"), help: "score detected partitions against expert cognate ids" },
    KeySpec { name: "ned_threshold", default: None, help: "flat clustering threshold for normalized edit distance (default 0.75)" },
    KeySpec { name: "sca_threshold", default: None, help: "flat clustering threshold for sound-class alignment (default 0.45)" },
    KeySpec { name: "lexstat_threshold", default: None, help: "community threshold for the log-odds method (default 0.55)" },
    KeySpec { name: "onlinepmi_threshold", default: None, help: "label-propagation threshold for the PMI method (default 0.5)" },
    KeySpec { name: "lexstat_n_perm", default: None, help: "permutations for the log-odds expected distribution (default 100)" },
    KeySpec { name: "lexstat_prefilter_max_dist", default: None, help: "attested-pair distance prefilter (default 0.6)" },
    KeySpec { name: "lexstat_epsilon", default: None, help: "additive smoothing in the log-odds ratio (default 0.01)" },
    KeySpec { name: "pmi_batch_size", default: None, help: "online PMI batch size (default 256)" },
    KeySpec { name: "pmi_iterations", default: None, help: "online PMI passes over the pair list (default 10)" },
    KeySpec { name: "pmi_mix", default: None, help: "mixing weight of each PMI batch estimate (default 0.5)" },
    KeySpec { name: "pmi_gap_open", default: None, help: "PMI alignment gap-open score (default -2.5)" },
    KeySpec { name: "pmi_gap_extend", default: None, help: "PMI alignment gap-extend score (default -1.75)" },
    KeySpec { name: "pmi_epsilon", default: None, help: "additive smoothing of PMI batch counts (default 0.01)" },
    // MCMC.
    KeySpec { name: "mcmc_generations", default: Some("100000"), help: "generations per chain" },
    KeySpec { name: "mcmc_sample_every", default: Some("1000"), help: "record one sample per this many generations" },
    KeySpec { name: "age_window", default: None, help: "node-age slide half-width (default 0.5)" },
    KeySpec { name: "pi0_window", default: None, help: "stationary-frequency slide half-width (default 0.2)" },
    KeySpec { name: "rate_quantile_window", default: None, help: "branch rate-quantile slide half-width (default 0.2)" },
    KeySpec { name: "multiplier_lambda", default: None, help: "spread of the multiplier kernels (default 2.0)" },
    KeySpec { name: "kernel_narrow", default: None, help: "selection weight of the narrow exchange kernel (default 30)" },
    KeySpec { name: "kernel_regraft", default: None, help: "selection weight of the subtree regraft kernel (default 10)" },
    KeySpec { name: "kernel_age_slide", default: None, help: "selection weight of the node-age slide kernel (default 30)" },
    KeySpec { name: "kernel_root_scale", default: None, help: "selection weight of the root-age rescale kernel (default 10)" },
    KeySpec { name: "kernel_scalars", default: None, help: "selection weight of the scalar-parameter block (default 20)" },
    // Evaluation.
    KeySpec { name: "bcubed_averaging", default: Some("concept"), help: "b-cubed averaging: concept or item" },
    KeySpec { name: "asdsf_min_freq", default: None, help: "minimum split frequency entering the ASDSF (default 0.1)" },
    KeySpec { name: "consensus_threshold", default: Some("0.5"), help: "majority-consensus threshold, in [0.5, 1)" },
    KeySpec { name: "gqd_sd", default: Some("population"), help: "standard-deviation flavor in tree-distance reports: population or sample" },
    KeySpec { name: "gqd_histogram", default: Some("false"), help: "also write a text histogram of per-sample distances" },
    // Matrix output.
    KeySpec { name: "phylip", default: Some("false"), help: "additionally write the matrix in PHYLIP layout" },
    // Simulation.
    KeySpec { name: "sim_languages", default: Some("L1,L2,L3,L4,L5,L6,L7,L8"), help: "comma-separated leaf names for the simulated tree" },
    KeySpec { name: "sim_pi0", default: Some("0.7"), help: "stationary frequency of state 0 in the simulation" },
    KeySpec { name: "sim_alpha", default: Some("1.0"), help: "gamma shape of across-column rate variation in the simulation" },
    KeySpec { name: "sim_sigma2", default: Some("0.1"), help: "clock rate variance of the simulated tree" },
    KeySpec { name: "sim_sites", default: Some("200"), help: "number of simulated characters" },
];

fn spec_of(key: &str) -> Option<&'static KeySpec> {
    KNOWN_KEYS.iter().find(|s| s.name == key)
}

/// The resolved configuration: every known key that has a value.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Starts from the built-in defaults.
    pub fn with_defaults() -> Self {
        let values = KNOWN_KEYS
            .iter()
            .filter_map(|s| s.default.map(|d| (s.name.to_owned(), d.to_owned())))
            .collect();
        Config { values }
    }

    /// Layers a config file over the current values. Lines are
    /// `key = value`; blank lines and `#` comments are ignored. A key may
    /// appear at most once per file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "config file '{}' does not exist",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read '{}': {e}", path.display())))?;
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_assignment(line).ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            if let Some(first) = seen.insert(key.to_owned(), lineno + 1) {
                return Err(CliError::Usage(format!(
                    "{}:{}: key '{key}' already set on line {first}",
                    path.display(),
                    lineno + 1
                )));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override (the `--set` flag). Repeating a key
    /// keeps the last value, so scripted sweeps can append overrides.
    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment).ok_or_else(|| {
            CliError::Usage(format!("--set expects 'key=value', got '{assignment}'"))
        })?;
        self.set(key, value)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if spec_of(key).is_none() {
            return Err(CliError::Usage(format!(
                "unknown configuration key '{key}' (see the key list in --help or the README)"
            )));
        }
        self.values.insert(key.to_owned(), value.to_owned());
        Ok(())
    }

    /// Sets a key that is known to exist (for the dedicated flags).
    pub fn force(&mut self, key: &'static str, value: String) {
        debug_assert!(spec_of(key).is_some(), "flag targets unknown key {key}");
        self.values.insert(key.to_owned(), value);
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.str(key).ok_or_else(|| {
            CliError::Usage(format!("configuration key '{key}' is required by this subcommand"))
        })
    }

    /// A path key that must point at an existing file.
    pub fn input_path(&self, key: &str) -> Result<PathBuf> {
        let raw = self.require_str(key)?;
        let path = PathBuf::from(raw);
        if !path.exists() {
            return Err(CliError::Usage(format!("{key} '{raw}' does not exist")));
        }
        Ok(path)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse_with(key, |v| v.parse::<u64>().ok(), "a non-negative integer")
    }

    pub fn u32(&self, key: &str) -> Result<Option<u32>> {
        self.parse_with(key, |v| v.parse::<u32>().ok(), "a non-negative integer")
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, |v| v.parse::<usize>().ok(), "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse_with(
            key,
            |v| match v {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            },
            "'true' or 'false'",
        )
    }

    fn parse_with<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => parse(v).map(Some).ok_or_else(|| {
                CliError::Usage(format!("key '{key}' must be {expected}, got '{v}'"))
            }),
        }
    }

    /// Canonical rendering of the effective configuration: sorted
    /// `key=value` lines. This is what the provenance hash covers.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hex SHA-256 of [`Config::canonical_text`].
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

/// Splits `key = value` (file form) or `key=value` (flag form) on the first
/// `=`; both sides are trimmed and the key must be non-empty.
fn split_assignment(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k, v.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn defaults_cover_the_documented_keys() {
        let cfg = Config::with_defaults();
        assert_eq!(cfg.str("out"), Some("out"));
        assert_eq!(cfg.str("methods"), Some("ccm,ned,sca,lexstat,onlinepmi"));
        assert_eq!(cfg.u64("seed").unwrap(), Some(0));
        assert_eq!(cfg.u64("mcmc_sample_every").unwrap(), Some(1000));
        assert_eq!(cfg.str("ned_threshold"), None);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let mut cfg = Config::with_defaults();
        let err = cfg.apply_set("sedd=42").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("unknown configuration key 'sedd'"));
    }

    #[test]
    fn set_overrides_keep_the_last_value() {
        let mut cfg = Config::with_defaults();
        cfg.apply_set("seed=1").unwrap();
        cfg.apply_set("seed=2").unwrap();
        assert_eq!(cfg.u64("seed").unwrap(), Some(2));
    }

    #[test]
    fn files_reject_duplicate_keys_and_apply_comments() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# a comment\n\nseed = 7\nfamily = tests").unwrap();
        let mut cfg = Config::with_defaults();
        cfg.apply_file(file.path()).unwrap();
        assert_eq!(cfg.u64("seed").unwrap(), Some(7));
        assert_eq!(cfg.str("family"), Some("tests"));

        let mut dup = tempfile::NamedTempFile::new().unwrap();
        writeln!(dup, "seed = 1\nseed = 2").unwrap();
        let err = cfg.apply_file(dup.path()).unwrap_err();
        assert!(err.to_string().contains("already set"));
    }

    #[test]
    fn typed_getters_reject_malformed_values() {
        let mut cfg = Config::with_defaults();
        cfg.apply_set("mcmc_generations=soon").unwrap();
        assert_eq!(cfg.u64("mcmc_generations").unwrap_err().exit_code(), 1);
        cfg.apply_set("evaluate=yes").unwrap();
        assert_eq!(cfg.bool("evaluate").unwrap_err().exit_code(), 1);
        cfg.apply_set("sim_pi0=inf").unwrap();
        assert_eq!(cfg.f64("sim_pi0").unwrap_err().exit_code(), 1);
    }

    #[test]
    fn the_hash_tracks_every_effective_value() {
        let mut a = Config::with_defaults();
        let b = Config::with_defaults();
        assert_eq!(a.sha256(), b.sha256());
        a.apply_set("seed=99").unwrap();
        assert_ne!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
    }
}

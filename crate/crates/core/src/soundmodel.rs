//! Sound-class models: token → class-symbol mappings.
//!
//! A model maps phonetic tokens (IPA-ish strings, one segment per token) onto
//! single-character class symbols. Two models ship with the crate:
//!
//! * [`SoundClassModel::coarse`] — ten consonant classes; vowels are
//!   discarded. Used for consonant-class keys.
//! * [`SoundClassModel::fine`] — twenty-five classes including six vowel
//!   classes. Used for alignment-based distances.
//!
//! Unknown tokens map to the wildcard class [`WILDCARD`]; it never matches
//! itself in consonant-class keys and scores zero against everything during
//! alignment. The shipped tables are the normative mapping for this crate —
//! alternative tables can be loaded from TSV at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Class assigned to tokens absent from the mapping table.
pub const WILDCARD: char = '?';
/// Pad symbol for consonant-class keys of words with fewer than two
/// consonants.
pub const PLACEHOLDER: char = '·';

/// What to do with vowel-class tokens when building class strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VowelPolicy {
    /// Keep vowels, mapped to their class symbol.
    Keep,
    /// Drop vowels from the class string.
    Discard,
}

#[derive(Debug, Clone)]
pub struct SoundClassModel {
    name: String,
    mapping: BTreeMap<String, char>,
    vowel_classes: BTreeSet<char>,
    vowel_policy: VowelPolicy,
}

static COARSE: OnceLock<SoundClassModel> = OnceLock::new();
static FINE: OnceLock<SoundClassModel> = OnceLock::new();

impl SoundClassModel {
    /// Parses a TSV mapping (`TOKEN<TAB>CLASS` per line, `#` comments).
    ///
    /// A directive line `#vowels:<TAB>A B C` declares which class symbols
    /// count as vowels for the policy.
    pub fn from_tsv(name: &str, policy: VowelPolicy, text: &str) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        let mut vowel_classes = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if let Some(rest) = line.strip_prefix("#vowels:") {
                for sym in rest.split_whitespace() {
                    let mut chars = sym.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => {
                            vowel_classes.insert(c);
                        }
                        _ => {
                            return Err(Error::parse_at_line(
                                lineno,
                                format!("vowel class '{sym}' is not a single symbol"),
                            ))
                        }
                    }
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, class) = line.split_once('\t').ok_or_else(|| {
                Error::parse_at_line(lineno, "expected TOKEN<TAB>CLASS")
            })?;
            let mut chars = class.chars();
            let class = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(Error::parse_at_line(
                        lineno,
                        format!("class '{class}' is not a single symbol"),
                    ))
                }
            };
            if class == WILDCARD || class == PLACEHOLDER {
                return Err(Error::parse_at_line(
                    lineno,
                    format!("class symbol '{class}' is reserved"),
                ));
            }
            if mapping.insert(token.to_owned(), class).is_some() {
                return Err(Error::Duplicate(format!("token '{token}' in table '{name}'")));
            }
        }
        if mapping.is_empty() {
            return Err(Error::Format(format!("sound-class table '{name}' is empty")));
        }
        Ok(SoundClassModel {
            name: name.to_owned(),
            mapping,
            vowel_classes,
            vowel_policy: policy,
        })
    }

    /// The built-in ten-class consonant model (vowels discarded).
    pub fn coarse() -> &'static SoundClassModel {
        COARSE.get_or_init(|| {
            SoundClassModel::from_tsv(
                "coarse",
                VowelPolicy::Discard,
                include_str!("../data/ccm_classes.tsv"),
            )
            .expect("built-in coarse table is well-formed")
        })
    }

    /// The built-in twenty-five-class model (vowels kept).
    pub fn fine() -> &'static SoundClassModel {
        FINE.get_or_init(|| {
            SoundClassModel::from_tsv(
                "fine",
                VowelPolicy::Keep,
                include_str!("../data/sca_classes.tsv"),
            )
            .expect("built-in fine table is well-formed")
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vowel_policy(&self) -> VowelPolicy {
        self.vowel_policy
    }

    /// Class symbol for one token; unknown tokens yield the wildcard.
    pub fn class_of(&self, token: &str) -> char {
        self.mapping.get(token).copied().unwrap_or(WILDCARD)
    }

    fn is_vowel_class(&self, class: char) -> bool {
        self.vowel_classes.contains(&class)
    }

    /// Maps a token sequence onto its class string, applying the vowel
    /// policy. Order is preserved; the wildcard survives the vowel filter.
    pub fn class_string(&self, tokens: &[impl AsRef<str>]) -> Vec<char> {
        tokens
            .iter()
            .map(|t| self.class_of(t.as_ref()))
            .filter(|&c| self.vowel_policy == VowelPolicy::Keep || !self.is_vowel_class(c))
            .collect()
    }

    /// First two consonant-class symbols of the word, padded with
    /// [`PLACEHOLDER`] when fewer than two remain.
    ///
    /// Only meaningful for models that discard vowels; this is asserted.
    pub fn ccm_key(&self, tokens: &[impl AsRef<str>]) -> (char, char) {
        assert_eq!(
            self.vowel_policy,
            VowelPolicy::Discard,
            "consonant-class keys need a vowel-discarding model"
        );
        let classes = self.class_string(tokens);
        let first = classes.first().copied().unwrap_or(PLACEHOLDER);
        let second = classes.get(1).copied().unwrap_or(PLACEHOLDER);
        (first, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_discards_vowels() {
        let m = SoundClassModel::coarse();
        let s: String = m.class_string(&["p", "a", "p", "a"]).into_iter().collect();
        assert_eq!(s, "PP");
    }

    #[test]
    fn fine_keeps_vowels() {
        let m = SoundClassModel::fine();
        let s: String = m.class_string(&["p", "a", "t"]).into_iter().collect();
        assert_eq!(s, "PAT");
    }

    #[test]
    fn unknown_tokens_become_wildcard() {
        let m = SoundClassModel::fine();
        let s: String = m.class_string(&["p", "☃", "t"]).into_iter().collect();
        assert_eq!(s, "P?T");
    }

    #[test]
    fn empty_input_yields_empty_class_string() {
        let m = SoundClassModel::fine();
        let empty: [&str; 0] = [];
        assert!(m.class_string(&empty).is_empty());
    }

    #[test]
    fn ccm_key_takes_first_two_consonants() {
        let m = SoundClassModel::coarse();
        assert_eq!(m.ccm_key(&["k", "a", "t", "a"]), ('K', 'T'));
    }

    #[test]
    fn ccm_key_pads_with_placeholders() {
        let m = SoundClassModel::coarse();
        assert_eq!(m.ccm_key(&["a", "i"]), (PLACEHOLDER, PLACEHOLDER));
        assert_eq!(m.ccm_key(&["p", "a"]), ('P', PLACEHOLDER));
    }

    #[test]
    fn class_string_preserves_order_and_length_without_vowel_filter() {
        let m = SoundClassModel::fine();
        let tokens = ["t", "ʃ", "a", "l", "ɣ"];
        let s = m.class_string(&tokens);
        assert_eq!(s.len(), tokens.len());
    }

    #[test]
    fn every_fine_class_is_known_or_wildcard() {
        // The mapping must never emit the placeholder, and the wildcard only
        // for unknown tokens.
        let m = SoundClassModel::fine();
        for tok in ["p", "zzz", "a", "ʈʂ"] {
            let c = m.class_of(tok);
            assert_ne!(c, PLACEHOLDER);
            if tok == "zzz" {
                assert_eq!(c, WILDCARD);
            } else {
                assert_ne!(c, WILDCARD);
            }
        }
    }

    #[test]
    fn loading_rejects_reserved_class_symbols() {
        let err = SoundClassModel::from_tsv("bad", VowelPolicy::Keep, "p\t?\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}

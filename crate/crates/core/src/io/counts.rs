//! Counts-file ingestion.
//!
//! Two formats, detected from the first data line:
//!
//! * raw: one nonnegative per-species count per line;
//! * profile: `j<TAB>F_j` lines (any whitespace separates), optionally
//!   preceded by an `n=<int>` header declaring the sample size.
//!
//! Blank lines and lines starting with `#` are ignored. A profile with a
//! header loads in declared mode, everything else in strict mode, unless
//! the caller forces a mode.

use crate::error::{Error, Result};
use crate::estimator::{FrequencyProfile, ProfileMode};
use std::path::Path;

/// The tomato EST frequency profile, embedded for hermetic reproduction.
pub const EXAMPLE4_PROFILE: &str = include_str!("../../data/example4_profile.tsv");

pub fn example4_profile() -> FrequencyProfile {
    parse_counts(EXAMPLE4_PROFILE, None).expect("embedded fixture is valid")
}

pub fn parse_counts_file(path: &Path, mode: Option<ProfileMode>) -> Result<FrequencyProfile> {
    let text = std::fs::read_to_string(path)?;
    parse_counts(&text, mode)
}

fn parse_int(token: &str, line: usize, what: &str) -> Result<u64> {
    if token.starts_with('-') {
        return Err(Error::Parse {
            line,
            message: format!("negative {what} {token:?}"),
        });
    }
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected a nonnegative integer {what}, found {token:?}"),
    })
}

pub fn parse_counts(text: &str, mode: Option<ProfileMode>) -> Result<FrequencyProfile> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let Some(&(first_line, first)) = lines.first() else {
        return Err(Error::InvalidProfile("input has no data lines".into()));
    };
    let is_profile = first.starts_with("n=") || first.split_whitespace().count() == 2;
    if !is_profile {
        let counts = lines
            .iter()
            .map(|&(line, l)| {
                if l.split_whitespace().count() != 1 {
                    return Err(Error::Parse {
                        line,
                        message: "raw format expects one count per line".into(),
                    });
                }
                parse_int(l, line, "count")
            })
            .collect::<Result<Vec<_>>>()?;
        let profile = FrequencyProfile::from_species_counts(&counts)?;
        return match mode {
            Some(ProfileMode::Declared) => {
                FrequencyProfile::new(profile.entries(), profile.n(), ProfileMode::Declared)
            }
            _ => Ok(profile),
        };
    }

    let mut declared = None;
    let mut entries = Vec::new();
    for &(line, l) in &lines {
        if let Some(value) = l.strip_prefix("n=") {
            if line != first_line {
                return Err(Error::Parse {
                    line,
                    message: "the n=<int> header must precede the data".into(),
                });
            }
            declared = Some(parse_int(value.trim(), line, "sample size")?);
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        let [j, f] = fields[..] else {
            return Err(Error::Parse {
                line,
                message: format!(
                    "profile format expects `j<TAB>F_j`, found {} fields",
                    fields.len()
                ),
            });
        };
        let j = parse_int(j, line, "occupancy level")?;
        if j == 0 {
            return Err(Error::Parse {
                line,
                message: "occupancy level j must be at least 1".into(),
            });
        }
        if entries.iter().any(|&(k, _)| k == j) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate occupancy level {j}"),
            });
        }
        entries.push((j, parse_int(f, line, "species count")?));
    }
    let observed: u128 = entries
        .iter()
        .map(|&(j, f)| u128::from(j) * u128::from(f))
        .sum();
    let n = match declared {
        Some(n) => n,
        None => u64::try_from(observed)
            .map_err(|_| Error::InvalidProfile("sample size overflows 64 bits".into()))?,
    };
    let mode = mode.unwrap_or(if declared.is_some() {
        ProfileMode::Declared
    } else {
        ProfileMode::Strict
    });
    FrequencyProfile::new(entries, n, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_format() {
        let p = parse_counts("3\n1\n1\n2\n", None).unwrap();
        assert_eq!(
            p.entries().collect::<Vec<_>>(),
            vec![(1, 2), (2, 1), (3, 1)]
        );
        assert_eq!(p.n(), 7);
        assert_eq!(p.mode(), ProfileMode::Strict);
    }

    #[test]
    fn embedded_fixture() {
        let p = example4_profile();
        assert_eq!(p.n(), 2568);
        assert_eq!((p.f(1), p.f(2), p.f(27)), (1434, 253, 1));
        assert_eq!(p.observed_total(), 2549);
        assert_eq!(p.species_observed(), 1822);
        assert_eq!(p.mode(), ProfileMode::Declared);
        assert_eq!(p.warnings().len(), 1);
    }

    #[test]
    fn fixture_rejected_in_strict_mode() {
        assert!(matches!(
            parse_counts(EXAMPLE4_PROFILE, Some(ProfileMode::Strict)),
            Err(Error::InvalidProfile(_))
        ));
    }

    #[test]
    fn headerless_profile_is_strict() {
        let p = parse_counts("1\t4\n# comment\n\n3 2\n", None).unwrap();
        assert_eq!(p.n(), 10);
        assert_eq!(p.mode(), ProfileMode::Strict);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match parse_counts(text, None) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("3\n1\n-2\n"), 3);
        assert_eq!(line_of("3\nx\n"), 2);
        assert_eq!(line_of("n=10\n1\t2\n2\n"), 3);
        assert_eq!(line_of("1\t2\n1\t3\n"), 2);
        assert_eq!(line_of("1\t2\nn=5\n"), 2);
        assert_eq!(line_of("0\t2\n"), 1);
        assert_eq!(line_of("3\n1 2\n"), 2);
    }

    #[test]
    fn empty_input() {
        assert!(parse_counts("", None).is_err());
        assert!(parse_counts("# only a comment\n\n", None).is_err());
        assert!(matches!(
            parse_counts("0\n0\n", None),
            Err(Error::NoObservations)
        ));
    }
}

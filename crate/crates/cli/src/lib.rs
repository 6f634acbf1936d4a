//! Argument-independent pieces of the command-line front end.

use std::collections::HashSet;

use pciscan::{FindingStatus, ScanReport, Verdict};

pub const EXIT_COMPLIANT: i32 = 0;
pub const EXIT_NON_COMPLIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PROBE_ERROR: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetError {
    #[error("line {line}: `{entry}` is not a bare hostname (no schemes, paths or spaces)")]
    NotAHostname { line: usize, entry: String },
    #[error("no targets given")]
    Empty,
}

/// One hostname per line. Blank lines and `#` comments are skipped, each
/// entry is trimmed, and repeats keep their first position.
pub fn parse_targets(input: &str) -> Result<Vec<String>, TargetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let entry = raw.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        let bad = entry.contains("://") || entry.contains('/') || entry.chars().any(char::is_whitespace);
        if bad {
            return Err(TargetError::NotAHostname { line: i + 1, entry: entry.to_string() });
        }
        if seen.insert(entry.to_ascii_lowercase()) {
            out.push(entry.to_string());
        }
    }
    if out.is_empty() {
        return Err(TargetError::Empty);
    }
    Ok(out)
}

/// 3 if any target is entirely ProbeError, else 1 if any is non-compliant,
/// else 0.
pub fn exit_code(reports: &[ScanReport]) -> i32 {
    if reports.iter().any(|r| r.findings().iter().all(|f| f.status() == FindingStatus::ProbeError)) {
        EXIT_PROBE_ERROR
    } else if reports.iter().any(|r| r.verdict().verdict == Verdict::NonCompliant) {
        EXIT_NON_COMPLIANT
    } else {
        EXIT_COMPLIANT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_duplicates() {
        assert_eq!(parse_targets("a.com\n#skip\nb.com\na.com\n").unwrap(), ["a.com", "b.com"]);
        assert_eq!(parse_targets("  a.com  \n").unwrap(), ["a.com"]);
    }

    #[test]
    fn schemes_are_rejected_with_the_line() {
        let e = parse_targets("ok.com\nhttps://a.com\n").unwrap_err();
        assert_eq!(e, TargetError::NotAHostname { line: 2, entry: "https://a.com".into() });
        assert!(e.to_string().contains("https://a.com"));
        assert!(parse_targets("a b.com").is_err());
    }

    #[test]
    fn empty_input_is_a_usage_error() {
        assert_eq!(parse_targets("\n# nothing\n"), Err(TargetError::Empty));
    }
}

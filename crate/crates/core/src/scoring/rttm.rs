//! RTTM speaker lines:
//! `SPEAKER <session> 1 <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>`.

use std::fmt::Write as _;
use std::path::Path;

use super::{ScoringError, Segment, SegmentationHypothesis};

/// Parses all `SPEAKER` lines, grouped by session in order of first
/// appearance. Blank lines and `;;` comments are skipped; other record types
/// are ignored.
pub fn parse_rttm(text: &str) -> Result<Vec<SegmentationHypothesis>, ScoringError> {
    let mut out: Vec<SegmentationHypothesis> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            continue;
        }
        let bad = |what: &str| ScoringError::Rttm {
            line: lineno + 1,
            message: what.to_string(),
        };
        if fields.len() < 8 {
            return Err(bad("expected at least 8 fields"));
        }
        let tbeg: f64 = fields[3].parse().map_err(|_| bad("bad onset"))?;
        let tdur: f64 = fields[4].parse().map_err(|_| bad("bad duration"))?;
        if !(tbeg.is_finite() && tdur.is_finite() && tdur > 0.0 && tbeg >= 0.0) {
            return Err(bad("onset must be >= 0 and duration > 0"));
        }
        let session = fields[1];
        let seg = Segment {
            speaker: fields[7].to_string(),
            start: tbeg,
            end: tbeg + tdur,
        };
        match out.iter_mut().find(|h| h.session_id == session) {
            Some(h) => h.segments.push(seg),
            None => out.push(SegmentationHypothesis {
                session_id: session.to_string(),
                segments: vec![seg],
            }),
        }
    }
    Ok(out)
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Vec<SegmentationHypothesis>, ScoringError> {
    parse_rttm(&std::fs::read_to_string(path)?)
}

pub fn format_rttm(hyps: &[SegmentationHypothesis]) -> String {
    let mut s = String::new();
    for h in hyps {
        for seg in &h.segments {
            writeln!(
                s,
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
                h.session_id,
                seg.start,
                seg.end - seg.start,
                seg.speaker
            )
            .unwrap();
        }
    }
    s
}

pub fn write_rttm(path: impl AsRef<Path>, hyps: &[SegmentationHypothesis]) -> Result<(), ScoringError> {
    std::fs::write(path, format_rttm(hyps))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let h = SegmentationHypothesis {
            session_id: "S01".into(),
            segments: vec![
                Segment { speaker: "spk0".into(), start: 0.5, end: 2.25 },
                Segment { speaker: "spk1".into(), start: 1.0, end: 3.0 },
            ],
        };
        let text = format_rttm(std::slice::from_ref(&h));
        assert!(text.starts_with("SPEAKER S01 1 0.500 1.750 <NA> <NA> spk0 <NA> <NA>\n"));
        assert_eq!(parse_rttm(&text).unwrap(), vec![h]);
    }

    #[test]
    fn groups_sessions_and_reports_lines() {
        let text = ";; comment\nSPEAKER a 1 0 1 <NA> <NA> x <NA> <NA>\n\nSPKR-INFO a 1 <NA>\nSPEAKER b 1 0.00 2.00 <NA> <NA> y <NA> <NA>\nSPEAKER a 1 3 1 <NA> <NA> x <NA> <NA>\n";
        let h = parse_rttm(text).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].segments.len(), 2);
        match parse_rttm("SPEAKER a 1 0 zero <NA> <NA> x") {
            Err(ScoringError::Rttm { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_rttm("SPEAKER a 1 0 -1 <NA> <NA> x").is_err());
    }
}

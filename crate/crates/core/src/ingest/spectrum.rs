//! RRUFF text export parsing.
//!
//! A RRUFF spectrum file is a block of `##KEY=value` header lines followed by
//! `shift, intensity` data lines, optionally closed by `##END=`. Whether the
//! record is the raw or the baseline-corrected variant is encoded only in the
//! file name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Processing state of a RRUFF record, taken from the file name suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpectrumKind {
    Raw,
    Processed,
}

impl SpectrumKind {
    /// Classifies a file by name alone. Contents are never consulted.
    pub fn from_file_name(path: &str) -> Option<Self> {
        let name = Path::new(path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string());
        if name.contains("Raman_Data_RAW") {
            Some(SpectrumKind::Raw)
        } else if name.contains("Raman_Data_Processed") {
            Some(SpectrumKind::Processed)
        } else {
            None
        }
    }

    pub fn file_tag(self) -> &'static str {
        match self {
            SpectrumKind::Raw => "Raman_Data_RAW",
            SpectrumKind::Processed => "Raman_Data_Processed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing required header ##{0}=")]
    MissingHeader(String),
    /// Data lines are numbered from 1 in the order they appear after the header.
    #[error("malformed data line {0}")]
    MalformedDataLine(usize),
    #[error("file name carries neither Raman_Data_RAW nor Raman_Data_Processed")]
    UnknownKindSuffix,
    #[error("shift values not strictly monotonic at data line {0}")]
    NonMonotonicShift(usize),
    #[error("spectrum has {0} data points, at least 2 required")]
    TooFewPoints(usize),
}

/// One Raman trace: intensity as a function of Raman shift (cm⁻¹).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub mineral_name: String,
    pub rruff_id: String,
    pub kind: SpectrumKind,
    /// `(shift, intensity)` pairs, shifts strictly increasing.
    pub points: Vec<(f64, f64)>,
    pub source_path: String,
    /// Every header other than NAMES and RRUFFID, verbatim.
    pub metadata: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn shifts(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn shift_span(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Renders the spectrum back into RRUFF text form. Floats are written with
    /// the shortest representation that round-trips exactly.
    pub fn to_rruff_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "##NAMES={}", self.mineral_name);
        let _ = writeln!(out, "##RRUFFID={}", self.rruff_id);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "##{k}={v}");
        }
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x:?}, {y:?}");
        }
        out.push_str("##END=\n");
        out
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    tok.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn split_data_line(line: &str) -> Option<(f64, f64)> {
    let mut toks = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty());
    let x = parse_number(toks.next()?)?;
    let y = parse_number(toks.next()?)?;
    if toks.next().is_some() {
        return None;
    }
    Some((x, y))
}

/// Parses one RRUFF export. `path` is used for kind classification and
/// provenance only; `contents` is the file text.
pub fn parse_spectrum_file(path: &str, contents: &str) -> Result<Spectrum, ParseError> {
    let kind = SpectrumKind::from_file_name(path).ok_or(ParseError::UnknownKindSuffix)?;

    let mut headers: BTreeMap<String, String> = BTreeMap::new();
    let mut points = Vec::new();
    let mut data_line = 0usize;

    for raw in contents.lines() {
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("##") {
            let (key, value) = rest.split_once('=').unwrap_or((rest, ""));
            let key = key.trim().to_string();
            if key.eq_ignore_ascii_case("END") {
                break;
            }
            headers.insert(key, value.trim().to_string());
            continue;
        }
        data_line += 1;
        let point = split_data_line(line).ok_or(ParseError::MalformedDataLine(data_line))?;
        points.push(point);
    }

    let mineral_name = headers
        .remove("NAMES")
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ParseError::MissingHeader("NAMES".into()))?;
    let rruff_id = headers
        .remove("RRUFFID")
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ParseError::MissingHeader("RRUFFID".into()))?;

    if points.len() < 2 {
        return Err(ParseError::TooFewPoints(points.len()));
    }

    let decreasing = points.windows(2).all(|w| w[1].0 < w[0].0);
    if decreasing {
        log::warn!("{path}: shifts stored in decreasing order, re-sorting ascending");
        points.reverse();
    }
    if let Some(pos) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(ParseError::NonMonotonicShift(pos + 2));
    }

    Ok(Spectrum {
        mineral_name,
        rruff_id,
        kind,
        points,
        source_path: path.to_string(),
        metadata: headers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOLOMITE: &str = "Dolomite__R040030-3__Raman__Raman_Data_RAW.txt";

    fn file(body: &str) -> String {
        format!("##NAMES=Dolomite\n##RRUFFID=R040030\n##LOCALITY=Somewhere\n{body}##END=\n")
    }

    #[test]
    fn parses_name_and_kind_from_header_and_filename() {
        let s = parse_spectrum_file(DOLOMITE, &file("200.0, 1.0\n201.0, 2.0\n")).unwrap();
        assert_eq!(s.mineral_name, "Dolomite");
        assert_eq!(s.rruff_id, "R040030");
        assert_eq!(s.kind, SpectrumKind::Raw);
        assert_eq!(s.points, vec![(200.0, 1.0), (201.0, 2.0)]);
        assert_eq!(s.metadata.get("LOCALITY").map(String::as_str), Some("Somewhere"));
    }

    #[test]
    fn malformed_second_line() {
        let err = parse_spectrum_file(DOLOMITE, &file("200.0, 1.0\n201.0, abc\n")).unwrap_err();
        assert_eq!(err, ParseError::MalformedDataLine(2));
    }

    #[test]
    fn non_finite_values_rejected() {
        let err = parse_spectrum_file(DOLOMITE, &file("200.0, 1.0\n201.0, NaN\n")).unwrap_err();
        assert_eq!(err, ParseError::MalformedDataLine(2));
        let err = parse_spectrum_file(DOLOMITE, &file("inf, 1.0\n201.0, 1\n")).unwrap_err();
        assert_eq!(err, ParseError::MalformedDataLine(1));
    }

    #[test]
    fn whitespace_separated_lines_accepted() {
        let s = parse_spectrum_file(DOLOMITE, &file("200.0\t1.0\n201.0   2.0\n")).unwrap();
        assert_eq!(s.points, vec![(200.0, 1.0), (201.0, 2.0)]);
    }

    #[test]
    fn processed_suffix_and_unknown_suffix() {
        let name = "Calcite__R040070__Raman_Data_Processed.txt";
        let s = parse_spectrum_file(name, &file("1, 1\n2, 2\n")).unwrap();
        assert_eq!(s.kind, SpectrumKind::Processed);
        let err = parse_spectrum_file("calcite.txt", &file("1, 1\n2, 2\n")).unwrap_err();
        assert_eq!(err, ParseError::UnknownKindSuffix);
    }

    #[test]
    fn kind_ignores_contents() {
        // A header claiming "Processed" does not change a RAW filename.
        let body = "##NAMES=X\n##RRUFFID=R1\n##STATUS=Raman_Data_Processed\n1,1\n2,2\n";
        let s = parse_spectrum_file(DOLOMITE, body).unwrap();
        assert_eq!(s.kind, SpectrumKind::Raw);
    }

    #[test]
    fn missing_headers() {
        let err = parse_spectrum_file(DOLOMITE, "##RRUFFID=R1\n1,1\n2,2\n").unwrap_err();
        assert_eq!(err, ParseError::MissingHeader("NAMES".into()));
        let err = parse_spectrum_file(DOLOMITE, "##NAMES=X\n1,1\n2,2\n").unwrap_err();
        assert_eq!(err, ParseError::MissingHeader("RRUFFID".into()));
    }

    #[test]
    fn decreasing_file_is_resorted() {
        let s = parse_spectrum_file(DOLOMITE, &file("202, 3\n201, 2\n200, 1\n")).unwrap();
        assert_eq!(s.points, vec![(200.0, 1.0), (201.0, 2.0), (202.0, 3.0)]);
    }

    #[test]
    fn mixed_order_rejected() {
        let err = parse_spectrum_file(DOLOMITE, &file("200, 1\n202, 2\n201, 3\n")).unwrap_err();
        assert_eq!(err, ParseError::NonMonotonicShift(3));
        let err = parse_spectrum_file(DOLOMITE, &file("200, 1\n200, 2\n")).unwrap_err();
        assert_eq!(err, ParseError::NonMonotonicShift(2));
    }

    #[test]
    fn lines_after_end_ignored() {
        let body = "##NAMES=X\n##RRUFFID=R1\n1,1\n2,2\n##END=\ngarbage here\n";
        assert!(parse_spectrum_file(DOLOMITE, body).is_ok());
    }

    #[test]
    fn too_few_points() {
        let err = parse_spectrum_file(DOLOMITE, &file("200, 1\n")).unwrap_err();
        assert_eq!(err, ParseError::TooFewPoints(1));
    }
}

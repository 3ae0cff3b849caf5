//! Reader and writer for TSPLIB `.atsp` / `.tsp` files.
//!
//! Every ATSP file must be `EXPLICIT` / `FULL_MATRIX`. Symmetric files may
//! also use the triangular explicit formats or one of the coordinate types,
//! in which case distances follow the usual TSPLIB rounding rules.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AtspInstance, ModelError};

#[derive(Debug, Error)]
pub enum TsplibError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("edge weight section holds {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated data: {0}")]
    TruncatedData(String),
    #[error("line {line}: cannot read `{token}` as a number")]
    InvalidNumber { line: usize, token: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemType {
    Atsp,
    Tsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeWeightType {
    Explicit,
    Euc2d,
    Ceil2d,
    Geo,
    Att,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeWeightFormat {
    FullMatrix,
    UpperRow,
    LowerRow,
    UpperDiagRow,
    LowerDiagRow,
}

impl ProblemType {
    fn parse(s: &str) -> Result<Self, TsplibError> {
        match s {
            "ATSP" => Ok(Self::Atsp),
            "TSP" => Ok(Self::Tsp),
            other => Err(TsplibError::UnsupportedFormat(format!("TYPE {other}"))),
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Self::Atsp => "ATSP",
            Self::Tsp => "TSP",
        }
    }
}

impl EdgeWeightType {
    fn parse(s: &str) -> Result<Self, TsplibError> {
        match s {
            "EXPLICIT" => Ok(Self::Explicit),
            "EUC_2D" => Ok(Self::Euc2d),
            "CEIL_2D" => Ok(Self::Ceil2d),
            "GEO" => Ok(Self::Geo),
            "ATT" => Ok(Self::Att),
            other => Err(TsplibError::UnsupportedFormat(format!(
                "EDGE_WEIGHT_TYPE {other}"
            ))),
        }
    }
}

impl EdgeWeightFormat {
    fn parse(s: &str) -> Result<Self, TsplibError> {
        match s {
            "FULL_MATRIX" => Ok(Self::FullMatrix),
            "UPPER_ROW" => Ok(Self::UpperRow),
            "LOWER_ROW" => Ok(Self::LowerRow),
            "UPPER_DIAG_ROW" => Ok(Self::UpperDiagRow),
            "LOWER_DIAG_ROW" => Ok(Self::LowerDiagRow),
            other => Err(TsplibError::UnsupportedFormat(format!(
                "EDGE_WEIGHT_FORMAT {other}"
            ))),
        }
    }

    fn entry_count(self, n: usize) -> usize {
        match self {
            Self::FullMatrix => n * n,
            Self::UpperRow | Self::LowerRow => n * (n - 1) / 2,
            Self::UpperDiagRow | Self::LowerDiagRow => n * (n + 1) / 2,
        }
    }
}

/// Header keywords of a TSPLIB file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsplibHeader {
    pub name: String,
    pub problem_type: ProblemType,
    pub dimension: usize,
    pub edge_weight_type: EdgeWeightType,
    pub edge_weight_format: Option<EdgeWeightFormat>,
    pub comment: Option<String>,
}

impl fmt::Display for TsplibHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}, N={})",
            self.name,
            self.problem_type.keyword(),
            self.dimension
        )
    }
}

#[derive(Default)]
struct RawHeader {
    name: Option<String>,
    problem_type: Option<String>,
    dimension: Option<String>,
    edge_weight_type: Option<String>,
    edge_weight_format: Option<String>,
    comment: Option<String>,
}

impl RawHeader {
    fn set(&mut self, key: &str, value: &str) -> Result<(), TsplibError> {
        let slot = match key {
            "NAME" => &mut self.name,
            "TYPE" => &mut self.problem_type,
            "DIMENSION" => &mut self.dimension,
            "EDGE_WEIGHT_TYPE" => &mut self.edge_weight_type,
            "EDGE_WEIGHT_FORMAT" => &mut self.edge_weight_format,
            // several COMMENT lines are common and simply concatenate
            "COMMENT" => {
                match &mut self.comment {
                    Some(c) => {
                        c.push(' ');
                        c.push_str(value);
                    }
                    None => self.comment = Some(value.to_string()),
                }
                return Ok(());
            }
            _ => return Ok(()),
        };
        if slot.is_some() {
            return Err(TsplibError::MalformedHeader(format!("duplicate keyword {key}")));
        }
        *slot = Some(value.to_string());
        Ok(())
    }

    fn finish(self) -> Result<TsplibHeader, TsplibError> {
        let missing = |k: &str| TsplibError::MalformedHeader(format!("missing keyword {k}"));
        let name = self.name.ok_or_else(|| missing("NAME"))?;
        let problem_type = ProblemType::parse(&self.problem_type.ok_or_else(|| missing("TYPE"))?)?;
        let dim_text = self.dimension.ok_or_else(|| missing("DIMENSION"))?;
        let dimension: usize = dim_text
            .parse()
            .map_err(|_| TsplibError::MalformedHeader(format!("DIMENSION `{dim_text}`")))?;
        if dimension < 2 {
            return Err(TsplibError::MalformedHeader(format!(
                "DIMENSION must be at least 2, got {dimension}"
            )));
        }
        let edge_weight_type = EdgeWeightType::parse(
            &self
                .edge_weight_type
                .ok_or_else(|| missing("EDGE_WEIGHT_TYPE"))?,
        )?;
        let edge_weight_format = self
            .edge_weight_format
            .as_deref()
            .map(EdgeWeightFormat::parse)
            .transpose()?;
        match (problem_type, edge_weight_type, edge_weight_format) {
            (ProblemType::Atsp, EdgeWeightType::Explicit, Some(EdgeWeightFormat::FullMatrix)) => {}
            (ProblemType::Atsp, _, _) => {
                return Err(TsplibError::UnsupportedFormat(
                    "ATSP files must be EXPLICIT with FULL_MATRIX".into(),
                ))
            }
            (ProblemType::Tsp, EdgeWeightType::Explicit, None) => return Err(missing("EDGE_WEIGHT_FORMAT")),
            _ => {}
        }
        Ok(TsplibHeader {
            name,
            problem_type,
            dimension,
            edge_weight_type,
            edge_weight_format,
            comment: self.comment,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    EdgeWeights,
    NodeCoords,
    Ignored,
}

fn section_keyword(line: &str) -> Option<Section> {
    let word = line.trim_end_matches(':').trim();
    match word {
        "EDGE_WEIGHT_SECTION" => Some(Section::EdgeWeights),
        "NODE_COORD_SECTION" => Some(Section::NodeCoords),
        "DISPLAY_DATA_SECTION" | "FIXED_EDGES_SECTION" | "TOUR_SECTION" | "DEMAND_SECTION"
        | "DEPOT_SECTION" => Some(Section::Ignored),
        _ => None,
    }
}

fn starts_keyword(line: &str) -> bool {
    line.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
}

/// Parses TSPLIB text into an instance.
pub fn parse_instance(text: &str) -> Result<AtspInstance, TsplibError> {
    let mut raw = RawHeader::default();
    let mut header: Option<TsplibHeader> = None;
    let mut weights: Option<(Vec<i64>, bool)> = None;
    let mut coords: Option<(Vec<(f64, f64)>, bool)> = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some((lineno, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if let Some(section) = section_keyword(line) {
            if header.is_none() {
                header = Some(std::mem::take(&mut raw).finish()?);
            }
            let mut tokens: Vec<(usize, String)> = Vec::new();
            let mut terminated = false;
            while let Some((_, next)) = lines.peek() {
                let next = next.trim();
                if starts_keyword(next) {
                    terminated = true;
                    break;
                }
                let (ln, next) = lines.next().unwrap();
                tokens.extend(next.split_whitespace().map(|t| (ln + 1, t.to_string())));
            }
            match section {
                Section::EdgeWeights => weights = Some((parse_ints(&tokens)?, terminated)),
                Section::NodeCoords => coords = Some((parse_coords(&tokens)?, terminated)),
                Section::Ignored => {}
            }
            continue;
        }
        if header.is_some() {
            return Err(TsplibError::MalformedHeader(format!(
                "line {}: keyword after data section: {line}",
                lineno + 1
            )));
        }
        let (key, value) = line.split_once(':').ok_or_else(|| {
            TsplibError::MalformedHeader(format!("line {}: expected `KEY: value`", lineno + 1))
        })?;
        raw.set(key.trim(), value.trim())?;
    }

    let header = match header {
        Some(h) => h,
        None => {
            raw.finish()?;
            return Err(TsplibError::TruncatedData("no data section".into()));
        }
    };
    let n = header.dimension;
    let costs = match header.edge_weight_type {
        EdgeWeightType::Explicit => {
            let format = header.edge_weight_format.expect("checked in finish");
            let (values, terminated) = weights
                .ok_or_else(|| TsplibError::TruncatedData("missing EDGE_WEIGHT_SECTION".into()))?;
            let expected = format.entry_count(n);
            if values.len() < expected && !terminated {
                return Err(TsplibError::TruncatedData(format!(
                    "stream ended after {} of {expected} edge weights",
                    values.len()
                )));
            }
            if values.len() != expected {
                return Err(TsplibError::DimensionMismatch {
                    expected,
                    found: values.len(),
                });
            }
            expand_explicit(format, n, &values)
        }
        kind => {
            let (points, _) = coords
                .ok_or_else(|| TsplibError::TruncatedData("missing NODE_COORD_SECTION".into()))?;
            if points.len() < n {
                return Err(TsplibError::TruncatedData(format!(
                    "{} of {n} node coordinates",
                    points.len()
                )));
            }
            if points.len() > n {
                return Err(TsplibError::DimensionMismatch {
                    expected: n,
                    found: points.len(),
                });
            }
            coordinate_matrix(kind, &points)
        }
    };
    Ok(AtspInstance::new(header, costs)?)
}

/// Reads and parses a TSPLIB file from disk.
pub fn read_instance(path: impl AsRef<Path>) -> Result<AtspInstance, TsplibError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TsplibError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

fn parse_ints(tokens: &[(usize, String)]) -> Result<Vec<i64>, TsplibError> {
    tokens
        .iter()
        .map(|(line, t)| {
            t.parse::<i64>().or_else(|_| {
                // a few files write integral weights as `12.0`
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0)
                    .map(|v| v as i64)
                    .ok_or_else(|| TsplibError::InvalidNumber {
                        line: *line,
                        token: t.clone(),
                    })
            })
        })
        .collect()
}

fn parse_coords(tokens: &[(usize, String)]) -> Result<Vec<(f64, f64)>, TsplibError> {
    if !tokens.len().is_multiple_of(3) {
        return Err(TsplibError::TruncatedData(
            "NODE_COORD_SECTION rows must hold `id x y`".into(),
        ));
    }
    let num = |(line, t): &(usize, String)| {
        t.parse::<f64>().map_err(|_| TsplibError::InvalidNumber {
            line: *line,
            token: t.clone(),
        })
    };
    tokens
        .chunks(3)
        .map(|row| Ok((num(&row[1])?, num(&row[2])?)))
        .collect()
}

fn expand_explicit(format: EdgeWeightFormat, n: usize, values: &[i64]) -> Vec<i64> {
    if format == EdgeWeightFormat::FullMatrix {
        return values.to_vec();
    }
    let mut m = vec![0i64; n * n];
    let mut it = values.iter().copied();
    let mut put = |i: usize, j: usize, v: i64| {
        m[i * n + j] = v;
        m[j * n + i] = v;
    };
    for i in 0..n {
        let cols: Box<dyn Iterator<Item = usize>> = match format {
            EdgeWeightFormat::UpperRow => Box::new((i + 1)..n),
            EdgeWeightFormat::UpperDiagRow => Box::new(i..n),
            EdgeWeightFormat::LowerRow => Box::new(0..i),
            EdgeWeightFormat::LowerDiagRow => Box::new(0..=i),
            EdgeWeightFormat::FullMatrix => unreachable!(),
        };
        for j in cols {
            put(i, j, it.next().expect("entry count checked"));
        }
    }
    m
}

fn nint(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn geo_radians(x: f64) -> f64 {
    // the truncated constant of the GEO distance definition
    #[allow(clippy::approx_constant)]
    const PI: f64 = 3.141592;
    let deg = x.trunc();
    let min = x - deg;
    PI * (deg + 5.0 * min / 3.0) / 180.0
}

fn coordinate_matrix(kind: EdgeWeightType, points: &[(f64, f64)]) -> Vec<i64> {
    let n = points.len();
    let mut m = vec![0i64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = coordinate_distance(kind, points[i], points[j]);
            m[i * n + j] = d;
            m[j * n + i] = d;
        }
    }
    m
}

fn coordinate_distance(kind: EdgeWeightType, a: (f64, f64), b: (f64, f64)) -> i64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    match kind {
        EdgeWeightType::Euc2d => nint((dx * dx + dy * dy).sqrt()),
        EdgeWeightType::Ceil2d => (dx * dx + dy * dy).sqrt().ceil() as i64,
        EdgeWeightType::Att => {
            let r = ((dx * dx + dy * dy) / 10.0).sqrt();
            let t = nint(r);
            if (t as f64) < r {
                t + 1
            } else {
                t
            }
        }
        EdgeWeightType::Geo => {
            const RRR: f64 = 6378.388;
            let (lat_a, lon_a) = (geo_radians(a.0), geo_radians(a.1));
            let (lat_b, lon_b) = (geo_radians(b.0), geo_radians(b.1));
            let q1 = (lon_a - lon_b).cos();
            let q2 = (lat_a - lat_b).cos();
            let q3 = (lat_a + lat_b).cos();
            (RRR * (0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3)).acos() + 1.0) as i64
        }
        EdgeWeightType::Explicit => unreachable!("explicit weights have no coordinates"),
    }
}

/// Emits the instance as an `ATSP` / `EXPLICIT` / `FULL_MATRIX` file.
pub fn write_instance(instance: &AtspInstance) -> String {
    use std::fmt::Write;

    let n = instance.dimension();
    let mut out = String::new();
    let header = instance.header();
    writeln!(out, "NAME: {}", header.name).unwrap();
    writeln!(out, "TYPE: ATSP").unwrap();
    if let Some(c) = &header.comment {
        writeln!(out, "COMMENT: {c}").unwrap();
    }
    writeln!(out, "DIMENSION: {n}").unwrap();
    writeln!(out, "EDGE_WEIGHT_TYPE: EXPLICIT").unwrap();
    writeln!(out, "EDGE_WEIGHT_FORMAT: FULL_MATRIX").unwrap();
    writeln!(out, "EDGE_WEIGHT_SECTION").unwrap();
    for row in instance.raw_matrix().chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    writeln!(out, "EOF").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "NAME: toy\nTYPE: ATSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: EXPLICIT\n\
                       EDGE_WEIGHT_FORMAT: FULL_MATRIX\nEDGE_WEIGHT_SECTION\n0 5\n7 0\nEOF\n";

    #[test]
    fn two_node_full_matrix() {
        let inst = parse_instance(TOY).unwrap();
        assert_eq!(inst.dimension(), 2);
        assert_eq!(inst.cost(0, 1), 5);
        assert_eq!(inst.cost(1, 0), 7);
    }

    #[test]
    fn toy_round_trip() {
        let inst = parse_instance(TOY).unwrap();
        let again = parse_instance(&write_instance(&inst)).unwrap();
        assert_eq!(again.raw_matrix(), inst.raw_matrix());
    }

    #[test]
    fn colon_spacing_variants() {
        let text = TOY.replace("DIMENSION: 2", "DIMENSION : 2").replace("NAME: toy", "NAME :toy");
        let inst = parse_instance(&text).unwrap();
        assert_eq!(inst.name(), "toy");
        assert_eq!(inst.dimension(), 2);
    }

    #[test]
    fn end_of_stream_terminates_like_eof() {
        let text = TOY.replace("EOF\n", "");
        assert_eq!(parse_instance(&text).unwrap().cost(1, 0), 7);
    }

    #[test]
    fn duplicate_and_missing_keywords() {
        let dup = TOY.replace("DIMENSION: 2\n", "DIMENSION: 2\nDIMENSION: 2\n");
        assert!(matches!(parse_instance(&dup), Err(TsplibError::MalformedHeader(_))));
        let missing = TOY.replace("DIMENSION: 2\n", "");
        assert!(matches!(parse_instance(&missing), Err(TsplibError::MalformedHeader(_))));
    }

    #[test]
    fn entry_count_mismatch() {
        let extra = TOY.replace("7 0\n", "7 0 3\n");
        assert!(matches!(
            parse_instance(&extra),
            Err(TsplibError::DimensionMismatch { expected: 4, found: 5 })
        ));
        let short = TOY.replace("7 0\n", "7\n");
        assert!(matches!(
            parse_instance(&short),
            Err(TsplibError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn truncated_stream() {
        let text = TOY.replace("7 0\nEOF\n", "7");
        assert!(matches!(parse_instance(&text), Err(TsplibError::TruncatedData(_))));
        let no_section = "NAME: t\nTYPE: ATSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: EXPLICIT\n\
                          EDGE_WEIGHT_FORMAT: FULL_MATRIX\n";
        assert!(matches!(parse_instance(no_section), Err(TsplibError::TruncatedData(_))));
    }

    #[test]
    fn unsupported_formats() {
        let bad = TOY.replace("FULL_MATRIX", "UPPER_COL");
        assert!(matches!(parse_instance(&bad), Err(TsplibError::UnsupportedFormat(_))));
        let atsp_lower = TOY.replace("FULL_MATRIX", "LOWER_DIAG_ROW");
        assert!(matches!(parse_instance(&atsp_lower), Err(TsplibError::UnsupportedFormat(_))));
        let hcp = TOY.replace("TYPE: ATSP", "TYPE: HCP");
        assert!(matches!(parse_instance(&hcp), Err(TsplibError::UnsupportedFormat(_))));
    }

    #[test]
    fn euclidean_rounding() {
        let text = "NAME: e\nTYPE: TSP\nDIMENSION: 3\nEDGE_WEIGHT_TYPE: EUC_2D\n\
                    NODE_COORD_SECTION\n1 0 0\n2 3 4\n3 1 1\nEOF\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.cost(0, 1), 5);
        // sqrt(2) rounds to 1, sqrt(13) = 3.61 rounds to 4
        assert_eq!(inst.cost(0, 2), 1);
        assert_eq!(inst.cost(1, 2), 4);
        assert_eq!(inst.cost(2, 1), 4);

        let ceil = text.replace("EUC_2D", "CEIL_2D");
        let inst = parse_instance(&ceil).unwrap();
        assert_eq!(inst.cost(0, 2), 2);
    }

    #[test]
    fn att_pseudo_euclidean() {
        // r = sqrt(100/10) = 3.162, nint = 3 < r so the distance is 4
        let text = "NAME: a\nTYPE: TSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: ATT\n\
                    NODE_COORD_SECTION\n1 0 0\n2 6 8\nEOF\n";
        assert_eq!(parse_instance(text).unwrap().cost(0, 1), 4);
    }

    #[test]
    fn upper_row_expands_symmetrically() {
        let text = "NAME: u\nTYPE: TSP\nDIMENSION: 3\nEDGE_WEIGHT_TYPE: EXPLICIT\n\
                    EDGE_WEIGHT_FORMAT: UPPER_ROW\nEDGE_WEIGHT_SECTION\n1 2\n3\nEOF\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.cost(0, 1), 1);
        assert_eq!(inst.cost(2, 0), 2);
        assert_eq!(inst.cost(2, 1), 3);
    }
}

//! Training data: feature vectors in the unit cube, a real response, and an
//! optional binary treatment indicator.
//!
//! The CSV layout is a header `x1,...,xd,y[,w]` followed by one row per
//! sample. The feature dimension is taken from the header.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{GroveError, Result, RowProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub w: Option<bool>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64, w: Option<bool>) -> Self {
        Sample { x, y, w }
    }

    /// Treatment indicator as 0/1. Panics if the sample has no treatment.
    #[inline]
    pub fn treated(&self) -> bool {
        self.w.expect("sample carries no treatment indicator")
    }
}

/// A validated, immutable collection of samples sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    d: usize,
    has_treatment: bool,
}

impl Dataset {
    /// Validates and wraps `samples`. Row numbers in errors are 1-based.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or(GroveError::EmptyDataset)?;
        let d = first.x.len();
        if d == 0 {
            return Err(GroveError::Header("no feature columns".into()));
        }
        let has_treatment = first.w.is_some();
        for (i, s) in samples.iter().enumerate() {
            let row = i + 1;
            if s.x.len() != d {
                return Err(GroveError::row(
                    row,
                    RowProblem::Malformed(format!("expected {d} features, found {}", s.x.len())),
                ));
            }
            check_features(&s.x, row)?;
            if !s.y.is_finite() {
                return Err(GroveError::row(row, RowProblem::Malformed("non-finite response".into())));
            }
            if has_treatment != s.w.is_some() {
                return Err(GroveError::row(row, RowProblem::MissingTreatment));
            }
        }
        Ok(Dataset { samples, d, has_treatment })
    }

    pub fn load(path: impl AsRef<Path>, expect_treatment: bool) -> Result<Self> {
        load_dataset(path, expect_treatment)
    }

    pub fn from_reader<R: Read>(reader: R, expect_treatment: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let layout = Layout::parse(&header, true)?;
        if expect_treatment && !layout.has_w {
            return Err(GroveError::Header("treatment column `w` expected".into()));
        }
        let mut samples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record?;
            if record.len() != layout.width() {
                return Err(GroveError::row(
                    row,
                    RowProblem::Malformed(format!("expected {} fields, found {}", layout.width(), record.len())),
                ));
            }
            let x = (0..layout.d)
                .map(|j| parse_field(&record[j], row))
                .collect::<Result<Vec<_>>>()?;
            check_features(&x, row)?;
            let y = parse_field(&record[layout.d], row)?;
            let w = if layout.has_w {
                let raw = &record[layout.d + 1];
                if raw.is_empty() {
                    return Err(GroveError::row(row, RowProblem::MissingTreatment));
                }
                let v = parse_field(raw, row)?;
                if v == 0.0 {
                    Some(false)
                } else if v == 1.0 {
                    Some(true)
                } else {
                    return Err(GroveError::row(row, RowProblem::TreatmentNotBinary));
                }
            } else {
                None
            };
            samples.push(Sample { x, y, w });
        }
        Dataset::new(samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        if self.has_treatment {
            header.push("w".into());
        }
        wtr.write_record(&header)?;
        let mut fields = Vec::with_capacity(header.len());
        for s in &self.samples {
            fields.clear();
            fields.extend(s.x.iter().map(|v| v.to_string()));
            fields.push(s.y.to_string());
            if let Some(w) = s.w {
                fields.push(if w { "1".into() } else { "0".into() });
            }
            wtr.write_record(&fields)?;
        }
        wtr.flush()?;
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_treatment(&self) -> bool {
        self.has_treatment
    }

    #[inline]
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn count_treated(&self) -> usize {
        self.samples.iter().filter(|s| s.w == Some(true)).count()
    }

    /// Same data with every response replaced by `f(index, y)`.
    pub fn map_responses(&self, mut f: impl FnMut(usize, f64) -> f64) -> Dataset {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Sample { x: s.x.clone(), y: f(i, s.y), w: s.w })
            .collect();
        Dataset { samples, d: self.d, has_treatment: self.has_treatment }
    }
}

/// Reads and validates a dataset CSV.
pub fn load_dataset(path: impl AsRef<Path>, expect_treatment: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    Dataset::from_reader(std::io::BufReader::new(file), expect_treatment)
}

/// Reads query points from a CSV whose header starts with `x1..xd`.
/// Trailing `y`/`w` columns, if present, are ignored.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)?;
    points_from_reader(std::io::BufReader::new(file))
}

pub fn points_from_reader<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let layout = Layout::parse(&header, false)?;
    let mut points = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() < layout.d {
            return Err(GroveError::row(row, RowProblem::Malformed("too few fields".into())));
        }
        let x = (0..layout.d)
            .map(|j| parse_field(&record[j], row))
            .collect::<Result<Vec<_>>>()?;
        check_features(&x, row)?;
        points.push(x);
    }
    Ok(points)
}

struct Layout {
    d: usize,
    has_y: bool,
    has_w: bool,
}

impl Layout {
    fn width(&self) -> usize {
        self.d + usize::from(self.has_y) + usize::from(self.has_w)
    }

    fn parse(header: &csv::StringRecord, require_y: bool) -> Result<Self> {
        let mut d = 0;
        for name in header.iter() {
            if name == format!("x{}", d + 1) {
                d += 1;
            } else {
                break;
            }
        }
        if d == 0 {
            return Err(GroveError::Header("expected leading columns x1..xd".into()));
        }
        let rest: Vec<&str> = header.iter().skip(d).collect();
        let (has_y, has_w) = match rest.as_slice() {
            [] => (false, false),
            ["y"] => (true, false),
            ["y", "w"] => (true, true),
            other => {
                return Err(GroveError::Header(format!("unexpected trailing columns {other:?}")));
            }
        };
        if require_y && !has_y {
            return Err(GroveError::Header("response column `y` missing".into()));
        }
        Ok(Layout { d, has_y, has_w })
    }
}

fn parse_field(raw: &str, row: usize) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| GroveError::row(row, RowProblem::Malformed(format!("cannot parse `{raw}`"))))
}

fn check_features(x: &[f64], row: usize) -> Result<()> {
    if x.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(GroveError::row(row, RowProblem::FeatureOutOfRange))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, expect_w: bool) -> Result<Dataset> {
        Dataset::from_reader(text.as_bytes(), expect_w)
    }

    #[test]
    fn single_row_with_treatment() {
        let data = parse("x1,y,w\n0.5,1.0,1\n", true).unwrap();
        assert_eq!(data.n(), 1);
        assert_eq!(data.d(), 1);
        assert!(data.has_treatment());
        assert_eq!(data.sample(0).w, Some(true));
    }

    #[test]
    fn feature_out_of_range_names_row() {
        let err = parse("x1,y\n1.5,0.0\n", false).unwrap_err();
        assert_eq!(err.to_string(), "feature out of range, row 1");
    }

    #[test]
    fn nonbinary_treatment_names_row() {
        let err = parse("x1,y,w\n0.5,1.0,2\n", true).unwrap_err();
        assert_eq!(err.to_string(), "treatment not binary, row 1");
    }

    #[test]
    fn missing_treatment_column_when_expected() {
        assert!(matches!(parse("x1,y\n0.5,1.0\n", true), Err(GroveError::Header(_))));
    }

    #[test]
    fn empty_treatment_field() {
        let err = parse("x1,y,w\n0.5,1.0,1\n0.2,0.0,\n", true).unwrap_err();
        assert_eq!(err.to_string(), "missing treatment, row 2");
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse("x1,x2,y\n0.5,1.0\n", false), Err(GroveError::Row { row: 1, .. })));
        assert!(matches!(parse("x1,y\n0.5,1.0\nabc,2\n", false), Err(GroveError::Row { row: 2, .. })));
        assert!(matches!(parse("x1,y\n", false), Err(GroveError::EmptyDataset)));
        assert!(matches!(parse("a,y\n0.1,1\n", false), Err(GroveError::Header(_))));
    }

    #[test]
    fn dimension_inferred_from_header() {
        let data = parse("x1,x2,x3,y\n0,0.5,1,2.5\n", false).unwrap();
        assert_eq!(data.d(), 3);
        assert!(!data.has_treatment());
    }

    #[test]
    fn points_ignore_response_columns() {
        let pts = points_from_reader("x1,x2,y,w\n0.1,0.2,5,1\n".as_bytes()).unwrap();
        assert_eq!(pts, vec![vec![0.1, 0.2]]);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..4, any::<bool>()).prop_flat_map(|(d, treated)| {
            prop::collection::vec(
                (prop::collection::vec(0.0f64..=1.0, d), -1e6f64..1e6, any::<bool>()),
                1..20,
            )
            .prop_map(move |rows| {
                let samples = rows
                    .into_iter()
                    .map(|(x, y, w)| Sample::new(x, y, treated.then_some(w)))
                    .collect();
                Dataset::new(samples).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(data in arb_dataset()) {
            let mut buf = Vec::new();
            data.write_csv(&mut buf).unwrap();
            let back = Dataset::from_reader(buf.as_slice(), data.has_treatment()).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}

//! Posterior dump files: one sample per line, K comma-separated probabilities,
//! plus a trailing integer label when the first line reads `labels=true`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimators::PosteriorBatch;
use crate::math::SIMPLEX_TOL;

/// Rows whose sum is off by more than this are rejected.
pub const DUMP_SUM_TOL: f64 = 1e-3;

const LABELS_HEADER: &str = "labels=true";

/// One parsed dump line.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub probs: Vec<f64>,
    pub label: Option<usize>,
    /// 1-based line number in the source.
    pub line: usize,
}

/// Incremental dump parser, so streams can be consumed without loading them whole.
pub struct DumpReader<R> {
    lines: std::io::Lines<R>,
    source: PathBuf,
    line: usize,
    labels: Option<bool>,
    k: Option<usize>,
}

impl<R: BufRead> DumpReader<R> {
    /// `source` names the input in error messages.
    pub fn new(reader: R, source: impl Into<PathBuf>) -> Self {
        DumpReader { lines: reader.lines(), source: source.into(), line: 0, labels: None, k: None }
    }

    /// Whether rows carry labels; known once the first line has been read.
    pub fn has_labels(&self) -> Option<bool> {
        self.labels
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.source.clone(), line: self.line, message: message.into() }
    }

    fn parse_row(&mut self, text: &str) -> Result<DumpRow> {
        let mut fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let label = if self.labels == Some(true) {
            let raw = fields.pop().unwrap_or_default();
            Some(raw.parse::<usize>().map_err(|_| self.error(format!("bad label {raw:?}")))?)
        } else {
            None
        };
        let mut probs = Vec::with_capacity(fields.len());
        for field in fields {
            let v: f64 = field.parse().map_err(|_| self.error(format!("bad probability {field:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(self.error(format!("probability {v} is not a finite non-negative number")));
            }
            probs.push(v);
        }
        let k = *self.k.get_or_insert(probs.len());
        if probs.len() != k {
            return Err(self.error(format!("expected {k} probabilities, found {}", probs.len())));
        }
        if k < 2 {
            return Err(self.error("need at least 2 classes per row"));
        }
        if let Some(y) = label {
            if y >= k {
                return Err(self.error(format!("label {y} out of range for {k} classes")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DUMP_SUM_TOL {
            return Err(self.error(format!("row sums to {sum}, outside 1 ± {DUMP_SUM_TOL}")));
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            for p in probs.iter_mut() {
                *p /= sum;
            }
        }
        Ok(DumpRow { probs, label, line: self.line })
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<DumpRow>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            if self.labels.is_none() {
                let header = text.replace(' ', "");
                if header.eq_ignore_ascii_case(LABELS_HEADER) {
                    self.labels = Some(true);
                    continue;
                }
                if header.eq_ignore_ascii_case("labels=false") {
                    self.labels = Some(false);
                    continue;
                }
                self.labels = Some(false);
            }
            return Some(self.parse_row(text));
        }
    }
}

/// Reads a whole dump into a batch plus the labels, when present.
pub fn read_posterior_dump<R: BufRead>(
    reader: R,
    source: impl Into<PathBuf>,
) -> Result<(PosteriorBatch, Option<Vec<usize>>)> {
    let source = source.into();
    let mut rows = DumpReader::new(reader, &source);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut k = 0;
    for row in rows.by_ref() {
        let row = row?;
        k = row.probs.len();
        data.extend_from_slice(&row.probs);
        labels.extend(row.label);
    }
    if data.is_empty() {
        return Err(Error::Parse { path: source, line: 0, message: "no samples".into() });
    }
    let batch = PosteriorBatch::from_flat(k, data)?;
    let labels = (rows.has_labels() == Some(true)).then_some(labels);
    Ok((batch, labels))
}

pub fn load_posterior_dump(path: impl AsRef<Path>) -> Result<(PosteriorBatch, Option<Vec<usize>>)> {
    let path = path.as_ref();
    read_posterior_dump(BufReader::new(File::open(path)?), path)
}

/// Writes a dump that [`load_posterior_dump`] reads back value-identically.
pub fn write_dump(path: impl AsRef<Path>, batch: &PosteriorBatch, labels: Option<&[usize]>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dump_to(&mut out, batch, labels)?;
    out.flush()?;
    Ok(())
}

pub fn write_dump_to<W: Write>(out: &mut W, batch: &PosteriorBatch, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        crate::error::check_dim(batch.n(), l.len())?;
        writeln!(out, "{LABELS_HEADER}")?;
    }
    for (i, row) in batch.rows().enumerate() {
        let mut line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        if let Some(l) = labels {
            line.push(',');
            line.push_str(&l[i].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn parse(text: &str) -> Result<(PosteriorBatch, Option<Vec<usize>>)> {
        read_posterior_dump(text.as_bytes(), "mem")
    }

    #[test]
    fn parses_plain_rows() {
        let (b, labels) = parse("0.5,0.5\n1.0,0.0\n").unwrap();
        assert_eq!(b, PosteriorBatch::from_rows(&[[0.5, 0.5], [1.0, 0.0]]).unwrap());
        assert!(labels.is_none());
    }

    #[test]
    fn parses_labels() {
        let (b, labels) = parse("labels=true\n0.2, 0.8, 1\n0.9,0.1,0\n").unwrap();
        assert_eq!(b.n(), 2);
        assert_eq!(labels, Some(vec![1, 0]));
    }

    #[test]
    fn rejects_bad_sums_with_line_number() {
        match parse("0.5,0.5\n0.5,0.6\n").unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("sums"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn renormalizes_small_drift() {
        let (b, _) = parse("0.3335,0.3333,0.3333\n").unwrap();
        let s: f64 = b.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!((b.row(0)[0] - 0.3335 / 1.0001).abs() < 1e-12);
    }

    #[test]
    fn malformed_rows() {
        for (text, line) in [
            ("0.5,0.5\n0.5,x\n", 2),
            ("0.5,0.5\n0.2,0.3,0.5\n", 2),
            ("labels=true\n0.5,0.5,2\n", 2),
            ("labels=true\n0.5,0.5,a\n", 2),
            ("-0.5,1.5\n", 1),
            ("1.0\n", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(parse("").is_err());
        assert!(parse("labels=true\n").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.csv");
        let batch = PosteriorBatch::from_rows(&[[0.1, 0.2, 0.7], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap();
        write_dump(&path, &batch, Some(&[2, 0])).unwrap();
        let (b, l) = load_posterior_dump(&path).unwrap();
        assert_eq!(b, batch);
        assert_eq!(l, Some(vec![2, 0]));
        assert!(load_posterior_dump(dir.path().join("missing")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_value_identical(seed in any::<u64>(), k in 2usize..12, n in 1usize..40, with_labels: bool) {
            let mut rng = rng_from_seed(seed);
            let mut rows = Vec::new();
            for _ in 0..n {
                let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                let t: f64 = raw.iter().sum();
                rows.push(raw.iter().map(|x| x / t).collect::<Vec<_>>());
            }
            let batch = PosteriorBatch::from_rows(&rows).unwrap();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let labels = with_labels.then_some(labels);
            let mut buf = Vec::new();
            write_dump_to(&mut buf, &batch, labels.as_deref()).unwrap();
            let (b, l) = read_posterior_dump(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(b, batch);
            prop_assert_eq!(l, labels);
        }
    }
}

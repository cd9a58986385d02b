//! Test-set evaluation: accuracy, confusion matrices and their renderings.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::{EpochRecord, ExampleSource, Network};

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_pairs(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(k);
        for (t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k || predicted >= self.k {
            return Err(Error::Argument(format!(
                "label pair ({truth}, {predicted}) out of range for {} classes",
                self.k
            )));
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.k..(truth + 1) * self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Trace over total; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Per-class recall, `None` for classes absent from the test set.
    pub fn recall(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|i| {
                let n: u64 = self.row(i).iter().sum();
                (n > 0).then(|| self.get(i, i) as f64 / n as f64)
            })
            .collect()
    }

    /// CSV with a header row and first column of class names.
    pub fn write_csv<W: Write>(&self, class_names: &[String], w: W) -> Result<()> {
        self.check_names(class_names)?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(class_names.iter().cloned());
        out.write_record(&header)?;
        for (i, name) in class_names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.row(i).iter().map(u64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`ConfusionMatrix::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<(Self, Vec<String>)> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Format("empty confusion CSV".into()))??;
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let k = names.len();
        let mut cm = ConfusionMatrix::new(k);
        for (i, name) in names.iter().enumerate() {
            let rec = records
                .next()
                .ok_or_else(|| Error::Format(format!("confusion CSV has {i} of {k} rows")))??;
            if rec.len() != k + 1 || rec.get(0) != Some(name.as_str()) {
                return Err(Error::Format(format!("confusion CSV row {i} malformed")));
            }
            for j in 0..k {
                cm.counts[i * k + j] = rec[j + 1]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad count {:?}", &rec[j + 1])))?;
            }
        }
        if records.next().is_some() {
            return Err(Error::Format("confusion CSV has extra rows".into()));
        }
        Ok((cm, names))
    }

    /// Binary PGM heatmap, one pixel per cell. Each row is scaled by its own
    /// maximum so classes with few test examples stay visible.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.k, self.k).into_bytes();
        for i in 0..self.k {
            let row = self.row(i);
            let max = row.iter().copied().max().unwrap_or(0);
            out.extend(row.iter().map(|&c| {
                if max == 0 {
                    0
                } else {
                    ((c as f64 / max as f64) * 255.0).round() as u8
                }
            }));
        }
        out
    }

    fn check_names(&self, class_names: &[String]) -> Result<()> {
        if class_names.len() != self.k {
            return Err(Error::Argument(format!(
                "{} class names for a {}-class matrix",
                class_names.len(),
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Eval-mode predictions for every example in `source`.
pub fn evaluate<S: ExampleSource + ?Sized>(net: &Network<f32>, source: &S) -> Result<Evaluation> {
    if source.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty set".into()));
    }
    let mut cm = ConfusionMatrix::new(net.spec().n_classes()?);
    for i in 0..source.len() {
        let ex = source.get(i)?;
        cm.record(ex.label, net.predict(&ex.input)?)?;
    }
    Ok(Evaluation {
        accuracy: cm.accuracy(),
        confusion: cm,
    })
}

pub const CURVE_HEADER: [&str; 3] = ["epoch", "train_error", "val_error"];

/// Learning curve as CSV: `epoch,train_error,val_error`.
pub fn write_curve<W: Write>(curve: &[EpochRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVE_HEADER)?;
    for r in curve {
        out.write_record([r.epoch.to_string(), r.train_error.to_string(), r.val_error.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `(epoch, train_error, val_error)` triples.
pub fn read_curve<R: Read>(r: R) -> Result<Vec<(usize, f64, f64)>> {
    let mut reader = csv::Reader::from_reader(r);
    if reader.headers()?.iter().ne(CURVE_HEADER.iter().copied()) {
        return Err(Error::Format("unexpected curve header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let bad = || Error::Format(format!("bad curve row {rec:?}"));
        rows.push((
            rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
        ));
    }
    Ok(rows)
}

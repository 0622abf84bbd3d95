//! Series CSV ingestion and the plot-ready CSV/JSON writers.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nsquant::inference::{IqrBand, PointwiseBand};
use nsquant::{QuantileCurve, UnitTimeSeries};
use serde::Serialize;

/// Rows of `(label, value)` in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `None` for single-column input.
    pub labels: Option<Vec<String>>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn unlabeled(values: Vec<f64>) -> Self {
        Self { labels: None, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_series(&self) -> Result<UnitTimeSeries> {
        Ok(UnitTimeSeries::new(self.values.clone())?)
    }
}

/// 17 significant digits: enough for `parse(format(x)) == x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Parses `value` or `label,value` rows. A first row whose value field is not
/// numeric is taken as a header; anywhere else it is an error.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.with_context(|| format!("row {row}: malformed CSV"))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let (label, field) = match rec.len() {
            1 => (None, &rec[0]),
            2 => (Some(&rec[0]), &rec[1]),
            w => bail!("row {row}: expected 1 or 2 columns, found {w}"),
        };
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => {}
            Ok(_) => bail!("row {row}: non-finite value '{field}'"),
            Err(_) if row == 1 => {
                width = Some(rec.len());
                continue;
            }
            Err(_) => bail!("row {row}: non-numeric value '{field}'"),
        }
        match width {
            Some(w) if w != rec.len() => bail!("row {row}: expected {w} columns, found {}", rec.len()),
            _ => width = Some(rec.len()),
        }
        if let Some(l) = label {
            labels.push(l.to_string());
        }
        values.push(field.parse::<f64>().expect("checked"));
    }
    if values.is_empty() {
        bail!("input contains no data rows");
    }
    Ok(Dataset { labels: (width == Some(2)).then_some(labels), values })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_dataset(file).with_context(|| format!("while reading {}", path.display()))
}

pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    match &data.labels {
        Some(labels) => {
            out.write_record(["label", "value"])?;
            for (l, v) in labels.iter().zip(&data.values) {
                out.write_record([l.as_str(), &fmt_f64(*v)])?;
            }
        }
        None => {
            out.write_record(["value"])?;
            for v in &data.values {
                out.write_record([fmt_f64(*v)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `t,value,slope,stage,alpha,bandwidth` rows of a curve.
pub fn write_curve<W: Write>(w: W, curve: &QuantileCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "value", "slope", "stage", "alpha", "bandwidth"])?;
    for (k, &t) in curve.grid.points().iter().enumerate() {
        let slope = curve.slopes.as_ref().and_then(|s| s[k]);
        out.write_record([
            fmt_f64(t),
            fmt_opt(curve.values[k]),
            fmt_opt(slope),
            curve.stage.as_str().to_string(),
            fmt_f64(curve.alpha),
            fmt_f64(curve.bandwidth),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `t,center,lower,upper,slope,sigma_sq,density,flags` rows of a band.
pub fn write_band<W: Write>(w: W, band: &PointwiseBand) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "center", "lower", "upper", "slope", "sigma_sq", "density", "flags"])?;
    for (k, &t) in band.center.grid.points().iter().enumerate() {
        out.write_record([
            fmt_f64(t),
            fmt_opt(band.center.values[k]),
            fmt_opt(band.lower[k]),
            fmt_opt(band.upper[k]),
            fmt_opt(band.slopes[k]),
            fmt_opt(band.plugins.sigma_sq[k]),
            fmt_opt(band.plugins.density[k]),
            band.flags[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_iqr_band<W: Write>(w: W, band: &IqrBand) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "center", "lower", "upper", "sigma_sq", "density_lower", "density_upper", "flags"])?;
    for (k, &t) in band.center.grid.points().iter().enumerate() {
        out.write_record([
            fmt_f64(t),
            fmt_opt(band.center.values[k]),
            fmt_opt(band.lower[k]),
            fmt_opt(band.upper[k]),
            fmt_opt(band.sigma_sq[k]),
            fmt_opt(band.density_lower[k]),
            fmt_opt(band.density_upper[k]),
            band.flags[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Opens `path` for buffered writing, creating parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_labels() {
        let d = parse_dataset("month,anomaly\n1856-01,-0.5\n1856-02, 0.25\n".as_bytes()).unwrap();
        assert_eq!(d.labels.as_deref(), Some(&["1856-01".to_string(), "1856-02".to_string()][..]));
        assert_eq!(d.values, vec![-0.5, 0.25]);
        let d = parse_dataset("1.5\n2\n\n3\n".as_bytes()).unwrap();
        assert_eq!(d.labels, None);
        assert_eq!(d.values, vec![1.5, 2.0, 3.0]);
    }

    #[test]
    fn bad_rows_are_located() {
        let err = parse_dataset("value\n1\n2\nabc\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
        let err = parse_dataset("1\nNaN\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(parse_dataset("".as_bytes()).is_err());
        assert!(parse_dataset("value\n".as_bytes()).is_err());
        assert!(parse_dataset("a,1\n2\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let values = vec![0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0, 2.0f64.sqrt()];
        for labels in [None, Some((0..7).map(|i| format!("r{i}")).collect())] {
            let d = Dataset { labels, values: values.clone() };
            let mut buf = Vec::new();
            write_dataset(&mut buf, &d).unwrap();
            let back = parse_dataset(buf.as_slice()).unwrap();
            assert_eq!(back.labels, d.labels);
            for (a, b) in back.values.iter().zip(&values) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

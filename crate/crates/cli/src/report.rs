//! Result tables and their CSV, gnuplot and metadata outputs.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use qkd_core::timing::{TimingHistogram, TradeoffPoint};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub code_version: String,
}

impl Metadata {
    pub fn new(command: &str, config_digest: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    columns: Vec<(String, Vec<f64>)>,
    pub metadata: Option<Metadata>,
}

impl ResultsTable {
    pub fn new(names: &[&str]) -> Self {
        Self {
            columns: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
            metadata: None,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        for ((_, col), &v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, c)| c.len())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|(_, c)| c[i]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let wrap = |e: csv::Error| CliError::Numeric(format!("csv: {e}"));
        w.write_record(self.names()).map_err(wrap)?;
        for i in 0..self.n_rows() {
            w.write_record(self.row(i).iter().map(|v| format_value(*v))).map_err(wrap)?;
        }
        w.flush().map_err(|e| CliError::io("<csv>", e))
    }

    pub fn read_csv<R: Read>(input: R) -> CliResult<Self> {
        let mut r = csv::Reader::from_reader(input);
        let bad = |e: csv::Error| CliError::Validation(format!("csv: {e}"));
        let headers: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let names: Vec<&str> = headers.iter().map(String::as_str).collect();
        let mut table = Self::new(&names);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(bad)?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        CliError::Validation(format!("csv row {}: {s:?} is not a number", line + 2))
                    })
                })
                .collect::<CliResult<Vec<f64>>>()?;
            if row.len() != names.len() {
                return Err(CliError::Validation(format!("csv row {}: wrong field count", line + 2)));
            }
            table.push_row(&row);
        }
        Ok(table)
    }

    /// Whitespace-separated columns with a `#` header line, for gnuplot.
    pub fn write_dat<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {}", self.names().join(" "))?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = self.row(i).iter().map(|v| format_value(*v)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Writes `<path>` as CSV, plus `<path>.meta.json` when metadata is set
    /// and `<path minus extension>.dat` when asked.
    pub fn save(&self, path: &Path, dat: bool) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| match e {
            CliError::Io { source, .. } => CliError::io(path, source),
            other => other,
        })?;
        if let Some(meta) = &self.metadata {
            let meta_path = sidecar(path, "meta.json");
            let json = serde_json::to_string_pretty(meta).expect("metadata serialises");
            std::fs::write(&meta_path, json + "\n").map_err(|e| CliError::io(&meta_path, e))?;
        }
        if dat {
            let dat_path = path.with_extension("dat");
            let file = std::fs::File::create(&dat_path).map_err(|e| CliError::io(&dat_path, e))?;
            self.write_dat(std::io::BufWriter::new(file))
                .map_err(|e| CliError::io(&dat_path, e))?;
        }
        Ok(())
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

/// Shortest representation that parses back to the same value.
fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Window width against sifted rate and QBER.
pub fn tradeoff_table(points: &[TradeoffPoint]) -> ResultsTable {
    let mut t = ResultsTable::new(&["window_ns", "sifted_rate_hz", "qber"]);
    for p in points {
        t.push_row(&[p.width * 1e9, p.sifted_rate, p.qber]);
    }
    t
}

/// Histogram as `time_ns,counts` (bin centres).
pub fn histogram_table(h: &TimingHistogram) -> ResultsTable {
    let mut t = ResultsTable::new(&["time_ns", "counts"]);
    for (i, &c) in h.counts.iter().enumerate() {
        t.push_row(&[h.bin_center(i) * 1e9, c as f64]);
    }
    t
}

/// Inverse of [`histogram_table`]; bins must be evenly spaced.
pub fn histogram_from_table(t: &ResultsTable) -> CliResult<TimingHistogram> {
    let (Some(times), Some(counts)) = (t.column("time_ns"), t.column("counts")) else {
        return Err(CliError::Validation(
            "histogram csv needs columns time_ns,counts".into(),
        ));
    };
    if times.len() < 2 {
        return Err(CliError::Validation("histogram csv needs at least two bins".into()));
    }
    let width = times[1] - times[0];
    let uneven = times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - width).abs() > 1e-6 * width.abs());
    if !(width > 0.0) || uneven {
        return Err(CliError::Validation("histogram bins must be evenly spaced and increasing".into()));
    }
    let counts = counts
        .iter()
        .map(|&c| {
            if c >= 0.0 && c.fract() == 0.0 {
                Ok(c as u64)
            } else {
                Err(CliError::Validation(format!("histogram count {c} is not a non-negative integer")))
            }
        })
        .collect::<CliResult<Vec<u64>>>()?;
    let width_s = width * 1e-9;
    Ok(TimingHistogram::new(width_s, times[0] * 1e-9 - width_s / 2.0, counts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultsTable {
        let mut t = ResultsTable::new(&["mu", "qber", "rate, \"quoted\""]);
        t.push_row(&[1e-3, 0.123456789012345, 1.0 / 3.0]);
        t.push_row(&[0.1, 0.0, 12345.5]);
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("mu,qber,\"rate, \"\"quoted\"\"\"\n"), "{text}");
        assert!(!text.contains('\r'));
        assert_eq!(ResultsTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn dat_format() {
        let mut t = ResultsTable::new(&["a", "b"]);
        t.push_row(&[1.0, 2.5]);
        let mut buf = Vec::new();
        t.write_dat(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# a b\n1 2.5\n");
    }

    #[test]
    fn histogram_round_trip() {
        let h = TimingHistogram::new(4e-9, -8e-9, vec![1, 5, 0, 7]).unwrap();
        let back = histogram_from_table(&histogram_table(&h)).unwrap();
        assert_eq!(back.counts, h.counts);
        assert!((back.origin - h.origin).abs() < 1e-18);
        assert!((back.bin_width - h.bin_width).abs() < 1e-20);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = sample().save(Path::new("/nonexistent/dir/out.csv"), false).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
    }
}

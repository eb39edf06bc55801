//! Multivariate time-series tables: CSV ingestion, uniform resampling,
//! standardization, and timestep restructuring.
//!
//! Missing cells are represented as `f64::NAN`; a cell is missing exactly
//! when it carries no (finite or infinite) numeric value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A named, timestamped multivariate series.
///
/// Timestamps are seconds since session start. All columns have the same
/// length as the timestamp vector. After alignment (resampling) the table
/// carries its sample period and timestamps are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    sample_period: Option<f64>,
}

impl TimeSeriesTable {
    /// Build a table from parallel columns. Lengths must agree.
    pub fn new(
        timestamps: Vec<f64>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension {
                what: "column names vs columns".into(),
                expected: names.len(),
                actual: columns.len(),
            });
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != timestamps.len() {
                return Err(Error::Dimension {
                    what: format!("column `{name}` length"),
                    expected: timestamps.len(),
                    actual: col.len(),
                });
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::NonMonotoneTimestamps {
                    row: i + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        Ok(Self {
            timestamps,
            names,
            columns,
            sample_period: None,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.names.len()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sample_period(&self) -> Option<f64> {
        self.sample_period
    }

    pub(crate) fn set_sample_period(&mut self, period: Option<f64>) {
        self.sample_period = period;
    }

    /// Detect an exactly uniform timestamp grid (within 1e-9 of the first
    /// spacing), record it as the sample period, and return it. Used when
    /// re-loading previously resampled tables from CSV.
    pub fn detect_uniform(&mut self) -> Option<f64> {
        if self.timestamps.len() < 2 {
            return None;
        }
        let period = self.timestamps[1] - self.timestamps[0];
        if period <= 0.0 {
            return None;
        }
        let uniform = self
            .timestamps
            .windows(2)
            .all(|w| ((w[1] - w[0]) - period).abs() < 1e-9 * period.max(1.0));
        if uniform {
            self.sample_period = Some(period);
            Some(period)
        } else {
            None
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.column_index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column_at(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(&mut self.columns[i])
    }

    /// True when the cell carries no value.
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col][row].is_nan()
    }

    /// Append a column; length must match.
    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension {
                what: format!("column `{name}` length"),
                expected: self.len(),
                actual: values.len(),
            });
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    /// Sub-table over rows `[start, end)`, keeping all columns.
    pub fn slice_rows(&self, start: usize, end: usize) -> TimeSeriesTable {
        let end = end.min(self.len());
        let start = start.min(end);
        TimeSeriesTable {
            timestamps: self.timestamps[start..end].to_vec(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            sample_period: self.sample_period,
        }
    }
}

/// Declares how a CSV file maps onto a table.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Name of the timestamp column (seconds since session start).
    pub time_column: String,
    /// Value columns to load; `None` loads every non-timestamp column.
    pub columns: Option<Vec<String>>,
}

impl CsvSchema {
    /// Load all columns, with `time` as the timestamp column.
    pub fn all(time: &str) -> Self {
        CsvSchema {
            time_column: time.to_string(),
            columns: None,
        }
    }

    pub fn with_columns(time: &str, columns: &[&str]) -> Self {
        CsvSchema {
            time_column: time.to_string(),
            columns: Some(columns.iter().map(|s| s.to_string()).collect()),
        }
    }
}

fn parse_cell(cell: &str) -> f64 {
    let t = cell.trim();
    if t.is_empty() {
        return f64::NAN;
    }
    t.parse::<f64>().unwrap_or(f64::NAN)
}

/// Load a table from CSV.
///
/// Dialect: header row, comma delimiter, `.` decimal separator, UTF-8,
/// empty cell = missing. Lines starting with `#` are metadata comments and
/// are skipped. Unparseable cells are marked missing; a non-monotone
/// timestamp column is an error.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<TimeSeriesTable> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(&path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(BufReader::new(file));

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path_str.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let time_idx = headers
        .iter()
        .position(|h| *h == schema.time_column)
        .ok_or_else(|| Error::MissingColumn(schema.time_column.clone()))?;

    let wanted: Vec<(usize, String)> = match &schema.columns {
        Some(cols) => {
            let mut out = Vec::with_capacity(cols.len());
            for c in cols {
                let idx = headers
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| Error::MissingColumn(c.clone()))?;
                out.push((idx, c.clone()));
            }
            out
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != time_idx)
            .map(|(i, h)| (i, h.clone()))
            .collect(),
    };

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path_str.clone(),
            message: format!("row {}: {}", row_no + 2, e),
        })?;
        let t = parse_cell(record.get(time_idx).unwrap_or(""));
        if t.is_nan() {
            return Err(Error::Csv {
                path: path_str.clone(),
                message: format!("row {}: unparseable timestamp", row_no + 2),
            });
        }
        if let Some(&prev) = timestamps.last() {
            if t < prev {
                return Err(Error::NonMonotoneTimestamps {
                    row: row_no + 1,
                    prev,
                    next: t,
                });
            }
        }
        timestamps.push(t);
        for (slot, (idx, _)) in columns.iter_mut().zip(&wanted) {
            slot.push(parse_cell(record.get(*idx).unwrap_or("")));
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Empty(path_str));
    }
    TimeSeriesTable::new(
        timestamps,
        wanted.into_iter().map(|(_, n)| n).collect(),
        columns,
    )
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // `Display` for f64 is shortest round-trip, so re-loading is bit-exact.
        format!("{v}")
    }
}

/// Write a table in the same CSV dialect `load_csv` reads.
///
/// `meta` entries are emitted as leading `# key=value` comment lines.
pub fn write_csv<P: AsRef<Path>>(
    table: &TimeSeriesTable,
    path: P,
    meta: &[(&str, &str)],
) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let file = File::create(&path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path_str.clone(),
        source: e,
    };
    for (k, v) in meta {
        writeln!(out, "# {k}={v}").map_err(io_err)?;
    }
    let mut header = String::from("t");
    for n in table.names() {
        header.push(',');
        header.push_str(n);
    }
    writeln!(out, "{header}").map_err(io_err)?;
    for row in 0..table.len() {
        let mut line = format_cell(table.timestamps[row]);
        for col in 0..table.n_columns() {
            line.push(',');
            line.push_str(&format_cell(table.columns[col][row]));
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Resample onto the uniform grid 0, period, 2*period, ... covering the
/// input's time range, by linear interpolation between the nearest
/// non-missing neighbors. Grid points outside the observed range of a
/// column are missing. No extrapolation.
pub fn resample_uniform(table: &TimeSeriesTable, period: f64) -> Result<TimeSeriesTable> {
    if table.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: table.len(),
        });
    }
    if !(period > 0.0) {
        return Err(Error::InvalidArgument("period must be > 0".into()));
    }
    let t_last = *table.timestamps.last().unwrap();
    let rows = (t_last / period + 1e-9).floor() as usize + 1;
    resample_uniform_with_len(table, period, rows)
}

/// Same as [`resample_uniform`] but with an explicit grid length, used to
/// align several sources to a common grid. Grid points beyond a column's
/// observed range are missing.
pub fn resample_uniform_with_len(
    table: &TimeSeriesTable,
    period: f64,
    rows: usize,
) -> Result<TimeSeriesTable> {
    if table.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: table.len(),
        });
    }
    if !(period > 0.0) || rows == 0 {
        return Err(Error::InvalidArgument(
            "period must be > 0 and rows >= 1".into(),
        ));
    }
    let grid: Vec<f64> = (0..rows).map(|k| k as f64 * period).collect();
    let ts = &table.timestamps;
    let knot_tol = 1e-9 * period.max(1.0);

    let mut out_cols = Vec::with_capacity(table.n_columns());
    for col in &table.columns {
        // Indices of present samples, in time order.
        let present: Vec<usize> = (0..col.len()).filter(|&i| !col[i].is_nan()).collect();
        let mut out = vec![f64::NAN; rows];
        if !present.is_empty() {
            let mut hi = 0usize; // first present index with ts >= g (moving)
            for (k, &g) in grid.iter().enumerate() {
                while hi < present.len() && ts[present[hi]] < g - knot_tol {
                    hi += 1;
                }
                if hi >= present.len() {
                    break; // beyond last present sample
                }
                let j = present[hi];
                if (ts[j] - g).abs() <= knot_tol {
                    out[k] = col[j];
                    continue;
                }
                if hi == 0 {
                    continue; // before first present sample
                }
                let i = present[hi - 1];
                let span = ts[j] - ts[i];
                if span <= 0.0 {
                    out[k] = col[j];
                } else {
                    let w = (g - ts[i]) / span;
                    out[k] = col[i] + w * (col[j] - col[i]);
                }
            }
        }
        out_cols.push(out);
    }

    let mut out = TimeSeriesTable::new(grid, table.names.clone(), out_cols)?;
    out.sample_period = Some(period);
    Ok(out)
}

/// Per-column mean and standard deviation retained so standardized data can
/// be mapped back to original units.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationRecord {
    entries: Vec<(String, f64, f64)>, // (name, mean, sd)
}

impl StandardizationRecord {
    pub fn entries(&self) -> &[(String, f64, f64)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, m, s)| (*m, *s))
    }
}

fn present_mean_sd(values: &[f64]) -> Option<(f64, f64, usize)> {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = present.len();
    if n < 2 {
        return None;
    }
    let mean = present.iter().sum::<f64>() / n as f64;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Some((mean, var.sqrt(), n))
}

/// Z-score the named columns over their non-missing cells (sample standard
/// deviation). Missing cells stay missing.
pub fn standardize(
    table: &TimeSeriesTable,
    columns: &[String],
) -> Result<(TimeSeriesTable, StandardizationRecord)> {
    let mut out = table.clone();
    let mut entries = Vec::with_capacity(columns.len());
    for name in columns {
        let idx = out
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        let (mean, sd, _) = present_mean_sd(&out.columns[idx])
            .ok_or_else(|| Error::AllMissing(name.clone()))?;
        if sd <= 0.0 || !sd.is_finite() {
            return Err(Error::ZeroVariance(name.clone()));
        }
        for v in out.columns[idx].iter_mut() {
            if !v.is_nan() {
                *v = (*v - mean) / sd;
            }
        }
        entries.push((name.clone(), mean, sd));
    }
    Ok((out, StandardizationRecord { entries }))
}

/// Invert [`standardize`] for the recorded columns.
pub fn unstandardize(table: &TimeSeriesTable, record: &StandardizationRecord) -> Result<TimeSeriesTable> {
    let mut out = table.clone();
    for (name, mean, sd) in &record.entries {
        let idx = out
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        for v in out.columns[idx].iter_mut() {
            if !v.is_nan() {
                *v = *v * sd + mean;
            }
        }
    }
    Ok(out)
}

/// Interleaved phase sequences produced by [`lag_restructure`]: phase `k`
/// holds the original rows `k, k+stride, k+2*stride, ...`. Every original
/// row appears in exactly one phase.
#[derive(Debug, Clone)]
pub struct RestructuredSeries {
    pub phases: Vec<TimeSeriesTable>,
    pub stride: usize,
}

impl RestructuredSeries {
    pub fn total_rows(&self) -> usize {
        self.phases.iter().map(|p| p.len()).sum()
    }
}

/// Restructure a uniformly sampled table so that consecutive rows within a
/// phase are `stride` original rows apart. Downstream fits treat phases as
/// independent replicates sharing one parameter set; no row is dropped.
pub fn lag_restructure(table: &TimeSeriesTable, stride: usize) -> Result<RestructuredSeries> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    if table.sample_period.is_none() {
        return Err(Error::InvalidArgument(
            "lag_restructure requires a uniformly resampled table".into(),
        ));
    }
    if stride > table.len() {
        return Err(Error::TooShort {
            need: stride,
            got: table.len(),
        });
    }
    let period = table.sample_period.unwrap();
    let mut phases = Vec::with_capacity(stride);
    for k in 0..stride {
        let rows: Vec<usize> = (k..table.len()).step_by(stride).collect();
        let timestamps: Vec<f64> = rows.iter().map(|&r| table.timestamps[r]).collect();
        let columns: Vec<Vec<f64>> = table
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let mut phase = TimeSeriesTable::new(timestamps, table.names.clone(), columns)?;
        phase.sample_period = Some(period * stride as f64);
        phases.push(phase);
    }
    Ok(RestructuredSeries { phases, stride })
}

/// How to collapse the samples falling inside one second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondAggregate {
    Mean,
    Max,
}

/// Aggregate an irregular series to the 1 Hz grid 0..=floor(t_max) by the
/// chosen statistic over samples with floor(t) == second. Seconds with no
/// present sample are missing.
pub fn aggregate_seconds(
    timestamps: &[f64],
    values: &[f64],
    how: SecondAggregate,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if timestamps.is_empty() {
        return Err(Error::Empty("aggregate_seconds input".into()));
    }
    if timestamps.len() != values.len() {
        return Err(Error::Dimension {
            what: "aggregate_seconds values".into(),
            expected: timestamps.len(),
            actual: values.len(),
        });
    }
    let t_max = timestamps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rows = t_max.floor().max(0.0) as usize + 1;
    let mut acc = vec![(0.0f64, 0usize, f64::NEG_INFINITY); rows];
    for (&t, &v) in timestamps.iter().zip(values) {
        if v.is_nan() || t < 0.0 {
            continue;
        }
        let s = t.floor() as usize;
        if s >= rows {
            continue;
        }
        acc[s].0 += v;
        acc[s].1 += 1;
        acc[s].2 = acc[s].2.max(v);
    }
    let grid: Vec<f64> = (0..rows).map(|k| k as f64).collect();
    let out: Vec<f64> = acc
        .iter()
        .map(|&(sum, n, max)| {
            if n == 0 {
                f64::NAN
            } else {
                match how {
                    SecondAggregate::Mean => sum / n as f64,
                    SecondAggregate::Max => max,
                }
            }
        })
        .collect();
    Ok((grid, out))
}

/// Fill missing cells: linear interpolation in the interior, nearest value
/// at the edges. Errors when every cell is missing.
pub fn fill_missing_linear(values: &[f64]) -> Result<Vec<f64>> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
    if present.is_empty() {
        return Err(Error::AllMissing("fill_missing_linear input".into()));
    }
    let mut out = values.to_vec();
    let first = present[0];
    let last = *present.last().unwrap();
    for i in 0..first {
        out[i] = values[first];
    }
    for i in last + 1..values.len() {
        out[i] = values[last];
    }
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a + 1 {
            let span = (b - a) as f64;
            for i in a + 1..b {
                let frac = (i - a) as f64 / span;
                out[i] = values[a] + frac * (values[b] - values[a]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(ts: &[f64], cols: &[(&str, &[f64])]) -> TimeSeriesTable {
        TimeSeriesTable::new(
            ts.to_vec(),
            cols.iter().map(|(n, _)| n.to_string()).collect(),
            cols.iter().map(|(_, v)| v.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_csv_basic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "t,hr\n0,60\n1,61\n2,62\n").unwrap();
        let t = load_csv(&path, &CsvSchema::all("t")).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.column("hr").unwrap(), &[60.0, 61.0, 62.0]);
        assert!(!(0..3).any(|r| t.is_missing(r, 0)));
    }

    #[test]
    fn load_csv_blank_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "t,hr\n0,60\n1,\n2,62\n").unwrap();
        let t = load_csv(&path, &CsvSchema::all("t")).unwrap();
        assert!(t.is_missing(1, 0));
        assert!(!t.is_missing(0, 0));
    }

    #[test]
    fn load_csv_rejects_non_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "t,hr\n5,60\n3,61\n4,62\n").unwrap();
        let err = load_csv(&path, &CsvSchema::all("t")).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimestamps { .. }));
    }

    #[test]
    fn load_csv_rejects_empty_and_missing_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "t,hr\n").unwrap();
        assert!(matches!(
            load_csv(&path, &CsvSchema::all("t")),
            Err(Error::Empty(_))
        ));
        std::fs::write(&path, "time,hr\n0,60\n").unwrap();
        assert!(matches!(
            load_csv(&path, &CsvSchema::all("t")),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 64;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                if i % 11 == 3 {
                    f64::NAN
                } else {
                    let exp = rng.gen_range(-300..300);
                    let mantissa: f64 = rng.gen_range(-1.0..1.0);
                    mantissa * 10f64.powi(exp)
                }
            })
            .collect();
        let t = table(&ts, &[("v", &vals)]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&t, &path, &[("config", "abc123")]).unwrap();
        let back = load_csv(&path, &CsvSchema::all("t")).unwrap();
        assert_eq!(back.len(), t.len());
        for i in 0..n {
            let a = t.column("v").unwrap()[i];
            let b = back.column("v").unwrap()[i];
            assert!(
                (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits(),
                "row {i}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn resample_identity_on_uniform_grid() {
        let t = table(
            &[0.0, 1.0, 2.0, 3.0],
            &[("hr", &[60.0, 61.0, 59.0, 62.0])],
        );
        let r = resample_uniform(&t, 1.0).unwrap();
        assert_eq!(r.timestamps(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(r.column("hr").unwrap(), t.column("hr").unwrap());
    }

    #[test]
    fn resample_linear_interpolation_hand_values() {
        let t = table(&[0.0, 0.9, 2.1], &[("hr", &[60.0, 69.0, 81.0])]);
        let r = resample_uniform(&t, 1.0).unwrap();
        let hr = r.column("hr").unwrap();
        assert_eq!(r.len(), 3);
        assert!((hr[1] - 70.0).abs() < 1e-12, "t=1: {}", hr[1]);
        assert!((hr[2] - 80.0).abs() < 1e-12, "t=2: {}", hr[2]);
    }

    #[test]
    fn resample_no_extrapolation() {
        let t = table(&[0.0, 0.9, 2.1], &[("hr", &[60.0, 69.0, 81.0])]);
        let r = resample_uniform_with_len(&t, 1.0, 4).unwrap();
        assert!(r.column("hr").unwrap()[3].is_nan());
    }

    #[test]
    fn resample_single_row_errors() {
        let t = table(&[0.0], &[("hr", &[60.0])]);
        assert!(matches!(
            resample_uniform(&t, 1.0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn resample_idempotent() {
        let t = table(
            &[0.0, 0.7, 1.4, 2.9, 4.2],
            &[("a", &[1.0, f64::NAN, 3.0, 2.0, 5.0])],
        );
        let once = resample_uniform(&t, 1.0).unwrap();
        let twice = resample_uniform(&once, 1.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn standardize_symmetric_three_point() {
        let t = table(&[0.0, 1.0, 2.0], &[("x", &[1.0, 2.0, 3.0])]);
        let (s, rec) = standardize(&t, &["x".to_string()]).unwrap();
        let x = s.column("x").unwrap();
        assert!((x[0] + 1.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
        assert!((x[2] - 1.0).abs() < 1e-12);
        assert_eq!(rec.get("x").unwrap(), (2.0, 1.0));
    }

    #[test]
    fn standardize_rejects_constant() {
        let t = table(&[0.0, 1.0, 2.0], &[("x", &[5.0, 5.0, 5.0])]);
        assert!(matches!(
            standardize(&t, &["x".to_string()]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn standardize_uses_present_cells_only() {
        // Present cells (1, 2, 3): mean 2, sd 1.
        let t = table(
            &[0.0, 1.0, 2.0, 3.0],
            &[("x", &[1.0, f64::NAN, 2.0, 3.0])],
        );
        let (s, rec) = standardize(&t, &["x".to_string()]).unwrap();
        assert_eq!(rec.get("x").unwrap(), (2.0, 1.0));
        let x = s.column("x").unwrap();
        assert!((x[0] + 1.0).abs() < 1e-12);
        assert!(x[1].is_nan());
    }

    #[test]
    fn standardize_round_trip_within_1e12() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..200).map(|_| rng.gen_range(-50.0..150.0)).collect();
        let ts: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let t = table(&ts, &[("x", &vals)]);
        let (s, rec) = standardize(&t, &["x".to_string()]).unwrap();
        let back = unstandardize(&s, &rec).unwrap();
        for (a, b) in vals.iter().zip(back.column("x").unwrap()) {
            let rel = (a - b).abs() / a.abs().max(1.0);
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn lag_restructure_identity_stride() {
        let mut t = table(&[0.0, 1.0, 2.0], &[("x", &[1.0, 2.0, 3.0])]);
        t.set_sample_period(Some(1.0));
        let rs = lag_restructure(&t, 1).unwrap();
        assert_eq!(rs.phases.len(), 1);
        assert_eq!(rs.phases[0].column("x").unwrap(), t.column("x").unwrap());
    }

    #[test]
    fn lag_restructure_twenty_rows_stride_ten() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 10.0).collect();
        let mut t = table(&ts, &[("x", &xs)]);
        t.set_sample_period(Some(1.0));
        let rs = lag_restructure(&t, 10).unwrap();
        assert_eq!(rs.phases.len(), 10);
        assert!(rs.phases.iter().all(|p| p.len() == 2));
        assert_eq!(rs.phases[3].column("x").unwrap(), &[30.0, 130.0]);
    }

    #[test]
    fn lag_restructure_seven_rows_stride_three() {
        let ts: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let xs: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let mut t = table(&ts, &[("x", &xs)]);
        t.set_sample_period(Some(1.0));
        let rs = lag_restructure(&t, 3).unwrap();
        let lens: Vec<usize> = rs.phases.iter().map(|p| p.len()).collect();
        assert_eq!(lens, vec![3, 2, 2]);
        assert_eq!(rs.phases[0].column("x").unwrap(), &[0.0, 3.0, 6.0]);
        assert_eq!(rs.phases[1].column("x").unwrap(), &[1.0, 4.0]);
        assert_eq!(rs.phases[2].column("x").unwrap(), &[2.0, 5.0]);
        // Union of phases is the original row multiset.
        let mut all: Vec<f64> = rs
            .phases
            .iter()
            .flat_map(|p| p.column("x").unwrap().to_vec())
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, xs);
        assert_eq!(rs.total_rows(), 7);
    }

    #[test]
    fn lag_restructure_stride_exceeds_rows() {
        let mut t = table(&[0.0, 1.0], &[("x", &[1.0, 2.0])]);
        t.set_sample_period(Some(1.0));
        assert!(lag_restructure(&t, 3).is_err());
    }

    #[test]
    fn aggregate_seconds_mean_and_max() {
        let ts = [0.1, 0.5, 1.2, 3.9];
        let vs = [1.0, 3.0, 5.0, 7.0];
        let (grid, mean) = aggregate_seconds(&ts, &vs, SecondAggregate::Mean).unwrap();
        assert_eq!(grid, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(mean[0], 2.0);
        assert_eq!(mean[1], 5.0);
        assert!(mean[2].is_nan());
        let (_, max) = aggregate_seconds(&ts, &vs, SecondAggregate::Max).unwrap();
        assert_eq!(max[0], 3.0);
    }

    #[test]
    fn fill_missing_linear_interior_and_edges() {
        let v = [f64::NAN, 2.0, f64::NAN, f64::NAN, 8.0, f64::NAN];
        let f = fill_missing_linear(&v).unwrap();
        assert_eq!(f, vec![2.0, 2.0, 4.0, 6.0, 8.0, 8.0]);
    }
}

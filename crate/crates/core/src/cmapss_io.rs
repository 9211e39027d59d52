//! Ingestion of C-MAPSS run-to-failure files.
//!
//! Each line of a C-MAPSS file holds 26 whitespace-separated numbers: unit id,
//! cycle number, three operational settings and 21 sensor readings. This module
//! parses those files into a [`CycleTable`], removes zero-range columns, builds
//! the capped piecewise RUL target, rescales features into `[-1, 1]` and maps
//! RUL values onto maintenance bins.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of numeric fields on every C-MAPSS line.
pub const RAW_FIELDS: usize = 26;

/// Plateau value of the piecewise RUL target.
pub const RUL_CAP: f64 = 125.0;

/// Names of the 24 non-index raw columns, in file order.
pub fn raw_feature_names() -> Vec<String> {
    (1..=3)
        .map(|i| format!("setting_{i}"))
        .chain((1..=21).map(|i| format!("sensor_{i}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(
            FeatureRange {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| FeatureRange {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Options applied while ingesting a raw file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Add the cycle number as a model input column named `cycle`.
    pub include_cycle: bool,
}

/// Engine-cycle rows with per-column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTable {
    unit_ids: Vec<u32>,
    cycles: Vec<u32>,
    features: Matrix,
    feature_names: Vec<String>,
    ranges: Vec<FeatureRange>,
    normalized: bool,
}

impl CycleTable {
    /// Validates the unit/cycle bookkeeping and computes column ranges.
    pub fn new(
        unit_ids: Vec<u32>,
        cycles: Vec<u32>,
        features: Matrix,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::InvalidInput("cycle table is empty".into()));
        }
        if unit_ids.len() != n || cycles.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows but {} unit ids and {} cycles",
                unit_ids.len(),
                cycles.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        let mut last_cycle: HashMap<u32, u32> = HashMap::new();
        for (row, (&u, &c)) in unit_ids.iter().zip(&cycles).enumerate() {
            if u == 0 {
                return Err(Error::InvalidInput(format!(
                    "row {row}: unit id must be positive"
                )));
            }
            let expected = last_cycle.get(&u).map_or(1, |p| p + 1);
            if c != expected {
                return Err(Error::InvalidInput(format!(
                    "row {row}: unit {u} has cycle {c}, expected {expected}"
                )));
            }
            last_cycle.insert(u, c);
        }
        if !features.is_finite() {
            return Err(Error::InvalidInput("feature values must be finite".into()));
        }
        let ranges = (0..features.ncols())
            .map(|c| FeatureRange::of(features.column(c)))
            .collect();
        Ok(Self {
            unit_ids,
            cycles,
            features,
            feature_names,
            ranges,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn unit_ids(&self) -> &[u32] {
        &self.unit_ids
    }

    pub fn cycles(&self) -> &[u32] {
        &self.cycles
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Column minima and maxima. After [`normalize`] these are the statistics
    /// of the original scale, kept for [`denormalize`].
    pub fn ranges(&self) -> &[FeatureRange] {
        &self.ranges
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Maximum cycle reached by every unit.
    pub fn max_cycles(&self) -> HashMap<u32, u32> {
        let mut out = HashMap::new();
        for (&u, &c) in self.unit_ids.iter().zip(&self.cycles) {
            let e = out.entry(u).or_insert(c);
            *e = (*e).max(c);
        }
        out
    }

    fn with_columns(&self, keep: &[usize]) -> Self {
        Self {
            unit_ids: self.unit_ids.clone(),
            cycles: self.cycles.clone(),
            features: self.features.select_columns(keep),
            feature_names: keep
                .iter()
                .map(|&c| self.feature_names[c].clone())
                .collect(),
            ranges: keep.iter().map(|&c| self.ranges[c]).collect(),
            normalized: self.normalized,
        }
    }

    /// Keeps only the named feature columns, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let keep = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_columns(&keep))
    }

    /// Rebuilds a table from exported parts; used when reloading stage artifacts.
    pub fn from_parts(
        unit_ids: Vec<u32>,
        cycles: Vec<u32>,
        features: Matrix,
        feature_names: Vec<String>,
        ranges: Vec<FeatureRange>,
        normalized: bool,
    ) -> Result<Self> {
        let mut t = Self::new(unit_ids, cycles, features, feature_names)?;
        if ranges.len() != t.n_features() {
            return Err(Error::Shape(format!(
                "{} ranges for {} features",
                ranges.len(),
                t.n_features()
            )));
        }
        t.ranges = ranges;
        t.normalized = normalized;
        Ok(t)
    }
}

/// Reads a C-MAPSS text file.
pub fn load_cmapss(path: impl AsRef<Path>, options: IngestOptions) -> Result<CycleTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_cmapss(file, path, options)
}

/// Parses C-MAPSS text from any reader. `origin` is only used in error messages.
pub fn parse_cmapss(
    reader: impl Read,
    origin: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<CycleTable> {
    let origin = origin.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut unit_ids = Vec::new();
    let mut cycles = Vec::new();
    let mut values = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != RAW_FIELDS {
            return Err(parse_err(
                lineno,
                format!("expected {RAW_FIELDS} fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0.0f64; RAW_FIELDS];
        for (k, tok) in fields.iter().enumerate() {
            nums[k] = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(lineno, format!("field {} is not numeric: `{tok}`", k + 1))
                })?;
        }
        let as_index = |v: f64, what: &str| -> Result<u32> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(parse_err(
                    lineno,
                    format!("{what} must be a positive integer, found {v}"),
                ))
            }
        };
        unit_ids.push(as_index(nums[0], "unit id")?);
        let cycle = as_index(nums[1], "cycle number")?;
        cycles.push(cycle);
        if options.include_cycle {
            values.push(f64::from(cycle));
        }
        values.extend_from_slice(&nums[2..]);
    }
    if unit_ids.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "file contains no data rows".into(),
        });
    }

    let mut names = Vec::with_capacity(RAW_FIELDS - 1);
    if options.include_cycle {
        names.push("cycle".to_string());
    }
    names.extend(raw_feature_names());
    let n = unit_ids.len();
    let features = Matrix::from_vec(n, names.len(), values)?;
    CycleTable::new(unit_ids, cycles, features, names)
}

/// Removes every feature column whose maximum equals its minimum.
pub fn drop_constant_columns(table: &CycleTable) -> Result<CycleTable> {
    let keep: Vec<usize> = table
        .ranges
        .iter()
        .enumerate()
        .filter(|(_, r)| r.max > r.min)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput(
            "every feature column is constant; nothing to model".into(),
        ));
    }
    Ok(table.with_columns(&keep))
}

/// Remaining-useful-life target in cycles, capped at [`RUL_CAP`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RulLabel(f64);

impl RulLabel {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=RUL_CAP).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "RUL label {value} outside [0, {RUL_CAP}]"
            )))
        }
    }

    /// Piecewise target for cycle `cycle` of a unit that fails at `max_cycle`.
    pub fn piecewise(cycle: u32, max_cycle: u32) -> Self {
        let remaining = f64::from(max_cycle.saturating_sub(cycle));
        Self(remaining.min(RUL_CAP))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Piecewise RUL label for every row: 125 on the plateau, then `A - c`.
pub fn label_rul(table: &CycleTable) -> Vec<RulLabel> {
    let max = table.max_cycles();
    table
        .unit_ids
        .iter()
        .zip(&table.cycles)
        .map(|(u, &c)| RulLabel::piecewise(c, max[u]))
        .collect()
}

/// Maps `x` into `[-1, 1]` given the column range.
#[inline]
pub fn normalize_value(x: f64, range: FeatureRange) -> f64 {
    2.0 * (x - range.min) / range.span() - 1.0
}

/// Inverse of [`normalize_value`].
#[inline]
pub fn denormalize(value: f64, min: f64, max: f64) -> f64 {
    (value + 1.0) * (max - min) / 2.0 + min
}

/// Rescales every feature into `[-1, 1]` using the table's own ranges.
pub fn normalize(table: &CycleTable) -> Result<CycleTable> {
    if table.normalized {
        return Err(Error::InvalidInput("table is already normalized".into()));
    }
    normalize_with(table, &table.ranges)
}

/// Rescales a raw table with externally supplied ranges (e.g. training statistics).
pub fn normalize_with(table: &CycleTable, ranges: &[FeatureRange]) -> Result<CycleTable> {
    if ranges.len() != table.n_features() {
        return Err(Error::Shape(format!(
            "{} ranges for {} features",
            ranges.len(),
            table.n_features()
        )));
    }
    if let Some((i, _)) = ranges.iter().enumerate().find(|(_, r)| !(r.max > r.min)) {
        return Err(Error::InvalidInput(format!(
            "feature `{}` has zero range; drop constant columns first",
            table.feature_names[i]
        )));
    }
    let mut out = table.clone();
    let d = table.n_features();
    for (k, v) in out.features.as_mut_slice().iter_mut().enumerate() {
        *v = normalize_value(*v, ranges[k % d]);
    }
    out.ranges = ranges.to_vec();
    out.normalized = true;
    Ok(out)
}

/// Rows of one side of a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    /// Positions of these rows in the source table, ascending.
    pub indices: Vec<usize>,
    pub features: Matrix,
    pub targets: Vec<f64>,
}

impl DataSplit {
    pub fn from_indices(table: &CycleTable, labels: &[RulLabel], indices: Vec<usize>) -> Self {
        Self {
            features: table.features.select_rows(&indices),
            targets: indices.iter().map(|&i| labels[i].value()).collect(),
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Seeded row-level split; the training side receives `floor(fraction * n)` rows.
pub fn split_train_test(
    table: &CycleTable,
    labels: &[RulLabel],
    fraction: f64,
    seed: u64,
) -> Result<(DataSplit, DataSplit)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if labels.len() != table.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            table.len()
        )));
    }
    let (mut train, mut test) = split_indices(table.len(), fraction, seed);
    train.sort_unstable();
    test.sort_unstable();
    Ok((
        DataSplit::from_indices(table, labels, train),
        DataSplit::from_indices(table, labels, test),
    ))
}

pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fraction * n as f64).floor() as usize;
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Maintenance urgency category derived from RUL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaintenanceBin {
    Schedule,
    Okay,
    Good,
    Great,
}

impl MaintenanceBin {
    pub const ALL: [MaintenanceBin; 4] = [
        MaintenanceBin::Great,
        MaintenanceBin::Good,
        MaintenanceBin::Okay,
        MaintenanceBin::Schedule,
    ];

    /// Dense label used as clustering ground truth (Great = 0 ... Schedule = 3).
    pub fn index(self) -> usize {
        match self {
            MaintenanceBin::Great => 0,
            MaintenanceBin::Good => 1,
            MaintenanceBin::Okay => 2,
            MaintenanceBin::Schedule => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaintenanceBin::Great => "Great",
            MaintenanceBin::Good => "Good",
            MaintenanceBin::Okay => "Okay",
            MaintenanceBin::Schedule => "Schedule",
        }
    }
}

impl fmt::Display for MaintenanceBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bins are half-open: `[125, inf)` Great, `[75, 125)` Good, `[50, 75)` Okay,
/// below 50 Schedule. Negative and NaN inputs are treated as 0.
pub fn assign_bin(rul: f64) -> MaintenanceBin {
    let rul = if rul.is_nan() { 0.0 } else { rul.max(0.0) };
    if rul >= 125.0 {
        MaintenanceBin::Great
    } else if rul >= 75.0 {
        MaintenanceBin::Good
    } else if rul >= 50.0 {
        MaintenanceBin::Okay
    } else {
        MaintenanceBin::Schedule
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableSidecar {
    feature_names: Vec<String>,
    ranges: Vec<FeatureRange>,
    normalized: bool,
}

/// Writes `<stem>.csv` (unit, cycle, optional rul, features) and `<stem>.json`
/// (feature names with min/max pairs).
pub fn export_table(
    table: &CycleTable,
    labels: Option<&[RulLabel]>,
    csv_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["unit".to_string(), "cycle".to_string()];
    if labels.is_some() {
        header.push("rul".to_string());
    }
    header.extend(table.feature_names.iter().cloned());
    w.write_record(&header)?;
    for r in 0..table.len() {
        let mut rec = vec![table.unit_ids[r].to_string(), table.cycles[r].to_string()];
        if let Some(l) = labels {
            rec.push(l[r].value().to_string());
        }
        rec.extend(table.features.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let sidecar = TableSidecar {
        feature_names: table.feature_names.clone(),
        ranges: table.ranges.clone(),
        normalized: table.normalized,
    };
    let json_path = json_path.as_ref();
    fs::write(json_path, serde_json::to_string_pretty(&sidecar)?)
        .map_err(|e| Error::io(json_path, e))
}

/// Reads a table written by [`export_table`]. Returns the labels when the CSV
/// carries a `rul` column.
pub fn import_table(
    csv_path: impl AsRef<Path>,
    json_path: impl AsRef<Path>,
) -> Result<(CycleTable, Option<Vec<RulLabel>>)> {
    let json_path = json_path.as_ref();
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let sidecar: TableSidecar = serde_json::from_str(&text)?;

    let csv_path = csv_path.as_ref();
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let header = rdr.headers()?.clone();
    let has_rul = header.get(2) == Some("rul");
    let offset = if has_rul { 3 } else { 2 };
    if header.len() != offset + sidecar.feature_names.len() {
        return Err(Error::Shape(format!(
            "{} has {} columns, sidecar lists {} features",
            csv_path.display(),
            header.len(),
            sidecar.feature_names.len()
        )));
    }
    let bad = |line: usize, what: &str| Error::Parse {
        path: csv_path.to_path_buf(),
        line,
        message: format!("bad {what}"),
    };
    let (mut units, mut cycles, mut ruls, mut values) = (vec![], vec![], vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        units.push(rec[0].parse::<u32>().map_err(|_| bad(line, "unit"))?);
        cycles.push(rec[1].parse::<u32>().map_err(|_| bad(line, "cycle"))?);
        if has_rul {
            let v = rec[2].parse::<f64>().map_err(|_| bad(line, "rul"))?;
            ruls.push(RulLabel::new(v)?);
        }
        for f in rec.iter().skip(offset) {
            values.push(f.parse::<f64>().map_err(|_| bad(line, "feature value"))?);
        }
    }
    let n = units.len();
    let features = Matrix::from_vec(n, sidecar.feature_names.len(), values)?;
    let table = CycleTable::from_parts(
        units,
        cycles,
        features,
        sidecar.feature_names,
        sidecar.ranges,
        sidecar.normalized,
    )?;
    Ok((table, has_rul.then_some(ruls)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(unit: u32, cycle: u32, sensor_base: f64) -> String {
        let mut f = vec![unit.to_string(), cycle.to_string()];
        f.extend((0..24).map(|k| format!("{}", sensor_base + k as f64)));
        f.join(" ")
    }

    fn tiny(lines: &[String]) -> Result<CycleTable> {
        parse_cmapss(lines.join("\n").as_bytes(), "mem", IngestOptions::default())
    }

    #[test]
    fn parses_two_lines() {
        let t = tiny(&[line(1, 1, 0.0), line(1, 2, 1.0)]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.n_features(), 24);
        assert_eq!(t.feature_names()[0], "setting_1");
        assert_eq!(t.feature_names()[23], "sensor_21");
        assert_eq!(t.features().get(1, 3), 4.0);
    }

    #[test]
    fn multi_space_separators_and_trailing_blanks() {
        let text = format!(
            "{}  \n\n{}   ",
            line(1, 1, 0.0).replace(' ', "   "),
            line(1, 2, 0.5)
        );
        let t = parse_cmapss(text.as_bytes(), "mem", IngestOptions::default()).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn wrong_field_count_names_line() {
        let mut short: Vec<&str> = vec![];
        let l = line(1, 2, 0.0);
        short.extend(l.split(' ').take(25));
        let err = tiny(&[line(1, 1, 0.0), short.join(" ")]).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("25"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_token_is_parse_error() {
        let bad = line(1, 1, 0.0).replacen("3", "x3", 1);
        assert!(matches!(tiny(&[bad]), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_input_is_error() {
        assert!(tiny(&[]).is_err());
        assert!(tiny(&["   ".to_string()]).is_err());
    }

    #[test]
    fn cycle_gaps_rejected() {
        assert!(tiny(&[line(1, 1, 0.0), line(1, 3, 0.0)]).is_err());
        assert!(tiny(&[line(1, 2, 0.0)]).is_err());
    }

    #[test]
    fn include_cycle_prepends_column() {
        let text = [line(1, 1, 0.0), line(1, 2, 0.0)].join("\n");
        let t = parse_cmapss(
            text.as_bytes(),
            "mem",
            IngestOptions {
                include_cycle: true,
            },
        )
        .unwrap();
        assert_eq!(t.n_features(), 25);
        assert_eq!(t.feature_names()[0], "cycle");
        assert_eq!(t.features().column(0), vec![1.0, 2.0]);
    }

    fn table_from(cols: Vec<Vec<f64>>) -> CycleTable {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect();
        CycleTable::new(
            vec![1; n],
            (1..=n as u32).collect(),
            Matrix::from_rows(&rows).unwrap(),
            (0..cols.len()).map(|i| format!("f{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_column_dropped_and_idempotent() {
        let t = table_from(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 1.0, 1.0],
            vec![5.0, 4.0, 3.0],
        ]);
        let d = drop_constant_columns(&t).unwrap();
        assert_eq!(d.feature_names(), &["f0".to_string(), "f2".to_string()]);
        assert_eq!(drop_constant_columns(&d).unwrap(), d);
    }

    #[test]
    fn no_constant_columns_is_identity() {
        let t = table_from(vec![vec![0.0, 1.0], vec![3.0, 2.0]]);
        assert_eq!(drop_constant_columns(&t).unwrap(), t);
    }

    #[test]
    fn all_constant_is_error() {
        let t = table_from(vec![vec![2.0, 2.0], vec![3.0, 3.0]]);
        assert!(drop_constant_columns(&t).is_err());
    }

    #[test]
    fn piecewise_labels() {
        assert_eq!(RulLabel::piecewise(100, 300).value(), 125.0);
        assert_eq!(RulLabel::piecewise(175, 300).value(), 125.0);
        assert_eq!(RulLabel::piecewise(176, 300).value(), 124.0);
        assert_eq!(RulLabel::piecewise(250, 300).value(), 50.0);
        assert_eq!(RulLabel::piecewise(300, 300).value(), 0.0);
    }

    #[test]
    fn label_rul_uses_unit_max_cycle() {
        let lines: Vec<String> = (1..=3)
            .map(|c| line(1, c, 0.0))
            .chain((1..=2).map(|c| line(2, c, 0.0)))
            .collect();
        let t = tiny(&lines).unwrap();
        let l: Vec<f64> = label_rul(&t).into_iter().map(RulLabel::value).collect();
        assert_eq!(l, vec![2.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let t = table_from(vec![vec![0.0, 5.0, 10.0]]);
        let n = normalize(&t).unwrap();
        assert_eq!(n.features().column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(
            n.ranges()[0],
            FeatureRange {
                min: 0.0,
                max: 10.0
            }
        );
        assert!(normalize(&n).is_err());
    }

    #[test]
    fn normalize_rejects_zero_range() {
        let t = table_from(vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(normalize(&t).is_err());
    }

    #[test]
    fn denormalize_examples() {
        assert_eq!(denormalize(0.0, 0.0, 10.0), 5.0);
        assert_eq!(denormalize(1.0, 0.0, 10.0), 10.0);
        assert_eq!(denormalize(-1.0, 0.0, 10.0), 0.0);
    }

    #[test]
    fn split_counts() {
        let (tr, te) = split_indices(20_631, 0.8, 7);
        assert_eq!((tr.len(), te.len()), (16_504, 4_127));
        let (tr, te) = split_indices(4, 0.5, 1);
        assert_eq!((tr.len(), te.len()), (2, 2));
    }

    #[test]
    fn split_is_deterministic_disjoint_exhaustive() {
        let t = table_from(vec![(0..50).map(f64::from).collect()]);
        let labels = label_rul(&t);
        let (a, b) = split_train_test(&t, &labels, 0.7, 3).unwrap();
        let (a2, b2) = split_train_test(&t, &labels, 0.7, 3).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let mut all: Vec<usize> = a.indices.iter().chain(&b.indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(a.len(), 35);
        assert!(split_train_test(&t, &labels, 1.0, 3).is_err());
        assert!(split_train_test(&t, &labels, 0.0, 3).is_err());
    }

    #[test]
    fn bins_at_boundaries() {
        use MaintenanceBin::*;
        assert_eq!(assign_bin(130.0), Great);
        assert_eq!(assign_bin(125.0), Great);
        assert_eq!(assign_bin(124.999), Good);
        assert_eq!(assign_bin(100.0), Good);
        assert_eq!(assign_bin(75.0), Good);
        assert_eq!(assign_bin(74.999), Okay);
        assert_eq!(assign_bin(50.0), Okay);
        assert_eq!(assign_bin(49.999), Schedule);
        assert_eq!(assign_bin(20.0), Schedule);
        assert_eq!(assign_bin(-3.0), Schedule);
        assert_eq!(assign_bin(f64::NAN), Schedule);
        assert!(Great > Good && Good > Okay && Okay > Schedule);
    }

    #[test]
    fn export_import_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = table_from(vec![vec![0.1, 0.25, 1.0 / 3.0], vec![7.0, 8.0, 9.0]]);
        let n = normalize(&t).unwrap();
        let labels = label_rul(&n);
        let (c, j) = (dir.path().join("t.csv"), dir.path().join("t.json"));
        export_table(&n, Some(&labels), &c, &j).unwrap();
        let (back, l) = import_table(&c, &j).unwrap();
        assert_eq!(back, n);
        assert_eq!(l.unwrap(), labels);
    }
}

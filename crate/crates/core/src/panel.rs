//! Panel ingestion: long-format intraday returns, wide daily RV files, and the
//! full daily measure panel. Every firm must cover exactly the same trading dates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{self, temporal_average, AverageMode, MeasureError, MeasureSet};

pub const WEEKLY_WINDOW: usize = 5;
pub const MONTHLY_WINDOW: usize = 22;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("firm `{firm}` has no observations on {date} while other firms do")]
    NonAlignedCalendar { firm: String, date: String },
    #[error("non-finite value for firm `{firm}` on {date}")]
    NonFiniteValue { firm: String, date: String },
    #[error("negative realized variance for firm `{firm}` on {date}")]
    NegativeRv { firm: String, date: String },
    #[error("cannot parse date `{0}` (expected YYYY-MM-DD)")]
    BadDate(String),
    #[error("cannot parse number `{value}` in column `{column}`")]
    BadNumber { column: String, value: String },
    #[error("duplicate record: {0}")]
    Duplicate(String),
    #[error("firm `{firm}` on {date} has {count} intraday returns, need at least 2")]
    TooFewIntraday { firm: String, date: String, count: usize },
    #[error("panel has no firms or no dates")]
    EmptyPanel,
    #[error("panel dimensions do not match: {0}")]
    Shape(String),
    #[error("firm `{firm}` has {count} observations, need at least 2")]
    TooFewObservations { firm: String, count: usize },
    #[error("unknown firm `{0}`")]
    UnknownFirm(String),
    #[error("measure error for firm `{firm}` on {date}: {source}")]
    Measure {
        firm: String,
        date: String,
        #[source]
        source: MeasureError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|_| DataError::BadDate(s.to_string()))
}

pub fn format_date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn parse_number(column: &str, value: &str) -> Result<f64, DataError> {
    value.trim().parse::<f64>().map_err(|_| DataError::BadNumber {
        column: column.to_string(),
        value: value.to_string(),
    })
}

/// Intraday log-returns, `returns[firm][day]` holding the M returns of that day in
/// sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayPanel {
    firms: Vec<String>,
    days: Vec<NaiveDate>,
    returns: Vec<Vec<Vec<f64>>>,
}

impl IntradayPanel {
    pub fn new(firms: Vec<String>, days: Vec<NaiveDate>, returns: Vec<Vec<Vec<f64>>>) -> Result<Self, DataError> {
        if firms.is_empty() || days.is_empty() {
            return Err(DataError::EmptyPanel);
        }
        if returns.len() != firms.len() {
            return Err(DataError::Shape(format!(
                "{} firms but {} return blocks",
                firms.len(),
                returns.len()
            )));
        }
        check_sorted_unique(&firms, &days)?;
        for (f, per_day) in firms.iter().zip(&returns) {
            if per_day.len() != days.len() {
                return Err(DataError::Shape(format!(
                    "firm `{f}` has {} days, panel has {}",
                    per_day.len(),
                    days.len()
                )));
            }
            for (d, r) in days.iter().zip(per_day) {
                if r.len() < 2 {
                    return Err(DataError::TooFewIntraday {
                        firm: f.clone(),
                        date: format_date(*d),
                        count: r.len(),
                    });
                }
                if r.iter().any(|x| !x.is_finite()) {
                    return Err(DataError::NonFiniteValue {
                        firm: f.clone(),
                        date: format_date(*d),
                    });
                }
            }
        }
        Ok(Self { firms, days, returns })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn returns(&self, firm: usize, day: usize) -> &[f64] {
        &self.returns[firm][day]
    }

    /// The common number of intraday returns per day, if every (firm, day) agrees.
    pub fn uniform_m(&self) -> Option<usize> {
        let m = self.returns[0][0].len();
        self.returns.iter().flatten().all(|r| r.len() == m).then_some(m)
    }

    /// Computes RV, BPV, RQ and jumps for every (firm, day).
    pub fn realize(&self) -> Result<RealizedPanel, DataError> {
        let per_firm: Vec<Vec<MeasureSet>> = self
            .returns
            .par_iter()
            .enumerate()
            .map(|(f, days)| {
                days.iter()
                    .enumerate()
                    .map(|(d, r)| {
                        MeasureSet::from_returns(r).map_err(|source| DataError::Measure {
                            firm: self.firms[f].clone(),
                            date: format_date(self.days[d]),
                            source,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let pick = |g: fn(&MeasureSet) -> f64| -> Vec<Vec<f64>> {
            per_firm.iter().map(|v| v.iter().map(g).collect()).collect()
        };
        RealizedPanel::from_measures(
            self.firms.clone(),
            self.days.clone(),
            pick(|m| m.rv),
            pick(|m| m.bpv),
            pick(|m| m.rq),
        )
    }
}

fn check_sorted_unique(firms: &[String], days: &[NaiveDate]) -> Result<(), DataError> {
    if let Some(w) = firms.windows(2).find(|w| w[0] >= w[1]) {
        return Err(DataError::Shape(format!(
            "firms must be unique and sorted, found `{}` before `{}`",
            w[0], w[1]
        )));
    }
    if let Some(w) = days.windows(2).find(|w| w[0] >= w[1]) {
        return Err(DataError::Shape(format!(
            "dates must be unique and ascending, found {} before {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Aligned daily measures for a set of firms. `bpv`, `rq` and `jump` are absent
/// when the panel was loaded from precomputed RV only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPanel {
    firms: Vec<String>,
    days: Vec<NaiveDate>,
    rv: Vec<Vec<f64>>,
    bpv: Option<Vec<Vec<f64>>>,
    rq: Option<Vec<Vec<f64>>>,
    jump: Option<Vec<Vec<f64>>>,
    rv_w: Vec<Vec<Option<f64>>>,
    rv_m: Vec<Vec<Option<f64>>>,
}

impl RealizedPanel {
    /// Panel with realized variance only.
    pub fn from_rv(firms: Vec<String>, days: Vec<NaiveDate>, rv: Vec<Vec<f64>>) -> Result<Self, DataError> {
        Self::build(firms, days, rv, None, None)
    }

    /// Panel with all measures; jumps are derived as max(rv − bpv, 0).
    pub fn from_measures(
        firms: Vec<String>,
        days: Vec<NaiveDate>,
        rv: Vec<Vec<f64>>,
        bpv: Vec<Vec<f64>>,
        rq: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        Self::build(firms, days, rv, Some(bpv), Some(rq))
    }

    fn build(
        firms: Vec<String>,
        days: Vec<NaiveDate>,
        rv: Vec<Vec<f64>>,
        bpv: Option<Vec<Vec<f64>>>,
        rq: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, DataError> {
        if firms.is_empty() || days.is_empty() {
            return Err(DataError::EmptyPanel);
        }
        check_sorted_unique(&firms, &days)?;
        let check = |name: &str, m: &Vec<Vec<f64>>| -> Result<(), DataError> {
            if m.len() != firms.len() {
                return Err(DataError::Shape(format!(
                    "{name}: {} firms, expected {}",
                    m.len(),
                    firms.len()
                )));
            }
            for (f, series) in firms.iter().zip(m) {
                if series.len() != days.len() {
                    return Err(DataError::Shape(format!(
                        "{name}: firm `{f}` has {} days, expected {}",
                        series.len(),
                        days.len()
                    )));
                }
                for (d, v) in days.iter().zip(series) {
                    if !v.is_finite() {
                        return Err(DataError::NonFiniteValue {
                            firm: f.clone(),
                            date: format_date(*d),
                        });
                    }
                    if *v < 0.0 {
                        return Err(DataError::NegativeRv {
                            firm: f.clone(),
                            date: format_date(*d),
                        });
                    }
                }
            }
            Ok(())
        };
        check("rv", &rv)?;
        if let Some(b) = &bpv {
            check("bpv", b)?;
        }
        if let Some(q) = &rq {
            check("rq", q)?;
        }
        let jump = bpv.as_ref().map(|b| {
            rv.iter()
                .zip(b)
                .map(|(r, b)| r.iter().zip(b).map(|(&r, &b)| measures::compute_jump(r, b)).collect())
                .collect()
        });
        let rv_w = rv.iter().map(|s| trailing_or_missing(s, WEEKLY_WINDOW)).collect();
        let rv_m = rv.iter().map(|s| trailing_or_missing(s, MONTHLY_WINDOW)).collect();
        Ok(Self {
            firms,
            days,
            rv,
            bpv,
            rq,
            jump,
            rv_w,
            rv_m,
        })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn firm_index(&self, firm: &str) -> Result<usize, DataError> {
        self.firms
            .binary_search_by(|f| f.as_str().cmp(firm))
            .map_err(|_| DataError::UnknownFirm(firm.to_string()))
    }

    pub fn rv(&self, firm: usize) -> &[f64] {
        &self.rv[firm]
    }

    pub fn bpv(&self, firm: usize) -> Option<&[f64]> {
        self.bpv.as_ref().map(|b| b[firm].as_slice())
    }

    pub fn rq(&self, firm: usize) -> Option<&[f64]> {
        self.rq.as_ref().map(|q| q[firm].as_slice())
    }

    pub fn jump(&self, firm: usize) -> Option<&[f64]> {
        self.jump.as_ref().map(|j| j[firm].as_slice())
    }

    pub fn rv_weekly(&self, firm: usize) -> &[Option<f64>] {
        &self.rv_w[firm]
    }

    pub fn rv_monthly(&self, firm: usize) -> &[Option<f64>] {
        &self.rv_m[firm]
    }

    pub fn has_full_measures(&self) -> bool {
        self.bpv.is_some() && self.rq.is_some()
    }

    /// Restricts the panel to the days in `range` (half-open).
    pub fn slice_days(&self, range: std::ops::Range<usize>) -> Result<Self, DataError> {
        let cut = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.iter().map(|s| s[range.clone()].to_vec()).collect() };
        Self::build(
            self.firms.clone(),
            self.days[range.clone()].to_vec(),
            cut(&self.rv),
            self.bpv.as_ref().map(cut),
            self.rq.as_ref().map(cut),
        )
    }
}

fn trailing_or_missing(series: &[f64], window: usize) -> Vec<Option<f64>> {
    temporal_average(series, window, AverageMode::Trailing).unwrap_or_else(|_| vec![None; series.len()])
}

fn open_reader(path: &Path) -> Result<csv::Reader<Box<dyn Read>>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(Box::new(std::io::BufReader::new(file)) as Box<dyn Read>))
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>, DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

/// Reads a long CSV with header `date,firm,seq,return`.
pub fn load_intraday(path: impl AsRef<Path>) -> Result<IntradayPanel, DataError> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let (ci_date, ci_firm, ci_seq, ci_ret) = (
        column_index(&headers, "date")?,
        column_index(&headers, "firm")?,
        column_index(&headers, "seq")?,
        column_index(&headers, "return")?,
    );

    let mut data: BTreeMap<String, BTreeMap<NaiveDate, BTreeMap<i64, f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[ci_date])?;
        let firm = rec[ci_firm].to_string();
        let seq: i64 = rec[ci_seq].parse().map_err(|_| DataError::BadNumber {
            column: "seq".into(),
            value: rec[ci_seq].to_string(),
        })?;
        let ret = parse_number("return", &rec[ci_ret])?;
        if !ret.is_finite() {
            return Err(DataError::NonFiniteValue {
                firm,
                date: format_date(date),
            });
        }
        let day = data.entry(firm.clone()).or_default().entry(date).or_default();
        if day.insert(seq, ret).is_some() {
            return Err(DataError::Duplicate(format!(
                "firm `{firm}`, date {}, seq {seq}",
                format_date(date)
            )));
        }
    }
    if data.is_empty() {
        return Err(DataError::EmptyPanel);
    }

    let all_days: BTreeSet<NaiveDate> = data.values().flat_map(|m| m.keys().cloned()).collect();
    for (firm, per_day) in &data {
        if let Some(missing) = all_days.iter().find(|d| !per_day.contains_key(d)) {
            return Err(DataError::NonAlignedCalendar {
                firm: firm.clone(),
                date: format_date(*missing),
            });
        }
    }
    let days: Vec<NaiveDate> = all_days.into_iter().collect();
    let firms: Vec<String> = data.keys().cloned().collect();
    let returns = data
        .into_values()
        .map(|per_day| per_day.into_values().map(|s| s.into_values().collect()).collect())
        .collect();
    IntradayPanel::new(firms, days, returns)
}

pub fn write_intraday(panel: &IntradayPanel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = create_writer(path.as_ref())?;
    w.write_record(["date", "firm", "seq", "return"])?;
    for (d, day) in panel.days.iter().enumerate() {
        let ds = format_date(*day);
        for (f, firm) in panel.firms.iter().enumerate() {
            for (i, r) in panel.returns[f][d].iter().enumerate() {
                w.write_record([ds.as_str(), firm, &i.to_string(), &r.to_string()])?;
            }
        }
    }
    w.flush().map_err(io_err(path.as_ref()))?;
    Ok(())
}

/// A wide table keyed by date: one header cell per column, values as strings.
struct WideTable {
    columns: Vec<String>,
    days: Vec<NaiveDate>,
    /// `values[column][day]`
    values: Vec<Vec<f64>>,
}

fn read_wide(path: &Path) -> Result<WideTable, DataError> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("date") {
        return Err(DataError::MissingColumn("date".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(DataError::EmptyPanel);
    }
    let mut seen = BTreeSet::new();
    for c in &columns {
        if !seen.insert(c) {
            return Err(DataError::Duplicate(format!("column `{c}`")));
        }
    }
    let mut rows: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        let mut vals = Vec::with_capacity(columns.len());
        for (j, col) in columns.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("");
            if cell.is_empty() {
                return Err(DataError::NonAlignedCalendar {
                    firm: col.clone(),
                    date: format_date(date),
                });
            }
            let v = parse_number(col, cell)?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    firm: col.clone(),
                    date: format_date(date),
                });
            }
            vals.push(v);
        }
        if rows.insert(date, vals).is_some() {
            return Err(DataError::Duplicate(format!("date {}", format_date(date))));
        }
    }
    if rows.is_empty() {
        return Err(DataError::EmptyPanel);
    }
    let days: Vec<NaiveDate> = rows.keys().cloned().collect();
    let mut values = vec![Vec::with_capacity(days.len()); columns.len()];
    for row in rows.into_values() {
        for (j, v) in row.into_iter().enumerate() {
            values[j].push(v);
        }
    }
    Ok(WideTable { columns, days, values })
}

/// Reads a wide daily RV file: `date,<firm1>,<firm2>,...`.
///
/// Firms are reordered lexicographically and dates ascending.
pub fn load_daily_rv(path: impl AsRef<Path>) -> Result<RealizedPanel, DataError> {
    let table = read_wide(path.as_ref())?;
    let mut order: Vec<usize> = (0..table.columns.len()).collect();
    order.sort_by(|&a, &b| table.columns[a].cmp(&table.columns[b]));
    let firms = order.iter().map(|&i| table.columns[i].clone()).collect();
    let rv = order.iter().map(|&i| table.values[i].clone()).collect();
    RealizedPanel::from_rv(firms, table.days, rv)
}

pub fn write_daily_rv(panel: &RealizedPanel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = create_writer(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.firms.iter().cloned());
    w.write_record(&header)?;
    for (d, day) in panel.days.iter().enumerate() {
        let mut row = vec![format_date(*day)];
        row.extend(panel.rv.iter().map(|s| s[d].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

const MEASURE_SUFFIXES: [&str; 4] = ["rv", "bpv", "rq", "jump"];

/// Writes the full measure panel: `date,<firm>:rv,<firm>:bpv,<firm>:rq,<firm>:jump,...`.
pub fn write_measure_panel(panel: &RealizedPanel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let (bpv, rq, jump) = match (&panel.bpv, &panel.rq, &panel.jump) {
        (Some(b), Some(q), Some(j)) => (b, q, j),
        _ => return write_daily_rv(panel, path),
    };
    let mut w = create_writer(path)?;
    let mut header = vec!["date".to_string()];
    for f in &panel.firms {
        header.extend(MEASURE_SUFFIXES.iter().map(|s| format!("{f}:{s}")));
    }
    w.write_record(&header)?;
    for (d, day) in panel.days.iter().enumerate() {
        let mut row = vec![format_date(*day)];
        for f in 0..panel.firms.len() {
            for m in [&panel.rv, bpv, rq, jump] {
                row.push(m[f][d].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Loads either a measure panel (columns `<firm>:rv` etc.) or a plain wide RV file.
pub fn load_panel(path: impl AsRef<Path>) -> Result<RealizedPanel, DataError> {
    let path = path.as_ref();
    let table = read_wide(path)?;
    if !table.columns.iter().any(|c| c.contains(':')) {
        return load_daily_rv(path);
    }
    let mut by_firm: BTreeMap<String, [Option<usize>; 4]> = BTreeMap::new();
    for (j, col) in table.columns.iter().enumerate() {
        let (firm, suffix) = col
            .rsplit_once(':')
            .ok_or_else(|| DataError::MissingColumn(format!("{col}:<measure>")))?;
        let k = MEASURE_SUFFIXES
            .iter()
            .position(|s| *s == suffix)
            .ok_or_else(|| DataError::MissingColumn(format!("{firm}:{{rv,bpv,rq,jump}}")))?;
        by_firm.entry(firm.to_string()).or_default()[k] = Some(j);
    }
    let mut firms = Vec::new();
    let (mut rv, mut bpv, mut rq) = (Vec::new(), Vec::new(), Vec::new());
    for (firm, cols) in by_firm {
        for (k, name) in MEASURE_SUFFIXES.iter().enumerate().take(3) {
            if cols[k].is_none() {
                return Err(DataError::MissingColumn(format!("{firm}:{name}")));
            }
        }
        rv.push(table.values[cols[0].unwrap()].clone());
        bpv.push(table.values[cols[1].unwrap()].clone());
        rq.push(table.values[cols[2].unwrap()].clone());
        firms.push(firm);
    }
    RealizedPanel::from_measures(firms, table.days, rv, bpv, rq)
}

/// One row of the per-firm descriptive table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub firm: String,
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// OLS slope of RV_t on RV_{t−1} with intercept; `None` when the lagged series is constant.
    pub ar1: Option<f64>,
}

pub fn summarize(panel: &RealizedPanel) -> Result<Vec<SummaryRow>, DataError> {
    panel
        .firms
        .iter()
        .zip(&panel.rv)
        .map(|(firm, s)| summarize_series(firm, s))
        .collect()
}

fn summarize_series(firm: &str, s: &[f64]) -> Result<SummaryRow, DataError> {
    let n = s.len();
    if n < 2 {
        return Err(DataError::TooFewObservations {
            firm: firm.to_string(),
            count: n,
        });
    }
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(SummaryRow {
        firm: firm.to_string(),
        n,
        min: sorted[0],
        mean: s.iter().sum::<f64>() / n as f64,
        median,
        max: sorted[n - 1],
        ar1: ar1_slope(s),
    })
}

fn ar1_slope(s: &[f64]) -> Option<f64> {
    let x = &s[..s.len() - 1];
    let y = &s[1..];
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-300) || sxx <= 1e-24 * mx.abs().max(1.0) * k {
        return None;
    }
    Some(sxy / sxx)
}

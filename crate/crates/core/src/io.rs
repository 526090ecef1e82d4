//! CSV persistence for instances, allocations, training data and ground truth.
//!
//! Every file carries a header row. Floats are written with Rust's shortest
//! round-trip formatting, so a write followed by a read restores values bit
//! for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::domain::{AllocationInstance, AllocationResult, Assignment, Customer, Fund, RevenueMatrix};
use crate::error::{Error, Result};
use crate::predictor::LabeledSample;
use crate::synth::GroundTruth;

pub const CUSTOMERS_FILE: &str = "customers.csv";
pub const FUNDS_FILE: &str = "funds.csv";
pub const REVENUE_FILE: &str = "revenue.csv";
pub const ALLOCATION_FILE: &str = "allocation.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const TRUTH_FILE: &str = "truth.csv";

/// Where an instance lives on disk. Without a revenue file every risk-eligible
/// cell is zero, ready for `predict_matrix` to fill in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstancePaths {
    pub customers: PathBuf,
    pub funds: PathBuf,
    pub revenue: Option<PathBuf>,
}

impl InstancePaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            customers: dir.join(CUSTOMERS_FILE),
            funds: dir.join(FUNDS_FILE),
            revenue: Some(dir.join(REVENUE_FILE)),
        }
    }
}

/// A header-checked CSV file held in memory.
struct Table {
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            line,
            column: len.min(expected_len) as usize + 1,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
            line,
            column: err.field() + 1,
            message: "invalid UTF-8".into(),
        },
        other => Error::Parse {
            line,
            column: 1,
            message: format!("{other:?}"),
        },
    }
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    /// Columns `{prefix}0, {prefix}1, ...` in numeric order. The indices must
    /// be contiguous from zero.
    fn numbered(&self, prefix: &str) -> Result<Vec<usize>> {
        let mut found: Vec<(usize, usize)> = Vec::new();
        for (col, h) in self.headers.iter().enumerate() {
            if let Some(rest) = h.strip_prefix(prefix) {
                let idx = rest.parse::<usize>().map_err(|_| Error::Parse {
                    line: 1,
                    column: col + 1,
                    message: format!("bad feature column name '{h}'"),
                })?;
                found.push((idx, col));
            }
        }
        found.sort_unstable();
        for (want, &(idx, _)) in found.iter().enumerate() {
            if idx != want {
                return Err(Error::Schema(format!("{prefix}{want}")));
            }
        }
        Ok(found.into_iter().map(|(_, col)| col).collect())
    }
}

fn field<T: FromStr>(line: u64, record: &csv::StringRecord, col: usize) -> Result<T> {
    let raw = record.get(col).unwrap_or("").trim();
    raw.parse::<T>().map_err(|_| Error::Parse {
        line,
        column: col + 1,
        message: format!("cannot parse '{raw}'"),
    })
}

fn float(line: u64, record: &csv::StringRecord, col: usize) -> Result<f64> {
    let v: f64 = field(line, record, col)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column: col + 1,
            message: format!("non-finite value {v}"),
        });
    }
    Ok(v)
}

fn features(line: u64, record: &csv::StringRecord, cols: &[usize]) -> Result<Vec<f64>> {
    cols.iter().map(|&c| float(line, record, c)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn header(out: &mut impl Write, fixed: &[&str], prefix: &str, n: usize) -> Result<()> {
    let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    cols.extend((0..n).map(|i| format!("{prefix}{i}")));
    writeln!(out, "{}", cols.join(","))?;
    Ok(())
}

fn write_floats(out: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        write!(out, ",{v}")?;
    }
    Ok(())
}

fn width<T>(items: &[T], len: impl Fn(&T) -> usize, what: &str) -> Result<usize> {
    let n = items.first().map_or(0, &len);
    if items.iter().any(|x| len(x) != n) {
        return Err(Error::DimMismatch(format!(
            "{what} rows have differing feature counts"
        )));
    }
    Ok(n)
}

pub fn read_customers(path: &Path) -> Result<Vec<Customer>> {
    let t = Table::read(path)?;
    let id = t.column("id")?;
    let tol = t.column("risk_tolerance")?;
    let feats = t.numbered("feat_")?;
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(Customer {
                id: field(*line, r, id)?,
                risk_tolerance: field(*line, r, tol)?,
                features: features(*line, r, &feats)?,
            })
        })
        .collect()
}

pub fn read_funds(path: &Path) -> Result<Vec<Fund>> {
    let t = Table::read(path)?;
    let id = t.column("id")?;
    let level = t.column("risk_level")?;
    let demand = t.column("demand")?;
    let feats = t.numbered("feat_")?;
    t.rows
        .iter()
        .map(|(line, r)| {
            Ok(Fund {
                id: field(*line, r, id)?,
                risk_level: field(*line, r, level)?,
                demand: field(*line, r, demand)?,
                features: features(*line, r, &feats)?,
            })
        })
        .collect()
}

/// Sparse revenue listing; pairs that do not appear are ineligible.
pub fn read_revenue(path: &Path, customers: &[Customer], funds: &[Fund]) -> Result<RevenueMatrix> {
    let t = Table::read(path)?;
    let (cu, fu, val) = (t.column("customer_id")?, t.column("fund_id")?, t.column("value")?);
    let customer_at: std::collections::HashMap<u64, usize> =
        customers.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let fund_at: std::collections::HashMap<u64, usize> =
        funds.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
    let m = funds.len();
    let mut values = vec![0.0; customers.len() * m];
    let mut eligible = vec![false; customers.len() * m];
    for (line, r) in &t.rows {
        let unknown = |col: usize, what: &str, id: u64| Error::Parse {
            line: *line,
            column: col + 1,
            message: format!("unknown {what} id {id}"),
        };
        let c_id: u64 = field(*line, r, cu)?;
        let f_id: u64 = field(*line, r, fu)?;
        let u = *customer_at
            .get(&c_id)
            .ok_or_else(|| unknown(cu, "customer", c_id))?;
        let f = *fund_at.get(&f_id).ok_or_else(|| unknown(fu, "fund", f_id))?;
        let cell = u * m + f;
        if eligible[cell] {
            return Err(Error::Parse {
                line: *line,
                column: 1,
                message: format!("duplicate pair ({c_id}, {f_id})"),
            });
        }
        let v = float(*line, r, val)?;
        if v < 0.0 {
            return Err(Error::Parse {
                line: *line,
                column: val + 1,
                message: format!("negative revenue {v}"),
            });
        }
        values[cell] = v;
        eligible[cell] = true;
    }
    RevenueMatrix::new(customers.len(), m, values, eligible)
}

/// Reads an instance. `risk_levels` defaults to the largest level present.
pub fn read_instance(
    paths: &InstancePaths,
    k: usize,
    risk_levels: Option<u32>,
) -> Result<AllocationInstance> {
    let customers = read_customers(&paths.customers)?;
    let funds = read_funds(&paths.funds)?;
    let revenue = match &paths.revenue {
        Some(p) => read_revenue(p, &customers, &funds)?,
        None => RevenueMatrix::zeros(customers.len(), funds.len()),
    };
    let observed = customers
        .iter()
        .map(|c| c.risk_tolerance)
        .chain(funds.iter().map(|f| f.risk_level))
        .max()
        .unwrap_or(1)
        .max(1);
    AllocationInstance::with_risk_levels(customers, funds, revenue, k, risk_levels.unwrap_or(observed))
}

pub fn write_customers(customers: &[Customer], path: &Path) -> Result<()> {
    let dim = width(customers, |c| c.features.len(), "customer")?;
    let mut out = create(path)?;
    header(&mut out, &["id", "risk_tolerance"], "feat_", dim)?;
    for c in customers {
        write!(out, "{},{}", c.id, c.risk_tolerance)?;
        write_floats(&mut out, &c.features)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_funds(funds: &[Fund], path: &Path) -> Result<()> {
    let dim = width(funds, |f| f.features.len(), "fund")?;
    let mut out = create(path)?;
    header(&mut out, &["id", "risk_level", "demand"], "feat_", dim)?;
    for f in funds {
        write!(out, "{},{},{}", f.id, f.risk_level, f.demand)?;
        write_floats(&mut out, &f.features)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Eligible cells only, row-major.
pub fn write_revenue(
    revenue: &RevenueMatrix,
    customers: &[Customer],
    funds: &[Fund],
    path: &Path,
) -> Result<()> {
    if revenue.n_customers() != customers.len() || revenue.n_funds() != funds.len() {
        return Err(Error::DimMismatch("revenue shape does not match entities".into()));
    }
    let mut out = create(path)?;
    writeln!(out, "customer_id,fund_id,value")?;
    for (u, c) in customers.iter().enumerate() {
        for (f, fund) in funds.iter().enumerate() {
            if let Some(v) = revenue.get(u, f) {
                writeln!(out, "{},{},{v}", c.id, fund.id)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_instance(instance: &AllocationInstance, paths: &InstancePaths) -> Result<()> {
    write_customers(&instance.customers, &paths.customers)?;
    write_funds(&instance.funds, &paths.funds)?;
    if let Some(p) = &paths.revenue {
        write_revenue(&instance.revenue, &instance.customers, &instance.funds, p)?;
    }
    Ok(())
}

/// `customer_id,fund_id` for every assigned pair.
pub fn write_result(result: &AllocationResult, instance: &AllocationInstance, path: &Path) -> Result<()> {
    let x = &result.assignment;
    if x.n_customers() != instance.n_customers() || x.n_funds() != instance.n_funds() {
        return Err(Error::DimMismatch(
            "assignment shape does not match instance".into(),
        ));
    }
    let mut out = create(path)?;
    writeln!(out, "customer_id,fund_id")?;
    for (u, f) in x.pairs() {
        writeln!(out, "{},{}", instance.customers[u].id, instance.funds[f].id)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an allocation and scores it against the instance's revenue.
pub fn read_result(path: &Path, instance: &AllocationInstance) -> Result<AllocationResult> {
    let t = Table::read(path)?;
    let (cu, fu) = (t.column("customer_id")?, t.column("fund_id")?);
    let mut x = Assignment::empty(instance.n_customers(), instance.n_funds());
    for (line, r) in &t.rows {
        let c_id: u64 = field(*line, r, cu)?;
        let f_id: u64 = field(*line, r, fu)?;
        let u = instance.customer_index(c_id).ok_or_else(|| Error::Parse {
            line: *line,
            column: cu + 1,
            message: format!("unknown customer id {c_id}"),
        })?;
        let f = instance.fund_index(f_id).ok_or_else(|| Error::Parse {
            line: *line,
            column: fu + 1,
            message: format!("unknown fund id {f_id}"),
        })?;
        x.set(u, f, true);
    }
    AllocationResult::evaluate(x, &instance.revenue)
}

/// `cust_feat_*, fund_feat_*, y, R`.
pub fn write_training_data(samples: &[LabeledSample], path: &Path) -> Result<()> {
    let cd = width(samples, |s| s.customer_features.len(), "training")?;
    let fd = width(samples, |s| s.fund_features.len(), "training")?;
    let mut out = create(path)?;
    let mut cols: Vec<String> = (0..cd).map(|i| format!("cust_feat_{i}")).collect();
    cols.extend((0..fd).map(|i| format!("fund_feat_{i}")));
    cols.extend(["y".to_string(), "R".to_string()]);
    writeln!(out, "{}", cols.join(","))?;
    for s in samples {
        let mut first = true;
        for v in s.customer_features.iter().chain(&s.fund_features) {
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        if !first {
            write!(out, ",")?;
        }
        writeln!(out, "{},{}", u8::from(s.converted), s.revenue)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_training_data(path: &Path) -> Result<Vec<LabeledSample>> {
    let t = Table::read(path)?;
    let cust = t.numbered("cust_feat_")?;
    let fund = t.numbered("fund_feat_")?;
    let (y, rev) = (t.column("y")?, t.column("R")?);
    t.rows
        .iter()
        .map(|(line, r)| {
            let label: u8 = field(*line, r, y)?;
            if label > 1 {
                return Err(Error::Parse {
                    line: *line,
                    column: y + 1,
                    message: format!("label must be 0 or 1, got {label}"),
                });
            }
            let revenue = float(*line, r, rev)?;
            if revenue < 0.0 || (label == 0 && revenue != 0.0) {
                return Err(Error::Parse {
                    line: *line,
                    column: rev + 1,
                    message: format!("revenue {revenue} inconsistent with label {label}"),
                });
            }
            Ok(LabeledSample {
                customer_features: features(*line, r, &cust)?,
                fund_features: features(*line, r, &fund)?,
                converted: label == 1,
                revenue,
            })
        })
        .collect()
}

/// `customer_id, fund_id, p_star, mu_star, sigma_star` for every pair.
pub fn write_truth(truth: &GroundTruth, instance: &AllocationInstance, path: &Path) -> Result<()> {
    if truth.n_customers != instance.n_customers() || truth.n_funds != instance.n_funds() {
        return Err(Error::DimMismatch(
            "ground truth shape does not match instance".into(),
        ));
    }
    let mut out = create(path)?;
    writeln!(out, "customer_id,fund_id,p_star,mu_star,sigma_star")?;
    for (u, c) in instance.customers.iter().enumerate() {
        for (f, fund) in instance.funds.iter().enumerate() {
            let t = truth.get(u, f);
            writeln!(out, "{},{},{},{},{}", c.id, fund.id, t.p_c, t.mu, t.sigma)?;
        }
    }
    out.flush()?;
    Ok(())
}

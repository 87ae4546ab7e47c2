//! CSV formats and atomic file output.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a table back reproduces every cell exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use drcap_core::distributed::{NegotiationOutcome, TrajectoryRow};
use drcap_core::flexcommit::SweepPoint;
use drcap_core::ingest::TraceSeries;
use drcap_core::model::{CustomerId, ScenarioSet};

use crate::error::{Error, Result};

/// A CSV table held as text cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| num(v)).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses column `name` as floats.
    pub fn f64_column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        self.rows.iter().map(|r| r[c].parse().ok()).collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn from_csv(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let header = rd
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(rec.map_err(|e| csv_error(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv())
    }
}

/// Shortest text that parses back to exactly `v`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::ErrorKind::InvalidInput.into()))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Parses `timestamp,customer_id,load_kw` rows into one series per
/// customer, sorted by customer id.
pub fn parse_traces(bytes: &[u8], path: &Path) -> Result<Vec<TraceSeries>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rd.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column {name}")))
    };
    let (ct, cc, cl) = (col("timestamp")?, col("customer_id")?, col("load_kw")?);
    let mut by_customer: BTreeMap<usize, Vec<(i64, f64)>> = BTreeMap::new();
    let mut first_line: BTreeMap<usize, u64> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize, what: &str| {
            rec.get(c)
                .ok_or_else(|| Error::parse(path, line, format!("missing {what}")))
        };
        let ts: i64 = field(ct, "timestamp")?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("timestamp: {e}")))?;
        let id: usize = field(cc, "customer_id")?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("customer_id: {e}")))?;
        let load: f64 = field(cl, "load_kw")?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("load_kw: {e}")))?;
        if !load.is_finite() {
            return Err(Error::parse(path, line, "load_kw is not finite"));
        }
        by_customer.entry(id).or_default().push((ts, load));
        first_line.entry(id).or_insert(line);
    }
    by_customer
        .into_iter()
        .map(|(id, samples)| {
            TraceSeries::new(CustomerId(id), samples)
                .map_err(|e| Error::parse(path, first_line[&id], format!("customer {id}: {e}")))
        })
        .collect()
}

pub fn load_traces(path: &Path) -> Result<Vec<TraceSeries>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_traces(&bytes, path)
}

/// `t,weight,D,r,delta_0..delta_{n-1},a_0..a_{n-1}`.
pub fn scenario_table(s: &ScenarioSet) -> Table {
    let n = s.customers();
    let mut header: Vec<String> = ["t", "weight", "D", "r"].iter().map(|h| h.to_string()).collect();
    header.extend((0..n).map(|i| format!("delta_{i}")));
    header.extend((0..n).map(|i| format!("a_{i}")));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for t in 0..s.len() {
        let mut row = vec![t.to_string(), num(s.weight(t)), num(s.d(t)), num(s.r(t))];
        row.extend(s.delta(t).iter().chain(s.a(t)).map(|&v| num(v)));
        table.rows.push(row);
    }
    table
}

/// Inverse of [`scenario_table`]. Only shapes are checked; value invariants
/// are left to `validate_scenarios`.
pub fn scenarios_from_table(table: &Table, path: &Path) -> Result<ScenarioSet> {
    let h = &table.header;
    if h.len() < 4 || h[..4] != ["t", "weight", "D", "r"] || !(h.len() - 4).is_multiple_of(2) {
        return Err(Error::parse(path, 1, "expected header t,weight,D,r,delta_*,a_*"));
    }
    let n = (h.len() - 4) / 2;
    for i in 0..n {
        if h[4 + i] != format!("delta_{i}") || h[4 + n + i] != format!("a_{i}") {
            return Err(Error::parse(
                path,
                1,
                format!("unexpected column order near customer {i}"),
            ));
        }
    }
    let t_len = table.rows.len();
    let (mut d, mut r, mut w) = (
        Vec::with_capacity(t_len),
        Vec::with_capacity(t_len),
        Vec::with_capacity(t_len),
    );
    let mut delta = Vec::with_capacity(t_len * n);
    let mut a = Vec::with_capacity(t_len * n);
    for (k, row) in table.rows.iter().enumerate() {
        let line = k as u64 + 2;
        let num = |c: usize| -> Result<f64> {
            row[c]
                .parse()
                .map_err(|e| Error::parse(path, line, format!("{}: {e}", h[c])))
        };
        let t: usize = row[0]
            .parse()
            .map_err(|e| Error::parse(path, line, format!("t: {e}")))?;
        if t != k {
            return Err(Error::parse(path, line, format!("expected t = {k}")));
        }
        w.push(num(1)?);
        d.push(num(2)?);
        r.push(num(3)?);
        for c in 4..4 + n {
            delta.push(num(c)?);
        }
        for c in 4 + n..4 + 2 * n {
            a.push(num(c)?);
        }
    }
    Ok(ScenarioSet::new(n, d, r, delta, a, w)?)
}

pub fn write_scenarios(path: &Path, s: &ScenarioSet) -> Result<()> {
    scenario_table(s).write(path)
}

pub fn read_scenarios(path: &Path) -> Result<ScenarioSet> {
    scenarios_from_table(&Table::read(path)?, path)
}

/// `k,eta,gap_norm,objective,pi_0,lambda_0,mu_0,...`.
pub fn trajectory_table(rows: &[TrajectoryRow], n: usize) -> Table {
    let mut header: Vec<String> = ["k", "eta", "gap_norm", "objective"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    for i in 0..n {
        header.extend([format!("pi_{i}"), format!("lambda_{i}"), format!("mu_{i}")]);
    }
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for r in rows {
        let mut row = vec![r.k.to_string(), num(r.eta), num(r.gap_norm), num(r.objective)];
        row.extend(r.prices.0.iter().flatten().map(|&v| num(v)));
        table.rows.push(row);
    }
    table
}

/// `customer_id,alpha,beta,gamma,payment`.
pub fn contract_table(out: &NegotiationOutcome) -> Table {
    let mut table = Table::new(["customer_id", "alpha", "beta", "gamma", "payment"]);
    for (i, pay) in out.payments.iter().enumerate() {
        let [a, b, g] = out.solution.params.triple(i);
        table.push(vec![i.to_string(), num(a), num(b), num(g), num(*pay)]);
    }
    table
}

/// `rho,social_cost,mean_optout_fraction`, costs multiplied by `scale`.
pub fn sweep_table(points: &[SweepPoint], scale: f64) -> Table {
    let mut table = Table::new(["rho", "social_cost", "mean_optout_fraction"]);
    for p in points {
        table.push_f64(&[p.rho, p.social_cost * scale, p.mean_optout_fraction]);
    }
    table
}

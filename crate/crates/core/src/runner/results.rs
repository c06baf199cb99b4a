//! Sweep results and their CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 7] = ["experiment", "d_z", "rep", "metric", "value", "stderr", "status"];
pub const AGGREGATES_HEADER: [&str; 6] = ["experiment", "d_z", "metric", "mean", "std", "count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// Monte Carlo standard error, `NaN` when not applicable.
    pub stderr: f64,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Metric {
            name: name.into(),
            value,
            stderr: f64::NAN,
        }
    }

    pub fn with_stderr(name: impl Into<String>, value: f64, stderr: f64) -> Self {
        Metric {
            name: name.into(),
            value,
            stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub experiment: String,
    pub d_z: usize,
    pub rep: usize,
    pub status: CellStatus,
    pub metrics: Vec<Metric>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    fn key(&self) -> (String, usize, usize) {
        (self.experiment.clone(), self.d_z, self.rep)
    }
}

/// Mean and standard deviation over repetitions (successful cells only).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub experiment: String,
    pub d_z: usize,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation (`n - 1`); 0 for a single repetition.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl SweepResult {
    /// Sorts cells by (experiment, d_z, rep) and recomputes the aggregates.
    pub fn from_cells(mut cells: Vec<CellResult>) -> Self {
        cells.sort_by_key(CellResult::key);
        cells.dedup_by(|a, b| a.key() == b.key());
        let mut groups: BTreeMap<(String, usize), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        let mut order: BTreeMap<(String, usize), Vec<String>> = BTreeMap::new();
        for c in cells.iter().filter(|c| c.is_ok()) {
            let key = (c.experiment.clone(), c.d_z);
            let g = groups.entry(key.clone()).or_default();
            let names = order.entry(key).or_default();
            for m in &c.metrics {
                if !g.contains_key(&m.name) {
                    names.push(m.name.clone());
                }
                g.entry(m.name.clone()).or_default().push(m.value);
            }
        }
        let mut aggregates = Vec::new();
        for (key, names) in order {
            let g = &groups[&key];
            for name in names {
                let (mean, std) = mean_std(&g[&name]);
                aggregates.push(Aggregate {
                    experiment: key.0.clone(),
                    d_z: key.1,
                    metric: name.clone(),
                    mean,
                    std,
                    count: g[&name].len(),
                });
            }
        }
        SweepResult { cells, aggregates }
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }

    pub fn experiments(&self) -> Vec<String> {
        let mut v: Vec<String> = self.cells.iter().map(|c| c.experiment.clone()).collect();
        v.dedup();
        v
    }

    /// `(d_z, mean, std)` of one metric, ascending in `d_z`.
    pub fn curve(&self, experiment: &str, metric: &str) -> Vec<(usize, f64, f64)> {
        self.aggregates
            .iter()
            .filter(|a| a.experiment == experiment && a.metric == metric)
            .map(|a| (a.d_z, a.mean, a.std))
            .collect()
    }

    pub fn mean(&self, experiment: &str, d_z: usize, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.experiment == experiment && a.d_z == d_z && a.metric == metric)
            .map(|a| a.mean)
    }

    /// Only the cells of one experiment.
    pub fn select(&self, experiment: &str) -> SweepResult {
        SweepResult::from_cells(self.cells.iter().filter(|c| c.experiment == experiment).cloned().collect())
    }
}

fn status_text(s: &CellStatus) -> String {
    match s {
        CellStatus::Ok => "ok".into(),
        CellStatus::Failed(m) => format!("failed: {m}"),
    }
}

/// Raw rows, one per (experiment, d_z, rep, metric). A failed cell is one
/// row with metric `error` and `NaN` values.
pub fn write_results<W: Write>(cells: &[CellResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for c in cells {
        append_cell(&mut out, c)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn append_cell<W: Write>(out: &mut csv::Writer<W>, c: &CellResult) -> Result<()> {
    let status = status_text(&c.status);
    let (d_z, rep) = (c.d_z.to_string(), c.rep.to_string());
    if !c.is_ok() {
        out.write_record([c.experiment.as_str(), &d_z, &rep, "error", "NaN", "NaN", &status])?;
        return Ok(());
    }
    for m in &c.metrics {
        out.write_record([
            c.experiment.as_str(),
            &d_z,
            &rep,
            &m.name,
            &m.value.to_string(),
            &m.stderr.to_string(),
            &status,
        ])?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Format {
        path: "<csv>".into(),
        reason: format!("column {what}: cannot parse {raw:?}"),
    })
}

/// Inverse of [`write_results`].
pub fn read_results<R: Read>(r: R) -> Result<Vec<CellResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(Error::Format {
            path: "<csv>".into(),
            reason: format!("unexpected header {:?}", header),
        });
    }
    let mut cells: Vec<CellResult> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let experiment = rec.get(0).unwrap_or("").to_string();
        let d_z: usize = parse_field(&rec, 1, "d_z")?;
        let rep: usize = parse_field(&rec, 2, "rep")?;
        let status_raw = rec.get(6).unwrap_or("");
        let status = match status_raw {
            "ok" => CellStatus::Ok,
            s => CellStatus::Failed(s.strip_prefix("failed: ").unwrap_or(s).to_string()),
        };
        let same = cells
            .last()
            .is_some_and(|c| c.experiment == experiment && c.d_z == d_z && c.rep == rep);
        if !same {
            cells.push(CellResult {
                experiment,
                d_z,
                rep,
                status: status.clone(),
                metrics: Vec::new(),
            });
        }
        if status == CellStatus::Ok {
            cells.last_mut().expect("pushed above").metrics.push(Metric {
                name: rec.get(3).unwrap_or("").to_string(),
                value: parse_field(&rec, 4, "value")?,
                stderr: parse_field(&rec, 5, "stderr")?,
            });
        }
    }
    Ok(cells)
}

pub fn write_aggregates<W: Write>(aggs: &[Aggregate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATES_HEADER)?;
    for a in aggs {
        out.write_record([
            a.experiment.as_str(),
            &a.d_z.to_string(),
            &a.metric,
            &a.mean.to_string(),
            &a.std.to_string(),
            &a.count.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_aggregates<R: Read>(r: R) -> Result<Vec<Aggregate>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(Aggregate {
            experiment: rec.get(0).unwrap_or("").to_string(),
            d_z: parse_field(&rec, 1, "d_z")?,
            metric: rec.get(2).unwrap_or("").to_string(),
            mean: parse_field(&rec, 3, "mean")?,
            std: parse_field(&rec, 4, "std")?,
            count: parse_field(&rec, 5, "count")?,
        });
    }
    Ok(out)
}

/// Writes `results.csv` and `aggregates.csv` into `dir`.
pub fn emit_csv(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("results.csv");
    write_results(&result.cells, std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?)?;
    let p = dir.join("aggregates.csv");
    write_aggregates(&result.aggregates, std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?)
}

/// Reads `results.csv` from `dir`; aggregates are recomputed from the rows.
pub fn load_csv(dir: &Path) -> Result<SweepResult> {
    let p = dir.join("results.csv");
    let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
    Ok(SweepResult::from_cells(read_results(f)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(d_z: usize, rep: usize, v: f64) -> CellResult {
        CellResult {
            experiment: "e".into(),
            d_z,
            rep,
            status: CellStatus::Ok,
            metrics: vec![Metric::with_stderr("r_m", v, 0.01), Metric::new("loss", v / 3.0)],
        }
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        write_results(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,d_z,rep,metric,value,stderr,status\n");
    }

    #[test]
    fn round_trip_including_failures() {
        let mut cells = vec![cell(1, 0, 0.1), cell(1, 1, 0.7 / 3.0), cell(2, 0, 1e-17)];
        cells.push(CellResult {
            experiment: "e".into(),
            d_z: 2,
            rep: 1,
            status: CellStatus::Failed("loss went non-finite, \"boom\"".into()),
            metrics: vec![],
        });
        let r = SweepResult::from_cells(cells);
        let mut buf = Vec::new();
        write_results(&r.cells, &mut buf).unwrap();
        let back = SweepResult::from_cells(read_results(buf.as_slice()).unwrap());
        assert_eq!(back.cells.len(), 4);
        for (a, b) in back.cells.iter().zip(&r.cells) {
            assert_eq!(a.status, b.status);
            assert_eq!(a.metrics.len(), b.metrics.len());
            for (x, y) in a.metrics.iter().zip(&b.metrics) {
                assert_eq!(x.value.to_bits(), y.value.to_bits());
            }
        }
        assert_eq!(back.aggregates, r.aggregates);
        assert_eq!(r.failed(), 1);
    }

    #[test]
    fn aggregates_use_sample_std() {
        let r = SweepResult::from_cells(vec![cell(3, 0, 1.0), cell(3, 1, 2.0), cell(3, 2, 3.0)]);
        let a = r.aggregates.iter().find(|a| a.metric == "r_m").unwrap();
        assert_eq!((a.mean, a.std, a.count), (2.0, 1.0, 3));
    }
}

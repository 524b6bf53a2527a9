//! CSV and JSON file formats.
//!
//! All tables are long format with a header row. Floats are written in shortest
//! round-trip form, so reading a file back gives bit-identical values.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use cropcast::data::{CovariatePanel, RegionMeta, YieldPanel};
use cropcast::forecast::{summarize, ForecastDistribution};
use cropcast::matrix::Matrix;
use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Core ETCCDI climate extreme index names. Other names are accepted with a warning.
pub const ETCCDI_INDICES: [&str; 27] = [
    "TXx", "TNx", "TXn", "TNn", "SU", "TR", "FD", "ID", "GSL", "DTR", "TN10p", "TX10p", "TN90p", "TX90p", "WSDI",
    "CSDI", "PRCPTOT", "SDII", "R10mm", "R20mm", "Rnnmm", "RX1day", "RX5day", "CDD", "CWD", "R95pTOT", "R99pTOT",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct YieldRecord {
    region_id: String,
    year: i32,
    #[serde(rename = "yield")]
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CovariateRecord {
    region_id: String,
    year: i32,
    index_name: String,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathRecord {
    region: String,
    year: i32,
    path_id: usize,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FanRecord {
    region: String,
    year: i32,
    mean: f64,
    q025: f64,
    q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PseudoObsRecord {
    region_id: String,
    year: i32,
    u: f64,
}

/// One `(model, region, metric, value)` line of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub region: String,
    pub metric: String,
    pub value: f64,
}

/// Distinct values in order of first appearance.
fn first_seen<T: Clone + Eq + std::hash::Hash>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut seen = HashSet::new();
    items.filter(|v| seen.insert(v.clone())).collect()
}

fn read_records<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::format(path, format!("record {}: {e}", i + 1))))
        .collect()
}

fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    for r in records {
        writer.serialize(r).map_err(|e| CliError::format(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_regions(path: &Path) -> CliResult<Vec<RegionMeta>> {
    let regions: Vec<RegionMeta> = read_records(path)?;
    let mut seen = BTreeSet::new();
    for r in &regions {
        if !seen.insert(r.region_id.as_str()) {
            return Err(CliError::format(path, format!("region {} listed twice", r.region_id)));
        }
    }
    if regions.is_empty() {
        return Err(CliError::format(path, "no regions"));
    }
    Ok(regions)
}

pub fn write_regions(path: &Path, regions: &[RegionMeta]) -> CliResult<()> {
    write_records(path, regions)
}

fn region_positions(regions: &[RegionMeta]) -> HashMap<&str, usize> {
    regions.iter().enumerate().map(|(i, r)| (r.region_id.as_str(), i)).collect()
}

/// Reads the yield table into a complete region-by-year panel. Regions keep the order of
/// `regions`; years are sorted.
pub fn read_yields(path: &Path, regions: &[RegionMeta]) -> CliResult<YieldPanel> {
    let records: Vec<YieldRecord> = read_records(path)?;
    let pos = region_positions(regions);
    let years: Vec<i32> = records.iter().map(|r| r.year).collect::<BTreeSet<_>>().into_iter().collect();
    if years.is_empty() {
        return Err(CliError::format(path, "no yield records"));
    }
    let year_pos: HashMap<i32, usize> = years.iter().enumerate().map(|(i, y)| (*y, i)).collect();
    let mut values = Matrix::filled(regions.len(), years.len(), f64::NAN);
    let mut filled = vec![false; regions.len() * years.len()];
    for r in &records {
        let d = *pos
            .get(r.region_id.as_str())
            .ok_or_else(|| CliError::format(path, format!("unknown region {}", r.region_id)))?;
        let t = year_pos[&r.year];
        if std::mem::replace(&mut filled[d * years.len() + t], true) {
            return Err(CliError::format(path, format!("duplicate yield for {} in {}", r.region_id, r.year)));
        }
        values[(d, t)] = r.value;
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        return Err(CliError::format(
            path,
            format!("missing yield for {} in {}", regions[i / years.len()].region_id, years[i % years.len()]),
        ));
    }
    Ok(YieldPanel::new(regions.to_vec(), years, values)?)
}

pub fn write_yields(path: &Path, panel: &YieldPanel) -> CliResult<()> {
    let records = panel.regions.iter().enumerate().flat_map(|(d, r)| {
        panel.years.iter().enumerate().map(move |(t, &year)| YieldRecord {
            region_id: r.region_id.clone(),
            year,
            value: panel.values[(d, t)],
        })
    });
    write_records(path, records)
}

/// Reads the long covariate table onto the given regions and years. Indices keep their
/// order of first appearance.
pub fn read_covariates(path: &Path, regions: &[RegionMeta], years: &[i32]) -> CliResult<CovariatePanel> {
    let records: Vec<CovariateRecord> = read_records(path)?;
    let pos = region_positions(regions);
    let year_pos: HashMap<i32, usize> = years.iter().enumerate().map(|(i, y)| (*y, i)).collect();
    let mut names: Vec<String> = Vec::new();
    let mut name_pos: HashMap<String, usize> = HashMap::new();
    for r in &records {
        if !name_pos.contains_key(&r.index_name) {
            name_pos.insert(r.index_name.clone(), names.len());
            names.push(r.index_name.clone());
        }
    }
    for n in &names {
        if !ETCCDI_INDICES.contains(&n.as_str()) {
            warn!("{}: index {n} is not a core ETCCDI index", path.display());
        }
    }
    let (m, t_len) = (names.len(), years.len());
    let mut values = vec![Matrix::filled(m, t_len, f64::NAN); regions.len()];
    let mut filled = vec![false; regions.len() * m * t_len];
    for r in &records {
        let d = *pos
            .get(r.region_id.as_str())
            .ok_or_else(|| CliError::format(path, format!("unknown region {}", r.region_id)))?;
        let t = *year_pos
            .get(&r.year)
            .ok_or_else(|| CliError::format(path, format!("year {} has no yields", r.year)))?;
        let k = name_pos[&r.index_name];
        if std::mem::replace(&mut filled[(d * m + k) * t_len + t], true) {
            return Err(CliError::format(
                path,
                format!("duplicate {} for {} in {}", r.index_name, r.region_id, r.year),
            ));
        }
        values[d][(k, t)] = r.value;
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        let (d, k, t) = (i / (m * t_len), (i / t_len) % m, i % t_len);
        return Err(CliError::format(
            path,
            format!("missing {} for {} in {}", names[k], regions[d].region_id, years[t]),
        ));
    }
    if m == 0 {
        return Ok(CovariatePanel::empty(regions.len(), t_len));
    }
    Ok(CovariatePanel::new(names, values)?)
}

pub fn write_covariates(path: &Path, panel: &CovariatePanel, regions: &[RegionMeta], years: &[i32]) -> CliResult<()> {
    let mut records = Vec::new();
    for (d, r) in regions.iter().enumerate() {
        for (t, &year) in years.iter().enumerate() {
            for (k, name) in panel.index_names.iter().enumerate() {
                records.push(CovariateRecord {
                    region_id: r.region_id.clone(),
                    year,
                    index_name: name.clone(),
                    value: panel.value(d, k, t),
                });
            }
        }
    }
    write_records(path, records)
}

/// Path-level forecast table `(region, year, path_id, value)`.
pub fn write_forecast(path: &Path, fc: &ForecastDistribution) -> CliResult<()> {
    let mut records = Vec::with_capacity(fc.values.len());
    for (d, region) in fc.region_ids.iter().enumerate() {
        for (h, &year) in fc.years.iter().enumerate() {
            for (n, &path_id) in fc.path_ids.iter().enumerate() {
                records.push(PathRecord {
                    region: region.clone(),
                    year,
                    path_id,
                    value: fc.value(d, h, n),
                });
            }
        }
    }
    write_records(path, records)
}

/// Reads a path-level forecast table back; summaries are recomputed and the discard count
/// (not stored in the table) is zero.
pub fn read_forecast(path: &Path) -> CliResult<ForecastDistribution> {
    let records: Vec<PathRecord> = read_records(path)?;
    let region_ids = first_seen(records.iter().map(|r| r.region.clone()));
    let years = first_seen(records.iter().map(|r| r.year));
    let path_ids = first_seen(records.iter().map(|r| r.path_id));
    let (d_len, h_len, n_len) = (region_ids.len(), years.len(), path_ids.len());
    if records.len() != d_len * h_len * n_len {
        return Err(CliError::format(
            path,
            format!("{} rows do not form a {d_len} x {h_len} x {n_len} grid", records.len()),
        ));
    }
    // written in region, year, path order
    for (i, r) in records.iter().enumerate() {
        let (d, h, n) = (i / (h_len * n_len), (i / n_len) % h_len, i % n_len);
        if r.region != region_ids[d] || r.year != years[h] || r.path_id != path_ids[n] {
            return Err(CliError::format(path, format!("row {} is out of order", i + 1)));
        }
    }
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    let summaries = (0..d_len)
        .map(|d| {
            (0..h_len)
                .map(|h| {
                    let start = (d * h_len + h) * n_len;
                    summarize(&values[start..start + n_len])
                })
                .collect()
        })
        .collect();
    Ok(ForecastDistribution {
        region_ids,
        years,
        path_ids,
        values,
        summaries,
        discarded: 0,
    })
}

/// Quantile fan `(region, year, mean, q025, q975)` for plotting.
pub fn write_fan(path: &Path, fc: &ForecastDistribution) -> CliResult<()> {
    let records = fc.region_ids.iter().enumerate().flat_map(|(d, region)| {
        fc.years.iter().enumerate().map(move |(h, &year)| {
            let s = fc.summaries[d][h];
            FanRecord {
                region: region.clone(),
                year,
                mean: s.mean,
                q025: s.q025,
                q975: s.q975,
            }
        })
    });
    write_records(path, records)
}

pub fn write_pseudo_observations(path: &Path, region_ids: &[String], years: &[i32], u: &Matrix) -> CliResult<()> {
    let records = region_ids.iter().enumerate().flat_map(|(d, id)| {
        years.iter().enumerate().map(move |(t, &year)| PseudoObsRecord {
            region_id: id.clone(),
            year,
            u: u[(d, t)],
        })
    });
    write_records(path, records)
}

/// Returns region ids, years and the `D x T` matrix.
pub fn read_pseudo_observations(path: &Path) -> CliResult<(Vec<String>, Vec<i32>, Matrix)> {
    let records: Vec<PseudoObsRecord> = read_records(path)?;
    let ids = first_seen(records.iter().map(|r| r.region_id.clone()));
    let years = first_seen(records.iter().map(|r| r.year));
    let t_len = years.len();
    if records.len() != ids.len() * t_len
        || records.iter().enumerate().any(|(i, r)| r.region_id != ids[i / t_len] || r.year != years[i % t_len])
    {
        return Err(CliError::format(path, "rows do not form a region-by-year grid"));
    }
    let u = Matrix::from_vec(ids.len(), years.len(), records.iter().map(|r| r.u).collect());
    Ok((ids, years, u))
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> CliResult<()> {
    write_records(path, rows)
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricRow>> {
    read_records(path)
}

/// Writes a header and rows of already formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::format(path, e.to_string());
    writer.write_record(header).map_err(err)?;
    for r in rows {
        writer.write_record(r).map_err(err)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

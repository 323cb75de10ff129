//! File formats shared by the CLI and the experiment harness.
//!
//! Datasets are an events CSV (`id,time`) plus a JSON sidecar carrying the
//! horizon, labels, and contamination windows. Fits export a model JSON,
//! responsibilities CSV, detection CSV, and per-interval weight CSV.

use crate::em::{FitConfig, FitResult, TraceRow};
use crate::error::{Error, Result};
use crate::influence::RhoPair;
use crate::intensity::{BasisSpec, EventSequence, HorizonSpec};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Dataset sidecar: horizon plus optional per-sequence annotations.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Sidecar {
    #[serde(rename = "T")]
    pub t_period: f64,
    #[serde(rename = "L")]
    pub periods: usize,
    #[serde(default)]
    pub labels: BTreeMap<String, usize>,
    #[serde(default)]
    pub windows: BTreeMap<String, Vec<(f64, f64)>>,
}

/// Writes one `id,time` row per event, sequences in input order.
pub fn write_events_csv(path: &Path, sequences: &[EventSequence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "time"])?;
    for seq in sequences {
        for t in &seq.times {
            w.write_record([seq.id.as_str(), &format!("{t:.12}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the dataset pair: `events.csv` and `sidecar.json` under `dir`.
pub fn write_dataset(dir: &Path, sequences: &[EventSequence], horizon: &HorizonSpec) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_events_csv(&dir.join("events.csv"), sequences)?;
    let mut sidecar = Sidecar {
        t_period: horizon.t_period,
        periods: horizon.periods,
        labels: BTreeMap::new(),
        windows: BTreeMap::new(),
    };
    for seq in sequences {
        if let Some(label) = seq.true_label {
            sidecar.labels.insert(seq.id.clone(), label);
        }
        if let Some(windows) = &seq.contamination_windows {
            sidecar.windows.insert(seq.id.clone(), windows.clone());
        }
    }
    write_json(&dir.join("sidecar.json"), &sidecar)
}

/// Reads a dataset written by `write_dataset`. Sequence order follows first
/// appearance in the CSV; empty sequences listed only in the sidecar labels
/// are appended afterwards.
pub fn read_dataset(dir: &Path) -> Result<(Vec<EventSequence>, HorizonSpec)> {
    let sidecar: Sidecar = read_json(&dir.join("sidecar.json"))?;
    let horizon = HorizonSpec::new(sidecar.t_period, sidecar.periods)?;
    let mut reader = csv::Reader::from_path(dir.join("events.csv"))?;
    let headers = reader.headers()?.clone();
    let id_col = headers.iter().position(|h| h == "id").ok_or_else(|| {
        Error::Data("events CSV is missing the 'id' column".into())
    })?;
    let time_col = headers.iter().position(|h| h == "time").ok_or_else(|| {
        Error::Data("events CSV is missing the 'time' column".into())
    })?;
    let mut order: Vec<String> = Vec::new();
    let mut times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let id = record
            .get(id_col)
            .ok_or_else(|| Error::Data("short CSV row".into()))?
            .to_string();
        let t: f64 = record
            .get(time_col)
            .ok_or_else(|| Error::Data("short CSV row".into()))?
            .parse()
            .map_err(|e| Error::Data(format!("bad time value: {e}")))?;
        if !times.contains_key(&id) {
            order.push(id.clone());
        }
        times.entry(id).or_default().push(t);
    }
    for id in sidecar.labels.keys() {
        if !times.contains_key(id) {
            order.push(id.clone());
            times.insert(id.clone(), Vec::new());
        }
    }
    let mut sequences = Vec::with_capacity(order.len());
    for id in order {
        let mut ts = times.remove(&id).unwrap_or_default();
        ts.sort_by(|a, b| a.total_cmp(b));
        let mut seq = EventSequence::new(id.clone(), ts, &horizon)?;
        if let Some(label) = sidecar.labels.get(&id) {
            seq.true_label = Some(*label);
        }
        if let Some(windows) = sidecar.windows.get(&id) {
            seq.contamination_windows = Some(windows.clone());
        }
        sequences.push(seq);
    }
    Ok((sequences, horizon))
}

/// Fitted-model file: everything needed to reload and reuse a fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub basis: BasisSpec,
    pub horizon: HorizonSpec,
    pub pi: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub rho: RhoPair,
    pub config: FitConfig,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl ModelFile {
    pub fn from_fit(fit: &FitResult, config: &FitConfig) -> Self {
        Self {
            k: fit.state.k,
            basis: config.basis.clone(),
            horizon: config.horizon,
            pi: fit.state.pi.clone(),
            b: fit.state.params.iter().map(|p| p.coeffs.clone()).collect(),
            rho: fit.state.rho,
            config: config.clone(),
            trace: fit.trace.clone(),
            converged: fit.converged,
        }
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(f)?)
}

/// `id,r_1..r_K,label` with the hard label from the responsibility argmax.
pub fn write_responsibilities_csv(
    path: &Path,
    sequences: &[EventSequence],
    fit: &FitResult,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = fit.responsibilities.k;
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|i| format!("r_{i}")));
    header.push("label".into());
    w.write_record(&header)?;
    let labels = fit.responsibilities.hard_labels();
    for (n, seq) in sequences.iter().enumerate() {
        let mut record = vec![seq.id.clone()];
        record.extend(fit.responsibilities.row(n).iter().map(|v| format!("{v:.10}")));
        record.push(labels[n].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `id,t_start,t_end,min_weight`, one row per detected interval.
pub fn write_detection_csv(
    path: &Path,
    sequences: &[EventSequence],
    fit: &FitResult,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "t_start", "t_end", "min_weight"])?;
    for (n, seq) in sequences.iter().enumerate() {
        for det in &fit.detected[n] {
            w.write_record([
                seq.id.as_str(),
                &format!("{:.10}", det.start),
                &format!("{:.10}", det.end),
                &format!("{:.10}", det.min_weight),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `id,interval_index,t_start,t_end,w_k1..w_kK,W` per interval.
pub fn write_weights_csv(path: &Path, sequences: &[EventSequence], fit: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = fit.state.k;
    let mut header = vec![
        "id".to_string(),
        "interval_index".into(),
        "t_start".into(),
        "t_end".into(),
    ];
    header.extend((1..=k).map(|i| format!("w_k{i}")));
    header.push("W".into());
    w.write_record(&header)?;
    for (n, seq) in sequences.iter().enumerate() {
        let table = &fit.weight_tables[n];
        let edges = &fit.interval_edges[n];
        for i in 0..table.intervals {
            let mut record = vec![
                seq.id.clone(),
                (i + 1).to_string(),
                format!("{:.10}", edges[i]),
                format!("{:.10}", edges[i + 1]),
            ];
            record.extend((0..k).map(|kk| format!("{:.10}", table.class_row(kk)[i])));
            record.push(format!("{:.10}", table.overall[i]));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of the exported weight table.
#[derive(Debug, Clone)]
pub struct WeightCsvRow {
    pub id: String,
    pub interval_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub class_weights: Vec<f64>,
    pub overall: f64,
}

pub fn read_weights_csv(path: &Path) -> Result<Vec<WeightCsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let k = headers.iter().filter(|h| h.starts_with("w_k")).count();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Data("short weights row".into()))
        };
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Data(format!("bad number: {e}")))
        };
        let class_weights = (0..k)
            .map(|i| parse(get(4 + i)?))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(WeightCsvRow {
            id: get(0)?.to_string(),
            interval_index: get(1)?
                .parse()
                .map_err(|e| Error::Data(format!("bad index: {e}")))?,
            t_start: parse(get(2)?)?,
            t_end: parse(get(3)?)?,
            class_weights,
            overall: parse(get(4 + k)?)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{fit, FitConfig};
    use crate::simulate::{paper_design, ContaminationType, DesignKind, PaperDesign};

    #[test]
    fn dataset_round_trip() {
        let design = PaperDesign {
            kind: DesignKind::Nhpp,
            periods: 2,
            eta: 0.2,
            ctype: Some(ContaminationType::Omission),
            n_per_class: 3,
            seed: 5,
        };
        let data = paper_design(&design).unwrap();
        let horizon = design.horizon();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data, &horizon).unwrap();
        let (back, horizon2) = read_dataset(dir.path()).unwrap();
        assert_eq!(horizon, horizon2);
        assert_eq!(back.len(), data.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.true_label, b.true_label);
            assert_eq!(a.times.len(), b.times.len());
            for (x, y) in a.times.iter().zip(&b.times) {
                assert!((x - y).abs() < 1e-9);
            }
            let wa = a.contamination_windows.as_ref().unwrap();
            let wb = b.contamination_windows.as_ref().unwrap();
            assert_eq!(wa.len(), wb.len());
        }
    }

    #[test]
    fn model_and_exports_round_trip() {
        let design = PaperDesign {
            kind: DesignKind::Nhpp,
            periods: 1,
            eta: 0.0,
            ctype: None,
            n_per_class: 3,
            seed: 2,
        };
        let data = paper_design(&design).unwrap();
        let horizon = design.horizon();
        let basis = BasisSpec::gaussian(6, &horizon).unwrap();
        let mut cfg = FitConfig::new(2, basis, horizon);
        cfg.max_iter = 30;
        let out = fit(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let model_path = dir.path().join("model.json");
        write_json(&model_path, &ModelFile::from_fit(&out, &cfg)).unwrap();
        let model: ModelFile = read_json(&model_path).unwrap();
        assert_eq!(model.k, 2);
        assert_eq!(model.b.len(), 2);
        assert_eq!(model.pi, out.state.pi);
        assert_eq!(model.trace.len(), out.trace.len());

        let rpath = dir.path().join("resp.csv");
        write_responsibilities_csv(&rpath, &data, &out).unwrap();
        let text = std::fs::read_to_string(&rpath).unwrap();
        assert!(text.starts_with("id,r_1,r_2,label"));
        assert_eq!(text.lines().count(), data.len() + 1);

        let dpath = dir.path().join("det.csv");
        write_detection_csv(&dpath, &data, &out).unwrap();
        assert!(std::fs::read_to_string(&dpath)
            .unwrap()
            .starts_with("id,t_start,t_end,min_weight"));

        let wpath = dir.path().join("weights.csv");
        write_weights_csv(&wpath, &data, &out).unwrap();
        let rows = read_weights_csv(&wpath).unwrap();
        let total_intervals: usize = out.weight_tables.iter().map(|t| t.intervals).sum();
        assert_eq!(rows.len(), total_intervals);
        // exported values equal the in-memory table
        let first = &rows[0];
        assert_eq!(first.id, data[0].id);
        assert_eq!(first.interval_index, 1);
        for kk in 0..2 {
            assert!(
                (first.class_weights[kk] - out.weight_tables[0].class_row(kk)[0]).abs() < 1e-9
            );
        }
        assert!((first.overall - out.weight_tables[0].overall[0]).abs() < 1e-9);
    }
}

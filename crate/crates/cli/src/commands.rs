//! Subcommand implementations. Every run resolves its configuration from
//! defaults, then an optional JSON config file, then command-line flags
//! (flags win), and writes the fully resolved values to `run.json` in the
//! output directory for replay.

use clap::Args;
use robust_tpp::em::{fit, fit_unweighted, FitConfig, FitResult, Method};
use robust_tpp::error::{Error, Result};
use robust_tpp::eval::{gradient_ratio_experiment, l1_index, purity, tpr_tnr, ContamFamily};
use robust_tpp::influence::RhoPair;
use robust_tpp::intensity::{BasisKind, BasisSpec, HorizonSpec, TriggerBasis};
use robust_tpp::io;
use robust_tpp::simulate::{ContaminationType, DesignKind, PaperDesign};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};

fn load_config_overlay<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let file: T = io::read_json(p).map_err(|e| match e {
                Error::Json(j) => Error::Config(format!("bad config file: {j}")),
                other => other,
            })?;
            Ok(file)
        }
        None => Ok(T::default()),
    }
}

fn parse_design(s: &str) -> Result<DesignKind> {
    match s {
        "nhpp" => Ok(DesignKind::Nhpp),
        "hawkes" => Ok(DesignKind::Hawkes),
        other => Err(Error::Config(format!(
            "unknown design '{other}' (expected nhpp or hawkes)"
        ))),
    }
}

fn parse_ctype(s: &str) -> Result<ContaminationType> {
    match s {
        "i" | "omission" => Ok(ContaminationType::Omission),
        "ii" | "commission" => Ok(ContaminationType::Commission),
        other => Err(Error::Config(format!(
            "unknown contamination type '{other}' (expected i or ii)"
        ))),
    }
}

fn parse_method(s: &str) -> Result<Method> {
    match s {
        "robust" => Ok(Method::Robust),
        "standard" => Ok(Method::Standard),
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected robust or standard)"
        ))),
    }
}

fn parse_basis_kind(s: &str) -> Result<BasisKind> {
    match s {
        "gaussian" | "gaussian-kernel" => Ok(BasisKind::GaussianKernel),
        "cubic-spline" | "spline" => Ok(BasisKind::CubicSpline),
        other => Err(Error::Config(format!(
            "unknown basis kind '{other}' (expected gaussian or cubic-spline)"
        ))),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON config file whose keys mirror these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generative family: nhpp or hawkes.
    #[arg(long)]
    design: Option<String>,
    /// Number of periods L (period length is 24).
    #[arg(long = "L")]
    periods: Option<usize>,
    /// Contamination fraction eta in [0, 1).
    #[arg(long)]
    eta: Option<f64>,
    /// Contamination type: i (omission) or ii (commission).
    #[arg(long = "type")]
    ctype: Option<String>,
    /// Sequences per class (4 classes).
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct SimulateFileConfig {
    design: Option<String>,
    periods: Option<usize>,
    eta: Option<f64>,
    ctype: Option<String>,
    n_per_class: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, serde::Serialize)]
struct SimulateRun {
    command: &'static str,
    design: PaperDesign,
    out: PathBuf,
}

pub fn run_simulate(args: SimulateArgs) -> Result<()> {
    let overlay: SimulateFileConfig = load_config_overlay(args.config.as_ref())?;
    let kind = parse_design(
        &args
            .design
            .or(overlay.design)
            .unwrap_or_else(|| "nhpp".into()),
    )?;
    let eta = args.eta.or(overlay.eta).unwrap_or(0.0);
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Config(format!("eta must lie in [0, 1), got {eta}")));
    }
    let ctype = match args.ctype.or(overlay.ctype) {
        Some(s) => Some(parse_ctype(&s)?),
        None => None,
    };
    if eta > 0.0 && ctype.is_none() {
        return Err(Error::Config(
            "--type is required when eta > 0 (i or ii)".into(),
        ));
    }
    let design = PaperDesign {
        kind,
        periods: args.periods.or(overlay.periods).unwrap_or(2),
        eta,
        ctype,
        n_per_class: args.n_per_class.or(overlay.n_per_class).unwrap_or(30),
        seed: args.seed.or(overlay.seed).unwrap_or(0),
    };
    let data = robust_tpp::simulate::paper_design(&design)?;
    let horizon = design.horizon();
    io::write_dataset(&args.out, &data, &horizon)?;
    io::write_json(&args.out.join("design.json"), &design)?;
    io::write_json(
        &args.out.join("run.json"),
        &SimulateRun {
            command: "simulate",
            design,
            out: args.out.clone(),
        },
    )?;
    println!(
        "wrote {} sequences to {}",
        data.len(),
        args.out.display()
    );
    Ok(())
}

// --------------------------------------------------------------------- fit

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (events.csv + sidecar.json).
    #[arg(long)]
    data: PathBuf,
    /// Number of mixture classes.
    #[arg(long = "K")]
    k: Option<usize>,
    /// robust or standard.
    #[arg(long)]
    method: Option<String>,
    /// Baseline basis size H.
    #[arg(long = "H")]
    h: Option<usize>,
    /// gaussian or cubic-spline.
    #[arg(long)]
    basis: Option<String>,
    /// Fit a self-exciting working model with H' trigger kernels.
    #[arg(long)]
    trigger_h: Option<usize>,
    /// Learning rate override.
    #[arg(long)]
    lr: Option<f64>,
    /// Stopping threshold on max_k ||dB_k||.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Iterations on the max overall-weight strategy before mixture.
    #[arg(long)]
    t_switch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Detection threshold for the reported intervals.
    #[arg(long)]
    alpha_tilde: Option<f64>,
    #[arg(long, default_value = "fit-out")]
    out: PathBuf,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct FitFileConfig {
    k: Option<usize>,
    method: Option<String>,
    h: Option<usize>,
    basis: Option<String>,
    trigger_h: Option<usize>,
    lr: Option<f64>,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
    t_switch: Option<usize>,
    seed: Option<u64>,
    alpha_tilde: Option<f64>,
}

#[derive(Debug, serde::Serialize)]
struct FitRun {
    command: &'static str,
    data: PathBuf,
    method: Method,
    config: FitConfig,
}

/// Resolved fit invocation, shared with the experiment sweep.
pub fn build_fit_config(
    k: usize,
    h: usize,
    kind: BasisKind,
    trigger_h: Option<usize>,
    horizon: &HorizonSpec,
) -> Result<FitConfig> {
    let mut basis = match kind {
        BasisKind::GaussianKernel => BasisSpec::gaussian(h, horizon)?,
        BasisKind::CubicSpline => BasisSpec::cubic_spline(h, horizon)?,
    };
    if let Some(hp) = trigger_h {
        basis = basis.with_trigger(TriggerBasis::with_span(hp, horizon.t_period)?);
    }
    Ok(FitConfig::new(k, basis, *horizon))
}

fn write_trace_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "max_delta_b", "coverage", "objective"])?;
    for row in &fit.trace {
        w.write_record([
            row.iteration.to_string(),
            format!("{:.10}", row.max_delta_b),
            format!("{:.10}", row.coverage),
            format!("{:.10}", row.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_fit(args: FitArgs) -> Result<()> {
    let overlay: FitFileConfig = load_config_overlay(args.config.as_ref())?;
    let (sequences, horizon) = io::read_dataset(&args.data)?;
    let method = parse_method(
        &args
            .method
            .or(overlay.method)
            .unwrap_or_else(|| "robust".into()),
    )?;
    let kind = parse_basis_kind(
        &args
            .basis
            .or(overlay.basis)
            .unwrap_or_else(|| "gaussian".into()),
    )?;
    let mut config = build_fit_config(
        args.k.or(overlay.k).unwrap_or(4),
        args.h.or(overlay.h).unwrap_or(6),
        kind,
        args.trigger_h.or(overlay.trigger_h),
        &horizon,
    )?;
    config.lr = args.lr.or(overlay.lr).or(config.lr);
    if let Some(eps) = args.epsilon.or(overlay.epsilon) {
        config.epsilon = eps;
    }
    if let Some(mi) = args.max_iter.or(overlay.max_iter) {
        config.max_iter = mi;
    }
    if let Some(ts) = args.t_switch.or(overlay.t_switch) {
        config.t_switch = ts;
    }
    if let Some(seed) = args.seed.or(overlay.seed) {
        config.seed = seed;
    }
    if let Some(a) = args.alpha_tilde.or(overlay.alpha_tilde) {
        config.alpha_tilde = a;
    }

    let result = match method {
        Method::Robust => fit(&sequences, &config)?,
        Method::Standard => fit_unweighted(&sequences, &config)?,
    };

    std::fs::create_dir_all(&args.out)?;
    io::write_json(
        &args.out.join("model.json"),
        &io::ModelFile::from_fit(&result, &config),
    )?;
    io::write_json(&args.out.join("fit.json"), &result)?;
    io::write_responsibilities_csv(&args.out.join("responsibilities.csv"), &sequences, &result)?;
    io::write_detection_csv(&args.out.join("detection.csv"), &sequences, &result)?;
    io::write_weights_csv(&args.out.join("weights.csv"), &sequences, &result)?;
    write_trace_csv(&args.out.join("trace.csv"), &result)?;
    io::write_json(
        &args.out.join("run.json"),
        &FitRun {
            command: "fit",
            data: args.data.clone(),
            method,
            config: config.clone(),
        },
    )?;
    println!(
        "fit {} sequences, K={}, {} iterations, converged={}",
        sequences.len(),
        config.k,
        result.state.iteration,
        result.converged
    );
    Ok(())
}

// -------------------------------------------------------------------- eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory the fit was computed on.
    #[arg(long)]
    data: PathBuf,
    /// Fit output directory (from `rtpp fit`).
    #[arg(long)]
    fit: PathBuf,
    /// Metrics to compute (comma separated: purity,detection,l1). Default:
    /// everything the annotations allow.
    #[arg(long)]
    metrics: Option<String>,
    /// Detection threshold.
    #[arg(long)]
    alpha_tilde: Option<f64>,
    /// Quantile for the L1-index screen.
    #[arg(long)]
    l1_alpha: Option<f64>,
    /// Also write per-class fitted intensity curves as x/y series.
    #[arg(long, default_value_t = false)]
    emit_plot_data: bool,
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct EvalFileConfig {
    metrics: Option<String>,
    alpha_tilde: Option<f64>,
    l1_alpha: Option<f64>,
}

#[derive(Debug, serde::Serialize)]
struct MetricsFile {
    purity: Option<f64>,
    mean_tpr: Option<f64>,
    mean_tnr: Option<f64>,
    alpha_tilde: f64,
    l1_median: f64,
    l1_q_alpha: f64,
    l1_alpha: f64,
    /// Smoother stands in for the per-sequence intensity estimate; recorded
    /// so downstream comparisons know the curves' provenance.
    per_sequence_estimator: &'static str,
}

pub fn run_eval(args: EvalArgs) -> Result<()> {
    let overlay: EvalFileConfig = load_config_overlay(args.config.as_ref())?;
    let (sequences, horizon) = io::read_dataset(&args.data)?;
    let result: FitResult = io::read_json(&args.fit.join("fit.json"))?;
    let model: io::ModelFile = io::read_json(&args.fit.join("model.json"))?;
    if result.weight_tables.len() != sequences.len() {
        return Err(Error::Data(
            "fit artifacts do not match the dataset (sequence count differs)".into(),
        ));
    }
    let alpha_tilde = args.alpha_tilde.or(overlay.alpha_tilde).unwrap_or(0.6);
    let l1_alpha = args.l1_alpha.or(overlay.l1_alpha).unwrap_or(0.8);
    let requested: Option<Vec<String>> = args
        .metrics
        .or(overlay.metrics)
        .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
    let want = |name: &str| requested.as_ref().is_none_or(|r| r.iter().any(|m| m == name));
    let explicit = |name: &str| requested.as_ref().is_some_and(|r| r.iter().any(|m| m == name));

    let have_labels = sequences.iter().all(|s| s.true_label.is_some());
    let have_windows = sequences.iter().all(|s| s.contamination_windows.is_some());

    let mut purity_value = None;
    if want("purity") {
        if have_labels {
            let truth: Vec<usize> = sequences.iter().map(|s| s.true_label.unwrap()).collect();
            purity_value = Some(purity(&result.responsibilities.hard_labels(), &truth)?);
        } else if explicit("purity") {
            return Err(Error::Data(
                "purity requested but the dataset has no true labels".into(),
            ));
        }
    }
    let mut detection = None;
    if want("detection") {
        if have_windows {
            detection = Some(tpr_tnr(&result, &sequences, &horizon, alpha_tilde)?);
        } else if explicit("detection") {
            return Err(Error::Data(
                "detection requested but the dataset has no window annotations".into(),
            ));
        }
    }
    let l1 = l1_index(&result, &sequences, &model.basis, &horizon, l1_alpha)?;

    std::fs::create_dir_all(&args.out)?;
    io::write_json(
        &args.out.join("metrics.json"),
        &MetricsFile {
            purity: purity_value,
            mean_tpr: detection.as_ref().map(|d| d.mean_tpr),
            mean_tnr: detection.as_ref().map(|d| d.mean_tnr),
            alpha_tilde,
            l1_median: l1.median,
            l1_q_alpha: l1.q_alpha,
            l1_alpha,
            per_sequence_estimator: "periodic gaussian kernel smoother, bandwidth T/H",
        },
    )?;
    // per-sequence L1 values as CSV
    {
        let mut w = csv::Writer::from_path(args.out.join("l1.csv"))?;
        w.write_record(["id", "l1"])?;
        for (seq, v) in sequences.iter().zip(&l1.per_sequence) {
            w.write_record([seq.id.as_str(), &format!("{v:.10}")])?;
        }
        w.flush()?;
    }
    if args.emit_plot_data {
        let mut w = csv::Writer::from_path(args.out.join("intensity_curves.csv"))?;
        let mut header = vec!["t".to_string()];
        header.extend((0..model.k).map(|k| format!("lambda_k{k}")));
        w.write_record(&header)?;
        let t = horizon.t_period;
        for i in 0..=400 {
            let u = t * i as f64 / 400.0;
            let mut record = vec![format!("{u:.6}")];
            for k in 0..model.k {
                let params = robust_tpp::intensity::ClassParams {
                    coeffs: model.b[k].clone(),
                };
                let v = robust_tpp::intensity::eval_intensity(
                    &params,
                    &model.basis,
                    &horizon,
                    u,
                    &[],
                )
                .unwrap_or(0.0);
                record.push(format!("{v:.8}"));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    io::write_json(
        &args.out.join("run.json"),
        &serde_json::json!({
            "command": "eval",
            "data": args.data,
            "fit": args.fit,
            "alpha_tilde": alpha_tilde,
            "l1_alpha": l1_alpha,
        }),
    )?;
    println!(
        "metrics written to {} (purity: {:?})",
        args.out.display(),
        purity_value
    );
    Ok(())
}

// -------------------------------------------------------------- experiment

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Table to reproduce: purity-nhpp, purity-hawkes, detection-nhpp,
    /// detection-hawkes, or gradient-ratio.
    #[arg(long)]
    table: String,
    /// Repeats per cell (purity/detection tables).
    #[arg(long)]
    repeats: Option<usize>,
    /// Replicates per cell (gradient-ratio table).
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated eta values (default 0.15,0.2,0.25).
    #[arg(long)]
    etas: Option<String>,
    /// Comma-separated period counts (default 1,2,4).
    #[arg(long)]
    periods: Option<String>,
    /// Comma-separated class counts (default 4,5,6).
    #[arg(long)]
    ks: Option<String>,
    #[arg(long, default_value = "experiment-out")]
    out: PathBuf,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct ExperimentFileConfig {
    repeats: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    etas: Option<String>,
    periods: Option<String>,
    ks: Option<String>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} value '{x}'")))
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_experiment(args: ExperimentArgs) -> Result<()> {
    let overlay: ExperimentFileConfig = load_config_overlay(args.config.as_ref())?;
    let repeats = args.repeats.or(overlay.repeats).unwrap_or(10);
    let replicates = args.replicates.or(overlay.replicates).unwrap_or(50);
    let seed = args.seed.or(overlay.seed).unwrap_or(0);
    let etas: Vec<f64> = parse_list(
        args.etas
            .or(overlay.etas)
            .as_deref()
            .unwrap_or("0.15,0.2,0.25"),
        "eta",
    )?;
    let periods: Vec<usize> = parse_list(
        args.periods
            .or(overlay.periods)
            .as_deref()
            .unwrap_or("1,2,4"),
        "periods",
    )?;
    let ks: Vec<usize> =
        parse_list(args.ks.or(overlay.ks).as_deref().unwrap_or("4,5,6"), "K")?;
    for eta in &etas {
        if !(0.0..1.0).contains(eta) {
            return Err(Error::Config(format!("eta must lie in [0,1), got {eta}")));
        }
    }
    std::fs::create_dir_all(&args.out)?;
    io::write_json(
        &args.out.join("run.json"),
        &serde_json::json!({
            "command": "experiment",
            "table": args.table,
            "repeats": repeats,
            "replicates": replicates,
            "seed": seed,
            "etas": etas,
            "periods": periods,
            "ks": ks,
        }),
    )?;

    match args.table.as_str() {
        "purity-nhpp" | "purity-hawkes" | "detection-nhpp" | "detection-hawkes" => {
            let kind = if args.table.ends_with("hawkes") {
                DesignKind::Hawkes
            } else {
                DesignKind::Nhpp
            };
            let detection = args.table.starts_with("detection");
            run_table_sweep(
                &args.out, kind, detection, &etas, &periods, &ks, repeats, seed,
            )
        }
        "gradient-ratio" => run_gradient_ratio(&args.out, replicates, seed),
        other => Err(Error::Config(format!(
            "unknown table '{other}' (expected purity-nhpp, purity-hawkes, detection-nhpp, detection-hawkes, gradient-ratio)"
        ))),
    }
}

struct CellOutcome {
    purity: Vec<f64>,
    tpr: Vec<f64>,
    tnr: Vec<f64>,
}

fn run_cell(
    kind: DesignKind,
    ctype: ContaminationType,
    eta: f64,
    l: usize,
    k: usize,
    method: Method,
    repeats: usize,
    seed: u64,
) -> Result<CellOutcome> {
    let mut out = CellOutcome {
        purity: Vec::new(),
        tpr: Vec::new(),
        tnr: Vec::new(),
    };
    for rep in 0..repeats {
        // one data seed per (cell, repeat); both methods see the same data
        let data_seed = seed
            ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ (l as u64) << 40
            ^ (k as u64) << 32
            ^ ((eta * 100.0) as u64) << 16
            ^ match ctype {
                ContaminationType::Omission => 1,
                ContaminationType::Commission => 2,
            };
        let design = PaperDesign {
            kind,
            periods: l,
            eta,
            ctype: Some(ctype),
            n_per_class: 30,
            seed: data_seed,
        };
        let data = robust_tpp::simulate::paper_design(&design)?;
        let horizon = design.horizon();
        let mut config = build_fit_config(k, 6, BasisKind::GaussianKernel, None, &horizon)?;
        config.seed = data_seed.wrapping_add(1);
        config.max_iter = 300;
        let result = match method {
            Method::Robust => fit(&data, &config)?,
            Method::Standard => fit_unweighted(&data, &config)?,
        };
        let truth: Vec<usize> = data.iter().map(|s| s.true_label.unwrap()).collect();
        out.purity
            .push(purity(&result.responsibilities.hard_labels(), &truth)?);
        let rates = tpr_tnr(&result, &data, &horizon, 0.6)?;
        out.tpr.push(rates.mean_tpr);
        out.tnr.push(rates.mean_tnr);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_table_sweep(
    out_dir: &Path,
    kind: DesignKind,
    detection: bool,
    etas: &[f64],
    periods: &[usize],
    ks: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<()> {
    let path = out_dir.join("table.csv");
    let mut w = csv::Writer::from_path(&path)?;
    if detection {
        w.write_record([
            "eta", "L", "K", "type", "tpr_mean", "tpr_se", "tnr_mean", "tnr_se", "repeats",
        ])?;
    } else {
        w.write_record([
            "eta", "L", "K", "type", "method", "purity_mean", "purity_se", "repeats",
        ])?;
    }
    for &eta in etas {
        for &l in periods {
            for &k in ks {
                for ctype in [ContaminationType::Omission, ContaminationType::Commission] {
                    let tname = match ctype {
                        ContaminationType::Omission => "i",
                        ContaminationType::Commission => "ii",
                    };
                    if detection {
                        let cell =
                            run_cell(kind, ctype, eta, l, k, Method::Robust, repeats, seed)?;
                        let (tpr_m, tpr_s) = mean_se(&cell.tpr);
                        let (tnr_m, tnr_s) = mean_se(&cell.tnr);
                        w.write_record([
                            format!("{eta}"),
                            l.to_string(),
                            k.to_string(),
                            tname.to_string(),
                            format!("{tpr_m:.4}"),
                            format!("{tpr_s:.4}"),
                            format!("{tnr_m:.4}"),
                            format!("{tnr_s:.4}"),
                            repeats.to_string(),
                        ])?;
                    } else {
                        for method in [Method::Standard, Method::Robust] {
                            let cell = run_cell(kind, ctype, eta, l, k, method, repeats, seed)?;
                            let (m, s) = mean_se(&cell.purity);
                            let mname = match method {
                                Method::Robust => "robust",
                                Method::Standard => "standard",
                            };
                            w.write_record([
                                format!("{eta}"),
                                l.to_string(),
                                k.to_string(),
                                tname.to_string(),
                                mname.to_string(),
                                format!("{m:.4}"),
                                format!("{s:.4}"),
                                repeats.to_string(),
                            ])?;
                        }
                    }
                    w.flush()?;
                }
            }
        }
    }
    println!("table written to {}", path.display());
    Ok(())
}

fn run_gradient_ratio(out_dir: &Path, replicates: usize, seed: u64) -> Result<()> {
    let horizon = HorizonSpec::new(24.0, 1)?;
    let basis = BasisSpec::gaussian(6, &horizon)?;
    let rho = RhoPair::default();
    let path = out_dir.join("table.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["family", "c", "ratio_mean", "ratio_se", "replicates"])?;
    for family in ContamFamily::all() {
        for c in [1.0, 2.0, 4.0] {
            let r = gradient_ratio_experiment(
                family, c, 0.2, 200, replicates, &rho, &basis, &horizon, seed,
            )?;
            w.write_record([
                family.label().to_string(),
                format!("{c}"),
                format!("{:.4}", r.mean),
                format!("{:.4}", r.se),
                replicates.to_string(),
            ])?;
            w.flush()?;
        }
    }
    println!("table written to {}", path.display());
    Ok(())
}


//! Evaluation metrics and experiment analyses: clustering purity, detection
//! rates against true contamination windows, the integrated-weight index, the
//! gradient-bias ratio study, and the label-free L1-index.

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::influence::{phi_prime_scaled, RhoPair};
use crate::intensity::{eval_intensity, BasisSpec, ClassParams, EventSequence, HorizonSpec};
use crate::quad;
use crate::simulate::{simulate_nhpp, substream, GaussianBump, TrueIntensity};
use rand::Rng;
use rayon::prelude::*;

/// Clustering purity: each predicted cluster is matched to its best true
/// class and the matched counts are averaged.
pub fn purity(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Data(format!(
            "purity needs nonempty aligned labels, got {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let k_pred = predicted.iter().max().unwrap() + 1;
    let k_true = truth.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k_pred * k_true];
    for (p, t) in predicted.iter().zip(truth) {
        counts[p * k_true + t] += 1;
    }
    let matched: usize = (0..k_pred)
        .map(|p| (0..k_true).map(|t| counts[p * k_true + t]).max().unwrap_or(0))
        .sum();
    Ok(matched as f64 / predicted.len() as f64)
}

/// Detection rates for one fit against the recorded contamination windows.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DetectionRates {
    /// Per-sequence TPR; `None` when the sequence has no contaminated time.
    pub tpr: Vec<Option<f64>>,
    pub tnr: Vec<f64>,
    /// Mean over sequences with positive contaminated length.
    pub mean_tpr: f64,
    pub mean_tnr: f64,
}

/// True/false detection rates: a time point is flagged when the covering
/// interval's class-specific weight (at the assigned class) falls below
/// `alpha_tilde`; overlap lengths against the true windows are exact.
pub fn tpr_tnr(
    fit: &FitResult,
    sequences: &[EventSequence],
    horizon: &HorizonSpec,
    alpha_tilde: f64,
) -> Result<DetectionRates> {
    if sequences.len() != fit.weight_tables.len() {
        return Err(Error::Data("fit does not match the sequence set".into()));
    }
    let t0 = horizon.t0();
    let labels = fit.responsibilities.hard_labels();
    let mut tpr = Vec::with_capacity(sequences.len());
    let mut tnr = Vec::with_capacity(sequences.len());
    for (n, seq) in sequences.iter().enumerate() {
        let windows = seq
            .contamination_windows
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sequence {} has no window annotations", seq.id)))?;
        let total_out: f64 = windows.iter().map(|(s, e)| e - s).sum();
        let w = fit.weight_tables[n].class_row(labels[n]);
        let edges = &fit.interval_edges[n];
        let mut flagged_out = 0.0;
        let mut clean_unflagged = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let (a, b) = (edges[i], edges[i + 1]);
            let overlap: f64 = windows
                .iter()
                .map(|(s, e)| (b.min(*e) - a.max(*s)).max(0.0))
                .sum();
            if *wi < alpha_tilde {
                flagged_out += overlap;
            } else {
                clean_unflagged += (b - a) - overlap;
            }
        }
        tpr.push(if total_out > 1e-12 {
            Some(flagged_out / total_out)
        } else {
            None
        });
        tnr.push(if t0 - total_out > 1e-12 {
            clean_unflagged / (t0 - total_out)
        } else {
            1.0
        });
    }
    let with_out: Vec<f64> = tpr.iter().flatten().copied().collect();
    let mean_tpr = if with_out.is_empty() {
        f64::NAN
    } else {
        with_out.iter().sum::<f64>() / with_out.len() as f64
    };
    let mean_tnr = tnr.iter().sum::<f64>() / tnr.len() as f64;
    Ok(DetectionRates {
        tpr,
        tnr,
        mean_tpr,
        mean_tnr,
    })
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub se: f64,
    pub draws: usize,
}

/// Integrated-weight index `IW(lambda'; lambda)`: expected total length of
/// inter-event intervals (of a draw from `lambda'`) whose weight under the
/// reference `lambda` exceeds `alpha_tilde`. The terminal interval is not
/// counted.
pub fn integrated_weight_index(
    sample_intensity: &TrueIntensity,
    reference_intensity: &TrueIntensity,
    horizon: &HorizonSpec,
    alpha_tilde: f64,
    rho: &RhoPair,
    mc_draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if mc_draws == 0 {
        return Err(Error::Config("need at least one draw".into()));
    }
    let values: Vec<f64> = (0..mc_draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let times = simulate_nhpp(sample_intensity, horizon, &mut rng);
            let mut acc = 0.0;
            let mut prev = 0.0;
            for &t in &times {
                let comp = reference_intensity.integral(prev, t);
                let w = phi_prime_scaled((comp - 1.0).max(-1.0), rho).unwrap_or(0.0);
                if w > alpha_tilde {
                    acc += t - prev;
                }
                prev = t;
            }
            acc
        })
        .collect();
    let mean = values.iter().sum::<f64>() / mc_draws as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (mc_draws.max(2) - 1) as f64;
    Ok(MonteCarloEstimate {
        mean,
        se: (var / mc_draws as f64).sqrt(),
        draws: mc_draws,
    })
}

/// Contamination families for the gradient-bias ratio study. The observed
/// intensity is `max(lambda* + delta, 0)` inside the window `[t_b, t_b+eta T]`
/// and `lambda*` outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContamFamily {
    CommissionScaled,
    CommissionConstant,
    CommissionBump,
    CommissionExpDecay,
    OmissionScaled,
    OmissionConstant,
    OmissionBump,
    OmissionExpDecay,
}

impl ContamFamily {
    pub fn all() -> [ContamFamily; 8] {
        [
            ContamFamily::CommissionScaled,
            ContamFamily::CommissionConstant,
            ContamFamily::CommissionBump,
            ContamFamily::CommissionExpDecay,
            ContamFamily::OmissionScaled,
            ContamFamily::OmissionConstant,
            ContamFamily::OmissionBump,
            ContamFamily::OmissionExpDecay,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            ContamFamily::CommissionScaled => "commission-scaled",
            ContamFamily::CommissionConstant => "commission-constant",
            ContamFamily::CommissionBump => "commission-bump",
            ContamFamily::CommissionExpDecay => "commission-exp-decay",
            ContamFamily::OmissionScaled => "omission-scaled",
            ContamFamily::OmissionConstant => "omission-constant",
            ContamFamily::OmissionBump => "omission-bump",
            ContamFamily::OmissionExpDecay => "omission-exp-decay",
        }
    }

    /// Signed intensity perturbation at time `t` for window start `t_b`.
    fn delta(&self, t: f64, t_b: f64, window_len: f64, c: f64, lambda_star: f64) -> f64 {
        let sqrt_2pi = 2.5066282746310002_f64;
        match self {
            ContamFamily::CommissionScaled => c * lambda_star,
            ContamFamily::CommissionConstant => c,
            ContamFamily::CommissionBump => {
                let z = t - t_b - window_len / 2.0;
                5.0 * c / sqrt_2pi * (-z * z / 2.0).exp()
            }
            ContamFamily::CommissionExpDecay => 4.0 * c * (t_b - t).exp(),
            ContamFamily::OmissionScaled => (1.0 / (c + 1.0) - 1.0) * lambda_star,
            ContamFamily::OmissionConstant => -c / 2.0,
            ContamFamily::OmissionBump => {
                let z = t - t_b - window_len / 2.0;
                -2.5 * c / sqrt_2pi * (-z * z / 2.0).exp()
            }
            ContamFamily::OmissionExpDecay => -2.0 * c * (t_b - t).exp(),
        }
    }

    /// Upper bound on the positive part of `delta`.
    fn delta_sup(&self, c: f64, lambda_sup: f64) -> f64 {
        match self {
            ContamFamily::CommissionScaled => c * lambda_sup,
            ContamFamily::CommissionConstant => c,
            ContamFamily::CommissionBump => 5.0 * c / 2.5066282746310002,
            ContamFamily::CommissionExpDecay => 4.0 * c,
            _ => 0.0,
        }
    }
}

/// The reference intensity used throughout the gradient-bias study (the
/// second of the four simulation classes).
pub fn gradient_ratio_reference() -> TrueIntensity {
    TrueIntensity::new(
        vec![
            GaussianBump { amplitude: 2.0, center: 6.0, denom: 10.0 },
            GaussianBump { amplitude: 5.0, center: 20.0, denom: 10.0 },
            GaussianBump { amplitude: 1.0, center: 0.0, denom: 1.0 },
        ],
        24.0,
    )
}

/// Projection of a closed-form intensity onto the working model: maximizes
/// the population log-likelihood `int (log lambda_B) lambda* - lambda_B` by
/// projected gradient ascent on a quadrature grid. Deterministic.
pub fn population_projection(
    lambda_star: &TrueIntensity,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
) -> ClassParams {
    let t = horizon.t_period;
    let dim = basis.dim;
    let panels: usize = 24 * 16;
    let step = t / panels as f64;
    let grid: Vec<f64> = (0..panels).map(|i| (i as f64 + 0.5) * step).collect();
    let lam_star: Vec<f64> = grid.iter().map(|u| lambda_star.value(*u)).collect();
    let mut kappa = vec![0.0; panels * dim];
    let mut row = vec![0.0; dim];
    for (i, u) in grid.iter().enumerate() {
        basis.baseline_values(*u, horizon, &mut row);
        kappa[i * dim..(i + 1) * dim].copy_from_slice(&row);
    }
    let kappa_mass: Vec<f64> = (0..dim)
        .map(|h| (0..panels).map(|i| kappa[i * dim + h] * step).sum())
        .collect();
    let mut b = vec![1.0; dim];
    let lr = 0.05;
    for _ in 0..50_000 {
        let mut grad = vec![0.0; dim];
        for i in 0..panels {
            let krow = &kappa[i * dim..(i + 1) * dim];
            let lam_b: f64 = krow.iter().zip(&b).map(|(k, bb)| k * bb).sum();
            let ratio = lam_star[i] / lam_b.max(1e-9);
            for h in 0..dim {
                grad[h] += krow[h] * ratio * step;
            }
        }
        let mut delta = 0.0f64;
        for h in 0..dim {
            let g = grad[h] - kappa_mass[h];
            let nb = (b[h] + lr * g).max(0.0);
            delta = delta.max((nb - b[h]).abs());
            b[h] = nb;
        }
        if delta < 1e-9 {
            break;
        }
    }
    ClassParams { coeffs: b }
}

/// Result of the gradient-bias experiment at one `(family, c)` cell.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GradientRatio {
    pub mean: f64,
    pub se: f64,
    pub replicates: usize,
}

/// Ratio of the weighted to unweighted gradient norms at a perturbed optimum,
/// averaged over replicates. `n_sequences` draws per replicate carry one
/// contamination window `[t_b, t_b + eta T]` each (`t_b` uniform), events
/// sampled from the family's modified intensity by thinning.
#[allow(clippy::too_many_arguments)]
pub fn gradient_ratio_experiment(
    family: ContamFamily,
    c: f64,
    eta: f64,
    n_sequences: usize,
    replicates: usize,
    rho: &RhoPair,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    seed: u64,
) -> Result<GradientRatio> {
    if replicates == 0 || n_sequences == 0 {
        return Err(Error::Config("need replicates >= 1 and N >= 1".into()));
    }
    let lambda_star = gradient_ratio_reference();
    let b_star = population_projection(&lambda_star, basis, horizon);
    let t = horizon.t_period;
    let window_len = eta * t;
    let lam_sup = lambda_star.envelope();
    let env = lam_sup + family.delta_sup(c, lam_sup);
    let dim = basis.dim;

    let ratios: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, rep);
            let coeffs: Vec<f64> = b_star
                .coeffs
                .iter()
                .map(|b| (b + rng.gen_range(-0.1..0.1)).max(0.0))
                .collect();
            let params = ClassParams { coeffs };
            let mut weighted = vec![0.0; dim];
            let mut unweighted = vec![0.0; dim];
            for _ in 0..n_sequences {
                let t_b = rng.gen_range(0.0..(t - window_len).max(1e-9));
                let mut times: Vec<f64> = Vec::new();
                let mut s = 0.0f64;
                loop {
                    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                    s += -u.ln() / env;
                    if s >= t * horizon.periods as f64 {
                        break;
                    }
                    let base = lambda_star.value(s);
                    let lam = if window_len > 0.0 && s >= t_b && s <= t_b + window_len {
                        (base + family.delta(s, t_b, window_len, c, base)).max(0.0)
                    } else {
                        base
                    };
                    if rng.gen::<f64>() * env < lam {
                        times.push(s);
                    }
                }
                let seq = EventSequence::new("r", times, horizon).expect("sorted draw");
                let design =
                    crate::intensity::SequenceDesign::build(basis, horizon, &seq).expect("design");
                let comps = design.compensators(&params.coeffs);
                for j in 0..design.m {
                    let w = phi_prime_scaled((comps[j] - 1.0).max(-1.0), rho).unwrap_or(0.0);
                    let lam_ev =
                        crate::intensity::dot(design.value_row(j), &params.coeffs).max(1e-2);
                    let vrow = design.value_row(j);
                    let grow = design.integral_row(j);
                    for h in 0..dim {
                        let term = vrow[h] / lam_ev - grow[h];
                        weighted[h] += w * term;
                        unweighted[h] += term;
                    }
                }
            }
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            norm(&weighted) / norm(&unweighted).max(1e-300)
        })
        .collect();

    let mean = ratios.iter().sum::<f64>() / replicates as f64;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / (replicates.max(2) - 1) as f64;
    Ok(GradientRatio {
        mean,
        se: (var / replicates as f64).sqrt(),
        replicates,
    })
}

/// L1-index outputs for one fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct L1Result {
    pub per_sequence: Vec<f64>,
    pub median: f64,
    pub q_alpha: f64,
}

/// Label-free fit quality: per-sequence integral of
/// `|hat-lambda_n - hat-lambda*_{k(n)}|` over one period, restricted to
/// deviations below the pooled alpha-quantile. The per-sequence intensity is
/// a periodic Gaussian-kernel smoother of the folded events with bandwidth
/// `T / H`.
pub fn l1_index(
    fit: &FitResult,
    sequences: &[EventSequence],
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    alpha: f64,
) -> Result<L1Result> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let t = horizon.t_period;
    let l = horizon.periods as f64;
    let bandwidth = t / basis.dim as f64;
    let labels = fit.responsibilities.hard_labels();
    let panels: usize = 10_000;
    let step = t / panels as f64;
    let grid: Vec<f64> = (0..=panels).map(|i| i as f64 * step).collect();

    let devs: Vec<Vec<f64>> = sequences
        .par_iter()
        .enumerate()
        .map(|(n, seq)| {
            let params = &fit.state.params[labels[n]];
            let norm = 1.0 / (l * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
            grid.iter()
                .map(|u| {
                    let mut smooth = 0.0;
                    for &ti in &seq.times {
                        let mut d = (ti.rem_euclid(t) - u).abs();
                        d = d.min(t - d);
                        smooth += norm * (-0.5 * (d / bandwidth).powi(2)).exp();
                    }
                    let model = eval_intensity(params, basis, horizon, *u, &[]).unwrap_or(0.0);
                    (smooth - model).abs()
                })
                .collect()
        })
        .collect();

    let mut pooled: Vec<f64> = devs.iter().flatten().copied().collect();
    pooled.sort_by(|a, b| a.total_cmp(b));
    let idx = ((pooled.len() as f64 - 1.0) * alpha).round() as usize;
    let q_alpha = pooled[idx];

    let per_sequence: Vec<f64> = devs
        .iter()
        .map(|dev| {
            let f = |i: usize| if dev[i] < q_alpha { dev[i] } else { 0.0 };
            let mut acc = 0.5 * (f(0) + f(panels));
            for i in 1..panels {
                acc += f(i);
            }
            acc * step
        })
        .collect();
    let mut sorted = per_sequence.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(L1Result {
        per_sequence,
        median,
        q_alpha,
    })
}

/// Fraction of sequences where the first fit's L1 error is strictly smaller.
pub fn comparison_rate(a: &L1Result, b: &L1Result) -> Result<f64> {
    if a.per_sequence.len() != b.per_sequence.len() || a.per_sequence.is_empty() {
        return Err(Error::Data(
            "comparison requires aligned nonempty results".into(),
        ));
    }
    let wins = a
        .per_sequence
        .iter()
        .zip(&b.per_sequence)
        .filter(|(x, y)| x < y)
        .count();
    Ok(wins as f64 / a.per_sequence.len() as f64)
}

/// Trapezoid integral of `|f|` restricted below a threshold (L1 oracle
/// helper for the test suite).
pub fn clipped_l1<F: Fn(f64) -> f64>(f: F, threshold: f64, a: f64, b: f64, panels: usize) -> f64 {
    quad::trapezoid(
        |x| {
            let v = f(x).abs();
            if v < threshold {
                v
            } else {
                0.0
            }
        },
        a,
        b,
        panels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{fit, FitConfig};
    use crate::simulate::{paper_design, DesignKind, PaperDesign};

    #[test]
    fn purity_examples() {
        assert_eq!(purity(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let truth: Vec<usize> = (0..120).map(|i| i / 30).collect();
        let pred = vec![0usize; 120];
        assert!((purity(&pred, &truth).unwrap() - 0.25).abs() < 1e-12);
        assert!(purity(&[], &[]).is_err());
        assert!(purity(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn purity_permutation_invariant_and_refinement_monotone() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(purity(&pred, &truth).unwrap(), 1.0);
        let coarse = vec![0, 0, 0, 0, 1, 1];
        let refined = vec![0, 0, 2, 2, 1, 1];
        assert!(purity(&refined, &truth).unwrap() >= purity(&coarse, &truth).unwrap());
    }

    fn tiny_fit() -> (FitResult, Vec<EventSequence>, HorizonSpec, BasisSpec) {
        let design = PaperDesign {
            kind: DesignKind::Nhpp,
            periods: 1,
            eta: 0.0,
            ctype: None,
            n_per_class: 3,
            seed: 3,
        };
        let data = paper_design(&design).unwrap();
        let horizon = design.horizon();
        let basis = BasisSpec::gaussian(6, &horizon).unwrap();
        let mut cfg = FitConfig::new(4, basis.clone(), horizon);
        cfg.seed = 1;
        cfg.max_iter = 60;
        let out = fit(&data, &cfg).unwrap();
        (out, data, horizon, basis)
    }

    #[test]
    fn tpr_tnr_pinned_cases() {
        let (mut out, mut data, horizon, _) = tiny_fit();
        data[0].contamination_windows = Some(vec![(0.0, 6.0)]);
        for seq in data.iter_mut().skip(1) {
            seq.contamination_windows = Some(vec![]);
        }
        for table in &mut out.weight_tables {
            table.class_weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let rates = tpr_tnr(&out, &data, &horizon, 0.6).unwrap();
        assert_eq!(rates.tpr[0], Some(0.0));
        assert!(rates.tnr.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        assert_eq!(rates.mean_tpr, 0.0);
        for table in &mut out.weight_tables {
            table.class_weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let rates = tpr_tnr(&out, &data, &horizon, 0.6).unwrap();
        assert_eq!(rates.tpr[0], Some(1.0));
        assert!(rates.mean_tnr.abs() < 1e-12);
        assert!(rates.tpr[1].is_none());
    }

    #[test]
    fn tpr_tnr_translation_invariant() {
        let (mut out, mut data, horizon, _) = tiny_fit();
        for seq in data.iter_mut() {
            seq.contamination_windows = Some(vec![(2.0, 5.0)]);
        }
        let r1 = tpr_tnr(&out, &data, &horizon, 0.6).unwrap();
        for seq in data.iter_mut() {
            let w = seq.contamination_windows.as_mut().unwrap();
            w[0] = (w[0].0 + 1.0, w[0].1 + 1.0);
        }
        for edges in &mut out.interval_edges {
            for e in edges.iter_mut() {
                *e += 1.0;
            }
        }
        let r2 = tpr_tnr(&out, &data, &horizon, 0.6).unwrap();
        for (a, b) in r1.tnr.iter().zip(&r2.tnr) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn iw_homogeneous_low_threshold_is_horizon() {
        let h = HorizonSpec::new(24.0, 1).unwrap();
        let lam = TrueIntensity::constant(1.0, 24.0);
        let est =
            integrated_weight_index(&lam, &lam, &h, 1e-6, &RhoPair::default(), 400, 5).unwrap();
        assert!(est.mean > 21.0 && est.mean <= 24.0, "{}", est.mean);
    }

    #[test]
    fn iw_decays_at_both_far_scales() {
        // The length-weighted index drops when the sample intensity is far
        // from the reference on either side. (It is NOT monotone in between:
        // the exact value (1 + s x1) e^{-s x1} - (1 + s x2) e^{-s x2} at
        // scale s peaks near s = 2, which the acceptance suite documents.)
        let h = HorizonSpec::new(24.0, 1).unwrap();
        let lam = gradient_ratio_reference();
        let scale = |s: f64| {
            TrueIntensity::new(
                lam.bumps
                    .iter()
                    .map(|b| GaussianBump { amplitude: s * b.amplitude, ..*b })
                    .collect(),
                24.0,
            )
        };
        let rho = RhoPair::default();
        let base = integrated_weight_index(&lam, &lam, &h, 0.6, &rho, 800, 7).unwrap();
        let half = integrated_weight_index(&scale(0.5), &lam, &h, 0.6, &rho, 800, 7).unwrap();
        let oct = integrated_weight_index(&scale(8.0), &lam, &h, 0.6, &rho, 800, 7).unwrap();
        let sep = |a: &MonteCarloEstimate, b: &MonteCarloEstimate| {
            (a.mean - b.mean) / (a.se.powi(2) + b.se.powi(2)).sqrt()
        };
        assert!(sep(&base, &half) > 3.0, "half-rate separation {}", sep(&base, &half));
        assert!(sep(&base, &oct) > 3.0, "octuple-rate separation {}", sep(&base, &oct));
    }

    #[test]
    fn gradient_ratio_unit_weights_is_one() {
        let h = HorizonSpec::new(24.0, 1).unwrap();
        let basis = BasisSpec::gaussian(6, &h).unwrap();
        let big = RhoPair::uniform(1e3).unwrap();
        let r = gradient_ratio_experiment(
            ContamFamily::CommissionScaled,
            1.0,
            0.0,
            20,
            4,
            &big,
            &basis,
            &h,
            12,
        )
        .unwrap();
        assert!((r.mean - 1.0).abs() < 0.05, "ratio {}", r.mean);
    }

    #[test]
    fn population_projection_recovers_mass() {
        let h = HorizonSpec::new(24.0, 1).unwrap();
        let basis = BasisSpec::gaussian(6, &h).unwrap();
        let lam = gradient_ratio_reference();
        let params = population_projection(&lam, &basis, &h);
        let mass_model =
            crate::intensity::integrate_intensity(&params, &basis, &h, 0.0, 24.0, &[]).unwrap();
        let mass_true = lam.integral(0.0, 24.0);
        assert!(
            (mass_model - mass_true).abs() / mass_true < 0.05,
            "model {mass_model} true {mass_true}"
        );
    }

    #[test]
    fn l1_nonnegative_and_self_comparison_zero() {
        let (out, data, horizon, basis) = tiny_fit();
        let r = l1_index(&out, &data, &basis, &horizon, 0.8).unwrap();
        assert_eq!(r.per_sequence.len(), data.len());
        assert!(r.per_sequence.iter().all(|v| *v >= 0.0));
        assert_eq!(comparison_rate(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn l1_true_class_beats_wrong_class() {
        let design = PaperDesign {
            kind: DesignKind::Nhpp,
            periods: 2,
            eta: 0.0,
            ctype: None,
            n_per_class: 8,
            seed: 17,
        };
        let data = paper_design(&design).unwrap();
        let horizon = design.horizon();
        let basis = BasisSpec::gaussian(6, &horizon).unwrap();
        let mut cfg = FitConfig::new(4, basis.clone(), horizon);
        cfg.seed = 2;
        cfg.max_iter = 100;
        let out = fit(&data, &cfg).unwrap();
        let good = l1_index(&out, &data, &basis, &horizon, 0.9).unwrap();
        let mut broken = out.clone();
        let k = broken.responsibilities.k;
        for n in 0..broken.responsibilities.n {
            let row: Vec<f64> = broken.responsibilities.row(n).to_vec();
            for (i, v) in row.iter().enumerate() {
                broken.responsibilities.r[n * k + (i + 1) % k] = *v;
            }
        }
        let bad = l1_index(&broken, &data, &basis, &horizon, 0.9).unwrap();
        assert!(
            good.median < bad.median,
            "good {} bad {}",
            good.median,
            bad.median
        );
    }
}

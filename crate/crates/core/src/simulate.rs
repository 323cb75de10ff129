//! Synthetic event-stream generation: thinning samplers for the clean
//! processes and the window-based contamination mechanism (omission deletes
//! events inside sampled windows, commission inserts burst events there).

use crate::error::{Error, Result};
use crate::intensity::{EventSequence, HorizonSpec};
use crate::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// One Gaussian bump `amplitude * exp(-(t - center)^2 / denom)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub center: f64,
    pub denom: f64,
}

impl GaussianBump {
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (-(t - self.center).powi(2) / self.denom).exp()
    }
}

/// Closed-form baseline intensity: a sum of Gaussian bumps on one period,
/// repeated over the horizon. The per-period profile is evaluated verbatim
/// (no wrap), matching the simulation designs it reproduces.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrueIntensity {
    pub bumps: Vec<GaussianBump>,
    pub period: f64,
}

impl TrueIntensity {
    pub fn new(bumps: Vec<GaussianBump>, period: f64) -> Self {
        Self { bumps, period }
    }

    /// Constant-rate intensity (testing convenience).
    pub fn constant(rate: f64, period: f64) -> Self {
        Self {
            bumps: vec![GaussianBump {
                amplitude: rate,
                center: 0.0,
                denom: f64::INFINITY,
            }],
            period,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = t.rem_euclid(self.period);
        self.bumps.iter().map(|b| b.value(u)).sum()
    }

    /// A finite upper bound on the intensity (sum of bump amplitudes).
    pub fn envelope(&self) -> f64 {
        self.bumps.iter().map(|b| b.amplitude).sum()
    }

    /// `\int_a^b` by composite Gauss-Legendre, split at period boundaries.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = a;
        while lo < b - 1e-14 {
            let hi = (((lo / self.period).floor() + 1.0) * self.period).min(b);
            let hi = hi.max(lo + 1e-14);
            total += quad::integrate_composite(|t| self.value(t), lo, hi, 16);
            lo = hi;
        }
        total
    }
}

/// Self-excitation kernel `amplitude * exp(-t^2 / denom)` for elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TriggerKernel {
    pub amplitude: f64,
    pub denom: f64,
}

impl TriggerKernel {
    pub fn value(&self, dt: f64) -> f64 {
        if dt <= 0.0 {
            return 0.0;
        }
        self.amplitude * (-dt * dt / self.denom).exp()
    }

    /// Branching ratio `\int_0^\infty g = amplitude * sqrt(pi * denom) / 2`.
    pub fn branching(&self) -> f64 {
        self.amplitude * (std::f64::consts::PI * self.denom).sqrt() / 2.0
    }

    /// Elapsed time beyond which the kernel is negligible.
    fn cutoff(&self) -> f64 {
        (self.denom * (1e12f64).ln()).sqrt()
    }
}

/// Generating process for one class: baseline bumps plus optional excitation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrueIntensitySpec {
    pub baseline: TrueIntensity,
    pub trigger: Option<TriggerKernel>,
}

/// The four baseline intensities of the simulation designs (period 24).
pub fn nhpp_class_intensities() -> Vec<TrueIntensity> {
    let t = 24.0;
    let b = |amplitude: f64, center: f64, denom: f64| GaussianBump {
        amplitude,
        center,
        denom,
    };
    vec![
        TrueIntensity::new(
            vec![b(3.0, 0.0, 20.0), b(2.0, 8.0, 20.0), b(1.0, 20.0, 20.0), b(3.0, 25.0, 3.0)],
            t,
        ),
        TrueIntensity::new(vec![b(2.0, 6.0, 10.0), b(5.0, 20.0, 10.0), b(1.0, 0.0, 1.0)], t),
        TrueIntensity::new(vec![b(5.0, 5.0, 3.0), b(3.0, 12.0, 2.0), b(5.0, 18.0, 3.0)], t),
        TrueIntensity::new(
            vec![b(5.0, 21.0, 20.0), b(2.0, 12.0, 10.0), b(3.0, 0.0, 2.0)],
            t,
        ),
    ]
}

/// The four excitation kernels of the self-exciting design.
pub fn hawkes_class_kernels() -> Vec<TriggerKernel> {
    let pi_sqrt = std::f64::consts::PI.sqrt();
    vec![
        TriggerKernel { amplitude: 0.05 / pi_sqrt, denom: 4.0 },
        TriggerKernel { amplitude: 0.1 / (1.5 * pi_sqrt), denom: 9.0 },
        TriggerKernel { amplitude: 0.15 / pi_sqrt, denom: 4.0 },
        TriggerKernel { amplitude: 0.15 / (1.5 * pi_sqrt), denom: 9.0 },
    ]
}

/// Independent per-sequence random stream: a pure function of (seed, index).
pub fn substream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Thinning sampler shared by the Poisson and self-exciting paths: with no
/// kernel the envelope never carries excitation and the draw is an exact
/// non-homogeneous Poisson sample.
fn simulate_thinning(
    baseline: &TrueIntensity,
    trigger: Option<&TriggerKernel>,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let t0 = horizon.t0();
    let base_sup = baseline.envelope();
    let cutoff = trigger.map(|g| g.cutoff()).unwrap_or(0.0);
    let mut events: Vec<f64> = Vec::new();
    let mut t = 0.0f64;
    loop {
        let excitation_now: f64 = trigger.map_or(0.0, |g| {
            events
                .iter()
                .rev()
                .take_while(|tj| t - **tj <= cutoff)
                .map(|tj| g.value((t - *tj).max(1e-12)))
                .sum()
        });
        let env = base_sup + excitation_now;
        if env <= 0.0 {
            break;
        }
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        t += -u.ln() / env;
        if t >= t0 {
            break;
        }
        let lambda = baseline.value(t)
            + trigger.map_or(0.0, |g| {
                events
                    .iter()
                    .rev()
                    .take_while(|tj| t - **tj <= cutoff)
                    .map(|tj| g.value(t - *tj))
                    .sum::<f64>()
            });
        if rng.gen::<f64>() * env < lambda {
            events.push(t);
        }
    }
    events
}

/// Draws one clean non-homogeneous Poisson sequence by thinning.
pub fn simulate_nhpp(
    baseline: &TrueIntensity,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    simulate_thinning(baseline, None, horizon, rng)
}

/// Draws one clean self-exciting sequence by Ogata-style thinning with the
/// envelope refreshed after every candidate.
pub fn simulate_hawkes(
    baseline: &TrueIntensity,
    trigger: &TriggerKernel,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let branching = trigger.branching();
    if branching >= 1.0 {
        return Err(Error::Config(format!(
            "unstable excitation kernel: branching ratio {branching:.3} >= 1"
        )));
    }
    Ok(simulate_thinning(baseline, Some(trigger), horizon, rng))
}

/// Which contamination adversary to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminationType {
    /// Type-i: events inside the windows are deleted.
    Omission,
    /// Type-ii: burst events are inserted inside the windows.
    Commission,
}

/// Contamination mechanism parameters. The window layouts are sampled per
/// sequence; all sampling choices are recorded in the dataset sidecar.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContaminationSpec {
    pub eta: f64,
    pub ctype: ContaminationType,
    /// Mean of the Poisson part of the window count (count = 1 + Poisson).
    pub windows_mean: f64,
    /// Dirichlet concentration for splitting the total length.
    pub split_alpha: f64,
    /// Omission windows must cover at least this many events.
    pub min_deleted: usize,
    /// Commission burst-center rate per unit time inside windows.
    pub burst_rate: f64,
    /// Commission burst mass range (events per burst).
    pub burst_mass: (f64, f64),
    /// Commission burst width.
    pub burst_sigma: f64,
}

impl ContaminationSpec {
    pub fn new(eta: f64, ctype: ContaminationType) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::Config(format!("eta must lie in [0, 1), got {eta}")));
        }
        Ok(match ctype {
            ContaminationType::Omission => Self {
                eta,
                ctype,
                windows_mean: 0.3,
                split_alpha: 3.0,
                min_deleted: 12,
                burst_rate: 0.0,
                burst_mass: (0.0, 0.0),
                burst_sigma: 0.05,
            },
            ContaminationType::Commission => Self {
                eta,
                ctype,
                windows_mean: 2.0,
                split_alpha: 1.0,
                min_deleted: 0,
                burst_rate: 5.0 / 12.0,
                burst_mass: (2.5, 5.0),
                burst_sigma: 0.05,
            },
        })
    }

    /// Total window-length budget: one period's worth for omission, the whole
    /// horizon's worth for commission (matching the simulation designs).
    fn budget(&self, horizon: &HorizonSpec) -> f64 {
        match self.ctype {
            ContaminationType::Omission => self.eta * horizon.t_period,
            ContaminationType::Commission => self.eta * horizon.t0(),
        }
    }
}

fn dirichlet_split(total: f64, n: usize, alpha: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(1e-12)).collect();
    let sum: f64 = draws.iter().sum();
    draws.iter().map(|g| g / sum * total).collect()
}

fn disjoint(windows: &[(f64, f64)]) -> bool {
    windows.windows(2).all(|w| w[0].1 <= w[1].0)
}

/// Omission window layout: windows anchored on runs of consecutive events so
/// that each window deletes at least `min_deleted` events where possible.
fn sample_omission_windows(
    times: &[f64],
    spec: &ContaminationSpec,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Vec<(f64, f64)> {
    if times.is_empty() || spec.eta <= 0.0 {
        return Vec::new();
    }
    let t0 = horizon.t0();
    let n_windows = 1 + Poisson::new(spec.windows_mean.max(1e-9)).unwrap().sample(rng) as usize;
    let total = rng.gen_range(0.5..=1.0) * spec.budget(horizon);
    let lens = dirichlet_split(total, n_windows, spec.split_alpha, rng);
    let mut layout: Vec<(f64, f64)> = Vec::new();
    for _ in 0..1000 {
        layout.clear();
        for &len in &lens {
            // pick the anchor whose forward run of events packs the window best
            let mut best: Option<(usize, usize)> = None;
            for _ in 0..200 {
                let a = rng.gen_range(0..times.len());
                let mut j = a;
                while j + 1 < times.len() && times[j + 1] - times[a] <= 0.9 * len {
                    j += 1;
                }
                let covered = j - a + 1;
                if best.map_or(true, |(_, c)| covered > c) {
                    best = Some((a, covered));
                }
                if covered >= spec.min_deleted {
                    break;
                }
            }
            let (a, covered) = best.unwrap();
            let span = times[a + covered - 1] - times[a];
            let slack = (len - span).max(0.0);
            let u = rng.gen_range(0.1..0.9);
            let start = (times[a] - u * slack).clamp(0.0, (t0 - len).max(0.0));
            layout.push((start, start + len));
        }
        layout.sort_by(|a, b| a.0.total_cmp(&b.0));
        if disjoint(&layout) {
            return layout;
        }
    }
    layout
}

/// Commission window layout: starts uniform over the horizon with rejection
/// for overlap.
fn sample_commission_windows(
    spec: &ContaminationSpec,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Vec<(f64, f64)> {
    if spec.eta <= 0.0 {
        return Vec::new();
    }
    let t0 = horizon.t0();
    let n_windows = 1 + Poisson::new(spec.windows_mean.max(1e-9)).unwrap().sample(rng) as usize;
    let total = rng.gen_range(0.5..=1.0) * spec.budget(horizon);
    let lens = dirichlet_split(total, n_windows, spec.split_alpha, rng);
    let mut layout: Vec<(f64, f64)> = Vec::new();
    for _ in 0..10_000 {
        layout.clear();
        for &len in &lens {
            let start = rng.gen_range(0.0..=(t0 - len).max(0.0));
            layout.push((start, start + len));
        }
        layout.sort_by(|a, b| a.0.total_cmp(&b.0));
        if disjoint(&layout) {
            return layout;
        }
    }
    layout
}

/// Applies the contamination mechanism to a clean sequence; the sampled
/// windows are recorded on the result for evaluation.
pub fn contaminate(
    sequence: &EventSequence,
    spec: &ContaminationSpec,
    horizon: &HorizonSpec,
    rng: &mut ChaCha12Rng,
) -> Result<EventSequence> {
    if spec.eta <= 0.0 {
        let mut out = sequence.clone();
        out.contamination_windows = Some(Vec::new());
        return Ok(out);
    }
    let times = &sequence.times;
    let (windows, new_times) = match spec.ctype {
        ContaminationType::Omission => {
            let windows = sample_omission_windows(times, spec, horizon, rng);
            let kept: Vec<f64> = times
                .iter()
                .copied()
                .filter(|t| !windows.iter().any(|(s, e)| *t >= *s && *t <= *e))
                .collect();
            (windows, kept)
        }
        ContaminationType::Commission => {
            let windows = sample_commission_windows(spec, horizon, rng);
            let mut merged = times.clone();
            for &(s, e) in &windows {
                let n_centers = Poisson::new((spec.burst_rate * (e - s)).max(1e-12))
                    .unwrap()
                    .sample(rng) as usize;
                for _ in 0..n_centers {
                    let center = rng.gen_range(s..=e);
                    let mass = rng.gen_range(spec.burst_mass.0..=spec.burst_mass.1);
                    let count = Poisson::new(mass.max(1e-12)).unwrap().sample(rng) as usize;
                    for _ in 0..count {
                        let z: f64 = rand_distr::StandardNormal.sample(rng);
                        let t = center + spec.burst_sigma * z;
                        if t >= s && t <= e {
                            merged.push(t);
                        }
                    }
                }
            }
            merged.sort_by(|a, b| a.total_cmp(b));
            merged.dedup();
            (windows, merged)
        }
    };
    let mut out = EventSequence::new(sequence.id.clone(), new_times, horizon)?;
    out.true_label = sequence.true_label;
    out.contamination_windows = Some(windows);
    Ok(out)
}

/// Which generative family a dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Nhpp,
    Hawkes,
}

/// Full description of a generated dataset, recorded for replay.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PaperDesign {
    pub kind: DesignKind,
    pub periods: usize,
    pub eta: f64,
    pub ctype: Option<ContaminationType>,
    pub n_per_class: usize,
    pub seed: u64,
}

impl PaperDesign {
    pub fn horizon(&self) -> HorizonSpec {
        HorizonSpec::new(24.0, self.periods).expect("positive period")
    }
}

/// Generates the four-class simulation dataset: `n_per_class` sequences per
/// class with the design's contamination applied, labels and windows
/// recorded. Sequence `i` uses random substream `i` of the master seed.
pub fn paper_design(design: &PaperDesign) -> Result<Vec<EventSequence>> {
    let horizon = design.horizon();
    let baselines = nhpp_class_intensities();
    let kernels = hawkes_class_kernels();
    let spec = match design.ctype {
        Some(ctype) if design.eta > 0.0 => Some(ContaminationSpec::new(design.eta, ctype)?),
        _ => None,
    };
    let mut out = Vec::with_capacity(4 * design.n_per_class);
    for class in 0..4 {
        for i in 0..design.n_per_class {
            let idx = class * design.n_per_class + i;
            let mut rng = substream(design.seed, idx as u64);
            let times = match design.kind {
                DesignKind::Nhpp => simulate_nhpp(&baselines[class], &horizon, &mut rng),
                DesignKind::Hawkes => {
                    simulate_hawkes(&baselines[class], &kernels[class], &horizon, &mut rng)?
                }
            };
            let clean = EventSequence::new(format!("seq{idx:04}"), times, &horizon)?
                .with_label(class);
            let seq = match &spec {
                Some(spec) => contaminate(&clean, spec, &horizon, &mut rng)?,
                None => clean.with_windows(Vec::new()),
            };
            out.push(seq);
        }
    }
    Ok(out)
}

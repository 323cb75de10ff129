//! Basis-expansion working models and the event-sequence data model.
//!
//! The baseline intensity is a nonnegative combination of `H` periodic basis
//! functions on one period `[0, T]`; the self-exciting variant adds a history
//! sum over `H'` trigger kernels. Interval integrals are closed form: error
//! functions for Gaussian kernels, exact Gauss-Legendre panels (degree-3
//! polynomials) for cubic B-splines.

use crate::error::{Error, Result};
use crate::quad;
use statrs::function::erf::erf;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.5066282746310002;

/// Observation horizon: `periods` copies of a period of length `t_period`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HorizonSpec {
    pub t_period: f64,
    pub periods: usize,
}

impl HorizonSpec {
    pub fn new(t_period: f64, periods: usize) -> Result<Self> {
        if !(t_period.is_finite() && t_period > 0.0) || periods == 0 {
            return Err(Error::Config(format!(
                "horizon requires T > 0 and L >= 1, got T={t_period}, L={periods}"
            )));
        }
        Ok(Self { t_period, periods })
    }

    /// Total horizon `T0 = L * T`.
    pub fn t0(&self) -> f64 {
        self.t_period * self.periods as f64
    }
}

/// One observed sequence of strictly increasing timestamps on `[0, T0]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventSequence {
    pub id: String,
    pub times: Vec<f64>,
    /// Generating class when known (simulated data).
    pub true_label: Option<usize>,
    /// Disjoint contaminated windows when known (simulated data).
    pub contamination_windows: Option<Vec<(f64, f64)>>,
}

impl EventSequence {
    pub fn new(id: impl Into<String>, times: Vec<f64>, horizon: &HorizonSpec) -> Result<Self> {
        let t0 = horizon.t0();
        for pair in times.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Data(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let (Some(first), Some(last)) = (times.first(), times.last()) {
            if *first < 0.0 || *last > t0 {
                return Err(Error::Data(format!(
                    "timestamps must lie in [0, {t0}], got range [{first}, {last}]"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            times,
            true_label: None,
            contamination_windows: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.true_label = Some(label);
        self
    }

    pub fn with_windows(mut self, windows: Vec<(f64, f64)>) -> Self {
        self.contamination_windows = Some(windows);
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Baseline basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    GaussianKernel,
    CubicSpline,
}

/// Trigger (excitation) basis for the self-exciting model: `H'` normalized
/// Gaussian kernels on elapsed time, truncated past the last center.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TriggerBasis {
    pub dim: usize,
    pub centers: Vec<f64>,
    pub bandwidth: f64,
    /// History scans stop once the elapsed time exceeds this.
    pub cutoff: f64,
}

impl TriggerBasis {
    /// Centers at `h' * span / dim`, bandwidth `span / dim`, cutoff five
    /// bandwidths past the last center.
    pub fn with_span(dim: usize, span: f64) -> Result<Self> {
        if dim == 0 || !(span.is_finite() && span > 0.0) {
            return Err(Error::Config(format!(
                "trigger basis requires dim >= 1 and span > 0, got dim={dim}, span={span}"
            )));
        }
        let bandwidth = span / dim as f64;
        let centers: Vec<f64> = (1..=dim).map(|h| h as f64 * span / dim as f64).collect();
        let cutoff = span + 5.0 * bandwidth;
        Ok(Self {
            dim,
            centers,
            bandwidth,
            cutoff,
        })
    }

    /// Kernel value `g_{h'}(dt)` for elapsed time `dt > 0`.
    pub fn value(&self, h: usize, dt: f64) -> f64 {
        if dt <= 0.0 || dt > self.cutoff {
            return 0.0;
        }
        let z = (dt - self.centers[h]) / self.bandwidth;
        (-0.5 * z * z).exp() / (SQRT_2PI * self.bandwidth)
    }

    /// `G_{h'}(x) = \int_0^{min(x, cutoff)} g_{h'}(u) du`.
    pub fn integral_from_zero(&self, h: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let x = x.min(self.cutoff);
        let c = self.centers[h];
        let s = self.bandwidth * SQRT_2;
        0.5 * (erf((x - c) / s) - erf((-c) / s))
    }
}

/// Baseline basis specification plus optional trigger basis.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dim: usize,
    /// Kernel centers in `[0, T]` (Gaussian kind only).
    pub centers: Vec<f64>,
    /// Kernel bandwidth (Gaussian kind only).
    pub bandwidth: f64,
    /// Clamped knot vector with `dim + 4` entries (spline kind only).
    pub knots: Vec<f64>,
    pub trigger: Option<TriggerBasis>,
}

impl BasisSpec {
    /// Gaussian kernels at `h * T / H` with bandwidth `T / (2H)`, evaluated
    /// with nearest-image wrap so the baseline is periodic.
    pub fn gaussian(dim: usize, horizon: &HorizonSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("basis dimension must be >= 1".into()));
        }
        let t = horizon.t_period;
        let centers = (1..=dim).map(|h| h as f64 * t / dim as f64).collect();
        Ok(Self {
            kind: BasisKind::GaussianKernel,
            dim,
            centers,
            bandwidth: t / (2.0 * dim as f64),
            knots: Vec::new(),
            trigger: None,
        })
    }

    /// Clamped cubic B-splines on `dim + 4` knots over one period.
    pub fn cubic_spline(dim: usize, horizon: &HorizonSpec) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Config(
                "cubic-spline basis requires at least 4 functions".into(),
            ));
        }
        let t = horizon.t_period;
        let interior = dim - 4;
        let mut knots = vec![0.0; 4];
        for j in 1..=interior {
            knots.push(t * j as f64 / (interior + 1) as f64);
        }
        knots.extend_from_slice(&[t, t, t, t]);
        Ok(Self {
            kind: BasisKind::CubicSpline,
            dim,
            centers: Vec::new(),
            bandwidth: 0.0,
            knots,
            trigger: None,
        })
    }

    pub fn with_trigger(mut self, trigger: TriggerBasis) -> Self {
        self.trigger = Some(trigger);
        self
    }

    pub fn trigger_dim(&self) -> usize {
        self.trigger.as_ref().map_or(0, |t| t.dim)
    }

    /// Total parameter dimension `H` or `H + H'`.
    pub fn total_dim(&self) -> usize {
        self.dim + self.trigger_dim()
    }

    /// Baseline basis values at wall-clock time `t` (folded into the period).
    pub fn baseline_values(&self, t: f64, horizon: &HorizonSpec, out: &mut [f64]) {
        let period = horizon.t_period;
        let u = t.rem_euclid(period);
        match self.kind {
            BasisKind::GaussianKernel => {
                for (h, c) in self.centers.iter().enumerate() {
                    let d = (u - c).abs();
                    let d = d.min(period - d);
                    out[h] = (-0.5 * (d / self.bandwidth).powi(2)).exp();
                }
            }
            BasisKind::CubicSpline => {
                self.spline_values(u, out);
            }
        }
    }

    /// `\int_0^x` of each baseline function, `x` within one period.
    fn baseline_profile(&self, x: f64, horizon: &HorizonSpec, out: &mut [f64]) {
        let period = horizon.t_period;
        match self.kind {
            BasisKind::GaussianKernel => {
                let s = self.bandwidth;
                let gint = |a: f64, b: f64, mu: f64| {
                    s * (std::f64::consts::PI / 2.0).sqrt()
                        * (erf((b - mu) / (s * SQRT_2)) - erf((a - mu) / (s * SQRT_2)))
                };
                for (h, c) in self.centers.iter().enumerate() {
                    // Nearest-image wrap splits the period at the antipode of c.
                    out[h] = if *c <= period / 2.0 {
                        let brk = c + period / 2.0;
                        let head = gint(0.0, x.min(brk), *c);
                        let tail = if x > brk { gint(brk, x, c + period) } else { 0.0 };
                        head + tail
                    } else {
                        let brk = c - period / 2.0;
                        let head = gint(0.0, x.min(brk), c - period);
                        let tail = if x > brk { gint(brk, x, *c) } else { 0.0 };
                        head + tail
                    };
                }
            }
            BasisKind::CubicSpline => {
                self.spline_profile(x, out);
            }
        }
    }

    /// `\int_a^b` of each baseline function over the periodic extension.
    pub fn baseline_integrals(&self, a: f64, b: f64, horizon: &HorizonSpec, out: &mut [f64]) {
        let period = horizon.t_period;
        let ka = (a / period).floor();
        let kb = (b / period).floor();
        let mut fa = vec![0.0; self.dim];
        let mut fb = vec![0.0; self.dim];
        let mut full = vec![0.0; self.dim];
        self.baseline_profile(a - ka * period, horizon, &mut fa);
        self.baseline_profile(b - kb * period, horizon, &mut fb);
        self.baseline_profile(period, horizon, &mut full);
        for h in 0..self.dim {
            out[h] = (kb - ka) * full[h] - fa[h] + fb[h];
        }
    }

    /// All nonzero cubic B-spline values at `u` via the Cox-de Boor triangle.
    fn spline_values(&self, u: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for h in 0..self.dim {
            out[h] = bspline_value(&self.knots, h, 3, u);
        }
    }

    /// `\int_0^x` of each spline function by 2-node Gauss-Legendre per knot
    /// span (exact for cubics).
    fn spline_profile(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if x <= 0.0 {
            return;
        }
        let (nodes, weights) = quad::gauss_legendre(2);
        let mut vals = vec![0.0; self.dim];
        let spans: Vec<(f64, f64)> = self
            .knots
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|(a, b)| b > a)
            .collect();
        for (lo, hi) in spans {
            if lo >= x {
                break;
            }
            let hi = hi.min(x);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (z, w) in nodes.iter().zip(&weights) {
                let u = mid + half * z;
                for h in 0..self.dim {
                    vals[h] = bspline_value(&self.knots, h, 3, u);
                }
                for h in 0..self.dim {
                    out[h] += w * half * vals[h];
                }
            }
        }
    }
}

/// Cox-de Boor recursion for a single B-spline basis value.
fn bspline_value(knots: &[f64], i: usize, p: usize, u: f64) -> f64 {
    if p == 0 {
        let last_span = i + 1 == knots.len() - 1
            || knots[i + 1..].iter().all(|k| (*k - knots[i + 1]).abs() < 1e-14);
        let inside = u >= knots[i] && (u < knots[i + 1] || (last_span && u <= knots[i + 1]));
        return if inside && knots[i + 1] > knots[i] { 1.0 } else { 0.0 };
    }
    let mut acc = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        acc += (u - knots[i]) / d1 * bspline_value(knots, i, p - 1, u);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        acc += (knots[i + p + 1] - u) / d2 * bspline_value(knots, i + 1, p - 1, u);
    }
    acc
}

/// Nonnegative coefficient vector for one class.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassParams {
    pub coeffs: Vec<f64>,
}

impl ClassParams {
    pub fn new(coeffs: Vec<f64>, basis: &BasisSpec) -> Result<Self> {
        if coeffs.len() != basis.total_dim() {
            return Err(Error::Config(format!(
                "coefficient vector length {} does not match basis dimension {}",
                coeffs.len(),
                basis.total_dim()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("coefficients must be finite and >= 0".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(basis: &BasisSpec) -> Self {
        Self {
            coeffs: vec![0.0; basis.total_dim()],
        }
    }
}

fn validate_history(history: &[f64], t: f64) -> Result<()> {
    for pair in history.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Data("history must be strictly increasing".into()));
        }
    }
    if let Some(last) = history.last() {
        if *last >= t {
            return Err(Error::Data(format!(
                "history must lie strictly before t={t}, found event at {last}"
            )));
        }
    }
    Ok(())
}

/// Working-model intensity at time `t` given the events strictly before `t`.
pub fn eval_intensity(
    params: &ClassParams,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    t: f64,
    history: &[f64],
) -> Result<f64> {
    if !(0.0..=horizon.t0()).contains(&t) {
        return Err(Error::Domain(format!(
            "evaluation time {t} outside [0, {}]",
            horizon.t0()
        )));
    }
    validate_history(history, t)?;
    let mut vals = vec![0.0; basis.dim];
    basis.baseline_values(t, horizon, &mut vals);
    let mut lambda: f64 = vals
        .iter()
        .zip(&params.coeffs)
        .map(|(v, b)| v * b)
        .sum();
    if let Some(trigger) = &basis.trigger {
        let alpha = &params.coeffs[basis.dim..];
        for &tj in history.iter().rev() {
            let dt = t - tj;
            if dt > trigger.cutoff {
                break;
            }
            for h in 0..trigger.dim {
                lambda += alpha[h] * trigger.value(h, dt);
            }
        }
    }
    Ok(lambda)
}

/// Compensator increment `\int_a^b lambda du` with the events before `b` as
/// history for the excitation part.
pub fn integrate_intensity(
    params: &ClassParams,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    t_start: f64,
    t_end: f64,
    history: &[f64],
) -> Result<f64> {
    let t0 = horizon.t0();
    if !(0.0 <= t_start && t_start <= t_end && t_end <= t0) {
        return Err(Error::Domain(format!(
            "integration bounds [{t_start}, {t_end}] invalid for horizon [0, {t0}]"
        )));
    }
    let mut ints = vec![0.0; basis.dim];
    basis.baseline_integrals(t_start, t_end, horizon, &mut ints);
    let mut total: f64 = ints
        .iter()
        .zip(&params.coeffs)
        .map(|(v, b)| v * b)
        .sum();
    if let Some(trigger) = &basis.trigger {
        let alpha = &params.coeffs[basis.dim..];
        for &tj in history.iter().rev() {
            if tj >= t_end {
                continue;
            }
            if t_start - tj > trigger.cutoff {
                break;
            }
            let lo = (t_start - tj).max(0.0);
            let hi = t_end - tj;
            for h in 0..trigger.dim {
                total += alpha[h]
                    * (trigger.integral_from_zero(h, hi) - trigger.integral_from_zero(h, lo));
            }
        }
    }
    Ok(total)
}

/// Compensator increments over the `M + 1` intervals
/// `(t_0, t_1], ..., (t_M, T0]` with `t_0 = 0`.
pub fn compensator_gaps(
    params: &ClassParams,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    sequence: &EventSequence,
) -> Result<Vec<f64>> {
    let design = SequenceDesign::build(basis, horizon, sequence)?;
    Ok(design.compensators(&params.coeffs))
}

/// Parameter-independent design quantities for one sequence: basis values at
/// `t_0 = 0, t_1, ..., t_M` and basis integrals over the `M + 1` intervals.
/// Everything the weighted EM needs becomes dot products against these rows.
#[derive(Debug, Clone)]
pub struct SequenceDesign {
    pub m: usize,
    pub dim: usize,
    /// `(M + 1) x dim`, row i = basis values at `t_i` (row 0 at `t_0 = 0`).
    pub values: Vec<f64>,
    /// `(M + 1) x dim`, row i = basis integrals over `(t_i, t_{i+1}]`
    /// (so row i corresponds to interval index `i + 1` in one-based terms).
    pub integrals: Vec<f64>,
    /// Interval lengths, same indexing as `integrals`.
    pub gap_lengths: Vec<f64>,
}

impl SequenceDesign {
    pub fn build(
        basis: &BasisSpec,
        horizon: &HorizonSpec,
        sequence: &EventSequence,
    ) -> Result<SequenceDesign> {
        let t0 = horizon.t0();
        if let Some(last) = sequence.times.last() {
            if *last > t0 {
                return Err(Error::Data(format!(
                    "sequence {} extends past the horizon {t0}",
                    sequence.id
                )));
            }
        }
        let m = sequence.len();
        let dim = basis.total_dim();
        let mut values = vec![0.0; (m + 1) * dim];
        let mut integrals = vec![0.0; (m + 1) * dim];
        let mut gap_lengths = vec![0.0; m + 1];

        let mut edges = Vec::with_capacity(m + 2);
        edges.push(0.0);
        edges.extend_from_slice(&sequence.times);
        edges.push(t0);

        for i in 0..=m {
            let row = &mut values[i * dim..(i + 1) * dim];
            basis.baseline_values(edges[i], horizon, &mut row[..basis.dim]);
            if let Some(trigger) = &basis.trigger {
                // events strictly before t_i excite it
                for j in (0..i).rev() {
                    let dt = edges[i] - sequence.times[j];
                    if dt > trigger.cutoff {
                        break;
                    }
                    for h in 0..trigger.dim {
                        row[basis.dim + h] += trigger.value(h, dt);
                    }
                }
            }
        }

        for i in 0..=m {
            let (a, b) = (edges[i], edges[i + 1]);
            gap_lengths[i] = b - a;
            let row = &mut integrals[i * dim..(i + 1) * dim];
            basis.baseline_integrals(a, b, horizon, &mut row[..basis.dim]);
            if let Some(trigger) = &basis.trigger {
                // events at or before the interval's left endpoint (t_i) excite it;
                // the interval is open on the left so no event lies inside.
                for j in (0..i).rev() {
                    let tj = sequence.times[j];
                    if a - tj > trigger.cutoff {
                        break;
                    }
                    for h in 0..trigger.dim {
                        row[basis.dim + h] += trigger.integral_from_zero(h, b - tj)
                            - trigger.integral_from_zero(h, a - tj);
                    }
                }
            }
        }

        Ok(SequenceDesign {
            m,
            dim,
            values,
            integrals,
            gap_lengths,
        })
    }

    pub fn value_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn integral_row(&self, i: usize) -> &[f64] {
        &self.integrals[i * self.dim..(i + 1) * self.dim]
    }

    /// Intensity values at `t_0, ..., t_M` for coefficient vector `b`.
    pub fn intensities(&self, b: &[f64]) -> Vec<f64> {
        (0..=self.m)
            .map(|i| dot(self.value_row(i), b))
            .collect()
    }

    /// Compensator increments for the `M + 1` intervals.
    pub fn compensators(&self, b: &[f64]) -> Vec<f64> {
        (0..=self.m)
            .map(|i| dot(self.integral_row(i), b))
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

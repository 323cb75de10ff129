//! Per-interval robustness weights: class-specific weights from the influence
//! derivative, their max/mixture aggregation into overall weights, and the
//! coverage constraint that tunes the rho scales.

use crate::error::{Error, Result};
use crate::influence::{phi_prime_scaled, RhoPair};
use crate::intensity::{
    compensator_gaps, BasisSpec, ClassParams, EventSequence, HorizonSpec, SequenceDesign,
};

/// How class-specific weights are combined into the overall weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightStrategy {
    /// Per interval, the maximum weight across classes.
    Max,
    /// Responsibility-weighted average of the class weights.
    Mixture,
}

/// Weights for one sequence: a `K x (M+1)` class-specific table and the
/// length-`M+1` overall vector.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WeightTable {
    pub classes: usize,
    pub intervals: usize,
    /// Row-major `K x (M+1)`.
    pub class_weights: Vec<f64>,
    pub overall: Vec<f64>,
    pub strategy_used: WeightStrategy,
}

impl WeightTable {
    pub fn class_row(&self, k: usize) -> &[f64] {
        &self.class_weights[k * self.intervals..(k + 1) * self.intervals]
    }
}

/// Class-specific interval weights `w_i = phi'_{rho1,rho2}(compensator_i - 1)`
/// for the `M + 1` intervals of `sequence` under class parameters `params`.
pub fn class_weights(
    sequence: &EventSequence,
    params: &ClassParams,
    basis: &BasisSpec,
    horizon: &HorizonSpec,
    rho: &RhoPair,
) -> Result<Vec<f64>> {
    let gaps = compensator_gaps(params, basis, horizon, sequence)?;
    class_weights_from_compensators(&gaps, rho)
}

/// Same computation from precomputed compensator increments.
pub fn class_weights_from_compensators(compensators: &[f64], rho: &RhoPair) -> Result<Vec<f64>> {
    compensators
        .iter()
        .map(|g| phi_prime_scaled((g - 1.0).max(-1.0), rho))
        .collect()
}

/// Combines a `K x (M+1)` class-weight table into overall interval weights.
///
/// `responsibilities` must lie on the simplex when the mixture strategy is
/// selected (ignored for max).
pub fn overall_weights(
    class_w: &[Vec<f64>],
    responsibilities: Option<&[f64]>,
    strategy: WeightStrategy,
) -> Result<Vec<f64>> {
    let k = class_w.len();
    if k == 0 {
        return Err(Error::Config("empty class-weight table".into()));
    }
    let m = class_w[0].len();
    if class_w.iter().any(|row| row.len() != m) {
        return Err(Error::Config("ragged class-weight table".into()));
    }
    match strategy {
        WeightStrategy::Max => Ok((0..m)
            .map(|i| class_w.iter().map(|row| row[i]).fold(0.0f64, f64::max))
            .collect()),
        WeightStrategy::Mixture => {
            let r = responsibilities.ok_or_else(|| {
                Error::Config("mixture strategy requires responsibilities".into())
            })?;
            if r.len() != k {
                return Err(Error::Config(format!(
                    "responsibility length {} does not match K={k}",
                    r.len()
                )));
            }
            let total: f64 = r.iter().sum();
            if (total - 1.0).abs() > 1e-8 || r.iter().any(|x| *x < 0.0) {
                return Err(Error::Config(format!(
                    "responsibilities must lie on the simplex (sum {total})"
                )));
            }
            Ok((0..m)
                .map(|i| class_w.iter().zip(r).map(|(row, rk)| rk * row[i]).sum())
                .collect())
        }
    }
}

/// Result of evaluating the coverage constraint for one class.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RhoCheck {
    pub satisfied: bool,
    pub coverage: f64,
}

/// Coverage constraint: the weighted fraction of observed time the class
/// retains, `sum_n c_n sum_{i<=M_n} w_i (t_i - t_{i-1}) / (sum_n c_n T0)`,
/// must be at least one half. The terminal interval is excluded.
///
/// `seq_coeffs` carries per-sequence contribution weights. All ones gives the
/// plain average over sequences; the fitting loop passes class
/// responsibilities so the constraint reflects the sequences the class
/// actually explains (cross-class intervals otherwise deflate the coverage no
/// matter how good the fit is).
pub fn check_rho_constraint(
    sequences: &[EventSequence],
    designs: &[SequenceDesign],
    params_k: &ClassParams,
    horizon: &HorizonSpec,
    rho: &RhoPair,
    seq_coeffs: Option<&[f64]>,
) -> Result<RhoCheck> {
    if sequences.len() != designs.len() {
        return Err(Error::Config("sequence/design length mismatch".into()));
    }
    let t0 = horizon.t0();
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, design) in designs.iter().enumerate() {
        let c = seq_coeffs.map_or(1.0, |cs| cs[n]);
        den += c * t0;
        if design.m == 0 || c == 0.0 {
            continue;
        }
        let comps = design.compensators(&params_k.coeffs);
        for i in 0..design.m {
            let w = phi_prime_scaled((comps[i] - 1.0).max(-1.0), rho)?;
            num += c * w * design.gap_lengths[i];
        }
    }
    let coverage = if den > 0.0 { num / den } else { 0.0 };
    Ok(RhoCheck {
        satisfied: coverage >= 0.5,
        coverage,
    })
}

/// Escalation cap for the rho scales.
pub const RHO_MAX: f64 = 1e3;

/// One escalation step of the rho pair: unchanged when the coverage
/// constraint holds, otherwise both scales times 1.5 (capped at `RHO_MAX`;
/// at the cap enforcement stops and a warning is logged).
pub fn adjust_rho(current: RhoPair, coverage: f64) -> RhoPair {
    if coverage >= 0.5 {
        return current;
    }
    if current.rho1 >= RHO_MAX && current.rho2 >= RHO_MAX {
        log::warn!(
            "rho scales at cap {RHO_MAX} with coverage {coverage:.3}; constraint enforcement stopped"
        );
        return current;
    }
    current.scaled(1.5, RHO_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::BasisKind;

    fn unit_rate_setup() -> (HorizonSpec, BasisSpec, ClassParams) {
        // Clamped cubic splines with unit coefficients give lambda == 1.
        let h = HorizonSpec::new(5.0, 1).unwrap();
        let basis = BasisSpec::cubic_spline(6, &h).unwrap();
        let params = ClassParams::new(vec![1.0; 6], &basis).unwrap();
        (h, basis, params)
    }

    #[test]
    fn unit_gaps_give_unit_weights() {
        let (h, basis, params) = unit_rate_setup();
        let seq = EventSequence::new("s", vec![1.0, 2.0, 3.0, 4.0], &h).unwrap();
        let w = class_weights(&seq, &params, &basis, &h, &RhoPair::default()).unwrap();
        for wi in &w {
            assert!((wi - 1.0).abs() < 1e-9, "{w:?}");
        }
    }

    #[test]
    fn support_endpoint_weight_is_zero() {
        let rho = RhoPair::default();
        // compensator = 1 + b * rho2 => argument b => weight 0
        let comp = 1.0 + 23.0 / 3.0;
        let w = class_weights_from_compensators(&[comp], &rho).unwrap();
        assert_eq!(w[0], 0.0);
        // compensator 0 => argument -1 => reflected weight 0
        let w = class_weights_from_compensators(&[0.0], &rho).unwrap();
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn overall_single_class_is_identity() {
        let cw = vec![vec![0.3, 0.8, 1.0]];
        let a = overall_weights(&cw, None, WeightStrategy::Max).unwrap();
        assert_eq!(a, vec![0.3, 0.8, 1.0]);
        let b = overall_weights(&cw, Some(&[1.0]), WeightStrategy::Mixture).unwrap();
        assert_eq!(b, vec![0.3, 0.8, 1.0]);
    }

    #[test]
    fn overall_identical_rows_degenerate() {
        let cw = vec![vec![0.5, 0.2], vec![0.5, 0.2]];
        let a = overall_weights(&cw, None, WeightStrategy::Max).unwrap();
        let b = overall_weights(&cw, Some(&[0.4, 0.6]), WeightStrategy::Mixture).unwrap();
        assert_eq!(a, vec![0.5, 0.2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn overall_vertex_of_simplex_selects_row() {
        let cw = vec![vec![0.5, 0.2], vec![0.9, 0.1]];
        let b = overall_weights(&cw, Some(&[1.0, 0.0]), WeightStrategy::Mixture).unwrap();
        assert_eq!(b, vec![0.5, 0.2]);
    }

    #[test]
    fn overall_max_dominates_every_class() {
        let cw = vec![vec![0.5, 0.2, 0.0], vec![0.1, 0.9, 0.3]];
        let w = overall_weights(&cw, None, WeightStrategy::Max).unwrap();
        for row in &cw {
            for (wi, ci) in w.iter().zip(row) {
                assert!(wi >= ci);
            }
        }
    }

    #[test]
    fn overall_rejects_bad_simplex() {
        let cw = vec![vec![0.5], vec![0.1]];
        assert!(overall_weights(&cw, Some(&[0.7, 0.7]), WeightStrategy::Mixture).is_err());
    }

    #[test]
    fn coverage_zero_when_weights_zero() {
        let (h, basis, _) = unit_rate_setup();
        // Huge coefficients force compensators far past the support endpoint.
        let params = ClassParams::new(vec![500.0; 6], &basis).unwrap();
        let seq = EventSequence::new("s", vec![1.0, 2.0, 3.0, 4.0], &h).unwrap();
        let designs = vec![SequenceDesign::build(&basis, &h, &seq).unwrap()];
        let check =
            check_rho_constraint(&[seq], &designs, &params, &h, &RhoPair::default(), None)
                .unwrap();
        assert!(!check.satisfied);
        assert!(check.coverage < 1e-12);
    }

    #[test]
    fn coverage_at_truth_clears_half() {
        // Unit-rate data fitted by the true model: expected coverage is
        // E[X phi'(X-1)] ~ 0.7536 times the observed fraction of the horizon
        // (oracle constant from quadrature, computed before the build).
        let h = HorizonSpec::new(50.0, 1).unwrap();
        let basis = BasisSpec::cubic_spline(6, &h).unwrap();
        assert_eq!(basis.kind, BasisKind::CubicSpline);
        let params = ClassParams::new(vec![1.0; 6], &basis).unwrap();
        // low-discrepancy exponential gaps stand in for a unit-rate draw
        let mut times = Vec::new();
        let mut t = 0.0;
        let mut u = 0.017f64;
        loop {
            t += -(1.0 - u).ln();
            if t >= 50.0 {
                break;
            }
            times.push(t);
            u = (u + 0.61803398875) % 1.0;
        }
        let seq = EventSequence::new("s", times, &h).unwrap();
        let designs = vec![SequenceDesign::build(&basis, &h, &seq).unwrap()];
        let check =
            check_rho_constraint(&[seq], &designs, &params, &h, &RhoPair::default(), None)
                .unwrap();
        assert!(
            check.satisfied && check.coverage > 0.5 && check.coverage < 0.95,
            "coverage {}",
            check.coverage
        );
    }

    #[test]
    fn adjust_rho_rules() {
        let rho = RhoPair::default();
        assert_eq!(adjust_rho(rho, 0.7), rho);
        assert_eq!(adjust_rho(rho, 0.3), RhoPair::new(1.5, 1.5).unwrap());
        let cap = RhoPair::new(RHO_MAX, RHO_MAX).unwrap();
        assert_eq!(adjust_rho(cap, 0.3), cap);
    }

    #[test]
    fn weight_locality_across_sequences() {
        let (h, basis, params) = unit_rate_setup();
        let rho = RhoPair::default();
        let s2 = EventSequence::new("b", vec![0.5, 4.0], &h).unwrap();
        let w2_before = class_weights(&s2, &params, &basis, &h, &rho).unwrap();
        // another sequence existing or changing has no effect on s2's table
        let _other = EventSequence::new("a", vec![0.1, 4.9], &h).unwrap();
        let w2_after = class_weights(&s2, &params, &basis, &h, &rho).unwrap();
        assert_eq!(w2_before, w2_after);
    }

    #[test]
    fn coverage_monotone_under_escalation() {
        let (h, basis, _) = unit_rate_setup();
        let params = ClassParams::new(vec![3.0; 6], &basis).unwrap();
        let seq = EventSequence::new("s", vec![0.9, 1.7, 2.2, 3.9, 4.4], &h).unwrap();
        let designs = vec![SequenceDesign::build(&basis, &h, &seq).unwrap()];
        let seqs = vec![seq];
        let rho0 = RhoPair::default();
        let c0 = check_rho_constraint(&seqs, &designs, &params, &h, &rho0, None)
            .unwrap()
            .coverage;
        let rho1 = adjust_rho(rho0, c0);
        let c1 = check_rho_constraint(&seqs, &designs, &params, &h, &rho1, None)
            .unwrap()
            .coverage;
        assert!(c1 >= c0 - 1e-12, "coverage fell from {c0} to {c1}");
    }
}

//! Checkers for the induction conditions (mis), (X), (Y) and W.

use serde::{Deserialize, Serialize};

use crate::constants::ConstantsProfile;
use crate::orbit::{OrbitError, OrbitTrace};
use crate::returns::{Decomposition, ReturnKind};

/// Relative slack on log-space comparisons.
pub const SLACK: f64 = 1e-12;

/// `lhs >= rhs` up to [`SLACK`] relative to `lhs`.
pub fn geq(lhs: f64, rhs: f64) -> bool {
    let s = if lhs.is_finite() { SLACK * lhs.abs().max(1.0) } else { 0.0 };
    lhs >= rhs - s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionKind {
    #[serde(rename = "MIS")]
    Mis,
    W,
    X,
    Y,
}

impl ConditionKind {
    pub fn label(&self) -> &'static str {
        match self {
            ConditionKind::Mis => "MIS",
            ConditionKind::W => "W",
            ConditionKind::X => "X",
            ConditionKind::Y => "Y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// Failing index: `i` for (mis) and (Y), `k` for W, `j` for (X).
    pub index: usize,
    /// For (X), the `i` of the worst pair.
    pub partner: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub critical_index: Option<usize>,
    pub horizon: usize,
    pub holds: bool,
    pub first_failure: Option<Failure>,
}

impl ConditionReport {
    fn new(kind: ConditionKind, critical_index: Option<usize>, horizon: usize, first_failure: Option<Failure>) -> Self {
        Self {
            kind,
            critical_index,
            horizon,
            holds: first_failure.is_none(),
            first_failure,
        }
    }

    pub fn failure_index(&self) -> Option<usize> {
        self.first_failure.map(|f| f.index)
    }
}

/// `d(c_i, C) >= σ` for `i ∈ [0, n]`.
pub fn check_mis(trace: &OrbitTrace, profile: &ConstantsProfile, n: usize) -> Result<ConditionReport, OrbitError> {
    trace.ensure_horizon(n)?;
    let rhs = profile.sigma.ln();
    let failure = (0..=n).find_map(|i| {
        let lhs = trace.dist[i].ln();
        (!geq(lhs, rhs)).then_some(Failure {
            index: i,
            partner: None,
            lhs,
            rhs,
        })
    });
    Ok(ConditionReport::new(ConditionKind::Mis, trace.critical_index, n, failure))
}

/// `ln L + min(ln σ, −α i ln L)`.
pub fn x_threshold(profile: &ConstantsProfile, i: usize) -> f64 {
    let log_l = profile.log_l();
    log_l + profile.sigma.ln().min(-profile.alpha * i as f64 * log_l)
}

/// `|(f^{j−i})'c_i| >= L·min{σ, L^{−αi}}` for `0 <= i < j <= n`, via a running maximum.
pub fn check_x(trace: &OrbitTrace, profile: &ConstantsProfile, n: usize) -> Result<ConditionReport, OrbitError> {
    trace.ensure_horizon(n)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    let mut failure = None;
    for j in 1..=n {
        let cand = trace.log_deriv[j - 1] + x_threshold(profile, j - 1);
        if cand > best {
            best = cand;
            best_i = j - 1;
        }
        if !geq(trace.log_deriv[j], best) {
            failure = Some(Failure {
                index: j,
                partner: Some(best_i),
                lhs: trace.log_deriv[j] - trace.log_deriv[best_i],
                rhs: x_threshold(profile, best_i),
            });
            break;
        }
    }
    Ok(ConditionReport::new(ConditionKind::X, trace.critical_index, n, failure))
}

/// Single-pair (X) predicate, with the slack taken relative to `log Λ_j`.
pub fn x_pair_holds(trace: &OrbitTrace, profile: &ConstantsProfile, i: usize, j: usize) -> bool {
    geq(trace.log_deriv[j], trace.log_deriv[i] + x_threshold(profile, i))
}

/// `|(f^i)'c_0| >= L^{λi}` for `i ∈ [0, n]`.
pub fn check_y(trace: &OrbitTrace, profile: &ConstantsProfile, n: usize) -> Result<ConditionReport, OrbitError> {
    trace.ensure_horizon(n)?;
    let log_l = profile.log_l();
    let failure = (0..=n).find_map(|i| {
        let lhs = trace.log_deriv[i];
        let rhs = profile.lambda * i as f64 * log_l;
        (!geq(lhs, rhs)).then_some(Failure {
            index: i,
            partner: None,
            lhs,
            rhs,
        })
    });
    Ok(ConditionReport::new(ConditionKind::Y, trace.critical_index, n, failure))
}

/// Right-hand side `αk ln L / 3` of W.
pub fn w_bound(profile: &ConstantsProfile, k: usize) -> f64 {
    profile.alpha * k as f64 * profile.log_l() / 3.0
}

/// `Σ_{deep free returns i <= k} −ln d(c_i, C) <= αk ln L / 3` for `k ∈ [0, n]`.
///
/// Both sides only change at return times there, so only those are evaluated.
pub fn check_w(decomposition: &Decomposition, profile: &ConstantsProfile, n: usize) -> Result<ConditionReport, OrbitError> {
    if n > decomposition.horizon {
        return Err(OrbitError::HorizonTooShort {
            requested: n,
            available: decomposition.horizon,
        });
    }
    let mut sum = 0.0;
    let mut failure = None;
    for ev in decomposition.events.iter().filter(|e| e.kind == ReturnKind::Deep) {
        if ev.time > n {
            break;
        }
        sum += -ev.depth.ln();
        let rhs = w_bound(profile, ev.time);
        if !geq(rhs, sum) {
            failure = Some(Failure {
                index: ev.time,
                partner: None,
                lhs: sum,
                rhs,
            });
            break;
        }
    }
    Ok(ConditionReport::new(ConditionKind::W, None, n, failure))
}

/// Verdict of the implication `W_n ∧ X_n ∧ Y_n ⇒ X_{n+1} ∧ Y_{n+1}` on one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrpropReport {
    pub critical_index: Option<usize>,
    pub n: usize,
    pub applicable: bool,
    pub x_next: Option<bool>,
    pub y_next: Option<bool>,
    /// `n` precedes the first deep return.
    pub before_first_deep_return: bool,
}

impl BrpropReport {
    pub fn agrees(&self) -> Option<bool> {
        if !self.applicable {
            return None;
        }
        Some(self.x_next == Some(true) && self.y_next == Some(true))
    }
}

pub fn cross_check_brprop(
    trace: &OrbitTrace,
    decomposition: &Decomposition,
    profile: &ConstantsProfile,
    n: usize,
) -> Result<BrpropReport, OrbitError> {
    trace.ensure_horizon(n + 1)?;
    let w = check_w(decomposition, profile, n)?;
    let x = check_x(trace, profile, n)?;
    let y = check_y(trace, profile, n)?;
    let applicable = w.holds && x.holds && y.holds;
    let before_first_deep_return = decomposition
        .events
        .iter()
        .find(|e| e.kind == ReturnKind::Deep)
        .is_none_or(|e| e.time > n);
    let (x_next, y_next) = if applicable {
        (
            Some(check_x(trace, profile, n + 1)?.holds),
            Some(check_y(trace, profile, n + 1)?.holds),
        )
    } else {
        (None, None)
    };
    Ok(BrpropReport {
        critical_index: trace.critical_index,
        n,
        applicable,
        x_next,
        y_next,
        before_first_deep_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ProfileSpec;
    use crate::returns::{ReturnEvent, ReturnMode};

    fn profile(sigma: f64) -> ConstantsProfile {
        ConstantsProfile::from_k0(44.0, 1e3, &ProfileSpec::empirical(sigma, sigma / 10.0, sigma / 100.0)).unwrap()
    }

    fn trace_from(derivs: &[f64], dist: &[f64]) -> OrbitTrace {
        let mut log_deriv = vec![0.0];
        for d in derivs {
            log_deriv.push(log_deriv.last().unwrap() + d.abs().ln());
        }
        OrbitTrace {
            critical_index: Some(0),
            a: 0.0,
            l: 1e3,
            points: vec![0.5; derivs.len() + 1],
            log_deriv,
            signs: vec![1; derivs.len() + 1],
            dist: dist.to_vec(),
            deriv: derivs.to_vec(),
            critical_hit: None,
        }
    }

    #[test]
    fn mis_vacuous_and_failure() {
        let t = trace_from(&[100.0; 5], &[0.2, 0.2, 0.2, 0.005, 0.2, 0.2]);
        let mut p = profile(0.01);
        let r = check_mis(&t, &p, 5).unwrap();
        assert!(!r.holds);
        assert_eq!(r.failure_index(), Some(3));
        assert!(check_mis(&t, &p, 2).unwrap().holds);
        p.sigma = 0.0;
        assert!(check_mis(&t, &p, 5).unwrap().holds);
    }

    #[test]
    fn y_examples() {
        let t = trace_from(&[0.5, 100.0], &[0.2; 3]);
        let mut p = profile(0.01);
        p.lambda = 0.0;
        let r = check_y(&t, &p, 2).unwrap();
        assert_eq!(r.failure_index(), Some(1));
        assert!(check_y(&t, &p, 0).unwrap().holds);
    }

    #[test]
    fn x_single_pair_and_straddle() {
        let p = profile(0.01);
        // |f'(c_0)| >= L·min{σ, 1} = 10
        assert!(check_x(&trace_from(&[10.0], &[0.2; 2]), &p, 1).unwrap().holds);
        assert!(!check_x(&trace_from(&[9.0], &[0.2; 2]), &p, 1).unwrap().holds);
        let t = trace_from(&[500.0, 500.0, 1e-3, 500.0], &[0.2; 5]);
        let r = check_x(&t, &p, 4).unwrap();
        assert_eq!(r.failure_index(), Some(3));
        assert_eq!(r.first_failure.unwrap().partner, Some(2));
    }

    #[test]
    fn horizon_too_short() {
        let t = trace_from(&[100.0; 2], &[0.2; 3]);
        assert!(matches!(
            check_y(&t, &profile(0.01), 3),
            Err(OrbitError::HorizonTooShort { requested: 3, available: 2 })
        ));
    }

    fn deep_event(time: usize, depth: f64) -> ReturnEvent {
        ReturnEvent {
            time,
            bound_to: 0,
            depth,
            depth_index: (-depth.ln()).floor() as i64,
            bound_period: 1,
            open_ended: false,
            kind: ReturnKind::Deep,
            essential: true,
        }
    }

    #[test]
    fn w_examples() {
        let p = profile(0.01);
        let empty = Decomposition {
            mode: ReturnMode::Deep,
            horizon: 20,
            events: vec![],
            segments: vec![],
        };
        assert!(check_w(&empty, &p, 20).unwrap().holds);
        let threshold = (-10.0 * p.alpha / 3.0 * p.log_l()).exp();
        for (depth, ok) in [(threshold * 1.001, true), (threshold * 0.999, false)] {
            let d = Decomposition {
                events: vec![deep_event(10, depth)],
                ..empty.clone()
            };
            assert_eq!(check_w(&d, &p, 20).unwrap().holds, ok);
            assert!(check_w(&d, &p, 9).unwrap().holds);
        }
    }

    #[test]
    fn brprop_not_applicable_when_hypotheses_fail() {
        let p = profile(0.01);
        let t = trace_from(&[1e-3, 100.0, 100.0], &[0.2; 4]);
        let d = Decomposition {
            mode: ReturnMode::Deep,
            horizon: 3,
            events: vec![],
            segments: vec![],
        };
        let r = cross_check_brprop(&t, &d, &p, 2).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.agrees(), None);
    }
}

//! The constant bundle `(β, α, N, K0, σ, λ0, λ, δ0, δ, K, K′)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{find_critical_points, CriticalSet, DriveFunction, MapError};

/// Spacing of the offset lattice used to sample `C_ε` around each critical point.
/// The lattice does not depend on `ε`, so larger neighbourhoods sample supersets.
pub const K0_LATTICE_STEP: f64 = 1.0 / (1u64 << 20) as f64;
pub const K0_GLOBAL_GRID: usize = 10_000;
pub const K0_SAFETY: f64 = 1.1;
pub const K0_CEILING: f64 = 1e6;

pub const DEFAULT_BETA: f64 = 1.75;
pub const DEFAULT_SPECIAL_STEPS: usize = 20;
pub const DEFAULT_ALPHA_RATIO: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("beta = {0} must lie in (3/2, 2)")]
    InvalidBeta(f64),
    #[error("alpha = {alpha} must satisfy 0 < alpha < lambda = {lambda}")]
    InvalidAlpha { alpha: f64, lambda: f64 },
    #[error("the number of special steps N must be at least 1")]
    InvalidSteps,
    #[error("invalid empirical overrides: {0}")]
    InvalidOverrides(String),
    #[error("epsilon = {eps} must lie in (0, {max})")]
    InvalidEpsilon { eps: f64, max: f64 },
    #[error("no K0 <= 1e6 satisfies the critical-neighbourhood bounds (worst ratio {0})")]
    K0Unbounded(f64),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOverrides {
    pub sigma: f64,
    pub delta0: f64,
    pub delta: f64,
    /// Growth exponent for `(Y)`; the asymptotic `λ0/9` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    PaperAsymptotic,
    Empirical(EmpiricalOverrides),
}

impl ProfileKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProfileKind::PaperAsymptotic => "paper-asymptotic",
            ProfileKind::Empirical(_) => "empirical",
        }
    }
}

/// User-facing inputs from which a [`ConstantsProfile`] is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub beta: f64,
    /// Defaults to `λ/100`.
    pub alpha: Option<f64>,
    pub special_steps: usize,
    pub kind: ProfileKind,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            alpha: None,
            special_steps: DEFAULT_SPECIAL_STEPS,
            kind: ProfileKind::PaperAsymptotic,
        }
    }
}

impl ProfileSpec {
    pub fn empirical(sigma: f64, delta0: f64, delta: f64) -> Self {
        Self {
            kind: ProfileKind::Empirical(EmpiricalOverrides {
                sigma,
                delta0,
                delta,
                lambda: None,
            }),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub l: f64,
    pub beta: f64,
    pub alpha: f64,
    pub special_steps: usize,
    pub k0: f64,
    pub sigma: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub delta0: f64,
    pub delta: f64,
    pub k: f64,
    pub k_prime: f64,
    pub kind: ProfileKind,
    /// Set when `σ ≥ 1/4` or `δ0 ≥ σ`: the asymptotic regime is not reached at this `L`.
    pub vacuous: bool,
}

pub fn lambda0_for(beta: f64) -> f64 {
    0.5 - beta / 4.0
}

pub fn sigma_paper(k0: f64, l: f64, beta: f64) -> f64 {
    k0 * l.powf(-1.0 + beta / 2.0)
}

pub fn distortion_k(k0: f64, l: f64, beta: f64) -> f64 {
    (2.0 * k0 * l.powf(1.0 - beta)).exp()
}

pub fn distortion_k_prime(l: f64) -> f64 {
    (l.powf(-0.25) + 3.0).exp()
}

impl ConstantsProfile {
    /// Derive every constant from an already known `K0`.
    pub fn from_k0(k0: f64, l: f64, spec: &ProfileSpec) -> Result<Self, ConstantsError> {
        let beta = spec.beta;
        if !(beta > 1.5 && beta < 2.0) {
            return Err(ConstantsError::InvalidBeta(beta));
        }
        if spec.special_steps == 0 {
            return Err(ConstantsError::InvalidSteps);
        }
        let lambda0 = lambda0_for(beta);
        let n = spec.special_steps;
        let (sigma, delta0, lambda, explicit_delta) = match spec.kind {
            ProfileKind::PaperAsymptotic => {
                (sigma_paper(k0, l, beta), l.powf(-1.0 + lambda0), lambda0 / 9.0, None)
            }
            ProfileKind::Empirical(o) => {
                let ok = o.delta > 0.0 && o.delta < o.delta0 && o.delta0 < o.sigma && o.sigma < 0.25;
                if !ok {
                    return Err(ConstantsError::InvalidOverrides(format!(
                        "need 0 < delta < delta0 < sigma < 1/4, got sigma={}, delta0={}, delta={}",
                        o.sigma, o.delta0, o.delta
                    )));
                }
                let lambda = o.lambda.unwrap_or(lambda0 / 9.0);
                if !(lambda > 0.0 && lambda < 0.5) {
                    return Err(ConstantsError::InvalidOverrides(format!(
                        "lambda = {lambda} must lie in (0, 1/2)"
                    )));
                }
                (o.sigma, o.delta0, lambda, Some(o.delta))
            }
        };
        let alpha = spec.alpha.unwrap_or(lambda * DEFAULT_ALPHA_RATIO);
        if !(alpha > 0.0 && alpha < lambda) {
            return Err(ConstantsError::InvalidAlpha { alpha, lambda });
        }
        let delta = explicit_delta.unwrap_or_else(|| l.powf(-alpha * n as f64));
        Ok(Self {
            l,
            beta,
            alpha,
            special_steps: n,
            k0,
            sigma,
            lambda0,
            lambda,
            delta0,
            delta,
            k: distortion_k(k0, l, beta),
            k_prime: distortion_k_prime(l),
            kind: spec.kind,
            vacuous: sigma >= 0.25 || delta0 >= sigma,
        })
    }

    pub fn log_l(&self) -> f64 {
        self.l.ln()
    }

    /// `(1 − L^{−αN/10})(1 − σ^{1/3})^N`, or `None` when `σ ≥ 1`.
    pub fn measure_lower_bound(&self) -> Option<f64> {
        if !(self.sigma < 1.0) {
            return None;
        }
        let n = self.special_steps as f64;
        let tail = 1.0 - self.l.powf(-self.alpha * n / 10.0);
        Some(tail * (1.0 - self.sigma.cbrt()).powf(n))
    }

    /// `(1 − σ^{1/3})^{n+1}` for the special steps `n ≤ N`.
    pub fn special_step_lower_bound(&self, n: usize) -> Option<f64> {
        if !(self.sigma < 1.0) || n > self.special_steps {
            return None;
        }
        Some((1.0 - self.sigma.cbrt()).powi(n as i32 + 1))
    }
}

/// Default neighbourhood radius for [`estimate_k0`]: an eighth of the smallest critical gap.
pub fn default_epsilon(critical: &CriticalSet) -> f64 {
    (critical.min_gap() / 8.0).min(0.05)
}

/// Smallest `K0 ≥ 1` (times [`K0_SAFETY`]) for which the quadratic, linear and global
/// bounds around the critical set hold on the sampling grids.
pub fn estimate_k0(phi: &DriveFunction, l: f64, eps: f64) -> Result<f64, ConstantsError> {
    let critical = find_critical_points(phi, l)?;
    estimate_k0_with(phi, l, &critical, eps)
}

pub fn estimate_k0_with(
    phi: &DriveFunction,
    l: f64,
    critical: &CriticalSet,
    eps: f64,
) -> Result<f64, ConstantsError> {
    let max_eps = critical.min_gap() / 4.0;
    if !(eps > 0.0 && eps < max_eps) {
        return Err(ConstantsError::InvalidEpsilon { eps, max: max_eps });
    }
    let mut worst: f64 = 0.0;
    let mut bump = |ratio: f64| {
        if ratio.is_nan() || ratio > worst {
            worst = if ratio.is_nan() { f64::INFINITY } else { ratio };
        }
    };

    let steps = (eps / K0_LATTICE_STEP).floor() as usize;
    for &c in critical.points() {
        let fc = 1.0 + l * phi.deriv1(c);
        for k in 1..=steps {
            for sign in [-1.0, 1.0] {
                let s = sign * k as f64 * K0_LATTICE_STEP;
                // f(c+s) - f(c) on the lift; the a-dependence cancels
                let jump = (s + l * phi.delta(c, s)).abs();
                let quad = l * s * s;
                bump(quad / jump);
                bump(jump / quad);
                let fp = (fc + l * phi.delta_deriv1(c, s)).abs();
                let lin = l * s.abs();
                bump(lin / fp);
                bump(fp / lin);
            }
        }
    }
    for k in 0..K0_GLOBAL_GRID {
        let t = k as f64 / K0_GLOBAL_GRID as f64;
        bump((1.0 + l * phi.deriv1(t)).abs() / l);
        bump(phi.deriv2(t).abs());
    }
    if !worst.is_finite() || worst * K0_SAFETY > K0_CEILING {
        return Err(ConstantsError::K0Unbounded(worst));
    }
    Ok((K0_SAFETY * worst).max(1.0))
}

/// Estimate `K0` for the drive and derive the full profile.
pub fn build_profile(
    phi: &DriveFunction,
    l: f64,
    spec: &ProfileSpec,
) -> Result<ConstantsProfile, ConstantsError> {
    let critical = find_critical_points(phi, l)?;
    build_profile_with(phi, l, &critical, spec)
}

pub fn build_profile_with(
    phi: &DriveFunction,
    l: f64,
    critical: &CriticalSet,
    spec: &ProfileSpec,
) -> Result<ConstantsProfile, ConstantsError> {
    let k0 = estimate_k0_with(phi, l, critical, default_epsilon(critical))?;
    ConstantsProfile::from_k0(k0, l, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lambda_from_beta() {
        let p = ConstantsProfile::from_k0(43.4, 1e4, &ProfileSpec::default()).unwrap();
        assert!((p.lambda0 - 0.0625).abs() < 1e-15);
        assert!((p.lambda - 0.0625 / 9.0).abs() < 1e-15);
        assert!((p.alpha - p.lambda / 100.0).abs() < 1e-18);
    }

    #[test]
    fn asymptotic_sigma_is_vacuous_at_desk_scale() {
        let p = ConstantsProfile::from_k0(43.4, 1e4, &ProfileSpec::default()).unwrap();
        assert!((p.sigma - 43.4 * 1e4f64.powf(-0.125)).abs() < 1e-12);
        assert!((p.sigma - 13.72).abs() < 0.01);
        assert!(p.vacuous);
        assert_eq!(p.measure_lower_bound(), None);
    }

    #[test]
    fn asymptotic_formulas_recomputable() {
        let spec = ProfileSpec { beta: 1.6, alpha: Some(0.001), special_steps: 7, ..Default::default() };
        let (k0, l) = (40.0, 3e5);
        let p = ConstantsProfile::from_k0(k0, l, &spec).unwrap();
        let l0 = 0.5 - 1.6 / 4.0;
        assert_eq!(p.sigma, k0 * l.powf(-1.0 + 0.8));
        assert_eq!(p.lambda0, l0);
        assert_eq!(p.lambda, l0 / 9.0);
        assert_eq!(p.delta0, l.powf(-1.0 + l0));
        assert_eq!(p.delta, l.powf(-0.001 * 7.0));
        assert_eq!(p.k, (2.0 * k0 * l.powf(1.0 - 1.6)).exp());
        assert_eq!(p.k_prime, (l.powf(-0.25) + 3.0).exp());
    }

    #[test]
    fn empirical_profile_accepted() {
        let p = ConstantsProfile::from_k0(43.4, 1e3, &ProfileSpec::empirical(0.05, 0.01, 0.002)).unwrap();
        assert!(!p.vacuous);
        assert_eq!(p.sigma, 0.05);
        assert_eq!(p.delta0, 0.01);
        assert_eq!(p.delta, 0.002);
    }

    #[test]
    fn empirical_ordering_enforced() {
        for (s, d0, d) in [(0.3, 0.01, 0.001), (0.05, 0.06, 0.001), (0.05, 0.01, 0.02), (0.05, 0.01, 0.0)] {
            let r = ConstantsProfile::from_k0(43.4, 1e3, &ProfileSpec::empirical(s, d0, d));
            assert!(matches!(r, Err(ConstantsError::InvalidOverrides(_))));
        }
    }

    #[test]
    fn beta_range() {
        for beta in [1.5, 2.0, 2.5, 1.0, f64::NAN] {
            let spec = ProfileSpec { beta, ..Default::default() };
            assert!(matches!(
                ConstantsProfile::from_k0(40.0, 1e4, &spec),
                Err(ConstantsError::InvalidBeta(_))
            ));
        }
    }

    #[test]
    fn k_tends_to_one() {
        for k0 in [1.0, 20.0, 50.0] {
            let small = distortion_k(k0, 1e3, 1.75);
            let big = distortion_k(k0, 1e6, 1.75);
            assert!(big < small);
            assert!(big < 1.01);
        }
    }

    #[test]
    fn exponent_orderings_over_beta_grid() {
        for k in 1..100 {
            let beta = 1.5 + 0.5 * k as f64 / 100.0;
            let l0 = lambda0_for(beta);
            let lam = l0 / 9.0;
            assert!(lam < l0 && l0 < 0.5);
            assert!(2.0 - beta > l0);
        }
    }

    #[test]
    fn builds_are_bit_identical() {
        let a = build_profile(&DriveFunction::Sine, 1e4, &ProfileSpec::default()).unwrap();
        let b = build_profile(&DriveFunction::Sine, 1e4, &ProfileSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k0_for_sine_is_forced_by_second_derivative() {
        let eps = 0.02;
        let k0 = estimate_k0(&DriveFunction::Sine, 1e3, eps).unwrap();
        let floor = 4.0 * PI * PI;
        assert!(k0 >= floor);
        // grid-maximisation oracle over C_eps and the circle, independent of the estimator's loop
        let l = 1e3;
        let crit = find_critical_points(&DriveFunction::Sine, l).unwrap();
        let f = |t: f64| t + l * (2.0 * PI * t).sin();
        let fp = |t: f64| 1.0 + 2.0 * PI * l * (2.0 * PI * t).cos();
        let mut grid_max: f64 = floor;
        for &c in crit.points() {
            for k in 1..=2000 {
                let s = eps * k as f64 / 2000.0;
                for t in [c - s, c + s] {
                    let jump = (f(c) - f(t)).abs();
                    grid_max = grid_max.max(jump / (l * s * s)).max(l * s * s / jump);
                    grid_max = grid_max.max(fp(t).abs() / (l * s)).max(l * s / fp(t).abs());
                }
            }
        }
        assert!(k0 <= 1.1 * grid_max * (1.0 + 1e-9), "k0={k0} grid={grid_max}");
        assert!((k0 - 1.1 * floor).abs() < 1e-6 * floor);
    }

    #[test]
    fn k0_unit_scaled_drive() {
        let phi = DriveFunction::fourier(vec![], vec![1.0 / (4.0 * PI * PI)]).unwrap();
        let k0 = estimate_k0(&phi, 1e3, 0.02).unwrap();
        assert!(k0 >= 1.0);
    }

    #[test]
    fn k0_monotone_in_epsilon() {
        let phi = DriveFunction::fourier(vec![0.2], vec![1.0, 0.3]).unwrap();
        let crit = find_critical_points(&phi, 500.0).unwrap();
        let max = crit.min_gap() / 4.0;
        let mut eps = max / 64.0;
        let mut prev = 0.0;
        while 2.0 * eps < max {
            let k0 = estimate_k0_with(&phi, 500.0, &crit, eps).unwrap();
            assert!(k0 >= prev);
            prev = k0;
            eps *= 2.0;
        }
    }

    #[test]
    fn epsilon_validated() {
        assert!(matches!(
            estimate_k0(&DriveFunction::Sine, 1e3, 0.3),
            Err(ConstantsError::InvalidEpsilon { .. })
        ));
    }

    #[test]
    fn lower_bounds() {
        let p = ConstantsProfile::from_k0(43.4, 1e3, &ProfileSpec::empirical(0.001, 0.0005, 0.0001)).unwrap();
        let n = p.special_steps as f64;
        let expected = (1.0 - 1e3f64.powf(-p.alpha * n / 10.0)) * (1.0 - 0.1f64).powf(n);
        assert!((p.measure_lower_bound().unwrap() - expected).abs() < 1e-14);
        assert!((p.special_step_lower_bound(0).unwrap() - 0.9).abs() < 1e-14);
    }
}

//! Critical orbits, log-space derivative products and the distortion ladder `d_i`, `D_n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{distance_to_critical, CriticalSet, MapFamily};

/// `|f'|` below this truncates an orbit.
pub const CRITICAL_HIT_THRESHOLD: f64 = 1e-300;

/// Relative agreement demanded between the two transversality computations.
pub const TRANSVERSALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("orbit reached a critical point at step {0}")]
    CriticalHit(usize),
    #[error("distortion ladder degenerated at index {0}")]
    DegenerateLadder(usize),
    #[error("horizon {requested} exceeds trace length {available}")]
    HorizonTooShort { requested: usize, available: usize },
    #[error("transversality recursion {recursion} and closed form {closed_form} disagree")]
    OracleMismatch { recursion: f64, closed_form: f64 },
}

/// Forward orbit `x_i = f^i(θ0)` with `log|(f^i)'(θ0)|`, signs and distances to `C`.
///
/// For a critical orbit `θ0 = f(c)`, so `points[i]` is `c_i(a) = f^{i+1}(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    /// Index into the critical set of the origin `c` when this is a critical orbit.
    pub critical_index: Option<usize>,
    pub a: f64,
    pub l: f64,
    pub points: Vec<f64>,
    /// `log Λ_i`, with `Λ_i = |(f^i)'(x_0)|` and `Λ_0 = 1`.
    pub log_deriv: Vec<f64>,
    /// Sign of `(f^i)'(x_0)`.
    pub signs: Vec<i8>,
    pub dist: Vec<f64>,
    /// `f'(x_i)` for `i < horizon`.
    pub deriv: Vec<f64>,
    /// Step at which `|f'| <` [`CRITICAL_HIT_THRESHOLD`]; the trace stops there.
    pub critical_hit: Option<usize>,
}

impl OrbitTrace {
    pub fn horizon(&self) -> usize {
        self.points.len() - 1
    }

    /// `log|(f^{j-i})'(x_i)|`.
    ///
    /// Panics unless `i < j <= horizon`.
    pub fn deriv_along(&self, i: usize, j: usize) -> f64 {
        assert!(i < j && j <= self.horizon(), "deriv_along needs i < j <= horizon");
        self.log_deriv[j] - self.log_deriv[i]
    }

    pub fn ensure_horizon(&self, n: usize) -> Result<(), OrbitError> {
        if n > self.horizon() {
            return Err(match self.critical_hit {
                Some(h) => OrbitError::CriticalHit(h),
                None => OrbitError::HorizonTooShort {
                    requested: n,
                    available: self.horizon(),
                },
            });
        }
        Ok(())
    }
}

pub fn iterate_orbit(family: &MapFamily, critical: &CriticalSet, theta0: f64, n: usize) -> OrbitTrace {
    let mut x = crate::map::wrap(theta0);
    let mut points = Vec::with_capacity(n + 1);
    let mut log_deriv = Vec::with_capacity(n + 1);
    let mut signs = Vec::with_capacity(n + 1);
    let mut dist = Vec::with_capacity(n + 1);
    let mut deriv = Vec::with_capacity(n);
    let mut log_acc = 0.0;
    let mut sign: i8 = 1;
    let mut critical_hit = None;
    points.push(x);
    log_deriv.push(0.0);
    signs.push(1);
    dist.push(distance_to_critical(x, critical));
    for i in 0..n {
        let fp = family.eval_deriv(x);
        if fp.abs() < CRITICAL_HIT_THRESHOLD {
            critical_hit = Some(i);
            break;
        }
        deriv.push(fp);
        log_acc += fp.abs().ln();
        if fp < 0.0 {
            sign = -sign;
        }
        x = family.eval_map(x);
        points.push(x);
        log_deriv.push(log_acc);
        signs.push(sign);
        dist.push(distance_to_critical(x, critical));
    }
    OrbitTrace {
        critical_index: None,
        a: family.a(),
        l: family.l(),
        points,
        log_deriv,
        signs,
        dist,
        deriv,
        critical_hit,
    }
}

/// Orbit of the critical value `c_0(a) = f_a(c)` for `c = critical.points()[index]`.
pub fn critical_orbit(family: &MapFamily, critical: &CriticalSet, index: usize, n: usize) -> OrbitTrace {
    let c = critical.points()[index];
    let mut trace = iterate_orbit(family, critical, family.eval_map(c), n);
    trace.critical_index = Some(index);
    trace
}

/// Running `log Σ exp(x_k)` with Kahan-compensated mantissa sums.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    comp: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let scale = (self.max - x).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = x;
        }
        let y = (x - self.max).exp() - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `d_i = |(f^i)'θ|^{-1}·|f'(f^iθ)|` and `D_n = L^{-β}[Σ_{i<n} d_i^{-1}]^{-1}`, stored as logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionLadder {
    pub l: f64,
    pub beta: f64,
    /// `log d_i` for `i = 0..n`.
    pub log_d: Vec<f64>,
    /// `log Σ_{i<k} d_i^{-1}` at index `k-1`, `k = 1..=n`.
    pub log_inv_d_prefix: Vec<f64>,
    /// `log D_k` at index `k-1`, `k = 1..=n`.
    pub log_big_d: Vec<f64>,
}

impl DistortionLadder {
    pub fn horizon(&self) -> usize {
        self.log_big_d.len()
    }

    pub fn d(&self, i: usize) -> f64 {
        self.log_d[i].exp()
    }

    /// `D_n` for `1 <= n <= horizon`.
    pub fn big_d(&self, n: usize) -> f64 {
        self.log_big_d[n - 1].exp()
    }

    pub fn log_big_d(&self, n: usize) -> f64 {
        self.log_big_d[n - 1]
    }
}

pub fn compute_ladder(trace: &OrbitTrace, beta: f64) -> Result<DistortionLadder, OrbitError> {
    if let Some(h) = trace.critical_hit {
        return Err(OrbitError::CriticalHit(h));
    }
    let n = trace.horizon();
    let log_scale = -beta * trace.l.ln();
    let mut acc = LogSumExp::default();
    let mut log_d = Vec::with_capacity(n);
    let mut log_inv_d_prefix = Vec::with_capacity(n);
    let mut log_big_d = Vec::with_capacity(n);
    for i in 0..n {
        let ld = trace.deriv[i].abs().ln() - trace.log_deriv[i];
        if !ld.is_finite() {
            return Err(OrbitError::DegenerateLadder(i));
        }
        log_d.push(ld);
        acc.push(-ld);
        let s = acc.value();
        log_inv_d_prefix.push(s);
        log_big_d.push(log_scale - s);
    }
    Ok(DistortionLadder {
        l: trace.l,
        beta,
        log_d,
        log_inv_d_prefix,
        log_big_d,
    })
}

/// `c_n'(a) / (f^n)'(c_0)` from the forward recursion and from `1 + Σ_{i=1}^n 1/(f^i)'(c_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    pub n: usize,
    pub recursion: f64,
    pub closed_form: f64,
    /// `1 + Σ |1/(f^i)'(c_0)|`, the scale against which the two routes are compared.
    pub scale: f64,
}

/// Real number kept as `mantissa · 2^exponent`.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    mantissa: f64,
    exponent: i32,
}

impl Scaled {
    fn one() -> Self {
        Self { mantissa: 1.0, exponent: 0 }
    }

    fn normalize(mut self) -> Self {
        if self.mantissa != 0.0 && self.mantissa.is_finite() {
            let e = self.mantissa.abs().log2().floor() as i32;
            self.mantissa *= 2f64.powi(-e);
            self.exponent += e;
        }
        self
    }

    fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.exponent as f64 * std::f64::consts::LN_2
    }
}

/// Both routes for the orbit of a critical value; `trace` must start at `c_0(a)`.
pub fn transversality(trace: &OrbitTrace, n: usize) -> Result<Transversality, OrbitError> {
    trace.ensure_horizon(n)?;
    // c'_0 = 1, c'_{i+1} = 1 + f'(c_i) c'_i
    let mut v = Scaled::one();
    for i in 0..n {
        let t = trace.deriv[i] * v.mantissa;
        let one = if v.exponent > 1100 { 0.0 } else { 2f64.powi(-v.exponent) };
        v = Scaled {
            mantissa: t + one,
            exponent: v.exponent,
        }
        .normalize();
    }
    let recursion = if v.mantissa == 0.0 {
        0.0
    } else {
        let sign = v.mantissa.signum() * trace.signs[n] as f64;
        sign * (v.ln_abs() - trace.log_deriv[n]).exp()
    };

    let mut sum = 1.0;
    let mut comp = 0.0;
    let mut scale = 1.0;
    for i in 1..=n {
        let term = trace.signs[i] as f64 * (-trace.log_deriv[i]).exp();
        scale += term.abs();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(Transversality {
        n,
        recursion,
        closed_form: sum,
        scale,
    })
}

/// [`transversality`] with the cross-check enforced; returns the recursion value.
pub fn transversality_ratio(trace: &OrbitTrace, n: usize) -> Result<f64, OrbitError> {
    let t = transversality(trace, n)?;
    if (t.recursion - t.closed_form).abs() > TRANSVERSALITY_TOL * t.scale {
        return Err(OrbitError::OracleMismatch {
            recursion: t.recursion,
            closed_form: t.closed_form,
        });
    }
    Ok(t.recursion)
}

/// A nearby orbit tracked as lift offsets from a reference trace.
///
/// With `x_i` the reference points, the shadow is `x_i + e_i` under the map with parameter
/// `a + s`: `e_{i+1} = e_i + s + L·(Φ(x_i + e_i) − Φ(x_i))`. Offsets far below `ulp(x_i)`
/// are resolved exactly, which is what distortion checks over `D_n`-sized intervals need.
#[derive(Debug, Clone, PartialEq)]
pub struct Shadow {
    /// `e_i`, `i = 0..=n`.
    pub offsets: Vec<f64>,
    /// `log|(f^i)'(x_0 + e_0)| − log|(f^i)'(x_0)|` (parameter `a + s` for the shadow).
    pub log_ratio: Vec<f64>,
    /// `c_i'(a+s) / (f_a^i)'(c_0(a))`; only meaningful when the reference is a critical orbit
    /// and `e_0 = s`.
    pub param_deriv_ratio: Vec<f64>,
}

impl Shadow {
    pub fn horizon(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `log|c_n'(a+s)|` for a critical-orbit reference.
    pub fn log_param_deriv(&self, trace: &OrbitTrace, n: usize) -> f64 {
        self.param_deriv_ratio[n].abs().ln() + trace.log_deriv[n]
    }
}

pub fn shadow(family: &MapFamily, trace: &OrbitTrace, phase_offset: f64, param_offset: f64, n: usize) -> Result<Shadow, OrbitError> {
    trace.ensure_horizon(n)?;
    let phi = family.phi();
    let l = family.l();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut log_ratio = Vec::with_capacity(n + 1);
    let mut q = Vec::with_capacity(n + 1);
    let mut e = phase_offset;
    let mut lr = 0.0;
    let mut qi = 1.0;
    offsets.push(e);
    log_ratio.push(lr);
    q.push(qi);
    for i in 0..n {
        let x = trace.points[i];
        let base = trace.deriv[i];
        let rho = 1.0 + l * phi.delta_deriv1(x, e) / base;
        lr += rho.abs().ln();
        let inv_next = trace.signs[i + 1] as f64 * (-trace.log_deriv[i + 1]).exp();
        qi = qi * rho + inv_next;
        e = e + param_offset + l * phi.delta(x, e);
        offsets.push(e);
        log_ratio.push(lr);
        q.push(qi);
    }
    Ok(Shadow {
        offsets,
        log_ratio,
        param_deriv_ratio: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{find_critical_points, DriveFunction, Model};
    use std::f64::consts::PI;

    fn model(l: f64) -> Model {
        Model::new(DriveFunction::Sine, l).unwrap()
    }

    #[test]
    fn fixed_point_orbit() {
        let m = model(7.0);
        let f = m.family(0.0);
        let t = iterate_orbit(&f, m.critical(), 0.0, 3);
        let step = (1.0 + 14.0 * PI).ln();
        for i in 0..=3 {
            assert_eq!(t.points[i], 0.0);
            assert!((t.log_deriv[i] - i as f64 * step).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_orbit() {
        let m = model(7.0);
        let t = iterate_orbit(&m.family(0.2), m.critical(), 0.4, 0);
        assert_eq!(t.points, vec![0.4]);
        assert_eq!(t.log_deriv, vec![0.0]);
        assert_eq!(t.horizon(), 0);
    }

    #[test]
    fn log_matches_direct_product() {
        let m = model(37.0);
        let f = m.family(0.123);
        let t = iterate_orbit(&f, m.critical(), 0.61, 25);
        let mut x = 0.61;
        let mut prod = 1.0f64;
        for i in 0..25 {
            prod *= f.eval_deriv(x).abs();
            x = f.eval_map(x);
            let rel = ((t.log_deriv[i + 1]).exp() - prod).abs() / prod;
            assert!(rel < 1e-12, "i={i} rel={rel}");
        }
    }

    #[test]
    fn critical_hit_truncates() {
        // L = 1/(2π) makes f'(1/2) = 1 + cos(π) = 0 exactly
        let m = model(10.0);
        let f = MapFamily::new(DriveFunction::Sine, 0.0, 1.0 / (2.0 * PI)).unwrap();
        let t = iterate_orbit(&f, m.critical(), 0.5, 5);
        assert_eq!(t.critical_hit, Some(0));
        assert_eq!(t.horizon(), 0);
        assert!(matches!(compute_ladder(&t, 1.75), Err(OrbitError::CriticalHit(0))));
        assert!(matches!(t.ensure_horizon(3), Err(OrbitError::CriticalHit(0))));
    }

    #[test]
    fn ladder_first_terms() {
        let m = model(100.0);
        let f = m.family(0.41);
        let t = iterate_orbit(&f, m.critical(), 0.1, 10);
        let ladder = compute_ladder(&t, 1.75).unwrap();
        let fp0 = f.eval_deriv(0.1).abs();
        assert!((ladder.d(0) - fp0).abs() < 1e-12 * fp0);
        let d1 = 100f64.powf(-1.75) * fp0;
        assert!((ladder.big_d(1) - d1).abs() < 1e-12 * d1);
        for k in 2..=10 {
            assert!(ladder.big_d(k) < ladder.big_d(k - 1));
        }
    }

    #[test]
    fn ladder_d1_numeric_example() {
        // |f'(θ0)| = 50 at L = 100 gives D_1 = 50·100^{-1.75} = 50·10^{-3.5}
        let trace = OrbitTrace {
            critical_index: None,
            a: 0.0,
            l: 100.0,
            points: vec![0.0, 0.5],
            log_deriv: vec![0.0, 50f64.ln()],
            signs: vec![1, 1],
            dist: vec![0.1, 0.1],
            deriv: vec![50.0],
            critical_hit: None,
        };
        let ladder = compute_ladder(&trace, 1.75).unwrap();
        assert!((ladder.big_d(1) - 1.58114e-2).abs() < 1e-6);
    }

    #[test]
    fn deriv_along_telescopes() {
        let m = model(50.0);
        let t = critical_orbit(&m.family(0.77), m.critical(), 1, 30);
        assert_eq!(t.deriv_along(0, 30), t.log_deriv[30]);
        assert!((t.deriv_along(9, 10) - t.deriv[9].abs().ln()).abs() < 1e-9);
        for (i, k, j) in [(0, 5, 30), (3, 17, 22), (1, 2, 3)] {
            let lhs = t.deriv_along(i, k) + t.deriv_along(k, j);
            assert!((lhs - t.deriv_along(i, j)).abs() <= 1e-12 * t.log_deriv[j].abs().max(1.0));
        }
    }

    #[test]
    fn transversality_small_n() {
        let m = model(100.0);
        let t = critical_orbit(&m.family(0.2), m.critical(), 0, 5);
        assert_eq!(transversality_ratio(&t, 0).unwrap(), 1.0);
        let r1 = transversality_ratio(&t, 1).unwrap();
        assert!((r1 - (1.0 + 1.0 / t.deriv[0])).abs() < 1e-14);
    }

    #[test]
    fn transversality_long_orbit_no_overflow() {
        let m = model(1e4);
        let t = critical_orbit(&m.family(0.3271), m.critical(), 0, 200);
        let tr = transversality(&t, 200).unwrap();
        assert!(tr.recursion.is_finite());
        assert!((tr.recursion - tr.closed_form).abs() <= TRANSVERSALITY_TOL * tr.scale);
    }

    #[test]
    fn logsumexp_against_direct() {
        let xs = [-3.0, 2.0, 0.5, -700.0, 1.25];
        let mut acc = LogSumExp::default();
        for &x in &xs {
            acc.push(x);
        }
        let direct: f64 = xs.iter().map(|x| f64::exp(*x)).sum::<f64>().ln();
        assert!((acc.value() - direct).abs() < 1e-14);
    }

    #[test]
    fn shadow_matches_direct_iteration() {
        let m = model(30.0);
        let f = m.family(0.35);
        let t = iterate_orbit(&f, m.critical(), 0.4, 3);
        let e0 = 1e-9;
        let sh = shadow(&f, &t, e0, 0.0, 3).unwrap();
        let mut x = 0.4 + e0;
        let mut logd = 0.0;
        for i in 0..3 {
            logd += f.eval_deriv(x).abs().ln();
            x = f.eval_map(x);
            let direct = crate::map::signed_offset(x, t.points[i + 1]);
            let e = sh.offsets[i + 1];
            assert!((e - direct).abs() < 1e-5 * e.abs(), "i={i} {e} {direct}");
            assert!((sh.log_ratio[i + 1] - (logd - t.log_deriv[i + 1])).abs() < 1e-6);
        }
    }

    #[test]
    fn shadow_parameter_derivative_matches_recursion() {
        let m = model(20.0);
        let f = m.family(0.6);
        let t = critical_orbit(&f, m.critical(), 0, 4);
        let s = 1e-10;
        let sh = shadow(&f, &t, s, s, 4).unwrap();
        // forward recursion at a+s evaluated directly
        let crit = find_critical_points(&DriveFunction::Sine, 20.0).unwrap();
        let g = m.family(0.6 + s);
        let mut x = g.eval_map(crit.points()[0]);
        let mut dp = 1.0;
        for i in 0..4 {
            dp = 1.0 + g.eval_deriv(x) * dp;
            x = g.eval_map(x);
            let expect = dp / (t.signs[i + 1] as f64 * t.log_deriv[i + 1].exp());
            assert!((sh.param_deriv_ratio[i + 1] - expect).abs() < 1e-6 * expect.abs().max(1.0));
        }
    }
}

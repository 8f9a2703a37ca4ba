//! The circle, the drive function and the map family `θ ↦ θ + a + L·Φ(θ)`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width below which a bracketed critical point is considered refined.
pub const CRITICAL_POINT_TOL: f64 = 1e-14;

/// Grid nodes per critical point of the drive used to bracket critical points of `f`.
pub const BRACKET_NODES_PER_POINT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("parameter a = {0} is not in [0, 1)")]
    InvalidA(f64),
    #[error("amplitude L = {0} must be finite and positive")]
    InvalidL(f64),
    #[error("f' has no sign change for L = {0}: the map is a diffeomorphism")]
    NoCriticalPoints(f64),
    #[error("critical point {point} is degenerate (|f''| = {second})")]
    DegenerateCritical { point: f64, second: f64 },
    #[error("drive function `{0}` is not Morse")]
    NotMorse(String),
    #[error("drive coefficient lists must be finite and contain at least one non-zero harmonic")]
    InvalidCoefficients,
}

/// Reduce a real number to its representative in `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed lift difference `x - y` reduced to `[-1/2, 1/2)`.
#[inline]
pub fn signed_offset(x: f64, y: f64) -> f64 {
    let d = x - y;
    d - (d + 0.5).floor()
}

/// Arc-length distance on `R/Z`, always in `[0, 1/2]`.
#[inline]
pub fn circle_distance(x: f64, y: f64) -> f64 {
    let d = wrap((x - y).abs());
    d.min(1.0 - d)
}

/// Truncated Fourier series `Φ(θ) = Σ_m cos[m]·cos(2π m θ) + sin[m]·sin(2π m θ)`,
/// harmonics indexed from `m = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDrive {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FourierDrive {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self, MapError> {
        let finite = cos.iter().chain(sin.iter()).all(|c| c.is_finite());
        let nonzero = cos.iter().chain(sin.iter()).any(|&c| c != 0.0);
        if !finite || !nonzero {
            return Err(MapError::InvalidCoefficients);
        }
        Ok(Self { cos, sin })
    }

    fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    fn coeffs(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.harmonics()).map(move |k| {
            let a = self.cos.get(k).copied().unwrap_or(0.0);
            let b = self.sin.get(k).copied().unwrap_or(0.0);
            (TAU * (k + 1) as f64, a, b)
        })
    }
}

/// The drive `Φ : R/Z → R` together with its first two derivatives.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveFunction {
    /// `Φ(θ) = sin(2πθ)`.
    #[default]
    Sine,
    Fourier(FourierDrive),
}

impl DriveFunction {
    pub fn fourier(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self, MapError> {
        let drive = DriveFunction::Fourier(FourierDrive::new(cos, sin)?);
        drive.check_morse()?;
        Ok(drive)
    }

    pub fn name(&self) -> String {
        match self {
            DriveFunction::Sine => "sine".to_string(),
            DriveFunction::Fourier(f) => format!("fourier{}", f.harmonics()),
        }
    }

    /// Highest harmonic present; bounds the number of critical points of `Φ` by twice this.
    pub fn max_harmonic(&self) -> usize {
        match self {
            DriveFunction::Sine => 1,
            DriveFunction::Fourier(f) => f.harmonics(),
        }
    }

    pub fn value(&self, theta: f64) -> f64 {
        let t = wrap(theta);
        match self {
            DriveFunction::Sine => (TAU * t).sin(),
            DriveFunction::Fourier(f) => f
                .coeffs()
                .map(|(w, a, b)| {
                    let (s, c) = (w * t).sin_cos();
                    a * c + b * s
                })
                .sum(),
        }
    }

    pub fn deriv1(&self, theta: f64) -> f64 {
        let t = wrap(theta);
        match self {
            DriveFunction::Sine => TAU * (TAU * t).cos(),
            DriveFunction::Fourier(f) => f
                .coeffs()
                .map(|(w, a, b)| {
                    let (s, c) = (w * t).sin_cos();
                    w * (b * c - a * s)
                })
                .sum(),
        }
    }

    pub fn deriv2(&self, theta: f64) -> f64 {
        let t = wrap(theta);
        match self {
            DriveFunction::Sine => -TAU * TAU * (TAU * t).sin(),
            DriveFunction::Fourier(f) => f
                .coeffs()
                .map(|(w, a, b)| {
                    let (s, c) = (w * t).sin_cos();
                    -w * w * (a * c + b * s)
                })
                .sum(),
        }
    }

    /// `Φ(x + e) - Φ(x)` without cancellation for small `e`.
    pub fn delta(&self, x: f64, e: f64) -> f64 {
        let t = wrap(x);
        match self {
            DriveFunction::Sine => 2.0 * (TAU * t + PI * e).cos() * (PI * e).sin(),
            DriveFunction::Fourier(f) => f
                .coeffs()
                .map(|(w, a, b)| {
                    let half = 0.5 * w * e;
                    let mid = w * t + half;
                    let s = half.sin();
                    // cos(u+v)-cos(u) = -2 sin(u+v/2) sin(v/2); sin(u+v)-sin(u) = 2 cos(u+v/2) sin(v/2)
                    2.0 * s * (b * mid.cos() - a * mid.sin())
                })
                .sum(),
        }
    }

    /// `Φ'(x + e) - Φ'(x)` without cancellation for small `e`.
    pub fn delta_deriv1(&self, x: f64, e: f64) -> f64 {
        let t = wrap(x);
        match self {
            DriveFunction::Sine => -2.0 * TAU * (TAU * t + PI * e).sin() * (PI * e).sin(),
            DriveFunction::Fourier(f) => f
                .coeffs()
                .map(|(w, a, b)| {
                    let half = 0.5 * w * e;
                    let mid = w * t + half;
                    let s = half.sin();
                    -2.0 * w * s * (b * mid.sin() + a * mid.cos())
                })
                .sum(),
        }
    }

    /// Upper bound on the number of critical points of `Φ`.
    pub fn critical_point_bound(&self) -> usize {
        2 * self.max_harmonic()
    }

    /// Grid estimate of `sup |Φ''|`.
    pub fn sup_deriv2(&self) -> f64 {
        let m = 4096 * self.max_harmonic();
        (0..m)
            .map(|k| self.deriv2(k as f64 / m as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Numerical Morse check: every bracketed zero of `Φ'` has `Φ''` bounded away from zero.
    pub fn check_morse(&self) -> Result<(), MapError> {
        let m = 4096 * self.max_harmonic();
        let sup1 = (0..m)
            .map(|k| self.deriv1(k as f64 / m as f64).abs())
            .fold(0.0, f64::max);
        let sup2 = self.sup_deriv2();
        if sup1 == 0.0 || sup2 == 0.0 {
            return Err(MapError::NotMorse(self.name()));
        }
        let roots = bracket_roots(|t| self.deriv1(t), m);
        for r in roots {
            if self.deriv2(r).abs() < 1e-6 * sup2 {
                return Err(MapError::NotMorse(self.name()));
            }
        }
        Ok(())
    }
}

/// All roots of a 1-periodic function on `[0, 1)` found by sign changes on an `m`-node grid,
/// each refined by bisection to [`CRITICAL_POINT_TOL`].
fn bracket_roots(g: impl Fn(f64) -> f64, m: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev = g(0.0);
    for k in 1..=m {
        let hi = k as f64 / m as f64;
        let cur = if k == m { g(0.0) } else { g(hi) };
        if cur == 0.0 {
            roots.push(wrap(hi));
        } else if prev != 0.0 && prev.signum() != cur.signum() {
            let mut lo = (k - 1) as f64 / m as f64;
            let mut up = hi;
            let mut g_lo = prev;
            while up - lo > CRITICAL_POINT_TOL {
                let mid = 0.5 * (lo + up);
                if mid <= lo || mid >= up {
                    break;
                }
                let g_mid = g(mid);
                if g_mid == 0.0 {
                    lo = mid;
                    up = mid;
                    break;
                }
                if g_mid.signum() == g_lo.signum() {
                    lo = mid;
                    g_lo = g_mid;
                } else {
                    up = mid;
                }
            }
            roots.push(wrap(0.5 * (lo + up)));
        }
        prev = cur;
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| circle_distance(*a, *b) <= CRITICAL_POINT_TOL);
    roots
}

/// One member `f_{a,L}` of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFamily {
    phi: Arc<DriveFunction>,
    a: f64,
    l: f64,
}

impl MapFamily {
    pub fn new(phi: DriveFunction, a: f64, l: f64) -> Result<Self, MapError> {
        Self::with_shared(Arc::new(phi), a, l)
    }

    pub fn with_shared(phi: Arc<DriveFunction>, a: f64, l: f64) -> Result<Self, MapError> {
        if !(0.0..1.0).contains(&a) {
            return Err(MapError::InvalidA(a));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(MapError::InvalidL(l));
        }
        Ok(Self { phi, a, l })
    }

    /// Same drive and amplitude at another translation parameter; `a` is reduced mod 1.
    pub fn with_a(&self, a: f64) -> Self {
        Self {
            phi: Arc::clone(&self.phi),
            a: wrap(a),
            l: self.l,
        }
    }

    pub fn phi(&self) -> &DriveFunction {
        &self.phi
    }

    pub fn shared_phi(&self) -> Arc<DriveFunction> {
        Arc::clone(&self.phi)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// `(θ + a + LΦ(θ)) mod 1`.
    #[inline]
    pub fn eval_map(&self, theta: f64) -> f64 {
        wrap(self.lift(theta))
    }

    /// The map on the universal cover, without reduction.
    #[inline]
    pub fn lift(&self, x: f64) -> f64 {
        x + self.a + self.l * self.phi.value(x)
    }

    /// `f'(θ) = 1 + LΦ'(θ)`; does not depend on `a`.
    #[inline]
    pub fn eval_deriv(&self, theta: f64) -> f64 {
        1.0 + self.l * self.phi.deriv1(theta)
    }

    #[inline]
    pub fn eval_deriv2(&self, theta: f64) -> f64 {
        self.l * self.phi.deriv2(theta)
    }
}

/// Critical points of `f_{a,L}`, sorted in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    points: Vec<f64>,
    l: f64,
}

impl CriticalSet {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and distance of the closest critical point.
    pub fn nearest(&self, theta: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, &c) in self.points.iter().enumerate() {
            let d = circle_distance(theta, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }

    /// Smallest circle distance between two distinct critical points (1 for a single point).
    pub fn min_gap(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 1.0;
        }
        (0..n)
            .map(|k| circle_distance(self.points[k], self.points[(k + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `d(θ, C)`.
pub fn distance_to_critical(theta: f64, critical: &CriticalSet) -> f64 {
    critical.nearest(theta).1
}

/// Roots of `1 + LΦ'` on the circle.
pub fn find_critical_points(phi: &DriveFunction, l: f64) -> Result<CriticalSet, MapError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(MapError::InvalidL(l));
    }
    let m = BRACKET_NODES_PER_POINT * phi.critical_point_bound().max(2);
    let points = bracket_roots(|t| 1.0 + l * phi.deriv1(t), m);
    if points.is_empty() {
        return Err(MapError::NoCriticalPoints(l));
    }
    let sup2 = phi.sup_deriv2();
    for &c in &points {
        let second = l * phi.deriv2(c);
        if second.abs() < 1e-9 * l * sup2 {
            return Err(MapError::DegenerateCritical { point: c, second });
        }
    }
    Ok(CriticalSet { points, l })
}

/// A drive at fixed amplitude together with its critical set; members differ only in `a`.
#[derive(Debug, Clone)]
pub struct Model {
    base: MapFamily,
    critical: CriticalSet,
}

impl Model {
    pub fn new(phi: DriveFunction, l: f64) -> Result<Self, MapError> {
        let base = MapFamily::new(phi, 0.0, l)?;
        let critical = find_critical_points(base.phi(), l)?;
        Ok(Self { base, critical })
    }

    pub fn family(&self, a: f64) -> MapFamily {
        self.base.with_a(a)
    }

    pub fn critical(&self) -> &CriticalSet {
        &self.critical
    }

    pub fn phi(&self) -> &DriveFunction {
        self.base.phi()
    }

    pub fn l(&self) -> f64 {
        self.base.l()
    }
}

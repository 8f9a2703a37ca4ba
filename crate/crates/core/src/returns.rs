//! Bound-period ladders, free/bound decomposition, essential returns and parameter windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::ConstantsProfile;
use crate::map::{signed_offset, CriticalSet, MapFamily, Model};
use crate::orbit::{compute_ladder, critical_orbit, shadow, DistortionLadder, OrbitError, OrbitTrace};

/// Samples used to estimate `|c_n(Δ̂_n)|`.
pub const WINDOW_SAMPLES: usize = 33;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReturnsError {
    #[error("bound-period ladder of length {horizon} exhausted at distance {distance:e}")]
    LadderExhausted { distance: f64, horizon: usize },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// Radii `r_p = sqrt(L^{-1} D_p(c_0))`, `p = 1..=horizon`, kept as logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPeriodLadder {
    pub critical_index: usize,
    pub c: f64,
    /// `log r_p` at index `p - 1`.
    pub log_radii: Vec<f64>,
}

impl BoundPeriodLadder {
    pub fn new(critical_index: usize, c: f64, ladder: &DistortionLadder) -> Self {
        let log_l = ladder.l.ln();
        let log_radii = ladder.log_big_d.iter().map(|&ld| 0.5 * (ld - log_l)).collect();
        Self {
            critical_index,
            c,
            log_radii,
        }
    }

    pub fn horizon(&self) -> usize {
        self.log_radii.len()
    }

    pub fn radius(&self, p: usize) -> f64 {
        self.log_radii[p - 1].exp()
    }

    /// Number of radii `r_p >= e^{log_distance}`.
    pub fn period_for_log_distance(&self, log_distance: f64) -> usize {
        self.log_radii.partition_point(|&r| r >= log_distance)
    }
}

/// Unique `p` with `|φ − c| ∈ (r_{p+1}, r_p]`.
///
/// `Ok(None)` when `|φ − c| > r_1`; `LadderExhausted` when `|φ − c| <= r_horizon`.
pub fn assign_bound_period(ladder: &BoundPeriodLadder, phi: f64) -> Result<Option<usize>, ReturnsError> {
    let dist = signed_offset(phi, ladder.c).abs();
    let p = ladder.period_for_log_distance(dist.ln());
    if p == 0 {
        Ok(None)
    } else if p >= ladder.horizon() {
        Err(ReturnsError::LadderExhausted {
            distance: dist,
            horizon: ladder.horizon(),
        })
    } else {
        Ok(Some(p))
    }
}

/// Critical orbits of every `c ∈ C` at one parameter, with their ladders.
#[derive(Debug, Clone)]
pub struct CriticalOrbits {
    pub family: MapFamily,
    pub traces: Vec<OrbitTrace>,
    pub ladders: Vec<DistortionLadder>,
    pub bound: Vec<BoundPeriodLadder>,
    /// Earliest critical hit over all orbits; every trace is truncated to it.
    pub critical_hit: Option<(usize, usize)>,
}

impl CriticalOrbits {
    pub fn compute(model: &Model, a: f64, n: usize, beta: f64) -> Self {
        let family = model.family(a);
        let crit = model.critical();
        let mut traces: Vec<OrbitTrace> = (0..crit.len()).map(|k| critical_orbit(&family, crit, k, n)).collect();
        let mut critical_hit = None;
        for (k, t) in traces.iter().enumerate() {
            if let Some(h) = t.critical_hit {
                if critical_hit.is_none_or(|(hh, _)| h < hh) {
                    critical_hit = Some((h, k));
                }
            }
        }
        if let Some((h, _)) = critical_hit {
            for t in &mut traces {
                truncate_trace(t, h);
            }
        }
        let ladders: Vec<DistortionLadder> = traces
            .iter()
            .map(|t| {
                let mut clean = t.clone();
                clean.critical_hit = None;
                compute_ladder(&clean, beta).expect("finite ladder for a truncated critical orbit")
            })
            .collect();
        let bound = ladders
            .iter()
            .enumerate()
            .map(|(k, l)| BoundPeriodLadder::new(k, crit.points()[k], l))
            .collect();
        Self {
            family,
            traces,
            ladders,
            bound,
            critical_hit,
        }
    }

    pub fn horizon(&self) -> usize {
        self.traces[0].horizon()
    }
}

fn truncate_trace(t: &mut OrbitTrace, h: usize) {
    t.points.truncate(h + 1);
    t.log_deriv.truncate(h + 1);
    t.signs.truncate(h + 1);
    t.dist.truncate(h + 1);
    t.deriv.truncate(h);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnMode {
    Deep,
    Shallow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Deep,
    Shallow,
}

impl ReturnKind {
    pub fn label(&self) -> &'static str {
        match self {
            ReturnKind::Deep => "deep",
            ReturnKind::Shallow => "shallow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEvent {
    pub time: usize,
    /// Index of the nearest critical point `c̃`.
    pub bound_to: usize,
    pub depth: f64,
    /// `floor(−ln depth)`.
    pub depth_index: i64,
    /// `0` when the return lies outside `r_1(c̃)`.
    pub bound_period: usize,
    /// The ladder ran out before the trace did; the orbit stays bound to the horizon.
    pub open_ended: bool,
    pub kind: ReturnKind,
    pub essential: bool,
}

impl ReturnEvent {
    /// First time at which the orbit is free again.
    pub fn release(&self) -> usize {
        self.time + self.bound_period + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Free,
    Bound,
}

/// Half-open time range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mode: ReturnMode,
    pub horizon: usize,
    pub events: Vec<ReturnEvent>,
    /// Partition of `0..=horizon`; each bound segment starts at its return time.
    pub segments: Vec<Segment>,
}

/// Greedy free/bound scan of `trace` over `0..=trace.horizon()`.
///
/// `bound` holds one ladder per critical point at the same parameter.
pub fn decompose(
    trace: &OrbitTrace,
    critical: &CriticalSet,
    bound: &[BoundPeriodLadder],
    profile: &ConstantsProfile,
    mode: ReturnMode,
) -> Result<Decomposition, ReturnsError> {
    let horizon = trace.horizon();
    let radius = match mode {
        ReturnMode::Deep => profile.delta,
        ReturnMode::Shallow => profile.delta0,
    };
    let mut events = Vec::new();
    let mut segments = Vec::new();
    let mut free_from = 0;
    let mut i = 0;
    while i <= horizon {
        let depth = trace.dist[i];
        if depth > radius {
            i += 1;
            continue;
        }
        let (bound_to, _) = critical.nearest(trace.points[i]);
        let ladder = &bound[bound_to];
        let (p, open_ended) = match assign_bound_period(ladder, trace.points[i]) {
            Ok(p) => (p.unwrap_or(0), false),
            Err(ReturnsError::LadderExhausted { distance, horizon: lh }) => {
                if i + lh < horizon {
                    return Err(ReturnsError::LadderExhausted { distance, horizon: lh });
                }
                (lh.max(horizon - i), true)
            }
            Err(e) => return Err(e),
        };
        let event = ReturnEvent {
            time: i,
            bound_to,
            depth,
            depth_index: (-depth.ln()).floor().min(i64::MAX as f64) as i64,
            bound_period: p,
            open_ended,
            kind: if depth <= profile.delta {
                ReturnKind::Deep
            } else {
                ReturnKind::Shallow
            },
            essential: false,
        };
        if i > free_from {
            segments.push(Segment {
                kind: SegmentKind::Free,
                start: free_from,
                end: i,
            });
        }
        let end = event.release().min(horizon + 1);
        segments.push(Segment {
            kind: SegmentKind::Bound,
            start: i,
            end,
        });
        events.push(event);
        free_from = end;
        i = end;
    }
    if free_from <= horizon {
        segments.push(Segment {
            kind: SegmentKind::Free,
            start: free_from,
            end: horizon + 1,
        });
    }
    let mut d = Decomposition {
        mode,
        horizon,
        events,
        segments,
    };
    classify_essential(&mut d);
    Ok(d)
}

/// Marks deep free return `ν` essential iff `Σ_{j∈(i,ν]} 2 ln d_j <= ln d_i` for every earlier one.
pub fn classify_essential(decomposition: &mut Decomposition) {
    let mut prefix = 0.0;
    let mut running_min = f64::INFINITY;
    for ev in decomposition.events.iter_mut() {
        if ev.kind != ReturnKind::Deep {
            ev.essential = false;
            continue;
        }
        let ld = ev.depth.ln();
        prefix += ld;
        let lhs = 2.0 * prefix;
        ev.essential = lhs <= running_min + 1e-12 * running_min.abs().max(1.0);
        let candidate = lhs + ld;
        if candidate < running_min {
            running_min = candidate;
        }
    }
}

/// `Σ −ln d(c_i, C)` over deep free returns `i <= k`.
pub fn return_depth_sum(decomposition: &Decomposition, k: usize) -> f64 {
    decomposition
        .events
        .iter()
        .filter(|e| e.time <= k && e.kind == ReturnKind::Deep)
        .map(|e| -e.depth.ln())
        .sum()
}

/// `Δ̂_n(a*, c)` and its amendment `Δ_n(a*, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterWindow {
    pub center: f64,
    pub critical_index: usize,
    pub n: usize,
    /// `D_n(a*, c_0(a*))`.
    pub half_width: f64,
    /// Unwrapped length of `c_n` over the raw window.
    pub image_length: f64,
    pub amended_half_width: f64,
}

impl ParameterWindow {
    pub fn raw(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn amended(&self) -> (f64, f64) {
        (self.center - self.amended_half_width, self.center + self.amended_half_width)
    }

    pub fn raw_clamped(&self) -> (f64, f64) {
        let (lo, hi) = self.raw();
        (lo.max(0.0), hi.min(1.0))
    }

    pub fn amended_clamped(&self) -> (f64, f64) {
        let (lo, hi) = self.amended();
        (lo.max(0.0), hi.min(1.0))
    }
}

/// Half-width of `Δ_n` given that of `Δ̂_n` and `|c_n(Δ̂_n)|`.
pub fn amend_half_width(half_width: f64, image_length: f64) -> f64 {
    if image_length <= 1.0 / 3.0 {
        half_width
    } else {
        half_width / (9.0 * image_length)
    }
}

/// Unwrapped length of `s ↦ c_n(a + s)` sampled at `samples` equispaced `s ∈ [−r, r]`.
pub fn image_length(family: &MapFamily, trace: &OrbitTrace, n: usize, r: f64, samples: usize) -> Result<f64, OrbitError> {
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    for k in 0..samples {
        let s = -r + 2.0 * r * k as f64 / (samples - 1) as f64;
        let e = shadow(family, trace, s, s, n)?.offsets[n];
        if let Some(p) = prev {
            total += (e - p).abs();
        }
        prev = Some(e);
    }
    Ok(total)
}

pub fn build_window(model: &Model, a: f64, critical_index: usize, n: usize, beta: f64) -> Result<ParameterWindow, OrbitError> {
    let family = model.family(a);
    let trace = critical_orbit(&family, model.critical(), critical_index, n);
    build_window_from(&family, &trace, n, beta)
}

pub fn build_window_from(family: &MapFamily, trace: &OrbitTrace, n: usize, beta: f64) -> Result<ParameterWindow, OrbitError> {
    trace.ensure_horizon(n)?;
    if n == 0 {
        return Ok(ParameterWindow {
            center: family.a(),
            critical_index: trace.critical_index.unwrap_or(0),
            n,
            half_width: 0.0,
            image_length: 0.0,
            amended_half_width: 0.0,
        });
    }
    let ladder = compute_ladder(trace, beta)?;
    let half_width = ladder.big_d(n);
    let image = image_length(family, trace, n, half_width, WINDOW_SAMPLES)?;
    Ok(ParameterWindow {
        center: family.a(),
        critical_index: trace.critical_index.unwrap_or(0),
        n,
        half_width,
        image_length: image,
        amended_half_width: amend_half_width(half_width, image),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{ConstantsProfile, ProfileSpec};
    use crate::map::DriveFunction;

    fn profile(l: f64, sigma: f64, delta0: f64, delta: f64) -> ConstantsProfile {
        ConstantsProfile::from_k0(4.4e1, l, &ProfileSpec::empirical(sigma, delta0, delta)).unwrap()
    }

    fn synthetic_ladder() -> BoundPeriodLadder {
        BoundPeriodLadder {
            critical_index: 0,
            c: 0.25,
            log_radii: vec![0.1f64.ln(), 0.01f64.ln(), 0.001f64.ln(), 1e-4f64.ln()],
        }
    }

    fn event(time: usize, depth: f64) -> ReturnEvent {
        ReturnEvent {
            time,
            bound_to: 0,
            depth,
            depth_index: (-depth.ln()).floor() as i64,
            bound_period: 0,
            open_ended: false,
            kind: ReturnKind::Deep,
            essential: false,
        }
    }

    fn decomposition(depths: &[f64]) -> Decomposition {
        Decomposition {
            mode: ReturnMode::Deep,
            horizon: 100,
            events: depths.iter().enumerate().map(|(k, &d)| event(10 * k, d)).collect(),
            segments: Vec::new(),
        }
    }

    #[test]
    fn bound_period_boundaries() {
        let l = synthetic_ladder();
        assert_eq!(assign_bound_period(&l, 0.25 + 0.01_f64.ln().exp()).unwrap(), Some(2));
        assert_eq!(assign_bound_period(&l, 0.25 - 0.005).unwrap(), Some(2));
        assert_eq!(assign_bound_period(&l, 0.25 + 0.05).unwrap(), Some(1));
        assert_eq!(assign_bound_period(&l, 0.25 + 0.2).unwrap(), None);
        assert!(matches!(
            assign_bound_period(&l, 0.25 + 5e-5),
            Err(ReturnsError::LadderExhausted { horizon: 4, .. })
        ));
        for p in 1..=3 {
            assert_eq!(l.period_for_log_distance(l.log_radii[p - 1]), p);
        }
    }

    #[test]
    fn bound_period_monotone_in_distance() {
        let l = synthetic_ladder();
        let mut last = 0;
        for k in (1..2000).rev() {
            let d = 0.11 * k as f64 / 2000.0;
            if let Ok(p) = assign_bound_period(&l, 0.25 + d) {
                let p = p.unwrap_or(0);
                assert!(p >= last);
                last = p;
            }
        }
    }

    #[test]
    fn essential_examples() {
        let mut d = decomposition(&[0.5]);
        classify_essential(&mut d);
        assert!(d.events[0].essential);

        let mut d = decomposition(&[1e-2, 1e-3]);
        classify_essential(&mut d);
        assert!(d.events[1].essential);

        let mut d = decomposition(&[1e-8, 1e-3]);
        classify_essential(&mut d);
        assert!(!d.events[1].essential);
    }

    #[test]
    fn essential_matches_pairwise_definition() {
        let depths = [1e-3, 0.2, 1e-5, 0.3, 0.4, 1e-9, 0.01, 1e-2, 1e-12];
        let mut d = decomposition(&depths);
        classify_essential(&mut d);
        for nu in 0..depths.len() {
            let mut ok = true;
            for i in 0..nu {
                let s: f64 = (i + 1..=nu).map(|j| 2.0 * depths[j].ln()).sum();
                if s > depths[i].ln() {
                    ok = false;
                }
            }
            assert_eq!(d.events[nu].essential, ok, "nu={nu}");
        }
    }

    #[test]
    fn depth_sum_examples() {
        let d = decomposition(&[]);
        assert_eq!(return_depth_sum(&d, 50), 0.0);
        let d = decomposition(&[1e-4]);
        assert!((return_depth_sum(&d, 0) - 9.2103).abs() < 1e-4);
        let d = decomposition(&[1e-4, 0.3, 1e-2]);
        let mut prev = 0.0;
        for k in 0..40 {
            let s = return_depth_sum(&d, k);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn amendment_rule() {
        assert_eq!(amend_half_width(1e-6, 0.2), 1e-6);
        assert!((amend_half_width(1e-6, 1.0) - 1e-6 / 9.0).abs() < 1e-20);
        assert!(amend_half_width(1e-6, 5.0) <= 1e-6);
    }

    #[test]
    fn never_returning_orbit_has_no_events() {
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let prof = profile(1e3, 0.01, 1e-3, 1e-300);
        let orbits = CriticalOrbits::compute(&model, 0.37, 30, prof.beta);
        let d = decompose(&orbits.traces[0], model.critical(), &orbits.bound, &prof, ReturnMode::Deep).unwrap();
        assert!(d.events.is_empty());
        assert_eq!(d.segments.len(), 1);
        assert_eq!(
            d.segments[0],
            Segment {
                kind: SegmentKind::Free,
                start: 0,
                end: 31
            }
        );
    }

    #[test]
    fn single_entry_gives_single_event() {
        let mut trace = OrbitTrace {
            critical_index: Some(0),
            a: 0.0,
            l: 1e3,
            points: vec![0.5; 11],
            log_deriv: (0..11).map(|i| i as f64 * 5.0).collect(),
            signs: vec![1; 11],
            dist: vec![0.2; 11],
            deriv: vec![5f64.exp(); 10],
            critical_hit: None,
        };
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let c = model.critical().points()[0];
        trace.points[4] = c + 1e-5;
        trace.dist[4] = 1e-5;
        let prof = profile(1e3, 0.01, 1e-3, 1e-4);
        let orbits = CriticalOrbits::compute(&model, 0.37, 10, prof.beta);
        let d = decompose(&trace, model.critical(), &orbits.bound, &prof, ReturnMode::Deep).unwrap();
        assert_eq!(d.events.len(), 1);
        assert_eq!(d.events[0].time, 4);
        assert_eq!(d.events[0].kind, ReturnKind::Deep);
    }

    #[test]
    fn window_full_circle_for_expanding_orbit() {
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let w = build_window(&model, 0.37, 0, 3, 1.75).unwrap();
        assert!(w.half_width > 0.0);
        assert!(w.image_length > 1.0, "image {}", w.image_length);
        assert!(w.amended_half_width < w.half_width);
        let (lo, hi) = w.raw_clamped();
        assert!(lo >= 0.0 && hi <= 1.0);
    }
}

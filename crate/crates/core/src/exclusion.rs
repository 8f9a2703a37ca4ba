//! Nested parameter sets `A^{(n)}`: per-parameter verdicts, Monte Carlo and bisection
//! measure estimates, and sweeps over `L`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{check_mis, check_w, check_x, check_y};
use crate::constants::{build_profile, ConstantsError, ConstantsProfile, EmpiricalOverrides, ProfileKind, ProfileSpec};
use crate::map::{circle_distance, DriveFunction, MapError, Model};
use crate::returns::{decompose, CriticalOrbits, ReturnMode};

pub const MIN_SAMPLES: usize = 1000;
pub const BATCH_SIZE: usize = 1024;
pub const MIN_CELL_WIDTH: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExclusionError {
    #[error("at least {MIN_SAMPLES} samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("min_width must be at least {MIN_CELL_WIDTH:e}, got {0:e}")]
    InvalidMinWidth(f64),
    #[error("L values must be positive and strictly increasing")]
    InvalidLList,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExclusionReason {
    #[serde(rename = "MIS")]
    Mis,
    W,
    X,
    Y,
    CriticalHit,
}

impl ExclusionReason {
    pub fn label(&self) -> &'static str {
        match self {
            ExclusionReason::Mis => "MIS",
            ExclusionReason::W => "W",
            ExclusionReason::X => "X",
            ExclusionReason::Y => "Y",
            ExclusionReason::CriticalHit => "CriticalHit",
        }
    }
}

/// Parameter leaves `A^{(step-1)}` but not `A^{(step)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub step: usize,
    pub reason: ExclusionReason,
    pub critical_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub a: f64,
    pub exclusion: Option<Exclusion>,
    /// First `j` at which (X) fails on any critical orbit, tracked in both modes.
    pub x_failure: Option<usize>,
    pub y_failure: Option<usize>,
}

impl SampleOutcome {
    pub fn alive_at(&self, step: usize) -> bool {
        self.exclusion.is_none_or(|e| e.step > step)
    }
}

/// Runs `(mis)` through step `N` and W afterwards; `strict` also excludes on (X)/(Y).
pub fn evaluate_parameter(model: &Model, profile: &ConstantsProfile, a: f64, n_max: usize, strict: bool) -> SampleOutcome {
    let orbits = CriticalOrbits::compute(model, a, n_max, profile.beta);
    let horizon = orbits.horizon();
    let big_n = profile.special_steps;
    let mut best: Option<Exclusion> = None;
    let mut offer = |e: Exclusion| {
        if e.step <= n_max && best.is_none_or(|b| e < b) {
            best = Some(e);
        }
    };
    let mut x_failure: Option<usize> = None;
    let mut y_failure: Option<usize> = None;
    for (k, trace) in orbits.traces.iter().enumerate() {
        let mis = check_mis(trace, profile, horizon.min(big_n)).expect("horizon within trace");
        if let Some(i) = mis.failure_index() {
            offer(Exclusion {
                step: i,
                reason: ExclusionReason::Mis,
                critical_index: k,
            });
        }
        if n_max > big_n {
            let dec = decompose(trace, model.critical(), &orbits.bound, profile, ReturnMode::Deep)
                .expect("ladder spans the trace");
            let w = check_w(&dec, profile, horizon).expect("horizon within trace");
            if let Some(kk) = w.failure_index() {
                offer(Exclusion {
                    step: (kk + 1).max(big_n + 1),
                    reason: ExclusionReason::W,
                    critical_index: k,
                });
            }
        }
        let x = check_x(trace, profile, horizon).expect("horizon within trace").failure_index();
        let y = check_y(trace, profile, horizon).expect("horizon within trace").failure_index();
        if let Some(j) = x {
            x_failure = Some(x_failure.map_or(j, |v| v.min(j)));
            if strict {
                offer(Exclusion {
                    step: j.max(big_n + 1),
                    reason: ExclusionReason::X,
                    critical_index: k,
                });
            }
        }
        if let Some(j) = y {
            y_failure = Some(y_failure.map_or(j, |v| v.min(j)));
            if strict {
                offer(Exclusion {
                    step: j.max(big_n + 1),
                    reason: ExclusionReason::Y,
                    critical_index: k,
                });
            }
        }
    }
    if let Some((h, k)) = orbits.critical_hit {
        offer(Exclusion {
            step: h,
            reason: ExclusionReason::CriticalHit,
            critical_index: k,
        });
    }
    SampleOutcome {
        a: orbits.family.a(),
        exclusion: best,
        x_failure,
        y_failure,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionMode {
    Mc,
    Bisect,
}

impl ExclusionMode {
    pub fn label(&self) -> &'static str {
        match self {
            ExclusionMode::Mc => "mc",
            ExclusionMode::Bisect => "bisect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub l: f64,
    pub profile: ConstantsProfile,
    pub n_max: usize,
    pub mode: ExclusionMode,
    pub strict: bool,
    /// Estimated `|A^{(n)}|` for `n = 0..=n_max`.
    pub survivor_fraction: Vec<f64>,
    /// Monte Carlo standard error, or half the unresolved length for bisection.
    pub stderr: Vec<f64>,
    pub samples: Option<usize>,
    pub cells: Option<usize>,
    pub seed: u64,
    /// `(1 − L^{−αN/10})(1 − σ^{1/3})^N`, absent when vacuous.
    pub paper_bound: Option<f64>,
}

impl SweepRecord {
    pub fn final_fraction(&self) -> f64 {
        *self.survivor_fraction.last().expect("n_max + 1 entries")
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().expect("n_max + 1 entries")
    }

    pub fn is_nested(&self) -> bool {
        self.survivor_fraction.windows(2).all(|w| w[1] <= w[0])
    }
}

fn draw_batch(seed: u64, batch: usize, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    (0..count).map(|_| rng.random::<f64>()).collect()
}

/// Uniform Monte Carlo over `a ∈ [0, 1)`; outcomes are returned in sample order.
pub fn run_exclusion_mc(
    model: &Model,
    profile: &ConstantsProfile,
    n_max: usize,
    samples: usize,
    seed: u64,
    strict: bool,
) -> Result<(SweepRecord, Vec<SampleOutcome>), ExclusionError> {
    if samples < MIN_SAMPLES {
        return Err(ExclusionError::TooFewSamples(samples));
    }
    let batches = samples.div_ceil(BATCH_SIZE);
    let outcomes: Vec<SampleOutcome> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let count = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            draw_batch(seed, b, count)
                .into_iter()
                .map(|a| evaluate_parameter(model, profile, a, n_max, strict))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut excluded_at = vec![0usize; n_max + 1];
    for o in &outcomes {
        if let Some(e) = o.exclusion {
            excluded_at[e.step] += 1;
        }
    }
    let mut survivor_fraction = Vec::with_capacity(n_max + 1);
    let mut stderr = Vec::with_capacity(n_max + 1);
    let mut gone = 0;
    for count in excluded_at {
        gone += count;
        let f = (samples - gone) as f64 / samples as f64;
        survivor_fraction.push(f);
        stderr.push((f * (1.0 - f) / samples as f64).sqrt());
    }
    let record = SweepRecord {
        l: profile.l,
        profile: profile.clone(),
        n_max,
        mode: ExclusionMode::Mc,
        strict,
        survivor_fraction,
        stderr,
        samples: Some(samples),
        cells: None,
        seed,
        paper_bound: profile.measure_lower_bound(),
    };
    Ok((record, outcomes))
}

/// Interval `[lo, hi)` of parameters classified by its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterCell {
    pub lo: f64,
    pub hi: f64,
    pub depth: u32,
    pub representative: SampleOutcome,
    /// Reached `min_width` while still flagged for refinement.
    pub unresolved: bool,
    pub lo_exclusion: Option<Exclusion>,
    pub hi_exclusion: Option<Exclusion>,
}

impl ParameterCell {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn alive(e: Option<Exclusion>, step: usize) -> bool {
        e.is_none_or(|e| e.step > step)
    }

    /// `(alive length, uncertain length)` at `step`.
    pub fn measure_at(&self, step: usize) -> (f64, f64) {
        let mid = self.representative.alive_at(step);
        if !self.unresolved {
            return (if mid { self.width() } else { 0.0 }, 0.0);
        }
        let lo = Self::alive(self.lo_exclusion, step);
        let hi = Self::alive(self.hi_exclusion, step);
        if lo == mid && hi == mid {
            (if mid { self.width() } else { 0.0 }, 0.0)
        } else {
            (0.5 * self.width(), 0.5 * self.width())
        }
    }
}

struct BisectCtx<'a> {
    model: &'a Model,
    profile: &'a ConstantsProfile,
    n_max: usize,
    min_width: f64,
    strict: bool,
}

impl BisectCtx<'_> {
    fn eval(&self, a: f64) -> SampleOutcome {
        evaluate_parameter(self.model, self.profile, a, self.n_max, self.strict)
    }

    fn separated(&self, lo: f64, hi: f64) -> bool {
        let crit = self.model.critical();
        let f_lo = self.model.family(lo);
        let f_hi = self.model.family(hi);
        crit.points().iter().any(|&c| {
            let mut x = f_lo.eval_map(c);
            let mut y = f_hi.eval_map(c);
            for _ in 0..self.n_max {
                if circle_distance(x, y) > self.profile.delta0 {
                    return true;
                }
                x = f_lo.eval_map(x);
                y = f_hi.eval_map(y);
            }
            circle_distance(x, y) > self.profile.delta0
        })
    }

    fn run(&self, lo: f64, hi: f64, depth: u32, v_lo: SampleOutcome, v_hi: SampleOutcome) -> Vec<ParameterCell> {
        let mid = 0.5 * (lo + hi);
        let rep = self.eval(mid);
        let refine = v_lo.exclusion != v_hi.exclusion || v_lo.exclusion != rep.exclusion || self.separated(lo, hi);
        if !refine || hi - lo <= self.min_width {
            return vec![ParameterCell {
                lo,
                hi,
                depth,
                representative: rep,
                unresolved: refine,
                lo_exclusion: v_lo.exclusion,
                hi_exclusion: v_hi.exclusion,
            }];
        }
        let (mut left, right) = rayon::join(
            || self.run(lo, mid, depth + 1, v_lo, rep),
            || self.run(mid, hi, depth + 1, rep, v_hi),
        );
        left.extend(right);
        left
    }
}

/// Adaptive bisection of `[0, 1)`.
pub fn run_exclusion_bisect(
    model: &Model,
    profile: &ConstantsProfile,
    n_max: usize,
    min_width: f64,
    strict: bool,
) -> Result<(SweepRecord, Vec<ParameterCell>), ExclusionError> {
    if !(min_width >= MIN_CELL_WIDTH) {
        return Err(ExclusionError::InvalidMinWidth(min_width));
    }
    let ctx = BisectCtx {
        model,
        profile,
        n_max,
        min_width,
        strict,
    };
    let v_lo = ctx.eval(0.0);
    let mut v_hi = ctx.eval(1.0);
    v_hi.a = 1.0;
    let cells = ctx.run(0.0, 1.0, 0, v_lo, v_hi);
    let mut survivor_fraction = Vec::with_capacity(n_max + 1);
    let mut stderr = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        let (alive, unc) = cells
            .iter()
            .map(|c| c.measure_at(step))
            .fold((0.0, 0.0), |(a, u), (x, y)| (a + x, u + y));
        survivor_fraction.push(alive);
        stderr.push(unc);
    }
    let record = SweepRecord {
        l: profile.l,
        profile: profile.clone(),
        n_max,
        mode: ExclusionMode::Bisect,
        strict,
        survivor_fraction,
        stderr,
        samples: None,
        cells: Some(cells.len()),
        seed: 0,
        paper_bound: profile.measure_lower_bound(),
    };
    Ok((record, cells))
}

/// How the constants are chosen at each `L` of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ProfileRule {
    Fixed(ProfileSpec),
    /// Empirical thresholds `σ, δ0, δ` scaled by `(L / l_ref)^{−exponent}`.
    ScaledEmpirical {
        beta: f64,
        alpha: Option<f64>,
        special_steps: usize,
        l_ref: f64,
        sigma: f64,
        delta0: f64,
        delta: f64,
        exponent: f64,
    },
}

impl ProfileRule {
    pub fn spec_for(&self, l: f64) -> ProfileSpec {
        match self {
            ProfileRule::Fixed(spec) => *spec,
            ProfileRule::ScaledEmpirical {
                beta,
                alpha,
                special_steps,
                l_ref,
                sigma,
                delta0,
                delta,
                exponent,
            } => {
                let s = (l / l_ref).powf(-exponent);
                ProfileSpec {
                    beta: *beta,
                    alpha: *alpha,
                    special_steps: *special_steps,
                    kind: ProfileKind::Empirical(EmpiricalOverrides {
                        sigma: sigma * s,
                        delta0: delta0 * s,
                        delta: delta * s,
                        lambda: None,
                    }),
                }
            }
        }
    }
}

/// One Monte Carlo record per `L`, all with the same seed.
pub fn sweep_l(
    phi: &DriveFunction,
    l_list: &[f64],
    rule: &ProfileRule,
    n_max: usize,
    samples: usize,
    seed: u64,
    strict: bool,
) -> Result<Vec<SweepRecord>, ExclusionError> {
    if l_list.is_empty() || l_list.iter().any(|&l| !(l > 0.0)) || l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExclusionError::InvalidLList);
    }
    l_list
        .iter()
        .map(|&l| {
            let model = Model::new(phi.clone(), l)?;
            let profile = build_profile(phi, l, &rule.spec_for(l))?;
            Ok(run_exclusion_mc(&model, &profile, n_max, samples, seed, strict)?.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub l: f64,
    pub n: usize,
    pub fraction: f64,
    pub stderr: f64,
    pub paper_bound: Option<f64>,
}

pub fn trend_rows(records: &[SweepRecord]) -> Vec<TrendRow> {
    records
        .iter()
        .map(|r| TrendRow {
            l: r.l,
            n: r.n_max,
            fraction: r.final_fraction(),
            stderr: r.final_stderr(),
            paper_bound: r.paper_bound,
        })
        .collect()
}

/// Each fraction is at least the previous one minus two combined standard errors.
pub fn trend_non_decreasing(rows: &[TrendRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].fraction >= w[0].fraction - 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt())
}

/// Least-squares slope of `ln(1 − fraction)` against `ln L`, when every complement is positive.
pub fn complement_decay_exponent(rows: &[TrendRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| r.fraction >= 1.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.l.ln(), (1.0 - r.fraction).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

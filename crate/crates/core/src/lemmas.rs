//! Randomized verification of the quantitative lemmas, with hypothesis gating and
//! per-clause pass rates.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{check_mis, check_x, check_y, cross_check_brprop, geq};
use crate::constants::ConstantsProfile;
use crate::exclusion::evaluate_parameter;
use crate::map::{signed_offset, wrap, MapFamily, Model};
use crate::orbit::{compute_ladder, critical_orbit, iterate_orbit, shadow, transversality, OrbitError, OrbitTrace, TRANSVERSALITY_TOL};
use crate::returns::{build_window_from, decompose, image_length, CriticalOrbits, ReturnKind, ReturnMode, WINDOW_SAMPLES};

/// Grid points per interval check; doubled once on near-failure.
pub const GRID_POINTS: usize = 21;
/// Relative margin below which a grid check is repeated on the doubled grid.
pub const NEAR_FAILURE: f64 = 0.05;
/// Parameters sampled on each side of the annulus in the expansion check.
pub const ANNULUS_SAMPLES: usize = 8;
/// Smallest `|φ − c|` resolved against the stored critical points.
pub const OFFSET_RESOLUTION: f64 = 1e-13;
/// Windows with `ln D_n` below this are not representable as parameter offsets.
pub const MIN_LOG_WINDOW: f64 = -700.0;

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error("trial {trial}: {source}")]
    Oracle { trial: usize, source: OrbitError },
    #[error("invalid lemma parameters: {0}")]
    InvalidParams(String),
    #[error("unknown lemma '{0}'")]
    UnknownLemma(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaId {
    Dist,
    Trans,
    Samp,
    Wrap,
    Bound,
    Outside,
    Expansion,
    Brprop,
}

impl LemmaId {
    pub const ALL: [LemmaId; 8] = [
        LemmaId::Dist,
        LemmaId::Trans,
        LemmaId::Samp,
        LemmaId::Wrap,
        LemmaId::Bound,
        LemmaId::Outside,
        LemmaId::Expansion,
        LemmaId::Brprop,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            LemmaId::Dist => "dist",
            LemmaId::Trans => "trans",
            LemmaId::Samp => "samp",
            LemmaId::Wrap => "wrap",
            LemmaId::Bound => "bound",
            LemmaId::Outside => "outside",
            LemmaId::Expansion => "expansion",
            LemmaId::Brprop => "brprop",
        }
    }

    /// Orbit horizon used when none is given.
    pub fn default_n_max(&self, special_steps: usize) -> usize {
        match self {
            LemmaId::Dist | LemmaId::Samp => 20,
            LemmaId::Trans => 50,
            LemmaId::Wrap => special_steps,
            LemmaId::Bound | LemmaId::Outside | LemmaId::Expansion | LemmaId::Brprop => (special_steps + 1).max(60),
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LemmaId {
    type Err = LemmaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LemmaId::ALL
            .into_iter()
            .find(|l| l.label() == s)
            .ok_or_else(|| LemmaError::UnknownLemma(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    pub trials: usize,
    pub n_max: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// One inequality `lhs (<=|>=) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    /// Reported but not part of the trial verdict.
    pub report_only: bool,
}

impl Clause {
    pub fn ge(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            rhs,
            relation: Relation::Ge,
            report_only: false,
        }
    }

    pub fn le(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            rhs,
            relation: Relation::Le,
            report_only: false,
        }
    }

    fn report_only(mut self) -> Self {
        self.report_only = true;
        self
    }

    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Ge => geq(self.lhs, self.rhs),
            Relation::Le => geq(self.rhs, self.lhs),
        }
    }

    /// Signed slack, positive when the clause holds, scaled by `max(1, |rhs|)`.
    pub fn margin(&self) -> f64 {
        let raw = match self.relation {
            Relation::Ge => self.lhs - self.rhs,
            Relation::Le => self.rhs - self.lhs,
        };
        let m = raw / self.rhs.abs().max(1.0);
        if m.is_nan() {
            f64::NEG_INFINITY
        } else {
            m
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialInputs {
    pub trial: usize,
    pub a: f64,
    pub theta: Option<f64>,
    pub n: usize,
    pub critical_index: Option<usize>,
    /// `φ − c` for bound-period trials.
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub inputs: TrialInputs,
    pub hypothesis_met: bool,
    pub clauses: Vec<Clause>,
    /// Finite-L statements checked on every trial regardless of hypotheses.
    pub hard: Vec<Clause>,
}

impl TrialOutcome {
    fn skipped(inputs: TrialInputs) -> Self {
        Self {
            inputs,
            hypothesis_met: false,
            clauses: Vec::new(),
            hard: Vec::new(),
        }
    }

    fn met(inputs: TrialInputs, clauses: Vec<Clause>) -> Self {
        Self {
            inputs,
            hypothesis_met: true,
            clauses,
            hard: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.hypothesis_met && self.clauses.iter().filter(|c| !c.report_only).all(Clause::holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseStat {
    pub clause: String,
    pub checked: usize,
    pub passed: usize,
    pub report_only: bool,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstMargin {
    pub inputs: TrialInputs,
    pub clause: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub inputs: TrialInputs,
    pub clause: String,
    pub lhs: f64,
    pub rhs: f64,
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    pub l: f64,
    pub n_max: usize,
    pub trials: usize,
    pub hypothesis_met: usize,
    pub pass_count: usize,
    pub worst_margin: Option<WorstMargin>,
    pub clauses: Vec<ClauseStat>,
    pub hard_checks: usize,
    pub hard_failures: usize,
    pub violations: Vec<Violation>,
    pub profile: ConstantsProfile,
    pub seed: u64,
}

impl LemmaReport {
    pub fn pass_rate(&self) -> Option<f64> {
        (self.hypothesis_met > 0).then(|| self.pass_count as f64 / self.hypothesis_met as f64)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseStat> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

fn aggregate(lemma: LemmaId, model: &Model, profile: &ConstantsProfile, params: &LemmaParams, outcomes: Vec<TrialOutcome>) -> LemmaReport {
    let mut report = LemmaReport {
        lemma_id: lemma,
        l: model.l(),
        n_max: params.n_max,
        trials: outcomes.len(),
        hypothesis_met: 0,
        pass_count: 0,
        worst_margin: None,
        clauses: Vec::new(),
        hard_checks: 0,
        hard_failures: 0,
        violations: Vec::new(),
        profile: profile.clone(),
        seed: params.seed,
    };
    for o in outcomes {
        for h in &o.hard {
            report.hard_checks += 1;
            if !h.holds() {
                report.hard_failures += 1;
                report.violations.push(Violation {
                    inputs: o.inputs,
                    clause: h.name.to_string(),
                    lhs: h.lhs,
                    rhs: h.rhs,
                    hard: true,
                });
            }
        }
        if !o.hypothesis_met {
            continue;
        }
        report.hypothesis_met += 1;
        if o.passed() {
            report.pass_count += 1;
        }
        for c in &o.clauses {
            let m = c.margin();
            let stat = match report.clauses.iter_mut().position(|s| s.clause == c.name) {
                Some(i) => &mut report.clauses[i],
                None => {
                    report.clauses.push(ClauseStat {
                        clause: c.name.to_string(),
                        checked: 0,
                        passed: 0,
                        report_only: c.report_only,
                        worst_margin: f64::INFINITY,
                    });
                    report.clauses.last_mut().unwrap()
                }
            };
            stat.checked += 1;
            stat.worst_margin = stat.worst_margin.min(m);
            if c.holds() {
                stat.passed += 1;
            } else if !c.report_only {
                report.violations.push(Violation {
                    inputs: o.inputs,
                    clause: c.name.to_string(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    hard: false,
                });
            }
            if !c.report_only && report.worst_margin.as_ref().is_none_or(|w| m < w.margin) {
                report.worst_margin = Some(WorstMargin {
                    inputs: o.inputs,
                    clause: c.name.to_string(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    margin: m,
                });
            }
        }
    }
    report
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Spread `max − min` of `values(points)` over a symmetric grid of half-width `r`,
/// repeated on the doubled grid when within [`NEAR_FAILURE`] of `bound`.
fn grid_spread(r: f64, bound: f64, values: impl Fn(f64) -> Result<f64, OrbitError>) -> Result<f64, OrbitError> {
    let spread = |points: usize| -> Result<f64, OrbitError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..points {
            let e = -r + 2.0 * r * k as f64 / (points - 1) as f64;
            let v = values(e)?;
            if v.is_nan() {
                return Ok(f64::INFINITY);
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(hi - lo)
    };
    let s = spread(GRID_POINTS)?;
    if bound - s < NEAR_FAILURE * bound.abs() {
        return spread(2 * GRID_POINTS - 1);
    }
    Ok(s)
}

/// Lower estimate `−ln|c − φ| / ln L` for the bound period.
pub fn bound_period_lower(distance: f64, l: f64) -> f64 {
    -distance.ln() / l.ln()
}

/// Upper estimate `−2 ln|c − φ| / (λ ln L)` for the bound period.
pub fn bound_period_upper(distance: f64, l: f64, lambda: f64) -> f64 {
    -2.0 * distance.ln() / (lambda * l.ln())
}

/// `ln(L^{1−3λ} δ L^{3λn})`.
pub fn outside_bound_a(l: f64, lambda: f64, delta: f64, n: usize) -> f64 {
    (1.0 - 3.0 * lambda) * l.ln() + delta.ln() + 3.0 * lambda * n as f64 * l.ln()
}

/// `ln(L^{3λn})`.
pub fn outside_bound_b(l: f64, lambda: f64, n: usize) -> f64 {
    3.0 * lambda * n as f64 * l.ln()
}

/// `(ln(|(f^n)'θ| D_n), ln(K0² L^{2−β}))` for `n = 1..=horizon`.
pub fn distortion_product(trace: &OrbitTrace, beta: f64, k0: f64) -> Result<Vec<(f64, f64)>, OrbitError> {
    let ladder = compute_ladder(trace, beta)?;
    let rhs = 2.0 * k0.ln() + (2.0 - beta) * trace.l.ln();
    Ok((1..=trace.horizon()).map(|n| (trace.log_deriv[n] + ladder.log_big_d(n), rhs)).collect())
}

/// Exponential-growth clauses along one segment starting at `θ = x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutsideSegment {
    /// Clause (a) for every prefix length `n` with `x_0..x_{n−1} ∉ C_δ`.
    pub prefix: Vec<Clause>,
    /// Clause (b) at the first entry into `C_δ`.
    pub entry: Option<Clause>,
}

/// `log_deriv` and `dist` are the trace arrays from the segment start onward.
pub fn check_outside_segment(log_deriv: &[f64], dist: &[f64], l: f64, lambda: f64, delta: f64) -> OutsideSegment {
    let mut prefix = Vec::new();
    let mut entry = None;
    let base = log_deriv[0];
    for n in 1..log_deriv.len() {
        if dist[n - 1] <= delta {
            break;
        }
        let lhs = log_deriv[n] - base;
        prefix.push(Clause::ge("a", lhs, outside_bound_a(l, lambda, delta, n)));
        if dist[n] <= delta {
            entry = Some(Clause::ge("b", lhs, outside_bound_b(l, lambda, n)));
            break;
        }
    }
    OutsideSegment { prefix, entry }
}

pub fn verify(lemma: LemmaId, model: &Model, profile: &ConstantsProfile, params: &LemmaParams) -> Result<LemmaReport, LemmaError> {
    if params.trials == 0 {
        return Err(LemmaError::InvalidParams("trials must be positive".into()));
    }
    let min_n = match lemma {
        LemmaId::Trans => 0,
        LemmaId::Bound | LemmaId::Outside | LemmaId::Expansion | LemmaId::Brprop => profile.special_steps + 1,
        _ => 1,
    };
    if params.n_max < min_n {
        return Err(LemmaError::InvalidParams(format!("{lemma} needs n_max >= {min_n}")));
    }
    let outcomes: Vec<TrialOutcome> = (0..params.trials)
        .into_par_iter()
        .map(|t| {
            let rng = trial_rng(params.seed, t);
            match lemma {
                LemmaId::Dist => dist_trial(model, profile, params.n_max, t, rng),
                LemmaId::Trans => trans_trial(model, profile, params.n_max, t, rng),
                LemmaId::Samp => samp_trial(model, profile, params.n_max, t, rng),
                LemmaId::Wrap => wrap_trial(model, profile, params.n_max, t, rng),
                LemmaId::Bound => bound_trial(model, profile, params.n_max, t, rng),
                LemmaId::Outside => outside_trial(model, profile, params.n_max, t, rng),
                LemmaId::Expansion => expansion_trial(model, profile, params.n_max, t, rng),
                LemmaId::Brprop => brprop_trial(model, profile, params.n_max, t, rng),
            }
            .map_err(|source| LemmaError::Oracle { trial: t, source })
        })
        .collect::<Result<_, _>>()?;
    Ok(aggregate(lemma, model, profile, params, outcomes))
}

type TrialResult = Result<TrialOutcome, OrbitError>;

fn dist_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let theta: f64 = rng.random();
    let n = rng.random_range(1..=n_max);
    let inputs = TrialInputs {
        trial,
        a,
        theta: Some(theta),
        n,
        critical_index: None,
        offset: None,
    };
    let family = model.family(a);
    let trace = iterate_orbit(&family, model.critical(), theta, n);
    if trace.critical_hit.is_some() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let d_n = compute_ladder(&trace, profile.beta)?.big_d(n);
    let log_k = profile.k.ln();
    let spread = grid_spread(d_n, log_k, |e| Ok(shadow(&family, &trace, e, 0.0, n)?.log_ratio[n]))?;
    Ok(TrialOutcome::met(inputs, vec![Clause::le("ratio<=K", spread, log_k)]))
}

fn trans_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let c = rng.random_range(0..model.critical().len());
    let n = rng.random_range(0..=n_max);
    let inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n,
        critical_index: Some(c),
        offset: None,
    };
    let trace = critical_orbit(&model.family(a), model.critical(), c, n);
    if trace.critical_hit.is_some() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let t = transversality(&trace, n)?;
    if (t.recursion - t.closed_form).abs() > TRANSVERSALITY_TOL * t.scale {
        return Err(OrbitError::OracleMismatch {
            recursion: t.recursion,
            closed_form: t.closed_form,
        });
    }
    let identity = Clause::le("identity", (t.recursion - t.closed_form).abs(), TRANSVERSALITY_TOL * t.scale);
    let met = check_y(&trace, profile, n)?.holds;
    let band = (-profile.lambda / 2.0 * profile.log_l()).exp();
    let r = t.recursion.abs();
    let mut out = if met {
        TrialOutcome::met(inputs, vec![Clause::ge("lower", r, 1.0 - band), Clause::le("upper", r, 1.0 + band)])
    } else {
        TrialOutcome::skipped(inputs)
    };
    out.hard.push(identity);
    Ok(out)
}

fn samp_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let c = rng.random_range(0..model.critical().len());
    let n = rng.random_range(1..=n_max);
    let inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n,
        critical_index: Some(c),
        offset: None,
    };
    let family = model.family(a);
    let trace = critical_orbit(&family, model.critical(), c, n);
    if trace.critical_hit.is_some() || !check_x(&trace, profile, n)?.holds || !check_y(&trace, profile, n)?.holds {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let d_n = compute_ladder(&trace, profile.beta)?.big_d(n);
    let log_kp = profile.k_prime.ln();
    let spread = grid_spread(d_n, log_kp, |s| Ok(shadow(&family, &trace, s, s, n)?.param_deriv_ratio[n].abs().ln()))?;
    Ok(TrialOutcome::met(inputs, vec![Clause::le("ratio<=K'", spread, log_kp)]))
}

fn wrap_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let c = rng.random_range(0..model.critical().len());
    let n = rng.random_range(1..=n_max.min(profile.special_steps).max(1));
    let inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n,
        critical_index: Some(c),
        offset: None,
    };
    let family = model.family(a);
    let trace = critical_orbit(&family, model.critical(), c, n);
    if trace.critical_hit.is_some() || trace.dist[..n].iter().any(|&d| d <= profile.sigma) {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let d_n = compute_ladder(&trace, profile.beta)?.big_d(n);
    let len = image_length(&family, &trace, n, d_n, WINDOW_SAMPLES)?;
    Ok(TrialOutcome::met(inputs, vec![Clause::ge("image>=1", len, 1.0)]))
}

/// `ln|(f^{p+1})'φ|` for `φ = c + r`, through the critical orbit `trace` of `c`.
pub fn bound_growth(family: &MapFamily, trace: &OrbitTrace, c: f64, r: f64, p: usize) -> Result<f64, OrbitError> {
    let phi = family.phi();
    let l = family.l();
    let fp = family.eval_deriv(c) + l * phi.delta_deriv1(c, r);
    let e0 = r + l * phi.delta(c, r);
    let sh = shadow(family, trace, e0, 0.0, p)?;
    Ok(fp.abs().ln() + trace.log_deriv[p] + sh.log_ratio[p])
}

/// Clauses (a), (b), (c) for a point at distance `depth` with bound period `p`.
pub fn bound_clauses(profile: &ConstantsProfile, growth: f64, p: usize, depth: f64) -> Vec<Clause> {
    let log_l = profile.log_l();
    let (alpha, lambda, beta) = (profile.alpha, profile.lambda, profile.beta);
    let ld = depth.ln();
    let pf = p as f64;
    let mut clauses = vec![
        Clause::ge("a-lower", pf, bound_period_lower(depth, profile.l)),
        Clause::le("a-upper", pf, bound_period_upper(depth, profile.l, lambda)),
        Clause::ge("b-distance", growth, (-1.0 + 7.0 * alpha / lambda) * ld),
        Clause::ge("b-growth", growth, lambda * (pf + 1.0) * log_l / 3.0),
        Clause::ge("b-proof-6alpha", growth, (2.0 - beta) * log_l + (-1.0 + 6.0 * alpha / lambda) * ld).report_only(),
    ];
    if p <= profile.special_steps {
        clauses.push(Clause::ge("c", growth, profile.lambda0 * (pf + 1.0) * log_l / 3.0));
    }
    clauses
}

fn bound_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let mut inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n: n_max,
        critical_index: None,
        offset: None,
    };
    let orbits = CriticalOrbits::compute(model, a, n_max, profile.beta);
    if orbits.critical_hit.is_some() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let mut xy_ok = Vec::with_capacity(orbits.traces.len());
    for t in &orbits.traces {
        xy_ok.push(check_x(t, profile, n_max)?.holds && check_y(t, profile, n_max)?.holds);
    }
    let resolvable = |c: usize, p: usize| orbits.bound[c].log_radii[p] >= OFFSET_RESOLUTION.ln();
    // first detected free return into C_δ0 with a usable ladder interval
    let mut chosen: Option<(usize, usize, f64, usize)> = None;
    for t in &orbits.traces {
        let Ok(dec) = decompose(t, model.critical(), &orbits.bound, profile, ReturnMode::Shallow) else {
            continue;
        };
        let hit = dec.events.iter().find(|e| {
            e.bound_period >= 1 && !e.open_ended && e.bound_period < n_max && xy_ok[e.bound_to] && resolvable(e.bound_to, e.bound_period)
        });
        if let Some(e) = hit {
            if chosen.is_none_or(|c| e.time < c.0) {
                let r = signed_offset(t.points[e.time], model.critical().points()[e.bound_to]);
                chosen = Some((e.time, e.bound_to, r, e.bound_period));
            }
        }
    }
    // otherwise a point drawn inside a ladder interval I_{±p}(c)
    if chosen.is_none() {
        let candidates: Vec<usize> = (0..xy_ok.len()).filter(|&c| xy_ok[c] && resolvable(c, 1)).collect();
        if candidates.is_empty() {
            return Ok(TrialOutcome::skipped(inputs));
        }
        let c = candidates[rng.random_range(0..candidates.len())];
        let p_top = (1..n_max).take_while(|&p| resolvable(c, p)).last().unwrap_or(1);
        let p = rng.random_range(1..=p_top);
        let (hi, lo) = (orbits.bound[c].log_radii[p - 1], orbits.bound[c].log_radii[p]);
        let u: f64 = 1.0 - rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        chosen = Some((0, c, sign * (lo + u * (hi - lo)).exp(), p));
    }
    let (_, c, r, p) = chosen.expect("chosen above");
    let cp = model.critical().points()[c];
    inputs.theta = Some(wrap(cp + r));
    inputs.critical_index = Some(c);
    inputs.offset = Some(r);
    inputs.n = p;
    let growth = bound_growth(&orbits.family, &orbits.traces[c], cp, r, p)?;
    Ok(TrialOutcome::met(inputs, bound_clauses(profile, growth, p, r.abs())))
}

fn in_a_n(orbits: &CriticalOrbits, profile: &ConstantsProfile, n: usize) -> Result<bool, OrbitError> {
    for t in &orbits.traces {
        if !check_mis(t, profile, n.min(t.horizon()))?.holds {
            return Ok(false);
        }
    }
    Ok(true)
}

fn outside_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let c = rng.random_range(0..model.critical().len());
    let s = rng.random_range(0..n_max);
    let inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n: s,
        critical_index: Some(c),
        offset: None,
    };
    let orbits = CriticalOrbits::compute(model, a, n_max, profile.beta);
    if orbits.critical_hit.is_some() || !in_a_n(&orbits, profile, profile.special_steps)? {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let t = &orbits.traces[c];
    let seg = check_outside_segment(&t.log_deriv[s..], &t.dist[s..], profile.l, profile.lambda, profile.delta);
    if seg.prefix.is_empty() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let worst = *seg
        .prefix
        .iter()
        .min_by(|x, y| x.margin().total_cmp(&y.margin()))
        .expect("non-empty prefix");
    let mut clauses = vec![worst];
    clauses.extend(seg.entry);
    let mut out = TrialOutcome::met(inputs, clauses);
    out.inputs.theta = Some(t.points[s]);
    Ok(out)
}

fn expansion_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let mut inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n: n_max,
        critical_index: None,
        offset: None,
    };
    let orbits = CriticalOrbits::compute(model, a, n_max, profile.beta);
    if orbits.critical_hit.is_some() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let mut chosen: Option<(usize, usize, f64)> = None;
    for (k, t) in orbits.traces.iter().enumerate() {
        let Ok(dec) = decompose(t, model.critical(), &orbits.bound, profile, ReturnMode::Deep) else {
            continue;
        };
        if let Some(e) = dec.events.iter().find(|e| e.kind == ReturnKind::Deep && e.essential && e.time >= 1) {
            if chosen.is_none_or(|c| e.time < c.0) {
                chosen = Some((e.time, k, e.depth));
            }
        }
    }
    let Some((nu, k, depth)) = chosen else {
        return Ok(TrialOutcome::skipped(inputs));
    };
    inputs.n = nu;
    inputs.critical_index = Some(k);
    let trace = &orbits.traces[k];
    let ladder = &orbits.ladders[k];
    let lhs = ladder.log_big_d(nu) + trace.log_deriv[nu];
    let product = Clause::le("distortion-product", lhs, 2.0 * profile.k0.ln() + (2.0 - profile.beta) * profile.log_l());
    if evaluate_parameter(model, profile, a, nu - 1, false).exclusion.is_some() {
        let mut out = TrialOutcome::skipped(inputs);
        out.hard.push(product);
        return Ok(out);
    }
    let first = Clause::ge("derivative", lhs, 0.5 * depth.ln());
    let window = build_window_from(&orbits.family, trace, nu, profile.beta)?;
    let h = window.amended_half_width;
    if !(h.ln() > MIN_LOG_WINDOW) {
        let mut out = TrialOutcome::skipped(inputs);
        out.hard.push(product);
        return Ok(out);
    }
    let inner = depth.powf(0.2) * h;
    let mut closest = f64::INFINITY;
    for side in [-1.0, 1.0] {
        for j in 0..ANNULUS_SAMPLES {
            let r = inner + (h - inner) * j as f64 / (ANNULUS_SAMPLES - 1) as f64;
            let e = shadow(&orbits.family, trace, side * r, side * r, nu)?.offsets[nu];
            closest = closest.min((e - e.round()).abs());
        }
    }
    let second = Clause::ge("separation", closest.ln(), 0.25 * depth.ln());
    let mut out = TrialOutcome::met(inputs, vec![first, second]);
    out.hard.push(product);
    Ok(out)
}

fn brprop_trial(model: &Model, profile: &ConstantsProfile, n_max: usize, trial: usize, mut rng: ChaCha8Rng) -> TrialResult {
    let a: f64 = rng.random();
    let c = rng.random_range(0..model.critical().len());
    let n = rng.random_range(profile.special_steps..n_max);
    let inputs = TrialInputs {
        trial,
        a,
        theta: None,
        n,
        critical_index: Some(c),
        offset: None,
    };
    let orbits = CriticalOrbits::compute(model, a, n_max, profile.beta);
    if orbits.critical_hit.is_some() {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let t = &orbits.traces[c];
    let Ok(dec) = decompose(t, model.critical(), &orbits.bound, profile, ReturnMode::Deep) else {
        return Ok(TrialOutcome::skipped(inputs));
    };
    let r = cross_check_brprop(t, &dec, profile, n)?;
    if !r.applicable {
        return Ok(TrialOutcome::skipped(inputs));
    }
    let as_num = |b: Option<bool>| if b == Some(true) { 1.0 } else { 0.0 };
    let mut clauses = vec![Clause::ge("X_{n+1}", as_num(r.x_next), 1.0), Clause::ge("Y_{n+1}", as_num(r.y_next), 1.0)];
    if r.before_first_deep_return {
        clauses.push(Clause::ge("Y_{n+1}-no-deep-return", as_num(r.y_next), 1.0).report_only());
    }
    Ok(TrialOutcome::met(inputs, clauses))
}

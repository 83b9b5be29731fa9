//! Adaptive Dormand–Prince 5(4) integration with dense output and event location.
//!
//! The solver works on `&[f64]` state slices so that every model in this crate
//! (planar slow flows, three-dimensional fast-slow systems, normal forms) can
//! share it. Steps are controlled with the PI controller of Hairer & Wanner,
//! and each accepted step stores its quartic continuous extension so that
//! section crossings can be located to `EVENT_TIME_TOL` without re-stepping.

use thiserror::Error;

/// Time tolerance used when refining an event on the dense interpolant.
pub const EVENT_TIME_TOL: f64 = 1e-12;

/// Default absolute and relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step size underflow at t = {t} (h = {h:e}); the problem is stiff or singular here")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("section not reached before t = {t_end}")]
    SectionNotReached { t_end: f64, last_state: Vec<f64> },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// Step-size and tolerance settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on |h|.
    pub max_step: f64,
    pub max_steps: usize,
    /// Optional first step; estimated from the field when `None`.
    pub initial_step: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_TOL,
            rel_tol: DEFAULT_TOL,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
            initial_step: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self.rel_tol = tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

/// An initial value problem `y' = rhs(t, y)`, `y(t0) = y0`.
pub struct OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub rhs: F,
    pub t0: f64,
    pub y0: Vec<f64>,
    pub options: SolverOptions,
}

impl<F> OdeProblem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(rhs: F, t0: f64, y0: Vec<f64>) -> Self {
        Self {
            rhs,
            t0,
            y0,
            options: SolverOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn dimension(&self) -> usize {
        self.y0.len()
    }

    fn validate(&self) -> Result<(), IntegratorError> {
        let o = &self.options;
        if self.y0.is_empty() {
            return Err(IntegratorError::InvalidProblem("dimension must be at least 1".into()));
        }
        if !(o.abs_tol > 0.0 && o.rel_tol > 0.0) {
            return Err(IntegratorError::InvalidProblem("tolerances must be positive".into()));
        }
        if !(o.max_step > 0.0) {
            return Err(IntegratorError::InvalidProblem("max_step must be positive".into()));
        }
        if self.y0.iter().any(|v| !v.is_finite()) || !self.t0.is_finite() {
            return Err(IntegratorError::InvalidProblem("initial data must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Event function goes from negative to non-negative.
    Rising,
    /// Event function goes from positive to non-positive.
    Falling,
    Any,
}

impl Direction {
    fn triggers(self, g_start: f64, g_end: f64) -> bool {
        let rising = g_start < 0.0 && g_end >= 0.0;
        let falling = g_start > 0.0 && g_end <= 0.0;
        match self {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Any => rising || falling,
        }
    }
}

/// A scalar function of the state whose zeros are reported (and optionally stop the run).
pub struct EventSpec<'a> {
    pub func: Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl<'a> EventSpec<'a> {
    pub fn new(func: impl Fn(&[f64]) -> f64 + Send + Sync + 'a, direction: Direction, terminal: bool) -> Self {
        Self {
            func: Box::new(func),
            direction,
            terminal,
        }
    }

    /// Terminal crossing of the hyperplane `y[component] = value`.
    pub fn section(component: usize, value: f64, direction: Direction) -> EventSpec<'static> {
        EventSpec::new(move |y: &[f64]| y[component] - value, direction, true)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.func)(y)
    }
}

/// A located zero of one of the supplied event functions.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    /// Index into the event list passed to the solver.
    pub event: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t_start: f64,
    pub h: f64,
    /// Dormand–Prince contd5 coefficients, five vectors of the state dimension.
    pub coeffs: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t_start) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Accepted steps of an integration run. Times are strictly monotone in the
/// direction of integration (increasing for forward runs).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dense_segments: Vec<DenseSegment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }

    /// Dense-output evaluation; `None` outside the covered time span.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let (first, last) = (self.times[0], self.last_time());
        let (lo, hi) = if first <= last { (first, last) } else { (last, first) };
        if t < lo || t > hi {
            return None;
        }
        if self.dense_segments.is_empty() {
            return Some(self.states[0].clone());
        }
        let forward = last >= first;
        // segments are ordered along the integration direction
        let idx = self.dense_segments.partition_point(|seg| {
            if forward {
                seg.t_end() < t
            } else {
                seg.t_end() > t
            }
        });
        let seg = &self.dense_segments[idx.min(self.dense_segments.len() - 1)];
        Some(seg.eval(t))
    }
}

/// Outcome of `solve_adaptive`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub events: Vec<EventHit>,
    /// Set when a terminal event stopped the run before `t_end`.
    pub terminated_by: Option<usize>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub rhs_evals: usize,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants (Hairer–Wanner DOPRI5 defaults).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn scaled_norm(err: &[f64], y0: &[f64], y1: &[f64], atol: f64, rtol: f64) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = atol + rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(rhs: &F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, opts: &SolverOptions, span: f64) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sk: Vec<f64> = y0.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let dnf = rms(f0);
    let dny = rms(y0);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(opts.max_step).min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + dir * h, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = rms(&diff) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(opts.max_step).min(span)
}

/// Integrate from `problem.t0` to `t_end`, locating every event crossing on the
/// dense interpolant. A terminal event ends the run at the crossing.
pub fn solve_adaptive<F>(problem: &OdeProblem<F>, t_end: f64, events: &[EventSpec<'_>]) -> Result<Solution, IntegratorError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    problem.validate()?;
    if !t_end.is_finite() || t_end == problem.t0 {
        return Err(IntegratorError::InvalidProblem("t_end must be finite and differ from t0".into()));
    }
    let opts = problem.options;
    let rhs = &problem.rhs;
    let n = problem.dimension();
    let dir = (t_end - problem.t0).signum();
    let span = (t_end - problem.t0).abs();
    let h_min = 1e-14 * span.max(problem.t0.abs());

    let mut stats = SolverStats::default();
    let mut t = problem.t0;
    let mut y = problem.y0.clone();
    let mut traj = Trajectory {
        times: vec![t],
        states: vec![y.clone()],
        dense_segments: Vec::new(),
    };
    let mut hits = Vec::new();

    // Degenerate start: only an "any"-direction event that is exactly satisfied fires.
    let mut g_prev: Vec<f64> = events.iter().map(|e| e.eval(&y)).collect();
    for (i, ev) in events.iter().enumerate() {
        if g_prev[i] == 0.0 && ev.direction == Direction::Any {
            hits.push(EventHit { event: i, t, y: y.clone() });
            if ev.terminal {
                return Ok(Solution {
                    trajectory: traj,
                    events: hits,
                    terminated_by: Some(i),
                    stats,
                });
            }
        }
    }

    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    stats.rhs_evals += 1;
    let mut h = match opts.initial_step {
        Some(h0) => h0.abs().min(opts.max_step).min(span),
        None => {
            stats.rhs_evals += 1;
            initial_step(rhs, t, &y, &k1, dir, &opts, span)
        }
    };

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err_vec = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let expo1 = 0.2 - BETA * 0.75;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(IntegratorError::MaxStepsExceeded { t, max_steps: opts.max_steps });
        }
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < h_min {
            return Err(IntegratorError::StepSizeUnderflow { t, h });
        }
        let hs = dir * h;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(t + C2 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * hs, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * hs, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + hs, &ytmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + hs, &y_new, &mut k7);
        stats.rhs_evals += 6;

        if y_new.iter().chain(k7.iter()).any(|v| !v.is_finite()) {
            // Retry with a smaller step before declaring the state non-finite.
            stats.rejected += 1;
            h *= FAC_MIN;
            last_rejected = true;
            if h < h_min {
                return Err(IntegratorError::NonFiniteState { t });
            }
            continue;
        }

        for i in 0..n {
            err_vec[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = scaled_norm(&err_vec, &y, &y_new, opts.abs_tol, opts.rel_tol);
        let fac11 = err.powf(expo1);

        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_next = (h / fac).min(opts.max_step);
            if last_rejected {
                h_next = h_next.min(h);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;
            stats.accepted += 1;

            let t_new = if last { t_end } else { t + hs };
            let seg = DenseSegment {
                t_start: t,
                h: t_new - t,
                coeffs: {
                    let r1 = y.clone();
                    let r2: Vec<f64> = (0..n).map(|i| y_new[i] - y[i]).collect();
                    let r3: Vec<f64> = (0..n).map(|i| hs * k1[i] - r2[i]).collect();
                    let r4: Vec<f64> = (0..n).map(|i| r2[i] - hs * k7[i] - r3[i]).collect();
                    let r5: Vec<f64> = (0..n)
                        .map(|i| hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                        .collect();
                    [r1, r2, r3, r4, r5]
                },
            };

            // Event detection over the accepted step; earliest terminal crossing wins.
            let g_new: Vec<f64> = events.iter().map(|e| e.eval(&y_new)).collect();
            let mut step_hits: Vec<EventHit> = Vec::new();
            for (i, ev) in events.iter().enumerate() {
                if ev.direction.triggers(g_prev[i], g_new[i]) {
                    let (te, ye) = locate_event(ev, &seg, g_prev[i], g_new[i]);
                    step_hits.push(EventHit { event: i, t: te, y: ye });
                }
            }
            step_hits.sort_by(|a, b| (dir * a.t).total_cmp(&(dir * b.t)));
            let terminal = step_hits.iter().position(|hit| events[hit.event].terminal);
            if let Some(pos) = terminal {
                step_hits.truncate(pos + 1);
                let hit = step_hits[pos].clone();
                hits.extend(step_hits);
                if hit.t != seg.t_start {
                    let seg = truncate_segment(&seg, hit.t);
                    traj.times.push(hit.t);
                    traj.states.push(hit.y.clone());
                    traj.dense_segments.push(seg);
                }
                return Ok(Solution {
                    trajectory: traj,
                    events: hits,
                    terminated_by: Some(hit.event),
                    stats,
                });
            }
            hits.extend(step_hits);

            traj.times.push(t_new);
            traj.states.push(y_new.clone());
            traj.dense_segments.push(seg);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            g_prev = g_new;
            if last {
                return Ok(Solution {
                    trajectory: traj,
                    events: hits,
                    terminated_by: None,
                    stats,
                });
            }
            h = h_next;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Restrict a dense segment to `[t_start, t_cut]`. The quartic is sampled at
/// five nodes of the shorter interval and re-expanded in contd5 form, so the
/// result is the same polynomial up to rounding.
fn truncate_segment(seg: &DenseSegment, t_cut: f64) -> DenseSegment {
    let n = seg.coeffs[0].len();
    let h = t_cut - seg.t_start;
    let nodes = [0.0, 0.25, 0.5, 0.75, 1.0];
    let vals: Vec<Vec<f64>> = nodes.iter().map(|s| seg.eval(seg.t_start + s * h)).collect();
    // Monomial coefficients p(s) = sum c_j s^j by Lagrange/Vandermonde on the fixed nodes.
    let mut mono = vec![vec![0.0; n]; 5];
    let inv = vandermonde_inverse_5(&nodes);
    for j in 0..5 {
        for (m, v) in vals.iter().enumerate() {
            for i in 0..n {
                mono[j][i] += inv[j][m] * v[i];
            }
        }
    }
    // p(s) = r1 + s r2 + s(1-s) r3 + s^2(1-s) r4 + s^2(1-s)^2 r5
    // monomials: r1 | r2 + r3 | -r3 + r4 + r5 | -r4 - 2 r5 | r5
    let r1 = mono[0].clone();
    let r5 = mono[4].clone();
    let r4: Vec<f64> = (0..n).map(|i| -mono[3][i] - 2.0 * r5[i]).collect();
    let r3: Vec<f64> = (0..n).map(|i| -(mono[2][i] - r4[i] - r5[i])).collect();
    let r2: Vec<f64> = (0..n).map(|i| mono[1][i] - r3[i]).collect();
    DenseSegment {
        t_start: seg.t_start,
        h,
        coeffs: [r1, r2, r3, r4, r5],
    }
}

fn vandermonde_inverse_5(nodes: &[f64; 5]) -> [[f64; 5]; 5] {
    // Solve V c = e_m for each unit vector by Gaussian elimination (5x5, well conditioned on [0,1]).
    let mut inv = [[0.0; 5]; 5];
    for m in 0..5 {
        let mut a = [[0.0; 6]; 5];
        for r in 0..5 {
            for j in 0..5 {
                a[r][j] = nodes[r].powi(j as i32);
            }
            a[r][5] = if r == m { 1.0 } else { 0.0 };
        }
        for col in 0..5 {
            let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..5 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for j in col..6 {
                        a[r][j] -= f * a[col][j];
                    }
                }
            }
        }
        for j in 0..5 {
            inv[j][m] = a[j][5] / a[j][j];
        }
    }
    inv
}

/// Bisection on the interpolant down to `EVENT_TIME_TOL`, then a secant/Newton
/// polish that is only accepted while it stays inside the bracket.
fn locate_event(ev: &EventSpec<'_>, seg: &DenseSegment, g_a: f64, g_b: f64) -> (f64, Vec<f64>) {
    let n = seg.coeffs[0].len();
    let mut buf = vec![0.0; n];
    let g_at = |t: f64, buf: &mut Vec<f64>| {
        seg.eval_into(t, buf);
        ev.eval(buf)
    };
    let (mut a, mut b) = (seg.t_start, seg.t_end());
    let (mut ga, mut gb) = (g_a, g_b);
    if gb == 0.0 {
        let y = seg.eval(b);
        return (b, y);
    }
    while (b - a).abs() > EVENT_TIME_TOL {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let gm = g_at(m, &mut buf);
        if gm == 0.0 {
            a = m;
            b = m;
            ga = 0.0;
            gb = 0.0;
            break;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
    }
    // Newton polish with a derivative taken across the final bracket.
    let (mut t, g) = if gb.abs() < ga.abs() { (b, gb) } else { (a, ga) };
    if a != b && g != 0.0 {
        let slope = (gb - ga) / (b - a);
        if slope != 0.0 && slope.is_finite() {
            let cand = t - g / slope;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if cand >= lo && cand <= hi {
                let gc = g_at(cand, &mut buf);
                if gc.abs() < g.abs() {
                    t = cand;
                }
            }
        }
    }
    (t, seg.eval(t))
}

/// State and time at the first crossing of `section` (which should be terminal).
/// `t_horizon` is the latest time the crossing may occur.
pub fn flow_to_section<F>(problem: &OdeProblem<F>, section: EventSpec<'_>, t_horizon: f64) -> Result<(Vec<f64>, f64), IntegratorError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let section = EventSpec {
        terminal: true,
        ..section
    };
    let events = [section];
    let sol = solve_adaptive(problem, t_horizon, &events)?;
    match sol.terminated_by {
        Some(_) => {
            let hit = sol.events.last().expect("terminal event recorded");
            Ok((hit.y.clone(), hit.t))
        }
        None => Err(IntegratorError::SectionNotReached {
            t_end: t_horizon,
            last_state: sol.trajectory.last_state().to_vec(),
        }),
    }
}

/// Classical fourth-order Runge–Kutta with a fixed step. Used as an independent
/// reference for regression values and by the test-suite oracles.
pub fn rk4_fixed<F>(rhs: F, t0: f64, y0: &[f64], h: f64, n_steps: usize) -> Vec<f64>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut t = t0;
    for _ in 0..n_steps {
        rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    y
}

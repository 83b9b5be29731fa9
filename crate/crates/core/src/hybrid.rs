//! Local-global hybrid models of mixed-mode oscillations.
//!
//! Small oscillations come from integrating a local normal form (folded node or
//! singular Hopf) between the sections `Σ1 = {x = k1}` and `Σ2 = {x = -k2}`.
//! The large excursion is replaced by an explicit return map `m21: Σ2 -> Σ1`,
//! and every application of it counts as one large oscillation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{solve_adaptive, Direction, EventSpec, IntegratorError, OdeProblem, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("exit section not reached before t = {t}; last state (x, y, z) = {last_state:?}")]
    SectionNotReached { t: f64, last_state: [f64; 3] },
    #[error("1/mu = {0} is an odd integer (resonant eigenvalue ratio)")]
    ResonantMu(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix A of the O(eps) return terms is singular")]
    SingularA,
    #[error("need at least {needed} returns, got {got}")]
    TooFewReturns { needed: usize, got: usize },
    #[error("cannot parse signature '{0}'")]
    ParseSignature(String),
}

/// `x' = y - x^2`, `y' = eps(-(mu + 1) x - z)`, `z' = eps mu / 2` (fast time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldedNodeNF {
    pub eps: f64,
    pub mu: f64,
}

/// `x' = y - x^2`, `y' = eps(z - x)`, `z' = eps(-nu - a x - b y - c z)` (fast time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularHopfNF {
    pub eps: f64,
    pub nu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalModel {
    FoldedNode(FoldedNodeNF),
    SingularHopf(SingularHopfNF),
}

impl LocalModel {
    pub fn eps(&self) -> f64 {
        match self {
            LocalModel::FoldedNode(n) => n.eps,
            LocalModel::SingularHopf(n) => n.eps,
        }
    }

    pub fn rhs(&self, s: &[f64], ds: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        ds[0] = y - x * x;
        match self {
            LocalModel::FoldedNode(n) => {
                ds[1] = n.eps * (-(n.mu + 1.0) * x - z);
                ds[2] = 0.5 * n.eps * n.mu;
            }
            LocalModel::SingularHopf(n) => {
                ds[1] = n.eps * (z - x);
                ds[2] = n.eps * (-n.nu - n.a * x - n.b * y - n.c * z);
            }
        }
    }

    fn validate(&self) -> Result<(), HybridError> {
        let vals: Vec<f64> = match self {
            LocalModel::FoldedNode(n) => vec![n.eps, n.mu],
            LocalModel::SingularHopf(n) => vec![n.eps, n.nu, n.a, n.b, n.c],
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(HybridError::InvalidParameter("non-finite normal-form parameter".into()));
        }
        if !(self.eps() > 0.0) {
            return Err(HybridError::InvalidParameter("eps must be positive".into()));
        }
        if let LocalModel::FoldedNode(n) = self {
            if !(n.mu > 0.0 && n.mu < 1.0) {
                return Err(HybridError::InvalidParameter(format!("mu = {} outside (0, 1)", n.mu)));
            }
        }
        Ok(())
    }
}

/// Section offsets in units of `sqrt(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionPair {
    pub k1: f64,
    pub k2: f64,
}

impl Default for SectionPair {
    fn default() -> Self {
        Self { k1: 1.0, k2: 1.0 }
    }
}

impl SectionPair {
    pub fn new(k1: f64, k2: f64) -> Result<Self, HybridError> {
        if !(k1 > 0.0 && k2 > 0.0) {
            return Err(HybridError::InvalidParameter("section offsets must be positive".into()));
        }
        Ok(Self { k1, k2 })
    }

    pub fn x1(&self, eps: f64) -> f64 {
        self.k1 * eps.sqrt()
    }

    /// `y = x1^2` on the critical manifold at the entry section.
    pub fn entry_y(&self, eps: f64) -> f64 {
        self.k1 * self.k1 * eps
    }

    pub fn x2(&self, eps: f64) -> f64 {
        -self.k2 * eps.sqrt()
    }
}

/// `m21(y, z) = (k1^2, m(z)) + eps (A (y, z) + b)` with `m(z) = m2 z^2 + m1 z + m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalReturnModel {
    pub m2: f64,
    pub m1: f64,
    pub m0: f64,
    #[serde(default)]
    pub a: [[f64; 2]; 2],
    #[serde(default)]
    pub b: [f64; 2],
    #[serde(default)]
    pub eps_order_terms_enabled: bool,
}

impl GlobalReturnModel {
    /// Singular-limit model with `A = 0`, `b = 0`.
    pub fn quadratic(m2: f64, m1: f64, m0: f64) -> Self {
        Self {
            m2,
            m1,
            m0,
            a: [[0.0; 2]; 2],
            b: [0.0; 2],
            eps_order_terms_enabled: false,
        }
    }

    pub fn with_eps_terms(mut self, a: [[f64; 2]; 2], b: [f64; 2]) -> Result<Self, HybridError> {
        self.a = a;
        self.b = b;
        self.eps_order_terms_enabled = true;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HybridError> {
        let all = [self.m2, self.m1, self.m0, self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1], self.b[0], self.b[1]];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(HybridError::InvalidParameter("non-finite return-map coefficient".into()));
        }
        if self.eps_order_terms_enabled {
            let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
            if det == 0.0 {
                return Err(HybridError::SingularA);
            }
        }
        Ok(())
    }

    pub fn m(&self, z: f64) -> f64 {
        (self.m2 * z + self.m1) * z + self.m0
    }
}

/// The singular-Hopf equilibria `(x, x^2, x)` with `b x^2 + (a + c) x + nu = 0`,
/// sorted by `|x|`.
pub fn equilibrium_of_sh(nf: &SingularHopfNF) -> Vec<[f64; 3]> {
    let (qa, qb, qc) = (nf.b, nf.a + nf.c, nf.nu);
    let mut xs = Vec::new();
    if qa == 0.0 {
        if qb != 0.0 {
            xs.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sign = if qb >= 0.0 { 1.0 } else { -1.0 };
            let q = -0.5 * (qb + sign * disc.sqrt());
            if q != 0.0 {
                xs.push(q / qa);
                xs.push(qc / q);
            } else {
                xs.push(0.0);
            }
        }
    }
    xs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    xs.dedup();
    xs.into_iter().map(|x| [x, x * x, x]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanardCount {
    pub k: u64,
    pub n_canards: u64,
    pub max_saos: u64,
}

/// `k` with `2k + 1 < 1/mu < 2k + 3`; then there are `k + 2` canards and at most
/// `k + 1` small oscillations.
pub fn canard_count(mu: f64) -> Result<CanardCount, HybridError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(HybridError::InvalidParameter(format!("mu = {mu} outside (0, 1)")));
    }
    let inv = 1.0 / mu;
    let nearest = inv.round();
    if (inv - nearest).abs() <= 1e-9 * inv && nearest as u64 % 2 == 1 {
        return Err(HybridError::ResonantMu(inv));
    }
    let k = ((inv - 1.0) / 2.0).floor() as u64;
    Ok(CanardCount {
        k,
        n_canards: k + 2,
        max_saos: k + 1,
    })
}

/// Settings for one local passage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMapOptions {
    pub solver: SolverOptions,
    /// Fast-time horizon for reaching `Σ2`.
    pub horizon: f64,
    /// Maxima of `x` count as small oscillations only when `|x| < window sqrt(eps)`.
    pub sao_window: f64,
}

impl Default for LocalMapOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default().with_tol(1e-10).with_max_step(0.5),
            horizon: 1e5,
            sao_window: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExit {
    pub y: f64,
    pub z: f64,
    pub sao_count: u32,
    pub t_exit: f64,
}

/// Flow map `m12: Σ1 -> Σ2` of the normal form, counting small oscillations on the way.
pub fn local_flow_map_m12(model: &LocalModel, sections: &SectionPair, entry: (f64, f64), opts: &LocalMapOptions) -> Result<LocalExit, HybridError> {
    model.validate()?;
    let eps = model.eps();
    let x1 = sections.x1(eps);
    let x2 = sections.x2(eps);
    let m = *model;
    let rhs = move |_t: f64, s: &[f64], ds: &mut [f64]| m.rhs(s, ds);
    let events = [
        EventSpec::section(0, x2, Direction::Falling),
        // x' = y - x^2 changes sign from + to - at a maximum of x
        EventSpec::new(|s: &[f64]| s[1] - s[0] * s[0], Direction::Falling, false),
    ];
    let problem = OdeProblem::new(rhs, 0.0, vec![x1, entry.0, entry.1]).with_options(opts.solver);
    let sol = solve_adaptive(&problem, opts.horizon, &events)?;
    let last = sol.trajectory.last_state();
    if sol.terminated_by != Some(0) {
        return Err(HybridError::SectionNotReached {
            t: sol.trajectory.last_time(),
            last_state: [last[0], last[1], last[2]],
        });
    }
    let window = opts.sao_window * eps.sqrt();
    let sao_count = sol.events.iter().filter(|e| e.event == 1 && e.y[0].abs() < window).count() as u32;
    Ok(LocalExit {
        y: last[1],
        z: last[2],
        sao_count,
        t_exit: sol.trajectory.last_time(),
    })
}

/// Return map `m21: Σ2 -> Σ1`.
pub fn global_return_m21(model: &GlobalReturnModel, sections: &SectionPair, state: (f64, f64), eps: f64) -> (f64, f64) {
    let (y, z) = state;
    let (mut yn, mut zn) = (sections.entry_y(eps), model.m(z));
    if model.eps_order_terms_enabled {
        yn += eps * (model.a[0][0] * y + model.a[0][1] * z + model.b[0]);
        zn += eps * (model.a[1][0] * y + model.a[1][1] * z + model.b[1]);
    }
    (yn, zn)
}

/// State on `Σ2` just before the global map is applied, and the small
/// oscillations of the passage that led there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnRecord {
    pub return_index: usize,
    pub y_pre: f64,
    pub z_pre: f64,
    pub sao_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridRun {
    pub log: Vec<ReturnRecord>,
    pub signature: MmoSignature,
}

impl HybridRun {
    pub fn sao_counts(&self) -> Vec<u32> {
        self.log.iter().map(|r| r.sao_count).collect()
    }
}

/// Settings of a hybrid run besides the models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOptions {
    pub local: LocalMapOptions,
    pub max_period: usize,
    pub transient_fraction: f64,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            local: LocalMapOptions::default(),
            max_period: 20,
            transient_fraction: 0.5,
        }
    }
}

/// Alternate `m12` and `m21` for `n_returns` cycles starting from `(y, z)` on `Σ1`.
pub fn run_hybrid(
    local: &LocalModel,
    sections: &SectionPair,
    global: &GlobalReturnModel,
    initial: (f64, f64),
    n_returns: usize,
    opts: &HybridOptions,
) -> Result<HybridRun, HybridError> {
    if n_returns == 0 {
        return Err(HybridError::TooFewReturns { needed: 1, got: 0 });
    }
    global.validate()?;
    let eps = local.eps();
    let mut state = initial;
    let mut log = Vec::with_capacity(n_returns);
    for i in 0..n_returns {
        let exit = local_flow_map_m12(local, sections, state, &opts.local)?;
        log.push(ReturnRecord {
            return_index: i,
            y_pre: exit.y,
            z_pre: exit.z,
            sao_count: exit.sao_count,
        });
        state = global_return_m21(global, sections, (exit.y, exit.z), eps);
    }
    let counts: Vec<u32> = log.iter().map(|r| r.sao_count).collect();
    let max_period = opts.max_period.min(counts.len() / 2).max(1);
    let signature = extract_signature(&counts, max_period, opts.transient_fraction)?;
    Ok(HybridRun { log, signature })
}

/// Per-return small-oscillation counts and their periodic structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmoSignature {
    /// The counts after the discarded transient.
    pub counts: Vec<u32>,
    pub period: Option<usize>,
    /// `L^s` form of one period, `None` when no period was found.
    pub canonical: Option<String>,
}

impl MmoSignature {
    pub fn aperiodic(&self) -> bool {
        self.period.is_none()
    }

    /// Groups `(L, s)` of the canonical form.
    pub fn groups(&self) -> Option<Vec<(u32, u32)>> {
        self.canonical.as_deref().and_then(|c| parse_groups(c).ok())
    }
}

/// Smallest `p <= max_period` for which `values` is `p`-periodic under `same`.
fn smallest_period<T>(values: &[T], max_period: usize, same: impl Fn(&T, &T) -> bool) -> Option<usize> {
    (1..=max_period.min(values.len().saturating_sub(1))).find(|&p| (0..values.len() - p).all(|i| same(&values[i], &values[i + p])))
}

/// Split one period of counts into `(L, s)` groups: a run of zeros followed by
/// a nonzero `s` becomes `(zeros + 1)^s`. The rotation with the
/// lexicographically smallest group list is chosen.
pub fn canonical_groups(block: &[u32]) -> Vec<(u32, u32)> {
    if block.iter().all(|&s| s == 0) {
        return vec![(block.len() as u32, 0)];
    }
    let n = block.len();
    let mut best: Option<Vec<(u32, u32)>> = None;
    for r in 0..n {
        // rotations ending in a nonzero count split cleanly into groups
        if block[(r + n - 1) % n] == 0 {
            continue;
        }
        let mut groups = Vec::new();
        let mut lao = 0;
        for i in 0..n {
            let s = block[(r + i) % n];
            lao += 1;
            if s != 0 {
                groups.push((lao, s));
                lao = 0;
            }
        }
        if best.as_ref().is_none_or(|b| groups < *b) {
            best = Some(groups);
        }
    }
    best.expect("a nonzero count exists")
}

pub fn format_groups(groups: &[(u32, u32)]) -> String {
    groups.iter().map(|(l, s)| format!("{l}^{s}")).collect::<Vec<_>>().join(" ")
}

fn parse_groups(text: &str) -> Result<Vec<(u32, u32)>, HybridError> {
    let err = || HybridError::ParseSignature(text.to_string());
    let groups: Vec<(u32, u32)> = text
        .split_whitespace()
        .map(|g| {
            let (l, s) = g.split_once('^').ok_or_else(err)?;
            let l: u32 = l.parse().map_err(|_| err())?;
            let s: u32 = s.parse().map_err(|_| err())?;
            if l == 0 {
                return Err(err());
            }
            Ok((l, s))
        })
        .collect::<Result<_, _>>()?;
    if groups.is_empty() {
        return Err(err());
    }
    Ok(groups)
}

/// Counts of one period encoded by an `L^s` string (inverse of [`canonical_groups`]).
pub fn parse_signature(text: &str) -> Result<Vec<u32>, HybridError> {
    let mut counts = Vec::new();
    for (l, s) in parse_groups(text)? {
        counts.extend(std::iter::repeat_n(0, l as usize - 1));
        counts.push(s);
    }
    Ok(counts)
}

/// Drop the first `transient_fraction` of the sequence, then find the smallest
/// period of the rest. No period is reported as an aperiodic signature.
pub fn extract_signature(sao_sequence: &[u32], max_period: usize, transient_fraction: f64) -> Result<MmoSignature, HybridError> {
    if max_period == 0 {
        return Err(HybridError::InvalidParameter("max_period must be positive".into()));
    }
    if sao_sequence.len() < 2 * max_period {
        return Err(HybridError::TooFewReturns {
            needed: 2 * max_period,
            got: sao_sequence.len(),
        });
    }
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(HybridError::InvalidParameter("transient fraction must lie in [0, 1)".into()));
    }
    let skip = (sao_sequence.len() as f64 * transient_fraction).floor() as usize;
    let tail = &sao_sequence[skip..];
    let period = smallest_period(tail, max_period, |a, b| a == b);
    let canonical = period.map(|p| format_groups(&canonical_groups(&tail[..p])));
    Ok(MmoSignature {
        counts: tail.to_vec(),
        period,
        canonical,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosVerdict {
    /// No period `<= max_period` of the pre-return `z` values within `tol`.
    pub aperiodic: bool,
    pub z_period: Option<usize>,
    /// No period `<= max_period` of the small-oscillation counts.
    pub symbolic_aperiodic: bool,
    /// Distinct small-oscillation counts in the analysed window, ascending.
    pub symbols: Vec<u32>,
}

/// Periodicity test on the second half of a return log.
pub fn detect_chaos(log: &[ReturnRecord], max_period: usize, tol: f64) -> Result<ChaosVerdict, HybridError> {
    if log.len() < 10 * max_period {
        return Err(HybridError::TooFewReturns {
            needed: 10 * max_period,
            got: log.len(),
        });
    }
    let tail = &log[log.len() / 2..];
    let z: Vec<f64> = tail.iter().map(|r| r.z_pre).collect();
    let s: Vec<u32> = tail.iter().map(|r| r.sao_count).collect();
    let z_period = smallest_period(&z, max_period, |a, b| (a - b).abs() <= tol);
    let s_period = smallest_period(&s, max_period, |a, b| a == b);
    let mut symbols = s.clone();
    symbols.sort_unstable();
    symbols.dedup();
    Ok(ChaosVerdict {
        aperiodic: z_period.is_none(),
        z_period,
        symbolic_aperiodic: s_period.is_none(),
        symbols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 0.01;

    fn folded_node() -> LocalModel {
        LocalModel::FoldedNode(FoldedNodeNF { eps: EPS, mu: 0.006 })
    }

    fn singular_hopf(nu: f64) -> LocalModel {
        LocalModel::SingularHopf(SingularHopfNF {
            eps: EPS,
            nu,
            a: 0.5,
            b: -1.0,
            c: 1.0,
        })
    }

    #[test]
    fn equilibrium_values() {
        let nf = SingularHopfNF {
            eps: EPS,
            nu: 0.01,
            a: 0.5,
            b: -1.0,
            c: 1.0,
        };
        let q = equilibrium_of_sh(&nf)[0];
        assert!((q[0] + 6.63729e-3).abs() < 1e-6);
        assert!((q[1] - 4.40537e-5).abs() < 1e-6);
        assert!((q[2] + 6.63729e-3).abs() < 1e-6);
        let mut d = [0.0; 3];
        LocalModel::SingularHopf(nf).rhs(&q, &mut d);
        assert!(d.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10);

        let lin = SingularHopfNF { b: 0.0, ..nf };
        assert_eq!(equilibrium_of_sh(&lin), vec![[-0.01 / 1.5, (0.01f64 / 1.5).powi(2), -0.01 / 1.5]]);
        let origin = SingularHopfNF { nu: 0.0, ..nf };
        assert_eq!(equilibrium_of_sh(&origin)[0][0], 0.0);
        let none = SingularHopfNF { b: 1.0, nu: 1.0, ..nf };
        assert!(equilibrium_of_sh(&none).is_empty());
    }

    #[test]
    fn canard_counts() {
        assert_eq!(
            canard_count(0.006).unwrap(),
            CanardCount {
                k: 82,
                n_canards: 84,
                max_saos: 83
            }
        );
        assert_eq!(
            canard_count(0.4).unwrap(),
            CanardCount {
                k: 0,
                n_canards: 2,
                max_saos: 1
            }
        );
        assert!(matches!(canard_count(1.0 / 3.0), Err(HybridError::ResonantMu(_))));
        assert!(canard_count(1.5).is_err());
    }

    #[test]
    fn global_return_examples() {
        let sec = SectionPair::default();
        let lin = GlobalReturnModel::quadratic(0.0, 0.1, -0.015);
        let (y, z) = global_return_m21(&lin, &sec, (0.3, 0.2), EPS);
        assert!((y - EPS).abs() < 1e-17 && (z - (0.02 - 0.015)).abs() < 1e-15);
        let chaos = GlobalReturnModel::quadratic(3.0, 0.2, -0.8);
        assert_eq!(global_return_m21(&chaos, &sec, (0.0, 0.0), EPS).1, -0.8);
        let pert = GlobalReturnModel::quadratic(0.0, 0.0, 0.0)
            .with_eps_terms([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
            .unwrap();
        let (y, z) = global_return_m21(&pert, &sec, (0.5, 0.25), EPS);
        assert!((y - (EPS + EPS * 0.5)).abs() < 1e-16 && (z - EPS * 0.25).abs() < 1e-16);
        assert_eq!(GlobalReturnModel::quadratic(0.0, 0.0, 0.0).with_eps_terms([[1.0, 2.0], [2.0, 4.0]], [0.0; 2]), Err(HybridError::SingularA));
    }

    #[test]
    fn entry_lies_on_critical_manifold() {
        let sec = SectionPair::default();
        let (y, _) = global_return_m21(&GlobalReturnModel::quadratic(0.0, 0.1, 0.0), &sec, (0.0, 0.0), EPS);
        let x1 = sec.x1(EPS);
        assert!((y - x1 * x1).abs() <= 1e-3);
    }

    #[test]
    fn escape_is_reported() {
        // far outside the funnel the trajectory runs away along x -> +infinity
        let opts = LocalMapOptions {
            horizon: 200.0,
            ..Default::default()
        };
        let err = local_flow_map_m12(&folded_node(), &SectionPair::default(), (EPS, -5.0), &opts).unwrap_err();
        assert!(matches!(err, HybridError::SectionNotReached { .. } | HybridError::Integrator(_)), "{err:?}");
    }

    #[test]
    fn folded_node_entry_gives_fourteen_saos() {
        let run = run_hybrid(
            &folded_node(),
            &SectionPair::default(),
            &GlobalReturnModel::quadratic(0.0, 0.1, -0.015),
            (EPS, 0.15),
            40,
            &HybridOptions::default(),
        )
        .unwrap();
        assert_eq!(run.signature.canonical.as_deref(), Some("1^14"));
        assert!(run.sao_counts().iter().all(|&s| s as u64 <= canard_count(0.006).unwrap().max_saos));
    }

    #[test]
    fn singular_hopf_orbit_has_six_saos() {
        let run = run_hybrid(
            &singular_hopf(0.01),
            &SectionPair::default(),
            &GlobalReturnModel::quadratic(0.0, 0.1, 0.05),
            (EPS, 0.15),
            40,
            &HybridOptions::default(),
        )
        .unwrap();
        assert_eq!(run.signature.canonical.as_deref(), Some("1^6"));
    }

    #[test]
    fn runs_are_deterministic() {
        let go = || {
            run_hybrid(
                &singular_hopf(0.01),
                &SectionPair::default(),
                &GlobalReturnModel::quadratic(0.0, 0.1, 0.025),
                (EPS, 0.15),
                12,
                &HybridOptions {
                    max_period: 4,
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let (a, b) = (go(), go());
        for (r, s) in a.log.iter().zip(&b.log) {
            assert_eq!(r.z_pre.to_bits(), s.z_pre.to_bits());
            assert_eq!(r.y_pre.to_bits(), s.y_pre.to_bits());
        }
    }

    #[test]
    fn signature_forms() {
        let sig = |v: &[u32]| extract_signature(v, 4, 0.5).unwrap();
        assert_eq!(sig(&[14; 20]).canonical.as_deref(), Some("1^14"));
        assert_eq!(sig(&[14; 20]).period, Some(1));
        let alt: Vec<u32> = (0..20).map(|i| i % 2).collect();
        assert_eq!(sig(&alt).canonical.as_deref(), Some("2^1"));
        assert_eq!(sig(&[0; 20]).canonical.as_deref(), Some("1^0"));
        let two: Vec<u32> = (0..20).map(|i| if i % 2 == 0 { 2 } else { 1 }).collect();
        assert_eq!(sig(&two).canonical.as_deref(), Some("1^1 1^2"));
        let irregular = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 1];
        let s = extract_signature(&irregular, 3, 0.0).unwrap();
        assert!(s.aperiodic() && s.canonical.is_none());
        assert!(matches!(extract_signature(&[1, 2, 3], 4, 0.5), Err(HybridError::TooFewReturns { .. })));
    }

    #[test]
    fn signature_parser() {
        assert_eq!(parse_signature("2^1").unwrap(), vec![0, 1]);
        assert_eq!(parse_signature("1^1 1^2").unwrap(), vec![1, 2]);
        assert_eq!(parse_signature("1^0").unwrap(), vec![0]);
        assert!(parse_signature("0^3").is_err());
        assert!(parse_signature("x").is_err());
        assert!(parse_signature("").is_err());
    }

    #[test]
    fn chaos_verdicts() {
        let rec = |i: usize, z: f64, s: u32| ReturnRecord {
            return_index: i,
            y_pre: 0.0,
            z_pre: z,
            sao_count: s,
        };
        let constant: Vec<ReturnRecord> = (0..50).map(|i| rec(i, 0.1, 3)).collect();
        let v = detect_chaos(&constant, 5, 1e-6).unwrap();
        assert!(!v.aperiodic && v.z_period == Some(1) && v.symbols == vec![3]);
        // logistic map in its chaotic regime
        let mut x = 0.3;
        let logistic: Vec<ReturnRecord> = (0..400)
            .map(|i| {
                x = 4.0 * x * (1.0 - x);
                rec(i, x, (x > 0.5) as u32)
            })
            .collect();
        let v = detect_chaos(&logistic, 20, 1e-6).unwrap();
        assert!(v.aperiodic && v.symbolic_aperiodic && v.symbols == vec![0, 1]);
        assert!(detect_chaos(&constant[..10], 5, 1e-6).is_err());
    }

    proptest! {
        #[test]
        fn canonical_form_round_trips(block in proptest::collection::vec(0u32..5, 1..8), reps in 3usize..6) {
            let seq: Vec<u32> = block.iter().copied().cycle().take(block.len() * reps * 2).collect();
            let sig = extract_signature(&seq, block.len(), 0.5).unwrap();
            let p = sig.period.unwrap();
            let period_block = parse_signature(sig.canonical.as_deref().unwrap()).unwrap();
            prop_assert_eq!(period_block.len(), p);
            // the parsed block is a rotation of the observed period
            let tail = &sig.counts[..p];
            let is_rotation = (0..p).any(|r| (0..p).all(|i| tail[(r + i) % p] == period_block[i]));
            prop_assert!(is_rotation);
        }

        #[test]
        fn canard_count_brackets_inverse_mu(mu in 0.001f64..0.999) {
            if let Ok(c) = canard_count(mu) {
                let inv = 1.0 / mu;
                prop_assert!((2 * c.k + 1) as f64 <= inv && inv < (2 * c.k + 3) as f64);
                prop_assert_eq!(c.n_canards, c.k + 2);
            }
        }
    }
}

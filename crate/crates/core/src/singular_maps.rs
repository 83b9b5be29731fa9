//! Singular-limit (`eps = 0`) flow maps of the Koper model.
//!
//! Every map is parametrized by `z`, the only coordinate that changes along a
//! slow segment once `y = c(x)` is eliminated; fast fibers conserve `(y, z)`.
//!
//! * `m_j`      regular jump `F+ -> L^{a,-} -> F- -> L^{a,+}`
//! * `m_{a,+}`  slow flow on `C^{a,+}` from `L^{a,+}` to `L^mu`
//! * `m_f`      jump forward from the strong canard, `gamma_s -> C^{a,-} -> F- -> L^{a,+}`
//! * `m_b`      jump back from the strong canard, `gamma_s -> C^{a,+} -> L^mu`
//! * `m_s`      linearized fold-region map `L^mu -> F+` (closed form)

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{flow_to_section, solve_adaptive, Direction, EventSpec, IntegratorError, OdeProblem, SolverOptions, Trajectory};
use crate::koper::{
    cubic, desingularized_slow_flow, folded_singularity_z, funnel_boundary_z, strong_eigenvector_x, FoldSign, KoperError, KoperParams,
    LAMBDA_FSN, LAMBDA_NODE_FOCUS,
};

/// Largest admissible spacing of a map grid.
pub const MAX_GRID_SPACING: f64 = 0.02;
/// Offset of the canard seed from `p_+` along the strong eigenvector.
pub const CANARD_SEED_OFFSET: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Koper(#[from] KoperError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("no landing point distinct from x = {x} on the requested attracting sheet")]
    NoLandingRoot { x: f64 },
    #[error("jump origin x = {x} must lie in [-1, 1]")]
    JumpOutOfRange { x: f64 },
    #[error("strong canard left -1 < x < 1 without reaching a fold (last point x = {x}, z = {z})")]
    CanardEscape { x: f64, z: f64 },
    #[error("branch structure mismatch: {0}")]
    BranchMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpSide {
    /// Land on `C^{a,-}` (`x' <= -1`).
    Forward,
    /// Land on `C^{a,+}` (`x' >= 1`).
    Backward,
}

/// Landing point of the fast fiber through `x`: the root of `x'^3 - 3x' = c(x)`
/// on the requested sheet, excluding `x' = x`.
pub fn jump_target(x: f64, side: JumpSide) -> Result<f64, MapError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(MapError::JumpOutOfRange { x });
    }
    // x'^3 - 3x' - c(x) = (x' - x)(x'^2 + x x' + x^2 - 3)
    let disc = (12.0 - 3.0 * x * x).sqrt();
    let landing = match side {
        JumpSide::Forward => 0.5 * (-x - disc),
        JumpSide::Backward => 0.5 * (-x + disc),
    };
    if landing == x {
        return Err(MapError::NoLandingRoot { x });
    }
    Ok(landing)
}

/// The fold lines, drop curves and section used by the maps, as `x` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricCurves {
    pub f_plus: f64,
    pub f_minus: f64,
    pub l_a_minus: f64,
    pub l_a_plus: f64,
    pub l_mu: f64,
}

impl GeometricCurves {
    pub fn new(mu: f64) -> Self {
        Self {
            f_plus: 1.0,
            f_minus: -1.0,
            l_a_minus: -2.0,
            l_a_plus: 2.0,
            l_mu: 1.0 + mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapId {
    #[serde(rename = "m_j")]
    Mj,
    #[serde(rename = "m_a_plus")]
    MaPlus,
    #[serde(rename = "m_f")]
    Mf,
    #[serde(rename = "m_b")]
    Mb,
}

impl MapId {
    pub const ALL: [MapId; 4] = [MapId::Mj, MapId::MaPlus, MapId::Mf, MapId::Mb];

    pub fn as_str(self) -> &'static str {
        match self {
            MapId::Mj => "m_j",
            MapId::MaPlus => "m_a_plus",
            MapId::Mf => "m_f",
            MapId::Mb => "m_b",
        }
    }

    /// Short letter used in coefficient names (`c^{fu}_1` and so on).
    pub fn letter(self) -> &'static str {
        match self {
            MapId::Mj => "j",
            MapId::MaPlus => "a",
            MapId::Mf => "f",
            MapId::Mb => "b",
        }
    }

    pub fn is_canard_map(self) -> bool {
        matches!(self, MapId::Mf | MapId::Mb)
    }

    /// Polynomial degrees of the fitted pieces, `(upper, lower)` for the canard maps.
    pub fn model_degrees(self) -> (usize, usize) {
        match self {
            MapId::Mj => (1, 1),
            MapId::MaPlus => (2, 2),
            MapId::Mf => (1, 2),
            MapId::Mb => (2, 1),
        }
    }
}

impl std::str::FromStr for MapId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown map id '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Single,
    Upper,
    Lower,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Single => "single",
            Branch::Upper => "upper",
            Branch::Lower => "lower",
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Branch::Single => "",
            Branch::Upper => "u",
            Branch::Lower => "l",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Branch::Single),
            "upper" => Ok(Branch::Upper),
            "lower" => Ok(Branch::Lower),
            _ => Err(format!("unknown branch '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    /// The candidate leaves the map's domain (no landing point, or lands behind the section).
    OutOfDomain,
    /// The target section was not reached within the time horizon.
    NotReached,
    /// The integrator failed (step-size underflow, non-finite state, ...).
    Failed,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Ok => "ok",
            SampleStatus::OutOfDomain => "out_of_domain",
            SampleStatus::NotReached => "not_reached",
            SampleStatus::Failed => "failed",
        }
    }

    fn from_error(err: &MapError) -> Self {
        match err {
            MapError::Integrator(IntegratorError::SectionNotReached { .. }) => SampleStatus::NotReached,
            MapError::NoLandingRoot { .. } | MapError::JumpOutOfRange { .. } => SampleStatus::OutOfDomain,
            _ => SampleStatus::Failed,
        }
    }
}

impl std::str::FromStr for SampleStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(SampleStatus::Ok),
            "out_of_domain" => Ok(SampleStatus::OutOfDomain),
            "not_reached" => Ok(SampleStatus::NotReached),
            "failed" => Ok(SampleStatus::Failed),
            _ => Err(format!("unknown sample status '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSampleEntry {
    pub branch: Branch,
    pub z_in: f64,
    /// NaN unless `status` is `Ok`.
    pub z_out: f64,
    pub status: SampleStatus,
}

impl MapSampleEntry {
    pub fn is_ok(&self) -> bool {
        self.status == SampleStatus::Ok
    }
}

/// A sampled singular map: `(z_in, z_out)` pairs grouped by branch.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    pub map_id: MapId,
    pub lambda: f64,
    pub entries: Vec<MapSampleEntry>,
}

impl MapSample {
    pub fn branches(&self) -> Vec<Branch> {
        let mut b: Vec<Branch> = self.entries.iter().map(|e| e.branch).collect();
        b.sort();
        b.dedup();
        b
    }

    pub fn branch_entries(&self, branch: Branch) -> impl Iterator<Item = &MapSampleEntry> {
        self.entries.iter().filter(move |e| e.branch == branch)
    }

    /// `[z_min, z_max]` of the sampled grid of one branch.
    pub fn domain(&self, branch: Branch) -> Option<(f64, f64)> {
        let zs: Vec<f64> = self.branch_entries(branch).map(|e| e.z_in).collect();
        let lo = zs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Shared endpoint of the upper and lower grids (the extremal `z` of the canard).
    pub fn breakpoint(&self) -> Option<f64> {
        let (u, l) = (self.domain(Branch::Upper)?, self.domain(Branch::Lower)?);
        [u.0, u.1].into_iter().find(|z| *z == l.0 || *z == l.1)
    }

    pub fn ok_pairs(&self, branch: Branch) -> Vec<(f64, f64)> {
        self.branch_entries(branch).filter(|e| e.is_ok()).map(|e| (e.z_in, e.z_out)).collect()
    }
}

/// Integration settings shared by all map computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    pub solver: SolverOptions,
    /// Desingularized-time horizon for reaching a section.
    pub horizon: f64,
    /// Number of grid points per branch; raised if needed so that `h <= 0.02`.
    pub n_points: usize,
    /// Arclength step of the stored canard samples.
    pub canard_arc_step: f64,
    pub canard_max_arclength: f64,
    pub canard_seed_offset: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            horizon: 50.0,
            n_points: 101,
            canard_arc_step: 0.01,
            canard_max_arclength: 20.0,
            canard_seed_offset: CANARD_SEED_OFFSET,
        }
    }
}

/// Uniform grid on `[a, b]` with at least `n` points and spacing `<= 0.02`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let len = (b - a).abs();
    let needed = (len / MAX_GRID_SPACING).ceil() as usize + 1;
    let n = n.max(needed).max(2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
}

/// Default domain `[2 lambda + 5, 2 lambda + 7]` for `m_j` and `m_{a,+}`
/// (the folded singularity `z` plus or minus one).
pub fn default_regular_domain(p: &KoperParams) -> (f64, f64) {
    let zp = folded_singularity_z(p, FoldSign::Plus);
    (zp - 1.0, zp + 1.0)
}

pub fn default_regular_grid(p: &KoperParams, opts: &MapOptions) -> Vec<f64> {
    let (a, b) = default_regular_domain(p);
    uniform_grid(a, b, opts.n_points)
}

/// Flow the desingularized slow flow from `(x0, z0)` to the line `{x = target}`
/// and return `z` there. Only meant for the attracting sheets, where the
/// desingularized and true time directions agree.
pub fn slow_flow_to_x(p: &KoperParams, x0: f64, z0: f64, target: f64, opts: &MapOptions) -> Result<f64, MapError> {
    let params = *p;
    let rhs = move |_t: f64, s: &[f64], ds: &mut [f64]| {
        let d = desingularized_slow_flow([s[0], s[1]], &params);
        ds[0] = d[0];
        ds[1] = d[1];
    };
    let direction = if target > x0 { Direction::Rising } else { Direction::Falling };
    let problem = OdeProblem::new(rhs, 0.0, vec![x0, z0]).with_options(opts.solver);
    let (state, _t) = flow_to_section(&problem, EventSpec::section(0, target, direction), opts.horizon)?;
    Ok(state[1])
}

/// `m_j` at one point: jump from `F+` to `L^{a,-}`, slow flow to `F-`, jump to `L^{a,+}`.
pub fn m_j_point(p: &KoperParams, z: f64, opts: &MapOptions) -> Result<f64, MapError> {
    let x_drop = jump_target(1.0, JumpSide::Forward)?;
    let z_fold = slow_flow_to_x(p, x_drop, z, -1.0, opts)?;
    // the jump F- -> L^{a,+} preserves z
    jump_target(-1.0, JumpSide::Backward)?;
    Ok(z_fold)
}

/// `m_{a,+}` at one point: slow flow on `C^{a,+}` from `x = 2` to `x = 1 + mu`.
pub fn m_a_plus_point(p: &KoperParams, z: f64, opts: &MapOptions) -> Result<f64, MapError> {
    slow_flow_to_x(p, 2.0, z, 1.0 + p.mu, opts)
}

/// `m_f` for a canard point `(x, z)`.
pub fn m_f_point(p: &KoperParams, x: f64, z: f64, opts: &MapOptions) -> Result<f64, MapError> {
    if x <= -1.0 {
        // the canard endpoint already sits on F-
        return Ok(z);
    }
    let landing = jump_target(x, JumpSide::Forward)?;
    slow_flow_to_x(p, landing, z, -1.0, opts)
}

/// `m_b` for a canard point `(x, z)`. Landing points between `F+` and `L^mu`
/// never reach the section and are reported as out of domain.
pub fn m_b_point(p: &KoperParams, x: f64, z: f64, opts: &MapOptions) -> Result<f64, MapError> {
    let landing = jump_target(x, JumpSide::Backward)?;
    let section = 1.0 + p.mu;
    if landing <= section {
        return Err(MapError::NoLandingRoot { x });
    }
    slow_flow_to_x(p, landing, z, section, opts)
}

fn sample_entries<F>(branch: Branch, grid: &[f64], f: F) -> Vec<MapSampleEntry>
where
    F: Fn(f64) -> Result<f64, MapError> + Sync,
{
    grid.par_iter()
        .map(|&z| match f(z) {
            Ok(z_out) if z_out.is_finite() => MapSampleEntry {
                branch,
                z_in: z,
                z_out,
                status: SampleStatus::Ok,
            },
            Ok(_) => MapSampleEntry {
                branch,
                z_in: z,
                z_out: f64::NAN,
                status: SampleStatus::Failed,
            },
            Err(e) => MapSampleEntry {
                branch,
                z_in: z,
                z_out: f64::NAN,
                status: SampleStatus::from_error(&e),
            },
        })
        .collect()
}

fn checked_grid(z_grid: &[f64]) -> Result<Vec<f64>, MapError> {
    if z_grid.is_empty() {
        return Err(MapError::InvalidGrid("empty grid".into()));
    }
    if z_grid.iter().any(|z| !z.is_finite()) {
        return Err(MapError::InvalidGrid("non-finite grid value".into()));
    }
    let mut g = z_grid.to_vec();
    g.sort_by(f64::total_cmp);
    Ok(g)
}

pub fn compute_m_j(p: &KoperParams, z_grid: &[f64], opts: &MapOptions) -> Result<MapSample, MapError> {
    let grid = checked_grid(z_grid)?;
    Ok(MapSample {
        map_id: MapId::Mj,
        lambda: p.lambda,
        entries: sample_entries(Branch::Single, &grid, |z| m_j_point(p, z, opts)),
    })
}

pub fn compute_m_a_plus(p: &KoperParams, z_grid: &[f64], opts: &MapOptions) -> Result<MapSample, MapError> {
    let grid = checked_grid(z_grid)?;
    Ok(MapSample {
        map_id: MapId::MaPlus,
        lambda: p.lambda,
        entries: sample_entries(Branch::Single, &grid, |z| m_a_plus_point(p, z, opts)),
    })
}

/// The part of the strong canard `gamma_s` inside `C^r`, parametrized by arclength
/// from `p_+`. Along the curve `z` first decreases to an extremum and then
/// increases until the curve reaches a fold.
#[derive(Debug, Clone)]
pub struct CanardCurve {
    pub lambda: f64,
    /// `(x, z)` points at multiples of the arclength step, starting at the seed.
    pub samples: Vec<[f64; 2]>,
    pub arclength: Vec<f64>,
    /// Strong eigenvector `x` component (with `z` component 1) at `p_+`.
    pub strong_x: f64,
    pub z_fold: f64,
    pub s_extremum: f64,
    pub extremum: [f64; 2],
    pub s_end: f64,
    pub end: [f64; 2],
    seed: [f64; 2],
    path: Trajectory,
}

impl CanardCurve {
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let v = self.path.interpolate(s.clamp(0.0, self.s_end)).expect("s within the curve");
        [v[0], v[1]]
    }

    pub fn z_extremum(&self) -> f64 {
        self.extremum[1]
    }

    /// Canard point with the given `z` on one branch. Upper is the arc from
    /// `p_+` to the extremum, lower the arc from the extremum to the fold.
    pub fn point_at_z(&self, branch: Branch, z: f64) -> Result<[f64; 2], MapError> {
        let (s_a, s_b) = match branch {
            Branch::Upper => (0.0, self.s_extremum),
            Branch::Lower => (self.s_extremum, self.s_end),
            Branch::Single => return Err(MapError::BranchMismatch("canard points live on the upper or lower arc".into())),
        };
        if branch == Branch::Upper {
            // between p_+ and the seed the curve is the straight eigen-direction
            let lo = self.seed[1].min(self.z_fold);
            let hi = self.seed[1].max(self.z_fold);
            if z >= lo && z <= hi {
                return Ok([1.0 + (z - self.z_fold) * self.strong_x, z]);
            }
        }
        if z == self.extremum[1] {
            return Ok(self.extremum);
        }
        if branch == Branch::Lower && z == self.end[1] {
            return Ok(self.end);
        }
        let za = if branch == Branch::Upper { self.seed[1] } else { self.extremum[1] };
        let zb = if branch == Branch::Upper { self.extremum[1] } else { self.end[1] };
        let (lo, hi) = if za <= zb { (za, zb) } else { (zb, za) };
        if z < lo || z > hi {
            return Err(MapError::InvalidGrid(format!("z = {z} outside the {} arc [{lo}, {hi}]", branch.as_str())));
        }
        let (mut a, mut b) = (s_a, s_b);
        let increasing = zb > za;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let zm = self.point_at(m)[1];
            if (zm < z) == increasing {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() < 1e-14 {
                break;
            }
        }
        let s = 0.5 * (a + b);
        let mut pt = self.point_at(s);
        pt[1] = z;
        Ok(pt)
    }

    /// `[z_min, z_max]` of one branch.
    pub fn branch_domain(&self, branch: Branch) -> (f64, f64) {
        let zs = match branch {
            Branch::Upper => [self.extremum[1], self.z_fold],
            _ => [self.extremum[1], self.end[1]],
        };
        (zs[0].min(zs[1]), zs[0].max(zs[1]))
    }
}

/// Track `gamma_s` from `p_+` into `C^r` by integrating the arclength-normalized,
/// time-reversed desingularized flow from a seed on the strong eigendirection.
pub fn strong_canard(p: &KoperParams, opts: &MapOptions) -> Result<CanardCurve, MapError> {
    if !(p.lambda > LAMBDA_FSN && p.lambda < LAMBDA_NODE_FOCUS) {
        return Err(KoperError::OutOfRangeLambda(p.lambda).into());
    }
    if !(opts.canard_arc_step > 0.0) {
        return Err(MapError::InvalidGrid("arclength step must be positive".into()));
    }
    let strong_x = strong_eigenvector_x(p.lambda)?;
    let z_fold = folded_singularity_z(p, FoldSign::Plus);
    let d0 = opts.canard_seed_offset;
    let seed = [1.0 - d0 * strong_x, z_fold - d0];

    let params = *p;
    let rhs = move |_s: f64, v: &[f64], dv: &mut [f64]| {
        let f = desingularized_slow_flow([v[0], v[1]], &params);
        let norm = f[0].hypot(f[1]);
        dv[0] = -f[0] / norm;
        dv[1] = -f[1] / norm;
    };
    let lambda = p.lambda;
    let events = [
        EventSpec::section(0, -1.0, Direction::Falling),
        EventSpec::section(0, 1.0, Direction::Rising),
        // z' vanishes on C^r exactly where lambda + c(x) - z = 0
        EventSpec::new(move |v: &[f64]| lambda + cubic(v[0]) - v[1], Direction::Any, false),
    ];
    let solver = SolverOptions {
        max_step: opts.canard_arc_step.min(opts.solver.max_step),
        ..opts.solver
    };
    let problem = OdeProblem::new(rhs, 0.0, seed.to_vec()).with_options(solver);
    let sol = solve_adaptive(&problem, opts.canard_max_arclength, &events)?;
    let path = sol.trajectory;
    let last = path.last_state().to_vec();
    if sol.terminated_by.is_none() {
        return Err(MapError::CanardEscape { x: last[0], z: last[1] });
    }
    let extrema: Vec<_> = sol.events.iter().filter(|e| e.event == 2).collect();
    if extrema.len() != 1 {
        return Err(MapError::BranchMismatch(format!(
            "expected exactly one z-extremum on the canard, found {}",
            extrema.len()
        )));
    }
    let ext = extrema[0];
    let s_end = path.last_time();
    let n = (s_end / opts.canard_arc_step).floor() as usize;
    let mut samples = Vec::with_capacity(n + 2);
    let mut arclength = Vec::with_capacity(n + 2);
    for i in 0..=n {
        let s = i as f64 * opts.canard_arc_step;
        let v = path.interpolate(s.min(s_end)).expect("inside curve");
        samples.push([v[0], v[1]]);
        arclength.push(s);
    }
    if *arclength.last().unwrap() < s_end {
        samples.push([last[0], last[1]]);
        arclength.push(s_end);
    }
    Ok(CanardCurve {
        lambda: p.lambda,
        samples,
        arclength,
        strong_x,
        z_fold,
        s_extremum: ext.t,
        extremum: [ext.y[0], ext.y[1]],
        s_end,
        end: [last[0], last[1]],
        seed,
        path,
    })
}

fn compute_canard_map<F>(map_id: MapId, p: &KoperParams, canard: &CanardCurve, opts: &MapOptions, f: F) -> Result<MapSample, MapError>
where
    F: Fn(f64, f64) -> Result<f64, MapError> + Sync,
{
    if canard.lambda != p.lambda {
        return Err(MapError::BranchMismatch(format!(
            "canard computed at lambda = {} used at lambda = {}",
            canard.lambda, p.lambda
        )));
    }
    let mut entries = Vec::new();
    for branch in [Branch::Upper, Branch::Lower] {
        let (lo, hi) = canard.branch_domain(branch);
        let grid = uniform_grid(lo, hi, opts.n_points);
        let points: Vec<[f64; 2]> = grid.iter().map(|&z| canard.point_at_z(branch, z)).collect::<Result<_, _>>()?;
        let mut out: Vec<MapSampleEntry> = points
            .par_iter()
            .map(|pt| {
                let (status, z_out) = match f(pt[0], pt[1]) {
                    Ok(v) if v.is_finite() => (SampleStatus::Ok, v),
                    Ok(_) => (SampleStatus::Failed, f64::NAN),
                    Err(e) => (SampleStatus::from_error(&e), f64::NAN),
                };
                MapSampleEntry {
                    branch,
                    z_in: pt[1],
                    z_out,
                    status,
                }
            })
            .collect();
        entries.append(&mut out);
    }
    Ok(MapSample {
        map_id,
        lambda: p.lambda,
        entries,
    })
}

pub fn compute_m_f(p: &KoperParams, canard: &CanardCurve, opts: &MapOptions) -> Result<MapSample, MapError> {
    compute_canard_map(MapId::Mf, p, canard, opts, |x, z| m_f_point(p, x, z, opts))
}

pub fn compute_m_b(p: &KoperParams, canard: &CanardCurve, opts: &MapOptions) -> Result<MapSample, MapError> {
    compute_canard_map(MapId::Mb, p, canard, opts, |x, z| m_b_point(p, x, z, opts))
}

/// Compute one map on its default domain (the canard is computed when needed).
pub fn compute_map(map_id: MapId, p: &KoperParams, opts: &MapOptions) -> Result<MapSample, MapError> {
    match map_id {
        MapId::Mj => compute_m_j(p, &default_regular_grid(p, opts), opts),
        MapId::MaPlus => compute_m_a_plus(p, &default_regular_grid(p, opts), opts),
        MapId::Mf => compute_m_f(p, &strong_canard(p, opts)?, opts),
        MapId::Mb => compute_m_b(p, &strong_canard(p, opts)?, opts),
    }
}

/// Linearized fold-region map `m_s: L^mu -> F+`:
/// `2 lambda + 6` inside the funnel (`z >= z^mu`), else `z - mu / Sigma_s^x`.
pub fn m_s_eval(z: f64, p: &KoperParams) -> Result<f64, MapError> {
    let z_mu = funnel_boundary_z(p)?;
    if z >= z_mu {
        Ok(folded_singularity_z(p, FoldSign::Plus))
    } else {
        Ok(z - p.mu / strong_eigenvector_x(p.lambda)?)
    }
}

//! Global return maps built from fitted singular maps.
//!
//! The relaxation return is `m_s ∘ m_{a,+} ∘ m_j` on `F+ ∩ {z <= 2 lambda + 6}`.
//! Its funnel margin at the folded node decides whether the node is mapped back
//! into the funnel; the sign change of that margin in `lambda` is the onset `lambda_r`
//! of relaxation oscillations.

use rayon::prelude::*;
use thiserror::Error;

use crate::koper::{folded_singularity_z, funnel_boundary_z, strong_eigenvector_x, FoldSign, KoperError, KoperParams};
use crate::map_fit::{fit_piecewise, FitError, PiecewisePolyMap};
use crate::singular_maps::{
    compute_m_a_plus, compute_m_f, compute_m_j, default_regular_grid, m_a_plus_point, m_j_point, strong_canard, Branch, MapError, MapId,
    MapOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Koper(#[from] KoperError),
    #[error("argument {z} outside the domain of stage {stage}")]
    OutOfDomain { stage: usize, z: f64 },
    #[error("no sign change on [{a}, {b}] (f = {fa}, {fb})")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
}

/// Slack when testing membership in a fitted domain, to absorb rounding in
/// stage outputs that land exactly on a domain edge.
const DOMAIN_SLACK: f64 = 1e-12;

/// One stage of a composite map.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Identity,
    /// One branch of a fitted map, evaluated only inside its domain.
    Fitted { map: PiecewisePolyMap, branch: Branch },
    /// The closed-form fold-region map `m_s`.
    FoldRegion(KoperParams),
}

/// Value, derivative and whether `m_s` took the funnel branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageValue {
    pub value: f64,
    pub derivative: f64,
    pub in_funnel: bool,
}

impl Stage {
    pub fn fitted(map: PiecewisePolyMap) -> Self {
        let branch = map.pieces[0].branch;
        Stage::Fitted { map, branch }
    }

    fn eval(&self, z: f64) -> Option<StageValue> {
        match self {
            Stage::Identity => Some(StageValue {
                value: z,
                derivative: 1.0,
                in_funnel: false,
            }),
            Stage::Fitted { map, branch } => {
                let piece = map.piece(*branch)?;
                if z < piece.domain[0] - DOMAIN_SLACK || z > piece.domain[1] + DOMAIN_SLACK {
                    return None;
                }
                Some(StageValue {
                    value: piece.eval(z),
                    derivative: piece.derivative(z),
                    in_funnel: false,
                })
            }
            Stage::FoldRegion(p) => {
                let z_mu = funnel_boundary_z(p).ok()?;
                if z >= z_mu {
                    Some(StageValue {
                        value: folded_singularity_z(p, FoldSign::Plus),
                        derivative: 0.0,
                        in_funnel: true,
                    })
                } else {
                    Some(StageValue {
                        value: z - p.mu / strong_eigenvector_x(p.lambda).ok()?,
                        derivative: 1.0,
                        in_funnel: false,
                    })
                }
            }
        }
    }
}

/// Stages applied left to right on `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMap {
    pub stages: Vec<Stage>,
    pub domain: [f64; 2],
}

impl CompositeMap {
    pub fn new(stages: Vec<Stage>, domain: [f64; 2]) -> Self {
        Self { stages, domain }
    }

    /// Value, chain-rule derivative, and whether any stage took a funnel branch.
    pub fn eval_detail(&self, z: f64) -> Result<StageValue, AnalysisError> {
        if z < self.domain[0] - DOMAIN_SLACK || z > self.domain[1] + DOMAIN_SLACK {
            return Err(AnalysisError::OutOfDomain { stage: 0, z });
        }
        let mut acc = StageValue {
            value: z,
            derivative: 1.0,
            in_funnel: false,
        };
        for (i, stage) in self.stages.iter().enumerate() {
            let v = stage.eval(acc.value).ok_or(AnalysisError::OutOfDomain { stage: i, z: acc.value })?;
            acc = StageValue {
                value: v.value,
                derivative: acc.derivative * v.derivative,
                in_funnel: acc.in_funnel || v.in_funnel,
            };
        }
        Ok(acc)
    }
}

pub fn compose_and_eval(stages: &CompositeMap, z: f64) -> Result<f64, AnalysisError> {
    stages.eval_detail(z).map(|v| v.value)
}

/// Fitted `m_j` and `m_{a,+}` at one `lambda`, plus direct trajectory evaluation.
#[derive(Debug, Clone)]
pub struct ReturnMapModel {
    pub params: KoperParams,
    pub opts: MapOptions,
    pub m_j: PiecewisePolyMap,
    pub m_a_plus: PiecewisePolyMap,
}

impl ReturnMapModel {
    pub fn build(params: &KoperParams, opts: &MapOptions) -> Result<Self, AnalysisError> {
        let grid = default_regular_grid(params, opts);
        let (j, a) = rayon::join(
            || -> Result<PiecewisePolyMap, AnalysisError> {
                let s = compute_m_j(params, &grid, opts)?;
                Ok(fit_piecewise(&s, MapId::Mj.model_degrees())?)
            },
            || -> Result<PiecewisePolyMap, AnalysisError> {
                let s = compute_m_a_plus(params, &grid, opts)?;
                Ok(fit_piecewise(&s, MapId::MaPlus.model_degrees())?)
            },
        );
        Ok(Self {
            params: *params,
            opts: *opts,
            m_j: j?,
            m_a_plus: a?,
        })
    }

    /// Domain `F+ ∩ {z <= 2 lambda + 6}` intersected with the fitted `m_j` domain.
    pub fn global_domain(&self) -> [f64; 2] {
        let d = self.m_j.pieces[0].domain;
        [d[0], d[1].min(folded_singularity_z(&self.params, FoldSign::Plus))]
    }

    /// `m_{a,+} ∘ m_j`.
    pub fn global_map(&self) -> CompositeMap {
        CompositeMap::new(
            vec![Stage::fitted(self.m_j.clone()), Stage::fitted(self.m_a_plus.clone())],
            self.global_domain(),
        )
    }

    /// `m_s ∘ m_{a,+} ∘ m_j`.
    pub fn relaxation_return(&self) -> CompositeMap {
        let mut c = self.global_map();
        c.stages.push(Stage::FoldRegion(self.params));
        c
    }

    /// `m_{a,+}(m_j(z))` from trajectories, bypassing the fits.
    pub fn direct_global(&self, z: f64) -> Result<f64, AnalysisError> {
        let zj = m_j_point(&self.params, z, &self.opts)?;
        Ok(m_a_plus_point(&self.params, zj, &self.opts)?)
    }

    pub fn funnel_margin(&self, z: f64) -> Result<FunnelEntry, AnalysisError> {
        let z_at = compose_and_eval(&self.global_map(), z)?;
        Ok(FunnelEntry::new(z, z_at, funnel_boundary_z(&self.params)?))
    }

    pub fn funnel_margin_direct(&self, z: f64) -> Result<FunnelEntry, AnalysisError> {
        let z_at = self.direct_global(z)?;
        Ok(FunnelEntry::new(z, z_at, funnel_boundary_z(&self.params)?))
    }
}

/// Where a point of `F+` lands on `L^mu`, relative to the funnel boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunnelEntry {
    pub z_in: f64,
    pub z_at_l_mu: f64,
    /// `z_at_l_mu - z^mu`; positive inside the funnel.
    pub margin: f64,
}

impl FunnelEntry {
    fn new(z_in: f64, z_at_l_mu: f64, z_mu: f64) -> Self {
        Self {
            z_in,
            z_at_l_mu,
            margin: z_at_l_mu - z_mu,
        }
    }

    pub fn inside_funnel(&self) -> bool {
        self.margin > 0.0
    }
}

/// Funnel margin of `z` on the fitted return map built at `params`.
pub fn funnel_margin(params: &KoperParams, z: f64, opts: &MapOptions) -> Result<FunnelEntry, AnalysisError> {
    ReturnMapModel::build(params, opts)?.funnel_margin(z)
}

/// Margin of the folded node `z = 2 lambda + 6`, the defining function of `lambda_r`.
pub fn node_margin(base: &KoperParams, lambda: f64, opts: &MapOptions, direct: bool) -> Result<f64, AnalysisError> {
    let p = KoperParams { lambda, ..*base };
    let model = ReturnMapModel::build(&p, opts)?;
    let z = folded_singularity_z(&p, FoldSign::Plus);
    let e = if direct { model.funnel_margin_direct(z)? } else { model.funnel_margin(z)? };
    Ok(e.margin)
}

/// Root of `f` on a sign-changing bracket: bisection down to `1e-4 (b - a)`,
/// then bracket-safeguarded secant steps until `|f| <= ftol`.
pub fn bracketed_root<F>(mut f: F, a: f64, b: f64, ftol: f64) -> Result<(f64, f64), AnalysisError>
where
    F: FnMut(f64) -> Result<f64, AnalysisError>,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok((a, fa));
    }
    if fb == 0.0 {
        return Ok((b, fb));
    }
    if fa.signum() == fb.signum() {
        return Err(AnalysisError::NoSignChange { a, b, fa, fb });
    }
    let width = 1e-4 * (b - a).abs();
    while (b - a).abs() > width {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm.abs() <= ftol {
            return Ok((m, fm));
        }
        if fm.signum() == fa.signum() {
            (a, fa) = (m, fm);
        } else {
            (b, fb) = (m, fm);
        }
    }
    for _ in 0..100 {
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        if fx.abs() <= ftol || (b - a).abs() < 1e-15 * b.abs().max(1.0) {
            return Ok((x, fx));
        }
        if fx.signum() == fa.signum() {
            (a, fa) = (x, fx);
        } else {
            (b, fb) = (x, fx);
        }
    }
    let (x, fx) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    Ok((x, fx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRResult {
    /// Onset located on the fitted maps.
    pub lambda_r: f64,
    pub margin: f64,
    /// Onset located with direct trajectory evaluation.
    pub lambda_r_direct: f64,
    pub margin_direct: f64,
}

/// Locate `lambda_r`, the `lambda` at which the folded node is mapped onto the
/// funnel boundary. Maps are recomputed and re-fitted at every probe.
pub fn find_lambda_r(base: &KoperParams, bracket: [f64; 2], opts: &MapOptions) -> Result<LambdaRResult, AnalysisError> {
    let (lambda_r, margin) = bracketed_root(|l| node_margin(base, l, opts, false), bracket[0], bracket[1], 1e-6)?;
    let (lambda_r_direct, margin_direct) = bracketed_root(|l| node_margin(base, l, opts, true), bracket[0], bracket[1], 1e-6)?;
    Ok(LambdaRResult {
        lambda_r,
        margin,
        lambda_r_direct,
        margin_direct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointResult {
    pub z_star: f64,
    pub derivative: f64,
    /// `|derivative| < 1`; one-sided when `on_domain_boundary` is set.
    pub stable: bool,
    pub on_domain_boundary: bool,
}

pub const FIXED_POINT_SCAN: usize = 400;

/// Fixed points of a composite map, excluding points sent to the folded node by
/// the funnel branch of `m_s` (those return to the node, not to themselves).
pub fn fixed_points(composite: &CompositeMap) -> Vec<FixedPointResult> {
    let [lo, hi] = composite.domain;
    let len = hi - lo;
    let g = |z: f64| -> Option<f64> {
        composite
            .eval_detail(z)
            .ok()
            .filter(|v| !v.in_funnel)
            .map(|v| v.value - z)
    };
    let grid: Vec<f64> = (0..FIXED_POINT_SCAN)
        .map(|i| if i == FIXED_POINT_SCAN - 1 { hi } else { lo + len * i as f64 / (FIXED_POINT_SCAN - 1) as f64 })
        .collect();
    let values: Vec<Option<f64>> = grid.par_iter().map(|&z| g(z)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if values[i] == Some(0.0) {
            roots.push(grid[i]);
            continue;
        }
        if i + 1 == grid.len() {
            break;
        }
        let (Some(ga), Some(gb)) = (values[i], values[i + 1]) else { continue };
        if gb == 0.0 || ga.signum() == gb.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (grid[i], grid[i + 1], ga);
        let mut valid = true;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            let Some(fm) = g(m) else {
                valid = false;
                break;
            };
            if fm == 0.0 {
                (a, b) = (m, m);
                break;
            }
            if fm.signum() == fa.signum() {
                (a, fa) = (m, fm);
            } else {
                b = m;
            }
            if b - a <= 1e-14 * m.abs().max(1.0) {
                break;
            }
        }
        let z = 0.5 * (a + b);
        // a jump of g (branch switch) brackets a sign change without a root
        if valid && g(z).is_some_and(|v| v.abs() <= 1e-8) {
            roots.push(z);
        }
    }
    roots
        .into_iter()
        .filter_map(|z| {
            let v = composite.eval_detail(z).ok()?;
            let on_domain_boundary = (z - lo).min(hi - z) <= 0.01 * len;
            Some(FixedPointResult {
                z_star: z,
                derivative: v.derivative,
                stable: v.derivative.abs() < 1.0,
                on_domain_boundary,
            })
        })
        .collect()
}

/// How `m_{a,+} ∘ m_f` sends jump-forward canard points relative to the funnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CanardSplit {
    pub inside: usize,
    pub outside: usize,
    pub undefined: usize,
}

/// Classify the `m_f` images of the strong canard by their funnel margin after `m_{a,+}`.
pub fn canard_funnel_split(params: &KoperParams, opts: &MapOptions) -> Result<CanardSplit, AnalysisError> {
    let canard = strong_canard(params, opts)?;
    let mf = compute_m_f(params, &canard, opts)?;
    let z_mu = funnel_boundary_z(params)?;
    let margins: Vec<Option<f64>> = mf
        .entries
        .par_iter()
        .map(|e| {
            if !e.is_ok() {
                return None;
            }
            m_a_plus_point(params, e.z_out, opts).ok().map(|z| z - z_mu)
        })
        .collect();
    let mut split = CanardSplit::default();
    for m in margins {
        match m {
            Some(m) if m > 0.0 => split.inside += 1,
            Some(_) => split.outside += 1,
            None => split.undefined += 1,
        }
    }
    Ok(split)
}

//! The Koper model
//!
//! ```text
//! eps1 x' = y - x^3 + 3x
//!      y' = k x - 2 (y + lambda) + z
//!      z' = eps2 (lambda + y - z)
//! ```
//!
//! together with its critical manifold `y = c(x) = x^3 - 3x`, the
//! desingularized slow flow in `(x, z)` coordinates and the folded
//! singularities `p_± = (±1, 2 lambda ∓ (4 + k))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower end of the folded-node window (folded saddle-node of type II).
pub const LAMBDA_FSN: f64 = -8.0;
/// Upper end of the folded-node window (node/focus transition).
pub const LAMBDA_NODE_FOCUS: f64 = -23.0 / 6.0;
/// The value of `k` for which the closed-form eigendata hold.
pub const K_STANDARD: f64 = -10.0;

const RADICAND_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoperError {
    #[error("eps1 = 0: the full vector field is singular, use the slow subsystem instead")]
    DivisionByZeroEps,
    #[error("closed-form eigendata require k = -10 (got k = {0}); use the numeric linearization")]
    UnsupportedK(f64),
    #[error("lambda = {0} lies outside the folded-node window [-8, -23/6]")]
    OutOfRangeLambda(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KoperParams {
    pub eps1: f64,
    pub eps2: f64,
    pub k: f64,
    pub lambda: f64,
    /// Offset of the section `L^mu = {x = 1 + mu}`.
    pub mu: f64,
}

impl Default for KoperParams {
    fn default() -> Self {
        Self {
            eps1: 0.0,
            eps2: 1.0,
            k: K_STANDARD,
            lambda: -7.0,
            mu: 0.1,
        }
    }
}

impl KoperParams {
    /// Singular limit (`eps1 = 0`) with `k = -10`, `eps2 = 1`.
    pub fn singular(lambda: f64, mu: f64) -> Self {
        Self {
            lambda,
            mu,
            ..Self::default()
        }
    }

    pub fn with_eps(mut self, eps1: f64) -> Self {
        self.eps1 = eps1;
        self
    }

    /// `sqrt(-23 - 6 lambda)`, the square root in every closed-form eigenvalue.
    pub fn node_radicand(&self) -> f64 {
        -23.0 - 6.0 * self.lambda
    }

    pub fn in_node_window(&self) -> bool {
        (LAMBDA_FSN..=LAMBDA_NODE_FOCUS).contains(&self.lambda)
    }
}

/// The cubic `c(x) = x^3 - 3x` defining the critical manifold.
#[inline]
pub fn cubic(x: f64) -> f64 {
    x * x * x - 3.0 * x
}

#[inline]
pub fn cubic_prime(x: f64) -> f64 {
    3.0 * x * x - 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sheet {
    CaMinus,
    FMinus,
    Cr,
    FPlus,
    CaPlus,
}

impl Sheet {
    pub fn of(x: f64) -> Self {
        if x < -1.0 {
            Sheet::CaMinus
        } else if x == -1.0 {
            Sheet::FMinus
        } else if x < 1.0 {
            Sheet::Cr
        } else if x == 1.0 {
            Sheet::FPlus
        } else {
            Sheet::CaPlus
        }
    }

    pub fn is_attracting(self) -> bool {
        matches!(self, Sheet::CaMinus | Sheet::CaPlus)
    }
}

/// A point `(x, c(x), z)` on the critical manifold, stored in `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalManifoldPoint {
    pub x: f64,
    pub z: f64,
    pub sheet: Sheet,
}

impl CriticalManifoldPoint {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z, sheet: Sheet::of(x) }
    }

    pub fn y(&self) -> f64 {
        cubic(self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldSign {
    Plus,
    Minus,
}

impl FoldSign {
    pub fn x(self) -> f64 {
        match self {
            FoldSign::Plus => 1.0,
            FoldSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldedSingularityKind {
    FoldedSaddle,
    /// Folded saddle-node of type II (`lambda = -8`).
    FsnII,
    FoldedNode,
    /// Double eigenvalue at the node/focus transition (`lambda = -23/6`).
    DegenerateNode,
    FoldedFocus,
}

impl FoldedSingularityKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::FoldedSaddle => "folded saddle",
            Self::FsnII => "folded saddle-node (type II)",
            Self::FoldedNode => "folded node",
            Self::DegenerateNode => "degenerate folded node (node/focus transition)",
            Self::FoldedFocus => "folded focus",
        }
    }
}

/// Location and linearization of a folded singularity. Eigenvectors are
/// normalised so that their `z` component is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldedSingularityInfo {
    pub location: CriticalManifoldPoint,
    /// Weak eigenvalue (real part for a focus).
    pub sigma_w: f64,
    /// Strong eigenvalue (real part for a focus).
    pub sigma_s: f64,
    /// Imaginary part magnitude; zero unless the singularity is a focus.
    pub sigma_imag: f64,
    pub weak_x: Option<f64>,
    pub strong_x: Option<f64>,
    pub kind: FoldedSingularityKind,
}

/// Full Koper vector field in slow time.
pub fn full_vector_field(state: [f64; 3], p: &KoperParams) -> Result<[f64; 3], KoperError> {
    if p.eps1 == 0.0 {
        return Err(KoperError::DivisionByZeroEps);
    }
    Ok(full_vector_field_unchecked(state, p))
}

#[inline]
pub(crate) fn full_vector_field_unchecked([x, y, z]: [f64; 3], p: &KoperParams) -> [f64; 3] {
    [
        (y - x * x * x + 3.0 * x) / p.eps1,
        p.k * x - 2.0 * (y + p.lambda) + z,
        p.eps2 * (p.lambda + y - z),
    ]
}

/// Desingularized slow flow on the critical manifold. Orientation is reversed
/// relative to the true slow flow on the repelling sheet `|x| < 1`.
#[inline]
pub fn desingularized_slow_flow([x, z]: [f64; 2], p: &KoperParams) -> [f64; 2] {
    let c = cubic(x);
    [p.k * x - 2.0 * (c + p.lambda) + z, cubic_prime(x) * (p.lambda + c - z)]
}

/// `z` coordinate of `p_±`.
pub fn folded_singularity_z(p: &KoperParams, sign: FoldSign) -> f64 {
    match sign {
        FoldSign::Plus => 2.0 * p.lambda - (4.0 + p.k),
        FoldSign::Minus => 2.0 * p.lambda + (4.0 + p.k),
    }
}

/// Closed-form classification for `k = -10` at `p_+`.
pub fn classify_folded_singularity(lambda: f64) -> FoldedSingularityKind {
    let radicand = -23.0 - 6.0 * lambda;
    if lambda < LAMBDA_FSN {
        FoldedSingularityKind::FoldedSaddle
    } else if lambda == LAMBDA_FSN {
        FoldedSingularityKind::FsnII
    } else if radicand.abs() <= RADICAND_ZERO_TOL {
        FoldedSingularityKind::DegenerateNode
    } else if radicand > 0.0 {
        FoldedSingularityKind::FoldedNode
    } else {
        FoldedSingularityKind::FoldedFocus
    }
}

fn kind_from_eigen(det: f64, disc: f64) -> FoldedSingularityKind {
    if det < 0.0 {
        FoldedSingularityKind::FoldedSaddle
    } else if det == 0.0 {
        FoldedSingularityKind::FsnII
    } else if disc.abs() <= RADICAND_ZERO_TOL {
        FoldedSingularityKind::DegenerateNode
    } else if disc > 0.0 {
        FoldedSingularityKind::FoldedNode
    } else {
        FoldedSingularityKind::FoldedFocus
    }
}

/// Closed-form eigendata at `p_±` (requires `k = -10`). For `p_-` the formulas
/// follow from the model symmetry with `lambda -> -lambda`.
pub fn folded_singularity(p: &KoperParams, sign: FoldSign) -> Result<FoldedSingularityInfo, KoperError> {
    if p.k != K_STANDARD {
        return Err(KoperError::UnsupportedK(p.k));
    }
    let lam = match sign {
        FoldSign::Plus => p.lambda,
        FoldSign::Minus => -p.lambda,
    };
    let location = CriticalManifoldPoint::new(sign.x(), folded_singularity_z(p, sign));
    let radicand = -23.0 - 6.0 * lam;
    let kind = classify_folded_singularity(lam);
    let info = if radicand >= -RADICAND_ZERO_TOL {
        let r = radicand.max(0.0).sqrt();
        FoldedSingularityInfo {
            location,
            sigma_w: -5.0 + r,
            sigma_s: -5.0 - r,
            sigma_imag: 0.0,
            weak_x: Some(1.0 / (5.0 + r)),
            strong_x: Some(strong_x_stable(lam, r)),
            kind,
        }
    } else {
        FoldedSingularityInfo {
            location,
            sigma_w: -5.0,
            sigma_s: -5.0,
            sigma_imag: (-radicand).sqrt(),
            weak_x: None,
            strong_x: None,
            kind,
        }
    };
    Ok(info)
}

/// Jacobian of the desingularized slow flow at `p_±`, valid for any `k`.
pub fn fold_linearization(p: &KoperParams, sign: FoldSign) -> [[f64; 2]; 2] {
    let x = sign.x();
    let z = folded_singularity_z(p, sign);
    // d/dx of the second component reduces to 6x (lambda + c(x) - z) on the fold.
    [[p.k, 1.0], [6.0 * x * (p.lambda + cubic(x) - z), 0.0]]
}

/// Eigendata of `fold_linearization` by direct 2x2 eigensolve, for any `k`.
pub fn folded_singularity_numeric(p: &KoperParams, sign: FoldSign) -> FoldedSingularityInfo {
    let a = fold_linearization(p, sign);
    let trace = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = 0.25 * trace * trace - det;
    let location = CriticalManifoldPoint::new(sign.x(), folded_singularity_z(p, sign));
    let kind = kind_from_eigen(det, disc);
    if disc >= 0.0 {
        let r = disc.sqrt();
        let (sw, ss) = (0.5 * trace + r, 0.5 * trace - r);
        // (k - sigma) v_x + v_z = 0 with v_z = 1
        let vx = |s: f64| 1.0 / (s - a[0][0]);
        FoldedSingularityInfo {
            location,
            sigma_w: sw,
            sigma_s: ss,
            sigma_imag: 0.0,
            weak_x: Some(vx(sw)),
            strong_x: Some(vx(ss)),
            kind,
        }
    } else {
        FoldedSingularityInfo {
            location,
            sigma_w: 0.5 * trace,
            sigma_s: 0.5 * trace,
            sigma_imag: (-disc).sqrt(),
            weak_x: None,
            strong_x: None,
            kind,
        }
    }
}

/// `x` component of the strong eigenvector at `p_+`, `1 / (5 - sqrt(-23 - 6 lambda))`.
pub fn strong_eigenvector_x(lambda: f64) -> Result<f64, KoperError> {
    let radicand = -23.0 - 6.0 * lambda;
    if !(LAMBDA_FSN..=LAMBDA_NODE_FOCUS).contains(&lambda) && radicand.abs() > RADICAND_ZERO_TOL {
        return Err(KoperError::OutOfRangeLambda(lambda));
    }
    Ok(strong_x_stable(lambda, radicand.max(0.0).sqrt()))
}

// 1 / (5 - r) rewritten as (5 + r) / (6 (8 + lambda)) to avoid cancellation near lambda = -8.
fn strong_x_stable(lambda: f64, r: f64) -> f64 {
    (5.0 + r) / (6.0 * (8.0 + lambda))
}

/// `z^mu(lambda)`: intersection of the strong eigendirection through `p_+`
/// with the section `L^mu`. Points of `L^mu` with `z >= z^mu` lie in the funnel.
pub fn funnel_boundary_z(p: &KoperParams) -> Result<f64, KoperError> {
    let radicand = p.node_radicand();
    if !p.in_node_window() && radicand.abs() > RADICAND_ZERO_TOL {
        return Err(KoperError::OutOfRangeLambda(p.lambda));
    }
    Ok(2.0 * p.lambda + 6.0 + p.mu * (5.0 - radicand.max(0.0).sqrt()))
}

/// The model symmetry `(x, y, z, lambda, k) -> (-x, -y, -z, -lambda, k)`.
pub fn apply_symmetry(state: [f64; 3], p: &KoperParams) -> ([f64; 3], KoperParams) {
    let [x, y, z] = state;
    let mut q = *p;
    q.lambda = -p.lambda;
    ([-x, -y, -z], q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(lambda: f64) -> KoperParams {
        KoperParams::singular(lambda, 0.1).with_eps(0.01)
    }

    #[test]
    fn origin_is_equilibrium_at_zero_lambda() {
        assert_eq!(full_vector_field([0.0, 0.0, 0.0], &params(0.0)).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn fold_points_have_no_fast_motion() {
        for z in [-10.0, -3.3, 0.0, 4.5] {
            assert_eq!(full_vector_field([1.0, -2.0, z], &params(-7.0)).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn zero_eps_is_rejected() {
        let p = KoperParams::singular(-7.0, 0.1);
        assert_eq!(full_vector_field([0.0; 3], &p), Err(KoperError::DivisionByZeroEps));
    }

    #[test]
    fn desingularized_flow_values() {
        let p = KoperParams::singular(-7.0, 0.1);
        assert_eq!(desingularized_slow_flow([2.0, -8.0], &p), [-18.0, 27.0]);
        for lam in [-7.9, -7.0, -5.0] {
            let p = KoperParams::singular(lam, 0.1);
            let zp = folded_singularity_z(&p, FoldSign::Plus);
            assert_eq!(desingularized_slow_flow([1.0, zp], &p), [0.0, 0.0]);
            let zm = folded_singularity_z(&p, FoldSign::Minus);
            assert_eq!(desingularized_slow_flow([-1.0, zm], &p), [0.0, 0.0]);
            assert_eq!(desingularized_slow_flow([1.0, 17.0], &p)[1], 0.0);
            assert_eq!(desingularized_slow_flow([-1.0, 17.0], &p)[1], 0.0);
        }
    }

    #[test]
    fn folded_node_eigendata_at_minus_seven() {
        let info = folded_singularity(&KoperParams::singular(-7.0, 0.1), FoldSign::Plus).unwrap();
        assert_eq!(info.location.x, 1.0);
        assert_eq!(info.location.z, -8.0);
        assert_eq!(info.location.sheet, Sheet::FPlus);
        let r = 19f64.sqrt();
        assert!((info.sigma_w - (-5.0 + r)).abs() < 1e-15);
        assert!((info.sigma_w - (-0.641101)).abs() < 1e-6);
        assert!((info.sigma_s - (-9.358899)).abs() < 1e-6);
        assert_eq!(info.kind, FoldedSingularityKind::FoldedNode);
        assert!((info.strong_x.unwrap() - 1.0 / (5.0 - r)).abs() < 1e-14);
    }

    #[test]
    fn boundary_kinds() {
        let info = folded_singularity(&KoperParams::singular(-23.0 / 6.0, 0.1), FoldSign::Plus).unwrap();
        assert_eq!((info.sigma_w, info.sigma_s), (-5.0, -5.0));
        assert_eq!(info.kind, FoldedSingularityKind::DegenerateNode);
        let info = folded_singularity(&KoperParams::singular(-8.0, 0.1), FoldSign::Plus).unwrap();
        assert_eq!(info.sigma_w, 0.0);
        assert_eq!(info.kind, FoldedSingularityKind::FsnII);
        assert_eq!(info.strong_x, Some(f64::INFINITY));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_folded_singularity(-9.0), FoldedSingularityKind::FoldedSaddle);
        assert_eq!(classify_folded_singularity(-8.0), FoldedSingularityKind::FsnII);
        assert_eq!(classify_folded_singularity(-5.0), FoldedSingularityKind::FoldedNode);
        assert_eq!(classify_folded_singularity(-3.0), FoldedSingularityKind::FoldedFocus);
    }

    #[test]
    fn unsupported_k_falls_back_to_numeric() {
        let mut p = KoperParams::singular(-7.0, 0.1);
        p.k = -8.0;
        assert_eq!(folded_singularity(&p, FoldSign::Plus), Err(KoperError::UnsupportedK(-8.0)));
        let info = folded_singularity_numeric(&p, FoldSign::Plus);
        let a = fold_linearization(&p, FoldSign::Plus);
        for (s, vx) in [(info.sigma_s, info.strong_x.unwrap()), (info.sigma_w, info.weak_x.unwrap())] {
            let r0 = a[0][0] * vx + a[0][1] - s * vx;
            let r1 = a[1][0] * vx + a[1][1] - s;
            assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_matches_closed_form_at_standard_k() {
        for lam in [-7.9, -7.0, -6.0, -4.0, -3.0, 2.0] {
            for sign in [FoldSign::Plus, FoldSign::Minus] {
                let p = KoperParams::singular(lam, 0.1);
                let a = folded_singularity(&p, sign).unwrap();
                let b = folded_singularity_numeric(&p, sign);
                assert_eq!(a.kind, b.kind, "lambda {lam} {sign:?}");
                assert!((a.sigma_s - b.sigma_s).abs() < 1e-12);
                assert!((a.sigma_w - b.sigma_w).abs() < 1e-12);
                assert!((a.sigma_imag - b.sigma_imag).abs() < 1e-12);
                if let (Some(x), Some(y)) = (a.strong_x, b.strong_x) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn strong_eigenvector_decreases_to_one_fifth() {
        let n = 1000;
        let mut prev = f64::INFINITY;
        for i in 1..=n {
            let lam = LAMBDA_FSN + (LAMBDA_NODE_FOCUS - LAMBDA_FSN) * i as f64 / n as f64;
            let v = strong_eigenvector_x(lam).unwrap();
            assert!(v < prev, "not decreasing at {lam}");
            prev = v;
        }
        assert!((strong_eigenvector_x(LAMBDA_NODE_FOCUS).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(strong_eigenvector_x(LAMBDA_FSN).unwrap(), f64::INFINITY);
        assert!(strong_eigenvector_x(-3.0).is_err());
    }

    #[test]
    fn funnel_boundary_values() {
        for lam in [-8.0, -7.3, -5.0] {
            assert_eq!(funnel_boundary_z(&KoperParams::singular(lam, 0.0)).unwrap(), 2.0 * lam + 6.0);
        }
        let z = funnel_boundary_z(&KoperParams::singular(-7.0, 0.1)).unwrap();
        assert!((z - (-8.0 + 0.1 * (5.0 - 19f64.sqrt()))).abs() < 1e-15);
        assert!((z - (-7.93589)).abs() < 1e-5);
        let z = funnel_boundary_z(&KoperParams::singular(LAMBDA_NODE_FOCUS, 0.1)).unwrap();
        // 2 lambda + 6 = -5/3 at the node/focus transition, radicand 0
        assert!((z - (-5.0 / 3.0 + 0.5)).abs() < 1e-12);
        assert_eq!(
            funnel_boundary_z(&KoperParams::singular(-2.0, 0.1)),
            Err(KoperError::OutOfRangeLambda(-2.0))
        );
    }

    #[test]
    fn symmetry_fixed_point() {
        let p = params(0.0);
        let (s, q) = apply_symmetry([0.0, 0.0, 0.0], &p);
        assert_eq!(s, [0.0, 0.0, 0.0]);
        assert_eq!(q.lambda, 0.0);
        assert_eq!(q.k, p.k);
    }

    #[test]
    fn sheets() {
        assert_eq!(CriticalManifoldPoint::new(-2.0, 0.0).sheet, Sheet::CaMinus);
        assert_eq!(CriticalManifoldPoint::new(-1.0, 0.0).sheet, Sheet::FMinus);
        assert_eq!(CriticalManifoldPoint::new(0.3, 0.0).sheet, Sheet::Cr);
        assert_eq!(CriticalManifoldPoint::new(1.0, 0.0).sheet, Sheet::FPlus);
        assert_eq!(CriticalManifoldPoint::new(1.5, 0.0).sheet, Sheet::CaPlus);
        assert_eq!(CriticalManifoldPoint::new(-2.0, 0.0).y(), -2.0);
    }

    proptest! {
        #[test]
        fn field_is_equivariant(x in -3.0..3.0f64, y in -5.0..5.0f64, z in -12.0..12.0f64, lam in -9.0..9.0f64) {
            let p = params(lam);
            let f = full_vector_field([x, y, z], &p).unwrap();
            let (s, q) = apply_symmetry([x, y, z], &p);
            let g = full_vector_field(s, &q).unwrap();
            for i in 0..3 {
                prop_assert!((g[i] + f[i]).abs() <= 1e-12 * (1.0 + f[i].abs()));
            }
        }

        #[test]
        fn strong_eigenpair_residual(lam in -7.999..-3.834f64) {
            let p = KoperParams::singular(lam, 0.1);
            let info = folded_singularity(&p, FoldSign::Plus).unwrap();
            let a = fold_linearization(&p, FoldSign::Plus);
            let vx = info.strong_x.unwrap();
            let r0 = a[0][0] * vx + a[0][1] - info.sigma_s * vx;
            let r1 = a[1][0] * vx + a[1][1] - info.sigma_s;
            // residual relative to the eigenvector length
            let norm = (vx * vx + 1.0).sqrt();
            prop_assert!(r0.abs() / norm <= 1e-12);
            prop_assert!(r1.abs() / norm <= 1e-12);
            prop_assert!(info.sigma_s < info.sigma_w && info.sigma_w < 0.0);
            prop_assert_eq!(info.kind, FoldedSingularityKind::FoldedNode);
        }
    }
}

//! Least-squares polynomial models of sampled singular maps.
//!
//! Single-branch maps get one polynomial. Canard maps get an upper and a lower
//! piece that are forced to agree at the breakpoint (the extremal `z` of the
//! strong canard). Error norms use composite Simpson quadrature on the sample
//! grid.

use thiserror::Error;

use crate::singular_maps::{Branch, MapId, MapSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("rank-deficient least-squares system (collinear or too few distinct z values)")]
    RankDeficient,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("unsupported polynomial degree {0}")]
    InvalidDegree(usize),
    #[error("branch structure mismatch: {0}")]
    BranchMismatch(String),
    #[error("empty domain")]
    EmptyDomain,
    #[error("lambda grid must be strictly increasing")]
    NonIncreasingGrid,
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// One polynomial piece in ascending-power coefficients of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPiece {
    pub branch: Branch,
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub domain: [f64; 2],
}

impl PolyPiece {
    pub fn eval(&self, z: f64) -> f64 {
        horner(&self.coeffs, z)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let d: Vec<f64> = self.coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        horner(&d, z)
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.domain[0] && z <= self.domain[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub e_l1: f64,
    pub e_l2: f64,
    pub e_linf: f64,
    pub n_samples: usize,
    /// Largest grid spacing over the branches.
    pub h: f64,
    /// Total length of the integration domains.
    pub domain_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolyMap {
    pub map_id: MapId,
    pub lambda: f64,
    pub pieces: Vec<PolyPiece>,
    pub breakpoint: Option<f64>,
    pub continuity_residual: f64,
    pub fit_report: FitReport,
}

impl PiecewisePolyMap {
    pub fn piece(&self, branch: Branch) -> Option<&PolyPiece> {
        self.pieces.iter().find(|p| p.branch == branch)
    }

    /// Evaluate one branch, or `None` outside its domain.
    pub fn eval_branch(&self, branch: Branch, z: f64) -> Option<f64> {
        self.piece(branch).filter(|p| p.contains(z)).map(|p| p.eval(z))
    }

    /// Evaluate the single piece of a one-branch map, ignoring its domain.
    pub fn eval_extrapolated(&self, z: f64) -> f64 {
        self.pieces[0].eval(z)
    }
}

/// Least-squares solution with its residuals `w_i - p(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub coeffs: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl PolyFit {
    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Solve a symmetric positive definite system in place by Cholesky.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, FitError> {
    let n = b.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 1e-13 * scale) {
            return Err(FitError::RankDeficient);
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    Ok(b)
}

/// Least squares for a design matrix given row by row; columns are scaled to
/// unit norm before forming the normal equations.
fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>, FitError> {
    let m = rows[0].len();
    let norms: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt()).collect();
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return Err(FitError::RankDeficient);
    }
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (r, &w) in rows.iter().zip(rhs) {
        for i in 0..m {
            let ri = r[i] / norms[i];
            atb[i] += ri * w;
            for j in 0..=i {
                ata[i][j] += ri * r[j] / norms[j];
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            ata[i][j] = ata[j][i];
        }
    }
    let x = cholesky_solve(ata, atb)?;
    Ok(x.iter().zip(&norms).map(|(x, n)| x / n).collect())
}

/// Coefficients of `q((z - c) / s)` in powers of `z`, given `q` in powers of `t`.
fn unshift(t_coeffs: &[f64], c: f64, s: f64) -> Vec<f64> {
    let n = t_coeffs.len();
    let mut out = vec![0.0; n];
    // (z - c)^k / s^k expanded binomially
    for (k, &a) in t_coeffs.iter().enumerate() {
        let ak = a / s.powi(k as i32);
        let mut binom = 1.0;
        for j in 0..=k {
            // coefficient of z^j in (z - c)^k is C(k, j) (-c)^(k-j)
            out[j] += ak * binom * (-c).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

fn check_degree(degree: usize) -> Result<(), FitError> {
    if (1..=4).contains(&degree) {
        Ok(())
    } else {
        Err(FitError::InvalidDegree(degree))
    }
}

/// Ordinary least-squares polynomial fit; coefficients in ascending powers of `z`.
pub fn fit_polynomial(samples: &[(f64, f64)], degree: usize) -> Result<PolyFit, FitError> {
    check_degree(degree)?;
    if samples.len() <= degree {
        return Err(FitError::TooFewPoints {
            needed: degree + 1,
            got: samples.len(),
        });
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.0), h.max(s.0)));
    let c = 0.5 * (lo + hi);
    let s = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(z, _)| {
            let t = (z - c) / s;
            (0..=degree).map(|k| t.powi(k as i32)).collect()
        })
        .collect();
    let w: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let coeffs = unshift(&least_squares(&rows, &w)?, c, s);
    let residuals = samples.iter().map(|&(z, w)| w - horner(&coeffs, z)).collect();
    Ok(PolyFit { coeffs, residuals })
}

fn domain_of(pairs: &[(f64, f64)]) -> [f64; 2] {
    pairs.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |d, p| [d[0].min(p.0), d[1].max(p.0)])
}

/// Fit a sampled map. Single-branch samples get one polynomial of `degrees.0`.
/// Two-branch samples get an upper piece of `degrees.0` and a lower piece of
/// `degrees.1` sharing their value at the breakpoint.
pub fn fit_piecewise(sample: &MapSample, degrees: (usize, usize)) -> Result<PiecewisePolyMap, FitError> {
    let branches = sample.branches();
    let (pieces, breakpoint, continuity_residual) = match branches.as_slice() {
        [Branch::Single] => {
            let pairs = sample.ok_pairs(Branch::Single);
            if pairs.is_empty() {
                return Err(FitError::EmptyDomain);
            }
            let fit = fit_polynomial(&pairs, degrees.0)?;
            let piece = PolyPiece {
                branch: Branch::Single,
                degree: degrees.0,
                coeffs: fit.coeffs,
                domain: domain_of(&pairs),
            };
            (vec![piece], None, 0.0)
        }
        [Branch::Upper, Branch::Lower] => {
            let bp = sample
                .breakpoint()
                .ok_or_else(|| FitError::BranchMismatch("upper and lower grids share no endpoint".into()))?;
            let upper = sample.ok_pairs(Branch::Upper);
            let lower = sample.ok_pairs(Branch::Lower);
            let (pu, pl) = fit_constrained(&upper, &lower, bp, degrees)?;
            let residual = (pu.eval(bp) - pl.eval(bp)).abs();
            (vec![pu, pl], Some(bp), residual)
        }
        other => return Err(FitError::BranchMismatch(format!("unsupported branch set {other:?}"))),
    };
    let mut map = PiecewisePolyMap {
        map_id: sample.map_id,
        lambda: sample.lambda,
        pieces,
        breakpoint,
        continuity_residual,
        fit_report: FitReport {
            e_l1: 0.0,
            e_l2: 0.0,
            e_linf: 0.0,
            n_samples: 0,
            h: 0.0,
            domain_length: 0.0,
        },
    };
    map.fit_report = error_norms(sample, &map)?;
    Ok(map)
}

/// Two polynomials in `t = (z - b) / s` with a shared constant term, which
/// makes them agree at `z = b` exactly.
fn fit_constrained(
    upper: &[(f64, f64)],
    lower: &[(f64, f64)],
    b: f64,
    (du, dl): (usize, usize),
) -> Result<(PolyPiece, PolyPiece), FitError> {
    check_degree(du)?;
    check_degree(dl)?;
    let n_unknowns = 1 + du + dl;
    if upper.len() + lower.len() < n_unknowns || upper.len() < du || lower.len() < dl {
        return Err(FitError::TooFewPoints {
            needed: n_unknowns,
            got: upper.len() + lower.len(),
        });
    }
    let s = upper
        .iter()
        .chain(lower)
        .map(|p| (p.0 - b).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut rows = Vec::with_capacity(upper.len() + lower.len());
    let mut rhs = Vec::with_capacity(rows.capacity());
    for (pairs, offset, deg) in [(upper, 1, du), (lower, 1 + du, dl)] {
        for &(z, w) in pairs {
            let t = (z - b) / s;
            let mut row = vec![0.0; n_unknowns];
            row[0] = 1.0;
            for k in 1..=deg {
                row[offset + k - 1] = t.powi(k as i32);
            }
            rows.push(row);
            rhs.push(w);
        }
    }
    let x = least_squares(&rows, &rhs)?;
    let mut tu = vec![x[0]];
    tu.extend_from_slice(&x[1..1 + du]);
    let mut tl = vec![x[0]];
    tl.extend_from_slice(&x[1 + du..]);
    let pu = PolyPiece {
        branch: Branch::Upper,
        degree: du,
        coeffs: unshift(&tu, b, s),
        domain: domain_of(upper),
    };
    let pl = PolyPiece {
        branch: Branch::Lower,
        degree: dl,
        coeffs: unshift(&tl, b, s),
        domain: domain_of(lower),
    };
    Ok((pu, pl))
}

/// Composite Simpson rule on a uniform grid. With an odd number of intervals
/// the last interval is added with the trapezoid rule.
pub fn simpson(values: &[f64], h: f64) -> Result<f64, FitError> {
    let n = values.len();
    if n < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: n });
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = 0.0;
    for i in (0..even).step_by(2) {
        acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
    }
    let mut total = acc * h / 3.0;
    if even < intervals {
        total += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    Ok(total)
}

/// Integral over a run of equally spaced samples; 2-point runs use the trapezoid rule.
fn integrate_run(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ => simpson(values, h).expect("at least three points"),
    }
}

/// Split sorted abscissae into maximal runs of (nearly) constant spacing.
fn uniform_runs(z: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    while start < z.len() {
        let mut end = start + 1;
        if end < z.len() {
            let h = z[end] - z[start];
            while end + 1 < z.len() && ((z[end + 1] - z[end]) - h).abs() <= 1e-9 * h.abs().max(1.0) {
                end += 1;
            }
            end += 1;
        }
        runs.push(start..end);
        start = end;
    }
    runs
}

/// `L1`, `L2` and `Linf` distances between numeric samples and a fitted map,
/// over the successfully sampled points of every branch.
pub fn error_norms(sample: &MapSample, fitted: &PiecewisePolyMap) -> Result<FitReport, FitError> {
    let (mut l1, mut l2sq, mut linf) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut n_samples, mut h_max, mut length) = (0usize, 0.0_f64, 0.0_f64);
    for branch in sample.branches() {
        let piece = fitted
            .piece(branch)
            .ok_or_else(|| FitError::BranchMismatch(format!("fit has no {} piece", branch.as_str())))?;
        let mut pairs = sample.ok_pairs(branch);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let z: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let err: Vec<f64> = pairs.iter().map(|&(z, w)| (w - piece.eval(z)).abs()).collect();
        for run in uniform_runs(&z) {
            if run.len() < 2 {
                continue;
            }
            let h = z[run.start + 1] - z[run.start];
            h_max = h_max.max(h);
            length += z[run.end - 1] - z[run.start];
            l1 += integrate_run(&err[run.clone()], h);
            let sq: Vec<f64> = err[run.clone()].iter().map(|e| e * e).collect();
            l2sq += integrate_run(&sq, h);
        }
        linf = err.iter().fold(linf, |m, &e| m.max(e));
        n_samples += err.len();
    }
    if n_samples == 0 {
        return Err(FitError::EmptyDomain);
    }
    Ok(FitReport {
        e_l1: l1,
        e_l2: l2sq.max(0.0).sqrt(),
        e_linf: linf,
        n_samples,
        h: h_max,
        domain_length: length,
    })
}

/// Polynomial fit of one coefficient family in `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFit {
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub rss: f64,
    pub max_residual: f64,
}

/// A fitted quantity (coefficient or domain bound) as a function of `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFamily {
    pub coefficient_id: String,
    pub lambda_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub poly_fits: Vec<FamilyFit>,
}

impl CoefficientFamily {
    pub fn fit(&self, degree: usize) -> Option<&FamilyFit> {
        self.poly_fits.iter().find(|f| f.degree == degree)
    }
}

fn piece_label(map_id: MapId, branch: Branch) -> String {
    format!("{}{}", map_id.letter(), branch.letter())
}

/// Fit every coefficient and domain bound of a set of per-`lambda` fits with
/// polynomials of degree 2, 3 and 4 in `lambda`.
pub fn fit_coefficient_family(lambda_grid: &[f64], fits: &[PiecewisePolyMap]) -> Result<Vec<CoefficientFamily>, FitError> {
    if lambda_grid.len() != fits.len() {
        return Err(FitError::BranchMismatch("one fit per lambda value is required".into()));
    }
    if lambda_grid.len() < 6 {
        return Err(FitError::TooFewPoints {
            needed: 6,
            got: lambda_grid.len(),
        });
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FitError::NonIncreasingGrid);
    }
    let first = &fits[0];
    let shape: Vec<(Branch, usize)> = first.pieces.iter().map(|p| (p.branch, p.degree)).collect();
    for f in fits {
        let s: Vec<(Branch, usize)> = f.pieces.iter().map(|p| (p.branch, p.degree)).collect();
        if f.map_id != first.map_id || s != shape {
            return Err(FitError::BranchMismatch("fits differ in map or piece structure".into()));
        }
    }
    let mut families = Vec::new();
    for (idx, &(branch, degree)) in shape.iter().enumerate() {
        let label = piece_label(first.map_id, branch);
        let mut series: Vec<(String, Vec<f64>)> = (0..=degree)
            .map(|k| (format!("c^{{{label}}}_{k}"), fits.iter().map(|f| f.pieces[idx].coeffs[k]).collect()))
            .collect();
        series.push((format!("z^{{{label}}}_min"), fits.iter().map(|f| f.pieces[idx].domain[0]).collect()));
        series.push((format!("z^{{{label}}}_max"), fits.iter().map(|f| f.pieces[idx].domain[1]).collect()));
        for (id, values) in series {
            let pairs: Vec<(f64, f64)> = lambda_grid.iter().copied().zip(values.iter().copied()).collect();
            let poly_fits = (2..=4)
                .map(|d| {
                    let fit = fit_polynomial(&pairs, d)?;
                    Ok(FamilyFit {
                        degree: d,
                        rss: fit.rss(),
                        max_residual: fit.max_abs_residual(),
                        coeffs: fit.coeffs,
                    })
                })
                .collect::<Result<Vec<_>, FitError>>()?;
            families.push(CoefficientFamily {
                coefficient_id: id,
                lambda_grid: lambda_grid.to_vec(),
                values,
                poly_fits,
            });
        }
    }
    Ok(families)
}

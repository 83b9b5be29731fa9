use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mmo_core::hybrid::{detect_chaos, extract_signature, run_hybrid, HybridOptions, HybridRun, LocalMapOptions, LocalModel};
use mmo_core::integrator::{solve_adaptive, Direction, EventSpec, OdeProblem, SolverOptions};
use mmo_core::io::{
    map_sample_file_name, read_map_sample_csv, write_json, write_map_sample_csv, write_return_log_csv, AnalysisReport, FitJson, FixedPointJson,
    FunnelMarginJson, SignatureReport,
};
use mmo_core::koper::{cubic, full_vector_field, folded_singularity_z, FoldSign, KoperParams};
use mmo_core::map_fit::{fit_coefficient_family, fit_piecewise, PiecewisePolyMap};
use mmo_core::mmo_analysis::{find_lambda_r, fixed_points, ReturnMapModel};
use mmo_core::singular_maps::{compute_map, compute_m_b, compute_m_f, strong_canard, MapId, MapOptions, MapSample};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{HybridRunConfig, KoperSimConfig, MapsComputeConfig, MapsFitConfig, MmoAnalyzeConfig};
use crate::CliError;

/// Output settings shared by all commands.
pub struct Output {
    pub dir: PathBuf,
    pub timestamp: Option<String>,
    pub quiet: bool,
}

impl Output {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::Io(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        write_json(&mut w, value).map_err(io_err)?;
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn map_options(n_points: usize, tol: f64) -> MapOptions {
    MapOptions {
        n_points,
        solver: SolverOptions::default().with_tol(tol),
        ..MapOptions::default()
    }
}

/// Small-oscillation counts following each large maximum of `x`. Counts before
/// the first large maximum and after the last one are dropped.
pub fn counts_from_maxima(maxima: &[f64], lao_threshold: f64) -> Vec<u32> {
    let mut counts: Vec<u32> = Vec::new();
    let mut started = false;
    for &x in maxima {
        if x > lao_threshold {
            counts.push(0);
            started = true;
        } else if started {
            *counts.last_mut().unwrap() += 1;
        }
    }
    counts.pop();
    counts
}

pub fn koper_sim(cfg: &KoperSimConfig, out: &Output) -> Result<(), CliError> {
    let p = cfg.params;
    let rhs = move |_t: f64, s: &[f64], ds: &mut [f64]| {
        let d = full_vector_field([s[0], s[1], s[2]], &p).expect("eps1 validated positive");
        ds.copy_from_slice(&d);
    };
    // x' is proportional to y - c(x); maxima of x are its falling zeros
    let maxima_event = EventSpec::new(|s: &[f64]| s[1] - cubic(s[0]), Direction::Falling, false);
    let opts = SolverOptions::default().with_tol(cfg.tol);
    let problem = OdeProblem::new(rhs, 0.0, cfg.initial.to_vec()).with_options(opts);
    let sol = solve_adaptive(&problem, cfg.t_end, &[maxima_event]).map_err(numerical)?;

    let mut w = out.create("koper_trajectory.csv")?;
    let mut write = || -> std::io::Result<()> {
        if let Some(ts) = &out.timestamp {
            writeln!(w, "# generated {ts}")?;
        }
        writeln!(w, "t,x,y,z")?;
        let n = (cfg.t_end / cfg.sample_dt).floor() as usize;
        for i in 0..=n {
            let t = (i as f64 * cfg.sample_dt).min(cfg.t_end);
            if let Some(s) = sol.trajectory.interpolate(t) {
                writeln!(w, "{t:.16e},{:.16e},{:.16e},{:.16e}", s[0], s[1], s[2])?;
            }
        }
        w.flush()
    };
    write().map_err(io_err)?;

    let maxima: Vec<f64> = sol.events.iter().map(|e| e.y[0]).collect();
    let counts = counts_from_maxima(&maxima, cfg.lao_threshold);
    let params = serde_json::to_value(p).map_err(io_err)?;
    let report = if counts.len() >= 2 {
        let max_period = cfg.max_period.min(counts.len() / 2).max(1);
        let sig = extract_signature(&counts, max_period, cfg.transient_fraction).map_err(numerical)?;
        SignatureReport::new(params, &sig)
    } else {
        SignatureReport {
            params,
            signature: None,
            period: None,
            aperiodic: false,
        }
    };
    out.note(format!(
        "koper-sim: {} maxima of x, signature {}",
        maxima.len(),
        report.signature.as_deref().unwrap_or(if counts.len() < 2 { "none (no large oscillations)" } else { "aperiodic" })
    ));
    out.json("koper_signature.json", &report)
}

pub fn maps_compute(cfg: &MapsComputeConfig, out: &Output) -> Result<(), CliError> {
    let opts = map_options(cfg.n_points, cfg.tol);
    let results: Vec<(f64, Vec<Result<MapSample, String>>)> = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let p = KoperParams {
                k: cfg.k,
                ..KoperParams::singular(lambda, cfg.mu)
            };
            let needs_canard = cfg.maps.iter().any(|m| m.is_canard_map());
            let canard = needs_canard.then(|| strong_canard(&p, &opts).map_err(|e| e.to_string()));
            let samples = cfg
                .maps
                .iter()
                .map(|&id| match (id, &canard) {
                    (MapId::Mf, Some(c)) => c.as_ref().map_err(Clone::clone).and_then(|c| compute_m_f(&p, c, &opts).map_err(|e| e.to_string())),
                    (MapId::Mb, Some(c)) => c.as_ref().map_err(Clone::clone).and_then(|c| compute_m_b(&p, c, &opts).map_err(|e| e.to_string())),
                    _ => compute_map(id, &p, &opts).map_err(|e| e.to_string()),
                })
                .collect();
            (lambda, samples)
        })
        .collect();

    let (mut written, mut ok_samples) = (0usize, 0usize);
    for (lambda, samples) in &results {
        for (id, sample) in cfg.maps.iter().zip(samples) {
            match sample {
                Ok(s) => {
                    let name = map_sample_file_name(*id, *lambda);
                    let mut w = out.create(&name)?;
                    write_map_sample_csv(&mut w, s, out.timestamp.as_deref()).map_err(io_err)?;
                    w.flush().map_err(io_err)?;
                    let ok = s.entries.iter().filter(|e| e.is_ok()).count();
                    ok_samples += ok;
                    written += 1;
                    out.note(format!("{name}: {ok}/{} samples ok", s.entries.len()));
                }
                Err(e) => out.note(format!("{} at lambda = {lambda}: {e}", id.as_str())),
            }
        }
    }
    if written == 0 || ok_samples == 0 {
        return Err(CliError::Numerical("no map could be sampled".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct FamilyFitJson {
    degree: usize,
    coeffs: Vec<f64>,
    rss: f64,
    max_residual: f64,
}

#[derive(Serialize)]
struct FamilyJson {
    coefficient_id: String,
    lambda_grid: Vec<f64>,
    values: Vec<f64>,
    fits: Vec<FamilyFitJson>,
}

fn fit_inputs(cfg: &MapsFitConfig) -> Result<Vec<PathBuf>, CliError> {
    if !cfg.inputs.is_empty() {
        return Ok(cfg.inputs.clone());
    }
    let dir = cfg
        .input_dir
        .as_ref()
        .ok_or_else(|| CliError::Config("maps-fit needs 'inputs' or 'input_dir'".into()))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("m_") && name.contains("_lambda_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no map sample files in {}", dir.display())));
    }
    Ok(files)
}

pub fn maps_fit(cfg: &MapsFitConfig, out: &Output) -> Result<(), CliError> {
    let files = fit_inputs(cfg)?;
    let samples: Vec<MapSample> = files
        .iter()
        .map(|path| {
            let f = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            read_map_sample_csv(BufReader::new(f)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let fits: Vec<PiecewisePolyMap> = samples
        .par_iter()
        .map(|s| fit_piecewise(s, s.map_id.model_degrees()).map_err(|e| CliError::Numerical(format!("{} at lambda = {}: {e}", s.map_id.as_str(), s.lambda))))
        .collect::<Result<_, _>>()?;

    let mut by_map: BTreeMap<&str, Vec<&PiecewisePolyMap>> = BTreeMap::new();
    for fit in &fits {
        let name = format!("fit_{}", map_sample_file_name(fit.map_id, fit.lambda).replace(".csv", ".json"));
        out.json(&name, &FitJson::from(fit))?;
        by_map.entry(fit.map_id.as_str()).or_default().push(fit);
    }

    let mut w = out.create("fit_errors.csv")?;
    let mut write = || -> std::io::Result<()> {
        if let Some(ts) = &out.timestamp {
            writeln!(w, "# generated {ts}")?;
        }
        writeln!(w, "lambda,map,e_l1,e_l2,e_linf")?;
        for group in by_map.values_mut() {
            group.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            for f in group.iter() {
                let r = f.fit_report;
                writeln!(w, "{:.16e},{},{:.16e},{:.16e},{:.16e}", f.lambda, f.map_id.as_str(), r.e_l1, r.e_l2, r.e_linf)?;
            }
        }
        w.flush()
    };
    write().map_err(io_err)?;
    let worst = fits.iter().map(|f| f.fit_report.e_linf).fold(0.0, f64::max);
    out.note(format!("maps-fit: {} fits, largest Linf error {worst:.3e}", fits.len()));

    for (map, group) in &by_map {
        let grid: Vec<f64> = group.iter().map(|f| f.lambda).collect();
        if grid.len() < 6 {
            continue;
        }
        let owned: Vec<PiecewisePolyMap> = group.iter().map(|f| (*f).clone()).collect();
        let families = fit_coefficient_family(&grid, &owned).map_err(numerical)?;
        let json: Vec<FamilyJson> = families
            .into_iter()
            .map(|f| FamilyJson {
                coefficient_id: f.coefficient_id,
                lambda_grid: f.lambda_grid,
                values: f.values,
                fits: f
                    .poly_fits
                    .into_iter()
                    .map(|p| FamilyFitJson {
                        degree: p.degree,
                        coeffs: p.coeffs,
                        rss: p.rss,
                        max_residual: p.max_residual,
                    })
                    .collect(),
            })
            .collect();
        out.json(&format!("coefficient_families_{map}.json"), &json)?;
    }
    Ok(())
}

pub fn mmo_analyze(cfg: &MmoAnalyzeConfig, out: &Output) -> Result<(), CliError> {
    let opts = map_options(cfg.n_points, cfg.tol);
    let base = KoperParams {
        k: cfg.k,
        ..KoperParams::singular(-7.0, cfg.mu)
    };
    let onset = match cfg.bracket {
        Some(b) => Some(find_lambda_r(&base, b, &opts).map_err(numerical)?),
        None => None,
    };
    let per_lambda: Vec<(Vec<FixedPointJson>, FunnelMarginJson)> = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let p = KoperParams { lambda, ..base };
            let model = ReturnMapModel::build(&p, &opts).map_err(numerical)?;
            let fps = fixed_points(&model.relaxation_return()).iter().map(|f| FixedPointJson::new(lambda, f)).collect();
            let margin = model.funnel_margin(folded_singularity_z(&p, FoldSign::Plus)).map_err(numerical)?;
            Ok((fps, FunnelMarginJson::new(lambda, &margin)))
        })
        .collect::<Result<_, CliError>>()?;
    let report = AnalysisReport {
        lambda_r: onset.map(|o| o.lambda_r),
        lambda_r_direct: onset.map(|o| o.lambda_r_direct),
        fixed_points: per_lambda.iter().flat_map(|(f, _)| f.iter().copied()).collect(),
        funnel_margins: per_lambda.iter().map(|(_, m)| *m).collect(),
    };
    if let Some(o) = onset {
        out.note(format!("mmo-analyze: lambda_r = {:.6} (fitted), {:.6} (direct)", o.lambda_r, o.lambda_r_direct));
    }
    out.json("analysis.json", &report)
}

#[derive(Serialize)]
struct ChaosJson {
    aperiodic: bool,
    z_period: Option<usize>,
    symbolic_aperiodic: bool,
    symbols: Vec<u32>,
}

fn hybrid_params(cfg: &HybridRunConfig, m0: f64, initial: (f64, f64)) -> Result<serde_json::Value, CliError> {
    let global = mmo_core::hybrid::GlobalReturnModel { m0, ..cfg.global };
    Ok(serde_json::json!({
        "local": serde_json::to_value(cfg.local).map_err(io_err)?,
        "sections": serde_json::to_value(cfg.sections).map_err(io_err)?,
        "global": serde_json::to_value(global).map_err(io_err)?,
        "initial": [initial.0, initial.1],
        "n_returns": cfg.n_returns,
        "sao_window": cfg.sao_window,
        "transient_fraction": cfg.transient_fraction,
    }))
}

pub fn hybrid_run(cfg: &HybridRunConfig, out: &Output) -> Result<(), CliError> {
    let eps = cfg.local.eps();
    let initial = (cfg.initial_y.unwrap_or(cfg.sections.entry_y(eps)), cfg.initial_z);
    let opts = HybridOptions {
        local: LocalMapOptions {
            solver: SolverOptions::default().with_tol(cfg.tol).with_max_step(0.5),
            sao_window: cfg.sao_window,
            ..LocalMapOptions::default()
        },
        max_period: cfg.max_period,
        transient_fraction: cfg.transient_fraction,
    };
    let (m0s, suffixed) = match &cfg.sweep_m0 {
        Some(list) => (list.clone(), true),
        None => (vec![cfg.global.m0], false),
    };
    let runs: Vec<Result<HybridRun, CliError>> = m0s
        .par_iter()
        .map(|&m0| {
            let global = mmo_core::hybrid::GlobalReturnModel { m0, ..cfg.global };
            run_hybrid(&cfg.local, &cfg.sections, &global, initial, cfg.n_returns, &opts).map_err(numerical)
        })
        .collect();
    for (m0, run) in m0s.iter().zip(runs) {
        let run = run?;
        let suffix = if suffixed { format!("_m0_{m0}") } else { String::new() };
        let mut w = out.create(&format!("return_log{suffix}.csv"))?;
        write_return_log_csv(&mut w, &run.log, out.timestamp.as_deref()).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        let report = SignatureReport::new(hybrid_params(cfg, *m0, initial)?, &run.signature);
        out.json(&format!("signature{suffix}.json"), &report)?;
        let kind = match cfg.local {
            LocalModel::FoldedNode(_) => "folded node",
            LocalModel::SingularHopf(_) => "singular Hopf",
        };
        out.note(format!(
            "hybrid-run ({kind}, m0 = {m0}): signature {}",
            report.signature.as_deref().unwrap_or("aperiodic")
        ));
        if cfg.n_returns >= 10 * cfg.max_period {
            let v = detect_chaos(&run.log, cfg.max_period, cfg.chaos_tol).map_err(numerical)?;
            out.note(format!("  pre-return z aperiodic: {}, symbols {:?}", v.aperiodic, v.symbols));
            out.json(
                &format!("chaos{suffix}.json"),
                &ChaosJson {
                    aperiodic: v.aperiodic,
                    z_period: v.z_period,
                    symbolic_aperiodic: v.symbolic_aperiodic,
                    symbols: v.symbols,
                },
            )?;
        }
    }
    Ok(())
}

pub fn output_dir(out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

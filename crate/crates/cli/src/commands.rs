use serde::Serialize;

use qpmeas::measurement::{
    arthurs_kelly_model, arthurs_kelly_symmetric_probe, build_model, check_theorem_conditions, qrms_errors, sweep,
    LinearSimultaneousMeasurement, ModelFamily, SweepRow, TheoremReport,
};
use qpmeas::quadrature::{moments, MinUncertaintyParams};
use qpmeas::statistics::{
    empirical_gauss_error, empirical_moments, gauss_error, named_joint, posterior_state, region_mixture_moments,
    sample, NamedJoint, OutcomeRegion, PosteriorFamily,
};

use crate::config::{parse_list, Format, RunConfig, DEFAULT_GRID_POINTS};
use crate::output::{csv_table, emit, json, summary_path, write_file};
use crate::AppError;

/// `sweep` exits with failure when a trade-off residual exceeds this.
pub const SWEEP_BO_TOL: f64 = 1e-8;

pub const FRONTIER_GRID_POINTS: usize = 999;

/// Sample summaries below this size are flagged as low confidence.
pub const LOW_CONFIDENCE_N: usize = 100;

const PRODUCT_TOL: f64 = 1e-12;

fn lib(e: qpmeas::Error) -> AppError {
    AppError::usage(e.to_string())
}

fn model_for(cfg: &RunConfig, nu: Option<f64>) -> Result<LinearSimultaneousMeasurement, AppError> {
    match cfg.family {
        ModelFamily::ArthursKelly => arthurs_kelly_model(arthurs_kelly_symmetric_probe(cfg.psi.hbar).map_err(lib)?).map_err(lib),
        fam => {
            let nu = nu.ok_or_else(|| AppError::usage("--nu is required"))?;
            build_model(fam, nu, &cfg.psi).map_err(lib)
        }
    }
}

fn point_nu(cfg: &RunConfig) -> Result<Option<f64>, AppError> {
    match cfg.family {
        ModelFamily::ArthursKelly => Ok(cfg.single_nu().ok()),
        _ => cfg.single_nu().map(Some),
    }
}

#[derive(Serialize)]
struct SweepReport<'a> {
    family: ModelFamily,
    psi: MinUncertaintyParams,
    rows: &'a [SweepRow],
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<i32, AppError> {
    let grid = cfg.grid_or(DEFAULT_GRID_POINTS);
    let rows = sweep(cfg.family, &grid, &cfg.psi).map_err(lib)?;
    let contents = match cfg.format {
        Format::Csv => csv_table(
            &["nu", "eps_q", "eps_p", "bo_lhs", "bo_residual", "heisenberg_product", "ozawa_residual"],
            rows.iter()
                .map(|r| vec![r.nu, r.eps_q, r.eps_p, r.bo_lhs, r.bo_residual, r.heisenberg_product, r.ozawa_residual]),
        ),
        Format::Json => json(&SweepReport {
            family: cfg.family,
            psi: cfg.psi,
            rows: &rows,
        })?,
    };
    emit(cfg.out.as_deref(), &contents)?;
    Ok(if rows.iter().all(|r| r.bo_residual <= SWEEP_BO_TOL) { 0 } else { 1 })
}

#[derive(Serialize)]
struct CheckReport {
    family: ModelFamily,
    nu: Option<f64>,
    psi: MinUncertaintyParams,
    eps_q: f64,
    eps_p: f64,
    #[serde(flatten)]
    report: TheoremReport,
    all_pass: bool,
}

pub fn cmd_check(cfg: &RunConfig) -> Result<i32, AppError> {
    let nu = point_nu(cfg)?;
    let m = model_for(cfg, nu)?;
    let report = check_theorem_conditions(&m, &cfg.psi).map_err(lib)?;
    let errs = qrms_errors(&m, &cfg.psi).map_err(lib)?;
    let out = CheckReport {
        family: cfg.family,
        nu,
        psi: cfg.psi,
        eps_q: errs.eps_q,
        eps_p: errs.eps_p,
        report,
        all_pass: report.all_pass(),
    };
    emit(cfg.out.as_deref(), &json(&out)?)?;
    Ok(if out.all_pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct FrontierRow {
    nu: f64,
    eps_q: f64,
    eps_p: f64,
    heisenberg_eps_p: f64,
    quarter_eps_p: f64,
}

/// The attained trade-off curve in `(eps_q, eps_p)` coordinates, with the
/// curves `eps_q eps_p = hbar/2` and `eps_q eps_p = hbar/4` sampled at the same abscissae.
pub fn cmd_frontier(cfg: &RunConfig) -> Result<i32, AppError> {
    if cfg.family == ModelFamily::ArthursKelly {
        return Err(AppError::usage("frontier is defined for the X, Y2, Y0 and Z families"));
    }
    let grid = cfg.grid_or(FRONTIER_GRID_POINTS);
    let h = cfg.psi.hbar;
    let rows: Vec<FrontierRow> = sweep(cfg.family, &grid, &cfg.psi)
        .map_err(lib)?
        .into_iter()
        .map(|r| FrontierRow {
            nu: r.nu,
            eps_q: r.eps_q,
            eps_p: r.eps_p,
            heisenberg_eps_p: 0.5 * h / r.eps_q,
            quarter_eps_p: 0.25 * h / r.eps_q,
        })
        .collect();
    let contents = match cfg.format {
        Format::Csv => csv_table(
            &["nu", "eps_q", "eps_p", "heisenberg_eps_p", "quarter_eps_p"],
            rows.iter().map(|r| vec![r.nu, r.eps_q, r.eps_p, r.heisenberg_eps_p, r.quarter_eps_p]),
        ),
        Format::Json => json(&rows)?,
    };
    emit(cfg.out.as_deref(), &contents)?;
    Ok(0)
}

#[derive(Serialize)]
struct GaussErrorSummary {
    analytic: f64,
    empirical: Option<f64>,
    standard_error: Option<f64>,
    z_score: Option<f64>,
}

#[derive(Serialize)]
struct SampleSummary {
    joint: NamedJoint,
    family: ModelFamily,
    nu: Option<f64>,
    n: usize,
    seed: u64,
    low_confidence: bool,
    labels: Vec<String>,
    analytic_mean: Vec<f64>,
    analytic_cov: Vec<Vec<f64>>,
    empirical_mean: Vec<f64>,
    empirical_cov: Option<Vec<Vec<f64>>>,
    mean_z_scores: Vec<Option<f64>>,
    /// Only the `q-pair` and `p-pair` joints compare a target with its meter.
    gauss_error: Option<GaussErrorSummary>,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn cmd_sample(cfg: &RunConfig, joint: &str) -> Result<i32, AppError> {
    let which: NamedJoint = joint.parse().map_err(lib)?;
    if cfg.n == 0 {
        return Err(AppError::usage("--n must be at least 1"));
    }
    let nu = point_nu(cfg)?;
    let m = model_for(cfg, nu)?;
    let law = named_joint(&m, &cfg.psi, which).map_err(lib)?;
    let draws = sample(&law, cfg.n, cfg.seed).map_err(lib)?;
    let (mean, cov) = empirical_moments(&draws);
    let root_n = (cfg.n as f64).sqrt();
    let mean_z_scores = (0..law.dim())
        .map(|k| {
            let sd = law.cov()[(k, k)].sqrt();
            (sd > 0.0).then(|| (mean[k] - law.mean()[k]) / (sd / root_n))
        })
        .collect();
    let gauss = match which {
        NamedJoint::Meters => None,
        NamedJoint::QPair | NamedJoint::PPair => {
            let analytic = gauss_error(&law, 0, 1).map_err(lib)?;
            let est = empirical_gauss_error(&draws, 0, 1);
            Some(GaussErrorSummary {
                analytic,
                empirical: est.map(|e| e.0),
                standard_error: est.map(|e| e.1),
                z_score: est.and_then(|(e, se)| (se > 0.0).then(|| (e - analytic) / se)),
            })
        }
    };
    let summary = SampleSummary {
        joint: which,
        family: cfg.family,
        nu,
        n: cfg.n,
        seed: cfg.seed,
        low_confidence: cfg.n < LOW_CONFIDENCE_N,
        labels: law.labels().to_vec(),
        analytic_mean: law.mean().iter().copied().collect(),
        analytic_cov: rows_of(law.cov()),
        empirical_mean: mean.iter().copied().collect(),
        empirical_cov: cov.as_ref().map(rows_of),
        mean_z_scores,
        gauss_error: gauss,
    };
    let summary_json = json(&summary)?;
    if let Some(out) = &cfg.out {
        let header: Vec<&str> = law.labels().iter().map(String::as_str).collect();
        write_file(out, &csv_table(&header, draws.rows().map(<[f64]>::to_vec)))?;
        write_file(&summary_path(out), &summary_json)?;
    }
    emit(None, &summary_json)?;
    Ok(0)
}

#[derive(Serialize)]
struct PointPosterior {
    family: ModelFamily,
    nu: f64,
    y: [f64; 2],
    mean: [f64; 2],
    var_q: f64,
    var_p: f64,
    product: f64,
    hbar_sq_over_4: f64,
    min_uncertainty: bool,
}

#[derive(Serialize)]
struct Marginals {
    mean: [f64; 2],
    var: [f64; 2],
}

#[derive(Serialize)]
struct RegionPosterior {
    family: ModelFamily,
    nu: f64,
    region: OutcomeRegion,
    probability: f64,
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    product: f64,
    hbar_sq_over_4: f64,
    /// Unconditioned moments of `Q1(tau)` and `P1(tau)`; the full-plane mixture reproduces them.
    propagated: Marginals,
}

pub fn cmd_posterior(cfg: &RunConfig, y: Option<&str>, region: Option<&str>) -> Result<i32, AppError> {
    if !cfg.family.has_posterior_family() {
        return Err(lib(qpmeas::Error::UnsupportedFamily(format!(
            "{} (posterior family known only for Y0 and Z)",
            cfg.family
        ))));
    }
    let nu = cfg.single_nu()?;
    let psi = cfg.psi;
    let h2 = 0.25 * psi.hbar * psi.hbar;
    let contents = match (y, region) {
        (Some(y), None) => {
            let v = parse_list("y", y, Some(2))?;
            let y = [v[0], v[1]];
            let fam = PosteriorFamily::new(nu, psi).map_err(lib)?;
            let s = posterior_state(&fam, y).map_err(lib)?;
            let (vq, vp) = (s.cov()[(0, 0)], s.cov()[(1, 1)]);
            let product = vq * vp;
            json(&PointPosterior {
                family: cfg.family,
                nu,
                y,
                mean: [s.mean()[0], s.mean()[1]],
                var_q: vq,
                var_p: vp,
                product,
                hbar_sq_over_4: h2,
                min_uncertainty: (product - h2).abs() <= PRODUCT_TOL * h2,
            })?
        }
        (None, Some(r)) => {
            let v = parse_list("region", r, Some(4))?;
            let region = OutcomeRegion::new(v[0], v[1], v[2], v[3]).map_err(lib)?;
            let mix = region_mixture_moments(cfg.family, nu, &psi, &region).map_err(lib)?;
            let m = build_model(cfg.family, nu, &psi).map_err(lib)?;
            let t = m.transform().expect("solvable model");
            let state = m.initial_state(&psi).map_err(lib)?;
            let (mq, vq) = moments(&state, &t.q_at(1)).map_err(lib)?;
            let (mp, vp) = moments(&state, &t.p_at(1)).map_err(lib)?;
            json(&RegionPosterior {
                family: cfg.family,
                nu,
                region,
                probability: mix.probability,
                mean: mix.mean,
                cov: mix.cov,
                product: mix.cov[0][0] * mix.cov[1][1],
                hbar_sq_over_4: h2,
                propagated: Marginals {
                    mean: [mq, mp],
                    var: [vq, vp],
                },
            })?
        }
        (Some(_), Some(_)) => return Err(AppError::usage("give either --y or --region, not both")),
        (None, None) => return Err(AppError::usage("posterior needs --y z,w or --region zlo,zhi,wlo,whi")),
    };
    emit(cfg.out.as_deref(), &contents)?;
    Ok(0)
}

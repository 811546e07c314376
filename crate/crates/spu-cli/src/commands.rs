//! Subcommand implementations.  Every command builds its model from the run
//! configuration, executes with keyed substreams of the master seed, and
//! writes CSV artifacts (rows sorted by (m, n, k), never by completion time).

use std::path::{Path, PathBuf};

use spu_core::block_encoding::BlockEncoding;
use spu_core::dense::DenseOperator;
use spu_core::diagnostics::jackknife;
use spu_core::hamiltonian::{
    build_tfi, exact_canonical_average, rescale_report, to_dense, PauliHamiltonian,
};
use spu_core::lcu_qite::{qmetts_run, QiteExpansion};
use spu_core::mcmc_spu::{
    exhaustive_estimate, postselection_survey, required_pairs, run_pairs_diagnosed,
    BranchDiagnostics, DiagnosticsPlan, PairBlocks, PairRun, SpuRunConfig, ThermalEstimate,
};
use spu_core::resources::{compare_costs, qubit_count, star_budget, CostModel, Method};
use spu_core::simulator::{ObsReadout, RandomStream, StreamKey};

use crate::config::RunConfig;
use crate::ledger::{self, fmt_f64, LEDGER_COLUMNS};

/// Command failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CmdError {
    pub message: String,
    pub exit_code: i32,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<spu_core::Error> for CmdError {
    fn from(e: spu_core::Error) -> Self {
        let exit_code = match &e {
            spu_core::Error::OracleSize { .. } => 3,
            // statistical non-convergence: chains or the ratio estimator
            spu_core::Error::NonConverged(_) | spu_core::Error::IndeterminateEstimate(_) => 4,
            spu_core::Error::InvalidModel(_) | spu_core::Error::InvalidParameter(_) => 2,
            _ => 1,
        };
        CmdError {
            message: e.to_string(),
            exit_code,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError {
            message: format!("io error: {e}"),
            exit_code: 1,
        }
    }
}

fn model(cfg: &RunConfig) -> Result<(PauliHamiltonian, DenseOperator), CmdError> {
    let h = build_tfi(cfg.n_sites, cfg.theta)?;
    let dense = to_dense(&h)?;
    Ok((h, dense))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

/// Exact canonical averages of the energy over the temperature grid.
pub fn cmd_exact(cfg: &RunConfig) -> Result<PathBuf, CmdError> {
    let (h, dense) = model(cfg)?;
    let report = rescale_report(&h)?;
    let mut rows = Vec::new();
    for beta in cfg.betas(&report) {
        let value = exact_canonical_average(&dense, &dense, beta)?;
        rows.push(vec![fmt_f64(beta), fmt_f64(value)]);
    }
    let path = out_path(cfg, "exact.csv");
    ledger::write_csv(&path, cfg, &["beta", "energy"], &rows)?;
    Ok(path)
}

/// Qubit/gate tables for the conventional and sampled-pair circuits over a
/// site grid, with the physical-error budgets.
pub fn cmd_resources(cfg: &RunConfig) -> Result<PathBuf, CmdError> {
    let report = rescale_report(&build_tfi(cfg.n_sites, cfg.theta)?)?;
    let betas = cfg.betas(&report);
    let beta = betas[0];
    let model = CostModel::default();
    let n_grid = [4usize, 6, 8, 10, 16, 24, 32, 48, 64, 100, 128];
    let rows_data = compare_costs(&n_grid, beta, cfg.nu, &model)?;
    let d = spu_core::lcu_qite::truncation_order(beta, cfg.nu)?;
    let mut rows = Vec::new();
    for row in rows_data {
        rows.push(vec![
            row.n_sites.to_string(),
            d.to_string(),
            qubit_count(row.n_sites, Method::Conventional, d)?.to_string(),
            qubit_count(row.n_sites, Method::McmcSpu, d)?.to_string(),
            row.conventional.cliffords.to_string(),
            row.conventional.rotations.to_string(),
            row.spu_max.cliffords.to_string(),
            row.spu_max.rotations.to_string(),
            fmt_f64(row.spu_avg_cliffords),
            fmt_f64(row.spu_avg_rotations),
            fmt_f64(star_budget(row.conventional.rotations as f64)?),
            fmt_f64(star_budget(row.spu_max.rotations as f64)?),
            fmt_f64(star_budget(row.spu_avg_rotations)?),
        ]);
    }
    let path = out_path(cfg, "resources.csv");
    ledger::write_csv(
        &path,
        cfg,
        &[
            "n_sites",
            "truncation_order",
            "qubits_conventional",
            "qubits_spu",
            "conv_cliffords",
            "conv_rotations",
            "spu_max_cliffords",
            "spu_max_rotations",
            "spu_avg_cliffords",
            "spu_avg_rotations",
            "star_budget_conventional",
            "star_budget_spu_max",
            "star_budget_spu_avg",
        ],
        &rows,
    )?;
    Ok(path)
}

/// QMETTS baseline: per-step chain trace plus the per-temperature estimate.
pub fn cmd_qmetts(cfg: &RunConfig) -> Result<PathBuf, CmdError> {
    let (h, dense) = model(cfg)?;
    let report = rescale_report(&h)?;
    let stream = RandomStream::new(cfg.seed);
    let readout = if cfg.shots > 0 {
        ObsReadout::with_shots(&dense, &h, cfg.shots)
    } else {
        ObsReadout::exact(&dense)
    };
    let mut trace_rows = Vec::new();
    let mut estimate_rows = Vec::new();
    for (run_id, beta) in cfg.betas(&report).into_iter().enumerate() {
        let exp = QiteExpansion::build(beta, cfg.nu)?;
        let mut rng = stream.substream(StreamKey::new(run_id as u64, 0, 0, 0));
        let record = qmetts_run(
            &h,
            &readout,
            &exp,
            cfg.qmetts_steps,
            cfg.qmetts_burn_in,
            &mut rng,
        )?;
        for (step, (label, value)) in record.labels.iter().zip(&record.obs_values).enumerate() {
            trace_rows.push(vec![
                run_id.to_string(),
                fmt_f64(beta),
                step.to_string(),
                label.to_string(),
                fmt_f64(*value),
            ]);
        }
        let tail = record.post_burn_in();
        let s_bin = (tail.len() / 8).clamp(1, 50);
        let (mean, stderr) = jackknife(tail, s_bin)?;
        let band = trunc_band_on_ratio(&dense, beta, cfg.nu, mean)?;
        estimate_rows.push(vec![
            fmt_f64(beta),
            fmt_f64(mean),
            fmt_f64(stderr),
            fmt_f64(band),
            fmt_f64(stderr + band),
            cfg.qmetts_steps.to_string(),
            cfg.qmetts_burn_in.to_string(),
            cfg.seed.to_string(),
        ]);
    }
    let trace_path = out_path(cfg, "qmetts_chain.csv");
    ledger::write_csv(
        &trace_path,
        cfg,
        &["run_id", "beta", "step", "label", "obs_value"],
        &trace_rows,
    )?;
    let path = out_path(cfg, "qmetts_estimate.csv");
    ledger::write_csv(
        &path,
        cfg,
        &[
            "beta",
            "energy",
            "stat_stderr",
            "trunc_band",
            "combined_error",
            "chain_steps",
            "burn_in",
            "seed",
        ],
        &estimate_rows,
    )?;
    Ok(path)
}

/// Uniform series band nu(2 e^{beta/2} + nu), rescaled onto the thermal
/// ratio by the exact Gibbs trace average.
fn trunc_band_on_ratio(
    dense: &DenseOperator,
    beta: f64,
    nu: f64,
    value: f64,
) -> Result<f64, CmdError> {
    let (vals, _) = dense.hermitian_eigen()?;
    let gibbs = vals.iter().map(|e| (-beta * e).exp()).sum::<f64>() / vals.len() as f64;
    let band = nu * (2.0 * (beta / 2.0).exp() + nu);
    Ok(band * (1.0 + value.abs()) / gibbs)
}

/// Sampled-pair estimator: per-branch ledger plus the per-temperature
/// estimate with its error decomposition; optional exhaustive mode and
/// postselection survey.
pub fn cmd_mcmcspu(cfg: &RunConfig) -> Result<Vec<PathBuf>, CmdError> {
    let (h, dense) = model(cfg)?;
    let report = rescale_report(&h)?;
    let be = BlockEncoding::new(&h)?;
    let stream = RandomStream::new(cfg.seed);
    let readout = if cfg.shots > 0 {
        ObsReadout::with_shots(&dense, &h, cfg.shots)
    } else {
        ObsReadout::exact(&dense)
    };
    let plan = DiagnosticsPlan {
        max_window: cfg.max_window,
        tau_steps: cfg.tau_steps,
    };

    let mut ledger_rows = Vec::new();
    let mut estimate_rows = Vec::new();
    let mut survey_rows = Vec::new();
    for (run_id, beta) in cfg.betas(&report).into_iter().enumerate() {
        let exp = QiteExpansion::build(beta, cfg.nu)?;
        if cfg.exhaustive {
            let value = exhaustive_estimate(&be, &exp, &dense)?;
            let band = trunc_band_on_ratio(&dense, beta, cfg.nu, value)?;
            estimate_rows.push(vec![
                fmt_f64(beta),
                fmt_f64(value),
                fmt_f64(0.0),
                fmt_f64(band),
                fmt_f64(band),
                fmt_f64(0.0),
                fmt_f64(0.0),
                fmt_f64(0.0),
                fmt_f64(0.0),
                "exhaustive".to_string(),
            ]);
        } else {
            let planned = required_pairs(cfg.epsilon, cfg.delta, &exp)?;
            let budget = cfg.pair_budget(planned);
            let run_cfg = SpuRunConfig {
                n_pairs: budget,
                chain_steps: cfg.chain_steps,
                burn_in: cfg.burn_in,
                z_samples: cfg.z_samples,
            };
            let mut runs = run_pairs_diagnosed(
                &be,
                &exp,
                &readout,
                &run_cfg,
                Some(plan),
                &stream,
                run_id as u64,
            )?;
            runs.sort_by_key(|r| (r.outcome.m, r.outcome.n, r.outcome.pair_index));
            for run in &runs {
                push_ledger_rows(&mut ledger_rows, run, run_id as u64, beta, cfg);
            }
            let outcomes: Vec<_> = runs.into_iter().map(|r| r.outcome).collect();
            let estimate = spu_core::mcmc_spu::combine(&outcomes, &exp, 1.0)?;
            estimate_rows.push(estimate_row(beta, &estimate, planned));
        }
        if cfg.survey {
            let table = postselection_survey(&be, &exp, cfg.survey_cps, &stream, run_id as u64)?;
            for row in table.rows {
                survey_rows.push(vec![
                    fmt_f64(beta),
                    row.m.to_string(),
                    row.n.to_string(),
                    row.k.to_string(),
                    fmt_f64(row.mean_w),
                    fmt_f64(row.stderr_w),
                    row.valid.to_string(),
                ]);
            }
        }
    }

    let mut written = Vec::new();
    if !ledger_rows.is_empty() {
        let path = out_path(cfg, "ledger.csv");
        ledger::write_csv(&path, cfg, LEDGER_COLUMNS, &ledger_rows)?;
        written.push(path);
    }
    let est_path = out_path(cfg, "estimate.csv");
    ledger::write_csv(
        &est_path,
        cfg,
        &[
            "beta",
            "energy",
            "stat_stderr",
            "trunc_band",
            "combined_error",
            "num_mean",
            "num_stderr",
            "den_mean",
            "den_stderr",
            "n_pairs",
        ],
        &estimate_rows,
    )?;
    written.push(est_path);
    if cfg.survey {
        let path = out_path(cfg, "survey.csv");
        ledger::write_csv(
            &path,
            cfg,
            &["beta", "m", "n", "k", "mean_w", "stderr_w", "valid"],
            &survey_rows,
        )?;
        written.push(path);
    }
    Ok(written)
}

fn estimate_row(beta: f64, estimate: &ThermalEstimate, planned: f64) -> Vec<String> {
    vec![
        fmt_f64(beta),
        fmt_f64(estimate.value),
        fmt_f64(estimate.stat_stderr),
        fmt_f64(estimate.trunc_band),
        fmt_f64(estimate.combined_error()),
        fmt_f64(estimate.num_mean),
        fmt_f64(estimate.num_stderr),
        fmt_f64(estimate.den_mean),
        fmt_f64(estimate.den_stderr),
        format!("{} (planned {planned:.3e})", estimate.n_pairs),
    ]
}

fn push_ledger_rows(
    rows: &mut Vec<Vec<String>>,
    run: &PairRun,
    run_id: u64,
    beta: f64,
    cfg: &RunConfig,
) {
    for (k, record) in run.outcome.records.iter().enumerate() {
        // the (m, m, k=1) branch vanishes identically and never produces data
        if record.m == record.n && record.k == 1 {
            continue;
        }
        let diag = &run.diagnostics[k];
        let relaxation = diag
            .as_ref()
            .and_then(|d| d.relaxation)
            .map_or_else(|| "nan".to_string(), |w| w.to_string());
        let (tau, saturated) = diag
            .as_ref()
            .map_or((f64::NAN, false), |d| (d.tau.tau, d.tau.saturated));
        rows.push(vec![
            run_id.to_string(),
            fmt_f64(beta),
            record.m.to_string(),
            record.n.to_string(),
            record.k.to_string(),
            fmt_f64(record.z_mean),
            fmt_f64(record.z_stderr),
            fmt_f64(record.obs_mean),
            fmt_f64(record.obs_stderr),
            cfg.chain_steps.to_string(),
            record.burn_in.to_string(),
            relaxation,
            fmt_f64(tau),
            saturated.to_string(),
            record.dead.to_string(),
            run.outcome.resampled.to_string(),
            cfg.seed.to_string(),
            run.outcome.pair_index.to_string(),
        ]);
    }
}

/// Relaxation/autocorrelation report for every live branch of an existing
/// ledger, replayed from the recorded seeds.  Returns the report path and
/// whether every branch converged.
pub fn cmd_diagnose(cfg: &RunConfig, ledger_path: &Path) -> Result<(PathBuf, bool), CmdError> {
    let text = std::fs::read_to_string(ledger_path)?;
    let rows = ledger::parse_ledger(&text).map_err(|msg| CmdError {
        message: msg,
        exit_code: 2,
    })?;
    let (h, dense) = model(cfg)?;
    let be = BlockEncoding::new(&h)?;
    let readout = ObsReadout::exact(&dense);

    let mut seen = std::collections::BTreeSet::new();
    let mut report_rows = Vec::new();
    let mut all_converged = true;
    for row in rows.iter().filter(|r| !r.dead) {
        let key = (row.run_id, row.beta.to_bits(), row.m, row.n, row.k);
        if !seen.insert(key) {
            continue;
        }
        let stream = RandomStream::new(row.seed);
        let blocks = PairBlocks::from_circuit(&be, row.m, row.n)?;
        let diag: Option<BranchDiagnostics> = spu_core::mcmc_spu::diagnose_branch(
            &blocks,
            row.k as usize,
            &readout,
            cfg.max_window,
            cfg.tau_steps,
            &stream,
            row.run_id,
            row.pair_index,
        )
        .ok();
        let relaxation = diag.as_ref().and_then(|d| d.relaxation);
        if relaxation.is_none() {
            all_converged = false;
        }
        let (tau, saturated) = diag
            .as_ref()
            .map_or((f64::NAN, false), |d| (d.tau.tau, d.tau.saturated));
        report_rows.push(vec![
            fmt_f64(row.beta),
            row.m.to_string(),
            row.n.to_string(),
            row.k.to_string(),
            relaxation.map_or_else(|| "nan".to_string(), |w| w.to_string()),
            fmt_f64(tau),
            saturated.to_string(),
        ]);
    }
    let path = out_path(cfg, "diagnose.csv");
    ledger::write_csv(
        &path,
        cfg,
        &["beta", "m", "n", "k", "relaxation", "tau", "tau_saturated"],
        &report_rows,
    )?;
    Ok((path, all_converged))
}

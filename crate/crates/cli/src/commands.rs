use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use brp_cfo::channel::{build_block_model, sample_channel};
use brp_cfo::crb::{emcb, estimate_gamma};
use brp_cfo::experiments::{
    degradation_csv, heuristic_csv, preamble_pair, run_degradation_table, run_gamma_diagnostic,
    run_heuristic_angle_table, run_sweep,
};
use brp_cfo::preamble::{
    degradation, generalize_cazac, generate_cazac, heuristic_delta, optimal_delta, optimality_residual,
};
use brp_cfo::{BasisBlock, BrpSpec, CrbInputs, CrbReport, Error, PreambleMode, SystemConfig};
use serde_json::{json, Value};

use crate::config::{CliConfig, ThetaPolicy};
use crate::error::{CliError, CliResult};
use crate::json::{num, nums, opt_num};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

/// Output directory plus the files written so far.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        Ok(Self { dir: dir.into(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialise");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn files(&self) -> Value {
        Value::Array(self.written.iter().map(|p| Value::from(p.display().to_string())).collect())
    }
}

fn basis_json(theta: f64, basis: &BasisBlock) -> Value {
    json!({
        "theta": num(theta),
        "re": nums(basis.samples().iter().map(|z| z.re)),
        "im": nums(basis.samples().iter().map(|z| z.im)),
    })
}

/// Preamble pair for `design`: `theta1 = 0` and `theta2` from the policy.
pub fn design(config: &CliConfig, out: &mut Outputs) -> CliResult<Value> {
    let (l, m) = (config.system.block_len, config.system.num_blocks);
    if l == 0 {
        return Err(Error::InvalidParameter("block_len must be at least 1".into()).into());
    }
    if m < 3 {
        return Err(Error::InvalidParameter(format!("design needs num_blocks >= 3, got {m}")).into());
    }
    let (delta, method) = match config.design.theta_policy {
        ThetaPolicy::Optimal => {
            let sol = optimal_delta(m)?;
            (sol.delta, serde_json::to_value(sol.method).expect("enum serialises"))
        }
        ThetaPolicy::Heuristic => (heuristic_delta(m)?, Value::from("heuristic")),
        ThetaPolicy::Periodic => (0.0, Value::from("periodic")),
    };
    let base = generate_cazac(l)?;
    let rotated = generalize_cazac(&base, delta);
    let report = json!({
        "block_len": l,
        "num_blocks": m,
        "preamble_len": (m + 1) * l,
        "theta_policy": serde_json::to_value(config.design.theta_policy).expect("enum serialises"),
        "method": method,
        "theta1": num(0.0),
        "theta2": num(delta),
        "degradation": num(degradation(delta, m)?),
        "optimality_residual": num(optimality_residual(delta, m)),
        "source1": basis_json(0.0, &base),
        "source2": basis_json(delta, &rotated),
    });
    out.write_json("design.json", &report)?;
    Ok(report)
}

fn bound_preambles(mode: PreambleMode, system: &SystemConfig) -> CliResult<(Option<BrpSpec>, BrpSpec)> {
    if system.num_blocks >= 3 || mode == PreambleMode::Periodic {
        return Ok(preamble_pair(mode, system)?);
    }
    // Every angle is degenerate below three blocks.
    system.validate()?;
    let base = generate_cazac(system.block_len)?;
    let brp2 = BrpSpec::new(generalize_cazac(&base, PI), PI, system.num_blocks)?;
    let brp1 = (mode == PreambleMode::OptimizedBrp).then(|| BrpSpec::new(base, 0.0, system.num_blocks)).transpose()?;
    Ok((brp1, brp2))
}

/// Every bound for one channel drawn from the master seed.
pub fn bounds(config: &CliConfig, out: &mut Outputs) -> CliResult<Value> {
    let system = &config.system;
    let e = &config.experiment;
    let (brp1, brp2) = bound_preambles(e.preamble_mode, system)?;
    let channel = sample_channel(system, e.master_seed)?;
    let model = build_block_model(system, &channel, brp1.as_ref(), &brp2)?;
    let (phi11, phi21) = (model.self_interference.then_some(model.phi11), model.phi21);
    let inputs = CrbInputs::new(model)?;
    let gamma = estimate_gamma(system, config.bounds.gamma_samples, e.master_seed)?;
    let mut report = CrbReport::evaluate(&inputs, &gamma, None)?;
    report.emcb = Some(emcb(system, brp1.as_ref(), &brp2, e.trials, e.master_seed)?);

    let value = json!({
        "preamble_mode": e.preamble_mode.name(),
        "snr_db": num(system.snr_db),
        "seed": e.master_seed,
        "phi11": opt_num(phi11),
        "phi21": num(phi21),
        "gcrb": num(report.gcrb),
        "acrb": num(report.acrb),
        "acrb_oneway": num(report.acrb_oneway),
        "mcrb_numeric": opt_num(report.mcrb_numeric),
        "emcb": opt_num(report.emcb),
        "emcb_trials": e.trials,
        "k_gamma": num(report.k_gamma),
        "k_gamma_std_error": num(gamma.k_std_error),
        "gamma_samples": config.bounds.gamma_samples,
    });
    out.write_json("bounds.json", &value)?;
    Ok(value)
}

pub fn sweep(config: &CliConfig, out: &mut Outputs) -> CliResult<Value> {
    let experiment = config.experiment_config(out.dir());
    let result = run_sweep(&experiment)?;
    out.write("sweep.csv", &result.to_csv())?;
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|r| {
            json!({
                "snr_db": num(r.snr_db),
                "mse_correlator": num(r.mse_correlator),
                "mse_gamle": num(r.mse_gamle),
                "emcb": num(r.emcb),
                "acrb": num(r.acrb),
                "acrb_oneway": num(r.acrb_oneway),
                "bias_correlator": num(r.bias_correlator),
                "trials_excluded": r.trials_excluded,
            })
        })
        .collect();
    Ok(json!({
        "preamble_mode": result.preamble_mode.name(),
        "phi21": num(result.phi21),
        "trials": experiment.trials,
        "rows": rows,
    }))
}

pub fn tables(config: &CliConfig, out: &mut Outputs) -> CliResult<Value> {
    let t = &config.tables;
    let degradation_rows = run_degradation_table(&t.degradation_m, t.grid_points)?;
    let heuristic_rows = run_heuristic_angle_table(&t.heuristic_m)?;
    out.write("degradation.csv", &degradation_csv(&degradation_rows))?;
    out.write("heuristic_angles.csv", &heuristic_csv(&heuristic_rows))?;
    let heuristic: Vec<Value> = heuristic_rows
        .iter()
        .map(|r| json!({ "num_blocks": r.m, "delta": num(r.delta), "degradation": num(r.lambda) }))
        .collect();
    Ok(json!({ "degradation_rows": degradation_rows.len(), "heuristic": heuristic }))
}

pub fn gamma(config: &CliConfig, out: &mut Outputs) -> CliResult<Value> {
    let d = run_gamma_diagnostic(&config.system, config.gamma.samples, config.experiment.master_seed)?;
    let value = json!({
        "k": num(d.k),
        "k_std_error": num(d.k_std_error),
        "leakage": num(d.leakage),
        "spread": num(d.spread),
        "samples": d.samples,
        "seed": config.experiment.master_seed,
        "rows": d.rows,
        "row_profiles": d.row_profiles.iter().map(|r| nums(r.iter().copied())).collect::<Vec<_>>(),
    });
    out.write_json("gamma.json", &value)?;
    Ok(value)
}

use std::fs;
use std::path::Path;

use serde_json::json;
use sentinel_core::attacks::{apply_attack, AttackBudget, ScenarioFile};
use sentinel_core::datamat::{pe_certificate, uniform_signal, Trajectory};
use sentinel_core::ddmodel::{learn_model, rank_report, DataDrivenModel};
use sentinel_core::identify::{identify_delay, identify_replay, injection_bootstrap, IdentificationVerdict};
use sentinel_core::numkit::{Matrix, Vector};
use sentinel_core::plant::{msd_discrete, simulate_trajectory, StateSpace};
use sentinel_core::{Error, Result};

use crate::demo::relative_degrees;
use crate::RunConfig;

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Trajectory::read_csv(file)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_plant(path: Option<&Path>) -> Result<StateSpace> {
    match path {
        Some(p) => StateSpace::from_json(&read_text(p)?),
        None => Ok(msd_discrete()),
    }
}

/// Learn every subset predictor from an attack-free trajectory. On a rank
/// failure the error names the first failing subset and `rank_report`
/// lists all of them.
pub fn learn(traj_path: &Path, cfg: &RunConfig) -> Result<DataDrivenModel> {
    cfg.validate()?;
    let traj = read_trajectory(traj_path)?;
    cfg.check_sensors(traj.output_dim())?;
    let n = cfg.n.ok_or_else(|| Error::InvalidInput("learn needs --n".into()))?;
    let t = match cfg.horizon {
        Some(t) => t,
        None => traj.len().checked_sub(n).filter(|&t| t > 0).ok_or(Error::TooShort {
            required: n + 1,
            actual: traj.len(),
        })?,
    };
    learn_model(&traj, n, cfg.max_attacked, t, &cfg.tol)
}

/// Per-subset certificates as JSON, for reporting a failed learn.
pub fn rank_failures(traj_path: &Path, cfg: &RunConfig) -> Result<serde_json::Value> {
    let traj = read_trajectory(traj_path)?;
    let n = cfg.n.unwrap_or(1);
    let t = cfg.horizon.unwrap_or(traj.len().saturating_sub(n));
    let report = rank_report(&traj, n, cfg.max_attacked, t, &cfg.tol)?;
    Ok(json!(report
        .iter()
        .filter(|(_, rc)| !rc.holds)
        .map(|(s, rc)| json!({"id": s.id, "indices": s.indices, "observed_rank": rc.observed, "required_rank": rc.required}))
        .collect::<Vec<_>>()))
}

pub fn identify_injection(model_path: &Path, stream_path: &Path, cfg: &RunConfig) -> Result<IdentificationVerdict> {
    cfg.validate()?;
    let model = DataDrivenModel::from_json(&read_text(model_path)?)?;
    let stream = read_trajectory(stream_path)?;
    cfg.check_sensors(stream.output_dim())?;
    let n = model.n;
    if stream.len() <= n {
        return Err(Error::TooShort {
            required: n + 1,
            actual: stream.len(),
        });
    }
    let steps = stream.len() - n;
    let mut id = injection_bootstrap(
        &model,
        &stream.inputs().columns(0, n).into_owned(),
        &stream.outputs().columns(0, n).into_owned(),
        stream.start() + n as i64,
        &cfg.tol,
    )?;
    let verdicts = id.run(
        &stream.inputs().columns(n, steps).into_owned(),
        &stream.outputs().columns(n, steps).into_owned(),
        steps,
    )?;
    Ok(verdicts.into_iter().last().expect("at least one step"))
}

pub fn identify_replay_file(stream_path: &Path, cfg: &RunConfig) -> Result<IdentificationVerdict> {
    cfg.validate()?;
    let stream = read_trajectory(stream_path)?;
    cfg.check_sensors(stream.output_dim())?;
    let n = cfg.n.ok_or_else(|| Error::InvalidInput("replay identification needs --n".into()))?;
    let t1 = cfg.test_len.unwrap_or(stream.len().saturating_sub(n));
    identify_replay(&stream, cfg.max_attacked, n, t1, &cfg.tol)
}

/// Impulse records: the relative degrees come from `degrees` or, failing
/// that, from the plant file (the benchmark when absent).
pub fn identify_delay_file(
    stream_path: &Path,
    degrees: Option<&[usize]>,
    plant_path: Option<&Path>,
    cfg: &RunConfig,
) -> Result<IdentificationVerdict> {
    cfg.validate()?;
    let stream = read_trajectory(stream_path)?;
    cfg.check_sensors(stream.output_dim())?;
    let r = match degrees {
        Some(r) => r.to_vec(),
        None => relative_degrees(&read_plant(plant_path)?, &cfg.tol)?,
    };
    identify_delay(stream.outputs(), &r, &cfg.tol)
}

/// Rank certificate of an input signal; the CSV may omit output columns.
pub fn check_pe(input_path: &Path, order: usize, cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    cfg.validate()?;
    let traj = read_trajectory(input_path)?;
    let cert = pe_certificate(traj.inputs(), order, &cfg.tol)?;
    let pass = cert.holds();
    Ok((
        pass,
        json!({
            "order": cert.order,
            "observed_rank": cert.observed_rank,
            "required_rank": cert.required_rank,
            "pass": pass,
        }),
    ))
}

/// Simulate a plant from rest, optionally under an attack scenario. Inputs
/// come from a CSV or, without one, `len` seeded uniform samples.
pub fn simulate_cmd(
    plant_path: Option<&Path>,
    scenario_path: Option<&Path>,
    input_path: Option<&Path>,
    len: Option<usize>,
    cfg: &RunConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let plant = read_plant(plant_path)?;
    cfg.check_sensors(plant.sensor_count())?;
    cfg.check_order(plant.state_dim())?;
    let (u, start): (Matrix, i64) = match (input_path, len) {
        (Some(p), _) => {
            let t = read_trajectory(p)?;
            (t.inputs().clone(), t.start())
        }
        (None, Some(l)) => (uniform_signal(plant.input_dim(), l, cfg.seed), 0),
        (None, None) => return Err(Error::InvalidInput("simulate needs --input or --len".into())),
    };
    let clean = simulate_trajectory(&plant, &Vector::zeros(plant.state_dim()), &u, start)?;
    match scenario_path {
        Some(p) => {
            let scenario = ScenarioFile::from_json(&read_text(p)?)?.to_scenario();
            apply_attack(&clean, &scenario, &AttackBudget::new(cfg.max_attacked), None)
        }
        None => Ok(clean),
    }
}

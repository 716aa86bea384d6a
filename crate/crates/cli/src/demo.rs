//! Benchmark demonstrations on the three-mass chain.
//!
//! Every random draw derives from one seed through fixed offsets:
//! `seed` excites the training window, `seed + 1` draws the bootstrap
//! samples, `seed + 2` the online inputs and `seed + 3` the attack signal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sentinel_core::attacks::{
    apply_attack, AttackBudget, AttackScenario, ScenarioFile, DEFAULT_INJECTION_AMPLITUDE, DEFAULT_INJECTION_HOLD,
};
use sentinel_core::datamat::{generate_pe_input, uniform_signal, Trajectory};
use sentinel_core::ddmodel::{excitation_order, learn_model, DataDrivenModel};
use sentinel_core::identify::{identify_delay, identify_replay, injection_bootstrap, IdentificationVerdict};
use sentinel_core::numkit::{Matrix, Tolerance, Vector};
use sentinel_core::plant::{msd_discrete, relative_degree, simulate, simulate_trajectory, RelativeDegree, StateSpace};
use sentinel_core::{Error, Result};

pub const SEED_BOOTSTRAP: u64 = 1;
pub const SEED_ONLINE: u64 = 2;
pub const SEED_ATTACK: u64 = 3;

/// Sensor attacked in the injection and replay demos, delayed sensor in the delay demo.
pub const INJECTED_SENSOR: usize = 3;
pub const DELAYED_SENSOR: usize = 2;
pub const DELAY_STEPS: usize = 5;
pub const REPLAY_CONSTANT: f64 = 0.01;
pub const DELAY_OUTPUT_SCALE: f64 = 0.1;
pub const IMPULSE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoKind {
    Injection,
    Delay,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSettings {
    pub seed: u64,
    pub max_attacked: usize,
    /// Training horizon T.
    pub horizon: usize,
    /// Test window T1 (replay) and impulse window (delay).
    pub test_len: usize,
    /// Online steps the injection identifier may take.
    pub step_budget: usize,
    pub tol: Tolerance,
}

impl Default for DemoSettings {
    fn default() -> Self {
        DemoSettings {
            seed: 7,
            max_attacked: 1,
            horizon: 41,
            test_len: 41,
            step_budget: 60,
            tol: Tolerance::default(),
        }
    }
}

/// n bootstrap samples followed by a certified window of `len` samples.
pub fn excited_input(plant: &StateSpace, s: &DemoSettings, len: usize, window_seed: u64) -> Result<(Matrix, u64)> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    let q = plant.sensor_count() - s.max_attacked;
    let pe = generate_pe_input(m, len, excitation_order(m, q, n), window_seed, &s.tol)?;
    let pre = uniform_signal(m, n, s.seed.wrapping_add(SEED_BOOTSTRAP));
    let mut u = Matrix::zeros(m, n + len);
    u.columns_mut(0, n).copy_from(&pre);
    u.columns_mut(n, len).copy_from(&pe.u);
    Ok((u, pe.seed))
}

#[derive(Debug, Clone)]
pub struct Training {
    pub plant: StateSpace,
    pub traj: Trajectory,
    pub model: DataDrivenModel,
}

pub fn train(plant: &StateSpace, s: &DemoSettings) -> Result<Training> {
    let n = plant.state_dim();
    if s.max_attacked >= plant.sensor_count() {
        return Err(Error::InvalidInput(format!(
            "need N > M, got N = {}, M = {}",
            plant.sensor_count(),
            s.max_attacked
        )));
    }
    let (u, pe_seed) = excited_input(plant, s, s.horizon, s.seed)?;
    let traj = simulate_trajectory(plant, &Vector::zeros(n), &u, 0)?;
    let model = learn_model(&traj, n, s.max_attacked, s.horizon, &s.tol)?.with_pe_seed(pe_seed);
    Ok(Training {
        plant: plant.clone(),
        traj,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct InjectionDemo {
    pub training: Training,
    pub scenario: ScenarioFile,
    pub onset: i64,
    pub clean: Trajectory,
    pub attacked: Trajectory,
    pub verdicts: Vec<IdentificationVerdict>,
    /// Time of the first non-clear verdict.
    pub detection: Option<i64>,
    /// Time of the first nonzero attack sample.
    pub first_attack: Option<i64>,
}

impl InjectionDemo {
    pub fn terminal(&self) -> &IdentificationVerdict {
        self.verdicts.last().expect("at least one online step")
    }

    pub fn expected_outcome(&self) -> bool {
        let t = self.terminal();
        let clean_ids = clean_subset_ids(&self.training.model, INJECTED_SENSOR);
        matches!((self.detection, self.first_attack), (Some(d), Some(a)) if d == a && d - self.onset <= 2)
            && !t.all_clear
            && t.winners == clean_ids
    }
}

fn clean_subset_ids(model: &DataDrivenModel, attacked: usize) -> Vec<usize> {
    model
        .entries
        .iter()
        .filter(|e| !e.subset.contains(attacked))
        .map(|e| e.subset.id)
        .collect()
}

pub fn injection_demo(s: &DemoSettings) -> Result<InjectionDemo> {
    let plant = msd_discrete();
    let training = train(&plant, s)?;
    let n = plant.state_dim();
    let onset = 2 * n as i64;
    let len = n + s.step_budget;
    let u = uniform_signal(plant.input_dim(), len, s.seed.wrapping_add(SEED_ONLINE));
    let clean = simulate_trajectory(&plant, &Vector::zeros(n), &u, 0)?;
    let scenario = ScenarioFile::Injection {
        targets: vec![INJECTED_SENSOR],
        onset,
        seed: s.seed.wrapping_add(SEED_ATTACK),
        amplitude: DEFAULT_INJECTION_AMPLITUDE,
        hold: DEFAULT_INJECTION_HOLD,
    };
    let attack = scenario.to_scenario();
    let attacked = apply_attack(&clean, &attack, &AttackBudget::new(s.max_attacked), None)?;
    let first_attack = (0..len)
        .find(|&c| attacked.outputs()[(INJECTED_SENSOR - 1, c)] != clean.outputs()[(INJECTED_SENSOR - 1, c)])
        .map(|c| c as i64);
    let mut id = injection_bootstrap(
        &training.model,
        &u.columns(0, n).into_owned(),
        &attacked.outputs().columns(0, n).into_owned(),
        n as i64,
        &s.tol,
    )?;
    let verdicts = id.run(
        &u.columns(n, s.step_budget).into_owned(),
        &attacked.outputs().columns(n, s.step_budget).into_owned(),
        s.step_budget,
    )?;
    let detection = verdicts.iter().find(|v| !v.all_clear).map(|v| v.k);
    Ok(InjectionDemo {
        training,
        scenario,
        onset,
        clean,
        attacked,
        verdicts,
        detection,
        first_attack,
    })
}

#[derive(Debug, Clone)]
pub struct DelayDemo {
    pub training: Training,
    pub scenario: ScenarioFile,
    pub relative_degrees: Vec<usize>,
    pub clean: Trajectory,
    pub attacked: Trajectory,
    pub verdict: IdentificationVerdict,
}

impl DelayDemo {
    pub fn expected_outcome(&self) -> bool {
        let expected: Vec<usize> = (1..=self.clean.output_dim()).filter(|&j| j != DELAYED_SENSOR).collect();
        self.verdict.winners == expected
    }
}

pub fn relative_degrees(plant: &StateSpace, tol: &Tolerance) -> Result<Vec<usize>> {
    (1..=plant.sensor_count())
        .map(|j| match relative_degree(plant, j, tol)? {
            RelativeDegree::Finite(r) => Ok(r),
            RelativeDegree::Infinite => Err(Error::Precondition(format!("sensor {j} never responds to the input"))),
        })
        .collect()
}

pub fn delay_demo(s: &DemoSettings) -> Result<DelayDemo> {
    let plant = msd_discrete().with_output_scale(DELAY_OUTPUT_SCALE);
    let training = train(&plant, s)?;
    let r = relative_degrees(&plant, &s.tol)?;
    let mut u = Matrix::zeros(plant.input_dim(), s.test_len);
    u[(0, 0)] = IMPULSE_AMPLITUDE;
    let sim = simulate(&plant, &Vector::zeros(plant.state_dim()), &u)?;
    let clean = Trajectory::new(u, sim.outputs, 0)?;
    let mut tau = vec![0; plant.sensor_count()];
    tau[DELAYED_SENSOR - 1] = DELAY_STEPS;
    let scenario = ScenarioFile::Delay { tau };
    let attacked = apply_attack(&clean, &scenario.to_scenario(), &AttackBudget::new(s.max_attacked), None)?;
    let verdict = identify_delay(attacked.outputs(), &r, &s.tol)?;
    Ok(DelayDemo {
        training,
        scenario,
        relative_degrees: r,
        clean,
        attacked,
        verdict,
    })
}

#[derive(Debug, Clone)]
pub struct ReplayDemo {
    pub training: Training,
    pub scenario: ScenarioFile,
    pub clean: Trajectory,
    pub attacked: Trajectory,
    pub verdict: IdentificationVerdict,
}

impl ReplayDemo {
    pub fn expected_outcome(&self) -> bool {
        self.verdict.winners == clean_subset_ids(&self.training.model, INJECTED_SENSOR)
    }
}

pub fn replay_demo(s: &DemoSettings) -> Result<ReplayDemo> {
    let plant = msd_discrete();
    let training = train(&plant, s)?;
    let n = plant.state_dim();
    let (u, _) = excited_input(&plant, s, s.test_len, s.seed.wrapping_add(SEED_ONLINE))?;
    let clean = simulate_trajectory(&plant, &Vector::zeros(n), &u, 0)?;
    let scenario = ScenarioFile::Replay {
        constants: BTreeMap::from([(INJECTED_SENSOR, REPLAY_CONSTANT)]),
    };
    let attack: AttackScenario = scenario.to_scenario();
    let attacked = apply_attack(&clean, &attack, &AttackBudget::new(s.max_attacked), None)?;
    let verdict = identify_replay(&attacked, s.max_attacked, n, s.test_len, &s.tol)?;
    Ok(ReplayDemo {
        training,
        scenario,
        clean,
        attacked,
        verdict,
    })
}

/// Outcome of one demo run, with the files it produced.
#[derive(Debug, Clone)]
pub struct DemoReport {
    pub kind: DemoKind,
    pub verdict: IdentificationVerdict,
    pub expected: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    if text.ends_with('\n') {
        fs::write(&path, text)?;
    } else {
        fs::write(&path, format!("{text}\n"))?;
    }
    files.push(path);
    Ok(())
}

fn write_training(dir: &Path, t: &Training, files: &mut Vec<PathBuf>) -> Result<()> {
    write(dir, "plant.json", &t.plant.to_json()?, files)?;
    write(dir, "training.csv", &t.traj.to_csv_string(), files)?;
    write(dir, "model.json", &t.model.to_json()?, files)
}

/// Run a demo and, when `out` is given, write its CSV and JSON artifacts there.
pub fn run_demo(kind: DemoKind, s: &DemoSettings, out: Option<&Path>) -> Result<DemoReport> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut files = Vec::new();
    let (verdict, expected, summary) = match kind {
        DemoKind::Injection => {
            let d = injection_demo(s)?;
            if let Some(dir) = out {
                write_training(dir, &d.training, &mut files)?;
                write(dir, "scenario.json", &d.scenario.to_json()?, &mut files)?;
                write(dir, "stream_clean.csv", &d.clean.to_csv_string(), &mut files)?;
                write(dir, "stream.csv", &d.attacked.to_csv_string(), &mut files)?;
                write(dir, "steps.json", &serde_json::to_string_pretty(&d.verdicts)?, &mut files)?;
                write(dir, "verdict.json", &d.terminal().to_json()?, &mut files)?;
            }
            let summary = match d.detection {
                Some(k) => format!(
                    "injection onset {}, detected at k = {k}, attack-free sensors {:?}",
                    d.onset,
                    d.terminal().attack_free_sensors
                ),
                None => format!("injection onset {}, not detected within {} steps", d.onset, s.step_budget),
            };
            (d.terminal().clone(), d.expected_outcome(), summary)
        }
        DemoKind::Delay => {
            let d = delay_demo(s)?;
            if let Some(dir) = out {
                write_training(dir, &d.training, &mut files)?;
                write(dir, "scenario.json", &d.scenario.to_json()?, &mut files)?;
                write(dir, "impulse_clean.csv", &d.clean.to_csv_string(), &mut files)?;
                write(dir, "impulse.csv", &d.attacked.to_csv_string(), &mut files)?;
                write(dir, "verdict.json", &d.verdict.to_json()?, &mut files)?;
            }
            let summary = format!(
                "relative degrees {:?}, attack-free sensors {:?}",
                d.relative_degrees, d.verdict.attack_free_sensors
            );
            (d.verdict.clone(), d.expected_outcome(), summary)
        }
        DemoKind::Replay => {
            let d = replay_demo(s)?;
            if let Some(dir) = out {
                write_training(dir, &d.training, &mut files)?;
                write(dir, "scenario.json", &d.scenario.to_json()?, &mut files)?;
                write(dir, "test_clean.csv", &d.clean.to_csv_string(), &mut files)?;
                write(dir, "test.csv", &d.attacked.to_csv_string(), &mut files)?;
                write(dir, "verdict.json", &d.verdict.to_json()?, &mut files)?;
            }
            let summary = format!("attack-free sensors {:?}", d.verdict.attack_free_sensors);
            (d.verdict.clone(), d.expected_outcome(), summary)
        }
    };
    Ok(DemoReport {
        kind,
        verdict,
        expected,
        files,
        summary,
    })
}

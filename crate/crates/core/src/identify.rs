//! Online identification of attack-free sensors.
//!
//! * injection: one-step residual of every learned predictor, moving horizon;
//! * replay: rank of the stacked test-window data per subset;
//! * delay: first significant impulse sample against the relative degree.

use serde::{Deserialize, Serialize};

use crate::attacks::{enumerate_subsets, project_outputs};
use crate::datamat::{build_subset_matrices, history_state, is_persistently_exciting, Trajectory};
use crate::ddmodel::{excitation_order, full_rank, min_horizon, DataDrivenModel};
use crate::error::{Error, Result};
use crate::numkit::{numerical_rank, Matrix, Tolerance, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Injection,
    Replay,
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Score {
    Residual {
        residual: f64,
    },
    Rank {
        rank: usize,
    },
    Slack {
        /// None when no significant sample was observed.
        slack: Option<i64>,
        sigma: Option<usize>,
        relative_degree: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub id: usize,
    pub indices: Vec<usize>,
    #[serde(flatten)]
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationVerdict {
    pub k: i64,
    pub mode: Mode,
    pub per_subset: Vec<SubsetScore>,
    /// Subset ids (sensor ids in delay mode).
    pub winners: Vec<usize>,
    pub attack_free_sensors: Vec<usize>,
    pub all_clear: bool,
    /// Replay only: rank every clean subset reaches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_rank: Option<usize>,
    /// Replay only: subsets attaining the largest rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax: Option<Vec<usize>>,
}

impl IdentificationVerdict {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn winner_indices(&self) -> Vec<Vec<usize>> {
        self.per_subset
            .iter()
            .filter(|s| self.winners.contains(&s.id))
            .map(|s| s.indices.clone())
            .collect()
    }
}

fn union_of(per_subset: &[SubsetScore], winners: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = per_subset
        .iter()
        .filter(|s| winners.contains(&s.id))
        .flat_map(|s| s.indices.iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Moving-horizon injection identifier over a learned model.
#[derive(Debug, Clone)]
pub struct InjectionIdentifier {
    model: DataDrivenModel,
    states: Vec<Vector>,
    k: i64,
    tol: Tolerance,
    stopped: bool,
}

/// Build 𝒳_j[k] for every subset from the n attack-free samples before k.
pub fn injection_bootstrap(model: &DataDrivenModel, u_hist: &Matrix, y_hist: &Matrix, k: i64, tol: &Tolerance) -> Result<InjectionIdentifier> {
    tol.validate()?;
    let n = model.n;
    if u_hist.ncols() != n || y_hist.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs exactly n = {n} samples, got {} inputs and {} outputs",
            u_hist.ncols(),
            y_hist.ncols()
        )));
    }
    if u_hist.nrows() != model.m || y_hist.nrows() != model.sensors {
        return Err(Error::InvalidInput(format!(
            "bootstrap expects {} inputs and {} sensors, got {} and {}",
            model.m,
            model.sensors,
            u_hist.nrows(),
            y_hist.nrows()
        )));
    }
    let states = model
        .entries
        .iter()
        .map(|e| history_state(&project_outputs(y_hist, &e.subset)?, u_hist, n, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(InjectionIdentifier {
        model: model.clone(),
        states,
        k,
        tol: *tol,
        stopped: false,
    })
}

impl InjectionIdentifier {
    pub fn time(&self) -> i64 {
        self.k
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Feed u[k] and the (possibly attacked) y[k].
    pub fn step(&mut self, u_k: &Vector, y_k: &Vector) -> Result<IdentificationVerdict> {
        if self.stopped {
            return Err(Error::Precondition("identifier already returned a terminal verdict".into()));
        }
        let (n, m) = (self.model.n, self.model.m);
        if u_k.len() != m || y_k.len() != self.model.sensors {
            return Err(Error::InvalidInput(format!(
                "step expects {m} inputs and {} outputs, got {} and {}",
                self.model.sensors,
                u_k.len(),
                y_k.len()
            )));
        }
        let mut observed = Vec::with_capacity(self.states.len());
        let mut residuals = Vec::with_capacity(self.states.len());
        let mut scales = Vec::with_capacity(self.states.len());
        for (entry, x) in self.model.entries.iter().zip(&self.states) {
            let predicted = entry.predict(u_k, x)?;
            let q = entry.subset.cardinality();
            let zo = q * n;
            let mut next = Vector::zeros(x.len());
            next.rows_mut(0, zo - q).copy_from(&x.rows(q, zo - q));
            for (r, sensor) in entry.subset.rows().enumerate() {
                next[zo - q + r] = y_k[sensor];
            }
            next.rows_mut(zo, m * (n - 1)).copy_from(&x.rows(zo + m, m * (n - 1)));
            next.rows_mut(zo + m * (n - 1), m).copy_from(u_k);
            residuals.push((&predicted - &next).norm());
            scales.push(next.norm());
            observed.push(next);
        }
        let min = residuals.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = |j: usize| self.tol.residual_abs + self.tol.residual_rel * scales[j];
        let winners: Vec<usize> = (0..residuals.len())
            .filter(|&j| residuals[j] <= min + bound(j))
            .map(|j| self.model.entries[j].subset.id)
            .collect();
        let all_clear = (0..residuals.len()).all(|j| residuals[j] <= bound(j));
        let per_subset: Vec<SubsetScore> = self
            .model
            .entries
            .iter()
            .zip(&residuals)
            .map(|(e, &residual)| SubsetScore {
                id: e.subset.id,
                indices: e.subset.indices.clone(),
                score: Score::Residual { residual },
            })
            .collect();
        let verdict = IdentificationVerdict {
            k: self.k,
            mode: Mode::Injection,
            attack_free_sensors: union_of(&per_subset, &winners),
            per_subset,
            winners,
            all_clear,
            required_rank: None,
            argmax: None,
        };
        if all_clear {
            self.states = observed;
            self.k += 1;
        } else {
            self.stopped = true;
        }
        Ok(verdict)
    }

    /// Step through the columns of (u, y) until a non-clear verdict or `max_steps`.
    pub fn run(&mut self, u: &Matrix, y: &Matrix, max_steps: usize) -> Result<Vec<IdentificationVerdict>> {
        if u.ncols() != y.ncols() {
            return Err(Error::InvalidInput("input and output streams differ in length".into()));
        }
        let mut out = Vec::new();
        for c in 0..u.ncols().min(max_steps) {
            let v = self.step(&u.column(c).into_owned(), &y.column(c).into_owned())?;
            let clear = v.all_clear;
            out.push(v);
            if !clear {
                break;
            }
        }
        Ok(out)
    }
}

/// Rank test on a test window: subsets whose stacked data reach the full rank
/// n + m(n+1) are declared attack-free.
pub fn identify_replay(traj: &Trajectory, max_attacked: usize, n: usize, t1: usize, tol: &Tolerance) -> Result<IdentificationVerdict> {
    tol.validate()?;
    let sensors = traj.output_dim();
    let m = traj.input_dim();
    if max_attacked >= sensors || n == 0 {
        return Err(Error::InvalidInput(format!("need N > M and n ≥ 1, got N = {sensors}, M = {max_attacked}, n = {n}")));
    }
    let q = sensors - max_attacked;
    let order = excitation_order(m, q, n);
    if t1 < min_horizon(m, q, n) {
        return Err(Error::Precondition(format!("test window T1 = {t1} is below (m+1)ñ = {}", min_horizon(m, q, n))));
    }
    if traj.len() < n + t1 {
        return Err(Error::TooShort { required: n + t1, actual: traj.len() });
    }
    let window = traj.inputs().columns(n, t1).into_owned();
    if !is_persistently_exciting(&window, order, tol)? {
        return Err(Error::Precondition(format!("test input is not persistently exciting of order {order}")));
    }
    let required = full_rank(n, m);
    let mut per_subset = Vec::new();
    for subset in enumerate_subsets(sensors, max_attacked)? {
        let mats = build_subset_matrices(traj, &subset, n, t1)?;
        let rank = numerical_rank(&mats.stacked(), tol)?;
        per_subset.push(SubsetScore {
            id: subset.id,
            indices: subset.indices,
            score: Score::Rank { rank },
        });
    }
    let ranks: Vec<usize> = per_subset
        .iter()
        .map(|s| match s.score {
            Score::Rank { rank } => rank,
            _ => unreachable!(),
        })
        .collect();
    let top = ranks.iter().copied().max().unwrap_or(0);
    let winners: Vec<usize> = per_subset.iter().zip(&ranks).filter(|(_, &r)| r == required).map(|(s, _)| s.id).collect();
    let argmax = per_subset.iter().zip(&ranks).filter(|(_, &r)| r == top).map(|(s, _)| s.id).collect();
    Ok(IdentificationVerdict {
        k: traj.start() + (n + t1) as i64 - 1,
        mode: Mode::Replay,
        attack_free_sensors: union_of(&per_subset, &winners),
        all_clear: winners.len() == per_subset.len(),
        per_subset,
        winners,
        required_rank: Some(required),
        argmax: Some(argmax),
    })
}

/// First k ≥ 1 whose sample is significant relative to the sensor's own peak.
pub fn first_response(row: &[f64], tol: &Tolerance) -> Option<usize> {
    let peak = row.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let threshold = tol.significance(peak);
    (1..row.len()).find(|&k| row[k].abs() > threshold)
}

/// Impulse-timing test: slack σ_j − r_j, winners are the sensors of minimal slack.
pub fn identify_delay(y_impulse: &Matrix, r: &[usize], tol: &Tolerance) -> Result<IdentificationVerdict> {
    tol.validate()?;
    let sensors = y_impulse.nrows();
    if r.len() != sensors {
        return Err(Error::InvalidInput(format!("{} relative degrees for {sensors} sensors", r.len())));
    }
    let need = r.iter().copied().max().unwrap_or(0);
    if y_impulse.ncols() <= need {
        return Err(Error::TooShort {
            required: need + 1,
            actual: y_impulse.ncols(),
        });
    }
    let mut per_subset = Vec::with_capacity(sensors);
    let mut slacks = Vec::with_capacity(sensors);
    for (j, &rj) in r.iter().enumerate() {
        let row: Vec<f64> = y_impulse.row(j).iter().copied().collect();
        let sigma = first_response(&row, tol);
        let slack = sigma.map(|s| s as i64 - rj as i64);
        slacks.push(slack);
        per_subset.push(SubsetScore {
            id: j + 1,
            indices: vec![j + 1],
            score: Score::Slack {
                slack,
                sigma,
                relative_degree: rj,
            },
        });
    }
    let min = slacks.iter().flatten().copied().min().ok_or(Error::NoResponse)?;
    let winners: Vec<usize> = (0..sensors).filter(|&j| slacks[j] == Some(min)).map(|j| j + 1).collect();
    Ok(IdentificationVerdict {
        k: y_impulse.ncols() as i64 - 1,
        mode: Mode::Delay,
        attack_free_sensors: winners.clone(),
        all_clear: slacks.iter().all(|s| *s == Some(0)),
        per_subset,
        winners,
        required_rank: None,
        argmax: None,
    })
}

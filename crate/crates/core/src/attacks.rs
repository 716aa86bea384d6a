//! Sensor subsets and the sensor-channel attack models: additive data
//! injection, per-channel network delay, and constant replay.
//!
//! Sensors are numbered from 1 everywhere in the public API.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamat::Trajectory;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// An index set of sensors together with its position in the
/// lexicographic enumeration of all subsets of the same size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensorSubset {
    pub id: usize,
    pub indices: Vec<usize>,
}

impl SensorSubset {
    pub fn new(id: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices[0] == 0 {
            return Err(Error::InvalidInput(format!("subset {indices:?} must be non-empty and 1-based")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!("subset {indices:?} must be strictly increasing")));
        }
        Ok(SensorSubset { id, indices })
    }

    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, sensor: usize) -> bool {
        self.indices.binary_search(&sensor).is_ok()
    }

    /// Rows of the output matrix this subset selects.
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|i| i - 1)
    }

    /// Stack the selected rows of a p-row matrix.
    pub fn select_rows(&self, m: &Matrix) -> Result<Matrix> {
        if let Some(&last) = self.indices.last() {
            if last > m.nrows() {
                return Err(Error::InvalidInput(format!(
                    "subset {:?} references sensor {last} but only {} exist",
                    self.indices,
                    m.nrows()
                )));
            }
        }
        let rows: Vec<usize> = self.rows().collect();
        Ok(m.select_rows(rows.iter()))
    }
}

impl fmt::Display for SensorSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "#{} {{{}}}", self.id, parts.join(","))
    }
}

/// All subsets of size N−M, in lexicographic order, with ids 1..C(N, N−M).
pub fn enumerate_subsets(n_sensors: usize, max_attacked: usize) -> Result<Vec<SensorSubset>> {
    if n_sensors == 0 || max_attacked >= n_sensors {
        return Err(Error::InvalidInput(format!(
            "need N > M >= 0, got N = {n_sensors}, M = {max_attacked}"
        )));
    }
    let q = n_sensors - max_attacked;
    let mut out = Vec::new();
    let mut current: Vec<usize> = (1..=q).collect();
    loop {
        out.push(SensorSubset {
            id: out.len() + 1,
            indices: current.clone(),
        });
        // advance to the next combination
        let mut i = q;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if current[i] < n_sensors - (q - 1 - i) {
                break;
            }
        }
        current[i] += 1;
        for j in i + 1..q {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// z_j: the rows of `y` that belong to `subset`.
pub fn project_outputs(y: &Matrix, subset: &SensorSubset) -> Result<Matrix> {
    subset.select_rows(y)
}

pub type SignalFn = Arc<dyn Fn(usize, i64) -> f64 + Send + Sync>;

/// Additive signal for the injection attack.
#[derive(Clone)]
pub enum InjectionSignal {
    /// Piecewise-constant random levels held for `hold` samples, with random
    /// sign and magnitude in [amplitude/2, amplitude]. The onset sample is zero.
    Seeded { seed: u64, amplitude: f64, hold: usize },
    /// Arbitrary signal of (sensor, absolute time).
    Custom(SignalFn),
}

impl InjectionSignal {
    pub fn value(&self, sensor: usize, k: i64, onset: i64) -> f64 {
        match self {
            InjectionSignal::Seeded { seed, amplitude, hold } => {
                if k <= onset {
                    return 0.0;
                }
                let segment = ((k - onset - 1) as u64) / (*hold).max(1) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(sensor as u64);
                rng.set_word_pos(segment as u128 * 4);
                let magnitude: f64 = rng.random_range(0.5..=1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * magnitude * amplitude
            }
            InjectionSignal::Custom(f) => f(sensor, k),
        }
    }
}

impl fmt::Debug for InjectionSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InjectionSignal::Seeded { seed, amplitude, hold } => f
                .debug_struct("Seeded")
                .field("seed", seed)
                .field("amplitude", amplitude)
                .field("hold", hold)
                .finish(),
            InjectionSignal::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AttackScenario {
    /// ỹ_i[k] = y_i[k] + signal(i, k) for k ≥ onset on the targets.
    Injection {
        targets: Vec<usize>,
        onset: i64,
        signal: InjectionSignal,
    },
    /// ỹ_i[k] = y_i[k − τ_i]; one entry per sensor.
    Delay { tau: Vec<usize> },
    /// ỹ_i[k] = c_i on every sensor with a constant.
    Replay { constants: BTreeMap<usize, f64> },
}

/// What the adversary may do: at most `max_attacked` channels, delays of at
/// most `max_delay` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackBudget {
    pub max_attacked: usize,
    pub max_delay: usize,
}

impl AttackBudget {
    pub const DEFAULT_MAX_DELAY: usize = 64;

    pub fn new(max_attacked: usize) -> Self {
        AttackBudget {
            max_attacked,
            max_delay: Self::DEFAULT_MAX_DELAY,
        }
    }
}

impl AttackScenario {
    /// Sensors whose channel the scenario may modify, sorted.
    pub fn affected_sensors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = match self {
            AttackScenario::Injection { targets, .. } => targets.clone(),
            AttackScenario::Delay { tau } => tau
                .iter()
                .enumerate()
                .filter(|(_, &t)| t > 0)
                .map(|(i, _)| i + 1)
                .collect(),
            AttackScenario::Replay { constants } => constants.keys().copied().collect(),
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn validate(&self, n_sensors: usize, budget: &AttackBudget) -> Result<()> {
        let affected = self.affected_sensors();
        if let Some(&bad) = affected.iter().find(|&&i| i == 0 || i > n_sensors) {
            return Err(Error::InvalidInput(format!(
                "attack targets sensor {bad}, valid sensors are 1..={n_sensors}"
            )));
        }
        if affected.len() > budget.max_attacked {
            return Err(Error::AttackBudget {
                affected: affected.len(),
                budget: budget.max_attacked,
            });
        }
        if let AttackScenario::Delay { tau } = self {
            if tau.len() != n_sensors {
                return Err(Error::InvalidInput(format!(
                    "delay vector has {} entries for {n_sensors} sensors",
                    tau.len()
                )));
            }
            if let Some(&t) = tau.iter().find(|&&t| t > budget.max_delay) {
                return Err(Error::InvalidInput(format!(
                    "delay {t} exceeds the configured bound {}",
                    budget.max_delay
                )));
            }
        }
        Ok(())
    }

    pub fn max_delay(&self) -> usize {
        match self {
            AttackScenario::Delay { tau } => tau.iter().copied().max().unwrap_or(0),
            _ => 0,
        }
    }
}

/// Attacked copy of `clean`. The input channel is never touched.
///
/// For delays, `prehistory` holds the outputs of the `max τ` samples before
/// the trajectory (column c is time `start − max τ + c`); `None` means the
/// plant sat at equilibrium.
pub fn apply_attack(
    clean: &Trajectory,
    scenario: &AttackScenario,
    budget: &AttackBudget,
    prehistory: Option<&Matrix>,
) -> Result<Trajectory> {
    let p = clean.output_dim();
    scenario.validate(p, budget)?;
    let y = clean.outputs();
    let len = clean.len();
    let mut out = y.clone();
    match scenario {
        AttackScenario::Injection { targets, onset, signal } => {
            let first = clean.start();
            if *onset < first || *onset >= first + len as i64 {
                return Err(Error::Precondition(format!(
                    "injection onset {onset} outside trajectory times {first}..{}",
                    first + len as i64
                )));
            }
            for &i in targets {
                for c in 0..len {
                    let k = first + c as i64;
                    if k >= *onset {
                        out[(i - 1, c)] += signal.value(i, k, *onset);
                    }
                }
            }
        }
        AttackScenario::Delay { tau } => {
            let depth = scenario.max_delay();
            let zeros;
            let pre = match prehistory {
                Some(pre) => {
                    if pre.nrows() != p || pre.ncols() < depth {
                        return Err(Error::Precondition(format!(
                            "delay prehistory is {}x{}, need {p}x{depth}",
                            pre.nrows(),
                            pre.ncols()
                        )));
                    }
                    pre
                }
                None => {
                    zeros = Matrix::zeros(p, depth);
                    &zeros
                }
            };
            let pre_len = pre.ncols();
            for (row, &t) in tau.iter().enumerate() {
                if t == 0 {
                    continue;
                }
                for c in 0..len {
                    out[(row, c)] = if c >= t {
                        y[(row, c - t)]
                    } else {
                        pre[(row, pre_len - (t - c))]
                    };
                }
            }
        }
        AttackScenario::Replay { constants } => {
            for (&i, &c) in constants {
                out.row_mut(i - 1).fill(c);
            }
        }
    }
    clean.with_outputs(out)
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ScenarioFile {
    Injection {
        targets: Vec<usize>,
        onset: i64,
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_hold")]
        hold: usize,
    },
    Delay {
        tau: Vec<usize>,
    },
    Replay {
        #[serde(deserialize_with = "sensor_keyed")]
        constants: BTreeMap<usize, f64>,
    },
}

// Internally tagged enums buffer map keys as strings, so parse them by hand.
fn sensor_keyed<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<usize, f64>, D::Error> {
    let raw = BTreeMap::<String, f64>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|i| (i, v))
                .map_err(|_| serde::de::Error::custom(format!("sensor key {k:?} is not an index")))
        })
        .collect()
}

fn default_amplitude() -> f64 {
    DEFAULT_INJECTION_AMPLITUDE
}

fn default_hold() -> usize {
    DEFAULT_INJECTION_HOLD
}

pub const DEFAULT_INJECTION_AMPLITUDE: f64 = 0.5;
pub const DEFAULT_INJECTION_HOLD: usize = 4;

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_scenario(&self) -> AttackScenario {
        match self {
            ScenarioFile::Injection { targets, onset, seed, amplitude, hold } => AttackScenario::Injection {
                targets: targets.clone(),
                onset: *onset,
                signal: InjectionSignal::Seeded {
                    seed: *seed,
                    amplitude: *amplitude,
                    hold: *hold,
                },
            },
            ScenarioFile::Delay { tau } => AttackScenario::Delay { tau: tau.clone() },
            ScenarioFile::Replay { constants } => AttackScenario::Replay {
                constants: constants.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamat::uniform_signal;
    use proptest::prelude::*;

    fn ids(subsets: &[SensorSubset]) -> Vec<Vec<usize>> {
        subsets.iter().map(|s| s.indices.clone()).collect()
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn traj(p: usize, len: usize, seed: u64) -> Trajectory {
        Trajectory::new(uniform_signal(1, len, seed), uniform_signal(p, len, seed + 1), 0).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let s = enumerate_subsets(3, 1).unwrap();
        assert_eq!(ids(&s), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(s.iter().map(|s| s.id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(ids(&enumerate_subsets(4, 0).unwrap()), vec![vec![1, 2, 3, 4]]);
        assert_eq!(enumerate_subsets(4, 2).unwrap().len(), 6);
        assert!(enumerate_subsets(3, 3).is_err());
    }

    #[test]
    fn enumeration_counts_and_order() {
        for n in 1..=7 {
            for m in 0..n {
                let s = enumerate_subsets(n, m).unwrap();
                assert_eq!(s.len(), binomial(n, n - m));
                assert!(s.windows(2).all(|w| w[0].indices < w[1].indices));
                assert!(s.iter().all(|x| x.cardinality() == n - m));
            }
        }
    }

    #[test]
    fn projection() {
        let y = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let all = SensorSubset::new(1, vec![1, 2, 3]).unwrap();
        assert_eq!(project_outputs(&y, &all).unwrap(), y);
        let second = SensorSubset::new(2, vec![2]).unwrap();
        assert_eq!(project_outputs(&y, &second).unwrap(), Matrix::from_row_slice(1, 2, &[3.0, 4.0]));
        let bad = SensorSubset::new(3, vec![4]).unwrap();
        assert!(project_outputs(&y, &bad).is_err());
    }

    #[test]
    fn replay_constant_row() {
        let clean = traj(3, 20, 4);
        let scenario = AttackScenario::Replay {
            constants: BTreeMap::from([(3, 0.01)]),
        };
        let att = apply_attack(&clean, &scenario, &AttackBudget::new(1), None).unwrap();
        assert!(att.outputs().row(2).iter().all(|&v| v == 0.01));
        assert_eq!(att.outputs().rows(0, 2), clean.outputs().rows(0, 2));
    }

    #[test]
    fn delay_shifts_and_zero_fills() {
        let clean = traj(3, 20, 5);
        let scenario = AttackScenario::Delay { tau: vec![0, 5, 0] };
        let att = apply_attack(&clean, &scenario, &AttackBudget::new(1), None).unwrap();
        for c in 0..20 {
            let expected = if c < 5 { 0.0 } else { clean.outputs()[(1, c - 5)] };
            assert_eq!(att.outputs()[(1, c)], expected);
        }
        assert_eq!(att.outputs().row(0), clean.outputs().row(0));
    }

    #[test]
    fn delay_uses_prehistory() {
        let clean = traj(1, 6, 8);
        let pre = Matrix::from_row_slice(1, 3, &[-3.0, -2.0, -1.0]);
        let scenario = AttackScenario::Delay { tau: vec![2] };
        let att = apply_attack(&clean, &scenario, &AttackBudget::new(1), Some(&pre)).unwrap();
        assert_eq!(att.outputs()[(0, 0)], -2.0);
        assert_eq!(att.outputs()[(0, 1)], -1.0);
        assert_eq!(att.outputs()[(0, 2)], clean.outputs()[(0, 0)]);
    }

    #[test]
    fn budget_enforced() {
        let clean = traj(3, 10, 1);
        let scenario = AttackScenario::Replay {
            constants: BTreeMap::from([(2, 0.0), (3, 0.0)]),
        };
        assert_eq!(
            apply_attack(&clean, &scenario, &AttackBudget::new(1), None).unwrap_err(),
            Error::AttackBudget { affected: 2, budget: 1 }
        );
        let all = AttackScenario::Replay {
            constants: BTreeMap::from([(1, 0.0), (2, 0.0), (3, 0.0)]),
        };
        assert!(matches!(
            apply_attack(&clean, &all, &AttackBudget::new(2), None),
            Err(Error::AttackBudget { .. })
        ));
        let long = AttackScenario::Delay { tau: vec![0, 100, 0] };
        assert!(apply_attack(&clean, &long, &AttackBudget::new(1), None).is_err());
    }

    #[test]
    fn seeded_signal_zero_at_onset() {
        let sig = InjectionSignal::Seeded { seed: 3, amplitude: 1.0, hold: 4 };
        assert_eq!(sig.value(3, 12, 12), 0.0);
        for k in 13..40 {
            let v = sig.value(3, k, 12);
            assert!((0.5..=1.0).contains(&v.abs()), "{v}");
        }
        // held for four samples
        assert_eq!(sig.value(3, 13, 12), sig.value(3, 16, 12));
    }

    #[test]
    fn scenario_file_schema() {
        let text = r#"{"type":"replay","constants":{"3":0.01}}"#;
        let f = ScenarioFile::from_json(text).unwrap();
        assert_eq!(f, ScenarioFile::Replay { constants: BTreeMap::from([(3, 0.01)]) });
        let text = r#"{"type":"delay","tau":[0,5,0]}"#;
        assert_eq!(ScenarioFile::from_json(text).unwrap(), ScenarioFile::Delay { tau: vec![0, 5, 0] });
        let text = r#"{"type":"injection","targets":[3],"onset":12,"seed":7}"#;
        match ScenarioFile::from_json(text).unwrap() {
            ScenarioFile::Injection { targets, onset, seed, hold, .. } => {
                assert_eq!((targets, onset, seed, hold), (vec![3], 12, 7, DEFAULT_INJECTION_HOLD));
            }
            other => panic!("{other:?}"),
        }
    }

    fn scenario_strategy() -> impl Strategy<Value = AttackScenario> {
        prop_oneof![
            (1usize..=3, 0i64..20, any::<u64>()).prop_map(|(t, onset, seed)| AttackScenario::Injection {
                targets: vec![t],
                onset,
                signal: InjectionSignal::Seeded { seed, amplitude: 1.0, hold: 3 },
            }),
            (0usize..3, 0usize..8).prop_map(|(i, t)| {
                let mut tau = vec![0; 3];
                tau[i] = t;
                AttackScenario::Delay { tau }
            }),
            (1usize..=3, -1.0f64..1.0).prop_map(|(i, c)| AttackScenario::Replay {
                constants: BTreeMap::from([(i, c)]),
            }),
        ]
    }

    proptest! {
        #[test]
        fn attacks_respect_budget_and_keep_inputs(seed in 0u64..1000, scenario in scenario_strategy()) {
            let clean = traj(3, 20, seed);
            let att = apply_attack(&clean, &scenario, &AttackBudget::new(1), None).unwrap();
            prop_assert_eq!(att.inputs(), clean.inputs());
            let modified = (0..3).filter(|&r| att.outputs().row(r) != clean.outputs().row(r)).count();
            prop_assert!(modified <= 1);
        }

        #[test]
        fn null_attacks_are_identity(seed in 0u64..1000) {
            let clean = traj(3, 15, seed);
            let zero = AttackScenario::Injection {
                targets: vec![2],
                onset: 0,
                signal: InjectionSignal::Custom(Arc::new(|_, _| 0.0)),
            };
            let no_delay = AttackScenario::Delay { tau: vec![0, 0, 0] };
            let no_replay = AttackScenario::Replay { constants: BTreeMap::new() };
            for s in [zero, no_delay, no_replay] {
                let att = apply_attack(&clean, &s, &AttackBudget::new(1), None).unwrap();
                prop_assert_eq!(&att, &clean);
            }
        }
    }
}

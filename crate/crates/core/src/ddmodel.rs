//! Learning the per-subset predictors Λ_j with 𝒳_j[k+1] = Λ_j [u[k]; 𝒳_j[k]].
//!
//! The stacked data `D = [U_{n,T}; X̂_{j,n,T}]` has m(n+1)+Qn rows but its
//! rank can never exceed n + m(n+1): every column is a linear image of
//! (x[k−n], u[k−n..k]). The certificate therefore asks for that rank and
//! records the row count separately; Λ is the minimum-norm solution
//! obtained through a truncated pseudo-inverse, which is exact on every
//! reachable [u; 𝒳] and coincides with [B̄ | Ā] when Q = 1.

use serde::{Deserialize, Serialize};

use crate::attacks::{enumerate_subsets, project_outputs, SensorSubset};
use crate::datamat::{
    build_subset_matrices, hankel, is_persistently_exciting, SubsetDataMatrices, Trajectory,
};
use crate::error::{Error, Result};
use crate::numkit::{from_rows, max_abs, numerical_rank, pseudo_inverse, to_rows, Matrix, Tolerance, Vector};
use crate::plant::{extended_observability, StateSpace};

/// ñ = (m+Q)n + 1.
pub fn excitation_order(m: usize, q: usize, n: usize) -> usize {
    (m + q) * n + 1
}

/// T ≥ (m+1)ñ, the horizon needed for exact learning.
pub fn min_horizon(m: usize, q: usize, n: usize) -> usize {
    (m + 1) * excitation_order(m, q, n)
}

/// Highest rank [U; X̂] can reach for an observable n-state subset.
pub fn full_rank(n: usize, m: usize) -> usize {
    n + m * (n + 1)
}

/// m(n+1) + Qn, the number of rows of [U; X̂].
pub fn stacked_rows(n: usize, m: usize, q: usize) -> usize {
    m * (n + 1) + q * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCondition {
    pub holds: bool,
    pub observed: usize,
    pub required: usize,
    pub stacked_rows: usize,
}

pub fn rank_condition(mats: &SubsetDataMatrices, tol: &Tolerance) -> Result<RankCondition> {
    let m = mats.input_dim();
    let observed = numerical_rank(&mats.stacked(), tol)?;
    let required = full_rank(mats.n, m);
    Ok(RankCondition {
        holds: observed == required,
        observed,
        required,
        stacked_rows: stacked_rows(mats.n, m, mats.q),
    })
}

/// One learned predictor together with its rank certificate and fit residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedSubset {
    pub subset: SensorSubset,
    pub lambda: Matrix,
    /// ‖X̂_{n+1} − Λ [U; X̂_n]‖_max on the training window.
    pub residual: f64,
    pub certificate: RankCondition,
}

impl LearnedSubset {
    pub fn state_dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.lambda.ncols() - self.lambda.nrows()
    }

    pub fn predict(&self, u_k: &Vector, x_k: &Vector) -> Result<Vector> {
        predict(&self.lambda, u_k, x_k)
    }
}

pub fn learn_lambda(mats: &SubsetDataMatrices, tol: &Tolerance) -> Result<LearnedSubset> {
    let certificate = rank_condition(mats, tol)?;
    if !certificate.holds {
        return Err(Error::Learning {
            subset_id: mats.subset.id,
            indices: mats.subset.indices.clone(),
            observed: certificate.observed,
            required: certificate.required,
        });
    }
    let d = mats.stacked();
    let (pinv, _) = pseudo_inverse(&d, tol)?;
    let lambda = &mats.xhat_n1 * pinv;
    let residual = max_abs(&(&mats.xhat_n1 - &lambda * &d));
    Ok(LearnedSubset {
        subset: mats.subset.clone(),
        lambda,
        residual,
        certificate,
    })
}

/// Λ [u_k; x_k].
pub fn predict(lambda: &Matrix, u_k: &Vector, x_k: &Vector) -> Result<Vector> {
    if x_k.len() != lambda.nrows() || u_k.len() + x_k.len() != lambda.ncols() {
        return Err(Error::InvalidInput(format!(
            "predict: Λ is {}x{}, got u of length {} and state of length {}",
            lambda.nrows(),
            lambda.ncols(),
            u_k.len(),
            x_k.len()
        )));
    }
    let m = u_k.len();
    Ok(lambda.columns(0, m) * u_k + lambda.columns(m, x_k.len()) * x_k)
}

/// Predictors for every subset of N − M sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenModel {
    pub n: usize,
    pub m: usize,
    pub sensors: usize,
    pub max_attacked: usize,
    pub t: usize,
    pub pe_seed: Option<u64>,
    pub entries: Vec<LearnedSubset>,
}

impl DataDrivenModel {
    pub fn q(&self) -> usize {
        self.sensors - self.max_attacked
    }

    pub fn with_pe_seed(mut self, seed: u64) -> Self {
        self.pe_seed = Some(seed);
        self
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            sensors: self.sensors,
            max_attacked: self.max_attacked,
            n: self.n,
            m: self.m,
            t: self.t,
            subsets: self
                .entries
                .iter()
                .map(|e| SubsetRecord {
                    id: e.subset.id,
                    indices: e.subset.indices.clone(),
                    lambda: to_rows(&e.lambda),
                    residual: e.residual,
                    observed_rank: e.certificate.observed,
                    required_rank: e.certificate.required,
                })
                .collect(),
            pe_seed: self.pe_seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.to_model()
    }
}

/// Learned-model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "N")]
    pub sensors: usize,
    #[serde(rename = "M")]
    pub max_attacked: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub subsets: Vec<SubsetRecord>,
    pub pe_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    pub id: usize,
    pub indices: Vec<usize>,
    pub lambda: Vec<Vec<f64>>,
    pub residual: f64,
    pub observed_rank: usize,
    pub required_rank: usize,
}

impl ModelFile {
    pub fn to_model(&self) -> Result<DataDrivenModel> {
        if self.max_attacked >= self.sensors || self.n == 0 || self.m == 0 {
            return Err(Error::Format(format!(
                "need N > M and n, m ≥ 1, got N = {}, M = {}, n = {}, m = {}",
                self.sensors, self.max_attacked, self.n, self.m
            )));
        }
        let q = self.sensors - self.max_attacked;
        let rows = (q + self.m) * self.n;
        let mut entries = Vec::with_capacity(self.subsets.len());
        for rec in &self.subsets {
            let subset = SensorSubset::new(rec.id, rec.indices.clone())?;
            if subset.cardinality() != q || subset.indices.iter().any(|&i| i > self.sensors) {
                return Err(Error::Format(format!("subset {subset} does not fit N = {}, M = {}", self.sensors, self.max_attacked)));
            }
            let lambda = from_rows(&rec.lambda)?;
            if lambda.nrows() != rows || lambda.ncols() != rows + self.m {
                return Err(Error::Format(format!(
                    "Λ for subset {} is {}x{}, expected {rows}x{}",
                    rec.id,
                    lambda.nrows(),
                    lambda.ncols(),
                    rows + self.m
                )));
            }
            entries.push(LearnedSubset {
                subset,
                lambda,
                residual: rec.residual,
                certificate: RankCondition {
                    holds: rec.observed_rank == rec.required_rank,
                    observed: rec.observed_rank,
                    required: rec.required_rank,
                    stacked_rows: stacked_rows(self.n, self.m, q),
                },
            });
        }
        Ok(DataDrivenModel {
            n: self.n,
            m: self.m,
            sensors: self.sensors,
            max_attacked: self.max_attacked,
            t: self.t,
            pe_seed: self.pe_seed,
            entries,
        })
    }
}

/// Certificates for every subset, without stopping at the first failure.
pub fn rank_report(traj: &Trajectory, n: usize, max_attacked: usize, t: usize, tol: &Tolerance) -> Result<Vec<(SensorSubset, RankCondition)>> {
    enumerate_subsets(traj.output_dim(), max_attacked)?
        .into_iter()
        .map(|s| {
            let mats = build_subset_matrices(traj, &s, n, t)?;
            let rc = rank_condition(&mats, tol)?;
            Ok((s, rc))
        })
        .collect()
}

/// Learn Λ_j for every subset from the first n + T samples of an attack-free trajectory.
pub fn learn_model(traj: &Trajectory, n: usize, max_attacked: usize, t: usize, tol: &Tolerance) -> Result<DataDrivenModel> {
    tol.validate()?;
    let sensors = traj.output_dim();
    let m = traj.input_dim();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("need n ≥ 1 and at least one input".into()));
    }
    if max_attacked >= sensors {
        return Err(Error::InvalidInput(format!("need N > M, got N = {sensors}, M = {max_attacked}")));
    }
    let q = sensors - max_attacked;
    let horizon = min_horizon(m, q, n);
    if t < horizon {
        return Err(Error::Precondition(format!(
            "horizon T = {t} is below (m+1)ñ = {horizon} for n = {n}, m = {m}, Q = {q}"
        )));
    }
    let mut entries = Vec::new();
    for subset in enumerate_subsets(sensors, max_attacked)? {
        let mats = build_subset_matrices(traj, &subset, n, t)?;
        entries.push(learn_lambda(&mats, tol)?);
    }
    Ok(DataDrivenModel {
        n,
        m,
        sensors,
        max_attacked,
        t,
        pe_seed: None,
        entries,
    })
}

/// Whether the training inputs u[n..n+T−1] are persistently exciting of order ñ.
pub fn training_input_is_pe(traj: &Trajectory, n: usize, q: usize, t: usize, tol: &Tolerance) -> Result<bool> {
    if traj.len() < n + t {
        return Err(Error::TooShort { required: n + t, actual: traj.len() });
    }
    let u = traj.inputs().columns(n, t).into_owned();
    is_persistently_exciting(&u, excitation_order(traj.input_dim(), q, n), tol)
}

/// Model-based decomposition Z_{j,0,n,T} = [𝒪 𝒯] [X_{0,T}; U_{0,n,T}].
#[derive(Debug, Clone, PartialEq)]
pub struct RankOracleReport {
    pub o_jn: Matrix,
    pub t_jn: Matrix,
    pub rank_o: usize,
    pub rank_t: usize,
    pub predicted_max_rank: usize,
    pub observed_rank_z: usize,
}

impl RankOracleReport {
    pub fn within_bound(&self) -> bool {
        self.observed_rank_z <= self.predicted_max_rank
    }
}

/// Block Toeplitz map from u[0..n−1] to z[0..n−1]; block (i, l) = C A^{i−l−1} B for l < i.
pub fn toeplitz_matrix(a: &Matrix, b: &Matrix, c: &Matrix, n: usize) -> Matrix {
    let q = c.nrows();
    let m = b.ncols();
    let mut t = Matrix::zeros(q * n, m * n);
    let mut markov = Vec::with_capacity(n);
    let mut v = b.clone();
    for _ in 0..n {
        markov.push(c * &v);
        v = a * v;
    }
    for i in 0..n {
        for l in 0..i {
            t.view_mut((i * q, l * m), (q, m)).copy_from(&markov[i - l - 1]);
        }
    }
    t
}

pub fn rank_obsv_oracle(ss: &StateSpace, subset: &SensorSubset, n: usize, traj: &Trajectory, tol: &Tolerance) -> Result<RankOracleReport> {
    if n == 0 || traj.len() < n {
        return Err(Error::TooShort { required: n.max(1), actual: traj.len() });
    }
    let c = subset.select_rows(ss.c())?;
    let a = ss.a();
    let o = extended_observability(a, &c, n)?;
    let t_jn = toeplitz_matrix(a, ss.b(), &c, n);
    let rank_o = numerical_rank(&o, tol)?;
    let rank_t = numerical_rank(&t_jn, tol)?;
    let z = project_outputs(traj.outputs(), subset)?;
    let cols = traj.len() - n + 1;
    let observed_rank_z = numerical_rank(&hankel(&z, 0, n, cols)?, tol)?;
    Ok(RankOracleReport {
        o_jn: o,
        t_jn,
        rank_o,
        rank_t,
        predicted_max_rank: rank_o + rank_t,
        observed_rank_z,
    })
}

//! LTI plant models: ZOH discretization, simulation, structural tests
//! (observability, controllability, relative degree), the three-mass
//! benchmark, and the ARX / extended-state-space realizations that serve as
//! model-based oracles for the data-driven predictors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{enumerate_subsets, SensorSubset};
use crate::datamat::Trajectory;
use crate::error::{Error, Result};
use crate::numkit::{
    characteristic_polynomial, ensure_finite, from_rows, matrix_exponential, matrix_power,
    numerical_rank, to_rows, Matrix, Tolerance, Vector,
};

fn check_dims(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || c.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "inconsistent dimensions: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("state dimension must be positive".into()));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite(c, "C")
}

/// ẋ = A_c x + B_c u, y = C x.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateSpace {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl ContinuousStateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_dims(&a, &b, &c)?;
        Ok(ContinuousStateSpace { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }
}

/// x[k+1] = A x[k] + B u[k], y_i[k] = C_i x[k], one scalar sensor per row of C.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_dims(&a, &b, &c)?;
        Ok(StateSpace { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn sensor_count(&self) -> usize {
        self.c.nrows()
    }

    /// Row C_i of sensor `i` (1-based).
    pub fn sensor_row(&self, sensor: usize) -> Result<Matrix> {
        if sensor == 0 || sensor > self.sensor_count() {
            return Err(Error::InvalidInput(format!(
                "sensor {sensor} out of range 1..={}",
                self.sensor_count()
            )));
        }
        Ok(self.c.rows(sensor - 1, 1).into_owned())
    }

    /// Same dynamics, C multiplied by `factor`.
    pub fn with_output_scale(&self, factor: f64) -> Self {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * factor,
        }
    }

    /// Same dynamics, outputs restricted to `subset`.
    pub fn restrict(&self, subset: &SensorSubset) -> Result<Self> {
        StateSpace::new(self.a.clone(), self.b.clone(), subset.select_rows(&self.c)?)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.state_dim(),
            m: self.input_dim(),
            sensors: self.sensor_count(),
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.to_state_space()
    }
}

/// Plant model file: `{"n","m","N","A","B","C"}` with row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub sensors: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn to_state_space(&self) -> Result<StateSpace> {
        let ss = StateSpace::new(from_rows(&self.a)?, from_rows(&self.b)?, from_rows(&self.c)?)?;
        if ss.state_dim() != self.n || ss.input_dim() != self.m || ss.sensor_count() != self.sensors {
            return Err(Error::Format(format!(
                "declared (n, m, N) = ({}, {}, {}) but matrices give ({}, {}, {})",
                self.n,
                self.m,
                self.sensors,
                ss.state_dim(),
                ss.input_dim(),
                ss.sensor_count()
            )));
        }
        Ok(ss)
    }
}

/// Exact zero-order-hold discretization through the exponential of
/// `[[A_c Ts, B_c Ts], [0, 0]]`.
pub fn discretize_zoh(css: &ContinuousStateSpace, ts: f64) -> Result<StateSpace> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::InvalidInput(format!("sampling time must be positive, got {ts}")));
    }
    let n = css.a.nrows();
    let m = css.b.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&css.a * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(&css.b * ts));
    let e = matrix_exponential(&aug)?;
    StateSpace::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        css.c.clone(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// n × (L+1)
    pub states: Matrix,
    /// p × L
    pub outputs: Matrix,
}

pub fn simulate(ss: &StateSpace, x0: &Vector, u: &Matrix) -> Result<Simulation> {
    let n = ss.state_dim();
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("x0 has {} entries, state has {n}", x0.len())));
    }
    if u.nrows() != ss.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input has {} channels, plant has {}",
            u.nrows(),
            ss.input_dim()
        )));
    }
    let len = u.ncols();
    let mut states = Matrix::zeros(n, len + 1);
    let mut outputs = Matrix::zeros(ss.sensor_count(), len);
    states.set_column(0, x0);
    for k in 0..len {
        let x = states.column(k).into_owned();
        outputs.set_column(k, &(&ss.c * &x));
        states.set_column(k + 1, &(&ss.a * &x + &ss.b * u.column(k)));
    }
    Ok(Simulation { states, outputs })
}

/// Simulate and package the result as a trajectory whose first sample is time `start`.
pub fn simulate_trajectory(ss: &StateSpace, x0: &Vector, u: &Matrix, start: i64) -> Result<Trajectory> {
    let sim = simulate(ss, x0, u)?;
    Trajectory::new(u.clone(), sim.outputs, start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelativeDegree {
    Finite(usize),
    /// No significant Markov parameter within the 2n search cap.
    Infinite,
}

impl RelativeDegree {
    pub fn finite(self) -> Option<usize> {
        match self {
            RelativeDegree::Finite(r) => Some(r),
            RelativeDegree::Infinite => None,
        }
    }
}

/// C_j A^i B for i = 0..count, single-input plants only.
pub fn markov_parameters(ss: &StateSpace, sensor: usize, count: usize) -> Result<Vec<f64>> {
    if ss.input_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "relative degree is defined here for single-input plants, got m = {}",
            ss.input_dim()
        )));
    }
    let cj = ss.sensor_row(sensor)?;
    let mut v = ss.b.clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push((&cj * &v)[(0, 0)]);
        v = &ss.a * v;
    }
    Ok(out)
}

/// r_j = 1 + first i with a significant C_j A^i B, searched over i ≤ 2n.
/// "Significant" means above `tol.significance(peak)`, where peak is the
/// largest |C_j A^i B| in the search window.
pub fn relative_degree(ss: &StateSpace, sensor: usize, tol: &Tolerance) -> Result<RelativeDegree> {
    let h = markov_parameters(ss, sensor, 2 * ss.state_dim() + 1)?;
    let peak = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let threshold = tol.significance(peak);
    Ok(h.iter()
        .position(|v| v.abs() > threshold)
        .map_or(RelativeDegree::Infinite, |i| RelativeDegree::Finite(i + 1)))
}

pub fn observability_matrix(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    extended_observability(a, c, a.nrows())
}

/// [C; CA; …; CA^{depth−1}].
pub fn extended_observability(a: &Matrix, c: &Matrix, depth: usize) -> Result<Matrix> {
    let n = a.nrows();
    if !a.is_square() || c.ncols() != n {
        return Err(Error::InvalidInput("observability matrix: dimension mismatch".into()));
    }
    let p = c.nrows();
    let mut o = Matrix::zeros(p * depth, n);
    let mut block = c.clone();
    for i in 0..depth {
        o.view_mut((i * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(o)
}

pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::InvalidInput("controllability matrix: dimension mismatch".into()));
    }
    let m = b.ncols();
    let mut k = Matrix::zeros(n, m * n);
    let mut block = b.clone();
    for i in 0..n {
        k.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(k)
}

pub fn is_observable(a: &Matrix, c_sub: &Matrix, tol: &Tolerance) -> Result<bool> {
    let o = observability_matrix(a, c_sub)?;
    Ok(numerical_rank(&o, tol)? == a.nrows())
}

pub fn is_controllable(a: &Matrix, b: &Matrix, tol: &Tolerance) -> Result<bool> {
    let k = controllability_matrix(a, b)?;
    Ok(numerical_rank(&k, tol)? == a.nrows())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetObservability {
    pub observable: bool,
    pub failing: Vec<SensorSubset>,
}

/// Observability of (A, C_J) for every sensor subset J of size `q`.
pub fn q_sensor_observable(ss: &StateSpace, q: usize, tol: &Tolerance) -> Result<SubsetObservability> {
    let n_sensors = ss.sensor_count();
    if q == 0 || q > n_sensors {
        return Err(Error::InvalidInput(format!("need 0 < Q <= N, got Q = {q}, N = {n_sensors}")));
    }
    let mut failing = Vec::new();
    for subset in enumerate_subsets(n_sensors, n_sensors - q)? {
        if !is_observable(&ss.a, &subset.select_rows(&ss.c)?, tol)? {
            failing.push(subset);
        }
    }
    Ok(SubsetObservability {
        observable: failing.is_empty(),
        failing,
    })
}

/// Physical parameters of the three interconnected mass–spring–damper units (SI).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdParameters {
    pub k: [f64; 3],
    pub mass: [f64; 3],
    pub damping: [f64; 3],
}

impl Default for MsdParameters {
    fn default() -> Self {
        MsdParameters {
            k: [2.0, 3.0, 1.0],
            mass: [1.0, 2.0, 10.0],
            damping: [3.0, 4.0, 2.0],
        }
    }
}

/// Sampling time of the benchmark, seconds.
pub const MSD_SAMPLING_TIME: f64 = 1.3;

impl MsdParameters {
    /// State (ℓ₁, ℓ̇₁, ℓ₂, ℓ̇₂, ℓ₃, ℓ̇₃), force input on mass 1, outputs (ℓ₂, ℓ₃, ℓ̇₃).
    pub fn continuous(&self) -> ContinuousStateSpace {
        let [k1, k2, k3] = self.k;
        let [m1, m2, m3] = self.mass;
        let [b1, b2, b3] = self.damping;
        #[rustfmt::skip]
        let a = Matrix::from_row_slice(6, 6, &[
            0.0,      1.0,      0.0,      0.0,      0.0,      0.0,
            -k1 / m1, -b1 / m1, 0.0,      0.0,      0.0,      0.0,
            0.0,      0.0,      0.0,      1.0,      0.0,      0.0,
            1.0 / m2, 0.0,      -k2 / m2, -b2 / m2, 0.0,      0.0,
            0.0,      0.0,      0.0,      0.0,      0.0,      1.0,
            0.0,      0.0,      1.0 / m3, 0.0,      -k3 / m3, -b3 / m3,
        ]);
        let b = Matrix::from_column_slice(6, 1, &[0.0, 1.0 / m1, 0.0, 0.0, 0.0, 0.0]);
        #[rustfmt::skip]
        let c = Matrix::from_row_slice(3, 6, &[
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        ContinuousStateSpace::new(a, b, c).expect("benchmark dimensions are consistent")
    }
}

pub fn msd_benchmark() -> ContinuousStateSpace {
    MsdParameters::default().continuous()
}

/// The benchmark discretized at 1.3 s.
pub fn msd_discrete() -> StateSpace {
    discretize_zoh(&msd_benchmark(), MSD_SAMPLING_TIME).expect("benchmark discretizes")
}

/// z[k] + Υ_n z[k−1] + … + Υ_1 z[k−n] = Π_n u[k−1] + … + Π_1 u[k−n].
/// `upsilon[i]` and `pi[i]` hold Υ_{i+1} and Π_{i+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub order: usize,
    pub output_dim: usize,
    pub input_dim: usize,
    pub upsilon: Vec<Matrix>,
    pub pi: Vec<Matrix>,
}

impl ArxModel {
    /// Largest ∞-norm equation error over every k with a full history.
    pub fn recursion_residual(&self, z: &Matrix, u: &Matrix) -> Result<f64> {
        let n = self.order;
        if z.nrows() != self.output_dim || u.nrows() != self.input_dim || z.ncols() != u.ncols() {
            return Err(Error::InvalidInput("ARX residual: dimension mismatch".into()));
        }
        let mut worst = 0.0_f64;
        for k in n..z.ncols() {
            let mut e = z.column(k).into_owned();
            for i in 0..n {
                e += &self.upsilon[i] * z.column(k - n + i);
                e -= &self.pi[i] * u.column(k - n + i);
            }
            worst = worst.max(e.amax());
        }
        Ok(worst)
    }
}

/// ARX realization of the subset outputs from the characteristic polynomial
/// (Cayley–Hamilton): Υ_i = a_{i−1} I and Π_i = Σ_{j≥i} a_j C A^{j−i} B.
pub fn ss_to_arx(ss: &StateSpace, subset: &SensorSubset, tol: &Tolerance) -> Result<ArxModel> {
    let c = subset.select_rows(&ss.c)?;
    if !is_observable(&ss.a, &c, tol)? {
        return Err(Error::Precondition(format!("(A, C) is not observable for subset {subset}")));
    }
    if !is_controllable(&ss.a, &ss.b, tol)? {
        return Err(Error::Precondition("(A, B) is not controllable".into()));
    }
    let n = ss.state_dim();
    let q = c.nrows();
    let m = ss.input_dim();
    let mut a = characteristic_polynomial(&ss.a)?;
    a.push(1.0);
    let markov: Vec<Matrix> = (0..n).map(|i| &c * matrix_power(&ss.a, i) * &ss.b).collect();
    let upsilon = (0..n).map(|i| Matrix::identity(q, q) * a[i]).collect();
    let pi = (1..=n)
        .map(|i| {
            (i..=n).fold(Matrix::zeros(q, m), |acc, j| acc + &markov[j - i] * a[j])
        })
        .collect();
    Ok(ArxModel {
        order: n,
        output_dim: q,
        input_dim: m,
        upsilon,
        pi,
    })
}

/// 𝒳[k+1] = Ā 𝒳[k] + B̄ u[k] on the history state (z block then u block, oldest first).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedStateSpace {
    pub a_bar: Matrix,
    pub b_bar: Matrix,
}

impl ExtendedStateSpace {
    /// `[B̄ | Ā]`, the column layout of a learned predictor.
    pub fn predictor_matrix(&self) -> Matrix {
        let rows = self.a_bar.nrows();
        let m = self.b_bar.ncols();
        let mut out = Matrix::zeros(rows, m + rows);
        out.columns_mut(0, m).copy_from(&self.b_bar);
        out.columns_mut(m, rows).copy_from(&self.a_bar);
        out
    }
}

pub fn extended_state_space(arx: &ArxModel) -> ExtendedStateSpace {
    let n = arx.order;
    let q = arx.output_dim;
    let m = arx.input_dim;
    let dim = (q + m) * n;
    let zo = q * n; // offset of the u block
    let mut a_bar = Matrix::zeros(dim, dim);
    let mut b_bar = Matrix::zeros(dim, m);
    for blk in 0..n.saturating_sub(1) {
        a_bar
            .view_mut((blk * q, (blk + 1) * q), (q, q))
            .copy_from(&Matrix::identity(q, q));
        a_bar
            .view_mut((zo + blk * m, zo + (blk + 1) * m), (m, m))
            .copy_from(&Matrix::identity(m, m));
    }
    let last = (n - 1) * q;
    for i in 0..n {
        a_bar.view_mut((last, i * q), (q, q)).copy_from(&(-&arx.upsilon[i]));
        a_bar.view_mut((last, zo + i * m), (q, m)).copy_from(&arx.pi[i]);
    }
    b_bar
        .view_mut((zo + (n - 1) * m, 0), (m, m))
        .copy_from(&Matrix::identity(m, m));
    ExtendedStateSpace { a_bar, b_bar }
}

/// Shape of a random test plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomPlantShape {
    pub n: usize,
    pub m: usize,
    pub sensors: usize,
    /// Every subset of this many sensors must be observable.
    pub observable_subset_size: usize,
}

const RANDOM_PLANT_ATTEMPTS: usize = 1000;

/// Seeded plant with uniform(−1, 1) entries, A rescaled to a spectral
/// radius drawn from [0.3, 0.95], resampled until controllable and
/// observable from every subset of the requested size.
pub fn random_plant(shape: RandomPlantShape, seed: u64, tol: &Tolerance) -> Result<StateSpace> {
    let RandomPlantShape { n, m, sensors, observable_subset_size } = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PLANT_ATTEMPTS {
        let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(sensors, n, |_, _| rng.random_range(-1.0..1.0));
        let rho = spectral_radius(&a);
        let target: f64 = rng.random_range(0.3..0.95);
        if rho > 1e-6 {
            a *= target / rho;
        }
        let ss = StateSpace::new(a, b, c)?;
        if is_controllable(&ss.a, &ss.b, tol)?
            && q_sensor_observable(&ss, observable_subset_size, tol)?.observable
        {
            return Ok(ss);
        }
    }
    Err(Error::GenerationFailure {
        order: n,
        attempts: RANDOM_PLANT_ATTEMPTS,
    })
}

/// Plant of order n with N = n + 1 sensors where sensors 1..=n share a blind
/// eigendirection: the subset {1, …, n} is unobservable while every subset
/// of n sensors that includes sensor N is observable. (A, B) is controllable.
pub fn plant_with_blind_subset(n: usize, seed: u64, tol: &Tolerance) -> Result<(StateSpace, SensorSubset)> {
    if n == 0 {
        return Err(Error::InvalidInput("order must be positive".into()));
    }
    let sensors = n + 1;
    let blind = SensorSubset::new(1, (1..=n).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_PLANT_ATTEMPTS {
        // A = S diag(λ) S⁻¹ with blind direction v = S e₁
        let s = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let Some(s_inv) = s.clone().try_inverse() else { continue };
        let lambda = Vector::from_fn(n, |_, _| rng.random_range(-0.9..0.9));
        let a = &s * Matrix::from_diagonal(&lambda) * &s_inv;
        let b = Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let v = s.column(0).into_owned();
        let mut c = Matrix::from_fn(sensors, n, |_, _| rng.random_range(-1.0..1.0));
        for row in 0..n {
            let along = (c.row(row) * &v)[(0, 0)] / v.norm_squared();
            let projected = c.row(row) - v.transpose() * along;
            c.set_row(row, &projected);
        }
        let ss = StateSpace::new(a, b, c)?;
        if !is_controllable(&ss.a, &ss.b, tol)? || is_observable(&ss.a, &blind.select_rows(&ss.c)?, tol)? {
            continue;
        }
        let mut others = true;
        for sub in enumerate_subsets(sensors, 1)? {
            if sub.contains(sensors) && !is_observable(&ss.a, &sub.select_rows(&ss.c)?, tol)? {
                others = false;
                break;
            }
        }
        if others {
            return Ok((ss, blind));
        }
    }
    Err(Error::GenerationFailure {
        order: n,
        attempts: RANDOM_PLANT_ATTEMPTS,
    })
}

pub fn spectral_radius(a: &Matrix) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.norm()))
}

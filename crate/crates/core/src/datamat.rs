//! Trajectories, Hankel matrices, persistency of excitation and the
//! per-subset data matrices used to learn the one-step predictors.
//!
//! The history state of a subset at time k stacks the last n subset
//! outputs followed by the last n inputs, oldest first:
//!
//! ```text
//! X_j[k] = [ z_j[k-n]; ...; z_j[k-1]; u[k-n]; ...; u[k-1] ]
//! ```

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::{project_outputs, SensorSubset};
use crate::error::{Error, Result};
use crate::numkit::{ensure_finite, numerical_rank, Matrix, Tolerance, Vector};

/// Time-indexed input and output record. Column c holds time `start + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    u: Matrix,
    y: Matrix,
    start: i64,
}

impl Trajectory {
    pub fn new(u: Matrix, y: Matrix, start: i64) -> Result<Self> {
        if u.ncols() != y.ncols() {
            return Err(Error::InvalidInput(format!(
                "input has {} samples but output has {}",
                u.ncols(),
                y.ncols()
            )));
        }
        ensure_finite(&u, "trajectory input")?;
        ensure_finite(&y, "trajectory output")?;
        Ok(Trajectory { u, y, start })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.u
    }

    pub fn outputs(&self) -> &Matrix {
        &self.y
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Same input, replaced output record.
    pub fn with_outputs(&self, y: Matrix) -> Result<Self> {
        Trajectory::new(self.u.clone(), y, self.start)
    }

    /// Sub-trajectory of `len` samples starting at column `from`.
    pub fn window(&self, from: usize, len: usize) -> Result<Self> {
        if from + len > self.len() {
            return Err(Error::TooShort {
                required: from + len,
                actual: self.len(),
            });
        }
        Trajectory::new(
            self.u.columns(from, len).into_owned(),
            self.y.columns(from, len).into_owned(),
            self.start + from as i64,
        )
    }

    /// CSV with header `k,u_1..u_m,y_1..y_N`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.input_dim()).map(|i| format!("u_{i}")));
        header.extend((1..=self.output_dim()).map(|i| format!("y_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for c in 0..self.len() {
            let mut row = vec![(self.start + c as i64).to_string()];
            row.extend(self.u.column(c).iter().map(|v| format!("{v:.16e}")));
            row.extend(self.y.column(c).iter().map(|v| format!("{v:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers()?.clone();
        if header.get(0) != Some("k") {
            return Err(Error::Format("first csv column must be `k`".into()));
        }
        let m = header.iter().filter(|h| h.starts_with("u_")).count();
        let p = header.iter().filter(|h| h.starts_with("y_")).count();
        if 1 + m + p != header.len() {
            return Err(Error::Format(format!("unexpected csv header {header:?}")));
        }
        let mut ks = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Format(format!("row {} has {} fields", line + 1, rec.len())));
            }
            let k: i64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad time index", line + 1)))?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: bad number `{f}`", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            ks.push(k);
            cols.push(vals);
        }
        if let Some(w) = ks.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(Error::Format(format!("time index jumps from {} to {}", w[0], w[1])));
        }
        let len = cols.len();
        let u = Matrix::from_fn(m, len, |i, c| cols[c][i]);
        let y = Matrix::from_fn(p, len, |i, c| cols[c][m + i]);
        Trajectory::new(u, y, ks.first().copied().unwrap_or(0))
    }
}

/// Block Hankel matrix with `depth` block rows and `cols` columns; block
/// (r, c) is `signal[:, start + r + c]`.
pub fn hankel(signal: &Matrix, start: usize, depth: usize, cols: usize) -> Result<Matrix> {
    if depth == 0 || cols == 0 {
        return Err(Error::InvalidInput("hankel depth and column count must be positive".into()));
    }
    let needed = start + depth - 1 + cols - 1;
    if needed >= signal.ncols() {
        return Err(Error::InvalidWindow {
            start,
            depth,
            cols,
            needed,
            len: signal.ncols(),
        });
    }
    let d = signal.nrows();
    let mut h = Matrix::zeros(d * depth, cols);
    for r in 0..depth {
        h.view_mut((r * d, 0), (d, cols))
            .copy_from(&signal.columns(start + r, cols));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeCertificate {
    pub order: usize,
    pub observed_rank: usize,
    pub required_rank: usize,
}

impl PeCertificate {
    pub fn holds(&self) -> bool {
        self.observed_rank == self.required_rank
    }
}

/// Rank of the depth-`order` Hankel matrix of `u` against the full rank `order·m`.
pub fn pe_certificate(u: &Matrix, order: usize, tol: &Tolerance) -> Result<PeCertificate> {
    let len = u.ncols();
    if order == 0 {
        return Err(Error::InvalidInput("excitation order must be positive".into()));
    }
    if len < order {
        return Err(Error::TooShort {
            required: order,
            actual: len,
        });
    }
    let h = hankel(u, 0, order, len - order + 1)?;
    Ok(PeCertificate {
        order,
        observed_rank: numerical_rank(&h, tol)?,
        required_rank: order * u.nrows(),
    })
}

pub fn is_persistently_exciting(u: &Matrix, order: usize, tol: &Tolerance) -> Result<bool> {
    Ok(pe_certificate(u, order, tol)?.holds())
}

/// Shortest signal whose depth-`order` Hankel matrix can have full row rank.
pub fn min_pe_length(m: usize, order: usize) -> usize {
    order * m + order - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeInput {
    pub u: Matrix,
    /// Seed that produced `u`; may be later than the requested one.
    pub seed: u64,
}

const PE_ATTEMPTS: usize = 16;

/// Seeded uniform(−1, 1) input of `len` samples, certified persistently
/// exciting of `order`. Retries with the next seed up to 16 times.
pub fn generate_pe_input(
    m: usize,
    len: usize,
    order: usize,
    seed: u64,
    tol: &Tolerance,
) -> Result<PeInput> {
    if m == 0 || order == 0 {
        return Err(Error::InvalidInput("input dimension and order must be positive".into()));
    }
    let needed = min_pe_length(m, order);
    if len < needed {
        return Err(Error::Precondition(format!(
            "a signal of length {len} cannot be persistently exciting of order {order} with {m} inputs (need {needed})"
        )));
    }
    for attempt in 0..PE_ATTEMPTS as u64 {
        let s = seed.wrapping_add(attempt);
        let u = uniform_signal(m, len, s);
        if is_persistently_exciting(&u, order, tol)? {
            return Ok(PeInput { u, seed: s });
        }
    }
    Err(Error::GenerationFailure {
        order,
        attempts: PE_ATTEMPTS,
    })
}

/// Seeded uniform(−1, 1) samples, no excitation certificate.
pub fn uniform_signal(m: usize, len: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major fill keeps the stream ordered by time
    let mut u = Matrix::zeros(m, len);
    for c in 0..len {
        for r in 0..m {
            u[(r, c)] = rng.random_range(-1.0..1.0);
        }
    }
    u
}

/// History state X_j[k] built from subset outputs `z` and inputs `u`
/// (both indexed by column). Needs `n <= k <= len`.
pub fn history_state(z: &Matrix, u: &Matrix, k: usize, n: usize) -> Result<Vector> {
    if k < n || k > z.ncols() || k > u.ncols() {
        return Err(Error::InvalidInput(format!(
            "history state at {k} with depth {n} needs samples {}..{}",
            k as i64 - n as i64,
            k
        )));
    }
    let q = z.nrows();
    let m = u.nrows();
    let mut x = Vector::zeros((q + m) * n);
    for i in 0..n {
        x.rows_mut(i * q, q).copy_from(&z.column(k - n + i));
        x.rows_mut(q * n + i * m, m).copy_from(&u.column(k - n + i));
    }
    Ok(x)
}

fn history_matrix(z: &Matrix, u: &Matrix, n: usize, first: usize, count: usize) -> Result<Matrix> {
    let q = z.nrows();
    let m = u.nrows();
    let mut out = Matrix::zeros((q + m) * n, count);
    for c in 0..count {
        out.set_column(c, &history_state(z, u, first + c, n)?);
    }
    Ok(out)
}

/// `U_{n,T}`, `X̂_{j,n,T}` and `X̂_{j,n+1,T}` for one sensor subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetDataMatrices {
    pub subset: SensorSubset,
    pub u_nt: Matrix,
    pub xhat_n: Matrix,
    pub xhat_n1: Matrix,
    pub n: usize,
    pub t: usize,
    pub q: usize,
}

impl SubsetDataMatrices {
    pub fn input_dim(&self) -> usize {
        self.u_nt.nrows()
    }

    /// `[U_{n,T}; X̂_{j,n,T}]`.
    pub fn stacked(&self) -> Matrix {
        let m = self.u_nt.nrows();
        let rows = m + self.xhat_n.nrows();
        let mut d = Matrix::zeros(rows, self.t);
        d.rows_mut(0, m).copy_from(&self.u_nt);
        d.rows_mut(m, self.xhat_n.nrows()).copy_from(&self.xhat_n);
        d
    }
}

/// Minimum trajectory length for `build_subset_matrices` with depth n and T columns.
pub fn required_length(n: usize, t: usize) -> usize {
    n + t
}

pub fn build_subset_matrices(
    traj: &Trajectory,
    subset: &SensorSubset,
    n: usize,
    t: usize,
) -> Result<SubsetDataMatrices> {
    if n == 0 || t == 0 {
        return Err(Error::InvalidInput("order n and horizon T must be positive".into()));
    }
    let required = required_length(n, t);
    if traj.len() < required {
        return Err(Error::TooShort {
            required,
            actual: traj.len(),
        });
    }
    let z = project_outputs(traj.outputs(), subset)?;
    let u = traj.inputs();
    Ok(SubsetDataMatrices {
        subset: subset.clone(),
        u_nt: u.columns(n, t).into_owned(),
        xhat_n: history_matrix(&z, u, n, n, t)?,
        xhat_n1: history_matrix(&z, u, n, n + 1, t)?,
        n,
        t,
        q: z.nrows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::from_rows;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, v.len(), v)
    }

    /// Naive index oracle for block Hankel matrices.
    fn hankel_oracle(s: &Matrix, start: usize, depth: usize, cols: usize) -> Matrix {
        let d = s.nrows();
        Matrix::from_fn(d * depth, cols, |i, c| s[(i % d, start + i / d + c)])
    }

    #[test]
    fn hankel_scalar_example() {
        let h = hankel(&row(&[1.0, 2.0, 3.0, 4.0]), 0, 2, 3).unwrap();
        let expected = from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(h, expected);
    }

    #[test]
    fn hankel_depth_one_is_slice() {
        let s = row(&[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(hankel(&s, 1, 1, 3).unwrap(), row(&[6.0, 7.0, 8.0]));
    }

    #[test]
    fn hankel_two_dim_matches_oracle() {
        let s = from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]]).unwrap();
        let h = hankel(&s, 1, 2, 2).unwrap();
        let expected =
            from_rows(&[vec![2.0, 3.0], vec![20.0, 30.0], vec![3.0, 4.0], vec![30.0, 40.0]]).unwrap();
        assert_eq!(h, expected);
        assert_eq!(h, hankel_oracle(&s, 1, 2, 2));
    }

    #[test]
    fn hankel_out_of_range() {
        let err = hankel(&row(&[1.0, 2.0, 3.0]), 1, 2, 2).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidWindow { start: 1, depth: 2, cols: 2, needed: 3, len: 3 }
        );
    }

    #[test]
    fn pe_examples() {
        let tol = Tolerance::default();
        assert!(!is_persistently_exciting(&row(&[1.0; 10]), 2, &tol).unwrap());
        assert!(!is_persistently_exciting(&Matrix::zeros(1, 10), 3, &tol).unwrap());
        assert!(is_persistently_exciting(&uniform_signal(1, 50, 3), 5, &tol).unwrap());
        assert!(is_persistently_exciting(&row(&[0.3]), 1, &tol).unwrap());
    }

    #[test]
    fn pe_generation() {
        let tol = Tolerance::default();
        let a = generate_pe_input(1, 41, 19, 7, &tol).unwrap();
        assert!(is_persistently_exciting(&a.u, 19, &tol).unwrap());
        let b = generate_pe_input(1, 41, 19, 7, &tol).unwrap();
        assert_eq!(a, b);
        let one = generate_pe_input(1, 1, 1, 0, &tol).unwrap();
        assert!(is_persistently_exciting(&one.u, 1, &tol).unwrap());
        assert!(matches!(
            generate_pe_input(1, 36, 19, 7, &tol),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn subset_matrices_scalar_example() {
        let u = row(&[0.1, 0.2, 0.3]);
        let y = row(&[1.0, 2.0, 3.0]);
        let traj = Trajectory::new(u, y, 0).unwrap();
        let subset = SensorSubset::new(1, vec![1]).unwrap();
        let mats = build_subset_matrices(&traj, &subset, 1, 2).unwrap();
        assert_eq!(mats.u_nt, row(&[0.2, 0.3]));
        assert_eq!(
            mats.xhat_n,
            from_rows(&[vec![1.0, 2.0], vec![0.1, 0.2]]).unwrap()
        );
        assert_eq!(
            mats.xhat_n1,
            from_rows(&[vec![2.0, 3.0], vec![0.2, 0.3]]).unwrap()
        );
    }

    #[test]
    fn subset_matrices_too_short() {
        let traj = Trajectory::new(Matrix::zeros(1, 5), Matrix::zeros(2, 5), 0).unwrap();
        let subset = SensorSubset::new(1, vec![1, 2]).unwrap();
        assert_eq!(
            build_subset_matrices(&traj, &subset, 2, 4).unwrap_err(),
            Error::TooShort { required: 6, actual: 5 }
        );
    }

    #[test]
    fn history_state_ordering() {
        let z = from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let u = row(&[7.0, 8.0, 9.0]);
        let x = history_state(&z, &u, 3, 2).unwrap();
        assert_eq!(x.as_slice(), &[2.0, 5.0, 3.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn csv_round_trip() {
        let u = uniform_signal(1, 4, 1);
        let y = uniform_signal(3, 4, 2);
        let traj = Trajectory::new(u, y, 5).unwrap();
        let text = traj.to_csv_string();
        assert!(text.starts_with("k,u_1,y_1,y_2,y_3\n5,"));
        let back = Trajectory::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn csv_rejects_gaps() {
        let text = "k,u_1,y_1\n0,1,2\n2,1,2\n";
        assert!(Trajectory::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn hankel_block_rows_are_shifted_slices(seed in 0u64..1000, d in 1usize..3, len in 4usize..30, depth in 1usize..4) {
            prop_assume!(len >= depth);
            let s = uniform_signal(d, len, seed);
            let cols = len - depth + 1;
            let h = hankel(&s, 0, depth, cols).unwrap();
            prop_assert_eq!(&h, &hankel_oracle(&s, 0, depth, cols));
            for r in 0..depth {
                prop_assert_eq!(h.view((r * d, 0), (d, cols)).into_owned(), s.columns(r, cols).into_owned());
            }
        }

        #[test]
        fn pe_is_monotone_in_order(seed in 0u64..1000, m in 1usize..3, len in 10usize..40, order in 2usize..6) {
            let tol = Tolerance::default();
            let u = uniform_signal(m, len, seed);
            prop_assume!(len >= order);
            if is_persistently_exciting(&u, order, &tol).unwrap() {
                for lower in 1..order {
                    prop_assert!(is_persistently_exciting(&u, lower, &tol).unwrap());
                }
            }
        }

        #[test]
        fn generated_input_is_certified(seed in 0u64..500, order in 1usize..8) {
            let tol = Tolerance::default();
            let len = min_pe_length(1, order) + 3;
            let pe = generate_pe_input(1, len, order, seed, &tol).unwrap();
            prop_assert!(is_persistently_exciting(&pe.u, order, &tol).unwrap());
        }

        #[test]
        fn shifted_history_matches(seed in 0u64..1000, n in 1usize..4, t in 1usize..10) {
            let len = n + t;
            let traj = Trajectory::new(uniform_signal(1, len, seed), uniform_signal(2, len, seed + 7), 0).unwrap();
            let subset = SensorSubset::new(1, vec![1, 2]).unwrap();
            let mats = build_subset_matrices(&traj, &subset, n, t).unwrap();
            for k in 0..t - 1 {
                prop_assert_eq!(mats.xhat_n1.column(k), mats.xhat_n.column(k + 1));
            }
        }
    }
}

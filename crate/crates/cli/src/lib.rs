//! Library side of the `sentinel` command: benchmark demos and the file-based
//! learn / identify / check-pe / simulate commands.

pub mod commands;
pub mod demo;

use sentinel_core::{Error, Result, Tolerance};

/// Exit status contract of the binary.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MATH: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_mathematical() {
        EXIT_MATH
    } else {
        EXIT_USAGE
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub sensors: Option<usize>,
    pub max_attacked: usize,
    pub horizon: Option<usize>,
    pub test_len: Option<usize>,
    pub seed: u64,
    pub tol: Tolerance,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: None,
            sensors: None,
            max_attacked: 1,
            horizon: None,
            test_len: None,
            seed: 7,
            tol: Tolerance::default(),
        }
    }
}

impl RunConfig {
    pub fn with_tolerances(mut self, rank_tol: Option<f64>, res_tol: Option<f64>) -> Self {
        if let Some(r) = rank_tol {
            self.tol = self.tol.with_rank_rel(r);
        }
        if let Some(r) = res_tol {
            self.tol = self.tol.with_residual(r, r);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.tol.validate()?;
        if self.n == Some(0) {
            return Err(Error::InvalidInput("--n must be at least 1".into()));
        }
        if let Some(p) = self.sensors {
            if self.max_attacked >= p {
                return Err(Error::InvalidInput(format!(
                    "--max-attacked {} must be below --sensors {p}",
                    self.max_attacked
                )));
            }
        }
        Ok(())
    }

    /// Check N against the data when --sensors was given.
    pub fn check_sensors(&self, actual: usize) -> Result<()> {
        match self.sensors {
            Some(p) if p != actual => Err(Error::InvalidInput(format!("--sensors {p} but the data has {actual} sensors"))),
            _ => Ok(()),
        }
    }

    pub fn check_order(&self, actual: usize) -> Result<()> {
        match self.n {
            Some(n) if n != actual => Err(Error::InvalidInput(format!("--n {n} but the plant has order {actual}"))),
            _ => Ok(()),
        }
    }
}

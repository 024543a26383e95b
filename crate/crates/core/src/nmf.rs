//! Non-negative matrix factorization `V ~ T U` by multiplicative updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::hash::mat_hash;
use crate::matrix::{Mat, DEFAULT_DENOM_FLOOR};

pub const DECOMPOSITION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    /// Number of tasks (rank of the factorization).
    pub c0: usize,
    /// Iteration count.
    pub a0: usize,
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub denom_floor: f64,
    /// Independent restarts with seeds `seed, seed + 1, ...`; the lowest final
    /// objective wins.
    #[serde(default = "one")]
    pub restarts: usize,
}

fn one() -> usize {
    1
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            c0: 3,
            a0: 2000,
            mu1: 0.5,
            sigma1: 0.5,
            mu2: 0.5,
            sigma2: 0.5,
            seed: 0,
            denom_floor: DEFAULT_DENOM_FLOOR,
            restarts: 1,
        }
    }
}

impl NmfConfig {
    pub fn with_rank(c0: usize) -> Self {
        Self {
            c0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c0 < 1 || self.a0 < 1 || self.restarts < 1 {
            return Err(NtdError::Invalid("c0, a0 and restarts must be >= 1".into()));
        }
        if !(self.denom_floor > 0.0) {
            return Err(NtdError::Invalid("denom_floor must be > 0".into()));
        }
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(NtdError::Invalid("init sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Unit weights, `k0 x c0`.
    pub t: Mat,
    /// Task vectors, `c0 x (i0 + j0)`.
    pub u: Mat,
    /// `||V - TU||_F` after each iteration.
    pub objective_trace: Vec<f64>,
    pub config: NmfConfig,
    /// SHA-256 of the factorized matrix.
    pub v_hash: String,
}

impl Decomposition {
    pub fn tasks(&self) -> usize {
        self.u.rows()
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn product(&self) -> Mat {
        self.t.matmul(&self.u).expect("factor shapes agree")
    }

    /// Copy with every row of `U` scaled to max 1 and `T` compensated, so
    /// `T U` is unchanged. All-zero rows are left alone.
    pub fn row_normalized(&self) -> Decomposition {
        let mut out = self.clone();
        for c in 0..self.u.rows() {
            let max = self.u.row(c).iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                rescale_task(&mut out, c, 1.0 / max);
            }
        }
        out
    }
}

/// Multiplies row `c` of `U` by `alpha` and column `c` of `T` by `1 / alpha`.
pub fn rescale_task(dec: &mut Decomposition, c: usize, alpha: f64) {
    for v in dec.u.row_mut(c) {
        *v *= alpha;
    }
    for k in 0..dec.t.rows() {
        dec.t[(k, c)] /= alpha;
    }
}

fn check_input(v: &Mat) -> Result<()> {
    if v.rows() == 0 || v.cols() == 0 {
        return Err(NtdError::Invalid("cannot factorize an empty matrix".into()));
    }
    if let Some(pos) = v.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(NtdError::Numeric {
            iteration: 0,
            what: format!("V entry {} is non-finite", pos),
        });
    }
    if let Some(pos) = v.as_slice().iter().position(|&x| x < 0.0) {
        let (r, c) = (pos / v.cols(), pos % v.cols());
        return Err(NtdError::Domain(format!(
            "V[{r},{c}] = {} is negative",
            v.as_slice()[pos]
        )));
    }
    Ok(())
}

fn gaussian_init(
    rows: usize,
    cols: usize,
    mu: f64,
    sigma: f64,
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Mat> {
    let dist = Normal::new(mu, sigma).map_err(|e| NtdError::Invalid(format!("init: {e}")))?;
    let mut m = Mat::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = dist.sample(rng).max(floor);
    }
    Ok(m)
}

/// One update of `T` followed by one update of `U`.
pub fn update(v: &Mat, t: &mut Mat, u: &mut Mat, floor: f64) -> Result<()> {
    let ut = u.transpose();
    let num = v.matmul(&ut)?;
    let den = t.matmul(&u.matmul(&ut)?)?;
    *t = t
        .hadamard(&num.elementwise_div(&den, floor)?)?
        .map(|x| x.max(0.0));

    let tt = t.transpose();
    let num = tt.matmul(v)?;
    let den = tt.matmul(t)?.matmul(u)?;
    *u = u
        .hadamard(&num.elementwise_div(&den, floor)?)?
        .map(|x| x.max(0.0));
    Ok(())
}

pub fn objective(v: &Mat, t: &Mat, u: &Mat) -> Result<f64> {
    Ok(v.sub(&t.matmul(u)?)?.frobenius_norm())
}

/// Runs `config.a0` iterations from the given starting factors.
pub fn factorize_from(v: &Mat, t0: Mat, u0: Mat, config: &NmfConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(v)?;
    if t0.rows() != v.rows() || u0.cols() != v.cols() || t0.cols() != u0.rows() {
        return Err(NtdError::shape("factorize_from", t0.shape(), u0.shape()));
    }
    let (mut t, mut u) = (t0, u0);
    let mut trace = Vec::with_capacity(config.a0);
    for iteration in 1..=config.a0 {
        update(v, &mut t, &mut u, config.denom_floor)?;
        let obj = objective(v, &t, &u)?;
        if !obj.is_finite() || !t.is_finite() || !u.is_finite() {
            return Err(NtdError::Numeric {
                iteration,
                what: "factor entries became non-finite".into(),
            });
        }
        trace.push(obj);
    }
    Ok(Decomposition {
        t,
        u,
        objective_trace: trace,
        config: config.clone(),
        v_hash: mat_hash(v),
    })
}

fn factorize_once(v: &Mat, config: &NmfConfig, seed: u64) -> Result<Decomposition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = config.denom_floor;
    let t0 = gaussian_init(
        v.rows(),
        config.c0,
        config.mu1,
        config.sigma1,
        floor,
        &mut rng,
    )?;
    let u0 = gaussian_init(
        config.c0,
        v.cols(),
        config.mu2,
        config.sigma2,
        floor,
        &mut rng,
    )?;
    factorize_from(v, t0, u0, config)
}

/// Factorizes `V` from a seeded Gaussian start. Initial draws are clamped up
/// to `denom_floor` so no entry starts at a multiplicative fixed point of zero.
pub fn factorize(v: &Mat, config: &NmfConfig) -> Result<Decomposition> {
    config.validate()?;
    check_input(v)?;
    if config.c0 > v.rows().min(v.cols()) {
        log::warn!(
            "rank {} exceeds min dimension of {}x{} matrix",
            config.c0,
            v.rows(),
            v.cols()
        );
    }
    let mut best = factorize_once(v, config, config.seed)?;
    for r in 1..config.restarts {
        let cand = factorize_once(v, config, config.seed.wrapping_add(r as u64))?;
        if cand.final_objective() < best.final_objective() {
            best = cand;
        }
    }
    Ok(best)
}

/// `||V - TU||_F / max(||V||_F, floor)`.
pub fn reconstruction_error(v: &Mat, dec: &Decomposition) -> Result<f64> {
    let diff = objective(v, &dec.t, &dec.u)?;
    Ok(diff / v.frobenius_norm().max(dec.config.denom_floor))
}

//! Per-step stochastic Verlet transition for the semi-discrete equation of
//! motion, stability estimation, and deterministic or sampled trajectories.
//!
//! One step maps v_{n+1} = A v_n + dt B f_n + B dBeta_n with the Brownian
//! increment dBeta_n ~ N(0, C_f dt). Without noise this is the explicit
//! central-difference (explicit Newmark) scheme.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::csr::CsrMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::assembly::SymmetricOperator;
use crate::error::{Error, Result};

/// State norm beyond which an explicit trajectory is declared divergent.
const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub displacement: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        StateVector { displacement: DVector::zeros(n), velocity: DVector::zeros(n) }
    }

    pub fn n_dofs(&self) -> usize {
        self.displacement.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.n_dofs();
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&self.displacement);
        v.rows_mut(n, n).copy_from(&self.velocity);
        v
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        StateVector {
            displacement: v.rows(0, n).into_owned(),
            velocity: v.rows(n, n).into_owned(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.displacement.norm_squared() + self.velocity.norm_squared()).sqrt()
    }
}

/// The one-step transition: dense A (2n x 2n), the input map B, and the
/// process-noise covariance C_zeta = B (C_f dt) B^T. The sparse factors
/// M^{-1}K and M^{-1}D are kept alongside A so covariance products can run
/// block-wise; both application paths agree to machine precision.
#[derive(Debug, Clone)]
pub struct TransitionOperators {
    pub dt: f64,
    n_u: usize,
    mass_inv: DVector<f64>,
    w_stiff: CsrMatrix<f64>,
    w_damp: Option<CsrMatrix<f64>>,
    a: DMatrix<f64>,
    c_zeta: DMatrix<f64>,
}

fn row_scaled_csr(scale: &DVector<f64>, m: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut out = m.clone();
    let nrows = out.nrows();
    let (offsets, _, values) = out.csr_data_mut();
    for i in 0..nrows {
        for k in offsets[i]..offsets[i + 1] {
            values[k] *= scale[i];
        }
    }
    out
}

/// y += c * (W x) for CSR W.
fn csr_axpy(y: &mut [f64], w: &CsrMatrix<f64>, x: &[f64], c: f64) {
    let (offsets, cols, values) = w.csr_data();
    for (i, yi) in y.iter_mut().enumerate() {
        let range = offsets[i]..offsets[i + 1];
        let mut acc = 0.0;
        for (v, &col) in values[range.clone()].iter().zip(&cols[range]) {
            acc += v * x[col];
        }
        *yi += c * acc;
    }
}

impl TransitionOperators {
    pub fn n_dofs(&self) -> usize {
        self.n_u
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n_u
    }

    pub fn mass_inverse(&self) -> &DVector<f64> {
        &self.mass_inv
    }

    /// Dense transition matrix A.
    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.c_zeta
    }

    /// Dense input map B (2n x n), mostly for tests and small oracles.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let n = self.n_u;
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            b[(i, i)] = 0.5 * self.dt * self.mass_inv[i];
            b[(n + i, i)] = self.mass_inv[i];
        }
        b
    }

    /// B f, the state-space image of a nodal force vector.
    pub fn b_apply(&self, f: &DVector<f64>) -> DVector<f64> {
        let n = self.n_u;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let mf = self.mass_inv[i] * f[i];
            out[i] = 0.5 * self.dt * mf;
            out[n + i] = mf;
        }
        out
    }

    /// Installs the process-noise covariance for a given nodal-force
    /// covariance C_f (per unit time).
    pub fn with_process_noise(mut self, force_cov: &DMatrix<f64>) -> Result<Self> {
        let n = self.n_u;
        if force_cov.nrows() != n || force_cov.ncols() != n {
            return Err(Error::invalid(format!(
                "force covariance is {}x{}, expected {n}x{n}",
                force_cov.nrows(),
                force_cov.ncols()
            )));
        }
        // C_zeta = B (C_f dt) B^T with B = [(dt/2) M^{-1}; M^{-1}]
        let mut x = force_cov.clone();
        for i in 0..n {
            x.row_mut(i).scale_mut(self.mass_inv[i]);
        }
        for j in 0..n {
            x.column_mut(j).scale_mut(self.mass_inv[j]);
        }
        x.scale_mut(self.dt);
        let half = 0.5 * self.dt;
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&(&x * (half * half)));
        c.view_mut((0, n), (n, n)).copy_from(&(&x * half));
        c.view_mut((n, 0), (n, n)).copy_from(&(&x * half));
        c.view_mut((n, n), (n, n)).copy_from(&x);
        self.c_zeta = c;
        Ok(self)
    }

    /// A v via the dense matrix.
    pub fn apply_state(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }

    /// A X for a dense block X (2n x m), using the sparse factors.
    pub fn apply_left(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_u;
        let m = x.ncols();
        let dt = self.dt;
        let mut out = DMatrix::zeros(2 * n, m);
        for c in 0..m {
            let col = x.column(c);
            let col_slice = col.as_slice();
            let (top_in, bot_in) = col_slice.split_at(n);
            let mut outcol = out.column_mut(c);
            let out_slice = outcol.as_mut_slice();
            let (top, bot) = out_slice.split_at_mut(n);
            // top = x1 + dt x2 - dt^2/2 W_K x1 - dt^3/4 W_K x2 - dt^2/2 W_D x2
            // bot = x2 - dt W_K x1 - dt^2/2 W_K x2 - dt W_D x2
            for i in 0..n {
                top[i] = top_in[i] + dt * bot_in[i];
                bot[i] = bot_in[i];
            }
            csr_axpy(top, &self.w_stiff, top_in, -0.5 * dt * dt);
            csr_axpy(top, &self.w_stiff, bot_in, -0.25 * dt * dt * dt);
            csr_axpy(bot, &self.w_stiff, top_in, -dt);
            csr_axpy(bot, &self.w_stiff, bot_in, -0.5 * dt * dt);
            if let Some(wd) = &self.w_damp {
                csr_axpy(top, wd, bot_in, -0.5 * dt * dt);
                csr_axpy(bot, wd, bot_in, -dt);
            }
        }
        out
    }

    /// X A^T for a dense block X (m x 2n).
    pub fn apply_right(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_u;
        let m = x.nrows();
        let dt = self.dt;
        let x1 = x.columns(0, n);
        let x2 = x.columns(n, n);
        // P = Y W^T computed column-block-wise: col i of P accumulates
        // W[i, k] * Y[:, k], contiguous in column-major storage
        let y_wt = |y: nalgebra::DMatrixView<f64>, w: &CsrMatrix<f64>| -> DMatrix<f64> {
            let mut p = DMatrix::zeros(m, n);
            let (offsets, cols, values) = w.csr_data();
            for i in 0..n {
                let range = offsets[i]..offsets[i + 1];
                let mut pcol = p.column_mut(i);
                for (v, &k) in values[range.clone()].iter().zip(&cols[range]) {
                    pcol.axpy(*v, &y.column(k), 1.0);
                }
            }
            p
        };
        let p1 = y_wt(x1, &self.w_stiff); // X1 W_K^T
        let p2 = y_wt(x2, &self.w_stiff); // X2 W_K^T
        let p3 = self.w_damp.as_ref().map(|wd| y_wt(x2, wd)); // X2 W_D^T

        let mut out = DMatrix::zeros(m, 2 * n);
        {
            // out[:, 0..n] = X1 A11^T + X2 A12^T
            let mut top = out.columns_mut(0, n);
            top.copy_from(&x1);
            top.axpy(dt, &x2, 1.0);
            top.axpy(-0.5 * dt * dt, &p1, 1.0);
            top.axpy(-0.25 * dt * dt * dt, &p2, 1.0);
            if let Some(p3) = &p3 {
                top.axpy(-0.5 * dt * dt, p3, 1.0);
            }
        }
        {
            // out[:, n..2n] = X1 A21^T + X2 A22^T
            let mut bot = out.columns_mut(n, n);
            bot.copy_from(&x2);
            bot.axpy(-dt, &p1, 1.0);
            bot.axpy(-0.5 * dt * dt, &p2, 1.0);
            if let Some(p3) = &p3 {
                bot.axpy(-dt, p3, 1.0);
            }
        }
        out
    }
}

/// Builds the Verlet transition for a lumped mass, optional damping, and
/// stiffness on the free DOFs. The process-noise covariance starts at zero;
/// see [`TransitionOperators::with_process_noise`].
pub fn build_transition(
    mass: &DVector<f64>,
    damping: Option<&SymmetricOperator>,
    stiffness: &SymmetricOperator,
    dt: f64,
) -> Result<TransitionOperators> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = mass.len();
    if stiffness.size() != n {
        return Err(Error::invalid("stiffness size does not match mass".to_string()));
    }
    if let Some(d) = damping {
        if d.size() != n {
            return Err(Error::invalid("damping size does not match mass".to_string()));
        }
    }
    if let Some(bad) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::invalid(format!("lumped mass entry {bad} must be positive")));
    }
    let mass_inv = mass.map(|m| 1.0 / m);
    let w_stiff = row_scaled_csr(&mass_inv, stiffness.csr());
    let w_damp = damping.map(|d| row_scaled_csr(&mass_inv, d.csr()));

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        a[(i, n + i)] = dt;
        a[(n + i, n + i)] = 1.0;
    }
    for (i, j, v) in w_stiff.triplet_iter() {
        a[(i, j)] += -0.5 * dt * dt * v;
        a[(i, n + j)] += -0.25 * dt * dt * dt * v;
        a[(n + i, j)] += -dt * v;
        a[(n + i, n + j)] += -0.5 * dt * dt * v;
    }
    if let Some(wd) = &w_damp {
        for (i, j, v) in wd.triplet_iter() {
            a[(i, n + j)] += -0.5 * dt * dt * v;
            a[(n + i, n + j)] += -dt * v;
        }
    }
    Ok(TransitionOperators {
        dt,
        n_u: n,
        mass_inv,
        w_stiff,
        w_damp,
        a,
        c_zeta: DMatrix::zeros(2 * n, 2 * n),
    })
}

/// Largest stable time step of the undamped scheme, 2 / omega_max, with
/// omega_max^2 the largest eigenvalue of M^{-1} K found by power iteration
/// to 1e-6 relative accuracy.
pub fn stability_limit(mass: &DVector<f64>, stiffness: &SymmetricOperator) -> Result<f64> {
    let n = mass.len();
    if stiffness.size() != n {
        return Err(Error::invalid("stiffness size does not match mass".to_string()));
    }
    let mass_inv = mass.map(|m| 1.0 / m);
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64) / (n as f64 + 1.0));
    x /= x.norm();
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let mut y = stiffness.apply(&x);
        y.component_mul_assign(&mass_inv);
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(f64::INFINITY);
        }
        let next = x.dot(&y);
        y /= norm;
        let converged = (next - lambda).abs() <= 1e-6 * next.abs();
        lambda = next;
        x = y;
        if converged {
            return Ok(2.0 / lambda.sqrt());
        }
    }
    Err(Error::Numerical("power iteration for the stability limit did not converge".to_string()))
}

/// One transition step. `noise`, when present, is the state-space increment
/// B dBeta already mapped through the input matrix.
pub fn step(
    ops: &TransitionOperators,
    v: &StateVector,
    f_mean: &DVector<f64>,
    noise: Option<&DVector<f64>>,
) -> Result<StateVector> {
    let n = ops.n_dofs();
    if v.n_dofs() != n || f_mean.len() != n {
        return Err(Error::invalid("state or force length does not match the operators".to_string()));
    }
    if let Some(z) = noise {
        if z.len() != 2 * n {
            return Err(Error::invalid("noise must live in the 2n state space".to_string()));
        }
    }
    let mut next = ops.apply_state(&v.stacked());
    next += ops.b_apply(f_mean) * ops.dt;
    if let Some(z) = noise {
        next += z;
    }
    Ok(StateVector::from_stacked(&next))
}

/// Deterministic time law of the applied forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingLaw {
    Zero,
    /// amplitude * sin(2 pi frequency t)
    Sine { amplitude: f64, frequency: f64 },
    /// amplitude * (sin(omega_low t) + sin(omega_high t))
    TwoSine { amplitude: f64, omega_low: f64, omega_high: f64 },
    /// Linear rise to `peak` over `rise`, then linear fall over `fall`.
    Triangle { peak: f64, start: f64, rise: f64, fall: f64 },
}

impl ForcingLaw {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ForcingLaw::Zero => 0.0,
            ForcingLaw::Sine { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
            ForcingLaw::TwoSine { amplitude, omega_low, omega_high } => {
                amplitude * ((omega_low * t).sin() + (omega_high * t).sin())
            }
            ForcingLaw::Triangle { peak, start, rise, fall } => {
                if t < start || t > start + rise + fall {
                    0.0
                } else if t < start + rise {
                    peak * (t - start) / rise
                } else {
                    peak * (1.0 - (t - start - rise) / fall)
                }
            }
        }
    }
}

/// Spatial pattern times time law.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub pattern: DVector<f64>,
    pub law: ForcingLaw,
}

impl Forcing {
    pub fn none(n: usize) -> Self {
        Forcing { pattern: DVector::zeros(n), law: ForcingLaw::Zero }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        &self.pattern * self.law.value(t)
    }
}

/// Stochastic component of the nodal forcing.
#[derive(Debug, Clone)]
pub enum ForceNoise {
    None,
    /// White noise with standard deviation `std` on a single DOF.
    Point { dof: usize, std: f64 },
    /// Spatially correlated noise with covariance factor * factor^T.
    Correlated { factor: DMatrix<f64> },
}

impl ForceNoise {
    pub fn covariance(&self, n: usize) -> DMatrix<f64> {
        match self {
            ForceNoise::None => DMatrix::zeros(n, n),
            ForceNoise::Point { dof, std } => {
                let mut c = DMatrix::zeros(n, n);
                c[(*dof, *dof)] = std * std;
                c
            }
            ForceNoise::Correlated { factor } => factor * factor.transpose(),
        }
    }

    /// Draws dBeta ~ N(0, C_f dt).
    pub fn sample_increment<R: Rng>(&self, n: usize, dt: f64, rng: &mut R) -> DVector<f64> {
        match self {
            ForceNoise::None => DVector::zeros(n),
            ForceNoise::Point { dof, std } => {
                let mut out = DVector::zeros(n);
                out[*dof] = std * dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                out
            }
            ForceNoise::Correlated { factor } => {
                let xi = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
                factor * xi * dt.sqrt()
            }
        }
    }
}

/// Runs `n_steps` stochastic Verlet steps and returns the trajectory
/// including the initial state (length n_steps + 1).
pub fn simulate_path<R: Rng>(
    ops: &TransitionOperators,
    initial: &StateVector,
    forcing: &Forcing,
    noise: &ForceNoise,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<StateVector>> {
    let n = ops.n_dofs();
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(initial.clone());
    let mut v = initial.clone();
    for k in 0..n_steps {
        let t = k as f64 * ops.dt;
        let f = forcing.at(t);
        let z = match noise {
            ForceNoise::None => None,
            _ => Some(ops.b_apply(&noise.sample_increment(n, ops.dt, rng))),
        };
        v = step(ops, &v, &f, z.as_ref())?;
        let norm = v.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Diverged { step: k + 1, norm });
        }
        out.push(v.clone());
    }
    Ok(out)
}

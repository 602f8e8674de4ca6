//! First-order perturbation propagation of the joint Gaussian over
//! (dynamic state, element material coefficients).
//!
//! The transition is linearised about the current means: the state map A is
//! evaluated at the mean coefficients and the sensitivity J collects the
//! columns (dA/d kappa_alpha) v with K linear in each element coefficient.
//! The covariance recursion is
//!   C+ = A C A^T + A C_vk J^T + J C_vk^T A^T + J C_k J^T + C_zeta,
//!   C_vk+ = A C_vk + J C_k,
//! with the material blocks unchanged during propagation.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{ElementStiffnessBank, SymmetricOperator};
use crate::dynamics::{build_transition, Forcing, StateVector, TransitionOperators};
use crate::error::{Error, Result};
use crate::field::symmetrize;

/// Joint Gaussian over the stacked state (2 n_u) and the element
/// coefficients (n_e) at one time instant.
#[derive(Debug, Clone)]
pub struct AugmentedGaussian {
    pub state_mean: DVector<f64>,
    pub material_mean: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub cross_cov: DMatrix<f64>,
    pub material_cov: DMatrix<f64>,
    pub time_index: usize,
}

impl AugmentedGaussian {
    /// Density at t = 0: deterministic state, prior material blocks.
    pub fn initial(state: &StateVector, material_mean: DVector<f64>, material_cov: DMatrix<f64>) -> Self {
        let dim = 2 * state.n_dofs();
        let n_e = material_mean.len();
        AugmentedGaussian {
            state_mean: state.stacked(),
            material_mean,
            state_cov: DMatrix::zeros(dim, dim),
            cross_cov: DMatrix::zeros(dim, n_e),
            material_cov,
            time_index: 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn n_elements(&self) -> usize {
        self.material_mean.len()
    }

    pub fn mean_state(&self) -> StateVector {
        StateVector::from_stacked(&self.state_mean)
    }

    /// Full (2n_u + n_e) joint covariance, for tests and oracles.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let d = self.state_dim();
        let n_e = self.n_elements();
        let mut joint = DMatrix::zeros(d + n_e, d + n_e);
        joint.view_mut((0, 0), (d, d)).copy_from(&self.state_cov);
        joint.view_mut((0, d), (d, n_e)).copy_from(&self.cross_cov);
        joint.view_mut((d, 0), (n_e, d)).copy_from(&self.cross_cov.transpose());
        joint.view_mut((d, d), (n_e, n_e)).copy_from(&self.material_cov);
        joint
    }

    pub fn joint_mean(&self) -> DVector<f64> {
        let d = self.state_dim();
        let n_e = self.n_elements();
        let mut mean = DVector::zeros(d + n_e);
        mean.rows_mut(0, d).copy_from(&self.state_mean);
        mean.rows_mut(d, n_e).copy_from(&self.material_mean);
        mean
    }

    /// Checks joint symmetry and approximate positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let joint = self.joint_covariance();
        let asym = (&joint - joint.transpose()).amax();
        if asym > 1e-10 * joint.amax().max(1.0) {
            return Err(Error::Numerical(format!("joint covariance asymmetry {asym:.3e}")));
        }
        let trace: f64 = joint.diagonal().sum();
        let eig = nalgebra::SymmetricEigen::new(joint);
        if eig.eigenvalues.min() < -1e-8 * trace.max(1e-300) {
            return Err(Error::Numerical(format!(
                "joint covariance has eigenvalue {:.3e} (trace {trace:.3e})",
                eig.eigenvalues.min()
            )));
        }
        Ok(())
    }
}

/// Sensitivity of one Verlet step to the element coefficients, stored
/// column-sparse: column alpha is [-dt^2/2 w; -dt w] with
/// w = M^{-1} K_alpha (u + dt/2 du), and K_alpha touching only the free
/// DOFs of element alpha.
#[derive(Debug, Clone)]
pub struct StateMaterialJacobian {
    n_u: usize,
    dt: f64,
    columns: Vec<Vec<(usize, f64)>>,
}

impl StateMaterialJacobian {
    pub fn n_rows(&self) -> usize {
        2 * self.n_u
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * self.n_u, self.columns.len());
        for (alpha, col) in self.columns.iter().enumerate() {
            for &(row, w) in col {
                j[(row, alpha)] = -0.5 * self.dt * self.dt * w;
                j[(self.n_u + row, alpha)] = -self.dt * w;
            }
        }
        j
    }

    /// J C for dense C (n_e x m).
    pub fn mul_right(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let m = c.ncols();
        let n_u = self.n_u;
        let mut out = DMatrix::zeros(2 * n_u, m);
        let half = -0.5 * self.dt * self.dt;
        let full = -self.dt;
        for k in 0..m {
            let cin = c.column(k);
            let cin = cin.as_slice();
            let mut ocol = out.column_mut(k);
            let ocol = ocol.as_mut_slice();
            for (alpha, col) in self.columns.iter().enumerate() {
                let scale = cin[alpha];
                for &(row, w) in col {
                    let v = w * scale;
                    ocol[row] += half * v;
                    ocol[n_u + row] += full * v;
                }
            }
        }
        out
    }

    /// Y J^T for dense Y (m x n_e).
    pub fn mul_transpose_right(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let m = y.nrows();
        let mut out = DMatrix::zeros(m, 2 * self.n_u);
        let half = -0.5 * self.dt * self.dt;
        let full = -self.dt;
        for (alpha, col) in self.columns.iter().enumerate() {
            let ycol = y.column(alpha);
            for &(row, w) in col {
                let mut top = out.column_mut(row);
                top.axpy(half * w, &ycol, 1.0);
                let mut bot = out.column_mut(self.n_u + row);
                bot.axpy(full * w, &ycol, 1.0);
            }
        }
        out
    }
}

/// Builds the material Jacobian at the given mean state.
pub fn material_jacobian(
    bank: &ElementStiffnessBank,
    mass: &DVector<f64>,
    dt: f64,
    state_mean: &StateVector,
) -> Result<StateMaterialJacobian> {
    let n_u = bank.n_free_dofs();
    if state_mean.n_dofs() != n_u || mass.len() != n_u {
        return Err(Error::invalid("state or mass length does not match the bank".to_string()));
    }
    let u_eff = &state_mean.displacement + &state_mean.velocity * (0.5 * dt);
    let columns = (0..bank.n_elements())
        .map(|alpha| {
            bank.apply_element(alpha, &u_eff)
                .into_iter()
                .map(|(row, v)| (row, v / mass[row]))
                .collect()
        })
        .collect();
    Ok(StateMaterialJacobian { n_u, dt, columns })
}

/// One prediction of the joint moments. `ops` must be built at the current
/// material mean and `jac` at the current means.
pub fn propagate_moments(
    current: &AugmentedGaussian,
    ops: &TransitionOperators,
    jac: &StateMaterialJacobian,
    f_mean: &DVector<f64>,
) -> Result<AugmentedGaussian> {
    let dim = current.state_dim();
    if ops.state_dim() != dim || jac.n_rows() != dim || jac.n_columns() != current.n_elements() {
        return Err(Error::invalid("moment propagation shape mismatch".to_string()));
    }
    let mut mean = ops.apply_state(&current.state_mean);
    mean += ops.b_apply(f_mean) * ops.dt;

    let a_cvk = ops.apply_left(&current.cross_cov);
    let j_ck = jac.mul_right(&current.material_cov);

    // A C A^T
    let ac = ops.apply_left(&current.state_cov);
    let mut cov = ops.apply_right(&ac);
    // A C_vk J^T and its transpose
    let cross_term = jac.mul_transpose_right(&a_cvk);
    cov += &cross_term;
    cov += cross_term.transpose();
    // J C_k J^T
    cov += jac.mul_transpose_right(&j_ck);
    cov += ops.process_noise();
    symmetrize(&mut cov);

    let trace: f64 = cov.diagonal().sum();
    if let Some(bad) = cov.diagonal().iter().position(|&d| d < -1e-8 * trace.max(1e-300)) {
        return Err(Error::Numerical(format!(
            "state covariance lost positive semidefiniteness at DOF {bad} (variance {:.3e})",
            cov[(bad, bad)]
        )));
    }

    Ok(AugmentedGaussian {
        state_mean: mean,
        material_mean: current.material_mean.clone(),
        state_cov: cov,
        cross_cov: a_cvk + j_ck,
        material_cov: current.material_cov.clone(),
        time_index: current.time_index + 1,
    })
}

/// The stochastic model of one scenario: lumped mass, damping, the
/// stiffness bank with the coefficient prior, the forcing and its noise
/// covariance factor, and the time grid.
#[derive(Debug, Clone)]
pub struct StochasticModel {
    pub mass: DVector<f64>,
    pub damping: Option<SymmetricOperator>,
    pub bank: ElementStiffnessBank,
    pub coeff_mean: DVector<f64>,
    pub material_cov: DMatrix<f64>,
    /// Factor G with C_f = sigma_f^2 G G^T.
    pub force_factor_unit: DMatrix<f64>,
    pub sigma_f: f64,
    pub forcing: Forcing,
    pub dt: f64,
    pub n_steps: usize,
}

impl StochasticModel {
    pub fn n_dofs(&self) -> usize {
        self.mass.len()
    }

    pub fn n_elements(&self) -> usize {
        self.bank.n_elements()
    }

    /// Nodal-force covariance at the current sigma_f.
    pub fn force_covariance(&self) -> DMatrix<f64> {
        let g = &self.force_factor_unit;
        (g * g.transpose()) * (self.sigma_f * self.sigma_f)
    }

    /// Sampling form of the force noise at the current sigma_f.
    pub fn force_noise(&self) -> crate::dynamics::ForceNoise {
        if self.sigma_f == 0.0 || self.force_factor_unit.ncols() == 0 {
            crate::dynamics::ForceNoise::None
        } else {
            crate::dynamics::ForceNoise::Correlated { factor: &self.force_factor_unit * self.sigma_f }
        }
    }

    pub fn with_sigma_f(&self, sigma_f: f64) -> Self {
        let mut m = self.clone();
        m.sigma_f = sigma_f;
        m
    }

    /// Transition operators at a given coefficient vector, with the
    /// process-noise covariance installed.
    pub fn transition_at(&self, coefficients: &DVector<f64>) -> Result<TransitionOperators> {
        let k = self.bank.assemble(coefficients)?;
        build_transition(&self.mass, self.damping.as_ref(), &k, self.dt)?
            .with_process_noise(&self.force_covariance())
    }

    /// Joint density at t = 0 (zero initial state, prior material).
    pub fn initial_density(&self) -> AugmentedGaussian {
        AugmentedGaussian::initial(
            &StateVector::zeros(self.n_dofs()),
            self.coeff_mean.clone(),
            self.material_cov.clone(),
        )
    }
}

/// Mean and marginal state variances at one step. Probe projections carry
/// the full-covariance variance w^T C_uu w of each probe row.
#[derive(Debug, Clone)]
pub struct MomentRecord {
    pub time: f64,
    pub state_mean: DVector<f64>,
    pub state_variance: DVector<f64>,
    pub probe_mean: DVector<f64>,
    pub probe_std: DVector<f64>,
}

impl MomentRecord {
    pub(crate) fn from_density(time: f64, g: &AugmentedGaussian, probes: Option<&DMatrix<f64>>) -> Self {
        let (probe_mean, probe_std) = match probes {
            None => (DVector::zeros(0), DVector::zeros(0)),
            Some(p) => project_probes(g, p),
        };
        MomentRecord {
            time,
            state_mean: g.state_mean.clone(),
            state_variance: g.state_cov.diagonal(),
            probe_mean,
            probe_std,
        }
    }
}

/// Probe displacement mean and std from the joint density; probe rows
/// weight displacement DOFs only.
pub fn project_probes(g: &AugmentedGaussian, probes: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n_u = g.state_dim() / 2;
    let n_p = probes.nrows();
    let u_mean = g.state_mean.rows(0, n_u);
    let c_uu = g.state_cov.view((0, 0), (n_u, n_u));
    let mean = probes * u_mean;
    let mut std = DVector::zeros(n_p);
    for p in 0..n_p {
        let w = probes.row(p).transpose();
        let cw = c_uu * &w;
        std[p] = w.dot(&cw).max(0.0).sqrt();
    }
    (mean, std)
}

pub struct ForwardRun {
    pub records: Vec<MomentRecord>,
    pub final_density: AugmentedGaussian,
}

/// Propagates the joint density from t = 0 through all steps without data.
/// `probes`, when given, adds per-step probe means and full-covariance
/// standard deviations to the records.
pub fn forward_run(model: &StochasticModel, probes: Option<&DMatrix<f64>>) -> Result<ForwardRun> {
    let mut density = model.initial_density();
    let ops = model.transition_at(&density.material_mean)?;
    let mut records = Vec::with_capacity(model.n_steps + 1);
    records.push(MomentRecord::from_density(0.0, &density, probes));
    for k in 0..model.n_steps {
        let t = k as f64 * model.dt;
        let jac = material_jacobian(&model.bank, &model.mass, model.dt, &density.mean_state())?;
        density = propagate_moments(&density, &ops, &jac, &model.forcing.at(t))?;
        records.push(MomentRecord::from_density((k + 1) as f64 * model.dt, &density, probes));
    }
    Ok(ForwardRun { records, final_density: density })
}

/// SDOF model for tests: unit-length single-element clamped bar with
/// density 2 so the lumped mass at the free node is 1 and the coefficient
/// equals k. Forcing is the two-sine law at 0.31 and 0.62 of omega = 10.
#[cfg(test)]
pub(crate) fn sdof_model(
    k0: f64,
    sigma_k: f64,
    gamma: f64,
    sigma_f: f64,
    dt: f64,
    n_steps: usize,
) -> StochasticModel {
    use crate::dynamics::ForcingLaw;
    let mesh = crate::mesh::build_interval_mesh(1.0, 1, true).unwrap();
    let mass = crate::assembly::assemble_mass(&mesh, 2.0, true).unwrap().diagonal();
    let (_, bank) = crate::assembly::assemble_stiffness(&mesh, &DVector::from_element(1, k0)).unwrap();
    let damping = if gamma == 0.0 {
        None
    } else {
        Some(crate::assembly::SymmetricOperator::from_triplets(1, &[(0, 0, gamma)]))
    };
    StochasticModel {
        mass,
        damping,
        bank,
        coeff_mean: DVector::from_element(1, k0),
        material_cov: DMatrix::from_element(1, 1, sigma_k * sigma_k),
        force_factor_unit: DMatrix::from_element(1, 1, 1.0),
        sigma_f,
        forcing: Forcing {
            pattern: DVector::from_element(1, 1.0),
            law: ForcingLaw::TwoSine { amplitude: 1.0, omega_low: 3.1, omega_high: 6.2 },
        },
        dt,
        n_steps,
    }
}

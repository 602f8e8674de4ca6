//! Sequential Bayesian assimilation of displacement observations into the
//! stochastic elastodynamic model: observation models, the prediction and
//! update steps for the augmented (state, material) Gaussian, and the
//! filter driver.
//!
//! The update conditions the joint Gaussian on y = H v + e by solving
//! against the innovation covariance S = H C- H^T + C_e through a Cholesky
//! factorisation; no matrix is inverted explicitly.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::symmetrize;
use crate::forward::{
    material_jacobian, propagate_moments, AugmentedGaussian, MomentRecord, StochasticModel,
};
use crate::mesh::Mesh;

/// Linear observation of displacement DOFs with iid Gaussian noise.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    /// n_y x 2 n_u; rows carry basis weights on displacement columns and
    /// zeros on velocity columns.
    pub matrix: DMatrix<f64>,
    /// Diagonal of C_e.
    pub noise_variance: DVector<f64>,
    pub sensor_coords: Vec<[f64; 2]>,
}

impl ObservationModel {
    pub fn n_sensors(&self) -> usize {
        self.matrix.nrows()
    }

    /// H v for a stacked state.
    pub fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.matrix * state
    }
}

/// Places displacement sensors by point location. Every sensor must lie in
/// the mesh and must not lose weight to the Dirichlet boundary, so each row
/// sums to one over the displacement columns.
pub fn build_observation(mesh: &Mesh, sensors: &[[f64; 2]], sigma_e: f64) -> Result<ObservationModel> {
    if !(sigma_e > 0.0) {
        return Err(Error::invalid(format!("sensor noise must be positive, got {sigma_e}")));
    }
    if sensors.is_empty() {
        return Err(Error::Placement("no sensors given".to_string()));
    }
    let n_u = mesh.n_free_dofs();
    let mut h = DMatrix::zeros(sensors.len(), 2 * n_u);
    for (row, &coord) in sensors.iter().enumerate() {
        let (element, weights) = mesh.locate_point(coord).map_err(|_| {
            Error::Placement(format!("sensor {row} at ({}, {}) lies outside the mesh", coord[0], coord[1]))
        })?;
        let nodes = mesh.element_nodes(element);
        let mut placed = 0.0;
        for (&node, &w) in nodes.iter().zip(&weights) {
            match mesh.free_dof(node) {
                Some(dof) => {
                    h[(row, dof)] += w;
                    placed += w;
                }
                None => {
                    if w > 1e-12 {
                        return Err(Error::Placement(format!(
                            "sensor {row} at ({}, {}) puts weight {w:.3} on the Dirichlet boundary",
                            coord[0], coord[1]
                        )));
                    }
                }
            }
        }
        if (placed - 1.0).abs() > 1e-9 {
            return Err(Error::Placement(format!(
                "sensor {row} weights sum to {placed}, expected 1"
            )));
        }
    }
    Ok(ObservationModel {
        matrix: h,
        noise_variance: DVector::from_element(sensors.len(), sigma_e * sigma_e),
        sensor_coords: sensors.to_vec(),
    })
}

/// Innovation residual and covariance of one update.
#[derive(Debug, Clone)]
pub struct InnovationRecord {
    pub residual: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub step: usize,
}

/// One prediction step: operators and Jacobian are evaluated at the current
/// (posterior) means, then the moment recursion is applied.
pub fn predict(posterior: &AugmentedGaussian, model: &StochasticModel) -> Result<AugmentedGaussian> {
    let ops = model.transition_at(&posterior.material_mean)?;
    let jac = material_jacobian(&model.bank, &model.mass, model.dt, &posterior.mean_state())?;
    let t = posterior.time_index as f64 * model.dt;
    propagate_moments(posterior, &ops, &jac, &model.forcing.at(t))
}

fn innovation_factor(
    prior: &AugmentedGaussian,
    obs: &ObservationModel,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let h = &obs.matrix;
    // G_v = C- H^T (2n x n_y)
    let g_v = &prior.state_cov * h.transpose();
    let mut s = h * &g_v;
    for i in 0..obs.n_sensors() {
        s[(i, i)] += obs.noise_variance[i];
    }
    symmetrize(&mut s);
    let chol = Cholesky::new(s.clone())
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".to_string()))?;
    Ok((g_v, s, chol))
}

/// Conditioning of the joint (state, material) Gaussian on one observation
/// vector. Returns the posterior and the innovation record.
pub fn update(
    prior: &AugmentedGaussian,
    obs: &ObservationModel,
    y: &DVector<f64>,
) -> Result<(AugmentedGaussian, InnovationRecord)> {
    if y.len() != obs.n_sensors() {
        return Err(Error::invalid(format!(
            "observation vector has length {}, expected {}",
            y.len(),
            obs.n_sensors()
        )));
    }
    if obs.matrix.ncols() != prior.state_dim() {
        return Err(Error::invalid("observation matrix does not match the state dimension".to_string()));
    }
    let (g_v, s, chol) = innovation_factor(prior, obs)?;
    // G_k = C_vk^T H^T (n_e x n_y)
    let g_k = prior.cross_cov.transpose() * obs.matrix.transpose();

    let residual = y - obs.observe(&prior.state_mean);
    let alpha = chol.solve(&residual);

    let state_mean = &prior.state_mean + &g_v * &alpha;
    let material_mean = &prior.material_mean + &g_k * &alpha;

    // S^{-1} G_v^T and S^{-1} G_k^T via the same factorisation
    let sinv_gvt = chol.solve(&g_v.transpose());
    let sinv_gkt = chol.solve(&g_k.transpose());

    let mut state_cov = &prior.state_cov - &g_v * &sinv_gvt;
    symmetrize(&mut state_cov);
    let mut material_cov = &prior.material_cov - &g_k * &sinv_gkt;
    symmetrize(&mut material_cov);
    let cross_cov = &prior.cross_cov - &g_v * &sinv_gkt;

    let posterior = AugmentedGaussian {
        state_mean,
        material_mean,
        state_cov,
        cross_cov,
        material_cov,
        time_index: prior.time_index,
    };
    Ok((posterior, InnovationRecord { residual, covariance: s, step: prior.time_index }))
}

/// Update that conditions only the state block; the material mean,
/// covariance and all cross terms are left untouched (they are held at
/// zero/prior by the suppressed filter).
pub fn update_state_only(
    prior: &AugmentedGaussian,
    obs: &ObservationModel,
    y: &DVector<f64>,
) -> Result<(AugmentedGaussian, InnovationRecord)> {
    if y.len() != obs.n_sensors() {
        return Err(Error::invalid(format!(
            "observation vector has length {}, expected {}",
            y.len(),
            obs.n_sensors()
        )));
    }
    let (g_v, s, chol) = innovation_factor(prior, obs)?;
    let residual = y - obs.observe(&prior.state_mean);
    let alpha = chol.solve(&residual);
    let state_mean = &prior.state_mean + &g_v * &alpha;
    let sinv_gvt = chol.solve(&g_v.transpose());
    let mut state_cov = &prior.state_cov - &g_v * &sinv_gvt;
    symmetrize(&mut state_cov);
    let posterior = AugmentedGaussian {
        state_mean,
        material_mean: prior.material_mean.clone(),
        state_cov,
        cross_cov: prior.cross_cov.clone(),
        material_cov: prior.material_cov.clone(),
        time_index: prior.time_index,
    };
    Ok((posterior, InnovationRecord { residual, covariance: s, step: prior.time_index }))
}

/// One observation instant of the record stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationInstant {
    pub time: f64,
    pub values: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterOptions {
    /// When false, the material update is suppressed: the material blocks
    /// stay at their prior values and cross terms are zeroed in usage.
    pub update_material: bool,
    /// Observations before this time are skipped (burn-in).
    pub assimilate_from: f64,
    /// Observations after this time are skipped.
    pub assimilate_until: f64,
    /// Record the smallest eigenvalue of the material covariance at each
    /// update (an eigensolve per update; disable for large runs).
    pub track_material_spectrum: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            update_material: true,
            assimilate_from: 0.0,
            assimilate_until: f64::INFINITY,
            track_material_spectrum: true,
        }
    }
}

/// Per-update diagnostics of the filter run.
#[derive(Debug, Clone)]
pub struct UpdateDiagnostic {
    pub step: usize,
    pub time: f64,
    /// max over DOFs of diag(C+) - diag(C-), state block (contraction
    /// means this is <= 0 up to roundoff).
    pub state_variance_increase: f64,
    /// Same for the material block.
    pub material_variance_increase: f64,
    pub min_material_eigenvalue: Option<f64>,
}

pub struct FilterRun {
    /// Posterior moments at every step (index = time step).
    pub records: Vec<MomentRecord>,
    pub innovations: Vec<InnovationRecord>,
    pub updates: Vec<UpdateDiagnostic>,
    pub final_density: AugmentedGaussian,
}

/// Runs the sequential prediction/update scheme over the model's time grid.
///
/// Observation times must align with multiples of dt (within 1e-9);
/// updates happen only inside the assimilation window. With
/// `update_material = false` the cross-covariance is zeroed after every
/// prediction and only the state block is conditioned on data.
pub fn run_filter(
    model: &StochasticModel,
    obs_model: &ObservationModel,
    observations: &[ObservationInstant],
    options: &FilterOptions,
) -> Result<FilterRun> {
    run_filter_with_probes(model, obs_model, observations, options, None)
}

/// [`run_filter`] with per-step probe projections in the records.
pub fn run_filter_with_probes(
    model: &StochasticModel,
    obs_model: &ObservationModel,
    observations: &[ObservationInstant],
    options: &FilterOptions,
    probes: Option<&nalgebra::DMatrix<f64>>,
) -> Result<FilterRun> {
    let mut by_step: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (idx, obs) in observations.iter().enumerate() {
        let ratio = obs.time / model.dt;
        let step = ratio.round() as isize;
        if (obs.time - step as f64 * model.dt).abs() > 1e-9 || step < 1 {
            return Err(Error::MisalignedObservation { time: obs.time, dt: model.dt });
        }
        let step = step as usize;
        if step > model.n_steps {
            return Err(Error::MisalignedObservation { time: obs.time, dt: model.dt });
        }
        if by_step.insert(step, idx).is_some() {
            return Err(Error::invalid(format!("duplicate observation at t = {}", obs.time)));
        }
    }

    let mut density = model.initial_density();
    if !options.update_material {
        density.cross_cov.fill(0.0);
    }
    let mut ops = model.transition_at(&density.material_mean)?;
    let mut records = Vec::with_capacity(model.n_steps + 1);
    records.push(MomentRecord::from_density(0.0, &density, probes));
    let mut innovations = Vec::new();
    let mut updates = Vec::new();

    for k in 0..model.n_steps {
        let t = k as f64 * model.dt;
        let jac = material_jacobian(&model.bank, &model.mass, model.dt, &density.mean_state())?;
        density = propagate_moments(&density, &ops, &jac, &model.forcing.at(t))?;
        if !options.update_material {
            density.cross_cov.fill(0.0);
        }

        let step_index = k + 1;
        let t_next = step_index as f64 * model.dt;
        let in_window = t_next >= options.assimilate_from - 1e-9
            && t_next <= options.assimilate_until + 1e-9;
        if let Some(&obs_idx) = by_step.get(&step_index).filter(|_| in_window) {
            let prior_state_diag = density.state_cov.diagonal();
            let prior_material_diag = density.material_cov.diagonal();
            let y = &observations[obs_idx].values;
            let (posterior, innovation) = if options.update_material {
                update(&density, obs_model, y)?
            } else {
                update_state_only(&density, obs_model, y)?
            };
            density = posterior;
            innovations.push(innovation);

            let state_increase = (density.state_cov.diagonal() - prior_state_diag).max();
            let material_increase = (density.material_cov.diagonal() - prior_material_diag).max();
            let min_eig = if options.track_material_spectrum {
                Some(nalgebra::SymmetricEigen::new(density.material_cov.clone()).eigenvalues.min())
            } else {
                None
            };
            updates.push(UpdateDiagnostic {
                step: step_index,
                time: t_next,
                state_variance_increase: state_increase,
                material_variance_increase: material_increase,
                min_material_eigenvalue: min_eig,
            });
            // the transition linearisation moves with the new material mean
            if options.update_material {
                ops = model.transition_at(&density.material_mean)?;
            }
        }
        records.push(MomentRecord::from_density(t_next, &density, probes));
    }

    Ok(FilterRun { records, innovations, updates, final_density: density })
}

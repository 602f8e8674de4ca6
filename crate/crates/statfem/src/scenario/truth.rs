//! Synthetic-truth generation for twin experiments: draw a true material
//! field, simulate one stochastic trajectory, sample the sensors, and add
//! measurement noise. Everything is seed-deterministic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{build_transition, simulate_path, StateVector};
use crate::error::Result;
use crate::field::{lognormal_modulus, sample_field};
use crate::filter::ObservationInstant;

use super::build::Scenario;
use super::config::MaterialModel;

/// The drawn truth of one twin experiment.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    /// Nodal log-field sample (empty for the gaussian material model).
    pub kappa_nodal: DVector<f64>,
    /// True element coefficients.
    pub coefficients: DVector<f64>,
    /// Probe displacements at every step, (n_steps + 1) x n_probes.
    pub probe_series: DMatrix<f64>,
    /// Noise-free sensor values at the observation instants.
    pub sensor_clean: Vec<ObservationInstant>,
    /// Noisy observations handed to the filter.
    pub observations: Vec<ObservationInstant>,
}

/// Draws the true coefficients and simulates the observed trajectory.
pub fn make_truth(scenario: &Scenario) -> Result<TruthRecord> {
    let config = &scenario.config;
    let model = &scenario.model;
    let mesh = &scenario.mesh;

    let mut rng_material = ChaCha12Rng::seed_from_u64(config.seeds.material);
    let (kappa_nodal, coefficients) = match config.material.model {
        MaterialModel::Gaussian => {
            let value = match config.truth_coefficient {
                Some(v) => v,
                None => {
                    config.material.base
                        + config.material.sigma * rng_material.sample::<f64, _>(StandardNormal)
                }
            };
            (DVector::zeros(0), DVector::from_element(1, value))
        }
        MaterialModel::Lognormal => {
            let field = scenario
                .material_field
                .as_ref()
                .expect("lognormal scenarios carry the nodal field");
            let kappa = sample_field(field, &mut rng_material);
            let n_e = mesh.n_elements();
            let kappa_elem = DVector::from_fn(n_e, |e, _| {
                let nodes = mesh.element_nodes(e);
                nodes.iter().map(|&n| kappa[n]).sum::<f64>() / nodes.len() as f64
            });
            let coeff = lognormal_modulus(config.material.base, config.material.sigma, &kappa_elem)?;
            (kappa, coeff)
        }
    };

    let stiffness = model.bank.assemble(&coefficients)?;
    let ops = build_transition(&model.mass, model.damping.as_ref(), &stiffness, model.dt)?;
    let mut rng_forcing = ChaCha12Rng::seed_from_u64(config.seeds.forcing);
    let path = simulate_path(
        &ops,
        &StateVector::zeros(model.n_dofs()),
        &model.forcing,
        &model.force_noise(),
        model.n_steps,
        &mut rng_forcing,
    )?;

    let probe_series = DMatrix::from_fn(path.len(), scenario.probe_matrix.nrows(), |k, p| {
        scenario.probe_matrix.row(p).transpose().dot(&path[k].displacement)
    });

    let mut rng_noise = ChaCha12Rng::seed_from_u64(config.seeds.noise);
    let every = config.time.observe_every;
    let mut sensor_clean = Vec::new();
    let mut observations = Vec::new();
    let h = &scenario.observation.matrix;
    for step in (every..=model.n_steps).step_by(every) {
        let time = step as f64 * model.dt;
        let clean = h * path[step].stacked();
        let noisy = DVector::from_fn(clean.len(), |i, _| {
            clean[i] + config.sensors.sigma_e * rng_noise.sample::<f64, _>(StandardNormal)
        });
        sensor_clean.push(ObservationInstant { time, values: clean });
        observations.push(ObservationInstant { time, values: noisy });
    }

    Ok(TruthRecord { kappa_nodal, coefficients, probe_series, sensor_clean, observations })
}

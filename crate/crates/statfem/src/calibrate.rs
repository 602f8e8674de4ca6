//! Empirical-Bayes estimation of the forcing-misspecification
//! hyperparameters from the filter's innovation sequence: per-step negative
//! marginal log-likelihood, the batch objective, and grid MAP search.

use nalgebra::Cholesky;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterOptions, InnovationRecord, ObservationInstant, ObservationModel};
use crate::forward::StochasticModel;

/// Hyperparameters of the misspecification field. Only sigma_f is searched
/// by the shipped scenarios; the correlation length is carried for
/// sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub sigma_f: f64,
    pub length_scale: Option<f64>,
}

impl HyperParams {
    pub fn sigma(sigma_f: f64) -> Self {
        HyperParams { sigma_f, length_scale: None }
    }
}

/// Prior over one scalar hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperPrior {
    Uniform { lo: f64, hi: f64 },
    LogNormal { location: f64, scale: f64 },
}

impl HyperPrior {
    /// -log p(theta); +inf outside the support.
    pub fn neg_log_density(&self, x: f64) -> f64 {
        match *self {
            HyperPrior::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::INFINITY
                } else {
                    (hi - lo).ln()
                }
            }
            HyperPrior::LogNormal { location, scale } => {
                if x <= 0.0 {
                    return f64::INFINITY;
                }
                let z = (x.ln() - location) / scale;
                0.5 * z * z + x.ln() + scale.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }
}

/// Negative marginal log-likelihood contribution of one innovation:
/// (r^T S^{-1} r + log|S| + n_y log 2 pi) / 2.
pub fn step_nll(innovation: &InnovationRecord) -> Result<f64> {
    let n_y = innovation.residual.len() as f64;
    let chol = Cholesky::new(innovation.covariance.clone())
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".to_string()))?;
    let alpha = chol.solve(&innovation.residual);
    let quad = innovation.residual.dot(&alpha);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(0.5 * (quad + log_det + n_y * (2.0 * std::f64::consts::PI).ln()))
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct ObjectivePoint {
    pub params: HyperParams,
    pub objective: f64,
    /// Present when the filter could not run under these parameters.
    pub failure: Option<String>,
}

/// Batch objective: sum of per-observation negative log-likelihoods plus
/// the prior term. A filter failure yields +inf with the cause attached.
pub fn batch_objective(
    model: &StochasticModel,
    obs_model: &ObservationModel,
    observations: &[ObservationInstant],
    options: &FilterOptions,
    prior: &HyperPrior,
) -> ObjectivePoint {
    let params = HyperParams::sigma(model.sigma_f);
    let prior_term = prior.neg_log_density(model.sigma_f);
    if prior_term.is_infinite() {
        return ObjectivePoint { params, objective: f64::INFINITY, failure: None };
    }
    let run = match run_filter(model, obs_model, observations, options) {
        Ok(run) => run,
        Err(e) => {
            return ObjectivePoint { params, objective: f64::INFINITY, failure: Some(e.to_string()) }
        }
    };
    let mut total = prior_term;
    for innovation in &run.innovations {
        match step_nll(innovation) {
            Ok(v) => total += v,
            Err(e) => {
                return ObjectivePoint {
                    params,
                    objective: f64::INFINITY,
                    failure: Some(e.to_string()),
                }
            }
        }
    }
    ObjectivePoint { params, objective: total, failure: None }
}

pub struct MapSearchResult {
    pub best: HyperParams,
    pub curve: Vec<ObjectivePoint>,
}

/// Log-spaced grid between two positive bounds, inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| lo * (step * i as f64).exp()).collect()
}

/// Evaluates the batch objective on a grid of sigma_f values and returns
/// the minimiser (ties broken toward the smaller value) with the full
/// objective curve. Grid points run concurrently.
pub fn map_search(
    grid: &[f64],
    model: &StochasticModel,
    obs_model: &ObservationModel,
    observations: &[ObservationInstant],
    options: &FilterOptions,
    prior: &HyperPrior,
) -> Result<MapSearchResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid".to_string()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let curve: Vec<ObjectivePoint> = sorted
        .par_iter()
        .map(|&sigma_f| {
            batch_objective(&model.with_sigma_f(sigma_f), obs_model, observations, options, prior)
        })
        .collect();
    let best = curve
        .iter()
        .filter(|p| p.objective.is_finite())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .ok_or_else(|| {
            let cause = curve
                .iter()
                .find_map(|p| p.failure.clone())
                .unwrap_or_else(|| "all grid points have infinite objective".to_string());
            Error::NoFeasiblePoint(cause)
        })?;
    Ok(MapSearchResult { best: best.params, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::build_observation;
    use crate::forward::sdof_model;
    use crate::mesh::build_interval_mesh;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn innovation(r: Vec<f64>, s: Vec<f64>) -> InnovationRecord {
        InnovationRecord {
            residual: DVector::from_vec(r),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(s)),
            step: 1,
        }
    }

    #[test]
    fn nll_of_standard_normal_residual() {
        // r = 0, S = 1: log(2 pi)/2
        let v = step_nll(&innovation(vec![0.0], vec![1.0])).unwrap();
        assert_relative_eq!(v, 0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.918938533204672_f64, epsilon = 1e-12);
        // r = 1, S = 1 adds 1/2
        let v1 = step_nll(&innovation(vec![1.0], vec![1.0])).unwrap();
        assert_relative_eq!(v1, 0.5 + v, epsilon = 1e-12);
    }

    #[test]
    fn scaling_s_adds_half_log_det() {
        let base = step_nll(&innovation(vec![0.0, 0.0], vec![1.0, 1.0])).unwrap();
        let scaled = step_nll(&innovation(vec![0.0, 0.0], vec![7.0, 7.0])).unwrap();
        assert_relative_eq!(scaled - base, 0.5 * 2.0 * 7.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        assert!(step_nll(&innovation(vec![0.0], vec![0.0])).is_err());
    }

    #[test]
    fn uniform_prior_support() {
        let p = HyperPrior::Uniform { lo: 0.01, hi: 1.0 };
        assert!(p.neg_log_density(0.001).is_infinite());
        assert!(p.neg_log_density(2.0).is_infinite());
        assert_relative_eq!(p.neg_log_density(0.5), (0.99f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_grid_is_inclusive_and_geometric() {
        let g = log_grid(0.005, 0.5, 20);
        assert_eq!(g.len(), 20);
        assert_relative_eq!(g[0], 0.005, epsilon = 1e-12);
        assert_relative_eq!(g[19], 0.5, epsilon = 1e-12);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert_relative_eq!(w[1] / w[0], ratio, epsilon = 1e-10);
        }
    }

    /// Synthetic SDOF observations with the truth at sigma_f = 0.05.
    fn sdof_observations(n_o: usize) -> (StochasticModel, crate::filter::ObservationModel, Vec<ObservationInstant>) {
        use rand::Rng;
        use rand::SeedableRng;
        let t_s = 2.0 * std::f64::consts::PI / 10.0;
        let dt = 3.2e-3 * t_s;
        let n_steps = 3125;
        let model = sdof_model(100.0, 5.0, 1.0, 0.05, dt, n_steps);
        let mesh = build_interval_mesh(1.0, 1, true).unwrap();
        let obs_model = build_observation(&mesh, &[[1.0, 0.0]], 0.005).unwrap();

        let k_true = 94.48;
        let kmat = crate::assembly::SymmetricOperator::from_triplets(1, &[(0, 0, k_true)]);
        let d = crate::assembly::SymmetricOperator::from_triplets(1, &[(0, 0, 1.0)]);
        let ops = crate::dynamics::build_transition(&model.mass, Some(&d), &kmat, dt).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(314);
        let path = crate::dynamics::simulate_path(
            &ops,
            &crate::dynamics::StateVector::zeros(1),
            &model.forcing,
            &crate::dynamics::ForceNoise::Point { dof: 0, std: 0.05 },
            n_steps,
            &mut rng,
        )
        .unwrap();
        let observations: Vec<ObservationInstant> = (1..=n_steps / n_o)
            .map(|k| {
                let step = k * n_o;
                let clean = path[step].displacement[0];
                let noisy = clean + 0.005 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                ObservationInstant { time: step as f64 * dt, values: DVector::from_element(1, noisy) }
            })
            .collect();
        (model, obs_model, observations)
    }

    #[test]
    fn objective_decomposes_into_step_terms_plus_prior() {
        let (model, obs_model, observations) = sdof_observations(125);
        let options = FilterOptions::default();
        let prior = HyperPrior::Uniform { lo: 0.001, hi: 1.0 };
        let point = batch_objective(&model, &obs_model, &observations, &options, &prior);
        assert!(point.failure.is_none());

        let run = run_filter(&model, &obs_model, &observations, &options).unwrap();
        let mut manual = prior.neg_log_density(model.sigma_f);
        for innovation in &run.innovations {
            manual += step_nll(innovation).unwrap();
        }
        assert_relative_eq!(point.objective, manual, epsilon = 1e-12);
    }

    #[test]
    fn objective_outside_prior_support_is_infinite() {
        let (model, obs_model, observations) = sdof_observations(625);
        let prior = HyperPrior::Uniform { lo: 0.01, hi: 0.1 };
        let point = batch_objective(
            &model.with_sigma_f(0.5),
            &obs_model,
            &observations,
            &FilterOptions::default(),
            &prior,
        );
        assert!(point.objective.is_infinite());
        assert!(point.failure.is_none());
    }

    #[test]
    fn additivity_over_disjoint_windows() {
        // the chain-rule factorisation: per-step contributions of one run,
        // partitioned by time, sum to the batch objective plus one prior term
        let (model, obs_model, observations) = sdof_observations(125);
        let prior = HyperPrior::Uniform { lo: 0.001, hi: 1.0 };
        let full = batch_objective(&model, &obs_model, &observations, &FilterOptions::default(), &prior)
            .objective;
        let run = run_filter(&model, &obs_model, &observations, &FilterOptions::default()).unwrap();
        let t_split = observations[observations.len() / 2].time + 1e-6;
        let mut early = 0.0;
        let mut late = 0.0;
        for innovation in &run.innovations {
            let t = innovation.step as f64 * model.dt;
            let v = step_nll(innovation).unwrap();
            if t < t_split {
                early += v;
            } else {
                late += v;
            }
        }
        assert!(!run.innovations.is_empty());
        assert_relative_eq!(
            full,
            early + late + prior.neg_log_density(model.sigma_f),
            epsilon = 1e-10
        );
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let (model, obs_model, observations) = sdof_observations(625);
        let prior = HyperPrior::Uniform { lo: 0.001, hi: 1.0 };
        let result = map_search(
            &[0.07],
            &model,
            &obs_model,
            &observations,
            &FilterOptions::default(),
            &prior,
        )
        .unwrap();
        assert_relative_eq!(result.best.sigma_f, 0.07);
        assert_eq!(result.curve.len(), 1);
    }

    #[test]
    fn map_lands_near_the_generating_sigma_f() {
        let (model, obs_model, observations) = sdof_observations(90);
        let prior = HyperPrior::Uniform { lo: 0.001, hi: 1.0 };
        let grid = log_grid(0.005, 0.5, 20);
        let result =
            map_search(&grid, &model, &obs_model, &observations, &FilterOptions::default(), &prior)
                .unwrap();
        // within a factor of two of the generating value (34 observations)
        let gap = (result.best.sigma_f / 0.05f64).ln().abs();
        assert!(gap <= 2.0f64.ln() + 1e-12, "MAP {} vs truth 0.05", result.best.sigma_f);
        assert_eq!(result.curve.len(), grid.len());
        // objective is finite on the prior interior for this scenario
        assert!(result.curve.iter().all(|p| p.objective.is_finite()));
    }

    #[test]
    fn objective_is_deterministic() {
        let (model, obs_model, observations) = sdof_observations(312);
        let prior = HyperPrior::Uniform { lo: 0.001, hi: 1.0 };
        let a = batch_objective(&model, &obs_model, &observations, &FilterOptions::default(), &prior);
        let b = batch_objective(&model, &obs_model, &observations, &FilterOptions::default(), &prior);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn infeasible_grid_reports_no_feasible_point() {
        let (model, obs_model, observations) = sdof_observations(625);
        let prior = HyperPrior::Uniform { lo: 1.0e3, hi: 1.0e4 };
        let err = map_search(
            &[0.01, 0.05],
            &model,
            &obs_model,
            &observations,
            &FilterOptions::default(),
            &prior,
        );
        assert!(matches!(err, Err(Error::NoFeasiblePoint(_))));
    }
}

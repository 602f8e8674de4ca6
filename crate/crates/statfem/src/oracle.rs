//! Independent reference implementations used by the test and acceptance
//! suites: Monte Carlo forward statistics, dense joint-Gaussian
//! conditioning, and a small batch Kalman smoother-free oracle for the
//! linear fixed-material case. These deliberately take different numerical
//! routes (explicit inverses, explicitly stacked joints) from the
//! production code they check.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{simulate_path, StateVector};
use crate::error::{Error, Result};
use crate::filter::{ObservationInstant, ObservationModel};
use crate::forward::StochasticModel;

/// Empirical per-step statistics of probe displacements over an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// (n_steps + 1) x n_probes.
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
    pub n_samples: usize,
}

impl EnsembleStats {
    /// Standard error of the mean estimate, std / sqrt(N).
    pub fn standard_error(&self) -> DMatrix<f64> {
        &self.std / (self.n_samples as f64).sqrt()
    }

    /// Relative standard error of the std estimate, about 1/sqrt(2(N-1)).
    pub fn std_relative_error(&self) -> f64 {
        1.0 / (2.0 * (self.n_samples as f64 - 1.0)).sqrt()
    }
}

fn splitmix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo forward statistics: `n_samples` independent trajectories,
/// each with a fresh Gaussian coefficient draw and forcing path. Probe rows
/// weight the displacement DOFs. Samples are distributed over worker
/// threads in fixed blocks so the result is independent of scheduling.
pub fn mc_forward(
    model: &StochasticModel,
    probes: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if n_samples < 2 {
        return Err(Error::invalid("Monte Carlo needs at least two samples".to_string()));
    }
    if probes.ncols() != model.n_dofs() {
        return Err(Error::invalid("probe weights do not match the displacement DOFs".to_string()));
    }
    let n_probes = probes.nrows();
    let n_rows = model.n_steps + 1;

    // factor of the coefficient covariance for sampling; zero factor when
    // the prior is degenerate
    let coeff_factor = if model.material_cov.amax() == 0.0 {
        DMatrix::zeros(model.n_elements(), model.n_elements())
    } else {
        Cholesky::new(model.material_cov.clone())
            .map(|c| c.l())
            .ok_or_else(|| Error::Numerical("material covariance is not factorable".to_string()))?
    };
    let noise = model.force_noise();

    const BLOCK: usize = 64;
    let blocks: Vec<usize> = (0..n_samples.div_ceil(BLOCK)).collect();
    let partials: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = blocks
        .par_iter()
        .map(|&block| {
            let lo = block * BLOCK;
            let hi = ((block + 1) * BLOCK).min(n_samples);
            let mut sum = DMatrix::zeros(n_rows, n_probes);
            let mut sumsq = DMatrix::zeros(n_rows, n_probes);
            for sample in lo..hi {
                let mut rng = ChaCha12Rng::seed_from_u64(splitmix(seed, sample as u64));
                let xi = DVector::from_fn(model.n_elements(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let coeffs = &model.coeff_mean + &coeff_factor * xi;
                let k = model.bank.assemble(&coeffs).map_err(|e| {
                    Error::invalid(format!("sample {sample}: {e}"))
                })?;
                let ops = crate::dynamics::build_transition(
                    &model.mass,
                    model.damping.as_ref(),
                    &k,
                    model.dt,
                )?;
                let path = simulate_path(
                    &ops,
                    &StateVector::zeros(model.n_dofs()),
                    &model.forcing,
                    &noise,
                    model.n_steps,
                    &mut rng,
                )
                .map_err(|e| Error::Numerical(format!("sample {sample}: {e}")))?;
                for (row, state) in path.iter().enumerate() {
                    let p = probes * &state.displacement;
                    for j in 0..n_probes {
                        sum[(row, j)] += p[j];
                        sumsq[(row, j)] += p[j] * p[j];
                    }
                }
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = DMatrix::zeros(n_rows, n_probes);
    let mut sumsq = DMatrix::zeros(n_rows, n_probes);
    for partial in partials {
        let (s, ss) = partial?;
        sum += s;
        sumsq += ss;
    }
    let n = n_samples as f64;
    let mean = &sum / n;
    let std = DMatrix::from_fn(n_rows, n_probes, |i, j| {
        ((sumsq[(i, j)] - n * mean[(i, j)] * mean[(i, j)]) / (n - 1.0)).max(0.0).sqrt()
    });
    let times = (0..n_rows).map(|k| k as f64 * model.dt).collect();
    Ok(EnsembleStats { times, mean, std, n_samples })
}

/// Textbook conditioning of a joint Gaussian on y = H_ext x + e, assembled
/// explicitly as the (x, y) joint and reduced with an explicit inverse of
/// the y block.
pub fn dense_condition(
    joint_mean: &DVector<f64>,
    joint_cov: &DMatrix<f64>,
    h_ext: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = joint_mean.len();
    let n_y = y.len();
    if joint_cov.nrows() != dim
        || joint_cov.ncols() != dim
        || h_ext.ncols() != dim
        || h_ext.nrows() != n_y
        || noise_cov.nrows() != n_y
    {
        return Err(Error::invalid("conditioning shape mismatch".to_string()));
    }
    let cross = joint_cov * h_ext.transpose();
    let s = h_ext * &cross + noise_cov;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Numerical("observation covariance block is singular".to_string()))?;
    let gain = &cross * &s_inv;
    let mean = joint_mean + &gain * (y - h_ext * joint_mean);
    let cov = joint_cov - &gain * cross.transpose();
    Ok((mean, cov))
}

/// Joint conditioning of a linear fixed-material model on a short stack of
/// observations: builds the exact Gaussian over the stacked states at
/// steps 1..=T and all observations, conditions once, and returns the
/// final-state marginal. Deliberately limited to T <= 3 and n_u <= 6.
pub fn batch_linear_kalman(
    model: &StochasticModel,
    obs_model: &ObservationModel,
    observations: &[ObservationInstant],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n_u = model.n_dofs();
    let t_steps = observations.len();
    if n_u > 6 || t_steps == 0 || t_steps > 3 {
        return Err(Error::invalid(
            "batch oracle is restricted to n_u <= 6 and 1..=3 observation steps".to_string(),
        ));
    }
    if model.material_cov.amax() != 0.0 {
        return Err(Error::invalid("batch oracle requires a deterministic material".to_string()));
    }
    for (k, obs) in observations.iter().enumerate() {
        let expected = (k + 1) as f64 * model.dt;
        if (obs.time - expected).abs() > 1e-9 {
            return Err(Error::invalid(
                "batch oracle expects one observation at every step 1..=T".to_string(),
            ));
        }
    }

    let ops = model.transition_at(&model.coeff_mean)?;
    let a = ops.a_matrix().clone();
    let c_zeta = ops.process_noise().clone();
    let dim = 2 * n_u;

    // stacked means by recursion from the deterministic initial state
    let mut means = Vec::with_capacity(t_steps);
    let mut v = DVector::zeros(dim);
    for k in 0..t_steps {
        let t = k as f64 * model.dt;
        v = &a * &v + ops.b_apply(&model.forcing.at(t)) * model.dt;
        means.push(v.clone());
    }

    // Cov(v_i, v_j) = V_i (A^{j-i})^T with V_i the marginal at step i
    let mut marginals = Vec::with_capacity(t_steps);
    let mut var = DMatrix::zeros(dim, dim);
    for _ in 0..t_steps {
        var = &a * &var * a.transpose() + &c_zeta;
        marginals.push(var.clone());
    }
    let mut powers: Vec<DMatrix<f64>> = vec![DMatrix::identity(dim, dim)];
    for k in 1..t_steps {
        powers.push(&a * &powers[k - 1]);
    }

    let total = dim * t_steps;
    let mut stack_mean = DVector::zeros(total);
    let mut stack_cov = DMatrix::zeros(total, total);
    for i in 0..t_steps {
        stack_mean.rows_mut(i * dim, dim).copy_from(&means[i]);
        for j in i..t_steps {
            let block = &marginals[i] * powers[j - i].transpose();
            stack_cov.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&block);
            if j > i {
                stack_cov.view_mut((j * dim, i * dim), (dim, dim)).copy_from(&block.transpose());
            }
        }
    }

    // observations y_i = H v_i + e_i stacked below the states
    let n_y = obs_model.n_sensors();
    let mut h_ext = DMatrix::zeros(n_y * t_steps, total);
    let mut noise = DMatrix::zeros(n_y * t_steps, n_y * t_steps);
    let mut y = DVector::zeros(n_y * t_steps);
    for i in 0..t_steps {
        h_ext.view_mut((i * n_y, i * dim), (n_y, dim)).copy_from(&obs_model.matrix);
        for s in 0..n_y {
            noise[(i * n_y + s, i * n_y + s)] = obs_model.noise_variance[s];
        }
        y.rows_mut(i * n_y, n_y).copy_from(&observations[i].values);
    }

    let (mean, cov) = dense_condition(&stack_mean, &stack_cov, &h_ext, &noise, &y)?;
    let last = (t_steps - 1) * dim;
    Ok((mean.rows(last, dim).into_owned(), cov.view((last, last), (dim, dim)).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{build_observation, run_filter, update, FilterOptions};
    use crate::forward::{sdof_model, AugmentedGaussian};
    use crate::mesh::build_interval_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_model_has_zero_spread() {
        let mut model = sdof_model(100.0, 0.0, 1.0, 0.0, 0.002, 100);
        model.material_cov = DMatrix::zeros(1, 1);
        let probes = DMatrix::from_element(1, 1, 1.0);
        let stats = mc_forward(&model, &probes, 50, 7).unwrap();
        // identical paths; only f64 cancellation noise remains
        let scale = stats.mean.amax();
        assert!(stats.std.amax() < 1e-7 * scale.max(1e-30), "spread {}", stats.std.amax());
        assert_eq!(stats.times.len(), 101);
    }

    #[test]
    fn ensemble_spread_shrinks_like_inverse_sqrt_n() {
        // standard error of the ensemble MEAN at a fixed step scales ~1/sqrt(N);
        // measure the spread of independent small-ensemble means
        let model = sdof_model(100.0, 5.0, 1.0, 0.05, 0.002, 120);
        let probes = DMatrix::from_element(1, 1, 1.0);
        let spread = |n: usize, reps: u64| -> f64 {
            let mut vals = Vec::new();
            for r in 0..reps {
                let stats = mc_forward(&model, &probes, n, 1000 + r).unwrap();
                vals.push(stats.mean[(120, 0)]);
            }
            let m = vals.iter().sum::<f64>() / reps as f64;
            (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps as f64 - 1.0)).sqrt()
        };
        let s_small = spread(50, 24);
        let s_large = spread(200, 24);
        let ratio = s_small / s_large;
        assert!(
            ratio > 1.3 && ratio < 3.2,
            "expected roughly 2x shrink from 4x samples, got {ratio:.2} ({s_small:.3e} vs {s_large:.3e})"
        );
    }

    #[test]
    fn mc_is_seed_deterministic_and_parallel_order_independent() {
        let model = sdof_model(100.0, 5.0, 1.0, 0.05, 0.002, 60);
        let probes = DMatrix::from_element(1, 1, 1.0);
        let a = mc_forward(&model, &probes, 300, 99).unwrap();
        let b = mc_forward(&model, &probes, 300, 99).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
    }

    #[test]
    fn scalar_dense_conditioning_matches_hand_result() {
        // x ~ N(0,1), y = x + e with unit noise, y = 2 -> N(1, 1/2)
        let (mean, cov) = dense_condition(
            &DVector::from_element(1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 2.0),
        )
        .unwrap();
        assert_relative_eq!(mean[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn independent_block_is_untouched_by_conditioning() {
        // joint of (v, kappa) with zero cross-covariance, H touching only v
        let joint_mean = DVector::from_vec(vec![0.5, 2.0]);
        let joint_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let noise = DMatrix::from_element(1, 1, 0.25);
        let (mean, cov) =
            dense_condition(&joint_mean, &joint_cov, &h, &noise, &DVector::from_element(1, 1.0))
                .unwrap();
        assert_relative_eq!(mean[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 4.0, epsilon = 1e-12);
        assert!(mean[0] > 0.5 && mean[0] < 1.0);
    }

    #[test]
    fn update_matches_dense_conditioning_on_random_joints() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(2718);
        for trial in 0..40 {
            let n_u = 2;
            let n_e = 2;
            let dim = 2 * n_u + n_e;
            let mut randm =
                |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            let half = randm(dim, dim);
            let joint = &half * half.transpose();
            let prior = AugmentedGaussian {
                state_mean: randm(2 * n_u, 1).column(0).into_owned(),
                material_mean: randm(n_e, 1).column(0).into_owned(),
                state_cov: joint.view((0, 0), (2 * n_u, 2 * n_u)).into_owned(),
                cross_cov: joint.view((0, 2 * n_u), (2 * n_u, n_e)).into_owned(),
                material_cov: joint.view((2 * n_u, 2 * n_u), (n_e, n_e)).into_owned(),
                time_index: 0,
            };
            let n_y = 1 + trial % 2;
            let mut h_state = DMatrix::zeros(n_y, 2 * n_u);
            let h_block = randm(n_y, n_u);
            h_state.view_mut((0, 0), (n_y, n_u)).copy_from(&h_block);
            let obs = ObservationModel {
                matrix: h_state.clone(),
                noise_variance: DVector::from_element(n_y, 0.09),
                sensor_coords: vec![[0.0, 0.0]; n_y],
            };
            let y = randm(n_y, 1).column(0).into_owned();
            let (posterior, _) = update(&prior, &obs, &y).unwrap();

            let mut h_ext = DMatrix::zeros(n_y, dim);
            h_ext.view_mut((0, 0), (n_y, 2 * n_u)).copy_from(&h_state);
            let noise = DMatrix::from_diagonal(&DVector::from_element(n_y, 0.09));
            let (mean, cov) =
                dense_condition(&prior.joint_mean(), &prior.joint_covariance(), &h_ext, &noise, &y)
                    .unwrap();
            assert!((posterior.joint_mean() - &mean).amax() < 1e-8);
            assert!((posterior.joint_covariance() - &cov).amax() < 1e-8);
        }
    }

    #[test]
    fn one_step_batch_equals_predict_update_composition() {
        let mut model = sdof_model(100.0, 0.0, 1.0, 0.03, 0.002, 1);
        model.material_cov = DMatrix::zeros(1, 1);
        let mesh = build_interval_mesh(1.0, 1, true).unwrap();
        let obs_model = build_observation(&mesh, &[[1.0, 0.0]], 0.01).unwrap();
        let observations = vec![ObservationInstant {
            time: model.dt,
            values: DVector::from_element(1, 3.0e-5),
        }];
        let (mean, cov) = batch_linear_kalman(&model, &obs_model, &observations).unwrap();
        let run = run_filter(&model, &obs_model, &observations, &FilterOptions::default()).unwrap();
        assert!((mean - &run.final_density.state_mean).amax() < 1e-10);
        assert!((cov - &run.final_density.state_cov).amax() < 1e-10);
    }

    #[test]
    fn exact_full_observation_recovers_deterministic_trajectory() {
        let mut model = sdof_model(100.0, 0.0, 1.0, 0.0, 0.002, 2);
        model.material_cov = DMatrix::zeros(1, 1);
        let ops = model.transition_at(&model.coeff_mean).unwrap();
        let mut v = StateVector::zeros(1);
        let mut truth = Vec::new();
        for k in 0..2 {
            let t = k as f64 * model.dt;
            v = crate::dynamics::step(&ops, &v, &model.forcing.at(t), None).unwrap();
            truth.push(v.clone());
        }
        let obs_model = ObservationModel {
            matrix: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            noise_variance: DVector::from_element(1, 1e-18),
            sensor_coords: vec![[1.0, 0.0]],
        };
        let observations: Vec<ObservationInstant> = truth
            .iter()
            .enumerate()
            .map(|(k, state)| ObservationInstant {
                time: (k + 1) as f64 * model.dt,
                values: DVector::from_element(1, state.displacement[0]),
            })
            .collect();
        let (mean, _) = batch_linear_kalman(&model, &obs_model, &observations).unwrap();
        assert_relative_eq!(mean[0], truth[1].displacement[0], epsilon = 1e-10);
        assert_relative_eq!(mean[1], truth[1].velocity[0], epsilon = 1e-8);
    }

    #[test]
    fn batch_oracle_refuses_oversized_problems() {
        let model = sdof_model(100.0, 5.0, 1.0, 0.05, 0.002, 5);
        let mesh = build_interval_mesh(1.0, 1, true).unwrap();
        let obs_model = build_observation(&mesh, &[[1.0, 0.0]], 0.01).unwrap();
        // material covariance non-zero
        let obs = vec![ObservationInstant { time: model.dt, values: DVector::zeros(1) }];
        assert!(batch_linear_kalman(&model, &obs_model, &obs).is_err());
        // too many steps
        let mut det = model.clone();
        det.material_cov = DMatrix::zeros(1, 1);
        let too_many: Vec<ObservationInstant> = (1..=4)
            .map(|k| ObservationInstant { time: k as f64 * det.dt, values: DVector::zeros(1) })
            .collect();
        assert!(batch_linear_kalman(&det, &obs_model, &too_many).is_err());
    }
}

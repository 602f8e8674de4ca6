// temporary exploration of the plate scenario parameters (deleted before release)
use statfem::filter::{run_filter_with_probes, FilterOptions};
use statfem::forward::forward_run;
use statfem::scenario::{build_scenario, make_truth, parse_config};

fn plate_text(sigma_e: f64) -> String {
    format!(
        r#"
[scenario]
kind = plate2d
[mesh]
width = 2.0
height = 2.0
hole_radius = 0.2
hole_x = 1.0
hole_y = 1.0
sectors = 24
rings = 12
clamp_left = true
[material]
model = lognormal
density = 8000.0
base = 2.0e9
sigma = 0.1
length_scale = 1.0
nu = 1.0
[forcing]
law = triangle
amplitude = 5.0e5
start = 0.0
rise = 2.0e-3
fall = 2.0e-3
pattern = right_edge
noise = field
sigma_f = 1250.0
noise_length_scale = 0.5
noise_nu = 1.0
[damping]
model = rayleigh
zeta = 0.005
omega1 = 250.0
omega2 = 4774.648292756861
[time]
dt = 6.25e-5
total = 4.0e-2
observe_every = 32
assimilate_from = 8.0e-3
assimilate_until = 3.2e-2
[sensors]
sigma_e = {sigma_e}
sensor = 0.5 0.2
sensor = 0.5 0.28888888888888886
sensor = 0.5 0.37777777777777777
sensor = 0.5 0.4666666666666667
sensor = 0.5 0.5555555555555556
sensor = 0.5 0.6444444444444445
sensor = 0.5 0.7333333333333333
sensor = 0.5 0.8222222222222222
sensor = 0.5 0.9111111111111111
sensor = 0.5 1.0
sensor = 0.5 1.0888888888888888
sensor = 0.5 1.1777777777777778
sensor = 0.5 1.2666666666666666
sensor = 0.5 1.3555555555555556
sensor = 0.5 1.4444444444444444
sensor = 0.5 1.5333333333333334
sensor = 0.5 1.6222222222222222
sensor = 0.5 1.711111111111111
sensor = 0.5 1.8
[probes]
probe = 0.5 0.2
probe = 1.75 1.0
[seeds]
material = 3301
forcing = 3302
noise = 3303
mc = 3304
[calibration]
sigma_f_min = 125.0
sigma_f_max = 12500.0
points = 20
"#
    )
}

#[test]
fn probe_plate_truth_and_runtime() {
    let t0 = std::time::Instant::now();
    let config = parse_config(&plate_text(1.0e-7)).unwrap();
    let scenario = build_scenario(&config).unwrap();
    println!(
        "build: {:.2?} (elements={}, n_u={}, dt_max={:.4e})",
        t0.elapsed(),
        scenario.mesh.n_elements(),
        scenario.model.n_dofs(),
        scenario.stability_dt_max
    );

    let t1 = std::time::Instant::now();
    let truth = make_truth(&scenario).unwrap();
    println!("truth: {:.2?}", t1.elapsed());

    // true signal statistics at sensor 1 = (0.5, 0.2) over the full run
    let s1: Vec<f64> = truth.sensor_clean.iter().map(|o| o.values[0]).collect();
    let mean = s1.iter().sum::<f64>() / s1.len() as f64;
    let std = (s1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s1.len() as f64 - 1.0)).sqrt();
    println!("sensor1 clean: mean={mean:.4e} std={std:.4e} -> 10% = {:.4e}", 0.1 * std);
    let p: Vec<f64> = (0..truth.probe_series.nrows()).map(|k| truth.probe_series[(k, 1)]).collect();
    let pmax = p.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    println!("probe(1.75,1.0): max |u| = {pmax:.4e}");

    let t2 = std::time::Instant::now();
    let fwd = forward_run(&scenario.model, Some(&scenario.probe_matrix)).unwrap();
    println!("forward run: {:.2?}", t2.elapsed());
    let last = fwd.records.last().unwrap();
    println!("forward final probe std: {:?}", last.probe_std.as_slice());

    let t3 = std::time::Instant::now();
    let run = run_filter_with_probes(
        &scenario.model,
        &scenario.observation,
        &truth.observations,
        &FilterOptions { track_material_spectrum: true, ..scenario.filter_options.clone() },
        Some(&scenario.probe_matrix),
    )
    .unwrap();
    println!("filter run: {:.2?} ({} updates)", t3.elapsed(), run.updates.len());
    println!("final material mean range: {:.4e} .. {:.4e}",
        run.final_density.material_mean.min(), run.final_density.material_mean.max());
}

#[test]
fn micro_timings() {
    use statfem::forward::material_jacobian;
    let config = parse_config(&plate_text(1.0e-5)).unwrap();
    let scenario = build_scenario(&config).unwrap();
    let model = &scenario.model;
    let ops = model.transition_at(&model.coeff_mean).unwrap();
    let n = 2 * model.n_dofs();
    let x = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0);
    let reps = 50;

    let t = std::time::Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        let y = ops.apply_left(&x);
        acc += y[(0, 0)];
    }
    println!("apply_left {n}x{n}: {:.3?}/call (acc {acc:.2})", t.elapsed() / reps);

    let t = std::time::Instant::now();
    for _ in 0..reps {
        let y = ops.apply_right(&x);
        acc += y[(0, 0)];
    }
    println!("apply_right: {:.3?}/call", t.elapsed() / reps);

    let v = statfem::dynamics::StateVector {
        displacement: nalgebra::DVector::from_element(model.n_dofs(), 1e-4),
        velocity: nalgebra::DVector::from_element(model.n_dofs(), 1e-2),
    };
    let jac = material_jacobian(&model.bank, &model.mass, model.dt, &v).unwrap();
    let c_kk = model.material_cov.clone();
    let t = std::time::Instant::now();
    for _ in 0..reps {
        let y = jac.mul_right(&c_kk);
        acc += y[(0, 0)];
    }
    println!("jac.mul_right (n_e {}): {:.3?}/call", c_kk.nrows(), t.elapsed() / reps);

    let y = jac.mul_right(&c_kk);
    let t = std::time::Instant::now();
    for _ in 0..reps {
        let z = jac.mul_transpose_right(&ops.apply_left(&y.transpose()).transpose());
        acc += z[(0, 0)];
    }
    println!("A(Y^T)^T + mul_transpose_right: {:.3?}/call", t.elapsed() / reps);

    let t = std::time::Instant::now();
    for _ in 0..reps {
        let jac2 = material_jacobian(&model.bank, &model.mass, model.dt, &v).unwrap();
        acc += jac2.to_dense()[(5, 5)];
    }
    println!("material_jacobian+to_dense: {:.3?}/call (acc {acc:.2e})", t.elapsed() / reps);

    let g = model.initial_density();
    let t = std::time::Instant::now();
    for _ in 0..reps {
        let r = statfem::forward::propagate_moments(&g, &ops, &jac, &model.forcing.at(0.0)).unwrap();
        acc += r.state_cov[(0, 0)];
    }
    println!("propagate_moments: {:.3?}/call (acc {acc:.3e})", t.elapsed() / reps);
}

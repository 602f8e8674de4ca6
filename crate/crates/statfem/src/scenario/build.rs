//! Assembles a runnable scenario from a parsed configuration: mesh,
//! stochastic model, observation model, filter window, and probe weights.
//! The time step is checked against the stability limit here, so a config
//! that loads is a config that runs.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{assemble_mass, assemble_stiffness, rayleigh_damping, SymmetricOperator};
use crate::dynamics::{stability_limit, Forcing, ForcingLaw};
use crate::error::{Error, Result};
use crate::field::{build_material_covariance, force_covariance_factor, nodal_to_element, MaternParams, SpdeField};
use crate::filter::{build_observation, FilterOptions, ObservationModel};
use crate::forward::StochasticModel;
use crate::mesh::{build_interval_mesh, build_plate_with_hole_mesh, Mesh, PlateGeometry};

use super::config::{
    config_digest, DampingConfig, ForcePattern, ForcingLawKind, MaterialModel, MeshConfig, NoiseKind,
    ScenarioConfig,
};

pub struct Scenario {
    pub config: ScenarioConfig,
    pub digest: String,
    pub mesh: Mesh,
    pub model: StochasticModel,
    pub observation: ObservationModel,
    pub filter_options: FilterOptions,
    /// n_probes x n_u displacement weights.
    pub probe_matrix: DMatrix<f64>,
    pub probe_labels: Vec<String>,
    /// Nodal log-field prior of the lognormal material, kept for truth
    /// sampling. None for the gaussian material model.
    pub material_field: Option<SpdeField>,
    pub stability_dt_max: f64,
}

impl Scenario {
    pub fn n_observation_instants(&self) -> usize {
        self.model.n_steps / self.config.time.observe_every
    }
}

fn build_mesh(cfg: &MeshConfig) -> Result<Mesh> {
    match *cfg {
        MeshConfig::Interval { length, elements, clamp_left } => {
            build_interval_mesh(length, elements, clamp_left)
        }
        MeshConfig::Plate { width, height, hole_radius, hole_x, hole_y, sectors, rings, clamp_left } => {
            build_plate_with_hole_mesh(
                PlateGeometry { width, height, hole_radius, hole_center: [hole_x, hole_y] },
                sectors,
                rings,
                clamp_left,
            )
        }
    }
}

/// Free DOF of the node with the largest x coordinate (1D tip).
fn tip_dof(mesh: &Mesh) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for n in 0..mesh.n_nodes() {
        let x = mesh.node(n)[0];
        if best.map(|(_, bx)| x > bx).unwrap_or(true) {
            best = Some((n, x));
        }
    }
    let (node, _) = best.ok_or_else(|| Error::invalid("empty mesh".to_string()))?;
    mesh.free_dof(node)
        .ok_or_else(|| Error::Config("the tip node is clamped; no tip load possible".to_string()))
}

/// Lumped traction weights along the x = width edge: each boundary segment
/// contributes half its length to both end nodes.
fn right_edge_pattern(mesh: &Mesh, width: f64) -> Result<DVector<f64>> {
    let mut edge_nodes: Vec<(usize, f64)> = (0..mesh.n_nodes())
        .filter(|&n| (mesh.node(n)[0] - width).abs() < 1e-9)
        .map(|n| (n, mesh.node(n)[1]))
        .collect();
    if edge_nodes.len() < 2 {
        return Err(Error::Config("no mesh edge lies on the loaded boundary".to_string()));
    }
    edge_nodes.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut pattern = DVector::zeros(mesh.n_free_dofs());
    for pair in edge_nodes.windows(2) {
        let ((a, ya), (b, yb)) = (pair[0], pair[1]);
        let half = 0.5 * (yb - ya);
        for node in [a, b] {
            if let Some(dof) = mesh.free_dof(node) {
                pattern[dof] += half;
            }
        }
    }
    Ok(pattern)
}

/// Builds the runnable scenario, validating stability and sensor layout.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let mesh = build_mesh(&config.mesh)?;
    let n_e = mesh.n_elements();
    let mass = assemble_mass(&mesh, config.material.density, true)?.diagonal();

    // material prior over the element coefficients
    let (coeff_mean, material_cov, material_field) = match config.material.model {
        MaterialModel::Gaussian => {
            if n_e != 1 {
                return Err(Error::Config(
                    "gaussian material model is meant for single-element meshes".to_string(),
                ));
            }
            let mean = DVector::from_element(1, config.material.base);
            let cov = DMatrix::from_element(1, 1, config.material.sigma * config.material.sigma);
            (mean, cov, None)
        }
        MaterialModel::Lognormal => {
            let params = MaternParams {
                nu: config.material.nu.unwrap(),
                length_scale: config.material.length_scale.unwrap(),
                sigma: config.material.sigma,
                dim: mesh.dimension(),
            };
            let field = build_material_covariance(&mesh, &params)?;
            let (_, cov_elem) =
                nodal_to_element(&mesh, &DVector::zeros(mesh.n_nodes()), &field.nodal_covariance)?;
            // first-order image of the lognormal transform: coefficient
            // mean = base, covariance = base^2 C_kappa
            let mean = DVector::from_element(n_e, config.material.base);
            let cov = cov_elem * (config.material.base * config.material.base);
            (mean, cov, Some(field))
        }
    };

    let (stiffness, bank) = assemble_stiffness(&mesh, &coeff_mean)?;

    let damping = match config.damping {
        DampingConfig::None => None,
        DampingConfig::Viscous { gamma } => {
            let n = mesh.n_free_dofs();
            let triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, gamma)).collect();
            Some(SymmetricOperator::from_triplets(n, &triplets))
        }
        DampingConfig::Rayleigh { zeta, omega1, omega2 } => {
            let mass_op = assemble_mass(&mesh, config.material.density, true)?;
            Some(rayleigh_damping(&mass_op, &stiffness, omega1, omega2, zeta)?)
        }
    };

    // deterministic forcing
    let pattern = match config.forcing.pattern {
        ForcePattern::Tip => {
            if mesh.dimension() != 1 {
                return Err(Error::Config("tip loading is defined for 1D meshes".to_string()));
            }
            let mut p = DVector::zeros(mesh.n_free_dofs());
            p[tip_dof(&mesh)?] = 1.0;
            p
        }
        ForcePattern::RightEdge => {
            if mesh.dimension() != 2 {
                return Err(Error::Config("edge tractions are defined for 2D meshes".to_string()));
            }
            let width = match config.mesh {
                MeshConfig::Plate { width, .. } => width,
                _ => unreachable!(),
            };
            right_edge_pattern(&mesh, width)?
        }
    };
    let law = match config.forcing.law {
        ForcingLawKind::None => ForcingLaw::Zero,
        ForcingLawKind::Sine => ForcingLaw::Sine {
            amplitude: config.forcing.amplitude,
            frequency: config.forcing.frequency.unwrap(),
        },
        ForcingLawKind::TwoSine => ForcingLaw::TwoSine {
            amplitude: config.forcing.amplitude,
            omega_low: config.forcing.omega_low.unwrap(),
            omega_high: config.forcing.omega_high.unwrap(),
        },
        ForcingLawKind::Triangle => ForcingLaw::Triangle {
            peak: config.forcing.amplitude,
            start: config.forcing.start.unwrap_or(0.0),
            rise: config.forcing.rise.unwrap(),
            fall: config.forcing.fall.unwrap(),
        },
    };

    // stochastic forcing factor at sigma_f = 1
    let force_factor_unit = match config.forcing.noise {
        NoiseKind::None => DMatrix::zeros(mesh.n_free_dofs(), 0),
        NoiseKind::Point => {
            let mut g = DMatrix::zeros(mesh.n_free_dofs(), 1);
            g[(tip_dof(&mesh)?, 0)] = 1.0;
            g
        }
        NoiseKind::Field => {
            let params = MaternParams {
                nu: config.forcing.noise_nu.unwrap(),
                length_scale: config.forcing.noise_length_scale.unwrap(),
                sigma: 1.0,
                dim: mesh.dimension(),
            };
            force_covariance_factor(&mesh, &params)?
        }
    };

    let n_steps = (config.time.total / config.time.dt).round() as usize;
    let dt_max = stability_limit(&mass, &stiffness)?;
    if config.time.dt >= dt_max {
        return Err(Error::Config(format!(
            "dt = {} exceeds the stability limit {dt_max:.6e} of this mesh and material",
            config.time.dt
        )));
    }

    let model = StochasticModel {
        mass,
        damping,
        bank,
        coeff_mean,
        material_cov,
        force_factor_unit,
        sigma_f: config.forcing.sigma_f,
        forcing: Forcing { pattern, law },
        dt: config.time.dt,
        n_steps,
    };

    let observation = build_observation(&mesh, &config.sensors.coords, config.sensors.sigma_e)?;

    // probe weights over displacement DOFs; weight on the Dirichlet
    // boundary reads as zero displacement
    let mut probe_matrix = DMatrix::zeros(config.probes.len(), mesh.n_free_dofs());
    let mut probe_labels = Vec::with_capacity(config.probes.len());
    for (row, &p) in config.probes.iter().enumerate() {
        let (element, weights) = mesh.locate_point(p).map_err(|_| {
            Error::Config(format!("probe ({}, {}) lies outside the mesh", p[0], p[1]))
        })?;
        for (&node, &w) in mesh.element_nodes(element).iter().zip(&weights) {
            if let Some(dof) = mesh.free_dof(node) {
                probe_matrix[(row, dof)] += w;
            }
        }
        probe_labels.push(if mesh.dimension() == 1 {
            format!("x{}", trim_float(p[0]))
        } else {
            format!("x{}_y{}", trim_float(p[0]), trim_float(p[1]))
        });
    }

    let filter_options = FilterOptions {
        update_material: true,
        assimilate_from: config.time.assimilate_from,
        assimilate_until: config.time.assimilate_until,
        // the eigensolve per update is cheap at these element counts
        track_material_spectrum: n_e <= 1000,
    };

    Ok(Scenario {
        digest: config_digest(config),
        config: config.clone(),
        mesh,
        model,
        observation,
        filter_options,
        probe_matrix,
        probe_labels,
        material_field,
        stability_dt_max: dt_max,
    })
}

fn trim_float(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p").replace('-', "m")
}

/// Parses and builds in one step (the "load" operation of the CLI).
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let config = super::config::parse_config(text)?;
    build_scenario(&config)
}

/// Shipped-style bar configuration text for tests.
#[cfg(test)]
pub(crate) fn bar_text(length_scale: f64) -> String {
        format!(
            r#"
[scenario]
kind = bar1d
[mesh]
length = 40.0
elements = 80
clamp_left = true
[material]
model = lognormal
density = 1200.0
base = 5.0e5
sigma = 0.1
length_scale = {length_scale}
nu = 1.5
[forcing]
law = sine
amplitude = 2000.0
frequency = 0.25
pattern = tip
noise = point
sigma_f = 100.0
[damping]
model = rayleigh
zeta = 0.005
omega1 = 0.7539822368615503
omega2 = 2.3876104167282426
[time]
dt = 4.8989794855663565e-3
total = 19.595917942265426
observe_every = 100
assimilate_from = 3.9191835884530852
assimilate_until = 15.676734353812341
[sensors]
sigma_e = 0.01
sensor = 4.0
sensor = 8.0
sensor = 12.0
sensor = 16.0
sensor = 20.0
sensor = 24.0
sensor = 28.0
sensor = 32.0
sensor = 36.0
sensor = 40.0
[probes]
probe = 40.0
[seeds]
material = 2101
forcing = 2102
noise = 2103
mc = 2104
[calibration]
sigma_f_min = 10.0
sigma_f_max = 1000.0
points = 20
"#
    )
}

#[cfg(test)]
mod tests {
    use super::super::config::parse_config;
    use super::*;

    #[test]
    fn bar_scenario_builds_with_expected_shapes() {
        let config = parse_config(&bar_text(10.0)).unwrap();
        let scenario = build_scenario(&config).unwrap();
        assert_eq!(scenario.mesh.n_elements(), 80);
        assert_eq!(scenario.model.n_dofs(), 80);
        assert_eq!(scenario.model.n_steps, 4000);
        assert_eq!(scenario.observation.n_sensors(), 10);
        assert_eq!(scenario.probe_matrix.nrows(), 1);
        // tip probe reads the last free DOF
        assert_eq!(scenario.probe_matrix[(0, 79)], 1.0);
        assert!(scenario.config.time.dt < scenario.stability_dt_max);
        // coefficient prior: mean E0, marginal std about E0 * sigma_kappa
        assert!((scenario.model.coeff_mean[40] - 5.0e5).abs() < 1e-9);
        let std40 = scenario.model.material_cov[(40, 40)].sqrt();
        assert!((std40 / 5.0e5 - 0.1).abs() < 0.02, "coefficient std {std40}");
    }

    #[test]
    fn unstable_dt_is_rejected_with_the_limit() {
        let text = bar_text(10.0).replace(
            "dt = 4.8989794855663565e-3",
            "dt = 4.8989794855663565e-2",
        ).replace(
            "total = 19.595917942265426",
            "total = 19.595917942265426e0",
        );
        // keep total/dt integral: 19.5959.../0.0489898... = 400 steps
        let config = parse_config(&text).unwrap();
        match build_scenario(&config) {
            Err(Error::Config(message)) => assert!(message.contains("stability limit"), "{message}"),
            other => panic!("expected stability rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn point_noise_covariance_hits_the_tip_dof() {
        let config = parse_config(&bar_text(2.5)).unwrap();
        let scenario = build_scenario(&config).unwrap();
        let cf = scenario.model.force_covariance();
        assert_eq!(cf[(79, 79)], 100.0 * 100.0);
        assert_eq!(cf.sum(), 100.0 * 100.0);
    }

    #[test]
    fn forcing_pattern_is_unit_at_the_tip() {
        let config = parse_config(&bar_text(10.0)).unwrap();
        let scenario = build_scenario(&config).unwrap();
        assert_eq!(scenario.model.forcing.pattern[79], 1.0);
        assert_eq!(scenario.model.forcing.pattern.sum(), 1.0);
    }
}

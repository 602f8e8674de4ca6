//! Matérn-class Gaussian random fields on the mesh via the discretised
//! stochastic PDE route: operator assembly, dense covariance construction,
//! seeded sampling, nodal-to-element projection, and the lognormal material
//! transform.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

use crate::assembly::{assemble_gram, assemble_laplacian};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    /// Smoothness.
    pub nu: f64,
    /// Correlation length.
    pub length_scale: f64,
    /// Marginal standard deviation.
    pub sigma: f64,
    /// Spatial dimension (1 or 2).
    pub dim: usize,
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) {
            return Err(Error::invalid(format!("length scale must be positive, got {}", self.length_scale)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::invalid(format!("nu must be positive, got {}", self.nu)));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::invalid(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        Ok(())
    }

    /// beta = nu/2 + d/4; only positive integer values are supported.
    pub fn beta(&self) -> Result<u32> {
        let beta = self.nu / 2.0 + self.dim as f64 / 4.0;
        let rounded = beta.round();
        if (beta - rounded).abs() > 1e-9 || rounded < 1.0 {
            // name the admissible smoothness values for this dimension
            let admissible: Vec<String> =
                (1..=4).map(|k| format!("{}", 2.0 * k as f64 - self.dim as f64 / 2.0)).collect();
            return Err(Error::invalid(format!(
                "nu = {} gives non-integer operator exponent {beta:.4} in d = {}; admissible nu: {}, ...",
                self.nu,
                self.dim,
                admissible.join(", ")
            )));
        }
        Ok(rounded as u32)
    }
}

/// Coefficients of the discretised field operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdeCoefficients {
    /// Inverse correlation length, sqrt(2 nu) / l.
    pub eta: f64,
    /// Integer operator exponent.
    pub beta: u32,
    /// Variance normalisation.
    pub tau: f64,
}

/// Maps Matérn parameters to the operator coefficients.
pub fn matern_to_spde(p: &MaternParams) -> Result<SpdeCoefficients> {
    p.validate()?;
    if p.sigma == 0.0 {
        return Err(Error::invalid(
            "sigma = 0 has no operator form; the covariance degenerates to zero".to_string(),
        ));
    }
    let beta = p.beta()?;
    let d = p.dim as f64;
    let eta = (2.0 * p.nu).sqrt() / p.length_scale;
    let tau_sq = gamma(p.nu)
        / (p.sigma * p.sigma
            * gamma(p.nu + d / 2.0)
            * (4.0 * std::f64::consts::PI).powf(d / 2.0)
            * (2.0 * p.nu / (p.length_scale * p.length_scale)).powf(p.nu));
    Ok(SpdeCoefficients { eta, beta, tau: tau_sq.sqrt() })
}

/// A discretised Gaussian field over the mesh nodes.
#[derive(Debug, Clone)]
pub struct SpdeField {
    pub params: MaternParams,
    /// Dense discretised operator over all nodes.
    pub operator: DMatrix<f64>,
    pub nodal_covariance: DMatrix<f64>,
    /// Lower-triangular factor with factor * factor^T = nodal_covariance.
    pub factor: DMatrix<f64>,
}

impl SpdeField {
    pub fn n_nodes(&self) -> usize {
        self.nodal_covariance.nrows()
    }
}

/// Solves the discrete operator against M^{1/2}, applying the extra
/// M^{-1} (eta^2 M + K) powers for beta > 1. Returns Z with C = Z Z^T.
fn operator_inverse_sqrt_gram(
    gram_diag: &DVector<f64>,
    laplacian: &DMatrix<f64>,
    coef: &SpdeCoefficients,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = gram_diag.len();
    let mut s = laplacian.clone();
    for i in 0..n {
        s[(i, i)] += coef.eta * coef.eta * gram_diag[i];
    }
    let chol = Cholesky::new(s.clone())
        .ok_or_else(|| Error::Numerical("field operator is not positive definite".to_string()))?;

    let mut z = DMatrix::from_diagonal(&gram_diag.map(f64::sqrt));
    chol.solve_mut(&mut z);
    for _ in 1..coef.beta {
        for i in 0..n {
            let m = gram_diag[i];
            z.row_mut(i).scale_mut(m);
        }
        chol.solve_mut(&mut z);
    }
    z.unscale_mut(coef.tau);

    // dense operator L = tau * S * (M^{-1} S)^{beta-1}
    let mut op = s.clone();
    for _ in 1..coef.beta {
        let mut m_inv_s = s.clone();
        for i in 0..n {
            m_inv_s.row_mut(i).scale_mut(1.0 / gram_diag[i]);
        }
        op *= m_inv_s;
    }
    op.scale_mut(coef.tau);
    Ok((z, op))
}

/// Cholesky factor with the jitter fallback: if the plain factorisation
/// fails, 1e-10 * trace/n is added to the diagonal before retrying.
fn factor_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let trace: f64 = cov.diagonal().sum();
    if trace <= 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok(chol.l());
    }
    let mut jittered = cov.clone();
    let jitter = 1e-10 * trace / n as f64;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered)
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("covariance factorisation failed even with jitter".to_string()))
}

/// Builds the nodal covariance of the material field,
/// C = L^{-1} M L^{-T} on all mesh nodes.
pub fn build_material_covariance(mesh: &Mesh, p: &MaternParams) -> Result<SpdeField> {
    p.validate()?;
    let n = mesh.n_nodes();
    if p.sigma == 0.0 {
        return Ok(SpdeField {
            params: *p,
            operator: DMatrix::zeros(n, n),
            nodal_covariance: DMatrix::zeros(n, n),
            factor: DMatrix::zeros(n, n),
        });
    }
    let coef = matern_to_spde(p)?;
    let gram = assemble_gram(mesh, true).diagonal();
    let lap = assemble_laplacian(mesh).to_dense();
    let (z, op) = operator_inverse_sqrt_gram(&gram, &lap, &coef)?;
    let mut cov = &z * z.transpose();
    symmetrize(&mut cov);
    let factor = factor_with_jitter(&cov)?;
    Ok(SpdeField { params: *p, operator: op, nodal_covariance: cov, factor })
}

/// Factor G of the nodal-force covariance, restricted to the free DOFs:
/// C_f = G G^T with G = M L^{-1} M^{1/2} (free rows).
pub fn force_covariance_factor(mesh: &Mesh, p: &MaternParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let n_free = mesh.n_free_dofs();
    let n = mesh.n_nodes();
    if p.sigma == 0.0 {
        return Ok(DMatrix::zeros(n_free, n));
    }
    let coef = matern_to_spde(p)?;
    let gram = assemble_gram(mesh, true).diagonal();
    let lap = assemble_laplacian(mesh).to_dense();
    let (mut z, _) = operator_inverse_sqrt_gram(&gram, &lap, &coef)?;
    for i in 0..n {
        let m = gram[i];
        z.row_mut(i).scale_mut(m);
    }
    let mut g = DMatrix::zeros(n_free, n);
    for node in 0..n {
        if let Some(dof) = mesh.free_dof(node) {
            g.row_mut(dof).copy_from(&z.row(node));
        }
    }
    Ok(g)
}

/// Spatial covariance of the nodal forces induced by a Matérn traction
/// field, restricted to the free DOFs.
pub fn build_force_covariance(mesh: &Mesh, p: &MaternParams) -> Result<DMatrix<f64>> {
    let g = force_covariance_factor(mesh, p)?;
    let mut cov = &g * g.transpose();
    symmetrize(&mut cov);
    Ok(cov)
}

/// Draws one nodal realisation, factor * xi with xi ~ N(0, I).
pub fn sample_field<R: Rng>(field: &SpdeField, rng: &mut R) -> DVector<f64> {
    let n = field.n_nodes();
    let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &field.factor * xi
}

/// Projects nodal mean and covariance onto element averages.
pub fn nodal_to_element(
    mesh: &Mesh,
    nodal_mean: &DVector<f64>,
    nodal_cov: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mesh.n_nodes();
    if nodal_mean.len() != n || nodal_cov.nrows() != n || nodal_cov.ncols() != n {
        return Err(Error::invalid(format!(
            "nodal shapes ({}, {}x{}) do not match the {n}-node mesh",
            nodal_mean.len(),
            nodal_cov.nrows(),
            nodal_cov.ncols()
        )));
    }
    let n_e = mesh.n_elements();
    let mean = DVector::from_fn(n_e, |e, _| {
        let nodes = mesh.element_nodes(e);
        nodes.iter().map(|&i| nodal_mean[i]).sum::<f64>() / nodes.len() as f64
    });
    // P C P^T with P holding 1/(nodes per element) on each element's nodes
    let mut pc = DMatrix::zeros(n_e, n);
    for e in 0..n_e {
        let nodes = mesh.element_nodes(e);
        let w = 1.0 / nodes.len() as f64;
        for &i in nodes {
            let row = nodal_cov.row(i) * w;
            let mut target = pc.row_mut(e);
            target += row;
        }
    }
    let mut cov = DMatrix::zeros(n_e, n_e);
    for e in 0..n_e {
        let nodes = mesh.element_nodes(e);
        let w = 1.0 / nodes.len() as f64;
        for &i in nodes {
            let col = pc.column(i) * w;
            let mut target = cov.column_mut(e);
            target += col;
        }
    }
    symmetrize(&mut cov);
    Ok((mean, cov))
}

/// Element coefficients of a lognormal modulus: base/exp(sigma^2/2) * exp(kappa),
/// so the coefficient mean equals `base` exactly.
pub fn lognormal_modulus(base: f64, sigma_kappa: f64, kappa_element: &DVector<f64>) -> Result<DVector<f64>> {
    if !(base > 0.0) {
        return Err(Error::invalid(format!("base modulus must be positive, got {base}")));
    }
    let median = base / (0.5 * sigma_kappa * sigma_kappa).exp();
    Ok(kappa_element.map(|k| median * k.exp()))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Closed-form Matérn covariance for nu = 1/2, 3/2, 5/2 (test oracle).
pub fn matern_kernel_half_integer(nu: f64, length_scale: f64, sigma: f64, r: f64) -> f64 {
    let s2 = sigma * sigma;
    let a = (2.0 * nu).sqrt() * r / length_scale;
    if nu == 0.5 {
        s2 * (-a).exp()
    } else if nu == 1.5 {
        s2 * (1.0 + a) * (-a).exp()
    } else if nu == 2.5 {
        s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
    } else {
        panic!("closed form wired only for nu in {{0.5, 1.5, 2.5}}");
    }
}

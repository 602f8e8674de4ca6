//! Mass, stiffness, damping and Gram matrix assembly for scalar
//! elastodynamics and the auxiliary field problem, plus the per-element
//! stiffness blocks that are the exact derivatives of K with respect to the
//! element coefficients.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{coo::CooMatrix, csr::CsrMatrix};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Sparse symmetric matrix with a fixed square size.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    size: usize,
    matrix: CsrMatrix<f64>,
}

impl SymmetricOperator {
    pub fn from_triplets(size: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut coo = CooMatrix::new(size, size);
        for &(i, j, v) in triplets {
            if v != 0.0 {
                coo.push(i, j, v);
            }
        }
        SymmetricOperator { size, matrix: CsrMatrix::from(&coo) }
    }

    pub fn zeros(size: usize) -> Self {
        SymmetricOperator { size, matrix: CsrMatrix::from(&CooMatrix::new(size, size)) }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn csr(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from(&self.matrix)
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.size);
        for (i, j, v) in self.matrix.triplet_iter() {
            if i == j {
                d[i] += v;
            }
        }
        d
    }

    pub fn is_diagonal(&self) -> bool {
        self.matrix.triplet_iter().all(|(i, j, _)| i == j)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.size);
        for (i, j, v) in self.matrix.triplet_iter() {
            y[i] += v * x[j];
        }
        y
    }

    /// a*self + b*other, entry-wise.
    pub fn linear_combination(&self, a: f64, other: &SymmetricOperator, b: f64) -> Result<Self> {
        if self.size != other.size {
            return Err(Error::invalid("operator size mismatch".to_string()));
        }
        let mut coo = CooMatrix::new(self.size, self.size);
        for (i, j, v) in self.matrix.triplet_iter() {
            coo.push(i, j, a * v);
        }
        for (i, j, v) in other.matrix.triplet_iter() {
            coo.push(i, j, b * v);
        }
        Ok(SymmetricOperator { size: self.size, matrix: CsrMatrix::from(&coo) })
    }

    /// Largest absolute asymmetry, normalised by the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let dense = self.to_dense();
        let scale = dense.amax().max(f64::MIN_POSITIVE);
        (&dense - dense.transpose()).amax() / scale
    }
}

/// Unit-coefficient local stiffness of one element, row-major k x k.
fn local_stiffness(mesh: &Mesh, e: usize) -> Vec<f64> {
    let nodes = mesh.element_nodes(e);
    match nodes.len() {
        2 => {
            let h = mesh.element_measure(e);
            let s = 1.0 / h;
            vec![s, -s, -s, s]
        }
        3 => {
            let area = mesh.element_measure(e);
            let p: Vec<[f64; 2]> = nodes.iter().map(|&n| mesh.node(n)).collect();
            // gradient coefficients of the linear basis
            let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
            let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
            let mut k = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    k[3 * i + j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                }
            }
            k
        }
        _ => unreachable!("unsupported element"),
    }
}

/// Per-element unit-coefficient stiffness blocks with their free-DOF scatter
/// maps. The assembled K is exactly the coefficient-weighted sum of the
/// scattered blocks, so each block is also dK/d(coefficient).
#[derive(Debug, Clone)]
pub struct ElementStiffnessBank {
    n_free: usize,
    blocks: Vec<ElementBlock>,
}

#[derive(Debug, Clone)]
struct ElementBlock {
    free_dofs: Vec<Option<usize>>,
    local: Vec<f64>,
    nodes_per_element: usize,
}

impl ElementStiffnessBank {
    pub fn new(mesh: &Mesh) -> Self {
        let blocks = (0..mesh.n_elements())
            .map(|e| {
                let nodes = mesh.element_nodes(e);
                ElementBlock {
                    free_dofs: nodes.iter().map(|&n| mesh.free_dof(n)).collect(),
                    local: local_stiffness(mesh, e),
                    nodes_per_element: nodes.len(),
                }
            })
            .collect();
        ElementStiffnessBank { n_free: mesh.n_free_dofs(), blocks }
    }

    pub fn n_elements(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_free_dofs(&self) -> usize {
        self.n_free
    }

    /// Assembles K restricted to the free DOFs for the given element
    /// coefficients.
    pub fn assemble(&self, coefficients: &DVector<f64>) -> Result<SymmetricOperator> {
        if coefficients.len() != self.blocks.len() {
            return Err(Error::invalid(format!(
                "expected {} element coefficients, got {}",
                self.blocks.len(),
                coefficients.len()
            )));
        }
        if let Some(bad) = coefficients.iter().position(|&c| !(c > 0.0)) {
            return Err(Error::invalid(format!(
                "element coefficient {bad} must be strictly positive, got {}",
                coefficients[bad]
            )));
        }
        let mut coo = CooMatrix::new(self.n_free, self.n_free);
        for (block, &c) in self.blocks.iter().zip(coefficients.iter()) {
            let k = block.nodes_per_element;
            for i in 0..k {
                let Some(gi) = block.free_dofs[i] else { continue };
                for j in 0..k {
                    let Some(gj) = block.free_dofs[j] else { continue };
                    coo.push(gi, gj, c * block.local[k * i + j]);
                }
            }
        }
        Ok(SymmetricOperator { size: self.n_free, matrix: CsrMatrix::from(&coo) })
    }

    /// K_alpha x restricted to free DOFs, returned as sparse (row, value)
    /// pairs. K_alpha is the unit-coefficient block of element `alpha`.
    pub fn apply_element(&self, alpha: usize, x: &DVector<f64>) -> Vec<(usize, f64)> {
        let block = &self.blocks[alpha];
        let k = block.nodes_per_element;
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let Some(gi) = block.free_dofs[i] else { continue };
            let mut acc = 0.0;
            for j in 0..k {
                if let Some(gj) = block.free_dofs[j] {
                    acc += block.local[k * i + j] * x[gj];
                }
            }
            out.push((gi, acc));
        }
        out
    }

    /// Dense local block of one element (tests and small problems).
    pub fn local_block(&self, alpha: usize) -> DMatrix<f64> {
        let block = &self.blocks[alpha];
        let k = block.nodes_per_element;
        DMatrix::from_row_slice(k, k, &block.local)
    }

    /// Free-DOF scatter of one element.
    pub fn scatter(&self, alpha: usize) -> &[Option<usize>] {
        &self.blocks[alpha].free_dofs
    }
}

/// Assembles the stiffness matrix on the free DOFs together with the bank of
/// per-element derivative blocks.
pub fn assemble_stiffness(
    mesh: &Mesh,
    element_coefficients: &DVector<f64>,
) -> Result<(SymmetricOperator, ElementStiffnessBank)> {
    let bank = ElementStiffnessBank::new(mesh);
    let k = bank.assemble(element_coefficients)?;
    Ok((k, bank))
}

fn mass_triplets(mesh: &Mesh, density: f64, lumped: bool, eliminate: bool) -> Vec<(usize, usize, f64)> {
    let mut triplets = Vec::new();
    let map = |n: usize| -> Option<usize> {
        if eliminate {
            mesh.free_dof(n)
        } else {
            Some(n)
        }
    };
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        let measure = mesh.element_measure(e);
        let k = nodes.len();
        if lumped {
            // row-sum lumping of the consistent element mass
            let share = density * measure / k as f64;
            for &n in nodes {
                if let Some(g) = map(n) {
                    triplets.push((g, g, share));
                }
            }
        } else {
            // consistent P1 mass: measure/(k(k+1)) off-diagonal, doubled on the diagonal
            let base = density * measure / (k * (k + 1)) as f64;
            for (i, &ni) in nodes.iter().enumerate() {
                let Some(gi) = map(ni) else { continue };
                for (j, &nj) in nodes.iter().enumerate() {
                    let Some(gj) = map(nj) else { continue };
                    let v = if i == j { 2.0 * base } else { base };
                    triplets.push((gi, gj, v));
                }
            }
        }
    }
    triplets
}

/// Mass matrix on the free DOFs. Lumped mass is diagonal by row-sum lumping.
pub fn assemble_mass(mesh: &Mesh, density: f64, lumped: bool) -> Result<SymmetricOperator> {
    if !(density > 0.0) {
        return Err(Error::invalid(format!("density must be positive, got {density}")));
    }
    let triplets = mass_triplets(mesh, density, lumped, true);
    Ok(SymmetricOperator::from_triplets(mesh.n_free_dofs(), &triplets))
}

/// Gram matrix of the basis functions over all mesh nodes (the auxiliary
/// field problem has pure Neumann boundaries, so nothing is eliminated).
pub fn assemble_gram(mesh: &Mesh, lumped: bool) -> SymmetricOperator {
    let triplets = mass_triplets(mesh, 1.0, lumped, false);
    SymmetricOperator::from_triplets(mesh.n_nodes(), &triplets)
}

/// Unit-coefficient stiffness over all mesh nodes (the discrete Laplacian of
/// the auxiliary field problem).
pub fn assemble_laplacian(mesh: &Mesh) -> SymmetricOperator {
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        let k = nodes.len();
        let local = local_stiffness(mesh, e);
        for i in 0..k {
            for j in 0..k {
                triplets.push((nodes[i], nodes[j], local[k * i + j]));
            }
        }
    }
    SymmetricOperator::from_triplets(mesh.n_nodes(), &triplets)
}

/// Rayleigh damping D = a0 M + a1 K with the two coefficients chosen so the
/// modal damping ratio equals `zeta` at both target frequencies.
pub fn rayleigh_damping(
    mass: &SymmetricOperator,
    stiffness: &SymmetricOperator,
    omega1: f64,
    omega2: f64,
    zeta: f64,
) -> Result<SymmetricOperator> {
    if !(omega1 > 0.0 && omega2 > omega1) {
        return Err(Error::invalid(format!(
            "need 0 < omega1 < omega2, got omega1 = {omega1}, omega2 = {omega2}"
        )));
    }
    if zeta < 0.0 {
        return Err(Error::invalid(format!("damping ratio must be non-negative, got {zeta}")));
    }
    let a0 = 2.0 * zeta * omega1 * omega2 / (omega1 + omega2);
    let a1 = 2.0 * zeta / (omega1 + omega2);
    mass.linear_combination(a0, stiffness, a1)
}

/// Modal damping ratio of a Rayleigh pair at circular frequency `omega`.
pub fn rayleigh_ratio_at(a0: f64, a1: f64, omega: f64) -> f64 {
    0.5 * (a0 / omega + a1 * omega)
}

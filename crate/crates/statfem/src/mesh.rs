//! Interval and triangular meshes with Dirichlet tagging and point location.
//!
//! Meshes are immutable after construction. Nodes carry (x, y) coordinates
//! (y = 0 for interval meshes), elements are 2-node segments or 3-node
//! triangles, and non-Dirichlet nodes are numbered contiguously into free
//! degrees of freedom. A line-oriented text format supports save/load.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Barycentric weights below this are treated as "outside the element".
const LOCATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Connectivity {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

impl Connectivity {
    pub fn len(&self) -> usize {
        match self {
            Connectivity::Segments(v) => v.len(),
            Connectivity::Triangles(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes_of(&self, element: usize) -> &[usize] {
        match self {
            Connectivity::Segments(v) => &v[element],
            Connectivity::Triangles(v) => &v[element],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dimension: usize,
    nodes: Vec<[f64; 2]>,
    elements: Connectivity,
    dirichlet: Vec<bool>,
    free_dof: Vec<Option<usize>>,
    n_free: usize,
}

impl Mesh {
    /// Builds a mesh from raw parts, validating connectivity and measures.
    ///
    /// Segment nodes are stored with ascending x; triangles are stored
    /// counter-clockwise. Degenerate elements (zero length or area) are
    /// rejected.
    pub fn new(
        dimension: usize,
        nodes: Vec<[f64; 2]>,
        mut elements: Connectivity,
        dirichlet_nodes: &[usize],
    ) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::invalid(format!("mesh dimension must be 1 or 2, got {dimension}")));
        }
        match (&elements, dimension) {
            (Connectivity::Segments(_), 1) | (Connectivity::Triangles(_), 2) => {}
            _ => {
                return Err(Error::invalid(
                    "element kind does not match mesh dimension".to_string(),
                ))
            }
        }
        let n_nodes = nodes.len();
        match &mut elements {
            Connectivity::Segments(segs) => {
                for (e, seg) in segs.iter_mut().enumerate() {
                    for &n in seg.iter() {
                        if n >= n_nodes {
                            return Err(Error::invalid(format!(
                                "element {e} references node {n} of {n_nodes}"
                            )));
                        }
                    }
                    if nodes[seg[0]][0] > nodes[seg[1]][0] {
                        seg.swap(0, 1);
                    }
                    let h = nodes[seg[1]][0] - nodes[seg[0]][0];
                    if h <= 0.0 {
                        return Err(Error::invalid(format!("element {e} has non-positive length {h}")));
                    }
                }
            }
            Connectivity::Triangles(tris) => {
                for (e, tri) in tris.iter_mut().enumerate() {
                    for &n in tri.iter() {
                        if n >= n_nodes {
                            return Err(Error::invalid(format!(
                                "element {e} references node {n} of {n_nodes}"
                            )));
                        }
                    }
                    let a = signed_area(&nodes, tri);
                    if a < 0.0 {
                        tri.swap(1, 2);
                    }
                    let a = signed_area(&nodes, tri);
                    if a <= 0.0 {
                        return Err(Error::invalid(format!("element {e} has non-positive area {a}")));
                    }
                }
            }
        }

        let mut dirichlet = vec![false; n_nodes];
        for &n in dirichlet_nodes {
            if n >= n_nodes {
                return Err(Error::invalid(format!("Dirichlet node {n} of {n_nodes}")));
            }
            dirichlet[n] = true;
        }
        let mut free_dof = vec![None; n_nodes];
        let mut next = 0usize;
        for (n, flag) in dirichlet.iter().enumerate() {
            if !flag {
                free_dof[n] = Some(next);
                next += 1;
            }
        }
        Ok(Mesh { dimension, nodes, elements, dirichlet, free_dof, n_free: next })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_free_dofs(&self) -> usize {
        self.n_free
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        self.elements.nodes_of(e)
    }

    pub fn nodes_per_element(&self) -> usize {
        match self.elements {
            Connectivity::Segments(_) => 2,
            Connectivity::Triangles(_) => 3,
        }
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    pub fn dirichlet_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.dirichlet.iter().enumerate().filter(|(_, &d)| d).map(|(n, _)| n)
    }

    /// Contiguous free-DOF index of a node, `None` on the Dirichlet boundary.
    pub fn free_dof(&self, node: usize) -> Option<usize> {
        self.free_dof[node]
    }

    /// Length of a segment or area of a triangle.
    pub fn element_measure(&self, e: usize) -> f64 {
        match &self.elements {
            Connectivity::Segments(segs) => {
                let [a, b] = segs[e];
                self.nodes[b][0] - self.nodes[a][0]
            }
            Connectivity::Triangles(tris) => signed_area(&self.nodes, &tris[e]),
        }
    }

    pub fn domain_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_measure(e)).sum()
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let nodes = self.element_nodes(e);
        let mut c = [0.0, 0.0];
        for &n in nodes {
            c[0] += self.nodes[n][0];
            c[1] += self.nodes[n][1];
        }
        let k = nodes.len() as f64;
        [c[0] / k, c[1] / k]
    }

    /// Finds the element containing `point` and the basis-function values
    /// there. Weights are non-negative up to 1e-12 and sum to one.
    pub fn locate_point(&self, point: [f64; 2]) -> Result<(usize, Vec<f64>)> {
        match &self.elements {
            Connectivity::Segments(segs) => {
                let x = point[0];
                for (e, &[a, b]) in segs.iter().enumerate() {
                    let xa = self.nodes[a][0];
                    let xb = self.nodes[b][0];
                    let h = xb - xa;
                    let t = (x - xa) / h;
                    if t >= -LOCATE_TOL && t <= 1.0 + LOCATE_TOL {
                        return Ok((e, vec![1.0 - t, t]));
                    }
                }
                Err(Error::PointOutsideMesh { x: point[0], y: point[1] })
            }
            Connectivity::Triangles(tris) => {
                for (e, tri) in tris.iter().enumerate() {
                    if let Some(w) = barycentric(&self.nodes, tri, point) {
                        return Ok((e, w));
                    }
                }
                Err(Error::PointOutsideMesh { x: point[0], y: point[1] })
            }
        }
    }

    /// Serialises to the line-oriented mesh text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", self.dimension);
        let _ = writeln!(out, "nodes {}", self.n_nodes());
        for n in &self.nodes {
            if self.dimension == 1 {
                let _ = writeln!(out, "{:.16e}", n[0]);
            } else {
                let _ = writeln!(out, "{:.16e} {:.16e}", n[0], n[1]);
            }
        }
        let _ = writeln!(out, "elements {}", self.n_elements());
        for e in 0..self.n_elements() {
            let conn: Vec<String> = self.element_nodes(e).iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{}", conn.join(" "));
        }
        let dir: Vec<usize> = self.dirichlet_nodes().collect();
        let _ = writeln!(out, "dirichlet {}", dir.len());
        for n in dir {
            let _ = writeln!(out, "{n}");
        }
        out
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (ax, ay) = (nodes[a][0], nodes[a][1]);
    let (bx, by) = (nodes[b][0], nodes[b][1]);
    let (cx, cy) = (nodes[c][0], nodes[c][1]);
    0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
}

fn barycentric(nodes: &[[f64; 2]], tri: &[usize; 3], p: [f64; 2]) -> Option<Vec<f64>> {
    let total = signed_area(nodes, tri);
    let [a, b, c] = *tri;
    let area_of = |p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]| -> f64 {
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    };
    let wa = area_of(p, nodes[b], nodes[c]) / total;
    let wb = area_of(nodes[a], p, nodes[c]) / total;
    let wc = area_of(nodes[a], nodes[b], p) / total;
    if wa >= -LOCATE_TOL && wb >= -LOCATE_TOL && wc >= -LOCATE_TOL {
        Some(vec![wa, wb, wc])
    } else {
        None
    }
}

/// Uniform interval mesh on `[0, length]`.
///
/// With `clamp_left`, node 0 is Dirichlet and the free DOFs number
/// `n_elements`; otherwise all `n_elements + 1` nodes are free.
pub fn build_interval_mesh(length: f64, n_elements: usize, clamp_left: bool) -> Result<Mesh> {
    if !(length > 0.0) {
        return Err(Error::invalid(format!("interval length must be positive, got {length}")));
    }
    if n_elements == 0 {
        return Err(Error::invalid("interval mesh needs at least one element".to_string()));
    }
    let h = length / n_elements as f64;
    let nodes: Vec<[f64; 2]> = (0..=n_elements).map(|i| [i as f64 * h, 0.0]).collect();
    let elements: Vec<[usize; 2]> = (0..n_elements).map(|i| [i, i + 1]).collect();
    let dirichlet: Vec<usize> = if clamp_left { vec![0] } else { vec![] };
    Mesh::new(1, nodes, Connectivity::Segments(elements), &dirichlet)
}

/// Geometry of the rectangular plate with a circular hole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry {
    pub width: f64,
    pub height: f64,
    pub hole_radius: f64,
    pub hole_center: [f64; 2],
}

impl PlateGeometry {
    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::invalid("plate width and height must be positive".to_string()));
        }
        let [cx, cy] = self.hole_center;
        let margin = self
            .hole_radius
            .max(0.0);
        if !(self.hole_radius > 0.0)
            || cx - margin <= 0.0
            || cx + margin >= self.width
            || cy - margin <= 0.0
            || cy + margin >= self.height
        {
            return Err(Error::invalid("hole must lie strictly inside the plate".to_string()));
        }
        Ok(())
    }

    /// Exact measure of the discretised domain: rectangle minus the
    /// inscribed polygon that approximates the hole with `sectors` chords.
    pub fn polygonal_measure(&self, sectors: usize) -> f64 {
        let n = sectors as f64;
        let hole = 0.5 * n * self.hole_radius * self.hole_radius * (2.0 * std::f64::consts::PI / n).sin();
        self.width * self.height - hole
    }
}

/// Structured O-grid triangulation of a plate with a circular hole.
///
/// `sectors` angular divisions around the hole (must be a multiple of 8 so
/// the plate corners fall on grid rays) and `rings + 1` node layers from the
/// hole boundary out to the plate boundary. If `clamp_left_edge`, the nodes
/// on x = 0 are Dirichlet.
pub fn build_plate_with_hole_mesh(
    geometry: PlateGeometry,
    sectors: usize,
    rings: usize,
    clamp_left_edge: bool,
) -> Result<Mesh> {
    geometry.validate()?;
    if sectors < 8 || sectors % 8 != 0 {
        return Err(Error::invalid(format!(
            "sectors must be a positive multiple of 8 to capture the plate corners, got {sectors}"
        )));
    }
    if rings < 2 {
        return Err(Error::invalid("at least two node rings are required".to_string()));
    }
    let [cx, cy] = geometry.hole_center;
    let r0 = geometry.hole_radius;
    let two_pi = 2.0 * std::f64::consts::PI;

    // Distance from the hole center to the plate boundary along direction theta.
    let outer_radius = |theta: f64| -> f64 {
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut t = f64::INFINITY;
        if dx > 1e-15 {
            t = t.min((geometry.width - cx) / dx);
        } else if dx < -1e-15 {
            t = t.min(-cx / dx);
        }
        if dy > 1e-15 {
            t = t.min((geometry.height - cy) / dy);
        } else if dy < -1e-15 {
            t = t.min(-cy / dy);
        }
        t
    };

    let mut nodes = Vec::with_capacity(sectors * (rings + 1));
    for j in 0..=rings {
        let s_frac = j as f64 / rings as f64;
        for i in 0..sectors {
            let theta = two_pi * i as f64 / sectors as f64;
            let rho = r0 + (outer_radius(theta) - r0) * s_frac;
            let mut x = cx + rho * theta.cos();
            let mut y = cy + rho * theta.sin();
            if j == rings {
                // snap the outermost layer exactly onto the plate boundary
                x = x.clamp(0.0, geometry.width);
                y = y.clamp(0.0, geometry.height);
                if x < 1e-12 {
                    x = 0.0;
                }
                if y < 1e-12 {
                    y = 0.0;
                }
            }
            nodes.push([x, y]);
        }
    }

    let node_id = |ring: usize, sector: usize| ring * sectors + (sector % sectors);
    let mut tris = Vec::with_capacity(2 * sectors * rings);
    for j in 0..rings {
        for i in 0..sectors {
            let a = node_id(j, i);
            let b = node_id(j, i + 1);
            let c = node_id(j + 1, i + 1);
            let d = node_id(j + 1, i);
            // alternate the quad split so the diagonals form a herringbone
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }

    let dirichlet: Vec<usize> = if clamp_left_edge {
        nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n[0].abs() < 1e-9)
            .map(|(i, _)| i)
            .collect()
    } else {
        vec![]
    };
    Mesh::new(2, nodes, Connectivity::Triangles(tris), &dirichlet)
}

/// Parses the mesh text format. Errors carry 1-based line numbers.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of input, expected {what}"),
        })
    };

    let (line, l) = next("dim header")?;
    let dimension = parse_header(line, l, "dim")?;
    if dimension != 1 && dimension != 2 {
        return Err(Error::Parse { line, message: format!("dim must be 1 or 2, got {dimension}") });
    }

    let (line, l) = next("nodes header")?;
    let n_nodes = parse_header(line, l, "nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (line, l) = next("node coordinates")?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("bad coordinate '{t}'") }))
            .collect::<Result<_>>()?;
        if coords.len() != dimension {
            return Err(Error::Parse {
                line,
                message: format!("expected {dimension} coordinates, found {}", coords.len()),
            });
        }
        nodes.push([coords[0], if dimension == 2 { coords[1] } else { 0.0 }]);
    }

    let (line, l) = next("elements header")?;
    let n_elements = parse_header(line, l, "elements")?;
    let per_element = if dimension == 1 { 2 } else { 3 };
    let mut segs = Vec::new();
    let mut tris = Vec::new();
    for _ in 0..n_elements {
        let (line, l) = next("element connectivity")?;
        let conn: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line, message: format!("bad node index '{t}'") }))
            .collect::<Result<_>>()?;
        if conn.len() != per_element {
            return Err(Error::Parse {
                line,
                message: format!("expected {per_element} node indices, found {}", conn.len()),
            });
        }
        for &n in &conn {
            if n >= n_nodes {
                return Err(Error::Parse { line, message: format!("node index {n} out of range ({n_nodes} nodes)") });
            }
        }
        if dimension == 1 {
            segs.push([conn[0], conn[1]]);
        } else {
            tris.push([conn[0], conn[1], conn[2]]);
        }
    }

    let (line, l) = next("dirichlet header")?;
    let n_dir = parse_header(line, l, "dirichlet")?;
    let mut dirichlet = Vec::with_capacity(n_dir);
    for _ in 0..n_dir {
        let (line, l) = next("dirichlet node index")?;
        let n: usize = l
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("bad node index '{l}'") })?;
        if n >= n_nodes {
            return Err(Error::Parse { line, message: format!("Dirichlet node {n} out of range") });
        }
        dirichlet.push(n);
    }

    let elements = if dimension == 1 { Connectivity::Segments(segs) } else { Connectivity::Triangles(tris) };
    // map construction failures back onto the file
    Mesh::new(dimension, nodes, elements, &dirichlet)
        .map_err(|e| Error::Parse { line: 0, message: e.to_string() })
}

fn parse_header(line: usize, l: &str, key: &str) -> Result<usize> {
    let mut it = l.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("bad count '{v}' after '{key}'") }),
        _ => Err(Error::Parse { line, message: format!("expected '{key} <count>', found '{l}'") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn interval_mesh_matches_bar_setup() {
        let mesh = build_interval_mesh(40.0, 80, true).unwrap();
        assert_eq!(mesh.n_nodes(), 81);
        assert_eq!(mesh.n_elements(), 80);
        assert!(mesh.is_dirichlet(0));
        assert_eq!(mesh.n_free_dofs(), 80);
        assert_relative_eq!(mesh.element_measure(0), 0.5, epsilon = 1e-14);
        assert_relative_eq!(mesh.domain_measure(), 40.0, epsilon = 1e-10);
    }

    #[test]
    fn smallest_interval_mesh() {
        let mesh = build_interval_mesh(1.0, 1, false).unwrap();
        assert_eq!(mesh.n_nodes(), 2);
        assert_eq!(mesh.n_elements(), 1);
        assert_eq!(mesh.dirichlet_nodes().count(), 0);
        assert_eq!(mesh.n_free_dofs(), 2);
    }

    #[test]
    fn free_dof_numbering_skips_clamped_node() {
        let mesh = build_interval_mesh(2.0, 4, true).unwrap();
        assert_eq!(mesh.free_dof(0), None);
        for node in 1..=4 {
            assert_eq!(mesh.free_dof(node), Some(node - 1));
        }
    }

    #[test]
    fn invalid_interval_arguments_are_rejected() {
        assert!(build_interval_mesh(-1.0, 4, true).is_err());
        assert!(build_interval_mesh(0.0, 4, true).is_err());
        assert!(build_interval_mesh(1.0, 0, true).is_err());
    }

    #[test]
    fn locate_midpoint_in_interval() {
        let mesh = build_interval_mesh(2.0, 4, false).unwrap();
        let (e, w) = mesh.locate_point([0.75, 0.0]).unwrap();
        assert_eq!(e, 1); // element covering [0.5, 1.0]
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn locate_at_node_gives_unit_weight() {
        let mesh = build_interval_mesh(2.0, 4, false).unwrap();
        let (_, w) = mesh.locate_point([0.5, 0.0]).unwrap();
        let big: Vec<&f64> = w.iter().filter(|v| **v > 0.5).collect();
        assert_eq!(big.len(), 1);
        assert_relative_eq!(*big[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn locate_triangle_centroid_is_symmetric() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mesh = Mesh::new(2, nodes, Connectivity::Triangles(vec![[0, 1, 2]]), &[]).unwrap();
        let (e, w) = mesh.locate_point([1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(e, 0);
        for wi in &w {
            assert_relative_eq!(*wi, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn locate_outside_fails() {
        let mesh = build_interval_mesh(1.0, 2, false).unwrap();
        assert!(matches!(mesh.locate_point([1.5, 0.0]), Err(Error::PointOutsideMesh { .. })));
    }

    #[test]
    fn degenerate_elements_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let err = Mesh::new(2, nodes, Connectivity::Triangles(vec![[0, 1, 2]]), &[]);
        assert!(err.is_err());
        let nodes = vec![[0.0, 0.0], [0.0, 0.0]];
        assert!(Mesh::new(1, nodes, Connectivity::Segments(vec![[0, 1]]), &[]).is_err());
    }

    #[test]
    fn load_minimal_triangle_file() {
        let text = "dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2\ndirichlet 0\n";
        let mesh = load_mesh(text).unwrap();
        assert_eq!(mesh.n_elements(), 1);
        assert_relative_eq!(mesh.domain_measure(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn load_reports_out_of_range_index_with_line() {
        let text = "dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 1 99\ndirichlet 0\n";
        match load_mesh(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_accepts_comments_and_blank_lines() {
        let text = "# a mesh\ndim 1\n\nnodes 2\n0.0\n1.0 # tip\nelements 1\n0 1\ndirichlet 1\n0\n";
        let mesh = load_mesh(text).unwrap();
        assert!(mesh.is_dirichlet(0));
    }

    #[test]
    fn plate_mesh_round_trips_through_text() {
        let geom = PlateGeometry {
            width: 2.0,
            height: 2.0,
            hole_radius: 0.2,
            hole_center: [1.0, 1.0],
        };
        let mesh = build_plate_with_hole_mesh(geom, 16, 4, true).unwrap();
        let reloaded = load_mesh(&mesh.to_text()).unwrap();
        assert_eq!(mesh.n_nodes(), reloaded.n_nodes());
        assert_eq!(mesh.n_elements(), reloaded.n_elements());
        for n in 0..mesh.n_nodes() {
            assert_eq!(mesh.node(n), reloaded.node(n));
            assert_eq!(mesh.is_dirichlet(n), reloaded.is_dirichlet(n));
        }
        for e in 0..mesh.n_elements() {
            assert_eq!(mesh.element_nodes(e), reloaded.element_nodes(e));
        }
        // second round trip is byte-identical
        assert_eq!(mesh.to_text(), reloaded.to_text());
    }

    #[test]
    fn plate_measure_matches_polygonal_value() {
        let geom = PlateGeometry {
            width: 2.0,
            height: 2.0,
            hole_radius: 0.2,
            hole_center: [1.0, 1.0],
        };
        for (sectors, rings) in [(16, 5), (24, 12), (32, 8)] {
            let mesh = build_plate_with_hole_mesh(geom, sectors, rings, true).unwrap();
            assert_relative_eq!(
                mesh.domain_measure(),
                geom.polygonal_measure(sectors),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn plate_left_edge_is_clamped() {
        let geom = PlateGeometry {
            width: 2.0,
            height: 2.0,
            hole_radius: 0.2,
            hole_center: [1.0, 1.0],
        };
        let mesh = build_plate_with_hole_mesh(geom, 24, 6, true).unwrap();
        let clamped: Vec<usize> = mesh.dirichlet_nodes().collect();
        assert!(!clamped.is_empty());
        for n in clamped {
            assert!(mesh.node(n)[0].abs() < 1e-12);
        }
        // corners of the plate are mesh nodes
        for corner in [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]] {
            assert!(
                (0..mesh.n_nodes()).any(|n| {
                    let p = mesh.node(n);
                    (p[0] - corner[0]).abs() < 1e-9 && (p[1] - corner[1]).abs() < 1e-9
                }),
                "missing corner {corner:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn located_points_reconstruct_coordinates(x in 0.0f64..40.0) {
            let mesh = build_interval_mesh(40.0, 80, true).unwrap();
            let (e, w) = mesh.locate_point([x, 0.0]).unwrap();
            let nodes = mesh.element_nodes(e);
            let rebuilt: f64 = nodes.iter().zip(&w).map(|(&n, wi)| mesh.node(n)[0] * wi).sum();
            prop_assert!((rebuilt - x).abs() < 1e-10);
            let total: f64 = w.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn located_plate_points_reconstruct(theta in 0.0f64..std::f64::consts::TAU, rho in 0.25f64..0.9) {
            let geom = PlateGeometry { width: 2.0, height: 2.0, hole_radius: 0.2, hole_center: [1.0, 1.0] };
            let mesh = build_plate_with_hole_mesh(geom, 16, 5, false).unwrap();
            let p = [1.0 + rho * theta.cos(), 1.0 + rho * theta.sin()];
            if let Ok((e, w)) = mesh.locate_point(p) {
                let nodes = mesh.element_nodes(e);
                let rx: f64 = nodes.iter().zip(&w).map(|(&n, wi)| mesh.node(n)[0] * wi).sum();
                let ry: f64 = nodes.iter().zip(&w).map(|(&n, wi)| mesh.node(n)[1] * wi).sum();
                prop_assert!((rx - p[0]).abs() < 1e-10);
                prop_assert!((ry - p[1]).abs() < 1e-10);
                for wi in &w {
                    prop_assert!(*wi >= -1e-12);
                }
            }
        }
    }
}

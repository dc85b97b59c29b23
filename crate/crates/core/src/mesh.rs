//! Structured quadrilateral grids, bilinear shape functions, quadrature and
//! geometric region selection.
//!
//! Nodes are numbered row-major with x running fastest and y measured from
//! the bottom edge; element `e = j·nx + i` has its corners listed
//! counter-clockwise from the lower-left node. Pressure uses one unknown per
//! node, displacement two (`2n` for x, `2n + 1` for y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    thickness: f64,
    node_coords: Vec<[f64; 2]>,
    elem_conn: Vec<[usize; 4]>,
    passive: Vec<bool>,
}

impl Mesh {
    /// Uniform `nx × ny` grid over `[0, lx] × [0, ly]` with thickness `t`.
    pub fn grid(nx: usize, ny: usize, lx: f64, ly: f64, t: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!(
                "element counts must be positive, got {nx}x{ny}"
            )));
        }
        for (name, v) in [("Lx", lx), ("Ly", ly), ("thickness", t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let (dx, dy) = (lx / nx as f64, ly / ny as f64);
        let mut node_coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // Snap the far edges so boundary coordinates are exact.
                let x = if i == nx { lx } else { i as f64 * dx };
                let y = if j == ny { ly } else { j as f64 * dy };
                node_coords.push([x, y]);
            }
        }
        let mut elem_conn = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n0 = j * (nx + 1) + i;
                let n3 = n0 + nx + 1;
                elem_conn.push([n0, n0 + 1, n3 + 1, n3]);
            }
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            thickness: t,
            node_coords,
            elem_conn,
            passive: vec![false; nx * ny],
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.elem_conn.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn elem_conn(&self) -> &[[usize; 4]] {
        &self.elem_conn
    }

    /// Element edge lengths `(dx, dy)`.
    pub fn element_size(&self) -> (f64, f64) {
        (self.lx / self.nx as f64, self.ly / self.ny as f64)
    }

    pub fn min_edge(&self) -> f64 {
        let (dx, dy) = self.element_size();
        dx.min(dy)
    }

    pub fn max_edge(&self) -> f64 {
        let (dx, dy) = self.element_size();
        dx.max(dy)
    }

    pub fn element_volume(&self) -> f64 {
        let (dx, dy) = self.element_size();
        dx * dy * self.thickness
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elem_conn[e].map(|n| self.node_coords[n])
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let c = self.element_coords(e);
        [
            c.iter().map(|p| p[0]).sum::<f64>() / 4.0,
            c.iter().map(|p| p[1]).sum::<f64>() / 4.0,
        ]
    }

    /// Displacement DOFs of element `e` in local order `(x0, y0, x1, y1, ...)`.
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.elem_conn[e];
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Node id at grid position `(i, j)`.
    pub fn node_at(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Marks elements as passive (frozen void); replaces any earlier set.
    pub fn set_passive(&mut self, elems: &[usize]) -> Result<()> {
        let mut passive = vec![false; self.element_count()];
        for &e in elems {
            if e >= passive.len() {
                return Err(Error::invalid(format!(
                    "passive element {e} out of range 0..{}",
                    passive.len()
                )));
            }
            passive[e] = true;
        }
        self.passive = passive;
        Ok(())
    }

    pub fn is_passive(&self, e: usize) -> bool {
        self.passive[e]
    }

    pub fn passive_mask(&self) -> &[bool] {
        &self.passive
    }

    pub fn passive_elems(&self) -> Vec<usize> {
        (0..self.element_count()).filter(|&e| self.passive[e]).collect()
    }

    pub fn active_elems(&self) -> Vec<usize> {
        (0..self.element_count()).filter(|&e| !self.passive[e]).collect()
    }

    /// Nodes matching `region`.
    pub fn select_nodes(&self, region: &Region) -> Selection {
        let tol = 1e-9 * self.min_edge();
        let ids: Vec<usize> = match region {
            Region::Point(p) => {
                let target = [p[0] * self.lx, p[1] * self.ly];
                self.nearest_node(target, 0.5 * self.min_edge()).into_iter().collect()
            }
            _ => (0..self.node_count())
                .filter(|&n| region.contains(self.node_coords[n], self.lx, self.ly, tol))
                .collect(),
        };
        Selection::new(ids, region)
    }

    /// Elements whose centroid lies in `region`. Point regions select the
    /// element containing the point.
    pub fn select_elements(&self, region: &Region) -> Selection {
        let tol = 1e-9 * self.min_edge();
        let ids: Vec<usize> = match region {
            Region::Point(p) => {
                let (dx, dy) = self.element_size();
                let (x, y) = (p[0] * self.lx, p[1] * self.ly);
                if (-tol..=self.lx + tol).contains(&x) && (-tol..=self.ly + tol).contains(&y) {
                    let i = ((x / dx) as usize).min(self.nx - 1);
                    let j = ((y / dy) as usize).min(self.ny - 1);
                    vec![j * self.nx + i]
                } else {
                    Vec::new()
                }
            }
            _ => (0..self.element_count())
                .filter(|&e| region.contains(self.centroid(e), self.lx, self.ly, tol))
                .collect(),
        };
        Selection::new(ids, region)
    }

    fn nearest_node(&self, target: [f64; 2], radius: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (n, c) in self.node_coords.iter().enumerate() {
            let d = ((c[0] - target[0]).powi(2) + (c[1] - target[1]).powi(2)).sqrt();
            if d <= radius * (1.0 + 1e-12) && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((n, d));
            }
        }
        best.map(|(n, _)| n)
    }
}

/// Bilinear shape functions and their reference gradients at `(xi, eta)`.
///
/// Node order matches the element connectivity: `(−1,−1), (1,−1), (1,1), (−1,1)`.
pub fn shape_eval(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    const SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (k, [sx, sy]) in SIGNS.into_iter().enumerate() {
        n[k] = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
        dn[k] = [0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)];
    }
    (n, dn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub xi: f64,
    pub eta: f64,
    pub weight: f64,
}

/// Tensor-product Gauss-Legendre rule on the reference square.
pub fn gauss_rule(order: usize) -> Result<Vec<GaussPoint>> {
    let line: Vec<(f64, f64)> = match order {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        _ => {
            return Err(Error::invalid(format!(
                "Gauss rule order must be 1, 2 or 3, got {order}"
            )))
        }
    };
    let mut pts = Vec::with_capacity(line.len() * line.len());
    for &(eta, we) in &line {
        for &(xi, wx) in &line {
            pts.push(GaussPoint {
                xi,
                eta,
                weight: wx * we,
            });
        }
    }
    Ok(pts)
}

/// Shape values, physical gradients and Jacobian determinant at a point.
#[derive(Debug, Clone, Copy)]
pub struct PointEval {
    pub n: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub det_j: f64,
}

/// Maps `(xi, eta)` through the isoparametric element with corners `coords`.
pub fn eval_at(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<PointEval> {
    let (n, dn) = shape_eval(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for k in 0..4 {
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] += dn[k][r] * coords[k][c];
            }
        }
    }
    let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det_j.is_finite() && det_j > 0.0) {
        return Err(Error::invalid(format!(
            "degenerate element geometry (det J = {det_j:e})"
        )));
    }
    let inv = [[j[1][1] / det_j, -j[0][1] / det_j], [-j[1][0] / det_j, j[0][0] / det_j]];
    let grad = dn.map(|d| [inv[0][0] * d[0] + inv[0][1] * d[1], inv[1][0] * d[0] + inv[1][1] * d[1]]);
    Ok(PointEval { n, grad, det_j })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Geometric region in coordinates normalized by the domain size, so
/// `(1, 1)` is the top-right corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Part of a domain edge; `span` is the normalized range along it.
    Edge {
        side: Side,
        #[serde(default = "full_span")]
        span: [f64; 2],
    },
    Box {
        x: [f64; 2],
        y: [f64; 2],
    },
    /// Nearest node, if one lies within half an element edge.
    Point([f64; 2]),
}

fn full_span() -> [f64; 2] {
    [0.0, 1.0]
}

impl Region {
    pub fn edge(side: Side) -> Self {
        Region::Edge {
            side,
            span: full_span(),
        }
    }

    pub fn edge_span(side: Side, from: f64, to: f64) -> Self {
        Region::Edge { side, span: [from, to] }
    }

    fn contains(&self, p: [f64; 2], lx: f64, ly: f64, tol: f64) -> bool {
        let within = |v: f64, lo: f64, hi: f64| v >= lo - tol && v <= hi + tol;
        match *self {
            Region::Edge { side, span } => {
                let (on_edge, along, len) = match side {
                    Side::Left => (p[0].abs() <= tol, p[1], ly),
                    Side::Right => ((p[0] - lx).abs() <= tol, p[1], ly),
                    Side::Bottom => (p[1].abs() <= tol, p[0], lx),
                    Side::Top => ((p[1] - ly).abs() <= tol, p[0], lx),
                };
                on_edge && within(along, span[0] * len, span[1] * len)
            }
            Region::Box { x, y } => within(p[0], x[0] * lx, x[1] * lx) && within(p[1], y[0] * ly, y[1] * ly),
            Region::Point(q) => (p[0] - q[0] * lx).abs() <= tol && (p[1] - q[1] * ly).abs() <= tol,
        }
    }

    /// Checks that ranges are ordered and finite.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let check = |r: [f64; 2], what: &str| {
            if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
                Err(format!("{what} range [{}, {}] must be finite and ordered", r[0], r[1]))
            } else {
                Ok(())
            }
        };
        match *self {
            Region::Edge { span, .. } => check(span, "span"),
            Region::Box { x, y } => check(x, "x").and(check(y, "y")),
            Region::Point(p) if p.iter().all(|v| v.is_finite()) => Ok(()),
            Region::Point(_) => Err("point coordinates must be finite".into()),
        }
    }
}

/// Result of a region query. An empty selection carries a warning rather
/// than failing; the caller decides whether that is fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub ids: Vec<usize>,
    pub warning: Option<String>,
}

impl Selection {
    fn new(ids: Vec<usize>, region: &Region) -> Self {
        let warning = ids.is_empty().then(|| format!("region {region:?} selects nothing"));
        Self { ids, warning }
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Prescribed pressure on a node set.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSet {
    pub nodes: Vec<usize>,
    pub value: f64,
}

/// Dummy-load location for mechanism problems: a unit force at `node`
/// along `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPort {
    pub node: usize,
    pub direction: [f64; 2],
}

impl OutputPort {
    /// Unit dummy-load vector on the full displacement space.
    pub fn dummy_load(&self, n_dofs: usize) -> Vec<f64> {
        let mut f = vec![0.0; n_dofs];
        f[2 * self.node] = self.direction[0];
        f[2 * self.node + 1] = self.direction[1];
        f
    }

    /// Displacement of the port along its direction.
    pub fn displacement(&self, u: &[f64]) -> f64 {
        self.direction[0] * u[2 * self.node] + self.direction[1] * u[2 * self.node + 1]
    }
}

/// Resolved boundary conditions on node and DOF ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySpec {
    pub pressure_dirichlet: Vec<PressureSet>,
    pub displacement_fixed: Vec<usize>,
    pub symmetry_rollers: Vec<usize>,
    pub output_port: Option<OutputPort>,
}

impl BoundarySpec {
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let mut owner = vec![usize::MAX; mesh.node_count()];
        for (k, set) in self.pressure_dirichlet.iter().enumerate() {
            if !set.value.is_finite() {
                return Err(Error::invalid(format!("pressure set {k} has non-finite value")));
            }
            for &n in &set.nodes {
                if n >= owner.len() {
                    return Err(Error::invalid(format!("pressure node {n} out of range")));
                }
                if owner[n] != usize::MAX && owner[n] != k {
                    return Err(Error::invalid(format!(
                        "node {n} is in pressure sets {} and {k}; sets must be disjoint",
                        owner[n]
                    )));
                }
                owner[n] = k;
            }
        }
        for &d in self.displacement_fixed.iter().chain(&self.symmetry_rollers) {
            if d >= mesh.dof_count() {
                return Err(Error::invalid(format!("displacement dof {d} out of range")));
            }
        }
        if let Some(port) = &self.output_port {
            if port.node >= mesh.node_count() {
                return Err(Error::invalid(format!("output node {} out of range", port.node)));
            }
            let len = port.direction[0].hypot(port.direction[1]);
            if !((len - 1.0).abs() < 1e-12) {
                return Err(Error::invalid("output direction must be a unit vector"));
            }
        }
        Ok(())
    }

    /// All prescribed pressure nodes with their values.
    pub fn pressure_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pressure_dirichlet
            .iter()
            .flat_map(|s| s.nodes.iter().map(move |&n| (n, s.value)))
    }

    /// Constrained displacement DOFs (supports and rollers), sorted and unique.
    pub fn constrained_dofs(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self
            .displacement_fixed
            .iter()
            .chain(&self.symmetry_rollers)
            .copied()
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_counts() {
        let m = Mesh::grid(10, 7, 1.0, 0.7, 0.01).unwrap();
        assert_eq!((m.node_count(), m.element_count()), (88, 70));
        let m = Mesh::grid(1, 1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!((m.node_count(), m.element_count()), (4, 1));
        assert_eq!(m.element_coords(0), [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let m = Mesh::grid(200, 100, 0.2, 0.1, 0.01).unwrap();
        assert_eq!((m.node_count(), m.element_count()), (20301, 20000));
    }

    #[test]
    fn grid_rejects_bad_dimensions() {
        assert!(Mesh::grid(0, 1, 1.0, 1.0, 1.0).is_err());
        assert!(Mesh::grid(1, 1, -1.0, 1.0, 1.0).is_err());
        assert!(Mesh::grid(1, 1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn shape_values_at_known_points() {
        assert_eq!(shape_eval(0.0, 0.0).0, [0.25; 4]);
        assert_eq!(shape_eval(-1.0, -1.0).0, [1.0, 0.0, 0.0, 0.0]);
        let (n, _) = shape_eval(0.5, -0.5);
        let expected = [0.1875, 0.5625, 0.1875, 0.0625];
        for (a, b) in n.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(
            r1,
            vec![GaussPoint {
                xi: 0.0,
                eta: 0.0,
                weight: 4.0
            }]
        );
        let r2 = gauss_rule(2).unwrap();
        assert_eq!(r2.len(), 4);
        assert!(r2
            .iter()
            .all(|p| (p.xi.abs() - 1.0 / 3f64.sqrt()).abs() < 1e-15 && p.weight == 1.0));
        for order in 1..=3 {
            let w: f64 = gauss_rule(order).unwrap().iter().map(|p| p.weight).sum();
            assert!((w - 4.0).abs() < 1e-14);
        }
        let integral: f64 = r2.iter().map(|p| p.weight * p.xi.powi(2) * p.eta.powi(2)).sum();
        assert!((integral - 4.0 / 9.0).abs() < 1e-15);
        assert!(gauss_rule(4).is_err());
    }

    #[test]
    fn corners_map_to_element_nodes() {
        let m = Mesh::grid(3, 2, 0.3, 0.5, 1.0).unwrap();
        let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        for e in 0..m.element_count() {
            let c = m.element_coords(e);
            for (k, [xi, eta]) in corners.into_iter().enumerate() {
                let (n, _) = shape_eval(xi, eta);
                let x: f64 = (0..4).map(|a| n[a] * c[a][0]).sum();
                let y: f64 = (0..4).map(|a| n[a] * c[a][1]).sum();
                assert_eq!([x, y], c[k]);
            }
            for p in gauss_rule(2).unwrap() {
                assert!(eval_at(&c, p.xi, p.eta).unwrap().det_j > 0.0);
            }
        }
    }

    #[test]
    fn degenerate_geometry_is_rejected() {
        let flat = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert!(eval_at(&flat, 0.0, 0.0).is_err());
    }

    #[test]
    fn region_selection() {
        let m = Mesh::grid(10, 7, 1.0, 0.7, 0.01).unwrap();
        assert_eq!(m.select_nodes(&Region::edge(Side::Bottom)).ids.len(), 11);
        assert_eq!(m.select_nodes(&Region::edge(Side::Left)).ids.len(), 8);
        let p = m.select_nodes(&Region::Point([0.0, 0.3 / 0.7]));
        assert_eq!(p.ids, vec![m.node_at(0, 3)]);
        let outside = m.select_nodes(&Region::Box {
            x: [2.0, 3.0],
            y: [2.0, 3.0],
        });
        assert!(outside.is_empty() && outside.warning.is_some());

        let c = Mesh::grid(200, 100, 0.1, 0.05, 0.01).unwrap();
        let void = c.select_elements(&Region::Box {
            x: [0.8, 1.0],
            y: [0.0, 0.2],
        });
        assert_eq!(void.ids.len(), 800);
        assert!(void.ids.iter().all(|&e| {
            let [x, y] = c.centroid(e);
            x > 0.08 && y < 0.01
        }));
    }

    #[test]
    fn edge_span_is_inclusive() {
        let m = Mesh::grid(10, 10, 1.0, 1.0, 1.0).unwrap();
        let s = m.select_nodes(&Region::edge_span(Side::Left, 0.0, 0.2));
        assert_eq!(s.ids, vec![m.node_at(0, 0), m.node_at(0, 1), m.node_at(0, 2)]);
    }

    #[test]
    fn numbering_is_deterministic() {
        let a = Mesh::grid(7, 5, 1.3, 0.9, 0.1).unwrap();
        let b = Mesh::grid(7, 5, 1.3, 0.9, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.elem_conn()[8], [9, 10, 18, 17]);
    }

    #[test]
    fn overlapping_pressure_sets_are_rejected() {
        let m = Mesh::grid(2, 2, 1.0, 1.0, 1.0).unwrap();
        let bc = BoundarySpec {
            pressure_dirichlet: vec![
                PressureSet {
                    nodes: vec![0, 1],
                    value: 1.0,
                },
                PressureSet {
                    nodes: vec![1, 2],
                    value: 0.0,
                },
            ],
            ..Default::default()
        };
        assert!(bc.validate(&m).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn partition_of_unity(xi in -1.0f64..=1.0, eta in -1.0f64..=1.0) {
            let (n, dn) = shape_eval(xi, eta);
            prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            prop_assert!(n.iter().all(|&v| v >= 0.0));
            let gx: f64 = dn.iter().map(|d| d[0]).sum();
            let gy: f64 = dn.iter().map(|d| d[1]).sum();
            prop_assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
        }
    }
}

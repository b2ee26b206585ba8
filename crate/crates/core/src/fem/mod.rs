//! Taylor–Hood (P2/P1) discretization of the velocity–pressure pair and P2
//! discretization of the temperature, including boundary input maps and
//! observation functionals.
//!
//! Velocity degrees of freedom are stored component-major: all free ξ₁ values
//! first, then all free ξ₂ values. The plant state is `[v; θ]`.

pub mod element;
pub mod quadrature;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::mesh::{BoundaryTag, Mesh, Region};
use crate::sparse::{SpMat, TripletBuilder};
use element::{edge_p2_values, p1_values, p2_ref_gradients, p2_values, AffineMap};
use quadrature::{LineRule, TriangleRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub reynolds: f64,
    pub grashof: f64,
    pub prandtl: f64,
    pub alpha_v: f64,
    pub alpha_theta: f64,
}

impl PhysicalParams {
    /// Re = 100, Gr = Re²/0.9, Pr = 0.7, unit Robin coefficients.
    pub fn reference() -> Self {
        PhysicalParams {
            reynolds: 100.0,
            grashof: 100.0 * 100.0 / 0.9,
            prandtl: 0.7,
            alpha_v: 1.0,
            alpha_theta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds > 0.0 && self.prandtl > 0.0) {
            return Err(Error::Invariant("Re and Pr must be positive".into()));
        }
        if !(self.alpha_v >= 0.0 && self.alpha_theta >= 0.0) {
            return Err(Error::Invariant("Robin coefficients must be non-negative".into()));
        }
        if !self.grashof.is_finite() {
            return Err(Error::Invariant("Gr must be finite".into()));
        }
        Ok(())
    }

    pub fn viscosity(&self) -> f64 {
        1.0 / self.reynolds
    }

    pub fn diffusivity(&self) -> f64 {
        1.0 / (self.reynolds * self.prandtl)
    }

    pub fn buoyancy(&self) -> f64 {
        self.grashof / (self.reynolds * self.reynolds)
    }
}

/// Scalar field component a shape or observation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    V1,
    V2,
    Theta,
}

/// Free-dof numbering of one scalar P2 field.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    /// P2 node → free dof.
    pub index: Vec<Option<usize>>,
    pub free_nodes: Vec<usize>,
}

impl ScalarSpace {
    fn from_mask(dirichlet: &[bool]) -> Self {
        let mut index = vec![None; dirichlet.len()];
        let mut free_nodes = Vec::new();
        for (node, &fixed) in dirichlet.iter().enumerate() {
            if !fixed {
                index[node] = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
        ScalarSpace { index, free_nodes }
    }

    pub fn ndofs(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.index.len()).filter(|&n| self.index[n].is_none()).collect()
    }
}

/// P2 velocity / P1 pressure / P2 temperature spaces on one mesh.
#[derive(Clone, Debug)]
pub struct FemSpaces {
    pub mesh: Mesh,
    pub node_coords: Vec<[f64; 2]>,
    pub tri_nodes: Vec<[usize; 6]>,
    /// Per boundary edge: start, end, midpoint P2 nodes.
    pub edge_nodes: Vec<[usize; 3]>,
    pub velocity: ScalarSpace,
    pub temperature: ScalarSpace,
}

impl FemSpaces {
    /// No-slip velocity on wall and heater edges; fixed temperature on walls
    /// outside the heater. Nodes shared with a constrained edge are constrained.
    pub fn new(mesh: &Mesh) -> Self {
        Self::build(mesh, true)
    }

    /// Same node layout without any Dirichlet elimination.
    pub fn unconstrained(mesh: &Mesh) -> Self {
        Self::build(mesh, false)
    }

    fn build(mesh: &Mesh, constrained: bool) -> Self {
        let (nx, ny) = (mesh.nx, mesh.ny);
        let stride = 2 * nx + 1;
        let n_nodes = stride * (2 * ny + 1);
        let half = mesh.h / 2.0;
        let mut node_coords = Vec::with_capacity(n_nodes);
        for j in 0..=2 * ny {
            for i in 0..=2 * nx {
                node_coords.push([i as f64 * half, j as f64 * half]);
            }
        }
        let grid = |v: usize| (2 * (v % (nx + 1)), 2 * (v / (nx + 1)));
        let mid = |a: usize, b: usize| {
            let (ia, ja) = grid(a);
            let (ib, jb) = grid(b);
            ((ja + jb) / 2) * stride + (ia + ib) / 2
        };
        let node = |v: usize| {
            let (i, j) = grid(v);
            j * stride + i
        };
        let tri_nodes = mesh
            .triangles
            .iter()
            .map(|&[a, b, c]| [node(a), node(b), node(c), mid(a, b), mid(b, c), mid(c, a)])
            .collect();
        let edge_nodes: Vec<[usize; 3]> = mesh
            .boundary_edges
            .iter()
            .map(|e| {
                let [a, b] = e.vertices;
                [node(a), node(b), mid(a, b)]
            })
            .collect();

        let mut vel_fixed = vec![false; n_nodes];
        let mut temp_fixed = vec![false; n_nodes];
        if constrained {
            for (edge, nodes) in mesh.boundary_edges.iter().zip(&edge_nodes) {
                let (v, t) = match edge.tag {
                    BoundaryTag::Wall => (true, true),
                    BoundaryTag::Heater => (true, false),
                    BoundaryTag::Inlet | BoundaryTag::Outlet => (false, false),
                };
                for &n in nodes {
                    vel_fixed[n] |= v;
                    temp_fixed[n] |= t;
                }
            }
        }
        FemSpaces {
            mesh: mesh.clone(),
            node_coords,
            tri_nodes,
            edge_nodes,
            velocity: ScalarSpace::from_mask(&vel_fixed),
            temperature: ScalarSpace::from_mask(&temp_fixed),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    /// Velocity dof count (both components).
    pub fn n_v(&self) -> usize {
        2 * self.velocity.ndofs()
    }

    pub fn n_theta(&self) -> usize {
        self.temperature.ndofs()
    }

    pub fn n_p(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Plant dof count `n_v + n_θ`.
    pub fn n_b(&self) -> usize {
        self.n_v() + self.n_theta()
    }

    #[inline]
    pub fn velocity_dof(&self, component: usize, node: usize) -> Option<usize> {
        self.velocity.index[node].map(|i| component * self.velocity.ndofs() + i)
    }

    #[inline]
    pub fn temperature_dof(&self, node: usize) -> Option<usize> {
        self.temperature.index[node]
    }

    /// Position of a field dof inside the plant state `[v; θ]`.
    #[inline]
    pub fn state_dof(&self, field: Field, node: usize) -> Option<usize> {
        match field {
            Field::V1 => self.velocity_dof(0, node),
            Field::V2 => self.velocity_dof(1, node),
            Field::Theta => self.temperature_dof(node).map(|i| self.n_v() + i),
        }
    }

    /// Nodal values of both velocity components (zero at constrained nodes).
    pub fn velocity_nodal(&self, v: &[f64]) -> [Vec<f64>; 2] {
        let nv = self.velocity.ndofs();
        let mut out = [vec![0.0; self.n_nodes()], vec![0.0; self.n_nodes()]];
        for (i, &node) in self.velocity.free_nodes.iter().enumerate() {
            out[0][node] = v[i];
            out[1][node] = v[nv + i];
        }
        out
    }

    pub fn temperature_nodal(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (i, &node) in self.temperature.free_nodes.iter().enumerate() {
            out[node] = t[i];
        }
        out
    }

    pub fn interpolate_velocity(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let nv = self.velocity.ndofs();
        let mut out = vec![0.0; 2 * nv];
        for (i, &node) in self.velocity.free_nodes.iter().enumerate() {
            let p = self.node_coords[node];
            let val = f(p[0], p[1]);
            out[i] = val[0];
            out[nv + i] = val[1];
        }
        out
    }

    pub fn interpolate_temperature(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.temperature
            .free_nodes
            .iter()
            .map(|&node| {
                let p = self.node_coords[node];
                f(p[0], p[1])
            })
            .collect()
    }

    fn triangle_map(&self, t: usize) -> AffineMap {
        AffineMap::new(self.mesh.triangles[t].map(|v| self.mesh.vertices[v]))
    }

    fn edge_endpoints(&self, e: usize) -> ([f64; 2], [f64; 2]) {
        let [a, b] = self.mesh.boundary_edges[e].vertices;
        (self.mesh.vertices[a], self.mesh.vertices[b])
    }

    /// Shared-dimension check for linearization points.
    pub fn check_point(&self, w: &[f64], t: &[f64]) -> Result<()> {
        if w.len() != self.n_v() {
            return Err(Error::dim("velocity field", self.n_v(), w.len()));
        }
        if t.len() != self.n_theta() {
            return Err(Error::dim("temperature field", self.n_theta(), t.len()));
        }
        Ok(())
    }
}

/// All finite-element matrices of the velocity/temperature/pressure forms,
/// restricted to free dofs.
#[derive(Clone, Debug)]
pub struct FormMatrices {
    pub m_v: SpMat,
    pub m_theta: SpMat,
    pub m_p: SpMat,
    /// Strain-rate viscous form plus inlet Robin term.
    pub a_v: SpMat,
    /// Diffusion form plus inlet Robin term.
    pub a_theta: SpMat,
    /// `div[i, (a,k)] = ∫ q_i ∂_k φ_a` (n_p × n_v).
    pub div: SpMat,
    /// Buoyancy coupling into ξ₂-momentum (n_v × n_θ).
    pub b0: SpMat,
    /// `v ↦ (w·∇)v + (v·∇)w` at the linearization velocity.
    pub n_v: SpMat,
    /// `θ ↦ w·∇θ` (n_θ × n_θ).
    pub n_tt: SpMat,
    /// `v ↦ v·∇T` (n_θ × n_v).
    pub n_tv: SpMat,
}

/// Element P1 mass matrix on a triangle with the given vertices.
pub fn p1_element_mass(vertices: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let map = AffineMap::new(vertices);
    let rule = TriangleRule::degree5();
    let mut out = [[0.0; 3]; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let psi = p1_values(p[0], p[1]);
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += w * map.det.abs() * psi[i] * psi[j];
            }
        }
    }
    out
}

struct RefTables {
    weights: Vec<f64>,
    points: Vec<[f64; 2]>,
    phi: Vec<[f64; 6]>,
    dphi: Vec<[[f64; 2]; 6]>,
    psi: Vec<[f64; 3]>,
}

impl RefTables {
    fn new(rule: &TriangleRule) -> Self {
        RefTables {
            weights: rule.weights.clone(),
            points: rule.points.clone(),
            phi: rule.points.iter().map(|p| p2_values(p[0], p[1])).collect(),
            dphi: rule.points.iter().map(|p| p2_ref_gradients(p[0], p[1])).collect(),
            psi: rule.points.iter().map(|p| p1_values(p[0], p[1])).collect(),
        }
    }
}

/// Assembles every form at the linearization point `(w, T)`; `None` means the
/// zero field, for which the transport blocks vanish.
pub fn assemble_forms(
    spaces: &FemSpaces,
    params: &PhysicalParams,
    point: Option<(&[f64], &[f64])>,
) -> Result<FormMatrices> {
    params.validate()?;
    let (w_nodal, t_nodal) = match point {
        Some((w, t)) => {
            spaces.check_point(w, t)?;
            (Some(spaces.velocity_nodal(w)), Some(spaces.temperature_nodal(t)))
        }
        None => (None, None),
    };
    let nv = spaces.n_v();
    let nt = spaces.n_theta();
    let np = spaces.n_p();
    let ntri = spaces.mesh.triangles.len();
    let cap = ntri * 36;
    let mut m_v = TripletBuilder::with_capacity(nv, nv, 2 * cap);
    let mut m_t = TripletBuilder::with_capacity(nt, nt, cap);
    let mut m_p = TripletBuilder::with_capacity(np, np, ntri * 9);
    let mut a_v = TripletBuilder::with_capacity(nv, nv, 4 * cap);
    let mut a_t = TripletBuilder::with_capacity(nt, nt, cap);
    let mut div = TripletBuilder::with_capacity(np, nv, ntri * 36);
    let mut b0 = TripletBuilder::with_capacity(nv, nt, cap);
    let mut n_v = TripletBuilder::new(nv, nv);
    let mut n_tt = TripletBuilder::new(nt, nt);
    let mut n_tv = TripletBuilder::new(nt, nv);

    let nu = params.viscosity();
    let kappa = params.diffusivity();
    let beta = params.buoyancy();
    let tab = RefTables::new(&TriangleRule::degree5());

    for t in 0..ntri {
        let map = spaces.triangle_map(t);
        let nodes = spaces.tri_nodes[t];
        let verts = spaces.mesh.triangles[t];
        let vdof: [[Option<usize>; 6]; 2] =
            [0, 1].map(|k| nodes.map(|n| spaces.velocity_dof(k, n)));
        let tdof = nodes.map(|n| spaces.temperature_dof(n));
        let wl = w_nodal.as_ref().map(|w| [nodes.map(|n| w[0][n]), nodes.map(|n| w[1][n])]);
        let tl = t_nodal.as_ref().map(|tn| nodes.map(|n| tn[n]));

        let mut mass = [[0.0; 6]; 6];
        let mut stiff = [[0.0; 6]; 6];
        // dd[a][b][k][l] = ∫ ∂_k φ_a ∂_l φ_b
        let mut dd = [[[[0.0; 2]; 2]; 6]; 6];
        let mut adv = [[0.0; 6]; 6];
        // react[a][b][k][l] = ∫ φ_a ∂_k w_l φ_b
        let mut react = [[[[0.0; 2]; 2]; 6]; 6];
        // tgrad[a][b][k] = ∫ φ_a ∂_k T φ_b
        let mut tgrad = [[[0.0; 2]; 6]; 6];
        // pdiv[i][a][k] = ∫ q_i ∂_k φ_a
        let mut pdiv = [[[0.0; 2]; 6]; 3];
        let mut pmass = [[0.0; 3]; 3];

        for q in 0..tab.weights.len() {
            let wq = tab.weights[q] * map.det.abs();
            let phi = &tab.phi[q];
            let grad: [[f64; 2]; 6] = tab.dphi[q].map(|g| map.grad(g));
            let psi = &tab.psi[q];

            let (wv, gw) = match &wl {
                Some(wl) => {
                    let mut wv = [0.0; 2];
                    let mut gw = [[0.0; 2]; 2]; // gw[l][k] = ∂_k w_l
                    for a in 0..6 {
                        for l in 0..2 {
                            wv[l] += wl[l][a] * phi[a];
                            for k in 0..2 {
                                gw[l][k] += wl[l][a] * grad[a][k];
                            }
                        }
                    }
                    (wv, gw)
                }
                None => ([0.0; 2], [[0.0; 2]; 2]),
            };
            let gt = match &tl {
                Some(tl) => {
                    let mut g = [0.0; 2];
                    for a in 0..6 {
                        g[0] += tl[a] * grad[a][0];
                        g[1] += tl[a] * grad[a][1];
                    }
                    g
                }
                None => [0.0; 2],
            };

            for a in 0..6 {
                let w_dot_grad_a = wv[0] * grad[a][0] + wv[1] * grad[a][1];
                for b in 0..6 {
                    mass[a][b] += wq * phi[a] * phi[b];
                    stiff[a][b] += wq * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                    for k in 0..2 {
                        for l in 0..2 {
                            dd[a][b][k][l] += wq * grad[a][k] * grad[b][l];
                            react[a][b][k][l] += wq * phi[a] * gw[l][k] * phi[b];
                        }
                        tgrad[a][b][k] += wq * phi[a] * gt[k] * phi[b];
                    }
                    adv[a][b] += wq * w_dot_grad_a * phi[b];
                }
                for i in 0..3 {
                    for k in 0..2 {
                        pdiv[i][a][k] += wq * psi[i] * grad[a][k];
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    pmass[i][j] += wq * psi[i] * psi[j];
                }
            }
        }

        // Row = test function b, column = trial function a.
        for a in 0..6 {
            for b in 0..6 {
                for k in 0..2 {
                    let Some(col) = vdof[k][a] else { continue };
                    for l in 0..2 {
                        let Some(row) = vdof[l][b] else { continue };
                        // (2/Re) ε(φ_a e_k) : ε(φ_b e_l)
                        let mut visc = nu * dd[a][b][l][k];
                        let mut conv = react[a][b][k][l];
                        if k == l {
                            visc += nu * stiff[a][b];
                            conv += adv[a][b];
                            m_v.push(row, col, mass[a][b]);
                        }
                        a_v.push(row, col, visc);
                        if wl.is_some() {
                            n_v.push(row, col, conv);
                        }
                    }
                    if let (Some(row), Some(_)) = (tdof[b], tl.as_ref()) {
                        n_tv.push(row, col, tgrad[a][b][k]);
                    }
                }
                if let (Some(col), Some(row)) = (tdof[a], tdof[b]) {
                    m_t.push(row, col, mass[a][b]);
                    a_t.push(row, col, kappa * stiff[a][b]);
                    if wl.is_some() {
                        n_tt.push(row, col, adv[a][b]);
                    }
                }
                if let (Some(col), Some(row)) = (tdof[a], vdof[1][b]) {
                    b0.push(row, col, beta * mass[a][b]);
                }
            }
            for i in 0..3 {
                for k in 0..2 {
                    if let Some(col) = vdof[k][a] {
                        div.push(verts[i], col, pdiv[i][a][k]);
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                m_p.push(verts[i], verts[j], pmass[i][j]);
            }
        }
    }

    // Robin terms on the inlet.
    let line = LineRule::gauss3();
    for e in spaces.mesh.edges_with_tag(BoundaryTag::Inlet) {
        let len = spaces.mesh.edge_length(e);
        let nodes = spaces.edge_nodes[e];
        let mut emass = [[0.0; 3]; 3];
        for (t, w) in line.points.iter().zip(&line.weights) {
            let psi = edge_p2_values(*t);
            for a in 0..3 {
                for b in 0..3 {
                    emass[a][b] += w * len * psi[a] * psi[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..2 {
                    if let (Some(col), Some(row)) =
                        (spaces.velocity_dof(k, nodes[a]), spaces.velocity_dof(k, nodes[b]))
                    {
                        a_v.push(row, col, params.alpha_v * emass[a][b]);
                    }
                }
                if let (Some(col), Some(row)) =
                    (spaces.temperature_dof(nodes[a]), spaces.temperature_dof(nodes[b]))
                {
                    a_t.push(row, col, params.alpha_theta * emass[a][b]);
                }
            }
        }
    }

    let forms = FormMatrices {
        m_v: m_v.build(),
        m_theta: m_t.build(),
        m_p: m_p.build(),
        a_v: a_v.build(),
        a_theta: a_t.build(),
        div: div.build(),
        b0: b0.build(),
        n_v: n_v.build(),
        n_tt: n_tt.build(),
        n_tv: n_tv.build(),
    };
    for (name, m) in [("velocity", &forms.m_v), ("temperature", &forms.m_theta)] {
        if m.nrows() > 0 && m.sp_cholesky(faer::Side::Lower).is_err() {
            return Err(Error::Assembly(format!("{name} mass matrix is not positive definite")));
        }
    }
    Ok(forms)
}

/// Load vector `∫ f φ` of a volume source for one field, in plant-state layout
/// restricted to that field (length n_v for velocity components, n_θ for θ).
pub fn volume_load(spaces: &FemSpaces, field: Field, f: &ScalarExpr) -> Vec<f64> {
    let len = match field {
        Field::V1 | Field::V2 => spaces.n_v(),
        Field::Theta => spaces.n_theta(),
    };
    let mut out = vec![0.0; len];
    if f.is_zero_literal() {
        return out;
    }
    let tab = RefTables::new(&TriangleRule::degree5());
    let mut pts = Vec::with_capacity(spaces.mesh.triangles.len() * tab.weights.len());
    for t in 0..spaces.mesh.triangles.len() {
        let map = spaces.triangle_map(t);
        pts.extend(tab.points.iter().map(|p| map.point(p[0], p[1])));
    }
    let values = f.eval_points(&pts);
    let nq = tab.weights.len();
    for t in 0..spaces.mesh.triangles.len() {
        let map = spaces.triangle_map(t);
        let nodes = spaces.tri_nodes[t];
        for q in 0..nq {
            let fw = values[t * nq + q] * tab.weights[q] * map.det.abs();
            for a in 0..6 {
                let dof = match field {
                    Field::V1 => spaces.velocity_dof(0, nodes[a]),
                    Field::V2 => spaces.velocity_dof(1, nodes[a]),
                    Field::Theta => spaces.temperature_dof(nodes[a]),
                };
                if let Some(i) = dof {
                    out[i] += fw * tab.phi[q][a];
                }
            }
        }
    }
    out
}

/// `‖u_h − u‖_{L²}` for one field given in its own layout (n_v or n_θ values).
pub fn l2_error(spaces: &FemSpaces, field: Field, values: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let nodal = match field {
        Field::V1 => spaces.velocity_nodal(values)[0].clone(),
        Field::V2 => spaces.velocity_nodal(values)[1].clone(),
        Field::Theta => spaces.temperature_nodal(values),
    };
    let tab = RefTables::new(&TriangleRule::degree6());
    let mut sum = 0.0;
    for t in 0..spaces.mesh.triangles.len() {
        let map = spaces.triangle_map(t);
        let nodes = spaces.tri_nodes[t];
        for q in 0..tab.weights.len() {
            let p = map.point(tab.points[q][0], tab.points[q][1]);
            let uh: f64 = (0..6).map(|a| nodal[nodes[a]] * tab.phi[q][a]).sum();
            let d = uh - exact(p[0], p[1]);
            sum += tab.weights[q] * map.det.abs() * d * d;
        }
    }
    sum.sqrt()
}

/// A boundary control or disturbance shape acting on one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputShape {
    pub region: String,
    pub field: Field,
    pub shape: ScalarExpr,
}

fn check_input_support(spaces: &FemSpaces, input: &InputShape, edges: &[usize]) -> Result<()> {
    let err = |reason: String| Error::ShapeSupport {
        region: input.region.clone(),
        reason,
    };
    if edges.is_empty() {
        return Err(err("no boundary edges on this mesh".into()));
    }
    for &e in edges {
        let tag = spaces.mesh.boundary_edges[e].tag;
        let allowed = match input.field {
            Field::V1 | Field::V2 => matches!(tag, BoundaryTag::Inlet | BoundaryTag::Outlet),
            Field::Theta => tag != BoundaryTag::Wall,
        };
        if !allowed {
            return Err(err(format!("{:?} is fixed on {:?} edges", input.field, tag)));
        }
    }
    Ok(())
}

/// Edge rule for shapes and weights: the reference bumps rise steeply next to
/// the vent endpoints, where a single 3-point rule is off by about 2% at h = 1/16.
pub fn boundary_rule() -> LineRule {
    LineRule::gauss5().composite(8)
}

/// Columns `∫_Γ b(ξ) φ ds` of the input shapes in the plant state layout.
pub fn assemble_boundary_inputs(spaces: &FemSpaces, inputs: &[InputShape]) -> Result<Mat<f64>> {
    assemble_boundary_inputs_with_rule(spaces, inputs, &boundary_rule())
}

pub fn assemble_boundary_inputs_with_rule(
    spaces: &FemSpaces,
    inputs: &[InputShape],
    rule: &LineRule,
) -> Result<Mat<f64>> {
    let mut out = Mat::zeros(spaces.n_b(), inputs.len());
    for (j, input) in inputs.iter().enumerate() {
        let interval = match spaces.mesh.geometry.region(&input.region)? {
            Region::Boundary { interval } => interval,
            Region::Domain { .. } => {
                return Err(Error::ShapeSupport {
                    region: input.region.clone(),
                    reason: "inputs act on boundary regions only".into(),
                })
            }
        };
        let edges = spaces.mesh.edges_in_interval(&interval);
        check_input_support(spaces, input, &edges)?;
        if input.shape.is_zero_literal() {
            continue;
        }
        for e in edges {
            let (pa, pb) = spaces.edge_endpoints(e);
            let len = spaces.mesh.edge_length(e);
            let nodes = spaces.edge_nodes[e];
            let pts: Vec<[f64; 2]> = rule
                .points
                .iter()
                .map(|&t| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
                .collect();
            let vals = input.shape.eval_points(&pts);
            for (q, (&t, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let psi = edge_p2_values(t);
                for a in 0..3 {
                    if let Some(i) = spaces.state_dof(input.field, nodes[a]) {
                        out[(i, j)] += w * len * vals[q] * psi[a];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Weighted average of one field over a named region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub region: String,
    pub field: Field,
    /// Weight `c(ξ)`; the functional is `(1/|region|) ∫ c u`. Defaults to 1.
    #[serde(default)]
    pub weight: Option<ScalarExpr>,
}

/// Rows of the observation matrix in the plant state layout.
pub fn assemble_observations(spaces: &FemSpaces, specs: &[ObservationSpec]) -> Result<Mat<f64>> {
    let mut out = Mat::zeros(specs.len(), spaces.n_b());
    let tab = RefTables::new(&TriangleRule::degree5());
    let line = boundary_rule();
    for (row, spec) in specs.iter().enumerate() {
        let weight = |pts: &[[f64; 2]]| match &spec.weight {
            Some(w) => w.eval_points(pts),
            None => vec![1.0; pts.len()],
        };
        match spaces.mesh.geometry.region(&spec.region)? {
            Region::Domain { rect } => {
                let tris = spaces.mesh.triangles_in_rect(&rect);
                if tris.is_empty() {
                    return Err(Error::EmptyRegion(spec.region.clone()));
                }
                let measure: f64 = tris.iter().map(|&t| spaces.mesh.triangle_area(t)).sum();
                for t in tris {
                    let map = spaces.triangle_map(t);
                    let nodes = spaces.tri_nodes[t];
                    let pts: Vec<_> = tab.points.iter().map(|p| map.point(p[0], p[1])).collect();
                    let c = weight(&pts);
                    for q in 0..tab.weights.len() {
                        let wq = tab.weights[q] * map.det.abs() * c[q] / measure;
                        for a in 0..6 {
                            if let Some(i) = spaces.state_dof(spec.field, nodes[a]) {
                                out[(row, i)] += wq * tab.phi[q][a];
                            }
                        }
                    }
                }
            }
            Region::Boundary { interval } => {
                let edges = spaces.mesh.edges_in_interval(&interval);
                if edges.is_empty() {
                    return Err(Error::EmptyRegion(spec.region.clone()));
                }
                let measure: f64 = edges.iter().map(|&e| spaces.mesh.edge_length(e)).sum();
                for e in edges {
                    let (pa, pb) = spaces.edge_endpoints(e);
                    let len = spaces.mesh.edge_length(e);
                    let nodes = spaces.edge_nodes[e];
                    let pts: Vec<_> = line
                        .points
                        .iter()
                        .map(|&t| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
                        .collect();
                    let c = weight(&pts);
                    for (q, (&t, &w)) in line.points.iter().zip(&line.weights).enumerate() {
                        let psi = edge_p2_values(t);
                        for a in 0..3 {
                            if let Some(i) = spaces.state_dof(spec.field, nodes[a]) {
                                out[(row, i)] += w * len * c[q] * psi[a] / measure;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;

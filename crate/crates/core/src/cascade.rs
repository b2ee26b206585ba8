//! Linearized plant, pressure elimination and the actuator → plant → sensor
//! cascade `E ẋ = A x + B u + B_d u_d`, `y = C x`.
//!
//! Plant states are ordered `[v; θ]`, followed by the pressure when it is kept
//! as an auxiliary variable. The cascade state is `(x_b, x_a, x_s)`.

use std::fmt::Write as _;
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_inputs, assemble_forms, assemble_observations, FemSpaces, FormMatrices, InputShape,
    ObservationSpec, PhysicalParams,
};
use crate::linalg::{transfer_function, SysMat};
use crate::sparse::{SpMat, TripletBuilder};
use crate::steady::SteadyState;

/// How incompressibility is represented in a plant model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum PressureTreatment {
    /// Pressure kept with the exact constraint `D v = 0` (index-2 pencil).
    Saddle,
    /// `D v + ε M_p p = 0`: the pressure is an algebraic function of the
    /// velocity, `p = −(1/ε) M_p⁻¹ D v`, kept as an auxiliary variable so the
    /// matrices stay sparse.
    Penalty { epsilon: f64 },
    /// Velocity restricted to a mass-orthonormal basis of `ker D`.
    Nullspace,
}

#[derive(Clone, Debug)]
pub struct DiscretePlant {
    pub e: SysMat,
    pub a: SysMat,
    pub b: Mat<f64>,
    pub bd: Mat<f64>,
    pub c: Mat<f64>,
    /// Differential (physical or projected) states.
    pub n_states: usize,
    /// Trailing algebraic pressure states.
    pub n_aux: usize,
    pub pressure: PressureTreatment,
    /// For projected models: `x_fem = basis · ξ` with `basisᵀ E_fem basis = I`.
    pub basis: Option<Mat<f64>>,
    /// Finite-element mass `diag(M_v, M_θ)`, kept to map field states.
    pub fem_mass: SpMat,
    /// Pressure mass and divergence blocks, needed by the eliminations.
    pressure_blocks: Option<(SpMat, SpMat)>,
}

impl DiscretePlant {
    /// Plant given directly by dense matrices (no pressure, identity field map).
    pub fn from_dense(e: Mat<f64>, a: Mat<f64>, b: Mat<f64>, bd: Mat<f64>, c: Mat<f64>) -> Self {
        let n = a.nrows();
        Self {
            fem_mass: crate::sparse::identity(n),
            e: SysMat::Dense(e),
            a: SysMat::Dense(a),
            b,
            bd,
            c,
            n_states: n,
            n_aux: 0,
            pressure: PressureTreatment::Saddle,
            basis: None,
            pressure_blocks: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_states + self.n_aux
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `C_b (sE_b − A_b)⁻¹ B_b`
    pub fn transfer(&self, s: c64) -> Result<Mat<c64>> {
        transfer_function(&self.e, &self.a, self.b.as_ref(), self.c.as_ref(), s)
    }

    /// Plant coordinates of a finite-element field `[v; θ]`. Projected models
    /// use `ξ = basisᵀ E x`; auxiliary pressures are set consistently.
    pub fn state_from_fields(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n_fem = self.fem_mass.nrows();
        if x.len() != n_fem {
            return Err(Error::dim("field state", n_fem, x.len()));
        }
        match &self.basis {
            Some(z) => {
                let ex = crate::sparse::spmv(&self.fem_mass, x);
                Ok((0..z.ncols()).map(|j| z.col(j).iter().zip(&ex).map(|(a, b)| a * b).sum()).collect())
            }
            None => {
                let mut out = x.to_vec();
                out.resize(self.dim(), 0.0);
                if let (PressureTreatment::Penalty { epsilon }, Some((mp, div))) = (self.pressure, &self.pressure_blocks) {
                    let nv = div.ncols();
                    let dv = crate::sparse::spmv(div, &x[..nv]);
                    let lu = crate::linalg::SparseLu::factor(mp)?;
                    let p = lu.solve(&dv)?;
                    for (o, pi) in out[self.n_states..].iter_mut().zip(p) {
                        *o = -pi / epsilon;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Finite-element field `[v; θ]` of a plant state.
    pub fn fields_from_state(&self, x: &[f64]) -> Vec<f64> {
        match &self.basis {
            Some(z) => (z * Mat::from_fn(x.len(), 1, |i, _| x[i])).col(0).iter().copied().collect(),
            None => x[..self.n_states].to_vec(),
        }
    }
}

/// Linearization of the Boussinesq equations at a steady state, pressure
/// retained.
pub fn linearize(
    spaces: &FemSpaces,
    params: &PhysicalParams,
    steady: &SteadyState,
    controls: &[InputShape],
    disturbances: &[InputShape],
    observations: &[ObservationSpec],
) -> Result<DiscretePlant> {
    if steady.q.len() != spaces.n_p() {
        return Err(Error::dim("steady pressure", spaces.n_p(), steady.q.len()));
    }
    let forms = assemble_forms(spaces, params, Some((&steady.w, &steady.t)))?;
    let b = assemble_boundary_inputs(spaces, controls)?;
    let bd = assemble_boundary_inputs(spaces, disturbances)?;
    let c = assemble_observations(spaces, observations)?;
    Ok(plant_from_forms(spaces, &forms, b, bd, c))
}

fn plant_from_forms(spaces: &FemSpaces, f: &FormMatrices, b: Mat<f64>, bd: Mat<f64>, c: Mat<f64>) -> DiscretePlant {
    let (nv, nt, np) = (spaces.n_v(), spaces.n_theta(), spaces.n_p());
    let nb = nv + nt;
    let n = nb + np;
    let mut e = TripletBuilder::new(n, n);
    e.add_sparse(&f.m_v, 0, 0, 1.0);
    e.add_sparse(&f.m_theta, nv, nv, 1.0);
    let mut a = TripletBuilder::new(n, n);
    a.add_sparse(&f.a_v, 0, 0, -1.0);
    a.add_sparse(&f.n_v, 0, 0, -1.0);
    a.add_sparse(&f.b0, 0, nv, 1.0);
    a.add_sparse(&f.n_tv, nv, 0, -1.0);
    a.add_sparse(&f.a_theta, nv, nv, -1.0);
    a.add_sparse(&f.n_tt, nv, nv, -1.0);
    for t in f.div.triplet_iter() {
        a.push(t.col, nb + t.row, *t.val);
        a.push(nb + t.row, t.col, -*t.val);
    }
    let mut fem_mass = TripletBuilder::new(nb, nb);
    fem_mass.add_sparse(&f.m_v, 0, 0, 1.0);
    fem_mass.add_sparse(&f.m_theta, nv, nv, 1.0);
    let pad = |m: Mat<f64>| {
        let mut out = Mat::zeros(n, m.ncols());
        out.as_mut().submatrix_mut(0, 0, nb, m.ncols()).copy_from(&m);
        out
    };
    let mut cc = Mat::zeros(c.nrows(), n);
    cc.as_mut().submatrix_mut(0, 0, c.nrows(), nb).copy_from(&c);
    DiscretePlant {
        e: SysMat::Sparse(e.build()),
        a: SysMat::Sparse(a.build()),
        b: pad(b),
        bd: pad(bd),
        c: cc,
        n_states: nb,
        n_aux: np,
        pressure: PressureTreatment::Saddle,
        basis: None,
        fem_mass: fem_mass.build(),
        pressure_blocks: Some((f.m_p.clone(), f.div.clone())),
    }
}

/// Turns the saddle-point plant into an ODE model.
pub fn eliminate_pressure(plant: &DiscretePlant, method: PressureTreatment) -> Result<DiscretePlant> {
    if plant.pressure != PressureTreatment::Saddle {
        return Err(Error::Invariant("pressure already eliminated".into()));
    }
    let (mp, div) = plant
        .pressure_blocks
        .clone()
        .ok_or_else(|| Error::Invariant("plant carries no pressure blocks".into()))?;
    let nb = plant.n_states;
    match method {
        PressureTreatment::Saddle => Ok(plant.clone()),
        PressureTreatment::Penalty { epsilon } => {
            if !(epsilon > 0.0) {
                return Err(Error::Invariant("penalty parameter must be positive".into()));
            }
            let SysMat::Sparse(a) = &plant.a else {
                return Err(Error::Invariant("saddle plant must be sparse".into()));
            };
            let mut t = TripletBuilder::new(a.nrows(), a.ncols());
            t.add_sparse(a, 0, 0, 1.0);
            t.add_sparse(&mp, nb, nb, -epsilon);
            Ok(DiscretePlant {
                a: SysMat::Sparse(t.build()),
                pressure: method,
                ..plant.clone()
            })
        }
        PressureTreatment::Nullspace => nullspace_reduce(plant, &div),
    }
}

fn nullspace_reduce(plant: &DiscretePlant, div: &SpMat) -> Result<DiscretePlant> {
    let nb = plant.n_states;
    let (np, nv) = (div.nrows(), div.ncols());
    let nt = nb - nv;
    // Orthonormal basis of ker D from a full QR of Dᵀ.
    let dt = crate::sparse::to_dense(&crate::sparse::transpose(div));
    let qr = dt.qr();
    let r = qr.R();
    let scale = (0..np).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..np).filter(|&i| r[(i, i)].abs() > 1e-10 * scale).count();
    if rank < np {
        return Err(Error::RankDeficient { rank, rows: np });
    }
    let q = qr.compute_Q();
    let kv = nv - np;
    let zv = q.as_ref().submatrix(0, np, nv, kv).to_owned();

    // Mass-orthonormalize velocity and temperature blocks separately.
    let m = plant.fem_mass.clone();
    let mut m_v = TripletBuilder::new(nv, nv);
    let mut m_t = TripletBuilder::new(nt, nt);
    for t in m.triplet_iter() {
        if t.row < nv && t.col < nv {
            m_v.push(t.row, t.col, *t.val);
        } else if t.row >= nv && t.col >= nv {
            m_t.push(t.row - nv, t.col - nv, *t.val);
        }
    }
    let zv = mass_orthonormalize(&m_v.build(), zv)?;
    let zt = mass_orthonormalize(&m_t.build(), Mat::identity(nt, nt))?;
    let k = kv + nt;
    let mut z = Mat::zeros(nb, k);
    z.as_mut().submatrix_mut(0, 0, nv, kv).copy_from(&zv);
    z.as_mut().submatrix_mut(nv, kv, nt, nt).copy_from(&zt);

    // Project the differential block: Zᵀ A_bb Z, Zᵀ B, C Z.
    let SysMat::Sparse(a) = &plant.a else {
        return Err(Error::Invariant("saddle plant must be sparse".into()));
    };
    let mut abb = TripletBuilder::new(nb, nb);
    for t in a.triplet_iter() {
        if t.row < nb && t.col < nb {
            abb.push(t.row, t.col, *t.val);
        }
    }
    let az = crate::sparse::sp_dense(&abb.build(), z.as_ref());
    let ar = z.transpose() * &az;
    let top = |m: &Mat<f64>| m.as_ref().submatrix(0, 0, nb, m.ncols()).to_owned();
    let br = z.transpose() * top(&plant.b);
    let bdr = z.transpose() * top(&plant.bd);
    let cr = plant.c.as_ref().submatrix(0, 0, plant.c.nrows(), nb) * &z;
    Ok(DiscretePlant {
        e: SysMat::Dense(Mat::identity(k, k)),
        a: SysMat::Dense(ar),
        b: br,
        bd: bdr,
        c: cr,
        n_states: k,
        n_aux: 0,
        pressure: PressureTreatment::Nullspace,
        basis: Some(z),
        fem_mass: plant.fem_mass.clone(),
        pressure_blocks: plant.pressure_blocks.clone(),
    })
}

/// `Z R⁻¹` with `ZᵀMZ = RᵀR`.
fn mass_orthonormalize(m: &SpMat, z: Mat<f64>) -> Result<Mat<f64>> {
    let mz = crate::sparse::sp_dense(m, z.as_ref());
    let g = z.transpose() * &mz;
    let g = crate::linalg::symmetrize(g.as_ref());
    let llt = g
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Assembly("projected mass matrix is not positive definite".into()))?;
    // Z L⁻ᵀ
    let l = llt.L().to_owned();
    let lt_inv = crate::linalg::inverse(l.transpose());
    Ok(&z * &lt_inv)
}

/// Actuator and sensor dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct ActuatorSensor {
    pub a_a: Mat<f64>,
    pub b_a: Mat<f64>,
    pub c_a: Mat<f64>,
    pub a_s: Mat<f64>,
    pub b_s: Mat<f64>,
    pub c_s: Mat<f64>,
}

impl ActuatorSensor {
    /// `A = −I`, `B = C = I` for both blocks.
    pub fn first_order(m: usize, p: usize) -> Self {
        ActuatorSensor {
            a_a: -Mat::<f64>::identity(m, m),
            b_a: Mat::identity(m, m),
            c_a: Mat::identity(m, m),
            a_s: -Mat::<f64>::identity(p, p),
            b_s: Mat::identity(p, p),
            c_s: Mat::identity(p, p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let na = self.a_a.nrows();
        let ns = self.a_s.nrows();
        if na == 0 || ns == 0 {
            return Err(Error::Invariant(
                "actuator and sensor blocks must be non-empty: the controller acts through them".into(),
            ));
        }
        let checks = [
            ("A_a columns", na, self.a_a.ncols()),
            ("B_a rows", na, self.b_a.nrows()),
            ("C_a columns", na, self.c_a.ncols()),
            ("A_s columns", ns, self.a_s.ncols()),
            ("B_s rows", ns, self.b_s.nrows()),
            ("C_s columns", ns, self.c_s.ncols()),
        ];
        for (what, exp, got) in checks {
            if exp != got {
                return Err(Error::dim(what, exp, got));
            }
        }
        Ok(())
    }

    pub fn actuator_transfer(&self, s: c64) -> Result<Mat<c64>> {
        let n = self.a_a.nrows();
        transfer_function(
            &SysMat::Dense(Mat::identity(n, n)),
            &SysMat::Dense(self.a_a.clone()),
            self.b_a.as_ref(),
            self.c_a.as_ref(),
            s,
        )
    }

    pub fn sensor_transfer(&self, s: c64) -> Result<Mat<c64>> {
        let n = self.a_s.nrows();
        transfer_function(
            &SysMat::Dense(Mat::identity(n, n)),
            &SysMat::Dense(self.a_s.clone()),
            self.b_s.as_ref(),
            self.c_s.as_ref(),
            s,
        )
    }
}

/// Block offsets of the cascade state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeLayout {
    pub plant: usize,
    pub plant_aux: usize,
    pub actuator: usize,
    pub sensor: usize,
}

impl CascadeLayout {
    pub fn plant_len(&self) -> usize {
        self.plant + self.plant_aux
    }

    pub fn actuator_offset(&self) -> usize {
        self.plant_len()
    }

    pub fn sensor_offset(&self) -> usize {
        self.plant_len() + self.actuator
    }

    pub fn dim(&self) -> usize {
        self.plant_len() + self.actuator + self.sensor
    }
}

#[derive(Clone, Debug)]
pub struct CascadeSystem {
    pub e: SysMat,
    pub a: SysMat,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
    pub bd: Mat<f64>,
    /// Feedthrough of the disturbance; zero in the physical variables.
    pub dd: Mat<f64>,
    /// `u_b = C_a x_a` read off the cascade state.
    pub boundary_map: Mat<f64>,
    pub layout: CascadeLayout,
    pub pressure: PressureTreatment,
}

/// Wires actuator → plant → sensor.
pub fn couple_cascade(plant: &DiscretePlant, acts: &ActuatorSensor) -> Result<CascadeSystem> {
    acts.validate()?;
    let (na, ns) = (acts.a_a.nrows(), acts.a_s.nrows());
    if acts.c_a.nrows() != plant.inputs() {
        return Err(Error::dim("C_a rows vs plant inputs", plant.inputs(), acts.c_a.nrows()));
    }
    if acts.b_s.ncols() != plant.outputs() {
        return Err(Error::dim("B_s columns vs plant outputs", plant.outputs(), acts.b_s.ncols()));
    }
    let layout = CascadeLayout {
        plant: plant.n_states,
        plant_aux: plant.n_aux,
        actuator: na,
        sensor: ns,
    };
    let nbp = layout.plant_len();
    let n = layout.dim();
    let (oa, os) = (layout.actuator_offset(), layout.sensor_offset());
    let bca = &plant.b * &acts.c_a;
    let bsc = &acts.b_s * &plant.c;

    let (e, a) = if plant.a.is_sparse() {
        let (SysMat::Sparse(pe), SysMat::Sparse(pa)) = (&plant.e, &plant.a) else {
            return Err(Error::Invariant("sparse plant with dense mass matrix".into()));
        };
        let mut e = TripletBuilder::new(n, n);
        e.add_sparse(pe, 0, 0, 1.0);
        for i in nbp..n {
            e.push(i, i, 1.0);
        }
        let mut a = TripletBuilder::new(n, n);
        a.add_sparse(pa, 0, 0, 1.0);
        a.add_dense(bca.as_ref(), 0, oa, 1.0);
        a.add_dense(acts.a_a.as_ref(), oa, oa, 1.0);
        a.add_dense(bsc.as_ref(), os, 0, 1.0);
        a.add_dense(acts.a_s.as_ref(), os, os, 1.0);
        (SysMat::Sparse(e.build()), SysMat::Sparse(a.build()))
    } else {
        let mut e = Mat::identity(n, n);
        e.as_mut().submatrix_mut(0, 0, nbp, nbp).copy_from(&plant.e.to_dense());
        let pa = plant.a.to_dense();
        let a = crate::linalg::block(
            &[nbp, na, ns],
            &[nbp, na, ns],
            &[
                &[Some(pa.as_ref()), Some(bca.as_ref()), None],
                &[None, Some(acts.a_a.as_ref()), None],
                &[Some(bsc.as_ref()), None, Some(acts.a_s.as_ref())],
            ],
        );
        (SysMat::Dense(e), SysMat::Dense(a))
    };
    let m = acts.b_a.ncols();
    let mut b = Mat::zeros(n, m);
    b.as_mut().submatrix_mut(oa, 0, na, m).copy_from(&acts.b_a);
    let p = acts.c_s.nrows();
    let mut c = Mat::zeros(p, n);
    c.as_mut().submatrix_mut(0, os, p, ns).copy_from(&acts.c_s);
    let md = plant.bd.ncols();
    let mut bd = Mat::zeros(n, md);
    bd.as_mut().submatrix_mut(0, 0, nbp, md).copy_from(&plant.bd);
    let mut boundary_map = Mat::zeros(plant.inputs(), n);
    boundary_map.as_mut().submatrix_mut(0, oa, plant.inputs(), na).copy_from(&acts.c_a);
    Ok(CascadeSystem {
        e,
        a,
        b,
        c,
        bd,
        dd: Mat::zeros(p, md),
        boundary_map,
        layout,
        pressure: plant.pressure,
    })
}

impl CascadeSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `C (sE − A)⁻¹ B`
    pub fn transfer(&self, s: c64) -> Result<Mat<c64>> {
        transfer_function(&self.e, &self.a, self.b.as_ref(), self.c.as_ref(), s)
    }

    /// Matrix Market files `E.mtx`, `A.mtx`, `B.mtx`, `C.mtx`, `Bd.mtx` plus
    /// `manifest.txt` with dimensions and block offsets.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_sysmat(&dir.join("E.mtx"), &self.e)?;
        crate::io::write_sysmat(&dir.join("A.mtx"), &self.a)?;
        for (name, m) in [("B", &self.b), ("C", &self.c), ("Bd", &self.bd)] {
            crate::io::write_dense_mtx(&dir.join(format!("{name}.mtx")), m.as_ref())?;
        }
        let l = self.layout;
        let mut man = String::new();
        let _ = writeln!(man, "dim {}", self.dim());
        let _ = writeln!(man, "inputs {}", self.inputs());
        let _ = writeln!(man, "outputs {}", self.outputs());
        let _ = writeln!(man, "disturbances {}", self.bd.ncols());
        let _ = writeln!(man, "plant 0 {}", l.plant);
        let _ = writeln!(man, "plant_aux {} {}", l.plant, l.plant_aux);
        let _ = writeln!(man, "actuator {} {}", l.actuator_offset(), l.actuator);
        let _ = writeln!(man, "sensor {} {}", l.sensor_offset(), l.sensor);
        let _ = writeln!(man, "pressure {:?}", self.pressure);
        std::fs::write(dir.join("manifest.txt"), man)?;
        Ok(())
    }

    /// Dense copies of the diagonal blocks of `A` (plant, actuator, sensor),
    /// used by the assumption checks.
    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Mat<f64> {
        match &self.a {
            SysMat::Dense(a) => a.as_ref().submatrix(rows.0, cols.0, rows.1, cols.1).to_owned(),
            SysMat::Sparse(a) => {
                let mut out = Mat::zeros(rows.1, cols.1);
                for t in a.triplet_iter() {
                    if (rows.0..rows.0 + rows.1).contains(&t.row) && (cols.0..cols.0 + cols.1).contains(&t.col) {
                        out[(t.row - rows.0, t.col - cols.0)] += *t.val;
                    }
                }
                out
            }
        }
    }
}

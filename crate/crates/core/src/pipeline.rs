//! Stage orchestration: steady state → analysis → synthesis → simulation,
//! with intermediates cached under `<out>/cache/<stage>-<hash>/`.
//!
//! A cache key is the SHA-256 of the scenario sections a stage reads, so
//! editing the signals never invalidates a steady state, and so on.

use std::path::{Path, PathBuf};

use faer::c64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{cascade_assumption_check, unstable_spectrum, AssumptionReport, SpectralReport};
use crate::cascade::{couple_cascade, eliminate_pressure, linearize, CascadeSystem, DiscretePlant, PressureTreatment};
use crate::error::{Error, Result};
use crate::fem::{assemble_forms, FemSpaces};
use crate::io::field_csv;
use crate::linalg::{spectral_abscissa, SysMat};
use crate::mesh::build_mesh;
use crate::scenario::RoomScenario;
use crate::sim::{
    assemble_closed_loop, error_decay_rate, error_metrics, integrate, ClosedLoopSystem, ClosedLoopTrajectory,
    IntegrationOptions,
};
use crate::steady::{solve_continuation, Continuation, SteadyState};
use crate::synthesis::{
    assemble_controller, balanced_truncate, build_internal_model, compute_gains, design_closed_loop, hinf_grid_error,
    observer_system, ControllerRealization, DesignModel,
};

/// Bumped whenever a stage's numerics change so stale caches are ignored.
const CACHE_VERSION: &str = "1";

fn hash_of(stage: &str, parts: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_VERSION);
    h.update(stage);
    for p in parts {
        h.update(p.len().to_le_bytes());
        h.update(p);
    }
    format!("{:x}", h.finalize())[..16].to_string()
}

fn toml_of<T: Serialize>(v: &T) -> String {
    // Top-level arrays are not valid TOML documents, so wrap every part.
    #[derive(Serialize)]
    struct Part<'a, T> {
        v: &'a T,
    }
    toml::to_string(&Part { v }).expect("stage inputs serialize")
}

fn write_toml<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, toml::to_string_pretty(v).expect("summaries serialize"))?;
    Ok(())
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        reason: e.message().to_string(),
    })
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            std::fs::copy(entry.path(), to.join(entry.file_name()))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadySummary {
    pub mesh: usize,
    pub initial_history: Vec<f64>,
    pub target_history: Vec<f64>,
    pub total_iterations: usize,
    pub final_residual: f64,
    /// `‖D w_ss‖₂`
    pub divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub mesh: usize,
    pub penalty: f64,
    pub method: String,
    pub unstable: Vec<Eigenpair>,
    pub assumptions_pass: bool,
    pub assumptions: AssumptionReport,
}

impl AnalysisSummary {
    pub fn eigenvalues(&self) -> Vec<c64> {
        self.unstable.iter().map(|e| c64::new(e.re, e.im)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub mesh: usize,
    pub design_dim: usize,
    pub dim_z: usize,
    pub dim_zim: usize,
    pub order: usize,
    pub observer_residual: f64,
    pub control_residual: f64,
    pub observer_sign_iterations: usize,
    pub control_sign_iterations: usize,
    pub observer_abscissa: f64,
    pub control_abscissa: f64,
    pub hankel: Vec<f64>,
    pub error_bound: f64,
    /// Largest singular value of the reduction error over the frequency grid.
    pub hinf_grid_error: f64,
    pub grid_points: usize,
    /// Abscissa of the closed loop of controller and design model.
    pub design_closed_loop_abscissa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub mesh: usize,
    pub penalty: f64,
    pub dt: f64,
    pub t_end: f64,
    pub method: String,
    pub closed_loop_dim: usize,
    /// Eigenvalues of the simulated closed loop found in the closed right half-plane.
    pub closed_loop_unstable: Vec<Eigenpair>,
    pub metric_window: [f64; 2],
    pub sup_error: Vec<f64>,
    pub rms_error: Vec<f64>,
    pub reference_sup: Vec<f64>,
    pub fit_window: [f64; 2],
    pub decay_rate: f64,
}

impl SimulationSummary {
    /// Largest `sup|e_i| / sup|y_ref,i|` over the channels.
    pub fn worst_relative_error(&self) -> f64 {
        self.sup_error
            .iter()
            .zip(&self.reference_sup)
            .map(|(e, r)| e / r.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct FullSummary {
    pub steady: SteadySummary,
    pub analysis: AnalysisSummary,
    pub synthesis: SynthesisSummary,
    pub simulation: SimulationSummary,
}

/// Steady state at one mesh, with the spaces it lives on.
pub struct SteadyStage {
    pub spaces: FemSpaces,
    pub continuation: Continuation,
    pub summary: SteadySummary,
}

pub struct Pipeline {
    pub scenario: RoomScenario,
    pub out: PathBuf,
}

impl Pipeline {
    /// Creates the output directory and writes the normalized scenario.
    pub fn new(scenario: RoomScenario, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out.join("cache"))?;
        std::fs::write(out.join("scenario.toml"), scenario.normalized_dump())?;
        Ok(Pipeline {
            scenario,
            out: out.to_path_buf(),
        })
    }

    fn stage_dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.out.join(name);
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn cache_dir(&self, stage: &str, key: &str) -> PathBuf {
        self.out.join("cache").join(format!("{stage}-{key}"))
    }

    fn steady_key(&self, mesh: usize) -> String {
        let s = &self.scenario;
        hash_of(
            "steady",
            &[
                toml_of(&s.geometry),
                toml_of(&s.physics),
                toml_of(&s.forcing),
                toml_of(&s.newton),
                mesh.to_string(),
            ],
        )
    }

    fn spaces(&self, mesh: usize) -> Result<FemSpaces> {
        Ok(FemSpaces::new(&build_mesh(&self.scenario.room(), mesh)?))
    }

    /// Two-stage Newton continuation at mesh `n`, cached.
    pub fn steady_at(&self, mesh: usize) -> Result<SteadyStage> {
        let s = &self.scenario;
        let spaces = self.spaces(mesh)?;
        let dir = self.cache_dir("steady", &self.steady_key(mesh));
        let summary_path = dir.join("summary.toml");
        if summary_path.exists() {
            let summary: SteadySummary = read_toml(&summary_path)?;
            let mut initial = SteadyState::load_csv(&dir.join("initial.csv"), &spaces)?;
            let mut target = SteadyState::load_csv(&dir.join("target.csv"), &spaces)?;
            initial.history = summary.initial_history.clone();
            target.history = summary.target_history.clone();
            log::info!("steady state (h = 1/{mesh}) from cache");
            return Ok(SteadyStage {
                spaces,
                continuation: Continuation { initial, target },
                summary,
            });
        }
        log::info!("solving steady state (h = 1/{mesh})");
        let cont = solve_continuation(&spaces, &s.physics, &s.forcing.initial, &s.forcing.target, s.newton)?;
        let forms = assemble_forms(&spaces, &s.physics, None)?;
        let summary = SteadySummary {
            mesh,
            initial_history: cont.initial.history.clone(),
            target_history: cont.target.history.clone(),
            total_iterations: cont.total_iterations(),
            final_residual: cont.target.residual_norm,
            divergence: cont.target.divergence_norm(&forms),
        };
        std::fs::create_dir_all(&dir)?;
        cont.initial.save_csv(&dir.join("initial.csv"), &spaces)?;
        cont.target.save_csv(&dir.join("target.csv"), &spaces)?;
        write_toml(&summary_path, &summary)?;
        Ok(SteadyStage {
            spaces,
            continuation: cont,
            summary,
        })
    }

    /// `steady`: steady state on the simulation mesh plus nodal field tables.
    pub fn steady(&self) -> Result<SteadySummary> {
        self.run_steady().map_err(|e| e.in_stage("steady"))
    }

    fn run_steady(&self) -> Result<SteadySummary> {
        let st = self.steady_at(self.scenario.discretization.simulation_mesh)?;
        let dir = self.stage_dir("steady")?;
        let sp = &st.spaces;
        let target = &st.continuation.target;
        target.save_csv(&dir.join("target.csv"), sp)?;
        st.continuation.initial.save_csv(&dir.join("initial.csv"), sp)?;
        write_fields(&dir, "steady", sp, &target.w, &target.t)?;
        write_toml(&dir.join("summary.toml"), &st.summary)?;
        Ok(st.summary)
    }

    /// Linearization at the target steady state, pressure retained.
    pub fn plant(&self, st: &SteadyStage) -> Result<DiscretePlant> {
        let s = &self.scenario;
        linearize(
            &st.spaces,
            &s.physics,
            &st.continuation.target,
            &s.controls,
            &s.disturbances,
            &s.observations,
        )
    }

    fn penalty(&self) -> PressureTreatment {
        PressureTreatment::Penalty {
            epsilon: self.scenario.discretization.penalty,
        }
    }

    /// Penalty plant and simulated cascade on the simulation mesh.
    pub fn simulation_models(&self) -> Result<(SteadyStage, DiscretePlant, CascadeSystem)> {
        let st = self.steady_at(self.scenario.discretization.simulation_mesh)?;
        let plant = eliminate_pressure(&self.plant(&st)?, self.penalty())?;
        let cascade = couple_cascade(&plant, &self.scenario.simulated_actuator_sensor()?)?;
        Ok((st, plant, cascade))
    }

    /// `analyze`: unstable spectrum of the simulation plant and the cascade
    /// assumption checks.
    pub fn analyze(&self) -> Result<AnalysisSummary> {
        self.run_analyze().map_err(|e| e.in_stage("analyze"))
    }

    fn run_analyze(&self) -> Result<AnalysisSummary> {
        let s = &self.scenario;
        let mesh = s.discretization.simulation_mesh;
        let key = hash_of(
            "analyze",
            &[
                self.steady_key(mesh),
                toml_of(&s.controls),
                toml_of(&s.disturbances),
                toml_of(&s.observations),
                toml_of(&s.actuators),
                toml_of(&s.signals),
                toml_of(&s.analysis),
                toml_of(&s.perturbation),
                s.discretization.penalty.to_string(),
            ],
        );
        let cache = self.cache_dir("analyze", &key);
        let out = self.stage_dir("analysis")?;
        if !cache.join("summary.toml").exists() {
            let (_, plant, cascade) = self.simulation_models()?;
            let spec = unstable_spectrum(&plant.e, &plant.a, 0.0, &s.analysis)?;
            let acts = s.simulated_actuator_sensor()?;
            let assumptions = cascade_assumption_check(&plant, &acts, &s.signals.frequencies, &s.analysis)?;
            let summary = AnalysisSummary {
                mesh,
                penalty: s.discretization.penalty,
                method: spec.method.clone(),
                unstable: pairs(&spec),
                assumptions_pass: assumptions.all_pass(),
                assumptions,
            };
            std::fs::create_dir_all(&cache)?;
            std::fs::write(cache.join("eigenvalues.csv"), spec.to_csv())?;
            std::fs::write(cache.join("assumptions.csv"), summary.assumptions.to_csv())?;
            cascade.export(&cache.join("cascade"))?;
            write_toml(&cache.join("summary.toml"), &summary)?;
        }
        copy_dir(&cache, &out)?;
        copy_dir(&cache.join("cascade"), &out.join("cascade"))?;
        let summary: AnalysisSummary = read_toml(&cache.join("summary.toml"))?;
        if !summary.assumptions_pass {
            log::warn!("cascade assumption checks failed: see analysis/assumptions.csv");
        }
        Ok(summary)
    }

    /// Dense design model: nullspace plant on the synthesis mesh with the
    /// nominal actuators and sensors.
    pub fn design_model(&self) -> Result<(CascadeSystem, DesignModel)> {
        let st = self.steady_at(self.scenario.discretization.synthesis_mesh)?;
        let plant = eliminate_pressure(&self.plant(&st)?, PressureTreatment::Nullspace)?;
        let cascade = couple_cascade(&plant, &self.scenario.actuator_sensor()?)?;
        let n = cascade.dim();
        let SysMat::Dense(e) = &cascade.e else {
            return Err(Error::Invariant("projected cascade should be dense".into()));
        };
        let dev = (e - faer::Mat::<f64>::identity(n, n)).norm_max();
        if dev > 1e-8 {
            return Err(Error::Invariant(format!("projected mass matrix deviates from I by {dev:e}")));
        }
        let model = DesignModel {
            a: cascade.a.to_dense(),
            b: cascade.b.clone(),
            c: cascade.c.clone(),
        };
        Ok((cascade, model))
    }

    fn synthesis_key(&self) -> String {
        let s = &self.scenario;
        hash_of(
            "synthesize",
            &[
                self.steady_key(s.discretization.synthesis_mesh),
                toml_of(&s.controls),
                toml_of(&s.disturbances),
                toml_of(&s.observations),
                toml_of(&s.actuators),
                toml_of(&s.signals.spec()),
                toml_of(&s.synthesis),
            ],
        )
    }

    /// `synthesize`: Riccati gains, balanced truncation and the controller,
    /// written to `<out>/controller/`.
    pub fn synthesize(&self) -> Result<SynthesisSummary> {
        self.run_synthesize().map_err(|e| e.in_stage("synthesize"))
    }

    fn run_synthesize(&self) -> Result<SynthesisSummary> {
        let s = &self.scenario;
        let cache = self.cache_dir("synthesize", &self.synthesis_key());
        if !cache.join("summary.toml").exists() {
            let t0 = std::time::Instant::now();
            let (_, model) = self.design_model()?;
            let p = model.c.nrows();
            let im = build_internal_model(&s.signals.spec(), p)?;
            log::info!("design model of order {} ready after {:.1?}", model.a.nrows(), t0.elapsed());
            let gains = compute_gains(&model, &im, &s.synthesis)?;
            log::info!("Riccati gains after {:.1?}", t0.elapsed());
            let (al, bl, k2) = observer_system(&model, &gains);
            let bt = balanced_truncate(al.as_ref(), bl.as_ref(), k2.as_ref(), s.synthesis.order)?;
            log::info!("balanced truncation after {:.1?}", t0.elapsed());
            let ctrl = assemble_controller(&im, gains.k1.as_ref(), &bt)?;
            let closed = spectral_abscissa(design_closed_loop(&model, &ctrl).as_ref())?;
            let grid = frequency_grid();
            let err = hinf_grid_error(
                (al.as_ref(), bl.as_ref(), k2.as_ref()),
                (bt.a.as_ref(), bt.b.as_ref(), bt.c.as_ref()),
                &grid,
            )?;
            log::info!("controller verified after {:.1?}", t0.elapsed());
            let summary = SynthesisSummary {
                mesh: s.discretization.synthesis_mesh,
                design_dim: model.a.nrows(),
                dim_z: ctrl.dim(),
                dim_zim: ctrl.dim_zim,
                order: ctrl.order,
                observer_residual: gains.observer.residual,
                control_residual: gains.control.residual,
                observer_sign_iterations: gains.observer.sign_iterations,
                control_sign_iterations: gains.control.sign_iterations,
                observer_abscissa: gains.observer_abscissa,
                control_abscissa: gains.control_abscissa,
                hankel: bt.hankel.clone(),
                error_bound: bt.error_bound,
                hinf_grid_error: err,
                grid_points: grid.len(),
                design_closed_loop_abscissa: closed,
            };
            ctrl.save(&cache.join("controller"))?;
            write_toml(&cache.join("summary.toml"), &summary)?;
        }
        copy_dir(&cache.join("controller"), &self.out.join("controller"))?;
        let out = self.stage_dir("synthesis")?;
        std::fs::copy(cache.join("summary.toml"), out.join("summary.toml"))?;
        read_toml(&cache.join("summary.toml"))
    }

    /// Controller previously written by `synthesize`.
    pub fn controller(&self) -> Result<ControllerRealization> {
        ControllerRealization::load(&self.out.join("controller"))
    }

    /// Closed loop of the simulated cascade and the stored controller, with
    /// the initial state `(w_i − w_ss, T_i − T_ss)` for the plant.
    pub fn closed_loop(&self) -> Result<(SteadyStage, DiscretePlant, ClosedLoopSystem, Vec<f64>)> {
        let ctrl = self.controller()?;
        let (st, plant, cascade) = self.simulation_models()?;
        let cl = assemble_closed_loop(&cascade, &ctrl)?;
        let (i, t) = (&st.continuation.initial, &st.continuation.target);
        let fields: Vec<f64> = i.w.iter().zip(&t.w).chain(i.t.iter().zip(&t.t)).map(|(a, b)| a - b).collect();
        let mut x0 = plant.state_from_fields(&fields)?;
        x0.resize(cl.dim(), 0.0);
        Ok((st, plant, cl, x0))
    }

    /// `simulate`: trajectory, field snapshots and error metrics.
    pub fn simulate(&self) -> Result<SimulationSummary> {
        self.run_simulate().map_err(|e| e.in_stage("simulate"))
    }

    fn run_simulate(&self) -> Result<SimulationSummary> {
        let s = &self.scenario;
        let (st, plant, cl, x0) = self.closed_loop()?;
        let opts = IntegrationOptions {
            t_end: s.simulation.t_end,
            dt: s.simulation.dt,
            snapshots: s.simulation.snapshots.clone(),
        };
        let traj = integrate(&cl, &s.simulated_signals(), &x0, &opts)?;
        let dir = self.stage_dir("simulation")?;
        std::fs::write(dir.join("trajectory.csv"), traj.to_csv())?;
        for (ts, x) in &traj.snapshots {
            let f = plant.fields_from_state(&x[..plant.dim()]);
            let nv = st.spaces.n_v();
            write_fields(&dir, &format!("snapshot_t{ts}"), &st.spaces, &f[..nv], &f[nv..])?;
        }
        let mut stability = s.analysis.clone();
        if !stability.shifts.iter().any(|z| z == &[0.0, 2.0]) {
            stability.shifts.push([0.0, 2.0]);
        }
        let spec = unstable_spectrum(&SysMat::Sparse(cl.e.clone()), &SysMat::Sparse(cl.a.clone()), 0.0, &stability)?;
        let summary = summarize(s, &traj, &cl, pairs(&spec))?;
        write_toml(&dir.join("summary.toml"), &summary)?;
        Ok(summary)
    }

    /// `full`: every stage in order, reusing cached intermediates.
    pub fn full(&self) -> Result<FullSummary> {
        let steady = self.steady()?;
        let analysis = self.analyze()?;
        let synthesis = self.synthesize()?;
        let simulation = self.simulate()?;
        Ok(FullSummary {
            steady,
            analysis,
            synthesis,
            simulation,
        })
    }
}

/// 201 log-spaced frequencies on `[10⁻³, 10³]`.
pub fn frequency_grid() -> Vec<f64> {
    (0..=200).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 200.0)).collect()
}

fn pairs(spec: &SpectralReport) -> Vec<Eigenpair> {
    spec.eigenvalues
        .iter()
        .zip(&spec.residuals)
        .map(|(l, r)| Eigenpair {
            re: l.re,
            im: l.im,
            residual: *r,
        })
        .collect()
}

fn summarize(
    s: &RoomScenario,
    traj: &ClosedLoopTrajectory,
    cl: &ClosedLoopSystem,
    unstable: Vec<Eigenpair>,
) -> Result<SimulationSummary> {
    let metrics = error_metrics(traj, s.simulation.metric_window)?;
    Ok(SimulationSummary {
        mesh: s.discretization.simulation_mesh,
        penalty: s.discretization.penalty,
        dt: traj.dt,
        t_end: s.simulation.t_end,
        method: traj.method.clone(),
        closed_loop_dim: cl.dim(),
        closed_loop_unstable: unstable,
        metric_window: metrics.window,
        sup_error: metrics.sup,
        rms_error: metrics.rms,
        reference_sup: traj.reference_sup(),
        fit_window: s.simulation.fit_window,
        decay_rate: error_decay_rate(traj, s.simulation.fit_window)?,
    })
}

/// `<prefix>_v1.csv`, `<prefix>_v2.csv`, `<prefix>_theta.csv` with nodal values.
fn write_fields(dir: &Path, prefix: &str, spaces: &FemSpaces, v: &[f64], t: &[f64]) -> Result<()> {
    let [v1, v2] = spaces.velocity_nodal(v);
    let th = spaces.temperature_nodal(t);
    for (name, vals) in [("v1", &v1), ("v2", &v2), ("theta", &th)] {
        std::fs::write(dir.join(format!("{prefix}_{name}.csv")), field_csv(&spaces.node_coords, vals))?;
    }
    Ok(())
}

//! Explicit central-difference integrator for bar-element crash models.
//!
//! The scheme is velocity-Verlet with a per-step critical timestep, 1-D
//! radial-return plasticity on each bar, penalty contact against rigid walls
//! with a Coulomb-capped tangential penalty, optional erosion, and nodal mass
//! scaling above a timestep floor. Energies are accumulated from trapezoidal
//! nodal work so that `E_kin + E_int + E_cont - W_ext` stays balanced.

mod contact;
mod element;
mod explicit;
mod timestep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{Assembly, AssemblyError};
use crate::vec3::{self, Vec3};

pub use contact::{contact_forces, coulomb_cap, default_penalty, wall_penetration};
pub use element::{internal_forces, radial_return, ReturnMapResult};
pub use explicit::{run_explicit, ExplicitSolver};
pub use timestep::{apply_mass_scaling, critical_timestep};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("numerical blow-up at step {step} (t = {time_ms} ms)")]
    NumericalBlowup { step: u64, time_ms: f64, last_frame: Option<Box<Frame>> },
    #[error("all elements eroded")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PenaltyRule {
    /// `max E·A/L` over all elements.
    ElementStiffness,
    Fixed { k_kn_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub t_end_ms: f64,
    pub dt_anim_ms: f64,
    pub dt_out_ms: f64,
    pub dt_scale: f64,
    pub dt_min_ms: f64,
    /// Overrides the critical-timestep estimate when set.
    pub dt_fixed_ms: Option<f64>,
    pub penalty: PenaltyRule,
    /// Velocity magnitude (mm/ms) treated as divergence.
    pub blowup_velocity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_end_ms: 20.0,
            dt_anim_ms: 1.0,
            dt_out_ms: 0.1,
            dt_scale: 0.9,
            dt_min_ms: 1e-3,
            dt_fixed_ms: None,
            penalty: PenaltyRule::ElementStiffness,
            blowup_velocity: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let err = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.t_end_ms > 0.0) {
            return err("termination time must be positive");
        }
        if !(self.dt_anim_ms > 0.0) || !(self.dt_out_ms > 0.0) {
            return err("output intervals must be positive");
        }
        if !(self.dt_scale > 0.0 && self.dt_scale <= 1.0) {
            return err("timestep scale must lie in (0, 1]");
        }
        if !(self.dt_min_ms > 0.0) {
            return err("timestep floor must be positive");
        }
        if let Some(dt) = self.dt_fixed_ms {
            if !(dt > 0.0) {
                return err("fixed timestep must be positive");
            }
        }
        if let PenaltyRule::Fixed { k_kn_mm } = self.penalty {
            if !(k_kn_mm > 0.0) {
                return err("penalty stiffness must be positive");
            }
        }
        Ok(())
    }
}

/// Accumulated energies (kJ).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub kinetic: f64,
    pub internal: f64,
    pub contact: f64,
    pub hourglass: f64,
    pub plastic_work: f64,
    pub external_work: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.contact + self.hourglass
    }
}

/// Mutable nodal and element state of one run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub time: f64,
    pub step: u64,
    pub u: Vec<Vec3>,
    pub v: Vec<Vec3>,
    /// Current nodal masses including mass-scaling additions.
    pub mass: Vec<f64>,
    pub added_mass: f64,
    pub eps_p: Vec<f64>,
    pub stress: Vec<f64>,
    pub eroded: Vec<bool>,
    /// Current element length, used for incremental strains.
    pub length: Vec<f64>,
    /// Density multiplier applied by mass scaling.
    pub density_scale: Vec<f64>,
    pub energies: Energies,
}

impl SolverState {
    pub fn new(asm: &Assembly) -> Self {
        let ne = asm.elements.len();
        let mask = asm.fixed_mask();
        let mut v = asm.initial_velocities();
        for (vi, m) in v.iter_mut().zip(&mask) {
            for k in 0..3 {
                if m[k] {
                    vi[k] = 0.0;
                }
            }
        }
        SolverState {
            time: 0.0,
            step: 0,
            u: vec![[0.0; 3]; asm.nodes.len()],
            v,
            mass: asm.lumped_masses(),
            added_mass: 0.0,
            eps_p: vec![0.0; ne],
            stress: vec![0.0; ne],
            eroded: vec![false; ne],
            length: asm.elements.iter().map(|e| asm.reference_length(e)).collect(),
            density_scale: vec![1.0; ne],
            energies: Energies::default(),
        }
    }

    pub fn position(&self, asm: &Assembly, i: usize) -> Vec3 {
        vec3::add(asm.nodes[i].x, self.u[i])
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.v.iter().zip(&self.mass).map(|(v, m)| 0.5 * m * vec3::dot(*v, *v)).sum()
    }
}

/// One animation frame: nodal displacement/velocity and element state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time_ms: f64,
    pub u: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub stress: Vec<f64>,
    pub eps_p: Vec<f64>,
    pub eroded: Vec<bool>,
}

/// Lagrangian field trajectory: fixed ids and connectivity, per-frame state.
/// Deformed coordinates are `X(t) = X⁽⁰⁾ + U(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub x0: Vec<Vec3>,
    pub node_ids: Vec<u32>,
    pub element_ids: Vec<u32>,
    pub part_ids: Vec<u32>,
    pub dt_anim: f64,
    pub frames: Vec<Frame>,
}

impl FieldTrajectory {
    pub fn positions(&self, frame: usize) -> Vec<Vec3> {
        self.x0.iter().zip(&self.frames[frame].u).map(|(x, u)| vec3::add(*x, *u)).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.x0.len()
    }

    pub fn n_elements(&self) -> usize {
        self.element_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    EndTime,
    AllEroded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    pub cause: TerminationCause,
    pub final_time_ms: f64,
    pub steps: u64,
    /// Steps whose critical timestep fell below the floor.
    pub floor_steps: u64,
    pub added_mass_fraction: f64,
    /// `(E_total(t) − E_total(0) − W_ext) / E_total(0)` at the final step;
    /// positive means energy was gained.
    pub energy_error_final: f64,
    pub energy_error_max_abs: f64,
    pub hourglass_ratio: f64,
    pub eroded_elements: usize,
    pub dt_smallest_ms: f64,
}

impl TerminationReport {
    pub fn floor_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.floor_steps as f64 / self.steps as f64
        }
    }
}

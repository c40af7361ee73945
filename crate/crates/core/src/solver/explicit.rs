use crate::assembly::Assembly;
use crate::signals::TimeHistories;
use crate::vec3::{self, Vec3};

use super::contact::{contact_forces, wall_stiffness};
use super::element::internal_forces;
use super::timestep::{apply_mass_scaling, critical_timestep};
use super::{
    Energies, FieldTrajectory, Frame, SolverConfig, SolverError, SolverState, TerminationCause,
    TerminationReport,
};

/// Relative slack when matching output times against step ends.
const TIME_TOL: f64 = 1e-9;
/// Relative band above the timestep floor counted as a floor step.
const FLOOR_TOL: f64 = 1e-6;

/// State captured at the end of a step, used to interpolate outputs.
#[derive(Clone)]
struct Snapshot {
    t: f64,
    u: Vec<Vec3>,
    v: Vec<Vec3>,
    stress: Vec<f64>,
    eps_p: Vec<f64>,
    eroded: Vec<bool>,
    f_wall: Vec3,
    energies: Energies,
    accel: f64,
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

fn lerp3(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [lerp(a[0], b[0], s), lerp(a[1], b[1], s), lerp(a[2], b[2], s)]
}

fn interp_frame(a: &Snapshot, b: &Snapshot, s: f64, time: f64) -> Frame {
    Frame {
        time_ms: time,
        u: a.u.iter().zip(&b.u).map(|(x, y)| lerp3(*x, *y, s)).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| lerp3(*x, *y, s)).collect(),
        stress: a.stress.iter().zip(&b.stress).map(|(x, y)| lerp(*x, *y, s)).collect(),
        eps_p: a.eps_p.iter().zip(&b.eps_p).map(|(x, y)| lerp(*x, *y, s)).collect(),
        eroded: if s < 1.0 { a.eroded.clone() } else { b.eroded.clone() },
    }
}

/// Uniform output clock `k·Δ` for `k = 0..=n`.
struct Clock {
    interval: f64,
    next: u64,
    last: u64,
}

impl Clock {
    fn new(interval: f64, t_end: f64) -> Self {
        let last = (t_end / interval * (1.0 + TIME_TOL)).floor() as u64;
        Clock { interval, next: 0, last }
    }

    /// Output times falling in `(a.t, b.t]` (or at `b.t` for the first call).
    fn due(&mut self, t_a: f64, t_b: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let slack = TIME_TOL * self.interval;
        while self.next <= self.last {
            let tau = self.next as f64 * self.interval;
            if tau > t_b + slack {
                break;
            }
            let s = if t_b > t_a { ((tau - t_a) / (t_b - t_a)).clamp(0.0, 1.0) } else { 1.0 };
            out.push((tau, s));
            self.next += 1;
        }
        out
    }
}

/// Step-by-step driver. Most callers want [`run_explicit`].
pub struct ExplicitSolver<'a> {
    asm: &'a Assembly,
    cfg: SolverConfig,
    state: SolverState,
    mask: Vec<[bool; 3]>,
    stiffness: Vec<f64>,
    f_int: Vec<Vec3>,
    f_cont: Vec<Vec3>,
    f_ext: Vec<Vec3>,
    acc: Vec<Vec3>,
    reaction: Vec3,
    e0: f64,
    err_max: f64,
    floor_steps: u64,
    dt_smallest: f64,
    added_fraction: f64,
    finished: Option<TerminationCause>,
}

impl<'a> ExplicitSolver<'a> {
    pub fn new(asm: &'a Assembly, cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        asm.validate()?;
        if asm.elements.is_empty() && cfg.dt_fixed_ms.is_none() {
            return Err(SolverError::InvalidConfig("a model without elements needs a fixed timestep".into()));
        }
        let n = asm.nodes.len();
        let mut stiffness = Vec::with_capacity(asm.walls.len());
        for w in &asm.walls {
            stiffness.push(wall_stiffness(asm, w, cfg.penalty).ok_or_else(|| {
                SolverError::InvalidConfig("no penalty stiffness available for a wall".into())
            })?);
        }
        let mut f_ext = vec![[0.0; 3]; n];
        for l in &asm.loads {
            f_ext[l.node] = vec3::add(f_ext[l.node], l.force);
        }
        let state = SolverState::new(asm);
        let mut s = ExplicitSolver {
            asm,
            cfg: cfg.clone(),
            mask: asm.fixed_mask(),
            stiffness,
            f_int: vec![[0.0; 3]; n],
            f_cont: vec![[0.0; 3]; n],
            f_ext,
            acc: vec![[0.0; 3]; n],
            reaction: [0.0; 3],
            e0: 0.0,
            err_max: 0.0,
            floor_steps: 0,
            dt_smallest: f64::INFINITY,
            added_fraction: 0.0,
            finished: None,
            state,
        };
        let v0 = s.state.v.clone();
        s.update_forces(&v0, 0.0)?;
        s.state.energies.kinetic = s.state.kinetic_energy();
        s.e0 = s.state.energies.total();
        Ok(s)
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    /// Energy balance error relative to the initial total energy. When the
    /// model starts at rest the larger of `|W_ext|` and a tiny floor is used.
    pub fn energy_error(&self) -> f64 {
        let e = &self.state.energies;
        let drift = e.total() - self.e0 - e.external_work;
        let denom = if self.e0 > 0.0 { self.e0 } else { e.external_work.abs().max(1e-300) };
        if drift == 0.0 {
            0.0
        } else {
            drift / denom
        }
    }

    fn update_forces(&mut self, slip: &[Vec3], dt: f64) -> Result<(), SolverError> {
        internal_forces(self.asm, &mut self.state, &mut self.f_int)?;
        let r = contact_forces(self.asm, &self.state, slip, &self.stiffness, dt, &mut self.f_cont);
        self.reaction = r.iter().fold([0.0; 3], |acc, f| vec3::add(acc, *f));
        self.update_accelerations();
        Ok(())
    }

    fn update_accelerations(&mut self) {
        for i in 0..self.acc.len() {
            let f = vec3::add(vec3::add(self.f_int[i], self.f_cont[i]), self.f_ext[i]);
            let m = self.state.mass[i];
            for k in 0..3 {
                self.acc[i][k] = if self.mask[i][k] || m <= 0.0 { 0.0 } else { f[k] / m };
            }
        }
    }

    /// X component of the mass-weighted mean acceleration.
    fn rigid_body_accel(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (a, m) in self.acc.iter().zip(&self.state.mass) {
            num += m * a[0];
            den += m;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.state.time,
            u: self.state.u.clone(),
            v: self.state.v.clone(),
            stress: self.state.stress.clone(),
            eps_p: self.state.eps_p.clone(),
            eroded: self.state.eroded.clone(),
            f_wall: self.reaction,
            energies: self.state.energies,
            accel: self.rigid_body_accel(),
        }
    }

    fn last_frame(&self) -> Frame {
        let s = self.snapshot();
        interp_frame(&s, &s, 1.0, s.t)
    }

    fn blowup(&self) -> SolverError {
        SolverError::NumericalBlowup {
            step: self.state.step,
            time_ms: self.state.time,
            last_frame: Some(Box::new(self.last_frame())),
        }
    }

    fn choose_dt(&mut self) -> Result<f64, SolverError> {
        let dt = match self.cfg.dt_fixed_ms {
            Some(dt) => dt,
            None => {
                let dt = critical_timestep(self.asm, &self.state, self.cfg.dt_scale)?;
                // a step already scaled up to the floor still counts as pinned
                if dt < self.cfg.dt_min_ms * (1.0 + FLOOR_TOL) {
                    self.floor_steps += 1;
                    if dt < self.cfg.dt_min_ms {
                        self.added_fraction =
                            apply_mass_scaling(self.asm, &mut self.state, self.cfg.dt_scale, self.cfg.dt_min_ms);
                        self.update_accelerations();
                    }
                    self.cfg.dt_min_ms
                } else {
                    dt
                }
            }
        };
        Ok(dt.min(self.cfg.t_end_ms - self.state.time))
    }

    /// Advances one step. Returns `false` once the run has terminated.
    pub fn step(&mut self) -> Result<bool, SolverError> {
        if self.finished.is_some() {
            return Ok(false);
        }
        let remaining = self.cfg.t_end_ms - self.state.time;
        if remaining <= TIME_TOL * self.cfg.t_end_ms {
            self.finished = Some(TerminationCause::EndTime);
            return Ok(false);
        }
        let dt = match self.choose_dt() {
            Ok(dt) => dt,
            Err(SolverError::Finished) => {
                self.finished = Some(TerminationCause::AllEroded);
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let n = self.state.u.len();
        let f_int_old = self.f_int.clone();
        let f_cont_old = self.f_cont.clone();
        let mut v_half = vec![[0.0; 3]; n];
        let mut du = vec![[0.0; 3]; n];
        for i in 0..n {
            v_half[i] = vec3::add(self.state.v[i], vec3::scale(self.acc[i], 0.5 * dt));
            du[i] = vec3::scale(v_half[i], dt);
            self.state.u[i] = vec3::add(self.state.u[i], du[i]);
        }
        let clipped = dt >= remaining;
        self.state.time = if clipped { self.cfg.t_end_ms } else { self.state.time + dt };
        self.state.step += 1;
        self.dt_smallest = self.dt_smallest.min(dt);

        if let Err(e) = self.update_forces(&v_half, dt) {
            return Err(match e {
                SolverError::NumericalBlowup { .. } => self.blowup(),
                other => other,
            });
        }
        for i in 0..n {
            self.state.v[i] = vec3::add(v_half[i], vec3::scale(self.acc[i], 0.5 * dt));
        }

        let e = &mut self.state.energies;
        for i in 0..n {
            e.internal -= 0.5 * vec3::dot(vec3::add(f_int_old[i], self.f_int[i]), du[i]);
            e.contact -= 0.5 * vec3::dot(vec3::add(f_cont_old[i], self.f_cont[i]), du[i]);
            e.external_work += vec3::dot(self.f_ext[i], du[i]);
        }
        self.state.energies.kinetic = self.state.kinetic_energy();

        let limit = self.cfg.blowup_velocity;
        let bad = self.state.v.iter().any(|v| !vec3::is_finite(*v) || vec3::norm(*v) > limit)
            || self.state.u.iter().any(|u| !vec3::is_finite(*u))
            || !self.state.energies.total().is_finite();
        if bad {
            return Err(self.blowup());
        }
        self.err_max = self.err_max.max(self.energy_error().abs());
        if clipped {
            self.finished = Some(TerminationCause::EndTime);
        }
        Ok(true)
    }

    /// Runs to termination, sampling histories every `dt_out_ms` and frames
    /// every `dt_anim_ms` by linear interpolation between step ends.
    pub fn run(mut self) -> Result<(FieldTrajectory, TimeHistories, TerminationReport), SolverError> {
        let t_end = self.cfg.t_end_ms;
        let mut hist_clock = Clock::new(self.cfg.dt_out_ms, t_end);
        let mut anim_clock = Clock::new(self.cfg.dt_anim_ms, t_end);
        let mut hist = TimeHistories::default();
        let mut frames = Vec::new();

        let mut prev = self.snapshot();
        emit(&prev, &prev, &mut hist_clock, &mut anim_clock, &mut hist, &mut frames);
        while self.step()? {
            let cur = self.snapshot();
            emit(&prev, &cur, &mut hist_clock, &mut anim_clock, &mut hist, &mut frames);
            prev = cur;
        }

        let cause = self.finished.unwrap_or(TerminationCause::EndTime);
        let report = TerminationReport {
            cause,
            final_time_ms: self.state.time,
            steps: self.state.step,
            floor_steps: self.floor_steps,
            added_mass_fraction: self.added_fraction,
            energy_error_final: self.energy_error(),
            energy_error_max_abs: self.err_max,
            hourglass_ratio: 0.0,
            eroded_elements: self.state.eroded.iter().filter(|&&e| e).count(),
            dt_smallest_ms: if self.dt_smallest.is_finite() { self.dt_smallest } else { 0.0 },
        };
        let asm = self.asm;
        let traj = FieldTrajectory {
            x0: asm.nodes.iter().map(|n| n.x).collect(),
            node_ids: asm.node_ids(),
            element_ids: asm.elements.iter().map(|e| e.id).collect(),
            part_ids: asm.elements.iter().map(|e| e.part).collect(),
            dt_anim: self.cfg.dt_anim_ms,
            frames,
        };
        Ok((traj, hist, report))
    }
}

fn emit(
    a: &Snapshot,
    b: &Snapshot,
    hist_clock: &mut Clock,
    anim_clock: &mut Clock,
    hist: &mut TimeHistories,
    frames: &mut Vec<Frame>,
) {
    for (tau, s) in hist_clock.due(a.t, b.t) {
        let (ea, eb) = (&a.energies, &b.energies);
        hist.t.push(tau);
        hist.f_wall.push(lerp3(a.f_wall, b.f_wall, s));
        hist.e_kin.push(lerp(ea.kinetic, eb.kinetic, s));
        hist.e_int.push(lerp(ea.internal, eb.internal, s));
        hist.e_cont.push(lerp(ea.contact, eb.contact, s));
        hist.e_hg.push(lerp(ea.hourglass, eb.hourglass, s));
        hist.w_p.push(lerp(ea.plastic_work, eb.plastic_work, s));
        hist.a.push(lerp(a.accel, b.accel, s));
    }
    for (tau, s) in anim_clock.due(a.t, b.t) {
        frames.push(interp_frame(a, b, s, tau));
    }
}

/// Integrates `asm` from rest state to `cfg.t_end_ms` (or until every element
/// has eroded) and returns the field trajectory, the global histories and the
/// termination report.
pub fn run_explicit(
    asm: &Assembly,
    cfg: &SolverConfig,
) -> Result<(FieldTrajectory, TimeHistories, TerminationReport), SolverError> {
    ExplicitSolver::new(asm, cfg)?.run()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::assembly::{
        build_bumper_assembly, BarElement, BumperConfig, InitialVelocity, Material, NodalLoad, Node,
        Part, RigidWall,
    };

    fn point_mass(x: f64, v: f64, m: f64, walls: Vec<RigidWall>) -> Assembly {
        Assembly {
            nodes: vec![Node { id: 1, x: [x, 0.0, 0.0] }],
            elements: vec![],
            parts: BTreeMap::new(),
            materials: vec![],
            point_masses: vec![(0, m)],
            fixed: vec![],
            initial_velocity: vec![InitialVelocity { nodes: vec![0], velocity: [v, 0.0, 0.0] }],
            loads: vec![],
            walls,
        }
    }

    fn rod(n_el: usize, l: f64, area: f64) -> Assembly {
        let nodes = (0..=n_el).map(|i| Node { id: i as u32 + 1, x: [i as f64 * l, 0.0, 0.0] }).collect();
        let elements = (0..n_el)
            .map(|i| BarElement { id: i as u32 + 1, nodes: [i, i + 1], part: 1, area, material: 0 })
            .collect();
        let mut parts = BTreeMap::new();
        parts.insert(1, Part { name: "rod".into(), thickness_group: 1, component: "rail".into(), thickness_mm: 1.0 });
        Assembly {
            nodes,
            elements,
            parts,
            materials: vec![Material::dual_phase("s", 0.35, 0.0).unwrap()],
            point_masses: vec![],
            fixed: vec![],
            initial_velocity: vec![],
            loads: vec![],
            walls: vec![],
        }
    }

    fn bumper_cfg() -> SolverConfig {
        SolverConfig { t_end_ms: 20.0, ..SolverConfig::default() }
    }

    #[test]
    fn free_flight_keeps_velocity() {
        let asm = point_mass(0.0, 3.0, 0.5, vec![]);
        let cfg = SolverConfig { t_end_ms: 1.0, dt_fixed_ms: Some(0.01), ..SolverConfig::default() };
        let (traj, hist, rep) = run_explicit(&asm, &cfg).unwrap();
        assert_eq!(rep.cause, TerminationCause::EndTime);
        assert_eq!(rep.final_time_ms, 1.0);
        assert_eq!(traj.frames.len(), 2);
        assert!((traj.frames[1].u[0][0] - 3.0).abs() < 1e-12);
        assert_eq!(hist.len(), 11);
        assert!(hist.e_kin.iter().all(|e| (e - 2.25).abs() < 1e-12));
        assert_eq!(rep.energy_error_max_abs, 0.0);
    }

    #[test]
    fn elementless_model_requires_fixed_step() {
        let asm = point_mass(0.0, 3.0, 0.5, vec![]);
        assert!(matches!(
            ExplicitSolver::new(&asm, &SolverConfig::default()),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn mass_bounces_off_penalty_wall() {
        // m = 1, k = 100, v0 = 2: contact lasts π/10 ms, peak force v0·sqrt(k m) = 20 kN,
        // frictionless rebound at -v0.
        let (m, k, v0) = (1.0, 100.0, 2.0);
        let wall = RigidWall::plane([1.0, 0.0, 0.0], 0.0, 0.0).with_penalty(k);
        let asm = point_mass(0.5, -v0, m, vec![wall]);
        let omega = (k / m).sqrt();
        let cfg = SolverConfig {
            t_end_ms: 1.0,
            dt_fixed_ms: Some(0.002 / omega),
            dt_out_ms: 1e-3,
            ..SolverConfig::default()
        };
        let (traj, hist, rep) = run_explicit(&asm, &cfg).unwrap();
        let v_end = traj.frames.last().unwrap().v[0][0];
        assert!((v_end - v0).abs() < 1e-3 * v0, "rebound {v_end}");
        let fmax = hist.f_wall.iter().map(|f| f[0].abs()).fold(0.0, f64::max);
        assert!((fmax - v0 * (k * m).sqrt()).abs() < 0.01 * 20.0, "peak {fmax}");
        let active: Vec<f64> = hist.t.iter().zip(&hist.f_wall).filter(|(_, f)| f[0] != 0.0).map(|(t, _)| *t).collect();
        let duration = active.last().unwrap() - active.first().unwrap();
        let expect = std::f64::consts::PI / omega;
        assert!((duration - expect).abs() < 0.01 * expect + 2e-3, "contact {duration}");
        assert!(rep.energy_error_max_abs < 1e-3, "{}", rep.energy_error_max_abs);
        // reaction acts on the wall, against the push
        assert!(hist.f_wall.iter().all(|f| f[0] <= 0.0));
    }

    #[test]
    fn constant_load_does_external_work() {
        let mut asm = point_mass(0.0, 0.0, 2.0, vec![]);
        asm.loads.push(NodalLoad { node: 0, force: [4.0, 0.0, 0.0] });
        let cfg = SolverConfig { t_end_ms: 1.0, dt_fixed_ms: Some(0.01), ..SolverConfig::default() };
        let (traj, hist, rep) = run_explicit(&asm, &cfg).unwrap();
        // u = F t² / 2m = 1, v = F t / m = 2
        assert!((traj.frames[1].u[0][0] - 1.0).abs() < 1e-12);
        assert!((hist.e_kin.last().unwrap() - 4.0).abs() < 1e-12);
        assert!(rep.energy_error_max_abs < 1e-12);
        assert!(hist.a.iter().all(|a| (a - 2.0).abs() < 1e-12));
    }

    #[test]
    fn elastic_wave_reaches_free_end_at_bar_speed() {
        let mut asm = rod(100, 10.0, 10.0);
        asm.loads.push(NodalLoad { node: 0, force: [-1.0, 0.0, 0.0] });
        let c = asm.materials[0].wave_speed();
        let cfg = SolverConfig { t_end_ms: 0.3, dt_anim_ms: 1e-3, ..SolverConfig::default() };
        let (traj, _, _) = run_explicit(&asm, &cfg).unwrap();
        // free-end velocity jumps to twice the particle velocity σ/(ρc)
        let vp = 0.1 / (asm.materials[0].rho_t_mm3 * c);
        let arrival = traj.frames.iter().find(|f| -f.v[100][0] > vp).unwrap().time_ms;
        let expect = 1000.0 / c;
        assert!((arrival - expect).abs() < 0.02 * expect, "arrival {arrival} vs {expect}");
    }

    #[test]
    fn floor_triggers_local_mass_scaling() {
        let mut asm = rod(4, 10.0, 10.0);
        asm.nodes[2].x[0] = 18.0;
        asm.initial_velocity.push(InitialVelocity { nodes: vec![0, 1, 2, 3, 4], velocity: [1.0, 0.0, 0.0] });
        let cfg = SolverConfig { t_end_ms: 0.1, dt_min_ms: 1.5e-3, ..SolverConfig::default() };
        let (_, _, rep) = run_explicit(&asm, &cfg).unwrap();
        assert_eq!(rep.floor_steps, rep.steps);
        assert!(rep.added_mass_fraction > 0.0);
        assert!(rep.dt_smallest_ms <= 1.5e-3);
    }

    #[test]
    fn bumper_pole_impact_balances_energy() {
        let asm = build_bumper_assembly(&BumperConfig::default()).unwrap();
        let (traj, hist, rep) = run_explicit(&asm, &bumper_cfg()).unwrap();
        assert_eq!(rep.cause, TerminationCause::EndTime);
        assert!(rep.energy_error_max_abs <= 0.05, "energy error {}", rep.energy_error_max_abs);
        assert_eq!(traj.frames.len(), 21);
        assert_eq!(hist.len(), 201);
        assert!(hist.w_p.windows(2).all(|w| w[1] >= w[0]));
        assert!(*hist.w_p.last().unwrap() > 0.0);
        assert!(hist.f_wall.iter().any(|f| f[0] < 0.0));
        assert!(hist.all_finite());
    }

    #[test]
    fn animation_interval_does_not_change_physics() {
        let asm = build_bumper_assembly(&BumperConfig::default()).unwrap();
        let coarse = SolverConfig { t_end_ms: 5.0, ..SolverConfig::default() };
        let fine = SolverConfig { dt_anim_ms: 0.5, ..coarse.clone() };
        let (ta, ha, ra) = run_explicit(&asm, &coarse).unwrap();
        let (tb, hb, rb) = run_explicit(&asm, &fine).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ra, rb);
        assert_eq!(tb.frames.len(), 11);
        for (k, f) in ta.frames.iter().enumerate() {
            assert_eq!(f, &tb.frames[2 * k]);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let asm = build_bumper_assembly(&BumperConfig::default()).unwrap();
        let cfg = SolverConfig { t_end_ms: 3.0, ..SolverConfig::default() };
        let a = run_explicit(&asm, &cfg).unwrap();
        let b = run_explicit(&asm, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn runaway_velocity_is_reported_with_last_frame() {
        let mut asm = point_mass(0.0, 0.0, 1.0, vec![]);
        asm.loads.push(NodalLoad { node: 0, force: [1e9, 0.0, 0.0] });
        let cfg = SolverConfig { t_end_ms: 1.0, dt_fixed_ms: Some(0.01), ..SolverConfig::default() };
        match run_explicit(&asm, &cfg) {
            Err(SolverError::NumericalBlowup { last_frame: Some(f), .. }) => assert_eq!(f.u.len(), 1),
            other => panic!("expected blow-up, got {:?}", other.map(|r| r.2)),
        }
    }
}

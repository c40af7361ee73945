use crate::assembly::{jc_flow_stress, jc_hardening_slope, Assembly, Material};
use crate::vec3::{self, Vec3};

use super::{SolverError, SolverState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapResult {
    pub stress: f64,
    pub eps_p: f64,
    /// Plastic strain increment of this update.
    pub d_eps_p: f64,
}

/// One-dimensional radial return: elastic predictor `σ + E·Δε`, then a
/// backward-Euler plastic corrector against the hardening curve.
pub fn radial_return(mat: &Material, stress: f64, eps_p: f64, d_eps: f64) -> ReturnMapResult {
    let trial = stress + mat.e_gpa * d_eps;
    let yield_now = jc_flow_stress(mat, eps_p).unwrap_or(mat.a_gpa);
    let excess = trial.abs() - yield_now;
    if excess <= 0.0 {
        return ReturnMapResult { stress: trial, eps_p, d_eps_p: 0.0 };
    }
    // g(γ) = |σ_tr| − Eγ − σ_y(ε_p + γ), decreasing, g(0) > 0, g(excess/E) < 0
    let g = |gamma: f64| trial.abs() - mat.e_gpa * gamma - jc_flow_stress(mat, eps_p + gamma).unwrap_or(f64::NAN);
    let mut lo = 0.0;
    let mut hi = excess / mat.e_gpa;
    let mut gamma = 0.5 * hi;
    for _ in 0..100 {
        let val = g(gamma);
        if val > 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        let slope = mat.e_gpa + jc_hardening_slope(mat, eps_p + gamma);
        let newton = gamma + val / slope;
        gamma = if newton > lo && newton < hi && slope.is_finite() { newton } else { 0.5 * (lo + hi) };
    }
    let sign = trial.signum();
    let new_eps = eps_p + gamma;
    let flow = jc_flow_stress(mat, new_eps).unwrap_or(mat.a_gpa);
    ReturnMapResult { stress: sign * flow, eps_p: new_eps, d_eps_p: gamma }
}

/// Updates the element stresses from the current geometry and assembles the
/// internal force acting on each node into `out` (kN, overwritten). Plastic
/// work is accumulated into the state's energy ledger and elements whose
/// plastic strain reaches a positive failure strain are eroded.
pub fn internal_forces(asm: &Assembly, state: &mut SolverState, out: &mut [Vec3]) -> Result<(), SolverError> {
    out.iter_mut().for_each(|f| *f = [0.0; 3]);
    for (k, el) in asm.elements.iter().enumerate() {
        if state.eroded[k] {
            continue;
        }
        let [a, b] = el.nodes;
        let d = vec3::sub(state.position(asm, b), state.position(asm, a));
        let len = vec3::norm(d);
        if !len.is_finite() || len <= 0.0 {
            return Err(SolverError::NumericalBlowup { step: state.step, time_ms: state.time, last_frame: None });
        }
        let l0 = asm.reference_length(el);
        let d_eps = (len - state.length[k]) / l0;
        state.length[k] = len;
        let mat = &asm.materials[el.material];
        let r = radial_return(mat, state.stress[k], state.eps_p[k], d_eps);
        state.stress[k] = r.stress;
        state.eps_p[k] = r.eps_p;
        state.energies.plastic_work += r.stress.abs() * r.d_eps_p * el.area * l0;
        if mat.erosion_enabled() && state.eps_p[k] >= mat.eps_p_fail {
            state.eroded[k] = true;
            state.stress[k] = 0.0;
            continue;
        }
        // tension pulls the end nodes towards each other
        let axial = vec3::scale(d, r.stress * el.area / len);
        out[a] = vec3::add(out[a], axial);
        out[b] = vec3::sub(out[b], axial);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::assembly::{BarElement, Node, Part};

    fn bar(mat: Material, area: f64, l0: f64) -> Assembly {
        let mut parts = BTreeMap::new();
        parts.insert(1, Part { name: "bar".into(), thickness_group: 1, component: "rail".into(), thickness_mm: 1.0 });
        Assembly {
            nodes: vec![Node { id: 1, x: [0.0; 3] }, Node { id: 2, x: [l0, 0.0, 0.0] }],
            elements: vec![BarElement { id: 1, nodes: [0, 1], part: 1, area, material: 0 }],
            parts,
            materials: vec![mat],
            point_masses: vec![],
            fixed: vec![],
            initial_velocity: vec![],
            loads: vec![],
            walls: vec![],
        }
    }

    fn steel(a: f64) -> Material {
        Material::dual_phase("s", a, 0.0).unwrap()
    }

    #[test]
    fn reference_configuration_has_no_force() {
        let asm = bar(steel(0.35), 20.0, 10.0);
        let mut st = SolverState::new(&asm);
        let mut f = vec![[1.0; 3]; 2];
        internal_forces(&asm, &mut st, &mut f).unwrap();
        assert_eq!(f, vec![[0.0; 3]; 2]);
    }

    #[test]
    fn elastic_stretch_follows_hooke() {
        let asm = bar(steel(0.35), 20.0, 100.0);
        let mut st = SolverState::new(&asm);
        let dl = 0.05; // strain 5e-4, stress 0.105 GPa < 0.35
        st.u[1] = [dl, 0.0, 0.0];
        let mut f = vec![[0.0; 3]; 2];
        internal_forces(&asm, &mut st, &mut f).unwrap();
        let expect = 210.0 * 20.0 * dl / 100.0;
        assert!((f[0][0] - expect).abs() < 1e-9 * expect);
        assert!((f[1][0] + expect).abs() < 1e-9 * expect);
        assert_eq!(st.eps_p[0], 0.0);
    }

    #[test]
    fn erosion_zeroes_the_element_force() {
        let mut mat = steel(0.35);
        mat.eps_p_fail = 0.01;
        let asm = bar(mat, 20.0, 100.0);
        let mut st = SolverState::new(&asm);
        st.u[1] = [5.0, 0.0, 0.0];
        let mut f = vec![[0.0; 3]; 2];
        internal_forces(&asm, &mut st, &mut f).unwrap();
        assert!(st.eroded[0]);
        assert_eq!(f, vec![[0.0; 3]; 2]);
        st.u[1] = [6.0, 0.0, 0.0];
        internal_forces(&asm, &mut st, &mut f).unwrap();
        assert_eq!(f, vec![[0.0; 3]; 2]);
    }

    #[test]
    fn return_map_lands_on_yield_surface() {
        let mat = steel(0.4);
        let r = radial_return(&mat, 0.0, 0.0, 0.01);
        assert!(r.d_eps_p > 0.0);
        let flow = jc_flow_stress(&mat, r.eps_p).unwrap();
        assert!((r.stress - flow).abs() < 1e-12);
        // consistency: elastic part of the strain matches the stress
        assert!(((0.01 - r.d_eps_p) * mat.e_gpa - r.stress).abs() < 1e-10);
        let c = radial_return(&mat, 0.0, 0.0, -0.01);
        assert!((c.stress + r.stress).abs() < 1e-12);
    }

    /// Independent scalar oracle: explicit sub-stepped return mapping on the
    /// strain path, with plastic work as Σ σ·Δε_p.
    fn oracle_plastic_work(mat: &Material, path: &[f64], substeps: usize) -> (f64, f64) {
        let (mut sig, mut ep, mut wp) = (0.0f64, 0.0f64, 0.0f64);
        for w in path.windows(2) {
            let de = (w[1] - w[0]) / substeps as f64;
            for _ in 0..substeps {
                let trial = sig + mat.e_gpa * de;
                let sy = mat.a_gpa + mat.b_gpa * ep.powf(mat.n);
                if trial.abs() <= sy {
                    sig = trial;
                    continue;
                }
                // bisection on the scalar consistency condition
                let (mut lo, mut hi) = (0.0f64, (trial.abs() - sy) / mat.e_gpa);
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    let g = trial.abs() - mat.e_gpa * m - (mat.a_gpa + mat.b_gpa * (ep + m).powf(mat.n));
                    if g > 0.0 {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let dg = 0.5 * (lo + hi);
                ep += dg;
                sig = trial.signum() * (mat.a_gpa + mat.b_gpa * ep.powf(mat.n));
                wp += sig.abs() * dg;
            }
        }
        (ep, wp)
    }

    #[test]
    fn load_unload_matches_scalar_oracle() {
        let mat = steel(0.35);
        let (area, l0) = (20.0, 100.0);
        let asm = bar(mat.clone(), area, l0);
        let mut st = SolverState::new(&asm);
        let mut f = vec![[0.0; 3]; 2];
        let yield_strain = 0.35 / 210.0;
        let steps = 200;
        let mut path = vec![0.0];
        for i in 1..=steps {
            path.push(4.0 * yield_strain * i as f64 / steps as f64);
        }
        for i in 1..=steps {
            path.push(4.0 * yield_strain * (1.0 - i as f64 / steps as f64));
        }
        for &strain in &path[1..] {
            st.u[1] = [strain * l0, 0.0, 0.0];
            internal_forces(&asm, &mut st, &mut f).unwrap();
        }
        let (ep_oracle, wp_oracle) = oracle_plastic_work(&mat, &path, 10);
        let wp_oracle = wp_oracle * area * l0;
        assert!(st.eps_p[0] > 0.0);
        assert!(st.energies.plastic_work > 0.0);
        assert!((st.energies.plastic_work - wp_oracle).abs() <= 0.01 * wp_oracle);
        assert!((st.eps_p[0] - ep_oracle).abs() <= 0.01 * ep_oracle);
        // unloaded to zero total strain: the bar is left in compression
        assert!(st.stress[0] < 0.0);
    }
}

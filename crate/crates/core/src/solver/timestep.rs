use crate::assembly::Assembly;

use super::{SolverError, SolverState};

fn element_step(asm: &Assembly, state: &SolverState, k: usize) -> f64 {
    let el = &asm.elements[k];
    let mat = &asm.materials[el.material];
    let c = (mat.e_gpa / (mat.rho_t_mm3 * state.density_scale[k])).sqrt();
    state.length[k] / c
}

/// `α · min L_e / c_e` over active elements, using current lengths and
/// mass-scaled densities. Returns [`SolverError::Finished`] once every element
/// has eroded.
pub fn critical_timestep(asm: &Assembly, state: &SolverState, alpha: f64) -> Result<f64, SolverError> {
    let mut best = f64::INFINITY;
    for k in 0..asm.elements.len() {
        if !state.eroded[k] {
            best = best.min(element_step(asm, state, k));
        }
    }
    if best.is_finite() {
        Ok(alpha * best)
    } else {
        Err(SolverError::Finished)
    }
}

/// Raises the density of every active element whose scaled critical step is
/// below `dt_target` just enough to reach it, lumping the added mass onto the
/// element's two nodes. Returns the cumulative added mass as a fraction of
/// the structural (element) mass.
pub fn apply_mass_scaling(asm: &Assembly, state: &mut SolverState, alpha: f64, dt_target: f64) -> f64 {
    for k in 0..asm.elements.len() {
        if state.eroded[k] {
            continue;
        }
        let step = alpha * element_step(asm, state, k);
        if step >= dt_target {
            continue;
        }
        let el = &asm.elements[k];
        let mat = &asm.materials[el.material];
        // α·L·sqrt(ρ s / E) = dt_target
        let needed = mat.e_gpa * (dt_target / (alpha * state.length[k])).powi(2) / mat.rho_t_mm3;
        let extra = (needed - state.density_scale[k]) * mat.rho_t_mm3 * el.area * asm.reference_length(el);
        state.density_scale[k] = needed;
        state.mass[el.nodes[0]] += 0.5 * extra;
        state.mass[el.nodes[1]] += 0.5 * extra;
        state.added_mass += extra;
    }
    let structural = asm.structural_mass();
    if structural > 0.0 {
        state.added_mass / structural
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::assembly::{BarElement, Material, Node, Part};

    fn chain(lengths: &[f64], e_gpa: f64) -> Assembly {
        let mut x = 0.0;
        let mut nodes = vec![Node { id: 1, x: [0.0; 3] }];
        for (i, l) in lengths.iter().enumerate() {
            x += l;
            nodes.push(Node { id: i as u32 + 2, x: [x, 0.0, 0.0] });
        }
        let elements = (0..lengths.len())
            .map(|i| BarElement { id: i as u32 + 1, nodes: [i, i + 1], part: 1, area: 10.0, material: 0 })
            .collect();
        let mut parts = BTreeMap::new();
        parts.insert(1, Part { name: "p".into(), thickness_group: 1, component: "rail".into(), thickness_mm: 1.0 });
        let mut mat = Material::dual_phase("steel", 0.3, 0.0).unwrap();
        mat.e_gpa = e_gpa;
        Assembly {
            nodes,
            elements,
            parts,
            materials: vec![mat],
            point_masses: vec![],
            fixed: vec![],
            initial_velocity: vec![],
            loads: vec![],
            walls: vec![],
        }
    }

    #[test]
    fn steel_bar_critical_step() {
        let asm = chain(&[10.0], 210.0);
        let st = SolverState::new(&asm);
        // c = sqrt(210 / 7.85e-6) = 5172.19 mm/ms, computed independently with mpmath
        let c = 5_172.194_140_424_14;
        let dt = critical_timestep(&asm, &st, 0.9).unwrap();
        assert!((dt - 0.9 * 10.0 / c).abs() <= 1e-3 * dt);
        assert!((dt - 1.740e-3).abs() < 1e-6);
        let exact = critical_timestep(&asm, &st, 1.0).unwrap();
        assert_eq!(exact, 10.0 / (210.0f64 / 7.85e-6).sqrt());
    }

    #[test]
    fn doubling_stiffness_scales_step_by_inverse_sqrt2() {
        let a = chain(&[10.0], 210.0);
        let b = chain(&[10.0], 420.0);
        let da = critical_timestep(&a, &SolverState::new(&a), 0.9).unwrap();
        let db = critical_timestep(&b, &SolverState::new(&b), 0.9).unwrap();
        assert!((db / da - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fully_eroded_mesh_finishes() {
        let asm = chain(&[10.0, 10.0], 210.0);
        let mut st = SolverState::new(&asm);
        st.eroded = vec![true, true];
        assert!(matches!(critical_timestep(&asm, &st, 0.9), Err(SolverError::Finished)));
    }

    #[test]
    fn stable_mesh_needs_no_added_mass() {
        let asm = chain(&[10.0, 10.0, 10.0], 210.0);
        let mut st = SolverState::new(&asm);
        let dt = critical_timestep(&asm, &st, 0.9).unwrap();
        let before = st.mass.clone();
        assert_eq!(apply_mass_scaling(&asm, &mut st, 0.9, dt), 0.0);
        assert_eq!(st.mass, before);
    }

    #[test]
    fn short_element_scaling_is_local() {
        let asm = chain(&[10.0, 10.0, 5.0, 10.0, 10.0], 210.0);
        let mut st = SolverState::new(&asm);
        let before = st.mass.clone();
        let target = 0.9 * 10.0 / asm.materials[0].wave_speed();
        let frac = apply_mass_scaling(&asm, &mut st, 0.9, target);
        assert!(frac > 0.0);
        for (i, (b, a)) in before.iter().zip(&st.mass).enumerate() {
            if i == 2 || i == 3 {
                assert!(a > b, "node {i} should gain mass");
            } else {
                assert_eq!(a, b, "node {i} should be untouched");
            }
        }
        let dt = critical_timestep(&asm, &st, 0.9).unwrap();
        assert!((dt - target).abs() <= 1e-12 * target);
        // the short element needs 4x its density: 3 extra element masses
        let m_short = asm.element_mass(&asm.elements[2]);
        assert!((st.added_mass - 3.0 * m_short).abs() <= 1e-9 * m_short);
    }
}

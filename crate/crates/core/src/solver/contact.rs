use crate::assembly::{Assembly, RigidWall, WallShape};
use crate::vec3::{self, Vec3};

use super::{PenaltyRule, SolverState};

/// Penetration depth and outward unit normal (pointing from the wall into the
/// free side) of a point against a wall, or `None` when not in contact.
pub fn wall_penetration(wall: &RigidWall, x: Vec3) -> Option<(f64, Vec3)> {
    match &wall.shape {
        WallShape::Plane { normal, offset } => {
            let s = vec3::dot(*normal, x) - offset;
            (s < 0.0).then_some((-s, *normal))
        }
        WallShape::Cylinder { axis, center, radius } => {
            let rel = vec3::sub(x, *center);
            let radial = vec3::sub(rel, vec3::scale(*axis, vec3::dot(rel, *axis)));
            let r = vec3::norm(radial);
            if r >= *radius {
                return None;
            }
            // a point exactly on the axis is pushed along +X
            let n = if r > 0.0 { vec3::scale(radial, 1.0 / r) } else { [1.0, 0.0, 0.0] };
            Some((radius - r, n))
        }
    }
}

/// Caps a trial tangential force at `μ·|F_n|`, preserving its direction.
pub fn coulomb_cap(trial: Vec3, normal_force: f64, mu: f64) -> Vec3 {
    let limit = mu * normal_force.abs();
    let mag = vec3::norm(trial);
    if mag <= limit || mag == 0.0 {
        trial
    } else {
        vec3::scale(trial, limit / mag)
    }
}

/// Default penalty stiffness: the stiffest element's `E·A/L`.
pub fn default_penalty(asm: &Assembly) -> Option<f64> {
    asm.elements
        .iter()
        .map(|e| asm.materials[e.material].e_gpa * e.area / asm.reference_length(e))
        .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))))
}

pub(crate) fn wall_stiffness(asm: &Assembly, wall: &RigidWall, rule: PenaltyRule) -> Option<f64> {
    wall.penalty.or(match rule {
        PenaltyRule::Fixed { k_kn_mm } => Some(k_kn_mm),
        PenaltyRule::ElementStiffness => default_penalty(asm),
    })
}

/// Penalty contact of every node against every wall. Nodal forces (kN, acting
/// on the structure) are written to `out`; the return value holds the reaction
/// acting on each wall in global axes.
///
/// Friction uses a tangential penalty on the slip increment `v_t·dt`, capped
/// at `μ·|F_n|` and always opposing the sliding velocity.
pub fn contact_forces(
    asm: &Assembly,
    state: &SolverState,
    slip_velocity: &[Vec3],
    stiffness: &[f64],
    dt: f64,
    out: &mut [Vec3],
) -> Vec<Vec3> {
    out.iter_mut().for_each(|f| *f = [0.0; 3]);
    let mut reactions = vec![[0.0; 3]; asm.walls.len()];
    for (w, wall) in asm.walls.iter().enumerate() {
        let k = stiffness[w];
        for i in 0..asm.nodes.len() {
            let x = state.position(asm, i);
            let Some((gap, n)) = wall_penetration(wall, x) else { continue };
            let fn_mag = k * gap;
            let mut f = vec3::scale(n, fn_mag);
            if wall.friction > 0.0 {
                let v = slip_velocity[i];
                let vt = vec3::sub(v, vec3::scale(n, vec3::dot(v, n)));
                let trial = vec3::scale(vt, -k * dt);
                f = vec3::add(f, coulomb_cap(trial, fn_mag, wall.friction));
            }
            out[i] = vec3::add(out[i], f);
            reactions[w] = vec3::sub(reactions[w], f);
        }
    }
    reactions
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::assembly::{Material, Node};

    fn single_node(x: Vec3, walls: Vec<RigidWall>) -> Assembly {
        Assembly {
            nodes: vec![Node { id: 1, x }],
            elements: vec![],
            parts: BTreeMap::new(),
            materials: vec![Material::dual_phase("m", 0.3, 0.0).unwrap()],
            point_masses: vec![(0, 1.0)],
            fixed: vec![],
            initial_velocity: vec![],
            loads: vec![],
            walls,
        }
    }

    #[test]
    fn separated_node_feels_nothing() {
        let asm = single_node([5.0, 0.0, 0.0], vec![RigidWall::plane([1.0, 0.0, 0.0], 0.0, 0.2)]);
        let st = SolverState::new(&asm);
        let mut out = vec![[9.0; 3]];
        let r = contact_forces(&asm, &st, &[[0.0; 3]], &[100.0], 1e-3, &mut out);
        assert_eq!(out[0], [0.0; 3]);
        assert_eq!(r[0], [0.0; 3]);
    }

    #[test]
    fn linear_penalty_on_plane() {
        let asm = single_node([-0.1, 0.0, 0.0], vec![RigidWall::plane([1.0, 0.0, 0.0], 0.0, 0.0)]);
        let st = SolverState::new(&asm);
        let mut out = vec![[0.0; 3]];
        let r = contact_forces(&asm, &st, &[[0.0; 3]], &[100.0], 1e-3, &mut out);
        assert!((out[0][0] - 10.0).abs() < 1e-12);
        assert!((r[0][0] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn friction_is_capped_at_mu_times_normal() {
        let f = coulomb_cap([0.0, 5.0, 0.0], 10.0, 0.20);
        assert!((vec3::norm(f) - 2.0).abs() < 1e-12);
        assert!(f[1] > 0.0);
        let small = coulomb_cap([0.0, 1.0, 0.0], 10.0, 0.20);
        assert_eq!(small, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn sliding_node_friction_opposes_motion() {
        let asm = single_node([-0.1, 0.0, 0.0], vec![RigidWall::plane([1.0, 0.0, 0.0], 0.0, 0.2)]);
        let st = SolverState::new(&asm);
        let mut out = vec![[0.0; 3]];
        let v = [[0.0, 50.0, 0.0]];
        contact_forces(&asm, &st, &v, &[100.0], 1.0, &mut out);
        assert!((out[0][0] - 10.0).abs() < 1e-12);
        assert!((out[0][1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn cylinder_penetration_is_radius_minus_distance() {
        let pole = RigidWall::pole(0.0, 0.0, 100.0, 0.0);
        let (g, n) = wall_penetration(&pole, [0.0, 40.0, 7.0]).unwrap();
        assert!((g - 10.0).abs() < 1e-12);
        assert!((n[1] - 1.0).abs() < 1e-12);
        assert!(wall_penetration(&pole, [0.0, 50.0, 0.0]).is_none());
    }
}

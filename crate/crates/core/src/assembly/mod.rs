//! Mesh, material and boundary-condition types shared by the solver, the DoE
//! planner and the surrogate.
//!
//! Structural members are 2-node axial bars whose cross-section area is the
//! sheet thickness times a fixed unit width, so gauge edits act directly on
//! axial stiffness, mass and plastic capacity.

mod bumper;
mod design;
mod material;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::{self, Vec3};

pub use bumper::{build_bumper_assembly, BumperConfig, CRASH_BOX_GROUP, BEAM_GROUP};
pub use design::{
    kmh_to_mm_ms, mm_ms_to_kmh, Bounds, ConstraintSet, DesignSpace, DesignVector, Param, GRID_TOL,
};
pub use material::{jc_flow_stress, jc_hardening_slope, Material, STEEL_E_GPA, STEEL_NU, STEEL_RHO};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid material card {0}")]
    InvalidMaterial(String),
    #[error("negative plastic strain {0}")]
    NegativePlasticStrain(f64),
    #[error("invalid design space: {0}")]
    InvalidSpace(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unknown thickness group {0}")]
    UnknownGroup(u32),
    #[error("scale {scale} for group {group} outside [{min}, {max}]")]
    ScaleOutOfBounds { group: u32, scale: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: Vec3,
}

/// Two-node axial bar. `nodes` index into [`Assembly::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarElement {
    pub id: u32,
    pub nodes: [usize; 2],
    pub part: u32,
    pub area: f64,
    pub material: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub thickness_group: u32,
    /// Semantic structural label (bumper, crash_box, rail, ...).
    pub component: String,
    pub thickness_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WallShape {
    Plane { normal: Vec3, offset: f64 },
    /// Infinite cylinder; `center` lies on the axis.
    Cylinder { axis: Vec3, center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidWall {
    pub shape: WallShape,
    pub friction: f64,
    /// Penalty stiffness in kN/mm; `None` selects the solver's default rule.
    pub penalty: Option<f64>,
}

impl RigidWall {
    pub fn plane(normal: Vec3, offset: f64, friction: f64) -> Self {
        RigidWall { shape: WallShape::Plane { normal, offset }, friction, penalty: None }
    }

    /// Stationary pole with its axis along global Z.
    pub fn pole(x_c: f64, y_p: f64, diameter: f64, friction: f64) -> Self {
        RigidWall {
            shape: WallShape::Cylinder {
                axis: [0.0, 0.0, 1.0],
                center: [x_c, y_p, 0.0],
                radius: 0.5 * diameter,
            },
            friction,
            penalty: None,
        }
    }

    pub fn with_penalty(mut self, k: f64) -> Self {
        self.penalty = Some(k);
        self
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let bad = |m: &str| Err(AssemblyError::InvalidMesh(m.to_string()));
        if !(self.friction >= 0.0) {
            return bad("wall friction must be non-negative");
        }
        if let Some(k) = self.penalty {
            if !(k > 0.0) {
                return bad("wall penalty must be positive");
            }
        }
        match &self.shape {
            WallShape::Plane { normal, .. } => {
                if (vec3::norm(*normal) - 1.0).abs() > 1e-9 {
                    return bad("plane normal must be unit length");
                }
            }
            WallShape::Cylinder { axis, radius, .. } => {
                if !(*radius > 0.0) {
                    return bad("cylinder radius must be positive");
                }
                if (vec3::norm(*axis) - 1.0).abs() > 1e-9 {
                    return bad("cylinder axis must be unit length");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDofs {
    pub node: usize,
    pub dofs: [bool; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialVelocity {
    pub nodes: Vec<usize>,
    pub velocity: Vec3,
}

/// Constant external nodal force (kN).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalLoad {
    pub node: usize,
    pub force: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub nodes: Vec<Node>,
    pub elements: Vec<BarElement>,
    pub parts: BTreeMap<u32, Part>,
    pub materials: Vec<Material>,
    /// Lumped point masses (t) added on top of the element masses.
    pub point_masses: Vec<(usize, f64)>,
    pub fixed: Vec<FixedDofs>,
    pub initial_velocity: Vec<InitialVelocity>,
    pub loads: Vec<NodalLoad>,
    pub walls: Vec<RigidWall>,
}

impl Assembly {
    /// Checks the structural invariants every consumer relies on.
    pub fn validate(&self) -> Result<(), AssemblyError> {
        let mesh = |m: String| Err(AssemblyError::InvalidMesh(m));
        let n = self.nodes.len();
        if n == 0 {
            return mesh("assembly has no nodes".into());
        }
        for m in &self.materials {
            m.validate()?;
        }
        for e in &self.elements {
            if e.nodes[0] >= n || e.nodes[1] >= n {
                return mesh(format!("element {} references a missing node", e.id));
            }
            if e.material >= self.materials.len() {
                return mesh(format!("element {} references a missing material", e.id));
            }
            if !self.parts.contains_key(&e.part) {
                return mesh(format!("element {} references missing part {}", e.id, e.part));
            }
            if !(e.area > 0.0) {
                return mesh(format!("element {} has non-positive area", e.id));
            }
            if self.reference_length(e) <= 0.0 {
                return mesh(format!("element {} has zero length", e.id));
            }
        }
        let idx_ok = |i: usize| i < n;
        if !self.point_masses.iter().all(|(i, m)| idx_ok(*i) && *m >= 0.0)
            || !self.fixed.iter().all(|f| idx_ok(f.node))
            || !self.initial_velocity.iter().all(|iv| iv.nodes.iter().all(|&i| idx_ok(i)))
            || !self.loads.iter().all(|l| idx_ok(l.node))
        {
            return mesh("boundary condition references a missing node".into());
        }
        for w in &self.walls {
            w.validate()?;
        }
        if !(self.total_mass() > 0.0) {
            return mesh("total mass must be positive".into());
        }
        Ok(())
    }

    pub fn reference_length(&self, e: &BarElement) -> f64 {
        vec3::norm(vec3::sub(self.nodes[e.nodes[1]].x, self.nodes[e.nodes[0]].x))
    }

    pub fn element_mass(&self, e: &BarElement) -> f64 {
        self.materials[e.material].rho_t_mm3 * e.area * self.reference_length(e)
    }

    /// Row-sum lumped nodal masses: half of each element's mass on either end,
    /// plus point masses.
    pub fn lumped_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes.len()];
        for e in &self.elements {
            let half = 0.5 * self.element_mass(e);
            m[e.nodes[0]] += half;
            m[e.nodes[1]] += half;
        }
        for &(i, pm) in &self.point_masses {
            m[i] += pm;
        }
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.lumped_masses().iter().sum()
    }

    /// Mass carried by the elements alone (no point masses).
    pub fn structural_mass(&self) -> f64 {
        self.elements.iter().map(|e| self.element_mass(e)).sum()
    }

    pub fn initial_velocities(&self) -> Vec<Vec3> {
        let mut v = vec![[0.0; 3]; self.nodes.len()];
        for iv in &self.initial_velocity {
            for &i in &iv.nodes {
                v[i] = iv.velocity;
            }
        }
        v
    }

    /// Per-node constraint mask (true = fixed).
    pub fn fixed_mask(&self) -> Vec<[bool; 3]> {
        let mut mask = vec![[false; 3]; self.nodes.len()];
        for f in &self.fixed {
            for k in 0..3 {
                mask[f.node][k] |= f.dofs[k];
            }
        }
        mask
    }

    pub fn node_ids(&self) -> Vec<u32> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    /// Part id of every node, taken from the lowest-id incident element.
    /// Nodes without elements get part 0.
    pub fn node_parts(&self) -> Vec<u32> {
        let mut out = vec![(u32::MAX, 0u32); self.nodes.len()];
        for e in &self.elements {
            for &i in &e.nodes {
                if e.id < out[i].0 {
                    out[i] = (e.id, e.part);
                }
            }
        }
        out.into_iter().map(|(_, p)| p).collect()
    }

    /// Smallest X coordinate over all nodes in the reference configuration.
    pub fn front_x(&self) -> f64 {
        self.nodes.iter().map(|n| n.x[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Scale factor for one thickness group: `t_g = s_g · t_g⁽⁰⁾`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessEdit {
    pub group: u32,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for ScaleBounds {
    fn default() -> Self {
        ScaleBounds { min: 0.9, max: 1.1 }
    }
}

pub fn edited_thickness(baseline: f64, scale: f64) -> f64 {
    scale * baseline
}

/// Multiplies the thickness (and therefore the bar area) of every part in the
/// edited groups. Parts outside the edited groups are untouched.
pub fn apply_thickness_edits(
    assembly: &Assembly,
    edits: &[ThicknessEdit],
    bounds: ScaleBounds,
) -> Result<Assembly, AssemblyError> {
    let groups: HashMap<u32, ()> = assembly.parts.values().map(|p| (p.thickness_group, ())).collect();
    for e in edits {
        if !groups.contains_key(&e.group) {
            return Err(AssemblyError::UnknownGroup(e.group));
        }
        let tol = 1e-12;
        if !(e.scale >= bounds.min - tol && e.scale <= bounds.max + tol) {
            return Err(AssemblyError::ScaleOutOfBounds {
                group: e.group,
                scale: e.scale,
                min: bounds.min,
                max: bounds.max,
            });
        }
    }
    let mut out = assembly.clone();
    for edit in edits {
        let parts: Vec<u32> = out
            .parts
            .iter()
            .filter(|(_, p)| p.thickness_group == edit.group)
            .map(|(&id, _)| id)
            .collect();
        for id in &parts {
            let p = out.parts.get_mut(id).expect("part listed above");
            p.thickness_mm = edited_thickness(p.thickness_mm, edit.scale);
        }
        for el in out.elements.iter_mut().filter(|el| parts.contains(&el.part)) {
            el.area *= edit.scale;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_bar() -> Assembly {
        let mut parts = BTreeMap::new();
        parts.insert(
            1,
            Part { name: "a".into(), thickness_group: 7, component: "rail".into(), thickness_mm: 2.0 },
        );
        parts.insert(
            2,
            Part { name: "b".into(), thickness_group: 8, component: "bumper".into(), thickness_mm: 1.5 },
        );
        Assembly {
            nodes: vec![
                Node { id: 1, x: [0.0, 0.0, 0.0] },
                Node { id: 2, x: [10.0, 0.0, 0.0] },
                Node { id: 3, x: [10.0, 20.0, 0.0] },
            ],
            elements: vec![
                BarElement { id: 1, nodes: [0, 1], part: 1, area: 20.0, material: 0 },
                BarElement { id: 2, nodes: [1, 2], part: 2, area: 15.0, material: 0 },
            ],
            parts,
            materials: vec![Material::dual_phase("m", 0.4, 0.0).unwrap()],
            point_masses: vec![],
            fixed: vec![],
            initial_velocity: vec![],
            loads: vec![],
            walls: vec![],
        }
    }

    #[test]
    fn scale_edit_multiplies_group_thickness() {
        let a = two_bar();
        let b = apply_thickness_edits(&a, &[ThicknessEdit { group: 7, scale: 1.1 }], ScaleBounds::default())
            .unwrap();
        assert!((b.parts[&1].thickness_mm - 2.2).abs() < 1e-12);
        assert!((b.elements[0].area - 22.0).abs() < 1e-12);
        assert_eq!(b.elements[1], a.elements[1]);
        assert_eq!(b.parts[&2], a.parts[&2]);
    }

    #[test]
    fn unit_scale_is_bitwise_identity() {
        let a = two_bar();
        let edits = [ThicknessEdit { group: 7, scale: 1.0 }, ThicknessEdit { group: 8, scale: 1.0 }];
        let b = apply_thickness_edits(&a, &edits, ScaleBounds::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_and_unknown_groups_rejected() {
        let a = two_bar();
        let err = apply_thickness_edits(&a, &[ThicknessEdit { group: 7, scale: 0.89 }], ScaleBounds::default());
        assert!(matches!(err, Err(AssemblyError::ScaleOutOfBounds { .. })));
        let err = apply_thickness_edits(&a, &[ThicknessEdit { group: 3, scale: 1.0 }], ScaleBounds::default());
        assert_eq!(err, Err(AssemblyError::UnknownGroup(3)));
    }

    #[test]
    fn lumped_masses_are_half_element_masses() {
        let a = two_bar();
        let m = a.lumped_masses();
        let rho = a.materials[0].rho_t_mm3;
        let m1 = rho * 20.0 * 10.0;
        let m2 = rho * 15.0 * 20.0;
        let expect = [0.5 * m1, 0.5 * (m1 + m2), 0.5 * m2];
        for (got, want) in m.iter().zip(expect) {
            assert!((got - want).abs() <= 1e-12 * want);
        }
        let total = a.total_mass();
        assert!((total - m.iter().sum::<f64>()).abs() <= 1e-12 * total);
    }

    #[test]
    fn validation_catches_bad_meshes() {
        let mut a = two_bar();
        a.validate().unwrap();
        a.elements[0].nodes[1] = 9;
        assert!(a.validate().is_err());
        let mut a = two_bar();
        a.nodes[1].x = a.nodes[0].x;
        assert!(a.validate().is_err());
        let mut a = two_bar();
        a.elements[0].part = 99;
        assert!(a.validate().is_err());
    }

    #[test]
    fn wall_validation() {
        assert!(RigidWall::pole(-100.0, 0.0, 100.0, 0.2).validate().is_ok());
        assert!(RigidWall::pole(-100.0, 0.0, 0.0, 0.2).validate().is_err());
        assert!(RigidWall::plane([1.0, 1.0, 0.0], 0.0, 0.2).validate().is_err());
        assert!(RigidWall::plane([1.0, 0.0, 0.0], 0.0, -0.1).validate().is_err());
    }

    proptest! {
        #[test]
        fn thickness_edits_compose(s1 in 0.96f64..1.048, s2 in 0.96f64..1.048) {
            let a = two_bar();
            let bounds = ScaleBounds::default();
            let once = apply_thickness_edits(&a, &[ThicknessEdit { group: 7, scale: s1 * s2 }], bounds).unwrap();
            let step = apply_thickness_edits(&a, &[ThicknessEdit { group: 7, scale: s1 }], bounds).unwrap();
            let twice = apply_thickness_edits(&step, &[ThicknessEdit { group: 7, scale: s2 }], bounds).unwrap();
            let rel = (once.elements[0].area - twice.elements[0].area).abs() / once.elements[0].area;
            prop_assert!(rel <= 1e-12);
            let rel_t = (once.parts[&1].thickness_mm - twice.parts[&1].thickness_mm).abs();
            prop_assert!(rel_t <= 1e-12 * once.parts[&1].thickness_mm);
        }
    }
}

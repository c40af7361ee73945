use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    Assembly, AssemblyError, BarElement, DesignVector, FixedDofs, InitialVelocity, Material, Node,
    Part, RigidWall,
};
use crate::doe::place_pole;

pub const CRASH_BOX_GROUP: u32 = 1;
pub const BEAM_GROUP: u32 = 2;

/// Planar truss stand-in for the bumper beam and crash-box assembly. Read from
/// JSON; every key carries its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumperConfig {
    pub v_mm_ms: f64,
    pub t_cb_mm: f64,
    pub t_bb_mm: f64,
    #[serde(rename = "sigma_y_cb_GPa")]
    pub sigma_y_cb_gpa: f64,
    #[serde(rename = "sigma_y_bb_GPa")]
    pub sigma_y_bb_gpa: f64,
    pub d_pole_mm: f64,
    pub y_pole_mm: f64,
    pub beam_span_mm: f64,
    pub beam_depth_mm: f64,
    /// X coordinate of the beam front face; the structure moves towards −X.
    pub beam_front_x_mm: f64,
    pub beam_nodes_per_chord: usize,
    pub crash_box_length_mm: f64,
    pub crash_box_nodes_per_chord: usize,
    /// Lateral position of each crash box (mirrored about y = 0).
    pub crash_box_y_mm: f64,
    pub unit_width_mm: f64,
    /// Vehicle mass behind the assembly, spread over the crash-box rear nodes.
    pub rear_mass_t: f64,
    pub pole_gap_mm: f64,
    pub friction: f64,
    pub eps_p_fail: f64,
    /// Assign node and element ids in descending order.
    pub reverse_ids: bool,
}

impl Default for BumperConfig {
    fn default() -> Self {
        BumperConfig {
            v_mm_ms: 10.0,
            t_cb_mm: 2.0,
            t_bb_mm: 2.0,
            sigma_y_cb_gpa: 0.35,
            sigma_y_bb_gpa: 0.675,
            d_pole_mm: 250.0,
            y_pole_mm: 0.0,
            beam_span_mm: 1200.0,
            beam_depth_mm: 40.0,
            beam_front_x_mm: -40.0,
            beam_nodes_per_chord: 17,
            crash_box_length_mm: 150.0,
            crash_box_nodes_per_chord: 6,
            crash_box_y_mm: 340.0,
            unit_width_mm: 10.0,
            rear_mass_t: 0.01,
            pole_gap_mm: 10.0,
            friction: 0.20,
            eps_p_fail: 0.0,
            reverse_ids: false,
        }
    }
}

impl BumperConfig {
    /// Copies the seven campaign inputs of `d` into this configuration.
    pub fn with_design(&self, d: &DesignVector) -> Self {
        BumperConfig {
            v_mm_ms: d.v,
            t_cb_mm: d.t_cb,
            t_bb_mm: d.t_bb,
            sigma_y_cb_gpa: d.sigma_y_cb,
            sigma_y_bb_gpa: d.sigma_y_bb,
            d_pole_mm: d.d_pole,
            y_pole_mm: d.y_pole,
            ..self.clone()
        }
    }

    pub fn pole_x(&self) -> f64 {
        place_pole(self.d_pole_mm, self.beam_front_x_mm, self.pole_gap_mm)
    }

    fn validate(&self) -> Result<(), AssemblyError> {
        let positive = [
            ("t_cb_mm", self.t_cb_mm),
            ("t_bb_mm", self.t_bb_mm),
            ("beam_span_mm", self.beam_span_mm),
            ("beam_depth_mm", self.beam_depth_mm),
            ("crash_box_length_mm", self.crash_box_length_mm),
            ("unit_width_mm", self.unit_width_mm),
            ("d_pole_mm", self.d_pole_mm),
            ("sigma_y_cb_GPa", self.sigma_y_cb_gpa),
            ("sigma_y_bb_GPa", self.sigma_y_bb_gpa),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(AssemblyError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.beam_nodes_per_chord < 2 || self.crash_box_nodes_per_chord < 2 {
            return Err(AssemblyError::InvalidConfig("members need at least 2 nodes per chord".into()));
        }
        if !(self.rear_mass_t >= 0.0) || !(self.pole_gap_mm >= 0.0) || !(self.friction >= 0.0) {
            return Err(AssemblyError::InvalidConfig(
                "rear mass, pole gap and friction must be non-negative".into(),
            ));
        }
        if !(self.crash_box_y_mm.abs() < 0.5 * self.beam_span_mm) {
            return Err(AssemblyError::InvalidConfig("crash box must sit inside the beam span".into()));
        }
        Ok(())
    }
}

struct Builder {
    nodes: Vec<[f64; 3]>,
    bars: Vec<(usize, usize, u32)>,
}

impl Builder {
    fn node(&mut self, x: f64, y: f64) -> usize {
        self.nodes.push([x, y, 0.0]);
        self.nodes.len() - 1
    }

    fn bar(&mut self, a: usize, b: usize, part: u32) {
        self.bars.push((a, b, part));
    }
}

/// Builds the bar-element bumper assembly: a two-chord transverse beam truss
/// with a crash-box truss on either side, rear crash-box nodes restrained in
/// Y and Z, a uniform initial velocity of −v along X and a rigid pole ahead of
/// the beam.
pub fn build_bumper_assembly(cfg: &BumperConfig) -> Result<Assembly, AssemblyError> {
    cfg.validate()?;
    let mut b = Builder { nodes: Vec::new(), bars: Vec::new() };
    let nb = cfg.beam_nodes_per_chord;
    let x_front = cfg.beam_front_x_mm;
    let x_rear = x_front + cfg.beam_depth_mm;
    let dy = cfg.beam_span_mm / (nb - 1) as f64;
    let y_at = |i: usize| -0.5 * cfg.beam_span_mm + i as f64 * dy;

    // parts: 1 beam chords, 2 beam web, 3/4 crash boxes (left/right)
    let front: Vec<usize> = (0..nb).map(|i| b.node(x_front, y_at(i))).collect();
    let rear: Vec<usize> = (0..nb).map(|i| b.node(x_rear, y_at(i))).collect();
    for i in 0..nb - 1 {
        b.bar(front[i], front[i + 1], 1);
        b.bar(rear[i], rear[i + 1], 1);
    }
    for i in 0..nb {
        b.bar(front[i], rear[i], 2);
    }
    let mid = (nb - 1) / 2;
    for i in 0..nb - 1 {
        // mirrored diagonals keep the truss symmetric about y = 0
        if i < mid {
            b.bar(front[i], rear[i + 1], 2);
        } else {
            b.bar(rear[i], front[i + 1], 2);
        }
    }

    let nc = cfg.crash_box_nodes_per_chord;
    let dx = cfg.crash_box_length_mm / (nc - 1) as f64;
    let mut rear_nodes = Vec::new();
    for (side, part) in [(-1.0, 3u32), (1.0, 4u32)] {
        // the two adjacent beam rear-chord nodes that straddle the box centre
        let target = side * cfg.crash_box_y_mm;
        let j = (((target - y_at(0)) / dy).floor() as usize).min(nb - 2);
        // "inner" is the chord nearer the centreline on both sides
        let (mut inner, mut outer) = if side < 0.0 { (rear[j + 1], rear[j]) } else { (rear[j], rear[j + 1]) };
        for s in 1..nc {
            let x = x_rear + s as f64 * dx;
            let ni = b.node(x, b.nodes[inner][1]);
            let no = b.node(x, b.nodes[outer][1]);
            b.bar(inner, ni, part);
            b.bar(outer, no, part);
            b.bar(ni, no, part);
            if s % 2 == 1 {
                b.bar(inner, no, part);
            } else {
                b.bar(outer, ni, part);
            }
            inner = ni;
            outer = no;
        }
        rear_nodes.push(inner);
        rear_nodes.push(outer);
    }

    let crash_box = Material::dual_phase("DP600", cfg.sigma_y_cb_gpa, cfg.eps_p_fail)?;
    let beam = Material::dual_phase("DP1000", cfg.sigma_y_bb_gpa, cfg.eps_p_fail)?;

    let mut parts = BTreeMap::new();
    let part = |name: &str, group: u32, component: &str, t: f64| Part {
        name: name.to_string(),
        thickness_group: group,
        component: component.to_string(),
        thickness_mm: t,
    };
    parts.insert(1, part("beam_chords", BEAM_GROUP, "bumper", cfg.t_bb_mm));
    parts.insert(2, part("beam_web", BEAM_GROUP, "bumper", cfg.t_bb_mm));
    parts.insert(3, part("crash_box_left", CRASH_BOX_GROUP, "crash_box", cfg.t_cb_mm));
    parts.insert(4, part("crash_box_right", CRASH_BOX_GROUP, "crash_box", cfg.t_cb_mm));

    let n_nodes = b.nodes.len() as u32;
    let n_elems = b.bars.len() as u32;
    let node_id = |i: usize| if cfg.reverse_ids { n_nodes - i as u32 } else { i as u32 + 1 };
    let elem_id = |i: usize| if cfg.reverse_ids { n_elems - i as u32 } else { i as u32 + 1 };

    let nodes = b.nodes.iter().enumerate().map(|(i, &x)| Node { id: node_id(i), x }).collect();
    let elements = b
        .bars
        .iter()
        .enumerate()
        .map(|(i, &(a, c, p))| {
            let (t, mat) = if p <= 2 { (cfg.t_bb_mm, 1) } else { (cfg.t_cb_mm, 0) };
            BarElement { id: elem_id(i), nodes: [a, c], part: p, area: t * cfg.unit_width_mm, material: mat }
        })
        .collect();

    let share = cfg.rear_mass_t / rear_nodes.len() as f64;
    let point_masses = if cfg.rear_mass_t > 0.0 {
        rear_nodes.iter().map(|&i| (i, share)).collect()
    } else {
        Vec::new()
    };
    let fixed = rear_nodes.iter().map(|&i| FixedDofs { node: i, dofs: [false, true, true] }).collect();
    let all: Vec<usize> = (0..b.nodes.len()).collect();

    let asm = Assembly {
        nodes,
        elements,
        parts,
        materials: vec![crash_box, beam],
        point_masses,
        fixed,
        initial_velocity: vec![InitialVelocity { nodes: all, velocity: [-cfg.v_mm_ms, 0.0, 0.0] }],
        loads: Vec::new(),
        walls: vec![RigidWall::pole(cfg.pole_x(), cfg.y_pole_mm, cfg.d_pole_mm, cfg.friction)],
    };
    asm.validate()?;
    Ok(asm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn areas_follow_thickness_times_unit_width() {
        let cfg = BumperConfig {
            t_cb_mm: 1.0,
            t_bb_mm: 1.0,
            beam_nodes_per_chord: 5,
            crash_box_nodes_per_chord: 5,
            crash_box_y_mm: 400.0,
            ..Default::default()
        };
        let asm = build_bumper_assembly(&cfg).unwrap();
        assert!(asm.elements.iter().all(|e| e.area == 10.0));
    }

    #[test]
    fn uniform_initial_velocity() {
        let cfg = BumperConfig { v_mm_ms: 10.0, ..Default::default() };
        let asm = build_bumper_assembly(&cfg).unwrap();
        let v = asm.initial_velocities();
        assert_eq!(v.len(), asm.nodes.len());
        assert!(v.iter().all(|vi| *vi == [-10.0, 0.0, 0.0]));
    }

    #[test]
    fn id_ordering_does_not_change_geometry() {
        let a = build_bumper_assembly(&BumperConfig::default()).unwrap();
        let b = build_bumper_assembly(&BumperConfig { reverse_ids: true, ..Default::default() }).unwrap();
        let sorted_nodes = |asm: &Assembly| {
            let mut v: Vec<(u32, [f64; 3])> = asm.nodes.iter().map(|n| (n.id, n.x)).collect();
            v.sort_by_key(|p| p.0);
            v.into_iter().map(|p| p.1).collect::<Vec<_>>()
        };
        let mut na = sorted_nodes(&a);
        let mut nb = sorted_nodes(&b);
        na.sort_by(|p, q| p.partial_cmp(q).unwrap());
        nb.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert_eq!(na, nb);
        let segs = |asm: &Assembly| {
            let mut s: Vec<[f64; 6]> = asm
                .elements
                .iter()
                .map(|e| {
                    let (p, q) = (asm.nodes[e.nodes[0]].x, asm.nodes[e.nodes[1]].x);
                    [p[0], p[1], p[2], q[0], q[1], q[2]]
                })
                .collect();
            s.sort_by(|p, q| p.partial_cmp(q).unwrap());
            s
        };
        assert_eq!(segs(&a), segs(&b));
    }

    #[test]
    fn rejects_non_positive_dimensions() {
        for cfg in [
            BumperConfig { t_cb_mm: 0.0, ..Default::default() },
            BumperConfig { crash_box_length_mm: -1.0, ..Default::default() },
            BumperConfig { beam_nodes_per_chord: 1, ..Default::default() },
        ] {
            assert!(matches!(build_bumper_assembly(&cfg), Err(AssemblyError::InvalidConfig(_))));
        }
    }

    #[test]
    fn assembly_is_symmetric_and_pole_is_clear() {
        let asm = build_bumper_assembly(&BumperConfig::default()).unwrap();
        for n in &asm.nodes {
            let mirrored = asm
                .nodes
                .iter()
                .any(|m| (m.x[0] - n.x[0]).abs() < 1e-9 && (m.x[1] + n.x[1]).abs() < 1e-9);
            assert!(mirrored, "node {:?} has no mirror image", n.x);
        }
        assert_eq!(asm.front_x(), -40.0);
        assert_eq!(asm.walls.len(), 1);
        assert!(asm.elements.len() <= 200);
    }

    #[test]
    fn json_config_roundtrip_with_defaults() {
        let cfg: BumperConfig = serde_json::from_str(r#"{"v_mm_ms": 4.5, "t_cb_mm": 1.2}"#).unwrap();
        assert_eq!(cfg.v_mm_ms, 4.5);
        assert_eq!(cfg.beam_nodes_per_chord, BumperConfig::default().beam_nodes_per_chord);
        assert!(serde_json::from_str::<BumperConfig>(r#"{"speed": 1}"#).is_err());
    }
}

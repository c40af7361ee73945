use crate::assembly::{Assembly, ConstraintSet, DesignSpace, DesignVector, Param, RigidWall, WallShape};

/// Gauge-strength windows (mm·√GPa) and grade ordering for the bumper beam
/// and crash boxes. Returns the verdict and a description of each violation.
pub fn feasible(d: &DesignVector) -> (bool, Vec<String>) {
    let mut v = Vec::new();
    let bb = d.t_bb * d.sigma_y_bb.sqrt();
    let cb = d.t_cb * d.sigma_y_cb.sqrt();
    if !(0.8..=2.5).contains(&bb) {
        v.push(format!("beam gauge-strength {bb:.4} outside [0.8, 2.5]"));
    }
    if !(0.6..=2.0).contains(&cb) {
        v.push(format!("crash-box gauge-strength {cb:.4} outside [0.6, 2.0]"));
    }
    if d.sigma_y_bb < d.sigma_y_cb {
        v.push(format!("beam yield {} below crash-box yield {}", d.sigma_y_bb, d.sigma_y_cb));
    }
    (v.is_empty(), v)
}

/// Feasibility under the constraint set attached to `space`.
pub fn space_feasible(space: &DesignSpace, d: &DesignVector) -> bool {
    match space.constraints {
        ConstraintSet::None => true,
        ConstraintSet::BumperGauge => feasible(d).0,
    }
}

/// Pole-centre X coordinate that leaves `gap` mm between the pole surface and
/// the bumper front at `x_bumper`.
pub fn place_pole(d_pole: f64, x_bumper: f64, gap: f64) -> f64 {
    -(x_bumper.abs() + 0.5 * d_pole + gap)
}

/// Initial-intersection check: every node's in-plane distance to the pole
/// axis must be at least the pole radius (boundary inclusive). Plane walls
/// require every node on their free side.
pub fn prescreen_geometry(asm: &Assembly, wall: &RigidWall) -> bool {
    match &wall.shape {
        WallShape::Cylinder { center, radius, .. } => asm.nodes.iter().all(|n| {
            let (dx, dy) = (n.x[0] - center[0], n.x[1] - center[1]);
            (dx * dx + dy * dy).sqrt() >= *radius
        }),
        WallShape::Plane { normal, offset } => {
            asm.nodes.iter().all(|n| crate::vec3::dot(*normal, n.x) - offset >= 0.0)
        }
    }
}

/// Nearest feasible design (in normalised yield coordinates) reachable by
/// moving the two yield strengths along their grids. Returns `None` when no
/// grid pair satisfies the constraints.
pub fn project_yields(space: &DesignSpace, d: &DesignVector) -> Option<DesignVector> {
    if space_feasible(space, d) {
        return Some(*d);
    }
    let bcb = space.bounds(Param::SigmaYCb)?;
    let bbb = space.bounds(Param::SigmaYBb)?;
    let mut best: Option<(f64, DesignVector)> = None;
    for i in 0..=bcb.cells() {
        for j in 0..=bbb.cells() {
            let mut c = *d;
            c.sigma_y_cb = bcb.grid_value(i);
            c.sigma_y_bb = bbb.grid_value(j);
            if !feasible(&c).0 {
                continue;
            }
            let dist = (bcb.normalize(c.sigma_y_cb) - bcb.normalize(d.sigma_y_cb)).powi(2)
                + (bbb.normalize(c.sigma_y_bb) - bbb.normalize(d.sigma_y_bb)).powi(2);
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                best = Some((dist, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

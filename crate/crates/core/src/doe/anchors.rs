use serde::{Deserialize, Serialize};

use super::constraints::project_yields;
use super::{CampaignKind, DoeError};
use crate::assembly::{DesignSpace, DesignVector, Param};

/// A deterministic design reserved ahead of the sampled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub label: String,
    pub design: DesignVector,
    /// The yields were moved to reach feasibility.
    pub projected: bool,
}

fn bound(space: &DesignSpace, p: Param) -> Result<crate::assembly::Bounds, DoeError> {
    space
        .bounds(p)
        .copied()
        .ok_or_else(|| DoeError::InvalidSpace(format!("anchor set needs variable {}", p.name())))
}

/// Baseline, both one-factor extrema of every variable and every corner of
/// the box: `1 + 2d + 2^d` designs.
fn box_anchors(space: &DesignSpace) -> Vec<Anchor> {
    let base = space.baseline();
    let plain = |label: String, design| Anchor { label, design, projected: false };
    let mut out = vec![plain("baseline".into(), base)];
    for (p, b) in &space.vars {
        for (tag, value) in [("min", b.min), ("max", b.max)] {
            let mut d = base;
            d.set(*p, value);
            out.push(plain(format!("{}_{tag}", p.name()), d));
        }
    }
    let dim = space.dim();
    for mask in 0..(1usize << dim) {
        let mut d = base;
        let mut tags = Vec::with_capacity(dim);
        for (k, (p, b)) in space.vars.iter().enumerate() {
            let hi = mask >> k & 1 == 1;
            d.set(*p, if hi { b.max } else { b.min });
            tags.push(if hi { "max" } else { "min" });
        }
        out.push(plain(format!("corner_{}", tags.join("_")), d));
    }
    out
}

/// Low-speed and 50/54 km/h frontal hits, lightest and heaviest gauge,
/// smallest and largest pole and the largest lateral offset, each derived
/// from the baseline and projected onto the feasible yield grid.
fn bumper_anchors(space: &DesignSpace) -> Result<Vec<Anchor>, DoeError> {
    let v = bound(space, Param::V)?;
    let t_cb = bound(space, Param::TCb)?;
    let t_bb = bound(space, Param::TBb)?;
    let d_pole = bound(space, Param::DPole)?;
    let y_pole = bound(space, Param::YPole)?;
    let base = space.baseline();
    let frontal = |kmh: f64| {
        let mut d = base;
        d.v = v.round_to_grid(crate::assembly::kmh_to_mm_ms(kmh));
        d.y_pole = y_pole.min;
        d
    };
    let mut raw = vec![
        ("baseline", base),
        ("low_speed", frontal(15.0)),
        ("frontal_50kmh", frontal(50.0)),
        ("frontal_54kmh", frontal(54.0)),
    ];
    let mut gauge = |label, tc: f64, tb: f64| {
        let mut d = base;
        d.t_cb = tc;
        d.t_bb = tb;
        raw.push((label, d));
    };
    gauge("lightest_gauge", t_cb.min, t_bb.min);
    gauge("heaviest_gauge", t_cb.max, t_bb.max);
    let mut with = |label, f: &dyn Fn(&mut DesignVector)| {
        let mut d = base;
        f(&mut d);
        raw.push((label, d));
    };
    with("smallest_pole", &|d| d.d_pole = d_pole.min);
    with("largest_pole", &|d| d.d_pole = d_pole.max);
    with("max_offset", &|d| d.y_pole = y_pole.max);

    raw.into_iter()
        .map(|(label, d)| {
            let p = project_yields(space, &d)
                .ok_or_else(|| DoeError::InfeasibleAnchor(label.to_string()))?;
            Ok(Anchor { label: label.to_string(), projected: p != d, design: p })
        })
        .collect()
}

/// Seed-independent anchor set for a campaign kind.
pub fn anchors(space: &DesignSpace, kind: CampaignKind) -> Result<Vec<Anchor>, DoeError> {
    space.validate().map_err(|e| DoeError::InvalidSpace(e.to_string()))?;
    match kind {
        CampaignKind::Vehicle => Ok(box_anchors(space)),
        CampaignKind::Bumper => bumper_anchors(space),
    }
}

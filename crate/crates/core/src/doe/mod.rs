//! Campaign planning: scrambled Sobol and Latin-hypercube fills, deterministic
//! anchors, gauge feasibility, pole pre-screening and greedy maximin
//! continuation batches.

mod anchors;
mod constraints;
mod lhs;
mod maximin;
mod sobol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{build_bumper_assembly, Assembly, BumperConfig, DesignSpace, DesignVector, RigidWall};

pub use anchors::{anchors, Anchor};
pub use constraints::{feasible, place_pole, prescreen_geometry, project_yields, space_feasible};
pub use lhs::lhs_points;
pub use maximin::maximin_next;
pub use sobol::{sobol_points, SobolSequence, MAX_DIM as SOBOL_MAX_DIM};

/// Draws examined before the rejection rate is judged.
const REJECTION_WINDOW: u64 = 100_000;
/// Hard stop on draws for a single fill.
const MAX_DRAWS: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DoeError {
    #[error("Sobol dimension {dim} unsupported (max {max})")]
    UnsupportedDimension { dim: usize, max: usize },
    #[error("empty point set")]
    EmptyInput,
    #[error("invalid design space: {0}")]
    InvalidSpace(String),
    #[error("invalid plan sizes: {0}")]
    InvalidSizes(String),
    #[error("design space effectively infeasible: {accepted} of {draws} draws accepted")]
    InfeasibleSpace { draws: u64, accepted: u64 },
    #[error("anchor {0} has no feasible projection")]
    InfeasibleAnchor(String),
    #[error("geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    Vehicle,
    Bumper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Anchor,
    Sobol,
    Lhs,
    Maximin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSizes {
    /// Total number of cases including anchors and continuation batches.
    pub total: usize,
    /// Sizes of the maximin continuation batches, taken out of `total`.
    pub continuation: Vec<usize>,
    pub candidate_pool: usize,
}

impl Default for PlanSizes {
    fn default() -> Self {
        PlanSizes { total: 50, continuation: vec![], candidate_pool: 4096 }
    }
}

impl PlanSizes {
    pub fn new(total: usize) -> Self {
        PlanSizes { total, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCase {
    pub case_id: String,
    pub design: DesignVector,
    pub origin: Origin,
    pub phase: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Anchor yields were moved to reach feasibility.
    #[serde(default)]
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub kind: CampaignKind,
    pub seed: u64,
    pub sizes: PlanSizes,
    pub space: DesignSpace,
    /// Geometry used for pole pre-screening (bumper campaigns).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<BumperConfig>,
    pub cases: Vec<PlannedCase>,
}

impl CampaignPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Every bound, grid, feasibility and pre-screen violation in the plan,
    /// plus id ordering problems. Empty for a valid plan.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let screen = match (&self.kind, &self.geometry) {
            (CampaignKind::Bumper, Some(g)) => match Prescreen::new(g) {
                Ok(p) => Some(p),
                Err(e) => {
                    out.push(e.to_string());
                    None
                }
            },
            _ => None,
        };
        let mut seen_sampled = false;
        for (i, c) in self.cases.iter().enumerate() {
            if c.case_id != case_id(i) {
                out.push(format!("case {i} has id {}", c.case_id));
            }
            for v in self.space.check(&c.design) {
                out.push(format!("{}: {v}", c.case_id));
            }
            if !space_feasible(&self.space, &c.design) {
                out.push(format!("{}: infeasible ({})", c.case_id, feasible(&c.design).1.join("; ")));
            }
            if let Some(p) = &screen {
                if !p.accepts(&c.design) {
                    out.push(format!("{}: pole intersects the structure", c.case_id));
                }
            }
            if c.origin == Origin::Anchor && seen_sampled {
                out.push(format!("{}: anchor after sampled points", c.case_id));
            }
            seen_sampled |= c.origin != Origin::Anchor;
        }
        out
    }
}

pub fn case_id(index: usize) -> String {
    format!("sim_{index:05}")
}

/// Pole wall for a design against the bumper geometry.
pub fn pole_for(geometry: &BumperConfig, d: &DesignVector) -> RigidWall {
    RigidWall::pole(
        place_pole(d.d_pole, geometry.beam_front_x_mm, geometry.pole_gap_mm),
        d.y_pole,
        d.d_pole,
        geometry.friction,
    )
}

/// Node layout does not depend on gauges or yields, so one reference build
/// screens every design.
struct Prescreen {
    geometry: BumperConfig,
    reference: Assembly,
}

impl Prescreen {
    fn new(geometry: &BumperConfig) -> Result<Self, DoeError> {
        let reference = build_bumper_assembly(geometry).map_err(|e| DoeError::Geometry(e.to_string()))?;
        Ok(Prescreen { geometry: geometry.clone(), reference })
    }

    fn accepts(&self, d: &DesignVector) -> bool {
        prescreen_geometry(&self.reference, &pole_for(&self.geometry, d))
    }
}

fn split_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Plans a campaign with the default bumper geometry for pre-screening.
pub fn plan_campaign(
    space: &DesignSpace,
    kind: CampaignKind,
    sizes: &PlanSizes,
    seed: u64,
) -> Result<CampaignPlan, DoeError> {
    plan_campaign_with(space, kind, sizes, seed, &BumperConfig::default())
}

/// Anchors first (phase 1), then an LHS (vehicle) or feasibility-filtered
/// Sobol (bumper) fill up to `total − Σ continuation` (phase 1), then each
/// continuation batch picked greedily by maximin from a fresh Sobol pool.
/// Batch `i` is recorded as phase `min(i + 2, 3)`.
pub fn plan_campaign_with(
    space: &DesignSpace,
    kind: CampaignKind,
    sizes: &PlanSizes,
    seed: u64,
    geometry: &BumperConfig,
) -> Result<CampaignPlan, DoeError> {
    let anchor_set = anchors(space, kind)?;
    let cont: usize = sizes.continuation.iter().sum();
    let initial = sizes
        .total
        .checked_sub(cont)
        .filter(|&n| n >= anchor_set.len())
        .ok_or_else(|| {
            DoeError::InvalidSizes(format!(
                "total {} must cover {} anchors plus {} continuation cases",
                sizes.total,
                anchor_set.len(),
                cont
            ))
        })?;
    if cont > 0 && sizes.candidate_pool == 0 {
        return Err(DoeError::InvalidSizes("candidate pool must be positive".into()));
    }
    let screen = match kind {
        CampaignKind::Bumper => Some(Prescreen::new(geometry)?),
        CampaignKind::Vehicle => None,
    };
    let accept = |d: &DesignVector| space_feasible(space, d) && screen.as_ref().is_none_or(|p| p.accepts(d));

    let mut cases = Vec::with_capacity(sizes.total);
    let push = |cases: &mut Vec<PlannedCase>, design, origin, phase, label, projected| {
        let id = case_id(cases.len());
        cases.push(PlannedCase { case_id: id, design, origin, phase, label, projected });
    };
    for a in &anchor_set {
        if !accept(&a.design) {
            return Err(DoeError::InfeasibleAnchor(a.label.clone()));
        }
        push(&mut cases, a.design, Origin::Anchor, 1, Some(a.label.clone()), a.projected);
    }

    let fill = initial - anchor_set.len();
    match kind {
        CampaignKind::Vehicle => {
            for u in lhs_points(space.dim(), fill, seed) {
                push(&mut cases, space.from_unit(&u), Origin::Lhs, 1, None, false);
            }
        }
        CampaignKind::Bumper => {
            let mut seq = SobolSequence::new(space.dim(), Some(seed))?;
            let (mut draws, mut accepted) = (0u64, 0u64);
            while (accepted as usize) < fill {
                let d = space.from_unit(&seq.next_point());
                draws += 1;
                if accept(&d) {
                    accepted += 1;
                    push(&mut cases, d, Origin::Sobol, 1, None, false);
                }
                let stalled = draws >= REJECTION_WINDOW && accepted * 100 < draws;
                if (stalled || draws >= MAX_DRAWS) && (accepted as usize) < fill {
                    return Err(DoeError::InfeasibleSpace { draws, accepted });
                }
            }
        }
    }

    let mut accumulated: Vec<Vec<f64>> = cases.iter().map(|c| space.to_unit(&c.design)).collect();
    for (b, &batch) in sizes.continuation.iter().enumerate() {
        let phase = (b + 2).min(3) as u8;
        let mut pool: Vec<(DesignVector, Vec<f64>)> =
            sobol_points(space.dim(), sizes.candidate_pool, Some(split_seed(seed, b as u64 + 1)))?
                .into_iter()
                .map(|u| space.from_unit(&u))
                .filter(|d| accept(d))
                .map(|d| (d, space.to_unit(&d)))
                .collect();
        for _ in 0..batch {
            if pool.is_empty() {
                return Err(DoeError::InfeasibleSpace { draws: sizes.candidate_pool as u64, accepted: 0 });
            }
            let units: Vec<Vec<f64>> = pool.iter().map(|(_, u)| u.clone()).collect();
            let k = maximin_next(&accumulated, &units)?;
            let (d, u) = pool.remove(k);
            accumulated.push(u);
            push(&mut cases, d, Origin::Maximin, phase, None, false);
        }
    }

    Ok(CampaignPlan {
        kind,
        seed,
        sizes: sizes.clone(),
        space: space.clone(),
        geometry: matches!(kind, CampaignKind::Bumper).then(|| geometry.clone()),
        cases,
    })
}

/// Scrambled Sobol designs mapped onto the grid, without constraints.
pub fn sobol_sample(space: &DesignSpace, count: usize, seed: u64) -> Result<Vec<DesignVector>, DoeError> {
    Ok(sobol_points(space.dim(), count, Some(seed))?.iter().map(|u| space.from_unit(u)).collect())
}

/// Centered Latin-hypercube designs mapped onto the grid.
pub fn lhs_sample(space: &DesignSpace, count: usize, seed: u64) -> Vec<DesignVector> {
    lhs_points(space.dim(), count, seed).iter().map(|u| space.from_unit(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vehicle_plan_of_500() {
        let plan = plan_campaign(&DesignSpace::vehicle(), CampaignKind::Vehicle, &PlanSizes::new(500), 3).unwrap();
        assert_eq!(plan.cases.len(), 500);
        assert_eq!(plan.cases.iter().filter(|c| c.origin == Origin::Anchor).count(), 15);
        assert_eq!(plan.cases.iter().filter(|c| c.origin == Origin::Lhs).count(), 485);
        assert!(plan.violations().is_empty());
    }

    #[test]
    fn bumper_plan_is_clean_and_deterministic() {
        let sizes = PlanSizes { total: 120, continuation: vec![10, 10, 10], candidate_pool: 512 };
        let plan = plan_campaign(&DesignSpace::bumper(), CampaignKind::Bumper, &sizes, 42).unwrap();
        assert_eq!(plan.cases.len(), 120);
        assert!(plan.violations().is_empty(), "{:?}", plan.violations());
        let phases: Vec<u8> = plan.cases.iter().map(|c| c.phase).collect();
        assert_eq!(phases[89], 1);
        assert_eq!(phases[90], 2);
        assert_eq!(phases[100], 3);
        assert_eq!(phases[119], 3);
        assert_eq!(plan, plan_campaign(&DesignSpace::bumper(), CampaignKind::Bumper, &sizes, 42).unwrap());
        let back = CampaignPlan::from_json(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn sizes_must_cover_anchors() {
        let err = plan_campaign(&DesignSpace::bumper(), CampaignKind::Bumper, &PlanSizes::new(5), 1);
        assert!(matches!(err, Err(DoeError::InvalidSizes(_))));
    }

    #[test]
    fn impossible_space_is_reported() {
        let mut space = DesignSpace::bumper();
        // every yield pair violates the grade ordering
        for (p, b) in space.vars.iter_mut() {
            if *p == crate::assembly::Param::SigmaYCb {
                b.min = 0.9;
                b.max = 1.0;
            }
            if *p == crate::assembly::Param::SigmaYBb {
                b.min = 0.25;
                b.max = 0.5;
            }
        }
        let err = plan_campaign(&space, CampaignKind::Bumper, &PlanSizes::new(20), 1);
        assert!(matches!(err, Err(DoeError::InfeasibleAnchor(_))));
    }

    #[test]
    fn unscrambled_origin_maps_to_minimum() {
        let space = DesignSpace::bumper();
        let d = space.from_unit(&sobol_points(7, 1, None).unwrap()[0]);
        for (p, b) in &space.vars {
            assert_eq!(d.get(*p), b.min);
        }
    }

    #[test]
    fn lhs_single_sample_is_the_midpoint() {
        let space = DesignSpace::vehicle();
        assert_eq!(lhs_sample(&space, 1, 0)[0], space.baseline());
    }
}

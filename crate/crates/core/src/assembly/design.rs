use serde::{Deserialize, Serialize};

use super::AssemblyError;

pub const GRID_TOL: f64 = 1e-9;
const KMH_PER_MM_MS: f64 = 3.6;

/// Campaign inputs. Velocity is stored in mm/ms for every campaign kind;
/// vehicle spaces declare their km/h bounds through [`kmh_to_mm_ms`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    #[serde(rename = "v_mm_ms")]
    pub v: f64,
    #[serde(rename = "t_cb_mm")]
    pub t_cb: f64,
    #[serde(rename = "t_bb_mm")]
    pub t_bb: f64,
    #[serde(rename = "sigma_y_cb_GPa")]
    pub sigma_y_cb: f64,
    #[serde(rename = "sigma_y_bb_GPa")]
    pub sigma_y_bb: f64,
    #[serde(rename = "d_pole_mm")]
    pub d_pole: f64,
    #[serde(rename = "y_pole_mm")]
    pub y_pole: f64,
    pub s_front: f64,
    pub s_rail: f64,
}

impl Default for DesignVector {
    fn default() -> Self {
        DesignVector {
            v: 10.0,
            t_cb: 2.0,
            t_bb: 2.0,
            sigma_y_cb: 0.35,
            sigma_y_bb: 0.675,
            d_pole: 250.0,
            y_pole: 0.0,
            s_front: 1.0,
            s_rail: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    V,
    TCb,
    TBb,
    SigmaYCb,
    SigmaYBb,
    DPole,
    YPole,
    SFront,
    SRail,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::V => "v",
            Param::TCb => "t_cb",
            Param::TBb => "t_bb",
            Param::SigmaYCb => "sigma_y_cb",
            Param::SigmaYBb => "sigma_y_bb",
            Param::DPole => "d_pole",
            Param::YPole => "y_pole",
            Param::SFront => "s_front",
            Param::SRail => "s_rail",
        }
    }
}

impl DesignVector {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::V => self.v,
            Param::TCb => self.t_cb,
            Param::TBb => self.t_bb,
            Param::SigmaYCb => self.sigma_y_cb,
            Param::SigmaYBb => self.sigma_y_bb,
            Param::DPole => self.d_pole,
            Param::YPole => self.y_pole,
            Param::SFront => self.s_front,
            Param::SRail => self.s_rail,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let slot = match p {
            Param::V => &mut self.v,
            Param::TCb => &mut self.t_cb,
            Param::TBb => &mut self.t_bb,
            Param::SigmaYCb => &mut self.sigma_y_cb,
            Param::SigmaYBb => &mut self.sigma_y_bb,
            Param::DPole => &mut self.d_pole,
            Param::YPole => &mut self.y_pole,
            Param::SFront => &mut self.s_front,
            Param::SRail => &mut self.s_rail,
        };
        *slot = value;
    }
}

pub fn kmh_to_mm_ms(kmh: f64) -> f64 {
    kmh / KMH_PER_MM_MS
}

pub fn mm_ms_to_kmh(v: f64) -> f64 {
    v * KMH_PER_MM_MS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, AssemblyError> {
        let b = Bounds { min, max, step };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        if !(self.min < self.max) || !(self.step > 0.0) {
            return Err(AssemblyError::InvalidSpace(format!(
                "bounds [{}, {}] step {}",
                self.min, self.max, self.step
            )));
        }
        let cells = (self.max - self.min) / self.step;
        if (cells - cells.round()).abs() > GRID_TOL * cells.max(1.0) {
            return Err(AssemblyError::InvalidSpace(format!(
                "step {} does not divide [{}, {}]",
                self.step, self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize
    }

    /// Nearest grid point, ties rounded away from zero (in grid-index space),
    /// clamped to the interval.
    pub fn round_to_grid(&self, value: f64) -> f64 {
        let idx = ((value - self.min) / self.step).round();
        let idx = idx.clamp(0.0, self.cells() as f64);
        self.grid_value(idx as usize)
    }

    pub fn grid_value(&self, idx: usize) -> f64 {
        if idx >= self.cells() {
            self.max
        } else {
            self.min + idx as f64 * self.step
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        let tol = GRID_TOL * self.step;
        value >= self.min - tol && value <= self.max + tol
    }

    pub fn on_grid(&self, value: f64) -> bool {
        let k = (value - self.min) / self.step;
        (k - k.round()).abs() <= GRID_TOL * k.abs().max(1.0)
    }

    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }

    pub fn midpoint(&self) -> f64 {
        self.round_to_grid(0.5 * (self.min + self.max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintSet {
    /// No engineering constraints beyond the box bounds.
    None,
    /// Gauge·√yield windows and grade ordering for the bumper campaign.
    BumperGauge,
}

/// Active campaign variables with their bounds and grid, plus the feasibility
/// rules that apply to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub vars: Vec<(Param, Bounds)>,
    pub constraints: ConstraintSet,
}

impl DesignSpace {
    /// Seven-variable bumper/pole space.
    pub fn bumper() -> Self {
        let b = |min, max, step| Bounds { min, max, step };
        DesignSpace {
            vars: vec![
                (Param::V, b(2.0, 15.0, 0.5)),
                (Param::TCb, b(1.0, 3.0, 0.1)),
                (Param::TBb, b(1.0, 3.0, 0.1)),
                (Param::SigmaYCb, b(0.150, 0.600, 0.025)),
                (Param::SigmaYBb, b(0.250, 1.000, 0.025)),
                (Param::DPole, b(100.0, 500.0, 10.0)),
                (Param::YPole, b(0.0, 800.0, 25.0)),
            ],
            constraints: ConstraintSet::BumperGauge,
        }
    }

    /// Three-variable vehicle space: impact speed 50–64 km/h and two thickness
    /// scale factors within ±10 %.
    pub fn vehicle() -> Self {
        DesignSpace {
            vars: vec![
                (
                    Param::V,
                    Bounds {
                        min: kmh_to_mm_ms(50.0),
                        max: kmh_to_mm_ms(64.0),
                        step: kmh_to_mm_ms(0.5),
                    },
                ),
                (Param::SFront, Bounds { min: 0.9, max: 1.1, step: 0.01 }),
                (Param::SRail, Bounds { min: 0.9, max: 1.1, step: 0.01 }),
            ],
            constraints: ConstraintSet::None,
        }
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        if self.vars.is_empty() {
            return Err(AssemblyError::InvalidSpace("no variables".into()));
        }
        for (i, (p, b)) in self.vars.iter().enumerate() {
            b.validate()?;
            if self.vars[..i].iter().any(|(q, _)| q == p) {
                return Err(AssemblyError::InvalidSpace(format!("duplicate variable {}", p.name())));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn bounds(&self, p: Param) -> Option<&Bounds> {
        self.vars.iter().find(|(q, _)| *q == p).map(|(_, b)| b)
    }

    /// Baseline design: every active variable at its grid-rounded midpoint,
    /// inactive variables at their nominal defaults.
    pub fn baseline(&self) -> DesignVector {
        let mut d = DesignVector::default();
        for (p, b) in &self.vars {
            d.set(*p, b.midpoint());
        }
        d
    }

    /// Maps a point of the unit cube onto the grid. Coordinates beyond the
    /// active dimension are ignored.
    pub fn from_unit(&self, u: &[f64]) -> DesignVector {
        let mut d = self.baseline();
        for ((p, b), &ui) in self.vars.iter().zip(u) {
            d.set(*p, b.round_to_grid(b.denormalize(ui)));
        }
        d
    }

    pub fn to_unit(&self, d: &DesignVector) -> Vec<f64> {
        self.vars.iter().map(|(p, b)| b.normalize(d.get(*p))).collect()
    }

    /// Bounds and grid membership of every active variable.
    pub fn check(&self, d: &DesignVector) -> Vec<String> {
        let mut out = Vec::new();
        for (p, b) in &self.vars {
            let x = d.get(*p);
            if !b.contains(x) {
                out.push(format!("{} = {} outside [{}, {}]", p.name(), x, b.min, b.max));
            } else if !b.on_grid(x) {
                out.push(format!("{} = {} off grid (step {})", p.name(), x, b.step));
            }
        }
        out
    }
}

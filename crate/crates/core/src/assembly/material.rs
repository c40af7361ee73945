use serde::{Deserialize, Serialize};

use super::AssemblyError;

/// Elastic-plastic steel card with a quasi-static, isothermal Johnson–Cook
/// hardening law. Units: GPa for moduli and stresses, t/mm³ for density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub e_gpa: f64,
    pub nu: f64,
    pub rho_t_mm3: f64,
    pub a_gpa: f64,
    pub b_gpa: f64,
    pub n: f64,
    /// Plastic strain at which an element is eroded; 0 disables erosion.
    pub eps_p_fail: f64,
}

pub const STEEL_E_GPA: f64 = 210.0;
pub const STEEL_NU: f64 = 0.30;
pub const STEEL_RHO: f64 = 7.85e-6;

impl Material {
    /// Dual-phase steel card driven by a single yield parameter: `B = A` and
    /// `n = A / 1 GPa`, elastic constants shared by both grades.
    pub fn dual_phase(name: &str, yield_gpa: f64, eps_p_fail: f64) -> Result<Self, AssemblyError> {
        let mat = Material {
            name: name.to_string(),
            e_gpa: STEEL_E_GPA,
            nu: STEEL_NU,
            rho_t_mm3: STEEL_RHO,
            a_gpa: yield_gpa,
            b_gpa: yield_gpa,
            n: yield_gpa,
            eps_p_fail,
        };
        mat.validate()?;
        Ok(mat)
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let ok = self.e_gpa > 0.0
            && (0.0..0.5).contains(&self.nu)
            && self.rho_t_mm3 > 0.0
            && self.a_gpa > 0.0
            && self.b_gpa >= 0.0
            && self.n > 0.0
            && self.n <= 1.0
            && self.eps_p_fail >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(AssemblyError::InvalidMaterial(self.name.clone()))
        }
    }

    /// Longitudinal bar wave speed `sqrt(E/ρ)` in mm/ms.
    pub fn wave_speed(&self) -> f64 {
        (self.e_gpa / self.rho_t_mm3).sqrt()
    }

    pub fn erosion_enabled(&self) -> bool {
        self.eps_p_fail > 0.0
    }
}

/// Flow stress `A + B·ε_p^n` with rate and thermal factors switched off.
pub fn jc_flow_stress(mat: &Material, eps_p: f64) -> Result<f64, AssemblyError> {
    if !(eps_p >= 0.0) {
        return Err(AssemblyError::NegativePlasticStrain(eps_p));
    }
    Ok(mat.a_gpa + mat.b_gpa * eps_p.powf(mat.n))
}

/// Slope of the hardening curve, `n·B·ε_p^(n−1)`. Infinite at zero strain when
/// `n < 1`; callers bracket their Newton iterations accordingly.
pub fn jc_hardening_slope(mat: &Material, eps_p: f64) -> f64 {
    if mat.b_gpa == 0.0 {
        return 0.0;
    }
    if eps_p <= 0.0 {
        return if mat.n < 1.0 { f64::INFINITY } else { mat.b_gpa };
    }
    mat.n * mat.b_gpa * eps_p.powf(mat.n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(a: f64, b: f64, n: f64) -> Material {
        Material {
            name: "test".into(),
            e_gpa: 210.0,
            nu: 0.3,
            rho_t_mm3: 7.85e-6,
            a_gpa: a,
            b_gpa: b,
            n,
            eps_p_fail: 0.0,
        }
    }

    #[test]
    fn zero_strain_gives_initial_yield() {
        let m = card(0.35, 0.35, 0.35);
        assert_eq!(jc_flow_stress(&m, 0.0).unwrap(), 0.35);
    }

    #[test]
    fn unit_strain_adds_b() {
        let m = card(0.35, 0.35, 0.35);
        assert!((jc_flow_stress(&m, 1.0).unwrap() - 0.70).abs() < 1e-15);
    }

    #[test]
    fn fractional_strain_matches_frozen_value() {
        // 0.25^0.6 = exp(0.6 ln 0.25) = 0.435275281648062 (evaluated with mpmath at 30 digits)
        let m = card(0.6, 0.6, 0.6);
        let expected = 0.6 * (1.0 + 0.435_275_281_648_062_f64);
        assert!((jc_flow_stress(&m, 0.25).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn negative_strain_is_rejected() {
        let m = card(0.35, 0.35, 0.35);
        assert!(matches!(
            jc_flow_stress(&m, -1e-3),
            Err(AssemblyError::NegativePlasticStrain(_))
        ));
    }

    #[test]
    fn flow_stress_is_monotone_on_a_grid() {
        let m = card(0.6, 0.6, 0.6);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..100 {
            let s = jc_flow_stress(&m, i as f64 * 0.02).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn dual_phase_derives_hardening_from_yield() {
        let m = Material::dual_phase("DP600", 0.4, 0.0).unwrap();
        assert_eq!(m.b_gpa, 0.4);
        assert_eq!(m.n, 0.4);
        assert!(Material::dual_phase("bad", 1.2, 0.0).is_err());
    }
}

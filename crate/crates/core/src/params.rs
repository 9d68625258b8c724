//! Physical and numerical parameters, and the complex coefficients of the
//! adiabatic light–spin-wave equations.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Aspect ratio `width / length` above which the cigar-shape assumption is
/// flagged (never rejected).
pub const ASPECT_WARNING: f64 = 0.2;

/// An ensemble described in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalEnsemble {
    /// Number of atoms `N_A`.
    pub atom_count: f64,
    /// Length `L` in meters.
    pub length: f64,
    /// Gaussian radial width `σ⊥` in meters.
    pub width: f64,
    /// Wavelength of the quantum field in meters.
    pub wavelength: f64,
    /// Squared single-atom coupling `|g|²` (rate × length, so that `4 L n₀ |g|² / γ` is dimensionless).
    pub coupling: f64,
    /// Excited-state decay rate `γ` in s⁻¹.
    pub decay: f64,
    /// Detuning `Δ` in s⁻¹.
    pub detuning: f64,
    /// Control Rabi frequency `Ω` in s⁻¹.
    pub rabi: f64,
}

impl PhysicalEnsemble {
    /// Peak atomic density `n₀ = N_A / (2π L σ⊥²)`.
    pub fn peak_density(&self) -> f64 {
        self.atom_count / (2.0 * PI * self.length * self.width * self.width)
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.width / self.length
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("atom_count", self.atom_count),
            ("length", self.length),
            ("width", self.width),
            ("wavelength", self.wavelength),
            ("coupling", self.coupling),
            ("decay", self.decay),
            ("rabi", self.rabi),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(field, format!("must be positive and finite, got {value}")));
            }
        }
        if !self.detuning.is_finite() {
            return Err(Error::invalid("detuning", "must be finite"));
        }
        Ok(())
    }

    /// Converts to the dimensionless parameters that fully determine the
    /// dynamics.
    pub fn to_dimensionless(&self) -> Result<ModelParams> {
        self.validate()?;
        if self.aspect_ratio() > ASPECT_WARNING {
            log::warn!(
                "ensemble aspect ratio {:.3} exceeds {ASPECT_WARNING}; paraxial cigar-shape model may be inaccurate",
                self.aspect_ratio()
            );
        }
        let depth = 4.0 * self.length * self.peak_density() * self.coupling / self.decay;
        let fresnel = self.width * self.width / (self.wavelength * self.length);
        ModelParams::new(depth, fresnel)?
            .with_detuning(self.detuning / self.decay)?
            .with_drive(C64::new(self.rabi / self.decay, 0.0))
    }
}

/// Dimensionless model inputs: optical depth `d₀`, Fresnel number `F`,
/// detuning `Δ/γ` and control field `Ω/γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub depth: f64,
    /// Fresnel number; `f64::INFINITY` switches diffraction off and is
    /// written as `"inf"` so that JSON round-trips it.
    #[serde(with = "fresnel_serde")]
    pub fresnel: f64,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default = "unit_drive")]
    pub drive: C64,
}

/// Serde adapter writing an infinite Fresnel number as `"inf"`.
pub mod fresnel_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "+inf") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

fn unit_drive() -> C64 {
    C64::new(1.0, 0.0)
}

impl ModelParams {
    /// Resonant parameters with a unit real control field.
    pub fn new(depth: f64, fresnel: f64) -> Result<Self> {
        let p = ModelParams { depth, fresnel, detuning: 0.0, drive: unit_drive() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_detuning(mut self, detuning: f64) -> Result<Self> {
        self.detuning = detuning;
        self.validate()?;
        Ok(self)
    }

    pub fn with_drive(mut self, drive: C64) -> Result<Self> {
        self.drive = drive;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(Error::invalid("depth", format!("must be positive, got {}", self.depth)));
        }
        if !(self.fresnel > 0.0) {
            return Err(Error::invalid("fresnel", format!("must be positive, got {}", self.fresnel)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::invalid("detuning", "must be finite"));
        }
        let mag = self.drive.norm();
        if !(mag > 0.0 && mag.is_finite()) {
            return Err(Error::invalid("drive", format!("|drive| must be positive, got {mag}")));
        }
        Ok(())
    }

    /// Coefficient of the diagonal diffraction term, `1/(4πF)`.
    pub fn diffraction_scale(&self) -> f64 {
        crate::propagator::diffraction_scale(self.fresnel)
    }

    pub fn coefficients(&self) -> Result<ModelCoefficients> {
        self.validate()?;
        Ok(ModelCoefficients::from_params(self))
    }
}

/// Complex prefactors of the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    /// `D = 1/2 + iΔ̃`.
    pub denom: C64,
    /// `(d₀/4)/D`, multiplies `B²` in the light equation.
    pub absorb: C64,
    /// `(√d₀ Ω̃/4)/D`, spin wave → light.
    pub couple_light: C64,
    /// `(√d₀ Ω̃*/4)/D`, light → spin wave.
    pub couple_spin: C64,
    /// `(|Ω̃|²/4)/D`.
    pub spin_decay: C64,
}

impl ModelCoefficients {
    fn from_params(p: &ModelParams) -> Self {
        let denom = C64::new(0.5, p.detuning);
        let root = p.depth.sqrt();
        ModelCoefficients {
            denom,
            absorb: C64::from(p.depth / 4.0) / denom,
            couple_light: p.drive * (root / 4.0) / denom,
            couple_spin: p.drive.conj() * (root / 4.0) / denom,
            spin_decay: C64::from(p.drive.norm_sqr() / 4.0) / denom,
        }
    }

    /// Coefficients with the control field conjugated, as used by the
    /// storage kernel.
    pub fn conjugate_drive(&self) -> Self {
        ModelCoefficients { couple_light: self.couple_spin, couple_spin: self.couple_light, ..*self }
    }
}

/// How the frequency axis is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyRule {
    /// Trapezoid rule in `θ` with `ν = -Im Γ_S + Re Γ_S · tan(θ/2)`, covering the whole axis.
    Cayley,
    /// Gauss–Legendre on `[-halfwidth, halfwidth]`.
    Window { halfwidth: f64 },
}

/// How the axial integral joining storage and retrieval is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxialRule {
    /// Closed-form integration over the modal exponentials.
    Exact,
    /// Gauss–Legendre with `n_axial` nodes.
    Quadrature,
}

/// Discretization controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Radial Bessel modes per azimuthal block.
    pub n_radial_max: usize,
    /// Largest `|m|` computed (see the engine for auto-escalation).
    pub m_max: u32,
    /// Frequency nodes.
    pub n_freq: usize,
    /// Axial nodes, used by the quadrature axial rule and the oracle bridge.
    pub n_axial: usize,
    /// Disc radius in units of `σ⊥`.
    pub disc_radius: f64,
    pub frequency: FrequencyRule,
    pub axial: AxialRule,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            n_radial_max: 24,
            m_max: 8,
            n_freq: 40,
            n_axial: 48,
            disc_radius: 6.0,
            frequency: FrequencyRule::Cayley,
            axial: AxialRule::Exact,
        }
    }
}

impl Resolution {
    pub fn validate(&self) -> Result<()> {
        for (field, n) in [("n_radial_max", self.n_radial_max), ("n_freq", self.n_freq), ("n_axial", self.n_axial)] {
            if n < 1 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if !(self.disc_radius >= 3.0 && self.disc_radius.is_finite()) {
            return Err(Error::invalid("disc_radius", format!("must be >= 3, got {}", self.disc_radius)));
        }
        if let FrequencyRule::Window { halfwidth } = self.frequency {
            if !(halfwidth > 0.0 && halfwidth.is_finite()) {
                return Err(Error::invalid("freq_halfwidth", format!("must be positive, got {halfwidth}")));
            }
        }
        Ok(())
    }

    /// True when every count and the disc radius are at least those of `other`.
    pub fn dominates(&self, other: &Resolution) -> bool {
        self.n_radial_max >= other.n_radial_max
            && self.m_max >= other.m_max
            && self.n_freq >= other.n_freq
            && self.n_axial >= other.n_axial
            && self.disc_radius >= other.disc_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ensemble() -> PhysicalEnsemble {
        // σ⊥²/(λL) = 1 with L = 1 cm, λ = 1 μm → σ⊥ = 100 μm.
        let length: f64 = 1e-2;
        let wavelength = 1e-6;
        let width = (wavelength * length).sqrt();
        let decay = 2.0 * PI * 6e6;
        let atom_count = 1e6;
        let n0 = atom_count / (2.0 * PI * length * width * width);
        let coupling = 100.0 * decay / (4.0 * length * n0);
        PhysicalEnsemble { atom_count, length, width, wavelength, coupling, decay, detuning: 0.0, rabi: decay }
    }

    #[test]
    fn dimensionless_round_trip() {
        let p = ensemble().to_dimensionless().unwrap();
        assert_abs_diff_eq!(p.depth, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.fresnel, 1.0, epsilon = 1e-12);
        assert_eq!(p.detuning, 0.0);
        assert_abs_diff_eq!(p.drive.re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn doubling_width_scales_fresnel_and_depth() {
        let e = ensemble();
        let base = e.to_dimensionless().unwrap();
        let wide = PhysicalEnsemble { width: 2.0 * e.width, length: 20.0 * e.width, ..e };
        let wide_base = PhysicalEnsemble { length: 20.0 * e.width, ..e }.to_dimensionless().unwrap();
        let wide = wide.to_dimensionless().unwrap();
        assert_abs_diff_eq!(wide.fresnel / wide_base.fresnel, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wide.depth / wide_base.depth, 0.25, epsilon = 1e-12);
        assert!(base.depth > 0.0);
    }

    #[test]
    fn atom_number_coupling_gauge() {
        let e = ensemble();
        for c in [0.5, 3.0, 17.0] {
            let g = PhysicalEnsemble { atom_count: c * e.atom_count, coupling: e.coupling / c, ..e };
            let a = e.to_dimensionless().unwrap();
            let b = g.to_dimensionless().unwrap();
            assert_abs_diff_eq!(a.depth, b.depth, epsilon = 1e-9 * a.depth);
            assert_eq!(a.fresnel, b.fresnel);
        }
    }

    #[test]
    fn validation_names_the_field() {
        let e = PhysicalEnsemble { width: -1.0, ..ensemble() };
        match e.to_dimensionless() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "width"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(matches!(
            ModelParams::new(100.0, 1.0).unwrap().with_drive(C64::new(0.0, 0.0)),
            Err(Error::Validation { field: "drive", .. })
        ));
    }

    #[test]
    fn resonant_coefficients() {
        let c = ModelParams::new(100.0, 1.0).unwrap().coefficients().unwrap();
        assert_eq!(c.denom, C64::new(0.5, 0.0));
        assert_abs_diff_eq!(c.absorb.re, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.couple_light.re, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.couple_spin.re, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.spin_decay.re, 0.5, epsilon = 1e-12);
        assert_eq!(c.absorb.im, 0.0);
        let prod = c.couple_light * c.couple_spin;
        let expect = C64::from(100.0 / 16.0) / (c.denom * c.denom);
        assert_abs_diff_eq!((prod - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn detuned_coefficients() {
        let p = ModelParams::new(4.0, 1.0).unwrap().with_detuning(10.0).unwrap().with_drive(C64::new(2.0, 0.0)).unwrap();
        let c = p.coefficients().unwrap();
        let inv = C64::new(1.0, 0.0) / C64::new(0.5, 10.0);
        assert_eq!(c.denom, C64::new(0.5, 10.0));
        assert_abs_diff_eq!((c.absorb - inv).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((c.spin_decay - inv).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.spin_decay.norm(), 4.0 / 4.0 / c.denom.norm(), epsilon = 1e-15);
    }

    #[test]
    fn coefficients_are_deterministic() {
        let p = ModelParams::new(37.0, 0.3).unwrap().with_drive(C64::new(0.7, -0.2)).unwrap();
        let a = p.coefficients().unwrap();
        let b = p.coefficients().unwrap();
        assert_eq!(a.absorb.re.to_bits(), b.absorb.re.to_bits());
        assert_eq!(a.couple_light.im.to_bits(), b.couple_light.im.to_bits());
    }

    #[test]
    fn resolution_bounds() {
        assert!(Resolution::default().validate().is_ok());
        assert!(Resolution { disc_radius: 2.0, ..Default::default() }.validate().is_err());
        assert!(Resolution { n_freq: 0, ..Default::default() }.validate().is_err());
        assert!(Resolution { frequency: FrequencyRule::Window { halfwidth: 0.0 }, ..Default::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn infinite_fresnel_survives_json() {
        let p = ModelParams::new(30.0, f64::INFINITY).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<ModelParams>(&text).unwrap(), p);
        let q = ModelParams::new(30.0, 0.1 + 0.2).unwrap();
        assert_eq!(serde_json::from_str::<ModelParams>(&serde_json::to_string(&q).unwrap()).unwrap(), q);
        assert!(serde_json::from_str::<ModelParams>(r#"{"depth":1,"fresnel":1,"colour":2}"#).is_err());
    }
}

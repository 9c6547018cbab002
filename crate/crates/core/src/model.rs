//! Rate constants, the nonlinearities `A` and `κ`, their truncation to the
//! a-priori interval, and the closed-form bounds that box every iterate.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Field;

/// Epidemiological rate constants.
///
/// In normalized mode only `alpha` and `mu` are significant; every other
/// coefficient (and the sum `sigma + phi_e`) reads as 1 through the accessors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub mu: f64,
    pub beta_i: f64,
    pub beta_e: f64,
    pub sigma: f64,
    pub phi_e: f64,
    pub phi_r: f64,
    pub phi_d: f64,
    pub normalized: bool,
}

impl ModelParams {
    pub fn normalized(alpha: f64, mu: f64) -> Self {
        ModelParams {
            alpha,
            mu,
            beta_i: 1.0,
            beta_e: 1.0,
            sigma: 1.0,
            phi_e: 0.0,
            phi_r: 1.0,
            phi_d: 1.0,
            normalized: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        let rates = [
            ("beta_i", self.beta_i),
            ("beta_e", self.beta_e),
            ("sigma", self.sigma),
            ("phi_e", self.phi_e),
            ("phi_r", self.phi_r),
            ("phi_d", self.phi_d),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    fn pick(&self, general: f64) -> f64 {
        if self.normalized {
            1.0
        } else {
            general
        }
    }

    pub fn contact_infected(&self) -> f64 {
        self.pick(self.beta_i)
    }

    pub fn contact_exposed(&self) -> f64 {
        self.pick(self.beta_e)
    }

    /// Outflow rate of the exposed class, `sigma + phi_e`.
    pub fn exposed_outflow(&self) -> f64 {
        self.pick(self.sigma + self.phi_e)
    }

    /// Rate at which exposed individuals become infected.
    pub fn incubation(&self) -> f64 {
        self.pick(self.sigma)
    }

    pub fn recovery(&self) -> f64 {
        self.pick(self.phi_r)
    }

    /// Coefficient of the death term `phi_d * i * n`.
    pub fn death(&self) -> f64 {
        self.pick(self.phi_d)
    }

    /// `(alpha - mu)^+`
    pub fn net_growth(&self) -> f64 {
        (self.alpha - self.mu).max(0.0)
    }

    /// `(mu - alpha)^+`
    pub fn net_decay(&self) -> f64 {
        (self.mu - self.alpha).max(0.0)
    }
}

/// Preset for the contact-modulation function `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactModulation {
    Constant(f64),
    /// `A(y) = max(0, 1 - a0 / y)`
    Saturating(f64),
}

/// Preset for the diffusivity `κ`. All presets are nondecreasing on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusivity {
    Constant(f64),
    /// `κ(y) = y`
    Linear,
    /// `κ(y) = slope * y + offset`
    Affine { slope: f64, offset: f64 },
}

impl ContactModulation {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            ContactModulation::Constant(c) => c,
            ContactModulation::Saturating(a0) => {
                if y > 0.0 {
                    (1.0 - a0 / y).max(0.0)
                } else if a0 > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

impl Diffusivity {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Diffusivity::Constant(c) => c,
            Diffusivity::Linear => y,
            Diffusivity::Affine { slope, offset } => slope * y + offset,
        }
    }

    /// Coefficients `(slope, offset)` with `κ(y) = slope * y + offset`.
    pub fn affine_form(&self) -> (f64, f64) {
        match *self {
            Diffusivity::Constant(c) => (0.0, c),
            Diffusivity::Linear => (1.0, 0.0),
            Diffusivity::Affine { slope, offset } => (slope, offset),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.affine_form(), (s, _) if s == 0.0)
    }
}

/// The pair of nonlinearities entering the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    pub contact: ContactModulation,
    pub diffusivity: Diffusivity,
}

impl Nonlinearity {
    pub fn new(contact: ContactModulation, diffusivity: Diffusivity) -> Result<Self> {
        match contact {
            ContactModulation::Constant(c) if !(c.is_finite() && c >= 0.0) => {
                return Err(Error::invalid(format!("constant A must be nonnegative, got {c}")));
            }
            ContactModulation::Saturating(a0) if !(a0.is_finite() && a0 >= 0.0) => {
                return Err(Error::invalid(format!("saturating A0 must be nonnegative, got {a0}")));
            }
            _ => {}
        }
        match diffusivity {
            Diffusivity::Constant(c) if !(c.is_finite() && c > 0.0) => {
                return Err(Error::invalid(format!("constant kappa must be positive, got {c}")));
            }
            Diffusivity::Affine { slope, offset }
                if !(slope.is_finite() && offset.is_finite() && slope >= 0.0 && offset > 0.0) =>
            {
                return Err(Error::invalid(format!(
                    "affine kappa needs slope >= 0 and offset > 0, got ({slope}, {offset})"
                )));
            }
            _ => {}
        }
        Ok(Nonlinearity { contact, diffusivity })
    }
}

/// Extrema of the discrete initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialExtrema {
    pub sup_n: f64,
    pub sup_s: f64,
    pub sup_h: f64,
    pub sup_i: f64,
    pub inf_n: f64,
}

impl InitialExtrema {
    pub fn from_fields(n: &Field, s: &Field, i: &Field, h: &Field) -> Self {
        InitialExtrema {
            sup_n: n.max(),
            sup_s: s.max(),
            sup_h: h.max(),
            sup_i: i.max(),
            inf_n: n.min(),
        }
    }
}

/// Closed-form a-priori bounds for the discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsLedger {
    pub n_up: f64,
    pub s_up: f64,
    pub h_up: f64,
    pub i_up: f64,
    pub n_low: f64,
    pub kappa_low: f64,
    pub kappa_up: f64,
}

impl BoundsLedger {
    /// Largest of the upper bounds; used to scale invariant slack.
    pub fn scale(&self) -> f64 {
        self.n_up.max(self.s_up).max(self.h_up).max(self.i_up).max(1.0)
    }
}

/// Computes the bounds ledger from the horizon and the initial extrema.
///
/// With normalized parameters these are exactly
/// `n^* = e^{2T(α-μ)^+} sup n0`, `s^* = sup s0 + Tα n^*`,
/// `h^* = sup h0 + T(α n^* + s^*)`, `i^* = sup i0 + T(h^* + s^*)` and
/// `n_* = e^{-T(i^* + (μ-α)^+)} inf n0`. General rates enter as the factors
/// multiplying the corresponding source and loss terms.
pub fn compute_bounds(
    params: &ModelParams,
    nl: &Nonlinearity,
    horizon: f64,
    init: &InitialExtrema,
) -> Result<BoundsLedger> {
    params.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("time horizon must be positive, got {horizon}")));
    }
    if !(init.inf_n.is_finite() && init.inf_n > 0.0) {
        return Err(Error::invalid(format!(
            "inf n0 must be strictly positive, got {}",
            init.inf_n
        )));
    }
    for (name, v) in [
        ("sup n0", init.sup_n),
        ("sup s0", init.sup_s),
        ("sup h0", init.sup_h),
        ("sup i0", init.sup_i),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    if init.sup_n < init.inf_n {
        return Err(Error::invalid("sup n0 is below inf n0"));
    }

    let t = horizon;
    let n_up = (2.0 * t * params.net_growth()).exp() * init.sup_n;
    let s_up = init.sup_s + t * params.alpha * n_up;
    let h_up = init.sup_h + t * (params.alpha * n_up + params.exposed_outflow() * s_up);
    let i_up = init.sup_i + t * params.incubation() * (h_up + s_up);
    let n_low = (-t * (params.death() * i_up + params.net_decay())).exp() * init.inf_n;

    // every preset is nondecreasing, so the extremes sit at the interval ends
    let kappa_low = nl.diffusivity.eval(n_low);
    let kappa_up = nl.diffusivity.eval(n_up);
    if !(kappa_low > 0.0) {
        return Err(Error::invalid(format!("kappa is not positive on [n_low, n_up] ({kappa_low})")));
    }

    Ok(BoundsLedger { n_up, s_up, h_up, i_up, n_low, kappa_low, kappa_up })
}

/// `A` and `κ` composed with the clamp onto `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNonlinearity {
    pub base: Nonlinearity,
    lower: f64,
    upper: f64,
}

pub fn truncate_nonlinearity(nl: Nonlinearity, ledger: &BoundsLedger) -> TruncatedNonlinearity {
    TruncatedNonlinearity { base: nl, lower: ledger.n_low, upper: ledger.n_up }
}

impl TruncatedNonlinearity {
    /// Clamp only from below at zero, leaving the presets otherwise untouched.
    ///
    /// Valid for presets whose diffusivity stays positive at zero (constant
    /// and affine); used to check that truncation never activates.
    pub fn untruncated(nl: Nonlinearity) -> Result<Self> {
        if !(nl.diffusivity.eval(0.0) > 0.0) {
            return Err(Error::invalid("diffusivity preset vanishes at zero; truncation required"));
        }
        Ok(TruncatedNonlinearity { base: nl, lower: 0.0, upper: f64::INFINITY })
    }

    pub fn clamp(&self, y: f64) -> f64 {
        y.min(self.upper).max(self.lower)
    }

    pub fn contact(&self, y: f64) -> f64 {
        self.base.contact.eval(self.clamp(y))
    }

    pub fn diffusivity(&self, y: f64) -> f64 {
        self.base.diffusivity.eval(self.clamp(y))
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn kappa_low(&self) -> f64 {
        self.base.diffusivity.eval(self.lower)
    }

    pub fn kappa_up(&self) -> f64 {
        self.base.diffusivity.eval(self.upper)
    }
}

/// Reason a time step was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRejection {
    NotPositive,
    /// `τ ≥ 1`
    AtLeastOne,
    /// `τ > 1/(2(α-μ))` while `α > μ`.
    StepRestriction { limit: f64 },
}

impl fmt::Display for TauRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRejection::NotPositive => write!(f, "time step must be positive"),
            TauRejection::AtLeastOne => write!(f, "time step must satisfy tau < 1"),
            TauRejection::StepRestriction { limit } => {
                write!(f, "step restriction tau <= 1/(2(alpha - mu)) = {limit} violated")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauCheck {
    Admissible,
    Rejected(TauRejection),
}

impl TauCheck {
    pub fn is_admissible(&self) -> bool {
        matches!(self, TauCheck::Admissible)
    }
}

pub fn validate_tau(params: &ModelParams, tau: f64) -> TauCheck {
    if !(tau > 0.0) {
        return TauCheck::Rejected(TauRejection::NotPositive);
    }
    if tau >= 1.0 {
        return TauCheck::Rejected(TauRejection::AtLeastOne);
    }
    if params.alpha > params.mu {
        let limit = 0.5 / (params.alpha - params.mu);
        if tau > limit {
            return TauCheck::Rejected(TauRejection::StepRestriction { limit });
        }
    }
    TauCheck::Admissible
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger(n_low: f64, n_up: f64) -> BoundsLedger {
        BoundsLedger {
            n_up,
            s_up: 1.0,
            h_up: 1.0,
            i_up: 1.0,
            n_low,
            kappa_low: 1.0,
            kappa_up: 1.0,
        }
    }

    fn extrema(sup_n: f64, sup_s: f64, sup_h: f64, sup_i: f64, inf_n: f64) -> InitialExtrema {
        InitialExtrema { sup_n, sup_s, sup_h, sup_i, inf_n }
    }

    fn linear_kappa() -> Nonlinearity {
        Nonlinearity::new(ContactModulation::Constant(1.0), Diffusivity::Linear).unwrap()
    }

    #[test]
    fn equal_rates_leave_population_bound_untouched() {
        let p = ModelParams::normalized(0.3, 0.3);
        let b = compute_bounds(&p, &linear_kappa(), 1.0, &extrema(2.5, 1.0, 1.0, 0.1, 1.0)).unwrap();
        assert_eq!(b.n_up, 2.5);
    }

    #[test]
    fn reference_bounds() {
        // independent evaluation of the closed forms
        let n_up = 2.0 * 0.5f64.exp();
        let s_up = 1.0 + 0.5 * n_up;
        let h_up = 1.0 + (0.5 * n_up + s_up);
        let i_up = 0.5 + (h_up + s_up);
        let n_low = (-(i_up + 0.0)).exp();
        assert!((n_up - 3.297442541400256).abs() < 1e-12);

        let p = ModelParams::normalized(0.5, 0.25);
        let b = compute_bounds(&p, &linear_kappa(), 1.0, &extrema(2.0, 1.0, 1.0, 0.5, 1.0)).unwrap();
        assert!((b.n_up - n_up).abs() < 1e-12);
        assert!((b.s_up - s_up).abs() < 1e-12);
        assert!((b.h_up - h_up).abs() < 1e-12);
        assert!((b.i_up - i_up).abs() < 1e-12);
        assert!((b.n_low - n_low).abs() < 1e-15);
        assert!((b.s_up - 2.64872).abs() < 1e-5);
        assert!((b.h_up - 5.29744).abs() < 1e-5);
        assert!((b.i_up - 8.44616).abs() < 1e-5);
        assert!((b.n_low - 2.145e-4).abs() < 1e-6);
        assert_eq!(b.kappa_low, b.n_low);
        assert_eq!(b.kappa_up, b.n_up);
    }

    #[test]
    fn constant_kappa_bounds_are_the_constant() {
        let nl = Nonlinearity::new(ContactModulation::Constant(1.0), Diffusivity::Constant(0.7)).unwrap();
        let p = ModelParams::normalized(1.0, 0.2);
        let b = compute_bounds(&p, &nl, 2.0, &extrema(3.0, 1.0, 2.0, 0.5, 0.5)).unwrap();
        assert_eq!(b.kappa_low, 0.7);
        assert_eq!(b.kappa_up, 0.7);
    }

    #[test]
    fn rejects_nonpositive_inf_n() {
        let p = ModelParams::normalized(1.0, 1.0);
        assert!(compute_bounds(&p, &linear_kappa(), 1.0, &extrema(1.0, 0.0, 0.0, 0.0, 0.0)).is_err());
        assert!(compute_bounds(&p, &linear_kappa(), 1.0, &extrema(1.0, 0.0, 0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn rejects_nonpositive_rates() {
        let mut p = ModelParams::normalized(1.0, 1.0);
        p.mu = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::normalized(1.0, 1.0);
        p.normalized = false;
        p.sigma = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn normalized_accessors_read_one() {
        let mut p = ModelParams::normalized(0.4, 0.1);
        p.sigma = 5.0;
        assert_eq!(p.incubation(), 1.0);
        assert_eq!(p.exposed_outflow(), 1.0);
        p.normalized = false;
        assert_eq!(p.incubation(), 5.0);
        assert_eq!(p.exposed_outflow(), 5.0);
    }

    #[test]
    fn truncation_clamps_linear_kappa() {
        let t = truncate_nonlinearity(linear_kappa(), &ledger(0.5, 2.0));
        assert_eq!(t.diffusivity(0.1), 0.5);
        assert_eq!(t.diffusivity(1.0), 1.0);
        assert_eq!(t.diffusivity(5.0), 2.0);
    }

    #[test]
    fn truncation_clamps_saturating_contact() {
        let nl = Nonlinearity::new(ContactModulation::Saturating(1.0), Diffusivity::Linear).unwrap();
        let t = truncate_nonlinearity(nl, &ledger(0.5, 2.0));
        assert_eq!(t.contact(0.1), 0.0);
        assert_eq!(t.contact(2.0), 0.5);
        assert_eq!(t.contact(1e9), 0.5);
    }

    #[test]
    fn truncation_is_inert_inside_interval() {
        let nl = Nonlinearity::new(
            ContactModulation::Saturating(0.3),
            Diffusivity::Affine { slope: 2.0, offset: 0.1 },
        )
        .unwrap();
        let t = truncate_nonlinearity(nl, &ledger(0.25, 4.0));
        for k in 0..=1000 {
            let y = 0.25 + 3.75 * (k as f64) / 1000.0;
            assert_eq!(t.contact(y), nl.contact.eval(y));
            assert_eq!(t.diffusivity(y), nl.diffusivity.eval(y));
        }
    }

    #[test]
    fn untruncated_requires_positive_kappa_at_zero() {
        assert!(TruncatedNonlinearity::untruncated(linear_kappa()).is_err());
        let nl = Nonlinearity::new(ContactModulation::Constant(1.0), Diffusivity::Constant(0.1)).unwrap();
        let t = TruncatedNonlinearity::untruncated(nl).unwrap();
        assert_eq!(t.diffusivity(1e6), 0.1);
    }

    #[test]
    fn tau_examples() {
        let p = ModelParams::normalized(2.0, 1.0);
        assert!(validate_tau(&p, 0.4).is_admissible());
        assert!(matches!(
            validate_tau(&p, 0.6),
            TauCheck::Rejected(TauRejection::StepRestriction { .. })
        ));
        let q = ModelParams::normalized(0.5, 1.0);
        assert!(validate_tau(&q, 0.99).is_admissible());
        for p in [p, q] {
            assert_eq!(validate_tau(&p, 1.2), TauCheck::Rejected(TauRejection::AtLeastOne));
            assert_eq!(validate_tau(&p, 0.0), TauCheck::Rejected(TauRejection::NotPositive));
        }
    }

    #[test]
    fn invalid_presets_rejected() {
        assert!(Nonlinearity::new(ContactModulation::Constant(-1.0), Diffusivity::Linear).is_err());
        assert!(Nonlinearity::new(ContactModulation::Constant(1.0), Diffusivity::Constant(0.0)).is_err());
        assert!(Nonlinearity::new(
            ContactModulation::Constant(1.0),
            Diffusivity::Affine { slope: 1.0, offset: 0.0 }
        )
        .is_err());
    }
}

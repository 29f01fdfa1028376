//! The pointwise error operator and everything derived from it: the term-by-
//! term decomposition of the ansatz residual, the structured expansion in the
//! shrinking inner region, the nonlinear remainder, the potential seen by the
//! linearization, and the weighted space-time norms with their scan tables.
//!
//! The operator is
//!
//! ```text
//!     S[u] = −u_t + Δu + (1/x₁) ∂₁u + u^p,
//! ```
//!
//! so S[u] ≡ 0 exactly on solutions of the reduced equation. Applied to the
//! ansatz W₂ it splits into named constituents e₁…e₆ plus the correction
//! source; the splits here are all exact identities, verified by reassembling
//! the operator from the pieces at random points. Sup-norms are reported as
//! sups over a published sampling lattice, never as abstract quantities.

use std::cell::Cell;
use std::path::Path;

use rayon::prelude::*;

use crate::ansatz::{
    self, check_point, cutoff_radial, eta, h_piece, split, CorrectionSpec, FieldDerivs,
    GeometryConfig, ParamPath, PathState,
};
use crate::bubble::{
    bubble_u, bubble_u_prime, correction_h, kernel_z0, pi_profile, u_pow_p_minus_1, BubbleContext,
};
use crate::config::{DimensionConfig, NormSpec};
use crate::error::{Error, Result};
use crate::export;
use crate::profile::RadialProfile;
use crate::quad::integral_ball_axi;

/// Radius out to which the correction profile is tabulated; beyond it the
/// stored r^{-2} tail takes over.
const CORRECTION_RADIUS: f64 = 1e3;

// ---------------------------------------------------------------------------
// critical powers
// ---------------------------------------------------------------------------

/// v^p. Integer p (only n = 6 among supported dimensions) uses the exact
/// integer power, which is defined for either sign; fractional p requires
/// v ≥ 0 and fails instead of silently producing NaN, since a negative base
/// signals leaving the positivity regime the construction lives in.
pub fn powp(cfg: &DimensionConfig, v: f64) -> Result<f64> {
    let rounded = cfg.p.round();
    if (cfg.p - rounded).abs() < 1e-12 {
        return Ok(v.powi(rounded as i32));
    }
    if v < 0.0 {
        return Err(Error::NonFinite("fractional power of a negative base"));
    }
    Ok(v.powf(cfg.p))
}

/// v^{p−1}, same branch rules as [`powp`].
pub fn powp_minus_1(cfg: &DimensionConfig, v: f64) -> Result<f64> {
    let pm1 = cfg.p - 1.0;
    let rounded = pm1.round();
    if (pm1 - rounded).abs() < 1e-12 {
        return Ok(v.powi(rounded as i32));
    }
    if v < 0.0 {
        return Err(Error::NonFinite("fractional power of a negative base"));
    }
    Ok(v.powf(pm1))
}

/// (b − h)^p − b^p + p b^{p−1} h: the second-order remainder of the power
/// function. For |h| ≪ |b| the naive difference loses the entire value to
/// cancellation (it is O((h/b)² b^p) against intermediates of size b^p), so
/// it is summed through the binomial tail there.
fn power_second_remainder(cfg: &DimensionConfig, b: f64, h: f64) -> Result<f64> {
    let p = cfg.p;
    if b != 0.0 {
        let rho = h / b;
        if rho.abs() < 1e-4 {
            let b2 = 0.5 * p * (p - 1.0);
            let b3 = b2 * (p - 2.0) / 3.0;
            let b4 = b3 * (p - 3.0) / 4.0;
            return Ok(powp(cfg, b)? * (rho * rho * (b2 - rho * (b3 - rho * b4))));
        }
    }
    Ok(powp(cfg, b - h)? - powp(cfg, b)? + p * powp_minus_1(cfg, b)? * h)
}

/// b^{p−1} − (b − h)^{p−1}: the first-order difference of the linearization
/// weight, through the binomial tail when |h| ≪ |b|.
fn power_pm1_difference(cfg: &DimensionConfig, b: f64, h: f64) -> Result<f64> {
    let q = cfg.p - 1.0;
    if b != 0.0 {
        let rho = h / b;
        if rho.abs() < 1e-4 {
            let c2 = 0.5 * q * (q - 1.0);
            let c3 = c2 * (q - 2.0) / 3.0;
            return Ok(powp_minus_1(cfg, b)? * (rho * (q - rho * (c2 - rho * c3))));
        }
    }
    Ok(powp_minus_1(cfg, b)? - powp_minus_1(cfg, b - h)?)
}

// ---------------------------------------------------------------------------
// the error operator
// ---------------------------------------------------------------------------

/// A scalar space-time field that can report the derivative bundle the error
/// operator consumes. Fields with closed-form derivatives provide them
/// directly; closure-backed fields fall back to [`FdField`].
pub trait SpaceTimeField {
    fn dim(&self) -> &DimensionConfig;
    fn value(&self, x: &[f64], t: f64) -> Result<f64>;
    fn derivs(&self, x: &[f64], t: f64) -> Result<FieldDerivs>;
}

/// S[u](x, t) = −u_t + Δu + (1/x₁)∂₁u + u^p. The drift term makes x₁ = 0 a
/// genuine boundary, so points with x₁ ≤ 0 are rejected.
pub fn apply_s<F: SpaceTimeField + ?Sized>(u: &F, x: &[f64], t: f64) -> Result<f64> {
    if x[0] <= 0.0 {
        let rho = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        return Err(Error::OutsideDomain { x1: x[0], rho });
    }
    let d = u.derivs(x, t)?;
    Ok(-d.dt + d.lap + d.dx1 / x[0] + powp(u.dim(), d.value)?)
}

/// Closure-backed field with fourth-order centered differences for all
/// derivatives. Steps default to 1e−3 and can be tightened per use; the
/// stencil is five points wide in each direction, so the closure must be
/// evaluable in a ±2·step margin around the query point.
pub struct FdField<F> {
    cfg: DimensionConfig,
    f: F,
    dx: f64,
    dt: f64,
}

impl<F: Fn(&[f64], f64) -> Result<f64>> FdField<F> {
    pub fn new(cfg: &DimensionConfig, f: F) -> Self {
        Self {
            cfg: *cfg,
            f,
            dx: 1e-3,
            dt: 1e-3,
        }
    }

    pub fn with_steps(cfg: &DimensionConfig, f: F, dx: f64, dt: f64) -> Self {
        Self { cfg: *cfg, f, dx, dt }
    }

    fn sample_x(&self, x: &[f64], axis: usize, offset: f64, t: f64) -> Result<f64> {
        let mut shifted = x.to_vec();
        shifted[axis] += offset;
        (self.f)(&shifted, t)
    }
}

impl<F: Fn(&[f64], f64) -> Result<f64>> SpaceTimeField for FdField<F> {
    fn dim(&self) -> &DimensionConfig {
        &self.cfg
    }

    fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        (self.f)(x, t)
    }

    fn derivs(&self, x: &[f64], t: f64) -> Result<FieldDerivs> {
        let h = self.dx;
        let k = self.dt;
        let value = (self.f)(x, t)?;
        let dt = (-(self.f)(x, t + 2.0 * k)? + 8.0 * (self.f)(x, t + k)?
            - 8.0 * (self.f)(x, t - k)?
            + (self.f)(x, t - 2.0 * k)?)
            / (12.0 * k);
        let mut dx1 = 0.0;
        let mut lap = 0.0;
        for axis in 0..x.len() {
            let fp2 = self.sample_x(x, axis, 2.0 * h, t)?;
            let fp1 = self.sample_x(x, axis, h, t)?;
            let fm1 = self.sample_x(x, axis, -h, t)?;
            let fm2 = self.sample_x(x, axis, -2.0 * h, t)?;
            if axis == 0 {
                dx1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
            }
            lap += (-fp2 + 16.0 * fp1 - 30.0 * value + 16.0 * fm1 - fm2) / (12.0 * h * h);
        }
        Ok(FieldDerivs { value, dt, dx1, lap })
    }
}

/// The two-bubble first approximation W₁ as a field with analytic derivatives.
pub struct W1Field<'a> {
    pub path: &'a ParamPath,
}

impl SpaceTimeField for W1Field<'_> {
    fn dim(&self) -> &DimensionConfig {
        self.path.cfg()
    }

    fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        ansatz::eval_w1(self.path, x, t)
    }

    fn derivs(&self, x: &[f64], t: f64) -> Result<FieldDerivs> {
        ansatz::eval_w1_derivs(self.path, x, t)
    }
}

/// The corrected approximation W₂ as a field with analytic derivatives.
pub struct W2Field<'a> {
    pub res: &'a Residuals,
}

impl SpaceTimeField for W2Field<'_> {
    fn dim(&self) -> &DimensionConfig {
        self.res.path.cfg()
    }

    fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        ansatz::eval_w2(&self.res.path, &self.res.geo, &self.res.h, x, t)
    }

    fn derivs(&self, x: &[f64], t: f64) -> Result<FieldDerivs> {
        ansatz::eval_w2_derivs(&self.res.path, &self.res.geo, &self.res.ctx, &self.res.h, x, t)
    }
}

// ---------------------------------------------------------------------------
// term decomposition
// ---------------------------------------------------------------------------

/// The four constituents of S[W₁]: translation and drift of the primary
/// bubble against the translation kernel (e1), its scaling rate plus the
/// linear part of the bubble-bubble interaction (e2), the mirror image of
/// both (e3), and the superlinear interaction remainder (e4). The sum is
/// S[W₁] exactly.
#[derive(Debug, Clone, Copy)]
pub struct W1Terms {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

impl W1Terms {
    pub fn sum(&self) -> f64 {
        self.e1 + self.e2 + self.e3 + self.e4
    }
}

/// The two additional constituents of S[W₂]: the time derivative of the
/// localized correction (e5) and the commutators of the correction with the
/// cutoff, the drift, and the nonlinearity (e6). Both vanish identically
/// outside the cutoff support.
#[derive(Debug, Clone, Copy)]
pub struct W2Terms {
    pub e5: f64,
    pub e6: f64,
}

/// Structured expansion of λ^{(n+2)/2} S[W₂] in the inner region: the part
/// proportional to the scale correction rates, the part proportional to the
/// center correction rates, and the numerical remainder after removing both.
#[derive(Debug, Clone, Copy)]
pub struct InnerExpansion {
    pub scale_part: f64,
    pub center_part: f64,
    pub remainder: f64,
}

/// Shared per-point geometry for the term evaluators.
struct Frame {
    st: PathState,
    r_in: f64,
    dir_in: f64,
    r_out: f64,
    dir_out: f64,
    y_in: f64,
    y_out: f64,
    /// λ^{−(n−2)/2}, λ^{−n/2}, λ^{−(n+2)/2}.
    a0: f64,
    a1: f64,
    a2: f64,
}

/// Everything the decomposition needs, bundled: parameter path, cutoff
/// geometry, bubble integrals, and the correction profile (solved once at
/// construction).
pub struct Residuals {
    path: ParamPath,
    geo: GeometryConfig,
    ctx: BubbleContext,
    h: RadialProfile,
    /// The inner region is |x − ξ| < delta·d.
    delta: f64,
}

impl Residuals {
    pub fn new(path: ParamPath, geo: GeometryConfig) -> Result<Self> {
        let ctx = BubbleContext::new(path.cfg())?;
        let h = correction_h(path.cfg(), CORRECTION_RADIUS)?;
        Ok(Self {
            path,
            geo,
            ctx,
            h,
            delta: 0.1,
        })
    }

    /// Override the inner-region radius factor (default 0.1).
    pub fn with_inner_radius_factor(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "inner radius factor must lie in (0, 1/2], got {delta}"
            )));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn path(&self) -> &ParamPath {
        &self.path
    }

    pub fn geo(&self) -> &GeometryConfig {
        &self.geo
    }

    pub fn ctx(&self) -> &BubbleContext {
        &self.ctx
    }

    pub fn h_profile(&self) -> &RadialProfile {
        &self.h
    }

    pub fn inner_radius_factor(&self) -> f64 {
        self.delta
    }

    pub fn w1_field(&self) -> W1Field<'_> {
        W1Field { path: &self.path }
    }

    pub fn w2_field(&self) -> W2Field<'_> {
        W2Field { res: self }
    }

    /// S[W₁] through the analytic derivative bundle.
    pub fn s_w1(&self, x: &[f64], t: f64) -> Result<f64> {
        apply_s(&self.w1_field(), x, t)
    }

    /// S[W₂] through the analytic derivative bundle.
    pub fn s_w2(&self, x: &[f64], t: f64) -> Result<f64> {
        apply_s(&self.w2_field(), x, t)
    }

    fn frame(&self, x: &[f64], t: f64) -> Result<Frame> {
        let cfg = self.path.cfg();
        check_point(cfg, x)?;
        if x[0] <= 0.0 {
            let rho = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(Error::OutsideDomain { x1: x[0], rho });
        }
        let st = self.path.state(t)?;
        let (r_in, dx1_in, _) = split(x, st.d, 1.0);
        let (r_out, dx1_out, _) = split(x, st.d, -1.0);
        let a0 = st.lam.powf(-0.5 * cfg.bubble_decay());
        let a1 = a0 / st.lam;
        Ok(Frame {
            st,
            r_in,
            dir_in: if r_in > 0.0 { dx1_in / r_in } else { 0.0 },
            r_out,
            dir_out: if r_out > 0.0 { dx1_out / r_out } else { 0.0 },
            y_in: r_in / st.lam,
            y_out: r_out / st.lam,
            a0,
            a1,
            a2: a1 / st.lam,
        })
    }

    /// The four constituents of S[W₁] at one point.
    pub fn w1_terms(&self, x: &[f64], t: f64) -> Result<W1Terms> {
        let cfg = self.path.cfg();
        let f = self.frame(x, t)?;
        let drift = 1.0 / x[0];
        let z1_in = bubble_u_prime(f.y_in, cfg) * f.dir_in;
        let z1_out = bubble_u_prime(f.y_out, cfg) * f.dir_out;
        let w0 = f.a0 * bubble_u(f.y_in, cfg);
        let w0bar = f.a0 * bubble_u(f.y_out, cfg);
        // (λ^{−(n−2)/2} U)^{p−1} = λ^{−2} U^{p−1} exactly.
        let w0_pm1 = u_pow_p_minus_1(f.y_in, cfg) / (f.st.lam * f.st.lam);
        let e1 = f.a1 * (f.st.ddot + drift) * z1_in;
        let e2 = f.a1 * f.st.lamdot * kernel_z0(f.y_in, cfg) - cfg.p * w0_pm1 * w0bar;
        let e3 = f.a1 * ((f.st.ddot - drift) * z1_out - f.st.lamdot * kernel_z0(f.y_out, cfg));
        let e4 = powp(cfg, w0bar)? + power_second_remainder(cfg, w0, w0bar)?;
        Ok(W1Terms { e1, e2, e3, e4 })
    }

    /// (λ₀/d₀)^{n−2} [Δw + p W₀^{p−1} w] η at one point. The bracket is the
    /// equation the correction profile solves, so it collapses to
    /// λ^{−(n+2)/2} π(y) and is evaluated through the source, not by
    /// differencing the profile.
    pub fn correction_term(&self, x: &[f64], t: f64) -> Result<f64> {
        let cfg = self.path.cfg();
        let f = self.frame(x, t)?;
        let s = f.r_in / (self.geo.b * f.st.d0);
        if s >= 2.0 {
            return Ok(0.0);
        }
        let etav = if s <= 1.0 { 1.0 } else { eta(s) };
        let c = (f.st.lam0 / f.st.d0).powf(cfg.bubble_decay());
        Ok(c * f.a2 * pi_profile(f.y_in, &self.ctx) * etav)
    }

    /// The two additional constituents of S[W₂] at one point; exactly zero
    /// outside the cutoff support.
    pub fn w2_terms(&self, x: &[f64], t: f64) -> Result<W2Terms> {
        let cfg = self.path.cfg();
        let f = self.frame(x, t)?;
        let st = &f.st;
        let s = f.r_in / (self.geo.b * st.d0);
        if s >= 2.0 {
            return Ok(W2Terms { e5: 0.0, e6: 0.0 });
        }
        let wp = h_piece(cfg, &self.ctx, &self.h, st, x, 1.0);
        let wm = h_piece(cfg, &self.ctx, &self.h, st, x, -1.0);
        let et = cutoff_radial(cfg.nf(), f.r_in, f.dir_in, self.geo.b * st.d0, -self.geo.b, st.ddot);
        let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
        let cdot = -cfg.bubble_decay() / (cfg.nf() - 4.0) * c / st.d0;
        let gv = wp.value - wm.value;
        let wval = gv * et.value;
        let e5 = c * ((wp.dt - wm.dt) * et.value + gv * et.dt);

        // cos of the angle between the two radial directions, for ∇w̄·∇η.
        let cosang = if f.r_in > 0.0 && f.r_out > 0.0 {
            (f.dir_in * f.r_in) * (f.dir_out * f.r_out) / (f.r_in * f.r_out)
                + (1.0 - f.dir_in * f.dir_in).max(0.0).sqrt()
                    * (1.0 - f.dir_out * f.dir_out).max(0.0).sqrt()
        } else {
            0.0
        };
        let w0_pm1 = u_pow_p_minus_1(f.y_in, cfg) / (st.lam * st.lam);
        let mirror = c * (wm.lap + cfg.p * w0_pm1 * wm.value) * et.value;
        // Sign fixed by the product rule Δ[(w−w̄)η] = (Δw−Δw̄)η
        // + 2∇(w−w̄)·∇η + (w−w̄)Δη: the first piece feeds the correction
        // term, the last two come out with a minus here.
        let grad_dot = (wp.dradial - wm.dradial * cosang) * et.dradial;
        let cross = -c * (2.0 * grad_dot + gv * et.lap);
        let drift = -c * ((wp.dx1 - wm.dx1) * et.value + gv * et.dx1) / x[0];
        // (W₁ − cW)^p − W₁^p + p c W₀^{p−1} W, split so each half stays
        // cancellation-free: a second-order remainder around W₁ plus the
        // weight difference W₀^{p−1} − W₁^{p−1} carried by the mirror term.
        let w0 = f.a0 * bubble_u(f.y_in, cfg);
        let w0bar = f.a0 * bubble_u(f.y_out, cfg);
        let w1val = w0 - w0bar;
        let nonlin = power_second_remainder(cfg, w1val, c * wval)?
            + cfg.p * c * wval * power_pm1_difference(cfg, w0, w0bar)?;
        let e6 = mirror + cross + cdot * wval + drift + nonlin;
        Ok(W2Terms { e5, e6 })
    }

    /// The forcing handed to the inner problem: e1 + e2 minus the correction
    /// term. Multiplied by the inner cutoff η_R it is the part of S[W₂] the
    /// inner linear theory absorbs.
    pub fn inner_forcing(&self, x: &[f64], t: f64) -> Result<f64> {
        let w1t = self.w1_terms(x, t)?;
        Ok(w1t.e1 + w1t.e2 - self.correction_term(x, t)?)
    }

    /// The residual left to the outer problem:
    /// (e1 + e2 − correction)(1 − η_R) + e3 + e4 + e5 + e6. Together with
    /// η_R times [`Self::inner_forcing`] this reassembles S[W₂] exactly.
    pub fn outer_error(&self, x: &[f64], t: f64) -> Result<f64> {
        let w1t = self.w1_terms(x, t)?;
        let w2t = self.w2_terms(x, t)?;
        let corr = self.correction_term(x, t)?;
        let etar = ansatz::cutoff_eta_r(&self.path, &self.geo, x, t)?.value;
        Ok((w1t.e1 + w1t.e2 - corr) * (1.0 - etar) + w1t.e3 + w1t.e4 + w2t.e5 + w2t.e6)
    }

    /// Structured expansion of λ^{(n+2)/2} S[W₂](ξ + λy, t) for |λy| < δ·d.
    /// The scale part carries the rates λλ̇₁ + λ̇₀λ₁ and the offset ratio
    /// λ₁/λ₀ − d₁/d₀ (at leading order in that ratio; the dropped factor is
    /// absorbed by the remainder). The center part carries ḋ₁ and the exact
    /// center-drift bracket. The remainder is computed, not modeled:
    /// λ^{(n+2)/2} S[W₂] minus the two displayed parts.
    pub fn inner_expansion(&self, y: &[f64], t: f64) -> Result<InnerExpansion> {
        let cfg = self.path.cfg();
        check_point(cfg, y)?;
        let st = self.path.state(t)?;
        let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if st.lam * ry >= self.delta * st.d {
            return Err(Error::OutsideDomain {
                x1: 1.0 + st.d + st.lam * y[0],
                rho: st.lam * (ry * ry - y[0] * y[0]).max(0.0).sqrt(),
            });
        }
        let mut x = vec![0.0; cfg.n];
        x[0] = 1.0 + st.d + st.lam * y[0];
        for (xi, yi) in x.iter_mut().zip(y.iter()).skip(1) {
            *xi = st.lam * yi;
        }

        let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
        let hv = self.h.eval(ry);
        let hp = self.h.deriv(ry);
        let hcomb = 0.5 * cfg.bubble_decay() * hv + hp * ry;
        let upm1 = u_pow_p_minus_1(ry, cfg);
        // p(n−2)α/2^{n−2}: the dipole prefactor with one power of (n−2)
        // from differentiating the interaction in the scale.
        let k_dipole = cfg.bubble_decay() * self.ctx.pi_coefficient();
        let scale_rate = st.lam * st.lam1dot + st.lam0dot * st.lam1;
        let scale_part = scale_rate * (kernel_z0(ry, cfg) - c * hcomb)
            - k_dipole * c * (st.lam1 / st.lam0 - st.d1 / st.d0) * upm1;

        let dir = if ry > 0.0 { y[0] / ry } else { 0.0 };
        let z1v = bubble_u_prime(ry, cfg) * dir;
        let center_rate = st.d1dot - (st.d0 + st.d1 + st.lam * y[0]) / x[0];
        let center_part = st.lam * center_rate * z1v - st.lam * st.d1dot * c * hp * dir
            + 0.5 * k_dipole * (st.lam / st.d).powf(cfg.nf() - 1.0) * upm1 * y[0];

        let full = st.lam.powf(0.5 * (cfg.nf() + 2.0)) * self.s_w2(&x, t)?;
        Ok(InnerExpansion {
            scale_part,
            center_part,
            remainder: full - scale_part - center_part,
        })
    }

    /// ∫_{B_radius} λ^{(n+2)/2} S[W₂](ξ + λy, t) Z₀(|y|) dy together with the
    /// larger of its two leading constituents |λ₀λ̇₀| ∫ Z₀² and
    /// (pα/2^{n−2})(λ₀/d₀)^{n−2} |∫ U^{p−1} Z₀|. The scale law was chosen
    /// exactly so that those two cancel; the returned pairing should be
    /// orders of magnitude below the returned constituent.
    pub fn mode0_pairing(&self, t: f64, radius: f64) -> Result<(f64, f64)> {
        let cfg = self.path.cfg();
        let st = self.path.state(t)?;
        let amp = st.lam.powf(0.5 * (cfg.nf() + 2.0));
        let poisoned = Cell::new(false);
        let pairing = integral_ball_axi(
            cfg.n,
            radius,
            |y1, yr| {
                let mut x = vec![0.0; cfg.n];
                x[0] = 1.0 + st.d + st.lam * y1;
                x[1] = st.lam * yr;
                let ry = (y1 * y1 + yr * yr).sqrt();
                match self.s_w2(&x, t) {
                    Ok(v) => amp * v * kernel_z0(ry, cfg),
                    Err(_) => {
                        poisoned.set(true);
                        0.0
                    }
                }
            },
            32,
            32,
        )
        .value;
        if poisoned.get() {
            return Err(Error::NonFinite("mode-0 pairing integrand"));
        }
        let z0sq = integral_ball_axi(
            cfg.n,
            radius,
            |y1, yr| kernel_z0((y1 * y1 + yr * yr).sqrt(), cfg).powi(2),
            32,
            32,
        )
        .value;
        let upz0 = integral_ball_axi(
            cfg.n,
            radius,
            |y1, yr| {
                let r = (y1 * y1 + yr * yr).sqrt();
                u_pow_p_minus_1(r, cfg) * kernel_z0(r, cfg)
            },
            32,
            32,
        )
        .value;
        let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
        let scale_term = (st.lam0 * st.lam0dot).abs() * z0sq;
        let dipole_term = self.ctx.pi_coefficient() * c * upz0.abs();
        Ok((pairing, scale_term.max(dipole_term)))
    }

    /// The potential of the linearization around W₂, assembled from three
    /// zones: the frozen-scale bubble weight in the matching annulus, the
    /// difference to the full weight inside the wide cutoff, and the full
    /// weight p W₂^{p−1} far out.
    pub fn potential_v(&self, x: &[f64], t: f64) -> Result<f64> {
        let cfg = self.path.cfg();
        let f = self.frame(x, t)?;
        let st = &f.st;
        let eta_at = |scale: f64| -> f64 {
            let s = f.r_in / (scale * st.lam0);
            if s <= 1.0 {
                1.0
            } else if s >= 2.0 {
                0.0
            } else {
                eta(s)
            }
        };
        let eta_r = eta_at(self.geo.r_inner);
        let eta_rp = eta_at(self.geo.r_outer);
        // Frozen-scale weight (λ₀^{−(n−2)/2} U(r/λ₀))^{p−1} = λ₀^{−2} U^{p−1}.
        let frozen = u_pow_p_minus_1(f.r_in / st.lam0, cfg) / (st.lam0 * st.lam0);
        let w2 = ansatz::eval_w2(&self.path, &self.geo, &self.h, x, t)?;
        let w2_pm1 = powp_minus_1(cfg, w2)?;
        Ok(cfg.p * frozen * eta_rp * (1.0 - eta_r)
            + cfg.p * (w2_pm1 - frozen) * eta_rp
            + cfg.p * w2_pm1 * (1.0 - eta_rp))
    }
}

/// N(w) = (W₂ + w)^p − W₂^p − p W₂^{p−1} w: what is left of the
/// nonlinearity after subtracting the linearization around W₂. For p = 2
/// the three terms collapse to w² identically, and that form is returned to
/// avoid the cancellation of the naive difference.
pub fn nonlinear_remainder(cfg: &DimensionConfig, w2val: f64, wval: f64) -> Result<f64> {
    if (cfg.p - 2.0).abs() < 1e-12 {
        return Ok(wval * wval);
    }
    Ok(powp(cfg, w2val + wval)? - powp(cfg, w2val)? - cfg.p * powp_minus_1(cfg, w2val)? * wval)
}

// ---------------------------------------------------------------------------
// weighted norms
// ---------------------------------------------------------------------------

/// Probe directions for the radial shells: both axial sides (the fields are
/// not symmetric in y₁) and one transverse ray (they are in y⊥).
const DIRECTIONS: [[f64; 2]; 3] = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];

/// Number of samples per boundary face for the boundary norm.
const BOUNDARY_SAMPLES: usize = 16;

/// Space-time sampling lattice for the discrete sup-norms: 64 radial shells
/// log-spaced in |y| ∈ [0, 4R] probed along ±e₁ and one transverse
/// direction, at 32 times accumulating geometrically toward the final time.
/// Shell samples mapped outside the open domain are skipped. Every reported
/// norm is a sup over this lattice, and scan exports embed its description.
#[derive(Debug, Clone)]
pub struct NormLattice {
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
}

impl NormLattice {
    pub fn new(path: &ParamPath, geo: &GeometryConfig) -> Self {
        Self {
            radii: radial_shells(4.0 * geo.r_inner, 64),
            times: clustered_times(path.t_end(), 32),
        }
    }

    /// One-line JSON description, embedded in exports for reproducibility.
    pub fn describe(&self) -> String {
        format!(
            "{{\"radial_shells\":{},\"r_max\":{},\"times\":{},\"t_last\":{},\"directions\":[\"+e1\",\"-e1\",\"e2\"]}}",
            self.radii.len(),
            export::fmt(*self.radii.last().unwrap()),
            self.times.len(),
            export::fmt(*self.times.last().unwrap()),
        )
    }
}

/// 0 followed by count−1 geometrically spaced shells in [r_max/1000, r_max].
fn radial_shells(r_max: f64, count: usize) -> Vec<f64> {
    let mut radii = vec![0.0];
    let r_min = r_max * 1e-3;
    let ratio = (r_max / r_min).powf(1.0 / (count as f64 - 2.0));
    let mut r = r_min;
    for _ in 1..count {
        radii.push(r);
        r *= ratio;
    }
    radii
}

/// count times t_j = T(1 − g^j) with g chosen so the last gap is T/1000.
fn clustered_times(t_end: f64, count: usize) -> Vec<f64> {
    let g = 1e-3f64.powf(1.0 / (count as f64 - 1.0));
    (0..count)
        .map(|j| t_end * (1.0 - g.powi(j as i32)))
        .collect()
}

fn point_from_y(st: &PathState, n: usize, y1: f64, y2: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = 1.0 + st.d + st.lam * y1;
    x[1] = st.lam * y2;
    x
}

fn inside(geo: &GeometryConfig, x: &[f64]) -> bool {
    x[0] > geo.m && x[0] < geo.m_out && x[1].abs() < geo.rho_max
}

/// Deterministic lattice sup of |f| · weight(state, |y|, t) over the moving
/// frame x = ξ + λy: parallel over times, sequential fold of the per-time
/// sups in time order.
fn frame_sup<F, W>(
    path: &ParamPath,
    geo: &GeometryConfig,
    lat: &NormLattice,
    f: &F,
    weight: &W,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
    W: Fn(&PathState, f64, f64) -> f64 + Sync,
{
    let n = path.cfg().n;
    let sups = lat
        .times
        .par_iter()
        .map(|&t| -> Result<f64> {
            let st = path.state(t)?;
            let mut sup = 0.0f64;
            for &r in &lat.radii {
                let ndirs = if r == 0.0 { 1 } else { DIRECTIONS.len() };
                for dir in &DIRECTIONS[..ndirs] {
                    let x = point_from_y(&st, n, r * dir[0], r * dir[1]);
                    if !inside(geo, &x) {
                        continue;
                    }
                    let v = f(&x, t)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite("norm sample"));
                    }
                    let m = v.abs() * weight(&st, r, t);
                    if m > sup {
                        sup = m;
                    }
                }
            }
            Ok(sup)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

fn check_sigma(path: &ParamPath, spec: &NormSpec) -> Result<()> {
    if (path.sigma() - spec.sigma).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "norm spec sigma = {} does not match path sigma = {}",
            spec.sigma,
            path.sigma()
        )));
    }
    Ok(())
}

/// Second-order interior norm: the least M with
/// λ^{(n−2)/2} |f(ξ + λy, t)| ≤ M (λ₀/d₀)^{n−2+σ} λ^{−2} / (1 + |y|^{2+α}),
/// reported as the lattice sup of the defining ratio.
pub fn norm_starstar<F>(
    f: F,
    path: &ParamPath,
    geo: &GeometryConfig,
    spec: &NormSpec,
    lat: &NormLattice,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
{
    check_sigma(path, spec)?;
    let decay = path.cfg().bubble_decay();
    let alpha = spec.alpha;
    let sigma = spec.sigma;
    frame_sup(path, geo, lat, &f, &|st: &PathState, r: f64, _t| {
        st.lam.powf(0.5 * decay) * st.lam * st.lam * (1.0 + r.powf(2.0 + alpha))
            / (st.lam0 / st.d0).powf(decay + sigma)
    })
}

/// Zeroth-order interior norm: weight (1 + |y|^a)^{-1} plus the flat
/// absorbing term λ^α (T−t)^{−α/2}.
pub fn norm_a<F>(
    f: F,
    path: &ParamPath,
    geo: &GeometryConfig,
    spec: &NormSpec,
    lat: &NormLattice,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
{
    check_sigma(path, spec)?;
    let decay = path.cfg().bubble_decay();
    let t_end = path.t_end();
    let (alpha, sigma, a) = (spec.alpha, spec.sigma, spec.a);
    frame_sup(path, geo, lat, &f, &|st: &PathState, r: f64, t| {
        let flat = st.lam.powf(alpha) / (t_end - t).powf(0.5 * alpha);
        st.lam.powf(0.5 * decay)
            / ((st.lam0 / st.d0).powf(decay + sigma) * (1.0 / (1.0 + r.powf(a)) + flat))
    })
}

/// First-order sibling of [`norm_a`]: weight λ^{−1} (1 + |y|^{1+a})^{-1}
/// plus the same flat absorbing term.
pub fn norm_star_a<F>(
    f: F,
    path: &ParamPath,
    geo: &GeometryConfig,
    spec: &NormSpec,
    lat: &NormLattice,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
{
    check_sigma(path, spec)?;
    let decay = path.cfg().bubble_decay();
    let t_end = path.t_end();
    let (alpha, sigma, a) = (spec.alpha, spec.sigma, spec.a);
    frame_sup(path, geo, lat, &f, &|st: &PathState, r: f64, t| {
        let flat = st.lam.powf(alpha) / (t_end - t).powf(0.5 * alpha);
        st.lam.powf(0.5 * decay)
            / ((st.lam0 / st.d0).powf(decay + sigma)
                * (1.0 / (st.lam * (1.0 + r.powf(1.0 + a))) + flat))
    })
}

/// Inner-time norm on the ball |y| ≤ 2R: sup of τ^ν λ² (1 + |y|^{2+a}) |f|,
/// with τ the inner time of the path and f given in inner coordinates
/// f(y, t).
pub fn norm_nu2a<F>(
    f: F,
    path: &ParamPath,
    geo: &GeometryConfig,
    spec: &NormSpec,
    lat: &NormLattice,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
{
    check_sigma(path, spec)?;
    let n = path.cfg().n;
    let a = spec.a;
    let nu = spec.nu;
    let scale = 2.0 * geo.r_inner / lat.radii.last().copied().unwrap_or(1.0);
    let sups = lat
        .times
        .par_iter()
        .map(|&t| -> Result<f64> {
            let st = path.state(t)?;
            let tau = ansatz::tau_of_t(path, t)?;
            let mut sup = 0.0f64;
            for &r0 in &lat.radii {
                let r = r0 * scale;
                let ndirs = if r == 0.0 { 1 } else { DIRECTIONS.len() };
                for dir in &DIRECTIONS[..ndirs] {
                    let mut y = vec![0.0; n];
                    y[0] = r * dir[0];
                    y[1] = r * dir[1];
                    let v = f(&y, t)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite("norm sample"));
                    }
                    let m = v.abs() * tau.powf(nu) * st.lam * st.lam * (1.0 + r.powf(2.0 + a));
                    if m > sup {
                        sup = m;
                    }
                }
            }
            Ok(sup)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

/// Boundary norm: sup over the three boundary faces and the lattice times of
/// λ^{(n−2)/2} (λ₀/d₀)^{−(n−2)−σ} (T−t)^{α/2} λ^{−α} |g|.
pub fn norm_boundary<F>(
    g: F,
    path: &ParamPath,
    geo: &GeometryConfig,
    spec: &NormSpec,
    lat: &NormLattice,
) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<f64> + Sync,
{
    check_sigma(path, spec)?;
    let cfg = path.cfg();
    let decay = cfg.bubble_decay();
    let t_end = path.t_end();
    let (alpha, sigma) = (spec.alpha, spec.sigma);
    let mut points = Vec::new();
    for k in 0..=BOUNDARY_SAMPLES {
        let frac = k as f64 / BOUNDARY_SAMPLES as f64;
        points.push((geo.m_out, frac * geo.rho_max));
        points.push((geo.m + frac * (geo.m_out - geo.m), geo.rho_max));
        points.push((geo.m, frac * geo.rho_max));
    }
    let sups = lat
        .times
        .par_iter()
        .map(|&t| -> Result<f64> {
            let st = path.state(t)?;
            let w = st.lam.powf(0.5 * decay - alpha) * (t_end - t).powf(0.5 * alpha)
                / (st.lam0 / st.d0).powf(decay + sigma);
            let mut sup = 0.0f64;
            for &(x1, rho) in &points {
                let mut x = vec![0.0; cfg.n];
                x[0] = x1;
                x[1] = rho;
                let v = g(&x, t)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite("norm sample"));
                }
                let m = v.abs() * w;
                if m > sup {
                    sup = m;
                }
            }
            Ok(sup)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sups.into_iter().fold(0.0, f64::max))
}

/// Scalar-in-time norm: sup of (T−t)^{−delta} |f(t)| over the given times.
pub fn norm_delta<F>(f: F, t_end: f64, delta: f64, times: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut sup = 0.0f64;
    for &t in times {
        let v = f(t)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("norm sample"));
        }
        sup = sup.max(v.abs() / (t_end - t).powf(delta));
    }
    Ok(sup)
}

// ---------------------------------------------------------------------------
// scan tables
// ---------------------------------------------------------------------------

/// One row of the outer-error scan: the lattice norm of the residual handed
/// to the outer problem, against its predicted size
/// max{T^{(1−σ)/(n−4)}, R^{−2}}.
#[derive(Debug, Clone, Copy)]
pub struct ScanRow {
    pub t_end: f64,
    pub r_inner: f64,
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Domain used by scans and the CLI when none is specified: the far wall at
/// x₁ = 2 and transverse radius 1.
pub const DEFAULT_M_OUT: f64 = 2.0;
pub const DEFAULT_RHO_MAX: f64 = 1.0;

/// Default (T, R) grid for the outer-error scan.
pub fn default_scan_grid() -> (Vec<f64>, Vec<f64>) {
    (vec![0.02, 0.05, 0.1], vec![10.0, 20.0, 40.0])
}

/// Evaluate ‖outer error‖ over a (T, R) grid on leading paths with the scan
/// domain, and compare each value against max{T^{(1−σ)/(n−4)}, R^{−2}}. With
/// `out` set, the table is written as CSV with the lattice description as a
/// comment line.
pub fn outer_error_scan(
    cfg: &DimensionConfig,
    spec: &NormSpec,
    t_list: &[f64],
    r_list: &[f64],
    out: Option<&Path>,
) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    let mut lattice_desc = String::new();
    for &t_end in t_list {
        for &r_inner in r_list {
            let path = ParamPath::new(cfg, t_end, spec.sigma, CorrectionSpec::Zero)?;
            let geo = GeometryConfig::new(
                &path,
                DEFAULT_M_OUT,
                DEFAULT_RHO_MAX,
                r_inner,
                3.0 * r_inner,
            )?;
            let res = Residuals::new(path, geo)?;
            let lat = NormLattice::new(res.path(), res.geo());
            let norm = norm_starstar(
                |x: &[f64], t: f64| res.outer_error(x, t),
                res.path(),
                res.geo(),
                spec,
                &lat,
            )?;
            let bound = t_end
                .powf((1.0 - spec.sigma) / (cfg.nf() - 4.0))
                .max(r_inner.powi(-2));
            lattice_desc = lat.describe();
            rows.push(ScanRow {
                t_end,
                r_inner,
                norm,
                bound,
                ratio: norm / bound,
            });
        }
    }
    if let Some(file) = out {
        export::write_csv(
            file,
            &[format!("lattice: {lattice_desc}")],
            "T,R,norm,bound,ratio",
            rows.iter()
                .map(|r| export::row(&[r.t_end, r.r_inner, r.norm, r.bound, r.ratio])),
        )?;
    }
    Ok(rows)
}

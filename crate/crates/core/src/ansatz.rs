//! Two-bubble approximate solutions: parameter paths, domain geometry,
//! cutoffs, and pointwise evaluation of W₁ / W₂ with analytic derivative
//! bundles.
//!
//! Points live in ℝⁿ as slices (x₁, x̄); the symmetry axis is x̄ = 0. The
//! bubble pair sits at ξ = (1+d)e₁ (inside the domain, whose inner wall is
//! the plane x₁ = 1) with a negative mirror bubble at ξ̂ = (1−d)e₁ outside,
//! so W₁ is antisymmetric across x₁ = 1 and vanishes on that plane. W₂
//! subtracts the localized first-order correction (λ₀/d₀)^{n−2}[w − w̄]η,
//! built from the radial profile h of [`crate::bubble::correction_h`].
//!
//! All time derivatives are exact chain-rule expressions through λ(t), d(t);
//! Laplacians of the bubble and correction pieces use the profile equations
//! ΔU = −U^p and Δh = π − pU^{p−1}h instead of numerical differentiation, so
//! a residual evaluation downstream sees analytically consistent fields.

use crate::bubble::{
    bubble_u, bubble_u_prime, kernel_z0, pi_profile, u_pow_p, u_pow_p_minus_1, BubbleContext,
};
use crate::config::DimensionConfig;
use crate::error::{Error, Result};
use crate::export;
use crate::profile::RadialProfile;
use serde::Serialize;
use std::path::Path;

// ---------------------------------------------------------------------------
// parameter paths
// ---------------------------------------------------------------------------

/// How the first-order corrections (d₁, λ₁) on top of the leading path are
/// specified.
#[derive(Debug, Clone)]
pub enum CorrectionSpec {
    /// d₁ = λ₁ = 0: the leading-order path.
    Zero,
    /// The scaling-critical closed-form family
    /// d₁ = a_d (T−t)^{1+θ}, λ₁ = a_λ (T−t)^{1+θ} with θ = (1+σ)/(n−4).
    /// Its derivative has constant weighted norm (1+θ)|a| per unit amplitude,
    /// which makes it the natural probe family for norm bookkeeping.
    PowerLaw { a_d: f64, a_lam: f64 },
    /// Samples on a strictly increasing time grid covering [0, T]; stored as
    /// cubic interpolants whose derivatives come from the interpolant. The
    /// final samples must vanish (the corrections are integrals from t to T).
    Samples {
        times: Vec<f64>,
        d1: Vec<f64>,
        lam1: Vec<f64>,
    },
}

enum BuiltCorrections {
    Zero,
    PowerLaw { a_d: f64, a_lam: f64 },
    Interp { d1: RadialProfile, lam1: RadialProfile },
}

/// Blow-up parameter path on [0, T): leading scales d₀ = T−t and
/// λ₀ = ℓ d₀^{(n−3)/(n−4)} plus first-order corrections, with derivatives.
///
/// Immutable after construction; evaluation is pure.
pub struct ParamPath {
    cfg: DimensionConfig,
    t_end: f64,
    ell: f64,
    sigma: f64,
    corr: BuiltCorrections,
    norm_bound: f64,
}

/// All path quantities at one time, including velocities. `d0dot = −1`
/// always; the totals are `d = d0 + d1`, `lam = lam0 + lam1`.
#[derive(Debug, Clone, Copy)]
pub struct PathState {
    pub t: f64,
    pub d0: f64,
    pub lam0: f64,
    pub d0dot: f64,
    pub lam0dot: f64,
    pub d1: f64,
    pub lam1: f64,
    pub d1dot: f64,
    pub lam1dot: f64,
    pub d: f64,
    pub lam: f64,
    pub ddot: f64,
    pub lamdot: f64,
}

impl ParamPath {
    /// Build a path and verify admissibility: d > 0 and λ > 0 on [0, T)
    /// (checked on a dense sample clustered toward T). Records the weighted
    /// sup norm sup_t (T−t)^{−θ}(|ḋ₁| + |λ̇₁|), θ = (1+σ)/(n−4).
    pub fn new(
        cfg: &DimensionConfig,
        t_end: f64,
        sigma: f64,
        spec: CorrectionSpec,
    ) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "final time T = {t_end} must be positive and finite"
            )));
        }
        if !(sigma > 0.5 && sigma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma = {sigma} outside (1/2, 1)"
            )));
        }
        let ell = crate::bubble::constant_ell(cfg)?;
        let corr = match spec {
            CorrectionSpec::Zero => BuiltCorrections::Zero,
            CorrectionSpec::PowerLaw { a_d, a_lam } => {
                if !(a_d.is_finite() && a_lam.is_finite()) {
                    return Err(Error::NonFinite("power-law correction amplitude"));
                }
                BuiltCorrections::PowerLaw { a_d, a_lam }
            }
            CorrectionSpec::Samples { times, d1, lam1 } => {
                BuiltCorrections::Interp {
                    d1: build_interp(&times, d1, t_end, "d1")?,
                    lam1: build_interp(&times, lam1, t_end, "lam1")?,
                }
            }
        };
        let mut path = Self {
            cfg: *cfg,
            t_end,
            ell,
            sigma,
            corr,
            norm_bound: 0.0,
        };
        path.norm_bound = path.measure_norm();
        path.check_admissible()?;
        Ok(path)
    }

    /// Leading-order path (d₁ = λ₁ = 0) with the default weight σ = 0.9.
    pub fn leading(cfg: &DimensionConfig, t_end: f64) -> Result<Self> {
        Self::new(cfg, t_end, 0.9, CorrectionSpec::Zero)
    }

    pub fn cfg(&self) -> &DimensionConfig {
        &self.cfg
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Matching constant ℓ of the leading scale law λ₀ = ℓ d₀^{(n−3)/(n−4)}.
    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Weight exponent θ = (1+σ)/(n−4) of the correction-derivative norm.
    pub fn weight_exponent(&self) -> f64 {
        (1.0 + self.sigma) / (self.cfg.nf() - 4.0)
    }

    /// Recorded bound for ‖ḋ₁‖_θ + ‖λ̇₁‖_θ (exact for the closed-form
    /// families, a dense-sample sup for interpolated corrections).
    pub fn correction_norm(&self) -> f64 {
        self.norm_bound
    }

    /// Path state at t ∈ [0, T).
    pub fn state(&self, t: f64) -> Result<PathState> {
        if !(t.is_finite() && (0.0..self.t_end).contains(&t)) {
            return Err(Error::InvalidConfig(format!(
                "time t = {t} outside [0, T) with T = {}",
                self.t_end
            )));
        }
        Ok(self.state_unchecked(t))
    }

    fn state_unchecked(&self, t: f64) -> PathState {
        let d0 = self.t_end - t;
        let lam0 = self.ell * d0.powf(self.cfg.lam0_exponent);
        // d/dt [ℓ (T−t)^k] = −ℓ k (T−t)^{k−1}, k = (n−3)/(n−4).
        let lam0dot =
            -self.ell * self.cfg.lam0_exponent * d0.powf(self.cfg.lam0_exponent - 1.0);
        let (d1, d1dot, lam1, lam1dot) = match &self.corr {
            BuiltCorrections::Zero => (0.0, 0.0, 0.0, 0.0),
            BuiltCorrections::PowerLaw { a_d, a_lam } => {
                let q = 1.0 + self.weight_exponent();
                let w = d0.powf(q);
                let wdot = -q * d0.powf(q - 1.0);
                (a_d * w, a_d * wdot, a_lam * w, a_lam * wdot)
            }
            BuiltCorrections::Interp { d1, lam1 } => {
                (d1.eval(t), d1.deriv(t), lam1.eval(t), lam1.deriv(t))
            }
        };
        PathState {
            t,
            d0,
            lam0,
            d0dot: -1.0,
            lam0dot,
            d1,
            lam1,
            d1dot,
            lam1dot,
            d: d0 + d1,
            lam: lam0 + lam1,
            ddot: -1.0 + d1dot,
            lamdot: lam0dot + lam1dot,
        }
    }

    /// Times used for admissibility checks and the recorded norm: a uniform
    /// sweep plus a geometric refinement toward T, plus the interpolation
    /// nodes and midpoints when corrections are sampled. For sampled
    /// corrections the refinement stops at a fraction of the final sample
    /// spacing: closer to T the interpolant's endpoint slope error exceeds
    /// λ₀ itself, so positivity there cannot be certified from the data.
    fn audit_times(&self) -> Vec<f64> {
        let cut = match &self.corr {
            BuiltCorrections::Interp { d1, .. } => {
                let g = d1.grid();
                0.125 * (g[g.len() - 1] - g[g.len() - 2])
            }
            _ => 0.0,
        };
        let mut ts: Vec<f64> = (0..256).map(|j| self.t_end * j as f64 / 256.0).collect();
        for j in 1..=40 {
            let t = self.t_end * (1.0 - 0.5f64.powi(j));
            if self.t_end - t >= cut {
                ts.push(t);
            }
        }
        if let BuiltCorrections::Interp { d1, .. } = &self.corr {
            let grid = d1.grid();
            for w in grid.windows(2) {
                ts.push(w[0]);
                ts.push(0.5 * (w[0] + w[1]));
            }
        }
        ts.retain(|&t| t < self.t_end);
        ts
    }

    fn measure_norm(&self) -> f64 {
        let theta = self.weight_exponent();
        match &self.corr {
            BuiltCorrections::Zero => 0.0,
            BuiltCorrections::PowerLaw { a_d, a_lam } => {
                (1.0 + theta) * (a_d.abs() + a_lam.abs())
            }
            BuiltCorrections::Interp { .. } => {
                let mut sup: f64 = 0.0;
                for t in self.audit_times() {
                    let st = self.state_unchecked(t);
                    let w = st.d0.powf(-theta);
                    sup = sup.max(w * (st.d1dot.abs() + st.lam1dot.abs()));
                }
                sup
            }
        }
    }

    fn check_admissible(&self) -> Result<()> {
        for t in self.audit_times() {
            let st = self.state_unchecked(t);
            if !(st.d > 0.0 && st.lam > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "path not admissible at t = {t}: d = {:.3e}, lam = {:.3e}",
                    st.d, st.lam
                )));
            }
        }
        Ok(())
    }

    /// Write the sampled path as CSV with columns
    /// `t,d0,lam0,d1,lam1,d1dot,lam1dot`.
    pub fn write_csv<P: AsRef<Path>>(&self, file: P, times: &[f64]) -> Result<()> {
        let mut rows = Vec::with_capacity(times.len());
        for &t in times {
            let st = self.state(t)?;
            rows.push(export::row(&[
                st.t, st.d0, st.lam0, st.d1, st.lam1, st.d1dot, st.lam1dot,
            ]));
        }
        export::write_csv(file, &[], "t,d0,lam0,d1,lam1,d1dot,lam1dot", rows)
    }
}

/// Node derivatives of sampled data by second-order nonuniform differences
/// (three-point interior stencils, one-sided at the ends).
fn sample_derivatives(ts: &[f64], vs: &[f64]) -> Vec<f64> {
    let m = ts.len();
    let mut out = vec![0.0; m];
    for i in 0..m {
        if i == 0 || i == m - 1 {
            let (i0, i1, i2) = if i == 0 { (0, 1, 2) } else { (m - 1, m - 2, m - 3) };
            let h1 = ts[i1] - ts[i0];
            let h2 = ts[i2] - ts[i1];
            out[i] = vs[i0] * (-(2.0 * h1 + h2)) / (h1 * (h1 + h2))
                + vs[i1] * (h1 + h2) / (h1 * h2)
                - vs[i2] * h1 / (h2 * (h1 + h2));
        } else {
            let h1 = ts[i] - ts[i - 1];
            let h2 = ts[i + 1] - ts[i];
            out[i] = (h1 * h1 * vs[i + 1] - h2 * h2 * vs[i - 1]
                + (h2 * h2 - h1 * h1) * vs[i])
                / (h1 * h2 * (h1 + h2));
        }
    }
    out
}

fn build_interp(times: &[f64], values: Vec<f64>, t_end: f64, what: &str) -> Result<RadialProfile> {
    if times.len() < 4 || times.len() != values.len() {
        return Err(Error::InvalidConfig(format!(
            "{what} needs >= 4 samples with matching times, got {}/{}",
            times.len(),
            values.len()
        )));
    }
    if times[0] != 0.0 || (times[times.len() - 1] - t_end).abs() > 1e-9 * t_end {
        return Err(Error::InvalidConfig(format!(
            "{what} sample times must cover [0, T] exactly"
        )));
    }
    let vmax = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if values[values.len() - 1].abs() > 1e-12 * vmax.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "{what}(T) = {:.3e} but corrections must vanish at the final time",
            values[values.len() - 1]
        )));
    }
    let derivs = sample_derivatives(times, &values);
    RadialProfile::with_derivs(times.to_vec(), values, derivs)
}

// ---------------------------------------------------------------------------
// geometry
// ---------------------------------------------------------------------------

/// Axisymmetric domain descriptor and cutoff scales.
///
/// The domain is the slab {m ≤ x₁ ≤ m_out, |x̄| ≤ rho_max} with m = 1; the
/// inner bubble center (1+d)e₁ lies inside, its mirror outside. `b` scales
/// the correction cutoff η(|x−ξ|/(b d₀)); `r_inner`/`r_outer` (R < R′) scale
/// the inner-region cutoffs η(|x−ξ|/(R λ₀)).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeometryConfig {
    pub m: f64,
    pub m_out: f64,
    pub rho_max: f64,
    pub b: f64,
    #[serde(rename = "R")]
    pub r_inner: f64,
    #[serde(rename = "Rprime")]
    pub r_outer: f64,
    /// Largest final time for which the support invariant holds with this b.
    #[serde(skip)]
    pub t_max: f64,
}

impl GeometryConfig {
    /// Choose b as the largest dyadic ≤ dist((1,0̄), far boundary)/(4T),
    /// additionally capped at 1/4 so the support ball of radius 2b d₀ stays
    /// clear of the near wall x₁ = 1 (the center sits at distance d ≈ d₀
    /// from it). The support invariant is then verified on a time sample
    /// with the actual corrected path.
    pub fn new(
        path: &ParamPath,
        m_out: f64,
        rho_max: f64,
        r_inner: f64,
        r_outer: f64,
    ) -> Result<Self> {
        if !(m_out.is_finite() && m_out > 1.0) || !(rho_max.is_finite() && rho_max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "domain needs m_out > 1 and rho_max > 0, got {m_out}, {rho_max}"
            )));
        }
        if !(r_inner.is_finite() && r_inner > 0.0 && r_outer > r_inner) {
            return Err(Error::InvalidConfig(format!(
                "cutoff radii need R' > R > 0, got R = {r_inner}, R' = {r_outer}"
            )));
        }
        let dist_far = (m_out - 1.0).min(rho_max);
        let raw = (dist_far / (4.0 * path.t_end())).min(0.25);
        let b = raw.log2().floor().exp2();
        let geo = Self {
            m: 1.0,
            m_out,
            rho_max,
            b,
            r_inner,
            r_outer,
            t_max: dist_far / (4.0 * b),
        };
        geo.check_support(path)?;
        Ok(geo)
    }

    /// The support of η(|x−ξ(t)|/(b d₀(t))) is the ball of radius 2b d₀
    /// about ξ; it must stay strictly inside the domain for all t ∈ [0, T).
    fn check_support(&self, path: &ParamPath) -> Result<()> {
        if path.t_end() > self.t_max {
            return Err(Error::InvalidConfig(format!(
                "final time {} exceeds T_max = {} for b = {}",
                path.t_end(),
                self.t_max,
                self.b
            )));
        }
        for t in path.audit_times() {
            let st = path.state_unchecked(t);
            let r_supp = 2.0 * self.b * st.d0;
            let xi1 = 1.0 + st.d;
            // The near-wall margin is d − r_supp; computing it through xi1
            // would lose it to rounding once d drops below the resolution
            // of 1.0 (the wall sits at m = 1).
            let ok = st.d - r_supp > self.m - 1.0
                && xi1 + r_supp < self.m_out
                && r_supp < self.rho_max;
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "correction cutoff support touches the boundary at t = {t}: \
                     center x1 = {xi1:.6}, support radius {r_supp:.6}"
                )));
            }
        }
        Ok(())
    }

    /// JSON descriptor {m, m_out, rho_max, b, R, Rprime}.
    pub fn write_json<P: AsRef<Path>>(&self, file: P) -> Result<()> {
        export::write_json(file, self)
    }
}

// ---------------------------------------------------------------------------
// cutoff profile
// ---------------------------------------------------------------------------

/// C² bump: 1 on [0,1], 0 on [2,∞), quintic ramp 1 − (10u³ − 15u⁴ + 6u⁵)
/// with u = s−1 in between (value and first two derivatives match at both
/// ends).
pub fn eta(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let u = s - 1.0;
        1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

pub fn eta_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        0.0
    } else {
        let u = s - 1.0;
        let v = 1.0 - u;
        -30.0 * u * u * v * v
    }
}

pub fn eta_second(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        0.0
    } else {
        let u = s - 1.0;
        -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    }
}

/// sup |η′| = 30/16, attained at s = 3/2.
pub const ETA_PRIME_MAX: f64 = 1.875;

/// Value and derivatives of a moving scaled cutoff η(|x−c(t)e₁|/μ(t)).
#[derive(Debug, Clone, Copy, Default)]
pub struct CutoffDerivs {
    pub value: f64,
    /// Radial derivative ∂η/∂|x−c e₁|; the full gradient is this times the
    /// unit vector from the center, so it is also the gradient magnitude up
    /// to sign.
    pub dradial: f64,
    pub dx1: f64,
    pub lap: f64,
    pub dt: f64,
}

/// Shared chain-rule assembly for any cutoff of the form η(r/μ(t)) centered
/// at c(t)e₁, where r = |x − c e₁|, the center moves with velocity c1dot and
/// the scale with mudot.
pub(crate) fn cutoff_radial(
    nf: f64,
    r: f64,
    dx1_over_r: f64,
    mu: f64,
    mudot: f64,
    c1dot: f64,
) -> CutoffDerivs {
    let s = r / mu;
    if s <= 1.0 {
        return CutoffDerivs {
            value: 1.0,
            ..Default::default()
        };
    }
    if s >= 2.0 {
        return CutoffDerivs::default();
    }
    let dradial = eta_prime(s) / mu;
    CutoffDerivs {
        value: eta(s),
        dradial,
        dx1: dradial * dx1_over_r,
        // Δ f(r) = f'' + (n−1) f'/r; r ≥ μ > 0 on the ramp.
        lap: eta_second(s) / (mu * mu) + dradial * (nf - 1.0) / r,
        // ds/dt = −(ṙ + s μ̇)/μ with ṙ = −(x₁−c₁) ċ₁ / r.
        dt: -dradial * (dx1_over_r * c1dot + s * mudot),
    }
}

/// Inner-region cutoff η_R = η(|x−ξ|/(R λ₀)) with its space and time
/// derivatives (the time derivative carries both λ̇₀ and the center drift).
pub fn cutoff_eta_r(path: &ParamPath, geo: &GeometryConfig, x: &[f64], t: f64) -> Result<CutoffDerivs> {
    let st = path.state(t)?;
    check_point(path.cfg(), x)?;
    let (r, dx1, _) = split(x, st.d, 1.0);
    let dir = if r > 0.0 { dx1 / r } else { 0.0 };
    Ok(cutoff_radial(
        path.cfg().nf(),
        r,
        dir,
        geo.r_inner * st.lam0,
        geo.r_inner * st.lam0dot,
        st.ddot,
    ))
}

// ---------------------------------------------------------------------------
// W₁ and W₂
// ---------------------------------------------------------------------------

/// Value, time derivative, first x₁-derivative, and Laplacian of a field at
/// one point. Exactly the data the error operator
/// S[u] = −u_t + Δu + (1/x₁)∂₁u + u^p consumes.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldDerivs {
    pub value: f64,
    pub dt: f64,
    pub dx1: f64,
    pub lap: f64,
}

/// One scaled radial piece (bubble or correction) with the extra radial
/// derivative needed for product rules against cutoffs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PieceDerivs {
    pub value: f64,
    pub dradial: f64,
    pub dx1: f64,
    pub lap: f64,
    pub dt: f64,
}

/// Offsets of x from the center (1 + side·d)e₁, anchored at the midplane:
/// dx₁ = (x₁ − 1) − side·d, so points with x₁ = 1 see exactly ±d and the
/// pair cancellation on the plane is exact in floating point.
pub(crate) fn split(x: &[f64], d: f64, side: f64) -> (f64, f64, f64) {
    let dx1 = (x[0] - 1.0) - side * d;
    let rho2: f64 = x[1..].iter().map(|v| v * v).sum();
    ((dx1 * dx1 + rho2).sqrt(), dx1, rho2)
}

pub(crate) fn check_point(cfg: &DimensionConfig, x: &[f64]) -> Result<()> {
    if x.len() != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "point has {} coordinates, dimension is {}",
            x.len(),
            cfg.n
        )));
    }
    Ok(())
}

/// λ^{−(n−2)/2} U(|x − (1+side·d)e₁|/λ) and its derivatives. The Laplacian
/// uses ΔU = −U^p; the time derivative is
/// −λ^{−n/2}[λ̇ Z₀(y) + ċ₁ U′(y)(x₁−c₁)/r] with Z₀ the scaling kernel.
pub(crate) fn bubble_piece(cfg: &DimensionConfig, st: &PathState, x: &[f64], side: f64) -> PieceDerivs {
    let (r, dx1, _) = split(x, st.d, side);
    let y = r / st.lam;
    let a = st.lam.powf(-0.5 * cfg.bubble_decay());
    let a1 = a / st.lam;
    let a2 = a1 / st.lam;
    let up = bubble_u_prime(y, cfg);
    let dir = if r > 0.0 { dx1 / r } else { 0.0 };
    let c1dot = side * st.ddot;
    PieceDerivs {
        value: a * bubble_u(y, cfg),
        dradial: a1 * up,
        dx1: a1 * up * dir,
        lap: -a2 * u_pow_p(y, cfg),
        dt: -a1 * (st.lamdot * kernel_z0(y, cfg) + c1dot * up * dir),
    }
}

/// Same bundle for the correction profile w = λ^{−(n−2)/2} h(|x−c|/λ); the
/// Laplacian substitutes the profile equation Δh = π − pU^{p−1}h and the
/// scaling kernel is replaced by (n−2)/2·h + q h′.
pub(crate) fn h_piece(
    cfg: &DimensionConfig,
    ctx: &BubbleContext,
    h: &RadialProfile,
    st: &PathState,
    x: &[f64],
    side: f64,
) -> PieceDerivs {
    let (r, dx1, _) = split(x, st.d, side);
    let q = r / st.lam;
    let a = st.lam.powf(-0.5 * cfg.bubble_decay());
    let a1 = a / st.lam;
    let a2 = a1 / st.lam;
    let hv = h.eval(q);
    let hp = h.deriv(q);
    let dir = if r > 0.0 { dx1 / r } else { 0.0 };
    let c1dot = side * st.ddot;
    PieceDerivs {
        value: a * hv,
        dradial: a1 * hp,
        dx1: a1 * hp * dir,
        lap: a2 * (pi_profile(q, ctx) - cfg.p * u_pow_p_minus_1(q, cfg) * hv),
        dt: -a1 * (st.lamdot * (0.5 * cfg.bubble_decay() * hv + q * hp) + c1dot * hp * dir),
    }
}

/// First approximation W₁ = λ^{−(n−2)/2}[U((x−ξ)/λ) − U((x−ξ̂)/λ)].
pub fn eval_w1(path: &ParamPath, x: &[f64], t: f64) -> Result<f64> {
    let st = path.state(t)?;
    check_point(path.cfg(), x)?;
    let (r_in, _, _) = split(x, st.d, 1.0);
    let (r_out, _, _) = split(x, st.d, -1.0);
    let a = st.lam.powf(-0.5 * path.cfg().bubble_decay());
    Ok(a * (bubble_u(r_in / st.lam, path.cfg()) - bubble_u(r_out / st.lam, path.cfg())))
}

/// W₁ with its full derivative bundle.
pub fn eval_w1_derivs(path: &ParamPath, x: &[f64], t: f64) -> Result<FieldDerivs> {
    let st = path.state(t)?;
    check_point(path.cfg(), x)?;
    let p = bubble_piece(path.cfg(), &st, x, 1.0);
    let q = bubble_piece(path.cfg(), &st, x, -1.0);
    Ok(FieldDerivs {
        value: p.value - q.value,
        dt: p.dt - q.dt,
        dx1: p.dx1 - q.dx1,
        lap: p.lap - q.lap,
    })
}

/// Corrected approximation
/// W₂ = W₁ − (λ₀/d₀)^{n−2} [w − w̄] η(|x−ξ|/(b d₀)). Outside the cutoff
/// support this returns W₁ bitwise.
pub fn eval_w2(
    path: &ParamPath,
    geo: &GeometryConfig,
    h: &RadialProfile,
    x: &[f64],
    t: f64,
) -> Result<f64> {
    let st = path.state(t)?;
    check_point(path.cfg(), x)?;
    let cfg = path.cfg();
    let (r_in, _, _) = split(x, st.d, 1.0);
    let (r_out, _, _) = split(x, st.d, -1.0);
    let a = st.lam.powf(-0.5 * cfg.bubble_decay());
    let w1 = a * (bubble_u(r_in / st.lam, cfg) - bubble_u(r_out / st.lam, cfg));
    let s = r_in / (geo.b * st.d0);
    if s >= 2.0 {
        return Ok(w1);
    }
    let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
    let pair = h.eval(r_in / st.lam) - h.eval(r_out / st.lam);
    Ok(w1 - c * a * pair * eta(s))
}

/// W₂ with its full derivative bundle. Product rules couple the correction
/// pair to the moving cutoff; the prefactor (λ₀/d₀)^{n−2} contributes
/// ċ = −(n−2)/(n−4) · c/d₀ to the time derivative.
pub fn eval_w2_derivs(
    path: &ParamPath,
    geo: &GeometryConfig,
    ctx: &BubbleContext,
    h: &RadialProfile,
    x: &[f64],
    t: f64,
) -> Result<FieldDerivs> {
    let st = path.state(t)?;
    check_point(path.cfg(), x)?;
    let cfg = path.cfg();
    let w1 = eval_w1_derivs(path, x, t)?;
    let (r_in, dx1_in, rho2) = split(x, st.d, 1.0);
    let s = r_in / (geo.b * st.d0);
    if s >= 2.0 {
        return Ok(w1);
    }
    let wp = h_piece(cfg, ctx, h, &st, x, 1.0);
    let wm = h_piece(cfg, ctx, h, &st, x, -1.0);
    let dir_in = if r_in > 0.0 { dx1_in / r_in } else { 0.0 };
    let et = cutoff_radial(cfg.nf(), r_in, dir_in, geo.b * st.d0, -geo.b, st.ddot);
    let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
    let cdot = -cfg.bubble_decay() / (cfg.nf() - 4.0) * c / st.d0;
    // ∇w·∇η = w_r η_r (same center); ∇w̄·∇η needs the cosine between the
    // two radial directions.
    let (r_out, dx1_out, _) = split(x, st.d, -1.0);
    let cosang = if r_in > 0.0 && r_out > 0.0 {
        (dx1_in * dx1_out + rho2) / (r_in * r_out)
    } else {
        0.0
    };
    let gv = wp.value - wm.value;
    let grad_dot = (wp.dradial - wm.dradial * cosang) * et.dradial;
    Ok(FieldDerivs {
        value: w1.value - c * gv * et.value,
        dx1: w1.dx1 - c * ((wp.dx1 - wm.dx1) * et.value + gv * et.dx1),
        lap: w1.lap - c * ((wp.lap - wm.lap) * et.value + 2.0 * grad_dot + gv * et.lap),
        dt: w1.dt - (cdot * gv * et.value + c * ((wp.dt - wm.dt) * et.value + gv * et.dt)),
    })
}

/// Bubble centers ξ₁ = 1 + d, ξ̂₁ = 1 − d (first coordinates; both lie on
/// the x₁-axis).
pub fn centers(path: &ParamPath, t: f64) -> Result<(f64, f64)> {
    let st = path.state(t)?;
    Ok((1.0 + st.d, 1.0 - st.d))
}

// ---------------------------------------------------------------------------
// time reparametrization
// ---------------------------------------------------------------------------

/// τ(t) = (n−4)/((n−2) ℓ²) (T−t)^{−(n−2)/(n−4)}, the exact antiderivative
/// of λ₀^{−2} = ℓ^{−2}(T−s)^{−2−2/(n−4)} normalized so τ → ∞ as t → T.
pub fn tau_of_t(path: &ParamPath, t: f64) -> Result<f64> {
    let st = path.state(t)?;
    let nf = path.cfg().nf();
    let k = (nf - 2.0) / (nf - 4.0);
    Ok((nf - 4.0) / ((nf - 2.0) * path.ell() * path.ell()) * st.d0.powf(-k))
}

/// dτ/dt computed from the closed-form antiderivative (not from 1/λ₀²), so
/// the identity dτ/dt · λ₀² = 1 is a nontrivial cancellation of exponents
/// and constants.
pub fn tau_derivative(path: &ParamPath, t: f64) -> Result<f64> {
    let st = path.state(t)?;
    let nf = path.cfg().nf();
    let k = (nf - 2.0) / (nf - 4.0);
    let c = (nf - 4.0) / ((nf - 2.0) * path.ell() * path.ell());
    Ok(c * k * st.d0.powf(-k - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::{correction_h, BubbleContext};

    fn cfg6() -> DimensionConfig {
        DimensionConfig::new(6).unwrap()
    }

    fn power_path(cfg: &DimensionConfig, t_end: f64) -> ParamPath {
        ParamPath::new(
            cfg,
            t_end,
            0.9,
            CorrectionSpec::PowerLaw {
                a_d: 0.02,
                a_lam: -0.01,
            },
        )
        .unwrap()
    }

    fn point(cfg: &DimensionConfig, x1: f64, x2: f64) -> Vec<f64> {
        let mut x = vec![0.0; cfg.n];
        x[0] = x1;
        x[1] = x2;
        x
    }

    #[test]
    fn centers_match_definition() {
        let cfg = cfg6();
        let path = ParamPath::leading(&cfg, 1.0).unwrap();
        let (xi, xihat) = centers(&path, 0.99).unwrap();
        assert!((xi - 1.01).abs() < 1e-15, "xi = {xi}");
        assert!((xihat - 0.99).abs() < 1e-15, "xihat = {xihat}");
        assert_eq!(0.5 * (xi + xihat), 1.0);
        // Both centers collapse to the midpoint as t -> T.
        let (xi, xihat) = centers(&path, 1.0 - 1e-9).unwrap();
        assert!((xi - 1.0).abs() < 2e-9 && (xihat - 1.0).abs() < 2e-9);
    }

    #[test]
    fn w1_vanishes_on_the_midplane() {
        let cfg = cfg6();
        let path = power_path(&cfg, 1.0);
        for j in 0..50 {
            let t = (j as f64 + 0.5) / 50.0;
            // The midpoint itself and an off-axis point of the plane x1 = 1.
            assert_eq!(eval_w1(&path, &point(&cfg, 1.0, 0.0), t).unwrap(), 0.0);
            assert_eq!(eval_w1(&path, &point(&cfg, 1.0, 0.37), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn w1_center_value_and_antisymmetry() {
        let cfg = cfg6();
        let path = power_path(&cfg, 1.0);
        let t = 0.6;
        let st = path.state(t).unwrap();
        let v = eval_w1(&path, &point(&cfg, 1.0 + st.d, 0.0), t).unwrap();
        let a = st.lam.powf(-0.5 * cfg.bubble_decay());
        let expect = a * (cfg.alpha - bubble_u(2.0 * st.d / st.lam, &cfg));
        assert!(v > 0.0);
        assert!((v - expect).abs() <= 1e-13 * expect, "{v} vs {expect}");
        // Mirror pairs across x1 = 1 are negatives.
        for &(x1, x2) in &[(1.2, 0.0), (1.05, 0.3), (0.7, 0.11), (1.9, 0.8)] {
            let w = eval_w1(&path, &point(&cfg, x1, x2), t).unwrap();
            let wm = eval_w1(&path, &point(&cfg, 2.0 - x1, x2), t).unwrap();
            let scale = w.abs().max(1e-300);
            assert!(
                (w + wm).abs() <= 1e-12 * scale,
                "asymmetry at x1 = {x1}: {w} vs {wm}"
            );
        }
    }

    #[test]
    fn w1_boundary_size_follows_the_dipole_shape() {
        // On the far boundary the pair behaves like a dipole of strength
        // lam^{(n-2)/2} d: |W1| ~ c lam^{(n-2)/2} d |x - (1,0)|^{1-n}.
        // Fitting c once d is small against the boundary distance, the bound
        // must hold with a stable constant at all later times.
        let cfg = cfg6();
        let path = ParamPath::leading(&cfg, 0.5).unwrap();
        let mut samples: Vec<Vec<f64>> = Vec::new();
        for j in 0..6 {
            samples.push(point(&cfg, 2.0, 0.15 * j as f64)); // outer wall
            samples.push(point(&cfg, 1.15 + 0.14 * j as f64, 1.0)); // side wall
        }
        let sup_ratio = |t: f64| -> f64 {
            let st = path.state(t).unwrap();
            let scale = st.lam.powf(0.5 * cfg.bubble_decay()) * st.d;
            samples
                .iter()
                .map(|x| {
                    let w = eval_w1(&path, x, t).unwrap().abs();
                    let dist2 = (x[0] - 1.0).powi(2) + x[1].powi(2);
                    let shape = scale * dist2.powf(0.5 * (1.0 - cfg.nf()));
                    w / shape
                })
                .fold(0.0f64, f64::max)
        };
        let c_ref = sup_ratio(0.35); // d = 0.15
        assert!(c_ref.is_finite() && c_ref > 0.0);
        for &t in &[0.4, 0.45, 0.48, 0.499] {
            let c = sup_ratio(t);
            assert!(
                c <= 1.5 * c_ref && c >= c_ref / 1.5,
                "constant drifts: {c} vs {c_ref} at t = {t}"
            );
        }
        // The near wall x1 = 1 is the antisymmetry plane: W1 = 0 there.
        assert_eq!(eval_w1(&path, &point(&cfg, 1.0, 0.9), 0.35).unwrap(), 0.0);
    }

    #[test]
    fn w2_equals_w1_outside_the_cutoff_support() {
        let cfg = cfg6();
        let path = power_path(&cfg, 0.5);
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let h = correction_h(&cfg, 1e3).unwrap();
        for &t in &[0.1, 0.25, 0.4] {
            let st = path.state(t).unwrap();
            let r_supp = 2.0 * geo.b * st.d0;
            // Points clearly beyond the support radius, and boundary points.
            let xs = [
                point(&cfg, 1.0 + st.d + 1.01 * r_supp, 0.0),
                point(&cfg, 1.0 + st.d, 1.2 * r_supp),
                point(&cfg, 2.0, 0.4),
                point(&cfg, 1.5, 1.0),
                point(&cfg, 1.0, 0.6),
            ];
            for x in &xs {
                let w1 = eval_w1(&path, x, t).unwrap();
                let w2 = eval_w2(&path, &geo, &h, x, t).unwrap();
                assert!(w1 == w2, "W2 != W1 at {:?}, t = {t}", &x[..2]);
            }
        }
    }

    #[test]
    fn w2_center_value_formula() {
        let cfg = cfg6();
        let path = power_path(&cfg, 0.5);
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let h = correction_h(&cfg, 1e3).unwrap();
        let t = 0.25;
        let st = path.state(t).unwrap();
        let x = point(&cfg, 1.0 + st.d, 0.0);
        let w1 = eval_w1(&path, &x, t).unwrap();
        let w2 = eval_w2(&path, &geo, &h, &x, t).unwrap();
        let a = st.lam.powf(-0.5 * cfg.bubble_decay());
        let c = (st.lam0 / st.d0).powf(cfg.bubble_decay());
        let expect = w1 - c * a * (h.eval(0.0) - h.eval(2.0 * st.d / st.lam));
        let scale = w2.abs().max(w1.abs());
        assert!(
            (w2 - expect).abs() <= 1e-12 * scale,
            "{w2} vs {expect} (W1 = {w1})"
        );
        // The correction actually changes the value at the center.
        assert!((w2 - w1).abs() > 0.0);
    }

    #[test]
    fn w2_is_even_in_transverse_coordinates() {
        let cfg = cfg6();
        let path = power_path(&cfg, 0.5);
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let h = correction_h(&cfg, 1e3).unwrap();
        let t = 0.2;
        let st = path.state(t).unwrap();
        // Points inside the cutoff support so the correction term is active.
        let r_supp = 2.0 * geo.b * st.d0;
        for j in 1..cfg.n {
            let mut x = vec![0.0; cfg.n];
            x[0] = 1.0 + st.d + 0.3 * r_supp;
            x[j] = 0.5 * r_supp;
            if j >= 2 {
                x[1] = 0.2 * r_supp;
            }
            let w = eval_w2(&path, &geo, &h, &x, t).unwrap();
            x[j] = -x[j];
            let wm = eval_w2(&path, &geo, &h, &x, t).unwrap();
            assert!(w == wm, "parity broken in coordinate {j}");
        }
    }

    #[test]
    fn tau_closed_form_and_inverse_identity() {
        for n in [6usize, 7, 9] {
            let cfg = DimensionConfig::new(n).unwrap();
            let path = ParamPath::leading(&cfg, 1.0).unwrap();
            for j in 0..20 {
                let t = (j as f64 + 0.5) / 20.5;
                let st = path.state(t).unwrap();
                let res = tau_derivative(&path, t).unwrap() * st.lam0 * st.lam0 - 1.0;
                assert!(res.abs() <= 1e-12, "n = {n}, t = {t}: residual {res:.3e}");
            }
        }
        // n = 6: tau = (T-t)^{-2} / (2 l^2).
        let cfg = cfg6();
        let path = ParamPath::leading(&cfg, 1.0).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            let tau = tau_of_t(&path, t).unwrap();
            let expect = 0.5 / (path.ell() * path.ell() * (1.0 - t) * (1.0 - t));
            assert!((tau - expect).abs() <= 1e-13 * expect);
        }
    }

    #[test]
    fn tau_is_increasing_convex_and_diverges() {
        let cfg = DimensionConfig::new(7).unwrap();
        let path = ParamPath::leading(&cfg, 1.0).unwrap();
        let ts: Vec<f64> = (0..200).map(|j| j as f64 / 200.0).collect();
        let taus: Vec<f64> = ts.iter().map(|&t| tau_of_t(&path, t).unwrap()).collect();
        for w in taus.windows(3) {
            assert!(w[1] > w[0], "not increasing");
            assert!(w[2] - w[1] > w[1] - w[0], "not convex");
        }
        assert!(tau_of_t(&path, 1.0 - 1e-8).unwrap() > 1e10);
    }

    #[test]
    fn cutoff_regions_and_gradient_bound() {
        let cfg = cfg6();
        let path = ParamPath::leading(&cfg, 0.5).unwrap();
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let t = 0.35;
        let st = path.state(t).unwrap();
        let mu = geo.r_inner * st.lam0;
        let at = |r: f64| {
            cutoff_eta_r(&path, &geo, &point(&cfg, 1.0 + st.d + r, 0.0), t).unwrap()
        };
        let flat = at(0.5 * mu);
        assert_eq!(
            (flat.value, flat.dradial, flat.lap, flat.dt),
            (1.0, 0.0, 0.0, 0.0)
        );
        let outside = at(2.5 * mu);
        assert_eq!(
            (outside.value, outside.dradial, outside.lap, outside.dt),
            (0.0, 0.0, 0.0, 0.0)
        );
        let bound = ETA_PRIME_MAX / mu;
        for j in 0..100 {
            let c = at((1.0 + 0.01 * j as f64) * mu);
            assert!(c.dradial.abs() <= bound * (1.0 + 1e-12));
            assert!((0.0..=1.0).contains(&c.value));
        }
        // The extremal slope is actually attained at s = 3/2.
        assert!(at(1.5 * mu).dradial.abs() > 0.99 * bound);
    }

    /// Fourth-order central differences of a scalar field f(t, x1, x2).
    fn fd_bundle<F: Fn(f64, f64, f64) -> f64>(
        f: &F,
        t: f64,
        x1: f64,
        x2: f64,
        ht: f64,
        hx: f64,
        nf: f64,
    ) -> FieldDerivs {
        let d1 = |g: &dyn Fn(f64) -> f64, h: f64| {
            (g(-2.0 * h) - 8.0 * g(-h) + 8.0 * g(h) - g(2.0 * h)) / (12.0 * h)
        };
        let d2 = |g: &dyn Fn(f64) -> f64, h: f64| {
            (-g(-2.0 * h) + 16.0 * g(-h) - 30.0 * g(0.0) + 16.0 * g(h) - g(2.0 * h))
                / (12.0 * h * h)
        };
        let fxx = d2(&|e| f(t, x1 + e, x2), hx);
        let frr = d2(&|e| f(t, x1, x2 + e), hx);
        let fr = d1(&|e| f(t, x1, x2 + e), hx);
        FieldDerivs {
            value: f(t, x1, x2),
            dt: d1(&|e| f(t + e, x1, x2), ht),
            dx1: d1(&|e| f(t, x1 + e, x2), hx),
            // Axisymmetric Laplacian: f_{x1x1} + f_{rr} + (n-2) f_r / r.
            lap: fxx + frr + (nf - 2.0) * fr / x2,
        }
    }

    #[test]
    fn w1_derivative_bundle_matches_finite_differences() {
        let cfg = cfg6();
        let path = power_path(&cfg, 1.0);
        let t = 0.55;
        let st = path.state(t).unwrap();
        let f = |t: f64, x1: f64, x2: f64| eval_w1(&path, &point(&cfg, x1, x2), t).unwrap();
        for &(x1, x2) in &[
            (1.0 + st.d + 0.4 * st.lam, 0.3 * st.lam),
            (1.1, 0.25),
            (0.95, 0.4),
        ] {
            let an = eval_w1_derivs(&path, &point(&cfg, x1, x2), t).unwrap();
            let fd = fd_bundle(&f, t, x1, x2, 1e-5, 2e-4 * (1.0 + st.lam), cfg.nf());
            let scale = an.value.abs() / st.lam + 1e-12;
            assert!((an.dt - fd.dt).abs() <= 1e-6 * (fd.dt.abs() + scale));
            assert!((an.dx1 - fd.dx1).abs() <= 1e-6 * (fd.dx1.abs() + scale));
            assert!(
                (an.lap - fd.lap).abs() <= 1e-5 * (fd.lap.abs() + scale / st.lam),
                "lap {} vs {}",
                an.lap,
                fd.lap
            );
        }
    }

    #[test]
    fn w2_derivative_bundle_matches_finite_differences() {
        let cfg = cfg6();
        let path = power_path(&cfg, 0.5);
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let ctx = BubbleContext::new(&cfg).unwrap();
        let h = correction_h(&cfg, 1e3).unwrap();
        let t = 0.25;
        let st = path.state(t).unwrap();
        let f = |t: f64, x1: f64, x2: f64| {
            eval_w2(&path, &geo, &h, &point(&cfg, x1, x2), t).unwrap()
        };
        // One point on the cutoff ramp (all product terms active), one inside
        // the flat region.
        let b_scale = geo.b * st.d0;
        for &(x1, x2) in &[
            (1.0 + st.d + 1.25 * b_scale, 0.8 * b_scale),
            (1.0 + st.d + 0.3 * b_scale, 0.2 * b_scale),
        ] {
            let an = eval_w2_derivs(&path, &geo, &ctx, &h, &point(&cfg, x1, x2), t).unwrap();
            let fd = fd_bundle(&f, t, x1, x2, 1e-5, 1e-4, cfg.nf());
            let vscale = an.value.abs() + 1e-12;
            assert!(
                (an.dt - fd.dt).abs() <= 1e-5 * (fd.dt.abs() + vscale / st.d0),
                "dt {} vs {}",
                an.dt,
                fd.dt
            );
            assert!(
                (an.dx1 - fd.dx1).abs() <= 1e-5 * (fd.dx1.abs() + vscale),
                "dx1 {} vs {}",
                an.dx1,
                fd.dx1
            );
            // The Laplacian of the correction substitutes the profile ODE, so
            // agreement is limited by the interpolant's curvature error.
            assert!(
                (an.lap - fd.lap).abs() <= 2e-3 * (fd.lap.abs() + vscale),
                "lap {} vs {}",
                an.lap,
                fd.lap
            );
        }
    }

    #[test]
    fn scale_law_ratio_is_ell_at_machine_precision() {
        for n in [6usize, 7, 8, 9] {
            let cfg = DimensionConfig::new(n).unwrap();
            let path = ParamPath::leading(&cfg, 2.0).unwrap();
            for j in 0..30 {
                let t = 2.0 * j as f64 / 30.0;
                let st = path.state(t).unwrap();
                let ratio = st.lam0 / st.d0.powf(cfg.lam0_exponent);
                assert!(
                    (ratio - path.ell()).abs() <= 5e-16 * path.ell(),
                    "n = {n}, t = {t}"
                );
            }
        }
    }

    #[test]
    fn geometry_constructor_picks_dyadic_b_and_checks_support() {
        let cfg = cfg6();
        let path = ParamPath::leading(&cfg, 0.5).unwrap();
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        assert_eq!(geo.b, 0.25);
        assert_eq!(geo.m, 1.0);
        assert!(path.t_end() <= geo.t_max);
        // A path whose d dips well below d0/2 violates the support margin.
        let squeezed = ParamPath::new(
            &cfg,
            0.5,
            0.9,
            CorrectionSpec::PowerLaw {
                a_d: -1.5,
                a_lam: 0.0,
            },
        )
        .unwrap();
        assert!(GeometryConfig::new(&squeezed, 2.0, 1.0, 10.0, 15.0).is_err());
        // Bad cutoff radii and degenerate domains are rejected.
        assert!(GeometryConfig::new(&path, 2.0, 1.0, 15.0, 10.0).is_err());
        assert!(GeometryConfig::new(&path, 0.9, 1.0, 10.0, 15.0).is_err());
    }

    #[test]
    fn path_admissibility_is_enforced() {
        let cfg = cfg6();
        // lam goes negative at early times for a large negative amplitude.
        assert!(ParamPath::new(
            &cfg,
            1.0,
            0.9,
            CorrectionSpec::PowerLaw {
                a_d: 0.0,
                a_lam: -10.0,
            },
        )
        .is_err());
        assert!(ParamPath::new(&cfg, 1.0, 0.4, CorrectionSpec::Zero).is_err());
        assert!(ParamPath::new(&cfg, -1.0, 0.9, CorrectionSpec::Zero).is_err());
        // Sampled corrections must vanish at T.
        let times: Vec<f64> = (0..=8).map(|j| j as f64 / 8.0).collect();
        let bad = vec![0.01; 9];
        assert!(ParamPath::new(
            &cfg,
            1.0,
            0.9,
            CorrectionSpec::Samples {
                times: times.clone(),
                d1: bad,
                lam1: vec![0.0; 9],
            },
        )
        .is_err());
    }

    #[test]
    fn sampled_corrections_reproduce_a_smooth_target() {
        let cfg = cfg6();
        let t_end = 1.0;
        let sigma = 0.9;
        let theta = (1.0 + sigma) / (cfg.nf() - 4.0);
        let q = 1.0 + theta;
        let amp_d = 1e-2;
        let amp_l = -5e-3;
        let times: Vec<f64> = (0..=128).map(|j| t_end * j as f64 / 128.0).collect();
        let d1: Vec<f64> = times.iter().map(|&t| amp_d * (t_end - t).powf(q)).collect();
        let lam1: Vec<f64> = times.iter().map(|&t| amp_l * (t_end - t).powf(q)).collect();
        let path = ParamPath::new(
            &cfg,
            t_end,
            sigma,
            CorrectionSpec::Samples { times, d1, lam1 },
        )
        .unwrap();
        for j in 0..200 {
            let t = 0.9 * t_end * j as f64 / 200.0;
            let st = path.state(t).unwrap();
            let w = (t_end - t).powf(q);
            let wdot = -q * (t_end - t).powf(theta);
            assert!(
                (st.d1 - amp_d * w).abs() <= 1e-5 * amp_d,
                "d1 interpolation off at t = {t}"
            );
            assert!((st.lam1 - amp_l * w).abs() <= 1e-5 * amp_l.abs());
            assert!(
                (st.d1dot - amp_d * wdot).abs() <= 2e-4 * amp_d * q,
                "d1dot off at t = {t}: {} vs {}",
                st.d1dot,
                amp_d * wdot
            );
        }
        // The closed-form family records its exact weighted norm.
        let pw = power_path(&cfg, 1.0);
        let expect = (1.0 + pw.weight_exponent()) * (0.02 + 0.01);
        assert!((pw.correction_norm() - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn exports_are_deterministic_and_well_formed() {
        let cfg = cfg6();
        let path = power_path(&cfg, 0.5);
        let geo = GeometryConfig::new(&path, 2.0, 1.0, 10.0, 15.0).unwrap();
        let dir = std::env::temp_dir().join("blowup-ansatz-export");
        let csv = dir.join("path.csv");
        let json = dir.join("geometry.json");
        let times: Vec<f64> = (0..10).map(|j| j as f64 / 20.0).collect();
        path.write_csv(&csv, &times).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,d0,lam0,d1,lam1,d1dot,lam1dot");
        assert_eq!(lines.count(), 10);
        // Rerun writes byte-identical output.
        path.write_csv(dir.join("path2.csv"), &times).unwrap();
        assert_eq!(
            std::fs::read(&csv).unwrap(),
            std::fs::read(dir.join("path2.csv")).unwrap()
        );
        // First data row round-trips the state at t = 0.
        let st = path.state(0.0).unwrap();
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row[2], st.lam0);
        geo.write_json(&json).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        for key in ["m", "m_out", "rho_max", "b", "R", "Rprime"] {
            assert!(parsed.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(parsed["b"].as_f64().unwrap(), 0.25);
        assert!(parsed.get("t_max").is_none());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

//! The Aubin-Talenti bubble and the radial profiles built on top of it.
//!
//! U(y) = alpha (1+|y|²)^{-(n-2)/2} solves ΔU + U^p = 0 exactly when
//! alpha^{p-1} = n(n-2). The linearization L0 = Δ + pU^{p-1} has the scaling
//! kernel Z0 = (n-2)/2 U + r U' and the translation kernel Z1 = ∂U/∂y1; this
//! module carries those profiles, the projected dipole source π (orthogonal
//! to Z0 by construction), its corrector h with the O(r^{-2}) tail, and the
//! scale-law constant ℓ.
//!
//! All integrals go through the panel quadrature in [`crate::quad`]; the unit
//! tests pin them against closed forms and an independent trapezoid oracle.

use crate::config::DimensionConfig;
use crate::error::{Error, Result};
use crate::profile::{geometric_grid, RadialProfile};
use crate::quad::{integral_radial_line, integral_radial_rn, Quadrature, RadialOpts};
use crate::spectral;

/// U(r) = alpha (1+r²)^{-(n-2)/2}.
#[inline]
pub fn bubble_u(r: f64, cfg: &DimensionConfig) -> f64 {
    cfg.alpha * (1.0 + r * r).powf(-0.5 * (cfg.nf() - 2.0))
}

/// U'(r) = -(n-2) alpha r (1+r²)^{-n/2}.
#[inline]
pub fn bubble_u_prime(r: f64, cfg: &DimensionConfig) -> f64 {
    -(cfg.nf() - 2.0) * cfg.alpha * r * (1.0 + r * r).powf(-0.5 * cfg.nf())
}

/// U''(r), analytic.
#[inline]
pub fn bubble_u_second(r: f64, cfg: &DimensionConfig) -> f64 {
    let nf = cfg.nf();
    let q = 1.0 + r * r;
    -(nf - 2.0) * cfg.alpha * (q.powf(-0.5 * nf) - nf * r * r * q.powf(-0.5 * nf - 1.0))
}

/// U^{p-1}(r) = n(n-2) (1+r²)^{-2}: the fractional power collapses to a
/// rational function in every dimension, so no powf in hot loops.
#[inline]
pub fn u_pow_p_minus_1(r: f64, cfg: &DimensionConfig) -> f64 {
    let q = 1.0 + r * r;
    cfg.nf() * (cfg.nf() - 2.0) / (q * q)
}

/// U^p(r) = alpha n(n-2) (1+r²)^{-(n+2)/2}.
#[inline]
pub fn u_pow_p(r: f64, cfg: &DimensionConfig) -> f64 {
    let nf = cfg.nf();
    cfg.alpha * nf * (nf - 2.0) * (1.0 + r * r).powf(-0.5 * (nf + 2.0))
}

/// Scaling kernel Z0 = (n-2)/2 U + r U' = (n-2)/2 alpha (1-r²)(1+r²)^{-n/2};
/// L0 Z0 = 0, one sign change at r = 1.
#[inline]
pub fn kernel_z0(r: f64, cfg: &DimensionConfig) -> f64 {
    let nf = cfg.nf();
    0.5 * (nf - 2.0) * cfg.alpha * (1.0 - r * r) * (1.0 + r * r).powf(-0.5 * nf)
}

/// Z0'(r) = n/2 U' + r U'' (derivative of the scaling kernel).
#[inline]
pub fn kernel_z0_prime(r: f64, cfg: &DimensionConfig) -> f64 {
    0.5 * cfg.nf() * bubble_u_prime(r, cfg) + r * bubble_u_second(r, cfg)
}

/// Translation kernel Z1(y) = ∂U/∂y1 = -(n-2) alpha y1 (1+|y|²)^{-n/2}; odd
/// in y1, L0 Z1 = 0.
pub fn kernel_z1(y: &[f64], cfg: &DimensionConfig) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    -(cfg.nf() - 2.0) * cfg.alpha * y[0] * (1.0 + r2).powf(-0.5 * cfg.nf())
}

/// Radial section of Z1: Z1(y) = kernel_z1_radial(|y|) y1/|y|, and the
/// section is just U'.
#[inline]
pub fn kernel_z1_radial(r: f64, cfg: &DimensionConfig) -> f64 {
    bubble_u_prime(r, cfg)
}

/// ∫_{R^n} f(|y|) dy with the default panel quadrature; the result carries an
/// a posteriori error estimate and fails hard on undecayed tails.
pub fn radial_integral<F: Fn(f64) -> f64>(cfg: &DimensionConfig, f: F) -> Result<Quadrature> {
    integral_radial_rn(cfg.n, f, RadialOpts::default())
}

/// Bubble integrals that every downstream module keeps asking for.
#[derive(Debug, Clone)]
pub struct BubbleContext {
    pub cfg: DimensionConfig,
    /// A0 = ∫_{R^n} U^{p-1} Z0 (negative: Z0 changes sign at r = 1).
    pub a0: f64,
    /// A1 = ∫_{R^n} Z0².
    pub a1: f64,
    /// ∫_{R^n} U^p.
    pub int_up: f64,
    /// ℓ in the scale law lam0(t) = ℓ (T-t)^{1+1/(n-4)}.
    pub ell: f64,
}

impl BubbleContext {
    pub fn new(cfg: &DimensionConfig) -> Result<Self> {
        let opts = RadialOpts::default();
        let a0_line = integral_radial_line(cfg.n, |r| u_pow_p_minus_1(r, cfg) * kernel_z0(r, cfg), opts)?;
        let a1_line = integral_radial_line(cfg.n, |r| kernel_z0(r, cfg).powi(2), opts)?;
        let up_line = integral_radial_line(cfg.n, |r| u_pow_p(r, cfg), opts)?;
        let area = crate::quad::unit_sphere_area(cfg.n);
        let ell = ell_from_lines(cfg, a1_line.value, up_line.value);
        Ok(Self {
            cfg: *cfg,
            a0: area * a0_line.value,
            a1: area * a1_line.value,
            int_up: area * up_line.value,
            ell,
        })
    }

    /// p alpha / 2^{n-2}, the prefactor of the projected dipole source.
    pub fn pi_coefficient(&self) -> f64 {
        self.cfg.p * self.cfg.alpha / 2f64.powi(self.cfg.n as i32 - 2)
    }

    /// A0/A1, the coefficient that makes π orthogonal to Z0.
    pub fn projection_ratio(&self) -> f64 {
        self.a0 / self.a1
    }
}

fn ell_from_lines(cfg: &DimensionConfig, a1: f64, up: f64) -> f64 {
    let nf = cfg.nf();
    let base = (nf - 3.0) / (nf - 4.0) * 2f64.powi(cfg.n as i32 - 1) / (cfg.alpha * (nf - 2.0))
        * a1
        / up;
    base.powf(1.0 / (nf - 4.0))
}

/// The constant ℓ of the leading scale law, fixed so that the mode-0 pairing
/// of the ansatz error vanishes along lam0 = ℓ (T-t)^{1+1/(n-4)}.
pub fn constant_ell(cfg: &DimensionConfig) -> Result<f64> {
    let opts = RadialOpts::default();
    let a1 = integral_radial_line(cfg.n, |r| kernel_z0(r, cfg).powi(2), opts)?;
    let up = integral_radial_line(cfg.n, |r| u_pow_p(r, cfg), opts)?;
    Ok(ell_from_lines(cfg, a1.value, up.value))
}

/// π(r) = p alpha/2^{n-2} [ (A0/A1) Z0(r) - U^{p-1}(r) ]: the angular
/// projection of the dipole interaction, orthogonal to Z0 by the choice of
/// A0/A1, decaying like U^{p-1} ~ r^{-4}.
pub fn pi_profile(r: f64, ctx: &BubbleContext) -> f64 {
    ctx.pi_coefficient() * (ctx.projection_ratio() * kernel_z0(r, &ctx.cfg) - u_pow_p_minus_1(r, &ctx.cfg))
}

/// Corrector profile and the exact data of the solve that produced it.
#[derive(Debug, Clone)]
pub struct CorrectionParts {
    /// h with analytic first derivatives and an r^{-2} power tail.
    pub h: RadialProfile,
    /// The source the solve actually inverted (see [`correction_h_with_nodes`]).
    pub rhs: RadialProfile,
    /// Measured r^{n-1} W(Z0, Z̃); analytically -(n-2)² alpha / 2.
    pub wronskian: f64,
}

/// Solve L0 h = rhs on the given grid (first node must be 0) by variation of
/// parameters against (Z0, Z̃):
///
///   h = -(1/c_W) [ Z0 ∫_0^r rhs Z̃ s^{n-1} ds - Z̃ ∫_0^r rhs Z0 s^{n-1} ds ],
///
/// the unique choice of antiderivatives that is regular at the origin. If
/// ∫_0^∞ rhs Z0 s^{n-1} ds = 0 the Z̃ branch dies out and h inherits the decay
/// of the first integral; for rhs = π that is O(r^{-2}).
pub fn correction_from_rhs(cfg: &DimensionConfig, grid: &[f64], rhs: &[f64]) -> Result<CorrectionParts> {
    if grid.len() < 16 || grid[0] != 0.0 || rhs.len() != grid.len() {
        return Err(Error::InvalidConfig(
            "correction solve needs a grid starting at 0 with matching rhs".into(),
        ));
    }
    let ni = cfg.n as i32;
    let zt = spectral::tilde_z(cfg, &grid[1..])?;
    let ztv = zt.values();
    let ztp = zt.derivs().expect("tilde_z always carries derivatives");

    // The Wronskian r^{n-1}(Z0 Z̃' - Z0' Z̃) is a first integral; spread beyond
    // 1% means Z̃ is defective.
    let mut ws = Vec::new();
    for (k, &r) in grid[1..].iter().enumerate() {
        if (0.1..=50.0).contains(&r) || ws.is_empty() {
            ws.push(r.powi(ni - 1) * (kernel_z0(r, cfg) * ztp[k] - kernel_z0_prime(r, cfg) * ztv[k]));
        }
    }
    let mut sorted = ws.clone();
    sorted.sort_by(f64::total_cmp);
    let c_w = sorted[sorted.len() / 2];
    let spread = ws
        .iter()
        .map(|w| (w - c_w).abs())
        .fold(0.0f64, f64::max)
        / c_w.abs();
    if !spread.is_finite() || spread > 0.01 {
        return Err(Error::WronskianDegenerate(spread));
    }

    // Cumulative trapezoid of the two variation-of-parameters integrands;
    // both vanish at r = 0 (rhs Z̃ s^{n-1} ~ s there).
    let m = grid.len();
    let mut f1 = vec![0.0; m];
    let mut f2 = vec![0.0; m];
    for i in 1..m {
        let r = grid[i];
        let w = r.powi(ni - 1);
        f1[i] = rhs[i] * ztv[i - 1] * w;
        f2[i] = rhs[i] * kernel_z0(r, cfg) * w;
    }
    let i1 = cumtrapz(grid, &f1);
    let i2 = cumtrapz(grid, &f2);

    let mut hv = vec![0.0; m];
    let mut hd = vec![0.0; m];
    for i in 1..m {
        let r = grid[i];
        let a = -i1[i] / c_w;
        let b = i2[i] / c_w;
        hv[i] = a * kernel_z0(r, cfg) + b * ztv[i - 1];
        hd[i] = a * kernel_z0_prime(r, cfg) + b * ztp[i - 1];
    }
    Ok(CorrectionParts {
        h: RadialProfile::with_derivs(grid.to_vec(), hv, hd)?,
        rhs: RadialProfile::new(grid.to_vec(), rhs.to_vec())?,
        wronskian: c_w,
    })
}

/// The corrector h solving L0 h = π out to r_max, on an origin-anchored
/// geometric grid with the given node count.
///
/// The Z0-projection coefficient inside π is re-evaluated with this grid's
/// own trapezoid rule rather than the panel quadrature: that makes the second
/// variation-of-parameters integral vanish identically at the outer edge, so
/// the Z̃ branch cannot leak a constant into the tail and r²h stays bounded.
pub fn correction_h_with_nodes(
    cfg: &DimensionConfig,
    r_max: f64,
    nodes: usize,
) -> Result<CorrectionParts> {
    if !r_max.is_finite() || r_max <= 10.0 || nodes < 64 {
        return Err(Error::InvalidConfig(format!(
            "correction grid needs r_max > 10 and >= 64 nodes, got {r_max}/{nodes}"
        )));
    }
    let mut grid = Vec::with_capacity(nodes);
    grid.push(0.0);
    grid.extend(geometric_grid(1e-3, r_max, nodes - 1));
    let ni = cfg.n as i32;
    let m = grid.len();
    let mut g0 = vec![0.0; m];
    let mut g1 = vec![0.0; m];
    for i in 0..m {
        let r = grid[i];
        let w = r.powi(ni - 1);
        let z = kernel_z0(r, cfg);
        g0[i] = u_pow_p_minus_1(r, cfg) * z * w;
        g1[i] = z * z * w;
    }
    let ratio = *cumtrapz(&grid, &g0).last().unwrap() / *cumtrapz(&grid, &g1).last().unwrap();
    let coef = cfg.p * cfg.alpha / 2f64.powi(ni - 2);
    let rhs: Vec<f64> = grid
        .iter()
        .map(|&r| coef * (ratio * kernel_z0(r, cfg) - u_pow_p_minus_1(r, cfg)))
        .collect();
    let parts = correction_from_rhs(cfg, &grid, &rhs)?;
    Ok(CorrectionParts {
        h: parts.h.with_tail_exponent(2.0),
        rhs: parts.rhs.with_tail_exponent(4.0),
        wronskian: parts.wronskian,
    })
}

/// [`correction_h_with_nodes`] at the default resolution (2048 nodes).
pub fn correction_h(cfg: &DimensionConfig, r_max: f64) -> Result<RadialProfile> {
    correction_h_with_nodes(cfg, r_max, 2048).map(|parts| parts.h)
}

fn cumtrapz(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        out[i] = out[i - 1] + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cfg(n: usize) -> DimensionConfig {
        DimensionConfig::new(n).unwrap()
    }

    #[test]
    fn frozen_point_values() {
        let c = cfg(6);
        // alpha_6 = 24; U(1) = alpha/4; Z0(0) = 2 alpha; Z1(0) = 0.
        assert_relative_eq!(bubble_u(0.0, &c), 24.0, max_relative = 1e-14);
        assert_relative_eq!(bubble_u(1.0, &c), 6.0, max_relative = 1e-14);
        assert_relative_eq!(kernel_z0(0.0, &c), 48.0, max_relative = 1e-14);
        assert_eq!(kernel_z1(&[0.0, 0.0, 0.0], &c), 0.0);
        // Z0 vanishes exactly at the sign change r = 1.
        assert_eq!(kernel_z0(1.0, &c), 0.0);
    }

    #[test]
    fn power_shortcuts_match_powf() {
        let c = cfg(7);
        for &r in &[0.0, 0.3, 1.0, 1.7, 5.0, 40.0] {
            let u = bubble_u(r, &c);
            assert_relative_eq!(u_pow_p_minus_1(r, &c), u.powf(c.p - 1.0), max_relative = 1e-12);
            assert_relative_eq!(u_pow_p(r, &c), u.powf(c.p), max_relative = 1e-12);
        }
    }

    #[test]
    fn bubble_solves_its_equation() {
        // ΔU + U^p = 0 with analytic derivatives, residual below 1e-10
        // relative to the terms entering the cancellation. An absolute bound
        // would be vacuous: the terms reach ~3e6 at n = 11 near the origin
        // (one ulp there is already 3e-10) and ~1e-20 in the far field.
        for n in 6..=11 {
            let c = cfg(n);
            for &r in &geometric_grid(1e-3, 1e3, 2048) {
                let second = bubble_u_second(r, &c);
                let drift = (c.nf() - 1.0) * bubble_u_prime(r, &c) / r;
                let res = second + drift + u_pow_p(r, &c);
                let scale = second.abs() + drift.abs() + u_pow_p(r, &c);
                assert!(
                    res.abs() <= 1e-10 * scale,
                    "n={n} r={r}: residual {res:.3e} vs scale {scale:.3e}"
                );
            }
        }
    }

    #[test]
    fn kernels_annihilated_by_l0() {
        // Fourth-order finite differences; residual < 1e-6 across [0, 50].
        // Z0's high derivatives near 0 are large (sixth is ~5.5e5), so the
        // step has to sit where truncation (~h^4) and rounding (~1e-16/h^2)
        // are both under the bound.
        let c = cfg(6);
        let h = 1e-3;
        let l0_mode0 = |f: &dyn Fn(f64) -> f64, r: f64| {
            let d1 = (-f(r + 2.0 * h) + 8.0 * f(r + h) - 8.0 * f(r - h) + f(r - 2.0 * h)) / (12.0 * h);
            let d2 = (-f(r + 2.0 * h) + 16.0 * f(r + h) - 30.0 * f(r) + 16.0 * f(r - h)
                - f(r - 2.0 * h))
                / (12.0 * h * h);
            d2 + (c.nf() - 1.0) * d1 / r + c.p * u_pow_p_minus_1(r, &c) * f(r)
        };
        let z0 = |r: f64| kernel_z0(r, &c);
        // Origin by evenness: ΔZ0(0) = n Z0''(0).
        let d2_origin = (-2.0 * z0(2.0 * h) + 32.0 * z0(h) - 30.0 * z0(0.0)) / (12.0 * h * h);
        let res0 = c.nf() * d2_origin + c.p * u_pow_p_minus_1(0.0, &c) * z0(0.0);
        assert!(res0.abs() < 1e-6, "origin residual {res0:.3e}");
        let mut worst0 = 0.0f64;
        let mut worst1 = 0.0f64;
        for k in 0..200 {
            let r = 0.1 + 49.9 * k as f64 / 199.0;
            worst0 = worst0.max(l0_mode0(&z0, r).abs());
            // Mode-1 radial operator: ∂rr + (n-1)/r ∂r - (n-1)/r² + pU^{p-1},
            // annihilating the section U'.
            let z1 = |s: f64| kernel_z1_radial(s, &c);
            let d1 = (-z1(r + 2.0 * h) + 8.0 * z1(r + h) - 8.0 * z1(r - h) + z1(r - 2.0 * h))
                / (12.0 * h);
            let d2 = (-z1(r + 2.0 * h) + 16.0 * z1(r + h) - 30.0 * z1(r) + 16.0 * z1(r - h)
                - z1(r - 2.0 * h))
                / (12.0 * h * h);
            let res = d2 + (c.nf() - 1.0) * d1 / r - (c.nf() - 1.0) / (r * r) * z1(r)
                + c.p * u_pow_p_minus_1(r, &c) * z1(r);
            worst1 = worst1.max(res.abs());
        }
        assert!(worst0 < 1e-6, "Z0 residual {worst0:.3e}");
        assert!(worst1 < 1e-6, "Z1 residual {worst1:.3e}");
    }

    #[test]
    fn kernel_residual_refines_at_second_order() {
        let c = cfg(6);
        let residual = |h: f64| {
            let z0 = |r: f64| kernel_z0(r, &c);
            [0.3f64, 0.7, 1.3, 2.1, 3.7]
                .iter()
                .map(|&r| {
                    let d1 = (z0(r + h) - z0(r - h)) / (2.0 * h);
                    let d2 = (z0(r + h) - 2.0 * z0(r) + z0(r - h)) / (h * h);
                    (d2 + (c.nf() - 1.0) * d1 / r + c.p * u_pow_p_minus_1(r, &c) * z0(r)).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let rate = (residual(0.02) / residual(0.01)).log2();
        assert!((1.7..=2.3).contains(&rate), "observed order {rate}");
    }

    #[test]
    fn z1_is_odd_and_consistent_with_its_section() {
        let c = cfg(6);
        for k in 0..100 {
            let t = k as f64 * 0.37;
            let y = [t.sin(), (2.0 * t).cos() * 0.8, t.cos(), 0.3 * t.sin(), 0.1, -0.5];
            let mut ym = y;
            ym[0] = -ym[0];
            assert_eq!(kernel_z1(&y, &c), -kernel_z1(&ym, &c));
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 1e-12 {
                assert_relative_eq!(
                    kernel_z1(&y, &c),
                    kernel_z1_radial(r, &c) * y[0] / r,
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn projection_identity_across_dimensions() {
        // -p ∫ U^{p-1} Z0 = (n-2)/2 ∫ U^p: integration by parts of the
        // scaling family, a strong cross-check on the quadrature.
        for n in [6, 7, 8] {
            let c = cfg(n);
            let lhs = radial_integral(&c, |r| u_pow_p_minus_1(r, &c) * kernel_z0(r, &c)).unwrap();
            let rhs = radial_integral(&c, |r| u_pow_p(r, &c)).unwrap();
            let defect = (-c.p * lhs.value - 0.5 * (c.nf() - 2.0) * rhs.value).abs();
            assert!(
                defect <= 1e-6 * rhs.value.abs(),
                "n={n}: defect {defect:.3e} vs ∫U^p = {}",
                rhs.value
            );
        }
    }

    #[test]
    fn frozen_integrals_n6() {
        let c = cfg(6);
        let opts = RadialOpts::default();
        let up = integral_radial_line(6, |r| u_pow_p(r, &c), opts).unwrap();
        let z0sq = integral_radial_line(6, |r| kernel_z0(r, &c).powi(2), opts).unwrap();
        let uz0 = integral_radial_line(6, |r| u_pow_p_minus_1(r, &c) * kernel_z0(r, &c), opts).unwrap();
        assert_relative_eq!(up.value, 96.0, max_relative = 1e-9);
        assert_relative_eq!(z0sq.value, 153.6, max_relative = 1e-9);
        assert_relative_eq!(uz0.value, -96.0, max_relative = 1e-9);

        let ctx = BubbleContext::new(&c).unwrap();
        assert_relative_eq!(ctx.a1, 153.6 * PI.powi(3), max_relative = 1e-9);
        assert_relative_eq!(ctx.a0, -96.0 * PI.powi(3), max_relative = 1e-9);
        assert_relative_eq!(ctx.projection_ratio(), -0.625, max_relative = 1e-9);
        assert_relative_eq!(ctx.pi_coefficient(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(ctx.ell * ctx.ell, 0.8, max_relative = 1e-8);
        assert_relative_eq!(pi_profile(0.0, &ctx), -162.0, max_relative = 1e-8);
        assert_relative_eq!(constant_ell(&c).unwrap(), ctx.ell, max_relative = 1e-12);
        // ℓ > 0 across the supported range.
        for n in 6..=11 {
            assert!(constant_ell(&cfg(n)).unwrap() > 0.0);
        }
    }

    #[test]
    fn transformed_quadrature_matches_trapezoid_oracle() {
        // Independent oracle for ∫_0^∞ U^p r^5 dr at n = 6: plain uniform
        // trapezoid on [0, 2000] with Richardson extrapolation plus the exact
        // power-law completion of the r^{-3} tail.
        let c = cfg(6);
        let g = |r: f64| u_pow_p(r, &c) * r.powi(5);
        let trapezoid = |m: usize| {
            let hstep = 2000.0 / m as f64;
            let mut acc = 0.5 * (g(0.0) + g(2000.0));
            for i in 1..m {
                acc += g(hstep * i as f64);
            }
            acc * hstep
        };
        let t1 = trapezoid(400_000);
        let t2 = trapezoid(800_000);
        let refined = t2 + (t2 - t1) / 3.0;
        let tail = g(2000.0) * 2000.0 / 2.0;
        let oracle = refined + tail;
        let q = integral_radial_line(6, |r| u_pow_p(r, &c), RadialOpts::default()).unwrap();
        assert_relative_eq!(q.value, oracle, max_relative = 1e-8);
    }

    #[test]
    fn pi_is_orthogonal_to_z0() {
        let c = cfg(6);
        let ctx = BubbleContext::new(&c).unwrap();
        let signed = radial_integral(&c, |r| pi_profile(r, &ctx) * kernel_z0(r, &c)).unwrap();
        let absolute = radial_integral(&c, |r| (pi_profile(r, &ctx) * kernel_z0(r, &c)).abs()).unwrap();
        assert!(
            signed.value.abs() <= 1e-8 * absolute.value,
            "∫πZ0 = {:.3e} vs ∫|πZ0| = {:.3e}",
            signed.value,
            absolute.value
        );
    }

    #[test]
    fn tail_slopes() {
        let c = cfg(6);
        let ctx = BubbleContext::new(&c).unwrap();
        let grid = geometric_grid(10.0, 200.0, 160);
        let z0_prof = RadialProfile::new(grid.clone(), grid.iter().map(|&r| kernel_z0(r, &c)).collect()).unwrap();
        let slope_z0 = z0_prof.log_slope(20.0, 100.0).unwrap();
        assert!(
            (slope_z0 - (-(c.nf() - 2.0))).abs() <= 0.02 * (c.nf() - 2.0),
            "Z0 slope {slope_z0}"
        );
        let pi_prof = RadialProfile::new(grid.clone(), grid.iter().map(|&r| pi_profile(r, &ctx)).collect())
            .unwrap();
        let slope_pi = pi_prof.log_slope(20.0, 100.0).unwrap();
        assert!((slope_pi - (-4.0)).abs() <= 0.05 * 4.0, "π slope {slope_pi}");
    }

    #[test]
    fn correction_solves_l0_equation() {
        // Residual of Δh + pU^{p-1}h = rhs with h'' from a finite difference
        // of the stored analytic h' (the stored values alone would make the
        // check circular through the ODE).
        let c = cfg(6);
        let parts = correction_h_with_nodes(&c, 1e3, 131_072).unwrap();
        let grid = parts.h.grid();
        let hv = parts.h.values();
        let hd = parts.h.derivs().unwrap();
        let rhs = parts.rhs.values();
        let mut worst = 0.0f64;
        let mut worst_r = 0.0f64;
        for i in 1..grid.len() - 1 {
            let r = grid[i];
            if !(0.1..=500.0).contains(&r) {
                continue;
            }
            let (dm, dp) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
            let den = dm * dp * (dm + dp);
            let d2 = (dm * dm * hd[i + 1] + (dp * dp - dm * dm) * hd[i] - dp * dp * hd[i - 1]) / den;
            let res = d2 + (c.nf() - 1.0) * hd[i] / r + c.p * u_pow_p_minus_1(r, &c) * hv[i]
                - rhs[i];
            if res.abs() > worst {
                worst = res.abs();
                worst_r = r;
            }
        }
        assert!(worst < 1e-5, "corrector residual {worst:.3e} at r = {worst_r}");
        // Wronskian against the analytic normalization.
        assert_relative_eq!(parts.wronskian, -192.0, max_relative = 0.01);
    }

    #[test]
    fn correction_tail_is_quadratic_and_grid_stable() {
        let c = cfg(6);
        let sup_r2h = |nodes: usize| {
            let parts = correction_h_with_nodes(&c, 1e3, nodes).unwrap();
            parts
                .h
                .grid()
                .iter()
                .zip(parts.h.values())
                .filter(|(r, _)| (10.0..=100.0).contains(*r))
                .map(|(r, v)| r * r * v.abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = sup_r2h(2048);
        let fine = sup_r2h(4096);
        assert!(coarse.is_finite() && coarse > 0.0);
        let ratio = coarse / fine;
        assert!((0.9..=1.1).contains(&ratio), "tail sup ratio {ratio}");
    }

    #[test]
    fn correction_of_zero_source_vanishes() {
        let c = cfg(6);
        let mut grid = vec![0.0];
        grid.extend(geometric_grid(1e-3, 100.0, 511));
        let rhs = vec![0.0; grid.len()];
        let parts = correction_from_rhs(&c, &grid, &rhs).unwrap();
        assert!(parts.h.values().iter().all(|&v| v == 0.0));
    }
}

//! Mode-by-mode linear theory of the inner operator L0 = Δ + pU^{p-1} on a
//! ball.
//!
//! Fields on B_{2R} ⊂ ℝⁿ are split along spherical harmonics of S^{n-1}: the
//! spherical mean (mode 0), the n coordinate harmonics θ_j = y_j/|y| with
//! Laplace-Beltrami eigenvalue n-1 (mode 1), and the orthogonal remainder.
//! Under that splitting L0 acts radially on each component, and this module
//! supplies the radial solvers:
//!
//! - [`decompose`] samples a field on a radius-times-angle lattice and
//!   returns the mode-0 and mode-1 radial parts plus the remainder L² mass;
//! - [`mode0_inverse`] solves ΔH + pU^{p-1}H + h̃ = 0 on ℝⁿ for a radial
//!   datum orthogonal to the kernel element Z0, by variation of parameters
//!   against the kernel pair (Z0, Z̃);
//! - [`mode1_inverse`] solves the mode-1 radial operator
//!   ∂_rr + (n-1)∂_r/r - (n-1)/r² + pU^{p-1}, whose kernel element is
//!   Z = U', by reduction of order;
//! - [`mode0_parabolic`] advances φ_τ = Δφ + pU^{p-1}φ + h - c(τ)Z on
//!   B_{2R} with zero Dirichlet and initial data, where Z is the ground
//!   state of -L0 and the multiplier c(τ) removes the one unstable mode.
//!
//! The stationary inverses are pure functions; the parabolic solver owns its
//! state, so concurrent solves need one call per worker.

use crate::bubble::{self, kernel_z0, kernel_z0_prime, u_pow_p_minus_1};
use crate::config::{DimensionConfig, NormSpec};
use crate::error::{Error, Result};
use crate::export;
use crate::profile::{fit_line, geometric_grid, RadialProfile};
use crate::quad::{gauss_legendre, unit_sphere_area};
use crate::spectral::{self, negative_eigenpair};
use std::path::Path;

/// Relative Z0-pairing defect above which a mode-0 datum is rejected as
/// non-orthogonal. Below it the residual pairing (finite-domain truncation
/// and quadrature noise) is projected out exactly in the discrete rule, so
/// the Z̃ branch of the inverse terminates at the outer edge.
const ORTHO_TOL: f64 = 1e-2;

/// Parseval defect above which the angular lattice is declared unresolved.
const PARSEVAL_TOL: f64 = 1e-2;

/// Node count of the stationary solve grids at the default resolution.
const STATIONARY_NODES: usize = 4096;

/// Cell count of the parabolic space discretization.
const PARABOLIC_CELLS: usize = 1024;

/// Relative local-error tolerance of the adaptive parabolic stepper.
const STEP_TOL: f64 = 1e-6;

/// Consecutive step rejections before the stepper gives up.
const MAX_REJECTS: usize = 20;

// ---------------------------------------------------------------------------
// Spherical-harmonic decomposition
// ---------------------------------------------------------------------------

/// Radius-times-angle sampling lattice for [`decompose`].
///
/// `polar` Gauss-Legendre nodes resolve the angle between y and the y₁ axis.
/// With `azimuthal = 1` the lattice assumes the field is symmetric under
/// rotations of y_⊥ = (y₂, …, y_n), the symmetry class of every field this
/// crate produces; `azimuthal >= 2` adds Gauss-Legendre nodes in a second
/// angle so that fields depending on (y₁, y₂, |(y₃, …)|) are resolved too.
/// In both cases the quadrature over the remaining sphere directions is done
/// analytically, which is exact precisely on those symmetry classes.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub radii: Vec<f64>,
    pub polar: usize,
    pub azimuthal: usize,
}

impl SamplingSpec {
    pub fn new(radii: Vec<f64>, polar: usize, azimuthal: usize) -> Result<Self> {
        if radii.len() < 2
            || radii.iter().any(|r| !r.is_finite() || *r <= 0.0)
            || radii.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(
                "sampling radii must be finite, positive and strictly increasing, len >= 2".into(),
            ));
        }
        if polar < 2 || azimuthal < 1 {
            return Err(Error::InvalidConfig(format!(
                "sampling lattice needs polar >= 2 and azimuthal >= 1, got {polar}/{azimuthal}"
            )));
        }
        Ok(Self {
            radii,
            polar,
            azimuthal,
        })
    }

    /// Lattice for fields symmetric under rotations of (y₂, …, y_n).
    pub fn axisymmetric(radii: Vec<f64>, polar: usize) -> Result<Self> {
        Self::new(radii, polar, 1)
    }
}

/// Mode content of a sampled field.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    /// Spherical means h0(r).
    pub h0: RadialProfile,
    /// First-moment coefficients per direction: the field restricted to a
    /// sphere of radius r contains h1[j](r) · y_{j+1}/r.
    pub h1: Vec<RadialProfile>,
    /// L² mass of the remainder (modes >= n+1) over the sampled radial
    /// window: sqrt of the trapezoid integral of the per-sphere residual
    /// energy against r^{n-1} dr.
    pub hperp_energy: f64,
}

struct AngularLattice {
    weights: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    t3: Vec<f64>,
    /// Analytic |S^{n-1}|, the normalizer of means and moments.
    area: f64,
    /// 1 on the axisymmetric path, 2 when the second angle is sampled.
    moment_directions: usize,
}

/// Quadrature nodes on the unit sphere. Writing y = (c, s ω) with ω in
/// S^{n-2} and s = sqrt(1-c²), the measure is (1-c²)^{(n-3)/2} dc dω; the
/// ω-integral is carried out analytically (axisymmetric path) or reduced
/// once more to ω = (b, sqrt(1-b²) ω̃) with weight (1-b²)^{(n-4)/2}
/// (biaxial path). First moments of the unsampled directions vanish by the
/// odd symmetry of the analytic factor, so only θ₁ (and θ₂ on the biaxial
/// path) carry mode-1 content.
fn angular_lattice(spec: &SamplingSpec, cfg: &DimensionConfig) -> AngularLattice {
    let nf = cfg.nf();
    let (cn, cw) = gauss_legendre(spec.polar);
    let area = unit_sphere_area(cfg.n);
    let mut weights = Vec::new();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut t3 = Vec::new();
    if spec.azimuthal == 1 {
        let sub = unit_sphere_area(cfg.n - 1);
        for (&c, &w) in cn.iter().zip(&cw) {
            let s2 = 1.0 - c * c;
            weights.push(sub * w * s2.powf(0.5 * (nf - 3.0)));
            t1.push(c);
            t2.push(s2.sqrt());
            t3.push(0.0);
        }
    } else {
        let sub = unit_sphere_area(cfg.n - 2);
        let (bn, bw) = gauss_legendre(spec.azimuthal);
        for (&c, &wc) in cn.iter().zip(&cw) {
            let s2 = 1.0 - c * c;
            let s = s2.sqrt();
            let wpol = wc * s2.powf(0.5 * (nf - 3.0));
            for (&b, &wb) in bn.iter().zip(&bw) {
                let b2 = 1.0 - b * b;
                weights.push(sub * wpol * wb * b2.powf(0.5 * (nf - 4.0)));
                t1.push(c);
                t2.push(s * b);
                t3.push(s * b2.sqrt());
            }
        }
    }
    AngularLattice {
        weights,
        t1,
        t2,
        t3,
        area,
        moment_directions: if spec.azimuthal == 1 { 1 } else { 2 },
    }
}

/// Split a field into spherical mean, coordinate first moments and the
/// remainder energy, checking the lattice against Parseval: per sphere, the
/// directly integrated residual energy must match total minus modal energy
/// within 1%, otherwise the lattice Gram matrix is wrong and the result
/// would be aliased.
pub fn decompose<F: Fn(&[f64]) -> f64>(
    field: F,
    spec: &SamplingSpec,
    cfg: &DimensionConfig,
) -> Result<ModeDecomposition> {
    let lat = angular_lattice(spec, cfg);
    let nf = cfg.nf();
    let nr = spec.radii.len();
    let mut h0 = vec![0.0; nr];
    let mut c1 = vec![0.0; nr];
    let mut c2 = vec![0.0; nr];
    let mut res_energy = vec![0.0; nr];
    let mut point = vec![0.0; cfg.n];
    let mut vals = vec![0.0; lat.weights.len()];
    let mut worst = 0.0f64;
    for (k, &r) in spec.radii.iter().enumerate() {
        for i in 0..lat.weights.len() {
            point[0] = r * lat.t1[i];
            point[1] = r * lat.t2[i];
            point[2] = r * lat.t3[i];
            vals[i] = field(&point);
        }
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut tot = 0.0;
        for i in 0..vals.len() {
            let wv = lat.weights[i] * vals[i];
            s0 += wv;
            s1 += wv * lat.t1[i];
            if lat.moment_directions > 1 {
                s2 += wv * lat.t2[i];
            }
            tot += wv * vals[i];
        }
        if !tot.is_finite() {
            return Err(Error::NonFinite("mode decomposition lattice sums"));
        }
        h0[k] = s0 / lat.area;
        c1[k] = nf * s1 / lat.area;
        c2[k] = nf * s2 / lat.area;
        let modal = lat.area * (h0[k] * h0[k] + (c1[k] * c1[k] + c2[k] * c2[k]) / nf);
        let mut res = 0.0;
        for i in 0..vals.len() {
            let d = vals[i] - h0[k] - c1[k] * lat.t1[i] - c2[k] * lat.t2[i];
            res += lat.weights[i] * d * d;
        }
        res_energy[k] = res;
        worst = worst.max((tot - modal - res).abs() / tot.max(1e-300));
    }
    if worst > PARSEVAL_TOL {
        return Err(Error::UnderResolved {
            defect: worst,
            tolerance: PARSEVAL_TOL,
        });
    }
    let mut mass = 0.0;
    for k in 1..nr {
        let (ra, rb) = (spec.radii[k - 1], spec.radii[k]);
        mass += 0.5
            * (res_energy[k - 1] * ra.powi(cfg.n as i32 - 1)
                + res_energy[k] * rb.powi(cfg.n as i32 - 1))
            * (rb - ra);
    }
    let mut h1 = Vec::with_capacity(cfg.n);
    h1.push(RadialProfile::new(spec.radii.clone(), c1)?);
    h1.push(RadialProfile::new(spec.radii.clone(), c2)?);
    for _ in 2..cfg.n {
        h1.push(RadialProfile::new(
            spec.radii.clone(),
            vec![0.0; nr],
        )?);
    }
    Ok(ModeDecomposition {
        h0: RadialProfile::new(spec.radii.clone(), h0)?,
        h1,
        hperp_energy: mass.sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Stationary mode-0 inverse
// ---------------------------------------------------------------------------

/// Output of [`mode0_inverse`].
#[derive(Debug, Clone)]
pub struct Mode0Inverse {
    /// H with ΔH + pU^{p-1}H + h̃ = 0 and H -> 0 at infinity, carrying
    /// analytic first derivatives and an r^{2-n} tail continuation.
    pub h: RadialProfile,
    /// sup (1+r)^a |H| over sup (1+r)^{2+a} |h0|, the measured constant of
    /// the weighted a priori bound (a from the norm bundle).
    pub bound_ratio: f64,
    /// Measured r^{n-1} W(Z0, Z̃); analytically -(n-2)² alpha / 2.
    pub wronskian: f64,
    /// Relative Z0-pairing defect of the datum before the internal
    /// projection, |∫ h0 Z0 r^{n-1}| / ∫ |h0||Z0| r^{n-1}.
    pub defect: f64,
}

/// Trapezoid cumulative integral from xs[0], with the first cell integrated
/// by the power rule for an integrand vanishing like s^{k-1}: the plain
/// trapezoid overestimates ∫_0^{x₁} c s^{k-1} ds by the factor k/2, which
/// would poison every downstream ratio near the origin.
fn cumtrapz_seeded(xs: &[f64], ys: &[f64], k: f64) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    if xs.len() < 2 {
        return out;
    }
    out[1] = ys[1] * xs[1] / k;
    for i in 2..xs.len() {
        out[i] = out[i - 1] + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

fn trapz(xs: &[f64], ys: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// Median of r^{n-1} W(Z0, Z̃) over the moderate-r window, with the same 1%
/// constancy guard used by the corrector solve.
fn wronskian_constant(
    cfg: &DimensionConfig,
    grid: &[f64],
    ztv: &[f64],
    ztp: &[f64],
) -> Result<f64> {
    let ni = cfg.n as i32;
    let mut ws = Vec::new();
    for (k, &r) in grid.iter().enumerate() {
        if (0.1..=50.0).contains(&r) || ws.is_empty() {
            ws.push(
                r.powi(ni - 1) * (kernel_z0(r, cfg) * ztp[k] - kernel_z0_prime(r, cfg) * ztv[k]),
            );
        }
    }
    let mut sorted = ws.clone();
    sorted.sort_by(f64::total_cmp);
    let c_w = sorted[sorted.len() / 2];
    let spread = ws.iter().map(|w| (w - c_w).abs()).fold(0.0f64, f64::max) / c_w.abs();
    if !spread.is_finite() || spread > 0.01 {
        return Err(Error::WronskianDegenerate(spread));
    }
    Ok(c_w)
}

/// Mode-0 stationary inverse at the default grid resolution.
///
/// The datum lives on B_{2R} with 2R read off the end of its grid, and is
/// extended by zero outside. See [`mode0_inverse_with_nodes`].
pub fn mode0_inverse(
    h0: &RadialProfile,
    cfg: &DimensionConfig,
    norms: &NormSpec,
) -> Result<Mode0Inverse> {
    mode0_inverse_with_nodes(h0, cfg, norms, STATIONARY_NODES)
}

/// Solve ΔH + pU^{p-1}H + h̃ = 0 on ℝⁿ by variation of parameters,
///
///   H(r) = -(1/c_W) [ Z0(r) ∫_r^{2R} h̃ Z̃ s^{n-1} ds
///                     + Z̃(r) ∫_0^r h̃ Z0 s^{n-1} ds ],
///
/// the choice of antiderivatives that is regular at the origin (the Z̃
/// coefficient vanishes like r^n there) and decays at infinity (the Z0
/// coefficient vanishes at the support edge, and the Z̃ coefficient reaches
/// exactly the total pairing ∫ h̃ Z0, which the solvability condition makes
/// zero). The datum's residual Z0-component below the [`Error::NotOrthogonal`]
/// gate is projected out with this grid's own quadrature rule so that the
/// Z̃ branch terminates identically and H inherits the pure r^{2-n} tail.
pub fn mode0_inverse_with_nodes(
    h0: &RadialProfile,
    cfg: &DimensionConfig,
    norms: &NormSpec,
    nodes: usize,
) -> Result<Mode0Inverse> {
    let rb = *h0.grid().last().expect("profiles are nonempty");
    if !rb.is_finite() || rb <= 10.0 || nodes < 64 {
        return Err(Error::InvalidConfig(format!(
            "mode-0 inverse needs a datum supported out to r > 10 and >= 64 nodes, got {rb}/{nodes}"
        )));
    }
    let nf = cfg.nf();
    let ni = cfg.n as i32;
    let mut grid = Vec::with_capacity(nodes);
    grid.push(0.0);
    grid.extend(geometric_grid(1e-3, rb, nodes - 1));
    let m = grid.len();
    let zt = spectral::tilde_z(cfg, &grid[1..])?;
    let ztv = zt.values();
    let ztp = zt.derivs().expect("tilde_z always carries derivatives");
    let c_w = wronskian_constant(cfg, &grid[1..], ztv, ztp)?;

    let ht: Vec<f64> = grid.iter().map(|&r| h0.eval(r)).collect();
    let z0: Vec<f64> = grid.iter().map(|&r| kernel_z0(r, cfg)).collect();
    let wgt: Vec<f64> = grid.iter().map(|&r| r.powi(ni - 1)).collect();

    let pair: Vec<f64> = (0..m).map(|i| ht[i] * z0[i] * wgt[i]).collect();
    let pair_abs: Vec<f64> = pair.iter().map(|x| x.abs()).collect();
    let z0sq: Vec<f64> = (0..m).map(|i| z0[i] * z0[i] * wgt[i]).collect();
    let num = *cumtrapz_seeded(&grid, &pair, nf).last().unwrap();
    let den_abs = *cumtrapz_seeded(&grid, &pair_abs, nf).last().unwrap();
    let den0 = *cumtrapz_seeded(&grid, &z0sq, nf).last().unwrap();
    let defect = num.abs() / den_abs.max(1e-300);
    if defect > ORTHO_TOL {
        return Err(Error::NotOrthogonal {
            value: defect,
            tolerance: ORTHO_TOL,
        });
    }
    let beta = num / den0;
    let hp: Vec<f64> = (0..m).map(|i| ht[i] - beta * z0[i]).collect();

    // Variation-of-parameters integrals. The Z̃ integrand vanishes linearly
    // at the origin (Z̃ ~ r^{2-n}), the Z0 integrand like r^{n-1}.
    let mut g1 = vec![0.0; m];
    let mut g2 = vec![0.0; m];
    for i in 1..m {
        g1[i] = hp[i] * ztv[i - 1] * wgt[i];
        g2[i] = hp[i] * z0[i] * wgt[i];
    }
    let i1 = cumtrapz_seeded(&grid, &g1, 2.0);
    let i2 = cumtrapz_seeded(&grid, &g2, nf);
    let t1 = *i1.last().unwrap();

    let mut hv = vec![0.0; m];
    let mut hd = vec![0.0; m];
    for i in 0..m {
        let a = -(t1 - i1[i]) / c_w;
        let b = -i2[i] / c_w;
        hv[i] = a * z0[i];
        hd[i] = a * kernel_z0_prime(grid[i], cfg);
        if i > 0 {
            hv[i] += b * ztv[i - 1];
            hd[i] += b * ztp[i - 1];
        }
    }

    let sup_h = grid
        .iter()
        .zip(&hv)
        .map(|(&r, &v)| (1.0 + r).powf(norms.a) * v.abs())
        .fold(0.0f64, f64::max);
    let sup_datum = grid
        .iter()
        .zip(&ht)
        .map(|(&r, &v)| (1.0 + r).powf(2.0 + norms.a) * v.abs())
        .fold(0.0f64, f64::max);
    let bound_ratio = if sup_datum > 0.0 { sup_h / sup_datum } else { 0.0 };

    Ok(Mode0Inverse {
        h: RadialProfile::with_derivs(grid, hv, hd)?.with_tail_exponent(nf - 2.0),
        bound_ratio,
        wronskian: c_w,
        defect,
    })
}

// ---------------------------------------------------------------------------
// Stationary mode-1 inverse
// ---------------------------------------------------------------------------

/// Output of [`mode1_inverse`].
#[derive(Debug, Clone)]
pub struct Mode1Inverse {
    /// φ̄ with ℒ₁ φ̄ + h1 = 0 on (0, 2R), φ̄(2R) = 0, regular at the origin,
    /// with analytic first derivatives.
    pub phi: RadialProfile,
    /// Finite-difference residual sup |ℒ₁ φ̄ + h1| over the interior window
    /// [0.1, 0.9·2R], relative to sup |h1| there.
    pub round_trip: f64,
    /// C in |φ̄(r)| <= C R^{n-a} / (1 + r^{n-1}), measured over the grid.
    pub envelope_constant: f64,
}

/// Sup of |u'' + (n-1)u'/r - lam u/r² + pU^{p-1} u + datum| over grid nodes
/// in [lo, hi], relative to sup |datum| there, with nonuniform three-point
/// stencils. This is the round-trip arbiter for both stationary inverses.
fn fd_mode_residual(
    cfg: &DimensionConfig,
    grid: &[f64],
    u: &[f64],
    datum: &[f64],
    lam: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let nf = cfg.nf();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..grid.len() - 1 {
        let r = grid[i];
        if r < lo || r > hi {
            continue;
        }
        let dm = r - grid[i - 1];
        let dp = grid[i + 1] - r;
        let upp = 2.0 * (dm * u[i + 1] + dp * u[i - 1] - (dm + dp) * u[i]) / (dm * dp * (dm + dp));
        let up = (dm * dm * u[i + 1] - dp * dp * u[i - 1] + (dp * dp - dm * dm) * u[i])
            / (dm * dp * (dm + dp));
        let res = upp + (nf - 1.0) * up / r - lam * u[i] / (r * r)
            + cfg.p * u_pow_p_minus_1(r, cfg) * u[i]
            + datum[i];
        worst = worst.max(res.abs());
        scale = scale.max(datum[i].abs());
    }
    worst / scale.max(1e-300)
}

/// Mode-1 stationary inverse at the default grid resolution. See
/// [`mode1_inverse_with_nodes`].
pub fn mode1_inverse(
    h1: &RadialProfile,
    r_half: f64,
    cfg: &DimensionConfig,
    norms: &NormSpec,
) -> Result<Mode1Inverse> {
    mode1_inverse_with_nodes(h1, r_half, cfg, norms, STATIONARY_NODES)
}

/// Solve ℒ₁ φ̄ + h1 = 0 on (0, 2R) by reduction of order from the kernel
/// element Z = U', which is negative on (0, ∞):
///
///   φ̄(r) = Z(r) ∫_r^{2R} F(ρ) / (ρ^{n-1} Z(ρ)²) dρ,
///   F(ρ)  = ∫_0^ρ h1 Z s^{n-1} ds.
///
/// Anchoring F at the origin keeps φ̄ regular there (the integrand of the
/// outer integral tends to the finite limit -h1(0)/((n+1) U''(0))); the
/// outer anchor enforces the Dirichlet condition φ̄(2R) = 0. Near r = 0 both
/// factors of the ratio vanish to high order, so the first cell of F is
/// integrated with the power rule matched to its s^n vanishing; a
/// non-finite ratio anywhere reports as [`Error::NonFinite`].
pub fn mode1_inverse_with_nodes(
    h1: &RadialProfile,
    r_half: f64,
    cfg: &DimensionConfig,
    norms: &NormSpec,
    nodes: usize,
) -> Result<Mode1Inverse> {
    let rb = 2.0 * r_half;
    if !rb.is_finite() || rb <= 10.0 || nodes < 64 {
        return Err(Error::InvalidConfig(format!(
            "mode-1 inverse needs 2R > 10 and >= 64 nodes, got {rb}/{nodes}"
        )));
    }
    let nf = cfg.nf();
    let ni = cfg.n as i32;
    let grid = geometric_grid(1e-3, rb, nodes);
    let m = grid.len();
    let hv: Vec<f64> = grid.iter().map(|&r| h1.eval(r)).collect();
    let z: Vec<f64> = grid.iter().map(|&r| bubble::bubble_u_prime(r, cfg)).collect();
    let zp: Vec<f64> = grid.iter().map(|&r| bubble::bubble_u_second(r, cfg)).collect();

    let f: Vec<f64> = (0..m)
        .map(|i| hv[i] * z[i] * grid[i].powi(ni - 1))
        .collect();
    // F anchored at 0; the first node's integral over [0, r₀] uses the power
    // rule for the s^n vanishing order.
    let mut big_f = vec![0.0; m];
    big_f[0] = f[0] * grid[0] / (nf + 1.0);
    for i in 1..m {
        big_f[i] = big_f[i - 1] + 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    }
    let mut g = vec![0.0; m];
    for i in 0..m {
        g[i] = big_f[i] / (grid[i].powi(ni - 1) * z[i] * z[i]);
        if !g[i].is_finite() {
            return Err(Error::NonFinite("mode-1 reduction-of-order ratio"));
        }
    }
    let mut v = vec![0.0; m];
    for i in (0..m - 1).rev() {
        v[i] = v[i + 1] + 0.5 * (g[i] + g[i + 1]) * (grid[i + 1] - grid[i]);
    }
    let phi: Vec<f64> = (0..m).map(|i| z[i] * v[i]).collect();
    // v' = -g, so the derivative needs no differencing.
    let phid: Vec<f64> = (0..m).map(|i| zp[i] * v[i] - z[i] * g[i]).collect();

    let round_trip = fd_mode_residual(cfg, &grid, &phi, &hv, nf - 1.0, 0.1, 0.9 * rb);
    let envelope_constant = grid
        .iter()
        .zip(&phi)
        .map(|(&r, &p)| p.abs() * (1.0 + r.powi(ni - 1)) / r_half.powf(nf - norms.a))
        .fold(0.0f64, f64::max);

    Ok(Mode1Inverse {
        phi: RadialProfile::with_derivs(grid, phi, phid)?,
        round_trip,
        envelope_constant,
    })
}

// ---------------------------------------------------------------------------
// Mode-0 parabolic flow with the c(τ) Z projection
// ---------------------------------------------------------------------------

/// Trace of a [`mode0_parabolic`] solve.
#[derive(Debug, Clone)]
pub struct ModeZeroEvolution {
    /// Accepted times, starting at τ₀.
    pub taus: Vec<f64>,
    /// Multiplier trace c(τ); the initial entry is the τ -> τ₀ limit
    /// ∫ h Z / ∫ Z².
    pub c: Vec<f64>,
    /// sup_r |φ| per accepted time.
    pub sup_phi: Vec<f64>,
    /// τ^ν sup_r (1+r)^a |φ| per accepted time.
    pub sup_weighted_phi: Vec<f64>,
    /// φ at the final time, on the interior nodes of the solve grid.
    pub phi_final: RadialProfile,
    /// The projection direction: ground state of -L0 on the ball,
    /// normalized to ∫ Z² = 1.
    pub z: RadialProfile,
    /// Its eigenvalue (negative; the projection removes the e^{|mu0| τ}
    /// instability this mode would otherwise feed).
    pub mu0: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl ModeZeroEvolution {
    /// Largest weighted sup over the trace.
    pub fn weighted_sup(&self) -> f64 {
        self.sup_weighted_phi.iter().fold(0.0f64, f64::max)
    }

    /// Exponential rate fitted to ln sup|φ| over the second half of the
    /// time span; None when φ is too small there for the fit to mean
    /// anything.
    pub fn growth_rate(&self) -> Option<f64> {
        let (t0, t1) = (self.taus[0], *self.taus.last().unwrap());
        let cut = t0 + 0.5 * (t1 - t0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (&t, &s) in self.taus.iter().zip(&self.sup_phi) {
            if t >= cut && s > 1e-300 {
                xs.push(t);
                ys.push(s.ln());
            }
        }
        if xs.len() < 4 {
            return None;
        }
        Some(fit_line(&xs, &ys).slope)
    }

    /// CSV trace with columns (tau, c, sup_weighted_phi).
    pub fn write_trace_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let comment = format!(
            "mode-0 parabolic trace: mu0 = {}, accepted = {}, rejected = {}",
            export::fmt(self.mu0),
            self.steps_accepted,
            self.steps_rejected
        );
        export::write_csv(
            path,
            &[comment],
            "tau,c,sup_weighted_phi",
            self.taus
                .iter()
                .zip(self.c.iter().zip(&self.sup_weighted_phi))
                .map(|(&t, (&c, &s))| export::row(&[t, c, s])),
        )
    }
}

/// Advance φ_τ = Δφ + pU^{p-1}φ + h - c(τ) Z on B_{2R} × (τ₀, τ_end] with
/// zero Dirichlet and initial data.
///
/// Each backward-Euler step solves the bordered system
///
///   (M + Δτ K) φ⁺ + Δτ c M Z = M (φ + Δτ h),    ⟨φ⁺, Z⟩_M = 0,
///
/// with the finite-volume stiffness K and lumped mass M of the radial
/// operator: two tridiagonal solves produce the step and the multiplier,
/// and c(τ) is exactly the discrete pairing relation c ∫ Z² = ∫ h Z -
/// ⟨K φ⁺, Z⟩, whose φ-dependent part carries only the eigen-residual and
/// boundary-flux content and stays small on a settled domain. The exact
/// per-step projection keeps the unstable mode at roundoff, so residual
/// e^{|mu0| τ} amplification is harmless on the horizons of interest.
///
/// Steps adapt by step doubling: a step is accepted when the doubled and
/// halved solutions agree to a relative local tolerance, Δτ is capped at
/// 0.45/|mu0| so the bordered matrix stays definite, and 20 consecutive
/// rejections or an underflowing Δτ abort the solve.
pub fn mode0_parabolic<H: Fn(f64, f64) -> f64>(
    h0: H,
    r_half: f64,
    tau0: f64,
    tau_end: f64,
    cfg: &DimensionConfig,
    norms: &NormSpec,
) -> Result<ModeZeroEvolution> {
    if !r_half.is_finite() || r_half < 5.0 {
        return Err(Error::InvalidConfig(format!(
            "parabolic ball needs R >= 5, got {r_half}"
        )));
    }
    if !(tau0.is_finite() && tau_end.is_finite() && 0.0 < tau0 && tau0 < tau_end) {
        return Err(Error::InvalidConfig(format!(
            "parabolic time span needs 0 < tau0 < tau_end, got [{tau0}, {tau_end}]"
        )));
    }
    let rb = 2.0 * r_half;
    let m = PARABOLIC_CELLS;
    let eig = negative_eigenpair(cfg, rb, m)?;
    let form = spectral::assemble(cfg, rb, m);
    debug_assert_eq!(eig.z.grid(), &form.grid[..m]);
    let z = eig.z.values();
    let mz: Vec<f64> = z.iter().zip(&form.mass).map(|(a, b)| a * b).collect();
    let zmz: f64 = z.iter().zip(&mz).map(|(a, b)| a * b).sum();

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let forcing = |tau: f64, out: &mut Vec<f64>| -> Result<()> {
        out.clear();
        for &r in &form.grid[..m] {
            let v = h0(r, tau);
            if !v.is_finite() {
                return Err(Error::NonFinite("parabolic forcing"));
            }
            out.push(v);
        }
        Ok(())
    };

    let mut hbuf = Vec::with_capacity(m);
    forcing(tau0, &mut hbuf)?;
    let c_init = dot(&hbuf, &mz) / zmz;

    // One backward-Euler step of length dt landing on tau_next.
    let mut step = |phi: &[f64], tau_next: f64, dt: f64| -> Result<(Vec<f64>, f64)> {
        forcing(tau_next, &mut hbuf)?;
        let sub: Vec<f64> = form.sub.iter().map(|s| dt * s).collect();
        let diag: Vec<f64> = form
            .diag
            .iter()
            .zip(&form.mass)
            .map(|(k, q)| q + dt * k)
            .collect();
        let rhs: Vec<f64> = (0..m)
            .map(|i| form.mass[i] * (phi[i] + dt * hbuf[i]))
            .collect();
        let x = spectral::solve_tridiag(&sub, &diag, &sub, &rhs);
        let w = spectral::solve_tridiag(&sub, &diag, &sub, &mz);
        let den = dt * dot(&w, &mz);
        let c = dot(&x, &mz) / den;
        if !c.is_finite() {
            return Err(Error::NonFinite("parabolic multiplier"));
        }
        let mut next: Vec<f64> = (0..m).map(|i| x[i] - dt * c * w[i]).collect();
        // Re-project: the bordered solve zeroes ⟨φ, Z⟩_M in exact
        // arithmetic, this removes the roundoff leftover.
        let drift = dot(&next, &mz) / zmz;
        for (p, &zi) in next.iter_mut().zip(z) {
            *p -= drift * zi;
        }
        Ok((next, c))
    };

    let span = tau_end - tau0;
    let dt_max = 0.45 / eig.mu0.abs();
    let mut dt = (span / 64.0).min(dt_max);
    let mut tau = tau0;
    let mut phi = vec![0.0; m];
    let weighted = |tau: f64, phi: &[f64]| -> f64 {
        tau.powf(norms.nu)
            * form.grid[..m]
                .iter()
                .zip(phi)
                .map(|(&r, &p)| (1.0 + r).powf(norms.a) * p.abs())
                .fold(0.0f64, f64::max)
    };
    forcing(tau0, &mut hbuf)?;
    let c_init = dot(&hbuf, &mz) / zmz;
    let mut taus = vec![tau0];
    let mut cs = vec![c_init];
    let mut sups = vec![0.0];
    let mut wsups = vec![0.0];
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut rejects_in_row = 0usize;

    while tau < tau_end {
        dt = dt.min(tau_end - tau).min(dt_max);
        if dt < 1e-14 * span {
            return Err(Error::StepUnderflow { t: tau, dt });
        }
        let (full, _) = step(&phi, tau + dt, dt)?;
        let (mid, _) = step(&phi, tau + 0.5 * dt, 0.5 * dt)?;
        let (half, c_half) = step(&mid, tau + dt, 0.5 * dt)?;
        let sup_half = half.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let diff = full
            .iter()
            .zip(&half)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let scale = sup_half.max(1e-12);
        let err = diff / scale;
        if err <= STEP_TOL {
            tau += dt;
            phi = half;
            taus.push(tau);
            cs.push(c_half);
            sups.push(sup_half);
            wsups.push(weighted(tau, &phi));
            accepted += 1;
            rejects_in_row = 0;
            dt *= (0.9 * (STEP_TOL / err).sqrt()).clamp(0.9, 4.0);
        } else {
            rejected += 1;
            rejects_in_row += 1;
            if rejects_in_row >= MAX_REJECTS {
                return Err(Error::RejectionCascade(tau));
            }
            dt *= (0.9 * (STEP_TOL / err).sqrt()).clamp(0.5, 0.9);
        }
    }

    Ok(ModeZeroEvolution {
        taus,
        c: cs,
        sup_phi: sups,
        sup_weighted_phi: wsups,
        phi_final: RadialProfile::new(form.grid[..m].to_vec(), phi)?,
        z: eig.z.clone(),
        mu0: eig.mu0,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

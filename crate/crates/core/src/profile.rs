//! Sampled radial functions with Hermite evaluation and tail extrapolation.
//!
//! Profiles produced by the ODE solvers carry analytic derivatives at the
//! nodes, so evaluation between nodes is cubic Hermite (O(h^4)); without
//! derivatives it degrades to linear interpolation. Beyond the last node an
//! optional power-law tail `v ~ v_end (r/r_end)^{-k}` takes over, which is the
//! correct continuation for every profile in this crate.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RadialProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
    derivs: Option<Vec<f64>>,
    tail_exponent: Option<f64>,
}

impl RadialProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(grid, values, None)
    }

    pub fn with_derivs(grid: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        if derivs.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "derivative array length {} != grid length {}",
                derivs.len(),
                grid.len()
            )));
        }
        Self::build(grid, values, Some(derivs))
    }

    fn build(grid: Vec<f64>, values: Vec<f64>, derivs: Option<Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "profile needs matching grid/value arrays of length >= 2, got {}/{}",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) || grid[0] < 0.0 {
            return Err(Error::InvalidConfig(
                "profile grid must be nonnegative and strictly increasing".into(),
            ));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !finite(&grid) || !finite(&values) || derivs.as_deref().is_some_and(|d| !finite(d)) {
            return Err(Error::NonFinite("radial profile data"));
        }
        Ok(Self {
            grid,
            values,
            derivs,
            tail_exponent: None,
        })
    }

    /// Declare the decay order k of the power-law continuation past the last
    /// node.
    pub fn with_tail_exponent(mut self, k: f64) -> Self {
        self.tail_exponent = Some(k);
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> Option<&[f64]> {
        self.derivs.as_deref()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn cell(&self, r: f64) -> usize {
        // Index i with grid[i] <= r < grid[i+1] (clamped).
        let k = self.grid.partition_point(|&g| g <= r);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r <= g[0] {
            return self.values[0];
        }
        let end = g.len() - 1;
        if r >= g[end] {
            return match self.tail_exponent {
                Some(k) => self.values[end] * (r / g[end]).powf(-k),
                None => self.values[end],
            };
        }
        let i = self.cell(r);
        let h = g[i + 1] - g[i];
        let t = (r - g[i]) / h;
        match &self.derivs {
            Some(d) => hermite(self.values[i], self.values[i + 1], d[i] * h, d[i + 1] * h, t),
            None => self.values[i] * (1.0 - t) + self.values[i + 1] * t,
        }
    }

    pub fn deriv(&self, r: f64) -> f64 {
        let g = &self.grid;
        let end = g.len() - 1;
        if r >= g[end] {
            return match self.tail_exponent {
                Some(k) => -k * self.values[end] * (r / g[end]).powf(-k - 1.0) / g[end],
                None => 0.0,
            };
        }
        if r <= g[0] {
            return match &self.derivs {
                Some(d) => d[0],
                None => (self.values[1] - self.values[0]) / (g[1] - g[0]),
            };
        }
        let i = self.cell(r);
        let h = g[i + 1] - g[i];
        let t = (r - g[i]) / h;
        match &self.derivs {
            Some(d) => {
                hermite_deriv(self.values[i], self.values[i + 1], d[i] * h, d[i + 1] * h, t) / h
            }
            None => (self.values[i + 1] - self.values[i]) / h,
        }
    }

    /// Least squares slope of ln|v| against ln r over grid nodes in
    /// [r_lo, r_hi]. None if the window contains fewer than 3 nodes, a zero,
    /// or a sign change.
    pub fn log_slope(&self, r_lo: f64, r_hi: f64) -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut sign = 0.0f64;
        for (r, v) in self.grid.iter().zip(&self.values) {
            if *r < r_lo || *r > r_hi || *r <= 0.0 {
                continue;
            }
            if *v == 0.0 {
                return None;
            }
            if sign == 0.0 {
                sign = v.signum();
            } else if v.signum() != sign {
                return None;
            }
            xs.push(r.ln());
            ys.push(v.abs().ln());
        }
        if xs.len() < 3 {
            return None;
        }
        Some(fit_line(&xs, &ys).slope)
    }
}

fn hermite(v0: f64, v1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    // Cubic Hermite basis on [0,1]; m are derivatives scaled by the cell width.
    let t2 = t * t;
    let t3 = t2 * t;
    v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + m0 * (t3 - 2.0 * t2 + t)
        + v1 * (-2.0 * t3 + 3.0 * t2)
        + m1 * (t3 - t2)
}

fn hermite_deriv(v0: f64, v1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    v0 * (6.0 * t2 - 6.0 * t)
        + m0 * (3.0 * t2 - 4.0 * t + 1.0)
        + v1 * (-6.0 * t2 + 6.0 * t)
        + m1 * (3.0 * t2 - 2.0 * t)
}

/// m geometrically spaced nodes from r_min to r_max inclusive.
pub fn geometric_grid(r_min: f64, r_max: f64, m: usize) -> Vec<f64> {
    assert!(m >= 2 && r_min > 0.0 && r_max > r_min);
    let ratio = (r_max / r_min).ln() / (m as f64 - 1.0);
    (0..m)
        .map(|i| {
            if i == m - 1 {
                r_max
            } else {
                r_min * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// m uniformly spaced nodes from a to b inclusive.
pub fn linspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    assert!(m >= 2);
    (0..m)
        .map(|i| {
            if i == m - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (m as f64 - 1.0)
            }
        })
        .collect()
}

/// Ordinary least squares line fit with the slope's standard error.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    LineFit {
        slope,
        intercept,
        slope_stderr: (ss_res / dof / sxx).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_reproduces_cubics_exactly() {
        let grid = geometric_grid(0.1, 10.0, 12);
        let f = |r: f64| r.powi(3) - 2.0 * r * r + r - 1.0;
        let df = |r: f64| 3.0 * r * r - 4.0 * r + 1.0;
        let values: Vec<f64> = grid.iter().map(|&r| f(r)).collect();
        let derivs: Vec<f64> = grid.iter().map(|&r| df(r)).collect();
        let p = RadialProfile::with_derivs(grid, values, derivs).unwrap();
        for &r in &[0.13, 0.7, 1.9, 4.2, 9.3] {
            assert_relative_eq!(p.eval(r), f(r), max_relative = 1e-12);
            assert_relative_eq!(p.deriv(r), df(r), max_relative = 1e-11);
        }
    }

    #[test]
    fn hermite_error_is_fourth_order() {
        let f = |r: f64| (1.0 + r * r).powf(-2.0);
        let df = |r: f64| -4.0 * r * (1.0 + r * r).powf(-3.0);
        let sup_err = |m: usize| {
            let grid = linspace(0.0, 4.0, m);
            let values: Vec<f64> = grid.iter().map(|&r| f(r)).collect();
            let derivs: Vec<f64> = grid.iter().map(|&r| df(r)).collect();
            let p = RadialProfile::with_derivs(grid, values, derivs).unwrap();
            (0..1000)
                .map(|k| {
                    let r = 4.0 * (k as f64 + 0.5) / 1000.0;
                    (p.eval(r) - f(r)).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let e1 = sup_err(33);
        let e2 = sup_err(65);
        let order = (e1 / e2).log2();
        assert!(order > 3.6, "observed order {order}, errors {e1:.3e}/{e2:.3e}");
    }

    #[test]
    fn power_tail_extrapolation() {
        let grid = geometric_grid(1.0, 100.0, 64);
        let values: Vec<f64> = grid.iter().map(|&r| 7.0 * r.powf(-4.0)).collect();
        let p = RadialProfile::new(grid, values).unwrap().with_tail_exponent(4.0);
        assert_relative_eq!(p.eval(400.0), 7.0 * 400.0f64.powf(-4.0), max_relative = 1e-12);
        assert_relative_eq!(
            p.deriv(400.0),
            -28.0 * 400.0f64.powf(-5.0),
            max_relative = 1e-12
        );
        assert_eq!(p.log_slope(2.0, 90.0), Some(p.log_slope(2.0, 90.0).unwrap()));
        assert_relative_eq!(p.log_slope(2.0, 90.0).unwrap(), -4.0, max_relative = 1e-10);
    }

    #[test]
    fn log_slope_refuses_sign_changes() {
        let grid = linspace(0.5, 2.0, 31);
        let values: Vec<f64> = grid.iter().map(|&r| 1.0 - r).collect();
        let p = RadialProfile::new(grid, values).unwrap();
        assert_eq!(p.log_slope(0.6, 1.9), None);
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = geometric_grid(1e-3, 1e3, 97);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[96], 1e3);
        let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert_relative_eq!(*r, ratios[0], max_relative = 1e-10);
        }
        let l = linspace(-1.0, 1.0, 5);
        assert_eq!(l, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn line_fit_recovers_exact_lines() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let fit = fit_line(&xs, &ys);
        assert_relative_eq!(fit.slope, 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, max_relative = 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RadialProfile::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(RadialProfile::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(RadialProfile::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }
}

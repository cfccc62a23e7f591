//! Exact-solution oracles: the self-similar source solution of the pure
//! nonlinear diffusion (drift-free reference case) and the stationary
//! profile for radial potential drifts.

use crate::grid::{Grid, GridMode, ScalarField, sphere_area};
use crate::quad::{adaptive_simpson, bisect_increasing};
use crate::{Error, Result};

/// Self-similarity exponent `alpha = d / (d(m-1) + 2)`.
pub fn barenblatt_alpha(m: f64, d: usize) -> f64 {
    let d = d as f64;
    d / (d * (m - 1.0) + 2.0)
}

/// Parabola coefficient `k = (m-1) alpha / (2 m d)`.
pub fn barenblatt_k(m: f64, d: usize) -> f64 {
    (m - 1.0) * barenblatt_alpha(m, d) / (2.0 * m * d as f64)
}

/// Shape integral `int_0^1 (1 - s^2)^(1/(m-1)) s^(d-1) ds`, computed by
/// quadrature after the substitution `s = sin(theta)` (removes the endpoint
/// singularity for every m > 1).
fn shape_integral(m: f64, d: usize) -> f64 {
    let n = 1.0 / (m - 1.0);
    let dd = d as f64;
    adaptive_simpson(
        &|theta: f64| {
            let c = theta.cos();
            let s = theta.sin();
            c.powf(2.0 * n + 1.0) * s.powf(dd - 1.0)
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
        1e-14,
    )
}

/// Height constant `C` of the self-similar profile at the given total mass:
/// `mass = sigma_d C^(1/(m-1) + d/2) k^(-d/2) * shape_integral`.
pub fn barenblatt_c(m: f64, d: usize, mass: f64) -> Result<f64> {
    if !(m > 1.0) || !(1..=3).contains(&d) || !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "self-similar profile needs m > 1, d in 1..=3, mass > 0 (m={m}, d={d}, mass={mass})"
        )));
    }
    let k = barenblatt_k(m, d);
    let coeff = sphere_area(d) * k.powf(-(d as f64) / 2.0) * shape_integral(m, d);
    let expo = 1.0 / (m - 1.0) + d as f64 / 2.0;
    Ok((mass / coeff).powf(1.0 / expo))
}

/// The self-similar source solution at a point:
/// `B(x,t) = t^-alpha (C - k |x|^2 t^(-2 alpha / d))_+^(1/(m-1))`.
pub fn barenblatt_oracle(m: f64, d: usize, mass: f64, x: [f64; 3], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("self-similar solution needs t > 0, got {t}")));
    }
    let c = barenblatt_c(m, d, mass)?;
    let alpha = barenblatt_alpha(m, d);
    let k = barenblatt_k(m, d);
    let mut r2 = 0.0;
    for v in x.iter().take(d) {
        r2 += v * v;
    }
    let arg = c - k * r2 * t.powf(-2.0 * alpha / d as f64);
    if arg <= 0.0 {
        return Ok(0.0);
    }
    Ok(t.powf(-alpha) * arg.powf(1.0 / (m - 1.0)))
}

/// Support radius of the self-similar solution at time t.
pub fn barenblatt_support_radius(m: f64, d: usize, mass: f64, t: f64) -> Result<f64> {
    let c = barenblatt_c(m, d, mass)?;
    let k = barenblatt_k(m, d);
    let alpha = barenblatt_alpha(m, d);
    Ok((c / k).sqrt() * t.powf(alpha / d as f64))
}

/// Sample the oracle on a grid.
pub fn barenblatt_field(grid: Grid, m: f64, mass: f64, t: f64) -> Result<ScalarField> {
    let d = grid.dim;
    let c = barenblatt_c(m, d, mass)?;
    let alpha = barenblatt_alpha(m, d);
    let k = barenblatt_k(m, d);
    let scale = t.powf(-2.0 * alpha / d as f64);
    Ok(ScalarField::from_fn(grid, |x| {
        let mut r2 = 0.0;
        for v in x.iter().take(d) {
            r2 += v * v;
        }
        let arg = c - k * r2 * scale;
        if arg <= 0.0 {
            0.0
        } else {
            t.powf(-alpha) * arg.powf(1.0 / (m - 1.0))
        }
    }))
}

/// Stationary profile for a radial increasing potential with `Phi(0) = 0`:
/// `rho(r) = (C - (m-1)/m Phi(r))_+^(1/(m-1))` with `C` fixed by the mass.
pub struct StationaryProfile {
    pub c: f64,
    pub m: f64,
    pub dim: usize,
}

impl StationaryProfile {
    /// Find `C(mass)` by monotone bisection of the radial mass map,
    /// evaluated with adaptive quadrature (grid-independent).
    pub fn solve(
        phi: &dyn Fn(f64) -> f64,
        m: f64,
        mass: f64,
        dim: usize,
        r_cap: f64,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass {mass} must be > 0")));
        }
        if !(m > 1.0) {
            return Err(Error::InvalidParameter(format!("m = {m} must be > 1")));
        }
        let beta = (m - 1.0) / m;
        let mass_of = |c: f64| -> f64 {
            if c <= 0.0 {
                return 0.0;
            }
            // support edge: first radius with beta Phi = c (or the cap)
            let edge = if beta * phi(r_cap) <= c {
                r_cap
            } else {
                bisect_increasing(&|r| beta * phi(r), 0.0, r_cap, c, c * 1e-15, 200)
            };
            let integrand = |r: f64| {
                let arg = c - beta * phi(r);
                if arg <= 0.0 {
                    0.0
                } else {
                    arg.powf(1.0 / (m - 1.0)) * r.powf(dim as f64 - 1.0)
                }
            };
            sphere_area(dim) * adaptive_simpson(&integrand, 0.0, edge, 1e-13 * (1.0 + c))
        };
        // bracket C from above
        let mut hi = 1.0;
        let mut guard = 0;
        while mass_of(hi) < mass {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::InvalidParameter(
                    "stationary profile: mass unreachable (potential grows too slowly within the cap)"
                        .into(),
                ));
            }
        }
        let c = bisect_increasing(&mass_of, 0.0, hi, mass, 1e-12, 300);
        Ok(StationaryProfile { c, m, dim })
    }

    pub fn density(&self, phi_at_r: f64) -> f64 {
        let arg = self.c - (self.m - 1.0) / self.m * phi_at_r;
        if arg <= 0.0 {
            0.0
        } else {
            arg.powf(1.0 / (self.m - 1.0))
        }
    }

    /// Peak height `rho(0) = C^(1/(m-1))` (the potential vanishes at 0).
    pub fn peak(&self) -> f64 {
        self.c.powf(1.0 / (self.m - 1.0))
    }

    pub fn sample_on_grid(&self, grid: Grid, phi: &dyn Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| {
            let r = match grid.mode {
                GridMode::Radial => x[0],
                GridMode::FullBox => {
                    let mut r2 = 0.0;
                    for v in x.iter().take(grid.dim) {
                        r2 += v * v;
                    }
                    r2.sqrt()
                }
            };
            self.density(phi(r))
        })
    }
}

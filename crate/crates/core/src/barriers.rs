//! Moving sub/supersolution profiles for the pressure form of the equation
//! with the divergence-free drift families, and their numeric certification.
//!
//! The pressure variable `v = m/(m-1) u^(m-1)` satisfies
//! `v_t - (m-1) v lap(v) - |grad v|^2 + V . grad(v) = 0`. The barriers are
//! `c_s z(t)^s phi_sub((x - z e)/(r z))` riding the upper cone toward the
//! origin, and `k(t) phi_super(|x + z e|/(r z))` pinning a zero at the
//! mirror point, with `z` shrinking from 1 to `4 eps` and `k` chosen so
//! `k' = C* k^2 z^-2 r^-2` exactly. Certification samples the residual with
//! fourth-order finite differences over quasi-random points of the support.

use crate::drift::{divfree2d_field, divfree3d_field};
use crate::sampling::{radical_inverse, BallSampler};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// bump profiles

/// Smooth compactly supported bump `exp(1 - 1/(1-R^2))` on `[0,1)`,
/// normalized to peak 1, strictly decreasing.
#[derive(Debug, Clone, Copy)]
pub struct SubBump;

impl SubBump {
    pub fn value(r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        }
    }

    pub fn d1(r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - r * r;
        -2.0 * r / (q * q) * Self::value(r)
    }

    pub fn d2(r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - r * r;
        let w = 2.0 * r / (q * q);
        let wp = (2.0 + 6.0 * r * r) / (q * q * q);
        (w * w - wp) * Self::value(r)
    }

    /// Measured bound on |lap phi| in the given dimension (radial
    /// Laplacian `phi'' + (d-1) phi'/R`), from dense sampling.
    pub fn laplacian_cap(dim: usize) -> f64 {
        let mut cap: f64 = 2.0 * dim as f64; // value at R = 0
        let n = 20_000;
        for i in 1..n {
            let r = i as f64 / n as f64;
            let lap = Self::d2(r) + (dim as f64 - 1.0) * Self::d1(r) / r;
            cap = cap.max(lap.abs());
        }
        cap
    }
}

/// Increasing profile with `phi(0) = phi'(0) = 0`, `phi = R^2` below 1/2,
/// a quintic Hermite blend on [1/2, 1], and 1 beyond.
#[derive(Debug, Clone, Copy)]
pub struct SuperBump;

// Hermite quintic on t = (R - 1/2) / (1/2) matching value/slope/curvature
// of R^2 at the left end and of the constant 1 at the right end.
const HERMITE: [f64; 6] = [0.25, 0.5, 0.25, 3.75, -6.5, 2.75];

impl SuperBump {
    pub fn value(r: f64) -> f64 {
        if r <= 0.5 {
            r * r
        } else if r >= 1.0 {
            1.0
        } else {
            let t = (r - 0.5) * 2.0;
            let mut acc = 0.0;
            for k in (0..6).rev() {
                acc = acc * t + HERMITE[k];
            }
            acc
        }
    }

    pub fn d1(r: f64) -> f64 {
        if r <= 0.5 {
            2.0 * r
        } else if r >= 1.0 {
            0.0
        } else {
            let t = (r - 0.5) * 2.0;
            let mut acc = 0.0;
            for k in (1..6).rev() {
                acc = acc * t + k as f64 * HERMITE[k];
            }
            acc * 2.0
        }
    }

    pub fn d2(r: f64) -> f64 {
        if r <= 0.5 {
            2.0
        } else if r >= 1.0 {
            0.0
        } else {
            let t = (r - 0.5) * 2.0;
            let mut acc = 0.0;
            for k in (2..6).rev() {
                acc = acc * t + (k * (k - 1)) as f64 * HERMITE[k];
            }
            acc * 4.0
        }
    }

    /// Smallest constant (after a 1e-4 safety inflation) with
    /// `(m-1) phi (phi'' + (d-1) phi'/R) + phi'^2 <= C* phi` at dense radii.
    /// The inflation leaves a small strict margin everywhere, so the exact
    /// growth profile `k' = C* k^2 z^-2 r^-2` certifies with a gap wider
    /// than the finite-difference noise floor.
    pub fn barrier_constant(m: f64, dim: usize) -> f64 {
        let n = 100_000;
        let mut cap: f64 = 2.0 * dim as f64 * (m - 1.0) + 4.0; // R -> 0 plateau
        for i in 1..=n {
            let r = i as f64 / n as f64;
            let v = Self::value(r);
            if v <= 0.0 {
                continue;
            }
            let lap = Self::d2(r) + (dim as f64 - 1.0) * Self::d1(r) / r;
            let lhs = (m - 1.0) * v * lap + Self::d1(r) * Self::d1(r);
            cap = cap.max(lhs / v);
        }
        cap * 1.0001
    }
}

// ---------------------------------------------------------------------------
// time profiles

/// Front scale `z(t) = (1 - (2-s) t / M)^(1/(2-s))`, decreasing from 1.
pub fn z_value(s: f64, big_m: f64, t: f64) -> f64 {
    (1.0 - (2.0 - s) * t / big_m).powf(1.0 / (2.0 - s))
}

pub fn z_derivative(s: f64, big_m: f64, t: f64) -> f64 {
    -z_value(s, big_m, t).powf(s - 1.0) / big_m
}

// ---------------------------------------------------------------------------
// parameters

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierSide {
    Sub,
    Super,
}

/// Frozen constants of one barrier family instance.
#[derive(Debug, Clone, Copy)]
pub struct BarrierParams {
    pub dim: usize,
    pub s: f64,
    pub eps: f64,
    pub r: f64,
    pub m: f64,
    /// Drift normalization `M = s^(-3/2)` in 2-d, `s^(-4/3)` in 3-d.
    pub m_scale: f64,
    /// Lifetime `T = M (1 - (4 eps)^(2-s)) / (2-s)`; `z(T) = 4 eps`.
    pub t_end: f64,
    /// Measured profile constant of the growth inequality.
    pub c_star: f64,
    /// `C0 = 2 C* M r^-2 s^-1 (4 eps)^-s`.
    pub c0: f64,
    /// Admissible ceiling for the subsolution height coefficient.
    pub c_s_cap: f64,
    /// Chosen subsolution height (defaults to half the ceiling).
    pub c_s: f64,
}

impl BarrierParams {
    pub fn new(dim: usize, s: f64, eps: f64, r: f64, m: f64) -> Result<Self> {
        if !(0.0 < s && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s = {s} not in (0,1)")));
        }
        if !(0.0 < eps && eps < 0.25) {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} not in (0, 1/4) (need 4 eps < 1)"
            )));
        }
        if !(m > 1.0) {
            return Err(Error::InvalidParameter(format!("m = {m} must be > 1")));
        }
        let r_ok = match dim {
            2 => r > 0.0 && r <= 0.125,
            3 => r > 0.0 && r < 1.0 / 9.0,
            _ => return Err(Error::InvalidParameter(format!("dimension {dim} must be 2 or 3"))),
        };
        if !r_ok {
            return Err(Error::InvalidParameter(format!(
                "r = {r} outside the admissible range for dimension {dim}"
            )));
        }
        let m_scale = if dim == 2 { s.powf(-1.5) } else { s.powf(-4.0 / 3.0) };
        let t_end = m_scale * (1.0 - (4.0 * eps).powf(2.0 - s)) / (2.0 - s);
        let c_star = SuperBump::barrier_constant(m, dim);
        let c0 = 2.0 * c_star * m_scale / (r * r * s * (4.0 * eps).powf(s));
        let c_sub_cap = SubBump::laplacian_cap(dim);
        let c_s_cap = s * r * r / (c_sub_cap * (m - 1.0) * m_scale);
        let params = BarrierParams {
            dim,
            s,
            eps,
            r,
            m,
            m_scale,
            t_end,
            c_star,
            c0,
            c_s_cap,
            c_s: 0.5 * c_s_cap,
        };
        debug_assert!(params.t_end > 0.0);
        Ok(params)
    }

    pub fn with_subsolution_height(mut self, c_s: f64) -> Result<Self> {
        if !(c_s > 0.0 && c_s <= self.c_s_cap) {
            return Err(Error::InvalidParameter(format!(
                "c_s = {c_s} outside (0, cap = {}]",
                self.c_s_cap
            )));
        }
        self.c_s = c_s;
        Ok(self)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(Error::OutOfRange(format!("t = {t} outside [0, T = {}]", self.t_end)));
        }
        Ok(())
    }

    /// `z(t)`, with `z(0) = 1` and `z(T) = 4 eps`.
    pub fn z(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(z_value(self.s, self.m_scale, t))
    }

    /// `k(t) = (C0 - (C* M / (s r^2)) z(t)^-s)^-1`, increasing, solving
    /// `k' = C* k^2 z^-2 r^-2` exactly.
    pub fn k(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let z = z_value(self.s, self.m_scale, t);
        let denom = self.k_denominator(z);
        if denom <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "nonpositive growth-profile denominator {denom:.3e} at t = {t}"
            )));
        }
        Ok(1.0 / denom)
    }

    pub fn k_denominator(&self, z: f64) -> f64 {
        self.c0 - self.c_star * self.m_scale / (self.s * self.r * self.r) * z.powf(-self.s)
    }

    pub fn k_prime(&self, t: f64) -> Result<f64> {
        let k = self.k(t)?;
        let z = z_value(self.s, self.m_scale, t);
        Ok(self.c_star * k * k / (z * z * self.r * self.r))
    }

    fn center(&self, t: f64, sign: f64) -> [f64; 3] {
        let z = z_value(self.s, self.m_scale, t);
        let mut c = [0.0; 3];
        c[self.dim - 1] = sign * z;
        c
    }

    fn scaled_radius(&self, x: [f64; 3], t: f64, sign: f64) -> f64 {
        let z = z_value(self.s, self.m_scale, t);
        let c = self.center(t, sign);
        let mut d2 = 0.0;
        for a in 0..self.dim {
            let d = x[a] - c[a];
            d2 += d * d;
        }
        d2.sqrt() / (self.r * z)
    }

    /// Subsolution `c_s z(t)^s phi_sub(|x - z e|/(r z))`.
    pub fn subsolution_eval(&self, x: [f64; 3], t: f64) -> Result<f64> {
        self.check_time(t)?;
        let z = z_value(self.s, self.m_scale, t);
        Ok(self.c_s * z.powf(self.s) * SubBump::value(self.scaled_radius(x, t, 1.0)))
    }

    /// Supersolution `k(t) phi_super(|x + z e|/(r z))`.
    pub fn supersolution_eval(&self, x: [f64; 3], t: f64) -> Result<f64> {
        let k = self.k(t)?;
        Ok(k * SuperBump::value(self.scaled_radius(x, t, -1.0)))
    }

    /// Drift field at a point (the divergence-free family of this dimension).
    pub fn drift(&self, x: [f64; 3]) -> [f64; 3] {
        if self.dim == 2 {
            let v = divfree2d_field(self.s, self.eps, x[0], x[1]);
            [v[0], v[1], 0.0]
        } else {
            divfree3d_field(self.s, self.eps, x)
        }
    }
}

// ---------------------------------------------------------------------------
// transport positivity functions (critical-point certificates)

/// Planar transport-positivity function around the lower critical point
/// (0,-1); the upper (subsolution) side is its mirror `f(x, -y)`.
pub fn transport_f2d(s: f64, x: f64, y: f64) -> f64 {
    x * x
        + y * (y + 1.0)
        + 0.5 * (x - y).abs().powf(s - 1.0) * (x + y + 1.0)
        + 0.5 * (x + y).abs().powf(s - 1.0) * (-x + y + 1.0)
}

/// Spatial transport-positivity function around the upper critical point
/// (0,0,1); the lower (supersolution) side is `f(-x1,-x2,-y)`.
pub fn transport_f3d(s: f64, x1: f64, x2: f64, y: f64) -> f64 {
    x1 * x1
        + x2 * x2
        + y * (y - 1.0)
        - 0.25 * (y - x1 + x2).abs().powf(s - 1.0) * (x1 + y - 1.0)
        - 0.25 * (y + x1 - x2).abs().powf(s - 1.0) * (x2 + y - 1.0)
        - 0.25 * (y + x1 + x2).abs().powf(s - 1.0) * (-x1 - x2 + 2.0 * (y - 1.0))
}

fn d1_4(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn d2_4(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

fn cross_2(f: &dyn Fn(f64, f64) -> f64, h: f64) -> f64 {
    (f(h, h) + f(-h, -h) - f(h, -h) - f(-h, h)) / (4.0 * h * h)
}

#[derive(Debug, Clone)]
pub struct HessianEntry {
    pub name: &'static str,
    pub measured: f64,
    pub expected: f64,
}

#[derive(Debug, Clone)]
pub struct CriticalPointCertificate {
    pub dim: usize,
    pub s: f64,
    pub f_at_critical: f64,
    pub gradient_max_abs: f64,
    pub entries: Vec<HessianEntry>,
    /// Largest sampled radius around the critical point on which the
    /// transport function stays nonnegative.
    pub r_s: f64,
}

/// Verify value, gradient, and Hessian of the transport function at its
/// critical point against the closed-form entries, then locate the
/// positivity radius by bisection with dense ball sampling.
pub fn critical_point_certificate(s: f64, dim: usize) -> Result<CriticalPointCertificate> {
    if !(0.0 < s && s < 1.0) {
        return Err(Error::InvalidParameter(format!("s = {s} not in (0,1)")));
    }
    let h = 1e-4;
    let (f_at, grad_max, entries): (f64, f64, Vec<HessianEntry>) = match dim {
        2 => {
            let f = |x: f64, y: f64| transport_f2d(s, x, y + -1.0);
            let f0 = f(0.0, 0.0);
            let gx = d1_4(&|t| f(t, 0.0), h);
            let gy = d1_4(&|t| f(0.0, t), h);
            let fxx = d2_4(&|t| f(t, 0.0), h);
            let fyy = d2_4(&|t| f(0.0, t), h);
            let fxy = cross_2(&f, 1e-3);
            (
                f0,
                gx.abs().max(gy.abs()),
                vec![
                    HessianEntry { name: "f_xx", measured: fxx, expected: 2.0 * s },
                    HessianEntry { name: "f_yy", measured: fyy, expected: 2.0 * (2.0 - s) },
                    HessianEntry { name: "f_xy", measured: fxy, expected: 0.0 },
                ],
            )
        }
        3 => {
            let f = |x1: f64, x2: f64, y: f64| transport_f3d(s, x1, x2, y + 1.0);
            let f0 = f(0.0, 0.0, 0.0);
            let g = [
                d1_4(&|t| f(t, 0.0, 0.0), h),
                d1_4(&|t| f(0.0, t, 0.0), h),
                d1_4(&|t| f(0.0, 0.0, t), h),
            ];
            let f11 = d2_4(&|t| f(t, 0.0, 0.0), h);
            let f22 = d2_4(&|t| f(0.0, t, 0.0), h);
            let fyy = d2_4(&|t| f(0.0, 0.0, t), h);
            let f12 = cross_2(&|a, b| f(a, b, 0.0), 1e-3);
            let f1y = cross_2(&|a, b| f(a, 0.0, b), 1e-3);
            let f2y = cross_2(&|a, b| f(0.0, a, b), 1e-3);
            (
                f0,
                g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                vec![
                    HessianEntry { name: "f_x1x1", measured: f11, expected: 1.0 + s },
                    HessianEntry { name: "f_x2x2", measured: f22, expected: 1.0 + s },
                    HessianEntry { name: "f_yy", measured: fyy, expected: 4.0 - 2.0 * s },
                    HessianEntry { name: "f_x1x2", measured: f12, expected: 0.0 },
                    HessianEntry { name: "f_x1y", measured: f1y, expected: -(s - 1.0) / 2.0 },
                    HessianEntry { name: "f_x2y", measured: f2y, expected: -(s - 1.0) / 2.0 },
                ],
            )
        }
        _ => return Err(Error::InvalidParameter(format!("dimension {dim} must be 2 or 3"))),
    };
    if f_at.abs() > 1e-8 || grad_max > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "transport function not critical: |f| = {:.3e}, |grad| = {:.3e}",
            f_at.abs(),
            grad_max
        )));
    }
    let scale = entries.iter().map(|e| e.expected.abs()).fold(1.0f64, f64::max);
    for e in &entries {
        let tol = 1e-5 * e.expected.abs().max(scale);
        if (e.measured - e.expected).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "Hessian entry {} = {:.8} differs from expected {:.8}",
                e.name, e.measured, e.expected
            )));
        }
    }

    // positivity radius by bisection; nonnegative at 1e4 ball samples
    let f_ball = |rad: f64| -> bool {
        let samples: Vec<[f64; 3]> = BallSampler::new(dim).take(10_000).collect();
        samples.iter().all(|p| {
            if dim == 2 {
                transport_f2d(s, rad * p[0], -1.0 + rad * p[1]) >= 0.0
            } else {
                transport_f3d(s, rad * p[0], rad * p[1], 1.0 + rad * p[2]) >= 0.0
            }
        })
    };
    let mut lo = 0.0f64;
    let mut hi: f64 = 0.45;
    if f_ball(hi) {
        lo = hi;
    } else {
        while hi - lo > 1e-3 * hi.max(1e-6) {
            let mid = 0.5 * (lo + hi);
            if f_ball(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(CriticalPointCertificate { dim, s, f_at_critical: f_at, gradient_max_abs: grad_max, entries, r_s: lo })
}

// ---------------------------------------------------------------------------
// residual certification

#[derive(Debug, Clone, Copy)]
pub struct CertOptions {
    /// Multiplies the supersolution growth profile (1.0 = as constructed).
    pub k_scale: f64,
    /// Applies a decaying factor `1 - k_decay t/T` to the growth profile.
    /// Values around 0.5 demonstrably break the growth inequality early on.
    pub k_decay: f64,
    /// Replace the drift by zero and freeze the subsolution geometry (the
    /// drift-free barrier keeps its width; only the height decays).
    pub drift_off: bool,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions { k_scale: 1.0, k_decay: 0.0, drift_off: false }
    }
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub side: BarrierSide,
    pub checked: usize,
    pub skipped: usize,
    pub max_violation: f64,
    pub witness: Option<([f64; 3], f64, f64)>,
    pub pass: bool,
}

/// Normalized sign tolerance of the residual checks.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Evaluate the pressure-equation residual of the chosen barrier at
/// quasi-random samples of its support region within `[0, T]`, by
/// fourth-order central differences, and report the worst normalized sign
/// violation. Samples landing in a cutoff transition zone of the drift are
/// skipped and counted.
pub fn residual_sign_check(
    params: &BarrierParams,
    side: BarrierSide,
    budget: usize,
    opts: CertOptions,
) -> ResidualReport {
    let dim = params.dim;
    let t_pad = 2.5e-4 * params.t_end;
    let mut max_violation = 0.0f64;
    let mut witness = None;
    let mut checked = 0usize;
    let mut skipped = 0usize;

    // structured probes: a small deterministic grid of times and scaled
    // radii along fixed directions, so near-center and near-edge behavior
    // is always examined regardless of the cloud budget
    let dirs: [[f64; 3]; 3] = if dim == 2 {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.707, 0.707, 0.0]]
    } else {
        [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.577, 0.577, 0.577]]
    };
    let mut probes: Vec<(f64, [f64; 3])> = Vec::new();
    for tf in [0.01, 0.1, 0.5, 0.9, 0.99] {
        for rf in [1e-3, 0.01, 0.1, 0.3, 0.7, 0.95] {
            let t = (tf * params.t_end).clamp(t_pad, params.t_end - t_pad);
            for dir in dirs {
                probes.push((t, [dir[0] * rf, dir[1] * rf, dir[2] * rf]));
            }
        }
    }

    let mut ball = BallSampler::new(dim);
    let mut sample_idx = 0u64;
    let total = budget.max(probes.len());
    for i in 0..total {
        // sample: structured probes first, then the quasi-random cloud
        let (t, xi, ring) = if i < probes.len() {
            (probes[i].0, probes[i].1, false)
        } else {
            sample_idx += 1;
            let tf = radical_inverse(sample_idx, 11);
            let t = (tf * params.t_end).clamp(t_pad, params.t_end - t_pad);
            let xi = ball.next().unwrap();
            // every eighth cloud sample probes the exterior shell (only
            // meaningful for the supersolution, whose profile is 1 there)
            let ring = side == BarrierSide::Super && i % 8 == 0;
            (t, xi, ring)
        };
        // drift-free subsolutions keep a static geometry
        let z_geom = if opts.drift_off && side == BarrierSide::Sub {
            1.0
        } else {
            z_value(params.s, params.m_scale, t)
        };
        let sign = if side == BarrierSide::Sub { 1.0 } else { -1.0 };
        let mut x = [0.0; 3];
        let scale_r = if ring { 1.5 } else { 1.0 };
        for a in 0..dim {
            x[a] = scale_r * params.r * z_geom * xi[a];
        }
        x[dim - 1] += sign * z_geom;

        if !drift_is_pure(params, x) {
            skipped += 1;
            continue;
        }
        checked += 1;

        let violation = residual_violation(params, side, opts, x, t);
        if violation > max_violation {
            max_violation = violation;
            witness = Some((x, t, violation));
        }
    }

    ResidualReport {
        side,
        checked,
        skipped,
        max_violation,
        witness,
        pass: max_violation <= RESIDUAL_TOL,
    }
}

/// The drift's cutoffs are identity on the sampled cones; anything in a
/// transition zone is excluded from certification.
fn drift_is_pure(params: &BarrierParams, x: [f64; 3]) -> bool {
    let (rho2, y) = match params.dim {
        2 => (x[0] * x[0] + x[1] * x[1], x[1]),
        _ => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2], x[2]),
    };
    let rho = rho2.sqrt();
    if !(rho >= 2.0 * params.eps && rho <= 10.0) {
        return false;
    }
    if y == 0.0 {
        return false;
    }
    match params.dim {
        2 => (x[0] / y).abs() <= 1.0 / 3.0,
        _ => {
            ((x[0] - x[1]) / y).abs() <= 1.0 / 3.0 && ((x[0] + x[1]) / y).abs() <= 1.0 / 3.0
        }
    }
}

/// Normalized positive part of the signed residual defect at one sample.
///
/// Finite-difference steps are `1e-4` times the local scale: the barrier
/// width `r z` shrunk by the local logarithmic slope of the profile near
/// the support edge (where the bump decays like `exp(-1/(1-R^2))`), and the
/// matching local time scale of the moving geometry.
fn residual_violation(
    params: &BarrierParams,
    side: BarrierSide,
    opts: CertOptions,
    x: [f64; 3],
    t: f64,
) -> f64 {
    let dim = params.dim;
    let z = z_value(params.s, params.m_scale, t);
    let static_sub = opts.drift_off && side == BarrierSide::Sub;
    let value = |x: [f64; 3], t: f64| -> f64 {
        match side {
            BarrierSide::Sub => {
                if static_sub {
                    let zt = z_value(params.s, params.m_scale, t);
                    let mut d2 = 0.0;
                    for a in 0..dim {
                        let c = if a == dim - 1 { 1.0 } else { 0.0 };
                        d2 += (x[a] - c) * (x[a] - c);
                    }
                    params.c_s * zt.powf(params.s) * SubBump::value(d2.sqrt() / params.r)
                } else {
                    params.subsolution_eval(x, t).unwrap_or(f64::NAN)
                }
            }
            BarrierSide::Super => {
                let shape = opts.k_scale * (1.0 - opts.k_decay * t / params.t_end);
                shape * params.supersolution_eval(x, t).unwrap_or(f64::NAN)
            }
        }
    };
    let z_geom = if static_sub { 1.0 } else { z };
    let v = value(x, t);
    if side == BarrierSide::Sub && v < 1e-250 {
        // the profile is zero to double precision here; all residual terms
        // vanish with it
        return 0.0;
    }
    // local logarithmic slope of the profile in scaled-radius units
    let r_scaled = {
        let mut d2 = 0.0;
        for a in 0..dim {
            let c = if a == dim - 1 { if side == BarrierSide::Sub { z_geom } else { -z_geom } } else { 0.0 };
            d2 += (x[a] - c) * (x[a] - c);
        }
        d2.sqrt() / (params.r * z_geom)
    };
    let log_slope = match side {
        BarrierSide::Sub => {
            let q = (1.0 - r_scaled * r_scaled).max(1e-6);
            2.0 * r_scaled / (q * q)
        }
        BarrierSide::Super => 4.0, // polynomial profile, bounded slopes
    };
    let sharpness = (log_slope / 3.0).max(1.0);
    let h_x = 1e-4 * params.r * z_geom / sharpness;
    // time scale: geometry motion plus height decay
    let motion = z.powf(params.s - 2.0) / params.m_scale * (1.0 + params.r) / params.r;
    let lambda = (log_slope * motion + params.s * z.powf(params.s - 2.0) / params.m_scale)
        .max(1.0 / params.t_end);
    let h_t = (1e-4 / lambda).min(1e-4 * params.t_end);

    let h_t_eff = h_t.min(0.49 * t).min(0.49 * (params.t_end - t));
    let v_t = d1_4(&|dt| value(x, t + dt), h_t_eff);
    let mut grad = [0.0f64; 3];
    let mut lap = 0.0f64;
    for a in 0..dim {
        let fa = |d: f64| {
            let mut xx = x;
            xx[a] += d;
            value(xx, t)
        };
        grad[a] = d1_4(&fa, h_x);
        lap += d2_4(&fa, h_x);
    }
    let vel = if opts.drift_off { [0.0; 3] } else { params.drift(x) };
    let mut transport = 0.0;
    let mut grad2 = 0.0;
    for a in 0..dim {
        transport += vel[a] * grad[a];
        grad2 += grad[a] * grad[a];
    }
    let diff_term = (params.m - 1.0) * v * lap;
    let residual = match side {
        // sufficient subsolution form: v_t - (m-1) v lap v + V . grad v <= 0
        BarrierSide::Sub => v_t - diff_term + transport,
        // full supersolution residual >= 0
        BarrierSide::Super => v_t - diff_term - grad2 + transport,
    };
    let scale = v_t
        .abs()
        .max(diff_term.abs())
        .max(grad2)
        .max(transport.abs())
        .max(1e-300);
    match side {
        BarrierSide::Sub => (residual / scale).max(0.0),
        BarrierSide::Super => (-residual / scale).max(0.0),
    }
}

/// Plain-text certificate bundle for one parameter set.
#[derive(Debug, Clone)]
pub struct CertificateBundle {
    pub params: BarrierParams,
    pub critical: CriticalPointCertificate,
    pub sub: ResidualReport,
    pub super_: ResidualReport,
}

impl std::fmt::Display for CertificateBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{{params: {{dim: {}, s: {}, eps: {}, r: {}, m: {}, T: {:.6}, C*: {:.6}, C0: {:.6e}, c_s: {:.6e}}},",
            self.params.dim,
            self.params.s,
            self.params.eps,
            self.params.r,
            self.params.m,
            self.params.t_end,
            self.params.c_star,
            self.params.c0,
            self.params.c_s,
        )?;
        writeln!(
            f,
            " max_violation: {{sub: {:.3e}, super: {:.3e}}},",
            self.sub.max_violation, self.super_.max_violation
        )?;
        let w = |r: &ResidualReport| match &r.witness {
            Some((x, t, v)) => {
                format!("[{:.5}, {:.5}, {:.5}] at t = {:.5} ({:.3e})", x[0], x[1], x[2], t, v)
            }
            None => "none".to_string(),
        };
        writeln!(f, " witness_point: {{sub: {}, super: {}}},", w(&self.sub), w(&self.super_))?;
        writeln!(f, " r_s: {:.6},", self.critical.r_s)?;
        write!(f, " hessian_entries: [")?;
        for (k, e) in self.critical.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}: {:.8} (expected {:.8})", e.name, e.measured, e.expected)?;
        }
        writeln!(f, "],")?;
        write!(
            f,
            " pass: {{sub: {}, super: {}, checked: {}+{}, skipped: {}+{}}}}}",
            self.sub.pass,
            self.super_.pass,
            self.sub.checked,
            self.super_.checked,
            self.sub.skipped,
            self.super_.skipped
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params2d() -> BarrierParams {
        BarrierParams::new(2, 0.3, 0.02, 0.06, 2.0).unwrap()
    }

    #[test]
    fn z_profile_endpoints_and_ode() {
        let p = params2d();
        assert!((p.z(0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((p.z(p.t_end).unwrap() - 4.0 * p.eps).abs() < 1e-12);
        assert!(p.z(-0.1).is_err());
        assert!(p.z(p.t_end * 1.01).is_err());
        // z' = -z^(s-1)/M by finite differences
        for tf in [0.1, 0.4, 0.8] {
            let t = tf * p.t_end;
            let h = 1e-6 * p.t_end;
            let fd = (z_value(p.s, p.m_scale, t + h) - z_value(p.s, p.m_scale, t - h)) / (2.0 * h);
            let exact = z_derivative(p.s, p.m_scale, t);
            assert!((fd - exact).abs() < 1e-6 * exact.abs(), "{fd} vs {exact}");
        }
        // degenerate check value s = 1: M = 1 gives z(t) = 1 - t
        assert!((z_value(1.0, 1.0, 0.3) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn k_profile_increasing_and_solves_its_ode() {
        let p = params2d();
        let k0 = p.k(0.0).unwrap();
        let kt = p.k(p.t_end).unwrap();
        assert!(kt > k0, "k not increasing: {k0} vs {kt}");
        // denominator at t = 0 is C0 (1 - (4 eps)^s / 2)
        let expect = p.c0 * (1.0 - (4.0 * p.eps).powf(p.s) / 2.0);
        assert!((p.k_denominator(1.0) - expect).abs() < 1e-9 * expect);
        // k(0) -> 2/C0 with relative deviation (4 eps)^s / 2
        let dev = k0 * p.c0 * (1.0 - (4.0 * p.eps).powf(p.s) / 2.0);
        assert!((dev - 1.0).abs() < 1e-12);
        // k' = C* k^2 z^-2 r^-2 by finite differences
        for tf in [0.2, 0.6, 0.9] {
            let t = tf * p.t_end;
            let h = 1e-7 * p.t_end;
            let fd = (p.k(t + h).unwrap() - p.k(t - h).unwrap()) / (2.0 * h);
            let exact = p.k_prime(t).unwrap();
            assert!((fd - exact).abs() < 1e-6 * exact, "{fd} vs {exact}");
        }
    }

    #[test]
    fn barrier_inequality_holds_at_recorded_constant() {
        for (m, dim) in [(2.0, 2), (1.5, 2), (2.0, 3)] {
            let c_star = SuperBump::barrier_constant(m, dim);
            for i in 1..100_000 {
                let r = i as f64 / 100_000.0;
                let v = SuperBump::value(r);
                if v == 0.0 {
                    continue;
                }
                let lap = SuperBump::d2(r) + (dim as f64 - 1.0) * SuperBump::d1(r) / r;
                let lhs = (m - 1.0) * v * lap + SuperBump::d1(r).powi(2);
                assert!(lhs <= c_star * v * (1.0 + 1e-12), "r = {r}");
            }
        }
    }

    #[test]
    fn super_bump_is_monotone_with_pinned_ends() {
        assert_eq!(SuperBump::value(0.0), 0.0);
        assert_eq!(SuperBump::d1(0.0), 0.0);
        assert_eq!(SuperBump::value(1.0), 1.0);
        let mut last = 0.0;
        for i in 0..=2000 {
            let r = 1.2 * i as f64 / 2000.0;
            let v = SuperBump::value(r);
            assert!(v >= last - 1e-12, "not monotone at {r}");
            assert!(SuperBump::d1(r) >= -1e-12);
            last = v;
        }
    }

    #[test]
    fn barrier_evaluation_peak_and_zero() {
        let p = params2d();
        // subsolution peak at the moving center
        let t = 0.37 * p.t_end;
        let z = p.z(t).unwrap();
        let peak = p.subsolution_eval([0.0, z, 0.0], t).unwrap();
        assert!((peak - p.c_s * z.powf(p.s)).abs() < 1e-14 * peak);
        // supersolution zero at the mirror center at t = T (the center is
        // reconstructed through z(T), so allow roundoff dust)
        let zero = p.supersolution_eval([0.0, -4.0 * p.eps, 0.0], p.t_end).unwrap();
        assert!(zero.abs() <= 1e-24 * p.k(p.t_end).unwrap(), "{zero:e}");
        // subsolution value at (0, 4 eps) at T
        let v = p.subsolution_eval([0.0, 4.0 * p.eps, 0.0], p.t_end).unwrap();
        assert!((v - p.c_s * (4.0 * p.eps).powf(p.s)).abs() < 1e-14 * v.max(1e-300));
    }

    #[test]
    fn critical_point_certificates_match_printed_entries() {
        let c2 = critical_point_certificate(0.5, 2).unwrap();
        let get = |c: &CriticalPointCertificate, n: &str| {
            c.entries.iter().find(|e| e.name == n).unwrap().measured
        };
        assert!((get(&c2, "f_xx") - 1.0).abs() < 1e-5);
        assert!((get(&c2, "f_yy") - 3.0).abs() < 1e-5);
        assert!(c2.r_s > 0.0);

        let c3 = critical_point_certificate(0.5, 3).unwrap();
        assert!((get(&c3, "f_x1x1") - 1.5).abs() < 1e-5);
        assert!((get(&c3, "f_yy") - 3.0).abs() < 1e-5);
        assert!((get(&c3, "f_x1y") - 0.25).abs() < 1e-5);
        assert!(c3.r_s > 0.0);
    }

    #[test]
    fn three_d_supersolution_region_reduces_by_mirror_symmetry() {
        // the lower-cone inequality function equals f(-x1, -x2, -y)
        let s = 0.35;
        for i in 0..200 {
            let a = (i as f64 * 0.013).sin() * 0.05;
            let b = (i as f64 * 0.029).cos() * 0.05;
            let c = -1.0 + (i as f64 * 0.017).sin() * 0.05;
            // explicit lower-cone form
            let direct = {
                let (x1, x2, y) = (a, b, c);
                x1 * x1
                    + x2 * x2
                    + (y + 1.0) * y
                    + 0.25 * (y - x1 + x2).abs().powf(s - 1.0) * (x1 + y + 1.0)
                    + 0.25 * (y + x1 - x2).abs().powf(s - 1.0) * (x2 + y + 1.0)
                    + 0.25 * (y + x1 + x2).abs().powf(s - 1.0) * (-x2 - x1 + 2.0 * y + 2.0)
            };
            let mirrored = transport_f3d(s, -a, -b, -c);
            assert!(
                (direct - mirrored).abs() < 1e-10 * direct.abs().max(1.0),
                "{direct} vs {mirrored}"
            );
        }
    }

    #[test]
    fn residual_checks_pass_at_modest_budget() {
        let p = params2d();
        let sub = residual_sign_check(&p, BarrierSide::Sub, 2000, CertOptions::default());
        assert!(sub.pass, "sub violation {:.3e} at {:?}", sub.max_violation, sub.witness);
        let sup = residual_sign_check(&p, BarrierSide::Super, 2000, CertOptions::default());
        assert!(sup.pass, "super violation {:.3e} at {:?}", sup.max_violation, sup.witness);
        assert!(sub.checked > 0 && sup.checked > 0);
    }

    #[test]
    fn drift_free_subsolution_passes() {
        let p = params2d();
        let rep = residual_sign_check(
            &p,
            BarrierSide::Sub,
            1500,
            CertOptions { drift_off: true, ..Default::default() },
        );
        assert!(rep.pass, "violation {:.3e}", rep.max_violation);
    }

    #[test]
    fn broken_growth_profile_fails_with_witness() {
        // A decaying height factor lowers k' below the required growth rate
        // early in the lifetime; the certificate must locate a witness.
        let p = params2d();
        let rep = residual_sign_check(
            &p,
            BarrierSide::Super,
            2000,
            CertOptions { k_decay: 0.5, ..Default::default() },
        );
        assert!(!rep.pass, "expected failure, max violation {:.3e}", rep.max_violation);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn mild_multiplicative_inflation_still_certifies() {
        // Scaling k by 1 + 1e-3 does not break the supersolution property:
        // the transport term carries a uniform relative margin much larger
        // than the induced growth deficit, so the certificate stays green.
        let p = params2d();
        let rep = residual_sign_check(
            &p,
            BarrierSide::Super,
            1500,
            CertOptions { k_scale: 1.0 + 1e-3, ..Default::default() },
        );
        assert!(rep.pass, "violation {:.3e} at {:?}", rep.max_violation, rep.witness);
    }

    #[test]
    fn three_d_residuals_pass() {
        let p = BarrierParams::new(3, 0.3, 0.02, 0.05, 2.0).unwrap();
        let sub = residual_sign_check(&p, BarrierSide::Sub, 1500, CertOptions::default());
        assert!(sub.pass, "sub violation {:.3e} at {:?}", sub.max_violation, sub.witness);
        let sup = residual_sign_check(&p, BarrierSide::Super, 1500, CertOptions::default());
        assert!(sup.pass, "super violation {:.3e} at {:?}", sup.max_violation, sup.witness);
    }
}

//! Regularity diagnostics on solver output: pressure transforms, rescaled
//! cylinders, oscillations, Hölder seminorms, and level-set measures.
//!
//! The parabolic distance is the max form
//! `dist((x,s),(y,t)) = max(|x-y|, |s-t|^(1/2))`, which makes cylinder
//! geometry exact.

use crate::grid::{Grid, GridMode, ParabolicCylinder, ScalarField};
use crate::io::CsvTable;
use crate::ops::pow_m;
use crate::{Error, Result};

/// Ordered snapshots on a common grid with (approximately) uniform stride.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl SpaceTimeField {
    pub fn new(history: Vec<(f64, ScalarField)>) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InvalidParameter("empty history".into()));
        }
        let grid = history[0].1.grid;
        let mut times = Vec::with_capacity(history.len());
        let mut fields = Vec::with_capacity(history.len());
        for (t, f) in history {
            if f.grid != grid {
                return Err(Error::DimensionMismatch("snapshots on different grids".into()));
            }
            if let Some(&last) = times.last() {
                if t <= last {
                    return Err(Error::InvalidParameter(format!(
                        "times not strictly increasing: {last} then {t}"
                    )));
                }
            }
            times.push(t);
            fields.push(f);
        }
        Ok(SpaceTimeField { grid, times, fields })
    }

    pub fn t_lo(&self) -> f64 {
        self.times[0]
    }

    pub fn t_hi(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Pointwise map of every snapshot.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid,
            times: self.times.clone(),
            fields: self
                .fields
                .iter()
                .map(|u| ScalarField {
                    grid: u.grid,
                    values: u.values.iter().map(|v| f(*v)).collect(),
                })
                .collect(),
        }
    }

    /// Space-time interpolation (multilinear in space, linear in time).
    pub fn interpolate(&self, x: [f64; 3], t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.fields[0].interpolate(x);
        }
        if t >= self.times[n - 1] {
            return self.fields[n - 1].interpolate(x);
        }
        let k = self.times.partition_point(|&s| s <= t).min(n - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.fields[k - 1].interpolate(x) + w * self.fields[k].interpolate(x)
    }
}

/// Pressure map `v = m/(m-1) u^(m-1)` applied cellwise.
pub fn pressure_transform(u: &ScalarField, m: f64) -> ScalarField {
    ScalarField {
        grid: u.grid,
        values: u.values.iter().map(|&x| m / (m - 1.0) * pow_m(x, m - 1.0)).collect(),
    }
}

/// Inverse of [`pressure_transform`].
pub fn pressure_inverse(v: &ScalarField, m: f64) -> ScalarField {
    ScalarField {
        grid: v.grid,
        values: v
            .values
            .iter()
            .map(|&x| ((m - 1.0) / m * x).max(0.0).powf(1.0 / (m - 1.0)))
            .collect(),
    }
}

/// Root map `nu = u^(1/m)` applied cellwise.
pub fn nu_transform(u: &ScalarField, m: f64) -> ScalarField {
    ScalarField { grid: u.grid, values: u.values.iter().map(|&x| x.powf(1.0 / m)).collect() }
}

/// Inverse of [`nu_transform`].
pub fn nu_inverse(nu: &ScalarField, m: f64) -> ScalarField {
    ScalarField { grid: nu.grid, values: nu.values.iter().map(|&x| pow_m(x, m)).collect() }
}

/// Resample `w` from the cylinder `Q(r, w_osc^-alpha)` (anchored at the
/// history's final time) onto the unit cylinder `Q_1`, with
/// `alpha = (m-1)/m`: output(x, t) = input(r x, r^2 w_osc^-alpha t).
pub fn rescale_cylinder(
    w: &SpaceTimeField,
    r: f64,
    w_osc: f64,
    m: f64,
    out_cells: usize,
    out_steps: usize,
) -> Result<SpaceTimeField> {
    if w.grid.mode != GridMode::FullBox {
        return Err(Error::InvalidParameter("rescale_cylinder needs a full-box grid".into()));
    }
    let alpha = (m - 1.0) / m;
    let depth = r * r * w_osc.powf(-alpha);
    let t_anchor = w.t_hi();
    if t_anchor - depth < w.t_lo() - 1e-12 {
        return Err(Error::OutOfRange(format!(
            "source cylinder needs {depth:.3e} of history, have {:.3e}",
            w.t_hi() - w.t_lo()
        )));
    }
    if r > w.grid.half_extent {
        return Err(Error::OutOfRange(format!(
            "cylinder radius {r} exceeds the grid extent {}",
            w.grid.half_extent
        )));
    }
    let out_grid = Grid::full_box(w.grid.dim, out_cells, 1.0)?;
    let mut history = Vec::with_capacity(out_steps + 1);
    for k in 0..=out_steps {
        // unit times spanning [-1, 0], mapped onto [t_anchor - depth, t_anchor]
        let tau = -1.0 + k as f64 / out_steps as f64;
        let t_src = t_anchor + tau * depth;
        let field = ScalarField::from_fn(out_grid, |x| {
            let y = [r * x[0], r * x[1], r * x[2]];
            w.interpolate(y, t_src)
        });
        history.push((tau, field));
    }
    SpaceTimeField::new(history)
}

/// `sup - inf` of the field over the sampled cells of a cylinder.
pub fn oscillation(w: &SpaceTimeField, q: &ParabolicCylinder) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let grid = w.grid;
    let cells: Vec<usize> = (0..grid.cell_count())
        .filter(|&i| q.contains_space(grid.center(i), grid.dim))
        .collect();
    if cells.is_empty() {
        return Err(Error::OutOfRange("cylinder contains no cells".into()));
    }
    let mut any_time = false;
    // sample over the closure of the cylinder's time window
    for (t, u) in w.times.iter().zip(&w.fields) {
        if *t >= q.t_lo() - 1e-12 && *t <= q.t0 + 1e-12 {
            any_time = true;
            for &c in &cells {
                lo = lo.min(u.values[c]);
                hi = hi.max(u.values[c]);
            }
        }
    }
    if !any_time {
        return Err(Error::OutOfRange("cylinder contains no snapshot times".into()));
    }
    Ok(hi - lo)
}

/// Report of a Hölder seminorm estimate: the value and the realizing pair.
#[derive(Debug, Clone)]
pub struct HolderReport {
    pub delta: f64,
    pub value: f64,
    pub p_point: ([f64; 3], f64),
    pub q_point: ([f64; 3], f64),
}

impl HolderReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:?},{},{:?},{}",
            self.delta, self.value, self.p_point.0, self.p_point.1, self.q_point.0, self.q_point.1
        )
    }
}

/// Hölder seminorm estimate: max over sampled point pairs of
/// `|w(p) - w(q)| / dist(p,q)^delta` in the parabolic max-distance. The
/// sample set is a decimated lattice (at most `budget` points) plus the
/// global extremes, so enrichment never lowers the estimate.
pub fn holder_seminorm(
    w: &SpaceTimeField,
    delta: f64,
    region: Option<&ParabolicCylinder>,
    budget: usize,
) -> Result<HolderReport> {
    if !(0.0 < delta && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} not in (0,1]")));
    }
    let grid = w.grid;
    // collect candidate (cell, time) indices
    let in_region = |x: [f64; 3], t: f64| match region {
        Some(q) => q.contains(x, t, grid.dim),
        None => true,
    };
    let mut cells: Vec<usize> = Vec::new();
    for i in 0..grid.cell_count() {
        let x = grid.center(i);
        if region.map(|q| q.contains_space(x, grid.dim)).unwrap_or(true) {
            cells.push(i);
        }
    }
    let times: Vec<usize> = (0..w.times.len()).collect();
    if cells.is_empty() || times.is_empty() {
        return Err(Error::OutOfRange("empty sampling region".into()));
    }
    // decimate to approximately `budget` space-time points
    let total = cells.len() * times.len();
    let keep_every = (total + budget - 1) / budget.max(1);
    let mut pts: Vec<(usize, usize)> = Vec::new();
    let mut k = 0usize;
    for &ti in &times {
        for &ci in &cells {
            if k % keep_every == 0 {
                let x = grid.center(ci);
                let t = w.times[ti];
                if in_region(x, t) {
                    pts.push((ci, ti));
                }
            }
            k += 1;
        }
    }
    // global extreme pair over the region
    let mut min_pt = (0usize, 0usize, f64::INFINITY);
    let mut max_pt = (0usize, 0usize, f64::NEG_INFINITY);
    for &ti in &times {
        let u = &w.fields[ti];
        for &ci in &cells {
            let t = w.times[ti];
            if !in_region(grid.center(ci), t) {
                continue;
            }
            let v = u.values[ci];
            if v < min_pt.2 {
                min_pt = (ci, ti, v);
            }
            if v > max_pt.2 {
                max_pt = (ci, ti, v);
            }
        }
    }
    pts.push((min_pt.0, min_pt.1));
    pts.push((max_pt.0, max_pt.1));

    let mut best = 0.0f64;
    let mut best_pair = ((grid.center(pts[0].0), w.times[pts[0].1]), (grid.center(pts[0].0), w.times[pts[0].1]));
    for (a, &(ca, ta)) in pts.iter().enumerate() {
        let xa = grid.center(ca);
        let va = w.fields[ta].values[ca];
        for &(cb, tb) in pts.iter().skip(a + 1) {
            let xb = grid.center(cb);
            let vb = w.fields[tb].values[cb];
            let mut dx = 0.0f64;
            for ax in 0..grid.dim {
                dx = dx.max((xa[ax] - xb[ax]).abs());
            }
            // Euclidean spatial distance, max-form parabolic metric
            let mut d2 = 0.0;
            for ax in 0..grid.dim {
                d2 += (xa[ax] - xb[ax]) * (xa[ax] - xb[ax]);
            }
            let dist = d2.sqrt().max((w.times[ta] - w.times[tb]).abs().sqrt());
            if dist == 0.0 {
                continue;
            }
            let q = (va - vb).abs() / dist.powf(delta);
            if q > best {
                best = q;
                best_pair = ((xa, w.times[ta]), (xb, w.times[tb]));
            }
        }
    }
    Ok(HolderReport { delta, value: best, p_point: best_pair.0, q_point: best_pair.1 })
}

/// Time-integrated level-set measures on the unit cylinder:
/// `A_{k;q} = (int (|{v > k}|)^q dt)^(1/q)` and the same with `{v < k}`
/// for `B`. Monotone in k (A down, B up) and nondecreasing in q on time
/// windows of length at most 1.
#[derive(Debug, Clone)]
pub struct LevelSeries {
    /// rows of (k, q, A, B)
    pub rows: Vec<(f64, f64, f64, f64)>,
}

impl LevelSeries {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["k", "q", "A", "B"]);
        for (k, q, a, b) in &self.rows {
            t.push_row(&[*k, *q, *a, *b]);
        }
        t
    }

    pub fn get(&self, k: f64, q: f64) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|(kk, qq, _, _)| (kk - k).abs() < 1e-14 && (qq - q).abs() < 1e-14)
            .map(|(_, _, a, b)| (*a, *b))
    }
}

pub fn level_measures(
    w: &SpaceTimeField,
    thresholds: &[f64],
    exponents: &[f64],
) -> Result<LevelSeries> {
    for &q in exponents {
        if !(0.0 < q && q <= 1.0) {
            return Err(Error::InvalidParameter(format!("exponent q = {q} not in (0,1]")));
        }
    }
    let window = w.t_hi() - w.t_lo();
    if window > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "time window {window:.3} exceeds 1 (normalize first)"
        )));
    }
    let grid = w.grid;
    let vol = grid.cell_volume(0);
    let nt = w.times.len();
    let mut rows = Vec::new();
    for &k in thresholds {
        // per-snapshot super/sub level masses
        let above: Vec<f64> = w
            .fields
            .iter()
            .map(|u| u.values.iter().filter(|v| **v > k).count() as f64 * vol)
            .collect();
        let below: Vec<f64> = w
            .fields
            .iter()
            .map(|u| u.values.iter().filter(|v| **v < k).count() as f64 * vol)
            .collect();
        for &q in exponents {
            // trapezoid in time of the q-th powers
            let mut ia = 0.0;
            let mut ib = 0.0;
            for i in 1..nt {
                let dt = w.times[i] - w.times[i - 1];
                ia += 0.5 * dt * (above[i].powf(q) + above[i - 1].powf(q));
                ib += 0.5 * dt * (below[i].powf(q) + below[i - 1].powf(q));
            }
            rows.push((k, q, ia.powf(1.0 / q), ib.powf(1.0 / q)));
        }
    }
    let series = LevelSeries { rows };
    validate_monotonicity(&series)?;
    Ok(series)
}

fn validate_monotonicity(s: &LevelSeries) -> Result<()> {
    // A nonincreasing in k at fixed q; A nondecreasing in q at fixed k
    for (k1, q1, a1, _) in &s.rows {
        for (k2, q2, a2, _) in &s.rows {
            if (q1 - q2).abs() < 1e-14 && k2 > k1 && *a2 > *a1 * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "level measure not monotone in k: A({k1})={a1} < A({k2})={a2}"
                )));
            }
            if (k1 - k2).abs() < 1e-14 && q2 > q1 && *a2 < *a1 * (1.0 - 1e-12) - 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "level measure not monotone in q: A(q={q1})={a1} > A(q={q2})={a2}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn constant_history(grid: Grid, c: f64, nt: usize) -> SpaceTimeField {
        let hist: Vec<(f64, ScalarField)> = (0..nt)
            .map(|k| (-1.0 + (k + 1) as f64 / nt as f64, ScalarField::constant(grid, c)))
            .collect();
        SpaceTimeField::new(hist).unwrap()
    }

    #[test]
    fn transforms_are_pointwise_inverses() {
        let g = Grid::full_box(1, 64, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| 1e-6 + 1e3 * (0.5 + 0.5 * (3.0 * x[0]).sin()));
        for m in [1.5, 2.0, 2.7] {
            let v = pressure_transform(&u, m);
            let back = pressure_inverse(&v, m);
            for (a, b) in u.values.iter().zip(&back.values) {
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
            }
            let nu = nu_transform(&u, m);
            let back = nu_inverse(&nu, m);
            for (a, b) in u.values.iter().zip(&back.values) {
                assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
        // m = 2 special cases: v = 2u, nu = sqrt(u)
        let v = pressure_transform(&u, 2.0);
        for (a, b) in u.values.iter().zip(&v.values) {
            assert_eq!(2.0 * a, *b);
        }
        // zero maps to zero under both
        let z = ScalarField::zeros(g);
        assert!(pressure_transform(&z, 2.0).values.iter().all(|v| *v == 0.0));
        assert!(nu_transform(&z, 2.0).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rescale_cylinder_identity_and_constants() {
        let g = Grid::full_box(1, 64, 1.0).unwrap();
        // linear-in-time constant-in-space history
        let hist: Vec<(f64, ScalarField)> =
            (0..=20).map(|k| (k as f64 * 0.05, ScalarField::constant(g, 3.0))).collect();
        let w = SpaceTimeField::new(hist).unwrap();
        let out = rescale_cylinder(&w, 1.0, 1.0, 2.0, 32, 8).unwrap();
        for f in &out.fields {
            for v in &f.values {
                assert!((v - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rescale_cylinder_rejects_out_of_range() {
        let g = Grid::full_box(1, 32, 1.0).unwrap();
        let hist: Vec<(f64, ScalarField)> =
            (0..=3).map(|k| (k as f64 * 0.01, ScalarField::zeros(g))).collect();
        let w = SpaceTimeField::new(hist).unwrap();
        // depth r^2 w^-alpha = 1 >> 0.03 of history
        assert!(rescale_cylinder(&w, 1.0, 1.0, 2.0, 16, 4).is_err());
        // radius beyond the grid
        assert!(rescale_cylinder(&w, 2.0, 1.0, 2.0, 16, 4).is_err());
    }

    #[test]
    fn rescale_preserves_oscillation() {
        // time grids aligned so both sides see the identical window: source
        // dt = 0.025, depth = r^2 w^(-alpha) = 0.25, output steps 10
        let g = Grid::full_box(1, 256, 1.0).unwrap();
        let hist: Vec<(f64, ScalarField)> = (0..=32)
            .map(|k| {
                let t = k as f64 * 0.025;
                (t, ScalarField::from_fn(g, move |x| (2.0 * x[0]).sin() + 0.3 * t))
            })
            .collect();
        let w = SpaceTimeField::new(hist).unwrap();
        let r = 0.5;
        let w_osc = 1.0;
        let m = 2.0;
        let out = rescale_cylinder(&w, r, w_osc, m, 128, 10).unwrap();
        let q_unit = ParabolicCylinder::new([0.0; 3], 0.0, 1.0, 1.0).unwrap();
        let osc_out = oscillation(&out, &q_unit).unwrap();
        let depth = r * r * w_osc.powf(-0.5);
        let q_src = ParabolicCylinder::new([0.0; 3], w.t_hi(), r, depth / (r * r)).unwrap();
        let osc_src = oscillation(&w, &q_src).unwrap();
        assert!(
            (osc_out - osc_src).abs() < 1e-3 * osc_src.max(1.0),
            "{osc_out} vs {osc_src}"
        );
    }

    #[test]
    fn oscillation_basics() {
        let g = Grid::full_box(1, 128, 1.0).unwrap();
        let w = constant_history(g, 5.0, 4);
        let q = ParabolicCylinder::new([0.0; 3], 0.0, 0.5, 1.0).unwrap();
        assert_eq!(oscillation(&w, &q).unwrap(), 0.0);

        // linear slope 1: oscillation over radius r is 2r up to h
        let hist: Vec<(f64, ScalarField)> =
            vec![(0.0, ScalarField::from_fn(g, |x| x[0]))];
        let w = SpaceTimeField::new(hist).unwrap();
        let q = ParabolicCylinder::new([0.0; 3], 0.0, 0.5, 1.0).unwrap();
        let osc = oscillation(&w, &q).unwrap();
        assert!((osc - 1.0).abs() <= 2.0 * g.h, "{osc}");

        // nested cylinders are monotone
        let q_small = ParabolicCylinder::new([0.0; 3], 0.0, 0.25, 1.0).unwrap();
        assert!(oscillation(&w, &q_small).unwrap() <= osc);
    }

    #[test]
    fn oscillation_invariant_under_constant_shift() {
        let g = Grid::full_box(2, 32, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..g.cell_count()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let base = ScalarField { grid: g, values: vals };
        let shifted = ScalarField {
            grid: g,
            values: base.values.iter().map(|v| v + 7.25).collect(),
        };
        let wa = SpaceTimeField::new(vec![(0.0, base)]).unwrap();
        let wb = SpaceTimeField::new(vec![(0.0, shifted)]).unwrap();
        let q = ParabolicCylinder::new([0.0; 3], 0.0, 0.8, 1.0).unwrap();
        let (oa, ob) = (oscillation(&wa, &q).unwrap(), oscillation(&wb, &q).unwrap());
        assert!((oa - ob).abs() <= 4.0 * f64::EPSILON * (1.0 + oa.abs()), "{oa} vs {ob}");
    }

    #[test]
    fn holder_seminorm_of_linear_profile_is_one() {
        let g = Grid::full_box(1, 200, 1.0).unwrap();
        let hist = vec![(0.0, ScalarField::from_fn(g, |x| x[0]))];
        let w = SpaceTimeField::new(hist).unwrap();
        let rep = holder_seminorm(&w, 1.0, None, 4000).unwrap();
        assert!((rep.value - 1.0).abs() <= g.h, "{}", rep.value);
    }

    #[test]
    fn holder_seminorm_scaling_and_shift() {
        let g = Grid::full_box(1, 100, 1.0).unwrap();
        let mk = |c: f64, s: f64| {
            SpaceTimeField::new(vec![(
                0.0,
                ScalarField::from_fn(g, move |x| s * ((5.0 * x[0]).sin()) + c),
            )])
            .unwrap()
        };
        let base = holder_seminorm(&mk(0.0, 1.0), 0.5, None, 2000).unwrap().value;
        let shifted = holder_seminorm(&mk(3.0, 1.0), 0.5, None, 2000).unwrap().value;
        let scaled = holder_seminorm(&mk(0.0, 2.0), 0.5, None, 2000).unwrap().value;
        assert!((base - shifted).abs() < 1e-12);
        assert!((scaled - 2.0 * base).abs() < 1e-12 * scaled);
    }

    #[test]
    fn holder_single_pair_lower_bound() {
        // two probe values a and 0 at distance 8e give at least a/(8e)^delta
        let g = Grid::full_box(2, 64, 1.0).unwrap();
        let e = 0.05;
        let a = 0.7;
        let u = ScalarField::from_fn(g, move |x| {
            if (x[1] - 4.0 * e).abs() < 0.02 && x[0].abs() < 0.02 {
                a
            } else {
                0.0
            }
        });
        let w = SpaceTimeField::new(vec![(0.0, u)]).unwrap();
        let rep = holder_seminorm(&w, 0.5, None, 3000).unwrap();
        let bound = a / (8.0 * e_f(e)).powf(0.5);
        assert!(rep.value >= bound * 0.9, "{} vs {bound}", rep.value);
        fn e_f(e: f64) -> f64 {
            e
        }
    }

    #[test]
    fn level_measures_constant_field_cases() {
        let g = Grid::full_box(2, 16, 0.5).unwrap(); // unit square
        let w = constant_history(g, 2.0, 5);
        // k above the constant: A = 0 for all q
        let s = level_measures(&w, &[3.0], &[0.25, 0.5, 1.0]).unwrap();
        for (_, _, a, _) in &s.rows {
            assert_eq!(*a, 0.0);
        }
        // k below the constant: A = |B'| (window length)^(1/q)
        let s = level_measures(&w, &[1.0], &[0.5, 1.0]).unwrap();
        let window: f64 = w.t_hi() - w.t_lo();
        for (_, q, a, _) in &s.rows {
            let expect = 1.0 * window.powf(1.0 / q);
            assert!((a - expect).abs() < 1e-10, "q={q}: {a} vs {expect}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn level_measures_monotone_on_random_fields(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::full_box(1, 32, 0.5).unwrap();
            let hist: Vec<(f64, ScalarField)> = (0..6)
                .map(|k| {
                    let vals: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..1.0)).collect();
                    (k as f64 * 0.15, ScalarField { grid: g, values: vals })
                })
                .collect();
            let w = SpaceTimeField::new(hist).unwrap();
            let s = level_measures(&w, &[0.2, 0.5, 0.8], &[0.3, 0.6, 1.0]).unwrap();
            // complementarity: per-slice indicator masses of {v>k} and {v<k}
            // sum to at most the domain measure
            for (k, _, _, _) in &s.rows {
                for u in &w.fields {
                    let vol = g.cell_volume(0);
                    let above = u.values.iter().filter(|v| **v > *k).count() as f64 * vol;
                    let below = u.values.iter().filter(|v| **v < *k).count() as f64 * vol;
                    prop_assert!(above + below <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn level_measures_reject_bad_exponent_and_long_window() {
        let g = Grid::full_box(1, 16, 0.5).unwrap();
        let w = constant_history(g, 1.0, 3);
        assert!(level_measures(&w, &[0.5], &[0.0]).is_err());
        assert!(level_measures(&w, &[0.5], &[1.5]).is_err());
        let hist: Vec<(f64, ScalarField)> =
            (0..=4).map(|k| (k as f64, ScalarField::zeros(g))).collect();
        let long = SpaceTimeField::new(hist).unwrap();
        assert!(level_measures(&long, &[0.5], &[0.5]).is_err());
    }
}

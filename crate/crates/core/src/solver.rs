//! Explicit conservative time stepping for the regularized equation
//! `u_t = div(grad(phi_eps(u)) + u V)` with no-flux boundaries.
//!
//! Forward Euler with the face-flux operators from [`crate::ops`]. The
//! scheme is monotone under the CFL bound, so nonnegativity and ordering of
//! solutions are inherited from the initial data without clipping. The time
//! step is recomputed every step from the current height, since the
//! effective diffusivity `m u^(m-1)` grows with the solution.

use std::collections::VecDeque;

use crate::grid::{Grid, GridMode, ParabolicCylinder, ScalarField, VectorField, VectorLayout};
use crate::ops::{self, FluxWorkspace};
use crate::{reduce, Error, ExecMode, Result};

/// Time-step controls. `cfl_diffusion + 2 d * cfl_advection < 1` keeps the
/// explicit update monotone in the worst case; the defaults satisfy this in
/// up to two dimensions, three-dimensional runs lower `cfl_advection`.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub cfl_diffusion: f64,
    pub cfl_advection: f64,
    pub dt_max: f64,
    /// 0 disables clipping: negatives beyond the roundoff floor abort.
    pub positivity_clip_threshold: f64,
    /// Restrict the advective CFL to faces adjacent to the support of u.
    /// Zero-density cells carry no flux, so this is still positivity-safe,
    /// and it avoids paying for singular drift values in empty regions.
    pub support_aware_cfl: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            cfl_diffusion: 0.45,
            cfl_advection: 0.1,
            dt_max: f64::INFINITY,
            positivity_clip_threshold: 0.0,
            support_aware_cfl: false,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_diffusion > 0.0 && self.cfl_diffusion < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_diffusion {} not in (0,1)",
                self.cfl_diffusion
            )));
        }
        if !(self.cfl_advection > 0.0 && self.cfl_advection < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_advection {} not in (0,1)",
                self.cfl_advection
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidParameter(format!("dt_max {} must be > 0", self.dt_max)));
        }
        if self.positivity_clip_threshold < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "positivity_clip_threshold {} must be >= 0",
                self.positivity_clip_threshold
            )));
        }
        Ok(())
    }
}

/// Density, time, and the sampled drift of one run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: ScalarField,
    pub t: f64,
    pub m: f64,
    pub eps_reg: f64,
    pub drift: VectorField,
    pub initial_mass: f64,
}

impl SolverState {
    pub fn new(u: ScalarField, m: f64, eps_reg: f64, drift: VectorField) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::InvalidParameter(format!("m = {m} must be > 1")));
        }
        if eps_reg < 0.0 {
            return Err(Error::InvalidParameter(format!("eps_reg = {eps_reg} must be >= 0")));
        }
        if u.grid != drift.grid {
            return Err(Error::DimensionMismatch("density and drift grids differ".into()));
        }
        if drift.layout != VectorLayout::Faces {
            return Err(Error::InvalidParameter("drift must be in face (flux) form".into()));
        }
        u.check_finite("initial density")?;
        drift.check_finite("drift")?;
        if let Some((i, &v)) = u.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::Negativity {
                cell: format!("{:?}", u.grid.center(i)),
                value: v,
                floor: 0.0,
            });
        }
        let initial_mass = u.mass();
        Ok(SolverState { u, t: 0.0, m, eps_reg, drift, initial_mass })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// Largest admissible time step:
    /// `min(dt_max, cfl_d h^2 / (2 d max(m u^(m-1) + eps)), cfl_a h / max|V|)`.
    pub fn compute_dt(&self, ctl: &StepControl) -> Result<f64> {
        ctl.validate()?;
        let g = &self.u.grid;
        let d = g.dim as f64;
        let mut max_diff = 0.0f64;
        for &v in &self.u.values {
            let p = self.m * ops::pow_m(v, self.m - 1.0) + self.eps_reg;
            if p > max_diff {
                max_diff = p;
            }
        }
        if !max_diff.is_finite() {
            return Err(Error::CflInfeasible("max diffusivity is not finite".into()));
        }
        let dt_diff = if max_diff > 0.0 {
            ctl.cfl_diffusion * g.h * g.h / (2.0 * d * max_diff)
        } else {
            f64::INFINITY
        };
        let max_v = if ctl.support_aware_cfl {
            self.max_drift_near_support()
        } else {
            self.drift.max_abs()
        };
        if !max_v.is_finite() {
            return Err(Error::CflInfeasible("max drift is not finite".into()));
        }
        let dt_adv = if max_v > 0.0 { ctl.cfl_advection * g.h / max_v } else { f64::INFINITY };
        let dt = ctl.dt_max.min(dt_diff).min(dt_adv);
        if !(dt > 0.0) {
            return Err(Error::CflInfeasible(format!("computed dt = {dt}")));
        }
        Ok(dt)
    }

    fn max_drift_near_support(&self) -> f64 {
        let g = self.u.grid;
        let u = &self.u.values;
        let mut max_v = 0.0f64;
        for axis in 0..g.axes() {
            let comp = &self.drift.components[axis];
            crate::grid::for_each_face_cells(&g, axis, |f, lo, hi| {
                let active = lo.map(|i| u[i] > 0.0).unwrap_or(false)
                    || hi.map(|i| u[i] > 0.0).unwrap_or(false);
                if active {
                    let a = comp[f].abs();
                    if a > max_v {
                        max_v = a;
                    }
                }
            });
        }
        max_v
    }
}

/// Reusable stepping kernel (holds flux buffers).
pub struct Stepper {
    ws: FluxWorkspace,
    mode: ExecMode,
}

impl Stepper {
    pub fn new(grid: &Grid) -> Self {
        Stepper { ws: FluxWorkspace::new(grid), mode: ExecMode::default() }
    }

    pub fn with_mode(grid: &Grid, mode: ExecMode) -> Self {
        Stepper { ws: FluxWorkspace::new(grid), mode }
    }

    /// One forward-Euler step with the given dt. Mass is conserved exactly
    /// up to roundoff; negatives beyond `-1e-14 max(u)` abort.
    pub fn advance_with_dt(
        &mut self,
        state: &mut SolverState,
        ctl: &StepControl,
        dt: f64,
    ) -> Result<()> {
        let grid = state.u.grid;
        let m = state.m;
        let eps = state.eps_reg;
        for (p, &v) in self.ws.phi.iter_mut().zip(&state.u.values) {
            *p = ops::pow_m(v, m) + eps * v;
        }
        for f in &mut self.ws.fluxes {
            f.iter_mut().for_each(|x| *x = 0.0);
        }
        ops::diffusive_fluxes(&grid, &mut self.ws);
        ops::upwind_fluxes(&grid, &state.u.values, &state.drift, &mut self.ws);

        let max_u = reduce::max(&state.u.values);
        let hard_floor = -1e-14 * max_u.max(f64::MIN_POSITIVE);
        let clip_floor = if ctl.positivity_clip_threshold > 0.0 {
            -ctl.positivity_clip_threshold * max_u
        } else {
            hard_floor
        };
        update_cells(&grid, &self.ws.fluxes, &mut state.u.values, dt, self.mode);
        // positivity audit: absorb roundoff dust, abort on real violations
        for (i, v) in state.u.values.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v >= clip_floor {
                    *v = 0.0;
                } else {
                    return Err(Error::Negativity {
                        cell: format!("{:?}", grid.center(i)),
                        value: *v,
                        floor: clip_floor,
                    });
                }
            }
        }
        state.t += dt;
        Ok(())
    }

    /// One step with the CFL-derived dt; returns the dt taken.
    pub fn advance(&mut self, state: &mut SolverState, ctl: &StepControl) -> Result<f64> {
        let dt = state.compute_dt(ctl)?;
        if !dt.is_finite() {
            return Err(Error::CflInfeasible(
                "no finite time-step bound (set dt_max for trivial dynamics)".into(),
            ));
        }
        self.advance_with_dt(state, ctl, dt)?;
        Ok(dt)
    }
}

/// Fused divergence-of-fluxes + Euler update.
fn update_cells(grid: &Grid, fluxes: &[Vec<f64>], u: &mut [f64], dt: f64, mode: ExecMode) {
    let n = grid.n;
    match grid.axes() {
        1 => {
            let f0 = &fluxes[0];
            match grid.mode {
                GridMode::FullBox => {
                    let c = dt / grid.cell_volume(0);
                    for (i, uv) in u.iter_mut().enumerate() {
                        *uv += c * (f0[i + 1] - f0[i]);
                    }
                }
                GridMode::Radial => {
                    for (i, uv) in u.iter_mut().enumerate() {
                        *uv += dt * (f0[i + 1] - f0[i]) / grid.cell_volume(i);
                    }
                }
            }
        }
        2 => {
            let c = dt / grid.cell_volume(0);
            let (f0, f1) = (&fluxes[0], &fluxes[1]);
            let row = |i: usize, urow: &mut [f64]| {
                for (j, uv) in urow.iter_mut().enumerate() {
                    *uv += c * (f0[(i + 1) * n + j] - f0[i * n + j] + f1[i * (n + 1) + j + 1]
                        - f1[i * (n + 1) + j]);
                }
            };
            run_rows(u, n, row, mode);
        }
        3 => {
            let c = dt / grid.cell_volume(0);
            let (f0, f1, f2) = (&fluxes[0], &fluxes[1], &fluxes[2]);
            let slab = |i: usize, uslab: &mut [f64]| {
                for j in 0..n {
                    for k in 0..n {
                        uslab[j * n + k] += c
                            * (f0[((i + 1) * n + j) * n + k] - f0[(i * n + j) * n + k]
                                + f1[(i * (n + 1) + j + 1) * n + k]
                                - f1[(i * (n + 1) + j) * n + k]
                                + f2[(i * n + j) * (n + 1) + k + 1]
                                - f2[(i * n + j) * (n + 1) + k]);
                    }
                }
            };
            run_rows(u, n * n, slab, mode);
        }
        _ => unreachable!(),
    }
}

/// Apply `body(first_axis_index, slab)` over the outermost axis, in parallel
/// when the mode and problem size warrant it. Each slab is written by
/// exactly one task, so results do not depend on the worker count.
fn run_rows(u: &mut [f64], slab: usize, body: impl Fn(usize, &mut [f64]) + Sync, mode: ExecMode) {
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel && u.len() >= (1 << 15) {
            use rayon::prelude::*;
            u.par_chunks_mut(slab).enumerate().for_each(|(i, s)| body(i, s));
            return;
        }
    }
    let _ = mode;
    for (i, s) in u.chunks_mut(slab).enumerate() {
        body(i, s);
    }
}

/// Convenience single-step entry point.
pub fn step(state: &SolverState, ctl: &StepControl) -> Result<SolverState> {
    let mut next = state.clone();
    let mut stepper = Stepper::new(&state.u.grid);
    stepper.advance(&mut next, ctl)?;
    Ok(next)
}

// ---------------------------------------------------------------------------
// observers and time series

/// What to sample along a run and how often.
#[derive(Debug, Clone)]
pub struct ObserverConfig {
    /// Sample every `stride` steps (the final state is always sampled).
    pub stride: usize,
    pub probes: Vec<[f64; 3]>,
    /// Oscillation is reported over a trailing window with this cylinder's
    /// radius and depth, centered at its spatial center.
    pub cylinder: Option<ParabolicCylinder>,
    /// Retain full snapshots at sample times (for diagnostics).
    pub keep_snapshots: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig { stride: 100, probes: Vec::new(), cylinder: None, keep_snapshots: false }
    }
}

/// Sampled time series with header `t,mass,sup,inf,osc_Q,probe_1,...`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub probes: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn header(&self) -> String {
        let mut h = String::from("t,mass,sup,inf,osc_Q");
        for k in 0..self.probes {
            h.push_str(&format!(",probe_{}", k + 1));
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

pub struct RunOutput {
    pub state: SolverState,
    pub series: TimeSeries,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub steps: u64,
}

struct OscWindow {
    cells: Vec<usize>,
    window: f64,
    deque: VecDeque<(f64, f64, f64)>,
}

impl OscWindow {
    fn new(grid: &Grid, cyl: &ParabolicCylinder) -> Self {
        let cells = (0..grid.cell_count())
            .filter(|&i| cyl.contains_space(grid.center(i), grid.dim))
            .collect();
        OscWindow { cells, window: cyl.depth * cyl.radius * cyl.radius, deque: VecDeque::new() }
    }

    fn push(&mut self, t: f64, u: &ScalarField) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &c in &self.cells {
            let v = u.values[c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        self.deque.push_back((t, lo, hi));
        while let Some(&(t0, _, _)) = self.deque.front() {
            if t0 < t - self.window {
                self.deque.pop_front();
            } else {
                break;
            }
        }
        let wlo = self.deque.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let whi = self.deque.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
        whi - wlo
    }
}

/// Advance to `t_end`, sampling observers on the configured stride.
pub fn run_until(
    state: SolverState,
    t_end: f64,
    ctl: &StepControl,
    obs: &ObserverConfig,
) -> Result<RunOutput> {
    if t_end < state.t {
        return Err(Error::InvalidParameter(format!(
            "t_end = {t_end} is before current time {}",
            state.t
        )));
    }
    let mut state = state;
    let mut series = TimeSeries { probes: obs.probes.len(), rows: Vec::new() };
    let mut snapshots = Vec::new();
    if t_end == state.t {
        return Ok(RunOutput { state, series, snapshots, steps: 0 });
    }
    let mut osc = obs.cylinder.as_ref().map(|c| OscWindow::new(&state.u.grid, c));
    let mut stepper = Stepper::new(&state.u.grid);
    let stride = obs.stride.max(1) as u64;
    let mut steps: u64 = 0;

    let mut sample = |state: &SolverState,
                      osc: &mut Option<OscWindow>,
                      series: &mut TimeSeries,
                      snapshots: &mut Vec<(f64, ScalarField)>| {
        let osc_v = osc.as_mut().map(|w| w.push(state.t, &state.u)).unwrap_or(0.0);
        let mut row = vec![state.t, state.u.mass(), state.u.sup(), state.u.inf(), osc_v];
        for p in &obs.probes {
            row.push(state.u.interpolate(*p));
        }
        series.rows.push(row);
        if obs.keep_snapshots {
            snapshots.push((state.t, state.u.clone()));
        }
    };

    sample(&state, &mut osc, &mut series, &mut snapshots);
    while state.t < t_end {
        let dt = state.compute_dt(ctl)?;
        let dt = dt.min(t_end - state.t);
        if !dt.is_finite() {
            return Err(Error::CflInfeasible("non-finite dt in run_until".into()));
        }
        stepper.advance_with_dt(&mut state, ctl, dt)?;
        steps += 1;
        if steps % stride == 0 || state.t >= t_end {
            sample(&state, &mut osc, &mut series, &mut snapshots);
        }
    }
    Ok(RunOutput { state, series, snapshots, steps })
}

/// Advance two states with a shared time step (the minimum of both CFL
/// bounds), so the pair evolves under the same monotone update map. Returns
/// sampled histories of both runs at common times.
pub fn run_pair_shared_dt(
    a: SolverState,
    b: SolverState,
    ctl: &StepControl,
    steps: u64,
    stride: usize,
) -> Result<(Vec<(f64, ScalarField)>, Vec<(f64, ScalarField)>)> {
    if a.u.grid != b.u.grid {
        return Err(Error::DimensionMismatch("paired runs need a common grid".into()));
    }
    let mut a = a;
    let mut b = b;
    let mut stepper_a = Stepper::new(&a.u.grid);
    let mut stepper_b = Stepper::new(&b.u.grid);
    let mut ha = vec![(a.t, a.u.clone())];
    let mut hb = vec![(b.t, b.u.clone())];
    let stride = stride.max(1) as u64;
    for k in 1..=steps {
        let dt = a.compute_dt(ctl)?.min(b.compute_dt(ctl)?);
        if !dt.is_finite() {
            return Err(Error::CflInfeasible("paired run has no finite dt".into()));
        }
        stepper_a.advance_with_dt(&mut a, ctl, dt)?;
        stepper_b.advance_with_dt(&mut b, ctl, dt)?;
        if k % stride == 0 || k == steps {
            ha.push((a.t, a.u.clone()));
            hb.push((b.t, b.u.clone()));
        }
    }
    Ok((ha, hb))
}

/// Series of the one-sided L1 distance `integral (u1 - u2)_+` along paired
/// histories, and whether it is non-increasing within slack.
#[derive(Debug, Clone)]
pub struct ContractionSeries {
    pub rows: Vec<(f64, f64)>,
    pub non_increasing: bool,
}

pub fn l1_contraction_probe(
    h1: &[(f64, ScalarField)],
    h2: &[(f64, ScalarField)],
) -> Result<ContractionSeries> {
    if h1.len() != h2.len() || h1.is_empty() {
        return Err(Error::DimensionMismatch("histories differ in length".into()));
    }
    if h1[0].1.grid != h2[0].1.grid {
        return Err(Error::DimensionMismatch("histories on different grids".into()));
    }
    let grid = h1[0].1.grid;
    let vols = grid.volumes();
    let mut rows = Vec::with_capacity(h1.len());
    for ((t1, u1), (t2, u2)) in h1.iter().zip(h2) {
        if (t1 - t2).abs() > 1e-12 * t1.abs().max(1.0) {
            return Err(Error::DimensionMismatch("histories sampled at different times".into()));
        }
        let pos: Vec<f64> =
            u1.values.iter().zip(&u2.values).map(|(a, b)| (a - b).max(0.0)).collect();
        rows.push((*t1, reduce::pairwise_dot(&pos, &vols)));
    }
    let slack = 1e-8 * (1.0 + rows[0].1);
    let non_increasing = rows.windows(2).all(|w| w[1].1 <= w[0].1 + slack);
    Ok(ContractionSeries { rows, non_increasing })
}

// ---------------------------------------------------------------------------
// weak-form residual

/// Compactly supported space-time test function: a cubed polynomial bump in
/// space times a decaying window in time (vanishing at the final time).
#[derive(Debug, Clone, Copy)]
pub struct TestBump {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl TestBump {
    fn space(&self, x: [f64; 3], dim: usize) -> f64 {
        let mut r2 = 0.0;
        for a in 0..dim {
            let d = x[a] - self.center[a];
            r2 += d * d;
        }
        let s = 1.0 - r2 / (self.radius * self.radius);
        if s <= 0.0 {
            0.0
        } else {
            s * s * s
        }
    }

    fn space_grad(&self, x: [f64; 3], dim: usize) -> [f64; 3] {
        let mut r2 = 0.0;
        for a in 0..dim {
            let d = x[a] - self.center[a];
            r2 += d * d;
        }
        let s = 1.0 - r2 / (self.radius * self.radius);
        let mut g = [0.0; 3];
        if s > 0.0 {
            let c = -6.0 * s * s / (self.radius * self.radius);
            for a in 0..dim {
                g[a] = c * (x[a] - self.center[a]);
            }
        }
        g
    }

    fn tau(&self, t: f64) -> f64 {
        ((t - self.t_lo) / (self.t_hi - self.t_lo)).clamp(0.0, 1.0)
    }

    pub fn value(&self, x: [f64; 3], t: f64, dim: usize) -> f64 {
        let tau = self.tau(t);
        let w = 1.0 - tau * tau;
        self.space(x, dim) * w * w * w
    }

    pub fn grad(&self, x: [f64; 3], t: f64, dim: usize) -> [f64; 3] {
        let tau = self.tau(t);
        let w = 1.0 - tau * tau;
        let mut g = self.space_grad(x, dim);
        for v in &mut g {
            *v *= w * w * w;
        }
        g
    }

    pub fn time_deriv(&self, x: [f64; 3], t: f64, dim: usize) -> f64 {
        let tau = self.tau(t);
        if !(0.0..1.0).contains(&tau) {
            return 0.0;
        }
        let w = 1.0 - tau * tau;
        let dw = -6.0 * tau * w * w / (self.t_hi - self.t_lo);
        self.space(x, dim) * dw
    }
}

/// Signed defect of the weak identity
/// `iint u phi_t = -int u0 phi(0) + iint (grad(u^m) + u V) . grad(phi)`
/// over a sampled history, normalized by the magnitude of its terms.
pub fn weak_residual(
    history: &[(f64, ScalarField)],
    drift: &VectorField,
    m: f64,
    bump: &TestBump,
) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::InvalidParameter("weak_residual needs at least two snapshots".into()));
    }
    let grid = history[0].1.grid;
    if grid.mode != GridMode::FullBox {
        return Err(Error::InvalidParameter("weak_residual needs a full-box grid".into()));
    }
    let dim = grid.dim;
    // support must stay strictly inside the box
    let mut reach = 0.0f64;
    for a in 0..dim {
        reach = reach.max(bump.center[a].abs() + bump.radius);
    }
    if reach >= grid.half_extent {
        return Err(Error::OutOfRange(format!(
            "test function support (reach {reach:.3}) touches the boundary (L = {})",
            grid.half_extent
        )));
    }
    let t_end = history.last().unwrap().0;
    if bump.t_hi > t_end + 1e-12 {
        return Err(Error::OutOfRange("test function lives beyond the history".into()));
    }

    let faces = drift.to_faces();
    let vol = grid.cell_volume(0);
    let count = grid.cell_count();
    // cell-centered drift components
    let mut vc = vec![[0.0f64; 3]; count];
    for (i, vci) in vc.iter_mut().enumerate() {
        let c = grid.coords(i);
        for a in 0..grid.axes() {
            let mut hi = c;
            hi[a] += 1;
            vci[a] = 0.5
                * (faces.components[a][grid.face_flat(a, c)]
                    + faces.components[a][grid.face_flat(a, hi)]);
        }
    }

    let mut lhs = 0.0; // iint u phi_t
    let mut rhs_flux = 0.0; // iint (grad u^m + uV) . grad phi
    let mut mag = 0.0;
    for w in history.windows(2) {
        let (t0, ref u0) = w[0];
        let (t1, ref u1) = w[1];
        let dt = t1 - t0;
        for (t, u) in [(t0, u0), (t1, u1)] {
            let mut a_lhs = 0.0;
            let mut a_flux = 0.0;
            let mut a_mag = 0.0;
            let um: Vec<f64> = u.values.iter().map(|&v| ops::pow_m(v, m)).collect();
            for i in 0..count {
                let x = grid.center(i);
                let phi_t = bump.time_deriv(x, t, dim);
                let gphi = bump.grad(x, t, dim);
                if phi_t == 0.0 && gphi[..dim].iter().all(|g| *g == 0.0) {
                    continue;
                }
                let ci = grid.coords(i);
                let mut gum = [0.0f64; 3];
                for a in 0..dim {
                    let stride = grid.stride(a);
                    let up = if ci[a] + 1 < grid.n { um[i + stride] } else { um[i] };
                    let dn = if ci[a] > 0 { um[i - stride] } else { um[i] };
                    let span =
                        if ci[a] + 1 < grid.n && ci[a] > 0 { 2.0 * grid.h } else { grid.h };
                    gum[a] = (up - dn) / span;
                }
                let t_lhs = u.values[i] * phi_t;
                let mut t_flux = 0.0;
                for a in 0..dim {
                    t_flux += (gum[a] + u.values[i] * vc[i][a]) * gphi[a];
                }
                a_lhs += t_lhs;
                a_flux += t_flux;
                a_mag += t_lhs.abs() + t_flux.abs();
            }
            lhs += 0.5 * dt * vol * a_lhs;
            rhs_flux += 0.5 * dt * vol * a_flux;
            mag += 0.5 * dt * vol * a_mag;
        }
    }
    // initial-time boundary term
    let (t0, ref u0) = history[0];
    let mut init = 0.0;
    for (i, &v) in u0.values.iter().enumerate() {
        init += v * bump.value(grid.center(i), t0, dim);
    }
    init *= vol;
    mag += init.abs();

    let defect = lhs + init - rhs_flux;
    Ok(defect / mag.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftSpec;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};

    fn bump_field(grid: Grid, height: f64, width: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| {
            let r2: f64 = (0..grid.dim).map(|a| x[a] * x[a]).sum();
            height * (1.0 - r2 / (width * width)).max(0.0).powi(2)
        })
    }

    #[test]
    fn constant_state_is_stationary_without_drift() {
        let g = Grid::full_box(2, 16, 1.0).unwrap();
        let u = ScalarField::constant(g, 0.7);
        let drift = VectorField::zero(g);
        let state = SolverState::new(u, 2.0, 0.0, drift).unwrap();
        let ctl = StepControl { dt_max: 1e-3, ..Default::default() };
        let next = step(&state, &ctl).unwrap();
        for (a, b) in next.u.values.iter().zip(&state.u.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mass_is_conserved_over_a_thousand_steps() {
        let g = Grid::full_box(1, 64, 1.0).unwrap();
        let u = bump_field(g, 1.0, 0.5);
        let drift = DriftSpec::Custom(std::sync::Arc::new(|x: [f64; 3]| {
            [0.8 * (2.0 * x[0]).sin(), 0.0, 0.0]
        }))
        .sample_on_grid(g)
        .unwrap();
        let mut state = SolverState::new(u, 2.0, 0.0, drift).unwrap();
        let m0 = state.initial_mass;
        let ctl = StepControl::default();
        let mut stepper = Stepper::new(&g);
        for _ in 0..1000 {
            let dt = state.compute_dt(&ctl).unwrap();
            stepper.advance_with_dt(&mut state, &ctl, dt).unwrap();
        }
        let drift_rel = (state.u.mass() - m0).abs() / m0;
        assert!(drift_rel < 1e-9, "mass drift {drift_rel:.3e}");
        assert!(state.u.inf() >= 0.0);
    }

    #[test]
    fn positivity_holds_under_random_drifts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let g = Grid::full_box(2, 24, 1.0).unwrap();
            let (ax, ay, bx, by) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..3.0),
                rng.gen_range(1.0..3.0),
            );
            let drift = DriftSpec::Custom(std::sync::Arc::new(move |x: [f64; 3]| {
                [ax * (bx * x[1]).cos(), ay * (by * x[0]).sin(), 0.0]
            }))
            .sample_on_grid(g)
            .unwrap();
            let mut u = ScalarField::zeros(g);
            for v in &mut u.values {
                *v = rng.gen_range(0.0..1.0);
            }
            let mut state = SolverState::new(u, 1.5, 0.0, drift).unwrap();
            let ctl = StepControl::default();
            let mut stepper = Stepper::new(&g);
            for _ in 0..200 {
                let dt = state.compute_dt(&ctl).unwrap();
                stepper.advance_with_dt(&mut state, &ctl, dt).unwrap();
            }
            assert!(state.u.inf() >= 0.0, "trial {trial}");
        }
    }

    #[test]
    fn ordered_data_stay_ordered() {
        let g = Grid::full_box(1, 80, 1.0).unwrap();
        let lo = bump_field(g, 0.5, 0.4);
        let hi = bump_field(g, 0.8, 0.6);
        let drift = DriftSpec::Custom(std::sync::Arc::new(|x: [f64; 3]| {
            [0.5 * (3.0 * x[0]).sin(), 0.0, 0.0]
        }))
        .sample_on_grid(g)
        .unwrap();
        let sa = SolverState::new(lo, 1.5, 0.0, drift.clone()).unwrap();
        let sb = SolverState::new(hi, 1.5, 0.0, drift).unwrap();
        let ctl = StepControl::default();
        let (ha, hb) = run_pair_shared_dt(sa, sb, &ctl, 500, 100).unwrap();
        let max_u = hb.last().unwrap().1.sup();
        for ((_, ua), (_, ub)) in ha.iter().zip(&hb) {
            for (a, b) in ua.values.iter().zip(&ub.values) {
                assert!(*a <= *b + 1e-8 * max_u, "ordering violated: {a} > {b}");
            }
        }
    }

    #[test]
    fn contraction_probe_trivial_cases() {
        let g = Grid::full_box(1, 32, 1.0).unwrap();
        let u = bump_field(g, 1.0, 0.5);
        let h: Vec<(f64, ScalarField)> = vec![(0.0, u.clone()), (0.1, u.clone())];
        let series = l1_contraction_probe(&h, &h).unwrap();
        assert!(series.non_increasing);
        assert!(series.rows.iter().all(|r| r.1 == 0.0));

        // ordered pair: positive part identically zero
        let lo = bump_field(g, 0.5, 0.5);
        let hlo: Vec<_> = vec![(0.0, lo.clone())];
        let hhi: Vec<_> = vec![(0.0, u.clone())];
        let s2 = l1_contraction_probe(&hlo, &hhi).unwrap();
        assert_eq!(s2.rows[0].1, 0.0);
    }

    #[test]
    fn run_until_identity_at_equal_time() {
        let g = Grid::full_box(1, 16, 1.0).unwrap();
        let u = bump_field(g, 1.0, 0.5);
        let drift = VectorField::zero(g);
        let state = SolverState::new(u, 2.0, 0.0, drift).unwrap();
        let out =
            run_until(state, 0.0, &StepControl::default(), &ObserverConfig::default()).unwrap();
        assert_eq!(out.steps, 0);
        assert!(out.series.rows.is_empty());
    }

    #[test]
    fn weak_residual_vanishes_for_zero_solution() {
        let g = Grid::full_box(1, 32, 1.0).unwrap();
        let z = ScalarField::zeros(g);
        let h = vec![(0.0, z.clone()), (0.5, z.clone()), (1.0, z)];
        let v = VectorField::zero(g);
        let bump = TestBump { center: [0.0; 3], radius: 0.5, t_lo: 0.0, t_hi: 1.0 };
        let r = weak_residual(&h, &v, 2.0, &bump).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn weak_residual_rejects_boundary_touching_support() {
        let g = Grid::full_box(1, 32, 1.0).unwrap();
        let z = ScalarField::zeros(g);
        let h = vec![(0.0, z.clone()), (1.0, z)];
        let v = VectorField::zero(g);
        let bump = TestBump { center: [0.6, 0.0, 0.0], radius: 0.5, t_lo: 0.0, t_hi: 1.0 };
        assert!(weak_residual(&h, &v, 2.0, &bump).is_err());
    }

    #[test]
    fn dt_respects_all_three_bounds() {
        let g = Grid::full_box(1, 32, 1.0).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let drift = VectorField::from_fn_faces(g, |_| [2.0, 0.0, 0.0]);
        let state = SolverState::new(u, 2.0, 0.5, drift).unwrap();
        let ctl = StepControl {
            cfl_diffusion: 0.4,
            cfl_advection: 0.2,
            dt_max: 1e-6,
            ..Default::default()
        };
        let dt = state.compute_dt(&ctl).unwrap();
        assert!((dt - 1e-6).abs() < 1e-18);
        let ctl2 = StepControl { dt_max: f64::INFINITY, ..ctl };
        let dt2 = state.compute_dt(&ctl2).unwrap();
        let h = g.h;
        let expect = (0.4 * h * h / (2.0 * (2.0 + 0.5))).min(0.2 * h / 2.0);
        assert!((dt2 - expect).abs() < 1e-15);
    }
}

//! Meshes, cell/face fields, and the parabolic cylinder geometry.
//!
//! Two mesh modes are supported: a uniform Cartesian box `[-L, L]^d` and a
//! 1-d radial mesh with cell centers at `(i + 1/2) h`, carrying the
//! `r^(d-1)` face-area weight so radial runs conserve d-dimensional mass.
//! Cell data is stored flat in lexicographic index order (last axis fastest).

use crate::{reduce, Error, Result};

/// Surface measure of the unit sphere in `d` dimensions, d = 1, 2, 3.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::TAU,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Full box `[-L, L]^d`.
    FullBox,
    /// Radial profile on `[0, R]`; one storage axis, `d` enters through
    /// face areas and cell volumes.
    Radial,
}

/// Uniform mesh. Cheap to copy; fields keep their own copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub mode: GridMode,
    /// Physical dimension, 1..=3.
    pub dim: usize,
    /// Cells per storage axis.
    pub n: usize,
    /// Half extent L; the box is [-L, L]^d, the radial domain [0, 2L].
    pub half_extent: f64,
    /// Cell spacing, `2 L / n`.
    pub h: f64,
}

impl Grid {
    pub fn full_box(dim: usize, n: usize, half_extent: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("cells_per_axis {n} < 4")));
        }
        if n % 2 != 0 {
            // Origin must sit on a cell corner so singular fields are never
            // sampled at their singularity.
            return Err(Error::InvalidGrid(format!("cells_per_axis {n} must be even")));
        }
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::InvalidGrid(format!("half extent {half_extent} must be positive")));
        }
        let h = 2.0 * half_extent / n as f64;
        Ok(Grid { mode: GridMode::FullBox, dim, n, half_extent, h })
    }

    /// Radial mesh over `[0, radius]` with `n` shells.
    pub fn radial(dim: usize, n: usize, radius: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("cells_per_axis {n} < 4")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGrid(format!("radius {radius} must be positive")));
        }
        let half_extent = radius / 2.0;
        let h = radius / n as f64;
        Ok(Grid { mode: GridMode::Radial, dim, n, half_extent, h })
    }

    /// Number of storage axes (1 for radial meshes).
    pub fn axes(&self) -> usize {
        match self.mode {
            GridMode::FullBox => self.dim,
            GridMode::Radial => 1,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.axes() as u32)
    }

    /// Stride of `axis` in the flat lexicographic layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.axes() - 1 - axis) as u32)
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rest = flat;
        for a in 0..self.axes() {
            let s = self.stride(a);
            c[a] = rest / s;
            rest %= s;
        }
        c
    }

    pub fn flat(&self, coords: [usize; 3]) -> usize {
        let mut idx = 0;
        for a in 0..self.axes() {
            idx += coords[a] * self.stride(a);
        }
        idx
    }

    /// Coordinate of a cell center along one axis.
    pub fn axis_center(&self, i: usize) -> f64 {
        match self.mode {
            GridMode::FullBox => -self.half_extent + (i as f64 + 0.5) * self.h,
            GridMode::Radial => (i as f64 + 0.5) * self.h,
        }
    }

    /// Cell center position. Unused components are zero.
    pub fn center(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let mut x = [0.0; 3];
        for a in 0..self.axes() {
            x[a] = self.axis_center(c[a]);
        }
        x
    }

    pub fn cell_volume(&self, flat: usize) -> f64 {
        match self.mode {
            GridMode::FullBox => self.h.powi(self.dim as i32),
            GridMode::Radial => {
                let i = flat;
                let d = self.dim as i32;
                let r0 = i as f64 * self.h;
                let r1 = (i + 1) as f64 * self.h;
                sphere_area(self.dim) * (r1.powi(d) - r0.powi(d)) / self.dim as f64
            }
        }
    }

    /// Area of the face at radius `r` (radial mode); full-box faces have
    /// area `h^(d-1)`.
    pub fn face_area(&self, axis: usize, face_coord: usize) -> f64 {
        match self.mode {
            GridMode::FullBox => self.h.powi(self.dim as i32 - 1),
            GridMode::Radial => {
                debug_assert_eq!(axis, 0);
                let r = face_coord as f64 * self.h;
                sphere_area(self.dim) * r.powi(self.dim as i32 - 1)
            }
        }
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.cell_count()).map(|i| self.cell_volume(i)).collect()
    }

    /// Number of faces normal to `axis`.
    pub fn face_count(&self, axis: usize) -> usize {
        face_len(self, axis)
    }

    /// Flat index of the face normal to `axis` with face coordinates
    /// `coords` (where `coords[axis]` runs 0..=n).
    pub fn face_flat(&self, axis: usize, coords: [usize; 3]) -> usize {
        let mut idx = 0;
        for a in 0..self.axes() {
            let size = if a == axis { self.n + 1 } else { self.n };
            idx = idx * size + coords[a];
        }
        idx
    }
}

/// Cell-centered scalar values on a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.cell_count()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.cell_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.cell_count()).map(|i| f(grid.center(i))).collect();
        ScalarField { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Volume-weighted total (the d-dimensional mass).
    pub fn mass(&self) -> f64 {
        match self.grid.mode {
            GridMode::FullBox => {
                reduce::pairwise_sum(&self.values) * self.grid.cell_volume(0)
            }
            GridMode::Radial => {
                let vols = self.grid.volumes();
                reduce::pairwise_dot(&self.values, &vols)
            }
        }
    }

    pub fn sup(&self) -> f64 {
        reduce::max(&self.values)
    }

    pub fn inf(&self) -> f64 {
        reduce::min(&self.values)
    }

    /// Reject non-finite entries, naming the first offending cell.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                let c = self.grid.center(i);
                return Err(Error::NonFinite {
                    what,
                    cell: format!("({:.6}, {:.6}, {:.6})", c[0], c[1], c[2]),
                    index: i,
                });
            }
        }
        Ok(())
    }

    /// Multilinear interpolation at a point (clamped to the cell-center hull).
    pub fn interpolate(&self, x: [f64; 3]) -> f64 {
        let g = &self.grid;
        let axes = g.axes();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..axes {
            let t = match g.mode {
                GridMode::FullBox => (x[a] + g.half_extent) / g.h - 0.5,
                GridMode::Radial => x[a] / g.h - 0.5,
            };
            let t = t.clamp(0.0, (g.n - 1) as f64);
            let i0 = (t.floor() as usize).min(g.n - 2);
            base[a] = i0;
            frac[a] = t - i0 as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << axes) {
            let mut c = base;
            let mut w = 1.0;
            for a in 0..axes {
                if corner & (1 << a) != 0 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * self.values[g.flat(c)];
        }
        acc
    }
}

/// Storage layout for vector data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorLayout {
    /// One normal component per face (flux form).
    Faces,
    /// All components sampled at cell centers.
    Cells,
}

/// Vector field with `d` components, stored on faces or cells.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Grid,
    pub layout: VectorLayout,
    /// One array per axis. Faces: component normal to that axis on each
    /// face. Cells: that component at each cell center.
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zero(grid: Grid) -> Self {
        let axes = grid.axes();
        let components = (0..axes)
            .map(|a| vec![0.0; face_len(&grid, a)])
            .collect();
        VectorField { grid, layout: VectorLayout::Faces, components }
    }

    /// Sample an analytic field at face centers (normal component only).
    pub fn from_fn_faces(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let axes = grid.axes();
        let mut components = Vec::with_capacity(axes);
        for a in 0..axes {
            let mut comp = vec![0.0; face_len(&grid, a)];
            for_each_face(&grid, a, |idx, pos| {
                comp[idx] = f(pos)[a];
            });
            components.push(comp);
        }
        VectorField { grid, layout: VectorLayout::Faces, components }
    }

    /// Sample an analytic field at cell centers (all components).
    pub fn from_fn_cells(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let axes = grid.axes();
        let count = grid.cell_count();
        let mut components = vec![vec![0.0; count]; axes];
        for i in 0..count {
            let v = f(grid.center(i));
            for (a, comp) in components.iter_mut().enumerate() {
                comp[i] = v[a];
            }
        }
        VectorField { grid, layout: VectorLayout::Cells, components }
    }

    /// Convert to flux form by averaging adjacent cell values onto interior
    /// faces; boundary faces copy the single adjacent cell.
    pub fn to_faces(&self) -> VectorField {
        match self.layout {
            VectorLayout::Faces => self.clone(),
            VectorLayout::Cells => {
                let g = self.grid;
                let axes = g.axes();
                let mut components = Vec::with_capacity(axes);
                for a in 0..axes {
                    let cells = &self.components[a];
                    let mut comp = vec![0.0; face_len(&g, a)];
                    for_each_face_cells(&g, a, |fidx, lo, hi| {
                        comp[fidx] = match (lo, hi) {
                            (Some(l), Some(r)) => 0.5 * (cells[l] + cells[r]),
                            (Some(l), None) => cells[l],
                            (None, Some(r)) => cells[r],
                            (None, None) => 0.0,
                        };
                    });
                    components.push(comp);
                }
                VectorField { grid: g, layout: VectorLayout::Faces, components }
            }
        }
    }

    /// Euclidean magnitude at each cell center (face values averaged back).
    pub fn cell_magnitudes(&self) -> Vec<f64> {
        let g = self.grid;
        let count = g.cell_count();
        let axes = g.axes();
        let mut mags = vec![0.0; count];
        match self.layout {
            VectorLayout::Cells => {
                for (i, m) in mags.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for comp in &self.components {
                        s += comp[i] * comp[i];
                    }
                    *m = s.sqrt();
                }
            }
            VectorLayout::Faces => {
                for i in 0..count {
                    let c = g.coords(i);
                    let mut s = 0.0;
                    for a in 0..axes {
                        let mut hi = c;
                        hi[a] += 1;
                        let v = 0.5
                            * (self.components[a][g.face_flat(a, c)]
                                + self.components[a][g.face_flat(a, hi)]);
                        s += v * v;
                    }
                    mags[i] = s.sqrt();
                }
            }
        }
        mags
    }

    /// Largest absolute normal component over all faces (flux form) or the
    /// largest cell magnitude (cell form).
    pub fn max_abs(&self) -> f64 {
        match self.layout {
            VectorLayout::Faces => self
                .components
                .iter()
                .map(|c| reduce::max_abs(c))
                .fold(0.0, f64::max),
            VectorLayout::Cells => reduce::max(&self.cell_magnitudes()),
        }
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        for comp in &self.components {
            for (i, &v) in comp.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { what, cell: format!("face/cell {i}"), index: i });
                }
            }
        }
        Ok(())
    }

    /// Scale every component by `c`.
    pub fn scaled(&self, c: f64) -> VectorField {
        let components = self
            .components
            .iter()
            .map(|comp| comp.iter().map(|v| c * v).collect())
            .collect();
        VectorField { grid: self.grid, layout: self.layout, components }
    }
}

pub(crate) fn face_len(grid: &Grid, axis: usize) -> usize {
    let axes = grid.axes();
    let mut len = 1;
    for a in 0..axes {
        len *= if a == axis { grid.n + 1 } else { grid.n };
    }
    len
}

/// Visit every face normal to `axis`: `(flat_face_index, face_center_position)`.
pub(crate) fn for_each_face(grid: &Grid, axis: usize, mut f: impl FnMut(usize, [f64; 3])) {
    let axes = grid.axes();
    let mut coords = [0usize; 3];
    let sizes: Vec<usize> = (0..axes).map(|a| if a == axis { grid.n + 1 } else { grid.n }).collect();
    let total: usize = sizes.iter().product();
    for idx in 0..total {
        let mut rest = idx;
        for a in (0..axes).rev() {
            coords[a] = rest % sizes[a];
            rest /= sizes[a];
        }
        let mut pos = [0.0; 3];
        for a in 0..axes {
            pos[a] = if a == axis {
                match grid.mode {
                    GridMode::FullBox => -grid.half_extent + coords[a] as f64 * grid.h,
                    GridMode::Radial => coords[a] as f64 * grid.h,
                }
            } else {
                grid.axis_center(coords[a])
            };
        }
        f(idx, pos);
    }
}

/// Visit every face normal to `axis`: `(face_index, lower_cell, upper_cell)`
/// where boundary faces have one side `None`.
pub(crate) fn for_each_face_cells(
    grid: &Grid,
    axis: usize,
    mut f: impl FnMut(usize, Option<usize>, Option<usize>),
) {
    let axes = grid.axes();
    let mut coords = [0usize; 3];
    let sizes: Vec<usize> = (0..axes).map(|a| if a == axis { grid.n + 1 } else { grid.n }).collect();
    let total: usize = sizes.iter().product();
    for idx in 0..total {
        let mut rest = idx;
        for a in (0..axes).rev() {
            coords[a] = rest % sizes[a];
            rest /= sizes[a];
        }
        let fc = coords[axis];
        let lo = if fc > 0 {
            let mut c = coords;
            c[axis] = fc - 1;
            Some(grid.flat(c))
        } else {
            None
        };
        let hi = if fc < grid.n {
            let mut c = coords;
            c[axis] = fc;
            Some(grid.flat(c))
        } else {
            None
        };
        f(idx, lo, hi);
    }
}

/// Backward parabolic cylinder `{|x - x0| < r} x (t0 - c r^2, t0]`.
#[derive(Debug, Clone, Copy)]
pub struct ParabolicCylinder {
    pub center: [f64; 3],
    pub t0: f64,
    pub radius: f64,
    pub depth: f64,
}

impl ParabolicCylinder {
    pub fn new(center: [f64; 3], t0: f64, radius: f64, depth: f64) -> Result<Self> {
        if !(radius > 0.0) || !(depth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "parabolic cylinder needs radius > 0 and depth > 0, got r={radius}, c={depth}"
            )));
        }
        Ok(ParabolicCylinder { center, t0, radius, depth })
    }

    pub fn t_lo(&self) -> f64 {
        self.t0 - self.depth * self.radius * self.radius
    }

    pub fn contains_space(&self, x: [f64; 3], dim: usize) -> bool {
        let mut s = 0.0;
        for a in 0..dim {
            let d = x[a] - self.center[a];
            s += d * d;
        }
        s < self.radius * self.radius
    }

    pub fn contains(&self, x: [f64; 3], t: f64, dim: usize) -> bool {
        t > self.t_lo() && t <= self.t0 && self.contains_space(x, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::full_box(0, 8, 1.0).is_err());
        assert!(Grid::full_box(2, 3, 1.0).is_err());
        assert!(Grid::full_box(2, 7, 1.0).is_err());
        assert!(Grid::full_box(2, 8, -1.0).is_err());
        assert!(Grid::radial(2, 4, 0.0).is_err());
    }

    #[test]
    fn full_box_centers_and_volumes() {
        let g = Grid::full_box(2, 4, 1.0).unwrap();
        assert_eq!(g.cell_count(), 16);
        assert!((g.h - 0.5).abs() < 1e-15);
        let c = g.center(0);
        assert!((c[0] + 0.75).abs() < 1e-15);
        assert!((c[1] + 0.75).abs() < 1e-15);
        assert!((g.cell_volume(0) - 0.25).abs() < 1e-15);
        // Lexicographic order: second cell moves along the last axis.
        let c1 = g.center(1);
        assert!((c1[0] + 0.75).abs() < 1e-15);
        assert!((c1[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn radial_volumes_sum_to_ball() {
        // Shell volumes must add up to the volume of the full ball.
        for dim in 1..=3 {
            let g = Grid::radial(dim, 50, 2.0).unwrap();
            let total: f64 = (0..50).map(|i| g.cell_volume(i)).sum();
            let exact = sphere_area(dim) * 2.0f64.powi(dim as i32) / dim as f64;
            assert!(
                (total - exact).abs() < 1e-12 * exact,
                "dim {dim}: {total} vs {exact}"
            );
        }
    }

    #[test]
    fn mass_of_unit_density_is_domain_volume() {
        let g = Grid::full_box(3, 4, 1.5).unwrap();
        let u = ScalarField::constant(g, 1.0);
        assert!((u.mass() - 27.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = Grid::full_box(2, 16, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| 2.0 * x[0] - 3.0 * x[1] + 0.5);
        let v = u.interpolate([0.1, -0.2, 0.0]);
        assert!((v - (0.2 + 0.6 + 0.5)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn check_finite_names_first_bad_cell() {
        let g = Grid::full_box(1, 8, 1.0).unwrap();
        let mut u = ScalarField::zeros(g);
        u.values[3] = f64::NAN;
        let err = u.check_finite("density").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("density"), "{msg}");
        assert!(msg.contains("index 3"), "{msg}");
    }

    #[test]
    fn face_averaging_round_trip_on_constant_field() {
        let g = Grid::full_box(2, 8, 1.0).unwrap();
        let v = VectorField::from_fn_cells(g, |_| [1.0, -2.0, 0.0]);
        let f = v.to_faces();
        let mags = f.cell_magnitudes();
        for m in mags {
            assert!((m - 5.0f64.sqrt()).abs() < 1e-12);
        }
    }
}

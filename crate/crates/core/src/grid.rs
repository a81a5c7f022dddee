//! Phase-space discretization: a periodic spatial grid in one to three
//! dimensions times a truncated uniform velocity cube, plus the interpolation
//! stencils used to follow characteristics `x - v t`.
//!
//! Layout of a phase-space array is row-major with the spatial axes outer and
//! the three velocity axes inner: `index = cell * nv³ + (i0 * nv + i1) * nv + i2`.

use crate::error::{EsbgkError, Result};
use crate::linalg::Vec3;
use crate::par;

pub const DEFAULT_V_MAX: f64 = 8.0;

/// Where the velocity nodes sit inside `[-V_max, V_max]`.
///
/// Both placements use `v_j = (j - (N_v - 1)/2) Δv` with `Δv = 2 V_max / N_v`;
/// cell-centered needs an even count (no node at zero), node-centered an odd
/// one (a node at zero).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VelocityPlacement {
    #[default]
    CellCentered,
    NodeCentered,
}

impl VelocityPlacement {
    pub fn for_count(nv: usize) -> Self {
        if nv.is_multiple_of(2) {
            VelocityPlacement::CellCentered
        } else {
            VelocityPlacement::NodeCentered
        }
    }
}

/// User-facing grid parameters, validated by [`build_grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub spatial_dims: usize,
    pub extent: Vec<f64>,
    pub counts: Vec<usize>,
    pub v_max: f64,
    pub nv: usize,
    pub placement: VelocityPlacement,
}

impl GridSpec {
    pub fn one_d(length: f64, nx: usize, v_max: f64, nv: usize) -> Self {
        GridSpec {
            spatial_dims: 1,
            extent: vec![length],
            counts: vec![nx],
            v_max,
            nv,
            placement: VelocityPlacement::for_count(nv),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    dims: usize,
    extent: [f64; 3],
    counts: [usize; 3],
    dx: [f64; 3],
    v_max: f64,
    nv: usize,
    dv: f64,
    placement: VelocityPlacement,
    nodes: Vec<f64>,
    velocities: Vec<Vec3>,
    n_cells: usize,
    n_vel: usize,
}

pub fn build_grid(spec: &GridSpec) -> Result<PhaseGrid> {
    let dims = spec.spatial_dims;
    if !(1..=3).contains(&dims) {
        return Err(EsbgkError::config(
            "grid.spatial_dims",
            format!("must be 1, 2 or 3, got {dims}"),
        ));
    }
    if spec.extent.len() != dims {
        return Err(EsbgkError::config(
            "grid.extent",
            format!("expected {dims} entries, got {}", spec.extent.len()),
        ));
    }
    if spec.counts.len() != dims {
        return Err(EsbgkError::config(
            "grid.counts",
            format!("expected {dims} entries, got {}", spec.counts.len()),
        ));
    }
    let mut extent = [1.0; 3];
    let mut counts = [1usize; 3];
    let mut dx = [1.0; 3];
    for a in 0..dims {
        let l = spec.extent[a];
        if !(l.is_finite() && l > 0.0) {
            return Err(EsbgkError::config(
                format!("grid.extent[{a}]"),
                format!("period must be positive and finite, got {l}"),
            ));
        }
        if spec.counts[a] < 4 {
            return Err(EsbgkError::config(
                format!("grid.counts[{a}]"),
                format!("need at least 4 cells, got {}", spec.counts[a]),
            ));
        }
        extent[a] = l;
        counts[a] = spec.counts[a];
        dx[a] = l / counts[a] as f64;
    }
    if !(spec.v_max.is_finite() && spec.v_max > 0.0) {
        return Err(EsbgkError::config(
            "grid.v_max",
            format!("must be positive and finite, got {}", spec.v_max),
        ));
    }
    let nv = spec.nv;
    match spec.placement {
        VelocityPlacement::CellCentered if !nv.is_multiple_of(2) => {
            return Err(EsbgkError::config(
                "grid.nv",
                format!("cell-centered placement needs an even count for v -> -v symmetry, got {nv}"),
            ))
        }
        VelocityPlacement::NodeCentered if nv.is_multiple_of(2) => {
            return Err(EsbgkError::config(
                "grid.nv",
                format!("node-centered placement needs an odd count, got {nv}"),
            ))
        }
        _ => {}
    }
    if nv < 8 {
        return Err(EsbgkError::config(
            "grid.nv",
            format!("need at least 8 velocity nodes per axis, got {nv}"),
        ));
    }
    let n_cells = counts
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .ok_or_else(|| EsbgkError::config("grid.counts", "cell count overflows"))?;
    let n_vel = nv
        .checked_mul(nv)
        .and_then(|x| x.checked_mul(nv))
        .ok_or_else(|| EsbgkError::config("grid.nv", "velocity node count overflows"))?;
    n_cells
        .checked_mul(n_vel)
        .filter(|&n| n <= isize::MAX as usize / std::mem::size_of::<f64>())
        .ok_or_else(|| EsbgkError::config("grid", "phase point count overflows"))?;

    let dv = 2.0 * spec.v_max / nv as f64;
    let centre = (nv as f64 - 1.0) / 2.0;
    let nodes: Vec<f64> = (0..nv).map(|j| (j as f64 - centre) * dv).collect();
    let velocities = (0..n_vel)
        .map(|k| [nodes[k / (nv * nv)], nodes[(k / nv) % nv], nodes[k % nv]])
        .collect();
    Ok(PhaseGrid {
        dims,
        extent,
        counts,
        dx,
        v_max: spec.v_max,
        nv,
        dv,
        placement: spec.placement,
        nodes,
        velocities,
        n_cells,
        n_vel,
    })
}

impl PhaseGrid {
    pub fn spatial_dims(&self) -> usize {
        self.dims
    }
    /// Periods of the active axes.
    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dims]
    }
    /// Cell counts of the active axes.
    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dims]
    }
    pub fn dx(&self) -> &[f64] {
        &self.dx[..self.dims]
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }
    pub fn placement(&self) -> VelocityPlacement {
        self.placement
    }
    /// One-dimensional velocity node coordinates.
    pub fn velocity_nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    /// Number of velocity nodes, `nv³`.
    pub fn n_vel(&self) -> usize {
        self.n_vel
    }
    pub fn len(&self) -> usize {
        self.n_cells * self.n_vel
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Velocity quadrature weight `Δv³`.
    pub fn dv3(&self) -> f64 {
        self.dv * self.dv * self.dv
    }
    /// Spatial quadrature weight `Π Δx_i`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().iter().product()
    }
    /// Total spatial volume `Π L_i`.
    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    #[inline]
    pub fn velocity(&self, k: usize) -> Vec3 {
        self.velocities[k]
    }

    /// All velocity nodes in layout order.
    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    #[inline]
    pub fn velocity_index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.nv + i[1]) * self.nv + i[2]
    }

    /// Per-axis node indices of velocity node `k`.
    #[inline]
    pub fn velocity_multi_index(&self, k: usize) -> [usize; 3] {
        let nv = self.nv;
        [k / (nv * nv), (k / nv) % nv, k % nv]
    }

    /// Index of the node `-v`.
    pub fn mirror_velocity(&self, k: usize) -> usize {
        let m = self.nv - 1;
        let [a, b, c] = self.velocity_multi_index(k);
        self.velocity_index([m - a, m - b, m - c])
    }

    /// Row-major cell multi-index (inactive axes are 0).
    pub fn cell_multi_index(&self, cell: usize) -> [usize; 3] {
        let mut rest = cell;
        let mut idx = [0usize; 3];
        for a in (0..self.dims).rev() {
            idx[a] = rest % self.counts[a];
            rest /= self.counts[a];
        }
        idx
    }

    pub fn cell_index(&self, idx: [usize; 3]) -> usize {
        (0..self.dims).fold(0, |acc, a| acc * self.counts[a] + idx[a])
    }

    /// Row-major stride of spatial axis `a` in units of cells.
    pub fn cell_stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..self.dims].iter().product()
    }

    /// Grid-node position `x_i = j_i Δx_i` of a cell.
    pub fn cell_position(&self, cell: usize) -> Vec3 {
        let idx = self.cell_multi_index(cell);
        let mut x = [0.0; 3];
        for a in 0..self.dims {
            x[a] = idx[a] as f64 * self.dx[a];
        }
        x
    }

    pub fn same_shape(&self, other: &PhaseGrid) -> bool {
        self == other
    }
}

/// Interpolation order of the characteristic shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InterpOrder {
    /// Two-point linear; convex weights, positivity preserving.
    #[default]
    Linear,
    /// Four-point Lagrange; weights sum to one but may be negative.
    Cubic,
}

impl InterpOrder {
    pub fn from_order(order: u32) -> Option<Self> {
        match order {
            1 => Some(InterpOrder::Linear),
            3 => Some(InterpOrder::Cubic),
            _ => None,
        }
    }
    pub fn order(self) -> u32 {
        match self {
            InterpOrder::Linear => 1,
            InterpOrder::Cubic => 3,
        }
    }
}

/// One-dimensional periodic shift: `out[j] = Σ w_k in[j + offset_k]`.
///
/// The first tap is the base point; [`AxisStencil::apply`] evaluates
/// `in[base] + Σ_{k>0} w_k (in[k] - in[base])`, which is exact on constant
/// data.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisStencil {
    pub offsets: Vec<isize>,
    pub weights: Vec<f64>,
}

impl AxisStencil {
    /// Stencil realizing `out(x) = in(x - s Δx)` for a shift of `s` cells.
    pub fn for_shift(shift_cells: f64, order: InterpOrder) -> AxisStencil {
        let mut n = shift_cells.floor();
        let mut f = shift_cells - n;
        // snap shifts that are integers up to rounding
        let tol = 1e-12 * shift_cells.abs().max(1.0);
        if f < tol {
            f = 0.0;
        } else if 1.0 - f < tol {
            f = 0.0;
            n += 1.0;
        }
        let base = -(n as isize);
        if f == 0.0 {
            return AxisStencil {
                offsets: vec![base],
                weights: vec![1.0],
            };
        }
        match order {
            InterpOrder::Linear => AxisStencil {
                offsets: vec![base, base - 1],
                weights: vec![1.0 - f, f],
            },
            InterpOrder::Cubic => {
                // source points at base + p, evaluation at base - f
                let pts = [0.0, 1.0, -1.0, -2.0];
                let x = -f;
                let weights = pts
                    .iter()
                    .enumerate()
                    .map(|(k, &pk)| {
                        pts.iter()
                            .enumerate()
                            .filter(|&(m, _)| m != k)
                            .map(|(_, &pm)| (x - pm) / (pk - pm))
                            .product()
                    })
                    .collect();
                AxisStencil {
                    offsets: pts.iter().map(|&p| base + p as isize).collect(),
                    weights,
                }
            }
        }
    }

    pub fn is_pure_shift(&self) -> bool {
        self.offsets.len() == 1
    }

    pub fn is_convex(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0.0)
    }

    #[inline]
    pub fn apply(&self, get: impl Fn(isize) -> f64) -> f64 {
        let base = get(self.offsets[0]);
        let mut acc = base;
        for (&o, &w) in self.offsets[1..].iter().zip(&self.weights[1..]) {
            acc += w * (get(o) - base);
        }
        acc
    }

    /// Applies the stencil to a periodic 1-D array.
    pub fn apply_periodic(&self, data: &[f64]) -> Vec<f64> {
        let n = data.len() as isize;
        (0..n)
            .map(|j| self.apply(|o| data[(j + o).rem_euclid(n) as usize]))
            .collect()
    }
}

/// Per-axis stencils for one velocity node.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftStencil {
    pub axes: Vec<AxisStencil>,
    /// `false` when some weight is negative (cubic order).
    pub positivity_preserving: bool,
}

/// Stencil that moves a field by `v dt` along every active spatial axis.
pub fn shift_stencil(v: Vec3, dt: f64, grid: &PhaseGrid, order: InterpOrder) -> Result<ShiftStencil> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(EsbgkError::param("dt", format!("must be finite and >= 0, got {dt}")));
    }
    let axes: Vec<AxisStencil> = (0..grid.spatial_dims())
        .map(|a| AxisStencil::for_shift(v[a] * dt / grid.dx()[a], order))
        .collect();
    let positivity_preserving = axes.iter().all(AxisStencil::is_convex);
    Ok(ShiftStencil {
        axes,
        positivity_preserving,
    })
}

/// `Δv³ Σ_k integrand[k]` with the deterministic block reduction.
pub fn velocity_quadrature(grid: &PhaseGrid, integrand: &[f64]) -> Result<f64> {
    if integrand.len() != grid.n_vel() {
        return Err(EsbgkError::GridMismatch(format!(
            "integrand has {} entries, grid has {} velocity nodes",
            integrand.len(),
            grid.n_vel()
        )));
    }
    if let Some((index, &value)) = integrand.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(EsbgkError::NonFinite { index, value });
    }
    Ok(grid.dv3() * par::det_sum(integrand))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid_1d() -> PhaseGrid {
        build_grid(&GridSpec::one_d(2.0 * PI, 64, 6.0, 32)).unwrap()
    }

    #[test]
    fn phase_point_counts() {
        assert_eq!(grid_1d().len(), 2_097_152);
        let g = build_grid(&GridSpec {
            spatial_dims: 3,
            extent: vec![1.0; 3],
            counts: vec![8; 3],
            v_max: 8.0,
            nv: 16,
            placement: VelocityPlacement::CellCentered,
        })
        .unwrap();
        assert_eq!(g.n_cells(), 512);
        assert_eq!(g.len(), 512 * 4096);
        assert_eq!(g.cell_volume(), 1.0 / 512.0);
    }

    #[test]
    fn odd_count_rejected_in_cell_centered_mode() {
        let mut spec = GridSpec::one_d(1.0, 8, 6.0, 7);
        spec.placement = VelocityPlacement::CellCentered;
        match build_grid(&spec) {
            Err(EsbgkError::Config { field, .. }) => assert_eq!(field, "grid.nv"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut spec = GridSpec::one_d(-1.0, 8, 6.0, 16);
        assert!(matches!(build_grid(&spec), Err(EsbgkError::Config { field, .. }) if field == "grid.extent[0]"));
        spec.extent = vec![1.0];
        spec.counts = vec![3];
        assert!(matches!(build_grid(&spec), Err(EsbgkError::Config { field, .. }) if field == "grid.counts[0]"));
        spec.counts = vec![8];
        spec.v_max = 0.0;
        assert!(matches!(build_grid(&spec), Err(EsbgkError::Config { field, .. }) if field == "grid.v_max"));
        spec.v_max = 6.0;
        spec.spatial_dims = 4;
        assert!(matches!(build_grid(&spec), Err(EsbgkError::Config { field, .. }) if field == "grid.spatial_dims"));
    }

    #[test]
    fn node_centered_has_zero_node_and_symmetry() {
        let mut spec = GridSpec::one_d(1.0, 8, 6.0, 17);
        spec.placement = VelocityPlacement::NodeCentered;
        let g = build_grid(&spec).unwrap();
        assert_eq!(g.velocity_nodes()[8], 0.0);
        for k in 0..g.n_vel() {
            let v = g.velocity(k);
            let w = g.velocity(g.mirror_velocity(k));
            for a in 0..3 {
                assert_eq!(v[a], -w[a]);
            }
        }
    }

    #[test]
    fn cell_index_round_trip() {
        let g = build_grid(&GridSpec {
            spatial_dims: 3,
            extent: vec![1.0, 2.0, 3.0],
            counts: vec![4, 5, 6],
            v_max: 6.0,
            nv: 8,
            placement: VelocityPlacement::CellCentered,
        })
        .unwrap();
        for c in 0..g.n_cells() {
            assert_eq!(g.cell_index(g.cell_multi_index(c)), c);
        }
        assert_eq!(g.cell_stride(0), 30);
        assert_eq!(g.cell_stride(2), 1);
    }

    #[test]
    fn integer_shift_is_pure_index_shift() {
        let g = grid_1d();
        let dt = 3.0 * g.dx()[0];
        let st = shift_stencil([1.0, 0.0, 0.0], dt, &g, InterpOrder::Linear).unwrap();
        assert!(st.axes[0].is_pure_shift());
        assert_eq!(st.axes[0].offsets, vec![-3]);
        assert_eq!(st.axes[0].weights, vec![1.0]);
    }

    #[test]
    fn half_and_quarter_cell_weights() {
        let half = AxisStencil::for_shift(0.5, InterpOrder::Linear);
        assert_eq!(half.weights, vec![0.5, 0.5]);
        let quarter = AxisStencil::for_shift(0.25, InterpOrder::Linear);
        assert_eq!(quarter.offsets, vec![0, -1]);
        assert_eq!(quarter.weights, vec![0.75, 0.25]);
        let neg = AxisStencil::for_shift(-0.25, InterpOrder::Linear);
        assert_eq!(neg.offsets, vec![1, 0]);
        assert_eq!(neg.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn cubic_weights_sum_to_one_and_can_be_negative() {
        let st = AxisStencil::for_shift(0.3, InterpOrder::Cubic);
        let s: f64 = st.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(!st.is_convex());
        // reproduces cubics exactly
        let n = 32;
        let data: Vec<f64> = (0..n).map(|j| (j as f64).powi(3)).collect();
        let out = st.apply_periodic(&data);
        for j in 4..n - 4 {
            let x = j as f64 - 0.3;
            assert!((out[j] - x.powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_dt_rejected() {
        let g = grid_1d();
        assert!(shift_stencil([1.0; 3], -1.0, &g, InterpOrder::Linear).is_err());
    }

    #[test]
    fn quadrature_rejects_non_finite() {
        let g = build_grid(&GridSpec::one_d(1.0, 4, 6.0, 8)).unwrap();
        let mut f = vec![0.0; g.n_vel()];
        assert_eq!(velocity_quadrature(&g, &f).unwrap(), 0.0);
        f[17] = f64::NAN;
        assert!(matches!(velocity_quadrature(&g, &f), Err(EsbgkError::NonFinite { index: 17, .. })));
    }
}

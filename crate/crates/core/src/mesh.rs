//! Uniform rectangular grids with homogeneous Neumann boundaries, nodal fields,
//! space-time trajectories, the mirrored-ghost Laplacian and trapezoidal norms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridSpec {
    extents: Vec<f64>,
    nodes: Vec<usize>,
}

/// Node-centred uniform grid on `[0, L_1] × … × [0, L_d]`.
///
/// Nodes sit on the boundary, so `h_a = L_a / (n_a - 1)`. Flat node indices are
/// row-major: the first axis varies slowest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    extents: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    weights: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.extents == other.extents && self.nodes == other.nodes
    }
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(&spec.extents, &spec.nodes)
    }
}

impl From<Grid> for GridSpec {
    fn from(grid: Grid) -> Self {
        GridSpec { extents: grid.extents, nodes: grid.nodes }
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

impl Grid {
    pub fn new(extents: &[f64], nodes: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if nodes.len() != dim {
            return Err(Error::InvalidGrid(format!("{} extents but {} node counts", dim, nodes.len())));
        }
        if let Some(&n) = nodes.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes per axis, got {n}")));
        }
        if let Some(&l) = extents.iter().find(|&&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidGrid(format!("extent must be positive and finite, got {l}")));
        }
        let spacing: Vec<f64> = extents.iter().zip(nodes).map(|(&l, &n)| l / (n - 1) as f64).collect();

        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * nodes[a + 1];
        }

        let total: usize = nodes.iter().product();
        let axis_weights: Vec<Vec<f64>> = nodes.iter().zip(&spacing).map(|(&n, &h)| trapezoid_weights(n, h)).collect();
        let weights =
            (0..total).map(|idx| (0..dim).map(|a| axis_weights[a][(idx / strides[a]) % nodes[a]]).product()).collect();

        Ok(Self { extents: extents.to_vec(), nodes: nodes.to_vec(), spacing, strides, weights })
    }

    /// Unit interval with `n` nodes.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::new(&[1.0], &[n])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Trapezoidal quadrature weights, one per node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// |Ω|
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.nodes[axis]
    }

    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        (0..self.dim()).map(|a| self.axis_index(idx, a) as f64 * self.spacing[a]).collect()
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }
}

/// Nodal values of a scalar function at one time level.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Field {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field construction".into()));
        }
        Ok(Self { grid: Arc::clone(grid), values })
    }

    /// Internal constructor for values already known to be finite and sized.
    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: Arc::clone(grid), values }
    }

    pub(crate) fn checked(grid: &Arc<Grid>, values: Vec<f64>, what: &str) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(Self::from_raw(grid, values))
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.coordinates(i))).collect();
        Self::checked(grid, values, "field initializer")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scale(&self, alpha: f64) -> Field {
        Field::from_raw(&self.grid, self.values.iter().map(|v| alpha * v).collect())
    }

    /// `alpha * self + beta * other`
    pub fn lincomb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.ensure_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
        Field::checked(&self.grid, values, "field combination")
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn laplacian(&self) -> Field {
        laplacian_neumann(self)
    }
}

/// Space-time samples `frames[k] ≈ v(·, k·dt)`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Arc<Grid>,
    dt: f64,
    frames: Vec<Field>,
}

impl Trajectory {
    pub fn new(grid: &Arc<Grid>, dt: f64, frames: Vec<Field>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        if frames.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "trajectory needs at least 2 frames (steps >= 1), got {}",
                frames.len()
            )));
        }
        if frames.iter().any(|f| !same_grid(f.grid(), grid)) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: Arc::clone(grid), dt, frames })
    }

    pub fn zeros(grid: &Arc<Grid>, dt: f64, steps: usize) -> Result<Self> {
        Self::constant_in_time(&Field::zeros(grid), dt, steps)
    }

    pub fn constant_in_time(field: &Field, dt: f64, steps: usize) -> Result<Self> {
        Self::new(field.grid(), dt, vec![field.clone(); steps + 1])
    }

    pub fn from_fn(grid: &Arc<Grid>, dt: f64, steps: usize, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let frames = (0..=steps)
            .map(|k| {
                let t = k as f64 * dt;
                Field::from_fn(grid, |x| f(x, t))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, dt, frames)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Field {
        &self.frames[k]
    }

    pub fn last(&self) -> &Field {
        self.frames.last().expect("trajectory has frames")
    }

    pub fn into_frames(self) -> Vec<Field> {
        self.frames
    }

    /// Same grid, time step and step count.
    pub fn ensure_compatible(&self, other: &Trajectory) -> Result<()> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        if self.steps() != other.steps() || self.dt != other.dt {
            return Err(Error::InvalidParameter(format!(
                "time slabs differ: {} steps of {} vs {} steps of {}",
                self.steps(),
                self.dt,
                other.steps(),
                other.dt
            )));
        }
        Ok(())
    }

    pub fn lincomb(&self, alpha: f64, other: &Trajectory, beta: f64) -> Result<Trajectory> {
        self.ensure_compatible(other)?;
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| a.lincomb(alpha, b, beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { grid: Arc::clone(&self.grid), dt: self.dt, frames })
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, alpha: f64) -> Trajectory {
        Trajectory {
            grid: Arc::clone(&self.grid),
            dt: self.dt,
            frames: self.frames.iter().map(|f| f.scale(alpha)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.frames.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }
}

/// Discrete Laplacian with homogeneous Neumann data: second-order centred
/// stencil, ghost node mirrored onto the first interior neighbour.
pub fn laplacian_neumann(f: &Field) -> Field {
    let grid = f.grid();
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    for axis in 0..grid.dim() {
        let n = grid.nodes_per_axis()[axis];
        let s = grid.stride(axis);
        let inv_h2 = 1.0 / (grid.spacing()[axis] * grid.spacing()[axis]);
        for (idx, o) in out.iter_mut().enumerate() {
            let i = grid.axis_index(idx, axis);
            let left = if i == 0 { idx + s } else { idx - s };
            let right = if i == n - 1 { idx - s } else { idx + s };
            *o += (v[left] - 2.0 * v[idx] + v[right]) * inv_h2;
        }
    }
    Field::from_raw(grid, out)
}

/// Weighted inner product `Σ w_i f_i g_i`.
pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    f.ensure_same_grid(g)?;
    Ok(f.grid().weights().iter().zip(f.values().iter().zip(g.values())).map(|(w, (a, b))| w * a * b).sum())
}

/// Trapezoidal `∫_Ω f`.
pub fn integral(f: &Field) -> f64 {
    f.grid().weights().iter().zip(f.values()).map(|(w, v)| w * v).sum()
}

pub fn mean(f: &Field) -> f64 {
    integral(f) / f.grid().volume()
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidExponent(p))
    } else {
        Ok(())
    }
}

fn lp_sum(f: &Field, p: f64) -> f64 {
    f.grid().weights().iter().zip(f.values()).map(|(w, v)| w * v.abs().powf(p)).sum()
}

/// `(Σ w_i |f_i|^p)^{1/p}`
pub fn norm_lp_omega(f: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(lp_sum(f, p).powf(1.0 / p))
}

/// Trapezoidal weights in time for `steps + 1` frames.
pub fn time_weights(steps: usize, dt: f64) -> Vec<f64> {
    trapezoid_weights(steps + 1, dt)
}

/// Space norm composed with trapezoidal time quadrature.
pub fn norm_lp_q(t: &Trajectory, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let tw = time_weights(t.steps(), t.dt());
    let total: f64 = tw.iter().zip(t.frames()).map(|(w, f)| w * lp_sum(f, p)).sum();
    Ok(total.powf(1.0 / p))
}

/// `L^p(Q)` norm of piecewise-constant-in-time interval values (one field per
/// time interval), e.g. forward difference quotients.
pub fn norm_lp_intervals(intervals: &[Field], dt: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let total: f64 = intervals.iter().map(|f| dt * lp_sum(f, p)).sum();
    Ok(total.powf(1.0 / p))
}

/// Nodal gradient: centred in the interior, one-sided on the boundary.
pub fn gradient(f: &Field) -> Vec<Vec<f64>> {
    let grid = f.grid();
    let v = f.values();
    (0..grid.dim())
        .map(|axis| {
            let n = grid.nodes_per_axis()[axis];
            let s = grid.stride(axis);
            let h = grid.spacing()[axis];
            (0..v.len())
                .map(|idx| match grid.axis_index(idx, axis) {
                    0 => (v[idx + s] - v[idx]) / h,
                    i if i == n - 1 => (v[idx] - v[idx - s]) / h,
                    _ => (v[idx + s] - v[idx - s]) / (2.0 * h),
                })
                .collect()
        })
        .collect()
}

/// Squared gradient energy `∫_Ω |∇f|²`.
pub fn gradient_energy(f: &Field) -> f64 {
    let grad = gradient(f);
    f.grid().weights().iter().enumerate().map(|(i, w)| w * grad.iter().map(|g| g[i] * g[i]).sum::<f64>()).sum()
}

/// `(∫_Ω |∇f|²)^{1/2}`
pub fn h1_seminorm(f: &Field) -> f64 {
    gradient_energy(f).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_interval(n).unwrap())
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid::new(&[1.0], &[2]).is_err());
        assert!(Grid::new(&[0.0], &[5]).is_err());
        assert!(Grid::new(&[1.0, 1.0], &[5]).is_err());
        assert!(Grid::new(&[], &[]).is_err());
        let g = Grid::new(&[1.0, 2.0], &[5, 9]).unwrap();
        assert_eq!(g.len(), 45);
        assert_abs_diff_eq!(g.spacing()[1], 0.25);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_small_stencil() {
        let grid = Arc::new(Grid::new(&[2.0], &[3]).unwrap());
        let f = Field::from_values(&grid, vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(laplacian_neumann(&f).values(), &[2.0, 1.0, -4.0]);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let grid = Arc::new(Grid::new(&[1.0, 3.0], &[7, 5]).unwrap());
        let f = Field::constant(&grid, 3.7);
        assert!(laplacian_neumann(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_cosine() {
        let grid = line(201);
        let f = Field::from_fn(&grid, |x| (PI * x[0]).cos()).unwrap();
        let lap = laplacian_neumann(&f);
        let err = (0..grid.len()).map(|i| (lap.values()[i] + PI * PI * f.values()[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn lp_norms() {
        let grid = line(11);
        assert_abs_diff_eq!(norm_lp_omega(&Field::constant(&grid, 2.0), 2.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(norm_lp_omega(&Field::zeros(&grid), 3.5).unwrap(), 0.0);
        assert!(matches!(norm_lp_omega(&Field::zeros(&grid), 0.5), Err(Error::InvalidExponent(_))));

        let grid = line(1001);
        let f = Field::from_fn(&grid, |x| x[0]).unwrap();
        assert_abs_diff_eq!(norm_lp_omega(&f, 2.0).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-5);
    }

    #[test]
    fn space_time_norms() {
        let grid = line(11);
        let t = Trajectory::constant_in_time(&Field::constant(&grid, 1.5), 0.01, 100).unwrap();
        assert_abs_diff_eq!(norm_lp_q(&t, 2.0).unwrap(), 1.5, epsilon = 1e-12);
        assert_eq!(norm_lp_q(&Trajectory::zeros(&grid, 0.1, 10).unwrap(), 2.0).unwrap(), 0.0);

        // ∫_0^1 e^{-2t} dt = (1 - e^{-2}) / 2
        let t = Trajectory::from_fn(&grid, 1e-3, 1000, |_, t| (-t).exp()).unwrap();
        let exact = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        assert_abs_diff_eq!(norm_lp_q(&t, 2.0).unwrap(), exact, epsilon = 1e-5);
        assert!(norm_lp_q(&t, 0.0).is_err());
    }

    #[test]
    fn seminorm_and_mean() {
        let grid = line(51);
        assert_eq!(h1_seminorm(&Field::constant(&grid, 4.0)), 0.0);
        let x = Field::from_fn(&grid, |x| x[0]).unwrap();
        assert_abs_diff_eq!(h1_seminorm(&x), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mean(&x), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(mean(&Field::constant(&grid, -2.5)), -2.5, epsilon = 1e-14);

        let grid = line(201);
        let c = Field::from_fn(&grid, |x| (PI * x[0]).cos()).unwrap();
        assert_abs_diff_eq!(h1_seminorm(&c), (PI * PI / 2.0).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn seminorm_two_dimensional_plane() {
        let grid = Arc::new(Grid::new(&[1.0, 2.0], &[9, 13]).unwrap());
        let f = Field::from_fn(&grid, |x| 3.0 * x[0] - 4.0 * x[1]).unwrap();
        // |∇f| = 5 on a domain of area 2
        assert_abs_diff_eq!(h1_seminorm(&f), 5.0 * 2f64.sqrt(), epsilon = 1e-10);
    }

    fn random_pair() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
        prop_oneof![(3usize..30).prop_map(|n| vec![n]), (3usize..12, 3usize..12).prop_map(|(a, b)| vec![a, b]),]
            .prop_flat_map(|nodes| {
                let n: usize = nodes.iter().product();
                (Just(nodes), prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n))
            })
    }

    proptest! {
        #[test]
        fn laplacian_is_symmetric_negative_and_flux_free((nodes, a, b) in random_pair()) {
            let extents: Vec<f64> = nodes.iter().enumerate().map(|(i, _)| 1.0 + i as f64 * 0.7).collect();
            let grid = Arc::new(Grid::new(&extents, &nodes).unwrap());
            let f = Field::from_values(&grid, a).unwrap();
            let g = Field::from_values(&grid, b).unwrap();
            let lf = laplacian_neumann(&f);
            let lg = laplacian_neumann(&g);

            let fg = inner(&lf, &g).unwrap();
            let gf = inner(&f, &lg).unwrap();
            let scale = inner(&lf, &lf).unwrap().sqrt() * inner(&g, &g).unwrap().sqrt() + 1e-300;
            prop_assert!((fg - gf).abs() <= 1e-10 * scale);
            prop_assert!(inner(&lf, &f).unwrap() <= 1e-10 * scale);

            let abs_sum: f64 = grid.weights().iter().zip(lf.values()).map(|(w, v)| (w * v).abs()).sum();
            prop_assert!(integral(&lf).abs() <= 1e-12 * abs_sum.max(1e-300));
        }

        #[test]
        fn norms_are_homogeneous_and_subadditive(
            (nodes, a, b) in random_pair(),
            alpha in -5.0f64..5.0,
            p in 1.0f64..6.0,
        ) {
            let extents = vec![1.0; nodes.len()];
            let grid = Arc::new(Grid::new(&extents, &nodes).unwrap());
            let f = Field::from_values(&grid, a).unwrap();
            let g = Field::from_values(&grid, b).unwrap();
            let nf = norm_lp_omega(&f, p).unwrap();
            let scaled = norm_lp_omega(&f.scale(alpha), p).unwrap();
            prop_assert!((scaled - alpha.abs() * nf).abs() <= 1e-10 * (1.0 + nf));
            let sum = norm_lp_omega(&f.add(&g).unwrap(), p).unwrap();
            prop_assert!(sum <= nf + norm_lp_omega(&g, p).unwrap() + 1e-10);

            let hs = h1_seminorm(&f.scale(alpha));
            prop_assert!((hs - alpha.abs() * h1_seminorm(&f)).abs() <= 1e-9 * (1.0 + hs));
            prop_assert!(h1_seminorm(&f.add(&g).unwrap()) <= h1_seminorm(&f) + h1_seminorm(&g) + 1e-9);

            let tf = Trajectory::constant_in_time(&f, 0.1, 3).unwrap();
            let tg = Trajectory::constant_in_time(&g, 0.1, 3).unwrap();
            let nq = norm_lp_q(&tf.lincomb(1.0, &tg, 1.0).unwrap(), p).unwrap();
            prop_assert!(nq <= norm_lp_q(&tf, p).unwrap() + norm_lp_q(&tg, p).unwrap() + 1e-10);
        }
    }
}

//! Explicit time stepping of the friction inclusion on a periodic grid.
//!
//! Per step, every node solves the scalar inclusion
//! `a + phi * s = g` with `s in sign(a)`, where `g` collects the discrete
//! Laplacian and the applied force at the pre-step state. The prox backend
//! resolves the inclusion exactly (soft threshold); the regularized backend
//! replaces `sign` by the smooth odd function `a / sqrt(a^2 + eps^2)` and
//! finds the root of the resulting monotone scalar equation.
//!
//! The explicit update is monotone in every stencil input as long as
//! `dt <= h^2 / (2n)`, which both the comparison property and the growth
//! bound rely on; the configuration rejects any `cfl_factor` above one.

use crate::obstacle::{lateral_dist_sq, wrap_unit, ObstacleField, ObstacleSpec};
use crate::{Error, Result};

/// Periodic lateral grid with `m` points per axis on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    m: usize,
}

impl TorusGrid {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::Config("grid dimension must be 1 or 2".into()));
        }
        if m < 8 {
            return Err(Error::Config("grid must have at least 8 points per axis".into()));
        }
        Ok(Self { n, m })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    /// Grid spacing `h = 1/m`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Stability limit `h^2 / (2n)` of the explicit scheme.
    pub fn cfl_limit(&self) -> f64 {
        let h = self.spacing();
        h * h / (2.0 * self.n as f64)
    }

    /// Lateral coordinates of a node (second entry zero for n = 1).
    pub fn coord(&self, node: usize) -> [f64; 2] {
        let m = self.m as f64;
        if self.n == 1 {
            [node as f64 / m, 0.0]
        } else {
            [(node % self.m) as f64 / m, (node / self.m) as f64 / m]
        }
    }
}

/// Interface height field plus current time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub t: f64,
}

impl State {
    /// Flat zero initial condition at time zero.
    pub fn flat(grid: &TorusGrid) -> Self {
        Self { u: vec![0.0; grid.nodes()], t: 0.0 }
    }
}

/// Driving force `f(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    /// Spatially and temporally constant.
    Constant(f64),
    /// Per-node values, constant in time.
    LateralProfile(Vec<f64>),
    /// Triangular cycle `0 -> A -> -A -> 0` over each period, spatially constant.
    Cycle { amplitude: f64, period: f64 },
    /// Piecewise-linear in time (clamped outside the table), spatially constant.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl Forcing {
    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        match self {
            Forcing::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::Config("forcing value must be finite".into()));
                }
            }
            Forcing::LateralProfile(values) => {
                if values.len() != grid.nodes() {
                    return Err(Error::Config(format!(
                        "forcing profile has {} values, grid has {} nodes",
                        values.len(),
                        grid.nodes()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("forcing profile must be finite".into()));
                }
            }
            Forcing::Cycle { amplitude, period } => {
                if !amplitude.is_finite() {
                    return Err(Error::Config("cycle amplitude must be finite".into()));
                }
                if !(*period > 0.0) {
                    return Err(Error::Config("cycle period must be positive".into()));
                }
            }
            Forcing::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Config(
                        "tabulated forcing needs equally many times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("tabulated times must be strictly increasing".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("tabulated values must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Force at a node and time.
    pub fn value_at(&self, node: usize, t: f64) -> f64 {
        match self.drive_at(t) {
            Drive::Uniform(v) => v,
            Drive::PerNode(values) => values[node],
        }
    }

    /// Resolve the time dependence once per step.
    fn drive_at(&self, t: f64) -> Drive<'_> {
        match self {
            Forcing::Constant(v) => Drive::Uniform(*v),
            Forcing::LateralProfile(values) => Drive::PerNode(values),
            Forcing::Cycle { amplitude, period } => Drive::Uniform(triangle(t, *amplitude, *period)),
            Forcing::Tabulated { times, values } => Drive::Uniform(interp_clamped(times, values, t)),
        }
    }

    /// Supremum of `|f|` over its domain.
    pub fn max_abs(&self) -> f64 {
        match self {
            Forcing::Constant(v) => v.abs(),
            Forcing::LateralProfile(values) => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Forcing::Cycle { amplitude, .. } => amplitude.abs(),
            Forcing::Tabulated { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// True when `f` does not depend on time (energy identities need this).
    pub fn constant_in_time(&self) -> bool {
        matches!(self, Forcing::Constant(_) | Forcing::LateralProfile(_))
    }
}

enum Drive<'a> {
    Uniform(f64),
    PerNode(&'a [f64]),
}

impl Drive<'_> {
    #[inline]
    fn get(&self, node: usize) -> f64 {
        match self {
            Drive::Uniform(v) => *v,
            Drive::PerNode(values) => values[node],
        }
    }
}

/// Triangular wave through `0, A, -A, 0` over one period.
fn triangle(t: f64, amplitude: f64, period: f64) -> f64 {
    let p = (t / period).rem_euclid(1.0);
    let shape = if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    };
    amplitude * shape
}

fn interp_clamped(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    if t >= times[times.len() - 1] {
        return values[values.len() - 1];
    }
    let k = times.partition_point(|&s| s <= t);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] + w * (values[k] - values[k - 1])
}

/// Velocity backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Exact pointwise resolution of the inclusion (soft threshold).
    Prox,
    /// Smooth surrogate `a / sqrt(a^2 + eps^2)` in place of `sign`.
    Regularized { epsilon: f64 },
}

/// Time-stepping configuration. `dt = cfl_factor * h^2 / (2n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub backend: Backend,
    pub cfl_factor: f64,
    /// Stationarity tolerance on the excess field.
    pub tol_pin: f64,
    /// Dwell window in time units; default `50 * dt`.
    pub dwell: Option<f64>,
    /// Extra clearance below the slab top for the escape test; default `2h`.
    pub escape_margin: Option<f64>,
    pub t_max: f64,
    /// Steps between trajectory records.
    pub output_stride: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Prox,
            cfl_factor: 0.5,
            tol_pin: 1e-8,
            dwell: None,
            escape_margin: None,
            t_max: 20.0,
            output_stride: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(Error::Config(
                "cfl_factor must lie in (0, 1] so that dt <= h^2/(2n)".into(),
            ));
        }
        if let Backend::Regularized { epsilon } = self.backend {
            if !(epsilon > 0.0) {
                return Err(Error::Config("epsilon must be positive".into()));
            }
        }
        if !(self.tol_pin > 0.0) {
            return Err(Error::Config("tol_pin must be positive".into()));
        }
        if let Some(d) = self.dwell {
            if !(d > 0.0) {
                return Err(Error::Config("dwell window must be positive".into()));
            }
        }
        if let Some(m) = self.escape_margin {
            if !(m >= 0.0) {
                return Err(Error::Config("escape margin must be nonnegative".into()));
            }
        }
        if !(self.t_max > 0.0) {
            return Err(Error::Config("t_max must be positive".into()));
        }
        if self.output_stride == 0 {
            return Err(Error::Config("output stride must be at least 1".into()));
        }
        let _ = grid;
        Ok(())
    }

    pub fn dt(&self, grid: &TorusGrid) -> f64 {
        self.cfl_factor * grid.cfl_limit()
    }

    pub fn dwell_window(&self, grid: &TorusGrid) -> f64 {
        self.dwell.unwrap_or(50.0 * self.dt(grid))
    }

    pub fn escape_margin(&self, grid: &TorusGrid) -> f64 {
        self.escape_margin.unwrap_or(2.0 * grid.spacing())
    }

    /// Height at which the interface has fully cleared the obstacle slab.
    pub fn escape_height(&self, grid: &TorusGrid, spec: &ObstacleSpec) -> f64 {
        spec.slab_half_height - spec.support_radius() - self.escape_margin(grid)
    }
}

// ------------------------------------------------------------------
// Spatial operators and scalar velocity solves
// ------------------------------------------------------------------

/// Second-order central-difference Laplacian with periodic wrap.
pub fn laplacian(grid: &TorusGrid, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), grid.nodes(), "field length must match the grid");
    let mut out = vec![0.0; u.len()];
    laplacian_into(grid, u, &mut out);
    out
}

fn laplacian_into(grid: &TorusGrid, u: &[f64], out: &mut [f64]) {
    let m = grid.m;
    let inv_h2 = (m * m) as f64;
    if grid.n == 1 {
        for i in 0..m {
            let left = u[if i == 0 { m - 1 } else { i - 1 }];
            let right = u[if i + 1 == m { 0 } else { i + 1 }];
            out[i] = (left + right - 2.0 * u[i]) * inv_h2;
        }
    } else {
        for iy in 0..m {
            let row = iy * m;
            let up = (if iy + 1 == m { 0 } else { iy + 1 }) * m;
            let down = (if iy == 0 { m - 1 } else { iy - 1 }) * m;
            for ix in 0..m {
                let left = u[row + if ix == 0 { m - 1 } else { ix - 1 }];
                let right = u[row + if ix + 1 == m { 0 } else { ix + 1 }];
                out[row + ix] =
                    (left + right + u[up + ix] + u[down + ix] - 4.0 * u[row + ix]) * inv_h2;
            }
        }
    }
}

/// Exact solution of `a + phi * s = g`, `s in sign(a)`: the unique velocity
/// is `sign(g) * max(|g| - phi, 0)`; sub-threshold nodes are pinned.
#[inline]
pub fn friction_velocity(g: f64, phi: f64) -> f64 {
    assert!(phi >= 0.0, "friction strength must be nonnegative");
    let excess = g.abs() - phi;
    if excess > 0.0 {
        excess.copysign(g)
    } else {
        0.0
    }
}

/// Root of `a + phi * a / sqrt(a^2 + eps^2) = g`, found by safeguarded
/// Newton/bisection to absolute tolerance 1e-12. Satisfies `|a| <= |g|`.
#[inline]
pub fn regularized_velocity(g: f64, phi: f64, epsilon: f64) -> f64 {
    assert!(phi >= 0.0, "friction strength must be nonnegative");
    assert!(epsilon > 0.0, "epsilon must be positive");
    if phi == 0.0 || g == 0.0 {
        return g;
    }
    let eps2 = epsilon * epsilon;
    let resid = |a: f64| a + phi * a / (a * a + eps2).sqrt() - g;
    let (mut lo, mut hi) = if g > 0.0 { (0.0, g) } else { (g, 0.0) };
    let mut a = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = resid(a);
        if r == 0.0 {
            return a;
        }
        if r > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        if hi - lo <= 1e-12 {
            return 0.5 * (lo + hi);
        }
        let s = (a * a + eps2).sqrt();
        let slope = 1.0 + phi * eps2 / (s * s * s);
        let newton = a - r / slope;
        a = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    // The residual is strictly increasing, so the bracket always shrinks;
    // 200 iterations cannot be exhausted unless the state is corrupt.
    unreachable!("regularized velocity solve failed to converge: g={g}, phi={phi}, eps={epsilon}");
}

#[inline]
fn backend_velocity(backend: Backend, g: f64, phi: f64) -> f64 {
    match backend {
        Backend::Prox => friction_velocity(g, phi),
        Backend::Regularized { epsilon } => regularized_velocity(g, phi, epsilon),
    }
}

// ------------------------------------------------------------------
// Grid-bound friction evaluation
// ------------------------------------------------------------------

/// Per-node candidate lists for fast strength evaluation along a run.
///
/// For each grid node the obstacle centers within lateral support distance
/// are stored with their precomputed squared lateral distance, sorted by
/// height and additionally bucketed into height cells one support radius
/// wide, so an evaluation touches only the few candidates near the query
/// height. Produces bitwise the same values as [`ObstacleField::strength`]
/// at node coordinates: the candidate window always covers every center
/// within the support distance, and the distance arithmetic is shared.
#[derive(Debug, Clone)]
pub struct GridFriction {
    spec: ObstacleSpec,
    support: f64,
    support_sq: f64,
    two_delta: f64,
    /// Inside this squared distance the strength is provably exactly 1
    /// (strict sub-plateau margin so the shortcut never disagrees with the
    /// full ramp evaluation in the last ulp).
    plateau_cut_sq: f64,
    /// Height of the lowest cell boundary.
    base: f64,
    inv_edge: f64,
    cells: usize,
    /// Candidate ranges per (node, height cell): CSR with `cells + 1`
    /// entries per node.
    cell_start: Vec<u32>,
    cand_lat_sq: Vec<f64>,
    cand_h: Vec<f64>,
    /// Memo of the last evaluation per node: pinned nodes keep their height
    /// bit-for-bit between steps, so the lookup short-circuits exactly.
    memo_h: Vec<std::cell::Cell<f64>>,
    memo_phi: Vec<std::cell::Cell<f64>>,
    /// Scratch for the batched ramp evaluation in [`GridFriction::fill_phi`].
    batch: std::cell::RefCell<(Vec<u32>, Vec<f64>)>,
}

impl GridFriction {
    pub fn new(field: &ObstacleField, grid: &TorusGrid) -> Self {
        let spec = field.spec().clone();
        let support = spec.support_radius();
        let support_sq = support * support;
        let base = -spec.slab_half_height;
        let edge = support;
        let inv_edge = 1.0 / edge;
        let cells = ((2.0 * spec.slab_half_height) * inv_edge).floor() as usize + 1;
        let nodes = grid.nodes();

        let mut cell_start = Vec::with_capacity(nodes * (cells + 1));
        let mut cand_lat_sq = Vec::new();
        let mut cand_h = Vec::new();
        let mut local: Vec<(f64, f64)> = Vec::new();
        for i in 0..nodes {
            let x = grid.coord(i);
            let wrapped = [wrap_unit(x[0]), wrap_unit(x[1])];
            local.clear();
            for c in field.centers() {
                let lat_sq = lateral_dist_sq(&wrapped, &c.lateral, spec.dimension);
                if lat_sq <= support_sq {
                    local.push((c.height, lat_sq));
                }
            }
            local.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let row_base = cand_h.len() as u32;
            let mut next = 0usize;
            for cell in 0..cells {
                cell_start.push(row_base + next as u32);
                let upper = base + (cell + 1) as f64 * edge;
                while next < local.len() && local[next].0 < upper {
                    cand_h.push(local[next].0);
                    cand_lat_sq.push(local[next].1);
                    next += 1;
                }
            }
            // Anything at or above the top boundary joins the last cell.
            while next < local.len() {
                cand_h.push(local[next].0);
                cand_lat_sq.push(local[next].1);
                next += 1;
            }
            cell_start.push(cand_h.len() as u32);
        }
        let memo_h = (0..nodes).map(|_| std::cell::Cell::new(f64::NAN)).collect();
        let memo_phi = (0..nodes).map(|_| std::cell::Cell::new(0.0)).collect();
        let two_delta = 2.0 * spec.mollification_width;
        let plateau = (support - two_delta) * (1.0 - 1e-12);
        Self {
            spec,
            support,
            support_sq,
            two_delta,
            plateau_cut_sq: plateau * plateau,
            base,
            inv_edge,
            cells,
            cell_start,
            cand_lat_sq,
            cand_h,
            memo_h,
            memo_phi,
            batch: std::cell::RefCell::new((Vec::new(), Vec::new())),
        }
    }

    /// Obstacle strength at grid node `i` and interface height `h`.
    #[inline]
    pub fn phi(&self, node: usize, h: f64) -> f64 {
        if self.memo_h[node].get() == h {
            return self.memo_phi[node].get();
        }
        let best = self.min_dist_sq(node, h);
        let phi = if best <= self.support_sq { self.spec.ramp(best.sqrt()) } else { 0.0 };
        self.memo_h[node].set(h);
        self.memo_phi[node].set(phi);
        phi
    }

    /// Strengths for a whole height field at once. Values are identical to
    /// node-wise [`GridFriction::phi`]; the square roots and ramp divisions
    /// of the nodes inside the mollified shell run as packed passes.
    pub fn fill_phi(&self, heights: &[f64], out: &mut [f64]) {
        assert_eq!(heights.len(), out.len());
        let mut scratch = self.batch.borrow_mut();
        let (pending, d2s) = &mut *scratch;
        pending.clear();
        d2s.clear();
        for (i, (&h, slot)) in heights.iter().zip(out.iter_mut()).enumerate() {
            if self.memo_h[i].get() == h {
                *slot = self.memo_phi[i].get();
                continue;
            }
            let best = self.min_dist_sq(i, h);
            if best > self.support_sq {
                *slot = 0.0;
            } else if best <= self.plateau_cut_sq {
                *slot = 1.0;
            } else {
                pending.push(i as u32);
                d2s.push(best);
                continue; // memo written after the batch passes
            }
            self.memo_h[i].set(h);
            self.memo_phi[i].set(*slot);
        }
        for v in d2s.iter_mut() {
            *v = v.sqrt();
        }
        for v in d2s.iter_mut() {
            *v = (self.support - *v) / self.two_delta;
        }
        for v in d2s.iter_mut() {
            // Clamped cubic; agrees with the branching smoothstep bit for bit.
            let t = v.clamp(0.0, 1.0);
            *v = t * t * (3.0 - 2.0 * t);
        }
        for (&i, &phi) in pending.iter().zip(d2s.iter()) {
            let i = i as usize;
            out[i] = phi;
            self.memo_h[i].set(heights[i]);
            self.memo_phi[i].set(phi);
        }
    }

    /// Squared distance from node `i` at height `h` to the nearest center,
    /// exact whenever it is at most the squared support radius.
    fn min_dist_sq(&self, node: usize, h: f64) -> f64 {
        let row = node * (self.cells + 1);
        let row_begin = self.cell_start[row] as usize;
        let row_end = self.cell_start[row + self.cells] as usize;
        if row_begin == row_end {
            return f64::INFINITY;
        }
        // Truncating cast doubles as a clamped floor: negatives and NaN go
        // to 0, out-of-range heights land in an edge cell and fall out of
        // the distance test below.
        let x = (h - self.base) * self.inv_edge;
        let cell = if x >= 1.0 { (x as usize).min(self.cells - 1) } else { 0 };
        let lo_cell = cell.saturating_sub(1);
        let hi_cell = (cell + 1).min(self.cells - 1);
        let mut begin = self.cell_start[row + lo_cell] as usize;
        let mut end = self.cell_start[row + hi_cell + 1] as usize;
        // Cell arithmetic is approximate near boundaries; widen until the
        // window provably covers |dh| <= support.
        while begin > row_begin && self.cand_h[begin - 1] >= h - self.support {
            begin -= 1;
        }
        while end < row_end && self.cand_h[end] <= h + self.support {
            end += 1;
        }
        let mut best = f64::INFINITY;
        for (ch, lat) in self.cand_h[begin..end].iter().zip(&self.cand_lat_sq[begin..end]) {
            let dh = h - ch;
            let d2 = lat + dh * dh;
            if d2 < best {
                best = d2;
            }
        }
        best
    }
}

// ------------------------------------------------------------------
// Stepping
// ------------------------------------------------------------------

/// Aggregates tracked during one explicit step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    /// Max over nodes of `max(|g| - phi, 0)`; equals the prox speed.
    pub max_excess: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub finite: bool,
}

/// One explicit step with an arbitrary friction coefficient
/// `phi(node, height)`; `u_next` receives the post-step heights.
#[allow(clippy::too_many_arguments)]
pub fn advance<F>(
    grid: &TorusGrid,
    u: &[f64],
    u_next: &mut [f64],
    t: f64,
    friction: &F,
    forcing: &Forcing,
    backend: Backend,
    dt: f64,
) -> StepStats
where
    F: Fn(usize, f64) -> f64 + ?Sized,
{
    assert_eq!(u.len(), grid.nodes());
    assert_eq!(u_next.len(), u.len());
    drive_pass(grid, u, u_next, t, forcing);

    // Resolve the friction inclusion node by node.
    let mut stats = StepStats {
        max_excess: 0.0,
        min_u: f64::INFINITY,
        max_u: f64::NEG_INFINITY,
        finite: true,
    };
    for (i, (slot, &ui)) in u_next.iter_mut().zip(u).enumerate() {
        let g = *slot;
        let phi = friction(i, ui);
        let a = backend_velocity(backend, g, phi);
        let next = ui + dt * a;
        *slot = next;
        let excess = g.abs() - phi;
        if excess > stats.max_excess {
            stats.max_excess = excess;
        }
        if next < stats.min_u {
            stats.min_u = next;
        }
        if next > stats.max_u {
            stats.max_u = next;
        }
        stats.finite &= next.is_finite();
    }
    stats
}

/// `g_out = laplacian(u) + f(., t)`, free of per-node branches so the
/// stencil pass vectorizes.
fn drive_pass(grid: &TorusGrid, u: &[f64], g_out: &mut [f64], t: f64, forcing: &Forcing) {
    let m = grid.m;
    let inv_h2 = (m * m) as f64;
    if grid.n == 1 {
        g_out[0] = (u[m - 1] + u[1] - 2.0 * u[0]) * inv_h2;
        for (out, w) in g_out[1..m - 1].iter_mut().zip(u.windows(3)) {
            *out = (w[0] + w[2] - 2.0 * w[1]) * inv_h2;
        }
        g_out[m - 1] = (u[m - 2] + u[0] - 2.0 * u[m - 1]) * inv_h2;
    } else {
        for iy in 0..m {
            let row = iy * m;
            let up = (if iy + 1 == m { 0 } else { iy + 1 }) * m;
            let down = (if iy == 0 { m - 1 } else { iy - 1 }) * m;
            g_out[row] = (u[row + m - 1] + u[row + 1] + u[up] + u[down] - 4.0 * u[row]) * inv_h2;
            for ix in 1..m - 1 {
                g_out[row + ix] = (u[row + ix - 1] + u[row + ix + 1] + u[up + ix] + u[down + ix]
                    - 4.0 * u[row + ix])
                    * inv_h2;
            }
            g_out[row + m - 1] = (u[row + m - 2] + u[row] + u[up + m - 1] + u[down + m - 1]
                - 4.0 * u[row + m - 1])
                * inv_h2;
        }
    }
    match forcing.drive_at(t) {
        Drive::Uniform(v) => {
            if v != 0.0 {
                for g in g_out.iter_mut() {
                    *g += v;
                }
            }
        }
        Drive::PerNode(values) => {
            for (g, v) in g_out.iter_mut().zip(values) {
                *g += v;
            }
        }
    }
}

/// [`advance`] specialized to an obstacle-backed friction field: strengths
/// are evaluated in a batched pass (`phi_buf` is scratch). Produces
/// bit-identical results to `advance` with the equivalent closure.
#[allow(clippy::too_many_arguments)]
pub fn advance_grid(
    grid: &TorusGrid,
    u: &[f64],
    u_next: &mut [f64],
    phi_buf: &mut [f64],
    t: f64,
    friction: &GridFriction,
    forcing: &Forcing,
    backend: Backend,
    dt: f64,
) -> StepStats {
    assert_eq!(u.len(), grid.nodes());
    assert_eq!(u_next.len(), u.len());
    drive_pass(grid, u, u_next, t, forcing);
    friction.fill_phi(u, phi_buf);

    let mut stats = StepStats {
        max_excess: 0.0,
        min_u: f64::INFINITY,
        max_u: f64::NEG_INFINITY,
        finite: true,
    };
    for ((slot, &ui), &phi) in u_next.iter_mut().zip(u).zip(phi_buf.iter()) {
        let g = *slot;
        let a = backend_velocity(backend, g, phi);
        let next = ui + dt * a;
        *slot = next;
        let excess = g.abs() - phi;
        if excess > stats.max_excess {
            stats.max_excess = excess;
        }
        if next < stats.min_u {
            stats.min_u = next;
        }
        if next > stats.max_u {
            stats.max_u = next;
        }
        stats.finite &= next.is_finite();
    }
    stats
}

/// One step of the full model; returns the post-step state.
pub fn step(
    grid: &TorusGrid,
    state: &State,
    field: &ObstacleField,
    forcing: &Forcing,
    config: &SolverConfig,
) -> Result<State> {
    Ok(step_diag(grid, state, field, forcing, config)?.0)
}

/// Like [`step`], also returning the per-node velocities and friction
/// strengths used by the update (for the dissipation identity).
pub fn step_diag(
    grid: &TorusGrid,
    state: &State,
    field: &ObstacleField,
    forcing: &Forcing,
    config: &SolverConfig,
) -> Result<(State, Vec<f64>, Vec<f64>)> {
    config.validate(grid)?;
    forcing.validate(grid)?;
    if state.u.len() != grid.nodes() {
        return Err(Error::Contract("state length does not match the grid".into()));
    }
    let friction = GridFriction::new(field, grid);
    let dt = config.dt(grid);
    let mut u_next = vec![0.0; state.u.len()];
    let mut phi = vec![0.0; state.u.len()];
    advance_grid(
        grid,
        &state.u,
        &mut u_next,
        &mut phi,
        state.t,
        &friction,
        forcing,
        config.backend,
        dt,
    );
    let velocities: Vec<f64> =
        u_next.iter().zip(&state.u).map(|(next, prev)| (next - prev) / dt).collect();
    Ok((State { u: u_next, t: state.t + dt }, velocities, phi))
}

/// Stationarity residual: `r = laplacian(u) + f` and the excess
/// `max(|r| - phi, 0)`, which equals the prox speed node-wise.
pub fn residual(
    grid: &TorusGrid,
    state: &State,
    field: &ObstacleField,
    forcing: &Forcing,
) -> (Vec<f64>, Vec<f64>) {
    let r: Vec<f64> = {
        let mut lap = laplacian(grid, &state.u);
        let drive = forcing.drive_at(state.t);
        for (i, l) in lap.iter_mut().enumerate() {
            *l += drive.get(i);
        }
        lap
    };
    let excess: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            let phi = field.strength(&grid.coord(i), state.u[i]);
            (ri.abs() - phi).max(0.0)
        })
        .collect();
    (r, excess)
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Excess stayed below `tol_pin` for a full dwell window.
    Stationary,
    /// The whole interface cleared the obstacle slab.
    Escaped,
    /// `t_max` elapsed first.
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Stationary => "stationary",
            Outcome::Escaped => "escaped",
            Outcome::Timeout => "timeout",
        }
    }
}

/// One trajectory summary record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mean_u: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub max_excess: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: State,
    pub rows: Vec<TrajectoryRow>,
    pub outcome: Outcome,
    pub steps: u64,
}

fn summary_row(
    grid: &TorusGrid,
    u: &[f64],
    t: f64,
    forcing: &Forcing,
    max_excess: f64,
) -> TrajectoryRow {
    let mut sum = 0.0;
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    for &v in u {
        sum += v;
        if v < min_u {
            min_u = v;
        }
        if v > max_u {
            max_u = v;
        }
    }
    TrajectoryRow {
        t,
        mean_u: sum / u.len() as f64,
        min_u,
        max_u,
        max_excess,
        energy: crate::analysis::energy_total(grid, u, forcing, t),
    }
}

fn excess_stats<F>(grid: &TorusGrid, u: &[f64], friction: &F, forcing: &Forcing, t: f64) -> (f64, f64)
where
    F: Fn(usize, f64) -> f64 + ?Sized,
{
    let lap = laplacian(grid, u);
    let drive = forcing.drive_at(t);
    let mut max_excess = 0.0f64;
    let mut min_u = f64::INFINITY;
    for (i, &v) in u.iter().enumerate() {
        let g = lap[i] + drive.get(i);
        let e = g.abs() - friction(i, v);
        if e > max_excess {
            max_excess = e;
        }
        if v < min_u {
            min_u = v;
        }
    }
    (max_excess, min_u)
}

/// Step until the run is classified stationary, escaped, or timed out.
pub fn run_until(
    grid: &TorusGrid,
    initial: &State,
    field: &ObstacleField,
    forcing: &Forcing,
    config: &SolverConfig,
) -> Result<RunOutput> {
    config.validate(grid)?;
    forcing.validate(grid)?;
    if initial.u.len() != grid.nodes() {
        return Err(Error::Contract("state length does not match the grid".into()));
    }
    if let Some(bad) = initial.u.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            step: 0,
            message: format!("initial state is not finite at node {bad}"),
        });
    }
    let dt = config.dt(grid);
    let dwell = config.dwell_window(grid);
    let tol = config.tol_pin;
    let escape_height = config.escape_height(grid, field.spec());
    if !(escape_height > 0.0) {
        return Err(Error::Config(
            "escape height is not positive; enlarge slab_half_height or shrink the margin".into(),
        ));
    }
    let friction = GridFriction::new(field, grid);
    let phi = |i: usize, h: f64| friction.phi(i, h);
    let t0 = initial.t;
    let max_steps = ((config.t_max - t0) / dt).ceil().max(0.0) as u64;

    let mut u = initial.u.clone();
    let mut u_next = vec![0.0; u.len()];
    let mut phi_buf = vec![0.0; u.len()];
    let mut rows = Vec::new();
    let mut last_recorded_step = 0u64;

    let (mut max_excess, initial_min_u) = excess_stats(grid, &u, &phi, forcing, t0);
    rows.push(summary_row(grid, &u, t0, forcing, max_excess));
    let mut below_since = if max_excess <= tol { Some(t0) } else { None };
    if initial_min_u >= escape_height {
        return Ok(RunOutput { state: State { u, t: t0 }, rows, outcome: Outcome::Escaped, steps: 0 });
    }

    let mut outcome = Outcome::Timeout;
    let mut steps_done = 0u64;
    let mut t = t0;
    for k in 0..max_steps {
        let stats = advance_grid(
            grid,
            &u,
            &mut u_next,
            &mut phi_buf,
            t,
            &friction,
            forcing,
            config.backend,
            dt,
        );
        std::mem::swap(&mut u, &mut u_next);
        steps_done = k + 1;
        t = t0 + steps_done as f64 * dt;
        if !stats.finite {
            return Err(Error::Numerical {
                step: steps_done,
                message: "state contains NaN or infinity".into(),
            });
        }
        max_excess = stats.max_excess;
        let min_u = stats.min_u;
        if steps_done.is_multiple_of(config.output_stride) {
            rows.push(summary_row(grid, &u, t, forcing, max_excess));
            last_recorded_step = steps_done;
        }
        if max_excess <= tol {
            let since = *below_since.get_or_insert(t);
            if t - since >= dwell {
                outcome = Outcome::Stationary;
                break;
            }
        } else {
            below_since = None;
        }
        if min_u >= escape_height {
            outcome = Outcome::Escaped;
            break;
        }
    }
    if steps_done > 0 && steps_done != last_recorded_step {
        rows.push(summary_row(grid, &u, t, forcing, max_excess));
    }
    Ok(RunOutput { state: State { u, t }, rows, outcome, steps: steps_done })
}

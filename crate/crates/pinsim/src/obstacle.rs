//! Random obstacle strength field.
//!
//! Centers are drawn from a Poisson point process in the slab
//! `[0,1)^n x [-Y, Y]` (periodic in the lateral coordinates), each carrying a
//! ball of radius `rho`. The indicator of the union of balls is smoothed over
//! a width `delta` by a radial ramp, so the strength at a point depends only
//! on the distance `d` to the nearest center:
//!
//! ```text
//! phi = S((rho + delta - d) / (2 delta)),   S(t) = 3t^2 - 2t^3 clamped to [0,1]
//! ```
//!
//! giving `phi = 1` for `d <= rho - delta`, `phi = 0` for `d >= rho + delta`,
//! and a C^1 transition in between with `|phi'| <= 1.5 / (2 delta)`.

use rand::Rng;
use rand_distr::Distribution;
use serde::Deserialize;

use crate::{streams, Error, Result};

/// Parameters of the random obstacle field.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSpec {
    /// Expected number of centers per unit (n+1)-volume.
    pub intensity: f64,
    /// Ball radius around each center.
    pub radius: f64,
    /// Smoothing width of the indicator (must be below `radius`).
    pub mollification_width: f64,
    /// Half height `Y` of the sampled slab; centers satisfy `|h| <= Y`.
    pub slab_half_height: f64,
    /// Lateral dimension, 1 or 2.
    pub dimension: usize,
    /// Seed of the field stream.
    pub seed: u64,
}

impl ObstacleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0) {
            return Err(Error::Config("intensity must be positive".into()));
        }
        if !(self.mollification_width > 0.0) {
            return Err(Error::Config("mollification_width must be positive".into()));
        }
        if !(self.radius > self.mollification_width) {
            return Err(Error::Config("radius must exceed mollification_width".into()));
        }
        if !(self.slab_half_height > self.radius + self.mollification_width) {
            return Err(Error::Config(
                "slab_half_height must exceed radius + mollification_width".into(),
            ));
        }
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::Config("dimension must be 1 or 2".into()));
        }
        Ok(())
    }

    /// Radius beyond which a center cannot influence the strength.
    pub fn support_radius(&self) -> f64 {
        self.radius + self.mollification_width
    }
}

/// One obstacle center: lateral position in `[0,1)^n` plus a height.
/// For `n = 1` the second lateral coordinate is unused and zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub lateral: [f64; 2],
    pub height: f64,
}

/// Wrap a lateral coordinate into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x.floor() == x for integral x, so w is already in [0, 1); the guard
    // only covers w == 1.0 from rounding of huge inputs.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Periodic distance between two wrapped coordinates on the unit circle.
#[inline]
fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d > 0.5 {
        1.0 - d
    } else {
        d
    }
}

/// Squared periodic lateral distance over the first `n` coordinates.
#[inline]
pub fn lateral_dist_sq(a: &[f64; 2], b: &[f64; 2], n: usize) -> f64 {
    let d0 = circle_dist(a[0], b[0]);
    if n == 1 {
        d0 * d0
    } else {
        let d1 = circle_dist(a[1], b[1]);
        d0 * d0 + d1 * d1
    }
}

/// Cubic smoothstep clamped to `[0, 1]`.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * (3.0 - 2.0 * t)
    }
}

/// Uniform spatial bucketing of centers, periodic laterally, with cell edges
/// of at least the support radius so a query only visits adjacent cells.
#[derive(Debug, Clone)]
struct CellIndex {
    n: usize,
    lat_cells: usize,
    h_cells: usize,
    h_min: f64,
    h_edge: f64,
    buckets: Vec<Vec<u32>>,
}

impl CellIndex {
    fn build(spec: &ObstacleSpec, centers: &[Center]) -> Self {
        let edge_min = spec.support_radius();
        let lat_cells = (1.0 / edge_min).floor().max(1.0) as usize;
        let height = 2.0 * spec.slab_half_height;
        let h_cells = (height / edge_min).floor().max(1.0) as usize;
        let h_edge = height / h_cells as f64;
        let n = spec.dimension;
        let bucket_count = lat_cells.pow(n as u32) * h_cells;
        let mut index = Self {
            n,
            lat_cells,
            h_cells,
            h_min: -spec.slab_half_height,
            h_edge,
            buckets: vec![Vec::new(); bucket_count],
        };
        for (k, c) in centers.iter().enumerate() {
            let b = index.bucket_of(c);
            index.buckets[b].push(k as u32);
        }
        index
    }

    #[inline]
    fn lat_cell(&self, x: f64) -> usize {
        let c = (wrap_unit(x) * self.lat_cells as f64) as usize;
        c.min(self.lat_cells - 1)
    }

    #[inline]
    fn h_cell(&self, h: f64) -> isize {
        ((h - self.h_min) / self.h_edge).floor() as isize
    }

    fn bucket_of(&self, c: &Center) -> usize {
        let i0 = self.lat_cell(c.lateral[0]);
        let ih = self.h_cell(c.height).clamp(0, self.h_cells as isize - 1) as usize;
        if self.n == 1 {
            ih * self.lat_cells + i0
        } else {
            let i1 = self.lat_cell(c.lateral[1]);
            (ih * self.lat_cells + i1) * self.lat_cells + i0
        }
    }

    /// Visit every center index whose cell is within `radius` of the query
    /// point. Supersets are fine: callers re-check true distances.
    fn visit_candidates<F: FnMut(u32)>(&self, lateral: &[f64; 2], height: f64, radius: f64, mut f: F) {
        let lat_reach = (radius * self.lat_cells as f64).ceil() as isize + 1;
        let full_lat = 2 * lat_reach + 1 >= self.lat_cells as isize;
        let h_reach = (radius / self.h_edge).ceil() as isize + 1;
        let hc = self.h_cell(height);
        let h_lo = (hc - h_reach).max(0);
        let h_hi = (hc + h_reach).min(self.h_cells as isize - 1);
        if h_lo > h_hi {
            return;
        }
        let c0 = self.lat_cell(lateral[0]) as isize;
        let lc = self.lat_cells as isize;
        let lat_range = |c: isize| -> Vec<usize> {
            if full_lat {
                (0..self.lat_cells).collect()
            } else {
                (-lat_reach..=lat_reach)
                    .map(|o| (c + o).rem_euclid(lc) as usize)
                    .collect()
            }
        };
        let cols0 = lat_range(c0);
        if self.n == 1 {
            for ih in h_lo..=h_hi {
                for &i0 in &cols0 {
                    for &k in &self.buckets[ih as usize * self.lat_cells + i0] {
                        f(k);
                    }
                }
            }
        } else {
            let c1 = self.lat_cell(lateral[1]) as isize;
            let cols1 = lat_range(c1);
            for ih in h_lo..=h_hi {
                for &i1 in &cols1 {
                    let row = (ih as usize * self.lat_cells + i1) * self.lat_cells;
                    for &i0 in &cols0 {
                        for &k in &self.buckets[row + i0] {
                            f(k);
                        }
                    }
                }
            }
        }
    }
}

/// A sampled obstacle field. Immutable after construction; evaluation is a
/// pure read and safe to share across threads.
#[derive(Debug, Clone)]
pub struct ObstacleField {
    spec: ObstacleSpec,
    centers: Vec<Center>,
    index: CellIndex,
}

/// Supremum and mean of the strength over a regular sampling of the slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub sup_phi: f64,
    pub mean_phi: f64,
}

/// Draw the field for `spec`: the center count is Poisson with mean
/// `intensity * 2Y` (unit lateral volume), positions independent uniform in
/// the slab. Deterministic for a fixed seed.
pub fn sample_field(spec: &ObstacleSpec) -> Result<ObstacleField> {
    spec.validate()?;
    let mut rng = crate::seeded_rng(spec.seed, streams::FIELD);
    let mean = spec.intensity * 2.0 * spec.slab_half_height;
    let count = rand_distr::Poisson::new(mean)
        .map_err(|e| Error::Config(format!("invalid Poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let y = spec.slab_half_height;
    let mut centers = Vec::with_capacity(count);
    for _ in 0..count {
        let mut lateral = [0.0; 2];
        for l in lateral.iter_mut().take(spec.dimension) {
            *l = rng.random::<f64>();
        }
        let height = rng.random_range(-y..y);
        centers.push(Center { lateral, height });
    }
    Ok(ObstacleField::from_centers(spec.clone(), centers))
}

impl ObstacleField {
    /// Build a field from explicit centers (used by deserialization and by
    /// friction-free controls).
    pub fn from_centers(spec: ObstacleSpec, centers: Vec<Center>) -> Self {
        let index = CellIndex::build(&spec, &centers);
        Self { spec, centers, index }
    }

    /// Field with no centers: `phi` is identically zero.
    pub fn empty(spec: ObstacleSpec) -> Self {
        Self::from_centers(spec, Vec::new())
    }

    pub fn spec(&self) -> &ObstacleSpec {
        &self.spec
    }

    pub fn centers(&self) -> &[Center] {
        &self.centers
    }

    /// Indices and distances of all centers within `radius` of the query
    /// point (periodic lateral metric). Exact: verified against linear scan.
    pub fn centers_within(&self, lateral: &[f64; 2], height: f64, radius: f64) -> Vec<(usize, f64)> {
        let wrapped = self.wrapped(lateral);
        let r2 = radius * radius;
        let mut hits = Vec::new();
        self.index.visit_candidates(&wrapped, height, radius, |k| {
            let c = &self.centers[k as usize];
            let dh = height - c.height;
            let d2 = lateral_dist_sq(&wrapped, &c.lateral, self.spec.dimension) + dh * dh;
            if d2 <= r2 {
                hits.push((k as usize, d2.sqrt()));
            }
        });
        hits.sort_unstable_by_key(|hit| hit.0);
        hits
    }

    /// Minimum distance to any center, searched out to the support radius
    /// `rho + delta`; `+inf` when no center lies within it.
    pub fn nearest_center_distance(&self, lateral: &[f64; 2], height: f64) -> f64 {
        let wrapped = self.wrapped(lateral);
        self.nearest_sq_within_support(&wrapped, height)
            .map_or(f64::INFINITY, f64::sqrt)
    }

    /// Obstacle strength at a lateral point (any representative; wrapped
    /// internally) and height. Always in `[0, 1]`.
    pub fn strength(&self, lateral: &[f64; 2], height: f64) -> f64 {
        let wrapped = self.wrapped(lateral);
        match self.nearest_sq_within_support(&wrapped, height) {
            None => 0.0,
            Some(d2) => self.spec.ramp(d2.sqrt()),
        }
    }

    fn wrapped(&self, lateral: &[f64; 2]) -> [f64; 2] {
        [wrap_unit(lateral[0]), wrap_unit(lateral[1])]
    }

    fn nearest_sq_within_support(&self, wrapped: &[f64; 2], height: f64) -> Option<f64> {
        let support = self.spec.support_radius();
        let mut best = f64::INFINITY;
        self.index.visit_candidates(wrapped, height, support, |k| {
            let c = &self.centers[k as usize];
            let dh = height - c.height;
            let d2 = lateral_dist_sq(wrapped, &c.lateral, self.spec.dimension) + dh * dh;
            if d2 < best {
                best = d2;
            }
        });
        if best <= support * support {
            Some(best)
        } else {
            None
        }
    }

    /// Sup and mean of the strength over a regular sampling with at least
    /// `resolution` samples per unit length per axis.
    pub fn stats(&self, resolution: usize) -> FieldStats {
        assert!(resolution >= 8, "resolution must be at least 8 samples per unit length");
        let n = self.spec.dimension;
        let y = self.spec.slab_half_height;
        let h_count = (2.0 * y * resolution as f64).ceil() as usize + 1;
        let h_step = 2.0 * y / (h_count - 1) as f64;
        let mut sup = 0.0f64;
        let mut sum = 0.0f64;
        let mut count = 0usize;
        let lat_points: Vec<f64> = (0..resolution).map(|i| i as f64 / resolution as f64).collect();
        let mut eval = |lateral: [f64; 2]| {
            for j in 0..h_count {
                let h = -y + j as f64 * h_step;
                let p = self.strength(&lateral, h);
                if p > sup {
                    sup = p;
                }
                sum += p;
                count += 1;
            }
        };
        if n == 1 {
            for &x in &lat_points {
                eval([x, 0.0]);
            }
        } else {
            for &x1 in &lat_points {
                for &x0 in &lat_points {
                    eval([x0, x1]);
                }
            }
        }
        FieldStats { sup_phi: sup, mean_phi: sum / count as f64 }
    }
}

impl ObstacleSpec {
    /// Strength as a function of distance to the nearest center.
    #[inline]
    pub fn ramp(&self, d: f64) -> f64 {
        let t = (self.radius + self.mollification_width - d) / (2.0 * self.mollification_width);
        smoothstep(t)
    }
}

// ------------------------------------------------------------------
// Serialization: {"spec":{...},"centers":[[x..., h], ...]} with numbers in
// 17-significant-digit decimal so the round trip is bit exact.
// ------------------------------------------------------------------

impl ObstacleField {
    pub fn to_json(&self) -> String {
        use std::fmt::Write;
        let f = crate::output::fmt_f64;
        let s = &self.spec;
        let mut out = String::new();
        write!(
            out,
            "{{\"spec\":{{\"lambda\":{},\"rho\":{},\"delta\":{},\"Y\":{},\"n\":{},\"seed\":{}}},\"centers\":[",
            f(s.intensity),
            f(s.radius),
            f(s.mollification_width),
            f(s.slab_half_height),
            s.dimension,
            s.seed
        )
        .unwrap();
        for (k, c) in self.centers.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push('[');
            for d in 0..s.dimension {
                write!(out, "{},", f(c.lateral[d])).unwrap();
            }
            write!(out, "{}]", f(c.height)).unwrap();
        }
        out.push_str("]}");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct SpecDoc {
            lambda: f64,
            rho: f64,
            delta: f64,
            #[serde(rename = "Y")]
            y: f64,
            n: usize,
            seed: u64,
        }
        #[derive(Deserialize)]
        struct FieldDoc {
            spec: SpecDoc,
            centers: Vec<Vec<f64>>,
        }
        let doc: FieldDoc = serde_json::from_str(text)?;
        let spec = ObstacleSpec {
            intensity: doc.spec.lambda,
            radius: doc.spec.rho,
            mollification_width: doc.spec.delta,
            slab_half_height: doc.spec.y,
            dimension: doc.spec.n,
            seed: doc.spec.seed,
        };
        spec.validate()?;
        let mut centers = Vec::with_capacity(doc.centers.len());
        for (k, row) in doc.centers.iter().enumerate() {
            if row.len() != spec.dimension + 1 {
                return Err(Error::Config(format!(
                    "center {k} has {} coordinates, expected {}",
                    row.len(),
                    spec.dimension + 1
                )));
            }
            let mut lateral = [0.0; 2];
            lateral[..spec.dimension].copy_from_slice(&row[..spec.dimension]);
            centers.push(Center { lateral, height: row[spec.dimension] });
        }
        Ok(Self::from_centers(spec, centers))
    }
}

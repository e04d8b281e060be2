//! Experiment drivers: pinning-threshold bisection, quasistatic hysteresis
//! loops, regularization convergence studies, and seeded ensembles.

use rayon::prelude::*;

use crate::analysis::{subsolution_certificate, supersolution_certificate, Certificate};
use crate::obstacle::{sample_field, ObstacleField, ObstacleSpec};
use crate::solver::{
    advance_grid, laplacian, run_until, Backend, Forcing, GridFriction, Outcome, SolverConfig,
    State, TorusGrid,
};
use crate::{Error, Result};

// ------------------------------------------------------------------
// Pinning threshold
// ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub force: f64,
    pub outcome: Outcome,
    pub t_end: f64,
    pub retried: bool,
}

/// Bracket `[f_lo, f_hi]` around the critical force of one field realization:
/// the run at `f_lo` is stationary, the run at `f_hi` escapes.
#[derive(Debug, Clone)]
pub struct PinningReport {
    pub field_seed: u64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub bisection_steps: u32,
    pub doublings: u32,
    /// False when a probe stayed inconclusive after one retry or the
    /// doubling cap was reached without depinning.
    pub resolved: bool,
    pub pinned_profile: Vec<f64>,
    pub supersolution: Certificate,
    pub subsolution: Certificate,
    pub probes: Vec<ProbeRecord>,
}

impl PinningReport {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.f_lo + self.f_hi)
    }
}

fn probe(
    grid: &TorusGrid,
    field: &ObstacleField,
    config: &SolverConfig,
    force: f64,
    probes: &mut Vec<ProbeRecord>,
) -> Result<(Outcome, State)> {
    // Ballistic transit already needs height/F, so budget a multiple of it;
    // the configured t_max is the floor.
    let escape_height = config.escape_height(grid, field.spec());
    let mut t_max = config.t_max;
    if force > 0.0 {
        t_max = t_max.max(3.0 * escape_height / force);
    }
    let forcing = Forcing::Constant(force);
    let mut retried = false;
    loop {
        let run_config = SolverConfig { t_max, ..config.clone() };
        let out = run_until(grid, &State::flat(grid), field, &forcing, &run_config)?;
        if out.outcome != Outcome::Timeout || retried {
            probes.push(ProbeRecord { force, outcome: out.outcome, t_end: out.state.t, retried });
            return Ok((out.outcome, out.state));
        }
        retried = true;
        t_max *= 2.0;
    }
}

/// Bisect the constant driving force between a pinned and an escaped run.
///
/// The bracket starts at `[0, f_init_hi]`; the upper end doubles (at most
/// four times) until a run escapes, then `steps` bisections follow. Timeout
/// probes are retried once with doubled budget before the report is flagged
/// unresolved.
pub fn estimate_pinning_threshold(
    grid: &TorusGrid,
    field: &ObstacleField,
    config: &SolverConfig,
    f_init_hi: f64,
    steps: u32,
) -> Result<PinningReport> {
    if !(f_init_hi > 0.0) {
        return Err(Error::Contract("initial upper force must be positive".into()));
    }
    if steps < 6 {
        return Err(Error::Contract("at least 6 bisection steps are required".into()));
    }
    config.validate(grid)?;
    if !(config.escape_height(grid, field.spec()) > 0.0) {
        return Err(Error::Config(
            "escape height is not positive; enlarge slab_half_height or refine the grid".into(),
        ));
    }

    let mut probes = Vec::new();

    // Zero force: flat start is already stationary; this anchors the bracket
    // and the pinned profile.
    let (outcome, state) = probe(grid, field, config, 0.0, &mut probes)?;
    debug_assert_eq!(outcome, Outcome::Stationary);
    let mut f_lo = 0.0;
    let mut pinned_profile = state.u;

    let mut f_hi = f_init_hi;
    let mut doublings = 0u32;
    let mut resolved = true;
    loop {
        match probe(grid, field, config, f_hi, &mut probes)? {
            (Outcome::Escaped, _) => break,
            (Outcome::Stationary, state) => {
                f_lo = f_hi;
                pinned_profile = state.u;
                if doublings == 4 {
                    resolved = false;
                    break;
                }
                doublings += 1;
                f_hi *= 2.0;
            }
            (Outcome::Timeout, _) => {
                resolved = false;
                break;
            }
        }
    }

    let mut bisections = 0u32;
    if resolved {
        for _ in 0..steps {
            let mid = 0.5 * (f_lo + f_hi);
            match probe(grid, field, config, mid, &mut probes)? {
                (Outcome::Stationary, state) => {
                    f_lo = mid;
                    pinned_profile = state.u;
                }
                (Outcome::Escaped, _) => f_hi = mid,
                (Outcome::Timeout, _) => {
                    resolved = false;
                    break;
                }
            }
            bisections += 1;
        }
    }

    let forcing = Forcing::Constant(f_lo);
    let supersolution =
        supersolution_certificate(grid, &pinned_profile, field, &forcing, config.tol_pin);
    let subsolution =
        subsolution_certificate(grid, &pinned_profile, field, &forcing, config.tol_pin);
    Ok(PinningReport {
        field_seed: field.spec().seed,
        f_lo,
        f_hi,
        bisection_steps: bisections,
        doublings,
        resolved,
        pinned_profile,
        supersolution,
        subsolution,
        probes,
    })
}

// ------------------------------------------------------------------
// Quasistatic hysteresis
// ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisSample {
    pub t: f64,
    pub f: f64,
    pub mean_u: f64,
    /// Stationarity excess at the sample step; separates pinned tracking
    /// from avalanche transients when the loop branches are compared.
    pub max_excess: f64,
}

#[derive(Debug, Clone)]
pub struct HysteresisReport {
    pub amplitude: f64,
    /// Period actually used (snapped to a whole number of quarter steps).
    pub period: f64,
    pub companion_period: f64,
    pub cycles: u32,
    pub relaxation_time: f64,
    pub samples: Vec<HysteresisSample>,
    /// Signed shoelace area of the last peak-to-peak loop.
    pub loop_area: f64,
    /// Sup distance between the loops at periods P and 2P, parametrized by
    /// the force on each branch.
    pub sup_distance: f64,
    /// |mean u| difference between start and end of the last loop.
    pub closure_gap: f64,
    /// Set when the interface escaped the slab during loading.
    pub depinned: bool,
}

#[derive(Debug, Clone)]
pub struct HysteresisParams {
    pub amplitude: f64,
    pub period: f64,
    /// Full cycles per run; at least 2.
    pub cycles: u32,
    /// Required ratio of quarter-cycle to the measured relaxation time.
    pub quasistatic_factor: f64,
    /// Caller's pinned-threshold estimate (`f_lo` of a pinning report).
    pub pinned_threshold: f64,
}

/// Time for a flat interface to become stationary under constant force.
pub fn measure_relaxation_time(
    grid: &TorusGrid,
    field: &ObstacleField,
    amplitude: f64,
    config: &SolverConfig,
) -> Result<(f64, Outcome)> {
    let out = run_until(grid, &State::flat(grid), field, &Forcing::Constant(amplitude), config)?;
    Ok((out.state.t, out.outcome))
}

struct CycleRun {
    samples: Vec<HysteresisSample>,
    /// Step index of each sample, aligned with `samples`.
    steps: Vec<u64>,
    steps_per_quarter: u64,
    depinned: bool,
}

/// Fixed-step triangular loading. During exactly frozen stretches (prox
/// backend, zero excess) the update is the identity, so steps are skipped
/// while the force stays strictly inside the frozen interval; the skipped
/// records are emitted unchanged. Conservative by one ulp-scale margin:
/// boundary steps are always computed explicitly, so the output is
/// bit-identical to the naive loop.
#[allow(clippy::too_many_arguments)]
fn run_cycles(
    grid: &TorusGrid,
    friction: &GridFriction,
    config: &SolverConfig,
    amplitude: f64,
    steps_per_quarter: u64,
    cycles: u32,
    escape_height: f64,
    initial: &[f64],
    accelerate: bool,
) -> Result<CycleRun> {
    let dt = config.dt(grid);
    let sp = 4 * steps_per_quarter;
    let total = sp * cycles as u64;
    let period = sp as f64 * dt;
    let forcing = Forcing::Cycle { amplitude, period };
    let stride = config.output_stride;
    let nodes = grid.nodes();

    let mut u = initial.to_vec();
    let mut u_next = vec![0.0; nodes];
    let mut phi_buf = vec![0.0; nodes];
    let mut samples = Vec::new();
    let mut steps = Vec::new();
    let mut depinned = false;

    let force_at = |step: u64| forcing.value_at(0, step as f64 * dt);
    let mean_of = |u: &[f64]| u.iter().sum::<f64>() / nodes as f64;
    let is_mark =
        |step: u64| step.is_multiple_of(stride) || step.is_multiple_of(steps_per_quarter);
    let initial_excess = {
        let lap = laplacian(grid, &u);
        let f0 = force_at(0);
        lap.iter()
            .enumerate()
            .map(|(i, l)| (l + f0).abs() - friction.phi(i, u[i]))
            .fold(0.0f64, f64::max)
    };
    samples.push(HysteresisSample { t: 0.0, f: force_at(0), mean_u: mean_of(&u), max_excess: initial_excess });
    steps.push(0);

    let mut k = 0u64;
    let mut frozen_interval: Option<(f64, f64)> = None;
    let mut frozen_mean = 0.0;
    while k < total {
        if let Some((lo, hi)) = frozen_interval {
            let f_now = force_at(k);
            if f_now > lo && f_now < hi {
                // Identity step: state unchanged, only the record marks move.
                k += 1;
                if is_mark(k) || k == total {
                    samples.push(HysteresisSample {
                        t: k as f64 * dt,
                        f: force_at(k),
                        mean_u: frozen_mean,
                        max_excess: 0.0,
                    });
                    steps.push(k);
                }
                continue;
            }
            frozen_interval = None;
        }
        let t = k as f64 * dt;
        let stats = advance_grid(grid, &u, &mut u_next, &mut phi_buf, t, friction, &forcing,
            config.backend, dt);
        std::mem::swap(&mut u, &mut u_next);
        k += 1;
        if !stats.finite {
            return Err(Error::Numerical { step: k, message: "state contains NaN or infinity".into() });
        }
        if is_mark(k) || k == total {
            samples.push(HysteresisSample {
                t: k as f64 * dt,
                f: force_at(k),
                mean_u: mean_of(&u),
                max_excess: stats.max_excess,
            });
            steps.push(k);
        }
        if stats.min_u >= escape_height {
            depinned = true;
            break;
        }
        if accelerate && config.backend == Backend::Prox && stats.max_excess == 0.0 {
            // All nodes are inside the friction dead zone; they stay frozen
            // while  -phi - lap <= f <= phi - lap  holds at every node.
            let lap = laplacian(grid, &u);
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (i, &l) in lap.iter().enumerate() {
                let phi = friction.phi(i, u[i]);
                lo = lo.max(-phi - l);
                hi = hi.min(phi - l);
            }
            // Shrink by an ulp-scale guard: boundary steps fall through to a
            // real advance, keeping the fast path bit-identical to stepping.
            let guard = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            let (lo, hi) = (lo + guard, hi - guard);
            if lo < hi {
                frozen_interval = Some((lo, hi));
                frozen_mean = mean_of(&u);
            }
        }
    }
    Ok(CycleRun { samples, steps, steps_per_quarter, depinned })
}

/// Piecewise-linear interpolation along one monotone branch, clamped.
fn interp_branch(f: &[f64], u: &[f64], query: f64) -> f64 {
    debug_assert!(f.len() == u.len() && f.len() >= 2);
    let ascending = f[f.len() - 1] >= f[0];
    let pos = |x: f64| if ascending { x } else { -x };
    let q = pos(query);
    if q <= pos(f[0]) {
        return u[0];
    }
    if q >= pos(f[f.len() - 1]) {
        return u[u.len() - 1];
    }
    let k = f.partition_point(|&x| pos(x) <= q);
    let (f0, f1) = (f[k - 1], f[k]);
    if f1 == f0 {
        return u[k - 1];
    }
    let w = (query - f0) / (f1 - f0);
    u[k - 1] + w * (u[k] - u[k - 1])
}

fn shoelace(points: &[(f64, f64)]) -> f64 {
    let mut twice = 0.0;
    for k in 0..points.len() {
        let (x0, y0) = points[k];
        let (x1, y1) = points[(k + 1) % points.len()];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

struct Loop {
    /// Descending branch (force from +A to -A): (force, mean u).
    descending: (Vec<f64>, Vec<f64>),
    /// Ascending branch (force from -A back to +A).
    ascending: (Vec<f64>, Vec<f64>),
    area: f64,
    closure_gap: f64,
}

/// Extract the last complete +A-peak-to-peak window, on which both branches
/// are monotone in the force: descending from +A to -A, then ascending back.
///
/// The branch curves used for the rate comparison keep only quasi-stationary
/// samples: during an avalanche the state at a given force is a transient
/// whose pointwise position never converges between rates, while the pinned
/// segments and the jump endpoints do. A sample counts as quasi-stationary
/// when no node moves faster than the force sweeps (`excess <= 4A/P`), a cut
/// that tightens as the loading slows. Area and closure use every sample.
fn extract_loop(run: &CycleRun, cycles: u32, amplitude: f64, period: f64) -> Loop {
    let q = run.steps_per_quarter;
    let sp = 4 * q;
    let start = (cycles as u64 - 2) * sp + q;
    let trough = start + 2 * q;
    let end = start + sp;
    let cut = 4.0 * amplitude / period;
    let mut descending = (Vec::new(), Vec::new());
    let mut ascending = (Vec::new(), Vec::new());
    let mut polygon = Vec::new();
    let mut closure = (None, None);
    for (&step, s) in run.steps.iter().zip(&run.samples) {
        let settled = s.max_excess <= cut;
        if step >= start && step <= trough && settled {
            descending.0.push(s.f);
            descending.1.push(s.mean_u);
        }
        if step >= trough && step <= end && settled {
            ascending.0.push(s.f);
            ascending.1.push(s.mean_u);
        }
        if step == start {
            closure.0 = Some(s.mean_u);
        }
        if step == end {
            closure.1 = Some(s.mean_u);
        }
        // The closing edge back to the start vertex is implicit.
        if step >= start && step < end {
            polygon.push((s.f, s.mean_u));
        }
    }
    let area = shoelace(&polygon);
    let closure_gap = match closure {
        (Some(first), Some(last)) => (last - first).abs(),
        _ => 0.0,
    };
    Loop { descending, ascending, area, closure_gap }
}

fn loop_sup_distance(a: &Loop, b: &Loop, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    // A branch with no quasi-stationary samples cannot certify agreement.
    for (f, _) in [&a.descending, &a.ascending, &b.descending, &b.ascending] {
        if f.len() < 2 {
            return f64::INFINITY;
        }
    }
    let queries = 257;
    let mut sup = 0.0f64;
    for k in 0..queries {
        let f = -amplitude + 2.0 * amplitude * k as f64 / (queries - 1) as f64;
        let d_desc = (interp_branch(&a.descending.0, &a.descending.1, f)
            - interp_branch(&b.descending.0, &b.descending.1, f))
        .abs();
        let d_asc = (interp_branch(&a.ascending.0, &a.ascending.1, f)
            - interp_branch(&b.ascending.0, &b.ascending.1, f))
        .abs();
        sup = sup.max(d_desc).max(d_asc);
    }
    sup
}

/// Drive a triangular force cycle `0 -> A -> -A -> 0` at the given period
/// and at double the period, and compare the two loops.
pub fn run_hysteresis(
    grid: &TorusGrid,
    field: &ObstacleField,
    params: &HysteresisParams,
    config: &SolverConfig,
) -> Result<HysteresisReport> {
    config.validate(grid)?;
    if params.amplitude < 0.0 {
        return Err(Error::Contract("loading amplitude must be nonnegative".into()));
    }
    if params.amplitude > params.pinned_threshold {
        return Err(Error::Contract(
            "loading amplitude exceeds the pinned-threshold estimate (sub-threshold loading required)"
                .into(),
        ));
    }
    if params.cycles < 2 {
        return Err(Error::Contract("at least 2 full cycles are required".into()));
    }
    if !(params.period > 0.0) {
        return Err(Error::Config("cycle period must be positive".into()));
    }

    // Quasistatic adequacy: each quarter cycle must exceed the configured
    // multiple of the relaxation time at constant f = A. The relaxed profile
    // also seeds both cycle runs, so the rate pair traverses the same pinned
    // configuration family instead of locking onto rate-dependent orbits
    // during the first ramp.
    let relax =
        run_until(grid, &State::flat(grid), field, &Forcing::Constant(params.amplitude), config)?;
    let (relaxation_time, relax_outcome) = (relax.state.t, relax.outcome);
    match relax_outcome {
        Outcome::Stationary => {}
        Outcome::Escaped => {
            // Loading at this amplitude depins the interface outright.
            return Ok(HysteresisReport {
                amplitude: params.amplitude,
                period: params.period,
                companion_period: 2.0 * params.period,
                cycles: params.cycles,
                relaxation_time,
                samples: Vec::new(),
                loop_area: 0.0,
                sup_distance: 0.0,
                closure_gap: 0.0,
                depinned: true,
            });
        }
        Outcome::Timeout => {
            return Err(Error::Contract(
                "relaxation at the loading amplitude did not settle within t_max".into(),
            ));
        }
    }
    if params.period / 4.0 < params.quasistatic_factor * relaxation_time {
        return Err(Error::Contract(format!(
            "period {} is too fast for quasistatic loading: quarter cycle must reach {} (factor {} of the relaxation time {})",
            params.period,
            4.0 * params.quasistatic_factor * relaxation_time,
            params.quasistatic_factor,
            relaxation_time,
        )));
    }

    let dt = config.dt(grid);
    let steps_per_quarter = ((params.period / (4.0 * dt)).round() as u64).max(1);
    let escape_height = config.escape_height(grid, field.spec());
    let friction = GridFriction::new(field, grid);

    let main = run_cycles(grid, &friction, config, params.amplitude, steps_per_quarter,
        params.cycles, escape_height, &relax.state.u, true)?;
    let period = (4 * steps_per_quarter) as f64 * dt;
    if main.depinned {
        return Ok(HysteresisReport {
            amplitude: params.amplitude,
            period,
            companion_period: 2.0 * period,
            cycles: params.cycles,
            relaxation_time,
            samples: main.samples,
            loop_area: 0.0,
            sup_distance: 0.0,
            closure_gap: 0.0,
            depinned: true,
        });
    }
    let companion = run_cycles(grid, &friction, config, params.amplitude, 2 * steps_per_quarter,
        params.cycles, escape_height, &relax.state.u, true)?;
    if companion.depinned {
        return Ok(HysteresisReport {
            amplitude: params.amplitude,
            period,
            companion_period: 2.0 * period,
            cycles: params.cycles,
            relaxation_time,
            samples: main.samples,
            loop_area: 0.0,
            sup_distance: 0.0,
            closure_gap: 0.0,
            depinned: true,
        });
    }

    let main_loop = extract_loop(&main, params.cycles, params.amplitude, period);
    let companion_loop =
        extract_loop(&companion, params.cycles, params.amplitude, 2.0 * period);
    let sup_distance = loop_sup_distance(&main_loop, &companion_loop, params.amplitude);

    Ok(HysteresisReport {
        amplitude: params.amplitude,
        period,
        companion_period: 2.0 * period,
        cycles: params.cycles,
        relaxation_time,
        samples: main.samples,
        loop_area: main_loop.area,
        sup_distance,
        closure_gap: main_loop.closure_gap,
        depinned: false,
    })
}

// ------------------------------------------------------------------
// Regularization convergence
// ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EpsStudyReport {
    pub eps: Vec<f64>,
    /// Per-eps sup-norm gap to the prox trajectory over matched times.
    pub gaps: Vec<f64>,
    pub monotone: bool,
    pub force: f64,
    pub t_study: f64,
}

/// Evolve the prox backend once and each regularized backend on the same
/// grid and dt; the gap is the max over recorded times of the sup distance.
pub fn epsilon_convergence_study(
    grid: &TorusGrid,
    field: &ObstacleField,
    force: f64,
    eps_list: &[f64],
    config: &SolverConfig,
    t_study: f64,
) -> Result<EpsStudyReport> {
    if eps_list.is_empty() {
        return Err(Error::Contract("epsilon list must not be empty".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Contract("epsilon values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Contract("epsilon list must be strictly decreasing".into()));
    }
    config.validate(grid)?;
    if !(t_study > 0.0) {
        return Err(Error::Config("study horizon must be positive".into()));
    }

    let dt = config.dt(grid);
    let steps = (t_study / dt).ceil() as u64;
    let stride = config.output_stride;
    let friction = GridFriction::new(field, grid);
    let forcing = Forcing::Constant(force);

    type OnRecord<'a> = Box<dyn FnMut(u64, &[f64]) + 'a>;
    let evolve = |backend: Backend, mut on_record: OnRecord<'_>| -> Result<()> {
        let mut u = vec![0.0; grid.nodes()];
        let mut u_next = vec![0.0; grid.nodes()];
        let mut phi_buf = vec![0.0; grid.nodes()];
        for k in 0..steps {
            let stats = advance_grid(grid, &u, &mut u_next, &mut phi_buf, k as f64 * dt, &friction,
                &forcing, backend, dt);
            std::mem::swap(&mut u, &mut u_next);
            if !stats.finite {
                return Err(Error::Numerical {
                    step: k + 1,
                    message: "state contains NaN or infinity".into(),
                });
            }
            if (k + 1).is_multiple_of(stride) || k + 1 == steps {
                on_record(k + 1, &u);
            }
        }
        Ok(())
    };

    let mut reference: Vec<Vec<f64>> = Vec::new();
    evolve(Backend::Prox, Box::new(|_, u| reference.push(u.to_vec())))?;

    let mut gaps = Vec::with_capacity(eps_list.len());
    for &epsilon in eps_list {
        let mut gap = 0.0f64;
        let mut index = 0usize;
        evolve(
            Backend::Regularized { epsilon },
            Box::new(|_, u| {
                let sup = u
                    .iter()
                    .zip(&reference[index])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                gap = gap.max(sup);
                index += 1;
            }),
        )?;
        gaps.push(gap);
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    Ok(EpsStudyReport { eps: eps_list.to_vec(), gaps, monotone, force, t_study })
}

// ------------------------------------------------------------------
// Ensembles
// ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub seed: u64,
    /// `None` when the member's bracket stayed unresolved.
    pub bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub members: Vec<EnsembleMember>,
    /// Sample mean of the resolved bracket midpoints.
    pub mean: f64,
    /// Unbiased sample variance of the midpoints (0 with fewer than 2).
    pub variance: f64,
    pub unresolved: usize,
}

/// Estimate the pinning threshold for one field realization per seed, in
/// parallel, and aggregate the bracket midpoints.
pub fn ensemble_statistics(
    grid: &TorusGrid,
    base_spec: &ObstacleSpec,
    seeds: &[u64],
    config: &SolverConfig,
    f_init_hi: f64,
    steps: u32,
) -> Result<EnsembleReport> {
    if seeds.len() < 8 {
        return Err(Error::Contract("at least 8 seeds are required".into()));
    }
    let reports: Vec<Result<PinningReport>> = seeds
        .par_iter()
        .map(|&seed| {
            let spec = ObstacleSpec { seed, ..base_spec.clone() };
            let field = sample_field(&spec)?;
            estimate_pinning_threshold(grid, &field, config, f_init_hi, steps)
        })
        .collect();

    let mut members = Vec::with_capacity(seeds.len());
    let mut midpoints = Vec::new();
    for (seed, report) in seeds.iter().zip(reports) {
        let report = report?;
        let bracket = report.resolved.then_some((report.f_lo, report.f_hi));
        if let Some((lo, hi)) = bracket {
            midpoints.push(0.5 * (lo + hi));
        }
        members.push(EnsembleMember { seed: *seed, bracket });
    }
    let unresolved = members.len() - midpoints.len();
    let mean = if midpoints.is_empty() {
        0.0
    } else {
        midpoints.iter().sum::<f64>() / midpoints.len() as f64
    };
    let variance = if midpoints.len() < 2 {
        0.0
    } else {
        midpoints.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
            / (midpoints.len() - 1) as f64
    };
    Ok(EnsembleReport { members, mean, variance, unresolved })
}

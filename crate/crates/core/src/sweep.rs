//! Parameter sweeps over `F` and `d₀`, drive scans, grid refinement and
//! power-law fits.

use std::time::Instant;

use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::engine::{block_spectra, capacity_reports, spectrum_floor, EngineSettings, PointResult};
use crate::error::{Error, Result};
use crate::memory_map::Direction;
use crate::params::{AxialRule, FrequencyRule, ModelParams, Resolution};
use crate::spectrum::{CapacityReport, SpectrumOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::invalid("points", format!("a power-law fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("points", format!("coordinates must be positive and finite, got ({x}, {y})")));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "all x values coincide"));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - exponent * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - residual / syy).clamp(0.0, 1.0) };
    Ok(PowerLawFit { exponent, prefactor: intercept.exp(), r_squared, points_used: points.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMetric {
    /// Leading efficiency of the `m = 0` block.
    LeadingEfficiency,
    /// Total capacity.
    Capacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveOptimum {
    pub drive: f64,
    pub value: f64,
    /// The grid maximizer was an end point of the grid.
    pub on_boundary: bool,
    /// The metric did not vary over the grid.
    pub flat: bool,
}

/// Relative spread below which a metric counts as drive-independent.
pub const FLAT_TOLERANCE: f64 = 1e-9;

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}

/// Maximizes `metric(|Ω̃|)` over a log-spaced grid, then refines by golden
/// section in `ln |Ω̃|` between the grid neighbours of the maximizer until
/// the bracket is narrower than `log_tol`.
///
/// A metric that is constant over the grid (to [`FLAT_TOLERANCE`]) is
/// reported as flat and the middle grid point is returned.
pub fn optimize_drive<F>(grid: &[f64], log_tol: f64, mut metric: F) -> Result<DriveOptimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.len() < 5 {
        return Err(Error::invalid("drive_grid", format!("need at least 5 points, got {}", grid.len())));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("drive_grid", "values must be positive and increasing"));
    }
    if grid[grid.len() - 1] / grid[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::invalid("drive_grid", "grid must span at least two decades"));
    }
    if !(log_tol > 0.0) {
        return Err(Error::invalid("log_tol", "must be positive"));
    }
    let values = grid.iter().map(|&g| metric(g)).collect::<Result<Vec<f64>>>()?;
    let (best, &top) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    if top - low <= FLAT_TOLERANCE * top.abs().max(1.0) {
        let mid = grid.len() / 2;
        log::info!("metric is independent of the drive over the grid; using |Ω̃| = {}", grid[mid]);
        return Ok(DriveOptimum { drive: grid[mid], value: values[mid], on_boundary: false, flat: true });
    }
    let on_boundary = best == 0 || best == grid.len() - 1;
    if on_boundary {
        log::warn!("drive maximizer |Ω̃| = {} lies on the grid boundary; extend the grid", grid[best]);
    }
    let mut lo = grid[best.saturating_sub(1)].ln();
    let mut hi = grid[(best + 1).min(grid.len() - 1)].ln();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = metric(x1.exp())?;
    let mut f2 = metric(x2.exp())?;
    while hi - lo > log_tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = metric(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = metric(x2.exp())?;
        }
    }
    let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let (drive, value) = if f >= top { (x.exp(), f) } else { (grid[best], top) };
    Ok(DriveOptimum { drive, value, on_boundary, flat: false })
}

/// Drive scan on the memory model; only `|Ω̃|` is varied, the phase of
/// `params.drive` is kept.
pub fn optimize_model_drive(
    params: &ModelParams,
    res: &Resolution,
    metric: DriveMetric,
    direction: Direction,
    eta_min: f64,
    grid: &[f64],
    log_tol: f64,
    settings: &EngineSettings,
    cache: Option<&Cache>,
) -> Result<DriveOptimum> {
    let phase = params.drive / params.drive.norm();
    optimize_drive(grid, log_tol, |g| {
        let p = params.with_drive(phase * g)?;
        match metric {
            DriveMetric::LeadingEfficiency => {
                let opts = SpectrumOptions { floor: spectrum_floor(eta_min), want_modes: false, dense_limit: settings.dense_limit };
                Ok(block_spectra(&p, res, 0, &[direction], opts, cache)?[0].leading())
            }
            DriveMetric::Capacity => Ok(capacity_reports(&p, res, &[direction], eta_min, settings, cache)?.reports[0].total_capacity),
        }
    })
}

/// Resource limits and tolerance for [`converge`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeOptions {
    pub tol: f64,
    pub max_rounds: usize,
    pub max_radial: usize,
    pub max_freq: usize,
    pub max_axial: usize,
    pub max_disc_radius: f64,
}

impl Default for ConvergeOptions {
    fn default() -> Self {
        ConvergeOptions { tol: 1e-3, max_rounds: 6, max_radial: 320, max_freq: 256, max_axial: 512, max_disc_radius: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Radial,
    Freq,
    Axial,
    Disc,
    Window,
}

fn axes(res: &Resolution) -> Vec<Axis> {
    let mut v = vec![Axis::Radial, Axis::Freq];
    if res.axial == AxialRule::Quadrature {
        v.push(Axis::Axial);
    }
    v.push(Axis::Disc);
    if matches!(res.frequency, FrequencyRule::Window { .. }) {
        v.push(Axis::Window);
    }
    v
}

fn refine(res: &Resolution, axis: Axis, opts: &ConvergeOptions) -> Option<Resolution> {
    let mut r = *res;
    match axis {
        Axis::Radial => r.n_radial_max *= 2,
        Axis::Freq => r.n_freq *= 2,
        Axis::Axial => r.n_axial *= 2,
        Axis::Disc => {
            // Keep the largest transverse wavenumber fixed while widening the disc.
            let wider = res.disc_radius + 1.0;
            r.n_radial_max = (res.n_radial_max as f64 * wider / res.disc_radius).ceil() as usize;
            r.disc_radius = wider;
        }
        Axis::Window => {
            if let FrequencyRule::Window { halfwidth } = res.frequency {
                r.frequency = FrequencyRule::Window { halfwidth: 2.0 * halfwidth };
                r.n_freq *= 2;
            }
        }
    }
    let within = r.n_radial_max <= opts.max_radial
        && r.n_freq <= opts.max_freq
        && r.n_axial <= opts.max_axial
        && r.disc_radius <= opts.max_disc_radius;
    within.then_some(r)
}

fn summary(out: &PointResult) -> Vec<(f64, f64)> {
    out.reports.iter().map(|r| (r.total_capacity, r.leading())).collect()
}

fn changed(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> bool {
    a.iter().zip(b).any(|(x, y)| (x.0 - y.0).abs() > tol * x.0.abs().max(1.0) || (x.1 - y.1).abs() > tol)
}

/// A resolution that passed the refinement test, with its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Converged {
    pub resolution: Resolution,
    pub result: PointResult,
    /// Full passes over the refinement axes, the confirming one included.
    pub rounds: usize,
}

/// Refines the discretization round-robin over the relevant axes (`n_r`,
/// `n_ν`, `n_z` for axial quadrature, `R̃`, and `ν_max` for a truncated
/// window). A refinement is kept when it moves any total capacity
/// (relative to `max(C, 1)`) or leading efficiency by `tol` or more; the
/// loop ends after a round in which no refinement was kept.
pub fn converge(
    params: &ModelParams,
    initial: &Resolution,
    directions: &[Direction],
    eta_min: f64,
    opts: &ConvergeOptions,
    settings: &EngineSettings,
    cache: Option<&Cache>,
) -> Result<Converged> {
    if !(opts.tol > 0.0 && opts.tol <= 0.01) {
        return Err(Error::invalid("tol", format!("{} not in (0, 0.01]", opts.tol)));
    }
    let mut current = capacity_reports(params, initial, directions, eta_min, settings, cache)?;
    let mut res = Resolution { m_max: initial.m_max, ..current.resolution };
    let mut rounds = 0;
    loop {
        if rounds == opts.max_rounds {
            return Err(Error::Convergence { rounds, detail: format!("round limit; last iterate {res:?} with {:?}", summary(&current)) });
        }
        rounds += 1;
        let mut moved = false;
        for axis in axes(&res) {
            let Some(next) = refine(&res, axis, opts) else {
                return Err(Error::Convergence {
                    rounds,
                    detail: format!("resource cap reached refining {axis:?}; last iterate {res:?} with {:?}", summary(&current)),
                });
            };
            let refined = capacity_reports(params, &next, directions, eta_min, settings, cache)?;
            let (before, after) = (summary(&current), summary(&refined));
            log::info!("round {rounds}, refine {axis:?}: {before:?} -> {after:?}");
            if changed(&before, &after, opts.tol) {
                res = Resolution { m_max: res.m_max.max(refined.resolution.m_max), ..next };
                current = refined;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(Converged { resolution: res, result: current, rounds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrivePolicy {
    /// Use `params.drive` as given.
    Fixed,
    /// Scan `|Ω̃|` over `grid` and refine.
    Optimize { metric: DriveMetric, grid: Vec<f64>, log_tol: f64 },
}

impl Default for DrivePolicy {
    fn default() -> Self {
        DrivePolicy::Optimize { metric: DriveMetric::Capacity, grid: log_grid(0.1, 10.0, 5), log_tol: 0.05 }
    }
}

/// What a sweep fits against the swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    Capacity,
    /// Modes with `η ≥ η_min`, degeneracy included.
    ModeCount,
}

impl SweepQuantity {
    pub fn of(self, report: &CapacityReport) -> f64 {
        match self {
            SweepQuantity::Capacity => report.total_capacity,
            SweepQuantity::ModeCount => report.total_modes as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub resolution: Resolution,
    /// Refine each point before reporting; `None` keeps `resolution`.
    pub converge: Option<ConvergeOptions>,
    pub drive: DrivePolicy,
    pub settings: EngineSettings,
    pub detuning: f64,
    /// Drive used for refinement and as the phase reference.
    pub base_drive: c64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            resolution: Resolution::default(),
            converge: Some(ConvergeOptions::default()),
            drive: DrivePolicy::default(),
            settings: EngineSettings::default(),
            detuning: 0.0,
            base_drive: c64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Parameters including the drive actually used.
    pub params: ModelParams,
    pub resolution: Resolution,
    pub report_forward: Option<CapacityReport>,
    pub report_backward: Option<CapacityReport>,
    pub drive: Option<DriveOptimum>,
    pub wall_time: f64,
}

impl SweepPoint {
    pub fn report(&self, direction: Direction) -> Option<&CapacityReport> {
        match direction {
            Direction::Forward => self.report_forward.as_ref(),
            Direction::Backward => self.report_backward.as_ref(),
        }
    }
}

/// Evaluates one parameter point: refine, pick the drive, report both
/// directions.
pub fn sweep_point(
    params: &ModelParams,
    direction: Direction,
    eta_min: f64,
    opts: &SweepOptions,
    cache: Option<&Cache>,
) -> Result<SweepPoint> {
    let start = Instant::now();
    let dirs = Direction::BOTH;
    let res = match &opts.converge {
        Some(c) => converge(params, &opts.resolution, &dirs, eta_min, c, &opts.settings, cache)?.resolution,
        None => opts.resolution,
    };
    let (params, drive) = match &opts.drive {
        DrivePolicy::Fixed => (*params, None),
        DrivePolicy::Optimize { metric, grid, log_tol } => {
            let best = optimize_model_drive(params, &res, *metric, direction, eta_min, grid, *log_tol, &opts.settings, cache)?;
            (params.with_drive(params.drive / params.drive.norm() * best.drive)?, Some(best))
        }
    };
    let out = capacity_reports(&params, &res, &dirs, eta_min, &opts.settings, cache)?;
    let resolution = Resolution { m_max: res.m_max.max(out.resolution.m_max), ..res };
    Ok(SweepPoint {
        params,
        resolution,
        report_forward: out.report(Direction::Forward).cloned(),
        report_backward: out.report(Direction::Backward).cloned(),
        drive,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn check_axis(field: &'static str, values: &[f64]) -> Result<()> {
    if values.len() < 4 {
        return Err(Error::invalid(field, format!("a sweep needs at least 4 values, got {}", values.len())));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(field, "values must be positive and finite"));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi / lo < 4.0 * (1.0 - 1e-12) {
        return Err(Error::invalid(field, format!("values must span at least a factor 4, got {}", hi / lo)));
    }
    Ok(())
}

fn run_sweep(
    points: Vec<ModelParams>,
    xs: &[f64],
    direction: Direction,
    quantity: SweepQuantity,
    eta_min: f64,
    opts: &SweepOptions,
    cache: Option<&Cache>,
) -> Result<(Vec<SweepPoint>, PowerLawFit)> {
    let done =
        points.par_iter().map(|p| sweep_point(p, direction, eta_min, opts, cache)).collect::<Result<Vec<SweepPoint>>>()?;
    let data: Vec<(f64, f64)> = xs
        .iter()
        .zip(&done)
        .map(|(&x, p)| (x, quantity.of(p.report(direction).expect("both directions reported"))))
        .collect();
    let fit = fit_power_law(&data)?;
    Ok((done, fit))
}

/// Capacity of `direction` versus Fresnel number at fixed depth.
pub fn sweep_fresnel(
    depth: f64,
    fresnel_values: &[f64],
    direction: Direction,
    eta_min: f64,
    opts: &SweepOptions,
    cache: Option<&Cache>,
) -> Result<(Vec<SweepPoint>, PowerLawFit)> {
    check_axis("fresnel_values", fresnel_values)?;
    let points = fresnel_values
        .iter()
        .map(|&f| ModelParams::new(depth, f)?.with_detuning(opts.detuning)?.with_drive(opts.base_drive))
        .collect::<Result<Vec<_>>>()?;
    run_sweep(points, fresnel_values, direction, SweepQuantity::Capacity, eta_min, opts, cache)
}

/// Forward mode count (`η ≥ η_min`) or backward capacity versus depth at
/// fixed Fresnel number.
pub fn sweep_depth(
    fresnel: f64,
    depth_values: &[f64],
    direction: Direction,
    eta_min: f64,
    opts: &SweepOptions,
    cache: Option<&Cache>,
) -> Result<(Vec<SweepPoint>, PowerLawFit)> {
    check_axis("depth_values", depth_values)?;
    let points = depth_values
        .iter()
        .map(|&d| ModelParams::new(d, fresnel)?.with_detuning(opts.detuning)?.with_drive(opts.base_drive))
        .collect::<Result<Vec<_>>>()?;
    let quantity = match direction {
        Direction::Forward => SweepQuantity::ModeCount,
        Direction::Backward => SweepQuantity::Capacity,
    };
    run_sweep(points, depth_values, direction, quantity, eta_min, opts, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_power_law() {
        let f = fit_power_law(&[(1.0, 2.0), (2.0, 8.0), (4.0, 32.0)]).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12 && (f.prefactor - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12 && f.points_used == 3);
        let c = fit_power_law(&[(1.0, 3.0), (2.0, 3.0), (4.0, 3.0)]).unwrap();
        assert!(c.exponent.abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 1.5f64.powi(i);
                (x, 3.0 * x.powf(1.5) * (1.0 + rng.gen_range(-0.05..=0.05)))
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.exponent - 1.5).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(-1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let pts = [(1.0, 2.3), (2.0, 7.1), (3.0, 20.0), (5.0, 41.0)];
        let a = fit_power_law(&pts).unwrap();
        let scaled: Vec<_> = pts.iter().map(|(x, y)| (x * 7.3, *y)).collect();
        let b = fit_power_law(&scaled).unwrap();
        assert!((a.exponent - b.exponent).abs() < 1e-12);
        assert!((a.prefactor - b.prefactor).abs() > 1e-3);
    }

    #[test]
    fn golden_section_finds_synthetic_maximum() {
        let grid = log_grid(0.1, 100.0, 7);
        let best = optimize_drive(&grid, 1e-6, |w| Ok(-(w.ln() - 1.0).powi(2))).unwrap();
        assert!((best.drive - std::f64::consts::E).abs() < 1e-5, "{best:?}");
        assert!(!best.on_boundary && !best.flat);
    }

    #[test]
    fn boundary_and_flat_metrics() {
        let grid = log_grid(1.0, 100.0, 5);
        let edge = optimize_drive(&grid, 1e-3, |w| Ok(w)).unwrap();
        assert!(edge.on_boundary && (edge.drive - 100.0).abs() < 1e-9);
        let flat = optimize_drive(&grid, 1e-3, |_| Ok(0.25)).unwrap();
        assert!(flat.flat && flat.drive == grid[2]);
        assert!(optimize_drive(&grid[..4], 1e-3, |_| Ok(0.0)).is_err());
        assert!(optimize_drive(&log_grid(1.0, 50.0, 5), 1e-3, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn sweeps_validate_their_axis() {
        let opts = SweepOptions::default();
        assert!(sweep_fresnel(10.0, &[1.0], Direction::Forward, 0.5, &opts, None).is_err());
        assert!(sweep_depth(1.0, &[10.0, 12.0, 14.0, 16.0], Direction::Forward, 0.5, &opts, None).is_err());
    }

    #[test]
    fn converge_rejects_bad_tolerance() {
        let params = ModelParams::new(5.0, 0.5).unwrap();
        let opts = ConvergeOptions { tol: 0.05, ..Default::default() };
        let r = converge(&params, &Resolution::default(), &Direction::BOTH, 0.5, &opts, &EngineSettings::default(), None);
        assert!(matches!(r, Err(Error::Validation { field: "tol", .. })));
    }

    #[test]
    fn converge_on_a_tiny_instance() {
        let params = ModelParams::new(5.0, 0.5).unwrap();
        let initial = Resolution { n_radial_max: 6, n_freq: 16, m_max: 0, ..Default::default() };
        let opts = ConvergeOptions { tol: 0.01, ..Default::default() };
        let out = converge(&params, &initial, &Direction::BOTH, 0.5, &opts, &EngineSettings::default(), None).unwrap();
        assert!(out.resolution.dominates(&initial));
        assert!(out.rounds <= 3, "{} rounds", out.rounds);
        // Converged input comes back unchanged after confirming refinements.
        let again = converge(&params, &out.resolution, &Direction::BOTH, 0.5, &opts, &EngineSettings::default(), None).unwrap();
        assert_eq!(again.resolution, out.resolution);
    }
}

//! Scan, cover, perturb and re-scan until every sampled plane is generic.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{cq_distance, sample_near};
use crate::charts::{ChartMetric, MetricDocument, Point3};
use crate::error::{Error, Result};
use crate::grassmann::{
    self, fiber_normals, full_scan, lattice_point, plane_distance_in, FullScan, RigidReport, ScanGrid,
    ScoredPlane, TangentPlane,
};
use crate::linalg::{self, Vec3};
use crate::perturb::{adapted_chart, with_layer_unchecked, DeformedMetric, LayerField, PerturbationSpec, PositivityProbe};

/// Parameters of a genericization run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub metric: ChartMetric,
    /// Total `C³` budget.
    pub xi: f64,
    pub base_grid: [usize; 3],
    pub fiber_grid: usize,
    /// Planes scoring at or below this are covered by balls.
    pub threshold: f64,
    pub k: f64,
    pub eps: f64,
    pub rho: f64,
    pub eta_pad: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Stop once the scanned minimum of `G` reaches this.
    pub target_margin: f64,
    /// Random planes sampled per ball on top of the covered scan planes.
    pub ball_samples: usize,
}

impl RunConfig {
    pub fn new(metric: ChartMetric) -> Self {
        Self {
            metric,
            xi: 0.05,
            base_grid: [8, 8, 8],
            fiber_grid: 32,
            threshold: 1e-4,
            k: 100.0,
            eps: 0.01,
            rho: 0.2,
            eta_pad: 0.1,
            max_iterations: 4,
            seed: 7,
            output_dir: None,
            target_margin: 1e-4,
            ball_samples: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi = {} must lie in (0, 1)", self.xi)));
        }
        for (name, v) in [
            ("threshold", self.threshold),
            ("K", self.k),
            ("eps", self.eps),
            ("rho", self.rho),
            ("eta_pad", self.eta_pad),
            ("target_margin", self.target_margin),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        self.grid().validate()?;
        crate::perturb::build_h(self.k, self.eps / 3.0)?;
        Ok(())
    }

    pub fn grid(&self) -> ScanGrid {
        ScanGrid { base: self.base_grid, fiber: self.fiber_grid }
    }
}

/// One perturbation ball placed by the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallRecord {
    pub iteration: usize,
    /// Worst-scoring plane the ball is centred on.
    pub center: TangentPlane,
    pub rho: f64,
    pub spec: PerturbationSpec,
    pub s_chosen: f64,
    /// Largest `s` the ball's share of the budget allowed.
    pub s_cap: f64,
    /// `C³` size of the layer per unit `s`.
    pub unit_cost: f64,
    /// Covered scan planes.
    pub covered: usize,
    #[serde(rename = "minG_before")]
    pub min_g_before: f64,
    #[serde(rename = "minG_after")]
    pub min_g_after: f64,
    /// Why no layer was added, if none was.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(rename = "minG_before")]
    pub min_g_before: f64,
    #[serde(rename = "minG_after")]
    pub min_g_after: f64,
    pub planes_below_threshold: usize,
    pub balls: usize,
    pub layers_added: usize,
    /// Minimum `G` over scanned planes outside the iteration's balls, after the iteration.
    pub delta0: Option<f64>,
    /// Times all of the iteration's `s` values were halved after a decrease in `min G`.
    pub halvings: usize,
    pub accepted: bool,
}

/// Outcome of a genericization run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericityCertificate {
    pub input_metric: MetricDocument,
    pub xi: f64,
    pub q: usize,
    pub balls: Vec<BallRecord>,
    #[serde(rename = "final_minG")]
    pub final_min_g: f64,
    /// Bound on `|g̃ − g|_{C³}` that accounts for overlapping supports.
    pub c3_used: f64,
    /// Sum of the per-layer costs.
    pub c3_sum: f64,
    /// `cq_distance(final, input, 3)` on the scan lattice.
    pub c3_measured: f64,
    pub scan_grid: ScanGrid,
    pub threshold: f64,
    pub target_margin: f64,
    pub seed: u64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub success: bool,
    pub message: String,
}

const BISECTION_STEPS: usize = 20;
const MAX_HALVINGS: usize = 8;

/// Layer support as a box in chart coordinates: center and half-widths.
#[derive(Clone, Copy, Debug)]
struct Support {
    center: Vec3,
    half: Vec3,
}

impl Support {
    fn of(spec: &PerturbationSpec) -> Self {
        let outer = spec.rho + spec.eta_pad;
        let mut half = [0.0; 3];
        for (a, h) in half.iter_mut().enumerate() {
            *h = outer * linalg::norm(&spec.frame[a]);
        }
        Self { center: spec.center.0, half }
    }

    fn overlaps(&self, other: &Support, metric: &ChartMetric) -> bool {
        let d = metric.displacement(&self.center, &other.center);
        (0..3).all(|a| d[a].abs() < self.half[a] + other.half[a])
    }
}

/// `C³` bound for a set of layers: at any point only layers overlapping some
/// layer containing it contribute, so the worst overlap-neighborhood sum bounds
/// the total.
fn overlap_bound(metric: &ChartMetric, layers: &[(Support, f64)]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, _) in layers {
        let sum: f64 = layers.iter().filter(|(b, _)| a.overlaps(b, metric)).map(|(_, c)| c).sum();
        worst = worst.max(sum);
    }
    worst
}

/// Greedy cover of `planes` (sorted worst first) by balls of radius `rho` in
/// plane distance. Returns ball centers with the planes each one covers.
pub fn greedy_cover(metric: &ChartMetric, planes: &[ScoredPlane], rho: f64) -> Vec<(ScoredPlane, Vec<ScoredPlane>)> {
    let mut covered = vec![false; planes.len()];
    let mut out = Vec::new();
    for i in 0..planes.len() {
        if covered[i] {
            continue;
        }
        let center = planes[i];
        let members: Vec<usize> = (i..planes.len())
            .into_par_iter()
            .filter(|&j| !covered[j] && plane_distance_in(metric, &center.plane, &planes[j].plane) <= rho)
            .collect();
        let mut list = Vec::with_capacity(members.len());
        for j in members {
            covered[j] = true;
            list.push(planes[j]);
        }
        out.push((center, list));
    }
    out
}

fn min_score(metric: &ChartMetric, samples: &[(Point3, Vec3)]) -> Result<f64> {
    let scores: Vec<Result<f64>> = samples
        .par_iter()
        .map(|(x, nu)| Ok(grassmann::score_at(metric, x, nu)?.1.value))
        .collect();
    scores.into_iter().try_fold(f64::INFINITY, |m, r| Ok(m.min(r?)))
}

/// Largest `s ≤ s_cap` (cap first, then bisection) whose layer keeps the
/// metric positive and raises the sampled minimum above `before`.
fn search_scale(
    metric: &ChartMetric,
    spec: &PerturbationSpec,
    samples: &[(Point3, Vec3)],
    before: f64,
    s_cap: f64,
    probe: &PositivityProbe,
) -> Result<(f64, f64)> {
    let mut trial = with_layer_unchecked(metric, PerturbationSpec { s: s_cap, ..spec.clone() })?;
    let mut at = |s: f64| -> Result<Option<f64>> {
        if !probe.admits(s) {
            return Ok(None);
        }
        trial.set_last_scale(s);
        Ok(Some(min_score(&trial, samples)?))
    };
    if let Some(g) = at(s_cap)? {
        if g > before {
            return Ok((s_cap, g));
        }
    }
    let (mut lo, mut hi) = (0.0, s_cap);
    let mut best = before;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        match at(mid)? {
            Some(g) if g > before => {
                lo = mid;
                best = g;
            }
            _ => hi = mid,
        }
    }
    Ok((lo, best))
}

fn ball_samples(
    metric: &ChartMetric,
    center: &ScoredPlane,
    covered: &[ScoredPlane],
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(Point3, Vec3)> {
    let mut out: Vec<(Point3, Vec3)> =
        covered.iter().map(|p| (p.plane.base, p.plane.subspace_normal())).collect();
    let r = cfg.rho / 2f64.sqrt();
    out.extend(sample_near(metric, &linalg::IDENTITY, &center.plane, r, r, cfg.ball_samples, rng));
    out
}

/// A ball's planned layer before its scale is chosen.
struct Planned {
    center: ScoredPlane,
    covered: Vec<ScoredPlane>,
    spec: Option<PerturbationSpec>,
    support: Option<Support>,
    unit_cost: f64,
    budget: f64,
    skipped: Option<String>,
}

fn plan_balls(
    metric: &ChartMetric,
    cover: Vec<(ScoredPlane, Vec<ScoredPlane>)>,
    existing: &[(Support, f64)],
    cfg: &RunConfig,
) -> Result<Vec<Planned>> {
    let mut planned: Vec<Planned> = Vec::with_capacity(cover.len());
    for (center, covered) in cover {
        let (_, spec) = adapted_chart(&center.plane, cfg.k, cfg.eps, cfg.rho, cfg.eta_pad)?;
        let mut p = Planned {
            center,
            covered,
            spec: None,
            support: None,
            unit_cost: 0.0,
            budget: 0.0,
            skipped: None,
        };
        match spec.validate_for(metric) {
            Ok(()) => {
                p.unit_cost = LayerField::new(&spec)?.c3_bound();
                p.support = Some(Support::of(&spec));
                p.spec = Some(spec);
            }
            Err(Error::Config(msg)) => p.skipped = Some(msg),
            Err(e) => return Err(e),
        }
        planned.push(p);
    }
    // Share the budget so that every overlap neighborhood, including earlier
    // layers, stays within xi.
    let supports: Vec<Option<Support>> = planned.iter().map(|p| p.support).collect();
    let room: Vec<(usize, f64)> = supports
        .iter()
        .map(|s| match s {
            Some(a) => {
                let degree = supports.iter().flatten().filter(|b| a.overlaps(b, metric)).count();
                let spent: f64 = existing.iter().filter(|(b, _)| a.overlaps(b, metric)).map(|(_, c)| c).sum();
                (degree, (cfg.xi - spent).max(0.0))
            }
            None => (0, 0.0),
        })
        .collect();
    for i in 0..planned.len() {
        let Some(a) = supports[i] else { continue };
        let mut budget = f64::INFINITY;
        for (j, b) in supports.iter().enumerate() {
            if let Some(b) = b {
                if a.overlaps(b, metric) {
                    budget = budget.min(room[j].1 / room[j].0 as f64);
                }
            }
        }
        planned[i].budget = budget;
    }
    Ok(planned)
}

fn off_cover_margin(metric: &ChartMetric, scan: &FullScan, centers: &[TangentPlane], rho: f64) -> Option<f64> {
    let m = scan
        .lattice
        .par_iter()
        .chain(scan.refined.par_iter())
        .filter(|p| centers.iter().all(|c| plane_distance_in(metric, c, &p.plane) > rho))
        .map(|p| p.score.value)
        .reduce(|| f64::INFINITY, f64::min);
    m.is_finite().then_some(m)
}

/// Run the scan–cover–perturb loop.
pub fn genericize(cfg: &RunConfig) -> Result<(DeformedMetric, GenericityCertificate)> {
    cfg.validate()?;
    let grid = cfg.grid();
    let input = &cfg.metric;
    let mut current = DeformedMetric::identity(input);
    let mut costs: Vec<(Support, f64)> = Vec::new();
    let mut balls: Vec<BallRecord> = Vec::new();
    let mut history = Vec::new();
    let mut scan = full_scan(current.metric(), &grid)?;
    let mut min_g = scan.min_overall();
    let mut message = String::new();
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        if min_g >= cfg.target_margin {
            break;
        }
        iterations = it + 1;
        let rigid = scan.below(cfg.threshold);
        let cover = greedy_cover(current.metric(), &rigid, cfg.rho);
        let planned = plan_balls(current.metric(), cover, &costs, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (it as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

        // Choose scales sequentially on top of the layers placed so far.
        let mut trial_metric = current.clone();
        let mut records = Vec::with_capacity(planned.len());
        let mut chosen: Vec<(PerturbationSpec, Support, f64)> = Vec::new();
        for p in &planned {
            let samples = ball_samples(trial_metric.metric(), &p.center, &p.covered, cfg, &mut rng);
            let before = min_score(trial_metric.metric(), &samples)?;
            let mut rec = BallRecord {
                iteration: it,
                center: p.center.plane,
                rho: cfg.rho,
                spec: p.spec.clone().unwrap_or_else(|| {
                    adapted_chart(&p.center.plane, cfg.k, cfg.eps, cfg.rho, cfg.eta_pad)
                        .map(|(_, s)| s)
                        .expect("frame was accepted once")
                }),
                s_chosen: 0.0,
                s_cap: 0.0,
                unit_cost: p.unit_cost,
                covered: p.covered.len(),
                min_g_before: before,
                min_g_after: before,
                skipped: p.skipped.clone(),
            };
            if let (Some(spec), Some(support)) = (&p.spec, p.support) {
                if before >= cfg.target_margin {
                    rec.skipped = Some("ball already meets the target margin".into());
                } else {
                    let s_cap = p.budget / p.unit_cost;
                    rec.s_cap = s_cap;
                    let probe = PositivityProbe::new(trial_metric.metric(), spec)?;
                    let (s, after) = if s_cap > 0.0 {
                        search_scale(trial_metric.metric(), spec, &samples, before, s_cap, &probe)?
                    } else {
                        (0.0, before)
                    };
                    if s > 0.0 {
                        let spec = PerturbationSpec { s, ..spec.clone() };
                        trial_metric.push_unchecked(spec.clone())?;
                        rec.spec = spec.clone();
                        rec.s_chosen = s;
                        rec.min_g_after = after;
                        chosen.push((spec, support, p.unit_cost));
                    } else {
                        rec.skipped = Some("no admissible s raised the ball minimum".into());
                    }
                }
            }
            records.push(rec);
        }

        // Apply; halve every s while the scanned minimum would drop.
        let mut halvings = 0;
        let mut accepted = false;
        let mut next = trial_metric;
        let mut next_scan;
        loop {
            next_scan = full_scan(next.metric(), &grid)?;
            if next_scan.min_overall() >= min_g {
                accepted = true;
                break;
            }
            if halvings == MAX_HALVINGS || chosen.is_empty() {
                break;
            }
            halvings += 1;
            for (spec, _, _) in chosen.iter_mut() {
                spec.s *= 0.5;
            }
            for r in records.iter_mut() {
                r.s_chosen *= 0.5;
            }
            // Scaling every new layer down keeps positivity: the halved metric
            // is the midpoint of two positive ones.
            next = current.clone();
            for (spec, _, _) in &chosen {
                next.push_unchecked(spec.clone())?;
            }
        }
        let centers: Vec<TangentPlane> = records.iter().map(|r| r.center).collect();
        let after = next_scan.min_overall();
        history.push(IterationRecord {
            iteration: it,
            min_g_before: min_g,
            min_g_after: if accepted { after } else { min_g },
            planes_below_threshold: rigid.len(),
            balls: records.len(),
            layers_added: if accepted { chosen.len() } else { 0 },
            delta0: off_cover_margin(next.metric(), &next_scan, &centers, cfg.rho),
            halvings,
            accepted,
        });
        if !accepted {
            message = format!("iteration {it} could not avoid decreasing min G; stopped");
            break;
        }
        for (spec, support, unit) in &chosen {
            costs.push((*support, spec.s * unit));
        }
        balls.extend(records);
        let progressed = !chosen.is_empty();
        current = next;
        scan = next_scan;
        min_g = after;
        if !progressed {
            message = format!("iteration {it} placed no layer; budget or chart exhausted");
            break;
        }
    }

    let success = min_g >= cfg.target_margin;
    if success {
        message = "target margin reached".into();
    } else if message.is_empty() {
        message = format!("max_iterations = {} reached below the target margin", cfg.max_iterations);
    }
    let c3_sum: f64 = costs.iter().map(|(_, c)| c).sum();
    let c3_used = overlap_bound(input, &costs);
    let c3_measured = if costs.is_empty() {
        0.0
    } else {
        cq_distance(input, current.metric(), 3, cfg.base_grid)?
    };
    let cert = GenericityCertificate {
        input_metric: input.to_document(),
        xi: cfg.xi,
        q: 3,
        balls,
        final_min_g: min_g,
        c3_used,
        c3_sum,
        c3_measured,
        scan_grid: grid,
        threshold: cfg.threshold,
        target_margin: cfg.target_margin,
        seed: cfg.seed,
        iterations,
        history,
        success,
        message,
    };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &cert, current.metric())?;
    }
    Ok((current, cert))
}

/// Run on a pool of `threads` workers (all workers when `None`).
pub fn genericize_with_threads(
    cfg: &RunConfig,
    threads: Option<usize>,
) -> Result<(DeformedMetric, GenericityCertificate)> {
    match threads {
        None => genericize(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| genericize(cfg)),
    }
}

impl GenericityCertificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn write_outputs(dir: &Path, cert: &GenericityCertificate, metric: &ChartMetric) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("certificate.json"), cert.to_json()?)?;
    std::fs::write(dir.join("metric.json"), metric.to_json()?)?;
    Ok(())
}

/// Write `G` over the base slice through the middle of `axis` for every
/// fiber normal of the report's grid. Columns `x, y` are the two remaining
/// coordinates. A report with an empty grid gives a header-only file.
pub fn export_slices(metric: &ChartMetric, report: &RigidReport, axis: usize, out: &Path) -> Result<()> {
    if axis > 2 {
        return Err(Error::Config(format!("slice axis {axis} must be 0, 1 or 2")));
    }
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "x,y,normal_id,G")?;
    let grid = report.grid;
    if grid.base.iter().any(|&n| n == 0) || grid.fiber == 0 {
        w.flush()?;
        return Ok(());
    }
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let normals = fiber_normals(grid.fiber);
    let mid = grid.base[axis] / 2;
    let cells: Vec<[usize; 3]> = (0..grid.base[a])
        .flat_map(|i| (0..grid.base[b]).map(move |j| (i, j)))
        .map(|(i, j)| {
            let mut idx = [0; 3];
            idx[axis] = mid;
            idx[a] = i;
            idx[b] = j;
            idx
        })
        .collect();
    let rows: Vec<Result<Vec<(f64, f64, usize, f64)>>> = cells
        .par_iter()
        .map(|idx| {
            let p = lattice_point(metric, &grid, *idx);
            let c = crate::tensor::curvature_at(metric, &p)?;
            normals
                .iter()
                .enumerate()
                .map(|(f, nu)| {
                    let plane = grassmann::plane_with_normal(&c.g, p, nu)?;
                    Ok((p.0[a], p.0[b], f, grassmann::generic_score(&c, &plane).value))
                })
                .collect()
        })
        .collect();
    for r in rows {
        for (x, y, f, g) in r? {
            writeln!(w, "{x},{y},{f},{g}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::zoo_metric;
    use crate::perturb::deform;
    use std::collections::BTreeMap;

    fn small(name: &str) -> RunConfig {
        let mut cfg = RunConfig::new(zoo_metric(name, &BTreeMap::new()).unwrap());
        cfg.base_grid = [4, 4, 4];
        cfg.fiber_grid = 8;
        cfg.max_iterations = 1;
        cfg
    }

    #[test]
    fn generic_input_is_returned_unchanged() {
        let mut cfg = small("random_fourier");
        let scan = full_scan(&cfg.metric, &cfg.grid()).unwrap();
        cfg.target_margin = 0.5 * scan.min_overall();
        cfg.threshold = cfg.target_margin;
        let (out, cert) = genericize(&cfg).unwrap();
        assert!(cert.success);
        assert!(cert.balls.is_empty());
        assert!(out.layers.is_empty());
        assert_eq!(cert.c3_used, 0.0);
    }

    #[test]
    fn rejects_bad_budget() {
        let mut cfg = small("flat_torus");
        cfg.xi = 1.5;
        assert!(matches!(genericize(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn cover_reaches_every_plane() {
        let m = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let grid = ScanGrid { base: [4, 4, 4], fiber: 8 };
        let planes = full_scan(&m, &grid).unwrap().below(1e-6);
        let cover = greedy_cover(&m, &planes, 0.2);
        let total: usize = cover.iter().map(|(_, c)| c.len()).sum();
        assert_eq!(total, planes.len());
        for p in &planes {
            assert!(cover.iter().any(|(c, _)| plane_distance_in(&m, &c.plane, &p.plane) <= 0.2));
        }
    }

    #[test]
    fn layer_cost_bounds_measured_distance() {
        let m = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let g = crate::metric_jet(&m, &Point3::new(0.5, 0.5, 0.5)).unwrap().g;
        let plane = grassmann::plane_with_normal(&g, Point3::new(0.5, 0.5, 0.5), &[0.2, 0.3, 0.9]).unwrap();
        let (_, spec) = adapted_chart(&plane, 100.0, 0.01, 0.2, 0.1).unwrap();
        let spec = PerturbationSpec { s: 1e-12, ..spec };
        let unit = LayerField::new(&spec).unwrap().c3_bound();
        let d = deform(&m, spec.clone()).unwrap();
        let measured = cq_distance(&m, d.metric(), 3, [17, 17, 17]).unwrap();
        assert!(measured > 0.0 && measured <= unit * spec.s, "{measured} vs {}", unit * spec.s);
        // At the center χ is flat and h‴ peaks, so the third partials nearly reach the bound.
        let peak = d.metric().raw_jet(&spec.center).unwrap().dddg;
        let top = peak.iter().flatten().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(top <= unit * spec.s && top >= 0.5 * unit * spec.s, "{top} vs {}", unit * spec.s);
    }

    #[test]
    fn empty_report_writes_header_only() {
        let m = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let report = RigidReport {
            grid: ScanGrid { base: [0, 0, 0], fiber: 0 },
            threshold: 0.0,
            min_overall: f64::INFINITY,
            planes: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slice.csv");
        export_slices(&m, &report, 2, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x,y,normal_id,G\n");
    }

    #[test]
    fn flat_slice_is_zero() {
        let m = zoo_metric("flat_torus", &BTreeMap::new()).unwrap();
        let report = crate::grassmann::scan_rigid(&m, [3, 3, 3], 4, 1e-6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slice.csv");
        export_slices(&m, &report, 0, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 9 * 4);
        assert!(rows.iter().all(|r| r.ends_with(",0")));
    }
}

//! The acceptance criteria as runnable checks. Each criterion produces one
//! pass/fail line; its runtime limit is part of the check.

use crate::{
    barycenter_gap_experiment, first_variation_check, mean_value_experiment,
    pair_second_variation, quadrilateral_residual, stepsize_sweep, MeanValueMap, PairVariation, FAMILY_ELLS,
};
use hypmap_core::error::Error;
use hypmap_core::flow::{audit_rate, convergence_constants, run_flow, Method};
use hypmap_core::geometry::{cosh_barycenter, dist, exp_map, tangent_frame, HPoint, TangentVec, WeightedPointSet};
use hypmap_core::mesh::{extract_biweighted_graph, triangulate_polygon};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::polygon::optimize_fundamental_polygon;
use hypmap_core::surface::{fn_to_representation, fn_to_representation_report, FnCoordinates, SurfaceGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionId {
    Quadrilateral,
    SecondVariation,
    Barycenter,
    Representation,
    Mesh,
    Convergence,
    Methods,
    Sweep,
    MeanValue,
}

impl CriterionId {
    pub const ALL: [CriterionId; 9] = [
        CriterionId::Quadrilateral,
        CriterionId::SecondVariation,
        CriterionId::Barycenter,
        CriterionId::Representation,
        CriterionId::Mesh,
        CriterionId::Convergence,
        CriterionId::Methods,
        CriterionId::Sweep,
        CriterionId::MeanValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionId::Quadrilateral => "quadrilateral",
            CriterionId::SecondVariation => "second-variation",
            CriterionId::Barycenter => "barycenter",
            CriterionId::Representation => "representation",
            CriterionId::Mesh => "mesh",
            CriterionId::Convergence => "convergence",
            CriterionId::Methods => "methods",
            CriterionId::Sweep => "sweep",
            CriterionId::MeanValue => "meanvalue",
        }
    }

    pub fn limit(self) -> Duration {
        Duration::from_secs(match self {
            CriterionId::Quadrilateral => 5,
            CriterionId::SecondVariation => 10,
            CriterionId::Barycenter => 30,
            CriterionId::Representation => 10,
            CriterionId::Mesh => 60,
            CriterionId::Convergence => 300,
            CriterionId::Methods => 600,
            CriterionId::Sweep => 900,
            CriterionId::MeanValue => 120,
        })
    }

    pub fn run(self, seed: u64) -> Criterion {
        let start = Instant::now();
        let (ok, detail) = match self {
            CriterionId::Quadrilateral => quadrilateral_suite(seed),
            CriterionId::SecondVariation => second_variation_suite(seed),
            CriterionId::Barycenter => barycenter_suite(seed),
            CriterionId::Representation => representation_suite(seed),
            CriterionId::Mesh => mesh_suite(),
            CriterionId::Convergence => convergence_suite(),
            CriterionId::Methods => methods_suite(),
            CriterionId::Sweep => sweep_suite(),
            CriterionId::MeanValue => mean_value_suite(),
        }
        .unwrap_or_else(|e| (false, format!("error: {e}")));
        let elapsed = start.elapsed();
        Criterion { id: self, passed: ok && elapsed < self.limit(), detail, elapsed }
    }
}

/// Suite selectors accepted on the command line.
pub fn select(name: &str) -> Option<Vec<CriterionId>> {
    use CriterionId::*;
    Some(match name {
        "all" => CriterionId::ALL.to_vec(),
        "geometry" => vec![Quadrilateral, SecondVariation],
        other => vec![*CriterionId::ALL.iter().find(|c| c.name() == other)?],
    })
}

#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: CriterionId,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "{} {:<16} {} [{:.1}s of {}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id.name(),
            self.detail,
            self.elapsed.as_secs_f64(),
            self.id.limit().as_secs()
        )
    }
}

type Outcome = Result<(bool, String), Error>;

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> HPoint {
    let (r, th) = (rng.gen_range(0.0..radius), rng.gen_range(0.0..2.0 * PI));
    exp_map(&TangentVec::project(HPoint::ORIGIN, [r * th.cos(), r * th.sin(), 0.0]))
}

/// A point at distance `len` from `p` in a uniformly random direction.
fn step_from(rng: &mut ChaCha8Rng, p: &HPoint, len: f64) -> HPoint {
    let (e1, e2) = tangent_frame(p);
    let th = rng.gen_range(0.0..2.0 * PI);
    exp_map(&e1.scaled(len * th.cos()).plus(&e2.scaled(len * th.sin())))
}

fn random_vector(rng: &mut ChaCha8Rng, p: &HPoint) -> TangentVec {
    let (e1, e2) = tangent_frame(p);
    e1.scaled(rng.gen_range(-1.0..1.0)).plus(&e2.scaled(rng.gen_range(-1.0..1.0)))
}

/// Random quadrilaterals with all four sides at most 2, including
/// non-convex ones with reflex and negative angles.
pub fn random_quadrilateral(rng: &mut ChaCha8Rng) -> [HPoint; 4] {
    loop {
        let a = random_point(rng, 2.0);
        let l = rng.gen_range(0.05..2.0);
        let b = step_from(rng, &a, l);
        let l = rng.gen_range(0.05..2.0);
        let c = step_from(rng, &b, l);
        let l = rng.gen_range(0.05..2.0);
        let d = step_from(rng, &c, l);
        let da = dist(&d, &a);
        if da > 1e-3 && da <= 2.0 {
            return [a, b, c, d];
        }
    }
}

fn quadrilateral_suite(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let [a, b, c, d] = random_quadrilateral(&mut rng);
        worst = worst.max(quadrilateral_residual(&a, &b, &c, &d)?);
    }
    Ok((worst <= 1e-9, format!("1000 quadrilaterals, worst residual {worst:.2e} (limit 1e-9)")))
}

pub fn random_pair_variation(rng: &mut ChaCha8Rng) -> PairVariation {
    let a = random_point(rng, 2.0);
    let l = rng.gen_range(0.05..3.0);
    let b = step_from(rng, &a, l);
    let (u, v) = (random_vector(rng, &a), random_vector(rng, &b));
    PairVariation { a, b, u, v }
}

fn second_variation_suite(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut second, mut first, mut margin): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for _ in 0..500 {
        let p = random_pair_variation(&mut rng);
        let s = pair_second_variation(&p);
        second = second.max((s.analytic - s.finite_diff).abs() / s.analytic.max(1.0));
        margin = margin.min(s.analytic - s.lower_bound);
        first = first.max(first_variation_check(&p));
    }
    let ok = second <= 1e-5 && first <= 1e-6 && margin >= -1e-9;
    Ok((
        ok,
        format!(
            "500 variations, second {second:.2e} rel (1e-5), first {first:.2e} (1e-6), min E''-bound {margin:.2e} (>= -1e-9)"
        ),
    ))
}

fn barycenter_suite(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_residual: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..10);
        let c = random_point(&mut rng, 2.0);
        let pts: Vec<HPoint> = (0..n)
            .map(|_| {
                let l = rng.gen_range(0.0..3.0);
                step_from(&mut rng, &c, l)
            })
            .collect();
        let ws: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s = WeightedPointSet::new(pts, ws)?;
        worst_residual = worst_residual.max(s.cosh_residual(&cosh_barycenter(&s)).norm());
    }
    let radii: Vec<f64> = (0..9).map(|i| 1e-1 * 10f64.powf(-(i as f64) / 4.0)).collect();
    let mut slopes = Vec::new();
    let mut within = true;
    for k in 0..5 {
        let g = barycenter_gap_experiment(seed.wrapping_add(k), &radii)?;
        within &= g.within_bound;
        slopes.push(g.scaling.slope);
    }
    let slopes_ok = slopes.iter().all(|s| (2.7..=3.3).contains(s));
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(*s), h.max(*s)));
    Ok((
        worst_residual <= 1e-10 && within && slopes_ok,
        format!(
            "cosh residual {worst_residual:.2e} (1e-10), gap within bound: {within}, slopes {lo:.3}..{hi:.3} (2.7..3.3)"
        ),
    ))
}

fn representation_suite(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut ok = true;
    for genus in [2usize, 3] {
        let group = SurfaceGroup::new(genus)?;
        let n = group.curve_count();
        let (mut defect, mut trace, mut bad): (f64, f64, usize) = (0.0, 0.0, 0);
        for _ in 0..50 {
            let fnc = FnCoordinates::new(
                (0..n).map(|_| rng.gen_range(0.2..4.0)).collect(),
                (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            );
            let r = fn_to_representation_report(&group, &fnc)?;
            let t = r.trace_errors.iter().cloned().fold(0.0, f64::max);
            if r.relator_defect > 1e-8 || t > 1e-8 {
                bad += 1;
            }
            defect = defect.max(r.relator_defect);
            trace = trace.max(t);
        }
        ok &= bad == 0;
        parts.push(format!("genus {genus}: worst defect {defect:.1e}, trace {trace:.1e}, {bad}/50 over 1e-8"));
    }
    Ok((ok, parts.join("; ")))
}

fn mesh_suite() -> Outcome {
    let cfg = RunConfig::reference();
    let group = SurfaceGroup::new(cfg.genus)?;
    let rho = fn_to_representation(&group, &cfg.domain)?;
    let poly = optimize_fundamental_polygon(&rho, &group.relator())?;
    let mut mesh = triangulate_polygon(&poly, &rho, cfg.steiner_per_side)?;
    let chi = 2 - 2 * cfg.genus as i64;
    let area = 2.0 * PI * (2 * cfg.genus - 2) as f64;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut prev: Option<(usize, usize, usize)> = None;
    for depth in 0..=3 {
        if depth > 0 {
            mesh = mesh.refine()?;
        }
        let (v, e, f) = mesh.counts();
        if let Some((pv, pe, pf)) = prev {
            ok &= v == pv + pe && e == 2 * pe + 3 * pf && f == 4 * pf;
        }
        prev = Some((v, e, f));
        ok &= mesh.euler_characteristic() == chi;
        match extract_biweighted_graph(&mesh, false) {
            Ok(g) => {
                let mu: f64 = g.mu.iter().sum();
                ok &= (mu - area).abs() <= 1e-6;
                notes.push(format!("d{depth} ({v},{e},{f}) mu-err {:.1e} w-min {:.3}", (mu - area).abs(), g.stats.omega_min));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("d{depth}: {e}"));
            }
        }
    }
    Ok((ok, notes.join("; ")))
}

fn convergence_suite() -> Outcome {
    let cfg = RunConfig::reference();
    let p = Pipeline::build(&cfg)?;
    let run = run_flow(&p.problem, &cfg.flow_config(), p.initial.clone(), |_| {})?;
    let audit = run.descent_audit();
    let t = 1.0 / run.beta;
    let k = convergence_constants(p.problem.stats(), run.energies[0], run.final_state.energy, t)?;
    let ratio = audit_rate(&p.problem, &run, &k);
    let residual = p.problem.barycenter_residual(&run.final_state.map.points, 1e-12)?;
    let ok = run.converged && audit.strictly_decreasing() && ratio <= 1.0 && k.q < 1.0 && residual <= 1e-6;
    Ok((
        ok,
        format!(
            "{} iterations, tension {:.1e}, increases {} stalls {} below-resolution {}, rate ratio {:.2e} (<= 1), q = 1 - {:.2e}, barycenter residual {:.1e} (1e-6)",
            run.iterations(),
            run.final_state.tension_norm,
            audit.increases,
            audit.stalls,
            audit.unresolved,
            ratio,
            1.0 - k.q,
            residual
        ),
    ))
}

fn methods_suite() -> Outcome {
    let base = RunConfig::reference();
    let methods = [Method::Fixed, Method::Optimal, Method::KarcherCom, Method::CoshCom];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (ell, target) in FAMILY_ELLS.iter().zip(crate::target_family(&FAMILY_ELLS)) {
        let mut cfg = base.clone();
        cfg.target = target;
        let p = Pipeline::build(&cfg)?;
        let mut runs = Vec::new();
        for m in methods {
            let fc = hypmap_core::flow::FlowConfig { method: m, stride: usize::MAX, ..cfg.flow_config() };
            runs.push(run_flow(&p.problem, &fc, p.initial.clone(), |_| {})?);
        }
        let iters: Vec<Option<usize>> = runs.iter().map(|r| r.converged.then(|| r.iterations())).collect();
        let fixed = iters[0].unwrap_or(usize::MAX);
        ok &= iters.iter().all(Option::is_some);
        ok &= iters[1].is_some_and(|n| n <= fixed) && iters[3].is_some_and(|n| n <= fixed);
        ok &= runs[2].descent_audit().increases == 0;
        let mut far: f64 = 0.0;
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                far = far.max(p.problem.distance(&runs[i].final_state.map.points, &runs[j].final_state.map.points));
            }
        }
        let heat = p
            .problem
            .distance(&runs[0].final_state.map.points, &runs[1].final_state.map.points)
            .max(p.problem.distance(&runs[0].final_state.map.points, &runs[2].final_state.map.points));
        worst = worst.max(far);
        let show = |o: Option<usize>| o.map_or("-".to_string(), |n| n.to_string());
        notes.push(format!(
            "l={ell}: iters f/o/k/c {}/{}/{}/{}, spread {far:.1e} (without cosh {heat:.1e})",
            show(iters[0]),
            show(iters[1]),
            show(iters[2]),
            show(iters[3])
        ));
    }
    ok &= worst <= 1e-6;
    Ok((ok, notes.join("; ")))
}

fn sweep_suite() -> Outcome {
    let mut cfg = RunConfig::reference();
    cfg.depth = SWEEP_DEPTH;
    let r = stepsize_sweep(&cfg, &FAMILY_ELLS, &SWEEP_FACTORS)?;
    let ok = r.entries.iter().all(|e| e.iterations.is_some()) && r.fits.iter().all(|f| f.monotone && f.r_squared >= 0.9);
    let fits: Vec<String> =
        r.fits.iter().map(|f| format!("l={} R2 {:.6} monotone {}", f.ell, f.r_squared, f.monotone)).collect();
    Ok((ok, format!("depth {SWEEP_DEPTH}: {}", fits.join("; "))))
}

/// Mesh depth of the stepsize sweep.
pub const SWEEP_DEPTH: usize = 1;
pub const SWEEP_FACTORS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];
pub const MEAN_VALUE_RADII: [f64; 5] = [0.2, 0.14, 0.1, 0.07, 0.05];

/// Base point of the mean-value experiment.
pub fn mean_value_point() -> HPoint {
    HPoint::from_xy(0.2, 0.1)
}

fn mean_value_suite() -> Outcome {
    let x = mean_value_point();
    let iso = mean_value_experiment(MeanValueMap::Isometry, &x, &MEAN_VALUE_RADII)?;
    let shear = mean_value_experiment(MeanValueMap::Shear, &x, &MEAN_VALUE_RADII)?;
    let iso_max = iso.values.iter().cloned().fold(0.0, f64::max);
    let ok = (3.7..=4.5).contains(&iso.slope) && shear.slope >= 3.7;
    Ok((
        ok,
        format!(
            "isometry slope {:.3} (3.7..4.5, largest defect {iso_max:.1e}), shear slope {:.3} (>= 3.7)",
            iso.slope, shear.slope
        ),
    ))
}

use hypmap_core::error::Error;
use hypmap_core::flow::{
    alpha_bound, beta_bound, convergence_constants, run_flow, Barycenter, EquivariantMap, FlowConfig, FlowProblem,
    FlowRunner, Method,
};
use hypmap_core::geometry::{dist, exp_map, karcher_barycenter, HPoint, TangentVec, WeightedPointSet};
use hypmap_core::mesh::{BiweightedGraph, Edge, GraphStatistics};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::surface::Word;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edge(a: usize, b: usize) -> Edge {
    Edge { a, b, word: Word::identity() }
}

fn reference(depth: usize) -> Pipeline {
    Pipeline::build(&RunConfig { depth, ..RunConfig::reference() }).unwrap()
}

fn runner(p: &Pipeline, method: Method) -> FlowRunner {
    let config = FlowConfig { method, ..p.config.flow_config() };
    FlowRunner::new(p.problem.clone(), config, p.initial.clone()).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, f: &[HPoint]) -> Vec<TangentVec> {
    f.iter()
        .map(|p| TangentVec::project(*p, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
        .collect()
}

fn exp_along(f: &[HPoint], v: &[TangentVec], h: f64) -> Vec<HPoint> {
    f.iter().zip(v).map(|(p, w)| exp_map(&TangentVec { base: *p, v: w.scaled(h).v })).collect()
}

#[test]
fn toy_energies() {
    let g = BiweightedGraph::from_parts(2, vec![edge(0, 1)], vec![2.0], vec![1.0, 1.0]).unwrap();
    let p = FlowProblem::untwisted(g);
    let b = exp_map(&TangentVec { base: HPoint::ORIGIN, v: [1.0, 0.0, 0.0] });
    assert!((p.energy(&[HPoint::ORIGIN, b]) - 1.0).abs() < 1e-14);
    assert_eq!(p.energy(&[b, b]), 0.0);
    // both ends are pulled toward each other with magnitude ω·d/μ
    let tau = p.tension(&[HPoint::ORIGIN, b]);
    assert!((tau[0].norm() - 2.0).abs() < 1e-14 && tau[0].v[0] > 0.0);
}

#[test]
fn tension_of_collinear_neighbors() {
    // center 0 with three neighbors all at one point q
    let g = BiweightedGraph::from_parts(2, vec![edge(0, 1), edge(0, 2), edge(0, 3)], vec![1.0, 2.0, 0.5], vec![2.0; 4])
        .unwrap();
    let p = FlowProblem::untwisted(g);
    let q = HPoint::from_uhp(1.0, 2.0);
    let x = HPoint::from_uhp(0.0, 1.0);
    let tau = p.tension(&[x, q, q, q]);
    assert!((tau[0].norm() - 3.5 / 2.0 * dist(&x, &q)).abs() < 1e-12);
    let dir = hypmap_core::geometry::log_map(&x, &q);
    assert!((tau[0].dot(&dir) - tau[0].norm() * dir.norm()).abs() < 1e-12);
}

#[test]
fn single_free_vertex_flows_to_the_barycenter() {
    let omega = vec![1.0, 2.0, 0.5, 1.5];
    let g = BiweightedGraph::from_parts(
        2,
        vec![edge(0, 1), edge(0, 2), edge(0, 3), edge(0, 4)],
        omega.clone(),
        vec![1.0; 5],
    )
    .unwrap();
    let p = FlowProblem::untwisted(g);
    let nbrs = vec![HPoint::from_uhp(0.0, 1.0), HPoint::from_uhp(2.0, 1.0), HPoint::from_uhp(-1.0, 3.0), HPoint::from_uhp(0.5, 0.3)];
    let mut f = vec![HPoint::from_uhp(5.0, 5.0)];
    f.extend(nbrs.iter().cloned());
    let t = 1.0 / omega.iter().sum::<f64>();
    for _ in 0..200 {
        let tau = p.tension(&f);
        f[0] = exp_map(&tau[0].scaled(t));
    }
    let c = karcher_barycenter(&WeightedPointSet::new(nbrs, omega).unwrap(), 1e-12).unwrap();
    assert!(dist(&f[0], &c) < 1e-9);
    // one Karcher center-of-mass step lands there directly
    let g = p.com_step(&f, Barycenter::Karcher, 1e-12).unwrap();
    assert!(dist(&g[0], &c) < 1e-9);
}

#[test]
fn tension_is_the_negative_gradient() {
    let p = reference(0);
    let r = runner(&p, Method::Fixed);
    let (prob, f) = (&r.problem, r.chart_points());
    let tau = prob.tension(f);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..20 {
        let v = random_field(&mut rng, f);
        let fd = (prob.energy(&exp_along(f, &v, h)) - prob.energy(&exp_along(f, &v, -h))) / (2.0 * h);
        let analytic = -prob.inner(&tau, &v);
        assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0), "{fd} vs {analytic}");
    }
}

#[test]
fn constants_by_substitution() {
    let s = GraphStatistics { diameter: 1, area: 1.0, omega_min: 1.0, omega_max: 3.0, mu_min: 0.5, max_valence: 6 };
    assert!((alpha_bound(&s) - 1.0 / 36.0).abs() < 1e-15);
    assert!((beta_bound(&s, 0.0) - 4.0 * 6.0 * 3.0 / 0.5).abs() < 1e-12);
    assert!((beta_bound(&s, 1e-20) - 4.0 * 6.0 * 3.0 / 0.5).abs() < 1e-9);
    assert!(beta_bound(&s, 1.0) > beta_bound(&s, 0.0));
    let k = convergence_constants(&s, 2.0, 1.0, 1.0 / beta_bound(&s, 2.0)).unwrap();
    assert!(k.q > 0.0 && k.q < 1.0);
    let too_big = 2.0 / beta_bound(&s, 2.0);
    assert!(matches!(convergence_constants(&s, 2.0, 1.0, too_big), Err(Error::StepsizeOutOfRange { .. })));
}

#[test]
fn reference_constants_give_a_contraction() {
    let p = reference(2);
    let r = runner(&p, Method::Fixed);
    let k = convergence_constants(p.problem.stats(), r.e0, 0.0, 1.0 / r.beta).unwrap();
    assert!(k.alpha > 0.0 && k.alpha < k.beta);
    assert!(k.q < 1.0);
}

#[test]
fn optimal_step_is_no_worse_than_the_fixed_step() {
    let p = reference(0);
    let mut fixed = runner(&p, Method::Fixed);
    let mut optimal = runner(&p, Method::Optimal);
    for _ in 0..20 {
        let start = optimal.chart_points().to_vec();
        let tau = optimal.tension().to_vec();
        let e_fixed = optimal.problem.energy(&optimal.problem.exp(&tau, 1.0 / optimal.beta));
        optimal.step().unwrap();
        assert!(optimal.state().energy <= e_fixed * (1.0 + 1e-12));
        let t = optimal.state().last_stepsize;
        assert!(t >= 1.0 / optimal.beta * (1.0 - 1e-12) && t <= 2.0 / optimal.alpha);
        assert_eq!(start.len(), optimal.chart_points().len());
        fixed.step().unwrap();
    }
    assert!(optimal.state().energy <= fixed.state().energy);
}

#[test]
fn fixed_step_descends_with_stepsize_two_hundredths() {
    let p = reference(0);
    let config = FlowConfig { stepsize: Some(0.02), tolerance: 1e-6, max_iterations: 200_000, stride: 100_000, ..FlowConfig::default() };
    let run = run_flow(&p.problem, &config, p.initial.clone(), |_| {}).unwrap();
    assert!(run.converged, "tension {}", run.final_state.tension_norm);
    assert!(run.final_state.tension_norm <= 1e-6);
    let audit = run.descent_audit();
    assert_eq!(audit.increases, 0, "{audit:?}");
}

#[test]
fn karcher_steps_never_raise_the_energy() {
    let p = reference(1);
    let config = FlowConfig { method: Method::KarcherCom, stride: 1000, ..FlowConfig::default() };
    let run = run_flow(&p.problem, &config, p.initial.clone(), |_| {}).unwrap();
    assert!(run.converged);
    assert!(run.energies.windows(2).all(|w| w[1] <= w[0] + run.energy_errors[0]));
}

#[test]
fn harmonic_start_stops_immediately() {
    let p = reference(0);
    let config = FlowConfig { method: Method::KarcherCom, tolerance: 1e-9, ..FlowConfig::default() };
    let run = run_flow(&p.problem, &config, p.initial.clone(), |_| {}).unwrap();
    assert!(run.converged);
    let again = run_flow(&p.problem, &FlowConfig { tolerance: 1e-8, ..config }, run.final_state.map.clone(), |_| {}).unwrap();
    assert_eq!(again.iterations(), 0);
    assert!(again.converged);
    assert_eq!(again.recorded.len(), 1);
    // a converged Karcher state is a fixed point of the averaging map
    let r = FlowRunner::new(p.problem.clone(), config, run.final_state.map.clone()).unwrap();
    let moved = r.problem.com_step(r.chart_points(), Barycenter::Karcher, 1e-12).unwrap();
    assert!(r.problem.distance(r.chart_points(), &moved) <= 1e-8);
}

#[test]
fn recording_follows_the_stride() {
    let p = reference(0);
    let config = FlowConfig { max_iterations: 25, stride: 10, ..FlowConfig::default() };
    let mut seen = vec![];
    let run = run_flow(&p.problem, &config, p.initial.clone(), |s| seen.push(s.iteration)).unwrap();
    assert_eq!(seen, vec![0, 10, 20, 25]);
    assert_eq!(run.energies.len(), 26);
    assert!(!run.converged);
}

#[test]
fn identical_surfaces_start_at_the_identity() {
    let mut tension = vec![];
    for depth in 0..3 {
        let cfg = RunConfig { depth, target: RunConfig::reference().domain, ..RunConfig::reference() };
        let p = Pipeline::build(&cfg).unwrap();
        for (a, b) in p.initial.points.iter().zip(&p.mesh.reps) {
            assert!(dist(a, b) < 1e-9);
        }
        let mut r = runner(&p, Method::Fixed);
        let t0 = r.state().tension_norm;
        tension.push(t0);
        for _ in 0..200 {
            r.step().unwrap();
            assert!(r.state().tension_norm <= t0 + 1e-10);
        }
    }
    // discretization error of the identity shrinks under refinement
    assert!(tension.windows(2).all(|w| w[1] < w[0]), "{tension:?}");
}

#[test]
fn invalid_flow_settings() {
    let p = reference(0);
    let bad = FlowConfig { stride: 0, ..FlowConfig::default() };
    assert!(matches!(FlowRunner::new(p.problem.clone(), bad, p.initial.clone()), Err(Error::InvalidConfig(_))));
    let short = EquivariantMap { points: vec![HPoint::ORIGIN] };
    assert!(matches!(
        FlowRunner::new(p.problem.clone(), FlowConfig::default(), short),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut r = runner(&p, Method::Fixed);
    assert!(r.set_stepsize(Some(-1.0)).is_err());
    assert!(r.set_stepsize(Some(f64::NAN)).is_err());
    r.set_stepsize(Some(1e-3)).unwrap();
    assert_eq!(r.fixed_stepsize(), 1e-3);
}

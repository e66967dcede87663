use pivlab::audit::{default_checkpoints, mean_se, normal_cdf};
use pivlab::condexp::{FiltrationTag, RegressionSpec};
use pivlab::bsde::{check_optimality, solve_adjoint};
use pivlab::model::{Strategy, UtilitySpec};
use pivlab::scenarios::build_bessel;
use pivlab::sim::{first_exit_layer, integrate_wealth, simulate_bes3};
use pivlab::TimeGrid;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let n = 100_000usize;
    let steps = 512usize;
    let e = simulate_bes3(1.0, TimeGrid::new(1.0, steps), n, 2026).unwrap();
    println!("sim {:?}", t0.elapsed());

    // E[1/S(1)] = 2*Phi(1) - 1
    let inv: Vec<f64> = (0..n).map(|p| 1.0 / e.s.get(p, steps)).collect();
    let (m, se) = mean_se(&inv);
    let oracle = 2.0 * normal_cdf(1.0) - 1.0;
    println!("E[1/S(1)] = {m:.6} oracle {oracle:.6} se {se:.6} z {:.2}", (m - oracle) / se);

    // E[S(1)^2] = 4
    let sq: Vec<f64> = (0..n).map(|p| e.s.get(p, steps).powi(2)).collect();
    let (m2, se2) = mean_se(&sq);
    println!("E[S^2] = {m2:.4} (se {se2:.4})");

    // stopped means
    for lvl in [2u32, 4, 8] {
        let layer = first_exit_layer(&e, lvl).unwrap();
        let vals: Vec<f64> = (0..n).map(|p| 1.0 / e.s.get(p, layer.tau_index[p] as usize)).collect();
        let (ms, ses) = mean_se(&vals);
        let exited = layer.tau_index.iter().filter(|&&t| (t as usize) < steps).count();
        println!("n={lvl}: E[1/S(T^tau)] = {ms:.5} se {ses:.5} z {:.2} exited {exited}", (ms - 1.0) / ses);
    }

    // wealth / price stopped martingale: E[X/S at stop] = x0/s0
    let layer4 = first_exit_layer(&e, 4).unwrap();
    let w = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 1.0, Some(&layer4), None).unwrap();
    let ratio: Vec<f64> = (0..n).map(|p| {
        let tau = layer4.tau_index[p] as usize;
        w.x.get(p, tau) / e.s.get(p, tau)
    }).collect();
    let (mr, ser) = mean_se(&ratio);
    println!("E[X/S stopped] = {mr:.5} se {ser:.5} z {:.2}", (mr - 1.0) / ser);

    // optimality of buy-and-hold at layer 4
    let t1 = Instant::now();
    let model = build_bessel();
    let grids = [&e.s, &w.x];
    let gtag = FiltrationTag::full(&grids, Some(&layer4));
    let ftag = FiltrationTag::observed(&grids, Some(&layer4));
    let adj = solve_adjoint(&model, &e, &w, &UtilitySpec::Log, Some(&layer4), &gtag, &RegressionSpec::default()).unwrap();
    println!("adjoint solve {:?}", t1.elapsed());
    let cps = default_checkpoints(steps);
    let rep = check_optimality(&adj, &model, &e, &w, Some(&layer4), &ftag, &RegressionSpec::audit(), &cps).unwrap();
    println!("optimality verdict {} max|z| {:.2}", rep.verdict, rep.max_abs_z());
    for s in &rep.steps {
        println!("  step {:3} alive {:6} rms {:9.5} mean_z {:6.2} coef_z {:6.2}", s.step, s.n_alive, s.residual_rms, s.mean_z, s.max_coefficient_z);
    }
    // p(t) ~ 1/S(t^tau) pointwise
    let mut worst: f64 = 0.0;
    for p in (0..n).step_by(977) {
        for j in [64usize, 256, 448] {
            let idx = layer4.stop(p, j);
            let expect = 1.0 / e.s.get(p, idx);
            let rel = (adj.p.get(p, j) - expect).abs() / expect;
            worst = worst.max(rel);
        }
    }
    println!("worst relative p error {:.4}", worst);
    println!("total {:?}", t0.elapsed());
}

use pivlab::condexp::{FiltrationTag, RegressionSpec};
use pivlab::bsde::solve_adjoint;
use pivlab::model::{Strategy, UtilitySpec};
use pivlab::scenarios::build_merton;
use pivlab::sim::{integrate_wealth, simulate};
use pivlab::TimeGrid;

fn main() {
    let (b, sigma, c) = (0.1f64, 0.2f64, 2.5f64);
    let model = build_merton(b, sigma, None).unwrap();
    let steps = 64usize;
    let e = simulate(&model, TimeGrid::new(1.0, steps), 40_000, 45).unwrap();
    let w = integrate_wealth(&e, &Strategy::ProportionalWealth { c }, 1.0, None, None).unwrap();
    let dt = 1.0 / steps as f64;

    // per-step factor m = E[(1+cu)^-1], u ~ N(b dt, sigma^2 dt), by quadrature
    let mut m = 0.0f64;
    let nq = 400;
    for i in 0..nq {
        let z = -8.0 + 16.0 * (i as f64 + 0.5) / nq as f64;
        let wgt = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * (16.0 / nq as f64);
        let u = b * dt + sigma * dt.sqrt() * z;
        m += wgt / (1.0 + c * u);
    }
    println!("per-step factor m = {m:.10}");

    let grids = [&e.s, &w.x];
    let gtag = FiltrationTag::full(&grids, None);
    let adj = solve_adjoint(&model, &e, &w, &UtilitySpec::Log, None, &gtag, &RegressionSpec::default()).unwrap();

    for &cstep in &[7usize, 21, 36, 50, 63] {
        let mut mean_fit = 0.0;
        let mut mean_true = 0.0;
        let mut sq = 0.0;
        let n = e.n_paths;
        for p in 0..n {
            let ds = e.s.get(p, cstep + 1) - e.s.get(p, cstep);
            // fitted chain
            let dp_fit = adj.p.get(p, cstep + 1) - adj.p.get(p, cstep);
            let t_fit = b * adj.p.get(p, cstep) + dp_fit * ds / dt;
            mean_fit += t_fit;
            // analytic adjoint p = m^(n-j)/X_j
            let ptr = |j: usize| m.powi((steps - j) as i32) / w.x.get(p, j);
            let dp_true = ptr(cstep + 1) - ptr(cstep);
            let t_true = b * ptr(cstep) + dp_true * ds / dt;
            mean_true += t_true;
            sq += t_true * t_true;
        }
        mean_fit /= n as f64;
        mean_true /= n as f64;
        let sd = (sq / n as f64 - mean_true * mean_true).sqrt();
        let se = sd / (n as f64).sqrt();
        println!(
            "step {cstep:3} mean_fit {mean_fit:10.3e} mean_true {mean_true:10.3e} se {se:9.3e} z_fit {:6.2} z_true {:6.2}",
            mean_fit / se, mean_true / se
        );
    }
}

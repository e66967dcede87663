use pivlab::audit::default_checkpoints;
use pivlab::bsde::{check_optimality, solve_adjoint};
use pivlab::condexp::{FiltrationTag, RegressionSpec};
use pivlab::model::{Strategy, UtilitySpec};
use pivlab::scenarios::build_bessel;
use pivlab::sim::{first_exit_layer, integrate_wealth, simulate_bes3};
use pivlab::TimeGrid;

fn main() {
    let steps = 512usize;
    let n = 50_000usize;
    let model = build_bessel();
    for seed in 1u64..=10 {
        let e = simulate_bes3(1.0, TimeGrid::new(1.0, steps), n, seed).unwrap();
        let layer = first_exit_layer(&e, 4).unwrap();
        let w = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 1.0, Some(&layer), None).unwrap();
        let grids = [&e.s, &w.x];
        let gtag = FiltrationTag::full(&grids, Some(&layer));
        let ftag = FiltrationTag::observed(&grids, Some(&layer));
        let adj = solve_adjoint(&model, &e, &w, &UtilitySpec::Log, Some(&layer), &gtag, &RegressionSpec::default()).unwrap();
        let rep = check_optimality(&adj, &model, &e, &w, Some(&layer), &ftag, &RegressionSpec::audit(), &default_checkpoints(steps)).unwrap();
        println!("seed {seed:2} verdict {} max|z| {:.2}", rep.verdict, rep.max_abs_z());
    }
}

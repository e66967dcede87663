use pivlab::audit::default_checkpoints;
use pivlab::bsde::{optimize_strategy, StrategyFamily};
use pivlab::condexp::RegressionSpec;
use pivlab::model::UtilitySpec;
use pivlab::scenarios::build_merton;
use pivlab::sim::simulate;
use pivlab::TimeGrid;

fn main() {
    let model = build_merton(0.1, 0.2, None).unwrap();
    let e = simulate(&model, TimeGrid::new(1.0, 64), 20_000, 45).unwrap();
    let family = StrategyFamily::ProportionalWealth { lo: 0.0, hi: 5.0 };
    let cps = default_checkpoints(64);
    let out = optimize_strategy(
        &model, &e, &UtilitySpec::Log, 1.0, None, &family,
        &RegressionSpec::default(), &cps,
    ).unwrap();
    println!("param {}", out.parameter);
    for s in &out.report.steps {
        println!("step {:3} rms {:9.5} mean_z {:7.2} coef_z {:7.2}", s.step, s.residual_rms, s.mean_z, s.max_coefficient_z);
    }
}

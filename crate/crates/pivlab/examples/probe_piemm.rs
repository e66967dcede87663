use pivlab::audit::default_checkpoints;
use pivlab::condexp::{FiltrationTag, RegressionSpec};
use pivlab::measure::{doleans_exponential, piemm_check, GirsanovSpec};
use pivlab::scenarios::build_merton;
use pivlab::sim::simulate;
use pivlab::TimeGrid;

fn main() {
    let model = build_merton(0.1, 0.2, None).unwrap();
    let e = simulate(&model, TimeGrid::new(1.0, 64), 40_000, 53).unwrap();
    let cps = default_checkpoints(64);
    let grids = [&e.s];
    let ftag = FiltrationTag::observed(&grids, None);
    let reg = RegressionSpec::default();
    let good = GirsanovSpec::brownian(-0.5);
    let d = doleans_exponential(&good, &e, None, None).unwrap();
    let rep = piemm_check(&d, Some(&good), &model, &e, None, &ftag, &reg, &cps).unwrap();
    println!("direct_pass {:?} structural {}", rep.direct_pass, rep.structural_pass);
    for r in &rep.structural_levels {
        println!("level step {} z {:.3}", r.step, r.zscore);
    }
    for r in &rep.structural_increments {
        println!("inc step {} z {:.3} coef {:.3}", r.step, r.zscore, r.max_coefficient_z);
    }
}

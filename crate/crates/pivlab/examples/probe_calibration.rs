use pivlab::audit::default_checkpoints;
use pivlab::condexp::{FiltrationTag, RegressionSpec};
use pivlab::measure::{doleans_exponential, piemm_check, GirsanovSpec};
use pivlab::scenarios::build_merton;
use pivlab::sim::simulate;
use pivlab::TimeGrid;

fn max_z(spec: &RegressionSpec, seed: u64) -> f64 {
    let model = build_merton(0.1, 0.2, None).unwrap();
    let e = simulate(&model, TimeGrid::new(1.0, 64), 20_000, seed).unwrap();
    let cps = default_checkpoints(64);
    let grids = [&e.s];
    let ftag = FiltrationTag::observed(&grids, None);
    let good = GirsanovSpec::brownian(-0.5);
    let d = doleans_exponential(&good, &e, None, None).unwrap();
    let rep = piemm_check(&d, Some(&good), &model, &e, None, &ftag, spec, &cps).unwrap();
    rep.structural_increments
        .iter()
        .map(|r| r.zscore.abs().max(r.max_coefficient_z))
        .fold(0.0f64, f64::max)
}

fn main() {
    let rich = RegressionSpec::default();
    let lean = RegressionSpec { degree: 2, augment_reciprocal: false, ridge: 1e-8 };
    let mut rich_fails = 0;
    let mut lean_fails = 0;
    for seed in 0..24u64 {
        let zr = max_z(&rich, seed);
        let zl = max_z(&lean, seed);
        if zr >= 3.3 { rich_fails += 1; }
        if zl >= 3.3 { lean_fails += 1; }
        println!("seed {seed:2}  rich {zr:6.2}  lean {zl:6.2}");
    }
    println!("fails: rich {rich_fails}/24  lean {lean_fails}/24");
}

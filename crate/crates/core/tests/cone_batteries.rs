use imtk::cone::{
    check_cone_invariance, check_squeezing, romanov_check, verify_h3_discrete, H3Options,
};
use imtk::synthesis::{synthesize_p, BatteryOptions, SynthesisOptions};
use imtk::system::fixture;
use imtk::Exec;

fn field(name: &str) -> (imtk::system::SystemSpec, imtk::synthesis::ConeField) {
    let sys = fixture(name).unwrap();
    let cf = synthesize_p(&sys, sys.hints.nu0.unwrap(), &SynthesisOptions::default()).unwrap();
    (sys, cf)
}

#[test]
fn h3_holds_on_ode3_and_breaks_when_inflated() {
    let (sys, cf) = field("SYS-ODE3");
    let mut opts = H3Options::default();
    opts.battery.h = Some(1e-3);
    let rep = verify_h3_discrete(&sys, &cf, &opts, Exec::Parallel).unwrap();
    assert!(rep.clean && rep.checked == 100, "{rep:?}");
    opts.delta_scale = 10.0;
    let rep = verify_h3_discrete(&sys, &cf, &opts, Exec::Parallel).unwrap();
    assert!(!rep.clean);
}

#[test]
fn cone_reports_clean_on_ode3() {
    let (sys, cf) = field("SYS-ODE3");
    let opts = BatteryOptions {
        pairs: 40,
        horizon: 2.0,
        h: Some(1e-3),
        ..BatteryOptions::default()
    };
    let inv = check_cone_invariance(&sys, &cf, &opts, 0.0, Exec::Parallel).unwrap();
    assert!(inv.clean, "{inv:?}");
    let sq = check_squeezing(
        &sys,
        &cf,
        &BatteryOptions {
            horizon: 1.5,
            ..opts
        },
        0.0,
        0.05,
        Exec::Parallel,
    )
    .unwrap();
    assert!(sq.integral.clean && sq.exponential.clean, "{sq:?}");
    assert!(sq.integral.checked >= 10, "{sq:?}");
}

#[test]
fn romanov_on_random_fields() {
    use imtk::linalg::{orthonormal_basis, RealMatrix};
    use imtk::synthesis::ConeField;
    use rand::{Rng, SeedableRng};
    for seed in 0..10u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed as usize % 3);
        let j = 1 + (seed as usize % (n - 1));
        let q = orthonormal_basis(
            &RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
            1e-12,
        );
        let d: Vec<f64> = (0..n)
            .map(|k| {
                if k < j {
                    -rng.random_range(0.5..3.0)
                } else {
                    rng.random_range(0.5..3.0)
                }
            })
            .collect();
        let p = &q * RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * q.transpose();
        let e_minus = q.columns(0, j).into_owned();
        let cf = ConeField::with_splitting("random", p, e_minus, 1.0, 1.0, 1.0).unwrap();
        let rep = romanov_check(
            &cf,
            rng.random_range(0.0..0.95),
            10_000,
            seed,
            Exec::Parallel,
        )
        .unwrap();
        assert!(rep.clean, "{rep:?}");
    }
}

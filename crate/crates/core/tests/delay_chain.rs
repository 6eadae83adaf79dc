use imtk::flow::flow_samples;
use imtk::linalg::RealMatrix;
use imtk::system::{discretize_delay, DelaySpec, DelayTap, Nonlinearity};

/// Method of steps for x' = -x(t - tau) with history 1:
/// x(t) = sum_{k=0}^{floor(t/tau)+1} (-1)^k (t - (k-1) tau)^k / k!
fn exact(t: f64, tau: f64) -> f64 {
    let kmax = (t / tau).floor() as usize + 1;
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..=kmax {
        if k > 0 {
            fact *= k as f64;
        }
        let base = t - (k as f64 - 1.0) * tau;
        if base <= 0.0 {
            break;
        }
        sum += (-1f64).powi(k as i32) * base.powi(k as i32) / fact;
    }
    sum
}

fn chain_error(tau: f64, n_chain: usize, horizon: f64, h: f64) -> f64 {
    let spec = DelaySpec {
        tau,
        d0_norm: 0.0,
        d0_taps: vec![],
        a_taps: vec![],
        taps: vec![DelayTap {
            output: 0,
            component: 0,
            lag: tau,
            weight: 1.0,
        }],
        n_chain,
    };
    let identity = Nonlinearity::polynomial(1.0, vec![0.0, 1.0], Some(1e3), 1.0);
    let sys = discretize_delay(
        &spec,
        &RealMatrix::zeros(1, 1),
        &RealMatrix::from_element(1, 1, -1.0),
        identity,
    )
    .unwrap();
    let times: Vec<f64> = (1..=100).map(|i| horizon * i as f64 / 100.0).collect();
    let v0 = vec![1.0; n_chain + 1];
    let states = flow_samples(&sys, &[], &v0, &times, h).unwrap();
    times
        .iter()
        .zip(&states)
        .map(|(&t, v)| (v[0] - exact(t, tau)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn series_oracle_sanity() {
    // on [0, tau] the solution is 1 - t
    assert!((exact(0.2, 0.3) - 0.8).abs() < 1e-15);
    // on [tau, 2 tau]: 1 - t + (t - tau)^2 / 2
    let t = 0.5;
    assert!((exact(t, 0.3) - (1.0 - t + (t - 0.3f64).powi(2) / 2.0)).abs() < 1e-15);
}

#[test]
fn chain_of_64_matches_method_of_steps() {
    let err = chain_error(0.3, 64, 10.0, 1e-3);
    assert!(err <= 1e-3, "max head error {err}");
}

#[test]
fn chain_error_decreases_like_one_over_n() {
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| chain_error(0.3, n, 10.0, 1e-3))
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=2.6).contains(&ratio), "ratio {ratio} in {errs:?}");
    }
}

#[test]
fn vanishing_delay_reduces_to_ode() {
    let tau = 1e-6;
    let spec = DelaySpec {
        tau,
        d0_norm: 0.0,
        d0_taps: vec![],
        a_taps: vec![],
        taps: vec![DelayTap {
            output: 0,
            component: 0,
            lag: tau,
            weight: 1.0,
        }],
        n_chain: 8,
    };
    let f = Nonlinearity::sigmoid(1.0, 1.0, 1.0);
    let sys = discretize_delay(
        &spec,
        &RealMatrix::zeros(1, 1),
        &RealMatrix::from_element(1, 1, -1.0),
        f.clone(),
    )
    .unwrap();
    let times = [0.05, 0.1];
    let h = 2e-7;
    let states = flow_samples(&sys, &[], &[1.0; 9], &times, h).unwrap();
    // x' = -tanh(x) by RK4 at a comfortable step
    let mut x = 1.0f64;
    let dt = 1e-5;
    let mut t = 0.0;
    for (k, &target) in times.iter().enumerate() {
        while t < target - 1e-12 {
            let g = |x: f64| -f.eval(x);
            let k1 = g(x);
            let k2 = g(x + 0.5 * dt * k1);
            let k3 = g(x + 0.5 * dt * k2);
            let k4 = g(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
        }
        assert!(
            (states[k][0] - x).abs() <= 1e-6,
            "t={target}: {} vs {x}",
            states[k][0]
        );
    }
}

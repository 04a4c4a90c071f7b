//! Fixed instances shared by the benchmarks.

use specshare::{GainTensor, NetworkConfig, PowerProfile};

/// One PU and two SUs on a perfectly symmetric channel (cross ratio 0.25).
pub fn symmetric_instance() -> (NetworkConfig, GainTensor, PowerProfile) {
    let config = NetworkConfig::new(3, vec![0], vec![1, 2], vec![11.0, 5.0, 1.0], vec![vec![0.5; 3]; 3], 0.5)
        .expect("valid network");
    let direct = [0.8, 1.3, 0.6];
    let pu_to_su = [0.2, 0.3, 0.4];
    let mut g = GainTensor::uniform(3, 3, 1.0, 0.0).expect("valid gains");
    for f in 0..3 {
        g.set(0, 0, f, 1.0).unwrap();
        g.set(1, 0, f, 0.3).unwrap();
        g.set(2, 0, f, 0.4).unwrap();
        for su in [1, 2] {
            g.set(su, su, f, direct[f]).unwrap();
            g.set(0, su, f, pu_to_su[f]).unwrap();
        }
        g.set(1, 2, f, 0.25 * direct[f]).unwrap();
        g.set(2, 1, f, 0.25 * direct[f]).unwrap();
    }
    let mut p = PowerProfile::for_config(&config);
    p.set_row(0, &[7.0, 1.0, 3.0]);
    (config, g, p)
}

/// `n_su` SUs over `n` sub-channels with weak, deterministic cross gains.
pub fn weak_instance(n_su: usize, n: usize) -> (NetworkConfig, GainTensor, PowerProfile) {
    let users = n_su + 1;
    let mut budgets = vec![20.0];
    budgets.extend((0..n_su).map(|i| 2.0 + i as f64));
    let config = NetworkConfig::new(n, vec![0], (1..users).collect(), budgets, vec![vec![1.0; n]; users], 0.5)
        .expect("valid network");
    let mut g = GainTensor::uniform(users, n, 1.0, 0.0).expect("valid gains");
    for tx in 0..users {
        for rx in 0..users {
            for f in 0..n {
                let wobble = ((tx * 7 + rx * 3 + f * 5) % 11) as f64 / 11.0;
                let v = if tx == rx { 1.0 + wobble } else { 0.05 + 0.1 * wobble };
                g.set(tx, rx, f, v).unwrap();
            }
        }
    }
    let mut p = PowerProfile::for_config(&config);
    p.set_row(0, &vec![20.0 / n as f64; n]);
    (config, g, p)
}

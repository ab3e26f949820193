use redlab_core::reduction::{run_ensemble, DiffusionParams, RateSchedule};
use redlab_core::simplex::ChannelDistribution;

#[test]
fn probe_born_bias() {
    for &(p, dt) in &[(0.9, 0.01), (0.933, 0.01), (0.067, 0.01), (0.9, 0.002), (0.933, 0.002)] {
        let mut dev_sum = 0.0;
        let n = 100_000usize;
        let mut devs = Vec::new();
        for seed in [1u64, 2, 3] {
            let params = DiffusionParams::new(1.0, n, seed).with_dt(dt);
            let rep = run_ensemble(
                &ChannelDistribution::new(vec![p, 1.0 - p]).unwrap(),
                &params,
                &RateSchedule::Constant,
            )
            .unwrap();
            let dev = rep.frequencies()[0] - p;
            devs.push(dev);
            dev_sum += dev;
        }
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        println!(
            "p={p} dt={dt}: mean dev {:+.5} (sigma {:.5}, 3sig {:.5}) devs {:?}",
            dev_sum / 3.0,
            sigma,
            3.0 * sigma,
            devs
        );
    }
}

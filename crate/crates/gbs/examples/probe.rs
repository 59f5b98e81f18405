use gbs::density::LogDensity;
use gbs::estimators::{obs_solve, BridgeInputs};
use gbs::flow::{FlowConfig, FlowModel};
use gbs::protocol::reference_pipeline;
use gbs::rng::derive_seed;
use gbs::sampler::sample;
use gbs::targets::TargetDistribution;

fn quants(label: &str, v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let q = |p: f64| v[((n - 1) as f64 * p) as usize];
    println!(
        "  {label}: min {:9.1} q05 {:9.1} q50 {:9.1} q95 {:9.1} max {:9.1}",
        v[0],
        q(0.05),
        q(0.5),
        q(0.95),
        v[n - 1]
    );
}

fn main() {
    let target = TargetDistribution::by_name("banana32").unwrap();
    let pipe = reference_pipeline(&target);
    let seed = 0u64;
    let batch = sample(&target, &pipe.sampler, derive_seed(seed, 0x5A)).unwrap();
    let (fit_half, bridge_half) = batch.split_halves();
    let flow_cfg = FlowConfig {
        bandwidth_factor: 0.5,
        n_knots: 128,
        ..pipe.flow.clone()
    };
    let t0 = std::time::Instant::now();
    let flow = FlowModel::fit(&fit_half.flattened().view(), &flow_cfg, derive_seed(seed, 0x46)).unwrap();
    println!("  fit time {:.1}s", t0.elapsed().as_secs_f64());

    let rows = bridge_half.flattened();
    let ln_p_p = bridge_half.logp_flattened();
    let ln_q_p: Vec<f64> = rows
        .rows()
        .into_iter()
        .map(|r| flow.log_density(r.as_slice().unwrap()))
        .collect();
    let mut diff_p: Vec<f64> = ln_p_p.iter().zip(&ln_q_p).map(|(p, q)| p - q).collect();
    quants("ln p - ln q | p draws", &mut diff_p);

    let (q_draws, ln_q_q) = flow.sample(8000, derive_seed(seed, 0x51));
    let ln_p_q: Vec<f64> = q_draws
        .rows()
        .into_iter()
        .map(|r| target.log_prob(r.as_slice().unwrap()))
        .collect();
    let mut diff_q: Vec<f64> = ln_p_q
        .iter()
        .zip(&ln_q_q)
        .filter(|(p, _)| p.is_finite())
        .map(|(p, q)| p - q)
        .collect();
    quants("ln p - ln q | q draws", &mut diff_q);

    let inputs = BridgeInputs {
        ln_p_p: &ln_p_p,
        ln_q_p: &ln_q_p,
        ln_p_q: &ln_p_q,
        ln_q_q: &ln_q_q,
    };
    println!("  bridge ln r = {:.3} (fiducial -127.364)", obs_solve(&inputs).unwrap());
}

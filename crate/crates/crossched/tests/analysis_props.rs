//! Analysis-level properties beyond the acceptance anchors.

use crossched::analysis::{pp_vs_dp, PPDPConfig};

#[test]
fn pp_advantage_vanishes_beyond_1024_gbps() {
    let mut config = PPDPConfig::llama3_405b();
    config.bandwidths = vec![2048e9, 4096e9];
    config.latencies = vec![4e-3, 16e-3];
    let table = pp_vs_dp(&config, 4).unwrap();
    for row in &table.rows {
        assert!(
            (row.speedup - 1.0).abs() <= 0.05,
            "speedup {} at {} B/s",
            row.speedup,
            row.bandwidth
        );
    }
}

#[test]
fn dp_cost_model_matches_the_closed_form() {
    let mut config = PPDPConfig::llama3_405b();
    config.bandwidths = vec![8e9];
    config.latencies = vec![32e-3];
    let table = pp_vs_dp(&config, 1).unwrap();
    let row = &table.rows[0];
    // Two rounds of the two-DC ring: 2 alpha + 2 N beta on top of the ideal
    // pipeline.
    let expect = table.t_ideal + 2.0 * 32e-3 + 2.0 * config.n_params / 8e9;
    assert!((row.t_dp - expect).abs() < 1e-9, "{} vs {expect}", row.t_dp);
}

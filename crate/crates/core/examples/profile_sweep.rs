//! Sweep the leader's two turn rates and print per-method success rates,
//! group occupancy and calibrated radii.
//!
//! cargo run --release --example profile_sweep [trials]

use formation_cp::harness::{
    run_calibration_campaign, run_evaluation, summarize, ExperimentConfig, LeaderSchedule, Method, Segment,
};

fn main() -> formation_cp::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    println!("turns        q_hat                 occupancy(nominal)    N     GL    GH    RA");
    for (mild, sharp) in [(0.05, 0.15), (0.1, 0.2), (0.1, 0.25), (0.15, 0.3), (0.25, 0.45)] {
        let cfg = ExperimentConfig {
            schedule: LeaderSchedule {
                segments: vec![
                    Segment::new(8.0, 0.3, 0.0),
                    Segment::new(10.0, 0.3, mild),
                    Segment::new(4.0, 0.3, 0.0),
                    Segment::new(10.0, 0.3, sharp),
                    Segment::new(8.0, 0.3, 0.0),
                ],
            },
            ..Default::default()
        };
        let cal = match run_calibration_campaign(&cfg, cfg.run.calibration_runs, None) {
            Ok(cal) => cal,
            Err(e) => {
                println!("{mild:.2}/{sharp:.2}    calibration failed: {e}");
                continue;
            }
        };
        let mut rates = Vec::new();
        let mut occupancy = Vec::new();
        for m in Method::ALL {
            let s = summarize(&run_evaluation(&cfg, &cal.table, &cal.baselines, m, trials, None)?);
            if m == Method::Nominal {
                occupancy = s.group_occupancy.clone();
            }
            rates.push(format!("{:.2}", s.success_rate));
        }
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("{mild:.2}/{sharp:.2}    {}   {}   {}", fmt(&cal.table.quantiles), fmt(&occupancy), rates.join("  "));
    }
    Ok(())
}

// Scratch driver for solver diagnosis. Not part of the deliverable surface.
use swiptsim_core::channel::compute_gain_tables;
use swiptsim_core::geometry::{build_array, Position3D};
use swiptsim_core::metrics::{self, EhModelParams, PowerModelParams, QosThresholds};
use swiptsim_core::pa_solver::{solve_pa, AdmmConfig};

fn main() {
    let g = build_array(1, 2, 2, 0.1, 0.025, 0.05, 0.0).unwrap();
    let users = vec![Position3D::new(0.0, 0.0, 0.3)];
    let tables = compute_gain_tables(&g, &users, 1, None, 2.0, &[1e-11]).unwrap();
    let power = PowerModelParams::new(0.35, 0.05, 0.0482, 0.03, 4, 1).unwrap();
    let eh = EhModelParams::new(0.024, 1500.0, 0.0022).unwrap();
    let gain = tables.direct_gain(0, 0, 0);
    let rate_floor = 0.7 * (1.0 + power.subarray_power_cap() * gain / 1e-11).log2();
    let th = QosThresholds {
        rate_floor: vec![rate_floor],
        energy_floor: vec![],
    };
    let xi = metrics::rate_threshold_coefficient(rate_floor);
    let expected = 1e-11 / (xi * xi) / gain;
    let cfg = AdmmConfig {
        epsilon: 1e-15,
        max_iterations: 30000,
        ..AdmmConfig::default()
    };
    let sol = solve_pa(&[1.0], &tables, &th, &power, &eh, &cfg, None).unwrap();
    println!("status {:?} iters {}", sol.status, sol.iterations);
    println!("expected {expected:e} got {:e}", sol.allocation.id[(0, 0)]);
    for (i, p) in sol.trace.iter().enumerate() {
        if i < 10 || i % 2000 == 0 || i + 5 > sol.trace.len() {
            println!(
                "it {:6} obj {:.9e} viol {:.3e}",
                p.iteration, p.objective_w, p.max_violation
            );
        }
    }
}

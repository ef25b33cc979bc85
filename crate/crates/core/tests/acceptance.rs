//! Acceptance criteria at desk scale (32³, Pe = 0.05, Dₑ = 1). Prints one
//! line per criterion and fails if any criterion fails.

use activeflow::verify::{self, CheckResult, Status, VerifySettings};

fn criteria(s: &VerifySettings) -> Vec<(usize, &'static str, CheckResult)> {
    vec![
        (
            1,
            "mass drift <= 1e-12 over 2000 steps",
            verify::mass_conservation(s, 2000),
        ),
        (
            2,
            "Pe=0 mode decay, rel Linf <= 1e-8 at t=1",
            verify::linear_exactness(s),
        ),
        (
            3,
            "FD oracle at 8^3: Linf <= 1e-3, order >= 1.8",
            verify::oracle_equivalence(s),
        ),
        (4, "decay bound with kappa, t <= 10", verify::kappa_decay(s)),
        (5, "spatial average rate >= 1 - 1e-3", verify::spatial_average(s)),
        (6, "rho in [-1e-6, 1 + 1e-6], t <= 5", verify::rho_bounds(s)),
        (7, "sup L64 <= 2 ||f0||_inf, t <= 10", verify::lp_ladder_bound(s)),
        (8, "spectral tail ratio <= 0.01 at t=1", verify::smoothing(s)),
        (9, "E_6 <= 0.1 E_0, nonincreasing", verify::truncation_ladder(s)),
        (10, "stationary residual and relaxation", verify::stationary_states(s)),
    ]
}

#[test]
fn acceptance_criteria() {
    let settings = VerifySettings::desk();
    let results = criteria(&settings);
    let mut failed = Vec::new();
    for (id, label, r) in &results {
        println!(
            "criterion {id:>2} {:<4} {label}: {} [{:.1}s]",
            r.status, r.detail, r.seconds
        );
        if r.status != Status::Pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "criteria not passed: {failed:?}");
}

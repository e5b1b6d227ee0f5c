mod common;

use hrf_core::diffusion::NoiseSchedule;

#[test]
fn forward_marginals_match_closed_form() {
    let s = NoiseSchedule::default_linear();
    let x0 = [1.5, -0.7, 0.2];
    for t in [1, 20, 40] {
        let (zm, zv) = common::forward_moment_z(&s, &x0, t, 100_000, t as u64);
        assert!(zm < 3.0 && zv < 3.0, "t={t}: mean z {zm}, variance z {zv}");
    }
}

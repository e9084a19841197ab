use pasolve_core::facelift::facelift_closed_form;
use pasolve_core::hjb::{residual_check, shoot, HjbConfig};
use pasolve_core::{CostSpec, Error, ModelParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solved_value_is_concave_above_facelift_with_small_residual(
        delta in 0.6f64..1.6,
        eta in 0.02f64..1.0,
        gamma in 1.4f64..3.0,
        h2 in 0.2f64..2.0,
        beta in 0.01f64..0.6,
    ) {
        prop_assume!(delta * gamma > 1.05);
        let m = ModelParams::from_delta_eta(delta, eta, gamma, CostSpec::new(h2, beta, 50.0).unwrap(), 0.0).unwrap();
        let fbar = facelift_closed_form(&m);
        let fb = match shoot(&m, &HjbConfig::default()) {
            Ok(fb) => fb,
            // With δ > 1 and F not analytic at 0, stopping near the origin can be optimal on an
            // interval, which no shot from the origin represents.
            Err(Error::NoBracket { .. }) => {
                let y = 1e-6;
                let i0 = m.i0(fbar.slope(y), fbar.curvature(y)).value().unwrap();
                prop_assert!(delta > 1.0 && gamma.fract() != 0.0 && i0 < 0.0);
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let rep = residual_check(&m, &fb.curve, &fbar);
        prop_assert!(rep.variational_scaled < 1e-5, "residual {:e} at {}", rep.variational_scaled, rep.worst_at);
        prop_assert!(fb.value_is_facelift || fb.curve.max_second_difference() < 0.0);
        for (&y, &v) in fb.curve.ys().iter().zip(fb.curve.vals()) {
            let f = fbar.value(y);
            prop_assert!(v >= f - 1e-8 * (1.0 + f.abs()), "v({y}) = {v} < {f}");
        }
        if fb.classification.y_gp().is_some() {
            prop_assert!(fb.smooth_fit_residual < 1e-4);
        }
        prop_assert!(fb.v_p.is_some_and(|v| v >= 0.0));
    }
}

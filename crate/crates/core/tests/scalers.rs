use proptest::prelude::*;
use ucal_core::experiments::synth::temperature_archive;
use ucal_core::math::argmax;
use ucal_core::scalers::{fit, mean_nll};
use ucal_core::{FitConfig, LogitArchive, RngStream, Scaler, ScalerKind};

fn fit_temperature(archive: &LogitArchive) -> f64 {
    let init = Scaler::identity(ScalerKind::Temperature, archive.classes()).unwrap();
    let out = fit(&init, archive, &FitConfig::for_kind(ScalerKind::Temperature)).unwrap();
    assert!(out.converged, "temperature fit did not converge");
    match out.scaler {
        Scaler::Temperature(t) => t.temperature(),
        _ => unreachable!(),
    }
}

#[test]
fn recovers_known_temperature_single_pass() {
    let archive = temperature_archive(5000, 4, 1, 2.5, 3.0, 0.0, &mut RngStream::new(1)).unwrap();
    let t = fit_temperature(&archive);
    assert!((t - 2.5).abs() <= 0.1, "T = {t}");
}

#[test]
fn calibrated_archive_gives_unit_temperature() {
    let archive = temperature_archive(5000, 4, 1, 1.0, 3.0, 0.0, &mut RngStream::new(2)).unwrap();
    let t = fit_temperature(&archive);
    assert!((t - 1.0).abs() <= 0.05, "T = {t}");
}

#[test]
fn recovers_temperature_with_mc_passes() {
    for (seed, truth) in [(3, 0.5), (4, 1.0), (5, 2.5)] {
        let archive = temperature_archive(20_000, 4, 5, truth, 3.0, 0.5, &mut RngStream::new(seed)).unwrap();
        let t = fit_temperature(&archive);
        assert!((t - truth).abs() <= f64::max(0.1, 0.04 * truth), "T* {truth}: T = {t}");
    }
}

#[test]
fn fitted_temperature_follows_miscalibration_direction() {
    // Labels drawn from a flatter distribution than the logits say: the
    // logits are overconfident and need T > 1, and the reverse for T* < 1.
    let over = temperature_archive(3000, 5, 3, 1.8, 2.0, 0.3, &mut RngStream::new(6)).unwrap();
    assert!(fit_temperature(&over) > 1.0);
    let under = temperature_archive(3000, 5, 3, 0.6, 2.0, 0.3, &mut RngStream::new(7)).unwrap();
    assert!(fit_temperature(&under) < 1.0);
}

#[test]
fn fits_never_end_worse_than_identity() {
    let mut rng = RngStream::new(8);
    for _ in 0..5 {
        let logits = (0..200 * 3 * 4).map(|_| 2.0 * rng.next_normal()).collect();
        let labels = (0..200).map(|_| rng.below(4) as u32).collect();
        let archive = LogitArchive::new(3, 4, logits, labels).unwrap();
        for kind in ScalerKind::ALL {
            let init = Scaler::identity(kind, 4).unwrap();
            let out = fit(&init, &archive, &FitConfig::for_kind(kind)).unwrap();
            let start = mean_nll(&init, &archive).unwrap();
            let end = mean_nll(&out.scaler, &archive).unwrap();
            assert!(end <= start + 1e-12, "{kind}: {start} -> {end}");
            assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

#[test]
fn vector_and_aux_can_change_the_argmax() {
    let z = [1.0, 0.9];
    let mut vector = Scaler::identity(ScalerKind::Vector, 2).unwrap();
    vector.set_params(&[0.5, 1.0]).unwrap();
    assert_ne!(argmax(&vector.apply(&z)), argmax(&z));

    let mut aux = Scaler::identity(ScalerKind::Aux, 2).unwrap();
    let mut p = aux.params();
    let last = p.len() - 1;
    p[last] = 1.0;
    aux.set_params(&p).unwrap();
    assert_ne!(argmax(&aux.apply(&z)), argmax(&z));
}

#[test]
fn aux_identity_init_is_not_identity_on_negative_logits() {
    let aux = Scaler::identity(ScalerKind::Aux, 3).unwrap();
    assert_eq!(aux.apply(&[0.5, 2.0, 1.0]), vec![0.5, 2.0, 1.0]);
    assert_ne!(aux.apply(&[-1.0, 2.0, 1.0]), vec![-1.0, 2.0, 1.0]);
}

proptest! {
    #[test]
    fn temperature_preserves_per_pass_argmax(
        z in prop::collection::vec(-50.0f64..50.0, 2..12),
        t in 1e-3f64..1e3,
    ) {
        let s = Scaler::temperature(t).unwrap();
        let k = argmax(&z);
        prop_assume!(z.iter().filter(|&&v| v == z[k]).count() == 1);
        prop_assert_eq!(argmax(&s.apply(&z)), k);
    }

    #[test]
    fn identity_scalers(z in prop::collection::vec(-50.0f64..50.0, 4)) {
        prop_assert_eq!(Scaler::temperature(1.0).unwrap().apply(&z), z.clone());
        prop_assert_eq!(Scaler::identity(ScalerKind::Vector, 4).unwrap().apply(&z), z.clone());
        let positive: Vec<f64> = z.iter().map(|v| v.abs() + 1e-3).collect();
        prop_assert_eq!(Scaler::identity(ScalerKind::Aux, 4).unwrap().apply(&positive), positive.clone());
    }
}

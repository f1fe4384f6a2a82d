use sepf_web::{method_names, Demo};

#[test]
fn oracle_masks_are_bounded_and_help_every_method() {
    let mut d = Demo::new(11, 1.0, "babble").unwrap();
    d.set_snr(3.0).unwrap();
    let names = method_names();
    assert_eq!(names.lines().count(), 8);
    for m in names.lines() {
        let v = d.oracle(m).unwrap();
        assert!(v.mask.values.iter().all(|x| (0.0..=1.0).contains(x)), "{m}");
        assert!(v.oracle_mse < v.noisy_mse, "{m}: {} vs {}", v.oracle_mse, v.noisy_mse);
        let mel = m.contains("fbank");
        assert_eq!(v.mask.dims(), if mel { 40 } else { 257 }, "{m}");
    }
}

#[test]
fn oracle_curve_beats_the_mixture_and_rises_with_snr() {
    let d = Demo::new(4, 1.0, "pink").unwrap();
    let snrs = [-5.0, 0.0, 5.0, 10.0];
    let curve = d.si_sdr_curve(&snrs).unwrap();
    for (&s, &(noisy, oracle)) in snrs.iter().zip(&curve) {
        assert!((noisy - s).abs() < 1.0, "noisy {noisy} at {s} dB");
        assert!(oracle > noisy + 3.0, "oracle {oracle} vs noisy {noisy} at {s} dB");
    }
    assert!(curve.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), "{curve:?}");
    assert_eq!(d.snr_db(), 0.0);
}

#[test]
fn oracle_resynthesis_keeps_length() {
    let mut d = Demo::new(2, 0.75, "white").unwrap();
    d.set_snr(6.0).unwrap();
    assert_eq!(d.oracle_waveform().unwrap().len(), d.noisy().len());
}

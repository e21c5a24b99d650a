use segcert::diffusion::{
    compute_timestep, CountingDenoiser, DenoiseMode, DiffusionSchedule, IdentityDenoiser,
};
use segcert::image::{Image, LabelMap};
use segcert::models::{ConstantModel, OracleChannelModel, OracleChannelSpec};
use segcert::smoothing::{cohen_certify_pixel, Engine, SmoothingConfig};
use segcert::verification::{fwer_simulate, FwerReport, FwerRunSpec};

#[test]
fn constant_model_certifies_every_pixel() {
    let model = ConstantModel::new(7, 8).unwrap();
    let x = Image::from_fn(64, 64, 1, |r, c, _| ((r + c) % 17) as f64 / 16.0);
    let config = SmoothingConfig::new(0.25, 10, 100, 0.001, 0.75).unwrap();
    let res = Engine::new(&model).seg_certify(&x, &config).unwrap();
    assert_eq!(res.labels.abstain_count(), 0);
    assert!(res.labels.iter().all(|l| *l == Some(7)));
    assert!(res.pvalues.iter().all(|&p| p < 0.001 / 4096.0));
}

#[test]
fn radius_depends_only_on_sigma_and_tau() {
    let expected = [(0.25, 0.17), (0.5, 0.34), (1.0, 0.67)];
    let gt = LabelMap::filled(4, 4, Some(1));
    let oracle = OracleChannelModel::new(OracleChannelSpec::uniform(0.6, gt, 3).unwrap(), 1);
    let constant = ConstantModel::new(0, 3).unwrap();
    let x = Image::filled(4, 4, 1, 0.3);
    for (sigma, r) in expected {
        let config = SmoothingConfig::new(sigma, 5, 20, 0.01, 0.75).unwrap();
        let a = Engine::new(&oracle)
            .seg_certify(&x, &config)
            .unwrap()
            .radius;
        let b = Engine::new(&constant)
            .seg_certify(&x, &config)
            .unwrap()
            .radius;
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((a - r).abs() <= 0.005, "sigma {sigma}: {a}");
    }
}

#[test]
fn multi_step_makes_t_star_calls_per_draw() {
    let schedule = DiffusionSchedule::default_linear();
    assert_eq!(compute_timestep(&schedule, 1.0).unwrap().t_star, 258);
    let model = ConstantModel::new(0, 2).unwrap();
    let denoiser = CountingDenoiser::new(IdentityDenoiser);
    let x = Image::filled(4, 4, 1, 0.5);
    let config = SmoothingConfig::new(1.0, 2, 3, 0.01, 0.75)
        .unwrap()
        .with_denoise(DenoiseMode::MultiStep);
    let res = Engine::new(&model)
        .with_denoiser(&denoiser, &schedule)
        .seg_certify(&x, &config)
        .unwrap();
    assert_eq!(res.t_star, Some(258));
    assert_eq!(denoiser.calls(), 5 * 258);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let gt = LabelMap::from_classes(16, 16, (0..256).map(|i| (i % 4) as u16).collect()).unwrap();
    let model = OracleChannelModel::new(OracleChannelSpec::uniform(0.85, gt, 4).unwrap(), 3);
    let x = Image::filled(16, 16, 1, 0.5);
    let config = SmoothingConfig::new(0.5, 10, 100, 0.01, 0.75)
        .unwrap()
        .with_seed(99);
    let a = Engine::new(&model).seg_certify(&x, &config).unwrap();
    let b = Engine::new(&model).seg_certify(&x, &config).unwrap();
    let c = Engine::new(&model)
        .sequential()
        .seg_certify(&x, &config)
        .unwrap();
    for other in [&b, &c] {
        assert_eq!(a.labels, other.labels);
        assert_eq!(a.counts, other.counts);
        assert_eq!(a.counts0, other.counts0);
        assert!(a
            .pvalues
            .iter()
            .zip(&other.pvalues)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn cohen_reference_values() {
    let cert = cohen_certify_pixel(&[10, 0], &[100, 0], 10, 100, 0.001, 0.25).unwrap();
    assert!((cert.radius() - 0.3753).abs() <= 0.0005);
    for k in 0..=50u32 {
        let cert = cohen_certify_pixel(&[10, 0], &[k, 100 - k], 10, 100, 0.001, 0.25).unwrap();
        assert_eq!(cert.class(), None, "k = {k}");
    }
}

#[test]
fn boundary_null_keeps_family_wise_error_below_alpha() {
    let spec = FwerRunSpec {
        pixels: 256,
        n: 100,
        n0: 10,
        tau: 0.75,
        alpha: 0.05,
        p_true: 0.75,
        num_classes: 2,
        trials: 1000,
        seed: 7,
    };
    let report = fwer_simulate(&spec).unwrap();
    println!(
        "empirical FWER {} ({} / {})",
        report.rate, report.errors, report.trials
    );
    assert!(report.rate <= FwerReport::tolerance(0.05, 1000));
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use segcert::data::{
    gen_scene, read_labels, read_pnm, render_segmentation, write_labels, write_pnm, BitDepth,
    Layout, Palette, SceneSpec,
};
use segcert::diffusion::{
    compute_timestep, CountingDenoiser, DenoiseMode, Denoiser, DiffusionSchedule, IdentityDenoiser,
    MixturePrior, PosteriorMeanDenoiser, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
};
use segcert::image::{Image, LabelMap};
use segcert::metrics::{evaluate, EvalReport, CSV_COLUMNS, IOU_CONVENTION};
use segcert::models::{
    BandSegmenter, ConstantModel, OracleChannelModel, OracleChannelSpec, SegmentationModel,
};
use segcert::smoothing::{CertificationResult, Engine, SmoothingConfig};
use segcert::verification::{fwer_simulate, FwerReport, FwerRunSpec};

use crate::config::{format_list, RunConfig};
use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.ini";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_echo(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    write_text(&out.join(CONFIG_ECHO), &cfg.echo())
}

fn scene_means(cfg: &RunConfig, classes: usize) -> CliResult<Vec<f64>> {
    match cfg.list::<f64>("scene", "means")? {
        Some(means) => Ok(means),
        None => {
            let gap = cfg.get_or("scene", "gap", 0.3)?;
            Ok(SceneSpec::evenly_spaced_means(classes, gap))
        }
    }
}

pub fn scene_spec(cfg: &RunConfig) -> CliResult<SceneSpec> {
    let height = cfg.required("scene", "height")?;
    let width = cfg.required("scene", "width")?;
    let classes = cfg.get_or("scene", "classes", 3usize)?;
    let spec = SceneSpec {
        height,
        width,
        layout: cfg.get_or("scene", "layout", Layout::Stripes)?,
        means: scene_means(cfg, classes)?,
        within_std: cfg.get_or("scene", "within_std", 0.05)?,
        channels: cfg.get_or("scene", "channels", 1usize)?,
        seed: cfg.get_or("scene", "seed", 0u64)?,
    };
    if spec.means.len() != classes && cfg.has("scene", "classes") {
        return Err(CliError::Config(format!(
            "scene.means lists {} values but scene.classes = {classes}",
            spec.means.len()
        )));
    }
    spec.validate()?;
    Ok(spec)
}

/// Image to certify, plus ground truth and the scene it came from when known.
struct Input {
    image: Image,
    labels: Option<LabelMap>,
    scene: Option<SceneSpec>,
}

fn load_input(cfg: &RunConfig) -> CliResult<Input> {
    if let Some(path) = cfg.optional::<PathBuf>("input", "image")? {
        let image = read_pnm(&path)?;
        let labels = match cfg.optional::<PathBuf>("input", "labels")? {
            Some(p) => Some(read_labels(&p, None)?),
            None => None,
        };
        let scene = if cfg.has("scene", "height") {
            Some(scene_spec(cfg)?)
        } else {
            None
        };
        return Ok(Input {
            image,
            labels,
            scene,
        });
    }
    let spec = scene_spec(cfg)?;
    let scene = gen_scene(&spec)?;
    Ok(Input {
        image: scene.image,
        labels: Some(scene.labels),
        scene: Some(spec),
    })
}

fn class_count(cfg: &RunConfig, input: &Input) -> CliResult<usize> {
    if let Some(k) = cfg.optional("model", "classes")? {
        return Ok(k);
    }
    if let Some(scene) = &input.scene {
        return Ok(scene.num_classes());
    }
    if let Some(k) = input.labels.as_ref().and_then(LabelMap::max_class) {
        return Ok((k as usize + 1).max(2));
    }
    Err(CliError::Config(
        "missing required key model.classes".into(),
    ))
}

fn prior_means(cfg: &RunConfig, section: &str, input: &Input) -> CliResult<Vec<f64>> {
    if let Some(means) = cfg.list::<f64>(section, "means")? {
        return Ok(means);
    }
    input
        .scene
        .as_ref()
        .map(|s| s.means.clone())
        .ok_or_else(|| CliError::Config(format!("missing required key {section}.means")))
}

fn build_model(cfg: &RunConfig, input: &Input) -> CliResult<Box<dyn SegmentationModel>> {
    let kind: String = cfg.get_or("model", "kind", "band".to_string())?;
    let model: Box<dyn SegmentationModel> = match kind.as_str() {
        "band" => Box::new(BandSegmenter::new(prior_means(cfg, "model", input)?)?),
        "constant" => {
            let classes = cfg.get_or("model", "classes", 2usize)?;
            Box::new(ConstantModel::new(
                cfg.get_or("model", "class", 0u16)?,
                classes,
            )?)
        }
        "oracle" => {
            let gt = input.labels.clone().ok_or_else(|| {
                CliError::Config("oracle model needs ground truth (input.labels or [scene])".into())
            })?;
            let classes = class_count(cfg, input)?;
            let spec =
                OracleChannelSpec::uniform(cfg.get_or("model", "p_true", 0.75)?, gt, classes)?;
            Box::new(OracleChannelModel::new(
                spec,
                cfg.get_or("model", "seed", 0u64)?,
            ))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown model.kind '{other}' (expected band, constant or oracle)"
            )))
        }
    };
    Ok(model)
}

pub fn schedule(cfg: &RunConfig) -> CliResult<DiffusionSchedule> {
    Ok(DiffusionSchedule::linear(
        cfg.get_or("schedule", "steps", DEFAULT_STEPS)?,
        cfg.get_or("schedule", "beta_start", DEFAULT_BETA_START)?,
        cfg.get_or("schedule", "beta_end", DEFAULT_BETA_END)?,
    )?)
}

fn build_denoiser(cfg: &RunConfig, input: &Input) -> CliResult<Box<dyn Denoiser>> {
    let kind: String = cfg.get_or("denoiser", "kind", "posterior_mean".to_string())?;
    match kind.as_str() {
        "identity" => Ok(Box::new(IdentityDenoiser)),
        "posterior_mean" => {
            let means = prior_means(cfg, "denoiser", input)?;
            let default_std = input.scene.as_ref().map_or(0.05, |s| s.within_std);
            let within_std = cfg.get_or("denoiser", "within_std", default_std)?;
            let prior = match cfg.list::<f64>("denoiser", "weights")? {
                Some(weights) => MixturePrior::new(means, weights, within_std)?,
                None => MixturePrior::uniform(means, within_std)?,
            };
            Ok(Box::new(PosteriorMeanDenoiser::new(
                prior,
                cfg.get_or("denoiser", "pool_radius", 4usize)?,
            )))
        }
        other => Err(CliError::Config(format!(
            "unknown denoiser.kind '{other}' (expected posterior_mean or identity)"
        ))),
    }
}

fn smoothing_config(
    cfg: &RunConfig,
    sigma: f64,
    mode: DenoiseMode,
    scale: f64,
) -> CliResult<SmoothingConfig> {
    let config = SmoothingConfig::new(
        sigma,
        cfg.get_or("smoothing", "n0", 10usize)?,
        cfg.get_or("smoothing", "n", 100usize)?,
        cfg.get_or("smoothing", "alpha", 0.001)?,
        cfg.get_or("smoothing", "tau", 0.75)?,
    )?
    .with_denoise(mode)
    .with_seed(cfg.get_or("smoothing", "seed", 0u64)?)
    .with_scale(scale)?;
    Ok(config)
}

struct Run {
    result: CertificationResult,
    report: Option<EvalReport>,
    calls_per_draw: usize,
}

struct Certifier {
    input: Input,
    model: Box<dyn SegmentationModel>,
    denoiser: Option<Box<dyn Denoiser>>,
    schedule: DiffusionSchedule,
    parallel: bool,
}

impl Certifier {
    fn new(cfg: &RunConfig, needs_denoiser: bool) -> CliResult<Self> {
        let input = load_input(cfg)?;
        let model = build_model(cfg, &input)?;
        let denoiser = if needs_denoiser {
            Some(build_denoiser(cfg, &input)?)
        } else {
            None
        };
        Ok(Self {
            model,
            denoiser,
            schedule: schedule(cfg)?,
            parallel: cfg.get_or("smoothing", "parallel", true)?,
            input,
        })
    }

    fn run(&self, config: &SmoothingConfig) -> CliResult<Run> {
        let counter = self.denoiser.as_deref().map(CountingDenoiser::new);
        let mut engine = Engine::new(self.model.as_ref());
        if let Some(counter) = &counter {
            engine = engine.with_denoiser(counter, &self.schedule);
        }
        if !self.parallel {
            engine = engine.sequential();
        }
        let result = engine.seg_certify(&self.input.image, config)?;
        let report = match &self.input.labels {
            Some(gt) => {
                let gt_classes = gt.max_class().map_or(0, |c| c as usize + 1);
                let k = self.model.num_classes().max(gt_classes);
                Some(evaluate(&result.labels, gt, k)?)
            }
            None => None,
        };
        let calls = counter.as_ref().map_or(0, CountingDenoiser::calls);
        Ok(Run {
            calls_per_draw: calls / (config.n0 + config.n),
            result,
            report,
        })
    }
}

fn csv_header(extra: &[&str]) -> String {
    let mut cols: Vec<&str> = CSV_COLUMNS.to_vec();
    cols.extend_from_slice(extra);
    cols.join(",")
}

fn csv_row(run: &Run, model: &str) -> String {
    let c = &run.result.config;
    let metric = |f: fn(&EvalReport) -> f64| {
        run.report
            .as_ref()
            .map_or(String::new(), |r| f(r).to_string())
    };
    [
        c.sigma.to_string(),
        run.result.radius.to_string(),
        metric(|r| r.acc_strict),
        metric(|r| r.acc_nonabstain),
        metric(|r| r.miou),
        run.result.abstain_rate().to_string(),
        c.n.to_string(),
        c.n0.to_string(),
        c.alpha().to_string(),
        c.tau().to_string(),
        c.effective_denoise().to_string(),
        model.to_string(),
        c.seed.to_string(),
    ]
    .join(",")
}

/// `-log10(p)` in thousandths, saturating at the 16-bit maximum.
pub fn pvalue_code(p: f64) -> u16 {
    if p <= 0.0 {
        return u16::MAX;
    }
    (-p.log10() * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
}

fn pvalue_image(result: &CertificationResult) -> CliResult<Image> {
    let data = result
        .pvalues
        .iter()
        .map(|&p| pvalue_code(p) as f64 / u16::MAX as f64)
        .collect();
    Ok(Image::new(
        result.labels.height(),
        result.labels.width(),
        1,
        data,
    )?)
}

fn run_log(run: &Run, model: &dyn SegmentationModel) -> String {
    let r = &run.result;
    let c = &r.config;
    let mut log = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(log, "{k}={v}");
    };
    line("command", "certify".into());
    line("model", model.name().into());
    line("classes", model.num_classes().to_string());
    line("height", r.labels.height().to_string());
    line("width", r.labels.width().to_string());
    line("sigma", c.sigma.to_string());
    line("scale", c.scale.to_string());
    line("radius", r.radius.to_string());
    line("denoise_mode", c.effective_denoise().to_string());
    line("t_star", r.t_star.map_or("none".into(), |t| t.to_string()));
    line("denoiser_calls_per_draw", run.calls_per_draw.to_string());
    line("draws", (c.n0 + c.n).to_string());
    line("abstained", r.labels.abstain_count().to_string());
    line("pixels", r.labels.len().to_string());
    line("iou_convention", IOU_CONVENTION.into());
    if let Some(report) = &run.report {
        for (i, iou) in report.per_class_iou.iter().enumerate() {
            line(
                &format!("iou_{i}"),
                iou.map_or("absent".into(), |v| v.to_string()),
            );
        }
    }
    log
}

pub fn certify(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sigma = cfg.required("smoothing", "sigma")?;
    let mode = cfg.get_or("smoothing", "denoise", DenoiseMode::Off)?;
    let scale = cfg.get_or("smoothing", "scale", 1.0)?;
    let config = smoothing_config(cfg, sigma, mode, scale)?;
    let certifier = Certifier::new(cfg, config.effective_denoise() != DenoiseMode::Off)?;
    let run = certifier.run(&config)?;
    let model = certifier.model.as_ref();

    ensure_dir(out)?;
    write_labels(
        out.join("certified.pgm"),
        &run.result.labels,
        model.num_classes(),
    )?;
    write_pnm(
        out.join("pvalues.pgm"),
        &pvalue_image(&run.result)?,
        BitDepth::Sixteen,
    )?;
    let csv = format!("{}\n{}\n", csv_header(&[]), csv_row(&run, model.name()));
    write_text(&out.join("metrics.csv"), &csv)?;
    write_text(&out.join("run.log"), &run_log(&run, model))?;
    write_echo(cfg, out)?;
    print!("{csv}");
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sigmas: Vec<f64> = cfg
        .list("sweep", "sigmas")?
        .ok_or_else(|| CliError::Config("missing required key sweep.sigmas".into()))?;
    if sigmas.is_empty() {
        return Err(CliError::Config("sweep.sigmas is empty".into()));
    }
    let default_mode = cfg.get_or("smoothing", "denoise", DenoiseMode::Off)?;
    let modes = cfg
        .list("sweep", "denoise")?
        .unwrap_or_else(|| vec![default_mode]);
    let scales = cfg.list("sweep", "scales")?.unwrap_or_else(|| vec![1.0]);
    if modes.is_empty() || scales.is_empty() {
        return Err(CliError::Config(
            "sweep.denoise and sweep.scales must not be empty".into(),
        ));
    }
    let needs_denoiser =
        modes.iter().any(|m| *m != DenoiseMode::Off) && sigmas.iter().any(|s| *s > 0.0);
    let certifier = Certifier::new(cfg, needs_denoiser)?;

    let mut csv = csv_header(&["scale"]);
    csv.push('\n');
    for &mode in &modes {
        for &scale in &scales {
            for &sigma in &sigmas {
                let run = smoothing_config(cfg, sigma, mode, scale)
                    .and_then(|config| certifier.run(&config))
                    .map_err(|e| e.context(format!("sigma {sigma} ({mode}, scale {scale})")))?;
                let _ = writeln!(csv, "{},{}", csv_row(&run, certifier.model.name()), scale);
            }
        }
    }
    ensure_dir(out)?;
    write_text(&out.join("sweep.csv"), &csv)?;
    write_echo(cfg, out)?;
    print!("{csv}");
    Ok(())
}

pub fn gen(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let spec = scene_spec(cfg)?;
    let scene = gen_scene(&spec)?;
    ensure_dir(out)?;
    let image_name = if spec.channels == 3 {
        "image.ppm"
    } else {
        "image.pgm"
    };
    write_pnm(out.join(image_name), &scene.image, BitDepth::Sixteen)?;
    write_labels(out.join("labels.pgm"), &scene.labels, spec.num_classes())?;
    let manifest = format!(
        "[scene]\nheight={}\nwidth={}\nlayout={}\nclasses={}\nmeans={}\nwithin_std={}\nchannels={}\nseed={}\nmin_gap={}\nimage={image_name}\nlabels=labels.pgm\n",
        spec.height,
        spec.width,
        spec.layout,
        spec.num_classes(),
        format_list(&spec.means),
        spec.within_std,
        spec.channels,
        spec.seed,
        spec.min_gap(),
    );
    write_text(&out.join("manifest.ini"), &manifest)?;
    write_echo(cfg, out)?;
    println!("wrote {} and labels.pgm to {}", image_name, out.display());
    Ok(())
}

pub fn timestep(cfg: &RunConfig, sigma: Option<f64>) -> CliResult<usize> {
    let sigma = match sigma {
        Some(s) => s,
        None => cfg.required("smoothing", "sigma")?,
    };
    let schedule = schedule(cfg)?;
    let sol = compute_timestep(&schedule, sigma)?;
    println!("{}", sol.t_star);
    Ok(sol.t_star)
}

pub fn eval(
    pred: &Path,
    gt: &Path,
    classes: Option<usize>,
    out: Option<&Path>,
) -> CliResult<EvalReport> {
    let pred_map = read_labels(pred, classes)?;
    let gt_map = read_labels(gt, classes)?;
    let k = match classes {
        Some(k) => k,
        None => {
            let top = pred_map.max_class().max(gt_map.max_class()).unwrap_or(0) as usize;
            (top + 1).max(2)
        }
    };
    let report = evaluate(&pred_map, &gt_map, k)?;
    let mut header = vec!["acc_strict", "acc_nonabstain", "miou", "abstain_rate"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    let mut row = vec![
        report.acc_strict.to_string(),
        report.acc_nonabstain.to_string(),
        report.miou.to_string(),
        report.abstain_rate.to_string(),
    ];
    for (c, iou) in report.per_class_iou.iter().enumerate() {
        header.push(format!("iou_{c}"));
        row.push(iou.map_or(String::new(), |v| v.to_string()));
    }
    let csv = format!("{}\n{}\n", header.join(","), row.join(","));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("eval.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(report)
}

pub fn render(labels: &Path, output: &Path, classes: Option<usize>) -> CliResult<()> {
    let map = read_labels(labels, classes)?;
    let k = classes.unwrap_or_else(|| map.max_class().map_or(1, |c| c as usize + 1));
    let image = render_segmentation(&map, &Palette::default_for(k))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_pnm(output, &image, BitDepth::Eight)?;
    println!("wrote {}", output.display());
    Ok(())
}

pub fn fwer_spec(cfg: &RunConfig) -> CliResult<FwerRunSpec> {
    Ok(FwerRunSpec {
        pixels: cfg.get_or("fwer", "pixels", 256usize)?,
        n: cfg.get_or("fwer", "n", 100usize)?,
        n0: cfg.get_or("fwer", "n0", 10usize)?,
        tau: cfg.get_or("fwer", "tau", 0.75)?,
        alpha: cfg.get_or("fwer", "alpha", 0.05)?,
        p_true: cfg.get_or("fwer", "p_true", 0.75)?,
        num_classes: cfg.get_or("fwer", "classes", 2usize)?,
        trials: cfg.get_or("fwer", "trials", 1000usize)?,
        seed: cfg.get_or("fwer", "seed", 0u64)?,
    })
}

pub fn fwer_sim(cfg: &RunConfig, out: &Path) -> CliResult<FwerReport> {
    let spec = fwer_spec(cfg)?;
    let report = fwer_simulate(&spec)?;
    let mut csv = String::from("trial,certified,min_pvalue,family_error\n");
    for t in &report.per_trial {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            t.trial,
            t.certified,
            t.min_pvalue,
            u8::from(t.is_error())
        );
    }
    let summary = format!(
        "trials={}\nerrors={}\nempirical_fwer={}\nstd_error={}\nalpha={}\ntolerance={}\n",
        report.trials,
        report.errors,
        report.rate,
        report.std_error,
        spec.alpha,
        FwerReport::tolerance(spec.alpha, spec.trials),
    );
    ensure_dir(out)?;
    write_text(&out.join("fwer.csv"), &csv)?;
    write_text(&out.join("fwer_summary.txt"), &summary)?;
    write_echo(cfg, out)?;
    print!("{summary}");
    Ok(report)
}

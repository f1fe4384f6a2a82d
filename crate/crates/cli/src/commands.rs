use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sepf::dsp::dump;
use sepf::enhancement::asr_features;
use sepf::evaluation::evaluate_run;
use sepf::synth::{noise, speech_like, NoiseKind};
use sepf::training::{format_loss_log, mix_at_snr, read_manifest, train as train_run, MixtureSpec, TrainingConfig};
use sepf::{Checkpoint, Enhancer, MethodConfig, Waveform};

use crate::config::RunConfig;
use crate::{CliError, EnhanceArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn mix_one(spec: &MixtureSpec, noisy_path: &Path, noise_path: &Path) -> Result<usize, CliError> {
    let clean = Waveform::read_wav(&spec.clean_source)?;
    let noise = Waveform::read_wav(&spec.noise_source)?;
    let m = mix_at_snr(&clean, &noise, spec.snr_db, spec.seed)?;
    m.noisy.write_wav(noisy_path)?;
    m.scaled_noise.write_wav(noise_path)?;
    Ok(m.noisy.samples.iter().filter(|x| x.abs() > 1.0).count())
}

pub fn mix(manifest: &Path, out_dir: &Path) -> Result<(), CliError> {
    let specs = read_manifest(manifest)?;
    if specs.is_empty() {
        return Err(sepf::Error::EmptyManifest.into());
    }
    create_dir(out_dir)?;
    let mut resolved = String::from("# clean\tnoise\tsnr_db\tseed\tcondition\n");
    let mut index = String::from("# line\tnoisy\tnoise\tsnr_db\tcondition\n");
    let mut failed = 0;
    for (i, spec) in specs.iter().enumerate() {
        let noisy_path = out_dir.join(format!("mix_{i:04}_noisy.wav"));
        let noise_path = out_dir.join(format!("mix_{i:04}_noise.wav"));
        match mix_one(spec, &noisy_path, &noise_path) {
            Ok(clipped) => {
                if clipped > 0 {
                    log::warn!("mixture {i}: {clipped} samples clipped to [-1, 1] in {}", noisy_path.display());
                }
                let abs = MixtureSpec {
                    clean_source: absolute(&spec.clean_source),
                    noise_source: absolute(&spec.noise_source),
                    ..spec.clone()
                };
                resolved.push_str(&abs.to_line());
                resolved.push('\n');
                let _ = writeln!(
                    index,
                    "{i}\t{}\t{}\t{}\t{}",
                    noisy_path.display(),
                    noise_path.display(),
                    spec.snr_db,
                    spec.condition.as_deref().unwrap_or("-")
                );
            }
            Err(e) => {
                failed += 1;
                log::error!("mixture {i} ({}): {e}", spec.clean_source.display());
            }
        }
    }
    write_text(&out_dir.join("manifest.tsv"), &resolved)?;
    write_text(&out_dir.join("index.tsv"), &index)?;
    log::info!("mixed {} of {} lines into {}", specs.len() - failed, specs.len(), out_dir.display());
    if failed > 0 {
        return Err(CliError::LinesFailed {
            failed,
            total: specs.len(),
        });
    }
    Ok(())
}

fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.method) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(_)) => RunConfig {
            train_manifest: None,
            out_dir: None,
            training: TrainingConfig::new(MethodConfig::ALL[0]),
        },
        (None, None) => {
            return Err(CliError::Usage(format!(
                "train needs --config or --method (one of {})",
                MethodConfig::valid_names()
            )))
        }
    };
    let t = &mut cfg.training;
    if let Some(m) = &args.method {
        t.method = m.parse()?;
    }
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { t.$field = v; } )* };
    }
    apply!(layers, cells, epochs, learning_rate, momentum, batch_size, clip_norm, seed, checkpoint_every);
    if let Some(p) = &args.train_manifest {
        cfg.train_manifest = Some(p.clone());
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = Some(p.clone());
    }
    cfg.training.validate()?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_run_config(args)?;
    let manifest = cfg
        .train_manifest
        .clone()
        .ok_or_else(|| CliError::Usage("no training manifest (set train_manifest or --train-manifest)".into()))?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory (set out_dir or --out-dir)".into()))?;
    let specs = read_manifest(&manifest)?;
    create_dir(&out_dir)?;
    let t = &cfg.training;
    log::info!(
        "training {} on {} mixtures: {}x{} cells, {} epochs, lr {}, seed {}",
        t.method,
        specs.len(),
        t.layers,
        t.cells,
        t.epochs,
        t.learning_rate,
        t.seed
    );
    write_text(&out_dir.join("config.toml"), &cfg.to_toml())?;
    let outcome = train_run(&specs, t, (t.checkpoint_every > 0).then_some(out_dir.as_path()))?;
    write_text(&out_dir.join("loss.tsv"), &format_loss_log(&outcome.reports))?;
    let model = out_dir.join("model.sepf");
    outcome.checkpoint.save(&model)?;
    log::info!("wrote {}", model.display());
    Ok(())
}

pub fn enhance(args: &EnhanceArgs) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let method = checkpoint.method;
    if (args.wav_out.is_some() || args.via_waveform) && method.output_domain.is_mel() {
        return Err(sepf::Error::NotInvertible(format!(
            "{method} estimates mel-band features, which cannot be turned back into a waveform"
        ))
        .into());
    }
    let mut enhancer = Enhancer::new(checkpoint);
    if let Some(v) = args.force_mask {
        enhancer = enhancer.force_mask(v)?;
    }
    let noisy = Waveform::read_wav(&args.input)?;
    let enhanced = enhancer.enhance(&noisy)?;
    if let Some(path) = &args.features_out {
        let features = if args.asr || args.via_waveform {
            asr_features(&enhancer.frontend, &enhanced, args.via_waveform)?
        } else {
            enhanced.estimate.clone()
        };
        dump::write(&features, path)?;
        log::info!("wrote {} features ({} x {}) to {}", features.domain, features.frames(), features.dims(), path.display());
    }
    if let Some(path) = &args.wav_out {
        enhanced.waveform()?.write_wav(path)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn eval(checkpoints: &[PathBuf], manifest: &Path, report_out: &Path) -> Result<(), CliError> {
    let cks = checkpoints
        .iter()
        .map(Checkpoint::load)
        .collect::<sepf::Result<Vec<_>>>()?;
    let specs = read_manifest(manifest)?;
    let report = evaluate_run(&cks, &specs)?;
    if let Some(dir) = report_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let jsonl = report_out.with_extension("jsonl");
    report.write(report_out, &jsonl)?;
    print!("{}", report.to_text());
    log::info!("wrote {} and {}", report_out.display(), jsonl.display());
    Ok(())
}

fn describe(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut s = format!("{}\n", path.display());
    if bytes.starts_with(dump::MAGIC) {
        let h = dump::header_from_bytes(&bytes)?;
        let _ = writeln!(s, "  format       SEPX feature dump v{}", h.version);
        let _ = writeln!(s, "  domain       {}", h.domain);
        let _ = writeln!(s, "  frames       {}", h.frames);
        let _ = writeln!(s, "  dims         {}", h.dims);
        let _ = writeln!(s, "  frame_hop    {}", h.meta.frame_hop);
        let _ = writeln!(s, "  window_len   {}", h.meta.window_len);
        let _ = writeln!(s, "  sample_rate  {}", h.meta.sample_rate);
        let mel = h.meta.mel_bands.map_or("none".to_string(), |b| b.to_string());
        let _ = writeln!(s, "  mel_bands    {mel}");
        let _ = writeln!(s, "  gain         {}", h.meta.scale);
    } else if bytes.starts_with(sepf::checkpoint::MAGIC) {
        let ck = Checkpoint::from_bytes(&bytes)?;
        let shape = ck.params.shape;
        let _ = writeln!(s, "  format       SEPF checkpoint v{}", sepf::checkpoint::VERSION);
        let _ = writeln!(s, "  method       {}", ck.method);
        let _ = writeln!(s, "  input        {}", ck.method.input_domain);
        let _ = writeln!(s, "  output       {}", ck.method.output_domain);
        let _ = writeln!(s, "  head         {:?}", ck.head());
        let _ = writeln!(s, "  layers       {}", shape.layer_count);
        let _ = writeln!(s, "  cells        {}", shape.cell_count);
        let _ = writeln!(s, "  input_dim    {}", shape.input_dim);
        let _ = writeln!(s, "  output_dim   {}", shape.output_dim);
        let _ = writeln!(s, "  parameters   {}", ck.params.parameter_count());
    } else {
        return Err(CliError::Usage(format!("{}: neither a SEPX dump nor a SEPF checkpoint", path.display())));
    }
    Ok(s)
}

pub fn inspect(files: &[PathBuf]) -> Result<(), CliError> {
    let mut first_err = None;
    for f in files {
        match describe(f) {
            Ok(s) => print!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

const MATCHED: [NoiseKind; 3] = [NoiseKind::Pink, NoiseKind::White, NoiseKind::Hum];
const SNRS: [f64; 3] = [0.0, 3.0, 6.0];

pub fn synth(out_dir: &Path, utterances: usize, seconds: f64, seed: u64) -> Result<(), CliError> {
    if utterances < 4 {
        return Err(CliError::Usage("synth needs at least 4 utterances".into()));
    }
    if !(seconds >= 0.1 && seconds.is_finite()) {
        return Err(CliError::Usage("utterances must last at least 0.1 s".into()));
    }
    create_dir(out_dir)?;
    let len = (seconds * sepf::audio::SAMPLE_RATE as f64).round() as usize;
    for (k, kind) in NoiseKind::ALL.into_iter().enumerate() {
        noise(kind, seed.wrapping_add(k as u64), 4 * len).write_wav(out_dir.join(format!("noise_{kind}.wav")))?;
    }
    let n_eval = (utterances / 4).max(2);
    let n_train = utterances - n_eval;
    let mut train = String::from("# clean\tnoise\tsnr_db\tseed\tcondition\n");
    let mut eval = train.clone();
    for i in 0..utterances {
        let name = format!("clean_{i:03}.wav");
        speech_like(seed.wrapping_mul(1000).wrapping_add(i as u64), len).write_wav(out_dir.join(&name))?;
        let snr = SNRS[i % 3];
        if i < n_train {
            let kind = MATCHED[(i / 3) % 3];
            let _ = writeln!(train, "{name}\tnoise_{kind}.wav\t{snr}\t{i}\tmatched");
        } else {
            let kind = MATCHED[i % 3];
            let _ = writeln!(eval, "{name}\tnoise_{kind}.wav\t{snr}\t{i}\tmatched");
            for s in SNRS {
                let _ = writeln!(eval, "{name}\tnoise_babble.wav\t{s}\t{i}\tunseen");
            }
        }
    }
    write_text(&out_dir.join("train.tsv"), &train)?;
    write_text(&out_dir.join("eval.tsv"), &eval)?;
    let run = "train_manifest = \"train.tsv\"\nout_dir = \"run\"\nmethod = \"log-fbank masking\"\n\
               layers = 2\ncells = 64\nepochs = 50\nlearning_rate = 0.001\nmomentum = 0.9\n\
               batch_size = 4\nclip_norm = 5.0\nseed = 0\ncheckpoint_every = 10\n";
    write_text(&out_dir.join("run.toml"), run)?;
    log::info!(
        "wrote {utterances} utterances, {n_train} training and {} evaluation lines to {}",
        n_eval * 4,
        out_dir.display()
    );
    Ok(())
}

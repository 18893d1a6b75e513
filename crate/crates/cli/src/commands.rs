use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gsmcad_core::cad::io::{sequence_from_json, sequence_to_json, tree_from_json, tree_to_json};
use gsmcad_core::cad::{deserialize_sequence, serialize_tree, validate_sequence, CadSequence, CadTree};
use gsmcad_core::dataset::{generate, read_corpus, stats, write_corpus, LengthMode};
use gsmcad_core::diffusion::{CadDiffusion, PairedMode, TrainConfig, Trainer};
use gsmcad_core::geometry::export::{point_cloud_to_obj, voxels_to_bytes};
use gsmcad_core::geometry::{execute, sample_points};
use gsmcad_core::metrics::{evaluate, paired_counts, EvalOptions, MetricsReport, PairedCounts};
use gsmcad_core::model::{Example, ModelConfig};
use gsmcad_core::numerics::Scalar;
use rand::SeedableRng;
use serde_json::{json, Value};

use crate::{Cli, CliError, Command, Precision, Profile};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match cli.precision {
        Precision::F32 => run_with::<f32>(cli),
        Precision::F64 => run_with::<f64>(cli),
    }
}

fn run_with<T: Scalar>(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Tokenize { tree, max_len } => {
            let tree = tree_from_json(&read(tree)?)?;
            emit(cli.out.as_deref(), sequence_to_json(&serialize_tree(&tree, *max_len)?).as_bytes())
        }
        Command::Detokenize { sequence } => {
            let seq = sequence_from_json(&read(sequence)?)?;
            emit(cli.out.as_deref(), tree_to_json(&deserialize_sequence(&seq)?).as_bytes())
        }
        Command::Validate { sequence } => {
            let report = validate_sequence(&sequence_from_json(&read(sequence)?)?);
            emit(cli.out.as_deref(), serde_json::to_string_pretty(&report)?.as_bytes())?;
            if report.all_pass() {
                Ok(())
            } else {
                Err(CliError::Invalid(report.error.unwrap_or_else(|| "program fails a dataset filter".into())))
            }
        }
        Command::Execute { sequence, resolution, points, voxels } => {
            let tree = load_tree(sequence)?;
            let grid = execute(&tree, *resolution)?;
            if let Some(v) = voxels {
                write(v, &voxels_to_bytes(&grid))?;
            }
            let cloud = sample_points(&grid, *points, cli.seed)?;
            emit(cli.out.as_deref(), point_cloud_to_obj(&cloud).as_bytes())
        }
        Command::GenData { count, min_len, max_len, pad_to } => {
            let dir = out_dir(cli)?;
            let trees = generate(*count, (*min_len, *max_len), cli.seed)?;
            let seqs = trees.iter().map(|t| serialize_tree(t, *pad_to)).collect::<std::result::Result<Vec<_>, _>>()?;
            let s = stats(&seqs, LengthMode::Tokens)?;
            write_corpus(dir, &seqs, cli.seed, (*min_len, *max_len), s.clone())?;
            eprintln!("wrote {} programs to {}", seqs.len(), dir.display());
            print!("{}", s.to_csv("generated"));
            Ok(())
        }
        Command::Stats { corpus, commands } => {
            let seqs = corpus_at(corpus)?;
            let mode = if *commands { LengthMode::Commands } else { LengthMode::Tokens };
            let name = corpus.file_name().map_or("corpus".into(), |n| n.to_string_lossy().into_owned());
            emit(cli.out.as_deref(), stats(&seqs, mode)?.to_csv(&name).as_bytes())
        }
        Command::Train { .. } => train::<T>(cli),
        Command::Sample { checkpoint, n } => {
            let dir = out_dir(cli)?;
            let (sys, meta, _) = CadDiffusion::<T>::from_checkpoint(&read_bytes(checkpoint)?)?;
            let lengths: Vec<usize> = serde_json::from_value(meta["lengths"].clone())
                .map_err(|_| CliError::Invalid("checkpoint has no training lengths".into()))?;
            let generated = sys.sample(*n, cli.seed, &lengths)?;
            let seqs: Vec<CadSequence> = generated.iter().map(|g| g.seq.clone()).collect();
            let valid = seqs.iter().filter(|s| validate_sequence(s).all_pass()).count();
            let parses = generated.iter().filter(|g| g.parses).count();
            let range = (lengths.iter().copied().min().unwrap_or(0), lengths.iter().copied().max().unwrap_or(0));
            write_corpus(dir, &seqs, cli.seed, range, stats(&seqs, LengthMode::Tokens)?)?;
            let summary = json!({
                "samples": seqs.len(),
                "parses": parses,
                "valid": valid,
                "valid_ratio": 100.0 * valid as f64 / seqs.len().max(1) as f64,
            });
            write(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
            println!("{summary}");
            Ok(())
        }
        Command::Eval { gen, reference, train, checkpoint, paired_mode, points, resolution } => {
            let refs = corpus_at(reference)?;
            let opts = EvalOptions { resolution: *resolution, points: *points, seed: cli.seed };
            let mut report = match gen {
                Some(g) => {
                    let train = train.as_deref().map(corpus_at).transpose()?;
                    evaluate(&corpus_at(g)?, &refs, train.as_deref(), &opts)?
                }
                None => MetricsReport { samples: refs.len(), ..Default::default() },
            };
            if let Some(ck) = checkpoint {
                let (sys, _, _) = CadDiffusion::<T>::from_checkpoint(&read_bytes(ck)?)?;
                let mode = parse_mode(paired_mode, sys.schedule.t_max)?;
                let mut counts = PairedCounts::default();
                for (i, seq) in refs.iter().enumerate() {
                    let tree = deserialize_sequence(seq)?;
                    let ex = Example::from_tree(&tree, sys.config().n_ts)?;
                    let pred = sys.reconstruct(&ex, mode, cli.seed.wrapping_add(i as u64))?;
                    counts.add(&paired_counts(&pred, &tree)?);
                }
                report.paired = Some(counts.accuracy());
            } else if gen.is_none() {
                return Err(CliError::Invalid("eval needs --gen, --checkpoint or both".into()));
            }
            if let Some(out) = &cli.out {
                write(&out.with_extension("json"), report.to_json().as_bytes())?;
            }
            emit(cli.out.as_deref(), report.to_csv().as_bytes())
        }
        Command::BenchScan { lengths, d_e, blocks, reps } => {
            if lengths.is_empty() || *d_e == 0 || *d_e % 2 != 0 || *blocks == 0 {
                return Err(CliError::Invalid("bench-scan needs lengths and an even positive width".into()));
            }
            let rows = gsmcad_bench::scan_scaling::<T>(lengths, *d_e, *blocks, *reps, cli.seed);
            emit(cli.out.as_deref(), gsmcad_bench::to_csv(&rows).as_bytes())
        }
    }
}

fn train<T: Scalar>(cli: &Cli) -> Result<()> {
    let Command::Train { data, profile, steps, epochs, batch, lr, variant, checkpoint_every, resume, log } = &cli.command
    else {
        unreachable!("train dispatch")
    };
    let out = cli.out.as_deref().ok_or_else(|| CliError::Invalid("train needs --out for the checkpoint".into()))?;
    let seqs = corpus_at(data)?;
    let mut trainer = match resume {
        Some(ck) => {
            let bytes = read_bytes(ck)?;
            let (sys, _, _) = CadDiffusion::<T>::from_checkpoint(&bytes)?;
            let examples = examples(&seqs, sys.config().n_ts)?;
            let mut tr = Trainer::<T>::resume(&bytes, examples)?;
            override_train(&mut tr.config, *steps, *epochs, *batch, *lr, *checkpoint_every);
            tr
        }
        None => {
            let (mut model, mut train) = run_config(cli.config.as_deref(), *profile)?;
            override_train(&mut train, *steps, *epochs, *batch, *lr, *checkpoint_every);
            train.seed = cli.seed;
            if let Some(v) = variant {
                model.variant = serde_json::from_value(json!(v))
                    .map_err(|_| CliError::Invalid(format!("unknown variant {v}; use g_mamba or vanilla_ssd")))?;
            }
            train.validate()?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
            let sys = CadDiffusion::<T>::new(model.clone(), train.schedule()?, &mut rng)?;
            Trainer::new(sys, train, examples(&seqs, model.n_ts)?)?
        }
    };
    let mut log_file = log
        .as_ref()
        .map(|p| fs::OpenOptions::new().create(true).append(true).open(p).map_err(|e| CliError::io(p, e)))
        .transpose()?;
    let every = trainer.config.checkpoint_every;
    let total = trainer.total_steps();
    let mut io_err = None;
    trainer.run(|tr, step| {
        if let Some(f) = log_file.as_mut() {
            if let Err(e) = writeln!(f, "{}", serde_json::to_string(step).expect("step log serializes")) {
                io_err.get_or_insert(e);
            }
        }
        if step.step % 50 == 0 || tr.is_done() {
            eprintln!("step {}/{total} loss {:.5}", step.step + 1, step.loss.total);
        }
        if every.is_some_and(|n| n > 0 && tr.step % n == 0) {
            if let Err(e) = fs::write(out, tr.checkpoint()) {
                io_err.get_or_insert(e);
            }
        }
        Ok(())
    })?;
    if let Some(e) = io_err {
        return Err(CliError::io(out, e));
    }
    write(out, &trainer.checkpoint())
}

fn override_train(
    t: &mut TrainConfig,
    steps: Option<u64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    every: Option<u64>,
) {
    if steps.is_some() {
        t.max_steps = steps;
    }
    if let Some(e) = epochs {
        t.epochs = e;
    }
    if let Some(b) = batch {
        t.batch = b;
    }
    if let Some(l) = lr {
        t.lr = l;
    }
    if every.is_some() {
        t.checkpoint_every = every;
    }
}

/// Profile defaults overlaid with the `model` and `train` objects of the
/// config file, key by key.
pub fn run_config(path: Option<&Path>, profile: Profile) -> Result<(ModelConfig, TrainConfig)> {
    let (model, train) = match profile {
        Profile::Desk => (ModelConfig::desk(), TrainConfig::desk()),
        Profile::Paper => (ModelConfig::paper(), TrainConfig::paper()),
    };
    let mut base = json!({ "model": model, "train": train });
    if let Some(p) = path {
        let file: Value = serde_json::from_str(&read(p)?)?;
        let Value::Object(file) = file else {
            return Err(CliError::Invalid("config file must be a JSON object".into()));
        };
        for (section, v) in file {
            let (Some(Value::Object(dst)), Value::Object(src)) = (base.get_mut(&section), v) else {
                return Err(CliError::Invalid(format!("unknown config section {section}")));
            };
            dst.extend(src);
        }
    }
    let model: ModelConfig = serde_json::from_value(base["model"].take())?;
    let train: TrainConfig = serde_json::from_value(base["train"].take())?;
    model.validate()?;
    Ok((model, train))
}

fn parse_mode(s: &str, t_max: usize) -> Result<PairedMode> {
    let bad = || CliError::Invalid(format!("paired mode {s}: expected one-shot:<t> or chain:<t>"));
    let (kind, t) = s.split_once(':').ok_or_else(bad)?;
    let t = if t == "max" { t_max } else { t.parse().map_err(|_| bad())? };
    match kind {
        "one-shot" => Ok(PairedMode::OneShot(t)),
        "chain" => Ok(PairedMode::Chain(t)),
        _ => Err(bad()),
    }
}

fn examples(seqs: &[CadSequence], n_ts: usize) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(seqs.len());
    for s in seqs {
        if s.valid_len > n_ts {
            return Err(CliError::Invalid(format!("sequence of {} tokens exceeds n_ts = {n_ts}", s.valid_len)));
        }
        out.push(Example::from_tree(&deserialize_sequence(s)?, n_ts)?);
    }
    if out.is_empty() {
        return Err(CliError::Invalid("training corpus is empty".into()));
    }
    Ok(out)
}

fn load_tree(path: &Path) -> Result<CadTree> {
    let text = read(path)?;
    match sequence_from_json(&text) {
        Ok(seq) => Ok(deserialize_sequence(&seq)?),
        Err(seq_err) => tree_from_json(&text).map_err(|_| seq_err.into()),
    }
}

fn corpus_at(dir: &Path) -> Result<Vec<CadSequence>> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: not a directory", dir.display())));
    }
    Ok(read_corpus(dir)?)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_deref().ok_or_else(|| CliError::Invalid("this command needs --out <dir>".into()))?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| CliError::io(p, e))
}

fn read_bytes(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| CliError::io(p, e))
}

fn write(p: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(p, bytes).map_err(|e| CliError::io(p, e))
}

/// Writes to the file when given, stdout otherwise.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::io(&PathBuf::from("<stdout>"), e))
        }
    }
}

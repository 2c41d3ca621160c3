use std::fs;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use azoo_core::distinguisher::{build_dataset, evaluate, train_classifier, LabeledRollout, TrainConfig};
use azoo_core::dreamer::{synthesize, Ascent, DreamConfig};
use azoo_core::embedding::{embed_hidden, embed_ram_joint, export_embedding, EmbeddingParams, Layer};
use azoo_core::env::{load_rollout, record_rollout, save_rollout, PolicyMode, Rollout, RolloutConfig, ToyConfig, ToyEnv};
use azoo_core::filters::{rank_biases, temporal_profile};
use azoo_core::model::{load_model, save_model, validate_model, Algorithm, FrozenModel, ModelMeta};
use azoo_core::nn::{HeadKind, NetworkSpec, Objective};
use azoo_core::patches::top_patches;
use azoo_core::robustness::{
    normalize_curves, observation_noise_sweep, parameter_noise_sweep, random_play_baseline, EvalConfig, NormalizationMode, SweepCurve,
    DEFAULT_OBS_SIGMAS, DEFAULT_PARAM_SIGMAS,
};
use azoo_core::synth::quadrant_reader;
use azoo_core::viz::{confusion_heatmap, contact_sheet, dream_strip, filter_mosaic, render_rollout_grid, render_trace_frames};
use serde_json::json;

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inspect { model, json } => inspect(&model, json),
        Command::Validate { model } => validate(&model),
        Command::SynthModel(a) => synth_model(a),
        Command::Rollout(a) => rollout(a),
        Command::Filters { model, out } => filters(&model, &out),
        Command::TemporalBias { models, out } => temporal_bias(&models, out.as_deref()),
        Command::Robustness(a) => robustness(a),
        Command::Classify(a) => classify(a),
        Command::Embed(a) => embed(a),
        Command::Patches(a) => patches(a),
        Command::Dream(a) => dream(a),
        Command::RenderTrace { rollout, model, out, limit } => render_trace(&rollout, &model, &out, limit),
        Command::RenderGrid(a) => render_grid(a),
        Command::Serve { dir, port, host } => crate::serve::serve(&dir, &host, port),
    }
}

fn model_at(path: &Path) -> Result<FrozenModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn rollout_at(path: &Path) -> Result<Rollout> {
    load_rollout(path).with_context(|| format!("loading rollout {}", path.display()))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn head_name(h: HeadKind) -> &'static str {
    match h {
        HeadKind::Q => "q",
        HeadKind::Dueling => "dueling",
        HeadKind::C51 => "c51",
        HeadKind::ActorCritic => "actor_critic",
    }
}

fn inspect(path: &Path, as_json: bool) -> Result<()> {
    let m = model_at(path)?;
    let params = m.spec.param_count()?;
    let mut out = String::new();
    if as_json {
        let v = json!({ "meta": m.meta, "spec": m.spec, "parameters": params });
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        writeln!(out, "algorithm:  {}", m.meta.algorithm)?;
        writeln!(out, "game:       {}", m.meta.game)?;
        writeln!(out, "run:        {}", m.meta.run_id)?;
        writeln!(out, "checkpoint: {}", m.meta.checkpoint)?;
        writeln!(out, "input:      {:?}", m.spec.input)?;
        for (i, (l, (h, w))) in m.spec.conv_layers.iter().zip(m.spec.conv_output_sizes()?).enumerate() {
            writeln!(out, "conv{}:      {} filters {}x{} stride {} -> {}x{}", i + 1, l.out_channels, l.kernel, l.kernel, l.stride, h, w)?;
        }
        writeln!(out, "fc:         {}", m.spec.fc_width)?;
        writeln!(out, "head:       {} ({} actions)", head_name(m.spec.head), m.spec.n_actions)?;
        writeln!(out, "parameters: {params}")?;
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let m = model_at(path)?;
    let violations = validate_model(&m);
    if violations.is_empty() {
        println!("ok: {} ({} tensors, checksum verified)", m.meta.label(), m.tensors.len());
        return Ok(());
    }
    for v in &violations {
        println!("violation: {v}");
    }
    Err(azoo_core::Error::SpecInconsistency(format!("{} tensor violations", violations.len())).into())
}

fn synth_model(a: SynthArgs) -> Result<()> {
    let mut meta = ModelMeta::new(a.game, Algorithm::from(a.algorithm.as_str()), a.run);
    meta.checkpoint = a.checkpoint.parse()?;
    let model = match a.kind {
        SynthKind::Random => {
            let head = match a.head {
                Head::Q => HeadKind::Q,
                Head::Dueling => HeadKind::Dueling,
                Head::C51 => HeadKind::C51,
                Head::ActorCritic => HeadKind::ActorCritic,
            };
            FrozenModel::random(NetworkSpec::nature(head, a.actions), meta, a.seed)?
        }
        SynthKind::Quadrant => FrozenModel { meta, ..quadrant_reader()? },
    };
    save_model(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} ({})", a.out.display(), model.meta.label());
    Ok(())
}

fn rollout(a: RolloutArgs) -> Result<()> {
    let model = model_at(&a.model)?;
    let mut env = ToyEnv::new(ToyConfig::with_horizon(a.steps));
    let policy_mode = match a.policy {
        Policy::Greedy => PolicyMode::Greedy,
        Policy::Sample => PolicyMode::Sample,
    };
    let cfg = RolloutConfig { max_steps: a.steps, policy_mode, seed: a.seed, capture_activations: a.activations };
    let r = record_rollout(&model, &mut env, &cfg)?;
    save_rollout(&r, &a.out)?;
    println!("recorded {} steps, score {}, to {}", r.len(), r.final_score(), a.out.display());
    Ok(())
}

fn filters(path: &Path, out: &Path) -> Result<()> {
    let m = model_at(path)?;
    out_dir(out)?;
    filter_mosaic(&m)?.save(out.join("filters.png"))?;
    let p = temporal_profile(&m)?;
    let mut w = csv::Writer::from_path(out.join("profile.csv"))?;
    w.write_record(["label", "m0", "m1", "m2", "m3", "bias"])?;
    let mut row = vec![m.meta.label()];
    row.extend(p.m.iter().map(|v| v.to_string()));
    row.push(p.present_bias().to_string());
    w.write_record(&row)?;
    w.flush()?;
    println!("present bias {:.4} ({})", p.present_bias(), m.meta.label());
    Ok(())
}

fn temporal_bias(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for p in paths {
        let m = model_at(p)?;
        let prof = temporal_profile(&m).with_context(|| format!("profiling {}", p.display()))?;
        rows.push((m.meta.label(), prof));
    }
    let ranked = rank_biases(rows.iter().map(|(l, p)| (l.clone(), p.present_bias())).collect());
    let sink: Box<dyn std::io::Write> = match out {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["label", "m0", "m1", "m2", "m3", "bias"])?;
    for (label, bias) in ranked {
        let prof = &rows.iter().find(|(l, _)| *l == label).expect("ranked label").1;
        let mut row = vec![label];
        row.extend(prof.m.iter().map(|v| v.to_string()));
        row.push(bias.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn robustness(a: RobustnessArgs) -> Result<()> {
    let sigmas = a.sigmas.unwrap_or_else(|| match a.noise {
        NoiseKind::Observation => DEFAULT_OBS_SIGMAS.to_vec(),
        NoiseKind::Parameter => DEFAULT_PARAM_SIGMAS.to_vec(),
    });
    let cfg = EvalConfig { episodes: a.episodes, seed: a.seed, max_steps: a.max_steps };
    let horizon = a.max_steps;
    let env = move || ToyEnv::new(ToyConfig::with_horizon(horizon));
    let mut curves: Vec<SweepCurve> = Vec::new();
    for p in &a.models {
        let m = model_at(p)?;
        let c = match a.noise {
            NoiseKind::Observation => observation_noise_sweep(&m, env, &sigmas, &cfg)?,
            NoiseKind::Parameter => parameter_noise_sweep(&m, env, &sigmas, &cfg)?,
        };
        curves.push(c);
    }
    let random = random_play_baseline(env, &cfg)?;
    let baselines = curves.iter().map(|c| (c.game.clone(), random)).collect();
    let mode = match a.mode {
        Mode::AlgorithmBest => NormalizationMode::AlgorithmBest,
        Mode::OverallBest => NormalizationMode::OverallBest,
    };
    let normalized = normalize_curves(&curves, &baselines, mode)?;
    out_dir(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("curves.csv"))?;
    w.write_record(["label", "sigma", "mean", "stddev", "n"])?;
    for c in &curves {
        for i in 0..c.sigmas.len() {
            w.write_record([c.label.clone(), c.sigmas[i].to_string(), c.mean_scores[i].to_string(), c.stddevs[i].to_string(), c.episodes.to_string()])?;
        }
    }
    w.flush()?;
    let mean = normalized.mean_curve().map(|(m, s)| json!({ "mean": m, "stderr": s }));
    write_json(
        &a.out.join("report.json"),
        &json!({ "noise": format!("{:?}", a.noise).to_lowercase(), "curves": curves, "normalized": normalized, "mean_normalized": mean }),
    )?;
    println!("{} curves, random play {random:.3}, {} exclusions", curves.len(), normalized.exclusions.len());
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let mut loaded = Vec::new();
    for spec in &a.rollouts {
        let (class, dir) = match spec.split_once('=') {
            Some((c, d)) => (Some(c.to_string()), PathBuf::from(d)),
            None => (None, PathBuf::from(spec)),
        };
        let r = rollout_at(&dir)?;
        let class = class.unwrap_or_else(|| r.meta.model.algorithm.to_string());
        loaded.push((class, r));
    }
    let labeled: Vec<LabeledRollout> = loaded.iter().map(|(c, r)| LabeledRollout { class: c, rollout: r }).collect();
    let ds = build_dataset(&labeled, a.frames_per_model, a.seed)?;
    let cfg = TrainConfig { max_epochs: a.epochs, patience: a.patience, lr: a.lr, batch_size: a.batch_size, seed: a.seed };
    let clf = train_classifier(&ds, &cfg)?;
    let ev = evaluate(&clf, &ds)?;
    out_dir(&a.out)?;
    let cm = &ev.confusion;
    let mut w = csv::Writer::from_path(a.out.join("confusion.csv"))?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(cm.class_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in cm.class_names.iter().zip(&cm.counts) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(a.out.join("f1.csv"))?;
    w.write_record(["class", "precision", "recall", "f1"])?;
    for (i, name) in cm.class_names.iter().enumerate() {
        w.write_record([name.clone(), cm.precision(i).to_string(), cm.recall(i).to_string(), ev.f1[i].to_string()])?;
    }
    w.write_record(["mean".to_string(), String::new(), String::new(), ev.mean_f1.to_string()])?;
    w.flush()?;
    write_json(&a.out.join("evaluation.json"), &json!({ "evaluation": ev, "history": clf.history, "best_epoch": clf.best_epoch }))?;
    confusion_heatmap(cm).save(a.out.join("confusion.png"))?;
    println!("mean F1 {:.4}, accuracy {:.4} on {} test frames", ev.mean_f1, ev.accuracy, ds.test.len());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let rollouts = a.rollouts.iter().map(|p| rollout_at(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Rollout> = rollouts.iter().collect();
    let params = EmbeddingParams { pca_dims: a.pca_dims, perplexity: a.perplexity, iterations: a.iterations, seed: a.seed };
    let result = match &a.model {
        Some(path) => {
            if refs.len() != 1 {
                bail!(azoo_core::Error::Config("activation embeddings take exactly one rollout".into()));
            }
            let layer: Layer = a.layer.parse()?;
            embed_hidden(&model_at(path)?, refs[0], layer, &params)?
        }
        None => embed_ram_joint(&refs, &params)?,
    };
    export_embedding(&result, &refs, &a.out)?;
    println!("embedded {} points, KL {:.4} -> {:.4}", result.points.len(), result.initial_kl, result.final_kl);
    Ok(())
}

fn patches(a: PatchArgs) -> Result<()> {
    let m = model_at(&a.model)?;
    let r = rollout_at(&a.rollout)?;
    let hits = top_patches(&m, &r, a.layer, a.filter, a.k)?;
    out_dir(&a.out)?;
    contact_sheet(&hits, &r)?.save(a.out.join("contact.png"))?;
    write_json(&a.out.join("hits.json"), &json!({ "layer": a.layer, "filter": a.filter, "hits": hits }))?;
    println!("{} hits, best {:.4}", hits.len(), hits.first().map_or(0.0, |h| h.value));
    Ok(())
}

fn dream(a: DreamArgs) -> Result<()> {
    let m = model_at(&a.model)?;
    let objective: Objective = a.objective.parse()?;
    let ascent = match a.ascent {
        AscentArg::Adam => Ascent::Adam,
        AscentArg::Plain => Ascent::Plain,
    };
    let cfg = DreamConfig {
        iterations: a.iterations,
        step_size: a.step_size,
        jitter_max: a.jitter,
        lambda_tv: a.tv,
        lambda_l1: a.l1,
        seed: a.seed,
        ascent,
    };
    let d = synthesize(&m, &objective, &cfg)?;
    out_dir(&a.out)?;
    dream_strip(&d.input)?.save(a.out.join("dream.png"))?;
    let mut w = csv::Writer::from_path(a.out.join("history.csv"))?;
    w.write_record(["iteration", "objective"])?;
    for (i, v) in d.history.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    println!("activation {:.4} after {} iterations", d.activation, a.iterations);
    Ok(())
}

fn render_trace(rollout: &Path, model: &Path, out: &Path, limit: Option<usize>) -> Result<()> {
    let m = model_at(model)?;
    let mut r = rollout_at(rollout)?;
    if let Some(n) = limit {
        r.steps.truncate(n);
        if let Some(t) = r.traces.as_mut() {
            t.truncate(n);
        }
    }
    if r.traces.is_none() {
        r.traces = Some(azoo_core::embedding::rollout_traces(&m, &r)?.into_owned());
    }
    let frames = render_trace_frames(&r, &m.spec)?;
    out_dir(out)?;
    for (i, img) in frames.iter().enumerate() {
        img.save(out.join(format!("{i:06}.png")))?;
    }
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn render_grid(a: GridArgs) -> Result<()> {
    let (rows, cols) = (a.rows.len(), a.cols.len());
    if a.rollouts.len() != rows * cols {
        bail!(azoo_core::Error::Config(format!("{rows}x{cols} grid needs {} rollouts, got {}", rows * cols, a.rollouts.len())));
    }
    let loaded = a.rollouts.iter().map(|p| rollout_at(p)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<Vec<&Rollout>> = loaded.chunks(cols).map(|c| c.iter().collect()).collect();
    render_rollout_grid(&cells, &a.rows, &a.cols, a.step)?.save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

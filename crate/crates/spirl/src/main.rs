//! The `spirl` command-line interface: data collection, MAE pre-training,
//! saliency rendering, mr estimation, RL training/evaluation, ablations, and
//! policy-attention visualization.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use spirl::agent::{
    evaluate, log_csv_header, log_csv_row, random_baseline, train, AgentConfig, AgentModel,
    Pooling, Preprocessor, TrainConfig,
};
use spirl::config::{EnvChoice, RunConfig};
use spirl::env::{
    collect, load_dataset, save_dataset, EnvInterface, ExternalEnv, Sprites, WrappedEnv,
    WrapperConfig,
};
use spirl::mae::{pretrain, DatasetStats, Frame, MaeConfig, MaeModel};
use spirl::saliency::{
    dynamic_k_select, error_map, error_map_csv, estimate_mr, top_k_select, KneeRule, PadMode,
    SelectionBudget,
};
use spirl::tensor::{load_snapshot, save_snapshot, Result, TensorError};
use spirl::viz;

#[derive(Parser)]
#[command(name = "spirl", version, about = "Salient-patch representation learning pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect frames with a uniform-random policy into an SPFR dataset.
    Collect {
        #[arg(long, default_value = "sprites")]
        env: String,
        #[arg(long, default_value_t = 2000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run config (environment geometry); defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Pre-train the MAE on an SPFR dataset.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render error-map heatmap, selection overlay, probes, and the
    /// surroundings reconstruction for one frame.
    Saliency {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Estimate the maximal ratio mr* over a dataset.
    MrEstimate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the RL agent against a frozen MAE checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Update regime: 100K (update every step), 400K (every 4), or desk
        /// (the reduced desk-scale configuration).
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained agent checkpoint.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
    },
    /// Ablation sweeps: knee_rule, pad_mode, pooling, or fixed_k.
    Ablate {
        #[arg(long)]
        what: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// fixed_k fractions of the patch grid (e.g. 0.1 0.2 0.3).
        #[arg(long, num_args = 1.., default_values_t = vec![0.1, 0.2, 0.3])]
        xs: Vec<f64>,
        /// Env steps per variant (keeps sweeps desk-sized).
        #[arg(long, default_value_t = 4000)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Policy-attention overlay for one frame (60% mass rule).
    AttnViz {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// MAE checkpoint manifest stored beside the SPNT snapshot.
#[derive(Debug, Serialize, Deserialize)]
struct MaeManifest {
    config_hash: String,
    step_count: usize,
    total_params: usize,
    mae: MaeConfig,
    stats: DatasetStats,
}

/// Agent checkpoint manifest.
#[derive(Debug, Serialize, Deserialize)]
struct AgentManifest {
    config_hash: String,
    step_count: usize,
    agent: AgentConfig,
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn save_mae_checkpoint(
    dir: &Path,
    name: &str,
    model: &MaeModel,
    cfg: &RunConfig,
    step_count: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_snapshot(&model.store, &dir.join(format!("{name}.spnt")))?;
    let manifest = MaeManifest {
        config_hash: format!("{:016x}", cfg.hash()),
        step_count,
        total_params: model.store.num_scalars(),
        mae: model.config,
        stats: model.stats,
    };
    std::fs::write(
        dir.join(format!("{name}_manifest.toml")),
        toml::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

fn load_mae_checkpoint(dir: &Path) -> Result<MaeModel> {
    let manifest: MaeManifest =
        toml::from_str(&std::fs::read_to_string(dir.join("mae_manifest.toml"))?)
            .map_err(|e| TensorError::BadSnapshot(format!("mae manifest: {e}")))?;
    let store = load_snapshot(&dir.join("mae.spnt"))?;
    MaeModel::with_store(manifest.mae, store, manifest.stats)
}

fn save_agent_checkpoint(
    dir: &Path,
    agent: &AgentModel,
    cfg: &RunConfig,
    step_count: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_snapshot(&agent.store, &dir.join("agent.spnt"))?;
    let manifest = AgentManifest {
        config_hash: format!("{:016x}", cfg.hash()),
        step_count,
        agent: agent.config,
    };
    std::fs::write(
        dir.join("agent_manifest.toml"),
        toml::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

fn load_agent_checkpoint(dir: &Path) -> Result<AgentModel> {
    let manifest: AgentManifest =
        toml::from_str(&std::fs::read_to_string(dir.join("agent_manifest.toml"))?)
            .map_err(|e| TensorError::BadSnapshot(format!("agent manifest: {e}")))?;
    let store = load_snapshot(&dir.join("agent.spnt"))?;
    AgentModel::with_store(manifest.agent, store)
}

fn selection_of(cfg: &RunConfig) -> std::result::Result<KneeRule, usize> {
    match cfg.saliency.fixed_k {
        Some(k) => Err(k),
        None => Ok(cfg.saliency.knee_rule),
    }
}

fn budget_of(cfg: &RunConfig) -> SelectionBudget {
    SelectionBudget::new(cfg.saliency.mr, cfg.mae.frame.num_patches())
}

/// Worker-parallelism cap from the environment; the current implementation is
/// single-threaded, so anything >= 1 is accepted and effectively 1.
fn threads_cap() -> usize {
    std::env::var("SPIRL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn with_env<T>(
    cfg: &RunConfig,
    f: impl FnOnce(&mut dyn EnvInterface) -> Result<T>,
) -> Result<T> {
    match cfg.env {
        EnvChoice::Sprites => {
            let mut env =
                WrappedEnv::new(Sprites::new(cfg.sprites), WrapperConfig::default());
            f(&mut env)
        }
        EnvChoice::External => {
            let addr = cfg.external_addr.as_deref().ok_or_else(|| {
                TensorError::Env("env = external requires external_addr".into())
            })?;
            let mut env = WrappedEnv::new(
                ExternalEnv::connect(addr, Duration::from_secs(30))?,
                WrapperConfig::default(),
            );
            f(&mut env)
        }
    }
}

fn cmd_collect(
    env_name: &str,
    frames: usize,
    seed: u64,
    out: &Path,
    config: &Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    match env_name {
        "sprites" => cfg.env = EnvChoice::Sprites,
        "external" => cfg.env = EnvChoice::External,
        other => return Err(TensorError::Env(format!("unknown env '{other}'"))),
    }
    let dataset = with_env(&cfg, |env| collect(&mut &mut *env, frames, seed))?;
    save_dataset(out, &dataset)?;
    println!("wrote {} frames ({}x{}x{}) to {}", dataset.frames.len(), dataset.dims.h, dataset.dims.w, dataset.dims.c, out.display());
    Ok(())
}

fn cmd_pretrain(config: &Option<PathBuf>, data: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dataset = load_dataset(data)?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;
    let cfg_ref = &cfg;
    let (model, curve) = pretrain(
        cfg.mae,
        &dataset.frames,
        cfg.pretrain,
        cfg.seed,
        |epoch, loss, model| {
            println!("epoch {epoch}: loss {loss:.6}");
            save_mae_checkpoint(out, &format!("mae_epoch{epoch:03}"), model, cfg_ref, epoch + 1)
        },
    )?;
    save_mae_checkpoint(out, "mae", &model, &cfg, cfg.pretrain.epochs)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    std::fs::write(out.join("loss.csv"), csv)?;
    println!("trainable scalars: {}", model.store.num_scalars());
    Ok(())
}

fn cmd_saliency(
    ckpt: &Path,
    data: &Path,
    frame_idx: usize,
    out: &Path,
    config: &Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_mae_checkpoint(ckpt)?;
    let dataset = load_dataset(data)?;
    let bytes = dataset.frames.get(frame_idx).ok_or_else(|| {
        TensorError::Env(format!("frame {frame_idx} out of range 0..{}", dataset.frames.len()))
    })?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;
    let spec = model.config.frame;
    let frame = Frame::from_rgb8(spec, bytes);

    let map = error_map(&model, &frame)?;
    std::fs::write(out.join("error_map.csv"), error_map_csv(&map))?;
    let (w, h, heat) = viz::heatmap(&map, spec.p);
    viz::write_ppm(&out.join("error_heatmap.ppm"), w, h, &heat)?;

    let selection = match cfg.saliency.fixed_k {
        Some(k) => top_k_select(&map, k),
        None => dynamic_k_select(&map, cfg.saliency.knee_rule),
    };
    let mut overlay = bytes.clone();
    viz::outline_patches(&mut overlay, spec.h, spec.p, &selection.positions, viz::SELECTED_COLOR, 1);
    viz::write_ppm(&out.join("selection_overlay.ppm"), spec.w, spec.h, &overlay)?;
    println!("K_t = {} (p* = {:.4})", selection.k, selection.p_star);

    for mode in [
        spirl::mae::ProbeMode::PePlusMask,
        spirl::mae::ProbeMode::PeOnly,
        spirl::mae::ProbeMode::MaskOnly,
    ] {
        let probe = model.decoder_probe(mode)?;
        viz::write_ppm(
            &out.join(format!("probe_{}.ppm", mode.name())),
            spec.w,
            spec.h,
            &probe.to_rgb8(),
        )?;
    }

    // full surroundings-only reconstruction, denormalized per patch stats
    let pr = spec.patches_per_row();
    let mut pred = vec![0.0; spec.num_patches() * spec.patch_len()];
    for i in 0..pr {
        for j in 0..pr {
            let row = i * pr + j;
            let y = model.reconstruct_from_surroundings(&frame, i, j)?;
            pred[row * spec.patch_len()..(row + 1) * spec.patch_len()].copy_from_slice(&y);
        }
    }
    let recon = model.denormalize_prediction(&pred);
    viz::write_ppm(&out.join("surroundings_recon.ppm"), spec.w, spec.h, &recon.to_rgb8())?;
    Ok(())
}

fn cmd_mr_estimate(ckpt: &Path, data: &Path, out: &Path, config: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_mae_checkpoint(ckpt)?;
    let dataset = load_dataset(data)?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;
    let spec = model.config.frame;
    let mut counts = Vec::with_capacity(dataset.frames.len());
    for bytes in &dataset.frames {
        let frame = Frame::from_rgb8(spec, bytes);
        let map = error_map(&model, &frame)?;
        counts.push(dynamic_k_select(&map, cfg.saliency.knee_rule).k);
    }
    let n2 = spec.num_patches();
    let mut hist = vec![0usize; n2 + 1];
    for &c in &counts {
        hist[c] += 1;
    }
    let mut csv = String::from("count,frames\n");
    for (c, &f) in hist.iter().enumerate() {
        csv.push_str(&format!("{c},{f}\n"));
    }
    std::fs::write(out.join("count_histogram.csv"), csv)?;
    let est = estimate_mr(&counts, n2);
    let report = format!(
        "mr_star = {}\ncoverage = {}\ncandidates = [{}, {}, {}]\n",
        est.mr, est.coverage, est.candidates[0], est.candidates[1], est.candidates[2]
    );
    std::fs::write(out.join("mr_report.toml"), &report)?;
    print!("{report}");
    Ok(())
}

fn apply_regime(train_cfg: &mut TrainConfig, regime: &str) -> Result<()> {
    match regime {
        "100K" => {
            train_cfg.steps_per_update = 1;
            train_cfg.buffer_capacity = 100_000;
            train_cfg.beta_steps = 100_000;
        }
        "400K" => {
            train_cfg.steps_per_update = 4;
            train_cfg.buffer_capacity = 400_000;
            train_cfg.beta_steps = 400_000;
        }
        "desk" => {
            let seed = train_cfg.seed;
            *train_cfg = TrainConfig::desk(seed);
        }
        other => return Err(TensorError::Env(format!("unknown regime '{other}' (100K|400K|desk)"))),
    }
    Ok(())
}

fn cmd_train(
    config: &Option<PathBuf>,
    ckpt: &Path,
    out: &Path,
    regime: &Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(r) = regime {
        apply_regime(&mut cfg.train, r)?;
    }
    let mae = load_mae_checkpoint(ckpt)?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;
    let mut agent_config = AgentConfig::paper(
        mae.config.encoder.dim,
        0, // filled per env below
        mae.config.frame.patches_per_row(),
    );
    agent_config.pooling = cfg.pooling;
    let selection = selection_of(&cfg);
    let budget = budget_of(&cfg);
    let pad = cfg.saliency.pad_mode;
    let train_cfg = cfg.train;
    let (agent, log) = with_env(&cfg, |env| {
        agent_config.action_count = env.action_count();
        train(&mut &mut *env, &mae, agent_config, selection, budget, pad, train_cfg)
    })?;
    save_agent_checkpoint(out, &agent, &cfg, cfg.train.env_steps)?;
    let mut csv = String::from(log_csv_header());
    csv.push('\n');
    for row in &log {
        csv.push_str(&log_csv_row(row));
        csv.push('\n');
    }
    std::fs::write(out.join("train_log.csv"), csv)?;
    println!("episodes: {}, final epsilon: {:.3}", log.len(), cfg.train.epsilon_at(cfg.train.env_steps));
    Ok(())
}

fn cmd_eval(
    config: &Option<PathBuf>,
    ckpt: &Path,
    agent_dir: &Path,
    episodes: usize,
    seed: u64,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mae = load_mae_checkpoint(ckpt)?;
    let agent = load_agent_checkpoint(agent_dir)?;
    let selection = selection_of(&cfg);
    let budget = budget_of(&cfg);
    let pad = cfg.saliency.pad_mode;
    let stats = with_env(&cfg, |env| {
        evaluate(&mut &mut *env, &mae, &agent, selection, budget, pad, episodes, seed, 2_000)
    })?;
    let baseline = with_env(&cfg, |env| random_baseline(&mut &mut *env, episodes, seed, 2_000))?;
    println!("agent : mean {:.3} median {:.3} std {:.3}", stats.mean, stats.median, stats.std);
    println!("random: mean {:.3} median {:.3} std {:.3}", baseline.mean, baseline.median, baseline.std);
    Ok(())
}

fn cmd_ablate(
    what: &str,
    config: &Option<PathBuf>,
    ckpt: &Path,
    out: &Path,
    xs: &[f64],
    steps: usize,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    cfg.train.env_steps = steps;
    cfg.train.min_replay = cfg.train.min_replay.min(steps / 4);
    let mae = load_mae_checkpoint(ckpt)?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;

    let mut variants: Vec<(String, RunConfig)> = Vec::new();
    match what {
        "knee_rule" => {
            for rule in [KneeRule::MeanThreshold, KneeRule::ArgminSlope] {
                let mut c = cfg.clone();
                c.saliency.knee_rule = rule;
                c.saliency.fixed_k = None;
                variants.push((format!("{rule:?}"), c));
            }
        }
        "pad_mode" => {
            for pad in [PadMode::ZeroPad, PadMode::TrainablePad, PadMode::MaskedAttention] {
                let mut c = cfg.clone();
                c.saliency.pad_mode = pad;
                variants.push((format!("{pad:?}"), c));
            }
        }
        "pooling" => {
            for pool in [Pooling::Cls, Pooling::Average] {
                let mut c = cfg.clone();
                c.pooling = pool;
                variants.push((format!("{pool:?}"), c));
            }
        }
        "fixed_k" => {
            let n2 = mae.config.frame.num_patches();
            for &x in xs {
                let k = ((x * n2 as f64).round() as usize).clamp(1, n2);
                let mut c = cfg.clone();
                c.saliency.fixed_k = Some(k);
                variants.push((format!("x={x} (K={k})"), c));
            }
            let mut c = cfg.clone();
            c.saliency.fixed_k = None;
            variants.push(("dynamic".into(), c));
        }
        other => return Err(TensorError::Env(format!("unknown ablation '{other}'"))),
    }

    let mut csv = String::from("what,variant,mean,median,std\n");
    for (name, vcfg) in &variants {
        let mut agent_config = AgentConfig::paper(
            mae.config.encoder.dim,
            0,
            mae.config.frame.patches_per_row(),
        );
        agent_config.pooling = vcfg.pooling;
        let selection = selection_of(vcfg);
        let budget = budget_of(vcfg);
        let pad = vcfg.saliency.pad_mode;
        let train_cfg = vcfg.train;
        let stats = with_env(vcfg, |env| {
            agent_config.action_count = env.action_count();
            let (agent, _) =
                train(&mut &mut *env, &mae, agent_config, selection, budget, pad, train_cfg)?;
            evaluate(&mut &mut *env, &mae, &agent, selection, budget, pad, 20, 5_000, 2_000)
        })?;
        println!("{what}/{name}: mean {:.3} median {:.3} std {:.3}", stats.mean, stats.median, stats.std);
        csv.push_str(&format!(
            "{what},{name},{},{},{}\n",
            stats.mean, stats.median, stats.std
        ));
    }
    std::fs::write(out.join("ablation.csv"), csv)?;
    Ok(())
}

fn cmd_attn_viz(
    config: &Option<PathBuf>,
    ckpt: &Path,
    agent_dir: &Path,
    data: &Path,
    frame_idx: usize,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mae = load_mae_checkpoint(ckpt)?;
    let agent = load_agent_checkpoint(agent_dir)?;
    let dataset = load_dataset(data)?;
    let bytes = dataset.frames.get(frame_idx).ok_or_else(|| {
        TensorError::Env(format!("frame {frame_idx} out of range 0..{}", dataset.frames.len()))
    })?;
    std::fs::create_dir_all(out)?;
    cfg.save_resolved(out)?;

    let pre = Preprocessor {
        mae: &mae,
        selection: selection_of(&cfg),
        budget: budget_of(&cfg),
        pad_mode: cfg.saliency.pad_mode,
    };
    let set = pre.process(bytes)?;
    let attention = agent.cls_attention(&set)?;
    let attended = agent.policy_attention(&set, 0.6)?;
    let mass: f64 = attention
        .iter()
        .filter(|(s, _)| attended.contains(s))
        .map(|(_, w)| w)
        .sum();
    let spec = mae.config.frame;
    let mut overlay = bytes.clone();
    let pos_of = |slot: usize| set.slots[slot].position;
    let selected: Vec<(usize, usize)> = set
        .slots
        .iter()
        .enumerate()
        .filter(|(s, slot)| !slot.is_pad() && !attended.contains(s))
        .filter_map(|(_, slot)| slot.position)
        .collect();
    let attended_pos: Vec<(usize, usize)> = attended.iter().filter_map(|&s| pos_of(s)).collect();
    viz::outline_patches(&mut overlay, spec.h, spec.p, &selected, viz::SELECTED_COLOR, 1);
    viz::outline_patches(&mut overlay, spec.h, spec.p, &attended_pos, viz::SELECTED_AND_ATTENDED_COLOR, 1);
    viz::write_ppm(&out.join("policy_attention.ppm"), spec.w, spec.h, &overlay)?;
    println!("attended {} of {} slots, mass {:.4}", attended.len(), set.slots.len(), mass);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let _threads = threads_cap();
    match &cli.cmd {
        Cmd::Collect { env, frames, seed, out, config } => cmd_collect(env, *frames, *seed, out, config),
        Cmd::Pretrain { config, data, out, seed } => cmd_pretrain(config, data, out, *seed),
        Cmd::Saliency { ckpt, data, frame, out, config } => cmd_saliency(ckpt, data, *frame, out, config),
        Cmd::MrEstimate { ckpt, data, out, config } => cmd_mr_estimate(ckpt, data, out, config),
        Cmd::Train { config, ckpt, out, regime, seed } => cmd_train(config, ckpt, out, regime, *seed),
        Cmd::Eval { config, ckpt, agent, episodes, seed } => cmd_eval(config, ckpt, agent, *episodes, *seed),
        Cmd::Ablate { what, config, ckpt, out, xs, steps, seed } => cmd_ablate(what, config, ckpt, out, xs, *steps, *seed),
        Cmd::AttnViz { config, ckpt, agent, data, frame, out } => cmd_attn_viz(config, ckpt, agent, data, *frame, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // usage errors exit 2 via clap
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                TensorError::Io(_) | TensorError::BadSnapshot(_) | TensorError::Protocol(_) => {
                    ExitCode::from(3)
                }
                TensorError::NonFinite(_) => ExitCode::from(4),
                _ => ExitCode::from(1),
            }
        }
    }
}

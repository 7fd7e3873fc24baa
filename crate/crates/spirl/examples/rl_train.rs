//! Tiny end-to-end run of the full pipeline: collect frames, pre-train the
//! MAE briefly, then train the transformer-aggregated Q-learning agent for a
//! few hundred environment steps and compare against a random policy.
//!
//! This is a wiring demo, not a results run — see the `spirl train`
//! subcommand for full-length training.

use spirl::agent::{evaluate, random_baseline, train, AgentConfig, Pooling, TrainConfig};
use spirl::env::{collect, Sprites, SpritesConfig, WrappedEnv, WrapperConfig};
use spirl::mae::{pretrain, MaeConfig, PretrainSchedule};
use spirl::saliency::{KneeRule, PadMode, SelectionBudget};
use spirl::tensor::Result;

fn main() -> Result<()> {
    let sprites = SpritesConfig::default();
    let mut env = Sprites::new(sprites);
    let dataset = collect(&mut env, 48, 0)?;
    let schedule = PretrainSchedule { epochs: 2, ..Default::default() };
    let (mae, _) = pretrain(MaeConfig::toy(), &dataset.frames, schedule, 7, |e, l, _| {
        println!("pretrain epoch {e}: loss {l:.4}");
        Ok(())
    })?;

    let mut env = WrappedEnv::new(Sprites::new(sprites), WrapperConfig::default());
    let mut agent_config =
        AgentConfig::paper(mae.config.encoder.dim, 5, mae.config.frame.patches_per_row());
    agent_config.pooling = Pooling::Cls;
    let budget = SelectionBudget::new(0.2, mae.config.frame.num_patches());
    let train_config = TrainConfig {
        env_steps: 300,
        min_replay: 64,
        buffer_capacity: 2000,
        batch_size: 8,
        target_sync: 100,
        ..Default::default()
    };
    let (agent, log) = train(
        &mut env,
        &mae,
        agent_config,
        Ok(KneeRule::MeanThreshold),
        budget,
        PadMode::ZeroPad,
        train_config,
    )?;
    for row in &log {
        println!(
            "step {:4} episode {:2}: return {:+.1}, loss {:.4}, mean K_t {:.1}",
            row.step, row.episode, row.ret, row.loss, row.k_t_mean
        );
    }

    let stats = evaluate(&mut env, &mae, &agent, Ok(KneeRule::MeanThreshold), budget, PadMode::ZeroPad, 3, 100, 400)?;
    let base = random_baseline(&mut env, 3, 100, 400)?;
    println!("agent : mean {:+.2} median {:+.2}", stats.mean, stats.median);
    println!("random: mean {:+.2} median {:+.2}", base.mean, base.median);
    Ok(())
}

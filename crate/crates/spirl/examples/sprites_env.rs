//! Play the Sprites environment with a random policy, through the Atari-style
//! wrapper (action repeat 4, reward clipping, seeded start no-ops).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spirl::env::{EnvInterface, FrameStack, Sprites, SpritesConfig, WrappedEnv, WrapperConfig};
use spirl::tensor::Result;

fn main() -> Result<()> {
    let mut env = WrappedEnv::new(Sprites::new(SpritesConfig::default()), WrapperConfig::default());
    println!("dims {:?}, {} actions", env.dims(), env.action_count());

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for episode in 0..3 {
        let first = env.reset(episode)?;
        println!("episode {episode}: {} start no-ops", env.last_noops());
        let mut stack = FrameStack::new(4);
        stack.reset(first);
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let action = rng.gen_range(0..env.action_count());
            let r = env.step(action)?;
            stack.push(r.frame);
            total += r.reward;
            steps += 1;
            if r.done {
                break;
            }
        }
        println!("  return {total:+.1} over {steps} wrapped steps; state = {} stacked frames", stack.state().len());
    }
    Ok(())
}

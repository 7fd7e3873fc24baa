//! Fit a small two-layer MLP to a 1-D function with the tape-based autodiff
//! engine and the AdamW optimizer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spirl::tensor::{AdamW, ParamStore, Result, Tape, WarmupCosine};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    store.add_trunc_normal("w1", &[1, 16], 0.5, &mut rng);
    store.add_zeros("b1", &[16]);
    store.add_trunc_normal("w2", &[16, 1], 0.5, &mut rng);
    store.add_zeros("b2", &[1]);

    // target: y = sin(3x) on [-1, 1]
    let xs: Vec<f64> = (0..64).map(|i| -1.0 + i as f64 / 31.5).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();

    let mut opt = AdamW::new(0.0, 0.9, 0.999, 0.0);
    let schedule = WarmupCosine::new(0.02, 50, 2000);
    for step in 0..2000 {
        let mut tape = Tape::new();
        let x = tape.constant(&[xs.len(), 1], xs.clone());
        let y = tape.constant(&[ys.len(), 1], ys.clone());
        let w1 = tape.param(&store, "w1")?;
        let b1 = tape.param(&store, "b1")?;
        let w2 = tape.param(&store, "w2")?;
        let b2 = tape.param(&store, "b2")?;
        let h = tape.linear(x, w1, b1)?;
        let g = tape.gelu(h);
        let pred = tape.linear(g, w2, b2)?;
        let loss = tape.mse(pred, y)?;
        tape.backward(loss)?;
        store.zero_grads();
        tape.grads_into(&mut store);
        opt.lr = schedule.lr_at(step);
        opt.step(&mut store);
        if step % 400 == 0 {
            println!("step {step:4}: mse {:.6}", tape.value(loss));
        }
    }

    let mut tape = Tape::new();
    let x = tape.constant(&[xs.len(), 1], xs.clone());
    let w1 = tape.param(&store, "w1")?;
    let b1 = tape.param(&store, "b1")?;
    let w2 = tape.param(&store, "w2")?;
    let b2 = tape.param(&store, "b2")?;
    let h = tape.linear(x, w1, b1)?;
    let g = tape.gelu(h);
    let pred = tape.linear(g, w2, b2)?;
    let final_mse: f64 = tape
        .data(pred)
        .iter()
        .zip(&ys)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / ys.len() as f64;
    println!("final mse: {final_mse:.6}");
    Ok(())
}

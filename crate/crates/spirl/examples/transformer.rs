//! Run one pre-LN transformer layer forward, with and without softmax row
//! exclusion, and inspect head-0 attention of the first query.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spirl::tensor::{ParamStore, Result, Tape};
use spirl::transformer::{AttentionConfig, LayerParams};

fn main() -> Result<()> {
    let config = AttentionConfig { dim: 32, heads: 4, mlp_ratio: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let layer = LayerParams::init(&mut store, "block0", config, &mut rng);

    let n = 6;
    let data: Vec<f64> = (0..n * config.dim).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();

    let mut tape = Tape::new();
    let x = tape.constant(&[n, config.dim], data.clone());
    let y = layer.forward(&mut tape, &store, x, true, None)?;
    println!("forward: {:?} -> {:?}", tape.shape(x), tape.shape(y));

    // attention of row 0's query over all rows, head 0
    let mut tape = Tape::new();
    let x = tape.constant(&[n, config.dim], data.clone());
    let w = layer.head0_query_weights(&mut tape, &store, x, None)?;
    println!("head-0 weights (all rows):      {:?}", w.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("  sum = {:.6}", w.iter().sum::<f64>());

    // exclude rows 2 and 4 from the softmax: keys/values restricted to the rest
    let attend: Vec<usize> = vec![0, 1, 3, 5];
    let mut tape = Tape::new();
    let x = tape.constant(&[n, config.dim], data);
    let w = layer.head0_query_weights(&mut tape, &store, x, Some(&attend))?;
    println!("head-0 weights (rows 2,4 masked): {:?}", w.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("  sum = {:.6}", w.iter().sum::<f64>());
    Ok(())
}

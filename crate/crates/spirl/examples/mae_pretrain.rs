//! Pre-train the toy masked autoencoder on a few Sprites frames and print the
//! per-epoch loss curve plus the model's parameter breakdown.

use spirl::env::{collect, Sprites, SpritesConfig};
use spirl::mae::{pretrain, MaeConfig, PretrainSchedule};
use spirl::tensor::Result;

fn main() -> Result<()> {
    let mut env = Sprites::new(SpritesConfig::default());
    let dataset = collect(&mut env, 48, 0)?;
    println!("collected {} frames of {}x{}", dataset.frames.len(), dataset.dims.h, dataset.dims.w);

    let schedule = PretrainSchedule { epochs: 3, ..Default::default() };
    let (model, curve) = pretrain(MaeConfig::toy(), &dataset.frames, schedule, 7, |epoch, loss, _| {
        println!("epoch {epoch}: loss {loss:.5}");
        Ok(())
    })?;

    let (enc, dec, pe, total) = model.param_counts();
    println!("params: encoder {enc}, decoder {dec}, patch-PE {pe}, total {total}");
    println!("loss curve: {curve:?}");
    Ok(())
}

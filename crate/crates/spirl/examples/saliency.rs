//! Compute a per-patch reconstruction-error map on a Sprites frame, pick the
//! salient patches with the knee rule, and show the Lorenz-curve quantities
//! behind the choice.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spirl::env::{EnvInterface, Sprites, SpritesConfig};
use spirl::mae::{Frame, MaeConfig, MaeModel};
use spirl::saliency::{apply_budget, dynamic_k_select, error_map, lorenz_curve, KneeRule, PadMode, SelectionBudget};
use spirl::tensor::Result;

fn main() -> Result<()> {
    // an untrained MAE still produces a valid (if uninformative) error map;
    // see the `mae_pretrain` example or the `spirl pretrain` subcommand for
    // training one that separates sprites from background
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = MaeModel::init(MaeConfig::toy(), &mut rng)?;
    let spec = model.config.frame;

    let mut env = Sprites::new(SpritesConfig::default());
    let bytes = env.reset(5)?;
    let frame = Frame::from_rgb8(spec, &bytes);

    let map = error_map(&model, &frame)?;
    let curve = lorenz_curve(&map);
    println!("patch grid {0}x{0}, mean error {1:.5}", spec.patches_per_row(), map.mean());
    for k in [1, 9, 18, 27, 36] {
        println!(
            "  k={k:2}: cumulative {:.3}, slope {:.3}",
            curve.cumulative_at(k),
            curve.slope(k.min(map.len() - 1))
        );
    }

    let sel = dynamic_k_select(&map, KneeRule::MeanThreshold);
    println!("knee: K = {} at p* = {:.3} (degenerate = {})", sel.k, sel.p_star, sel.degenerate);
    println!("selected positions: {:?}", sel.positions);

    let budget = SelectionBudget::new(0.2, spec.num_patches());
    let slots = apply_budget(&sel, budget, PadMode::ZeroPad);
    let pads = slots.iter().filter(|s| s.is_pad()).count();
    println!("budget {} slots -> {} kept + {} pads", budget.slots, slots.len() - pads, pads);
    Ok(())
}

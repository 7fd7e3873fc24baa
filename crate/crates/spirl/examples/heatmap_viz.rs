//! Render a synthetic error map as a PPM heatmap and outline its top patches
//! on a frame, demonstrating the visualization helpers.

use spirl::saliency::{top_k_select, ErrorMap};
use spirl::tensor::Result;
use spirl::viz::{heat_color, heatmap, outline_patches, write_ppm, SELECTED_COLOR};

fn main() -> Result<()> {
    // a 6x6 map with a bright diagonal
    let pr = 6;
    let errors: Vec<f64> = (0..pr * pr)
        .map(|idx| {
            let (i, j) = (idx / pr, idx % pr);
            if i == j { 1.0 + i as f64 } else { 0.1 }
        })
        .collect();
    let map = ErrorMap::new(pr, errors);

    for v in [0.0, 0.5, 1.0] {
        println!("heat_color({v}) = {:?}", heat_color(v));
    }

    let (w, h, rgb) = heatmap(&map, 8);
    let out = std::env::temp_dir().join("spirl_heatmap.ppm");
    write_ppm(&out, w, h, &rgb)?;
    println!("wrote {}x{} heatmap to {}", w, h, out.display());

    // outline the three hottest patches on a mid-gray frame
    let sel = top_k_select(&map, 3);
    let side = pr * 8;
    let mut frame = vec![128u8; side * side * 3];
    outline_patches(&mut frame, side, 8, &sel.positions, SELECTED_COLOR, 1);
    let out = std::env::temp_dir().join("spirl_selection.ppm");
    write_ppm(&out, side, side, &frame)?;
    println!("outlined patches {:?} -> {}", sel.positions, out.display());
    Ok(())
}

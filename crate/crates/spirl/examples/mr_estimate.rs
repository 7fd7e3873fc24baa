//! Estimate the maximal ratio mr* from a distribution of per-frame salient
//! patch counts, using synthetic counts for illustration.

use spirl::saliency::estimate_mr;

fn main() {
    // 36-patch grid; most frames need 4-7 patches, a rare tail needs 9
    let mut counts = Vec::new();
    for (count, frames) in [(4, 300), (5, 400), (6, 200), (7, 90), (9, 10)] {
        counts.extend(std::iter::repeat(count).take(frames));
    }
    let est = estimate_mr(&counts, 36);
    println!("counts over {} frames, grid of 36 patches", counts.len());
    println!("mr* = {} (covers {:.2}% of frames)", est.mr, est.coverage * 100.0);
    println!("candidate grid values around the knee: {:?}", est.candidates);

    // a heavier tail pushes the estimate up
    counts.extend(std::iter::repeat(14).take(5));
    let est = estimate_mr(&counts, 36);
    println!("after adding five 14-patch frames: mr* = {}", est.mr);
}

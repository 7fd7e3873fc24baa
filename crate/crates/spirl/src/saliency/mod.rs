//! Reconstruction-error saliency: per-patch error maps, the Lorenz-curve
//! 45-degree knee rule for dynamic-K selection, a fixed-K baseline, maximal-
//! ratio (mr) budget estimation, and budget application with three pad modes.
//!
//! Every operation here is pure given an [`ErrorMap`]; ties are always broken
//! in raster (row-major) order so results are stable across runs.

use serde::{Deserialize, Serialize};

use crate::mae::{normalize_patch, patchify, Frame, MaeModel, PATCH_NORM_EPS};
use crate::tensor::Result;

/// Per-patch reconstruction errors on the `P x P` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub patches_per_row: usize,
    /// `P^2` non-negative finite scalars, raster order.
    pub errors: Vec<f64>,
}

impl ErrorMap {
    pub fn new(patches_per_row: usize, errors: Vec<f64>) -> Self {
        assert_eq!(errors.len(), patches_per_row * patches_per_row);
        assert!(errors.iter().all(|e| e.is_finite() && *e >= 0.0), "errors must be finite and >= 0");
        ErrorMap { patches_per_row, errors }
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.len() as f64
    }

    /// Grid coordinates of raster index `idx`.
    pub fn position(&self, idx: usize) -> (usize, usize) {
        (idx / self.patches_per_row, idx % self.patches_per_row)
    }
}

/// Surroundings-only reconstruction error for every patch: each entry is the
/// mean squared difference between the normalized target patch and its
/// prediction from the 8-neighborhood alone, `(1/(p^2 c)) * ||X - Y||^2`.
pub fn error_map(model: &MaeModel, frame: &Frame) -> Result<ErrorMap> {
    let spec = model.config.frame;
    let pr = spec.patches_per_row();
    let patches = patchify(frame);
    let mut errors = Vec::with_capacity(spec.num_patches());
    for i in 0..pr {
        for j in 0..pr {
            let pred = model.reconstruct_from_surroundings(frame, i, j)?;
            let target = normalize_patch(&patches[i * pr + j], PATCH_NORM_EPS).values;
            let mse = pred
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / spec.patch_len() as f64;
            errors.push(mse);
        }
    }
    Ok(ErrorMap::new(pr, errors))
}

/// The descending-sorted error curve: the normalized cumulative polyline is
/// the absolute Lorenz curve of the error distribution.
#[derive(Debug, Clone)]
pub struct SaliencyCurve {
    /// Raster indices sorted by error descending (raster tie-break).
    pub order: Vec<usize>,
    /// Errors in the same order: e(1) >= ... >= e(N).
    pub sorted_errors: Vec<f64>,
    /// Points `(k/N, cum_k / total)` for k = 1..N; empty-sum maps normalize to 0.
    pub points: Vec<(f64, f64)>,
    /// Sum of all errors.
    pub total: f64,
}

impl SaliencyCurve {
    /// Cumulative share of error mass F^-2(k/N) after the top-k entries.
    pub fn cumulative_at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.points[k - 1].1
        }
    }

    /// Quantile F^-1 at step k (the k-th largest error).
    pub fn quantile(&self, k: usize) -> f64 {
        self.sorted_errors[k - 1]
    }

    /// Slope of step k relative to the 45-degree diagonal: `e(k) / mean`.
    pub fn slope(&self, k: usize) -> f64 {
        let mean = self.total / self.sorted_errors.len() as f64;
        if mean == 0.0 {
            0.0
        } else {
            self.sorted_errors[k - 1] / mean
        }
    }
}

/// Sort descending with raster-order tie-break and accumulate.
pub fn lorenz_curve(map: &ErrorMap) -> SaliencyCurve {
    let n = map.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        map.errors[b].partial_cmp(&map.errors[a]).unwrap().then(a.cmp(&b))
    });
    let sorted_errors: Vec<f64> = order.iter().map(|&i| map.errors[i]).collect();
    let total: f64 = sorted_errors.iter().sum();
    let mut cum = 0.0;
    let points = sorted_errors
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            cum += e;
            let y = if total > 0.0 { cum / total } else { 0.0 };
            ((k + 1) as f64 / n as f64, y)
        })
        .collect();
    SaliencyCurve { order, sorted_errors, points, total }
}

/// Tolerance for `ArgminSlope` ties: slope distances within this of the
/// incumbent count as equal and keep the smaller k.
pub const SLOPE_TIE_EPS: f64 = 1e-9;

/// How the knee of the Lorenz curve is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeRule {
    /// Default: K = number of entries strictly above the mean error — the
    /// step where the marginal slope of the cumulative curve crosses 1.
    MeanThreshold,
    /// K = argmin_k |slope_k - 1| (smallest k on ties).
    ArgminSlope,
}

/// A selected set of salient patches.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// `(i, j)` grid positions, descending by error (raster tie-break).
    pub positions: Vec<(usize, usize)>,
    /// Matching errors, descending.
    pub errors: Vec<f64>,
    /// Selected count K_t.
    pub k: usize,
    /// Selected fraction p* = K_t / N.
    pub p_star: f64,
    pub rule: Option<KneeRule>,
    /// True when the all-zero degenerate map forced the K = 1 floor.
    pub degenerate: bool,
}

impl SelectionResult {
    /// Raster indices of the selection, in slot order.
    pub fn raster_indices(&self, patches_per_row: usize) -> Vec<usize> {
        self.positions.iter().map(|&(i, j)| i * patches_per_row + j).collect()
    }
}

fn take_top_k(map: &ErrorMap, curve: &SaliencyCurve, k: usize) -> (Vec<(usize, usize)>, Vec<f64>) {
    let positions = curve.order[..k].iter().map(|&idx| map.position(idx)).collect();
    let errors = curve.sorted_errors[..k].to_vec();
    (positions, errors)
}

/// Dynamic-K selection at the 45-degree knee of the Lorenz curve. Enforces
/// K >= 1: an all-zero (or all-equal, under `MeanThreshold`) map yields the
/// raster-first maximum-error patch.
pub fn dynamic_k_select(map: &ErrorMap, rule: KneeRule) -> SelectionResult {
    let curve = lorenz_curve(map);
    let n = map.len();
    let degenerate = curve.total == 0.0;
    let k = if degenerate {
        1
    } else {
        match rule {
            KneeRule::MeanThreshold => {
                // raster-order mean, and a relative margin at the boundary so
                // the count is stable under rescaling E -> c*E
                let mean = map.mean();
                let cut = mean * (1.0 + SLOPE_TIE_EPS);
                let above = map.errors.iter().filter(|&&e| e > cut).count();
                above.max(1)
            }
            KneeRule::ArgminSlope => {
                // a later k must beat the incumbent by more than rounding
                // noise, so exact ties (e.g. quantized errors) keep the
                // smallest k regardless of summation order
                let mut best = 1;
                let mut best_d = f64::INFINITY;
                for k in 1..=n {
                    let d = (curve.slope(k) - 1.0).abs();
                    if d + SLOPE_TIE_EPS < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                best
            }
        }
    };
    let (positions, errors) = take_top_k(map, &curve, k);
    SelectionResult {
        positions,
        errors,
        k,
        p_star: k as f64 / n as f64,
        rule: Some(rule),
        degenerate,
    }
}

/// Fixed-K baseline: the K largest errors, raster tie-break.
pub fn top_k_select(map: &ErrorMap, k: usize) -> SelectionResult {
    assert!(k >= 1 && k <= map.len(), "K = {k} out of range 1..={}", map.len());
    let curve = lorenz_curve(map);
    let (positions, errors) = take_top_k(map, &curve, k);
    SelectionResult {
        positions,
        errors,
        k,
        p_star: k as f64 / map.len() as f64,
        rule: None,
        degenerate: curve.total == 0.0,
    }
}

/// The mr estimation result: the chosen grid ratio plus its neighbors as
/// adoption candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrEstimate {
    /// Smallest grid ratio covering at least 99.9% of the counts.
    pub mr: f64,
    /// `{mr-5%, mr, mr+5%}` clamped to the 5%..95% grid.
    pub candidates: [f64; 3],
    /// Fraction of frames with count <= round(mr * P^2).
    pub coverage: f64,
}

/// Smallest ratio in {5%, 10%, ..., 95%} such that at least 99.9% of frames
/// keep all their salient patches under budget `round(ratio * P^2)`.
pub fn estimate_mr(counts: &[usize], num_patches: usize) -> MrEstimate {
    assert!(!counts.is_empty(), "empty count list");
    let grid: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
    let coverage_at = |ratio: f64| {
        let budget = (ratio * num_patches as f64).round() as usize;
        counts.iter().filter(|&&c| c <= budget).count() as f64 / counts.len() as f64
    };
    let chosen_idx = grid
        .iter()
        .position(|&r| coverage_at(r) >= 0.999)
        .unwrap_or(grid.len() - 1);
    let chosen = grid[chosen_idx];
    let at = |i: isize| grid[i.clamp(0, grid.len() as isize - 1) as usize];
    MrEstimate {
        mr: chosen,
        candidates: [at(chosen_idx as isize - 1), chosen, at(chosen_idx as isize + 1)],
        coverage: coverage_at(chosen),
    }
}

/// A fixed per-frame patch budget derived from mr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionBudget {
    pub mr: f64,
    /// B = round(mr * P^2), at least 1.
    pub slots: usize,
}

impl SelectionBudget {
    pub fn new(mr: f64, num_patches: usize) -> Self {
        assert!(mr > 0.0 && mr <= 0.95, "mr = {mr} outside (0, 0.95]");
        let slots = ((mr * num_patches as f64).round() as usize).max(1);
        SelectionBudget { mr, slots }
    }
}

/// How under-budget slots are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Dummy slots carry all-zero embeddings.
    ZeroPad,
    /// Dummy slots carry a shared trainable pad token.
    TrainablePad,
    /// Dummy slots are excluded from the aggregator's softmax entirely.
    MaskedAttention,
}

/// One aggregator input slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    /// A real selected patch: grid position and its error.
    Patch { position: (usize, usize), error: f64 },
    Pad(PadMode),
}

impl Slot {
    pub fn is_pad(&self) -> bool {
        matches!(self, Slot::Pad(_))
    }
}

/// Fit a selection to exactly `budget.slots` slots: drop the smallest-error
/// extras when over budget, pad (pads last) when under.
pub fn apply_budget(selection: &SelectionResult, budget: SelectionBudget, pad: PadMode) -> Vec<Slot> {
    let b = budget.slots;
    let keep = selection.k.min(b);
    let mut slots: Vec<Slot> = (0..keep)
        .map(|s| Slot::Patch { position: selection.positions[s], error: selection.errors[s] })
        .collect();
    slots.resize(b, Slot::Pad(pad));
    slots
}

/// Write an error map as CSV (`i,j,error` rows) for offline inspection.
pub fn error_map_csv(map: &ErrorMap) -> String {
    let mut out = String::from("i,j,error\n");
    for (idx, e) in map.errors.iter().enumerate() {
        let (i, j) = map.position(idx);
        out.push_str(&format!("{i},{j},{e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map4(errors: [f64; 4]) -> ErrorMap {
        ErrorMap::new(2, errors.to_vec())
    }

    #[test]
    fn lorenz_worked_example() {
        let curve = lorenz_curve(&map4([0.7, 0.2, 0.08, 0.02]));
        let ys: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        for (got, want) in ys.iter().zip([0.7, 0.9, 0.98, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{ys:?}");
        }
        let xs: Vec<f64> = curve.points.iter().map(|p| p.0).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn lorenz_uniform_is_diagonal() {
        let curve = lorenz_curve(&map4([0.3; 4]));
        for (k, &(x, y)) in curve.points.iter().enumerate() {
            assert!((y - x).abs() < 1e-12);
            assert!((curve.slope(k + 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dynamic_k_worked_example() {
        let map = map4([0.7, 0.2, 0.08, 0.02]);
        let curve = lorenz_curve(&map);
        let slopes: Vec<f64> = (1..=4).map(|k| curve.slope(k)).collect();
        for (got, want) in slopes.iter().zip([2.8, 0.8, 0.32, 0.08]) {
            assert!((got - want).abs() < 1e-12, "{slopes:?}");
        }
        let mt = dynamic_k_select(&map, KneeRule::MeanThreshold);
        assert_eq!(mt.k, 1);
        assert_eq!(mt.positions, vec![(0, 0)]);
        let am = dynamic_k_select(&map, KneeRule::ArgminSlope);
        assert_eq!(am.k, 2);
        assert_eq!(am.positions, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn uniform_map_floors_to_one() {
        let sel = dynamic_k_select(&map4([0.5; 4]), KneeRule::MeanThreshold);
        assert_eq!(sel.k, 1);
        assert_eq!(sel.positions, vec![(0, 0)]); // raster-first tie-break
    }

    #[test]
    fn all_zero_map_is_degenerate_k1() {
        for rule in [KneeRule::MeanThreshold, KneeRule::ArgminSlope] {
            let sel = dynamic_k_select(&map4([0.0; 4]), rule);
            assert_eq!(sel.k, 1);
            assert!(sel.degenerate);
            assert_eq!(sel.positions, vec![(0, 0)]);
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let errors: Vec<f64> = (0..36).map(|_| rng.gen::<f64>()).collect();
            let map = ErrorMap::new(6, errors.clone());
            for c in [1e-3, 1e3] {
                let scaled = ErrorMap::new(6, errors.iter().map(|e| e * c).collect());
                for rule in [KneeRule::MeanThreshold, KneeRule::ArgminSlope] {
                    assert_eq!(
                        dynamic_k_select(&map, rule).positions,
                        dynamic_k_select(&scaled, rule).positions
                    );
                }
            }
        }
    }

    /// Independent brute-force oracle: recompute slopes from scratch and
    /// enumerate all k.
    fn oracle_k(errors: &[f64], rule: KneeRule) -> usize {
        let mut sorted: Vec<f64> = errors.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        if mean == 0.0 {
            return 1;
        }
        match rule {
            KneeRule::MeanThreshold => sorted.iter().filter(|&&e| e > mean).count().max(1),
            KneeRule::ArgminSlope => (1..=sorted.len())
                .min_by(|&a, &b| {
                    let da = (sorted[a - 1] / mean - 1.0).abs();
                    let db = (sorted[b - 1] / mean - 1.0).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap(),
        }
    }

    #[test]
    fn oracle_equivalence_and_concavity_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..1000 {
            let pr = [4, 6, 12][trial % 3];
            let errors: Vec<f64> = (0..pr * pr)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>() * 10.0 })
                .collect();
            let map = ErrorMap::new(pr, errors.clone());
            for rule in [KneeRule::MeanThreshold, KneeRule::ArgminSlope] {
                let sel = dynamic_k_select(&map, rule);
                assert_eq!(sel.k, oracle_k(&errors, rule), "trial {trial} {rule:?}");
                // selected errors are a prefix of the descending sort
                let mut sorted = errors.clone();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                assert_eq!(sel.errors, sorted[..sel.k]);
            }
            // concavity: non-increasing increments; endpoints
            let curve = lorenz_curve(&map);
            let mut prev_inc = f64::INFINITY;
            let mut prev_y = 0.0;
            for &(_, y) in &curve.points {
                let inc = y - prev_y;
                assert!(inc <= prev_inc + 1e-12, "not concave at trial {trial}");
                prev_inc = inc;
                prev_y = y;
            }
            if curve.total > 0.0 {
                assert!((curve.points.last().unwrap().1 - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn top_k_matches_sort_oracle() {
        let map = map4([0.7, 0.2, 0.08, 0.02]);
        let sel = top_k_select(&map, 2);
        assert_eq!(sel.positions, vec![(0, 0), (0, 1)]);
        let all = top_k_select(&map, 4);
        assert_eq!(all.k, 4);
        // consistency with dynamic-K at its own K_t
        let dk = dynamic_k_select(&map, KneeRule::ArgminSlope);
        assert_eq!(top_k_select(&map, dk.k), SelectionResult { rule: None, ..dk.clone() });
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn top_k_rejects_zero() {
        top_k_select(&map4([0.1; 4]), 0);
    }

    #[test]
    fn mr_estimation_cases() {
        // all counts zero -> grid minimum
        let est = estimate_mr(&[0; 100], 144);
        assert!((est.mr - 0.05).abs() < 1e-12);
        assert_eq!(est.candidates, [0.05, 0.05, 0.1]);

        // 19.4% case: 99.95% of frames <= 28 of 144 -> mr* = 20%
        let mut counts = vec![28usize; 1999];
        counts.push(144); // the 0.05% outlier
        let est = estimate_mr(&counts, 144);
        assert!((est.mr - 0.20).abs() < 1e-12, "{est:?}");
        assert!(est.coverage >= 0.999);
        assert_eq!(est.candidates, [0.15, 0.20, 0.25]);

        // brute-force grid-search oracle on random count distributions
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n2 = 144;
            let counts: Vec<usize> = (0..2000).map(|_| rng.gen_range(0..=n2)).collect();
            let est = estimate_mr(&counts, n2);
            let oracle = (1..=19)
                .map(|i| i as f64 * 0.05)
                .find(|r| {
                    let b = (r * n2 as f64).round() as usize;
                    counts.iter().filter(|&&c| c <= b).count() as f64 / counts.len() as f64
                        >= 0.999
                })
                .unwrap_or(0.95);
            assert!((est.mr - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_budget_cases() {
        let errors: Vec<f64> = (0..36).map(|i| (36 - i) as f64).collect();
        let map = ErrorMap::new(6, errors);

        // K_t = B: unchanged
        let sel = top_k_select(&map, 28);
        let slots = apply_budget(&sel, SelectionBudget { mr: 28.0 / 36.0, slots: 28 }, PadMode::ZeroPad);
        assert_eq!(slots.len(), 28);
        assert!(slots.iter().all(|s| !s.is_pad()));

        // K_t = 30 > B = 28: drop the 2 smallest
        let sel = top_k_select(&map, 30);
        let slots = apply_budget(&sel, SelectionBudget { mr: 28.0 / 36.0, slots: 28 }, PadMode::ZeroPad);
        assert_eq!(slots.len(), 28);
        match slots[27] {
            Slot::Patch { error, .. } => assert_eq!(error, 9.0), // 30th largest was 7.0, 28th is 9.0
            _ => panic!("expected patch"),
        }

        // K_t = 20 < B = 28: 8 pads appended, pads last
        let sel = top_k_select(&map, 20);
        for pad in [PadMode::ZeroPad, PadMode::TrainablePad, PadMode::MaskedAttention] {
            let slots = apply_budget(&sel, SelectionBudget { mr: 28.0 / 36.0, slots: 28 }, pad);
            assert_eq!(slots.len(), 28);
            assert_eq!(slots.iter().filter(|s| s.is_pad()).count(), 8);
            assert!(slots[20..].iter().all(|s| *s == Slot::Pad(pad)));
            // descending error order among real slots
            let errs: Vec<f64> = slots[..20]
                .iter()
                .map(|s| match s {
                    Slot::Patch { error, .. } => *error,
                    _ => unreachable!(),
                })
                .collect();
            assert!(errs.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn error_map_from_stub_targets() {
        // A reconstructor that returns exact targets yields an all-zero map;
        // exercised through the arithmetic directly (no trained model needed).
        let pred = vec![0.0; 12];
        let target: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let mse = pred.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 12.0;
        assert_eq!(mse, 1.0);
        let zero = target.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn error_map_runs_on_model() {
        use crate::mae::{FrameSpec, MaeConfig, MaeModel, StackConfig};
        let config = MaeConfig {
            frame: FrameSpec::new(24, 24, 3, 8),
            encoder: StackConfig { dim: 16, depth: 1, heads: 2 },
            decoder: StackConfig { dim: 24, depth: 1, heads: 2 },
            mask_ratio: 0.75,
            mlp_ratio: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MaeModel::init(config, &mut rng).unwrap();
        let pixels = (0..config.frame.frame_len()).map(|i| (i % 97) as f64 / 96.0).collect();
        let frame = Frame { spec: config.frame, pixels };
        let map = error_map(&model, &frame).unwrap();
        assert_eq!(map.len(), 9);
        assert!(map.errors.iter().all(|&e| e >= 0.0 && e.is_finite()));
        let csv = error_map_csv(&map);
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("i,j,error\n0,0,"));
    }
}

//! Reference quantizers: Lloyd's k-means and an exhaustive optimum for tiny
//! instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest, ColorPoint, Palette, PixelCloud};
use crate::optimizer::objective;
use crate::rng::RngStream;
use crate::seeding::seed_dsquared;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineResult {
    pub palette: Palette,
    /// Weighted mean squared distance to the nearest center.
    pub objective_r2: f64,
    pub iterations_used: usize,
    /// `objective_r2` after seeding and after every Lloyd iteration.
    pub history: Vec<f64>,
}

/// Lloyd iteration from a D² seeding. Stops once no center moves by `tol` or
/// more (max-norm), or after `max_iters` iterations. A center that loses all
/// of its points is moved onto the point currently farthest from its center.
pub fn lloyd_kmeans(
    cloud: &PixelCloud,
    k: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut RngStream,
) -> Result<BaselineResult> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid(format!(
            "tolerance {tol} must be nonnegative"
        )));
    }
    let initial = seed_dsquared(cloud, k, rng)?;
    lloyd_from(cloud, initial, max_iters, tol)
}

/// Lloyd iteration from a given initial palette.
pub fn lloyd_from(
    cloud: &PixelCloud,
    initial: Palette,
    max_iters: usize,
    tol: f64,
) -> Result<BaselineResult> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid(format!(
            "tolerance {tol} must be nonnegative"
        )));
    }
    let k = initial.len();
    let mut palette = initial;
    let points = cloud.points();
    let weights = cloud.weights();
    let mut history = vec![objective(cloud, &palette, 2.0)];
    let mut assignment = vec![0usize; points.len()];
    let mut dist2 = vec![0.0f64; points.len()];
    let mut iterations_used = 0;

    for _ in 0..max_iters {
        iterations_used += 1;
        for (i, p) in points.iter().enumerate() {
            let (a, d2) = nearest(p, palette.colors());
            assignment[i] = a;
            dist2[i] = d2;
        }

        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        for ((p, &w), &a) in points.iter().zip(weights).zip(&assignment) {
            let c = p.coords();
            for j in 0..3 {
                sums[a][j] += w * c[j];
            }
            mass[a] += w;
        }

        let mut shift = 0.0f64;
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            let old = palette.colors()[c].coords();
            let new = if mass[c] > 0.0 {
                sums[c].map(|s| (s / mass[c]).clamp(0.0, 1.0))
            } else {
                let far = farthest_untaken(&dist2, &taken);
                taken[far] = true;
                dist2[far] = 0.0;
                points[far].coords()
            };
            shift = (0..3)
                .map(|j| (new[j] - old[j]).abs())
                .fold(shift, f64::max);
            palette.colors_mut()[c] = ColorPoint::from_array(new)?;
        }

        history.push(objective(cloud, &palette, 2.0));
        if shift < tol {
            break;
        }
    }

    Ok(BaselineResult {
        objective_r2: *history.last().unwrap(),
        palette,
        iterations_used,
        history,
    })
}

fn farthest_untaken(dist2: &[f64], taken: &[bool]) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, &d) in dist2.iter().enumerate() {
        if !taken[i] && d > best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub const BRUTE_FORCE_MAX_POINTS: usize = 12;
pub const BRUTE_FORCE_MAX_K: usize = 3;
const GRID_STEPS: usize = 10;
const DESCENT_TOL: f64 = 1e-10;

/// Globally optimal palette of at most `k` colors, by enumerating every
/// partition of the points into at most `k` groups and placing each group's
/// best single center.
pub fn brute_force_palette(cloud: &PixelCloud, k: usize, r: f64) -> Result<Palette> {
    let n = cloud.len();
    if n > BRUTE_FORCE_MAX_POINTS || !(1..=BRUTE_FORCE_MAX_K).contains(&k) {
        return Err(Error::invalid(format!(
            "brute force handles at most {BRUTE_FORCE_MAX_POINTS} points and 1..={BRUTE_FORCE_MAX_K} colors, got {n} points and {k} colors"
        )));
    }
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::invalid(format!(
            "norm degree {r} must be at least 1"
        )));
    }

    // best center and cost for every nonempty subset of points
    let subsets = 1usize << n;
    let mut centers = vec![ColorPoint::BLACK; subsets];
    let mut costs = vec![0.0f64; subsets];
    for mask in 1..subsets {
        let (c, cost) = best_center(cloud, mask, r);
        centers[mask] = c;
        costs[mask] = cost;
    }

    // restricted growth strings enumerate each set partition exactly once
    let mut labels = vec![0usize; n];
    let mut best_cost = f64::INFINITY;
    let mut best_groups: Vec<usize> = Vec::new();
    loop {
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        let mut masks = vec![0usize; groups];
        for (i, &l) in labels.iter().enumerate() {
            masks[l] |= 1 << i;
        }
        let cost: f64 = masks.iter().map(|&m| costs[m]).sum();
        if cost < best_cost {
            best_cost = cost;
            best_groups = masks;
        }
        if !next_partition(&mut labels, k) {
            break;
        }
    }

    Palette::new(best_groups.into_iter().map(|m| centers[m]).collect())
}

/// Advance a restricted growth string with at most `k` blocks.
fn next_partition(labels: &mut [usize], k: usize) -> bool {
    let n = labels.len();
    for i in (1..n).rev() {
        let prefix_max = labels[..i].iter().copied().max().unwrap_or(0);
        if labels[i] <= prefix_max && labels[i] + 1 < k {
            labels[i] += 1;
            labels[i + 1..].iter_mut().for_each(|l| *l = 0);
            return true;
        }
    }
    false
}

fn group_cost(cloud: &PixelCloud, mask: usize, c: [f64; 3], r: f64) -> f64 {
    let mut total = 0.0;
    for (i, (p, w)) in cloud.points().iter().zip(cloud.weights()).enumerate() {
        if mask & (1 << i) != 0 {
            let x = p.coords();
            let d2 = (0..3).map(|j| (x[j] - c[j]).powi(2)).sum::<f64>();
            total += w * if r == 2.0 { d2 } else { d2.sqrt().powf(r) };
        }
    }
    total
}

fn best_center(cloud: &PixelCloud, mask: usize, r: f64) -> (ColorPoint, f64) {
    if r == 2.0 {
        let mut sum = [0.0; 3];
        let mut mass = 0.0;
        for (i, (p, w)) in cloud.points().iter().zip(cloud.weights()).enumerate() {
            if mask & (1 << i) != 0 {
                let x = p.coords();
                for j in 0..3 {
                    sum[j] += w * x[j];
                }
                mass += w;
            }
        }
        let c = sum.map(|s| (s / mass).clamp(0.0, 1.0));
        return (
            ColorPoint::from_array(c).unwrap(),
            group_cost(cloud, mask, c, r),
        );
    }

    // the cost is convex in the center, so a coarse grid followed by
    // coordinate descent with a shrinking step reaches the minimum
    let mut best = [0.0; 3];
    let mut best_cost = f64::INFINITY;
    let g = GRID_STEPS as f64;
    for a in 0..=GRID_STEPS {
        for b in 0..=GRID_STEPS {
            for c in 0..=GRID_STEPS {
                let p = [a as f64 / g, b as f64 / g, c as f64 / g];
                let cost = group_cost(cloud, mask, p, r);
                if cost < best_cost {
                    best = p;
                    best_cost = cost;
                }
            }
        }
    }
    let mut step = 1.0 / g;
    while step > DESCENT_TOL {
        let mut improved = false;
        for j in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut trial = best;
                trial[j] = (trial[j] + dir * step).clamp(0.0, 1.0);
                let cost = group_cost(cloud, mask, trial, r);
                if cost < best_cost {
                    best = trial;
                    best_cost = cost;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (ColorPoint::from_array(best).unwrap(), best_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::objective;

    fn cloud(points: &[[f64; 3]]) -> PixelCloud {
        PixelCloud::uniform(
            points
                .iter()
                .map(|p| ColorPoint::from_array(*p).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn random_cloud(n: usize, rng: &mut RngStream) -> PixelCloud {
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.unit(), rng.unit(), rng.unit()])
            .collect();
        cloud(&pts)
    }

    fn bell(n: usize, k: usize) -> usize {
        let mut labels = vec![0; n];
        let mut count = 1;
        while next_partition(&mut labels, k) {
            count += 1;
        }
        count
    }

    #[test]
    fn partition_counts_match_stirling_sums() {
        // S(n,1) + S(n,2) + S(n,3)
        assert_eq!(bell(3, 2), 4);
        assert_eq!(bell(4, 3), 14);
        assert_eq!(bell(5, 5), 52);
        assert_eq!(bell(12, 3), 1 + 2047 + 86526);
    }

    #[test]
    fn lloyd_exact_two_points() {
        let c = cloud(&[[0., 0., 0.], [1., 1., 1.]]);
        let res = lloyd_kmeans(&c, 2, 100, 1e-9, &mut RngStream::new(42)).unwrap();
        assert_eq!(res.objective_r2, 0.0);
        let mut got: Vec<_> = res.palette.colors().iter().map(|p| p.coords()).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, vec![[0.0; 3], [1.0; 3]]);
    }

    #[test]
    fn lloyd_single_center_is_centroid() {
        let c = cloud(&[[0., 0., 0.], [0., 0., 0.2]]);
        let res = lloyd_kmeans(&c, 1, 10, 0.0, &mut RngStream::new(1)).unwrap();
        let y = res.palette.colors()[0].coords();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[1], 0.0);
        assert!((y[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lloyd_objective_is_monotone() {
        let mut rng = RngStream::new(99);
        for seed in 0..10 {
            let c = random_cloud(100, &mut rng);
            let res = lloyd_kmeans(&c, 3, 100, 0.0, &mut RngStream::new(seed)).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", res.history);
            }
        }
    }

    #[test]
    fn lloyd_rejects_degenerate_clouds() {
        let c = cloud(&[[0.5, 0.5, 0.5]; 4]);
        assert!(matches!(
            lloyd_kmeans(&c, 2, 10, 0.0, &mut RngStream::new(0)),
            Err(Error::DegenerateSeeding(_))
        ));
    }

    #[test]
    fn lloyd_reseeds_empty_clusters() {
        // seeds are distinct data points, so the first assignment never leaves
        // a cluster empty; check the selection rule directly
        let d = [0.0, 5.0, 2.0, 9.0];
        let mut taken = vec![false; 4];
        assert_eq!(farthest_untaken(&d, &taken), 3);
        taken[3] = true;
        assert_eq!(farthest_untaken(&d, &taken), 1);
    }

    #[test]
    fn brute_force_two_points() {
        let c = cloud(&[[0.2, 0.3, 0.4], [0.9, 0.1, 0.5]]);
        for r in [2.0, 3.0] {
            let p = brute_force_palette(&c, 2, r).unwrap();
            assert!(objective(&c, &p, r) < 1e-12);
        }
    }

    #[test]
    fn brute_force_collinear() {
        let c = cloud(&[[0., 0., 0.], [0.1, 0., 0.], [1., 0., 0.]]);
        let p = brute_force_palette(&c, 2, 2.0).unwrap();
        let mut xs: Vec<f64> = p.colors().iter().map(|y| y.coords()[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 0.05).abs() < 1e-15);
        assert_eq!(xs[1], 1.0);
    }

    #[test]
    fn brute_force_r3_beats_every_partition() {
        let mut rng = RngStream::new(5);
        let c = random_cloud(4, &mut rng);
        let p = brute_force_palette(&c, 2, 3.0).unwrap();
        let best = objective(&c, &p, 3.0);
        // every 2-block partition, center by independent fine random search
        let mut labels = vec![0usize; 4];
        loop {
            let mut total = 0.0;
            for l in 0..2 {
                let mask: usize = (0..4).filter(|&i| labels[i] == l).map(|i| 1 << i).sum();
                if mask != 0 {
                    total += best_center(&c, mask, 3.0).1;
                }
            }
            assert!(best <= total + 1e-12);
            if !next_partition(&mut labels, 2) {
                break;
            }
        }
        // and no random palette does better
        for _ in 0..2_000 {
            let q = Palette::new(
                (0..2)
                    .map(|_| ColorPoint::new(rng.unit(), rng.unit(), rng.unit()).unwrap())
                    .collect(),
            )
            .unwrap();
            assert!(best <= objective(&c, &q, 3.0));
        }
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let mut rng = RngStream::new(1);
        let c = random_cloud(13, &mut rng);
        assert!(matches!(
            brute_force_palette(&c, 2, 2.0),
            Err(Error::InvalidInput(_))
        ));
        let c = random_cloud(5, &mut rng);
        assert!(brute_force_palette(&c, 4, 2.0).is_err());
    }
}

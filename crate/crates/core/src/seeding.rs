//! Initial palettes: uniform draws or D² (k-means++ style) seeding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compensated_sum, ColorPoint, Palette, PixelCloud};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedingStrategy {
    Uniform,
    #[default]
    DSquared,
}

impl fmt::Display for SeedingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedingStrategy::Uniform => "uniform",
            SeedingStrategy::DSquared => "d-squared",
        })
    }
}

impl FromStr for SeedingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SeedingStrategy::Uniform),
            "dsq" | "d-squared" | "d2" => Ok(SeedingStrategy::DSquared),
            other => Err(Error::invalid(format!(
                "unknown seeding strategy `{other}`"
            ))),
        }
    }
}

pub fn seed_palette(
    cloud: &PixelCloud,
    k: usize,
    strategy: SeedingStrategy,
    rng: &mut RngStream,
) -> Result<Palette> {
    match strategy {
        SeedingStrategy::Uniform => seed_uniform(cloud, k, rng),
        SeedingStrategy::DSquared => seed_dsquared(cloud, k, rng),
    }
}

/// `k` independent uniform draws (by pixel index), in draw order.
pub fn seed_uniform(cloud: &PixelCloud, k: usize, rng: &mut RngStream) -> Result<Palette> {
    if k < 1 {
        return Err(Error::invalid("palette size must be at least 1"));
    }
    let points = cloud.points();
    let colors = (0..k).map(|_| points[cloud.sample_index(rng)]).collect();
    Ok(Palette::from_vec_unchecked(colors))
}

/// D² sampling weights: each point's squared distance to its nearest chosen
/// color, normalized to sum to one.
pub fn seeding_weights(cloud: &PixelCloud, chosen: &Palette) -> Result<Vec<f64>> {
    if chosen.is_empty() {
        return Err(Error::invalid("no colors chosen yet"));
    }
    let mut weights: Vec<f64> = cloud
        .points()
        .iter()
        .map(|p| crate::geometry::nearest(p, chosen.colors()).1)
        .collect();
    mass_weighted(cloud, &mut weights);
    let total = compensated_sum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::DegenerateSeeding(
            "every pixel coincides with a chosen color".into(),
        ));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

// Non-uniform clouds scale D² by the point's probability mass.
fn mass_weighted(cloud: &PixelCloud, d2: &mut [f64]) {
    if !cloud.is_uniform() {
        d2.iter_mut()
            .zip(cloud.weights())
            .for_each(|(d, w)| *d *= w);
    }
}

/// Inverse-CDF draw from nonnegative `weights` (need not be normalized).
/// Entries with zero weight are never returned. Returns `None` when the total
/// weight is zero.
pub fn draw_weighted(weights: &[f64], rng: &mut RngStream) -> Option<usize> {
    let total = compensated_sum(weights.iter().copied());
    draw_with_total(weights, total, rng)
}

fn draw_with_total(weights: &[f64], total: f64, rng: &mut RngStream) -> Option<usize> {
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = rng.unit() * total;
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cumulative += w;
            if cumulative > target {
                return Some(i);
            }
            last_positive = Some(i);
        }
    }
    // `target` can land on the rounded total
    last_positive
}

/// D² seeding: the first color is a uniform pixel draw; each further color is
/// drawn with probability proportional to its squared distance from the
/// nearest color chosen so far.
pub fn seed_dsquared(cloud: &PixelCloud, k: usize, rng: &mut RngStream) -> Result<Palette> {
    if k < 1 {
        return Err(Error::invalid("palette size must be at least 1"));
    }
    let points = cloud.points();
    let mut colors: Vec<ColorPoint> = Vec::with_capacity(k);
    colors.push(points[cloud.sample_index(rng)]);

    let mut min_d2: Vec<f64> = points
        .iter()
        .map(|p| p.squared_distance(&colors[0]))
        .collect();
    let mut mass = min_d2.clone();
    while colors.len() < k {
        mass.copy_from_slice(&min_d2);
        mass_weighted(cloud, &mut mass);
        let total = compensated_sum(mass.iter().copied());
        let Some(i) = draw_with_total(&mass, total, rng) else {
            return Err(Error::DegenerateSeeding(format!(
                "requested {k} colors but the image has only {} distinct colors",
                colors.len()
            )));
        };
        let next = points[i];
        colors.push(next);
        for (d2, p) in min_d2.iter_mut().zip(points) {
            let d = p.squared_distance(&next);
            if d < *d2 {
                *d2 = d;
            }
        }
    }
    Ok(Palette::from_vec_unchecked(colors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(c0: f64, c1: f64, c2: f64) -> ColorPoint {
        ColorPoint::new(c0, c1, c2).unwrap()
    }

    fn cloud(points: &[[f64; 3]]) -> PixelCloud {
        PixelCloud::uniform(
            points
                .iter()
                .map(|p| ColorPoint::from_array(*p).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weights_examples() {
        let chosen = Palette::new(vec![ColorPoint::BLACK]).unwrap();

        let w = seeding_weights(&cloud(&[[0., 0., 0.], [1., 1., 1.]]), &chosen).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);

        let w =
            seeding_weights(&cloud(&[[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]), &chosen).unwrap();
        assert_eq!(w, vec![0.0, 0.5, 0.5]);

        let w = seeding_weights(
            &cloud(&[[0., 0., 0.], [0.5, 0., 0.], [1., 0., 0.]]),
            &chosen,
        )
        .unwrap();
        assert!((w[0]).abs() < 1e-15);
        assert!((w[1] - 0.2).abs() < 1e-15);
        assert!((w[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn weights_degenerate_when_everything_is_chosen() {
        let c = cloud(&[[0.2, 0.2, 0.2], [0.2, 0.2, 0.2]]);
        let chosen = Palette::new(vec![cp(0.2, 0.2, 0.2)]).unwrap();
        assert!(matches!(
            seeding_weights(&c, &chosen),
            Err(Error::DegenerateSeeding(_))
        ));
    }

    #[test]
    fn draw_never_picks_zero_weight() {
        let mut rng = RngStream::new(3);
        for _ in 0..10_000 {
            let i = draw_weighted(&[0.0, 1.0, 0.0, 2.0, 0.0], &mut rng).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert_eq!(draw_weighted(&[0.0, 0.0], &mut rng), None);
    }

    #[test]
    fn uniform_single_point() {
        let c = cloud(&[[0.3, 0.6, 0.9]]);
        let p = seed_uniform(&c, 1, &mut RngStream::new(42)).unwrap();
        assert_eq!(p.colors(), &[cp(0.3, 0.6, 0.9)]);
    }

    #[test]
    fn uniform_rejects_zero_k() {
        let c = cloud(&[[0.3, 0.6, 0.9]]);
        assert!(matches!(
            seed_uniform(&c, 0, &mut RngStream::new(42)),
            Err(Error::InvalidInput(_))
        ));
        assert!(seed_dsquared(&c, 0, &mut RngStream::new(42)).is_err());
    }

    #[test]
    fn uniform_frequencies_are_flat() {
        let n = 5;
        let pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64 / 4.0, 0.0, 0.0]).collect();
        let c = cloud(&pts);
        let trials = 100_000;
        let mut counts = vec![0usize; n];
        let mut rng = RngStream::new(11);
        for _ in 0..trials {
            let p = seed_uniform(&c, 1, &mut rng).unwrap();
            let i = (p.colors()[0].coords()[0] * 4.0).round() as usize;
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for count in counts {
            assert!(
                (count as f64 - trials as f64 * p).abs() <= 3.0 * sigma,
                "{count}"
            );
        }
    }

    #[test]
    fn dsquared_two_points_picks_both() {
        let c = cloud(&[[0., 0., 0.], [1., 1., 1.]]);
        for seed in 0..50 {
            let p = seed_dsquared(&c, 2, &mut RngStream::new(seed)).unwrap();
            assert_ne!(p.colors()[0], p.colors()[1]);
        }
    }

    #[test]
    fn dsquared_selects_every_distinct_point_once() {
        // enumerate every small cloud size with repeated colors mixed in
        for n in 1..=7usize {
            let mut pts: Vec<[f64; 3]> = (0..n)
                .map(|i| [i as f64 / 7.0, (i % 3) as f64 / 3.0, 0.5])
                .collect();
            pts.extend_from_within(..n / 2);
            let c = cloud(&pts);
            for seed in 0..20 {
                let p = seed_dsquared(&c, n, &mut RngStream::new(seed)).unwrap();
                let mut bits: Vec<_> = p.colors().iter().map(ColorPoint::bits).collect();
                bits.sort_unstable();
                bits.dedup();
                assert_eq!(bits.len(), n);
            }
            assert!(matches!(
                seed_dsquared(&c, n + 1, &mut RngStream::new(0)),
                Err(Error::DegenerateSeeding(_))
            ));
        }
    }

    #[test]
    fn dsquared_is_deterministic() {
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let t = i as f64 / 199.0;
                [t, (t * 7.0).fract(), (t * 13.0).fract()]
            })
            .collect();
        let c = cloud(&pts);
        let a = seed_dsquared(&c, 8, &mut RngStream::new(42)).unwrap();
        let b = seed_dsquared(&c, 8, &mut RngStream::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dsquared_separates_far_clusters() {
        let mut pts = Vec::new();
        for i in 0..50 {
            let j = (i as f64 / 50.0) * 0.02;
            pts.push([0.1 + j, 0.1, 0.1 - j]);
            pts.push([0.9 - j, 0.9, 0.9 + j / 2.0]);
        }
        let c = cloud(&pts);
        let trials = 2_000;
        let mut rng = RngStream::new(5);
        let split = (0..trials)
            .filter(|_| {
                let p = seed_dsquared(&c, 2, &mut rng).unwrap();
                let lo = |x: &ColorPoint| x.coords()[1] < 0.5;
                lo(&p.colors()[0]) != lo(&p.colors()[1])
            })
            .count();
        assert!(split as f64 / trials as f64 >= 0.99, "{split}");
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "dsq".parse::<SeedingStrategy>().unwrap(),
            SeedingStrategy::DSquared
        );
        assert_eq!(
            "uniform".parse::<SeedingStrategy>().unwrap(),
            SeedingStrategy::Uniform
        );
        assert!("median".parse::<SeedingStrategy>().is_err());
    }
}

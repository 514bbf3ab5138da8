use rayon::prelude::*;

use crate::error::{Error, Result};

use super::features::FeatureSet;
use super::gaussian::require_samples;

fn kernel(u: &[f64], v: &[f64], d: f64) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / d + 1.0).powi(3)
}

/// Sum of `k` over row pairs. Each row's sum runs in index order and rows are added in
/// index order, so the total does not depend on the thread count.
fn kernel_sum(x: &FeatureSet, y: &FeatureSet, skip_diagonal: bool) -> f64 {
    let d = x.dim() as f64;
    let per_row: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let u = x.row(i);
            (0..y.len())
                .filter(|&j| !(skip_diagonal && i == j))
                .map(|j| kernel(u, y.row(j), d))
                .sum()
        })
        .collect();
    per_row.iter().sum()
}

/// Unbiased squared MMD with kernel `(u.v/d + 1)^3`. Can be negative.
pub fn kid_mmd2(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    require_samples(x, "KID")?;
    require_samples(y, "KID")?;
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} features", x.dim()),
            found: y.dim().to_string(),
        });
    }
    let (m, n) = (x.len() as f64, y.len() as f64);
    let kxx = kernel_sum(x, x, true) / (m * (m - 1.0));
    let kyy = kernel_sum(y, y, true) / (n * (n - 1.0));
    let kxy = kernel_sum(x, y, false) / (m * n);
    Ok(kxx + kyy - 2.0 * kxy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn set(rows: &[&[f64]]) -> FeatureSet {
        FeatureSet::new(rows.iter().map(|r| r.to_vec()).collect(), "t").unwrap()
    }

    #[test]
    fn hand_cases() {
        let x = set(&[&[0.0], &[2.0]]);
        let y = set(&[&[1.0], &[1.0]]);
        assert_eq!(kid_mmd2(&x, &y).unwrap(), -19.0);
        let z = set(&[&[0.0], &[0.0]]);
        assert_eq!(kid_mmd2(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut draw = |n: usize, s: f64| {
            FeatureSet::new(
                (0..n)
                    .map(|_| (0..6).map(|_| rng.sample::<f64, _>(StandardNormal) + s).collect())
                    .collect(),
                "t",
            )
            .unwrap()
        };
        let (x, y) = (draw(20, 0.0), draw(15, 0.4));
        let (a, b) = (kid_mmd2(&x, &y).unwrap(), kid_mmd2(&y, &x).unwrap());
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        assert!(kid_mmd2(&set(&[&[1.0]]), &y).is_err());
        assert!(kid_mmd2(&x, &set(&[&[1.0, 2.0], &[3.0, 4.0]])).is_err());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = |rng: &mut ChaCha8Rng| {
            (0..50)
                .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let x = FeatureSet::new(rows(&mut rng), "t").unwrap();
        let y = FeatureSet::new(rows(&mut rng), "t").unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| kid_mmd2(&x, &y).unwrap());
        let b = four.install(|| kid_mmd2(&x, &y).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

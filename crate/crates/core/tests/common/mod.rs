#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use xnb::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn var_names(m: usize) -> Vec<String> {
    let width = m.saturating_sub(1).to_string().len().max(2);
    (0..m).map(|v| format!("v{v:0width$}")).collect()
}

pub fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

/// `n` samples dealt round-robin over `k` classes, `m` standard normal
/// variables; class `c` is shifted by `shift` on variables
/// `c * informative .. (c + 1) * informative`.
pub fn shifted_blocks(n: usize, m: usize, k: usize, informative: usize, shift: f64, seed: u64) -> Dataset {
    assert!(k * informative <= m);
    let mut r = rng(seed);
    let classes = class_names(k);
    let class_of: Vec<usize> = (0..n).map(|i| i % k).collect();
    let columns = (0..m)
        .map(|v| {
            class_of
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    if v / informative == c {
                        z + shift
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect();
    let labels = class_of.iter().map(|&c| classes[c].clone()).collect();
    Dataset::new(var_names(m), columns, labels).unwrap()
}

/// Indices of the variables carrying class `c`'s shift in `shifted_blocks`.
pub fn informative_of(c: usize, informative: usize) -> Vec<usize> {
    (c * informative..(c + 1) * informative).collect()
}

/// Two well-separated Gaussian classes in `m` dimensions: class means differ
/// by `gap` standard deviations on every variable.
pub fn separated_gaussians(n: usize, m: usize, gap: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let labels: Vec<String> = (0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string()).collect();
    let columns = (0..m)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    z + if i % 2 == 0 { 0.0 } else { gap }
                })
                .collect()
        })
        .collect();
    Dataset::new(var_names(m), columns, labels).unwrap()
}

/// `m` independent variables of `n` draws from `dist`, two balanced classes
/// with identical distributions.
pub fn iid_columns<D: Distribution<f64>>(n: usize, m: usize, dist: &D, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 2)).collect();
    let columns = (0..m).map(|_| (0..n).map(|_| dist.sample(&mut r)).collect()).collect();
    Dataset::new(var_names(m), columns, labels).unwrap()
}

pub fn standard_normal() -> rand_distr::Normal<f64> {
    rand_distr::Normal::new(0.0, 1.0).unwrap()
}

pub fn lognormal() -> LogNormal<f64> {
    LogNormal::new(0.0, 1.0).unwrap()
}

/// Two variables each equal to a class mean plus independent noise.
pub fn class_mean_plus_noise(n: usize, k: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let means: Vec<f64> = (0..k).map(|_| r.random_range(-5.0..5.0)).collect();
    let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % k)).collect();
    let columns = (0..2)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    means[i % k] + z
                })
                .collect()
        })
        .collect();
    Dataset::new(var_names(2), columns, labels).unwrap()
}

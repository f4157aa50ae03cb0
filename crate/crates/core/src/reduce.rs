//! Order-fixed floating point reduction.
//!
//! Values are summed sequentially inside chunks of [`CHUNK`] entries and the
//! chunk sums are combined pairwise. The bracketing depends only on the input
//! length, never on the number of worker threads.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// Deterministic sum of `values`.
pub fn tree_sum(values: &[f64]) -> f64 {
    if values.len() <= CHUNK {
        return values.iter().sum();
    }
    let partial: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    pairwise(&partial)
}

fn pairwise(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_across_pool_sizes() {
        let v: Vec<f64> = (0..100_003).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| tree_sum(&v));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| tree_sum(&v));
        assert_eq!(one.to_bits(), four.to_bits());
    }

    #[test]
    fn small_inputs() {
        assert_eq!(tree_sum(&[]), 0.0);
        assert_eq!(tree_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}

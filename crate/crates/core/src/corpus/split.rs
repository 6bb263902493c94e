use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split<T> {
    pub seed: u64,
    pub train: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles with ChaCha8 from `seed` and puts `round(len * test_fraction)`
/// items in `test`. Each side keeps the input order.
pub fn split_dataset<T: Clone>(items: &[T], test_fraction: f64, seed: u64) -> Split<T> {
    let fraction = test_fraction.clamp(0.0, 1.0);
    let n_test = (items.len() as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; items.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut split = Split { seed, train: Vec::new(), test: Vec::new() };
    for (item, test) in items.iter().zip(is_test) {
        if test {
            split.test.push(item.clone());
        } else {
            split.train.push(item.clone());
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let items: Vec<u32> = (0..100).collect();
        let a = split_dataset(&items, 0.25, 9);
        assert_eq!((a.train.len(), a.test.len()), (75, 25));
        assert_eq!(a, split_dataset(&items, 0.25, 9));
        assert_ne!(a.test, split_dataset(&items, 0.25, 10).test);
        let mut all: Vec<u32> = a.train.iter().chain(a.test.iter()).copied().collect();
        all.sort();
        assert_eq!(all, items);
    }
}

use serde::{Deserialize, Serialize};

use super::ClassicalError;

pub const DEFAULT_BIN_WIDTH: usize = 12;

/// Histogram of peak positions over fixed-width bins of the shift grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakFeatureVector {
    pub counts: Vec<u32>,
    pub bin_width: usize,
}

impl PeakFeatureVector {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Counts peaks per bin; `counts[i] = |{p : p / bin_width == i}|`.
pub fn featurize(peaks: &[usize], signal_len: usize, bin_width: usize) -> Result<PeakFeatureVector, ClassicalError> {
    if bin_width == 0 || signal_len % bin_width != 0 {
        return Err(ClassicalError::BinMismatch { signal_len, bin_width });
    }
    let mut counts = vec![0u32; signal_len / bin_width];
    for &p in peaks {
        if p >= signal_len {
            return Err(ClassicalError::PeakOutOfRange(p));
        }
        counts[p / bin_width] += 1;
    }
    Ok(PeakFeatureVector { counts, bin_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bin_boundaries() {
        let f = featurize(&[0, 11], 1392, 12).unwrap();
        assert_eq!(f.counts.len(), 116);
        assert_eq!(f.counts[0], 2);
        let f = featurize(&[12], 1392, 12).unwrap();
        assert_eq!(f.counts[1], 1);
        let f = featurize(&[1391], 1392, 12).unwrap();
        assert_eq!(f.counts[115], 1);
        assert!(featurize(&[1392], 1392, 12).is_err());
        assert!(featurize(&[], 1390, 12).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_count_preserving(
            mut peaks in prop::collection::vec(0usize..1392, 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let a = featurize(&peaks, 1392, 12).unwrap();
            peaks.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = featurize(&peaks, 1392, 12).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.total() as usize, peaks.len());
        }
    }
}

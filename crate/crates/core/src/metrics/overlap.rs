use crate::error::Result;
use crate::scalar::Real;
use crate::volume::BinaryMask;

/// Dice similarity `2|A∩B| / (|A|+|B|)`.
///
/// Two empty masks agree perfectly (1); an empty mask against a nonempty one scores 0.
pub fn dsc<F: Real>(a: &BinaryMask, b: &BinaryMask) -> Result<F> {
    let inter = a.intersection_count(b)?;
    Ok(dice_from_counts(inter, a.count(), b.count()))
}

pub fn dice_from_counts<F: Real>(intersection: usize, size_a: usize, size_b: usize) -> F {
    let denom = size_a + size_b;
    if denom == 0 {
        return F::one();
    }
    F::of(2.0 * intersection as f64 / denom as f64)
}

//! Fixtures shared by the benchmarks.

use chatterfree::sliding::{local_sign, NormalBlock};

/// Attractive normal block on `m` manifolds: every adjacent flow points
/// toward the intersection, with a deterministic spread of speeds.
pub fn attractive_block(m: usize) -> NormalBlock {
    let flows = 1usize << m;
    let mut values = Vec::with_capacity(flows * m);
    for c in 0..flows {
        for k in 0..m {
            let speed = 0.3 + 0.1 * ((c * 7 + k * 3) % 11) as f64;
            values.push(-f64::from(local_sign(k, c)) * speed);
        }
    }
    NormalBlock::new(m, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_attractive() {
        for m in 1..=4 {
            assert!(attractive_block(m).is_attractive(1e-9));
        }
    }
}

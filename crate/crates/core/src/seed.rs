//! Sub-seed derivation: every stream in a run (cells, shuffles, folds,
//! restarts) is keyed off the run seed and a label, never off call order.

use sha2::{Digest, Sha256};

pub fn derive_seed(global: u64, label: &str) -> u64 {
    let digest = Sha256::digest(format!("{global}/{label}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_seeds_separate_streams() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
    }
}

//! Root-seed splitting.
//!
//! Every random decision in a run is derived from one root seed. A subsystem
//! asks for its own stream by label: the derived seed is the first eight bytes
//! (little-endian) of `SHA-256(root.to_le_bytes() || label)`.

use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_split_streams() {
        assert_eq!(derive_seed(7, "topology"), derive_seed(7, "topology"));
        assert_ne!(derive_seed(7, "topology"), derive_seed(7, "backend"));
        assert_ne!(derive_seed(7, "topology"), derive_seed(8, "topology"));
    }
}

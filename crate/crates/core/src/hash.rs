//! SHA-256 content hashes used for provenance.

use sha2::{Digest, Sha256};

use crate::matrix::Mat;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a matrix's shape and little-endian `f64` contents.
pub fn mat_hash(m: &Mat) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn shape_is_part_of_hash() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(3, 2);
        assert_ne!(mat_hash(&a), mat_hash(&b));
    }
}

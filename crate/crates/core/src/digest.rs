use sha2::{Digest, Sha256};

/// SHA-256 of a canonical text description.
pub(crate) fn sha256(text: &str) -> [u8; 32] {
    let out = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&out);
    bytes
}

//! Run manifests: config hash, seeds and library version.

use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub fn config_hash(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub fn write_manifest(
    out: &Path,
    config_text: &str,
    seeds: &[(&str, u64)],
) -> std::io::Result<()> {
    let mut doc = String::new();
    doc.push_str("opcnn run manifest\n");
    doc.push_str(&format!("version: {}\n", env!("CARGO_PKG_VERSION")));
    doc.push_str(&format!("config-sha256: {}\n", config_hash(config_text)));
    for (name, seed) in seeds {
        doc.push_str(&format!("{name}: {seed}\n"));
    }
    fs::write(out.join("run-manifest.txt"), doc)
}

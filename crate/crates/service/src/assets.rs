//! Content-addressed image uploads under `<root>/assets/<sha256>`.

use std::path::{Path, PathBuf};

use storymap_core::canonical::sha256_hex;

pub struct AssetStore {
    dir: PathBuf,
}

/// MIME type of a supported image, from its leading bytes.
pub fn sniff(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some("image/png")
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some("image/jpeg")
    } else if bytes.starts_with(b"GIF87a") || bytes.starts_with(b"GIF89a") {
        Some("image/gif")
    } else if bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        Some("image/webp")
    } else {
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(256)]);
        let head = head.trim_start();
        (head.starts_with("<svg") || head.starts_with("<?xml") && head.contains("<svg")).then_some("image/svg+xml")
    }
}

fn valid_asset_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl AssetStore {
    pub fn open(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = root.as_ref().join("assets");
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    /// Stores `bytes` and returns their id. Uploading the same bytes twice
    /// yields the same id.
    pub fn put(&self, bytes: &[u8]) -> std::io::Result<String> {
        let id = sha256_hex(bytes);
        let path = self.dir.join(&id);
        if !path.exists() {
            let tmp = self.dir.join(format!("{id}.tmp"));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(id)
    }

    pub fn get(&self, id: &str) -> std::io::Result<Option<Vec<u8>>> {
        if !valid_asset_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.dir.join(id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_common_images() {
        assert_eq!(sniff(b"\x89PNG\r\n\x1a\n...."), Some("image/png"));
        assert_eq!(sniff(&[0xff, 0xd8, 0xff, 0xe0]), Some("image/jpeg"));
        assert_eq!(sniff(b"  <svg xmlns='x'/>"), Some("image/svg+xml"));
        assert_eq!(sniff(b"hello"), None);
    }

    #[test]
    fn ids_are_content_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path()).unwrap();
        let a = store.put(b"GIF89a-one").unwrap();
        assert_eq!(store.put(b"GIF89a-one").unwrap(), a);
        assert_ne!(store.put(b"GIF89a-two").unwrap(), a);
        assert_eq!(store.get(&a).unwrap().unwrap(), b"GIF89a-one");
        assert!(store.get("../projects").unwrap().is_none());
    }
}

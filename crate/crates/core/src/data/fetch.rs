//! Download-once cache for the MNIST files.
//!
//! Cache layout: `<cache_dir>/mnist/<file name>` holding the uncompressed
//! IDX files. The cache directory defaults to `$HSVAE_CACHE_DIR`, then
//! `$HOME/.cache/hsvae`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "HSVAE_CACHE_DIR";

/// A file name with the SHA-256 of its uncompressed content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PinnedFile<'a> {
    pub name: &'a str,
    pub sha256: &'a str,
}

pub const TRAIN_IMAGES: PinnedFile<'static> = PinnedFile {
    name: "train-images-idx3-ubyte",
    sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
};
pub const TRAIN_LABELS: PinnedFile<'static> = PinnedFile {
    name: "train-labels-idx1-ubyte",
    sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
};
pub const TEST_IMAGES: PinnedFile<'static> = PinnedFile {
    name: "t10k-images-idx3-ubyte",
    sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
};
pub const TEST_LABELS: PinnedFile<'static> = PinnedFile {
    name: "t10k-labels-idx1-ubyte",
    sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
};

/// Mirrors serving `<base><name>.gz`.
pub const DEFAULT_MIRRORS: &[&str] = &[
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
];

/// Where missing files come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    /// Base URLs tried in order; each serves `<base><name>.gz`.
    Http(Vec<String>),
    /// A local directory holding `<name>` or `<name>.gz`.
    Dir(PathBuf),
    /// Cache only.
    Offline,
}

impl Default for Source {
    fn default() -> Self {
        Source::Http(DEFAULT_MIRRORS.iter().map(|s| s.to_string()).collect())
    }
}

pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => Path::new(&home).join(".cache").join("hsvae"),
        None => PathBuf::from(".hsvae-cache"),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn gunzip_if_needed(raw: Vec<u8>, what: &str) -> Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::DataUnavailable(format!("{what}: bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn verify(path: &Path, bytes: &[u8], pin: &PinnedFile<'_>) -> Result<()> {
    let actual = sha256_hex(bytes);
    if actual != pin.sha256 {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            expected: pin.sha256.to_string(),
            actual,
        });
    }
    Ok(())
}

fn download(bases: &[String], name: &str) -> Result<Vec<u8>> {
    let mut last = None;
    for base in bases {
        let url = format!("{base}{name}.gz");
        log::info!("downloading {url}");
        let attempt = ureq::get(&url)
            .call()
            .and_then(|mut r| r.body_mut().with_config().limit(256 << 20).read_to_vec());
        match attempt {
            Ok(bytes) => return gunzip_if_needed(bytes, &url),
            Err(e) => {
                log::warn!("{url}: {e}");
                last = Some(Error::Download { url, msg: e.to_string() });
            }
        }
    }
    Err(last.unwrap_or_else(|| Error::DataUnavailable("no download mirrors configured".into())))
}

fn from_dir(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(fs::read(plain)?);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return gunzip_if_needed(fs::read(&gz)?, &gz.display().to_string());
    }
    Err(Error::DataUnavailable(format!("{} has neither {name} nor {name}.gz", dir.display())))
}

/// Returns the bytes of a pinned file, filling the cache if needed.
///
/// A cached copy with the wrong hash is replaced from `source`; offline it
/// is a hard error. Fresh content is verified before it is cached.
pub fn fetch_file(cache_dir: &Path, pin: &PinnedFile<'_>, source: &Source) -> Result<Vec<u8>> {
    let dir = cache_dir.join("mnist");
    let path = dir.join(pin.name);
    if path.is_file() {
        let bytes = fs::read(&path)?;
        match verify(&path, &bytes, pin) {
            Ok(()) => return Ok(bytes),
            Err(e) if *source == Source::Offline => return Err(e),
            Err(e) => log::warn!("{e}; fetching a fresh copy"),
        }
    }
    let bytes = match source {
        Source::Offline => {
            return Err(Error::DataUnavailable(format!(
                "{} is not cached and offline mode is set (cache: {})",
                pin.name,
                dir.display()
            )))
        }
        Source::Dir(src) => from_dir(src, pin.name)?,
        Source::Http(bases) => download(bases, pin.name)?,
    };
    verify(&path, &bytes, pin)?;
    fs::create_dir_all(&dir)?;
    let tmp = dir.join(format!("{}.part", pin.name));
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, &path)?;
    Ok(bytes)
}

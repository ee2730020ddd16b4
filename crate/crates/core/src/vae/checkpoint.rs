//! Binary checkpoint format.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        8 bytes  "HSVAE001"
//! input_dim    u32
//! latent_dim   u32
//! hidden_len   u32, then hidden_len x u32 widths
//! mode         u8       0 standard, 1 hyperspherical
//! epoch        u32
//! width        u8       4 (f32) or 8 (f64)
//! fingerprint  32 bytes
//! param_count  u32
//! per param:   u64 element count, then the values
//! ```
//!
//! Parameters appear in declaration order (encoder layers, then decoder
//! layers; weight before bias).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vae::config::Mode;
use crate::vae::model::{Architecture, Vae};

pub const MAGIC: &[u8; 8] = b"HSVAE001";

/// Everything stored in a checkpoint besides the parameter values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub arch: Architecture,
    pub mode: Mode,
    pub epoch: u32,
    pub width: u8,
    pub fingerprint: [u8; 32],
}

pub fn encode_checkpoint<T: Scalar>(model: &Vae<T>, epoch: u32, fingerprint: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, model.arch.input_dim);
    put(&mut out, model.arch.latent_dim);
    put(&mut out, model.arch.hidden.len());
    for &h in &model.arch.hidden {
        put(&mut out, h);
    }
    out.push(model.mode.code());
    out.extend_from_slice(&epoch.to_le_bytes());
    out.push(T::WIDTH);
    out.extend_from_slice(fingerprint);
    put(&mut out, model.params.len());
    for p in model.params.iter() {
        out.extend_from_slice(&(p.value.numel() as u64).to_le_bytes());
        for v in p.value.data() {
            if T::WIDTH == 4 {
                out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<CheckpointHeader> {
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint of this format version".into()));
    }
    let input_dim = r.u32("input_dim")?;
    let latent_dim = r.u32("latent_dim")?;
    let hidden_len = r.u32("hidden_len")?;
    if hidden_len > 64 {
        return Err(Error::Checkpoint(format!("implausible hidden layer count {hidden_len}")));
    }
    let hidden = (0..hidden_len).map(|_| r.u32("hidden width")).collect::<Result<Vec<_>>>()?;
    let code = r.u8("mode")?;
    let mode = Mode::from_code(code).ok_or_else(|| Error::Checkpoint(format!("unknown mode code {code}")))?;
    let epoch = r.u32("epoch")? as u32;
    let width = r.u8("scalar width")?;
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("unsupported scalar width {width}")));
    }
    let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().expect("32 bytes");
    Ok(CheckpointHeader {
        arch: Architecture {
            input_dim,
            hidden,
            latent_dim,
        },
        mode,
        epoch,
        width,
        fingerprint,
    })
}

/// Parses a checkpoint, converting stored values to `T` if the widths
/// differ.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(CheckpointHeader, Vae<T>)> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Vae::<T>::new(header.arch.clone(), header.mode, &mut rng)
        .map_err(|e| Error::Checkpoint(format!("header describes an invalid model: {e}")))?;
    let count = r.u32("param_count")?;
    if count != model.params.len() {
        return Err(Error::Checkpoint(format!("expected {} parameter arrays, found {count}", model.params.len())));
    }
    let mut values = Vec::with_capacity(count);
    for p in model.params.iter() {
        let len = r.u64("param length")?;
        if len != p.value.numel() as u64 {
            return Err(Error::Checkpoint(format!("{}: expected {} values, found {len}", p.name, p.value.numel())));
        }
        let raw = r.take(p.value.numel() * header.width as usize, &p.name)?;
        let data: Vec<T> = if header.width == 4 {
            raw.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect()
        } else {
            raw.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect()
        };
        values.push(Tensor::new(p.value.shape().to_vec(), data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    model.set_params(values)?;
    Ok((header, model))
}

/// Writes via a temporary file and a rename, so an interrupted write never
/// replaces an existing checkpoint with a partial one.
pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Vae<T>, epoch: u32, fingerprint: &[u8; 32]) -> Result<()> {
    let bytes = encode_checkpoint(model, epoch, fingerprint);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(CheckpointHeader, Vae<T>)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

//! SPFR frame datasets and random-policy collection.
//!
//! File layout: magic "SPFR", version u32, frame count u64, h/w/c u32, then
//! frames as raw row-major rgb8 bytes. All integers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvInterface, FrameDims};
use crate::tensor::{Result, TensorError};

const MAGIC: &[u8; 4] = b"SPFR";
const VERSION: u32 = 1;

/// An in-memory frame dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub dims: FrameDims,
    pub frames: Vec<Vec<u8>>,
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dataset.frames.len() as u64).to_le_bytes())?;
    for v in [dataset.dims.h, dataset.dims.w, dataset.dims.c] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for f in &dataset.frames {
        if f.len() != dataset.dims.len() {
            return Err(TensorError::BadSnapshot(format!(
                "frame length {} does not match dims {:?}",
                f.len(),
                dataset.dims
            )));
        }
        w.write_all(f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::BadSnapshot(format!("bad SPFR magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(TensorError::BadSnapshot(format!("unsupported SPFR version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut u32buf)?;
        *d = u32::from_le_bytes(u32buf) as usize;
    }
    let dims = FrameDims { h: dims[0], w: dims[1], c: dims[2] };
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let mut f = vec![0u8; dims.len()];
        r.read_exact(&mut f).map_err(|_| {
            TensorError::BadSnapshot(format!("SPFR truncated at frame {i} of {count}"))
        })?;
        frames.push(f);
    }
    Ok(Dataset { dims, frames })
}

/// Roll a uniform-random policy and keep every emitted (wrapped) frame until
/// `n_frames` are gathered. Deterministic per seed; episodes are reseeded as
/// `seed, seed+1, ...`.
pub fn collect<E: EnvInterface>(env: &mut E, n_frames: usize, seed: u64) -> Result<Dataset> {
    assert!(n_frames >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n_frames);
    let mut episode = 0u64;
    frames.push(env.reset(seed + episode)?);
    while frames.len() < n_frames {
        let action = rng.gen_range(0..env.action_count());
        let r = env.step(action)?;
        frames.push(r.frame);
        if r.done && frames.len() < n_frames {
            episode += 1;
            frames.push(env.reset(seed + episode)?);
        }
    }
    frames.truncate(n_frames);
    Ok(Dataset { dims: env.dims(), frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Sprites, SpritesConfig, WrappedEnv, WrapperConfig};

    #[test]
    fn spfr_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.spfr");
        let dataset = Dataset {
            dims: FrameDims { h: 2, w: 2, c: 3 },
            frames: vec![vec![0; 12], vec![255; 12], (0..12).collect()],
        };
        save_dataset(&path, &dataset).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), dataset);

        // truncation detected
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_dataset(&cut).is_err());

        // bad magic rejected
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&cut, &bad).unwrap();
        assert!(load_dataset(&cut).is_err());
    }

    #[test]
    fn collect_is_reproducible_and_sized() {
        let mk = || {
            WrappedEnv::new(Sprites::new(SpritesConfig::default()), WrapperConfig::default())
        };
        let a = collect(&mut mk(), 50, 7).unwrap();
        let b = collect(&mut mk(), 50, 7).unwrap();
        assert_eq!(a.frames.len(), 50);
        assert_eq!(a, b);
        let c = collect(&mut mk(), 50, 8).unwrap();
        assert_ne!(a, c);
    }
}

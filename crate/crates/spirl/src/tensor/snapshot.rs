//! Parameter snapshot files.
//!
//! Layout: magic `SPNT`, version u32, then per-tensor records of
//! `name_len u32 | name utf-8 | rank u32 | dims u64... | f32 data`, all
//! little-endian. Values are stored at 32 bits; the byte round-trip is exact.

use std::io::{Read, Write};
use std::path::Path;

use super::{Param, ParamStore, Result, TensorError};

const MAGIC: &[u8; 4] = b"SPNT";
const VERSION: u32 = 1;

pub fn save_snapshot(store: &ParamStore, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for (name, p) in store.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_snapshot(&bytes)
}

pub fn parse_snapshot(bytes: &[u8]) -> Result<ParamStore> {
    let bad = |m: &str| TensorError::BadSnapshot(m.to_string());
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(bad("missing SPNT magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(TensorError::BadSnapshot(format!("unsupported version {version}")));
    }
    let mut store = ParamStore::new();
    let mut pos = 8;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(TensorError::BadSnapshot("truncated record".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| bad("name is not utf-8"))?
            .to_string();
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(&mut pos, n * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        store.insert(&name, Param { shape, data, grad: vec![0.0; n] });
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        store.add_trunc_normal("enc.w", &[3, 4], 0.02, &mut rng);
        store.add_ones("enc.ln.g", &[4]);
        store.add_zeros("tok.cls", &[8]);

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.spnt");
        let p2 = dir.path().join("b.spnt");
        save_snapshot(&store, &p1).unwrap();
        let loaded = load_snapshot(&p1).unwrap();
        save_snapshot(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.get("enc.w").unwrap().shape, vec![3, 4]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(parse_snapshot(b"XXXX\x01\x00\x00\x00").is_err());
        let mut store = ParamStore::new();
        store.add_zeros("w", &[4]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.spnt");
        save_snapshot(&store, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(parse_snapshot(&bytes[..bytes.len() - 2]).is_err());
    }
}

//! The SPEV wire protocol: length-prefixed binary messages over a byte
//! stream, used to plug external environments into [`EnvInterface`].
//!
//! Handshake (server -> client): magic "SPEV", version u16, h/w/c u16,
//! action_count u16. Requests: RESET{seed u64}, STEP{action u16}. Responses:
//! reward f32, done u8, then h*w*c frame bytes. All integers little-endian;
//! one outstanding request at a time.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use super::{EnvInterface, FrameDims, StepInfo, StepResult};
use crate::tensor::{Result, TensorError};

pub const SPEV_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SPEV";
const TAG_RESET: u8 = 0;
const TAG_STEP: u8 = 1;

fn proto_err(msg: impl Into<String>) -> TensorError {
    TensorError::Protocol(msg.into())
}

fn write_msg(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

fn read_msg(r: &mut impl Read) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|e| proto_err(format!("stream closed: {e}")))?;
    let len = u32::from_le_bytes(len) as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)
        .map_err(|e| proto_err(format!("truncated payload (wanted {len} bytes): {e}")))?;
    Ok(payload)
}

/// A remote environment reached over a TCP byte stream.
#[derive(Debug)]
pub struct ExternalEnv {
    stream: TcpStream,
    dims: FrameDims,
    actions: usize,
    done: bool,
    started: bool,
}

impl ExternalEnv {
    /// Connect and run the handshake.
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        let mut env = ExternalEnv {
            stream,
            dims: FrameDims { h: 0, w: 0, c: 0 },
            actions: 0,
            done: true,
            started: false,
        };
        let hs = read_msg(&mut env.stream)?;
        if hs.len() != 14 {
            return Err(proto_err(format!("handshake length {} != 14", hs.len())));
        }
        if &hs[0..4] != MAGIC {
            return Err(proto_err(format!("bad handshake magic {:?}", &hs[0..4])));
        }
        let version = u16::from_le_bytes([hs[4], hs[5]]);
        if version != SPEV_VERSION {
            return Err(proto_err(format!(
                "version mismatch: peer {version}, supported {SPEV_VERSION}"
            )));
        }
        let u16_at = |i: usize| u16::from_le_bytes([hs[i], hs[i + 1]]) as usize;
        env.dims = FrameDims { h: u16_at(6), w: u16_at(8), c: u16_at(10) };
        env.actions = u16_at(12);
        if env.dims.len() == 0 || env.actions == 0 {
            return Err(proto_err("handshake with zero-sized frame or empty action set"));
        }
        Ok(env)
    }

    fn round_trip(&mut self, request: &[u8]) -> Result<(f64, bool, Vec<u8>)> {
        write_msg(&mut self.stream, request)?;
        let resp = read_msg(&mut self.stream)?;
        let want = 5 + self.dims.len();
        if resp.len() != want {
            return Err(proto_err(format!("response length {} != {want}", resp.len())));
        }
        let reward = f32::from_le_bytes([resp[0], resp[1], resp[2], resp[3]]) as f64;
        let done = resp[4] != 0;
        Ok((reward, done, resp[5..].to_vec()))
    }
}

impl EnvInterface for ExternalEnv {
    fn dims(&self) -> FrameDims {
        self.dims
    }

    fn action_count(&self) -> usize {
        self.actions
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<u8>> {
        let mut req = vec![TAG_RESET];
        req.extend_from_slice(&seed.to_le_bytes());
        let (_, _, frame) = self.round_trip(&req)?;
        self.done = false;
        self.started = true;
        Ok(frame)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.started {
            return Err(TensorError::Env("step before reset".into()));
        }
        if self.done {
            return Err(TensorError::Env("step after done".into()));
        }
        let mut req = vec![TAG_STEP];
        req.extend_from_slice(&(action as u16).to_le_bytes());
        let (reward, done, frame) = self.round_trip(&req)?;
        self.done = done;
        Ok(StepResult { frame, reward, done, info: StepInfo::default() })
    }
}

/// Serve one in-process environment to a single peer over `listener`;
/// returns when the peer disconnects. Reference server for loopback testing
/// and for exporting [`crate::env::Sprites`] to other processes.
pub fn serve_env<E: EnvInterface>(listener: TcpListener, env: &mut E) -> Result<()> {
    let (mut stream, _) = listener.accept()?;
    let dims = env.dims();
    let mut hs = Vec::with_capacity(14);
    hs.extend_from_slice(MAGIC);
    hs.extend_from_slice(&SPEV_VERSION.to_le_bytes());
    for v in [dims.h, dims.w, dims.c, env.action_count()] {
        hs.extend_from_slice(&(v as u16).to_le_bytes());
    }
    write_msg(&mut stream, &hs)?;
    loop {
        let req = match read_msg(&mut stream) {
            Ok(r) => r,
            Err(_) => return Ok(()), // peer hung up
        };
        let (reward, done, frame) = match req.first() {
            Some(&TAG_RESET) if req.len() == 9 => {
                let seed = u64::from_le_bytes(req[1..9].try_into().unwrap());
                (0.0, false, env.reset(seed)?)
            }
            Some(&TAG_STEP) if req.len() == 3 => {
                let action = u16::from_le_bytes([req[1], req[2]]) as usize;
                let r = env.step(action)?;
                (r.reward, r.done, r.frame)
            }
            _ => return Err(proto_err(format!("malformed request {req:?}"))),
        };
        let mut resp = Vec::with_capacity(5 + frame.len());
        resp.extend_from_slice(&(reward as f32).to_le_bytes());
        resp.push(done as u8);
        resp.extend_from_slice(&frame);
        write_msg(&mut stream, &resp)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Sprites, SpritesConfig};

    fn spawn_server(mut env: Sprites) -> (String, std::thread::JoinHandle<Result<()>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handle = std::thread::spawn(move || serve_env(listener, &mut env));
        (addr, handle)
    }

    #[test]
    fn loopback_matches_in_process() {
        let config = SpritesConfig::default();
        let (addr, handle) = spawn_server(Sprites::new(config));
        let mut remote = ExternalEnv::connect(&addr, Duration::from_secs(5)).unwrap();
        let mut local = Sprites::new(config);

        assert_eq!(remote.dims(), local.dims());
        assert_eq!(remote.action_count(), local.action_count());
        assert_eq!(remote.reset(3).unwrap(), local.reset(3).unwrap());
        for act in [4usize, 4, 1, 0, 2, 3, 4, 2] {
            let r = remote.step(act).unwrap();
            let l = local.step(act).unwrap();
            assert_eq!(r.frame, l.frame);
            assert_eq!(r.reward, l.reward);
            assert_eq!(r.done, l.done);
        }
        drop(remote);
        handle.join().unwrap().unwrap();
    }

    #[test]
    fn version_mismatch_rejected() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut hs = Vec::new();
            hs.extend_from_slice(MAGIC);
            hs.extend_from_slice(&99u16.to_le_bytes());
            for v in [4u16, 4, 3, 5] {
                hs.extend_from_slice(&v.to_le_bytes());
            }
            write_msg(&mut stream, &hs).unwrap();
        });
        let err = ExternalEnv::connect(&addr, Duration::from_secs(5)).unwrap_err();
        assert!(err.to_string().contains("version mismatch"), "{err}");
        handle.join().unwrap();
    }

    #[test]
    fn truncated_payload_is_protocol_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut hs = Vec::new();
            hs.extend_from_slice(MAGIC);
            hs.extend_from_slice(&SPEV_VERSION.to_le_bytes());
            for v in [4u16, 4, 3, 5] {
                hs.extend_from_slice(&v.to_le_bytes());
            }
            write_msg(&mut stream, &hs).unwrap();
            // advertise a long payload, deliver a short one, then hang up
            let _ = read_msg(&mut stream).unwrap();
            stream.write_all(&1000u32.to_le_bytes()).unwrap();
            stream.write_all(&[1, 2, 3]).unwrap();
        });
        let mut env = ExternalEnv::connect(&addr, Duration::from_secs(5)).unwrap();
        let err = env.reset(0).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        handle.join().unwrap();
    }
}

//! Serve a Sprites environment over the SPEV TCP wire protocol in one thread
//! and drive it from another through `ExternalEnv`, checking the remote frames
//! match an identical in-process environment bit for bit.

use std::net::TcpListener;
use std::time::Duration;

use spirl::env::{serve_env, EnvInterface, ExternalEnv, Sprites, SpritesConfig};
use spirl::tensor::Result;

fn main() -> Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = std::thread::spawn(move || {
        let mut env = Sprites::new(SpritesConfig::default());
        // returns when the client disconnects
        let _ = serve_env(listener, &mut env);
    });

    let mut remote = ExternalEnv::connect(&addr.to_string(), Duration::from_secs(5))?;
    let mut local = Sprites::new(SpritesConfig::default());
    println!("connected to {addr}; dims {:?}, {} actions", remote.dims(), remote.action_count());

    let a = remote.reset(9)?;
    let b = local.reset(9)?;
    assert_eq!(a, b, "reset frames differ");
    let mut total = 0.0;
    for t in 0..20 {
        let ra = remote.step(t % 5)?;
        let rb = local.step(t % 5)?;
        assert_eq!(ra.frame, rb.frame, "step {t} frames differ");
        assert_eq!(ra.reward, rb.reward);
        total += ra.reward;
        if ra.done {
            break;
        }
    }
    println!("20 remote steps matched the in-process env exactly; return {total:+.1}");
    drop(remote);
    let _ = server.join();
    Ok(())
}

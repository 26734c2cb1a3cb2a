//! The config-driven path used by the `conelab` binary: parse TOML, run,
//! and read back the manifest. Takes a config path or uses a built-in one.
//!
//! ```bash
//! cargo run --release --example config_run
//! cargo run --release --example config_run -- crates/core/examples/configs/decay.toml
//! ```

use conelab::runner::{run, RunConfig};

const INLINE: &str = r#"
[equation]
catalog = "JOHN1"

[data]
family = "POLY_TAIL"
amplitude = 0.01
power = 1.5

[grid]
r_out = 61.0
n = 1201

[run]
t_end = 30.0

[diagnostics]
u_min = -24.0
u_max = -3.0
u_count = 8
"#;

fn main() -> conelab::error::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::from_toml_str(INLINE)?,
    };
    cfg.output.dir = std::env::temp_dir().join("conelab-config-run");

    let manifest = run(&cfg)?;
    println!("t_reached {}  steps {}  c_max {:.4}", manifest.summary.t_reached, manifest.summary.steps, manifest.summary.c_max);
    for n in &manifest.weighted_norms {
        println!("weighted norm k = {}: {:?}", n.k, n.value);
    }
    for (field, fit) in &manifest.decay_fits {
        if let Some(f) = fit {
            println!("{field:<16} exponent {:+.4}", f.exponent);
        }
    }
    println!("files: {:?}", manifest.files);
    println!("\nEffective config:\n{}", cfg.to_toml_string()?);
    Ok(())
}

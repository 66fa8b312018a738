//! Regenerates the synthetic ADS-B fixture corpus.
//!
//! ```text
//! cargo run -p rtaprop --example make_corpus -- fixtures/adsb
//! ```
//!
//! Tracks follow random three-leg plans with 10 m per-axis position noise and an arrival
//! offset drawn from the filter's own prediction under Q_max = 100·I.

use std::path::PathBuf;

use rtaprop::filter::FilterConfig;
use rtaprop::rta::RtaConfig;
use rtaprop::tuning::{synthetic_corpus, write_corpus, ArrivalSpread, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/adsb".into()));
    let spec = SyntheticSpec {
        flights: 12,
        segments: 3,
        segment_duration_s: 120.0,
        spread: ArrivalSpread::Predicted {
            filter: FilterConfig {
                q_max_scale: 100.0,
                ..FilterConfig::default()
            },
            rta: RtaConfig::default(),
        },
        seed: 2024,
        id_prefix: "SYN".into(),
        ..SyntheticSpec::default()
    };
    let flights: Vec<_> = synthetic_corpus(&spec)?.into_iter().map(|f| f.flight).collect();
    write_corpus(&flights, &root.join("tracks"), &root.join("plans"))?;
    println!("wrote {} flights under {}", flights.len(), root.display());
    Ok(())
}

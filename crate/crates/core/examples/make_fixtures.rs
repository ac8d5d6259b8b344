//! Regenerates the CSV fixtures under `crates/core/fixtures`.
//!
//! ```text
//! cargo run -p tmoe --example make_fixtures
//! ```

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use tmoe::data::{synth_series, write_csv, Series, SynthSpec};
use tmoe::numerics::{Rng, Tensor};

const ETT_CHANNELS: [&str; 7] = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"];

/// Transformer-station style load and temperature readings: daily and
/// weekly cycles, a slowly wandering level and AR(1) disturbances.
fn ett_like(rows: usize, seed: u64) -> Series {
    let mut rng = Rng::new(seed);
    let base: [f64; 7] = [8.0, 2.5, 5.5, 1.2, 3.0, 1.1, 18.0];
    let daily = [2.5, 0.8, 2.0, 0.5, 1.0, 0.3, 3.0];
    let weekly = [1.0, 0.3, 0.8, 0.2, 0.4, 0.1, 1.5];
    let noise = [0.6, 0.25, 0.5, 0.15, 0.3, 0.1, 0.4];
    let phase: Vec<f64> = (0..7).map(|_| rng.uniform() * TAU).collect();
    let mut level = [0.0f64; 7];
    let mut ar = [0.0f64; 7];
    let mut data = Vec::with_capacity(rows * 7);
    for t in 0..rows {
        let tf = t as f64;
        for c in 0..7 {
            level[c] += 0.02 * base[c].sqrt() * rng.normal();
            ar[c] = 0.8 * ar[c] + noise[c] * rng.normal();
            let v = base[c]
                + level[c]
                + daily[c] * (TAU * tf / 24.0 + phase[c]).sin()
                + 0.4 * daily[c] * (TAU * tf / 12.0 + 0.5 * phase[c]).sin()
                + weekly[c] * (TAU * tf / 168.0 + phase[c]).sin()
                + ar[c];
            data.push(((v * 1000.0).round() / 1000.0) as f32);
        }
    }
    let values = Tensor::new(vec![rows, 7], data).unwrap();
    Series::new("ETTh1", values, ETT_CHANNELS.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).unwrap();

    fs::write(
        dir.join("tiny.csv"),
        "date,a,b\n2016-07-01 00:00:00,1.5,-2\n2016-07-01 01:00:00,2.5,0.25\n2016-07-01 02:00:00,3,4e-1\n",
    )
    .unwrap();
    fs::write(
        dir.join("missing.csv"),
        "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,NA,3\n",
    )
    .unwrap();

    write_csv(&ett_like(2880, 2016), dir.join("etth1_excerpt.csv")).unwrap();
    let sinusoid = synth_series(&SynthSpec::sinusoid(24.0, 0.1, 2000, 24)).unwrap();
    write_csv(&sinusoid, dir.join("sinusoid.csv")).unwrap();
}

//! Writes the example data sets under `data/`.
//!
//! `cargo run -p mitoclock --example synthetic_data -- data`

use std::fs;
use std::path::PathBuf;

use mitoclock::histogram::bin_mid_age;
use mitoclock::{DivisionRate, ModelFamily};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const BIN_WIDTH: f64 = 1.25;
const BINS: usize = 63;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20090101);
    let noise = Normal::new(0.0, 0.05)?;

    let rate = DivisionRate::closed_form(ModelFamily::ErfcRate { beta0: 0.17879, m: 25.007, sigma: 3.6141 })?;
    let mu = 0.00333;
    let mut hist = String::from("# IMT density histogram, bin width 1.25 h, bin i covers [1.25 i, 1.25 (i + 1)], i = 1..63\n");
    let mut raw = Vec::with_capacity(BINS);
    for i in 1..=BINS {
        let a = bin_mid_age(BIN_WIDTH, i);
        let density = rate.eval(a) * (-rate.cumulative(a) - mu * a).exp();
        raw.push((density * (1.0 + noise.sample(&mut rng))).max(0.0));
    }
    let mass: f64 = BIN_WIDTH * raw.iter().sum::<f64>();
    for h in raw {
        hist.push_str(&format!("{:.8e}\n", h / mass));
    }
    fs::write(dir.join("imt_histogram.csv"), hist)?;

    let growth_noise = Normal::new(0.0, 0.02)?;
    let mut growth = String::from("t,count\n");
    for k in 0..=12 {
        let t = 8.0 * k as f64;
        let n = 2.0e4 * (0.022 * t).exp() * (1.0 + growth_noise.sample(&mut rng));
        growth.push_str(&format!("{t},{:.1}\n", n));
    }
    fs::write(dir.join("growth.csv"), growth)?;

    let model = ModelFamily::ErfcRateDeath { beta0: 0.17879, m: 25.007, sigma: 3.6141, mu };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model)? + "\n")?;

    let emg = ModelFamily::Emg { beta0: 0.2, m: 22.0, sigma: 2.0 };
    let mut table = String::from("age,density\n");
    for k in 0..=6000 {
        let a = k as f64 * 0.01;
        table.push_str(&format!("{a},{:.17e}\n", emg.i_infinity(a)));
    }
    fs::write(dir.join("emg_density.csv"), table)?;
    Ok(())
}

//! Source-only vs adapted accuracy on the rotated Gaussian benchmark.
//!
//! cargo run --release -p hypersfda --example synthetic_benchmark -- [noise] [epochs] [seeds] [lr] [m']

use hypersfda::datagen::{gen_gaussian_domains, ShiftSpec};
use hypersfda::model::{accuracy, pretrain_source, PretrainConfig};
use hypersfda::trainer::{adapt, Variant};
use hypersfda::{AdaptConfig, AdaptModel};

fn main() -> hypersfda::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize| args.get(i).and_then(|s| s.parse::<f64>().ok());
    let noise = arg(1).unwrap_or(0.3);
    let epochs = arg(2).map_or(10, |v| v as usize);
    let seeds = arg(3).map_or(5, |v| v as u64);
    let lr = arg(4).unwrap_or(3e-5);
    let m_prime = arg(5).map_or(8, |v| v as usize);

    for seed in 0..seeds {
        let shift = ShiftSpec { noise_sigma: noise, seed, ..ShiftSpec::rotation_deg(30.0) };
        let (source, target) = gen_gaussian_domains(4, 16, 800, 800, &shift, seed)?;
        let model = AdaptModel::new(16, 16, 4, seed)?;
        let pre = pretrain_source(model, &source, &PretrainConfig { seed, ..PretrainConfig::default() })?;
        let base = accuracy(&pre.model, &target)?;
        print!("seed {seed}: source {:.3} source-only target {base:.3}", pre.accuracy);
        for variant in [Variant::Full, Variant::NoSelfLoop, Variant::Pairwise] {
            let cfg = AdaptConfig { epochs, seed, variant, lr, m_prime: Some(m_prime), ..AdaptConfig::default() };
            match adapt(pre.model.clone(), &target, &cfg) {
                Ok(out) => {
                    let first = out.metrics.first().and_then(|r| r.neighbor_agreement).unwrap_or(f64::NAN);
                    let last = out.metrics.last().and_then(|r| r.neighbor_agreement).unwrap_or(f64::NAN);
                    let acc = accuracy(&out.model, &target)?;
                    print!(" | {variant:?} {acc:.3} (agreement {first:.3} -> {last:.3})");
                }
                Err(e) => print!(" | {variant:?} error: {e}"),
            }
        }
        println!();
    }
    Ok(())
}

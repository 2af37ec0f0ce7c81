//! Round-trip random bits through ESS and CCDM matchers, then report the
//! rate, energy and rate loss of each.

use fibernl::rng::{self, Role};
use fibernl::rxdsp::dm_rate_loss;
use fibernl::shaping::{AmplitudeAlphabet, DmConfig, EssTrellis, ShapingCodec};
use fibernl::signal::entropy_bits;
use rand::Rng;

fn main() -> fibernl::Result<()> {
    let n4d = 1024;
    for dm in [DmConfig::ess(256, 332), DmConfig::ccdm(256, 332)] {
        let codec = ShapingCodec::new(&dm, None)?;
        let mut r = rng::stream(1, Role::Bits, 0);
        let bits: Vec<u8> = (0..codec.frame_bits(n4d)?).map(|_| r.random_range(0..2u8)).collect();
        let frame = codec.encode_frame(&bits, n4d, 1)?;
        let back = codec.decode_frame(&frame.symbols_4d)?;
        let al = AmplitudeAlphabet::default();
        let mut pmf = vec![0.0; al.len()];
        let amps: Vec<u32> = frame.amplitude_blocks.concat();
        for &a in &amps {
            pmf[al.position(a)?] += 1.0 / amps.len() as f64;
        }
        println!(
            "{:?} n={} k={}: {:.3} bit/4D, amplitude entropy {:.3}, mean a^2 {:.2}, loss {:.4} bit/4D, roundtrip {}",
            dm.kind,
            dm.block_len,
            dm.k_bits,
            codec.rate_bits_per_4d(),
            entropy_bits(&pmf),
            amps.iter().map(|&a| (a * a) as f64).sum::<f64>() / amps.len() as f64,
            dm_rate_loss(&pmf, dm.k_bits as f64 / dm.block_len as f64),
            if back == bits { "ok" } else { "FAILED" }
        );
    }

    let al = AmplitudeAlphabet::default();
    let t = EssTrellis::new(&al, 8, 120)?;
    let idx = t.total() - 1u32;
    let block = t.unrank(&idx)?;
    println!("ESS n=8 E<=120: {} sequences, last {:?}, rank {}", t.total(), block, t.rank(&block)?);
    Ok(())
}

//! Real multiplications per 2D symbol for each equalizer across step
//! counts, with overlap-save blocks tuned to the link.

use fibernl::channel::LinkConfig;
use fibernl::dbp::{complexity_rm2d, DbpConfig};

fn main() {
    let link = LinkConfig::default();
    let rs = 46.5e9;
    let cdc = complexity_rm2d(&DbpConfig::cdc().with_tuned_blocks(&link, rs));
    println!("cdc: {:.0} RM/2D (block {})", cdc.rm_per_2d, DbpConfig::cdc().with_tuned_blocks(&link, rs).fft_block);
    println!("{:>6} {:>10} {:>10} {:>10}", "steps", "ssfm", "essfm/4", "essfm/8");
    for n in [30, 60, 120, 240, 600] {
        let cost = |c: DbpConfig| complexity_rm2d(&c.with_tuned_blocks(&link, rs)).rm_per_2d;
        println!(
            "{n:>6} {:>10.0} {:>10.0} {:>10.0}",
            cost(DbpConfig::ssfm(n)),
            cost(DbpConfig::essfm(n, 4)),
            cost(DbpConfig::essfm(n, 8))
        );
    }
    let r = complexity_rm2d(&DbpConfig::cb_essfm(30, 8).with_tuned_blocks(&link, rs));
    println!(
        "cb_essfm 30/8 breakdown: fft {:.0}, pointwise {:.0}, filter {:.0}, power {:.0}, rotation {:.0}, fft cost {}",
        r.fft, r.pointwise, r.power_filter, r.power, r.rotation, r.fft_law
    );
}

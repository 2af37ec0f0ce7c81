//! Accuracy of the forward split-step model against a finely stepped
//! reference, for uniform and logarithmic step placement.

use fibernl::channel::{ssfm_forward, LinkConfig, Spacing, StepPlan};
use fibernl::rng::{self, Role};
use fibernl::signal::{dbm_to_watts, nmse_signal, rrc_shape, Constellation, PulseConfig, Symbols};
use rand::Rng;

fn main() -> fibernl::Result<()> {
    let c = Constellation::uniform_qam(64)?;
    let n = 1 << 12;
    let mut r = rng::stream(2, Role::Bits, 0);
    let mut pick = || c.points[r.random_range(0..64)];
    let sym = Symbols::new((0..n).map(|_| pick()).collect(), (0..n).map(|_| pick()).collect())?;
    let mut sig = rrc_shape(&sym, &PulseConfig::default())?;
    sig.scale((dbm_to_watts(6.0) / 2.0).sqrt());

    let mut link = LinkConfig::default().noiseless();
    link.n_spans = 3;
    let fine = StepPlan { steps_per_span: 800, spacing: Spacing::Logarithmic, split_ratio: 0.5 };
    let reference = ssfm_forward(&sig, &link, &fine, 0)?;
    println!("{:>6} {:>12} {:>12}", "steps", "uniform", "logarithmic");
    for k in [1, 2, 5, 10, 25, 50, 100] {
        let err = |spacing| -> fibernl::Result<f64> {
            let plan = StepPlan { steps_per_span: k, spacing, split_ratio: 0.5 };
            Ok(nmse_signal(&ssfm_forward(&sig, &link, &plan, 0)?, &reference))
        };
        println!("{k:>6} {:>12.3e} {:>12.3e}", err(Spacing::Uniform)?, err(Spacing::Logarithmic)?);
    }
    Ok(())
}

//! Joint encoding, the control decoder and cross-modal prediction at one
//! latent size, each probed for shared (`r_m`) and exclusive (`r_e`) content.
//!
//! cargo run --release --example architectures -- [d_z] [batches]

use mmlab::arch::synthetic::{train_cm, train_control, train_je, SyntheticEncoder};
use mmlab::nn::{RngStream, Schedule};
use mmlab::readout::{probe_synthetic, EvalConfig};
use mmlab::synthetic::{SyntheticSpec, SyntheticWorld};

fn main() -> mmlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let d_z: usize = args.next().map_or(6, |s| s.parse().expect("d_z"));
    let batches: usize = args.next().map_or(1000, |s| s.parse().expect("batches"));
    let schedule = Schedule::new(batches, 128, 1e-3);
    let eval = EvalConfig {
        schedule,
        ..EvalConfig::default()
    };
    let world = SyntheticWorld::new(SyntheticSpec::default())?;
    let mut rng = RngStream::new(3, 0);

    let encoders: Vec<(&str, Box<dyn SyntheticEncoder>)> = vec![
        ("je", Box::new(train_je(&world, d_z, &schedule, &mut rng)?)),
        ("control", Box::new(train_control(&world, d_z, &schedule, &mut rng)?)),
        ("cm", Box::new(train_cm(&world, d_z, &schedule, &mut rng)?)),
    ];
    println!("d_z = {d_z}, d_min = {}", world.spec.d_min());
    for (name, enc) in &encoders {
        let r = probe_synthetic(enc.as_ref(), &world, &eval, &mut rng)?;
        println!("{name:>8}: r_m {:.3}  r_e {:.3}", r.r_m.unwrap().mse, r.r_e.unwrap().mse);
    }
    Ok(())
}

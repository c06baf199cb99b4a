//! Joint encoding of vision and proprioception in the arm world, read out per
//! stream and per image half. A small budget; the acceptance suite uses more.
//!
//! cargo run --release --example robot_pipeline -- [d_z] [samples] [batches]

use mmlab::arch::robot::{train_robot_default, RobotInputs, VISION_CODE};
use mmlab::arm::{generate_dataset, ArmConfig, Stream};
use mmlab::nn::{RngStream, Schedule};
use mmlab::readout::robot::probe_robot;

fn main() -> mmlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let d_z: usize = args.next().map_or(32, |s| s.parse().expect("d_z"));
    let samples: usize = args.next().map_or(20_000, |s| s.parse().expect("samples"));
    let batches: usize = args.next().map_or(1000, |s| s.parse().expect("batches"));

    let d = generate_dataset(&ArmConfig::default(), samples, 0)?;
    let inputs = RobotInputs::observed(&d, None)?;
    let mut rng = RngStream::new(1, 0);
    let pipe = train_robot_default(&d, d_z, VISION_CODE, &Schedule::new(batches, 32, 1e-3), &mut rng)?;
    println!("loss {:.4} -> {:.4}", pipe.trace.head_mean(10), pipe.trace.tail_mean(10));

    let codes = pipe.encode(&inputs.vision, &inputs.proprio)?;
    let e = d.eval_range();
    let (recon, _) = pipe.decode(&codes.slice_rows(e.start, e.len())?)?;
    let r = probe_robot(&d, &codes, &recon, &Schedule::new(1500, 128, 1e-3), &mut rng)?;
    for s in Stream::ALL {
        println!("{:<10} {:.3}", s.label(), r.stream(s));
    }
    println!(
        "vision left {:.4} right {:.4} (chance {:.4} / {:.4})",
        r.vision.left, r.vision.right, r.chance.left, r.chance.right
    );
    Ok(())
}

//! The two-arm world: kinematics, rendering, a small dataset and the
//! ground-truth streams. Writes a few frames as PGM.
//!
//! cargo run --release --example arm_world -- [out_dir]

use std::path::PathBuf;

use mmlab::arm::{forward_kinematics, generate_dataset, ArmConfig, Stream};
use mmlab::formats::write_pgm;

fn main() -> mmlab::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "arm_frames".into()));
    std::fs::create_dir_all(&out).map_err(|e| mmlab::Error::Io { path: out.clone(), source: e })?;
    let cfg = ArmConfig::default();
    let ee = forward_kinematics(&vec![0.0; cfg.joints], &cfg.links, cfg.left_base);
    println!("reach {:.1} px; left end effector at rest {ee:?}", cfg.reach());

    let d = generate_dataset(&cfg, 2000, 0)?;
    println!("{} samples ({} train), image {}x{}, proprio {}", d.len(), d.n_train, cfg.height, cfg.width, d.proprio.cols());
    for s in Stream::ALL {
        println!("  {:<10} {} dims", s.label(), d.stream(s).cols());
    }
    for i in (0..cfg.steps_per_target).step_by(3) {
        let v: Vec<f64> = d.images.row(i).iter().map(|&x| (x as f64 + 1.0) / 2.0).collect();
        let path = out.join(format!("frame_{i:02}.pgm"));
        write_pgm(&path, &v, cfg.height, cfg.width)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

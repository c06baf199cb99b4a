//! Shared and exclusive sources mixed into modalities by random frozen nets.
//!
//! cargo run --release --example synthetic_data -- [out.bin]

use mmlab::formats::dump_synthetic;
use mmlab::nn::RngStream;
use mmlab::synthetic::{SyntheticSpec, SyntheticWorld};

fn main() -> mmlab::Result<()> {
    let spec = SyntheticSpec::default();
    println!(
        "d_m={} d_e={} n={} k={}: d_x={} d_y={} d_min={}",
        spec.d_m,
        spec.d_e,
        spec.n,
        spec.k,
        spec.d_x(),
        spec.d_y(),
        spec.d_min()
    );
    let world = SyntheticWorld::new(spec)?;
    let (sources, modalities) = world.sample(4096, &mut RngStream::new(1, 0))?;
    let y = modalities.y_concat();
    for c in 0..3 {
        let col: Vec<f64> = (0..y.rows()).map(|r| y.row(r)[c] as f64).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
        println!("y[{c}]: mean {m:+.3} var {v:.3}");
    }
    println!("x_m {:?}, y {:?}", sources.x_m.shape(), y.shape());

    if let Some(path) = std::env::args().nth(1) {
        dump_synthetic(&world, 4, 128, &mut RngStream::new(2, 0))?.save(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}

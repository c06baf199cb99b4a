//! Tape autodiff and Adam on a toy regression: fit `y = sin(x0) + x1^2`.
//!
//! cargo run --release --example autodiff

use mmlab::nn::{fit, Graph, Network, ParamStore, RngStream, Schedule, Tensor};

fn batch(rng: &mut RngStream, n: usize) -> (Tensor, Tensor) {
    let x = Tensor::from_fn(&[n, 2], |_| rng.uniform(-2.0, 2.0) as f32);
    let y = Tensor::from_fn(&[n, 1], |i| {
        let r = x.row(i);
        r[0].sin() + r[1] * r[1]
    });
    (x, y)
}

fn main() -> mmlab::Result<()> {
    let mut rng = RngStream::new(0, 0);
    let mut store = ParamStore::new();
    let net = Network::mlp(&mut store, "toy", &[2, 32, 32, 1], &mut rng);

    let trace = fit("toy", &mut store, &Schedule::new(3000, 64, 3e-3), None, |store, _| {
        let (x, y) = batch(&mut rng, 64);
        let mut g = Graph::new(store);
        let (xv, yv) = (g.input(x), g.input(y));
        let p = net.forward(&mut g, xv)?;
        let l = g.mse(p, yv, 64.0)?;
        Ok((g.scalar(l), g.backward(l)?))
    })?;
    println!("training loss {:.4} -> {:.4}", trace.head_mean(50), trace.tail_mean(50));

    let (x, y) = batch(&mut RngStream::new(1, 0), 1000);
    let p = net.infer(&store, &x)?;
    let mse: f32 = p.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f32>() / 1000.0;
    println!("held-out mse {mse:.4} (target variance is about 1.6)");
    Ok(())
}

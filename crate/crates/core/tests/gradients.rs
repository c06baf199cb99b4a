mod common;

use common::finite_difference_error;
use mmlab::nn::{
    conv_encoder, Activation, Conv2d, Deconv2d, Dense, Graph, Layer, Network, ParamStore, RngStream, Tensor, HALVING,
};

fn randn(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.normal())
}

fn net_loss(net: &Network, store: &ParamStore<f64>, x: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    let mut g = Graph::new(store);
    let xv = g.input(x.clone());
    let tv = g.input(t.clone());
    let y = net.forward(&mut g, xv).unwrap();
    let l = g.mse(y, tv, t.cols() as f64).unwrap();
    g.scalar(l)
}

fn check_network(net: &Network, store: &ParamStore<f64>, batch: usize, rng: &mut RngStream) -> f64 {
    let x = randn(&[batch, net.in_dim()], rng);
    let t = randn(&[batch, net.out_dim()], rng);
    let mut g = Graph::new(store);
    let xv = g.input(x.clone());
    let tv = g.input(t.clone());
    let y = net.forward(&mut g, xv).unwrap();
    let l = g.mse(y, tv, t.cols() as f64).unwrap();
    let grads = g.backward(l).unwrap();
    finite_difference_error(store, &grads, 1e-4, 40, rng, |s| net_loss(net, s, &x, &t))
}

#[test]
fn linear_layer_matches_closed_form() {
    let mut rng = RngStream::new(11, 0);
    let mut store = ParamStore::<f64>::new();
    let layer = Dense::new(&mut store, "l", 3, 2, Activation::Linear, &mut rng);
    store.get_mut(layer.bias).data_mut().copy_from_slice(&[0.3, -0.2]);
    let x = randn(&[1, 3], &mut rng);
    let t = randn(&[1, 2], &mut rng);
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone());
    let tv = g.input(t.clone());
    let y = layer.forward(&mut g, xv).unwrap();
    let l = g.mse(y, tv, 2.0).unwrap();
    let grads = g.backward(l).unwrap();

    let w = store.get(layer.weight).data();
    let b = store.get(layer.bias).data();
    for o in 0..2 {
        let pred: f64 = (0..3).map(|i| w[o * 3 + i] * x.data()[i]).sum::<f64>() + b[o];
        let resid = pred - t.data()[o];
        for i in 0..3 {
            let expected = 2.0 * resid * x.data()[i] / 2.0;
            assert_eq!(grads.get(layer.weight).unwrap().data()[o * 3 + i], expected);
        }
        let eb = 2.0 * resid / 2.0;
        assert!((grads.get(layer.bias).unwrap().data()[o] - eb).abs() < 1e-15);
    }
}

#[test]
fn relu_mlp_matches_finite_differences() {
    let mut rng = RngStream::new(12, 0);
    let mut store = ParamStore::<f64>::new();
    let net = Network::mlp(&mut store, "m", &[8, 16, 16, 5], &mut rng);
    let err = check_network(&net, &store, 4, &mut rng);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn conv_then_dense_matches_finite_differences() {
    let mut rng = RngStream::new(13, 0);
    let mut store = ParamStore::<f64>::new();
    let layers = vec![
        Layer::Reshape(vec![1, 8, 8]),
        Layer::Conv(Conv2d::new(&mut store, "c", 1, 3, HALVING, Activation::Relu, &mut rng)),
        Layer::Dense(Dense::new(&mut store, "d", 3 * 4 * 4, 4, Activation::Linear, &mut rng)),
    ];
    let net = Network::new(layers, 64, 4);
    let err = check_network(&net, &store, 3, &mut rng);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn dense_then_deconv_matches_finite_differences() {
    let mut rng = RngStream::new(14, 0);
    let mut store = ParamStore::<f64>::new();
    let layers = vec![
        Layer::Dense(Dense::new(&mut store, "d", 5, 2 * 2 * 4, Activation::Relu, &mut rng)),
        Layer::Reshape(vec![2, 2, 4]),
        Layer::Deconv(Deconv2d::new(&mut store, "t", 2, 3, HALVING, Activation::Linear, &mut rng)),
    ];
    let net = Network::new(layers, 5, 3 * 4 * 8);
    let err = check_network(&net, &store, 3, &mut rng);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn full_conv_encoder_matches_finite_differences() {
    let mut rng = RngStream::new(15, 0);
    let mut store = ParamStore::<f64>::new();
    let net = conv_encoder(&mut store, "e", (1, 8, 8), 6, &mut rng).unwrap();
    let err = check_network(&net, &store, 2, &mut rng);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn split_and_join_ops_match_finite_differences() {
    // Two heads on a shared trunk, recombined through concat/slice/add/scale.
    let mut rng = RngStream::new(16, 0);
    let mut store = ParamStore::<f64>::new();
    let trunk = Network::mlp(&mut store, "trunk", &[4, 6, 6], &mut rng);
    let head_a = Network::mlp(&mut store, "a", &[3, 5, 2], &mut rng);
    let head_b = Network::mlp(&mut store, "b", &[3, 5, 2], &mut rng);
    let x = randn(&[3, 4], &mut rng);
    let t = randn(&[3, 4], &mut rng);

    let run = |s: &ParamStore<f64>, backward: bool| {
        let mut g = Graph::new(s);
        let xv = g.input(x.clone());
        let tv = g.input(t.clone());
        let h = trunk.forward(&mut g, xv).unwrap();
        let left = g.slice(h, 0, 3).unwrap();
        let right = g.slice(h, 3, 3).unwrap();
        let ya = head_a.forward(&mut g, left).unwrap();
        let yb = head_b.forward(&mut g, right).unwrap();
        let cat = g.concat(&[ya, yb]).unwrap();
        let t0 = g.slice(tv, 0, 2).unwrap();
        let t1 = g.slice(tv, 2, 2).unwrap();
        let l0 = g.mse(ya, t0, 4.0).unwrap();
        let l1 = g.mse(cat, tv, 8.0).unwrap();
        let l2 = g.mse(yb, t1, 1.0).unwrap();
        let s01 = g.add(l0, l1).unwrap();
        let s01 = g.scale(s01, 0.5);
        let l = g.add(s01, l2).unwrap();
        (g.scalar(l), backward.then(|| g.backward(l).unwrap()))
    };
    let (_, grads) = run(&store, true);
    let err = finite_difference_error(&store, &grads.unwrap(), 1e-4, 40, &mut rng, |s| run(s, false).0);
    assert!(err < 1e-3, "relative error {err}");
}

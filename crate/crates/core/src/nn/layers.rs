use super::conv::ConvGeom;
use super::{Graph, ParamId, ParamStore, Real, RngStream, Tensor, Var};
use crate::error::{Error, Result};

/// Width of every hidden layer in the experiment MLPs.
pub const HIDDEN: usize = 200;

/// Kernel 4, stride 2, one pixel of padding: halves even extents.
pub const HALVING: ConvGeom = ConvGeom::new(4, 2, 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.w"), &[out_dim, in_dim], in_dim, out_dim, rng);
        let bias = store.add_zeros(format!("{name}.b"), &[out_dim]);
        Dense {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        let y = g.affine(x, w, b)?;
        Ok(activate(g, y, self.activation))
    }
}

/// Stand-alone dense forward pass on a `[batch, in]` or `[in]` tensor.
pub fn dense_forward<T: Real>(store: &ParamStore<T>, layer: &Dense, x: &Tensor<T>) -> Result<Tensor<T>> {
    let single = x.shape().len() == 1;
    let x2 = if single {
        x.clone().reshape(&[1, x.len()])?
    } else {
        x.clone()
    };
    if x2.cols() != layer.in_dim {
        return Err(Error::shape("dense_forward", &[layer.in_dim], &[x2.cols()]));
    }
    let mut g = Graph::new(store);
    let xv = g.input(x2);
    let y = layer.forward(&mut g, xv)?;
    let out = g.value(y).clone();
    if single {
        out.reshape(&[layer.out_dim])
    } else {
        Ok(out)
    }
}

fn activate<T: Real>(g: &mut Graph<'_, T>, y: Var, a: Activation) -> Var {
    match a {
        Activation::Relu => g.relu(y),
        Activation::Linear => y,
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: ConvGeom,
    pub activation: Activation,
}

impl Conv2d {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeom,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let kk = geom.kernel * geom.kernel;
        let kernel = store.add_glorot(
            format!("{name}.k"),
            &[out_ch, in_ch, geom.kernel, geom.kernel],
            in_ch * kk,
            out_ch * kk,
            rng,
        );
        let bias = store.add_zeros(format!("{name}.b"), &[out_ch]);
        Conv2d {
            kernel,
            bias,
            in_ch,
            out_ch,
            geom,
            activation,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (k, b) = (g.param(self.kernel), g.param(self.bias));
        let y = g.conv2d(x, k, b, self.geom)?;
        Ok(activate(g, y, self.activation))
    }
}

/// Transposed convolution; kernel layout is `[in_ch, out_ch, k, k]`.
#[derive(Debug, Clone)]
pub struct Deconv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: ConvGeom,
    pub activation: Activation,
}

impl Deconv2d {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeom,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let kk = geom.kernel * geom.kernel;
        let kernel = store.add_glorot(
            format!("{name}.k"),
            &[in_ch, out_ch, geom.kernel, geom.kernel],
            in_ch * kk,
            out_ch * kk,
            rng,
        );
        let bias = store.add_zeros(format!("{name}.b"), &[out_ch]);
        Deconv2d {
            kernel,
            bias,
            in_ch,
            out_ch,
            geom,
            activation,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (k, b) = (g.param(self.kernel), g.param(self.bias));
        let y = g.deconv2d(x, k, b, self.geom)?;
        Ok(activate(g, y, self.activation))
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    Deconv(Deconv2d),
    /// Reshape every sample to the given per-sample shape.
    Reshape(Vec<usize>),
}

/// A feed-forward stack. Inputs and outputs are flat `[batch, features]`.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    in_dim: usize,
    out_dim: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, in_dim: usize, out_dim: usize) -> Self {
        Network {
            layers,
            in_dim,
            out_dim,
        }
    }

    /// Fully-connected stack over `dims`; ReLU everywhere except the last layer.
    pub fn mlp<T: Real>(store: &mut ParamStore<T>, name: &str, dims: &[usize], rng: &mut RngStream) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output sizes");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                Layer::Dense(Dense::new(store, &format!("{name}.{i}"), dims[i], dims[i + 1], act, rng))
            })
            .collect();
        Network::new(layers, dims[0], dims[n])
    }

    /// The three-layer MLP used throughout: `in -> 200 -> 200 -> out`.
    pub fn mlp3<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut RngStream) -> Self {
        Network::mlp(store, name, &[input, HIDDEN, HIDDEN, output], rng)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let batch = g.shape(x)[0];
        if g.value(x).cols() != self.in_dim {
            return Err(Error::shape("network input", &[batch, self.in_dim], g.shape(x)));
        }
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    if g.shape(h).len() != 2 {
                        let cols = g.value(h).cols();
                        h = g.reshape(h, &[batch, cols])?;
                    }
                    d.forward(g, h)?
                }
                Layer::Conv(c) => c.forward(g, h)?,
                Layer::Deconv(d) => d.forward(g, h)?,
                Layer::Reshape(s) => {
                    let mut shape = vec![batch];
                    shape.extend_from_slice(s);
                    g.reshape(h, &shape)?
                }
            };
        }
        if g.shape(h).len() != 2 {
            let cols = g.value(h).cols();
            h = g.reshape(h, &[batch, cols])?;
        }
        Ok(h)
    }

    /// Gradient-free evaluation, chunked to bound tape memory.
    pub fn infer<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        const CHUNK: usize = 256;
        let rows = x.rows();
        let mut data = Vec::with_capacity(rows * self.out_dim);
        let mut start = 0;
        while start < rows {
            let len = CHUNK.min(rows - start);
            let mut g = Graph::new(store);
            let xv = g.input(x.slice_rows(start, len)?.reshape(&[len, x.cols()])?);
            let y = self.forward(&mut g, xv)?;
            data.extend_from_slice(g.value(y).data());
            start += len;
        }
        Tensor::new(&[rows, self.out_dim], data)
    }

    /// Parameter ids owned by this network.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Dense(d) => vec![d.weight, d.bias],
                Layer::Conv(c) => vec![c.kernel, c.bias],
                Layer::Deconv(d) => vec![d.kernel, d.bias],
                Layer::Reshape(_) => vec![],
            })
            .collect()
    }
}

/// `c x h x w` image → two halving convs (32, 64 channels) → dense `code`.
pub fn conv_encoder<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    (c, h, w): (usize, usize, usize),
    code: usize,
    rng: &mut RngStream,
) -> Result<Network> {
    let (h2, w2) = halved_twice(h, w)?;
    let layers = vec![
        Layer::Reshape(vec![c, h, w]),
        Layer::Conv(Conv2d::new(store, &format!("{name}.conv0"), c, 32, HALVING, Activation::Relu, rng)),
        Layer::Conv(Conv2d::new(store, &format!("{name}.conv1"), 32, 64, HALVING, Activation::Relu, rng)),
        Layer::Dense(Dense::new(store, &format!("{name}.dense"), 64 * h2 * w2, code, Activation::Linear, rng)),
    ];
    Ok(Network::new(layers, c * h * w, code))
}

/// `code` → dense to `64 x h/4 x w/4` → two halving deconvs back to `c x h x w`.
pub fn deconv_decoder<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    code: usize,
    (c, h, w): (usize, usize, usize),
    rng: &mut RngStream,
) -> Result<Network> {
    let (h2, w2) = halved_twice(h, w)?;
    let layers = vec![
        Layer::Dense(Dense::new(store, &format!("{name}.dense"), code, 64 * h2 * w2, Activation::Relu, rng)),
        Layer::Reshape(vec![64, h2, w2]),
        Layer::Deconv(Deconv2d::new(store, &format!("{name}.deconv0"), 64, 32, HALVING, Activation::Relu, rng)),
        Layer::Deconv(Deconv2d::new(store, &format!("{name}.deconv1"), 32, c, HALVING, Activation::Linear, rng)),
    ];
    Ok(Network::new(layers, code, c * h * w))
}

fn halved_twice(h: usize, w: usize) -> Result<(usize, usize)> {
    if h % 4 != 0 || w % 4 != 0 || h < 4 || w < 4 {
        return Err(Error::Config(format!(
            "image {h}x{w} cannot pass two stride-2 convolutions; extents must be multiples of 4"
        )));
    }
    Ok((h / 4, w / 4))
}

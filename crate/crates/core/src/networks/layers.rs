//! Building blocks shared by the four networks.
use tch::{nn, Kind, Tensor};

use super::init::ParamInit;

/// Standard deviation of the normal distribution used for convolution weights.
pub const INIT_STD: f64 = 0.02;

const NORM_EPS: f64 = 1e-12;

fn l2_normalize(t: &Tensor) -> Tensor {
    t / (t.norm() + NORM_EPS)
}

#[derive(Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    stride: i64,
    padding: i64,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: &nn::Path,
        init: &mut ParamInit,
        c_in: i64,
        c_out: i64,
        kernel: i64,
        stride: i64,
        padding: i64,
    ) -> Self {
        let weight = p.var_copy("weight", &init.normal(&[c_out, c_in, kernel, kernel], INIT_STD));
        let bias = p.var_copy("bias", &Tensor::zeros([c_out], (Kind::Float, p.device())));
        Self { weight, bias, stride, padding }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.forward_with(x, &self.weight)
    }

    fn forward_with(&self, x: &Tensor, weight: &Tensor) -> Tensor {
        x.conv2d(
            weight,
            Some(&self.bias),
            [self.stride, self.stride],
            [self.padding, self.padding],
            [1, 1],
            1,
        )
    }
}

/// 3×3 transposed convolution with stride 2 that exactly doubles the spatial side.
#[derive(Debug)]
pub struct UpConv2d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl UpConv2d {
    pub fn new(p: &nn::Path, init: &mut ParamInit, c_in: i64, c_out: i64) -> Self {
        let weight = p.var_copy("weight", &init.normal(&[c_in, c_out, 3, 3], INIT_STD));
        let bias = p.var_copy("bias", &Tensor::zeros([c_out], (Kind::Float, p.device())));
        Self { weight, bias }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv_transpose2d(&self.weight, Some(&self.bias), [2, 2], [1, 1], [1, 1], 1, [1, 1])
    }
}

/// Convolution whose weight is divided by its largest singular value.
///
/// The weight is viewed as a `c_out × (c_in·k·k)` matrix. The leading left
/// singular vector `u` is stored as a non-trainable buffer; it is computed
/// exactly at construction and refined by one power iteration on every
/// forward call made with `update = true`.
#[derive(Debug)]
pub struct SpectralConv2d {
    conv: Conv2d,
    u: Tensor,
}

impl SpectralConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: &nn::Path,
        init: &mut ParamInit,
        c_in: i64,
        c_out: i64,
        kernel: i64,
        stride: i64,
        padding: i64,
    ) -> Self {
        let conv = Conv2d::new(p, init, c_in, c_out, kernel, stride, padding);
        let u = p.zeros_no_train("u", &[c_out]);
        let layer = Self { conv, u };
        layer.reset_power_iteration();
        layer
    }

    /// Recomputes `u` from an exact SVD of the current weight.
    pub fn reset_power_iteration(&self) {
        tch::no_grad(|| {
            let mat = self.weight_matrix().to_kind(Kind::Double);
            let (left, _, _) = mat.svd(true, true);
            let mut u = self.u.shallow_clone();
            u.copy_(&left.select(1, 0));
        });
    }

    pub fn weight(&self) -> &Tensor {
        &self.conv.weight
    }

    fn weight_matrix(&self) -> Tensor {
        let c_out = self.conv.weight.size()[0];
        self.conv.weight.reshape([c_out, -1])
    }

    /// The weight divided by the current singular-value estimate. Gradients
    /// flow through both the weight and the estimate; `u` and `v` are constants.
    pub fn normalized_weight(&self, update: bool) -> Tensor {
        let mat = self.weight_matrix();
        let (u, v) = tch::no_grad(|| {
            let w = mat.detach();
            if update {
                let v = l2_normalize(&w.tr().mv(&self.u));
                let mut u = self.u.shallow_clone();
                u.copy_(&l2_normalize(&w.mv(&v)));
            }
            (self.u.copy(), l2_normalize(&w.tr().mv(&self.u)))
        });
        let sigma = u.dot(&mat.mv(&v));
        &self.conv.weight / sigma
    }

    pub fn forward(&self, x: &Tensor, update: bool) -> Tensor {
        let w = self.normalized_weight(update);
        self.conv.forward_with(x, &w)
    }

    /// Exact spectral norm of the normalized weight matrix.
    pub fn normalized_spectral_norm(&self) -> f64 {
        tch::no_grad(|| {
            let w = self.normalized_weight(false);
            let mat = w.reshape([w.size()[0], -1]).to_kind(Kind::Double);
            mat.svd(true, false).1.max().double_value(&[])
        })
    }
}

/// Per-sample, per-channel normalization without learned affine parameters.
pub fn instance_norm(x: &Tensor) -> Tensor {
    x.instance_norm(None::<&Tensor>, None::<&Tensor>, None::<&Tensor>, None::<&Tensor>, true, 0.1, 1e-5, false)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.maximum(&(x * slope))
}

/// Residual block `x + conv(relu(conv(x)))` with spectral-normalized convolutions.
#[derive(Debug)]
pub struct SpectralResBlock {
    conv1: SpectralConv2d,
    conv2: SpectralConv2d,
}

impl SpectralResBlock {
    pub fn new(p: &nn::Path, init: &mut ParamInit, channels: i64) -> Self {
        Self {
            conv1: SpectralConv2d::new(&(p / "conv1"), init, channels, channels, 3, 1, 1),
            conv2: SpectralConv2d::new(&(p / "conv2"), init, channels, channels, 3, 1, 1),
        }
    }

    pub fn forward(&self, x: &Tensor, update: bool) -> Tensor {
        let h = self.conv1.forward(x, update).relu();
        x + self.conv2.forward(&h, update)
    }

    pub fn convs(&self) -> [&SpectralConv2d; 2] {
        [&self.conv1, &self.conv2]
    }
}

/// Residual block `x + IN(conv(relu(IN(conv(x)))))`.
#[derive(Debug)]
pub struct InstanceResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl InstanceResBlock {
    pub fn new(p: &nn::Path, init: &mut ParamInit, channels: i64) -> Self {
        Self {
            conv1: Conv2d::new(&(p / "conv1"), init, channels, channels, 3, 1, 1),
            conv2: Conv2d::new(&(p / "conv2"), init, channels, channels, 3, 1, 1),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let h = instance_norm(&self.conv1.forward(x)).relu();
        x + instance_norm(&self.conv2.forward(&h))
    }
}

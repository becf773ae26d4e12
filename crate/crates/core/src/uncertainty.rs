//! Per-pixel uncertainty weights and the decoupled appearance / localisation features.
//!
//! `U = 1 − sigmoid(upsample(conv1x1(F_ID)))`. The sub-depth stack is weighted
//! by `U` (duplicated across its `n_d` channels) and convolved into `F_SD`;
//! `U` itself becomes `F_U` through a convolution over its channel-duplicated
//! copy. Finally `I_A = F_I + F_D` and `I_L = F_D + F_SD + F_U`.

use rand::Rng;

use crate::adis::SubDepthStack;
use crate::error::{shape_err, Error, Result};
use crate::png_io;
use crate::tensor::{self, sigmoid_scalar, Conv2d, FeatureMap};

/// Weights in the open interval `(0, 1)`, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

// Keeps 1 − sigmoid strictly inside (0, 1) once exp() saturates.
const U_MIN: f64 = f64::MIN_POSITIVE;
const U_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

impl UncertaintyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return shape_err(format!(
                "uncertainty map of {} values does not match {height}x{width}",
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Parameter(format!("uncertainty value {v} outside (0, 1)")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::new(1, self.height, self.width, self.values.clone()).expect("values in (0,1)")
    }

    /// Top-left `(height, width)` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return shape_err("crop window exceeds the uncertainty map");
        }
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            values.extend_from_slice(&self.values[y * self.width..y * self.width + width]);
        }
        Self::new(height, width, values)
    }

    /// 8-bit grayscale export, pixel = `round(255 · U)`. Bright pixels are
    /// confident (high weight), dark ones are suppressed.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let px: Vec<u8> = self
            .values
            .iter()
            .map(|&u| (255.0 * u).round() as u8)
            .collect();
        png_io::encode_gray8(self.width, self.height, &px)
    }
}

/// `1×1` conv from the fused feature to one logit channel.
#[derive(Clone, Debug)]
pub struct UncertaintyHead {
    reduce: Conv2d,
}

#[derive(Clone, Debug)]
pub struct UncertaintyGrads {
    pub fused: FeatureMap,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl UncertaintyHead {
    pub fn new(reduce: Conv2d) -> Result<Self> {
        if reduce.kernel_size() != (1, 1)
            || reduce.out_channels() != 1
            || reduce.stride() != 1
            || reduce.padding() != 0
        {
            return shape_err("uncertainty head must be an unpadded stride-1 1x1 conv to 1 channel");
        }
        Ok(Self { reduce })
    }

    /// Zero weights: `U ≡ 0.5`.
    pub fn zeros(channels: usize) -> Self {
        Self::new(Conv2d::zeros(1, channels, 1, 1, 1, 0)).expect("well-formed")
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Result<Self> {
        Self::new(Conv2d::random(1, channels, 1, 1, 1, 0, rng)?)
    }

    pub fn reduce(&self) -> &Conv2d {
        &self.reduce
    }

    pub fn reduce_mut(&mut self) -> &mut Conv2d {
        &mut self.reduce
    }

    /// Upsampled pre-sigmoid logits `z`, shape `1 × H × W`.
    pub fn logits(&self, fused: &FeatureMap, target: (usize, usize)) -> Result<FeatureMap> {
        let reduced = self.reduce.forward(fused)?;
        tensor::bilinear_upsample(&reduced, target)
    }

    pub fn compute(&self, fused: &FeatureMap, target: (usize, usize)) -> Result<UncertaintyMap> {
        let z = self.logits(fused, target)?;
        // 1 − σ(z) = σ(−z), evaluated directly to avoid cancellation.
        let values = z
            .as_slice()
            .iter()
            .map(|&v| sigmoid_scalar(-v).clamp(U_MIN, U_MAX))
            .collect();
        UncertaintyMap::new(target.0, target.1, values)
    }

    /// Gradients given `∂L/∂U` (shape `1 × H × W`).
    pub fn backward(
        &self,
        fused: &FeatureMap,
        u: &UncertaintyMap,
        grad_u: &FeatureMap,
    ) -> Result<UncertaintyGrads> {
        if grad_u.shape() != (1, u.height, u.width) {
            return shape_err("uncertainty grad must be 1 x H x W");
        }
        // dU/dz = −U (1 − U)
        let grad_z: Vec<f64> = u
            .values
            .iter()
            .zip(grad_u.as_slice())
            .map(|(&v, &g)| -g * v * (1.0 - v))
            .collect();
        let grad_z = FeatureMap::new(1, u.height, u.width, grad_z)?;
        let reduced_shape = (1, fused.height(), fused.width());
        let grad_reduced = tensor::bilinear_upsample_backward(reduced_shape, &grad_z)?;
        let g = self.reduce.backward(fused, &grad_reduced)?;
        Ok(UncertaintyGrads {
            fused: g.input,
            weight: g.weight,
            bias: g.bias,
        })
    }
}

/// `U = 1 − sigmoid(upsample(conv1x1(F_ID)))` at `target` resolution.
pub fn compute_uncertainty(
    fused: &FeatureMap,
    head: &UncertaintyHead,
    target: (usize, usize),
) -> Result<UncertaintyMap> {
    head.compute(fused, target)
}

/// `conv(S ⊙ W)` where the single-channel `weights` map is duplicated across
/// the channels of `stack`.
pub fn apply_weight_map(stack: &FeatureMap, weights: &FeatureMap, conv: &Conv2d) -> Result<FeatureMap> {
    let dup = tensor::broadcast_channels(weights, stack.channels())?;
    conv.forward(&tensor::elementwise_mul(stack, &dup)?)
}

#[derive(Clone, Debug)]
pub struct WeightedConvGrads {
    pub stack: FeatureMap,
    /// Gradient for the single-channel weight map.
    pub weights: FeatureMap,
    pub conv_weight: Vec<f64>,
    pub conv_bias: Vec<f64>,
}

pub fn apply_weight_map_backward(
    stack: &FeatureMap,
    weights: &FeatureMap,
    conv: &Conv2d,
    grad_out: &FeatureMap,
) -> Result<WeightedConvGrads> {
    let dup = tensor::broadcast_channels(weights, stack.channels())?;
    let product = tensor::elementwise_mul(stack, &dup)?;
    let gc = conv.backward(&product, grad_out)?;
    let (g_stack, g_dup) = tensor::elementwise_mul_backward(stack, &dup, &gc.input)?;
    Ok(WeightedConvGrads {
        stack: g_stack,
        weights: tensor::broadcast_channels_backward(&g_dup),
        conv_weight: gc.weight,
        conv_bias: gc.bias,
    })
}

/// `F_SD = conv(SD ⊙ U)`, with `U` duplicated across the `n_d` layers.
pub fn apply_uncertainty(stack: &SubDepthStack, u: &UncertaintyMap, conv: &Conv2d) -> Result<FeatureMap> {
    if (stack.height(), stack.width()) != (u.height, u.width) {
        return shape_err(format!(
            "stack is {}x{} but uncertainty map is {}x{}",
            stack.height(),
            stack.width(),
            u.height,
            u.width
        ));
    }
    apply_weight_map(&stack.to_feature_map(), &u.to_feature_map(), conv)
}

/// `F_U`: `U` duplicated to the conv's input width, then convolved.
pub fn uncertainty_feature(u: &FeatureMap, conv: &Conv2d) -> Result<FeatureMap> {
    conv.forward(&tensor::broadcast_channels(u, conv.in_channels())?)
}

/// Gradient of [`uncertainty_feature`] with respect to the `1 × H × W` map.
pub fn uncertainty_feature_backward(u: &FeatureMap, conv: &Conv2d, grad_out: &FeatureMap) -> Result<FeatureMap> {
    let dup = tensor::broadcast_channels(u, conv.in_channels())?;
    let g = conv.backward(&dup, grad_out)?;
    Ok(tensor::broadcast_channels_backward(&g.input))
}

/// Returns `(I_A, I_L) = (F_I + F_D, F_D + F_SD + F_U)`.
pub fn fuse_features(
    f_i: &FeatureMap,
    f_d: &FeatureMap,
    f_sd: &FeatureMap,
    f_u: &FeatureMap,
) -> Result<(FeatureMap, FeatureMap)> {
    let i_a = tensor::add(f_i, f_d)?;
    let i_l = tensor::add(&tensor::add(f_d, f_sd)?, f_u)?;
    Ok((i_a, i_l))
}

#[derive(Clone, Debug)]
pub struct FusionGrads {
    pub f_i: FeatureMap,
    /// Sum of the contributions through `I_A` and `I_L`.
    pub f_d: FeatureMap,
    pub f_sd: FeatureMap,
    pub f_u: FeatureMap,
}

pub fn fuse_features_backward(grad_a: &FeatureMap, grad_l: &FeatureMap) -> Result<FusionGrads> {
    Ok(FusionGrads {
        f_i: grad_a.clone(),
        f_d: tensor::add(grad_a, grad_l)?,
        f_sd: grad_l.clone(),
        f_u: grad_l.clone(),
    })
}

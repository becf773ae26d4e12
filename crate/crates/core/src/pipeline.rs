//! A tiny end-to-end network wiring every learned op together.
//!
//! Two seeded 2-layer conv encoders stand in for the image and depth
//! backbones. Their sum `F_ID` drives both the interval bound head and the
//! uncertainty head; the weighted sub-depth stack and the uncertainty map are
//! brought back to feature resolution by stride-`s` convolutions and fused
//! into the appearance / localisation features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adis::{separate, BoundHead, DepthMap, IntervalPartition, SubDepthStack};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{self, Conv2d, FeatureMap};
use crate::uncertainty::{
    apply_weight_map, apply_weight_map_backward, fuse_features, fuse_features_backward,
    uncertainty_feature, uncertainty_feature_backward, UncertaintyHead, UncertaintyMap,
};

/// Architecture and seed of the demo network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub n_intervals: usize,
    pub d_max: f64,
    /// Common feature width `C`.
    pub channels: usize,
    /// Downsampling factor between the input grid and the feature grid.
    pub stride: usize,
    /// Padded input size `(H, W)`.
    pub input_size: (usize, usize),
    pub seed: u64,
}

impl PipelineConfig {
    pub fn feature_size(&self) -> (usize, usize) {
        (self.input_size.0 / self.stride, self.input_size.1 / self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::Parameter("n_d must be >= 1".into()));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::Parameter(format!("D_max must be positive, got {}", self.d_max)));
        }
        if self.channels == 0 || self.stride == 0 {
            return Err(Error::Parameter("channels and stride must be >= 1".into()));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % self.stride != 0 || w % self.stride != 0 {
            return shape_err(format!(
                "input size {h}x{w} must be non-empty and divisible by the stride {}",
                self.stride
            ));
        }
        Ok(())
    }
}

/// `conv3x3(stride s) → sigmoid → conv3x3`.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl Encoder {
    fn random(channels: usize, stride: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::random(channels, 1, 3, 3, stride, 1, rng)?,
            conv2: Conv2d::random(channels, channels, 3, 3, 1, 1, rng)?,
        })
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        self.conv2.forward(&tensor::sigmoid(&self.conv1.forward(input)?))
    }
}

/// Parameters of the `U`-weighting and fusion stage.
#[derive(Clone, Debug)]
pub struct DecoupledFusion {
    pub u_head: UncertaintyHead,
    /// `n_d → C`, kernel `s×s`, stride `s`.
    pub sd_conv: Conv2d,
    /// `C → C`, kernel `s×s`, stride `s`.
    pub u_conv: Conv2d,
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub f_id: FeatureMap,
    pub u: UncertaintyMap,
    pub f_sd: FeatureMap,
    pub f_u: FeatureMap,
    pub i_a: FeatureMap,
    pub i_l: FeatureMap,
}

#[derive(Clone, Debug)]
pub struct FusionInputGrads {
    pub f_i: FeatureMap,
    pub f_d: FeatureMap,
}

impl DecoupledFusion {
    /// `stack` is the `n_d × H × W` sub-depth tensor on the input grid.
    pub fn forward(&self, f_i: &FeatureMap, f_d: &FeatureMap, stack: &FeatureMap) -> Result<FusionOutput> {
        let f_id = tensor::add(f_i, f_d)?;
        let u = self.u_head.compute(&f_id, (stack.height(), stack.width()))?;
        let u_fm = u.to_feature_map();
        let f_sd = apply_weight_map(stack, &u_fm, &self.sd_conv)?;
        let f_u = uncertainty_feature(&u_fm, &self.u_conv)?;
        let (i_a, i_l) = fuse_features(f_i, f_d, &f_sd, &f_u)?;
        Ok(FusionOutput {
            f_id,
            u,
            f_sd,
            f_u,
            i_a,
            i_l,
        })
    }

    /// Backpropagates `∂L/∂I_A` and `∂L/∂I_L` to the two encoder outputs.
    ///
    /// `F_D` collects the direct terms from both fused features plus the
    /// path through `F_ID → U`; `F_I` the direct term plus the same `U` path.
    pub fn backward(
        &self,
        stack: &FeatureMap,
        out: &FusionOutput,
        grad_a: &FeatureMap,
        grad_l: &FeatureMap,
    ) -> Result<FusionInputGrads> {
        let g = fuse_features_backward(grad_a, grad_l)?;
        let u_fm = out.u.to_feature_map();
        let via_sd = apply_weight_map_backward(stack, &u_fm, &self.sd_conv, &g.f_sd)?;
        let via_fu = uncertainty_feature_backward(&u_fm, &self.u_conv, &g.f_u)?;
        let grad_u = tensor::add(&via_sd.weights, &via_fu)?;
        let via_u = self.u_head.backward(&out.f_id, &out.u, &grad_u)?.fused;

        Ok(FusionInputGrads {
            f_i: tensor::add(&g.f_i, &via_u)?,
            f_d: tensor::add(&g.f_d, &via_u)?,
        })
    }
}

/// Everything the demo pipeline produces for one frame.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub f_i: FeatureMap,
    pub f_d: FeatureMap,
    pub partition: IntervalPartition,
    /// Stack on the padded grid.
    pub stack: SubDepthStack,
    pub fusion: FusionOutput,
}

#[derive(Clone, Debug)]
pub struct DemoPipeline {
    config: PipelineConfig,
    pub image_encoder: Encoder,
    pub depth_encoder: Encoder,
    pub bound_head: BoundHead,
    pub fusion: DecoupledFusion,
}

impl DemoPipeline {
    /// Draws every weight from a ChaCha8 stream seeded with `config.seed`.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (c, s) = (config.channels, config.stride);
        let image_encoder = Encoder::random(c, s, &mut rng)?;
        let depth_encoder = Encoder::random(c, s, &mut rng)?;
        let bound_head = BoundHead::random(c, config.feature_size(), config.n_intervals, &mut rng)?;
        let fusion = DecoupledFusion {
            u_head: UncertaintyHead::random(c, &mut rng)?,
            sd_conv: Conv2d::random(c, config.n_intervals, s, s, s, 0, &mut rng)?,
            u_conv: Conv2d::random(c, c, s, s, s, 0, &mut rng)?,
        };
        Ok(Self {
            config,
            image_encoder,
            depth_encoder,
            bound_head,
            fusion,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Replaces the uncertainty head with zeros, so `U ≡ 0.5`.
    pub fn zero_uncertainty_head(&mut self) {
        self.fusion.u_head = UncertaintyHead::zeros(self.config.channels);
    }

    /// Replaces the bound head with zeros, so the bounds are uniform.
    pub fn uniform_bound_head(&mut self) -> Result<()> {
        self.bound_head =
            BoundHead::uniform(self.config.channels, self.config.feature_size(), self.config.n_intervals)?;
        Ok(())
    }

    pub fn encode_depth(&self, depth: &DepthMap) -> Result<FeatureMap> {
        let scaled = depth.to_feature_map().map(|d| d / self.config.d_max);
        self.depth_encoder.forward(&scaled)
    }

    /// Runs the network on a padded depth map and a `1 × H × W` image.
    ///
    /// With `bounds = None` the bound head decides the partition.
    pub fn forward(
        &self,
        image: &FeatureMap,
        depth: &DepthMap,
        bounds: Option<&IntervalPartition>,
    ) -> Result<PipelineOutput> {
        let (h, w) = self.config.input_size;
        if (depth.height(), depth.width()) != (h, w) || image.shape() != (1, h, w) {
            return shape_err(format!(
                "pipeline expects 1x{h}x{w} inputs, got image {:?} and depth {}x{}",
                image.shape(),
                depth.height(),
                depth.width()
            ));
        }
        let f_i = self.image_encoder.forward(image)?;
        let f_d = self.encode_depth(depth)?;
        let partition = match bounds {
            Some(p) => p.clone(),
            None => self.bound_head.compute_bounds(&tensor::add(&f_i, &f_d)?, self.config.d_max)?,
        };
        let stack = separate(depth, &partition);
        let fusion = self.fusion.forward(&f_i, &f_d, &stack.to_feature_map())?;
        Ok(PipelineOutput {
            f_i,
            f_d,
            partition,
            stack,
            fusion,
        })
    }
}

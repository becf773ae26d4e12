//! Adaptive distance-interval separation.
//!
//! A bound head turns a fused image/depth feature into `n_d` softmax widths,
//! scaled by `D_max` and accumulated into interval bounds `0 = b_0 < b_1 < … <
//! b_{n_d}`. [`separate`] then splits a depth map into `n_d` sub-depth maps:
//! each valid pixel is copied into the single layer whose half-open interval
//! `[b_{i-1}, b_i)` contains it (depths at or beyond the last bound land in the
//! last layer) and is zero everywhere else.
//!
//! [`soft_separate`] is a smooth stand-in for the hard indicator with
//! well-defined gradients with respect to the bounds.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{self, sigmoid_scalar, Conv2d, FeatureMap, Linear};

/// Softmax probabilities below this fraction are floored so bounds stay
/// strictly increasing even when a logit gap underflows `exp`.
pub const MIN_WIDTH_FRACTION: f64 = 1e-12;

/// Tolerance on `b_{n_d} == D_max`.
pub const BOUND_SUM_TOLERANCE: f64 = 1e-9;

/// Dense metric depth with a validity mask. Invalid pixels hold depth 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map where `0.0` marks a missing measurement and any positive
    /// finite value is a valid depth.
    pub fn from_depths(height: usize, width: usize, depth: Vec<f64>) -> Result<Self> {
        let valid = depth.iter().map(|&v| v > 0.0).collect();
        Self::new(height, width, depth, valid)
    }

    pub fn new(height: usize, width: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err(format!("depth map must be at least 1x1, got {height}x{width}"));
        }
        if depth.len() != height * width || valid.len() != height * width {
            return shape_err(format!(
                "depth buffers of length {}/{} do not match {height}x{width}",
                depth.len(),
                valid.len()
            ));
        }
        for (i, (&d, &m)) in depth.iter().zip(&valid).enumerate() {
            let ok = if m { d > 0.0 && d.is_finite() } else { d == 0.0 };
            if !ok {
                return Err(Error::Parameter(format!(
                    "pixel {i}: depth {d} inconsistent with validity {m}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            depth,
            valid,
        })
    }

    pub fn invalid(height: usize, width: usize) -> Result<Self> {
        Self::from_depths(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// The map as a `1×H×W` feature (invalid pixels are 0).
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::new(1, self.height, self.width, self.depth.clone())
            .expect("depth map values are finite")
    }

    /// Zero-pads on the bottom and right up to `(height, width)`.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        if height < self.height || width < self.width {
            return shape_err(format!(
                "padding target {height}x{width} is smaller than the {}x{} depth map",
                self.height, self.width
            ));
        }
        let mut depth = vec![0.0; height * width];
        for y in 0..self.height {
            depth[y * width..y * width + self.width]
                .copy_from_slice(&self.depth[y * self.width..(y + 1) * self.width]);
        }
        Self::from_depths(height, width, depth)
    }

    /// Top-left `(height, width)` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width || height == 0 || width == 0 {
            return shape_err(format!(
                "crop {height}x{width} outside the {}x{} depth map",
                self.height, self.width
            ));
        }
        let mut depth = Vec::with_capacity(height * width);
        for y in 0..height {
            depth.extend_from_slice(&self.depth[y * self.width..y * self.width + width]);
        }
        Self::from_depths(height, width, depth)
    }
}

/// Contiguous distance intervals `[b_{i-1}, b_i)` covering `[0, D_max)`.
///
/// Bounds are stored; widths are derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalPartition {
    bounds: Vec<f64>,
    d_max: f64,
}

impl IntervalPartition {
    pub fn from_bounds(bounds: Vec<f64>, d_max: f64) -> Result<Self> {
        if !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::Parameter(format!("D_max must be positive, got {d_max}")));
        }
        if bounds.len() < 2 {
            return Err(Error::Parameter("a partition needs at least one interval".into()));
        }
        if bounds[0] != 0.0 {
            return Err(Error::Parameter(format!("first bound must be 0, got {}", bounds[0])));
        }
        if let Some(i) = bounds.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Parameter(format!(
                "bounds not strictly increasing at index {}: {} -> {}",
                i + 1,
                bounds[i],
                bounds[i + 1]
            )));
        }
        let last = *bounds.last().unwrap();
        if (last - d_max).abs() > BOUND_SUM_TOLERANCE {
            return Err(Error::Parameter(format!(
                "last bound {last} differs from D_max {d_max}"
            )));
        }
        Ok(Self { bounds, d_max })
    }

    /// Accumulates positive widths into bounds (`b_i = Σ_{j≤i} d_j`).
    pub fn from_widths(widths: &[f64], d_max: f64) -> Result<Self> {
        if let Some(w) = widths.iter().find(|&&w| !(w > 0.0)) {
            return Err(Error::Parameter(format!("interval width {w} is not positive")));
        }
        let mut bounds = Vec::with_capacity(widths.len() + 1);
        bounds.push(0.0);
        let mut acc = 0.0;
        for &w in widths {
            acc += w;
            bounds.push(acc);
        }
        Self::from_bounds(bounds, d_max)
    }

    /// `widths = softmax(logits) · D_max`.
    pub fn from_logits(logits: &[f64], d_max: f64) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Parameter("n_d must be >= 1".into()));
        }
        let widths: Vec<f64> = floored_softmax(logits).into_iter().map(|p| p * d_max).collect();
        Self::from_widths(&widths, d_max)
    }

    /// Evenly spaced bounds `b_i = i·D_max/n_d`.
    ///
    /// Computed per bound (not accumulated) so the bounds for `n_d` are an
    /// exact subset of those for `2·n_d`.
    pub fn uniform(n_intervals: usize, d_max: f64) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::Parameter("n_d must be >= 1".into()));
        }
        let bounds = (0..=n_intervals)
            .map(|i| i as f64 * d_max / n_intervals as f64)
            .collect();
        Self::from_bounds(bounds, d_max)
    }

    pub fn n_intervals(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Zero-based interval holding depth `v ≥ 0`; values past the last bound
    /// clamp into the final interval.
    pub fn interval_of(&self, v: f64) -> usize {
        let above = self.bounds[1..].partition_point(|&b| b <= v);
        above.min(self.n_intervals() - 1)
    }

    /// Chain rule through the cumulative sum: `∂L/∂d_j = Σ_{i≥j} ∂L/∂b_i`.
    pub fn bound_grad_to_widths(&self, grad_bounds: &[f64]) -> Result<Vec<f64>> {
        if grad_bounds.len() != self.bounds.len() {
            return shape_err("bound gradient length must be n_d + 1");
        }
        let n = self.n_intervals();
        let mut out = vec![0.0; n];
        let mut acc = 0.0;
        for j in (1..=n).rev() {
            acc += grad_bounds[j];
            out[j - 1] = acc;
        }
        Ok(out)
    }
}

fn floored_softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = tensor::softmax(logits);
    if p.iter().any(|&v| v < MIN_WIDTH_FRACTION) {
        for v in p.iter_mut() {
            *v = v.max(MIN_WIDTH_FRACTION);
        }
        let s: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= s;
        }
    }
    p
}

/// `1×1` conv to one channel → flatten → one FC layer to `n_d` logits.
#[derive(Clone, Debug)]
pub struct BoundHead {
    reduce: Conv2d,
    fc: Linear,
    feature_size: (usize, usize),
}

impl BoundHead {
    pub fn new(reduce: Conv2d, fc: Linear, feature_size: (usize, usize)) -> Result<Self> {
        if reduce.kernel_size() != (1, 1) || reduce.out_channels() != 1 || reduce.stride() != 1 {
            return shape_err("bound head reduce layer must be a stride-1 1x1 conv to 1 channel");
        }
        if reduce.padding() != 0 {
            return shape_err("bound head reduce layer must not pad");
        }
        if fc.in_dim() != feature_size.0 * feature_size.1 {
            return shape_err(format!(
                "fc layer takes {} inputs but the feature is {}x{}",
                fc.in_dim(),
                feature_size.0,
                feature_size.1
            ));
        }
        Ok(Self {
            reduce,
            fc,
            feature_size,
        })
    }

    /// All-zero head: every input yields uniform logits.
    pub fn uniform(channels: usize, feature_size: (usize, usize), n_intervals: usize) -> Result<Self> {
        let (h, w) = feature_size;
        Self::new(
            Conv2d::zeros(1, channels, 1, 1, 1, 0),
            Linear::new(n_intervals, h * w, vec![0.0; n_intervals * h * w], vec![0.0; n_intervals])?,
            feature_size,
        )
    }

    pub fn random<R: Rng + ?Sized>(
        channels: usize,
        feature_size: (usize, usize),
        n_intervals: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let reduce = Conv2d::random(1, channels, 1, 1, 1, 0, rng)?;
        let fc = Linear::random(n_intervals, feature_size.0 * feature_size.1, rng)?;
        Self::new(reduce, fc, feature_size)
    }

    pub fn n_intervals(&self) -> usize {
        self.fc.out_dim()
    }

    pub fn feature_size(&self) -> (usize, usize) {
        self.feature_size
    }

    pub fn reduce(&self) -> &Conv2d {
        &self.reduce
    }

    pub fn fc(&self) -> &Linear {
        &self.fc
    }

    pub fn logits(&self, fused: &FeatureMap) -> Result<Vec<f64>> {
        if (fused.height(), fused.width()) != self.feature_size {
            return shape_err(format!(
                "bound head built for {:?} features, got {}x{}",
                self.feature_size,
                fused.height(),
                fused.width()
            ));
        }
        let reduced = self.reduce.forward(fused)?;
        self.fc.forward(reduced.as_slice())
    }

    pub fn compute_bounds(&self, fused: &FeatureMap, d_max: f64) -> Result<IntervalPartition> {
        IntervalPartition::from_logits(&self.logits(fused)?, d_max)
    }
}

/// `n_d` sub-depth maps sharing one `H×W` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SubDepthStack {
    height: usize,
    width: usize,
    layers: Vec<Vec<f64>>,
    bounds: Vec<f64>,
}

impl SubDepthStack {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        &self.layers[i]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    /// Bounds of the partition this stack was separated with.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Nonzero pixel count per layer.
    pub fn occupancy(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.iter().filter(|&&v| v != 0.0).count())
            .collect()
    }

    /// Zero-based layer holding pixel `(y, x)`, if any.
    pub fn layer_at(&self, y: usize, x: usize) -> Option<usize> {
        let idx = y * self.width + x;
        self.layers.iter().position(|l| l[idx] != 0.0)
    }

    /// Stack as an `n_d × H × W` feature.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::new(
            self.layers.len(),
            self.height,
            self.width,
            self.layers.concat(),
        )
        .expect("stack values are finite")
    }

    /// Checks disjointness and interval containment, naming the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.layers.len();
        for p in 0..self.height * self.width {
            let mut owner = None;
            for (i, layer) in self.layers.iter().enumerate() {
                let v = layer[p];
                if v == 0.0 {
                    continue;
                }
                if let Some(prev) = owner {
                    return Err(Error::Contract(format!(
                        "pixel {p} is nonzero in layers {prev} and {i}"
                    )));
                }
                owner = Some(i);
                let lo = self.bounds[i];
                let inside = if i + 1 == n { v >= lo } else { v >= lo && v < self.bounds[i + 1] };
                if !inside {
                    return Err(Error::Contract(format!(
                        "pixel {p}: value {v} outside layer {i} interval"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes one KITTI-encoded 16-bit PNG per layer as `sd_01.png`, `sd_02.png`, ….
    pub fn write_pngs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let map = DepthMap::from_depths(self.height, self.width, layer.clone())?;
            let path = dir.join(format!("sd_{:02}.png", i + 1));
            std::fs::write(&path, crate::kitti_io::write_depth_png(&map)?)?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// RGB overview: each valid pixel coloured by its layer, empty pixels black.
    pub fn layer_overview_png(&self) -> Result<Vec<u8>> {
        let n = self.layers.len();
        let mut rgb = vec![0u8; 3 * self.height * self.width];
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(i) = self.layer_at(y, x) {
                    let c = layer_colour(i, n);
                    rgb[3 * (y * self.width + x)..][..3].copy_from_slice(&c);
                }
            }
        }
        crate::png_io::encode_rgb8(self.width, self.height, &rgb)
    }
}

/// Hue ramp from red (near) to blue (far).
fn layer_colour(i: usize, n: usize) -> [u8; 3] {
    let t = if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    let hue = 240.0 * t;
    let x = 1.0 - ((hue / 60.0) % 2.0 - 1.0).abs();
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        _ => (x, 0.0, 1.0),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Hard separation of `dep` into one layer per interval of `part`.
pub fn separate(dep: &DepthMap, part: &IntervalPartition) -> SubDepthStack {
    let n = part.n_intervals();
    let plane = dep.height * dep.width;
    let mut layers = vec![vec![0.0; plane]; n];
    for (p, (&v, &ok)) in dep.depth.iter().zip(&dep.valid).enumerate() {
        if ok {
            layers[part.interval_of(v)][p] = v;
        }
    }
    SubDepthStack {
        height: dep.height,
        width: dep.width,
        layers,
        bounds: part.bounds.clone(),
    }
}

/// Pixelwise sum of all layers.
pub fn reconstruct(stack: &SubDepthStack) -> DepthMap {
    let mut depth = vec![0.0; stack.height * stack.width];
    for layer in &stack.layers {
        for (d, v) in depth.iter_mut().zip(layer) {
            *d += v;
        }
    }
    DepthMap::from_depths(stack.height, stack.width, depth)
        .expect("sum of disjoint non-negative layers is a valid depth map")
}

/// Output of [`soft_separate`]: per-layer membership weights and `weight · depth`.
#[derive(Clone, Debug)]
pub struct SoftSeparation {
    pub weights: FeatureMap,
    pub values: FeatureMap,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Smooth membership `w_i(v) = σ((v − b_{i-1})/τ) − σ((v − b_i)/τ)`.
///
/// Unlike [`separate`], depths beyond the last bound fade out of the last
/// layer instead of being clamped into it. Invalid pixels get zero weight.
pub fn soft_separate(dep: &DepthMap, part: &IntervalPartition, tau: f64) -> Result<SoftSeparation> {
    check_tau(tau)?;
    let n = part.n_intervals();
    let plane = dep.height * dep.width;
    let mut weights = vec![0.0; n * plane];
    let mut values = vec![0.0; n * plane];
    for (p, (&v, &ok)) in dep.depth.iter().zip(&dep.valid).enumerate() {
        if !ok {
            continue;
        }
        let mut upper = sigmoid_scalar((v - part.bounds[0]) / tau);
        for i in 0..n {
            let lower = sigmoid_scalar((v - part.bounds[i + 1]) / tau);
            let w = upper - lower;
            weights[i * plane + p] = w;
            values[i * plane + p] = w * v;
            upper = lower;
        }
    }
    Ok(SoftSeparation {
        weights: FeatureMap::new(n, dep.height, dep.width, weights)?,
        values: FeatureMap::new(n, dep.height, dep.width, values)?,
    })
}

/// Gradient of a loss with respect to the `n_d + 1` bounds, given its
/// gradient with respect to [`SoftSeparation::values`].
pub fn soft_separate_backward(
    dep: &DepthMap,
    part: &IntervalPartition,
    tau: f64,
    grad_values: &FeatureMap,
) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let n = part.n_intervals();
    if grad_values.shape() != (n, dep.height, dep.width) {
        return shape_err(format!(
            "soft_separate grad has shape {:?}, expected {:?}",
            grad_values.shape(),
            (n, dep.height, dep.width)
        ));
    }
    let dsig = |a: f64| {
        let s = sigmoid_scalar(a);
        s * (1.0 - s)
    };
    let mut grad = vec![0.0; n + 1];
    let plane = dep.height * dep.width;
    for (p, (&v, &ok)) in dep.depth.iter().zip(&dep.valid).enumerate() {
        if !ok {
            continue;
        }
        for i in 0..n {
            let g = grad_values.as_slice()[i * plane + p] * v;
            grad[i] -= g * dsig((v - part.bounds[i]) / tau) / tau;
            grad[i + 1] += g * dsig((v - part.bounds[i + 1]) / tau) / tau;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map(h: usize, w: usize, v: &[f64]) -> DepthMap {
        DepthMap::from_depths(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn depth_map_invariants() {
        assert!(DepthMap::from_depths(1, 2, vec![-1.0, 2.0]).is_err());
        assert!(DepthMap::from_depths(1, 1, vec![f64::INFINITY]).is_err());
        assert!(DepthMap::new(1, 1, vec![3.0], vec![false]).is_err());
        assert!(DepthMap::from_depths(0, 1, vec![]).is_err());
        let m = map(1, 3, &[0.0, 1.0, 2.0]);
        assert_eq!(m.valid_count(), 2);
    }

    #[test]
    fn uniform_logits_give_even_bounds() {
        let p = IntervalPartition::from_logits(&[0.3; 8], 80.0).unwrap();
        let expected: Vec<f64> = (0..=8).map(|i| 10.0 * i as f64).collect();
        assert_eq!(p.bounds(), expected.as_slice());
    }

    #[test]
    fn single_interval() {
        let p = IntervalPartition::from_logits(&[5.0], 80.0).unwrap();
        assert_eq!(p.bounds(), &[0.0, 80.0]);
        assert_eq!(p.interval_of(0.5), 0);
        assert_eq!(p.interval_of(500.0), 0);
    }

    #[test]
    fn extreme_logits_keep_bounds_strict() {
        let p = IntervalPartition::from_logits(&[0.0, 2000.0, -2000.0, 0.0], 80.0).unwrap();
        assert!(p.widths().iter().all(|&w| w > 0.0));
        assert!((p.bounds()[4] - 80.0).abs() < BOUND_SUM_TOLERANCE);
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(IntervalPartition::from_bounds(vec![0.0, 5.0, 5.0, 10.0], 10.0).is_err());
        assert!(IntervalPartition::from_bounds(vec![1.0, 10.0], 10.0).is_err());
        assert!(IntervalPartition::from_bounds(vec![0.0, 9.0], 10.0).is_err());
        assert!(IntervalPartition::from_widths(&[1.0, 0.0], 1.0).is_err());
        assert!(IntervalPartition::uniform(0, 80.0).is_err());
        assert!(IntervalPartition::uniform(4, -1.0).is_err());
    }

    #[test]
    fn uniform_bounds_nest_when_doubling() {
        for d_max in [80.0, 70.0, 53.7] {
            let coarse = IntervalPartition::uniform(3, d_max).unwrap();
            let fine = IntervalPartition::uniform(6, d_max).unwrap();
            for (i, b) in coarse.bounds().iter().enumerate() {
                assert_eq!(*b, fine.bounds()[2 * i]);
            }
        }
    }

    #[test]
    fn head_shape_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = BoundHead::random(3, (4, 5), 8, &mut rng).unwrap();
        assert!(matches!(
            head.logits(&FeatureMap::zeros(3, 5, 4)),
            Err(Error::Shape(_))
        ));
        let part = head
            .compute_bounds(&FeatureMap::filled(3, 4, 5, 0.7), 80.0)
            .unwrap();
        assert_eq!(part.n_intervals(), 8);
        assert!(BoundHead::new(Conv2d::identity(2), Linear::identity(4), (2, 2)).is_err());
    }

    #[test]
    fn separate_constant_map() {
        let dep = map(2, 2, &[5.0; 4]);
        let part = IntervalPartition::from_bounds(vec![0.0, 10.0, 20.0], 20.0).unwrap();
        let s = separate(&dep, &part);
        assert_eq!(s.layer(0), dep.depths());
        assert_eq!(s.layer(1), &[0.0; 4]);
    }

    #[test]
    fn separate_two_by_two() {
        let dep = map(2, 2, &[1.0, 5.0, 9.0, 12.0]);
        let part = IntervalPartition::from_bounds(vec![0.0, 4.0, 8.0, 12.0], 12.0).unwrap();
        let s = separate(&dep, &part);
        assert_eq!(s.layer(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.layer(1), &[0.0, 5.0, 0.0, 0.0]);
        assert_eq!(s.layer(2), &[0.0, 0.0, 9.0, 12.0]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn boundary_values_are_half_open() {
        let dep = map(1, 3, &[4.0, 8.0, 3.999]);
        let part = IntervalPartition::from_bounds(vec![0.0, 4.0, 8.0, 12.0], 12.0).unwrap();
        let s = separate(&dep, &part);
        assert_eq!(s.layer_at(0, 0), Some(1));
        assert_eq!(s.layer_at(0, 1), Some(2));
        assert_eq!(s.layer_at(0, 2), Some(0));
    }

    #[test]
    fn far_depth_is_clamped_into_last_layer() {
        let dep = map(1, 2, &[83.0, 0.0]);
        let part = IntervalPartition::uniform(8, 80.0).unwrap();
        let s = separate(&dep, &part);
        assert_eq!(s.layer(7), &[83.0, 0.0]);
        assert_eq!(reconstruct(&s), dep);
    }

    #[test]
    fn all_invalid_reconstructs_to_zero() {
        let dep = DepthMap::invalid(3, 4).unwrap();
        let s = separate(&dep, &IntervalPartition::uniform(4, 80.0).unwrap());
        assert_eq!(s.occupancy(), vec![0; 4]);
        let r = reconstruct(&s);
        assert_eq!(r.valid_count(), 0);
        assert!(r.depths().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn soft_weights_saturate_and_telescope() {
        let dep = map(1, 2, &[15.0, 41.0]);
        let part = IntervalPartition::uniform(4, 80.0).unwrap();
        let tau = 0.05;
        let soft = soft_separate(&dep, &part, tau).unwrap();
        let w = |i: usize, p: usize| soft.weights.get(i, 0, p);
        assert!((w(0, 0) - 1.0).abs() < 1e-12);
        assert!(w(1, 0).abs() < 1e-12 && w(2, 0).abs() < 1e-12);
        for p in 0..2 {
            let v = dep.depths()[p];
            let sum: f64 = (0..4).map(|i| w(i, p)).sum();
            let telescoped = sigmoid_scalar(v / tau) - sigmoid_scalar((v - 80.0) / tau);
            assert!((sum - telescoped).abs() < 1e-12);
            assert!(sum <= 1.0);
        }
    }

    #[test]
    fn soft_rejects_bad_temperature() {
        let dep = map(1, 1, &[1.0]);
        let part = IntervalPartition::uniform(2, 10.0).unwrap();
        assert!(matches!(soft_separate(&dep, &part, 0.0), Err(Error::Parameter(_))));
        assert!(soft_separate(&dep, &part, -1.0).is_err());
    }

    #[test]
    fn width_gradient_is_suffix_sum() {
        let part = IntervalPartition::uniform(3, 9.0).unwrap();
        let g = part.bound_grad_to_widths(&[7.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(g, vec![7.0, 6.0, 4.0]);
    }

    #[test]
    fn layer_pngs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let dep = map(2, 2, &[1.0, 5.0, 9.0, 12.0]);
        let s = separate(&dep, &IntervalPartition::uniform(3, 12.0).unwrap());
        let paths = s.write_pngs(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths[0].ends_with("sd_01.png"));
        let back = crate::kitti_io::read_depth_png(&std::fs::read(&paths[2]).unwrap()).unwrap();
        assert_eq!(back.depths(), s.layer(2));
        assert!(!s.layer_overview_png().unwrap().is_empty());
    }
}

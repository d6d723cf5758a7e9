//! Inference-only feature extractor ("frozen model").
//!
//! Images are stored height-major, then width, then channel (HWC), which is
//! also the order `flatten` emits. Convolution is cross-correlation: the
//! kernel is not flipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{affine, softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "flat {n}"),
            Shape::Image {
                height,
                width,
                channels,
            } => write!(f, "image {height} {width} {channels}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }
}

/// Convolution parameters. `kernel` holds `filters` blocks, each laid out
/// `[ky][kx][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub filters: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub padding: Padding,
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn filter_len(&self) -> usize {
        self.kernel_height * self.kernel_width * self.in_channels
    }

    /// Leading padding (top, left). Trailing padding takes the remainder, as
    /// in the mainstream frameworks' `same` mode.
    fn leading_pad(&self) -> (usize, usize) {
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((self.kernel_height - 1) / 2, (self.kernel_width - 1) / 2),
        }
    }

    fn output_dims(&self, height: usize, width: usize) -> std::result::Result<(usize, usize), String> {
        match self.padding {
            Padding::Same => Ok((height, width)),
            Padding::Valid => {
                if self.kernel_height > height || self.kernel_width > width {
                    Err(format!(
                        "kernel {}x{} larger than input {height}x{width}",
                        self.kernel_height, self.kernel_width
                    ))
                } else {
                    Ok((height - self.kernel_height + 1, width - self.kernel_width + 1))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        weights: Matrix,
        bias: Vec<f32>,
    },
    Relu,
    Softmax,
    Conv2d(Conv2d),
    MaxPool2x2,
    Flatten,
    /// Identity at inference.
    Dropout {
        rate: f32,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Softmax => "softmax",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
            Layer::Dropout { .. } => "dropout",
        }
    }

    /// Symbolic shape propagation; the error string describes the mismatch.
    pub fn output_shape(&self, input: Shape) -> std::result::Result<Shape, String> {
        match (self, input) {
            (Layer::Dense { weights, bias }, Shape::Flat(n)) => {
                if weights.cols() != n {
                    Err(format!(
                        "dense expects {} inputs, previous output has {n}",
                        weights.cols()
                    ))
                } else if bias.len() != weights.rows() {
                    Err(format!("dense has {} rows but {} biases", weights.rows(), bias.len()))
                } else {
                    Ok(Shape::Flat(weights.rows()))
                }
            }
            (Layer::Dense { .. }, s @ Shape::Image { .. }) => Err(format!("dense needs a flat input, got {s}")),
            (Layer::Relu | Layer::Softmax | Layer::Dropout { .. }, s) => Ok(s),
            (Layer::Flatten, s) => Ok(Shape::Flat(s.len())),
            (
                Layer::MaxPool2x2,
                Shape::Image {
                    height,
                    width,
                    channels,
                },
            ) => {
                if height < 2 || width < 2 {
                    Err(format!("maxpool2x2 needs at least 2x2, got {height}x{width}"))
                } else {
                    Ok(Shape::Image {
                        height: height / 2,
                        width: width / 2,
                        channels,
                    })
                }
            }
            (Layer::MaxPool2x2, s) => Err(format!("maxpool2x2 needs an image input, got {s}")),
            (
                Layer::Conv2d(c),
                Shape::Image {
                    height,
                    width,
                    channels,
                },
            ) => {
                if c.kernel_height == 0 || c.kernel_width == 0 || c.filters == 0 {
                    return Err("conv2d kernel dims and filter count must be >= 1".into());
                }
                if channels != c.in_channels {
                    return Err(format!("conv2d expects {} channels, got {channels}", c.in_channels));
                }
                if c.kernel.len() != c.filters * c.filter_len() || c.bias.len() != c.filters {
                    return Err("conv2d parameter count does not match its declared dims".into());
                }
                let (h, w) = c.output_dims(height, width)?;
                Ok(Shape::Image {
                    height: h,
                    width: w,
                    channels: c.filters,
                })
            }
            (Layer::Conv2d(_), s) => Err(format!("conv2d needs an image input, got {s}")),
        }
    }

    fn apply(&self, input: &[f32], shape: Shape) -> Result<Vec<f32>> {
        Ok(match self {
            Layer::Dense { weights, bias } => affine(weights, input, bias)?,
            Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
            Layer::Softmax => softmax(input),
            Layer::Dropout { .. } | Layer::Flatten => input.to_vec(),
            Layer::MaxPool2x2 => match shape {
                Shape::Image {
                    height,
                    width,
                    channels,
                } => maxpool2x2(input, height, width, channels),
                s => return Err(Error::shape("maxpool2x2", "image", "input", s)),
            },
            Layer::Conv2d(c) => match shape {
                Shape::Image {
                    height,
                    width,
                    channels,
                } => conv2d_forward(input, height, width, channels, c)?.0,
                s => return Err(Error::shape("conv2d", "image", "input", s)),
            },
        })
    }
}

fn maxpool2x2(input: &[f32], height: usize, width: usize, channels: usize) -> Vec<f32> {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(oh * ow * channels);
    for y in 0..oh {
        for x in 0..ow {
            for c in 0..channels {
                let at = |yy: usize, xx: usize| input[(yy * width + xx) * channels + c];
                let m = at(2 * y, 2 * x)
                    .max(at(2 * y, 2 * x + 1))
                    .max(at(2 * y + 1, 2 * x))
                    .max(at(2 * y + 1, 2 * x + 1));
                out.push(m);
            }
        }
    }
    out
}

/// Cross-correlates an HWC image with `conv`'s filters. Returns the output
/// plane(s) in HWC order and their `(height, width)`.
pub fn conv2d_forward(
    input: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    conv: &Conv2d,
) -> Result<(Vec<f32>, (usize, usize))> {
    if input.len() != height * width * channels {
        return Err(Error::shape(
            "conv2d input",
            format!("{height}x{width}x{channels}"),
            "data",
            format!("len {}", input.len()),
        ));
    }
    if channels != conv.in_channels {
        return Err(Error::shape(
            "conv2d",
            format!("{} channels", conv.in_channels),
            "input",
            format!("{channels} channels"),
        ));
    }
    let (oh, ow) = conv.output_dims(height, width).map_err(|msg| {
        Error::shape(
            "kernel",
            format!("{}x{}", conv.kernel_height, conv.kernel_width),
            "input",
            msg,
        )
    })?;
    let (pad_top, pad_left) = conv.leading_pad();
    let flen = conv.filter_len();
    let mut out = vec![0.0f32; oh * ow * conv.filters];
    for y in 0..oh {
        for x in 0..ow {
            for f in 0..conv.filters {
                let filter = &conv.kernel[f * flen..(f + 1) * flen];
                let mut acc = f64::from(conv.bias[f]);
                for ky in 0..conv.kernel_height {
                    let iy = (y + ky) as isize - pad_top as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for kx in 0..conv.kernel_width {
                        let ix = (x + kx) as isize - pad_left as isize;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        let base = (iy as usize * width + ix as usize) * channels;
                        let kbase = (ky * conv.kernel_width + kx) * channels;
                        for c in 0..channels {
                            acc += f64::from(input[base + c]) * f64::from(filter[kbase + c]);
                        }
                    }
                }
                out[(y * ow + x) * conv.filters + f] = acc as f32;
            }
        }
    }
    Ok((out, (oh, ow)))
}

/// A validated, immutable chain of inference layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

impl FrozenModel {
    /// Validates the layer chain. An empty layer list is the identity
    /// extractor over a flat input.
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape);
        let mut current = input_shape;
        for (index, layer) in layers.iter().enumerate() {
            current = layer
                .output_shape(current)
                .map_err(|message| Error::LayerChain { index, message })?;
            shapes.push(current);
        }
        let last = layers.len().saturating_sub(1);
        if !matches!(current, Shape::Flat(_)) {
            return Err(Error::LayerChain {
                index: last,
                message: format!("feature output must be flat, got {current}"),
            });
        }
        if matches!(layers.last(), Some(Layer::Softmax)) {
            return Err(Error::LayerChain {
                index: last,
                message: "model ends in softmax; the classification layer must be truncated into the head".into(),
            });
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
        })
    }

    /// Identity extractor for precomputed feature vectors of length `m`.
    pub fn identity(m: usize) -> Self {
        Self::new(Shape::Flat(m), Vec::new()).expect("identity chain is always valid")
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape after each layer, starting with the input shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn feature_len(&self) -> usize {
        self.shapes.last().map_or(0, Shape::len)
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        if input.len() != self.input_shape.len() {
            return Err(Error::shape(
                "model input",
                self.input_shape,
                "sample",
                format!("len {}", input.len()),
            ));
        }
        let mut x = input.to_vec();
        for (layer, &shape) in self.layers.iter().zip(&self.shapes) {
            x = layer.apply(&x, shape)?;
        }
        Ok(x)
    }
}

/// The exported classification layer used to initialise the OL head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSeed {
    pub weights: Matrix,
    pub biases: Vec<f32>,
    pub labels: Vec<String>,
}

impl HeadSeed {
    /// All-zero head over `labels`.
    pub fn zeros(labels: Vec<String>, m: usize) -> Self {
        Self {
            weights: Matrix::zeros(labels.len(), m),
            biases: vec![0.0; labels.len()],
            labels,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.weights.rows() != n || self.biases.len() != n {
            return Err(Error::InvalidHead(format!(
                "{} labels, {} weight rows, {} biases",
                n,
                self.weights.rows(),
                self.biases.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &self.labels {
            validate_label(label)?;
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidHead(format!("duplicate label {label:?}")));
            }
        }
        if !self.weights.is_finite() || self.biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidHead("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Labels travel through whitespace-separated text formats, so they must be
/// nonempty and contain no whitespace or commas.
pub fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() || label.chars().any(|c| c.is_whitespace() || c == ',') {
        Err(Error::InvalidHead(format!(
            "label {label:?} must be nonempty without whitespace or commas"
        )))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use proptest::prelude::*;
    use rand::Rng;

    fn image(h: usize, w: usize, c: usize) -> Shape {
        Shape::Image {
            height: h,
            width: w,
            channels: c,
        }
    }

    fn conv(filters: usize, k: usize, in_c: usize, padding: Padding, kernel: Vec<f32>) -> Conv2d {
        Conv2d {
            filters,
            kernel_height: k,
            kernel_width: k,
            in_channels: in_c,
            padding,
            kernel,
            bias: vec![0.0; filters],
        }
    }

    #[test]
    fn relu_only_model() {
        let m = FrozenModel::new(Shape::Flat(2), vec![Layer::Relu]).unwrap();
        assert_eq!(m.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn maxpool_takes_window_max() {
        let m = FrozenModel::new(image(2, 2, 1), vec![Layer::MaxPool2x2, Layer::Flatten]).unwrap();
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn valid_conv_of_ones() {
        let c = conv(1, 3, 1, Padding::Valid, vec![1.0; 9]);
        let (out, dims) = conv2d_forward(&[1.0; 25], 5, 5, 1, &c).unwrap();
        assert_eq!(dims, (3, 3));
        assert_eq!(out, vec![9.0; 9]);
    }

    #[test]
    fn unit_kernel_doubles() {
        let c = conv(1, 1, 1, Padding::Valid, vec![2.0]);
        let input: Vec<f32> = (0..12).map(|v| v as f32 - 3.5).collect();
        let (out, dims) = conv2d_forward(&input, 3, 4, 1, &c).unwrap();
        assert_eq!(dims, (3, 4));
        assert_eq!(out, input.iter().map(|v| v * 2.0).collect::<Vec<_>>());
    }

    #[test]
    fn delta_kernel_same_padding_is_identity() {
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let c = conv(1, 3, 1, Padding::Same, k);
        let input: Vec<f32> = (0..20).map(|v| (v as f32).sin()).collect();
        let (out, dims) = conv2d_forward(&input, 4, 5, 1, &c).unwrap();
        assert_eq!(dims, (4, 5));
        assert_eq!(out, input);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let c = conv(1, 5, 1, Padding::Valid, vec![1.0; 25]);
        assert!(matches!(
            conv2d_forward(&[0.0; 9], 3, 3, 1, &c),
            Err(Error::Shape { .. })
        ));
    }

    /// Brute-force oracle with explicit zero padding, written without the
    /// skip-on-border logic of the implementation.
    fn naive_conv(input: &[f32], h: usize, w: usize, c: usize, conv: &Conv2d) -> Vec<f32> {
        let (pt, pl) = match conv.padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((conv.kernel_height - 1) / 2, (conv.kernel_width - 1) / 2),
        };
        let (ph, pw) = match conv.padding {
            Padding::Valid => (h, w),
            Padding::Same => (h + conv.kernel_height - 1, w + conv.kernel_width - 1),
        };
        let mut padded = vec![0.0f64; ph * pw * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    padded[((y + pt) * pw + x + pl) * c + ch] = f64::from(input[(y * w + x) * c + ch]);
                }
            }
        }
        let oh = ph - conv.kernel_height + 1;
        let ow = pw - conv.kernel_width + 1;
        let mut out = Vec::new();
        for y in 0..oh {
            for x in 0..ow {
                for f in 0..conv.filters {
                    let mut s = f64::from(conv.bias[f]);
                    for ky in 0..conv.kernel_height {
                        for kx in 0..conv.kernel_width {
                            for ch in 0..c {
                                let k = conv.kernel[f * conv.filter_len() + (ky * conv.kernel_width + kx) * c + ch];
                                s += padded[((y + ky) * pw + x + kx) * c + ch] * f64::from(k);
                            }
                        }
                    }
                    out.push(s as f32);
                }
            }
        }
        out
    }

    #[test]
    fn random_conv_matches_naive_loops() {
        let mut rng = SeededRng::new(7);
        for padding in [Padding::Valid, Padding::Same] {
            for _ in 0..20 {
                let input: Vec<f32> = (0..16 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let kernel: Vec<f32> = (0..3 * 9 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut c = conv(3, 3, 2, padding, kernel);
                c.bias = vec![0.1, -0.2, 0.3];
                let (out, _) = conv2d_forward(&input, 4, 4, 2, &c).unwrap();
                let expect = naive_conv(&input, 4, 4, 2, &c);
                assert_eq!(out.len(), expect.len());
                for (a, b) in out.iter().zip(&expect) {
                    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn dense_chain_validation_names_layer() {
        let layers = vec![
            Layer::Dense {
                weights: Matrix::zeros(4, 3),
                bias: vec![0.0; 4],
            },
            Layer::Relu,
            Layer::Dense {
                weights: Matrix::zeros(2, 5),
                bias: vec![0.0; 2],
            },
        ];
        match FrozenModel::new(Shape::Flat(3), layers) {
            Err(Error::LayerChain { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected chain error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_softmax_rejected() {
        let layers = vec![
            Layer::Dense {
                weights: Matrix::zeros(2, 3),
                bias: vec![0.0; 2],
            },
            Layer::Softmax,
        ];
        assert!(matches!(
            FrozenModel::new(Shape::Flat(3), layers),
            Err(Error::LayerChain { index: 1, .. })
        ));
    }

    #[test]
    fn dropout_is_identity_and_forward_is_deterministic() {
        let m = FrozenModel::new(Shape::Flat(3), vec![Layer::Dropout { rate: 0.25 }]).unwrap();
        let x = [0.3, -0.7, 1.5];
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a, x);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn forward_rejects_wrong_input_len() {
        let m = FrozenModel::identity(4);
        assert!(matches!(m.forward(&[1.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn dense_relu_matches_core_math_composition() {
        let mut rng = SeededRng::new(3);
        let mut rand_mat = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
        };
        let w1 = rand_mat(6, 5);
        let w2 = rand_mat(4, 6);
        let b1 = vec![0.1; 6];
        let b2 = vec![-0.05; 4];
        let model = FrozenModel::new(
            Shape::Flat(5),
            vec![
                Layer::Dense {
                    weights: w1.clone(),
                    bias: b1.clone(),
                },
                Layer::Relu,
                Layer::Dense {
                    weights: w2.clone(),
                    bias: b2.clone(),
                },
                Layer::Relu,
            ],
        )
        .unwrap();
        let x = [0.5, -0.2, 0.9, 0.0, -1.0];
        let h: Vec<f32> = affine(&w1, &x, &b1).unwrap().into_iter().map(|v| v.max(0.0)).collect();
        let expect: Vec<f32> = affine(&w2, &h, &b2).unwrap().into_iter().map(|v| v.max(0.0)).collect();
        assert_eq!(model.forward(&x).unwrap(), expect);
        assert_eq!(model.feature_len(), 4);
    }

    #[test]
    fn head_seed_rejects_duplicates() {
        let seed = HeadSeed::zeros(vec!["A".into(), "B".into(), "A".into()], 3);
        assert!(matches!(seed.validate(), Err(Error::InvalidHead(_))));
    }

    /// Layer recipe for the chain property: each entry either composes with
    /// the running shape or is deliberately broken.
    #[derive(Debug, Clone)]
    enum Step {
        Dense(usize, bool),
        Relu,
        Pool,
        Conv(usize, usize, bool),
        Flatten,
    }

    fn step() -> impl Strategy<Value = Step> {
        prop_oneof![
            (1usize..6, prop::bool::weighted(0.8)).prop_map(|(n, ok)| Step::Dense(n, ok)),
            Just(Step::Relu),
            Just(Step::Pool),
            (1usize..4, 1usize..4, prop::bool::weighted(0.8)).prop_map(|(f, k, ok)| Step::Conv(f, k, ok)),
            Just(Step::Flatten),
        ]
    }

    /// Builds the layers and an independent expectation of validity from the
    /// recipe by tracking (h, w, c) or flat length by hand.
    fn build(steps: &[Step], input: Shape) -> (Vec<Layer>, bool) {
        let mut layers = Vec::new();
        let mut ok = true;
        let mut cur = Some(input);
        for s in steps {
            let (layer, next) = match (s, cur) {
                (Step::Dense(n, good), Some(shape)) => {
                    let incoming = shape.len();
                    let cols = if *good { incoming } else { incoming + 1 };
                    let next = match shape {
                        Shape::Flat(_) if *good => Some(Shape::Flat(*n)),
                        _ => None,
                    };
                    (
                        Layer::Dense {
                            weights: Matrix::zeros(*n, cols),
                            bias: vec![0.0; *n],
                        },
                        next,
                    )
                }
                (Step::Relu, s) => (Layer::Relu, s),
                (
                    Step::Pool,
                    Some(Shape::Image {
                        height,
                        width,
                        channels,
                    }),
                ) if height >= 2 && width >= 2 => (
                    Layer::MaxPool2x2,
                    Some(Shape::Image {
                        height: height / 2,
                        width: width / 2,
                        channels,
                    }),
                ),
                (Step::Pool, _) => (Layer::MaxPool2x2, None),
                (
                    Step::Conv(f, k, good),
                    Some(Shape::Image {
                        height,
                        width,
                        channels,
                    }),
                ) => {
                    let in_c = if *good { channels } else { channels + 1 };
                    let next = if *good && *k <= height && *k <= width {
                        Some(Shape::Image {
                            height: height - k + 1,
                            width: width - k + 1,
                            channels: *f,
                        })
                    } else {
                        None
                    };
                    (
                        Layer::Conv2d(conv(*f, *k, in_c, Padding::Valid, vec![0.0; f * k * k * in_c])),
                        next,
                    )
                }
                (Step::Conv(f, k, _), _) => (
                    Layer::Conv2d(conv(*f, *k, 1, Padding::Valid, vec![0.0; f * k * k])),
                    None,
                ),
                (Step::Flatten, s) => (Layer::Flatten, s.map(|s| Shape::Flat(s.len()))),
                (Step::Dense(..), None) => unreachable!("building stops at the first invalid layer"),
            };
            layers.push(layer);
            if next.is_none() {
                ok = false;
            }
            cur = next;
            if !ok {
                break;
            }
        }
        let flat_end = matches!(cur, Some(Shape::Flat(_)));
        (layers, ok && flat_end)
    }

    proptest! {
        #[test]
        fn chain_validation_matches_symbolic_composition(
            steps in prop::collection::vec(step(), 0..6),
            h in 1usize..8, w in 1usize..8, c in 1usize..3,
        ) {
            let input = image(h, w, c);
            let (layers, expect_ok) = build(&steps, input);
            let got = FrozenModel::new(input, layers);
            prop_assert_eq!(got.is_ok(), expect_ok, "{:?}", got.err());
        }
    }
}

//! Lowering of convolution, max-pooling and flatten layers to feedforward form.
//!
//! A convolution becomes one filter per output channel whose neurons are
//! wired to exactly the kernel taps that land on in-bounds input positions;
//! zero-padded taps produce no edge at all. Same padding places the odd
//! padding unit on the high-index side.

use crate::error::{Error, Result};
use crate::model::{ActivationKind, Edge, FilterIR, LayerIR, LayerKind, NeuronIR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Malformed(format!("unknown padding `{other}`"))),
        }
    }
}

/// Memory order of a shaped activation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `index = position * channels + channel` (framework tensors, input layers).
    ChannelsLast,
    /// `index = channel * positions + position` (lowered layers, one filter per channel).
    FilterMajor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeND {
    pub dims: Vec<usize>,
    pub channels: usize,
}

impl ShapeND {
    pub fn new(dims: Vec<usize>, channels: usize) -> Self {
        Self { dims, channels }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn positions(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.positions() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, layout: Layout, position: usize, channel: usize) -> usize {
        match layout {
            Layout::ChannelsLast => position * self.channels + channel,
            Layout::FilterMajor => channel * self.positions() + position,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) || self.channels == 0 {
            return Err(Error::ShapeMismatch(format!("degenerate shape {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub kernel_dims: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Row-major `[spatial..., in_channels, out_channels]`.
    pub kernel: Vec<f64>,
    pub strides: Vec<usize>,
    pub padding: Padding,
    /// One value per output channel; empty means no bias.
    pub bias: Vec<f64>,
}

impl ConvSpec {
    pub fn rank(&self) -> usize {
        self.kernel_dims.len()
    }

    pub fn weight(&self, offset: usize, in_channel: usize, out_channel: usize) -> f64 {
        self.kernel[(offset * self.in_channels + in_channel) * self.out_channels + out_channel]
    }

    fn validate(&self) -> Result<()> {
        let rank = self.rank();
        if !(1..=3).contains(&rank) {
            return Err(Error::ShapeMismatch(format!("convolution rank {rank} not in 1..=3")));
        }
        if self.kernel_dims.contains(&0) || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::ShapeMismatch("kernel dimensions must be positive".into()));
        }
        let expected = self.kernel_dims.iter().product::<usize>() * self.in_channels * self.out_channels;
        if self.kernel.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "kernel holds {} values, shape {:?}x{}x{} needs {expected}",
                self.kernel.len(),
                self.kernel_dims,
                self.in_channels,
                self.out_channels
            )));
        }
        if !self.bias.is_empty() && self.bias.len() != self.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "bias holds {} values for {} filters",
                self.bias.len(),
                self.out_channels
            )));
        }
        check_strides(&self.strides, rank)
    }
}

fn check_strides(strides: &[usize], rank: usize) -> Result<()> {
    if strides.len() != rank {
        return Err(Error::ShapeMismatch(format!("{} strides for rank {rank}", strides.len())));
    }
    if strides.contains(&0) {
        return Err(Error::ShapeMismatch("strides must be positive".into()));
    }
    Ok(())
}

/// Spatial output shape of a sliding window; channels are carried over.
pub fn compute_output_shape(
    in_shape: &ShapeND,
    kernel_dims: &[usize],
    strides: &[usize],
    padding: Padding,
) -> Result<ShapeND> {
    in_shape.validate()?;
    let rank = in_shape.rank();
    if kernel_dims.len() != rank {
        return Err(Error::ShapeMismatch(format!(
            "kernel rank {} does not match input rank {rank}",
            kernel_dims.len()
        )));
    }
    check_strides(strides, rank)?;
    let mut dims = Vec::with_capacity(rank);
    for d in 0..rank {
        let (n, k, s) = (in_shape.dims[d], kernel_dims[d], strides[d]);
        if k == 0 {
            return Err(Error::ShapeMismatch("kernel dimensions must be positive".into()));
        }
        dims.push(match padding {
            Padding::Valid => {
                if k > n {
                    return Err(Error::ShapeMismatch(format!(
                        "valid padding with kernel {k} larger than input {n} in dimension {d}"
                    )));
                }
                (n - k) / s + 1
            }
            Padding::Same => n.div_ceil(s),
        });
    }
    Ok(ShapeND::new(dims, in_shape.channels))
}

/// Padding inserted before index 0 in every dimension.
fn leading_padding(in_shape: &ShapeND, out_shape: &ShapeND, kernel_dims: &[usize], strides: &[usize]) -> Vec<usize> {
    (0..in_shape.rank())
        .map(|d| {
            let needed = (out_shape.dims[d] - 1) * strides[d] + kernel_dims[d];
            needed.saturating_sub(in_shape.dims[d]) / 2
        })
        .collect()
}

fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for d in (0..dims.len()).rev() {
        out[d] = flat % dims[d];
        flat /= dims[d];
    }
}

/// For every output position (row-major), the in-bounds `(kernel offset,
/// input position)` pairs of its window, both flat row-major.
fn windows(
    in_shape: &ShapeND,
    out_shape: &ShapeND,
    kernel_dims: &[usize],
    strides: &[usize],
    padding: Padding,
) -> Vec<Vec<(usize, usize)>> {
    let rank = in_shape.rank();
    let pad = match padding {
        Padding::Valid => vec![0; rank],
        Padding::Same => leading_padding(in_shape, out_shape, kernel_dims, strides),
    };
    let taps: usize = kernel_dims.iter().product();
    let mut o = vec![0; rank];
    let mut q = vec![0; rank];
    (0..out_shape.positions())
        .map(|out_pos| {
            unravel(out_pos, &out_shape.dims, &mut o);
            let mut window = Vec::with_capacity(taps);
            'taps: for offset in 0..taps {
                unravel(offset, kernel_dims, &mut q);
                let mut in_pos = 0;
                for d in 0..rank {
                    let coord = (o[d] * strides[d] + q[d]) as isize - pad[d] as isize;
                    if coord < 0 || coord as usize >= in_shape.dims[d] {
                        continue 'taps;
                    }
                    in_pos = in_pos * in_shape.dims[d] + coord as usize;
                }
                window.push((offset, in_pos));
            }
            window
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub layer: LayerIR,
    pub out_shape: ShapeND,
}

/// Lower a convolution over an input of shape `in_shape` stored in `layout`.
/// The result is a dense-form layer with linear activation, laid out filter-major.
pub fn lower_conv(spec: &ConvSpec, in_shape: &ShapeND, layout: Layout) -> Result<Lowered> {
    spec.validate()?;
    if in_shape.rank() != spec.rank() || in_shape.channels != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input shape {:?}x{} does not fit a rank-{} kernel over {} channels",
            in_shape.dims,
            in_shape.channels,
            spec.rank(),
            spec.in_channels
        )));
    }
    let spatial = compute_output_shape(in_shape, &spec.kernel_dims, &spec.strides, spec.padding)?;
    let windows = windows(in_shape, &spatial, &spec.kernel_dims, &spec.strides, spec.padding);
    let filters = (0..spec.out_channels)
        .map(|f| {
            let bias = spec.bias.get(f).copied().unwrap_or(0.0);
            let neurons = windows
                .iter()
                .map(|window| {
                    let mut edges = Vec::with_capacity(window.len() * spec.in_channels);
                    for &(offset, in_pos) in window {
                        for c in 0..spec.in_channels {
                            edges.push(Edge::new(in_shape.index(layout, in_pos, c), spec.weight(offset, c, f)));
                        }
                    }
                    NeuronIR::new(edges, bias)
                })
                .collect();
            FilterIR { bias, neurons }
        })
        .collect();
    Ok(Lowered {
        layer: LayerIR {
            kind: LayerKind::DenseForm,
            activation: ActivationKind::Linear,
            filters,
            remap: Vec::new(),
        },
        out_shape: ShapeND::new(spatial.dims, spec.out_channels),
    })
}

/// Lower a max-pooling layer: per channel, unit weights, max input function.
pub fn lower_maxpool(
    pool_dims: &[usize],
    strides: &[usize],
    padding: Padding,
    in_shape: &ShapeND,
    layout: Layout,
) -> Result<Lowered> {
    if !(1..=3).contains(&pool_dims.len()) {
        return Err(Error::ShapeMismatch(format!("pooling rank {} not in 1..=3", pool_dims.len())));
    }
    let out_shape = compute_output_shape(in_shape, pool_dims, strides, padding)?;
    let windows = windows(in_shape, &out_shape, pool_dims, strides, padding);
    let filters = (0..in_shape.channels)
        .map(|c| FilterIR {
            bias: 0.0,
            neurons: windows
                .iter()
                .map(|window| {
                    let edges = window
                        .iter()
                        .map(|&(_, in_pos)| Edge::new(in_shape.index(layout, in_pos, c), 1.0))
                        .collect();
                    NeuronIR::new(edges, 0.0)
                })
                .collect(),
        })
        .collect();
    Ok(Lowered {
        layer: LayerIR {
            kind: LayerKind::MaxPoolForm,
            activation: ActivationKind::Linear,
            filters,
            remap: Vec::new(),
        },
        out_shape,
    })
}

/// Flatten to the framework's row-major, channels-last vector order.
pub fn lower_flatten(in_shape: &ShapeND, layout: Layout) -> LayerIR {
    let mut remap = Vec::with_capacity(in_shape.len());
    for p in 0..in_shape.positions() {
        for c in 0..in_shape.channels {
            remap.push(in_shape.index(layout, p, c));
        }
    }
    LayerIR {
        kind: LayerKind::FlattenRemap,
        activation: ActivationKind::Linear,
        filters: Vec::new(),
        remap,
    }
}

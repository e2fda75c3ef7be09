//! Feedforward networks: architecture description, the canonical packing of
//! weights and biases into a flat parameter vector, forward evaluation on
//! jets, and the squared-error data loss.
//!
//! Canonical parameter order (frozen; CSV and JSON outputs depend on it):
//! layers first to last, and within a layer the present weight entries in
//! row-major order followed by the bias entries. Masked-out weights are
//! absent from the vector entirely, not stored as zeros.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::{apply_activation, ActivationKind, ScalarJet2};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("widths must contain at least an input and an output layer")]
    TooFewLayers,
    #[error("layer widths must be >= 1")]
    ZeroWidth,
    #[error("mask must have one boolean matrix per weight layer")]
    MaskLayerCount,
    #[error("mask for layer {layer} has wrong shape")]
    MaskShape { layer: usize },
    #[error("matrix {layer} has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    MatrixShape {
        layer: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("bias {layer} has length {len}, expected {want}")]
    BiasShape {
        layer: usize,
        len: usize,
        want: usize,
    },
    #[error("nonzero value {value} supplied for masked-out entry ({row},{col}) of layer {layer}")]
    MaskedNonzero {
        layer: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("expected {layers} weight matrices and biases, got {got}")]
    LayerCount { layers: usize, got: usize },
    #[error("parameter vector has length {len}, expected {want}")]
    ParamLength { len: usize, want: usize },
    #[error("input has length {len}, expected {want}")]
    InputLength { len: usize, want: usize },
    #[error("dataset must be nonempty")]
    EmptyDataset,
    #[error("data pair {index} has x/y lengths {xlen}/{ylen}, expected {a}/{b}")]
    DataShape {
        index: usize,
        xlen: usize,
        ylen: usize,
        a: usize,
        b: usize,
    },
}

/// Architecture: layer widths, optional connectivity mask, activation, bias flag.
#[derive(Debug, Clone)]
pub struct FeedforwardSpec {
    widths: Vec<usize>,
    /// One row-major boolean matrix (`widths[i+1] x widths[i]`) per weight layer;
    /// `None` means fully connected.
    mask: Option<Vec<Vec<bool>>>,
    pub activation: ActivationKind,
    pub uses_bias: bool,
}

impl FeedforwardSpec {
    pub fn fully_connected(widths: Vec<usize>, activation: ActivationKind) -> Result<Self, NetError> {
        Self::new(widths, None, activation, true)
    }

    pub fn new(
        widths: Vec<usize>,
        mask: Option<Vec<Vec<bool>>>,
        activation: ActivationKind,
        uses_bias: bool,
    ) -> Result<Self, NetError> {
        if widths.len() < 2 {
            return Err(NetError::TooFewLayers);
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(NetError::ZeroWidth);
        }
        if let Some(m) = &mask {
            if m.len() != widths.len() - 1 {
                return Err(NetError::MaskLayerCount);
            }
            for (i, layer_mask) in m.iter().enumerate() {
                if layer_mask.len() != widths[i + 1] * widths[i] {
                    return Err(NetError::MaskShape { layer: i + 1 });
                }
            }
        }
        Ok(FeedforwardSpec {
            widths,
            mask,
            activation,
            uses_bias,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of weight layers (hidden count + 1).
    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn is_fully_connected(&self) -> bool {
        match &self.mask {
            None => true,
            Some(m) => m.iter().all(|layer| layer.iter().all(|&b| b)),
        }
    }

    /// Whether weight entry (row, col) of 1-based layer `layer` is present.
    pub fn edge_present(&self, layer: usize, row: usize, col: usize) -> bool {
        match &self.mask {
            None => true,
            Some(m) => m[layer - 1][row * self.widths[layer - 1] + col],
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Which network coordinate a flat parameter index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

struct LayerSpan {
    weight_offset: usize,
    /// (row, col) of present entries, canonical row-major order.
    weight_coords: Vec<(usize, usize)>,
    /// Offset of the first bias coordinate, if biases are present.
    bias_offset: Option<usize>,
}

/// Index map between flat parameter coordinates and network entries.
pub struct ParamLayout {
    widths: Vec<usize>,
    layers: Vec<LayerSpan>,
    coords: Vec<Coord>,
    d: usize,
}

impl ParamLayout {
    fn new(spec: &FeedforwardSpec) -> Self {
        let mut layers = Vec::with_capacity(spec.n_layers());
        let mut coords = Vec::new();
        let mut offset = 0usize;
        for layer in 1..=spec.n_layers() {
            let rows = spec.widths[layer];
            let cols = spec.widths[layer - 1];
            let weight_offset = offset;
            let mut weight_coords = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if spec.edge_present(layer, r, c) {
                        weight_coords.push((r, c));
                        coords.push(Coord::Weight { layer, row: r, col: c });
                    }
                }
            }
            offset += weight_coords.len();
            let bias_offset = if spec.uses_bias {
                let b = offset;
                for r in 0..rows {
                    coords.push(Coord::Bias { layer, row: r });
                }
                offset += rows;
                Some(b)
            } else {
                None
            };
            layers.push(LayerSpan {
                weight_offset,
                weight_coords,
                bias_offset,
            });
        }
        ParamLayout {
            widths: spec.widths.clone(),
            layers,
            coords,
            d: offset,
        }
    }

    /// Total parameter count.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coord(&self, index: usize) -> Coord {
        self.coords[index]
    }

    /// Flat indices of the weight entries of 1-based layer `layer`.
    pub fn weight_indices(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        let span = &self.layers[layer - 1];
        span.weight_offset..span.weight_offset + span.weight_coords.len()
    }

    /// Flat index of the weight entry (row, col) of `layer`, if present.
    pub fn weight_index(&self, layer: usize, row: usize, col: usize) -> Option<usize> {
        let span = &self.layers[layer - 1];
        span.weight_coords
            .iter()
            .position(|&(r, c)| (r, c) == (row, col))
            .map(|k| span.weight_offset + k)
    }

    /// Flat index of bias entry `row` of `layer`, if biases are present.
    pub fn bias_index(&self, layer: usize, row: usize) -> Option<usize> {
        self.layers[layer - 1].bias_offset.map(|b| b + row)
    }

    /// Flat indices of all bias entries of `layer`.
    pub fn bias_indices(&self, layer: usize) -> Vec<usize> {
        match self.layers[layer - 1].bias_offset {
            Some(b) => (b..b + self.widths[layer]).collect(),
            None => Vec::new(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}

/// Flat parameter vector in the canonical coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub alpha: DVector<f64>,
}

impl ParamVector {
    pub fn new(alpha: DVector<f64>) -> Self {
        ParamVector { alpha }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Pack weight matrices and biases into the canonical flat vector.
pub fn pack(
    matrices: &[DMatrix<f64>],
    biases: &[DVector<f64>],
    spec: &FeedforwardSpec,
) -> Result<ParamVector, NetError> {
    let layers = spec.n_layers();
    if matrices.len() != layers || (spec.uses_bias && biases.len() != layers) {
        return Err(NetError::LayerCount {
            layers,
            got: matrices.len().min(biases.len()),
        });
    }
    let layout = spec.layout();
    let mut alpha = DVector::zeros(layout.dim());
    for layer in 1..=layers {
        let m = &matrices[layer - 1];
        let (want_rows, want_cols) = (spec.widths[layer], spec.widths[layer - 1]);
        if m.nrows() != want_rows || m.ncols() != want_cols {
            return Err(NetError::MatrixShape {
                layer,
                rows: m.nrows(),
                cols: m.ncols(),
                want_rows,
                want_cols,
            });
        }
        for r in 0..want_rows {
            for c in 0..want_cols {
                match layout.weight_index(layer, r, c) {
                    Some(k) => alpha[k] = m[(r, c)],
                    None => {
                        if m[(r, c)] != 0.0 {
                            return Err(NetError::MaskedNonzero {
                                layer,
                                row: r,
                                col: c,
                                value: m[(r, c)],
                            });
                        }
                    }
                }
            }
        }
        if spec.uses_bias {
            let b = &biases[layer - 1];
            if b.len() != want_rows {
                return Err(NetError::BiasShape {
                    layer,
                    len: b.len(),
                    want: want_rows,
                });
            }
            for r in 0..want_rows {
                alpha[layout.bias_index(layer, r).unwrap()] = b[r];
            }
        }
    }
    Ok(ParamVector::new(alpha))
}

/// Inverse of [`pack`]; masked entries come back as structural zeros.
pub fn unpack(
    params: &ParamVector,
    spec: &FeedforwardSpec,
) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>), NetError> {
    let layout = spec.layout();
    if params.dim() != layout.dim() {
        return Err(NetError::ParamLength {
            len: params.dim(),
            want: layout.dim(),
        });
    }
    let mut matrices = Vec::new();
    let mut biases = Vec::new();
    for layer in 1..=spec.n_layers() {
        let rows = spec.widths[layer];
        let cols = spec.widths[layer - 1];
        let mut m = DMatrix::zeros(rows, cols);
        let span = &layout.layers[layer - 1];
        for (k, &(r, c)) in span.weight_coords.iter().enumerate() {
            m[(r, c)] = params.alpha[span.weight_offset + k];
        }
        matrices.push(m);
        if spec.uses_bias {
            let mut b = DVector::zeros(rows);
            for r in 0..rows {
                b[r] = params.alpha[layout.bias_index(layer, r).unwrap()];
            }
            biases.push(b);
        }
    }
    Ok((matrices, biases))
}

/// Forward pass on jets: alternating affine maps and componentwise activation,
/// with no activation after the final affine map.
pub fn forward(
    spec: &FeedforwardSpec,
    layout: &ParamLayout,
    params: &[ScalarJet2],
    x: &[f64],
) -> Result<Vec<ScalarJet2>, NetError> {
    if x.len() != spec.input_width() {
        return Err(NetError::InputLength {
            len: x.len(),
            want: spec.input_width(),
        });
    }
    if params.len() != layout.dim() {
        return Err(NetError::ParamLength {
            len: params.len(),
            want: layout.dim(),
        });
    }
    let d = params.first().map_or(0, ScalarJet2::dim);
    let mut act: Vec<ScalarJet2> = x.iter().map(|&v| ScalarJet2::constant(v, d)).collect();
    for layer in 1..=spec.n_layers() {
        let rows = spec.widths[layer];
        let span = &layout.layers[layer - 1];
        let mut z: Vec<ScalarJet2> = (0..rows)
            .map(|r| match span.bias_offset {
                Some(b) => params[b + r].clone(),
                None => ScalarJet2::constant(0.0, d),
            })
            .collect();
        for (k, &(r, c)) in span.weight_coords.iter().enumerate() {
            let term = &params[span.weight_offset + k] * &act[c];
            z[r] = &z[r] + &term;
        }
        if layer < spec.n_layers() {
            act = z.iter().map(|u| apply_activation(&spec.activation, u)).collect();
        } else {
            act = z;
        }
    }
    Ok(act)
}

/// Labeled data pairs with consistent input/output widths.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DataSet {
    pub fn new(pairs: Vec<(Vec<f64>, Vec<f64>)>, a: usize, b: usize) -> Result<Self, NetError> {
        if pairs.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        for (index, (x, y)) in pairs.iter().enumerate() {
            if x.len() != a || y.len() != b {
                return Err(NetError::DataShape {
                    index,
                    xlen: x.len(),
                    ylen: y.len(),
                    a,
                    b,
                });
            }
        }
        Ok(DataSet { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Componentwise mean of the targets.
    pub fn target_mean(&self) -> Vec<f64> {
        let b = self.pairs[0].1.len();
        let mut mean = vec![0.0; b];
        for (_, y) in &self.pairs {
            for (m, v) in mean.iter_mut().zip(y) {
                *m += v;
            }
        }
        let n = self.pairs.len() as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        mean
    }

    /// Componentwise sum of the targets.
    pub fn target_sum(&self) -> Vec<f64> {
        let b = self.pairs[0].1.len();
        let mut sum = vec![0.0; b];
        for (_, y) in &self.pairs {
            for (s, v) in sum.iter_mut().zip(y) {
                *s += v;
            }
        }
        sum
    }

    /// Sum of squared target norms, the natural magnitude scale of the loss.
    pub fn target_norm_sq(&self) -> f64 {
        self.pairs
            .iter()
            .map(|(_, y)| y.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Pointwise loss applied to the residual f(x) - y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Sum of squared residual components; no 1/n and no 1/2 factor.
    L2,
}

/// Data loss: sum over the dataset of the pointwise loss of the residual.
pub fn loss(
    spec: &FeedforwardSpec,
    layout: &ParamLayout,
    data: &DataSet,
    kind: LossKind,
    params: &[ScalarJet2],
) -> Result<ScalarJet2, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let d = params.first().map_or(0, ScalarJet2::dim);
    let mut total = ScalarJet2::constant(0.0, d);
    for (x, y) in &data.pairs {
        let out = forward(spec, layout, params, x)?;
        match kind {
            LossKind::L2 => {
                for (f_c, &y_c) in out.iter().zip(y) {
                    let r = f_c.shift(-y_c);
                    total = &total + &r.square();
                }
            }
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// JSON schema for (network, dataset) documents. Parsing is strict: unknown
// fields are rejected.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSpec {
    Identity,
    Tanh,
    Sigmoid,
    Softplus,
    SquarePlusOne,
    Polynomial(Vec<f64>),
}

impl From<ActivationSpec> for ActivationKind {
    fn from(a: ActivationSpec) -> ActivationKind {
        match a {
            ActivationSpec::Identity => ActivationKind::Identity,
            ActivationSpec::Tanh => ActivationKind::Tanh,
            ActivationSpec::Sigmoid => ActivationKind::Sigmoid,
            ActivationSpec::Softplus => ActivationKind::Softplus,
            ActivationSpec::SquarePlusOne => ActivationKind::SquarePlusOne,
            ActivationSpec::Polynomial(c) => ActivationKind::Polynomial(c),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPairFile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// On-disk form of a (network, dataset) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub widths: Vec<usize>,
    pub activation: ActivationSpec,
    /// Nested [layer][row][col] booleans; omitted means fully connected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<Vec<bool>>>>,
    #[serde(default = "default_true")]
    pub uses_bias: bool,
    pub data: Vec<DataPairFile>,
}

fn default_true() -> bool {
    true
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn build(self) -> Result<(FeedforwardSpec, DataSet), NetError> {
        let mask = self.mask.map(|layers| {
            layers
                .into_iter()
                .map(|rows| rows.into_iter().flatten().collect())
                .collect()
        });
        let spec = FeedforwardSpec::new(
            self.widths,
            mask,
            self.activation.into(),
            self.uses_bias,
        )?;
        let a = spec.input_width();
        let b = spec.output_width();
        let pairs = self.data.into_iter().map(|p| (p.x, p.y)).collect();
        let data = DataSet::new(pairs, a, b)?;
        Ok((spec, data))
    }
}

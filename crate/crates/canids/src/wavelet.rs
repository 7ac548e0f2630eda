//! Multi-level discrete wavelet transform of the window signals, per-band
//! min-max scaling, zero padding to a uniform coefficient length, and the
//! sliding model-input assembly consumed by the CNN.
//!
//! The decomposition is the standard convolve-and-downsample pyramid with
//! half-sample symmetric boundary extension. Coefficient counts per level
//! follow `len' = floor((len + taps - 1) / 2)`, so a length-100 window under
//! db8 yields bands of 57, 36, 25, 20, 17, 16 and then 15 coefficients.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::segment::{FeatureWindow, Label};

/// Decomposition depth used throughout the pipeline.
pub const DEFAULT_LEVELS: usize = 10;
/// Model inputs stack this many consecutive window tensors.
pub const DEFAULT_STACK: usize = 10;

/// Daubechies-8 scaling coefficients, h_0..h_15. Computed by spectral
/// factorization in 60-digit arithmetic and rounded to f64; the sums
/// sum(h) = sqrt(2), sum(h^2) = 1 and the double-shift orthogonality
/// relations hold to f64 precision.
const DB8_LOWPASS: [f64; 16] = [
    0.05441584224310401,
    0.31287159091429995,
    0.6756307362972898,
    0.5853546836542067,
    -0.015829105256349306,
    -0.2840155429615469,
    0.0004724845739132828,
    0.12874742662047847,
    -0.017369301001807547,
    -0.044088253930794755,
    0.013981027917398282,
    0.008746094047405777,
    -0.004870352993451574,
    -0.00039174037337694705,
    0.0006754494064505693,
    -0.00011747678412476953,
];

/// Analysis filter pair: the scaling lowpass h and its quadrature mirror g.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub name: String,
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFilter {
    pub fn db8() -> Self {
        Self::from_lowpass("db8", DB8_LOWPASS.to_vec())
    }

    pub fn haar() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_lowpass("haar", vec![s, s])
    }

    /// Build the filter pair from scaling coefficients; g is the quadrature
    /// mirror g[j] = (-1)^j h[taps-1-j].
    pub fn from_lowpass(name: &str, lowpass: Vec<f64>) -> Self {
        let taps = lowpass.len();
        let highpass = (0..taps)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[taps - 1 - j]
            })
            .collect();
        WaveletFilter {
            name: name.to_string(),
            lowpass,
            highpass,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "db8" => Ok(Self::db8()),
            "haar" | "db1" => Ok(Self::haar()),
            other => Err(Error::invalid(format!("unsupported wavelet `{other}`"))),
        }
    }

    pub fn taps(&self) -> usize {
        self.lowpass.len()
    }
}

/// Boundary handling for the pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Half-sample reflection (..., x1, x0 | x0, x1, ...).
    Symmetric,
    /// Circular wrap with energy-preserving half-length bands.
    Periodization,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" | "sym" => Ok(BoundaryMode::Symmetric),
            "periodization" | "per" => Ok(BoundaryMode::Periodization),
            other => Err(Error::invalid(format!("unsupported boundary mode `{other}`"))),
        }
    }
}

fn fold_symmetric(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn fold_periodic(i: i64, n: i64) -> usize {
    (((i % n) + n) % n) as usize
}

/// One analysis step: correlate the boundary-extended signal with (h, g) and
/// keep every second output. Returns (approximation, detail).
pub fn dwt_step(
    signal: &[f64],
    filter: &WaveletFilter,
    mode: BoundaryMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.is_empty() {
        return Err(Error::invalid("dwt_step on an empty signal"));
    }
    let taps = filter.taps() as i64;
    match mode {
        BoundaryMode::Symmetric => {
            let n = signal.len() as i64;
            let m = ((signal.len() + filter.taps() - 1) / 2) as i64;
            let mut approx = vec![0.0; m as usize];
            let mut detail = vec![0.0; m as usize];
            for i in 0..m {
                let base = 2 * i + 2 - taps;
                let mut a = 0.0;
                let mut d = 0.0;
                for j in 0..taps {
                    let v = signal[fold_symmetric(base + j, n)];
                    a += filter.lowpass[j as usize] * v;
                    d += filter.highpass[j as usize] * v;
                }
                approx[i as usize] = a;
                detail[i as usize] = d;
            }
            Ok((approx, detail))
        }
        BoundaryMode::Periodization => {
            // odd lengths are extended by repeating the edge sample
            let mut padded;
            let x = if signal.len() % 2 == 0 {
                signal
            } else {
                padded = signal.to_vec();
                padded.push(*signal.last().unwrap());
                &padded[..]
            };
            let n = x.len() as i64;
            let m = (x.len() / 2) as i64;
            let mut approx = vec![0.0; m as usize];
            let mut detail = vec![0.0; m as usize];
            for i in 0..m {
                let base = 2 * i + 2 - taps;
                let mut a = 0.0;
                let mut d = 0.0;
                for j in 0..taps {
                    let v = x[fold_periodic(base + j, n)];
                    a += filter.lowpass[j as usize] * v;
                    d += filter.highpass[j as usize] * v;
                }
                approx[i as usize] = a;
                detail[i as usize] = d;
            }
            Ok((approx, detail))
        }
    }
}

/// One synthesis step. `out_len` selects how much of the reconstruction to
/// keep: `2 m - taps + 2` recovers the full signal for symmetric mode.
pub fn idwt_step(
    approx: &[f64],
    detail: &[f64],
    filter: &WaveletFilter,
    mode: BoundaryMode,
    out_len: usize,
) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::Shape(format!(
            "idwt_step band lengths differ: {} vs {}",
            approx.len(),
            detail.len()
        )));
    }
    if approx.is_empty() {
        return Err(Error::invalid("idwt_step on empty bands"));
    }
    let taps = filter.taps() as i64;
    let m = approx.len() as i64;
    let mut out = vec![0.0; out_len];
    match mode {
        BoundaryMode::Symmetric => {
            for i in 0..m {
                let base = 2 * i + 2 - taps;
                for j in 0..taps {
                    let t = base + j;
                    if t >= 0 && (t as usize) < out_len {
                        out[t as usize] += approx[i as usize] * filter.lowpass[j as usize]
                            + detail[i as usize] * filter.highpass[j as usize];
                    }
                }
            }
        }
        BoundaryMode::Periodization => {
            let n = out_len as i64;
            for i in 0..m {
                let base = 2 * i + 2 - taps;
                for j in 0..taps {
                    let t = fold_periodic(base + j, n);
                    out[t] += approx[i as usize] * filter.lowpass[j as usize]
                        + detail[i as usize] * filter.highpass[j as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Full multi-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    /// Level-J approximation.
    pub approximation: Vec<f64>,
    /// Detail bands, coarsest (level J) first.
    pub details: Vec<Vec<f64>>,
    pub levels: usize,
    pub input_len: usize,
}

impl WaveletBands {
    /// Band order used everywhere: [A_J, D_J, ..., D_1].
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        std::iter::once(self.approximation.as_slice())
            .chain(self.details.iter().map(|d| d.as_slice()))
    }

    pub fn band_lengths(&self) -> Vec<usize> {
        self.bands().map(|b| b.len()).collect()
    }

    pub fn num_bands(&self) -> usize {
        self.levels + 1
    }
}

/// Deepest level at which the filter still fits the signal.
pub fn max_meaningful_level(signal_len: usize, taps: usize) -> usize {
    if signal_len < taps {
        return 0;
    }
    ((signal_len as f64) / (taps as f64 - 1.0)).log2().floor() as usize
}

/// Iterated analysis pyramid. Levels beyond the meaningful maximum are
/// allowed (deep decompositions of length-100 windows are part of the
/// pipeline contract) but warned about once per process.
pub fn wavedec(
    signal: &[f64],
    filter: &WaveletFilter,
    mode: BoundaryMode,
    levels: usize,
) -> Result<WaveletBands> {
    if levels < 1 {
        return Err(Error::invalid("wavedec needs at least 1 level"));
    }
    if signal.is_empty() {
        return Err(Error::invalid("wavedec on an empty signal"));
    }
    let meaningful = max_meaningful_level(signal.len(), filter.taps());
    if levels > meaningful {
        static WARNED: std::sync::Once = std::sync::Once::new();
        WARNED.call_once(|| {
            log::warn!(
                "decomposition level {levels} exceeds the meaningful maximum {meaningful} \
                 for signal length {}; proceeding (boundary effects dominate deep bands)",
                signal.len()
            );
        });
    }
    let mut approx = signal.to_vec();
    let mut details_fine_first = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx, filter, mode)?;
        details_fine_first.push(d);
        approx = a;
    }
    details_fine_first.reverse();
    Ok(WaveletBands {
        approximation: approx,
        details: details_fine_first,
        levels,
        input_len: signal.len(),
    })
}

/// Inverse pyramid; truncates each stage to the next band's length and the
/// final stage to the recorded input length.
pub fn waverec(bands: &WaveletBands, filter: &WaveletFilter, mode: BoundaryMode) -> Result<Vec<f64>> {
    let taps = filter.taps();
    let mut a = bands.approximation.clone();
    for (k, d) in bands.details.iter().enumerate() {
        if a.len() > d.len() {
            a.truncate(d.len());
        } else if a.len() < d.len() {
            return Err(Error::Shape(format!(
                "approximation band shorter than detail at stage {k}: {} < {}",
                a.len(),
                d.len()
            )));
        }
        let out_len = match mode {
            BoundaryMode::Symmetric => 2 * a.len() + 2 - taps,
            BoundaryMode::Periodization => 2 * a.len(),
        };
        a = idwt_step(&a, d, filter, mode, out_len)?;
    }
    a.truncate(bands.input_len);
    Ok(a)
}

/// Per-band (min, max) used by the scaler; degenerate bands record min = max.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandScaling {
    pub min: f64,
    pub max: f64,
}

/// Map each band independently onto [0, 1] by its own minimum and maximum.
/// A degenerate band (max == min) maps to all zeros.
pub fn scale_minmax(bands: &WaveletBands) -> (WaveletBands, Vec<BandScaling>) {
    let mut scalings = Vec::with_capacity(bands.num_bands());
    let mut scale_band = |band: &[f64]| -> Vec<f64> {
        let min = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scalings.push(BandScaling { min, max });
        if max > min {
            band.iter().map(|v| (v - min) / (max - min)).collect()
        } else {
            vec![0.0; band.len()]
        }
    };
    let approximation = scale_band(&bands.approximation);
    let details = bands.details.iter().map(|d| scale_band(d)).collect();
    (
        WaveletBands {
            approximation,
            details,
            levels: bands.levels,
            input_len: bands.input_len,
        },
        scalings,
    )
}

/// Per-window, per-channel stack of scaled and zero-padded bands.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletTensor {
    /// Shape (channels, J+1, pad_len); rows ordered [A_J, D_J, ..., D_1],
    /// each right-padded with zeros to the longest band.
    pub data: Array3<f64>,
    pub band_lengths: Vec<usize>,
    /// Per channel, per band.
    pub scaling: Vec<Vec<BandScaling>>,
}

impl WaveletTensor {
    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn num_bands(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn pad_len(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Right-pad every scaled band with zeros to the longest band's length and
/// stack the channels.
pub fn pad_and_stack(channels: &[(WaveletBands, Vec<BandScaling>)]) -> Result<WaveletTensor> {
    if channels.is_empty() {
        return Err(Error::invalid("pad_and_stack needs at least one channel"));
    }
    let lengths = channels[0].0.band_lengths();
    for (bands, _) in channels.iter().skip(1) {
        if bands.band_lengths() != lengths {
            return Err(Error::Shape(
                "channels decomposed with mismatched band structure".into(),
            ));
        }
    }
    let pad_len = *lengths.iter().max().unwrap();
    let num_bands = lengths.len();
    let mut data = Array3::zeros((channels.len(), num_bands, pad_len));
    for (c, (bands, _)) in channels.iter().enumerate() {
        for (b, band) in bands.bands().enumerate() {
            for (k, &v) in band.iter().enumerate() {
                data[[c, b, k]] = v;
            }
        }
    }
    Ok(WaveletTensor {
        data,
        band_lengths: lengths,
        scaling: channels.iter().map(|(_, s)| s.clone()).collect(),
    })
}

/// Transform parameters recorded alongside every tensor archive.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TransformParams {
    pub wavelet: String,
    pub mode: String,
    pub levels: usize,
    /// Model inputs stack this many consecutive tensors.
    pub stack: usize,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams {
            wavelet: "db8".into(),
            mode: "symmetric".into(),
            levels: DEFAULT_LEVELS,
            stack: DEFAULT_STACK,
        }
    }
}

/// The transform stage output: one tensor per feature window plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDataset {
    pub tensors: Vec<WaveletTensor>,
    pub labels: Vec<Label>,
    pub window_indices: Vec<usize>,
    pub params: TransformParams,
}

impl TensorDataset {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// Decompose, scale and pad both channels of every window.
pub fn transform_windows(windows: &[FeatureWindow], params: &TransformParams) -> Result<TensorDataset> {
    let filter = WaveletFilter::from_name(&params.wavelet)?;
    let mode: BoundaryMode = params.mode.parse()?;
    let mut tensors = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    let mut window_indices = Vec::with_capacity(windows.len());
    for w in windows {
        let counts = wavedec(&w.counts, &filter, mode, params.levels)?;
        let gaps = wavedec(&w.gaps, &filter, mode, params.levels)?;
        let tensor = pad_and_stack(&[scale_minmax(&counts), scale_minmax(&gaps)])?;
        tensors.push(tensor);
        labels.push(w.label);
        window_indices.push(w.window_index);
    }
    Ok(TensorDataset {
        tensors,
        labels,
        window_indices,
        params: params.clone(),
    })
}

/// One CNN input: `stack` consecutive window tensors flattened into input
/// planes, labeled by the final window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// Shape (stack * channels, J+1, pad_len).
    pub planes: Array3<f64>,
    pub label: Label,
    /// Window index of the final (labeling) window.
    pub window_index: usize,
}

/// Stride-1 sliding sequences of `stack` consecutive tensors, each labeled
/// by its last window. Fewer tensors than `stack` yields an empty output
/// with a warning.
pub fn assemble_inputs(dataset: &TensorDataset, stack: usize) -> Result<Vec<ModelInput>> {
    if stack == 0 {
        return Err(Error::invalid("stack must be >= 1"));
    }
    if dataset.len() < stack {
        log::warn!(
            "only {} tensors for stack {stack}; no model inputs produced",
            dataset.len()
        );
        return Ok(Vec::new());
    }
    let channels = dataset.tensors[0].channels();
    let bands = dataset.tensors[0].num_bands();
    let pad = dataset.tensors[0].pad_len();
    let mut out = Vec::with_capacity(dataset.len() - stack + 1);
    for start in 0..=dataset.len() - stack {
        let mut planes = Array3::zeros((stack * channels, bands, pad));
        for (s, tensor) in dataset.tensors[start..start + stack].iter().enumerate() {
            if tensor.channels() != channels || tensor.num_bands() != bands || tensor.pad_len() != pad
            {
                return Err(Error::Shape("tensors in a stack differ in shape".into()));
            }
            for c in 0..channels {
                for b in 0..bands {
                    for k in 0..pad {
                        planes[[s * channels + c, b, k]] = tensor.data[[c, b, k]];
                    }
                }
            }
        }
        let end = start + stack - 1;
        out.push(ModelInput {
            planes,
            label: dataset.labels[end],
            window_index: dataset.window_indices[end],
        });
    }
    Ok(out)
}

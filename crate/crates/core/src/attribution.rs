//! Perturbation-based role vectors for hidden units.
//!
//! For hidden unit `k`, the input effect of dimension `i` is the RMS change of
//! the unit's activation when input column `i` is replaced by its mean over the
//! dataset. The output effect on dimension `j` is the RMS change of network
//! output `j` when the unit's activation is replaced by its own mean. Both
//! blocks are min-max scaled globally and concatenated into the rows of `V`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::lnn::{Dataset, NetworkParams};
use crate::matrix::{exact_mean, Mat};

pub const FEATURES_SCHEMA_VERSION: u32 = 1;

/// Position of a hidden unit: `layer` counts from 0 at the input layer, so the
/// first hidden layer is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HiddenUnit {
    pub layer: usize,
    pub unit: usize,
}

/// Row order of `V`: hidden layers in order, units in order within each layer.
pub fn hidden_units(params: &NetworkParams) -> Vec<HiddenUnit> {
    params
        .hidden_sizes()
        .iter()
        .enumerate()
        .flat_map(|(h, &size)| (0..size).map(move |unit| HiddenUnit { layer: h + 1, unit }))
        .collect()
}

/// Row of `V` for a hidden unit, the inverse of [`hidden_units`].
pub fn row_of(params: &NetworkParams, unit: HiddenUnit) -> Option<usize> {
    let hidden = params.hidden_sizes();
    if unit.layer == 0 || unit.layer > hidden.len() || unit.unit >= hidden[unit.layer - 1] {
        return None;
    }
    Some(hidden[..unit.layer - 1].iter().sum::<usize>() + unit.unit)
}

/// Min and max of a raw effect block before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockScale {
    pub min: f64,
    pub max: f64,
    /// The block was constant and has been mapped to zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub v: Mat,
    pub input_width: usize,
    pub unit_index: Vec<HiddenUnit>,
    pub raw_in: Mat,
    pub raw_out: Mat,
    pub in_scale: BlockScale,
    pub out_scale: BlockScale,
}

impl FeatureMatrix {
    pub fn unit_count(&self) -> usize {
        self.v.rows()
    }

    pub fn output_width(&self) -> usize {
        self.v.cols() - self.input_width
    }

    /// CSV with header `unit,layer,in_0..,out_0..`; values use the shortest
    /// decimal that parses back to the same `f64`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["unit".to_string(), "layer".to_string()];
        header.extend((0..self.input_width).map(|i| format!("in_{i}")));
        header.extend((0..self.output_width()).map(|j| format!("out_{j}")));
        w.write_record(&header)?;
        for (k, u) in self.unit_index.iter().enumerate() {
            let mut rec = vec![u.unit.to_string(), u.layer.to_string()];
            rec.extend(self.v.row(k).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| NtdError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn sidecar(&self) -> FeatureSidecar {
        FeatureSidecar {
            schema_version: FEATURES_SCHEMA_VERSION,
            input_width: self.input_width,
            output_width: self.output_width(),
            hidden_units: self.unit_count(),
            in_scale: self.in_scale,
            out_scale: self.out_scale,
            raw_in: self.raw_in.iter_rows().map(<[f64]>::to_vec).collect(),
            raw_out: self.raw_out.iter_rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn from_csv(csv_text: &str, sidecar: &FeatureSidecar) -> Result<Self> {
        if sidecar.schema_version != FEATURES_SCHEMA_VERSION {
            return Err(NtdError::Parse(format!(
                "unsupported feature schema_version {}",
                sidecar.schema_version
            )));
        }
        let width = sidecar.input_width + sidecar.output_width;
        let mut r = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.len() != width + 2 || &headers[0] != "unit" || &headers[1] != "layer" {
            return Err(NtdError::Parse(
                "feature CSV header does not match sidecar".into(),
            ));
        }
        let mut unit_index = Vec::new();
        let mut data = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| NtdError::Parse(format!("bad index {s:?}: {e}")))
            };
            unit_index.push(HiddenUnit {
                unit: parse_usize(&rec[0])?,
                layer: parse_usize(&rec[1])?,
            });
            for field in rec.iter().skip(2) {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| NtdError::Parse(format!("bad value {field:?}: {e}")))?,
                );
            }
        }
        let rows = unit_index.len();
        if rows != sidecar.hidden_units {
            return Err(NtdError::Parse(format!(
                "feature CSV has {rows} rows, sidecar says {}",
                sidecar.hidden_units
            )));
        }
        Ok(Self {
            v: Mat::from_vec(rows, width, data)?,
            input_width: sidecar.input_width,
            unit_index,
            raw_in: Mat::from_rows(&sidecar.raw_in)?,
            raw_out: Mat::from_rows(&sidecar.raw_out)?,
            in_scale: sidecar.in_scale,
            out_scale: sidecar.out_scale,
        })
    }
}

/// JSON companion of the feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub schema_version: u32,
    pub input_width: usize,
    pub output_width: usize,
    pub hidden_units: usize,
    pub in_scale: BlockScale,
    pub out_scale: BlockScale,
    pub raw_in: Vec<Vec<f64>>,
    pub raw_out: Vec<Vec<f64>>,
}

/// Clean activations of every sample, cached once and shared by all effect computations.
pub struct EffectContext<'a> {
    params: &'a NetworkParams,
    data: &'a Dataset,
    // traces[n][layer]
    traces: Vec<Vec<Vec<f64>>>,
    units: Vec<HiddenUnit>,
}

impl<'a> EffectContext<'a> {
    pub fn new(params: &'a NetworkParams, data: &'a Dataset) -> Result<Self> {
        if data.input_dim() != params.input_dim() || data.output_dim() != params.output_dim() {
            return Err(NtdError::shape(
                "attribution",
                (data.input_dim(), data.output_dim()),
                (params.input_dim(), params.output_dim()),
            ));
        }
        let traces = (0..data.len())
            .into_par_iter()
            .map(|n| params.forward(data.x.row(n)).map(|t| t.layers))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            data,
            traces,
            units: hidden_units(params),
        })
    }

    pub fn units(&self) -> &[HiddenUnit] {
        &self.units
    }

    fn samples(&self) -> usize {
        self.traces.len()
    }

    /// Effect of input dimension `i` on every hidden unit, in row order.
    pub fn input_effects(&self, i: usize) -> Result<Vec<f64>> {
        let params = self.params;
        if i >= params.input_dim() {
            return Err(NtdError::Invalid(format!(
                "input dimension {i} out of range"
            )));
        }
        let mean = exact_mean(self.traces.iter().map(|t| t[0][i]));
        let hidden = params.hidden_sizes();
        let mut acc = vec![0.0; hidden.iter().sum()];
        let mut layers: Vec<Vec<f64>> = params.layer_sizes[..params.depth() - 1]
            .iter()
            .map(|&n| vec![0.0; n])
            .collect();
        for trace in &self.traces {
            layers[0].copy_from_slice(&trace[0]);
            layers[0][i] = mean;
            let mut offset = 0;
            for d in 0..hidden.len() {
                let (done, rest) = layers.split_at_mut(d + 1);
                params.apply_layer(d, &done[d], &mut rest[0]);
                for (u, (&z, &o)) in rest[0].iter().zip(&trace[d + 1]).enumerate() {
                    acc[offset + u] += (o - z) * (o - z);
                }
                offset += hidden[d];
            }
        }
        let n = self.samples() as f64;
        Ok(acc.into_iter().map(|s| (s / n).sqrt()).collect())
    }

    /// Effect of hidden unit `k` (row order) on every output dimension.
    pub fn output_effects(&self, k: usize) -> Result<Vec<f64>> {
        let unit = *self
            .units
            .get(k)
            .ok_or_else(|| NtdError::Invalid(format!("hidden unit {k} out of range")))?;
        let params = self.params;
        let last = params.depth() - 1;
        let mean = exact_mean(self.traces.iter().map(|t| t[unit.layer][unit.unit]));
        let mut acc = vec![0.0; params.output_dim()];
        let mut layers: Vec<Vec<f64>> = params.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        for trace in &self.traces {
            layers[unit.layer].copy_from_slice(&trace[unit.layer]);
            layers[unit.layer][unit.unit] = mean;
            for d in unit.layer..last {
                let (done, rest) = layers.split_at_mut(d + 1);
                params.apply_layer(d, &done[d], &mut rest[0]);
            }
            for (a, (&z, &y)) in acc.iter_mut().zip(layers[last].iter().zip(&trace[last])) {
                *a += (y - z) * (y - z);
            }
        }
        let n = self.samples() as f64;
        Ok(acc.into_iter().map(|s| (s / n).sqrt()).collect())
    }

    /// Raw `(v_in, v_out)` blocks, computed in parallel and assembled by index.
    pub fn raw_blocks(&self) -> Result<(Mat, Mat)> {
        let k0 = self.units.len();
        let i0 = self.params.input_dim();
        let j0 = self.params.output_dim();
        let by_input = (0..i0)
            .into_par_iter()
            .map(|i| self.input_effects(i))
            .collect::<Result<Vec<_>>>()?;
        let by_unit = (0..k0)
            .into_par_iter()
            .map(|k| self.output_effects(k))
            .collect::<Result<Vec<_>>>()?;
        let raw_in = Mat::from_fn(k0, i0, |k, i| by_input[i][k]);
        let raw_out = Mat::from_fn(k0, j0, |k, j| by_unit[k][j]);
        Ok((raw_in, raw_out))
    }

    pub fn dataset(&self) -> &Dataset {
        self.data
    }
}

pub fn input_effect(params: &NetworkParams, data: &Dataset, k: usize, i: usize) -> Result<f64> {
    let ctx = EffectContext::new(params, data)?;
    if k >= ctx.units.len() {
        return Err(NtdError::Invalid(format!("hidden unit {k} out of range")));
    }
    Ok(ctx.input_effects(i)?[k])
}

pub fn output_effect(params: &NetworkParams, data: &Dataset, k: usize, j: usize) -> Result<f64> {
    if j >= params.output_dim() {
        return Err(NtdError::Invalid(format!(
            "output dimension {j} out of range"
        )));
    }
    Ok(EffectContext::new(params, data)?.output_effects(k)?[j])
}

/// Affine min-max scaling of a whole block onto [0, 1]. A constant block maps
/// to all zeros and is flagged degenerate.
pub fn normalize_block(raw: &Mat) -> (Mat, BlockScale) {
    let (min, max) = raw.min_max().unwrap_or((0.0, 0.0));
    if max > min {
        let range = max - min;
        (
            raw.map(|v| (v - min) / range),
            BlockScale {
                min,
                max,
                degenerate: false,
            },
        )
    } else {
        (
            Mat::zeros(raw.rows(), raw.cols()),
            BlockScale {
                min,
                max,
                degenerate: true,
            },
        )
    }
}

pub fn build_feature_matrix(params: &NetworkParams, data: &Dataset) -> Result<FeatureMatrix> {
    let ctx = EffectContext::new(params, data)?;
    let (raw_in, raw_out) = ctx.raw_blocks()?;
    assemble(raw_in, raw_out, ctx.units.clone())
}

/// Normalizes the raw blocks and concatenates them into `V`.
pub fn assemble(raw_in: Mat, raw_out: Mat, unit_index: Vec<HiddenUnit>) -> Result<FeatureMatrix> {
    if raw_in.rows() != raw_out.rows() || raw_in.rows() != unit_index.len() {
        return Err(NtdError::shape("assemble", raw_in.shape(), raw_out.shape()));
    }
    for (k, u) in unit_index.iter().enumerate() {
        if raw_in
            .row(k)
            .iter()
            .chain(raw_out.row(k))
            .any(|v| !v.is_finite())
        {
            return Err(NtdError::Numeric {
                iteration: 0,
                what: format!(
                    "feature row {k} (layer {}, unit {}) is non-finite",
                    u.layer, u.unit
                ),
            });
        }
    }
    let (norm_in, in_scale) = normalize_block(&raw_in);
    let (norm_out, out_scale) = normalize_block(&raw_out);
    if in_scale.degenerate {
        log::warn!("input-effect block is constant; mapped to zero (degenerate network)");
    }
    if out_scale.degenerate {
        log::warn!("output-effect block is constant; mapped to zero (degenerate network)");
    }
    let i0 = raw_in.cols();
    let v = Mat::from_fn(raw_in.rows(), i0 + raw_out.cols(), |k, l| {
        if l < i0 {
            norm_in[(k, l)]
        } else {
            norm_out[(k, l - i0)]
        }
    });
    Ok(FeatureMatrix {
        v,
        input_width: i0,
        unit_index,
        raw_in,
        raw_out,
        in_scale,
        out_scale,
    })
}

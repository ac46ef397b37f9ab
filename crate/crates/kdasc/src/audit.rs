//! Parameter, byte, and MAC accounting for model specs, with the 128 KB /
//! 30 M budget verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::nn::LayerSpec;

pub const BYTES_PER_PARAM: usize = 4;
pub const BUDGET_BYTES: usize = 131_072;
pub const BUDGET_MACS: f64 = 30e6;

/// How multiply-accumulates are counted. CONV_FC covers convolution and
/// dense layers only; EXTENDED adds 2 per batchnorm element and the pool
/// area per pooled element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MacConvention {
    ConvFc,
    Extended,
}

impl MacConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            MacConvention::ConvFc => "CONV_FC",
            MacConvention::Extended => "EXTENDED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAudit {
    pub name: String,
    pub params: usize,
    pub bytes: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub model_name: String,
    pub convention: MacConvention,
    pub layers: Vec<LayerAudit>,
    pub total_params: usize,
    pub total_bytes: usize,
    /// Trainable parameters plus batchnorm running statistics, which also
    /// occupy checkpoint file space.
    pub checkpoint_bytes: usize,
    pub total_macs: u64,
}

fn layer_params(layer: &LayerSpec, in_shape: &[usize]) -> Result<usize> {
    let channels_in = || -> Result<usize> {
        match in_shape {
            [_, _, c] => Ok(*c),
            other => Err(Error::Audit(format!("expected spatial input, got {other:?}"))),
        }
    };
    Ok(match layer {
        LayerSpec::Conv2d { kernel, out_channels } => {
            kernel[0] * kernel[1] * channels_in()? * out_channels + out_channels
        }
        LayerSpec::Residual { kernel, out_channels } => {
            let cin = channels_in()?;
            let k = kernel[0] * kernel[1];
            let mut p = k * cin * out_channels + out_channels;
            p += k * out_channels * out_channels + out_channels;
            if cin != *out_channels {
                p += cin * out_channels + out_channels;
            }
            p
        }
        LayerSpec::Dense { out_features } => {
            let inputs: usize = in_shape.iter().product();
            inputs * out_features + out_features
        }
        LayerSpec::BatchNorm => 2 * in_shape.last().copied().unwrap_or(0),
        LayerSpec::Relu
        | LayerSpec::AvgPool { .. }
        | LayerSpec::GlobalAvgPool
        | LayerSpec::Dropout { .. }
        | LayerSpec::Softmax => 0,
    })
}

fn layer_macs(
    layer: &LayerSpec,
    in_shape: &[usize],
    out_shape: &[usize],
    convention: MacConvention,
) -> Result<u64> {
    let spatial_out = || -> Result<(usize, usize, usize)> {
        match out_shape {
            [h, w, c] => Ok((*h, *w, *c)),
            other => Err(Error::Audit(format!("expected spatial output, got {other:?}"))),
        }
    };
    Ok(match layer {
        LayerSpec::Conv2d { kernel, .. } => {
            let cin = in_shape[2];
            let (h, w, cout) = spatial_out()?;
            (h * w * cout * kernel[0] * kernel[1] * cin) as u64
        }
        LayerSpec::Residual { kernel, out_channels } => {
            let cin = in_shape[2];
            let (h, w, cout) = spatial_out()?;
            let k = kernel[0] * kernel[1];
            let mut m = (h * w * cout * k * cin) as u64;
            m += (h * w * cout * k * cout) as u64;
            if cin != *out_channels {
                m += (h * w * cout * cin) as u64;
            }
            m
        }
        LayerSpec::Dense { out_features } => {
            (in_shape.iter().product::<usize>() * out_features) as u64
        }
        LayerSpec::BatchNorm if convention == MacConvention::Extended => {
            2 * out_shape.iter().product::<usize>() as u64
        }
        LayerSpec::AvgPool { pool } if convention == MacConvention::Extended => {
            (pool[0] * pool[1] * out_shape.iter().product::<usize>()) as u64
        }
        LayerSpec::GlobalAvgPool if convention == MacConvention::Extended => {
            (in_shape.iter().product::<usize>()) as u64
        }
        _ => 0,
    })
}

pub fn count_params(spec: &ModelSpec) -> Result<Vec<(String, usize)>> {
    let mut shape: Vec<usize> = spec.input_shape.to_vec();
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        out.push((format!("layer{i:02}.{}", layer.tag()), layer_params(layer, &shape)?));
        shape = layer.output_shape(&shape)?;
    }
    Ok(out)
}

pub fn count_macs(spec: &ModelSpec, convention: MacConvention) -> Result<Vec<(String, u64)>> {
    let mut shape: Vec<usize> = spec.input_shape.to_vec();
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let next = layer.output_shape(&shape)?;
        out.push((
            format!("layer{i:02}.{}", layer.tag()),
            layer_macs(layer, &shape, &next, convention)?,
        ));
        shape = next;
    }
    Ok(out)
}

fn running_stat_params(spec: &ModelSpec) -> Result<usize> {
    let mut shape: Vec<usize> = spec.input_shape.to_vec();
    let mut total = 0;
    for layer in &spec.layers {
        if matches!(layer, LayerSpec::BatchNorm) {
            total += 2 * shape.last().copied().unwrap_or(0);
        }
        shape = layer.output_shape(&shape)?;
    }
    Ok(total)
}

pub fn audit_model(spec: &ModelSpec, convention: MacConvention) -> Result<ComplexityReport> {
    let params = count_params(spec)?;
    let macs = count_macs(spec, convention)?;
    let layers: Vec<LayerAudit> = params
        .iter()
        .zip(&macs)
        .map(|((name, p), (_, m))| LayerAudit {
            name: name.clone(),
            params: *p,
            bytes: p * BYTES_PER_PARAM,
            macs: *m,
        })
        .collect();
    let total_params: usize = layers.iter().map(|l| l.params).sum();
    Ok(ComplexityReport {
        model_name: spec.name.clone(),
        convention,
        total_params,
        total_bytes: total_params * BYTES_PER_PARAM,
        checkpoint_bytes: (total_params + running_stat_params(spec)?) * BYTES_PER_PARAM,
        total_macs: layers.iter().map(|l| l.macs).sum(),
        layers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub total_bytes: usize,
    pub total_macs: u64,
    pub fits_bytes: bool,
    pub fits_macs: bool,
    /// Fractional headroom: positive means under budget.
    pub bytes_margin: f64,
    pub macs_margin: f64,
}

impl BudgetVerdict {
    pub fn fits(&self) -> bool {
        self.fits_bytes && self.fits_macs
    }

    /// Single machine-readable line for CI gating.
    pub fn verdict_line(&self) -> String {
        format!(
            "{}\tbytes={} margin={:+.1}%\tmacs={} margin={:+.1}%",
            if self.fits() { "FITS" } else { "EXCEEDS" },
            self.total_bytes,
            self.bytes_margin * 100.0,
            self.total_macs,
            self.macs_margin * 100.0
        )
    }
}

/// Budget check over one or more model reports (an ensemble sums them).
pub fn check_budgets(reports: &[ComplexityReport]) -> Result<BudgetVerdict> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no systems to compare".into()));
    }
    let total_bytes: usize = reports.iter().map(|r| r.total_bytes).sum();
    let total_macs: u64 = reports.iter().map(|r| r.total_macs).sum();
    Ok(BudgetVerdict {
        total_bytes,
        total_macs,
        fits_bytes: total_bytes <= BUDGET_BYTES,
        fits_macs: total_macs as f64 <= BUDGET_MACS,
        bytes_margin: 1.0 - total_bytes as f64 / BUDGET_BYTES as f64,
        macs_margin: 1.0 - total_macs as f64 / BUDGET_MACS,
    })
}

impl ComplexityReport {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# model={} convention={}\nlayer\tparams\tbytes\tmacs\n",
            self.model_name,
            self.convention.as_str()
        );
        for l in &self.layers {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", l.name, l.params, l.bytes, l.macs));
        }
        out.push_str(&format!(
            "total\t{}\t{}\t{}\n",
            self.total_params, self.total_bytes, self.total_macs
        ));
        out
    }
}

//! Analytic FLOPs and parameter counting.
//!
//! One multiply-accumulate counts as one FLOP. Batch norm is folded at
//! inference so it costs no FLOPs, but contributes two learnable scalars per
//! channel. Element-wise activations, residual additions, pooling and the SE
//! gating multiply are not counted.

use serde::{Deserialize, Serialize};

use super::{ArchError, ArchitectureSpec, OperatorKind, ResolvedArchitecture, ScalingCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostReport {
    /// Multiply-accumulate operations of one forward pass.
    pub flops: u64,
    /// Learnable scalars.
    pub params: u64,
}

impl std::ops::Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
        }
    }
}

impl std::iter::Sum for CostReport {
    fn sum<I: Iterator<Item = CostReport>>(iter: I) -> CostReport {
        iter.fold(CostReport::default(), |a, b| a + b)
    }
}

/// One costed layer of a resolved network. Spatial sizes are square sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv {
        kernel: u32,
        c_in: u32,
        c_out: u32,
        out_hw: u32,
        bias: bool,
        norm: bool,
    },
    Depthwise {
        kernel: u32,
        channels: u32,
        out_hw: u32,
        norm: bool,
    },
    /// Fully connected layer on pooled features (SE reductions, classifier).
    Linear { c_in: u32, c_out: u32, bias: bool },
}

impl Layer {
    pub fn cost(&self) -> CostReport {
        match *self {
            Layer::Conv {
                kernel,
                c_in,
                c_out,
                out_hw,
                bias,
                norm,
            } => {
                let k2 = u64::from(kernel) * u64::from(kernel);
                let weights = k2 * u64::from(c_in) * u64::from(c_out);
                CostReport {
                    flops: weights * u64::from(out_hw) * u64::from(out_hw),
                    params: weights + extra(c_out, bias, norm),
                }
            }
            Layer::Depthwise {
                kernel,
                channels,
                out_hw,
                norm,
            } => {
                let weights = u64::from(kernel) * u64::from(kernel) * u64::from(channels);
                CostReport {
                    flops: weights * u64::from(out_hw) * u64::from(out_hw),
                    params: weights + extra(channels, false, norm),
                }
            }
            Layer::Linear { c_in, c_out, bias } => {
                let weights = u64::from(c_in) * u64::from(c_out);
                CostReport {
                    flops: weights,
                    params: weights + extra(c_out, bias, false),
                }
            }
        }
    }
}

fn extra(channels: u32, bias: bool, norm: bool) -> u64 {
    let c = u64::from(channels);
    (if bias { c } else { 0 }) + (if norm { 2 * c } else { 0 })
}

fn downsample(hw: u32, stride: u32) -> u32 {
    hw.div_ceil(stride)
}

fn conv_bn(kernel: u32, c_in: u32, c_out: u32, out_hw: u32) -> Layer {
    Layer::Conv {
        kernel,
        c_in,
        c_out,
        out_hw,
        bias: false,
        norm: true,
    }
}

fn dw_bn(kernel: u32, channels: u32, out_hw: u32) -> Layer {
    Layer::Depthwise {
        kernel,
        channels,
        out_hw,
        norm: true,
    }
}

fn squeeze_excite(layers: &mut Vec<Layer>, channels: u32, hidden: u32) {
    layers.push(Layer::Linear {
        c_in: channels,
        c_out: hidden,
        bias: true,
    });
    layers.push(Layer::Linear {
        c_in: hidden,
        c_out: channels,
        bias: true,
    });
}

/// Half the outputs from a 1x1 conv, the other half from a cheap depthwise 3x3
/// applied to those primary channels.
fn ghost_module(layers: &mut Vec<Layer>, c_in: u32, c_out: u32, hw: u32) {
    let primary = c_out.div_ceil(2);
    let cheap = c_out - primary;
    layers.push(conv_bn(1, c_in, primary, hw));
    if cheap > 0 {
        layers.push(dw_bn(3, cheap, hw));
    }
}

/// Enumerates every costed layer of `resolved`.
pub(crate) fn layers(spec: &ArchitectureSpec, resolved: &ResolvedArchitecture) -> Vec<Layer> {
    let mut out = Vec::new();
    let mut hw = downsample(resolved.resolution, spec.stem.stride);
    out.push(conv_bn(
        spec.stem.kernel_size,
        spec.in_channels,
        resolved.stem_channels,
        hw,
    ));
    let mut c_in = resolved.stem_channels;

    for (stage, res) in spec.stages.iter().zip(&resolved.stages) {
        let k = stage.kernel_size;
        let c_out = res.out_channels;
        for block in 0..res.repeats {
            let stride = if block == 0 { stage.stride } else { 1 };
            let hw_in = hw;
            hw = downsample(hw, stride);
            let expanded = (f64::from(c_in) * stage.expansion_ratio).round() as u32;
            match stage.operator_kind {
                OperatorKind::Mbconv => {
                    if expanded != c_in {
                        out.push(conv_bn(1, c_in, expanded, hw_in));
                    }
                    out.push(dw_bn(k, expanded, hw));
                    if stage.se_ratio > 0.0 {
                        let hidden = ((f64::from(c_in) * stage.se_ratio) as u32).max(1);
                        squeeze_excite(&mut out, expanded, hidden);
                    }
                    out.push(conv_bn(1, expanded, c_out, hw));
                }
                OperatorKind::GhostBneck => {
                    ghost_module(&mut out, c_in, expanded, hw_in);
                    if stride > 1 {
                        out.push(dw_bn(k, expanded, hw));
                    }
                    if stage.se_ratio > 0.0 {
                        let hidden = ((f64::from(expanded) * stage.se_ratio) as u32).max(1);
                        squeeze_excite(&mut out, expanded, hidden);
                    }
                    ghost_module(&mut out, expanded, c_out, hw);
                    if stride > 1 || c_in != c_out {
                        out.push(dw_bn(k, c_in, hw));
                        out.push(conv_bn(1, c_in, c_out, hw));
                    }
                }
                OperatorKind::Conv => {
                    out.push(conv_bn(k, c_in, c_out, hw));
                }
                OperatorKind::DepthwiseConv => {
                    out.push(dw_bn(k, c_in, hw));
                    out.push(conv_bn(1, c_in, c_out, hw));
                }
            }
            c_in = c_out;
        }
    }

    out.push(conv_bn(1, c_in, resolved.head_channels, hw));
    let mut features = resolved.head_channels;
    if let Some(hidden) = resolved.head_hidden {
        out.push(Layer::Conv {
            kernel: 1,
            c_in: features,
            c_out: hidden,
            out_hw: 1,
            bias: true,
            norm: false,
        });
        features = hidden;
    }
    out.push(Layer::Linear {
        c_in: features,
        c_out: spec.head.classes,
        bias: true,
    });
    out
}

/// Counts FLOPs and parameters of a resolved network.
pub fn cost(resolved: &ResolvedArchitecture, spec: &ArchitectureSpec) -> Result<CostReport, ArchError> {
    if resolved.stages.len() != spec.stages.len() {
        return Err(ArchError::Mismatch {
            name: spec.name.clone(),
            resolved: resolved.stages.len(),
            expected: spec.stages.len(),
        });
    }
    Ok(layers(spec, resolved).iter().map(Layer::cost).sum())
}

/// Realized FLOPs of `coeffs` divided by the baseline's.
pub fn flops_ratio(spec: &ArchitectureSpec, coeffs: ScalingCoefficients) -> Result<f64, ArchError> {
    CostModel::new(spec.clone())?.ratio(coeffs)
}

/// A validated spec with its baseline cost cached, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CostModel {
    spec: ArchitectureSpec,
    baseline: CostReport,
}

impl CostModel {
    pub fn new(spec: ArchitectureSpec) -> Result<Self, ArchError> {
        spec.validate()?;
        let identity = spec.resolve_unchecked(ScalingCoefficients::IDENTITY);
        let baseline = layers(&spec, &identity).iter().map(Layer::cost).sum();
        Ok(Self { spec, baseline })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn baseline(&self) -> CostReport {
        self.baseline
    }

    pub fn evaluate(&self, coeffs: ScalingCoefficients) -> Result<(ResolvedArchitecture, CostReport), ArchError> {
        coeffs.validate()?;
        let resolved = self.spec.resolve_unchecked(coeffs);
        let report = layers(&self.spec, &resolved).iter().map(Layer::cost).sum();
        Ok((resolved, report))
    }

    pub fn ratio(&self, coeffs: ScalingCoefficients) -> Result<f64, ArchError> {
        let (_, report) = self.evaluate(coeffs)?;
        Ok(self.ratio_of(report))
    }

    /// Ratio for coefficients already known to be positive and finite.
    pub(crate) fn ratio_unchecked(&self, coeffs: ScalingCoefficients) -> f64 {
        let resolved = self.spec.resolve_unchecked(coeffs);
        let flops: u64 = layers(&self.spec, &resolved).iter().map(|l| l.cost().flops).sum();
        flops as f64 / self.baseline.flops as f64
    }

    pub fn ratio_of(&self, report: CostReport) -> f64 {
        report.flops as f64 / self.baseline.flops as f64
    }
}

//! Declarative stage-wise CNN descriptions and their scaled, discretized forms.
//!
//! An [`ArchitectureSpec`] is the baseline network. [`ArchitectureSpec::resolve`]
//! applies a [`ScalingCoefficients`] triple and rounds every quantity back onto
//! a buildable network:
//!
//! * resolution: `floor(r * base_resolution)`, never below 32 pixels;
//! * depth: `round(d * repeats)` per stage (half rounds up), never below one block;
//! * width: `w * channels` rounded to the nearest multiple of the channel
//!   divisor, never below 8 channels and never below 90% of the unrounded value.
//!
//! Stride-2 layers use ceil division on the spatial side, so odd inputs never
//! collapse a feature map to zero.

mod cost;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::cost::{cost, flops_ratio, CostModel, CostReport, Layer};

/// Smallest input side a resolved network may use.
pub const MIN_RESOLUTION: u32 = 32;
/// Smallest channel count a resolved layer may use.
pub const MIN_CHANNELS: u32 = 8;

const EFFICIENTNET_B0_JSON: &str = include_str!("../../specs/efficientnet-b0.json");
const GHOSTNET_A_JSON: &str = include_str!("../../specs/ghostnet-a.json");

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("invalid architecture spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("invalid scaling coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("resolved architecture has {resolved} stages but spec `{name}` has {expected}")]
    Mismatch {
        name: String,
        resolved: usize,
        expected: usize,
    },
    #[error("failed to parse architecture spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read architecture spec {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Mobile inverted bottleneck: 1x1 expand, depthwise kxk, optional SE, 1x1 project.
    Mbconv,
    /// Ghost bottleneck: ghost-module expand, depthwise kxk on stride 2, optional SE,
    /// ghost-module project, plus a depthwise-separable shortcut when the shape changes.
    GhostBneck,
    /// Plain kxk convolution.
    Conv,
    /// Depthwise-separable convolution (depthwise kxk followed by 1x1).
    DepthwiseConv,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Mbconv => "mbconv",
            OperatorKind::GhostBneck => "ghost_bneck",
            OperatorKind::Conv => "conv",
            OperatorKind::DepthwiseConv => "depthwise_conv",
        })
    }
}

/// Stem convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    #[serde(rename = "k")]
    pub kernel_size: u32,
    pub stride: u32,
    #[serde(rename = "out")]
    pub out_channels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    #[serde(rename = "op")]
    pub operator_kind: OperatorKind,
    #[serde(rename = "k")]
    pub kernel_size: u32,
    /// Applies to the first block of the stage only.
    pub stride: u32,
    #[serde(rename = "exp")]
    pub expansion_ratio: f64,
    #[serde(rename = "out")]
    pub out_channels: u32,
    /// Squeeze-excite reduction, 0 disables the block. For `mbconv` the hidden
    /// width is taken relative to the block input channels, for `ghost_bneck`
    /// relative to the expanded channels.
    #[serde(rename = "se")]
    pub se_ratio: f64,
    #[serde(rename = "repeat")]
    pub repeats: u32,
}

/// 1x1 conv, global average pooling, optional hidden 1x1 conv on the pooled
/// features, then the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    #[serde(rename = "conv")]
    pub conv_channels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<u32>,
    pub classes: u32,
}

fn default_divisor() -> u32 {
    8
}

fn default_in_channels() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub base_resolution: u32,
    #[serde(default = "default_divisor")]
    pub channel_divisor: u32,
    #[serde(default = "default_in_channels")]
    pub in_channels: u32,
    pub stem: ConvLayer,
    pub stages: Vec<StageSpec>,
    pub head: HeadSpec,
}

impl ArchitectureSpec {
    /// The bundled EfficientNet-B0 baseline.
    pub fn efficientnet_b0() -> Self {
        Self::from_json(EFFICIENTNET_B0_JSON).expect("bundled efficientnet-b0 spec is valid")
    }

    /// The bundled GhostNet-A baseline.
    pub fn ghostnet_a() -> Self {
        Self::from_json(GHOSTNET_A_JSON).expect("bundled ghostnet-a spec is valid")
    }

    /// Looks up a bundled spec by name.
    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "efficientnet-b0" => Some(Self::efficientnet_b0()),
            "ghostnet-a" => Some(Self::ghostnet_a()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ArchError> {
        let spec: ArchitectureSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ArchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ArchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Total number of blocks at identity depth.
    pub fn total_blocks(&self) -> u32 {
        self.stages.iter().map(|s| s.repeats).sum()
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let fail = |reason: String| {
            Err(ArchError::InvalidSpec {
                name: self.name.clone(),
                reason,
            })
        };
        if self.base_resolution < MIN_RESOLUTION {
            return fail(format!(
                "base_resolution {} is below {MIN_RESOLUTION}",
                self.base_resolution
            ));
        }
        if self.channel_divisor == 0 {
            return fail("channel_divisor must be positive".into());
        }
        if self.in_channels == 0 {
            return fail("in_channels must be positive".into());
        }
        if self.stem.kernel_size == 0 || self.stem.out_channels == 0 {
            return fail("stem kernel and channels must be positive".into());
        }
        if !matches!(self.stem.stride, 1 | 2) {
            return fail(format!("stem stride {} not in {{1, 2}}", self.stem.stride));
        }
        if self.stages.is_empty() {
            return fail("no stages".into());
        }
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.repeats == 0 {
                return fail(format!("stage {i}: repeats must be >= 1"));
            }
            if !matches!(stage.stride, 1 | 2) {
                return fail(format!("stage {i}: stride {} not in {{1, 2}}", stage.stride));
            }
            if stage.kernel_size == 0 {
                return fail(format!("stage {i}: kernel size must be positive"));
            }
            if stage.out_channels == 0 {
                return fail(format!("stage {i}: out channels must be positive"));
            }
            if !(stage.expansion_ratio.is_finite() && stage.expansion_ratio >= 1.0) {
                return fail(format!(
                    "stage {i}: expansion ratio {} must be >= 1",
                    stage.expansion_ratio
                ));
            }
            if !(0.0..=1.0).contains(&stage.se_ratio) {
                return fail(format!("stage {i}: se ratio {} outside [0, 1]", stage.se_ratio));
            }
        }
        if self.head.conv_channels == 0 || self.head.classes == 0 || self.head.hidden == Some(0) {
            return fail("head channels and classes must be positive".into());
        }
        Ok(())
    }

    /// Applies `coeffs` and discretizes the result.
    pub fn resolve(&self, coeffs: ScalingCoefficients) -> Result<ResolvedArchitecture, ArchError> {
        coeffs.validate()?;
        self.validate()?;
        Ok(self.resolve_unchecked(coeffs))
    }

    /// A standalone spec whose identity resolution is `resolved`: channels,
    /// repeats and input side are replaced by their resolved values.
    pub fn concretize(&self, resolved: &ResolvedArchitecture, name: impl Into<String>) -> Result<Self, ArchError> {
        if resolved.stages.len() != self.stages.len() {
            return Err(ArchError::Mismatch {
                name: self.name.clone(),
                resolved: resolved.stages.len(),
                expected: self.stages.len(),
            });
        }
        let mut out = self.clone();
        out.name = name.into();
        out.base_resolution = resolved.resolution;
        out.stem.out_channels = resolved.stem_channels;
        for (stage, res) in out.stages.iter_mut().zip(&resolved.stages) {
            stage.repeats = res.repeats;
            stage.out_channels = res.out_channels;
        }
        out.head.conv_channels = resolved.head_channels;
        out.head.hidden = resolved.head_hidden;
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn resolve_unchecked(&self, coeffs: ScalingCoefficients) -> ResolvedArchitecture {
        let divisor = self.channel_divisor;
        let channels = |c: u32| round_channels(coeffs.w * f64::from(c), divisor);
        ResolvedArchitecture {
            coeffs,
            resolution: scale_resolution(self.base_resolution, coeffs.r),
            stem_channels: channels(self.stem.out_channels),
            stages: self
                .stages
                .iter()
                .map(|s| ResolvedStage {
                    repeats: scale_repeats(s.repeats, coeffs.d),
                    out_channels: channels(s.out_channels),
                })
                .collect(),
            head_channels: channels(self.head.conv_channels),
            head_hidden: self.head.hidden.map(channels),
        }
    }
}

/// Resolution, depth and width multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCoefficients {
    pub r: f64,
    pub d: f64,
    pub w: f64,
}

impl ScalingCoefficients {
    pub const IDENTITY: Self = Self { r: 1.0, d: 1.0, w: 1.0 };

    pub fn new(r: f64, d: f64, w: f64) -> Result<Self, ArchError> {
        let coeffs = Self { r, d, w };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        for (label, v) in [("r", self.r), ("d", self.d), ("w", self.w)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ArchError::InvalidCoefficients(format!(
                    "{label} = {v} must be finite and positive"
                )));
            }
        }
        Ok(())
    }

    /// `r^2 * d * w^2`, the FLOPs ratio before any rounding.
    pub fn continuous_ratio(&self) -> f64 {
        self.r * self.r * self.d * self.w * self.w
    }
}

impl fmt::Display for ScalingCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(r={}, d={}, w={})", self.r, self.d, self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedStage {
    pub repeats: u32,
    pub out_channels: u32,
}

/// A concrete network obtained from a spec and a coefficient triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedArchitecture {
    pub coeffs: ScalingCoefficients,
    pub resolution: u32,
    pub stem_channels: u32,
    pub stages: Vec<ResolvedStage>,
    pub head_channels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<u32>,
}

impl ResolvedArchitecture {
    pub fn total_blocks(&self) -> u32 {
        self.stages.iter().map(|s| s.repeats).sum()
    }

    /// Every channel count of the resolved network, stem first.
    pub fn channel_counts(&self) -> impl Iterator<Item = u32> + '_ {
        std::iter::once(self.stem_channels)
            .chain(self.stages.iter().map(|s| s.out_channels))
            .chain(std::iter::once(self.head_channels))
            .chain(self.head_hidden)
    }
}

/// `floor(r * base)` clamped to [`MIN_RESOLUTION`].
pub fn scale_resolution(base: u32, r: f64) -> u32 {
    let scaled = (r * f64::from(base) + 1e-9).floor();
    if scaled >= f64::from(u32::MAX) {
        return u32::MAX;
    }
    (scaled as u32).max(MIN_RESOLUTION)
}

/// `round(d * repeats)` with halves rounded up, floored at one block.
pub fn scale_repeats(repeats: u32, d: f64) -> u32 {
    let scaled = (d * f64::from(repeats)).round();
    if scaled >= f64::from(u32::MAX) {
        return u32::MAX;
    }
    (scaled as u32).max(1)
}

/// Rounds a channel count to the nearest multiple of `divisor`, keeping at
/// least [`MIN_CHANNELS`] (rounded up to the divisor) and at least 90% of `value`.
pub fn round_channels(value: f64, divisor: u32) -> u32 {
    let div = f64::from(divisor);
    let floor = f64::from(MIN_CHANNELS.div_ceil(divisor) * divisor);
    let mut rounded = ((value + div / 2.0) / div).floor() * div;
    rounded = rounded.max(floor);
    if rounded < 0.9 * value {
        rounded += div;
    }
    rounded.min(f64::from(u32::MAX)) as u32
}

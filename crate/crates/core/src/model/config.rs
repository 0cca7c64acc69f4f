use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One strided convolution of the waveform token extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
}

impl ConvLayer {
    pub const fn new(kernel: usize, stride: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride,
            out_channels,
        }
    }
}

/// Shape of the miniature detector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token (and prompt) dimension.
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub conv: Vec<ConvLayer>,
    /// Width of the Back-End hidden layer, i.e. the input width of the final
    /// linear layer.
    pub head_hidden: usize,
    /// Hidden width of each encoder feed-forward block.
    pub ff_hidden: usize,
    /// Expected waveform length in samples.
    pub delta: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            n_layers: 2,
            n_heads: 2,
            conv: vec![ConvLayer::new(16, 16, 8), ConvLayer::new(4, 4, 16)],
            head_hidden: 32,
            ff_hidden: 32,
            delta: 2048,
        }
    }
}

impl ModelConfig {
    /// Registry sizes chosen so that the prompt and final linear layer match
    /// a 1024-wide encoder with a 160-wide classifier input. The encoder body
    /// itself is kept to a single shallow layer.
    pub fn w2v_mirror() -> Self {
        Self {
            d: 1024,
            n_layers: 1,
            n_heads: 16,
            conv: vec![ConvLayer::new(64, 64, 1024)],
            head_hidden: 160,
            ff_hidden: 64,
            delta: 256,
        }
    }

    /// 384-wide encoder counterpart of [`ModelConfig::w2v_mirror`].
    pub fn wsp_mirror() -> Self {
        Self {
            d: 384,
            n_layers: 1,
            n_heads: 6,
            conv: vec![ConvLayer::new(64, 64, 384)],
            head_hidden: 8,
            ff_hidden: 64,
            delta: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("head_hidden", self.head_hidden),
            ("ff_hidden", self.ff_hidden),
            ("delta", self.delta),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return Err(Error::config(
                "n_heads",
                format!("{} does not divide d = {}", self.n_heads, self.d),
            ));
        }
        let Some(last) = self.conv.last() else {
            return Err(Error::config("conv", "at least one layer required"));
        };
        if self
            .conv
            .iter()
            .any(|c| c.kernel == 0 || c.stride == 0 || c.out_channels == 0)
        {
            return Err(Error::config(
                "conv",
                "kernel, stride and out_channels must be positive",
            ));
        }
        if last.out_channels != self.d {
            return Err(Error::config(
                "conv",
                format!(
                    "last out_channels {} must equal d = {}",
                    last.out_channels, self.d
                ),
            ));
        }
        self.try_token_count()?;
        Ok(())
    }

    fn try_token_count(&self) -> Result<usize> {
        let mut len = self.delta;
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel > len {
                return Err(Error::config(
                    "conv",
                    format!("layer {i} kernel {} exceeds input length {len}", c.kernel),
                ));
            }
            len = (len - c.kernel) / c.stride + 1;
        }
        Ok(len)
    }

    /// Number of real (non-prompt) tokens produced from one waveform.
    pub fn token_count(&self) -> usize {
        self.try_token_count().unwrap_or(0)
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }
}

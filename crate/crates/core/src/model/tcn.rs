//! Small dilated temporal-convolution mask predictor.
//!
//! `gLN → 1×1 bottleneck → B × [dilated conv → PReLU → gLN, residual] →
//! 1×1 readout → sigmoid`, giving one mask per (source, latent channel).

use ndarray::{Array2, Array3, ArrayView2};

use super::conv::{dilated_conv, global_layer_norm, pointwise, prelu, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct TcnBlock {
    pub conv_weight: Array3<f64>,
    pub conv_bias: Vec<f64>,
    pub dilation: usize,
    pub prelu: f64,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tcn {
    pub channels: usize,
    pub sources: usize,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
    pub bottleneck_weight: Array2<f64>,
    pub bottleneck_bias: Vec<f64>,
    pub blocks: Vec<TcnBlock>,
    pub readout_weight: Array2<f64>,
    pub readout_bias: Vec<f64>,
}

impl Tcn {
    /// Masks of shape `(sources · channels, frames)`, row `s·C + c`.
    pub fn masks(&self, u: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut n = u.to_owned();
        global_layer_norm(&mut n, &self.norm_gain, &self.norm_bias);
        let mut h = pointwise(n.view(), &self.bottleneck_weight, &self.bottleneck_bias);
        for block in &self.blocks {
            let mut z = dilated_conv(h.view(), &block.conv_weight, &block.conv_bias, block.dilation);
            prelu(&mut z, block.prelu);
            global_layer_norm(&mut z, &block.norm_gain, &block.norm_bias);
            h += &z;
        }
        let mut logits = pointwise(h.view(), &self.readout_weight, &self.readout_bias);
        logits.mapv_inplace(sigmoid);
        logits
    }

    /// Zero readout weights and a saturating bias: every mask is exactly 1.
    pub fn force_all_ones(&mut self) {
        self.readout_weight.fill(0.0);
        self.readout_bias.iter_mut().for_each(|b| *b = 50.0);
    }

    /// Receptive field in frames.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| (b.conv_weight.dim().2 - 1) * b.dilation)
            .sum::<usize>()
    }
}

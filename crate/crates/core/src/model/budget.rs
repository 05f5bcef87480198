//! Structure-only parameter and FLOP accounting.
//!
//! Convention: one multiply-accumulate is two FLOPs and bias additions are
//! not counted. Elementwise costs per output element are listed below;
//! pooling costs one FLOP per input element.

use crate::error::Result;
use crate::tensor::ConvSpec;

pub const FLOPS_BN: u64 = 2;
pub const FLOPS_RELU: u64 = 1;
pub const FLOPS_SIGMOID: u64 = 4;
pub const FLOPS_SWISH: u64 = 5;
pub const FLOPS_SOFTMAX: u64 = 3;
/// `(1 + g) * x`.
pub const FLOPS_MASK: u64 = 2;

/// `[channels, height, width]` of one sample.
pub type Shape = [usize; 3];

/// Accumulates parameter and FLOP totals plus a readable layer listing.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub params: u64,
    pub flops: u64,
    pub lines: Vec<String>,
    depth: usize,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn conv(&mut self, spec: &ConvSpec, input: Shape) -> Result<Shape> {
        let [_, h, w] = input;
        if spec.stride.0 > h || spec.stride.1 > w {
            return Err(crate::Error::shape(format!(
                "input {h}x{w} is too small for a stride-{:?} layer",
                spec.stride
            )));
        }
        let (oh, ow) = spec.output_hw(h, w)?;
        self.flops += 2 * spec.macs(h, w)?;
        self.params += spec.param_count() as u64;
        Ok([spec.out_channels, oh, ow])
    }

    pub fn linear(&mut self, inputs: usize, outputs: usize) {
        self.flops += 2 * (inputs * outputs) as u64;
        self.params += (inputs * outputs + outputs) as u64;
    }

    pub fn elementwise(&mut self, per_element: u64, shape: Shape) {
        self.flops += per_element * numel(shape);
    }

    pub fn pool(&mut self, input: Shape) {
        self.flops += numel(input);
    }

    pub fn flops(&mut self, n: u64) {
        self.flops += n;
    }

    pub fn params(&mut self, n: u64) {
        self.params += n;
    }

    pub fn line(&mut self, text: String) {
        self.lines
            .push(format!("{}{text}", "  ".repeat(self.depth)));
    }

    pub fn enter(&mut self, title: String) {
        self.line(title);
        self.depth += 1;
    }

    pub fn leave(&mut self) {
        self.depth = self.depth.saturating_sub(1);
    }
}

fn numel(s: Shape) -> u64 {
    (s[0] * s[1] * s[2]) as u64
}

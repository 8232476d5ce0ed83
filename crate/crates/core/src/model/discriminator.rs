use mmtts_tensor::nn::{Conv1d, Conv1dConfig};
use mmtts_tensor::{Graph, ParamBuilder, Scalar, Var};

use super::config::ModelConfig;
use super::layers::LRELU_SLOPE;

/// Scores (`segments*L' x 1`) and one feature map per strided layer.
#[derive(Debug, Clone)]
pub struct Discrimination {
    pub scores: Var,
    pub feature_maps: Vec<Var>,
}

/// Stack of strided waveform convolutions.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub convs: Vec<Conv1d>,
    pub post: Conv1d,
}

impl Discriminator {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<'_, T>, cfg: &ModelConfig) -> Self {
        let mut pb = pb.sub("discriminator");
        let k = cfg.discriminator_kernel;
        let strided = Conv1dConfig {
            stride: cfg.discriminator_stride,
            dilation: 1,
            padding: k / 2,
        };
        let mut convs = Vec::new();
        let mut ch = 1;
        for (i, &out) in cfg.discriminator_channels.iter().enumerate() {
            convs.push(Conv1d::new(&mut pb, &format!("conv.{i}"), ch, out, k, strided));
            ch = out;
        }
        Self {
            convs,
            post: Conv1d::new(&mut pb, "post", ch, 1, 3, Conv1dConfig::same(3, 1)),
        }
    }

    pub fn depth(&self) -> usize {
        self.convs.len()
    }

    /// `wav` is `segments` equal blocks stacked as `segments*L x 1`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, wav: Var, segments: usize) -> Discrimination {
        let mut x = wav;
        let mut feature_maps = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            x = conv.forward_segments(g, x, segments);
            x = g.leaky_relu(x, LRELU_SLOPE);
            feature_maps.push(x);
        }
        let scores = self.post.forward_segments(g, x, segments);
        Discrimination { scores, feature_maps }
    }
}

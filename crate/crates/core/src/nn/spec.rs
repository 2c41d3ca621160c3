use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayerSpec {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvLayerSpec { out_channels, kernel, stride }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Q,
    Dueling,
    C51,
    ActorCritic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C51Params {
    pub n_atoms: usize,
    pub v_min: f32,
    pub v_max: f32,
}

impl C51Params {
    pub fn new(v_min: f32, v_max: f32) -> Self {
        C51Params { n_atoms: 51, v_min, v_max }
    }

    /// Linearly spaced support `z_0 = v_min .. z_{n-1} = v_max`.
    pub fn support(&self) -> Vec<f64> {
        let (lo, hi) = (f64::from(self.v_min), f64::from(self.v_max));
        if self.n_atoms == 1 {
            return vec![lo];
        }
        let step = (hi - lo) / (self.n_atoms - 1) as f64;
        (0..self.n_atoms).map(|i| lo + step * i as f64).collect()
    }
}

/// Architecture of a policy network: a stack of valid (unpadded) ReLU
/// convolutions, one ReLU fully-connected layer, then a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input extents as `[channels, height, width]`.
    pub input: [usize; 3],
    pub conv_layers: Vec<ConvLayerSpec>,
    pub fc_width: usize,
    pub head: HeadKind,
    pub n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c51: Option<C51Params>,
}

pub const DEFAULT_CONV_LAYERS: [ConvLayerSpec; 3] = [
    ConvLayerSpec::new(32, 8, 4),
    ConvLayerSpec::new(64, 4, 2),
    ConvLayerSpec::new(64, 3, 1),
];

/// Where a tensor sits in the canonical parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl NetworkSpec {
    /// Nature-DQN layout on a 4×84×84 stack.
    pub fn nature(head: HeadKind, n_actions: usize) -> Self {
        NetworkSpec {
            input: [4, 84, 84],
            conv_layers: DEFAULT_CONV_LAYERS.to_vec(),
            fc_width: 512,
            head,
            n_actions,
            c51: (head == HeadKind::C51).then(|| C51Params::new(-10.0, 10.0)),
        }
    }

    /// Spatial extents `(h, w)` at the output of every conv layer.
    pub fn conv_output_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let [_, mut h, mut w] = self.input;
        let mut sizes = Vec::with_capacity(self.conv_layers.len());
        for (i, layer) in self.conv_layers.iter().enumerate() {
            if layer.kernel == 0 || layer.stride == 0 || layer.out_channels == 0 {
                return Err(Error::Config(format!("conv{} has a zero extent", i + 1)));
            }
            if h < layer.kernel || w < layer.kernel {
                return Err(Error::Config(format!(
                    "conv{} kernel {} exceeds its {h}x{w} input",
                    i + 1,
                    layer.kernel
                )));
            }
            h = (h - layer.kernel) / layer.stride + 1;
            w = (w - layer.kernel) / layer.stride + 1;
            sizes.push((h, w));
        }
        Ok(sizes)
    }

    /// Shape `[c, h, w]` of each conv layer's output.
    pub fn conv_shapes(&self) -> Result<Vec<[usize; 3]>> {
        Ok(self
            .conv_output_sizes()?
            .into_iter()
            .zip(&self.conv_layers)
            .map(|((h, w), l)| [l.out_channels, h, w])
            .collect())
    }

    pub fn flat_features(&self) -> Result<usize> {
        match self.conv_shapes()?.last() {
            Some(s) => Ok(s.iter().product()),
            None => Ok(self.input.iter().product()),
        }
    }

    pub fn head_raw_len(&self) -> usize {
        match self.head {
            HeadKind::Q => self.n_actions,
            HeadKind::Dueling | HeadKind::ActorCritic => self.n_actions + 1,
            HeadKind::C51 => self.n_actions * self.c51.map_or(0, |c| c.n_atoms),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.contains(&0) {
            return Err(Error::Config("input extents must be positive".into()));
        }
        if self.fc_width == 0 || self.n_actions == 0 {
            return Err(Error::Config("fc_width and n_actions must be positive".into()));
        }
        self.conv_output_sizes()?;
        match (self.head, self.c51) {
            (HeadKind::C51, None) => Err(Error::SpecInconsistency("C51 head without c51 parameters".into())),
            (HeadKind::C51, Some(c)) if c.n_atoms == 0 || !(c.v_min < c.v_max) => {
                Err(Error::SpecInconsistency(format!("invalid C51 support {c:?}")))
            }
            (h, Some(_)) if h != HeadKind::C51 => {
                Err(Error::SpecInconsistency(format!("{h:?} head carries c51 parameters")))
            }
            _ => Ok(()),
        }
    }

    /// Canonical ordered tensor directory implied by the spec.
    pub fn tensor_layout(&self) -> Result<Vec<TensorSlot>> {
        self.validate()?;
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            slots.push(TensorSlot { name, shape, offset });
            offset += len;
        };
        let mut in_c = self.input[0];
        for (i, l) in self.conv_layers.iter().enumerate() {
            push(format!("conv{}.w", i + 1), vec![l.out_channels, in_c, l.kernel, l.kernel]);
            push(format!("conv{}.b", i + 1), vec![l.out_channels]);
            in_c = l.out_channels;
        }
        let flat = self.flat_features()?;
        let (fc, n) = (self.fc_width, self.n_actions);
        push("fc.w".into(), vec![fc, flat]);
        push("fc.b".into(), vec![fc]);
        match self.head {
            HeadKind::Q => {
                push("head.w".into(), vec![n, fc]);
                push("head.b".into(), vec![n]);
            }
            HeadKind::C51 => {
                let atoms = self.c51.map_or(0, |c| c.n_atoms);
                push("head.w".into(), vec![n * atoms, fc]);
                push("head.b".into(), vec![n * atoms]);
            }
            HeadKind::Dueling => {
                push("head.value.w".into(), vec![1, fc]);
                push("head.value.b".into(), vec![1]);
                push("head.advantage.w".into(), vec![n, fc]);
                push("head.advantage.b".into(), vec![n]);
            }
            HeadKind::ActorCritic => {
                push("head.policy.w".into(), vec![n, fc]);
                push("head.policy.b".into(), vec![n]);
                push("head.value.w".into(), vec![1, fc]);
                push("head.value.b".into(), vec![1]);
            }
        }
        Ok(slots)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.tensor_layout()?.iter().map(TensorSlot::len).sum())
    }
}

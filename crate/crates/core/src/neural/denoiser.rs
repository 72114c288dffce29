use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{silu, silu_backward, Dense, Parameters};
use crate::error::{Error, Result};

/// Layer widths of the ε-prediction network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserArch {
    pub y_dim: usize,
    /// Condition length before the mask bit is appended.
    pub cond_dim: usize,
    pub time_dim: usize,
    pub cond_embed_dim: usize,
    pub hidden: usize,
}

impl DenoiserArch {
    pub fn new(y_dim: usize, cond_dim: usize) -> Self {
        DenoiserArch {
            y_dim,
            cond_dim,
            time_dim: 32,
            cond_embed_dim: 64,
            hidden: 256,
        }
    }

    fn fusion_in(&self) -> usize {
        self.y_dim + self.time_dim + self.cond_embed_dim
    }
}

/// Sinusoidal step encoding: entry `2k` is `sin(t / 10000^(2k/dim))`,
/// entry `2k+1` the matching cosine.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for k in 0..dim.div_ceil(2) {
        let angle = t as f64 / 10000f64.powf(2.0 * k as f64 / dim as f64);
        out[2 * k] = angle.sin();
        if 2 * k + 1 < dim {
            out[2 * k + 1] = angle.cos();
        }
    }
    out
}

/// Condition row fed to the network: the condition followed by a mask bit,
/// or all zeros with mask 0 for the unconditional branch.
pub fn condition_row(cond: Option<&[f64]>, cond_dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; cond_dim + 1];
    if let Some(c) = cond {
        row[..cond_dim].copy_from_slice(c);
        row[cond_dim] = 1.0;
    }
    row
}

/// Condition embedding → fusion → two hidden layers → linear head, with
/// `x·sigmoid(x)` on every hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub cond_embed: Dense,
    pub fusion: Dense,
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub head: Dense,
}

/// A minibatch in network layout.
#[derive(Debug, Clone)]
pub struct NetBatch {
    /// `(B, y_dim)` noisy states.
    pub y_t: Array2<f64>,
    /// `(B, time_dim)` step encodings.
    pub t_emb: Array2<f64>,
    /// `(B, cond_dim + 1)` condition rows from [`condition_row`].
    pub cond: Array2<f64>,
}

struct Cache {
    cond_z: Array2<f64>,
    fused_in: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    z3: Array2<f64>,
    h3: Array2<f64>,
}

impl DenoiserNet {
    pub fn init<R: Rng + ?Sized>(arch: &DenoiserArch, rng: &mut R) -> Self {
        DenoiserNet {
            cond_embed: Dense::init(arch.cond_dim + 1, arch.cond_embed_dim, rng),
            fusion: Dense::init(arch.fusion_in(), arch.hidden, rng),
            hidden1: Dense::init(arch.hidden, arch.hidden, rng),
            hidden2: Dense::init(arch.hidden, arch.hidden, rng),
            head: Dense::init(arch.hidden, arch.y_dim, rng),
        }
    }

    pub fn zeros(arch: &DenoiserArch) -> Self {
        DenoiserNet {
            cond_embed: Dense::zeros(arch.cond_dim + 1, arch.cond_embed_dim),
            fusion: Dense::zeros(arch.fusion_in(), arch.hidden),
            hidden1: Dense::zeros(arch.hidden, arch.hidden),
            hidden2: Dense::zeros(arch.hidden, arch.hidden),
            head: Dense::zeros(arch.hidden, arch.y_dim),
        }
    }

    pub fn arch(&self) -> DenoiserArch {
        DenoiserArch {
            y_dim: self.head.fan_out(),
            cond_dim: self.cond_embed.fan_in() - 1,
            time_dim: self.fusion.fan_in() - self.head.fan_out() - self.cond_embed.fan_out(),
            cond_embed_dim: self.cond_embed.fan_out(),
            hidden: self.hidden1.fan_out(),
        }
    }

    fn layers(&self) -> [&Dense; 5] {
        [&self.cond_embed, &self.fusion, &self.hidden1, &self.hidden2, &self.head]
    }

    fn forward_cached(&self, batch: &NetBatch) -> (Array2<f64>, Cache) {
        let cond_z = self.cond_embed.forward(&batch.cond);
        let cond_h = silu(&cond_z);
        let fused_in = concatenate![Axis(1), batch.y_t, batch.t_emb, cond_h];
        let z1 = self.fusion.forward(&fused_in);
        let h1 = silu(&z1);
        let z2 = self.hidden1.forward(&h1);
        let h2 = silu(&z2);
        let z3 = self.hidden2.forward(&h2);
        let h3 = silu(&z3);
        let out = self.head.forward(&h3);
        (
            out,
            Cache {
                cond_z,
                fused_in,
                z1,
                h1,
                z2,
                h2,
                z3,
                h3,
            },
        )
    }

    /// Predicted noise for every row of the batch.
    pub fn forward_batch(&self, batch: &NetBatch) -> Array2<f64> {
        self.forward_cached(batch).0
    }

    /// Single-row prediction; `cond = None` selects the unconditional branch.
    pub fn forward(&self, y_t: &[f64], t: usize, cond: Option<&[f64]>) -> Result<Vec<f64>> {
        let arch = self.arch();
        if y_t.len() != arch.y_dim {
            return Err(Error::input(format!(
                "denoiser expects y of length {}, got {}",
                arch.y_dim,
                y_t.len()
            )));
        }
        if let Some(c) = cond {
            if c.len() != arch.cond_dim {
                return Err(Error::input(format!(
                    "denoiser expects a condition of length {}, got {}",
                    arch.cond_dim,
                    c.len()
                )));
            }
        }
        let batch = NetBatch {
            y_t: Array2::from_shape_vec((1, arch.y_dim), y_t.to_vec()).unwrap(),
            t_emb: Array2::from_shape_vec((1, arch.time_dim), time_embedding(t, arch.time_dim))
                .unwrap(),
            cond: Array2::from_shape_vec((1, arch.cond_dim + 1), condition_row(cond, arch.cond_dim))
                .unwrap(),
        };
        Ok(self.forward_batch(&batch).into_raw_vec_and_offset().0)
    }

    /// Mean over rows of `‖eps − ε_θ‖²` and its exact gradient.
    pub fn loss_and_grad(&self, batch: &NetBatch, eps: &Array2<f64>) -> (f64, DenoiserNet) {
        let rows = batch.y_t.nrows();
        assert!(rows > 0, "empty batch");
        let (out, cache) = self.forward_cached(batch);
        let diff = &out - eps;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / rows as f64;
        let d_out = diff * (2.0 / rows as f64);

        let mut grad = DenoiserNet::zeros(&self.arch());
        let dh3 = self.head.backward(&cache.h3, &d_out, &mut grad.head);
        let dz3 = silu_backward(&cache.z3, &dh3);
        let dh2 = self.hidden2.backward(&cache.h2, &dz3, &mut grad.hidden2);
        let dz2 = silu_backward(&cache.z2, &dh2);
        let dh1 = self.hidden1.backward(&cache.h1, &dz2, &mut grad.hidden1);
        let dz1 = silu_backward(&cache.z1, &dh1);
        let d_fused = self.fusion.backward(&cache.fused_in, &dz1, &mut grad.fusion);
        let start = self.head.fan_out() + batch.t_emb.ncols();
        let d_cond_h = d_fused.slice(s![.., start..]).to_owned();
        let d_cond_z = silu_backward(&cache.cond_z, &d_cond_h);
        self.cond_embed
            .backward(&batch.cond, &d_cond_z, &mut grad.cond_embed);
        (loss, grad)
    }
}

impl Parameters for DenoiserNet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers().into_iter().flat_map(Dense::tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [
            &mut self.cond_embed,
            &mut self.fusion,
            &mut self.hidden1,
            &mut self.hidden2,
            &mut self.head,
        ]
        .into_iter()
        .flat_map(Dense::tensors_mut)
        .collect()
    }
}

/// Live weights plus their exponential moving average; sampling uses the
/// average.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub live: DenoiserNet,
    pub ema: DenoiserNet,
}

impl DenoiserParams {
    pub fn init<R: Rng + ?Sized>(arch: &DenoiserArch, rng: &mut R) -> Self {
        let live = DenoiserNet::init(arch, rng);
        DenoiserParams {
            ema: live.clone(),
            live,
        }
    }

    pub fn arch(&self) -> DenoiserArch {
        self.live.arch()
    }
}

impl Parameters for DenoiserParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.live.tensors();
        t.extend(self.ema.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.live.tensors_mut();
        t.extend(self.ema.tensors_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn time_embedding_at_zero_alternates() {
        let e = time_embedding(0, 32);
        for k in 0..16 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
    }

    #[test]
    fn time_embedding_range_and_separation() {
        for t in 0..=100 {
            assert!(time_embedding(t, 32).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let (a, b) = (time_embedding(1, 32), time_embedding(2, 32));
        for k in 0..16 {
            assert!(a[2 * k] != b[2 * k] && a[2 * k + 1] != b[2 * k + 1], "pair {k}");
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let arch = DenoiserArch::new(3, 3);
        let net = DenoiserNet::zeros(&arch);
        let out = net.forward(&[0.3, -1.0, 2.0], 5, Some(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn mask_bit_separates_branches() {
        let arch = DenoiserArch::new(3, 3);
        let net = DenoiserNet::init(&arch, &mut ChaCha8Rng::seed_from_u64(0));
        let y = [0.1, 0.2, 0.3];
        let c = net.forward(&y, 4, Some(&[0.0, 0.0, 0.0])).unwrap();
        let u = net.forward(&y, 4, None).unwrap();
        assert_ne!(c, u);
        assert_eq!(u, net.forward(&y, 4, None).unwrap());
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let arch = DenoiserArch::new(3, 3);
        let net = DenoiserNet::zeros(&arch);
        assert!(matches!(net.forward(&[0.0; 2], 1, None), Err(Error::Input(_))));
        assert!(matches!(net.forward(&[0.0; 3], 1, Some(&[0.0; 4])), Err(Error::Input(_))));
    }

    #[test]
    fn arch_round_trips_through_shapes() {
        let arch = DenoiserArch::new(6, 14);
        let net = DenoiserNet::zeros(&arch);
        assert_eq!(net.arch(), arch);
    }
}

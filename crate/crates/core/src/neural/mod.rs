//! The ε-prediction network and its training machinery: hand-written
//! reverse-mode gradients, Adam with milestone decay and a weight EMA.

mod adam;
mod dense;
mod denoiser;
mod mlp;

pub use adam::{AdamHyper, TrainState};
pub use dense::{ema_update, sigmoid, silu, silu_backward, Dense, Parameters};
pub use denoiser::{
    condition_row, time_embedding, DenoiserArch, DenoiserNet, DenoiserParams, NetBatch,
};
pub use mlp::{Mlp, MlpCache};

/// Default EMA decay per optimizer step.
pub const EMA_DECAY: f64 = 0.999;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ema_starts_equal_and_tracks_geometrically() {
        let arch = DenoiserArch::new(2, 2);
        let mut params = DenoiserParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(params.ema, params.live);

        let before = params.ema.flatten();
        let delta = 0.25;
        for t in params.live.tensors_mut() {
            t.iter_mut().for_each(|v| *v += delta);
        }
        ema_update(&mut params.ema, &params.live, EMA_DECAY);
        let live = params.live.flatten();
        for ((e, l), b) in params.ema.flatten().iter().zip(&live).zip(&before) {
            assert!(((l - e) - EMA_DECAY * delta).abs() < 1e-12);
            assert!((e - (b + (1.0 - EMA_DECAY) * delta)).abs() < 1e-12);
        }
        let gap0 = live[0] - params.ema.flatten()[0];
        for _ in 0..100 {
            ema_update(&mut params.ema, &params.live, EMA_DECAY);
        }
        let gap = live[0] - params.ema.flatten()[0];
        assert!((gap - gap0 * EMA_DECAY.powi(100)).abs() < 1e-12);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// A reproducible random stream addressed by `(seed, stream)`.
///
/// Backed by ChaCha8, whose native 64-bit stream selector gives independent
/// sequences for distinct stream ids under one key. Streams never share
/// state, so per-clip or per-step streams can be drawn in any order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut g = ChaCha8Rng::seed_from_u64(self.seed);
        g.set_stream(self.stream);
        g
    }

    /// Child stream identified by `label`. Children of distinct labels, and
    /// of distinct parents, land on unrelated stream ids.
    pub fn split(&self, label: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x5851_F42D))),
        }
    }

    /// Chained `split` over several labels.
    pub fn derive(&self, labels: &[u64]) -> RngStream {
        labels.iter().fold(*self, |s, &l| s.split(l))
    }

    pub fn uniform_tensor(&self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let mut g = self.generator();
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| g.random_range(lo..hi)).collect();
        Tensor::new(shape.to_vec(), data).expect("positive shape")
    }
}

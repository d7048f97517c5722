//! Counter-based random streams.
//!
//! Every stochastic task draws from a ChaCha8 stream whose key is the master
//! seed and whose stream id is a hash of the task's index path. Two runs with
//! the same master seed therefore see identical numbers per task no matter how
//! tasks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Handle naming one position in the tree of random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub master: u64,
    pub id: u64,
}

impl Stream {
    pub fn new(master: u64) -> Self {
        Stream { master, id: 0 }
    }

    /// Derive the child stream for task `index`.
    pub fn child(self, index: u64) -> Self {
        let id = splitmix64(self.id ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Stream { master: self.master, id }
    }

    /// Follow a path of task indices.
    pub fn path(self, indices: &[u64]) -> Self {
        indices.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn rng(self) -> Rng {
        let mut seed = [0u8; 32];
        let mut x = self.master;
        for chunk in seed.chunks_mut(8) {
            x = splitmix64(x);
            chunk.copy_from_slice(&x.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.id);
        rng
    }
}

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deterministic random stream identified by `(seed, stream id)`.
///
/// The same pair always yields the same draws. Child streams are derived by
/// mixing tags into the stream id, so every `(datapoint, run, stage)` triple
/// gets its own sequence no matter which thread consumes it.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh child stream; does not consume draws from `self`.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream::new(self.seed, mix(self.stream ^ mix(tag.wrapping_add(1))))
    }

    pub fn derive_path(&self, tags: &[u64]) -> RngStream {
        tags.iter().fold(self.clone_fresh(), |acc, &t| acc.derive(t))
    }

    /// The same stream rewound to its first draw.
    pub fn clone_fresh(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

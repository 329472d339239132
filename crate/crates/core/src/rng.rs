use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type FdrRng = ChaCha8Rng;

/// Independent generator for stream `stream` of `seed`.
///
/// Replications, data splits and Gaussian-mirror draws each take their own
/// stream, so results do not depend on execution order.
pub fn substream(seed: u64, stream: u64) -> FdrRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

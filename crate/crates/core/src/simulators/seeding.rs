use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "PROXIDIST_THREADS";

/// splitmix64 finalizer; decorrelates nearby seeds.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for replication `rep` of configuration `tag` under `base`.
pub fn replication_rng(base: u64, tag: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base, tag));
    rng.set_stream(rep);
    rng
}

/// Runs `f` inside a pool sized by `PROXIDIST_THREADS` when set, else rayon's default.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&t| t > 0);
    match threads.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

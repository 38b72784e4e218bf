//! Portable deterministic random numbers.
//!
//! A splitmix64-seeded xoshiro256** generator. Every stochastic piece of the
//! lab (data generation, weight init, batch sampling, replay subsampling)
//! draws from its own substream derived from a base seed and a small tag
//! path, so runs are bit-reproducible across platforms and immune to
//! reordering of unrelated draws.

/// One step of the splitmix64 sequence.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a stream tag.
///
/// Chainable: `derive_seed(derive_seed(s, a), b)` names the substream `[a, b]`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut state = base ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    let a = splitmix64(&mut state);
    splitmix64(&mut state).wrapping_add(a.rotate_left(17))
}

fn rol64(x: u64, k: u32) -> u64 {
    (x << k) | (x >> (64 - k))
}

/// xoshiro256** with a Box-Muller normal cache.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // an all-zero state is the one forbidden xoshiro state
        if s == [0, 0, 0, 0] {
            s[0] = 0x9e3779b97f4a7c15;
        }
        Rng {
            s,
            spare_normal: None,
        }
    }

    /// Generator for the substream named by `tags` under `base`.
    pub fn substream(base: u64, tags: &[u64]) -> Self {
        let seed = tags.iter().fold(base, |acc, &t| derive_seed(acc, t));
        Rng::new(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = rol64(self.s[1].wrapping_mul(5), 7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = rol64(self.s[3], 45);
        result
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform index in [0, n). Multiply-shift; bias is below 2^-53 for the
    /// pool sizes used here.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Standard normal via Box-Muller; the second draw of each pair is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    /// `k` distinct indices from [0, n), in selection order (partial
    /// Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

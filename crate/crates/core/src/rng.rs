//! Seedable random stream and the special-purpose draws the Gibbs blocks
//! are built from.
//!
//! Every sampler in this crate is a pure function of its arguments and the
//! state of the [`RandomStream`] passed in, so a run is fully determined by
//! its seed. Independent workers split child streams off a root stream by
//! stream id rather than sharing one generator.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` accepted by [`stirling_pmf_oracle`]; the unsigned Stirling
/// numbers are kept in exact integer arithmetic and grow factorially.
pub const STIRLING_ORACLE_MAX_N: u64 = 12;

fn mix64(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic, splittable random stream backed by ChaCha20.
///
/// Identical `(seed, stream)` pairs produce identical draw sequences.
/// The counter position is exposed so a stream can be checkpointed and
/// resumed bit-exactly.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Stream `id` of the family rooted at `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let derived = mix64(seed ^ mix64(stream.wrapping_add(0xA5A5_5A5A_0F0F_F0F0)));
        RandomStream {
            seed,
            stream,
            rng: ChaCha20Rng::seed_from_u64(derived),
        }
    }

    /// Split off an independent child stream. The child is a pure function
    /// of `(root seed, id)`, not of this stream's current position.
    pub fn child(&self, id: u64) -> Self {
        Self::with_stream(self.seed, mix64(self.stream).wrapping_add(id).wrapping_add(1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.rng.random::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        rand_distr::StandardNormal.sample(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Serialized form: seed, stream id and counter position fully determine
/// the generator, so round-trips are bit-exact.
#[derive(Serialize, Deserialize)]
struct StreamRepr {
    seed: u64,
    stream: u64,
    word_pos_hi: u64,
    word_pos_lo: u64,
}

impl Serialize for RandomStream {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pos = self.rng.get_word_pos();
        StreamRepr {
            seed: self.seed,
            stream: self.stream,
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RandomStream {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = StreamRepr::deserialize(d)?;
        let mut out = RandomStream::with_stream(repr.seed, repr.stream);
        out.rng
            .set_word_pos(((repr.word_pos_hi as u128) << 64) | repr.word_pos_lo as u128);
        Ok(out)
    }
}

/// Draw from Gamma(shape, rate).
///
/// Shapes below 1 are handled by the boosting identity (draw at shape+1,
/// scale by U^{1/shape}), which `rand_distr` applies internally. Results
/// are clamped into a wide finite band: the weak-limit prior routinely
/// produces shapes small enough that draws underflow (or, through the
/// resulting degenerate rate totals, overflow), and downstream
/// log/ratio arithmetic must stay finite. The clamp only binds where
/// the draw has left representable range.
pub fn gamma_draw(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) {
        return Err(Error::parameter(format!(
            "gamma_draw requires shape > 0 and rate > 0, got shape={shape}, rate={rate}"
        )));
    }
    let dist = rand_distr::Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::parameter(format!("gamma_draw: {e}")))?;
    Ok(dist.sample(rng).clamp(f64::MIN_POSITIVE, 1e290))
}

/// Draw from Beta(a, b), clamped strictly inside (0, 1) so logs of
/// either tail stay finite when extreme parameters underflow the draw.
pub fn beta_draw(a: f64, b: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::parameter(format!(
            "beta_draw requires positive parameters, got a={a}, b={b}"
        )));
    }
    let dist = rand_distr::Beta::new(a, b)
        .map_err(|e| Error::parameter(format!("beta_draw: {e}")))?;
    Ok(dist.sample(rng).clamp(1e-300, 1.0 - 1e-16))
}

/// Draw from Poisson(rate); rate 0 gives 0.
pub fn poisson_draw(rate: f64, rng: &mut RandomStream) -> Result<u64> {
    if rate < 0.0 || !rate.is_finite() {
        return Err(Error::parameter(format!(
            "poisson_draw requires finite rate >= 0, got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let dist = rand_distr::Poisson::new(rate)
        .map_err(|e| Error::parameter(format!("poisson_draw: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Draw a Dirichlet vector with the given masses via normalized Gammas.
pub fn dirichlet_draw(masses: &[f64], rng: &mut RandomStream) -> Result<Vec<f64>> {
    if masses.is_empty() {
        return Err(Error::parameter("dirichlet_draw: empty mass vector"));
    }
    let mut out = Vec::with_capacity(masses.len());
    for &m in masses {
        out.push(gamma_draw(m, 1.0, rng)?);
    }
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Number of occupied tables after seating `n` customers in a Chinese
/// restaurant with the given concentration mass.
///
/// Customer i (0-based) opens a new table with probability
/// `mass / (i + mass)`; the count is distributed proportional to
/// `s(n, m) · mass^m` with `s` the unsigned Stirling numbers of the first
/// kind. Sampling by simulation avoids enumerating those coefficients.
pub fn crp_table_count(n: u64, mass: f64, rng: &mut RandomStream) -> Result<u64> {
    if !(mass > 0.0) {
        return Err(Error::parameter(format!(
            "crp_table_count requires mass > 0, got {mass}"
        )));
    }
    let mut tables = 0u64;
    for i in 0..n {
        if rng.uniform() * (i as f64 + mass) < mass {
            tables += 1;
        }
    }
    Ok(tables)
}

/// Exact pmf of the table count for `n` customers and the given mass,
/// over m = 0..=n. Test oracle for [`crp_table_count`]; `n` is capped so
/// the Stirling table stays in exact integer range.
pub fn stirling_pmf_oracle(n: u64, mass: f64) -> Result<Vec<f64>> {
    if n > STIRLING_ORACLE_MAX_N {
        return Err(Error::parameter(format!(
            "stirling_pmf_oracle only supports n <= {STIRLING_ORACLE_MAX_N}, got {n}"
        )));
    }
    if !(mass > 0.0) {
        return Err(Error::parameter("stirling_pmf_oracle requires mass > 0"));
    }
    let n = n as usize;
    // s(i+1, m) = i*s(i, m) + s(i, m-1), s(0,0)=1
    let mut stirling = vec![vec![0u128; n + 1]; n + 1];
    stirling[0][0] = 1;
    for i in 0..n {
        for m in 0..=i + 1 {
            let carry = stirling[i][m].checked_mul(i as u128).ok_or_else(|| {
                Error::numeric("stirling_pmf_oracle: integer overflow".to_string())
            })?;
            let lift = if m > 0 { stirling[i][m - 1] } else { 0 };
            stirling[i + 1][m] = carry + lift;
        }
    }
    let mut pmf: Vec<f64> = (0..=n)
        .map(|m| stirling[n][m] as f64 * mass.powi(m as i32))
        .collect();
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    Ok(pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn streams_are_reproducible() {
        let mut a = RandomStream::new(7);
        let mut b = RandomStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RandomStream::new(8);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn child_streams_are_independent_of_parent_position() {
        let parent = RandomStream::new(3);
        let mut advanced = RandomStream::new(3);
        for _ in 0..10 {
            advanced.next_u64();
        }
        let mut c1 = parent.child(0);
        let mut c2 = advanced.child(0);
        assert_eq!(c1.next_u64(), c2.next_u64());
        let mut c3 = parent.child(1);
        assert_ne!(c1.next_u64(), c3.next_u64());
    }

    #[test]
    fn stream_serde_roundtrip_continues_identically() {
        let mut rng = RandomStream::new(42);
        for _ in 0..17 {
            rng.uniform();
        }
        let json = serde_json::to_string(&rng).unwrap();
        let mut restored: RandomStream = serde_json::from_str(&json).unwrap();
        for _ in 0..50 {
            assert_eq!(rng.next_u64(), restored.next_u64());
        }
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let mut rng = RandomStream::new(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| gamma_draw(1.0, 2.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(mean, 0.5, epsilon = 0.01);
    }

    #[test]
    fn gamma_moment_oracle() {
        // mean = shape / rate
        let mut rng = RandomStream::new(12);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| gamma_draw(5.5, 5.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(mean, 1.1, epsilon = 0.02);
    }

    #[test]
    fn gamma_tiny_shape_stays_positive() {
        let mut rng = RandomStream::new(13);
        for _ in 0..10_000 {
            assert!(gamma_draw(1e-4, 1.0, &mut rng).unwrap() > 0.0);
        }
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut rng = RandomStream::new(0);
        assert!(gamma_draw(0.0, 1.0, &mut rng).is_err());
        assert!(gamma_draw(1.0, 0.0, &mut rng).is_err());
        assert!(gamma_draw(-1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dirichlet_degenerate_and_means() {
        let mut rng = RandomStream::new(21);
        assert_eq!(dirichlet_draw(&[1.0], &mut rng).unwrap(), vec![1.0]);

        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let d = dirichlet_draw(&[2.0, 2.0], &mut rng).unwrap();
            acc[0] += d[0];
            acc[1] += d[1];
        }
        assert_abs_diff_eq!(acc[0] / n as f64, 0.5, epsilon = 0.01);

        let mut acc3 = [0.0; 3];
        for _ in 0..n {
            let d = dirichlet_draw(&[1.0, 2.0, 3.0], &mut rng).unwrap();
            for k in 0..3 {
                acc3[k] += d[k];
            }
        }
        for (k, want) in [(0, 1.0 / 6.0), (1, 2.0 / 6.0), (2, 3.0 / 6.0)] {
            assert_abs_diff_eq!(acc3[k] / n as f64, want, epsilon = 0.01);
        }
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = RandomStream::new(22);
        for _ in 0..1000 {
            let d = dirichlet_draw(&[0.05, 1.0, 7.0, 0.2], &mut rng).unwrap();
            assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(d.iter().all(|&v| v > 0.0));
        }
        assert!(dirichlet_draw(&[], &mut rng).is_err());
        assert!(dirichlet_draw(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn crp_degenerate_counts() {
        let mut rng = RandomStream::new(31);
        for _ in 0..100 {
            assert_eq!(crp_table_count(0, 1.0, &mut rng).unwrap(), 0);
            assert_eq!(crp_table_count(1, 0.37, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn crp_two_customers_unit_mass() {
        // s(2,1) = s(2,2) = 1, so P(m=1) = P(m=2) = 1/2 at mass 1.
        let mut rng = RandomStream::new(32);
        let n = 100_000;
        let mut ones = 0u64;
        for _ in 0..n {
            if crp_table_count(2, 1.0, &mut rng).unwrap() == 1 {
                ones += 1;
            }
        }
        assert_abs_diff_eq!(ones as f64 / n as f64, 0.5, epsilon = 0.01);
    }

    #[test]
    fn crp_matches_stirling_oracle() {
        let mut rng = RandomStream::new(33);
        let draws = 100_000usize;
        for n in 0..=6u64 {
            for mass in [0.1, 1.0, 10.0] {
                let oracle = stirling_pmf_oracle(n, mass).unwrap();
                let mut counts = vec![0u64; n as usize + 1];
                for _ in 0..draws {
                    counts[crp_table_count(n, mass, &mut rng).unwrap() as usize] += 1;
                }
                let tv: f64 = oracle
                    .iter()
                    .zip(&counts)
                    .map(|(p, &c)| (p - c as f64 / draws as f64).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(
                    tv < 0.01,
                    "total variation {tv} too large for n={n}, mass={mass}"
                );
            }
        }
    }

    #[test]
    fn stirling_oracle_known_rows() {
        assert_eq!(stirling_pmf_oracle(0, 1.0).unwrap(), vec![1.0]);
        assert_eq!(stirling_pmf_oracle(1, 3.7).unwrap(), vec![0.0, 1.0]);
        // s(3, .) = (0, 2, 3, 1)
        let pmf = stirling_pmf_oracle(3, 1.0).unwrap();
        let want = [0.0, 2.0 / 6.0, 3.0 / 6.0, 1.0 / 6.0];
        for (p, w) in pmf.iter().zip(want) {
            assert_abs_diff_eq!(*p, w, epsilon = 1e-12);
        }
        assert!(stirling_pmf_oracle(13, 1.0).is_err());
    }
}

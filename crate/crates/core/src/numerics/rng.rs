//! Counter-based splittable random streams.
//!
//! A stream is identified by a 64-bit key derived from the root seed and the
//! list of labels used to split it. The `n`-th draw of a stream is a pure
//! function of `(key, n)`, so results never depend on scheduling or thread
//! count as long as every unit of parallel work owns its own child stream.

use super::NumericsError;
use super::Vector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(parent: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes, then folded into the parent key.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h ^= label.len() as u64;
    mix64(mix64(parent ^ 0xA076_1D64_78BD_642F).wrapping_add(mix64(h)))
}

/// Single-owner random stream. Cloning copies the position, so a clone
/// replays the same values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    path: Vec<String>,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
            key: mix64(seed.wrapping_add(GOLDEN)),
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream keyed by `label`. The parent is not advanced.
    pub fn split(&self, label: &str) -> RngStream {
        let mut path = self.path.clone();
        path.push(label.to_string());
        RngStream {
            seed: self.seed,
            path,
            key: derive_key(self.key, label),
            counter: 0,
        }
    }

    /// Child stream for the `index`-th unit of a parallel loop.
    pub fn split_index(&self, index: u64) -> RngStream {
        self.split(&index.to_string())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix64(mix64(self.key.wrapping_add(c.wrapping_mul(GOLDEN))) ^ self.key.rotate_left(29))
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Standard normal draw by inverting the normal CDF.
    #[inline]
    pub fn gauss(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-40 for the sizes used here.
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }
}

pub fn make_rng(seed: u64) -> RngStream {
    RngStream::new(seed)
}

pub fn gauss_vector(rng: &mut RngStream, n: usize) -> Result<Vector, NumericsError> {
    if n == 0 {
        return Err(NumericsError::EmptyDimension("gauss_vector"));
    }
    Ok(Vector::from_fn(n, |_, _| rng.gauss()))
}

pub fn rademacher_vector(rng: &mut RngStream, n: usize) -> Result<Vector, NumericsError> {
    if n == 0 {
        return Err(NumericsError::EmptyDimension("rademacher_vector"));
    }
    Ok(Vector::from_fn(n, |_, _| rng.sign()))
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error below 1.2e-9 over the whole open unit interval).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    const P_HIGH: f64 = 1.0 - P_LOW;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= P_HIGH {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_first_draw() {
        assert_eq!(make_rng(0).next_u64(), make_rng(0).next_u64());
    }

    #[test]
    fn distinct_seeds_differ() {
        let mut a = make_rng(0);
        let mut b = make_rng(1);
        let differing = (0..1000).filter(|_| a.uniform() != b.uniform()).count();
        assert!(differing >= 990, "only {differing} positions differ");
    }

    #[test]
    fn split_does_not_advance_parent() {
        let mut plain = make_rng(7);
        let mut split = make_rng(7);
        let _child = split.split("a");
        assert_eq!(plain.next_u64(), split.next_u64());
        assert_eq!(split.counter(), 1);
    }

    #[test]
    fn split_records_path() {
        let child = make_rng(3).split("a").split("b");
        assert_eq!(child.path(), ["a".to_string(), "b".to_string()]);
        assert_eq!(child.counter(), 0);
        assert_ne!(make_rng(3).split("a"), make_rng(3).split("b"));
    }

    #[test]
    fn gaussian_mean_and_variance() {
        let mut rng = make_rng(11);
        let v = gauss_vector(&mut rng, 1_000_000).unwrap();
        let n = v.len() as f64;
        let mean = v.sum() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn gaussian_is_reproducible() {
        let rng = make_rng(5).split("g");
        let a = gauss_vector(&mut rng.clone(), 1).unwrap();
        let b = gauss_vector(&mut rng.clone(), 1).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn empty_vectors_rejected() {
        let mut rng = make_rng(0);
        assert!(gauss_vector(&mut rng, 0).is_err());
        assert!(rademacher_vector(&mut rng, 0).is_err());
    }

    #[test]
    fn rademacher_support_and_mean() {
        let mut rng = make_rng(12);
        let v = rademacher_vector(&mut rng, 1_000_000).unwrap();
        assert!(v.iter().all(|e| e * e == 1.0));
        assert!((v.sum() / v.len() as f64).abs() < 4e-3);
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let parent = make_rng(99);
        let mut x = parent.split("x");
        let mut y = parent.split("y");
        let a = rademacher_vector(&mut x, 100_000).unwrap();
        let b = rademacher_vector(&mut y, 100_000).unwrap();
        let corr = a.dot(&b) / a.len() as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn quantile_matches_known_values() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((inverse_normal_cdf(0.001) + 3.090_232_306_167_813_5).abs() < 1e-8);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = make_rng(1);
        assert!((0..10_000).all(|_| rng.below(7) < 7));
    }
}

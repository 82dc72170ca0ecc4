//! Reproducible quenched environments and detection of atypical charge
//! stretches and their stopping times.
//!
//! Environments are generated from a counter-based stream keyed by
//! `(seed, sample_index)`, so distinct sample indices give independent
//! charge sequences and regeneration is bit-identical.

use crate::engine::{self, EngineError, SweepOptions, SweepState};
use crate::model::{ChargeLaw, PolymerParams};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DisorderError {
    #[error("environment length must be even, got {0}")]
    OddLength(usize),
    #[error("requested prefix {requested} exceeds environment length {len}")]
    PrefixTooLong { requested: usize, len: usize },
    #[error("cap {cap} exceeds environment length {len}")]
    CapExceedsLength { cap: usize, len: usize },
    #[error("window length M must be even and positive, got {0}")]
    BadWindowLength(usize),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("crossing level C must exceed 1, got {0}")]
    BadLevel(f64),
    #[error("malformed environment file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<std::io::Error> for DisorderError {
    fn from(e: std::io::Error) -> Self {
        DisorderError::Io(e.to_string())
    }
}

/// A fixed realization of the charge sequence, of even length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    law: ChargeLaw,
    seed: u64,
    sample_index: u64,
    charges: Vec<f64>,
}

impl Environment {
    pub fn law(&self) -> ChargeLaw {
        self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    /// Forward view of the full charge sequence.
    pub fn view(&self) -> EnvView<'_> {
        EnvView { data: &self.charges, reversed: false }
    }

    /// View of the first `n` charges in backward order: charge `i` (0-based)
    /// reads as the original charge `n - 1 - i`. No copy is made.
    pub fn reversed(&self, n: usize) -> Result<EnvView<'_>, DisorderError> {
        self.view().reversed(n)
    }

    /// Bias level above which the pinned value stays below 1 for every
    /// coupling: the largest of `-(w_(2i) + w_(2i+1))/2` over pairs.
    pub fn saturation_bias(&self, size: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for p in self.charges[..size.min(self.len())].chunks_exact(2) {
            best = best.max(-(p[0] + p[1]) / 2.0);
        }
        best
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), DisorderError> {
        out.write_all(&[law_tag(self.law)])?;
        out.write_all(&(self.charges.len() as u64).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.sample_index.to_le_bytes())?;
        for c in &self.charges {
            out.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Environment, DisorderError> {
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        let law = match tag[0] {
            0 => ChargeLaw::BernoulliSymmetric,
            1 => ChargeLaw::StandardGaussian,
            t => return Err(DisorderError::Malformed(format!("unknown law tag {t}"))),
        };
        let mut buf8 = [0u8; 8];
        input.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8) as usize;
        input.read_exact(&mut buf8)?;
        let seed = u64::from_le_bytes(buf8);
        input.read_exact(&mut buf8)?;
        let sample_index = u64::from_le_bytes(buf8);
        if len % 2 != 0 {
            return Err(DisorderError::OddLength(len));
        }
        let mut charges = Vec::with_capacity(len);
        for _ in 0..len {
            input.read_exact(&mut buf8)?;
            charges.push(f64::from_le_bytes(buf8));
        }
        Ok(Environment { law, seed, sample_index, charges })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DisorderError> {
        writeln!(out, "# law = {}", self.law)?;
        writeln!(out, "# seed = {}", self.seed)?;
        writeln!(out, "# sample_index = {}", self.sample_index)?;
        writeln!(out, "index,charge")?;
        for (i, c) in self.charges.iter().enumerate() {
            writeln!(out, "{},{:.16e}", i + 1, c)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Environment, DisorderError> {
        let reader = std::io::BufReader::new(input);
        let mut law = None;
        let mut seed = 0u64;
        let mut sample_index = 0u64;
        let mut charges = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "index,charge" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    match k {
                        "law" => law = Some(v.parse().map_err(|_| DisorderError::Malformed(format!("law `{v}`")))?),
                        "seed" => seed = v.parse().map_err(|_| DisorderError::Malformed(format!("seed `{v}`")))?,
                        "sample_index" => {
                            sample_index = v.parse().map_err(|_| DisorderError::Malformed(format!("sample_index `{v}`")))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let (_, c) = line
                .split_once(',')
                .ok_or_else(|| DisorderError::Malformed(format!("bad row `{line}`")))?;
            charges.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| DisorderError::Malformed(format!("bad charge `{c}`")))?,
            );
        }
        let law = law.ok_or_else(|| DisorderError::Malformed("missing `# law = ...` header".into()))?;
        if charges.len() % 2 != 0 {
            return Err(DisorderError::OddLength(charges.len()));
        }
        Ok(Environment { law, seed, sample_index, charges })
    }
}

fn law_tag(law: ChargeLaw) -> u8 {
    match law {
        ChargeLaw::BernoulliSymmetric => 0,
        ChargeLaw::StandardGaussian => 1,
    }
}

/// Borrowed, possibly reversed, window onto a charge sequence.
#[derive(Debug, Clone, Copy)]
pub struct EnvView<'a> {
    data: &'a [f64],
    reversed: bool,
}

impl<'a> EnvView<'a> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Charge at 0-based position `i`.
    #[inline]
    pub fn charge(&self, i: usize) -> f64 {
        if self.reversed {
            self.data[self.data.len() - 1 - i]
        } else {
            self.data[i]
        }
    }

    /// The first `n` presented charges in backward order.
    pub fn reversed(&self, n: usize) -> Result<EnvView<'a>, DisorderError> {
        if n > self.len() {
            return Err(DisorderError::PrefixTooLong { requested: n, len: self.len() });
        }
        let data = if self.reversed {
            &self.data[self.data.len() - n..]
        } else {
            &self.data[..n]
        };
        Ok(EnvView { data, reversed: !self.reversed })
    }

    /// Drop the first `k` presented charges (the shift acting on the
    /// environment).
    pub fn shifted(&self, k: usize) -> EnvView<'a> {
        if self.reversed {
            EnvView { data: &self.data[..self.data.len() - k], reversed: true }
        } else {
            EnvView { data: &self.data[k..], reversed: false }
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.charge(i)).collect()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Expand `(seed, sample_index)` into a 256-bit stream key.
fn stream_key(seed: u64, sample_index: u64) -> [u8; 32] {
    let mut state = seed;
    let a = splitmix64(&mut state);
    let b = splitmix64(&mut state);
    state ^= sample_index.wrapping_mul(0xD1342543DE82EF95).wrapping_add(0x2545F4914F6CDD1D);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..].copy_from_slice(&d.to_le_bytes());
    key
}

/// Draw an IID environment of even `length`. Distinct `sample_index` values
/// give independent streams under the same seed.
pub fn generate(
    law: ChargeLaw,
    length: usize,
    seed: u64,
    sample_index: u64,
) -> Result<Environment, DisorderError> {
    if length % 2 != 0 {
        return Err(DisorderError::OddLength(length));
    }
    let mut rng = ChaCha12Rng::from_seed(stream_key(seed, sample_index));
    let charges: Vec<f64> = match law {
        ChargeLaw::BernoulliSymmetric => (0..length)
            .map(|_| if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 })
            .collect(),
        ChargeLaw::StandardGaussian => {
            (0..length).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    Ok(Environment { law, seed, sample_index, charges })
}

/// Wrap externally supplied charges (file input, hand-built test sequences).
/// The `(seed, sample_index)` provenance of such an environment is zeroed and
/// carries no regeneration guarantee.
pub fn from_charges(law: ChargeLaw, charges: Vec<f64>) -> Result<Environment, DisorderError> {
    if charges.len() % 2 != 0 {
        return Err(DisorderError::OddLength(charges.len()));
    }
    Ok(Environment { law, seed: 0, sample_index: 0, charges })
}

/// Outcome of a stretch search. `None` fields mean the search was censored
/// at `cap` (or the quantity does not apply to the operation that produced
/// the record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchRecord {
    /// First even time at which a q-atypical stretch of length >= M ends.
    pub tau: Option<usize>,
    /// Length of the shortest terminal stretch at `tau`.
    pub r: Option<usize>,
    pub q: f64,
    /// Minimal stretch length M (or the start length A of the scan).
    pub m_or_a: usize,
    pub epsilon: Option<f64>,
    /// First scan length whose stretch time is below the rate threshold.
    pub ell: Option<usize>,
    /// Stretch time at `ell`.
    pub t: Option<usize>,
    pub cap: usize,
}

impl StretchRecord {
    pub fn censored(&self) -> bool {
        self.tau.is_none()
    }
}

/// First even time `tau <= cap` such that some terminal window of even length
/// `k >= m` has average charge at most `q`, together with the shortest such
/// window length.
///
/// Runs on the tilted prefix sums `Q_j = P_j - q j` restricted to the even
/// sublattice: the defining condition at time `n` is `Q_n <= max_(j <= n-m) Q_j`,
/// maintained with a running maximum. The shortest window comes from a
/// monotone stack of suffix-record indices, queried by binary search.
pub fn find_tau(
    env: &Environment,
    q: f64,
    m: usize,
    cap: usize,
) -> Result<StretchRecord, DisorderError> {
    if m == 0 || m % 2 != 0 {
        return Err(DisorderError::BadWindowLength(m));
    }
    if cap > env.len() {
        return Err(DisorderError::CapExceedsLength { cap, len: env.len() });
    }
    let record = |tau: Option<usize>, r: Option<usize>| StretchRecord {
        tau,
        r,
        q,
        m_or_a: m,
        epsilon: None,
        ell: None,
        t: None,
        cap,
    };

    let charges = env.charges();
    // Q over even indices only; tilted[j/2] = Q_j for even j.
    let half = cap / 2;
    let mut tilted = Vec::with_capacity(half + 1);
    tilted.push(0.0f64);
    let mut p = 0.0f64;
    for j in 0..half {
        p += charges[2 * j] + charges[2 * j + 1];
        tilted.push(p - q * (2 * (j + 1)) as f64);
    }

    let mut best = f64::NEG_INFINITY;
    // (even index j, Q_j) with strictly decreasing Q and increasing j.
    let mut stack: Vec<(usize, f64)> = Vec::new();
    for n in (m..=cap).step_by(2) {
        let j = n - m; // newly eligible window start
        let qj = tilted[j / 2];
        if qj > best {
            best = qj;
        }
        while stack.last().is_some_and(|&(_, v)| v <= qj) {
            stack.pop();
        }
        stack.push((j, qj));
        let qn = tilted[n / 2];
        if qn <= best {
            // deepest stack entry with value >= qn has the largest start index
            let mut lo = 0usize;
            let mut hi = stack.len(); // entries [0, hi) have value >= qn
            while lo < hi {
                let mid = (lo + hi) / 2;
                if stack[mid].1 >= qn {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            let start = stack[lo - 1].0;
            return Ok(record(Some(n), Some(n - start)));
        }
    }
    Ok(record(None, None))
}

/// Scan window lengths `k = a, a+2, ...` until the stretch time `tau_(k,q)`
/// satisfies `log(tau)/k <= Sigma(q) + epsilon`; the hit defines `ell` and
/// the random time `T = tau_ell`. Censored as soon as a scan hits `cap`.
pub fn find_t(
    env: &Environment,
    q: f64,
    a: usize,
    epsilon: f64,
    cap: usize,
) -> Result<StretchRecord, DisorderError> {
    if a == 0 || a % 2 != 0 {
        return Err(DisorderError::BadWindowLength(a));
    }
    if !(epsilon > 0.0) {
        return Err(DisorderError::BadEpsilon(epsilon));
    }
    let threshold = crate::model::cramer_rate(env.law(), q) + epsilon;
    let mut k = a;
    loop {
        let rec = find_tau(env, q, k, cap)?;
        let Some(tau) = rec.tau else {
            return Ok(StretchRecord { m_or_a: a, epsilon: Some(epsilon), ..rec });
        };
        if (tau as f64).ln() / k as f64 <= threshold {
            return Ok(StretchRecord {
                m_or_a: a,
                epsilon: Some(epsilon),
                ell: Some(k),
                t: Some(tau),
                ..rec
            });
        }
        // Terminates: tau is capped, so once log(cap)/k drops below the
        // threshold every later k either hits or censors.
        k += 2;
    }
}

/// Result of the first-crossing search for the pinned partition value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// First even size at which `Z(0) >= level`; `None` if censored at `cap`.
    pub time: Option<usize>,
    /// log of the pinned value attained at the crossing.
    pub log_z: Option<f64>,
    pub level: f64,
    pub cap: usize,
}

/// First even size `n <= cap` with pinned partition value at least `level`
/// (in linear scale), driven by a single incremental transfer-matrix sweep.
pub fn detect_tc(
    env: &Environment,
    params: &PolymerParams,
    level: f64,
    cap: usize,
    window: Option<engine::Window>,
) -> Result<Crossing, DisorderError> {
    if !(level > 1.0) {
        return Err(DisorderError::BadLevel(level));
    }
    if cap % 2 != 0 {
        return Err(DisorderError::BadWindowLength(cap));
    }
    if cap > env.len() {
        return Err(DisorderError::CapExceedsLength { cap, len: env.len() });
    }
    let log_level = level.ln();
    let opts = SweepOptions { window, ..Default::default() };
    let mut state = SweepState::new(cap, opts.window, opts.rescale_threshold)?;
    let charges = env.charges();
    for m in 0..cap / 2 {
        let alpha = engine::pair_weight(params, charges[2 * m], charges[2 * m + 1]);
        if !alpha.is_finite() {
            return Err(EngineError::NonFinite.into());
        }
        state.step(alpha)?;
        let log_z = state.pinned_log();
        if log_z >= log_level {
            return Ok(Crossing { time: Some(2 * (m + 1)), log_z: Some(log_z), level, cap });
        }
    }
    Ok(Crossing { time: None, log_z: None, level, cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_support_and_determinism() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 10, 42, 0).unwrap();
        assert_eq!(env.len(), 10);
        assert!(env.charges().iter().all(|&c| c == 1.0 || c == -1.0));

        let big = generate(ChargeLaw::BernoulliSymmetric, 1_000_000, 42, 0).unwrap();
        let again = generate(ChargeLaw::BernoulliSymmetric, 1_000_000, 42, 0).unwrap();
        assert_eq!(big.charges(), again.charges());

        assert_eq!(generate(ChargeLaw::StandardGaussian, 7, 1, 0), Err(DisorderError::OddLength(7)));
    }

    #[test]
    fn gaussian_moments() {
        let env = generate(ChargeLaw::StandardGaussian, 1_000_000, 7, 0).unwrap();
        let n = env.len() as f64;
        let mean = env.charges().iter().sum::<f64>() / n;
        let var = env.charges().iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn bernoulli_moments() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 1_000_000, 9, 3).unwrap();
        let n = env.len() as f64;
        let mean = env.charges().iter().sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn distinct_sample_indices_differ() {
        let a = generate(ChargeLaw::BernoulliSymmetric, 128, 5, 0).unwrap();
        let b = generate(ChargeLaw::BernoulliSymmetric, 128, 5, 1).unwrap();
        assert_ne!(a.charges(), b.charges());
    }

    #[test]
    fn reversed_views() {
        let env = from_charges(ChargeLaw::StandardGaussian, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = env.reversed(4).unwrap();
        assert_eq!(r.to_vec(), vec![4.0, 3.0, 2.0, 1.0]);
        let rr = r.reversed(4).unwrap();
        assert_eq!(rr.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);

        let env2 = from_charges(ChargeLaw::BernoulliSymmetric, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(env2.reversed(2).unwrap().to_vec(), vec![-1.0, 1.0]);

        assert!(env.reversed(6).is_err());
    }

    #[test]
    fn shifted_views() {
        let env = from_charges(ChargeLaw::StandardGaussian, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(env.view().shifted(2).to_vec(), vec![3.0, 4.0]);
        assert_eq!(env.reversed(4).unwrap().shifted(1).to_vec(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn binary_roundtrip() {
        let env = generate(ChargeLaw::StandardGaussian, 64, 11, 2).unwrap();
        let mut buf = Vec::new();
        env.write_binary(&mut buf).unwrap();
        let back = Environment::read_binary(&buf[..]).unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn csv_roundtrip() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 32, 13, 5).unwrap();
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        let back = Environment::read_csv(&buf[..]).unwrap();
        assert_eq!(env, back);
    }

    fn brute_tau(env: &Environment, q: f64, m: usize, cap: usize) -> Option<(usize, usize)> {
        // Exhaustive scan over all (n, k), phrased through the same tilted
        // prefix sums so that boundary comparisons agree bit for bit.
        let charges = env.charges();
        let mut tilt = vec![0.0f64];
        let mut p = 0.0;
        for j in 0..cap / 2 {
            p += charges[2 * j] + charges[2 * j + 1];
            tilt.push(p - q * (2 * (j + 1)) as f64);
        }
        for n in (2..=cap).step_by(2) {
            let mut hit = None;
            for k in (m..=n).step_by(2) {
                if tilt[n / 2] <= tilt[(n - k) / 2] {
                    hit = Some(k);
                    break; // smallest k at this n
                }
            }
            if let Some(k) = hit {
                return Some((n, k));
            }
        }
        None
    }

    #[test]
    fn tau_trivial_cases() {
        let env = from_charges(ChargeLaw::BernoulliSymmetric, vec![-1.0; 8]).unwrap();
        let rec = find_tau(&env, -0.5, 2, 8).unwrap();
        assert_eq!((rec.tau, rec.r), (Some(2), Some(2)));

        let env = from_charges(ChargeLaw::BernoulliSymmetric, vec![1.0; 4]).unwrap();
        let rec = find_tau(&env, -0.5, 2, 4).unwrap();
        assert!(rec.censored());

        assert!(find_tau(&env, -0.5, 3, 4).is_err());
        assert!(find_tau(&env, -0.5, 2, 6).is_err());
    }

    #[test]
    fn tau_matches_exhaustive_scan() {
        for seed in 0..40 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 2000, seed, 0).unwrap();
            for &(q, m) in &[(-0.6, 4), (-0.3, 2), (-0.5, 10), (-0.8, 2)] {
                let rec = find_tau(&env, q, m, 2000).unwrap();
                let brute = brute_tau(&env, q, m, 2000);
                assert_eq!(rec.tau.zip(rec.r), brute, "seed {seed} q {q} m {m}");
            }
        }
        // Gaussian charges too
        for seed in 0..10 {
            let env = generate(ChargeLaw::StandardGaussian, 1000, seed, 1).unwrap();
            let rec = find_tau(&env, -0.9, 4, 1000).unwrap();
            assert_eq!(rec.tau.zip(rec.r), brute_tau(&env, -0.9, 4, 1000));
        }
    }

    #[test]
    fn tau_average_condition_holds() {
        for seed in 0..20 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 4000, 100 + seed, 0).unwrap();
            let q = -0.55;
            let rec = find_tau(&env, q, 4, 4000).unwrap();
            if let (Some(tau), Some(r)) = (rec.tau, rec.r) {
                assert!(r >= 4);
                let s: f64 = env.charges()[tau - r..tau].iter().sum();
                assert!(s / r as f64 <= q + 1e-12, "terminal average {} > {q}", s / r as f64);
            }
        }
    }

    #[test]
    fn tau_monotonicity() {
        for seed in 0..20 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 4000, 200 + seed, 0).unwrap();
            let tau_at = |q: f64, m: usize| find_tau(&env, q, m, 4000).unwrap().tau;
            // non-decreasing in M
            let mut prev = 0usize;
            for m in [2usize, 4, 8, 16] {
                if let Some(t) = tau_at(-0.5, m) {
                    assert!(t >= prev);
                    prev = t;
                } else {
                    prev = usize::MAX;
                }
            }
            // non-increasing in q (laxer threshold = larger q)
            let mut prev = usize::MAX;
            for q in [-0.9, -0.7, -0.5, -0.3] {
                let t = tau_at(q, 4).unwrap_or(usize::MAX);
                assert!(t <= prev, "tau not monotone in q at seed {seed}");
                prev = t;
            }
        }
    }

    #[test]
    fn bernoulli_short_stretch_bound() {
        // For bounded charges the shortest terminal stretch stays below 2M.
        for seed in 0..20 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 4000, 300 + seed, 0).unwrap();
            let rec = find_tau(&env, -0.5, 8, 4000).unwrap();
            if let Some(r) = rec.r {
                assert!(r <= 16, "R = {r} exceeds 2M");
            }
        }
    }

    #[test]
    fn find_t_definition_replay() {
        let q = -0.664;
        let a = 4;
        let eps = 0.5;
        for seed in 0..10 {
            let env = generate(ChargeLaw::BernoulliSymmetric, 100_000, 400 + seed, 0).unwrap();
            let rec = find_t(&env, q, a, eps, 100_000).unwrap();
            // replay the definition
            let threshold = crate::model::cramer_rate(env.law(), q) + eps;
            let mut expect = None;
            let mut k = a;
            loop {
                let tau = find_tau(&env, q, k, 100_000).unwrap().tau;
                match tau {
                    None => break,
                    Some(t) => {
                        if (t as f64).ln() / k as f64 <= threshold {
                            expect = Some((k, t));
                            break;
                        }
                    }
                }
                k += 2;
            }
            match expect {
                Some((k, t)) => {
                    assert_eq!(rec.ell, Some(k));
                    assert_eq!(rec.t, Some(t));
                }
                None => assert!(rec.censored()),
            }
        }
    }

    #[test]
    fn find_t_infinite_rate_threshold() {
        // Outside the Bernoulli support the rate is +inf, so the first
        // finite stretch time wins immediately.
        let env = generate(ChargeLaw::BernoulliSymmetric, 10_000, 7, 0).unwrap();
        let rec = find_t(&env, -1.5, 4, 0.5, 10_000).unwrap();
        // q < -1 can never be met by +-1 averages: tau is censored
        assert!(rec.censored());
        let rec = find_t(&env, -1.0, 4, 0.5, 10_000).unwrap();
        if let Some(ell) = rec.ell {
            assert_eq!(ell, 4);
            assert_eq!(rec.t, rec.tau);
        }
    }

    #[test]
    fn find_t_too_short_env_censors() {
        let env = from_charges(ChargeLaw::BernoulliSymmetric, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let rec = find_t(&env, -0.5, 2, 0.1, 4).unwrap();
        assert!(rec.censored());
    }

    #[test]
    fn regenerated_environment_reproduces_detectors() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 5000, 77, 4).unwrap();
        let env2 = generate(ChargeLaw::BernoulliSymmetric, 5000, 77, 4).unwrap();
        assert_eq!(
            find_tau(&env, -0.6, 6, 5000).unwrap(),
            find_tau(&env2, -0.6, 6, 5000).unwrap()
        );
        assert_eq!(
            find_t(&env, -0.6, 4, 0.3, 5000).unwrap(),
            find_t(&env2, -0.6, 4, 0.3, 5000).unwrap()
        );
    }

    #[test]
    fn detect_tc_free_walk_never_crosses() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 2000, 3, 0).unwrap();
        let p = PolymerParams::new(0.0, 0.3, ChargeLaw::BernoulliSymmetric).unwrap();
        let r = detect_tc(&env, &p, 2.0, 2000, None).unwrap();
        assert_eq!(r.time, None);
    }

    #[test]
    fn detect_tc_localized_crosses_and_is_deterministic() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 10_000, 21, 0).unwrap();
        let p = PolymerParams::new(1.0, 0.3, ChargeLaw::BernoulliSymmetric).unwrap();
        let r = detect_tc(&env, &p, 2.0, 10_000, None).unwrap();
        let t = r.time.expect("deep in the localized phase the crossing is finite");
        assert!(r.log_z.unwrap() >= 2f64.ln());
        // second sweep reproduces the crossing exactly
        let r2 = detect_tc(&env, &p, 2.0, 10_000, None).unwrap();
        assert_eq!(r, r2);
        // the value just before the crossing is below the level
        let before = engine::sweep(env.view(), &p, t - 2, &SweepOptions::default()).unwrap();
        assert!(before.pinned_log < 2f64.ln());
        assert!(detect_tc(&env, &p, 1.0, 100, None).is_err());
    }

    #[test]
    fn detect_tc_monotone_in_h() {
        let env = generate(ChargeLaw::BernoulliSymmetric, 4000, 33, 0).unwrap();
        let mut prev = 0usize;
        for &h in &[0.0, 0.1, 0.2, 0.3] {
            let p = PolymerParams::new(1.0, h, ChargeLaw::BernoulliSymmetric).unwrap();
            let t = detect_tc(&env, &p, 1.5, 4000, None)
                .unwrap()
                .time
                .unwrap_or(usize::MAX);
            assert!(t >= prev, "crossing time not monotone at h = {h}");
            prev = t;
        }
    }
}

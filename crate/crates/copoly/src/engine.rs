//! Transfer-matrix computation of free, pinned and full-profile partition
//! functions, with log-scale renormalization and the restricted-window
//! speedup, plus small-system enumeration oracles.
//!
//! The lattice state holds `Z_(2M)(2y)` for heights `y` in `[-M, M]`. One
//! double step consumes a pair of charges and applies the three-branch
//! recurrence: above the interface the walk kernel `(1/4, 1/2, 1/4)` acts
//! unweighted, below it is multiplied by the pair weight
//! `alpha = exp(-2 lambda (w1 + w2 + 2h))`, and the `y = 0` row splits into
//! an up-excursion and a down-excursion contribution.

use crate::disorder::{EnvView, Environment};
use crate::model::{ChargeLaw, PolymerParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Restricted computation window: for system sizes `n >= n0` only heights
/// `y` in `[-a sqrt(n), b sqrt(n)]` are updated, the rest are hard zeros.
/// The result is a certified lower bound on every partition value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub a: f64,
    pub b: f64,
    pub n0: usize,
}

impl Window {
    /// The window used for all production runs: agrees with the full sweep
    /// to about eight decimal digits while cutting the cost to O(N^{3/2}).
    pub const PAPER: Window = Window { a: 3.0, b: 8.0, n0: 1000 };
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub window: Option<Window>,
    pub want_profile: bool,
    /// Even system sizes at which the running pinned log-value is recorded.
    pub checkpoints: Vec<usize>,
    /// Rescaling is triggered once the lattice maximum leaves
    /// `[1/rescale_threshold, rescale_threshold]`.
    pub rescale_threshold: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            window: None,
            want_profile: false,
            checkpoints: Vec::new(),
            rescale_threshold: 1e100,
        }
    }
}

impl SweepOptions {
    pub fn windowed() -> Self {
        SweepOptions { window: Some(Window::PAPER), ..Default::default() }
    }

    pub fn with_profile(mut self) -> Self {
        self.want_profile = true;
        self
    }
}

/// Height-indexed partition values `Z_(2M)(2y) = values[y + m] * exp(log_scale)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionProfile {
    pub values: Vec<f64>,
    pub log_scale: f64,
    /// Number of completed double steps; system size is `2 m`.
    pub m: usize,
    pub window: Option<Window>,
}

impl PartitionProfile {
    /// Linear partition value pinned at walk height `x` (true scale divided
    /// out by `exp(log_scale)`). Odd heights carry exactly zero mass.
    pub fn value_at_height(&self, x: i64) -> f64 {
        if x.rem_euclid(2) != 0 {
            return 0.0;
        }
        let y = x / 2;
        if y.unsigned_abs() as usize > self.m {
            return 0.0;
        }
        self.values[(y + self.m as i64) as usize]
    }

    pub fn log_value_at_height(&self, x: i64) -> f64 {
        let v = self.value_at_height(x);
        v.ln() + self.log_scale
    }

    /// Iterates `(height, linear value)` over the even heights `-2m..=2m`.
    pub fn heights(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let m = self.m as i64;
        self.values.iter().enumerate().map(move |(i, &v)| (2 * (i as i64 - m), v))
    }

    /// Total linear mass (the free partition value divided by `exp(log_scale)`).
    pub fn total_mass(&self) -> f64 {
        neumaier_sum(&self.values)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "height,value,log_scale")?;
        for (x, v) in self.heights() {
            writeln!(out, "{},{:.16e},{:.16e}", x, v, self.log_scale)?;
        }
        Ok(())
    }

    /// Compact dump: `m`, `log_scale`, then the raw values.
    pub fn write_binary<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.m as u64).to_le_bytes())?;
        out.write_all(&self.log_scale.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    /// log Z_n(0), the value pinned at the origin.
    pub pinned_log: f64,
    /// log Z_n, summed over all endpoints.
    pub free_log: f64,
    pub profile: Option<PartitionProfile>,
    /// `(size, pinned log)` at each requested checkpoint.
    pub crossing_trace: Option<Vec<(usize, f64)>>,
    /// Number of lattice cell updates performed (cost instrumentation).
    pub cell_updates: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("system size must be even, got {0}")]
    OddSize(usize),
    #[error("system size {size} exceeds the {len} available charges")]
    SizeExceedsEnvironment { size: usize, len: usize },
    #[error("non-finite lattice values: renormalization failed (alpha overflow?)")]
    NonFinite,
    #[error("brute-force enumeration is capped at size 20, got {0}")]
    BruteForceTooLarge(usize),
    #[error("excursion oracle is capped at size 32, got {0}")]
    ExcursionTooLarge(usize),
    #[error("pin times must be even, strictly increasing and within (0, {size}]")]
    BadPinTimes { size: usize },
    #[error("the infinite-coupling limit model is defined for binary charges only")]
    LimitModelNeedsBernoulli,
    #[error("checkpoint size {0} must be even and no larger than the sweep size")]
    BadCheckpoint(usize),
    #[error("slope parameter m must be positive, got {0}")]
    BadSlope(f64),
    #[error("window parameters must be positive")]
    BadWindow,
}

/// Checkpoint trace as CSV rows `(size, pinned log-value)`.
pub fn write_trace_csv<W: std::io::Write>(
    trace: &[(usize, f64)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "size,log_z0")?;
    for &(n, logz) in trace {
        writeln!(out, "{},{:.16e}", n, logz)?;
    }
    Ok(())
}

/// Compensated (Neumaier) summation; the free value at `lambda = 0` must come
/// out as 1 to near machine precision even for ~10^6 summands.
pub(crate) fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Incremental transfer-matrix state. `step` consumes one charge pair.
pub struct SweepState {
    vals: Vec<f64>,
    next: Vec<f64>,
    offset: isize,
    m: usize,
    /// Maximum number of double steps the buffers were sized for.
    cap_m: usize,
    /// Inclusive y-range of possibly nonzero entries in `vals`.
    support: (isize, isize),
    /// Inclusive y-range last written into `next` (stale data to clear).
    next_dirty: Option<(isize, isize)>,
    log_scale: f64,
    /// Upper bound on the lattice maximum since the last rescan.
    growth: f64,
    steps_since_scan: u32,
    threshold: f64,
    window: Option<Window>,
    cells: u64,
}

const RESCAN_EVERY: u32 = 64;

impl SweepState {
    pub fn new(size: usize, window: Option<Window>, rescale_threshold: f64) -> Result<Self, EngineError> {
        if size % 2 != 0 {
            return Err(EngineError::OddSize(size));
        }
        if let Some(w) = window {
            if !(w.a > 0.0 && w.b > 0.0) {
                return Err(EngineError::BadWindow);
            }
        }
        let half = size / 2 + 2;
        let len = 2 * half + 1;
        let mut vals = vec![0.0; len];
        vals[half] = 1.0;
        Ok(SweepState {
            vals,
            next: vec![0.0; len],
            offset: half as isize,
            m: 0,
            cap_m: size / 2,
            support: (0, 0),
            next_dirty: None,
            log_scale: 0.0,
            growth: 1.0,
            steps_since_scan: 0,
            threshold: rescale_threshold,
            window,
            cells: 0,
        })
    }

    pub fn completed_steps(&self) -> usize {
        self.m
    }

    pub fn cell_updates(&self) -> u64 {
        self.cells
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// log of the current pinned value Z_(2m)(0).
    pub fn pinned_log(&self) -> f64 {
        self.vals[self.offset as usize].ln() + self.log_scale
    }

    /// log of the current free value Z_(2m).
    pub fn free_log(&self) -> f64 {
        let (lo, hi) = self.support;
        let s = neumaier_sum(&self.vals[(lo + self.offset) as usize..=(hi + self.offset) as usize]);
        s.ln() + self.log_scale
    }

    pub fn profile(&self) -> PartitionProfile {
        let m = self.m;
        let mut values = vec![0.0; 2 * m + 1];
        let (lo, hi) = self.support;
        for y in lo..=hi {
            values[(y + m as isize) as usize] = self.vals[(y + self.offset) as usize];
        }
        PartitionProfile { values, log_scale: self.log_scale, m, window: self.window }
    }

    fn rescan(&mut self) -> Result<(), EngineError> {
        let (lo, hi) = self.support;
        let slice = &self.vals[(lo + self.offset) as usize..=(hi + self.offset) as usize];
        let mut max = 0.0f64;
        for &v in slice {
            if !v.is_finite() {
                return Err(EngineError::NonFinite);
            }
            if v > max {
                max = v;
            }
        }
        if max == 0.0 {
            return Err(EngineError::NonFinite);
        }
        if max > self.threshold || max < 1.0 / self.threshold {
            let inv = max.recip();
            for v in &mut self.vals[(lo + self.offset) as usize..=(hi + self.offset) as usize] {
                *v *= inv;
            }
            self.log_scale += max.ln();
            max = 1.0;
        }
        self.growth = max;
        self.steps_since_scan = 0;
        Ok(())
    }

    /// Advance from size 2m to 2(m+1) with the given below-interface pair weight.
    pub fn step(&mut self, alpha: f64) -> Result<(), EngineError> {
        if self.m >= self.cap_m {
            return Err(EngineError::SizeExceedsEnvironment {
                size: 2 * (self.m + 1),
                len: 2 * self.cap_m,
            });
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(EngineError::NonFinite);
        }
        self.growth *= alpha.max(1.0);
        self.steps_since_scan += 1;
        if self.growth >= self.threshold || self.steps_since_scan >= RESCAN_EVERY {
            self.rescan()?;
            self.growth *= alpha.max(1.0);
        }

        let size_next = 2 * (self.m + 1);
        let mut lo = self.support.0 - 1;
        let mut hi = self.support.1 + 1;
        if let Some(w) = self.window {
            if size_next >= w.n0 {
                let root = (size_next as f64).sqrt();
                lo = lo.max(-((w.a * root).floor() as isize));
                hi = hi.min((w.b * root).floor() as isize);
            }
        }

        // Clear stale cells from two steps ago that this step will not overwrite.
        if let Some((plo, phi)) = self.next_dirty {
            for y in plo..lo.min(phi + 1) {
                self.next[(y + self.offset) as usize] = 0.0;
            }
            for y in (hi + 1).max(plo)..=phi {
                self.next[(y + self.offset) as usize] = 0.0;
            }
        }

        let c = self.offset;
        let v = &self.vals;
        let nx = &mut self.next;

        // y < 0: kernel weighted by alpha.
        if lo < 0 {
            let top = hi.min(-1);
            let s = (lo + c) as usize;
            let e = (top + c) as usize;
            let dst = &mut nx[s..=e];
            let left = &v[s - 1..e];
            let mid = &v[s..=e];
            let right = &v[s + 1..e + 2];
            for i in 0..dst.len() {
                dst[i] = alpha * (0.25 * (left[i] + right[i]) + 0.5 * mid[i]);
            }
        }
        // y = 0: up-excursion unweighted, down-excursion weighted.
        if lo <= 0 && hi >= 0 {
            let i = c as usize;
            nx[i] = 0.25 * (v[i + 1] + v[i]) + 0.25 * alpha * (v[i] + v[i - 1]);
        }
        // y > 0: plain walk kernel.
        if hi > 0 {
            let bot = lo.max(1);
            let s = (bot + c) as usize;
            let e = (hi + c) as usize;
            let dst = &mut nx[s..=e];
            let left = &v[s - 1..e];
            let mid = &v[s..=e];
            let right = &v[s + 1..e + 2];
            for i in 0..dst.len() {
                dst[i] = 0.25 * (left[i] + right[i]) + 0.5 * mid[i];
            }
        }

        self.cells += (hi - lo + 1) as u64;
        std::mem::swap(&mut self.vals, &mut self.next);
        self.next_dirty = Some(self.support);
        self.support = (lo, hi);
        self.m += 1;
        Ok(())
    }
}

/// Below-interface weight of one charge pair.
pub(crate) fn pair_weight(params: &PolymerParams, w1: f64, w2: f64) -> f64 {
    (-2.0 * params.lambda * (w1 + w2 + 2.0 * params.h)).exp()
}

fn run_sweep(
    charges: EnvView<'_>,
    size: usize,
    opts: &SweepOptions,
    mut alpha: impl FnMut(f64, f64) -> Result<f64, EngineError>,
) -> Result<SweepResult, EngineError> {
    if size % 2 != 0 {
        return Err(EngineError::OddSize(size));
    }
    if size > charges.len() {
        return Err(EngineError::SizeExceedsEnvironment { size, len: charges.len() });
    }
    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    for &cp in &checkpoints {
        if cp % 2 != 0 || cp > size {
            return Err(EngineError::BadCheckpoint(cp));
        }
    }

    let mut state = SweepState::new(size, opts.window, opts.rescale_threshold)?;
    let mut trace = if checkpoints.is_empty() { None } else { Some(Vec::with_capacity(checkpoints.len())) };
    let mut next_cp = checkpoints.iter().copied().peekable();
    if next_cp.peek() == Some(&0) {
        next_cp.next();
        trace.as_mut().unwrap().push((0, 0.0));
    }

    for m in 0..size / 2 {
        let a = alpha(charges.charge(2 * m), charges.charge(2 * m + 1))?;
        state.step(a)?;
        let n = 2 * (m + 1);
        if next_cp.peek() == Some(&n) {
            next_cp.next();
            trace.as_mut().unwrap().push((n, state.pinned_log()));
        }
    }

    Ok(SweepResult {
        pinned_log: state.pinned_log(),
        free_log: state.free_log(),
        profile: opts.want_profile.then(|| state.profile()),
        crossing_trace: trace,
        cell_updates: state.cell_updates(),
    })
}

/// Transfer-matrix sweep of the polymer of even size `size` over the first
/// `size` charges of the view.
pub fn sweep(
    charges: EnvView<'_>,
    params: &PolymerParams,
    size: usize,
    opts: &SweepOptions,
) -> Result<SweepResult, EngineError> {
    run_sweep(charges, size, opts, |w1, w2| {
        let a = pair_weight(params, w1, w2);
        if a.is_finite() {
            Ok(a)
        } else {
            Err(EngineError::NonFinite)
        }
    })
}

/// Sweep for the infinite-coupling limit: below-interface monomers carry
/// weight `2^(1/m)` on negative charges and kill the path on positive ones.
pub fn limit_model_sweep(
    env: &Environment,
    m_slope: f64,
    size: usize,
    opts: &SweepOptions,
) -> Result<SweepResult, EngineError> {
    if env.law() != ChargeLaw::BernoulliSymmetric {
        return Err(EngineError::LimitModelNeedsBernoulli);
    }
    if !(m_slope > 0.0) {
        return Err(EngineError::BadSlope(m_slope));
    }
    let per_monomer = 2f64.powf(1.0 / m_slope);
    let weight = move |w: f64| if w < 0.0 { per_monomer } else { 0.0 };
    run_sweep(env.view(), size, opts, |w1, w2| Ok(weight(w1) * weight(w2)))
}

/// Direct enumeration of all `2^size` paths. Test oracle; sizes above 20 are
/// rejected. `endpoint` restricts to walks ending at that (even) height.
pub fn brute_force(
    charges: EnvView<'_>,
    params: &PolymerParams,
    size: usize,
    endpoint: Option<i64>,
) -> Result<f64, EngineError> {
    if size % 2 != 0 {
        return Err(EngineError::OddSize(size));
    }
    if size > 20 {
        return Err(EngineError::BruteForceTooLarge(size));
    }
    if size > charges.len() {
        return Err(EngineError::SizeExceedsEnvironment { size, len: charges.len() });
    }
    if let Some(x) = endpoint {
        if x.rem_euclid(2) != 0 {
            return Ok(0.0);
        }
    }
    let lambda = params.lambda;
    let h = params.h;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for mask in 0u32..1u32 << size {
        let mut s: i64 = 0;
        let mut sign = 1i64;
        let mut energy = 0.0f64;
        for n in 0..size {
            s += if mask >> n & 1 == 1 { 1 } else { -1 };
            if s != 0 {
                sign = s.signum();
            } // s == 0 keeps the sign of the previous (odd) step
            if sign < 0 {
                energy += charges.charge(n) + h;
            }
        }
        if let Some(x) = endpoint {
            if s != x {
                continue;
            }
        }
        let w = (-2.0 * lambda * energy).exp();
        let t = sum + w;
        comp += if sum.abs() >= w { (sum - t) + w } else { (w - t) + sum };
        sum = t;
    }
    Ok((sum + comp) / (1u64 << size) as f64)
}

/// Same enumeration for the infinite-coupling limit weight (test oracle).
pub fn brute_force_limit(
    charges: EnvView<'_>,
    m_slope: f64,
    size: usize,
    endpoint: Option<i64>,
) -> Result<f64, EngineError> {
    if size % 2 != 0 {
        return Err(EngineError::OddSize(size));
    }
    if size > 20 {
        return Err(EngineError::BruteForceTooLarge(size));
    }
    if size > charges.len() {
        return Err(EngineError::SizeExceedsEnvironment { size, len: charges.len() });
    }
    let log2_over_m = std::f64::consts::LN_2 / m_slope;
    let mut total = 0.0f64;
    for mask in 0u32..1u32 << size {
        let mut s: i64 = 0;
        let mut sign = 1i64;
        let mut below = 0u32;
        let mut killed = false;
        for n in 0..size {
            s += if mask >> n & 1 == 1 { 1 } else { -1 };
            if s != 0 {
                sign = s.signum();
            }
            if sign < 0 {
                if charges.charge(n) > 0.0 {
                    killed = true;
                    break;
                }
                below += 1;
            }
        }
        if killed {
            continue;
        }
        if let Some(x) = endpoint {
            if s != x {
                continue;
            }
        }
        total += (log2_over_m * below as f64).exp();
    }
    Ok(total / (1u64 << size) as f64)
}

/// Law of the first return to the origin of the simple walk: entry `n` is
/// `K(2n) = P(first return = 2n)`, obtained by the convolution recursion from
/// the pinning probabilities `u_n = P(S_(2n) = 0)`. Entry 0 is unused (zero).
pub fn first_return_law(half_max: usize) -> Vec<f64> {
    let mut u = vec![0.0; half_max + 1];
    u[0] = 1.0;
    for n in 1..=half_max {
        // u_n = u_(n-1) * (2n - 1) / (2n)
        u[n] = u[n - 1] * (2 * n - 1) as f64 / (2 * n) as f64;
    }
    let mut k = vec![0.0; half_max + 1];
    for n in 1..=half_max {
        let mut s = u[n];
        for j in 1..n {
            s -= k[j] * u[n - j];
        }
        k[n] = s;
    }
    k
}

/// Pinned partition value by summation over excursion decompositions
/// (test oracle; exponential in `size/2`, rejected above 32).
pub fn excursion_oracle(
    charges: EnvView<'_>,
    params: &PolymerParams,
    size: usize,
) -> Result<f64, EngineError> {
    if size % 2 != 0 {
        return Err(EngineError::OddSize(size));
    }
    if size > 32 {
        return Err(EngineError::ExcursionTooLarge(size));
    }
    if size > charges.len() {
        return Err(EngineError::SizeExceedsEnvironment { size, len: charges.len() });
    }
    let half = size / 2;
    let k = first_return_law(half);
    // prefix[i] = sum of the first i charges
    let mut prefix = vec![0.0; size + 1];
    for i in 0..size {
        prefix[i + 1] = prefix[i] + charges.charge(i);
    }
    let phi = |t: f64| (1.0 + (-2.0 * t).exp()) / 2.0;
    let lambda = params.lambda;
    let h = params.h;
    if half == 0 {
        return Ok(1.0);
    }
    // Interior even pin points are 2, 4, ..., size - 2; enumerate all subsets.
    let interior = half - 1;
    let mut total = 0.0f64;
    for mask in 0u32..1u32 << interior {
        let mut weight = 1.0f64;
        let mut last = 0usize;
        for b in 0..interior {
            if mask >> b & 1 == 1 {
                let x = 2 * (b + 1);
                let len = x - last;
                weight *= phi(lambda * (prefix[x] - prefix[last]) + lambda * h * len as f64)
                    * k[len / 2];
                last = x;
            }
        }
        let len = size - last;
        weight *= phi(lambda * (prefix[size] - prefix[last]) + lambda * h * len as f64) * k[len / 2];
        total += weight;
    }
    Ok(total)
}

/// Both sides of the concatenation inequality in log scale:
/// `log Z_(n1+n2)(0)` and `log Z_(n1)(0) + log Z_(n2, shifted)(0)`.
/// The first is always at least the second.
pub fn superadd_check(
    charges: EnvView<'_>,
    params: &PolymerParams,
    n1: usize,
    n2: usize,
    window: Option<Window>,
) -> Result<(f64, f64), EngineError> {
    let opts = SweepOptions { window, ..Default::default() };
    let lhs = sweep(charges, params, n1 + n2, &opts)?.pinned_log;
    let left = if n1 == 0 { 0.0 } else { sweep(charges, params, n1, &opts)?.pinned_log };
    let right = if n2 == 0 { 0.0 } else { sweep(charges.shifted(n1), params, n2, &opts)?.pinned_log };
    Ok((lhs, left + right))
}

/// log of the product lower bound obtained by pinning the walk at the given
/// times: the sum of pinned log-values over the blocks cut by `pin_times`.
pub fn pinned_product_lower_bound(
    charges: EnvView<'_>,
    params: &PolymerParams,
    pin_times: &[usize],
    size: usize,
    window: Option<Window>,
) -> Result<f64, EngineError> {
    let mut prev = 0usize;
    for &t in pin_times {
        if t % 2 != 0 || t <= prev || t > size {
            return Err(EngineError::BadPinTimes { size });
        }
        prev = t;
    }
    let opts = SweepOptions { window, ..Default::default() };
    let mut total = 0.0;
    let mut start = 0usize;
    for &t in pin_times.iter().chain(std::iter::once(&size)) {
        if t > start {
            total += sweep(charges.shifted(start), params, t - start, &opts)?.pinned_log;
        }
        start = t;
    }
    Ok(total)
}

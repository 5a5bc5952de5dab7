//! Trial-by-trial simulation of the pipeline.
//!
//! Each trial follows one quantum trajectory: the source emits a sampled Bell
//! state, every post-selection and parity-dephasing branch is drawn by its
//! Born weight, and each channel use draws one unitary. Trial `i` owns the
//! ChaCha stream `i` under the master seed, so results do not depend on how
//! trials are spread over threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::algebra::{Ket, Operator, Register, C64, ZERO};
use crate::error::{Error, Result};
use crate::noise::{sandwich_as_channel, BellDiagonalSource, PauliChannel};
use crate::protocol::{ChannelModel, Optics, PipelineConfig, SamplingMode, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Generator for trial `index`; a pure function of `(master_seed, index)`.
    pub fn trial_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub n_trials: u64,
    pub n_accepted: u64,
    pub n_errors: u64,
    /// `None` when no trial was accepted.
    pub qber_hat: Option<f64>,
    pub yield_hat: f64,
    /// 95% Wilson interval on `qber_hat`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    /// Accepted trials by `[encode sign][decode sign]`, `Plus` first.
    pub branch_counts: [[u64; 2]; 2],
}

type M2 = [[C64; 2]; 2];
type M4 = [[C64; 4]; 4];

fn m2(op: &Operator) -> M2 {
    let m = op.matrix();
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn m4(op: &Operator) -> M4 {
    let m = op.matrix();
    let mut out = [[ZERO; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, a) in row.iter_mut().enumerate() {
            *a = m[(i, j)];
        }
    }
    out
}

fn mul2(a: &M2, b: &M2) -> M2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Amplitudes of up to three photons, photon 0 most significant.
#[derive(Debug, Clone, Copy)]
struct Amps {
    a: [C64; 8],
    n: u32,
}

impl Amps {
    fn from_slice(v: &[C64]) -> Self {
        let mut a = [ZERO; 8];
        a[..v.len()].copy_from_slice(v);
        Self {
            a,
            n: v.len().trailing_zeros(),
        }
    }

    fn dim(&self) -> usize {
        1 << self.n
    }

    fn norm_sqr(&self) -> f64 {
        self.a[..self.dim()].iter().map(|z| z.norm_sqr()).sum()
    }

    fn normalize(&mut self) {
        let s = 1.0 / self.norm_sqr().sqrt();
        let d = self.dim();
        for z in &mut self.a[..d] {
            *z *= s;
        }
    }

    fn tensor(&self, other: &Amps) -> Amps {
        let mut out = [ZERO; 8];
        let d = other.dim();
        for i in 0..self.dim() {
            for j in 0..d {
                out[i * d + j] = self.a[i] * other.a[j];
            }
        }
        Amps {
            a: out,
            n: self.n + other.n,
        }
    }

    fn apply1(&mut self, q: u32, m: &M2) {
        let bit = 1usize << (self.n - 1 - q);
        for i in 0..self.dim() {
            if i & bit == 0 {
                let (x, y) = (self.a[i], self.a[i | bit]);
                self.a[i] = m[0][0] * x + m[0][1] * y;
                self.a[i | bit] = m[1][0] * x + m[1][1] * y;
            }
        }
    }

    /// `m` on photons 0 and 1.
    fn apply_top2(&self, m: &M4) -> Amps {
        let rest = 1usize << (self.n - 2);
        let mut out = [ZERO; 8];
        for r in 0..rest {
            for (i, row) in m.iter().enumerate() {
                let mut acc = ZERO;
                for (j, x) in row.iter().enumerate() {
                    acc += x * self.a[j * rest + r];
                }
                out[i * rest + r] = acc;
            }
        }
        Amps { a: out, n: self.n }
    }

    /// `⟨axis|` contracted into photon 0; unnormalized.
    fn contract_top(&self, axis: &[C64; 2]) -> Amps {
        let half = 1usize << (self.n - 1);
        let mut out = [ZERO; 8];
        for (j, z) in out.iter_mut().enumerate().take(half) {
            *z = axis[0].conj() * self.a[j] + axis[1].conj() * self.a[half + j];
        }
        Amps {
            a: out,
            n: self.n - 1,
        }
    }
}

/// Discrete distribution over unitaries.
#[derive(Debug, Clone)]
struct UnitaryDraw {
    parts: Vec<(f64, M2)>,
}

impl UnitaryDraw {
    fn pauli(ch: &PauliChannel) -> Self {
        let ops = [
            Operator::identity(1),
            Operator::pauli_x(),
            Operator::pauli_y(),
            Operator::pauli_z(),
        ];
        let ws = [ch.p_i, ch.p_x, ch.p_y, ch.p_z];
        Self {
            parts: ws
                .iter()
                .zip(&ops)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, op)| (*w, m2(op)))
                .collect(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &M2 {
        let mut r = rng.random::<f64>();
        for (w, u) in &self.parts {
            if r < *w {
                return u;
            }
            r -= w;
        }
        &self.parts[self.parts.len() - 1].1
    }

    fn conjugate(&mut self, by: &M2) {
        for (_, u) in &mut self.parts {
            *u = mul2(&mul2(by, u), by);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trial {
    Rejected,
    Accepted { error: bool, enc: Sign, dec: Sign },
}

/// Everything a trial needs, precomputed once per run.
#[derive(Debug, Clone)]
struct Sampler {
    input: [C64; 2],
    herald: Option<BellDiagonalSource>,
    pair: BellDiagonalSource,
    encode_parity: M4,
    decode_parity: M4,
    dephasing: Vec<M4>,
    rotation: Option<M2>,
    channel: UnitaryDraw,
    use_minus: bool,
    bells: [[C64; 4]; 4],
}

const Z: M2 = [
    [C64::new(1.0, 0.0), ZERO],
    [ZERO, C64::new(-1.0, 0.0)],
];

impl Sampler {
    fn new(cfg: &PipelineConfig, input: &Ket, channel: &ChannelModel) -> Result<Self> {
        if input.photons() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: input.dim(),
            });
        }
        let input = input.normalize()?;
        let optics = Optics::new(cfg.parity_visibility)?;
        let mut draw = match (channel, cfg.sampling) {
            (ChannelModel::Pauli(p), _) => UnitaryDraw::pauli(p),
            (ChannelModel::Sandwich(s), SamplingMode::PauliDraw) => UnitaryDraw::pauli(&sandwich_as_channel(s)),
            (ChannelModel::Sandwich(s), SamplingMode::FullUnitary) => UnitaryDraw {
                parts: if s.sign_random {
                    vec![(0.5, m2(&s.unitary(1.0))), (0.5, m2(&s.unitary(-1.0)))]
                } else {
                    vec![(1.0, m2(&s.unitary(1.0)))]
                },
            },
        };
        let rotation = cfg.phase_error_mode.then(|| m2(&optics.rotation));
        if let Some(r) = &rotation {
            draw.conjugate(r);
        }
        let bells = crate::noise::BellState::ALL.map(|b| {
            let k = b.ket();
            [k.amplitude(0), k.amplitude(1), k.amplitude(2), k.amplitude(3)]
        });
        Ok(Self {
            input: [input.amplitude(0), input.amplitude(1)],
            herald: cfg.herald_source,
            pair: cfg.pair_source,
            encode_parity: m4(&optics.encode_parity),
            decode_parity: m4(&optics.decode_parity),
            dephasing: optics.dephasing.operators().iter().map(m4).collect(),
            rotation,
            channel: draw,
            use_minus: cfg.use_minus_branches,
            bells,
        })
    }

    fn bell<R: Rng>(&self, src: &BellDiagonalSource, rng: &mut R) -> [C64; 4] {
        self.bells[src.sample(rng) as usize]
    }

    fn photon1<R: Rng>(&self, rng: &mut R) -> Amps {
        let mut p = match &self.herald {
            None => Amps::from_slice(&self.input),
            Some(src) => {
                // ⟨ψ*| on photon 4 leaves photon 1 in Σ_b ψ_b·B[a, b]
                let b = self.bell(src, rng);
                let psi = self.input;
                let mut p = Amps::from_slice(&[
                    psi[0] * b[0] + psi[1] * b[1],
                    psi[0] * b[2] + psi[1] * b[3],
                ]);
                p.normalize();
                p
            }
        };
        if let Some(r) = &self.rotation {
            p.apply1(0, r);
        }
        p
    }

    /// Parity check on photons 0 and 1, its dephasing, and the `|±⟩`
    /// detection of photon 0. `None` on rejection.
    fn parity_stage<R: Rng>(&self, state: &Amps, parity: &M4, rng: &mut R) -> Option<(Sign, Amps)> {
        let mut kept = state.apply_top2(parity);
        let w = kept.norm_sqr();
        if w <= 1e-300 || rng.random::<f64>() >= w {
            return None;
        }
        kept.normalize();
        let mut kept = self.sample_dephasing(&kept, rng);

        let plus = kept.contract_top(&[C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2]);
        let sign = if rng.random::<f64>() < plus.norm_sqr() {
            Sign::Plus
        } else {
            Sign::Minus
        };
        if sign == Sign::Minus && !self.use_minus {
            return None;
        }
        kept = match sign {
            Sign::Plus => plus,
            Sign::Minus => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                kept.contract_top(&[C64::new(h, 0.0), C64::new(-h, 0.0)])
            }
        };
        if kept.norm_sqr() <= 1e-300 {
            return None;
        }
        kept.normalize();
        if sign == Sign::Minus {
            kept.apply1(0, &Z);
        }
        Some((sign, kept))
    }

    fn sample_dephasing<R: Rng>(&self, state: &Amps, rng: &mut R) -> Amps {
        if self.dephasing.len() == 1 {
            return state.apply_top2(&self.dephasing[0]);
        }
        let mut r = rng.random::<f64>();
        let mut last = *state;
        for k in &self.dephasing {
            let branch = state.apply_top2(k);
            let w = branch.norm_sqr();
            if w > 0.0 {
                last = branch;
                if r < w {
                    break;
                }
            }
            r -= w;
        }
        last.normalize();
        last
    }

    fn run<R: Rng>(&self, rng: &mut R) -> Trial {
        let p1 = self.photon1(rng);
        let ancilla = Amps::from_slice(&self.bell(&self.pair, rng));
        let joint = p1.tensor(&ancilla);
        let Some((enc, mut sent)) = self.parity_stage(&joint, &self.encode_parity, rng) else {
            return Trial::Rejected;
        };
        for q in 0..2 {
            sent.apply1(q, self.channel.draw(rng));
        }
        let Some((dec, mut out)) = self.parity_stage(&sent, &self.decode_parity, rng) else {
            return Trial::Rejected;
        };
        if let Some(r) = &self.rotation {
            out.apply1(0, r);
        }
        let overlap = self.input[0].conj() * out.a[0] + self.input[1].conj() * out.a[1];
        let error = rng.random::<f64>() >= overlap.norm_sqr();
        Trial::Accepted { error, enc, dec }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    trials: u64,
    accepted: u64,
    errors: u64,
    branches: [[u64; 2]; 2],
}

impl Counts {
    fn record(mut self, t: Trial) -> Self {
        self.trials += 1;
        if let Trial::Accepted { error, enc, dec } = t {
            self.accepted += 1;
            self.errors += u64::from(error);
            self.branches[enc as usize][dec as usize] += 1;
        }
        self
    }

    fn merge(mut self, o: Counts) -> Self {
        self.trials += o.trials;
        self.accepted += o.accepted;
        self.errors += o.errors;
        for i in 0..2 {
            for j in 0..2 {
                self.branches[i][j] += o.branches[i][j];
            }
        }
        self
    }
}

/// Simulates `n` trials of sending `input` with both photons through
/// `channel`, on the global rayon pool.
pub fn run_trials(
    cfg: &PipelineConfig,
    input: &Ket,
    channel: &ChannelModel,
    n: u64,
    policy: SeedPolicy,
) -> Result<TrialStats> {
    if n == 0 {
        return Err(Error::NoTrials);
    }
    let sampler = Sampler::new(cfg, input, channel)?;
    let counts = (0..n)
        .into_par_iter()
        .fold(Counts::default, |c, i| c.record(sampler.run(&mut policy.trial_rng(i))))
        .reduce(Counts::default, Counts::merge);
    stats_from(counts, policy.master_seed)
}

/// [`run_trials`] on a dedicated pool of `workers` threads.
pub fn run_trials_with_workers(
    cfg: &PipelineConfig,
    input: &Ket,
    channel: &ChannelModel,
    n: u64,
    policy: SeedPolicy,
    workers: usize,
) -> Result<TrialStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidProbability(format!("thread pool: {e}")))?;
    pool.install(|| run_trials(cfg, input, channel, n, policy))
}

fn stats_from(c: Counts, seed: u64) -> Result<TrialStats> {
    let (qber_hat, ci_low, ci_high) = if c.accepted > 0 {
        let (lo, hi) = wilson_interval(c.errors, c.accepted, 0.95)?;
        (Some(c.errors as f64 / c.accepted as f64), lo, hi)
    } else {
        (None, 0.0, 1.0)
    };
    Ok(TrialStats {
        n_trials: c.trials,
        n_accepted: c.accepted,
        n_errors: c.errors,
        qber_hat,
        yield_hat: c.accepted as f64 / c.trials as f64,
        ci_low,
        ci_high,
        seed,
        branch_counts: c.branches,
    })
}

fn z_for(conf: f64) -> Result<f64> {
    if !(conf > 0.0 && conf < 1.0) {
        return Err(Error::InvalidProbability(format!("confidence {conf}")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - conf) / 2.0))
}

/// Wilson score interval for `k` successes in `n` trials, clamped to `[0, 1]`.
pub fn wilson_interval(k: u64, n: u64, conf: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::NoTrials);
    }
    if k > n {
        return Err(Error::InvalidProbability(format!("{k} successes in {n} trials")));
    }
    let z = z_for(conf)?;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // the bounds touch 0 or 1 exactly at the edges; rounding would leave ~1e-21
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub pass: bool,
    pub oracle: f64,
    pub qber_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Passes iff `oracle` lies inside the Wilson interval of `stats`.
pub fn convergence_check(stats: &TrialStats, oracle: f64) -> Result<ConvergenceReport> {
    if !(0.0..=1.0).contains(&oracle) {
        return Err(Error::InvalidProbability(format!("oracle {oracle}")));
    }
    let qber_hat = stats.qber_hat.ok_or(Error::NoAcceptedTrials)?;
    Ok(ConvergenceReport {
        pass: stats.ci_low <= oracle && oracle <= stats.ci_high,
        oracle,
        qber_hat,
        ci_low: stats.ci_low,
        ci_high: stats.ci_high,
    })
}

/// Sends `|H⟩` through the sampled sandwich `n` times and counts `V`
/// detections.
pub fn empirical_flip_count(
    sandwich: &crate::noise::WaveplateSandwich,
    n: u64,
    policy: SeedPolicy,
) -> Result<u64> {
    if n == 0 {
        return Err(Error::NoTrials);
    }
    let plus = m2(&sandwich.unitary(1.0));
    let minus = m2(&sandwich.unitary(-1.0));
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy.trial_rng(i);
            let u = if !sandwich.sign_random || rng.random_bool(0.5) {
                &plus
            } else {
                &minus
            };
            u64::from(rng.random::<f64>() < u[1][0].norm_sqr())
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ChannelKind, SixState};

    fn bit_flip(p: f64) -> ChannelModel {
        ChannelKind::BitFlip.instantiate(p).unwrap()
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(10, 100, 0.95).unwrap();
        assert!((lo - 0.055_238).abs() < 1e-5, "{lo}");
        assert!((hi - 0.174_37).abs() < 1e-5, "{hi}");
        assert_eq!(wilson_interval(0, 100, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(100, 100, 0.95).unwrap().1, 1.0);
        assert!(matches!(wilson_interval(0, 0, 0.95), Err(Error::NoTrials)));
    }

    #[test]
    fn noiseless_trials_never_err() {
        let stats = run_trials(
            &PipelineConfig::ideal(),
            &SixState::H.ket(),
            &bit_flip(0.0),
            10_000,
            SeedPolicy::new(3),
        )
        .unwrap();
        assert_eq!(stats.n_errors, 0);
        assert_eq!(stats.qber_hat, Some(0.0));
        assert!(stats.n_accepted > 4_500 && stats.n_accepted < 5_500);
    }

    #[test]
    fn minus_input_is_immune_to_bit_flips() {
        let stats = run_trials(
            &PipelineConfig::ideal(),
            &SixState::M.ket(),
            &bit_flip(0.4),
            100_000,
            SeedPolicy::new(5),
        )
        .unwrap();
        assert_eq!(stats.n_errors, 0);
    }

    #[test]
    fn rerun_is_bit_identical_across_worker_counts() {
        let cfg = PipelineConfig::ideal();
        let ch = bit_flip(0.25);
        let a = run_trials_with_workers(&cfg, &SixState::R.ket(), &ch, 20_000, SeedPolicy::new(9), 1).unwrap();
        let b = run_trials_with_workers(&cfg, &SixState::R.ket(), &ch, 20_000, SeedPolicy::new(9), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convergence_report() {
        let stats = TrialStats {
            n_trials: 1000,
            n_accepted: 500,
            n_errors: 50,
            qber_hat: Some(0.1),
            yield_hat: 0.5,
            ci_low: 0.08,
            ci_high: 0.12,
            seed: 0,
            branch_counts: [[0; 2]; 2],
        };
        assert!(convergence_check(&stats, 0.1).unwrap().pass);
        assert!(!convergence_check(&stats, 0.5).unwrap().pass);
        let empty = TrialStats {
            qber_hat: None,
            ..stats
        };
        assert!(matches!(convergence_check(&empty, 0.1), Err(Error::NoAcceptedTrials)));
    }
}

//! Encode → transmit → decode with exact density-matrix propagation.
//!
//! Register layout through the pipeline:
//!
//! | stage            | photons (most significant first) |
//! |------------------|----------------------------------|
//! | before `PBS₁`    | `1, 2, 3`                        |
//! | after `PBS₁`     | `1′, 2′, 3`                      |
//! | encoded / sent   | `2′, 3`                          |
//! | after `PBS₂`     | `2″, 3′`                         |
//! | output           | `3′`                             |
//!
//! Both parity checks are derived from the beam-splitter routing in
//! [`crate::bench`], not written down by hand.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::algebra::{
    partial_trace, DensityOperator, Ket, Operator, Register, Tensor, PROB_EPS,
};
use crate::bench::{jones_matrix, ParityCheck, PbsPorts, SpatialMode, WaveplateKind};
use crate::error::{Error, Result};
use crate::noise::{
    bell_diagonal_rho, correlation_visibility, parity_branch_projectors, parity_dephasing,
    BellDiagonalSource, InterferenceVisibility, KrausChannel, PauliChannel, VisibilityBasis,
    WaveplateSandwich,
};

/// Eigenstates of the three complementary polarization bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SixState {
    H,
    V,
    /// `|+⟩`
    P,
    /// `|−⟩`
    M,
    R,
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    HV,
    PM,
    RL,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::HV => "HV",
            Basis::PM => "PM",
            Basis::RL => "RL",
        }
    }
}

impl SixState {
    pub const ALL: [SixState; 6] = [
        SixState::H,
        SixState::V,
        SixState::P,
        SixState::M,
        SixState::R,
        SixState::L,
    ];

    pub fn ket(self) -> Ket {
        match self {
            SixState::H => Ket::h(),
            SixState::V => Ket::v(),
            SixState::P => Ket::plus(),
            SixState::M => Ket::minus(),
            SixState::R => Ket::r(),
            SixState::L => Ket::l(),
        }
    }

    /// The other member of the same basis.
    pub fn partner(self) -> SixState {
        match self {
            SixState::H => SixState::V,
            SixState::V => SixState::H,
            SixState::P => SixState::M,
            SixState::M => SixState::P,
            SixState::R => SixState::L,
            SixState::L => SixState::R,
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            SixState::H | SixState::V => Basis::HV,
            SixState::P | SixState::M => Basis::PM,
            SixState::R | SixState::L => Basis::RL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SixState::H => "H",
            SixState::V => "V",
            SixState::P => "+",
            SixState::M => "-",
            SixState::R => "R",
            SixState::L => "L",
        }
    }
}

impl fmt::Display for SixState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SixState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "H" | "h" => Ok(SixState::H),
            "V" | "v" => Ok(SixState::V),
            "+" | "P" | "p" | "plus" => Ok(SixState::P),
            "-" | "M" | "m" | "minus" => Ok(SixState::M),
            "R" | "r" => Ok(SixState::R),
            "L" | "l" => Ok(SixState::L),
            other => Err(format!("unknown state `{other}` (expected H, V, +, -, R or L)")),
        }
    }
}

/// Outcome of a `|+⟩/|−⟩` detection behind a parity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn axis(self) -> Ket {
        match self {
            Sign::Plus => Ket::plus(),
            Sign::Minus => Ket::minus(),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compensation {
    pub mode: SpatialMode,
    pub operator: Operator,
}

impl Compensation {
    fn phase_flip(mode: &str) -> Self {
        Self {
            mode: mode.into(),
            operator: Operator::pauli_z(),
        }
    }
}

/// One combination of detection outcomes. Every `Minus` carries exactly one
/// `Z` compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub encode_outcome: Sign,
    pub decode_outcome: Option<Sign>,
    pub compensations: Vec<Compensation>,
    /// Unconditional probability of this branch.
    pub probability: f64,
}

/// Family of single-photon channels applied to each transmitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    BitFlip,
    PhaseFlip,
    /// Random-sign waveplate sandwich tuned to flip probability `p`.
    Sandwich,
}

impl ChannelKind {
    pub fn instantiate(self, p: f64) -> Result<ChannelModel> {
        Ok(match self {
            ChannelKind::BitFlip => ChannelModel::Pauli(PauliChannel::bit_flip(p)?),
            ChannelKind::PhaseFlip => ChannelModel::Pauli(PauliChannel::phase_flip(p)?),
            ChannelKind::Sandwich => ChannelModel::Sandwich(WaveplateSandwich::from_flip_probability(p)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    Pauli(PauliChannel),
    Sandwich(WaveplateSandwich),
}

impl ChannelModel {
    pub fn kraus(&self) -> KrausChannel {
        match self {
            ChannelModel::Pauli(p) => p.kraus(),
            ChannelModel::Sandwich(s) => s.induced_channel(),
        }
    }
}

/// How the Monte Carlo engine draws channel noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Sample the waveplate sign and apply the full unitary.
    #[default]
    FullUnitary,
    /// Draw a Pauli error from the equivalent Pauli channel.
    PauliDraw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Ancilla pair on modes 2 and 3.
    pub pair_source: BellDiagonalSource,
    /// Pair on modes 1 and 4. When set, photon 1 is prepared by projecting
    /// photon 4; otherwise photon 1 is prepared directly.
    pub herald_source: Option<BellDiagonalSource>,
    pub parity_visibility: InterferenceVisibility,
    pub channel: ChannelKind,
    pub use_minus_branches: bool,
    pub phase_error_mode: bool,
    pub sampling: SamplingMode,
}

impl PipelineConfig {
    pub fn ideal() -> Self {
        Self {
            pair_source: BellDiagonalSource::ideal(),
            herald_source: None,
            parity_visibility: InterferenceVisibility::perfect(),
            channel: ChannelKind::BitFlip,
            use_minus_branches: true,
            phase_error_mode: false,
            sampling: SamplingMode::FullUnitary,
        }
    }

    pub fn with_channel(mut self, channel: ChannelKind) -> Self {
        self.channel = channel;
        self
    }

    /// Signs accepted at each `|±⟩` detection.
    pub fn accepted_signs(&self) -> &'static [Sign] {
        if self.use_minus_branches {
            &[Sign::Plus, Sign::Minus]
        } else {
            &[Sign::Plus]
        }
    }
}

pub(crate) const ENCODE_PORTS: (&str, &str, &str, &str) = ("1", "2", "1'", "2'");
pub(crate) const DECODE_PORTS: (&str, &str, &str, &str) = ("2'", "3", "2''", "3'");

fn parity_kraus(ports: (&str, &str, &str, &str)) -> Result<Operator> {
    ParityCheck::new(PbsPorts::new(ports.0, ports.1, ports.2, ports.3)).kraus()
}

/// Operators shared by the analytic and sampled pipelines.
#[derive(Debug, Clone)]
pub(crate) struct Optics {
    pub encode_parity: Operator,
    pub decode_parity: Operator,
    pub dephasing: KrausChannel,
    /// `HWP(22.5°)`, the 45° polarization rotation.
    pub rotation: Operator,
}

impl Optics {
    pub fn new(v: InterferenceVisibility) -> Result<Self> {
        let (p1, p2) = parity_branch_projectors(2);
        Ok(Self {
            encode_parity: parity_kraus(ENCODE_PORTS)?,
            decode_parity: parity_kraus(DECODE_PORTS)?,
            dephasing: parity_dephasing(v, &p1, &p2)?,
            rotation: jones_matrix(WaveplateKind::Half, 22.5),
        })
    }
}

/// `ρ` rotated by `HWP(22.5°)` on every photon.
fn rotate_all(rho: &DensityOperator, rotation: &Operator) -> Result<DensityOperator> {
    let mut out = rho.clone();
    for q in 0..rho.photons() {
        out = out.apply(rotation, &[q])?;
    }
    Ok(out)
}

fn conjugated(channel: &KrausChannel, rotation: &Operator) -> Result<KrausChannel> {
    KrausChannel::new(
        channel
            .operators()
            .iter()
            .map(|k| &(rotation * k) * rotation)
            .collect(),
    )
}

/// Result of the first parity check and the `1′` detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub success_prob: f64,
    /// Two-photon state on `(2′, 3)`; `None` when nothing survives.
    pub state: Option<DensityOperator>,
    pub branches: Vec<BranchRecord>,
    /// Normalized state of each branch, parallel to `branches`.
    pub branch_states: Vec<Option<DensityOperator>>,
}

/// Encodes `input` (photon 1) with the ancilla pair on `(2, 3)`.
pub fn encode(cfg: &PipelineConfig, input: &DensityOperator, ancilla: &DensityOperator) -> Result<Encoded> {
    let optics = Optics::new(cfg.parity_visibility)?;
    encode_with(cfg, &optics, input, ancilla)
}

fn encode_with(
    cfg: &PipelineConfig,
    optics: &Optics,
    input: &DensityOperator,
    ancilla: &DensityOperator,
) -> Result<Encoded> {
    if input.photons() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: input.dim(),
        });
    }
    if ancilla.photons() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: ancilla.dim(),
        });
    }
    let joint = input.tensor(ancilla);
    let filtered = joint.apply(&optics.encode_parity, &[0, 1])?;
    let dephased = optics.dephasing.apply(&filtered, &[0, 1])?;
    let (branches, branch_states, total) =
        measure_and_compensate(cfg, &dephased, ENCODE_PORTS.3, |sign, prob, comp| BranchRecord {
            encode_outcome: sign,
            decode_outcome: None,
            compensations: comp,
            probability: prob,
        })?;
    let state = branch_sum(&branches, &branch_states, total);
    Ok(Encoded {
        success_prob: total,
        state,
        branches,
        branch_states,
    })
}

type Branches = (Vec<BranchRecord>, Vec<Option<DensityOperator>>, f64);

/// Detects photon 0 in `|±⟩`, traces it out, and compensates a `Minus`
/// outcome with `Z` on the first remaining photon.
fn measure_and_compensate(
    cfg: &PipelineConfig,
    rho: &DensityOperator,
    compensated_mode: &str,
    record: impl Fn(Sign, f64, Vec<Compensation>) -> BranchRecord,
) -> Result<Branches> {
    let n = rho.photons();
    let rest: Vec<usize> = (1..n).collect();
    let mut records = Vec::new();
    let mut states = Vec::new();
    let mut total = 0.0;
    for &sign in cfg.accepted_signs() {
        let projected = rho.apply(&sign.axis().outer(), &[0])?;
        let mut reduced = partial_trace(&projected, &rest)?;
        let mut comp = Vec::new();
        if sign == Sign::Minus {
            reduced = reduced.apply(&Operator::pauli_z(), &[0])?;
            comp.push(Compensation::phase_flip(compensated_mode));
        }
        let prob = reduced.trace().max(0.0);
        total += prob;
        records.push(record(sign, prob, comp));
        states.push(reduced.normalized().ok());
    }
    Ok((records, states, total))
}

fn branch_sum(
    records: &[BranchRecord],
    states: &[Option<DensityOperator>],
    total: f64,
) -> Option<DensityOperator> {
    if total <= PROB_EPS {
        return None;
    }
    let parts: Vec<(f64, DensityOperator)> = records
        .iter()
        .zip(states)
        .filter_map(|(r, s)| s.clone().map(|s| (r.probability / total, s)))
        .collect();
    DensityOperator::mixture(&parts).ok()
}

/// Applies each channel to its transmitted photon: `channels[0]` on `2′`,
/// `channels[1]` on `3`.
pub fn transmit(encoded: &DensityOperator, channels: &[ChannelModel; 2]) -> Result<DensityOperator> {
    let first = channels[0].kraus().apply(encoded, &[0])?;
    channels[1].kraus().apply(&first, &[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub accept_prob: f64,
    /// Photon `3′`; `None` when `accept_prob <= 1e-14`.
    pub output: Option<DensityOperator>,
    pub branches: Vec<BranchRecord>,
    pub branch_states: Vec<Option<DensityOperator>>,
}

/// Second parity check on `(2′, 3)` followed by the `2″` detection.
pub fn decode(cfg: &PipelineConfig, rho: &DensityOperator) -> Result<Decoded> {
    let optics = Optics::new(cfg.parity_visibility)?;
    decode_with(cfg, &optics, rho, Sign::Plus)
}

fn decode_with(cfg: &PipelineConfig, optics: &Optics, rho: &DensityOperator, encode_sign: Sign) -> Result<Decoded> {
    if rho.photons() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    let filtered = rho.apply(&optics.decode_parity, &[0, 1])?;
    let dephased = optics.dephasing.apply(&filtered, &[0, 1])?;
    let (branches, branch_states, total) =
        measure_and_compensate(cfg, &dephased, DECODE_PORTS.3, |sign, prob, comp| BranchRecord {
            encode_outcome: encode_sign,
            decode_outcome: Some(sign),
            compensations: comp,
            probability: prob,
        })?;
    let output = branch_sum(&branches, &branch_states, total);
    Ok(Decoded {
        accept_prob: total,
        output,
        branches,
        branch_states,
    })
}

/// Full pipeline result for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub encode_prob: f64,
    /// Decode acceptance given a successful encoding.
    pub accept_prob: f64,
    /// Unconditional acceptance, encode × decode.
    pub yield_prob: f64,
    pub output_state: DensityOperator,
    /// `1 − ⟨ψ|ρ_out|ψ⟩` against the sent ket.
    pub qber: f64,
    pub branches: Vec<BranchRecord>,
}

/// Photon 1 as handed to the first beam splitter.
pub fn prepare_input(cfg: &PipelineConfig, input: &Ket) -> Result<DensityOperator> {
    match &cfg.herald_source {
        None => Ok(input.to_density()),
        Some(src) => herald(src, input),
    }
}

/// Prepares photon 1 by projecting photon 4 of the `(1, 4)` pair onto `conj(ψ)`.
pub fn herald(src: &BellDiagonalSource, target: &Ket) -> Result<DensityOperator> {
    let pair = bell_diagonal_rho(src);
    let axis = target.normalize()?.conj();
    let detected = pair.project(&axis.outer(), &[1])?.into_state()?;
    partial_trace(&detected, &[0])
}

/// Runs encode → transmit → decode for an arbitrary input ket.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Ket, channels: &[ChannelModel; 2]) -> Result<ProtocolOutcome> {
    if input.photons() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: input.dim(),
        });
    }
    let input = input.normalize()?;
    let optics = Optics::new(cfg.parity_visibility)?;
    let mut photon1 = prepare_input(cfg, &input)?;
    let mut kraus = [channels[0].kraus(), channels[1].kraus()];
    if cfg.phase_error_mode {
        photon1 = rotate_all(&photon1, &optics.rotation)?;
        for k in kraus.iter_mut() {
            *k = conjugated(k, &optics.rotation)?;
        }
    }
    let ancilla = bell_diagonal_rho(&cfg.pair_source);
    let encoded = encode_with(cfg, &optics, &photon1, &ancilla)?;

    let mut branches = Vec::new();
    let mut parts = Vec::new();
    let mut yield_prob = 0.0;
    for (enc, state) in encoded.branches.iter().zip(&encoded.branch_states) {
        let Some(state) = state else { continue };
        let sent = kraus[0].apply(state, &[0])?;
        let sent = kraus[1].apply(&sent, &[1])?;
        let decoded = decode_with(cfg, &optics, &sent, enc.encode_outcome)?;
        for (dec, out) in decoded.branches.into_iter().zip(decoded.branch_states) {
            let joint = enc.probability * dec.probability;
            yield_prob += joint;
            if let Some(out) = out {
                parts.push((joint, out));
            }
            let mut compensations = enc.compensations.clone();
            compensations.extend(dec.compensations);
            branches.push(BranchRecord {
                encode_outcome: enc.encode_outcome,
                decode_outcome: dec.decode_outcome,
                compensations,
                probability: joint,
            });
        }
    }
    if yield_prob <= PROB_EPS || parts.is_empty() {
        return Err(Error::Undefined(yield_prob));
    }
    let mut output = DensityOperator::mixture(&parts)?.normalized()?;
    if cfg.phase_error_mode {
        output = rotate_all(&output, &optics.rotation)?;
    }
    let fidelity = output.expectation_ket(&input)?;
    Ok(ProtocolOutcome {
        encode_prob: encoded.success_prob,
        accept_prob: yield_prob / encoded.success_prob,
        yield_prob,
        output_state: output,
        qber: (1.0 - fidelity).clamp(0.0, 1.0),
        branches,
    })
}

/// Exact pipeline for one of the six states with both photons sent through
/// `cfg.channel` at strength `p`.
pub fn run_analytic(cfg: &PipelineConfig, input: SixState, p: f64) -> Result<ProtocolOutcome> {
    let model = cfg.channel.instantiate(p)?;
    run_pipeline(cfg, &input.ket(), &[model, model])
}

/// Decoded error rate for independent bit flips of probability `p`:
/// `p² / ((1−p)² + p²)`.
pub fn eq4_qber(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("{p} not in [0, 1]")));
    }
    let flip2 = p * p;
    Ok(flip2 / ((1.0 - p) * (1.0 - p) + flip2))
}

/// Error rate of sending the bare photon through a bit-flip channel.
pub fn run_direct_baseline(input: SixState, p: f64) -> Result<f64> {
    direct_qber(&input.ket(), &ChannelModel::Pauli(PauliChannel::bit_flip(p)?))
}

/// Error rate of sending the bare photon through `channel`.
pub fn direct_qber(input: &Ket, channel: &ChannelModel) -> Result<f64> {
    let input = input.normalize()?;
    let out = channel.kraus().apply(&input.to_density(), &[0])?;
    Ok((1.0 - out.expectation_ket(&input)?).clamp(0.0, 1.0))
}

/// Unweighted mean over all six states.
pub fn six_state_average(per_state_qber: &BTreeMap<SixState, f64>) -> Result<f64> {
    let mut sum = 0.0;
    for s in SixState::ALL {
        sum += per_state_qber
            .get(&s)
            .ok_or_else(|| Error::MissingState(s.label().to_string()))?;
    }
    Ok(sum / 6.0)
}

/// Turns the bit-flip rejection into phase-flip rejection by rotating the
/// whole logical frame by 45°: the input photon, both transmitted photons
/// around their channels, and the output photon.
pub fn phase_error_wrap(cfg: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        phase_error_mode: true,
        ..*cfg
    }
}

/// The four-photon state on `(1′, 2′, 3, 4)` after the first parity check,
/// and the state on `(1′, 2″, 3′, 4)` after the second with no added noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GhzReport {
    pub coincidence_prob: f64,
    pub state: DensityOperator,
    pub pm_visibility: f64,
    pub hv_visibility: f64,
    pub decode_prob: f64,
    pub decoded_state: DensityOperator,
    pub decoded_pm_visibility: f64,
}

/// Four-fold coincidence analysis with the `(1, 4)` pair as the source of
/// photon 1. Uses `cfg.herald_source`, or the ancilla source when unset.
pub fn ghz_intermediate(cfg: &PipelineConfig) -> Result<GhzReport> {
    let optics = Optics::new(cfg.parity_visibility)?;
    let src14 = cfg.herald_source.unwrap_or(cfg.pair_source);
    // order (1, 4, 2, 3) → (1, 2, 3, 4)
    let joint = bell_diagonal_rho(&src14).tensor(&bell_diagonal_rho(&cfg.pair_source));
    let joint = partial_trace(&joint, &[0, 2, 3, 1])?;

    let filtered = joint.apply(&optics.encode_parity, &[0, 1])?;
    let coincidence_prob = filtered.trace();
    let state = optics.dephasing.apply(&filtered, &[0, 1])?.normalized()?;

    let decoded = state.apply(&optics.decode_parity, &[1, 2])?;
    let decode_prob = decoded.trace();
    let decoded_state = optics.dephasing.apply(&decoded, &[1, 2])?.normalized()?;

    Ok(GhzReport {
        coincidence_prob,
        pm_visibility: correlation_visibility(&state, VisibilityBasis::PM)?,
        hv_visibility: correlation_visibility(&state, VisibilityBasis::HV)?,
        decoded_pm_visibility: correlation_visibility(&decoded_state, VisibilityBasis::PM)?,
        state,
        decode_prob,
        decoded_state,
    })
}

/// Finds the parity visibility `v` for which the four-photon `|±⟩`
/// visibility after the first parity check equals `target`.
pub fn calibrate_parity_visibility(cfg: &PipelineConfig, target: f64) -> Result<InterferenceVisibility> {
    let at = |v: f64| -> Result<f64> {
        let trial = PipelineConfig {
            parity_visibility: InterferenceVisibility::new(v)?,
            ..*cfg
        };
        Ok(ghz_intermediate(&trial)?.pm_visibility)
    };
    let (lo_v, hi_v) = (at(0.0)?, at(1.0)?);
    let (min, max) = (lo_v.min(hi_v), lo_v.max(hi_v));
    if !(min..=max).contains(&target) {
        return Err(Error::UnreachableVisibility { target, min, max });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (at(mid)? < target) == (hi_v > lo_v) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    InterferenceVisibility::new(0.5 * (lo + hi))
}


/// Decode acceptance of an ideal run under independent bit flips,
/// `(1−p)² + p²`.
pub fn ideal_decode_acceptance(p: f64) -> f64 {
    (1.0 - p) * (1.0 - p) + p * p
}

/// Unconditional acceptance of an ideal run under independent bit flips.
pub fn ideal_yield(p: f64) -> f64 {
    0.5 * ideal_decode_acceptance(p)
}

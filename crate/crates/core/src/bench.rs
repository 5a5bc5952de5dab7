//! Photons in labeled spatial modes: waveplates, polarizing beam splitters
//! and coincidence post-selection.
//!
//! A [`PhotonicState`] is a superposition of mode occupations. Each term lists
//! one `(mode, polarization)` pair per photon, kept sorted, so terms are
//! identified by which modes are filled rather than by which source emitted
//! each photon. That is what lets `α|HHH⟩ + β|VVV⟩` come out of the first
//! beam splitter as one coherent state even though the photon in mode `1′`
//! comes from a different source in the two terms.
//!
//! Several photons may share a spatial mode. Those bunched terms are carried
//! along until a post-selection removes them.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::algebra::{Ket, Operator, Projection, Register, Tensor, ALGEBRA_TOL, C64, PROB_EPS, ZERO};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpatialMode(String);

impl SpatialMode {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SpatialMode {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl fmt::Display for SpatialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Polarization::H
        } else {
            Polarization::V
        }
    }
}

/// Sorted `(mode, polarization)` assignment, one entry per photon.
pub type Occupation = Vec<(SpatialMode, Polarization)>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhotonicState {
    photons: usize,
    terms: BTreeMap<Occupation, C64>,
}

impl PhotonicState {
    pub fn vacuum() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), C64::new(1.0, 0.0));
        Self { photons: 0, terms }
    }

    /// Places photon `q` of `ket` in `modes[q]`.
    pub fn from_ket(ket: &Ket, modes: &[SpatialMode]) -> Result<Self> {
        let n = ket.photons();
        if modes.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: modes.len(),
            });
        }
        check_distinct(modes)?;
        let mut terms = BTreeMap::new();
        for (index, &amp) in ket.amplitudes().iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let mut occ: Occupation = modes
                .iter()
                .enumerate()
                .map(|(q, m)| (m.clone(), Polarization::from_index((index >> (n - 1 - q)) & 1)))
                .collect();
            occ.sort();
            terms.insert(occ, amp);
        }
        Ok(Self { photons: n, terms })
    }

    /// Reads the state out as a ket over `modes`, one photon per listed mode.
    pub fn to_ket(&self, modes: &[SpatialMode]) -> Result<Ket> {
        check_distinct(modes)?;
        let layout_err = || Error::ModeLayout(modes.iter().map(|m| m.to_string()).collect());
        if self.photons != modes.len() {
            return Err(layout_err());
        }
        let n = modes.len();
        let mut amps = vec![ZERO; 1 << n];
        for (occ, &amp) in &self.terms {
            let mut index = 0usize;
            for (q, mode) in modes.iter().enumerate() {
                let mut found = occ.iter().filter(|(m, _)| m == mode);
                let pol = match (found.next(), found.next()) {
                    (Some((_, pol)), None) => *pol,
                    _ => return Err(layout_err()),
                };
                index |= pol.index() << (n - 1 - q);
            }
            amps[index] += amp;
        }
        Ket::new(amps)
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, occ: &[(SpatialMode, Polarization)]) -> C64 {
        let mut key = occ.to_vec();
        key.sort();
        self.terms.get(&key).copied().unwrap_or(ZERO)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 <= PROB_EPS {
            return Err(Error::Undefined(n2));
        }
        Ok(self.scale(C64::new(1.0 / n2.sqrt(), 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            photons: self.photons,
            terms: self.terms.iter().map(|(k, &v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &PhotonicState) -> f64 {
        let mut keys: Vec<&Occupation> = self.terms.keys().collect();
        keys.extend(other.terms.keys());
        keys.into_iter()
            .map(|k| (self.amplitude(k) - other.amplitude(k)).norm())
            .fold(0.0, f64::max)
    }

    fn from_terms(photons: usize, raw: impl IntoIterator<Item = (Occupation, C64)>) -> Self {
        let mut terms: BTreeMap<Occupation, C64> = BTreeMap::new();
        for (mut occ, amp) in raw {
            occ.sort();
            *terms.entry(occ).or_insert(ZERO) += amp;
        }
        terms.retain(|_, a| *a != ZERO);
        Self { photons, terms }
    }
}

impl Tensor for PhotonicState {
    fn tensor(&self, other: &Self) -> Self {
        let raw = self.terms.iter().flat_map(|(a, &x)| {
            other.terms.iter().map(move |(b, &y)| {
                let mut occ = a.clone();
                occ.extend(b.iter().cloned());
                (occ, x * y)
            })
        });
        Self::from_terms(self.photons + other.photons, raw)
    }
}

fn count_in(occ: &[(SpatialMode, Polarization)], mode: &SpatialMode) -> usize {
    occ.iter().filter(|(m, _)| m == mode).count()
}

fn check_distinct(modes: &[SpatialMode]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(Error::DuplicateMode(m.to_string()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveplateKind {
    Half,
    Quarter,
}

/// A waveplate with its fast axis at `angle_deg` from horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveplate {
    kind: WaveplateKind,
    angle_deg: f64,
}

impl Waveplate {
    pub fn new(kind: WaveplateKind, angle_deg: f64) -> Result<Self> {
        if !angle_deg.is_finite() || !(-180.0..180.0).contains(&angle_deg) {
            return Err(Error::AngleOutOfRange(angle_deg));
        }
        Ok(Self { kind, angle_deg })
    }

    pub fn half(angle_deg: f64) -> Result<Self> {
        Self::new(WaveplateKind::Half, angle_deg)
    }

    pub fn quarter(angle_deg: f64) -> Result<Self> {
        Self::new(WaveplateKind::Quarter, angle_deg)
    }

    pub fn kind(&self) -> WaveplateKind {
        self.kind
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle_deg
    }

    pub fn jones(&self) -> Operator {
        jones_matrix(self.kind, self.angle_deg)
    }
}

/// Jones matrix of an ideal waveplate.
///
/// `HWP(θ) = [[cos2θ, sin2θ], [sin2θ, −cos2θ]]` and
/// `QWP(θ) = R(θ)·diag(1, i)·R(−θ)`.
pub fn jones_matrix(kind: WaveplateKind, angle_deg: f64) -> Operator {
    let t = angle_deg.to_radians();
    let c = |x: f64| C64::new(x, 0.0);
    let m = match kind {
        WaveplateKind::Half => {
            let (s2, c2) = (2.0 * t).sin_cos();
            [[c(c2), c(s2)], [c(s2), c(-c2)]]
        }
        WaveplateKind::Quarter => {
            let (s, co) = t.sin_cos();
            let i = C64::new(0.0, 1.0);
            // R(θ)·diag(1, i)·R(−θ) expanded
            [
                [c(co * co) + i * (s * s), c(s * co) - i * (s * co)],
                [c(s * co) - i * (s * co), c(s * s) + i * (co * co)],
            ]
        }
    };
    let mut op = Operator::from_2x2(m);
    if let Ok(u) = Operator::unitary(op.matrix().clone()) {
        op = u;
    }
    op
}

/// Acts with a single-photon operator on the photon in `mode`, term by term.
/// Terms without a photon in `mode` pass unchanged.
pub fn apply_jones(state: &PhotonicState, mode: &SpatialMode, op: &Operator) -> Result<PhotonicState> {
    op.check_dim(2)?;
    let m = op.matrix();
    let mut raw = Vec::with_capacity(state.terms.len() * 2);
    for (occ, &amp) in &state.terms {
        match count_in(occ, mode) {
            0 => raw.push((occ.clone(), amp)),
            1 => {
                let pos = occ.iter().position(|(m, _)| m == mode).expect("counted");
                let col = occ[pos].1.index();
                for row in 0..2 {
                    let coeff = m[(row, col)];
                    if coeff != ZERO {
                        let mut out = occ.clone();
                        out[pos].1 = Polarization::from_index(row);
                        raw.push((out, coeff * amp));
                    }
                }
            }
            _ => return Err(Error::MultiplePhotonsInMode(mode.to_string())),
        }
    }
    Ok(PhotonicState::from_terms(state.photons, raw))
}

pub fn waveplate_apply(state: &PhotonicState, mode: &SpatialMode, plate: &Waveplate) -> Result<PhotonicState> {
    apply_jones(state, mode, &plate.jones())
}

/// Input and output ports of a polarizing beam splitter.
///
/// Horizontal light is transmitted (`a → c`, `b → d`) and vertical light is
/// reflected (`a → d`, `b → c`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbsPorts {
    pub in_a: SpatialMode,
    pub in_b: SpatialMode,
    pub out_c: SpatialMode,
    pub out_d: SpatialMode,
}

impl PbsPorts {
    pub fn new(in_a: &str, in_b: &str, out_c: &str, out_d: &str) -> Self {
        Self {
            in_a: in_a.into(),
            in_b: in_b.into(),
            out_c: out_c.into(),
            out_d: out_d.into(),
        }
    }
}

/// Routes every photon in the input ports. Reflection carries no phase.
pub fn pbs(state: &PhotonicState, ports: &PbsPorts) -> Result<PhotonicState> {
    if ports.in_a == ports.in_b {
        return Err(Error::DuplicateMode(ports.in_a.to_string()));
    }
    if ports.out_c == ports.out_d {
        return Err(Error::DuplicateMode(ports.out_c.to_string()));
    }
    let mut raw = Vec::with_capacity(state.terms.len());
    for (occ, &amp) in &state.terms {
        let mut out = Vec::with_capacity(occ.len());
        for (mode, pol) in occ {
            let routed = if *mode == ports.in_a {
                match pol {
                    Polarization::H => ports.out_c.clone(),
                    Polarization::V => ports.out_d.clone(),
                }
            } else if *mode == ports.in_b {
                match pol {
                    Polarization::H => ports.out_d.clone(),
                    Polarization::V => ports.out_c.clone(),
                }
            } else {
                if *mode == ports.out_c || *mode == ports.out_d {
                    return Err(Error::OutputModeOccupied(mode.to_string()));
                }
                mode.clone()
            };
            out.push((routed, *pol));
        }
        raw.push((out, amp));
    }
    Ok(PhotonicState::from_terms(state.photons, raw))
}

/// Keeps the terms with exactly one photon in every required mode, without
/// renormalizing.
pub fn coincidence_filter(state: &PhotonicState, required: &[SpatialMode]) -> Result<PhotonicState> {
    check_distinct(required)?;
    let terms = state
        .terms
        .iter()
        .filter(|(occ, _)| required.iter().all(|m| count_in(occ, m) == 1))
        .map(|(k, &v)| (k.clone(), v))
        .collect();
    Ok(PhotonicState {
        photons: state.photons,
        terms,
    })
}

pub fn coincidence_postselect(
    state: &PhotonicState,
    required: &[SpatialMode],
) -> Result<Projection<PhotonicState>> {
    let kept = coincidence_filter(state, required)?;
    Ok(renormalize(kept))
}

/// Projects the photon in `mode` onto `axis` and removes it from the state,
/// without renormalizing. Only terms with exactly one photon in `mode`
/// contribute, matching a detector that registers one and only one photon.
pub fn polarizer_filter(state: &PhotonicState, mode: &SpatialMode, axis: &Ket) -> Result<PhotonicState> {
    if axis.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: axis.dim(),
        });
    }
    let norm_dev = (axis.norm_sqr() - 1.0).abs();
    if norm_dev >= ALGEBRA_TOL {
        return Err(Error::NotIdempotent(norm_dev));
    }
    if state.terms.keys().all(|occ| count_in(occ, mode) == 0) {
        return Err(Error::EmptyMode(mode.to_string()));
    }
    let mut raw = Vec::with_capacity(state.terms.len());
    for (occ, &amp) in &state.terms {
        if count_in(occ, mode) != 1 {
            continue;
        }
        let pos = occ.iter().position(|(m, _)| m == mode).expect("counted");
        let overlap = axis.amplitude(occ[pos].1.index()).conj();
        let mut rest = occ.clone();
        rest.remove(pos);
        raw.push((rest, overlap * amp));
    }
    Ok(PhotonicState::from_terms(state.photons.saturating_sub(1), raw))
}

pub fn polarizer_project(
    state: &PhotonicState,
    mode: &SpatialMode,
    axis: &Ket,
) -> Result<Projection<PhotonicState>> {
    let kept = polarizer_filter(state, mode, axis)?;
    Ok(renormalize(kept))
}

fn renormalize(kept: PhotonicState) -> Projection<PhotonicState> {
    let prob = kept.norm_sqr();
    let state = if prob > PROB_EPS {
        Some(kept.scale(C64::new(1.0 / prob.sqrt(), 0.0)))
    } else {
        None
    };
    Projection { prob, state }
}

/// Matrix of a linear optical map read off on polarization registers: photon
/// `q` of the input register sits in `in_modes[q]`, photon `q` of the output in
/// `out_modes[q]`. Output terms that do not fit the layout must already have
/// been filtered by `f`.
pub fn polarization_map(
    in_modes: &[SpatialMode],
    out_modes: &[SpatialMode],
    f: impl Fn(&PhotonicState) -> Result<PhotonicState>,
) -> Result<Operator> {
    if in_modes.len() != out_modes.len() {
        return Err(Error::DimensionMismatch {
            expected: in_modes.len(),
            actual: out_modes.len(),
        });
    }
    let dim = 1usize << in_modes.len();
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    for col in 0..dim {
        let mut amps = vec![ZERO; dim];
        amps[col] = C64::new(1.0, 0.0);
        let input = PhotonicState::from_ket(&Ket::new(amps)?, in_modes)?;
        let output = f(&input)?;
        if output.terms.is_empty() {
            continue;
        }
        let ket = output.to_ket(out_modes)?;
        for (row, &a) in ket.amplitudes().iter().enumerate() {
            m[(row, col)] = a;
        }
    }
    Operator::new(m)
}

/// A PBS followed by a two-fold coincidence on its outputs: the quantum
/// parity measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    pub ports: PbsPorts,
}

impl ParityCheck {
    pub fn new(ports: PbsPorts) -> Self {
        Self { ports }
    }

    /// Unnormalized state after the beam splitter and the coincidence filter.
    pub fn filter(&self, state: &PhotonicState) -> Result<PhotonicState> {
        let routed = pbs(state, &self.ports)?;
        coincidence_filter(&routed, &[self.ports.out_c.clone(), self.ports.out_d.clone()])
    }

    /// The post-selected map on the polarization register `(a, b) → (c, d)`.
    pub fn kraus(&self) -> Result<Operator> {
        let ins = [self.ports.in_a.clone(), self.ports.in_b.clone()];
        let outs = [self.ports.out_c.clone(), self.ports.out_d.clone()];
        polarization_map(&ins, &outs, |s| self.filter(s))
    }
}

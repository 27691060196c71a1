//! Coset decoders: block BP, boundary MPS and brute-force enumeration.
//!
//! All three pick the logical label `L` maximizing the estimated probability
//! of the coset `f L G`, where `f` is the pure error of the syndrome, and
//! return `f L` as the correction.

use std::fmt;

use log::warn;
use rayon::prelude::*;

use crate::blockbp::{blockbp_contraction, run_blockbp, BlockBpConfig};
use crate::bp::{bethe_contraction, fuse_grid, run_bp, GraphTN, Schedule};
use crate::code::{LogicalLabel, PauliString, SurfaceCode, Syndrome};
use crate::cosetnet::{build_coset_network, coset_probs_exact};
use crate::noise::NoiseModel;
use crate::tensor::{bmps_contract, GridTN, LogScalar};
use crate::{Error, Result};

/// Log-probabilities closer than this are ties.
pub const TIE_TOL: f64 = 1e-12;

/// How a coset network is handed to BP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `k x k` blocks exchanging MPS messages.
    MpsMessages,
    /// Each `k x k` tile fused into one tensor, then vector BP.
    Fused,
    /// `3 x 3` tiles fused, then MPS-message block BP with `k' = 2`.
    CoarseThenBlock,
}

impl Mode {
    /// Default mode for a block size: fused for 1, 2 and 4, coarse-then-block
    /// for 6, MPS messages otherwise.
    pub fn for_block_size(k: usize) -> Mode {
        match k {
            1 | 2 | 4 => Mode::Fused,
            6 => Mode::CoarseThenBlock,
            _ => Mode::MpsMessages,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::MpsMessages => "mps",
            Mode::Fused => "fused",
            Mode::CoarseThenBlock => "coarse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderParams {
    pub k: usize,
    /// Bond dimension cap; `0` means exact.
    pub chi: usize,
    pub max_iter: usize,
    pub delta0: f64,
    pub delta1: f64,
    pub damping: f64,
    pub mode: Mode,
}

impl Default for DecoderParams {
    fn default() -> Self {
        DecoderParams::with_block_size(2)
    }
}

impl DecoderParams {
    /// Default parameters with block size `k` and its default mode.
    pub fn with_block_size(k: usize) -> Self {
        DecoderParams {
            k,
            chi: 16,
            max_iter: 20,
            delta0: 1e-4,
            delta1: 1e-2,
            damping: 0.1,
            mode: Mode::for_block_size(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("block size must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.delta0.partial_cmp(&self.delta1) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(format!(
                "need delta0 < delta1, got {} and {}",
                self.delta0, self.delta1
            )));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!("damping must lie in [0, 1], got {}", self.damping)));
        }
        Ok(())
    }

    fn blockbp_config(&self, k: usize) -> BlockBpConfig {
        BlockBpConfig {
            k,
            chi: self.chi,
            max_iter: self.max_iter,
            delta0: self.delta0,
            damping: self.damping,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosetEstimate {
    pub label: LogicalLabel,
    /// Present exactly when the estimate is trusted.
    pub log_prob: Option<LogScalar>,
    pub final_delta: f64,
    /// `final_delta < delta0`.
    pub converged_0: bool,
    /// `final_delta < delta1`.
    pub trusted: bool,
    pub rounds: usize,
}

impl CosetEstimate {
    fn exact(label: LogicalLabel, p: LogScalar) -> Self {
        CosetEstimate {
            label,
            log_prob: Some(p),
            final_delta: 0.0,
            converged_0: true,
            trusted: true,
            rounds: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// `f_s L*` for the chosen label `L*`.
    pub correction: PauliString,
    pub chosen: LogicalLabel,
    /// One estimate per label in `I, X, Y, Z` order.
    pub estimates: [CosetEstimate; 4],
    pub fallback_used: bool,
}

impl DecodeResult {
    pub fn mean_rounds(&self) -> f64 {
        self.estimates.iter().map(|e| e.rounds as f64).sum::<f64>() / 4.0
    }
}

/// `a > b` beyond the tie tolerance.
fn beats(a: &LogScalar, b: &LogScalar) -> bool {
    match (a.sign(), b.sign()) {
        (1, 1) => a.log_mag() > b.log_mag() + TIE_TOL,
        (-1, -1) => a.log_mag() + TIE_TOL < b.log_mag(),
        _ => a.cmp_value(b).is_gt(),
    }
}

/// Argmax of trusted log-probabilities, or argmin of `final_delta` when no
/// estimate is trusted. Ties go to the earliest label.
fn select(estimates: &[CosetEstimate; 4]) -> (LogicalLabel, bool) {
    let mut best: Option<(&CosetEstimate, LogScalar)> = None;
    for e in estimates {
        if let (true, Some(p)) = (e.trusted, e.log_prob) {
            if best.as_ref().is_none_or(|(_, b)| beats(&p, b)) {
                best = Some((e, p));
            }
        }
    }
    if let Some((e, _)) = best {
        return (e.label, false);
    }
    let mut min = &estimates[0];
    for e in &estimates[1..] {
        if e.final_delta < min.final_delta {
            min = e;
        }
    }
    (min.label, true)
}

fn finish(code: &SurfaceCode, f: &PauliString, estimates: [CosetEstimate; 4]) -> DecodeResult {
    let (chosen, fallback_used) = select(&estimates);
    DecodeResult {
        correction: &code.logical(chosen) * f,
        chosen,
        estimates,
        fallback_used,
    }
}

fn check_inputs(code: &SurfaceCode, model: &NoiseModel, s: &Syndrome) -> Result<()> {
    if s.len() != code.m() {
        return Err(Error::LengthMismatch {
            expected: code.m(),
            found: s.len(),
        });
    }
    if model.n() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            found: model.n(),
        });
    }
    Ok(())
}

/// Contraction estimate of one coset network with the final BP `delta` and
/// round count. `None` for the value means it could not be read off.
fn bp_estimate(grid: &GridTN, params: &DecoderParams) -> Result<(f64, usize, Option<LogScalar>)> {
    let trust = |delta: f64| delta < params.delta1;
    match params.mode {
        Mode::Fused => {
            let graph = GraphTN::from_grid(&fuse_grid(grid, params.k)?)?;
            let state = run_bp(&graph, params.max_iter, params.delta0, params.damping, Schedule::TwoColor)?;
            let delta = state.final_delta();
            let value = trust(delta).then(|| bethe_contraction(&graph, &state.messages));
            Ok((delta, state.rounds_used, value.map(zero_on_orthogonal).transpose()?))
        }
        Mode::MpsMessages | Mode::CoarseThenBlock => {
            let (grid, k) = match params.mode {
                Mode::CoarseThenBlock => (fuse_grid(grid, 3)?, 2),
                _ => (grid.clone(), params.k),
            };
            let state = run_blockbp(&grid, &params.blockbp_config(k))?;
            let delta = state.final_delta();
            let value = trust(delta).then(|| blockbp_contraction(&grid, &state, params.chi));
            Ok((delta, state.rounds_used, value.map(zero_on_orthogonal).transpose()?))
        }
    }
}

/// Orthogonal message pairs only arise when the coset carries no weight.
fn zero_on_orthogonal(r: Result<LogScalar>) -> Result<LogScalar> {
    match r {
        Err(Error::NonNormalizable(_)) => Ok(LogScalar::ZERO),
        other => other,
    }
}

fn blockbp_coset(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
    label: LogicalLabel,
    params: &DecoderParams,
) -> Result<CosetEstimate> {
    let net = build_coset_network(code, model, f, label)?;
    let (final_delta, rounds, value) = match bp_estimate(&net.grid, params) {
        Ok(r) => r,
        Err(e) => {
            warn!("coset {label}: {e}; estimate discarded");
            (f64::INFINITY, params.max_iter, None)
        }
    };
    let trusted = value.is_some();
    Ok(CosetEstimate {
        label,
        log_prob: value,
        final_delta,
        converged_0: final_delta < params.delta0,
        trusted,
        rounds,
    })
}

/// Block-BP decoder with a given pure error; the four cosets run in parallel
/// from cold messages.
pub(crate) fn decode_blockbp_with(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
    params: &DecoderParams,
) -> Result<DecodeResult> {
    params.validate()?;
    let estimates: Vec<CosetEstimate> = LogicalLabel::ALL
        .par_iter()
        .map(|&l| blockbp_coset(code, model, f, l, params))
        .collect::<Result<_>>()?;
    Ok(finish(code, f, estimates.try_into().expect("four cosets")))
}

/// Block-BP decoder. Untrusted cosets (`delta >= delta1`) are excluded from
/// the argmax; if none is trusted the coset with the smallest `delta` wins.
pub fn decode_blockbp(
    code: &SurfaceCode,
    model: &NoiseModel,
    s: &Syndrome,
    params: &DecoderParams,
) -> Result<DecodeResult> {
    check_inputs(code, model, s)?;
    decode_blockbp_with(code, model, &code.pure_error(s)?, params)
}

pub(crate) fn decode_bmps_with(
    code: &SurfaceCode,
    model: &NoiseModel,
    f: &PauliString,
    chi: usize,
) -> Result<DecodeResult> {
    let estimates: Vec<CosetEstimate> = LogicalLabel::ALL
        .par_iter()
        .map(|&l| {
            let net = build_coset_network(code, model, f, l)?;
            Ok(CosetEstimate::exact(l, bmps_contract(&net.grid, chi)?))
        })
        .collect::<Result<_>>()?;
    Ok(finish(code, f, estimates.try_into().expect("four cosets")))
}

/// Reference decoder contracting every coset network with boundary MPS.
pub fn decode_bmps(code: &SurfaceCode, model: &NoiseModel, s: &Syndrome, chi: usize) -> Result<DecodeResult> {
    check_inputs(code, model, s)?;
    decode_bmps_with(code, model, &code.pure_error(s)?, chi)
}

pub(crate) fn decode_exact_with(code: &SurfaceCode, model: &NoiseModel, f: &PauliString) -> Result<DecodeResult> {
    let probs = coset_probs_exact(code, model, f)?;
    let estimates = LogicalLabel::ALL.map(|l| CosetEstimate::exact(l, probs[l.index()]));
    Ok(finish(code, f, estimates))
}

/// Maximum-likelihood coset decoder by enumerating the stabilizer group;
/// limited to codes with at most 24 checks (`d <= 3`).
pub fn decode_exact(code: &SurfaceCode, model: &NoiseModel, s: &Syndrome) -> Result<DecodeResult> {
    check_inputs(code, model, s)?;
    decode_exact_with(code, model, &code.pure_error(s)?)
}

/// Whether the correction undoes `error` up to a stabilizer.
pub fn is_success(code: &SurfaceCode, error: &PauliString, result: &DecodeResult) -> Result<bool> {
    let residual = error * &result.correction;
    if !code.syndrome(&residual)?.is_trivial() {
        return Err(Error::Precondition(
            "correction was computed for a different syndrome than the error's".into(),
        ));
    }
    Ok(code.logical_class(&residual)? == LogicalLabel::I)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    BlockBp,
    Bmps,
    Exact,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::BlockBp => "blockbp",
            DecoderKind::Bmps => "bmps",
            DecoderKind::Exact => "exact",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blockbp" => Ok(DecoderKind::BlockBp),
            "bmps" => Ok(DecoderKind::Bmps),
            "exact" => Ok(DecoderKind::Exact),
            other => Err(Error::InvalidParameter(format!("unknown decoder {other:?}"))),
        }
    }
}

/// Dispatch on the decoder kind; `bmps` uses `params.chi`.
pub fn decode(
    kind: DecoderKind,
    code: &SurfaceCode,
    model: &NoiseModel,
    s: &Syndrome,
    params: &DecoderParams,
) -> Result<DecodeResult> {
    match kind {
        DecoderKind::BlockBp => decode_blockbp(code, model, s, params),
        DecoderKind::Bmps => decode_bmps(code, model, s, params.chi),
        DecoderKind::Exact => decode_exact(code, model, s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::build_code;
    use crate::noise::shot_rng;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn est(label: LogicalLabel, p: Option<f64>, delta: f64) -> CosetEstimate {
        CosetEstimate {
            label,
            log_prob: p.map(LogScalar::from_ln),
            final_delta: delta,
            converged_0: false,
            trusted: p.is_some(),
            rounds: 1,
        }
    }

    #[test]
    fn mode_by_block_size() {
        assert_eq!(Mode::for_block_size(1), Mode::Fused);
        assert_eq!(Mode::for_block_size(2), Mode::Fused);
        assert_eq!(Mode::for_block_size(4), Mode::Fused);
        assert_eq!(Mode::for_block_size(6), Mode::CoarseThenBlock);
        assert_eq!(Mode::for_block_size(3), Mode::MpsMessages);
        assert_eq!(Mode::for_block_size(9), Mode::MpsMessages);
    }

    #[test]
    fn defaults() {
        let p = DecoderParams::default();
        assert_eq!((p.k, p.chi, p.max_iter), (2, 16, 20));
        assert_eq!((p.delta0, p.delta1, p.damping), (1e-4, 1e-2, 0.1));
        assert!(p.validate().is_ok());
        assert!(DecoderParams { delta0: 0.1, ..p }.validate().is_err());
        assert!(DecoderParams { k: 0, ..p }.validate().is_err());
        assert!(DecoderParams { damping: 1.5, ..p }.validate().is_err());
    }

    #[test]
    fn selection_rules() {
        use LogicalLabel::*;
        let e = [est(I, Some(-3.0), 0.0), est(X, Some(-1.0), 0.0), est(Y, None, 0.5), est(Z, Some(-1.0 + 1e-13), 0.0)];
        assert_eq!(select(&e), (X, false));
        let e = [est(I, None, 0.3), est(X, None, 0.1), est(Y, None, 0.1), est(Z, None, 0.2)];
        assert_eq!(select(&e), (X, true));
        let e = [est(I, None, 0.3), est(X, None, 0.3), est(Y, Some(-50.0), 0.005), est(Z, None, 0.0)];
        assert_eq!(select(&e), (Y, false));
    }

    #[test]
    fn trivial_syndrome_decodes_to_identity() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let s = Syndrome::zeros(code.m());
        for r in [
            decode_blockbp(&code, &model, &s, &DecoderParams::default()).unwrap(),
            decode_bmps(&code, &model, &s, 16).unwrap(),
            decode_exact(&code, &model, &s).unwrap(),
        ] {
            assert_eq!(r.chosen, LogicalLabel::I);
            assert!(r.correction.is_identity());
        }
    }

    #[test]
    fn noiseless_oracle() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.0, code.n()).unwrap();
        let r = decode_exact(&code, &model, &Syndrome::zeros(code.m())).unwrap();
        assert_eq!(r.chosen, LogicalLabel::I);
        assert_eq!(r.estimates[0].log_prob.unwrap().to_f64(), 1.0);
        assert!(r.estimates[1..].iter().all(|e| e.log_prob.unwrap().is_zero()));
    }

    #[test]
    fn d2_probabilities_cover_everything() {
        let code = build_code(2).unwrap();
        let model = NoiseModel::depolarizing(0.05, code.n()).unwrap();
        let mut total = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for v in 0..1u64 << code.m() {
            let s = Syndrome::from_u64(v, code.m());
            let r = decode_exact(&code, &model, &s).unwrap();
            total += r.estimates.iter().map(|e| e.log_prob.unwrap().to_f64()).sum::<f64>();
            let g = code.check(rng.random_range(0..code.m()));
            let f = &code.pure_error(&s).unwrap() * &g;
            let r2 = decode_exact_with(&code, &model, &f).unwrap();
            assert_eq!(r.chosen, r2.chosen);
            for (a, b) in r.estimates.iter().zip(&r2.estimates) {
                assert!(a.log_prob.unwrap().rel_diff(&b.log_prob.unwrap()) < 1e-12);
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corrections_reproduce_the_syndrome() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.12, code.n()).unwrap();
        let params = DecoderParams::default();
        for shot in 0..20 {
            let e = model.sample_error(&mut shot_rng(41, shot));
            let s = code.syndrome(&e).unwrap();
            for kind in [DecoderKind::BlockBp, DecoderKind::Bmps, DecoderKind::Exact] {
                let r = decode(kind, &code, &model, &s, &params).unwrap();
                assert_eq!(code.syndrome(&r.correction).unwrap(), s);
                assert!(is_success(&code, &e, &r).is_ok());
            }
        }
    }

    #[test]
    fn success_predicate() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let e = model.sample_error(&mut shot_rng(42, 3));
        let s = code.syndrome(&e).unwrap();
        let mut r = decode_exact(&code, &model, &s).unwrap();
        r.correction = e.clone();
        assert!(is_success(&code, &e, &r).unwrap());
        r.correction = &e * &code.check(4);
        assert!(is_success(&code, &e, &r).unwrap());
        r.correction = &e * code.logical_x();
        assert!(!is_success(&code, &e, &r).unwrap());
        r.correction = &e * &PauliString::x_on(code.n(), &[0]);
        assert!(is_success(&code, &e, &r).is_err());
    }

    #[test]
    fn bmps_decisions_are_gauge_independent() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..30 {
            let s = Syndrome::from_u64(rng.random_range(0..1u64 << code.m()), code.m());
            let f = code.pure_error(&s).unwrap();
            let g = &code.check(rng.random_range(0..code.m())) * &code.check(rng.random_range(0..code.m()));
            let a = decode_bmps_with(&code, &model, &f, 0).unwrap();
            let b = decode_bmps_with(&code, &model, &(&f * &g), 0).unwrap();
            assert_eq!(a.chosen, b.chosen);
        }
    }

    #[test]
    fn fallback_when_nothing_converges() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let s = Syndrome::from_u64(0b1011_0010_0110, code.m());
        let params = DecoderParams {
            max_iter: 1,
            delta0: 1e-300,
            delta1: 1e-299,
            ..DecoderParams::with_block_size(3)
        };
        let r = decode_blockbp(&code, &model, &s, &params).unwrap();
        assert!(r.fallback_used);
        assert!(r.estimates.iter().all(|e| e.log_prob.is_none() && !e.trusted));
        let min = r.estimates.iter().map(|e| e.final_delta).fold(f64::INFINITY, f64::min);
        assert_eq!(r.estimates[r.chosen.index()].final_delta, min);
    }

    #[test]
    fn single_block_matches_bmps_decoder() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        let params = DecoderParams {
            chi: 4,
            ..DecoderParams::with_block_size(code.side())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..30 {
            let s = Syndrome::from_u64(rng.random_range(0..1u64 << code.m()), code.m());
            let a = decode_blockbp(&code, &model, &s, &params).unwrap();
            let b = decode_bmps(&code, &model, &s, 4).unwrap();
            assert_eq!(a.chosen, b.chosen);
            assert!(!a.fallback_used);
            for (x, y) in a.estimates.iter().zip(&b.estimates) {
                assert_eq!(x.log_prob, y.log_prob);
            }
        }
    }

    #[test]
    fn every_mode_decodes_low_weight_errors() {
        let code = build_code(5).unwrap();
        let model = NoiseModel::depolarizing(0.05, code.n()).unwrap();
        for k in [1, 2, 3, 4, 6] {
            let params = DecoderParams::with_block_size(k);
            for q in [0, 12, 40] {
                for op in [PauliString::x_on(code.n(), &[q]), PauliString::z_on(code.n(), &[q])] {
                    let s = code.syndrome(&op).unwrap();
                    let r = decode_blockbp(&code, &model, &s, &params).unwrap();
                    assert!(is_success(&code, &op, &r).unwrap(), "k = {k}, qubit {q}");
                }
            }
        }
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let code = build_code(3).unwrap();
        let model = NoiseModel::depolarizing(0.1, code.n()).unwrap();
        assert!(decode_exact(&code, &model, &Syndrome::zeros(5)).is_err());
        let small = NoiseModel::depolarizing(0.1, 4).unwrap();
        assert!(decode_bmps(&code, &small, &Syndrome::zeros(code.m()), 4).is_err());
        assert!(decode_exact(&build_code(5).unwrap(), &NoiseModel::depolarizing(0.1, 41).unwrap(), &Syndrome::zeros(40)).is_err());
    }
}

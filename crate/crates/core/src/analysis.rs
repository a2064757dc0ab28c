//! Error metrics for decoded streams and rate-sweep helpers.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{calibrate_thresholds, run_channel, ChannelConfig, ChannelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("preamble not found: best distance {best_distance} exceeds {limit}")]
    NoLock { best_distance: usize, limit: usize },
    #[error("alignment window {window} shorter than preamble ({preamble})")]
    WindowTooShort { window: usize, preamble: usize },
    #[error("invalid bit string: {0}")]
    InvalidBits(String),
}

/// Ordered sequence of bits, each 0 or 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    /// The low `width` bits of `value`, most significant first.
    pub fn from_u64(value: u64, width: usize) -> Self {
        Self((0..width).rev().map(|i| ((value >> i) & 1) as u8).collect())
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.gen_range(0..=1)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(u8::from(bit));
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        let end = end.min(self.len());
        let start = start.min(end);
        BitString(self.0[start..end].to_vec())
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn chunks(&self, k: usize) -> impl Iterator<Item = &[u8]> {
        self.0.chunks(k.max(1))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(AnalysisError::InvalidBits(format!("unexpected `{other}`"))),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(BitString)
    }
}

impl From<BitString> for String {
    fn from(b: BitString) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BitString {
    type Error = AnalysisError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<&[u8]> for BitString {
    fn from(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| u8::from(b != 0)).collect())
    }
}

/// Levenshtein distance with unit costs (Wagner-Fischer, two rows).
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn edit_distance_str(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// Default alignment search window in bits.
pub const DEFAULT_ALIGN_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub offset: usize,
    pub distance: usize,
}

/// Finds the offset in `0..=window` where the stream best matches the
/// preamble. Ties go to the smallest offset. Fails when the best match is
/// more than a quarter of the preamble length away.
pub fn align_by_preamble(
    stream: &BitString,
    preamble: &BitString,
    window: usize,
) -> Result<Alignment, AnalysisError> {
    let plen = preamble.len();
    if window < plen {
        return Err(AnalysisError::WindowTooShort {
            window,
            preamble: plen,
        });
    }
    let mut best = Alignment {
        offset: 0,
        distance: usize::MAX,
    };
    for offset in 0..=window.min(stream.len()) {
        let d = edit_distance(stream.slice(offset, offset + plen).as_slice(), preamble.as_slice());
        if d < best.distance {
            best = Alignment { offset, distance: d };
        }
    }
    let limit = plen / 4;
    if best.distance > limit {
        return Err(AnalysisError::NoLock {
            best_distance: best.distance,
            limit,
        });
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub edit_distance: usize,
    pub ber: f64,
    pub alignment_offset: usize,
    /// Set when the raw ratio exceeded 1 and `ber` was clamped to 1.
    pub clamped: bool,
}

/// Edit distance between the streams divided by the sent length.
pub fn bit_error_rate(sent: &BitString, received_aligned: &BitString) -> ErrorReport {
    let ed = edit_distance(sent.as_slice(), received_aligned.as_slice());
    let raw = ed as f64 / sent.len().max(1) as f64;
    ErrorReport {
        edit_distance: ed,
        ber: raw.min(1.0),
        alignment_offset: 0,
        clamped: raw > 1.0,
    }
}

/// Throughput in Kbps for `bits_per_symbol` bits every `period` cycles at
/// `freq_hz`, rounded to three decimals.
pub fn rate_kbps(period: u64, bits_per_symbol: usize, freq_hz: f64) -> f64 {
    assert!(period > 0, "period must be positive");
    let raw = bits_per_symbol as f64 * freq_hz / period as f64 / 1000.0;
    (raw * 1000.0).round() / 1000.0
}

/// Default clock frequency of the modeled core.
pub const DEFAULT_FREQ_HZ: f64 = 2.2e9;

/// Periods (cycles) used by the reference rate sweep.
pub const DEFAULT_PERIODS: [u64; 6] = [800, 1000, 1600, 2200, 5500, 11000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub period_cycles: u64,
    pub rate_kbps: f64,
    pub encoding: String,
    pub d: String,
    pub trials: usize,
    pub mean_ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Level distributions overlapped during calibration; the midpoint cuts
    /// were used anyway.
    pub calibration_overlap: bool,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "period_cycles,rate_kbps,encoding,d,trials,mean_ber")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.4},{},{},{},{:.4}",
                r.period_cycles, r.rate_kbps, r.encoding, r.d, r.trials, r.mean_ber
            )?;
        }
        Ok(())
    }
}

/// Number of runs used to calibrate thresholds for a sweep.
pub const SWEEP_CALIBRATION_TRIALS: usize = 64;

/// Mean BER per period over `trials` runs of `template`.
///
/// Thresholds are calibrated once per template. Trial `t` uses the same
/// message and noise seeds at every period.
pub fn sweep_ber_vs_rate(
    template: &ChannelConfig,
    periods: &[u64],
    trials: usize,
) -> Result<SweepTable, ChannelError> {
    if periods.is_empty() {
        return Err(ChannelError::InvalidConfig("sweep needs at least one period".into()));
    }
    let trials = trials.max(1);
    let (thresholds, overlap) =
        match calibrate_thresholds(template, SWEEP_CALIBRATION_TRIALS, template.seed) {
            Ok(t) => (t, false),
            Err(ChannelError::Calibration { thresholds, .. }) => (thresholds, true),
            Err(e) => return Err(e),
        };

    let mut rows = Vec::with_capacity(periods.len());
    for &period in periods {
        let mut total = 0.0;
        for t in 0..trials {
            let cfg = template.for_trial(period, t as u64);
            total += run_channel(&cfg, &thresholds)?.ber;
        }
        rows.push(SweepRow {
            period_cycles: period,
            rate_kbps: rate_kbps(period, template.encoding.bits_per_symbol(), template.frequency_hz),
            encoding: template.encoding.label().into(),
            d: template.encoding.levels_label(),
            trials,
            mean_ber: total / trials as f64,
        });
    }
    Ok(SweepTable {
        rows,
        calibration_overlap: overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn kitten_sitting() {
        assert_eq!(edit_distance_str("kitten", "sitting"), 3);
        assert_eq!(edit_distance_str("", "abcd"), 4);
        assert_eq!(edit_distance_str("same", "same"), 0);
    }

    #[test]
    fn bitstring_parsing_and_display() {
        let b = bits("1111_0000 1111_0000");
        assert_eq!(b, BitString::from_u64(0xF0F0, 16));
        assert_eq!(b.to_string(), "1111000011110000");
        assert!("10x1".parse::<BitString>().is_err());
        assert_eq!(b.ones(), 8);
    }

    #[test]
    fn align_finds_offset() {
        let pre = BitString::from_u64(0xF0F0, 16);
        let payload = bits("0110100111010001");
        let mut stream = pre.clone();
        stream.extend_from(&payload);
        assert_eq!(align_by_preamble(&stream, &pre, 32).unwrap().offset, 0);

        let mut shifted = bits("010");
        shifted.extend_from(&stream);
        let a = align_by_preamble(&shifted, &pre, 32).unwrap();
        assert_eq!(a.offset, 3);
        assert_eq!(a.distance, 0);
    }

    #[test]
    fn all_zero_stream_does_not_lock() {
        let pre = BitString::from_u64(0xF0F0, 16);
        let zeros = BitString::from_bits(std::iter::repeat_n(false, 64));
        assert_eq!(
            align_by_preamble(&zeros, &pre, 32),
            Err(AnalysisError::NoLock {
                best_distance: 8,
                limit: 4
            })
        );
        assert!(align_by_preamble(&zeros, &pre, 8).is_err());
    }

    #[test]
    fn ber_cases() {
        let mut rng = rand::thread_rng();
        let sent = BitString::random(128, &mut rng);
        assert_eq!(bit_error_rate(&sent, &sent).ber, 0.0);

        let mut flipped = sent.as_slice().to_vec();
        flipped[40] ^= 1;
        let r = bit_error_rate(&sent, &BitString::from(flipped.as_slice()));
        assert_eq!(r.edit_distance, 1);
        assert_eq!(r.ber, 1.0 / 128.0);

        let truncated = sent.slice(0, 120);
        assert!(bit_error_rate(&sent, &truncated).ber >= 8.0 / 128.0);

        let long = BitString::random(600, &mut rng);
        let r = bit_error_rate(&bits("1"), &long);
        assert!(r.clamped);
        assert_eq!(r.ber, 1.0);
    }

    #[test]
    fn rates() {
        assert_eq!(rate_kbps(1600, 1, DEFAULT_FREQ_HZ), 1375.0);
        assert_eq!(rate_kbps(4000, 2, DEFAULT_FREQ_HZ), 1100.0);
        assert_eq!(rate_kbps(1000, 2, DEFAULT_FREQ_HZ), 4400.0);
        assert_eq!(rate_kbps(5500, 1, DEFAULT_FREQ_HZ), 400.0);
        assert_eq!(rate_kbps(3000, 1, 1e9), 333.333);
    }

    #[test]
    fn bitstring_serde_is_a_string() {
        let b = bits("1010");
        assert_eq!(serde_json::to_string(&b).unwrap(), "\"1010\"");
        let back: BitString = serde_json::from_str("\"1010\"").unwrap();
        assert_eq!(back, b);
    }
}

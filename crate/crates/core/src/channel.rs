//! Memoryless binary-input channels.
//!
//! Only the erasure channel is simulated. The symmetric channel exists as a
//! source of Bhattacharyya parameters, capacities and exponents.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::gf2::BitVec;
use crate::thresholds::binary_entropy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("channel parameter {0} outside [0, 1)")]
    InvalidEpsilon(f64),
    #[error("packet length must be at least 1")]
    InvalidPacketLength,
    #[error("packet length {packet_len} does not divide block length {n}")]
    PacketMismatch { packet_len: usize, n: usize },
    #[error("transmission over the BSC is not supported")]
    UnsupportedTransmission,
    #[error("cannot parse channel `{0}` (expected bec:<eps> or bsc:<eps>, optionally :<packet_len>)")]
    Parse(String),
}

/// One channel output symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErasureSymbol {
    Zero,
    One,
    Erased,
}

impl ErasureSymbol {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            ErasureSymbol::One
        } else {
            ErasureSymbol::Zero
        }
    }

    pub fn is_erased(self) -> bool {
        self == ErasureSymbol::Erased
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            ErasureSymbol::Zero => Some(false),
            ErasureSymbol::One => Some(true),
            ErasureSymbol::Erased => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Bec,
    Bsc,
}

/// A channel: erasure or crossover probability `epsilon`, and the number of
/// bits that share one erasure event (`packet_len = 1` is bit mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    kind: ChannelKind,
    epsilon: f64,
    packet_len: usize,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, epsilon: f64, packet_len: usize) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(ChannelError::InvalidEpsilon(epsilon));
        }
        if packet_len == 0 {
            return Err(ChannelError::InvalidPacketLength);
        }
        Ok(Self {
            kind,
            epsilon,
            packet_len,
        })
    }

    pub fn bec(epsilon: f64) -> Result<Self, ChannelError> {
        Self::new(ChannelKind::Bec, epsilon, 1)
    }

    pub fn bsc(epsilon: f64) -> Result<Self, ChannelError> {
        Self::new(ChannelKind::Bsc, epsilon, 1)
    }

    pub fn with_packet_len(self, packet_len: usize) -> Result<Self, ChannelError> {
        Self::new(self.kind, self.epsilon, packet_len)
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self, ChannelError> {
        Self::new(self.kind, epsilon, self.packet_len)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn packet_len(&self) -> usize {
        self.packet_len
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ChannelKind::Bec => "bec",
            ChannelKind::Bsc => "bsc",
        };
        write!(f, "{kind}:{}", self.epsilon)?;
        if self.packet_len > 1 {
            write!(f, ":{}", self.packet_len)?;
        }
        Ok(())
    }
}

impl FromStr for ChannelSpec {
    type Err = ChannelError;

    /// Parses `bec:0.3`, `bsc:0.05` or `bec:0.3:4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ChannelError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let kind = match parts[0].to_ascii_lowercase().as_str() {
            "bec" => ChannelKind::Bec,
            "bsc" => ChannelKind::Bsc,
            _ => return Err(bad()),
        };
        let epsilon: f64 = parts[1].parse().map_err(|_| bad())?;
        let packet_len = match parts.get(2) {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => 1,
        };
        Self::new(kind, epsilon, packet_len)
    }
}

/// Sends `c` through the erasure channel. The output always has one symbol
/// per bit; in packet mode the `packet_len` bits of a packet are erased
/// together.
pub fn transmit<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    c: &BitVec,
    rng: &mut R,
) -> Result<Vec<ErasureSymbol>, ChannelError> {
    if spec.kind != ChannelKind::Bec {
        return Err(ChannelError::UnsupportedTransmission);
    }
    let l = spec.packet_len;
    if c.len() % l != 0 {
        return Err(ChannelError::PacketMismatch {
            packet_len: l,
            n: c.len(),
        });
    }
    let mut out = Vec::with_capacity(c.len());
    for packet in 0..c.len() / l {
        let erased = spec.epsilon > 0.0 && rng.random_bool(spec.epsilon);
        out.extend((packet * l..(packet + 1) * l).map(|i| {
            if erased {
                ErasureSymbol::Erased
            } else {
                ErasureSymbol::from_bit(c.get(i))
            }
        }));
    }
    Ok(out)
}

/// Bhattacharyya parameter `ζ = Σ_z √(p(z|0) p(z|1))`.
pub fn bhattacharyya(spec: &ChannelSpec) -> f64 {
    match spec.kind {
        ChannelKind::Bec => spec.epsilon,
        ChannelKind::Bsc => 2.0 * (spec.epsilon * (1.0 - spec.epsilon)).sqrt(),
    }
}

/// Shannon capacity in bits per channel use.
pub fn capacity(spec: &ChannelSpec) -> f64 {
    match spec.kind {
        ChannelKind::Bec => 1.0 - spec.epsilon,
        ChannelKind::Bsc => 1.0 - binary_entropy(spec.epsilon).expect("epsilon in range"),
    }
}

#[cfg(test)]
mod test {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = BitVec::from_bits(&[1, 0, 1, 1]);
        let out = transmit(&ChannelSpec::bec(0.0).unwrap(), &c, &mut rng).unwrap();
        assert_eq!(out, c.iter().map(ErasureSymbol::from_bit).collect::<Vec<_>>());
    }

    #[test]
    fn nearly_certain_erasure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ChannelSpec::bec(1.0 - 1e-12).unwrap();
        let out = transmit(&spec, &BitVec::zeros(15), &mut rng).unwrap();
        assert!(out.iter().all(|s| s.is_erased()));
    }

    #[test]
    fn erasure_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ChannelSpec::bec(0.3).unwrap();
        let c = BitVec::zeros(100_000);
        let out = transmit(&spec, &c, &mut rng).unwrap();
        let frac = out.iter().filter(|s| s.is_erased()).count() as f64 / 1e5;
        assert!((frac - 0.3).abs() < 0.005, "fraction {frac}");
    }

    #[test]
    fn packets_erase_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = ChannelSpec::bec(0.5).unwrap().with_packet_len(3).unwrap();
        let out = transmit(&spec, &BitVec::zeros(300), &mut rng).unwrap();
        for p in out.chunks(3) {
            assert!(p.iter().all(|s| s.is_erased()) || p.iter().all(|s| !s.is_erased()));
        }
        assert!(transmit(&spec, &BitVec::zeros(4), &mut rng).is_err());
    }

    #[test]
    fn bsc_is_not_simulated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ChannelSpec::bsc(0.1).unwrap();
        assert_eq!(
            transmit(&spec, &BitVec::zeros(4), &mut rng),
            Err(ChannelError::UnsupportedTransmission)
        );
    }

    #[test]
    fn parameters() {
        assert_eq!(bhattacharyya(&ChannelSpec::bec(0.3).unwrap()), 0.3);
        assert_eq!(bhattacharyya(&ChannelSpec::bsc(0.0).unwrap()), 0.0);
        assert_abs_diff_eq!(bhattacharyya(&ChannelSpec::bsc(0.05).unwrap()), 0.43589, epsilon = 1e-5);
        assert_abs_diff_eq!(capacity(&ChannelSpec::bec(0.3).unwrap()), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(capacity(&ChannelSpec::bsc(0.5).unwrap()), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(capacity(&ChannelSpec::bsc(0.05).unwrap()), 0.71360, epsilon = 1e-5);
    }

    #[test]
    fn parse_and_display() {
        let s: ChannelSpec = "bec:0.3".parse().unwrap();
        assert_eq!(s, ChannelSpec::bec(0.3).unwrap());
        assert_eq!("bsc:0.05:2".parse::<ChannelSpec>().unwrap().to_string(), "bsc:0.05:2");
        assert!("bec".parse::<ChannelSpec>().is_err());
        assert!("bec:1.0".parse::<ChannelSpec>().is_err());
        assert!("awgn:0.1".parse::<ChannelSpec>().is_err());
    }
}

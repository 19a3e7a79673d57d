//! Norms on finite-dimensional coordinate spaces.
//!
//! Every norm here has the property that the *square* of the norm of a
//! vector with entries in `Q(√2)` is again in `Q(√2)`, so all comparisons
//! can be carried out on squared quantities without leaving the ring.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{format_rational, parse_rational, rat, rational_to_f64, QuadRational};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    /// `(Σ_b w_b ‖x_b‖²)^{1/2}` over equally sized consecutive blocks `x_b`.
    WeightedL2Sum {
        weights: Vec<BigRational>,
        inner: Box<NormKind>,
    },
}

impl NormKind {
    pub fn weighted(weights: Vec<BigRational>, inner: NormKind) -> Self {
        NormKind::WeightedL2Sum { weights, inner: Box::new(inner) }
    }

    /// True for the plain `ℓ_p` kinds.
    pub fn is_lp(&self) -> bool {
        !matches!(self, NormKind::WeightedL2Sum { .. })
    }

    /// True when the norm comes from an inner product.
    pub fn is_hilbert(&self) -> bool {
        match self {
            NormKind::L2 => true,
            NormKind::WeightedL2Sum { inner, .. } => inner.is_hilbert(),
            _ => false,
        }
    }

    /// Checks that the norm makes sense on `dim`-dimensional vectors.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional space".into()));
        }
        if let NormKind::WeightedL2Sum { weights, inner } = self {
            if weights.is_empty() {
                return Err(Error::InvalidArgument("weighted sum without blocks".into()));
            }
            if weights.iter().any(|w| *w <= BigRational::zero()) {
                return Err(Error::InvalidArgument("weights must be positive".into()));
            }
            if !dim.is_multiple_of(weights.len()) {
                return Err(Error::DimensionMismatch {
                    expected: weights.len() * (dim / weights.len()).max(1),
                    found: dim,
                });
            }
            inner.check_dimension(dim / weights.len())?;
        }
        Ok(())
    }

    /// Exact norm where it lies in the ring (`ℓ₁`, `ℓ∞`).
    pub fn norm_exact(&self, v: &[QuadRational]) -> Option<QuadRational> {
        match self {
            NormKind::L1 => Some(v.iter().map(QuadRational::abs).sum()),
            NormKind::Linf => Some(v.iter().map(QuadRational::abs).fold(QuadRational::zero(), QuadRational::max)),
            _ => None,
        }
    }

    /// Exact squared norm.
    pub fn norm_sq(&self, v: &[QuadRational]) -> Result<QuadRational> {
        match self {
            NormKind::L1 | NormKind::Linf => Ok(self.norm_exact(v).expect("lp norm").square()),
            NormKind::L2 => Ok(v.iter().map(QuadRational::square).sum()),
            NormKind::WeightedL2Sum { weights, inner } => {
                self.check_dimension(v.len())?;
                let block = v.len() / weights.len();
                let mut total = QuadRational::zero();
                for (w, chunk) in weights.iter().zip(v.chunks(block)) {
                    let s = inner.norm_sq(chunk)?;
                    if !s.is_zero() {
                        total += QuadRational::from_rational(w.clone()) * s;
                    }
                }
                Ok(total)
            }
        }
    }

    pub fn norm_f64(&self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::WeightedL2Sum { weights, inner } => {
                let block = v.len() / weights.len().max(1);
                weights
                    .iter()
                    .zip(v.chunks(block.max(1)))
                    .map(|(w, c)| rational_to_f64(w) * inner.norm_f64(c).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Dual norm under the coordinate pairing.
    pub fn dual(&self) -> NormKind {
        match self {
            NormKind::L1 => NormKind::Linf,
            NormKind::L2 => NormKind::L2,
            NormKind::Linf => NormKind::L1,
            NormKind::WeightedL2Sum { weights, inner } => NormKind::weighted(
                weights.iter().map(|w| BigRational::one() / w).collect(),
                inner.dual(),
            ),
        }
    }

    /// `‖I : X → ℓ₁^dim‖²`.
    pub fn to_l1_const_sq(&self, dim: usize) -> BigRational {
        let d = rat(dim as i64);
        match self {
            NormKind::L1 => BigRational::one(),
            NormKind::L2 => d,
            NormKind::Linf => &d * &d,
            NormKind::WeightedL2Sum { weights, inner } => {
                let block = dim / weights.len();
                let inv: BigRational = weights.iter().map(|w| BigRational::one() / w).sum();
                inv * inner.to_l1_const_sq(block)
            }
        }
    }

    /// `‖I : ℓ∞^dim → X‖²`.
    pub fn from_linf_const_sq(&self, dim: usize) -> BigRational {
        let d = rat(dim as i64);
        match self {
            NormKind::L1 => &d * &d,
            NormKind::L2 => d,
            NormKind::Linf => BigRational::one(),
            NormKind::WeightedL2Sum { weights, inner } => {
                let block = dim / weights.len();
                let total: BigRational = weights.iter().cloned().sum();
                total * inner.from_linf_const_sq(block)
            }
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::L1 => f.write_str("l1"),
            NormKind::L2 => f.write_str("l2"),
            NormKind::Linf => f.write_str("linf"),
            NormKind::WeightedL2Sum { weights, inner } => {
                let ws: Vec<String> = weights.iter().map(format_rational).collect();
                write!(f, "wl2[{}]({})", ws.join(","), inner)
            }
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    /// Grammar: `l1 | l2 | linf | wl2[w1,...,wk](inner)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "l1" => return Ok(NormKind::L1),
            "l2" => return Ok(NormKind::L2),
            "linf" | "l_inf" | "l∞" => return Ok(NormKind::Linf),
            _ => {}
        }
        let bad = || Error::Parse(format!("unknown norm `{s}`"));
        let rest = s.strip_prefix("wl2[").ok_or_else(bad)?;
        let (weights, rest) = rest.split_once(']').ok_or_else(bad)?;
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let weights = weights
            .split(',')
            .map(parse_rational)
            .collect::<Result<Vec<_>>>()?;
        Ok(NormKind::weighted(weights, inner.parse()?))
    }
}

impl Serialize for NormKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NormKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn v(xs: &[i64]) -> Vec<QuadRational> {
        xs.iter().map(|&x| QuadRational::from_int(x)).collect()
    }

    #[test]
    fn lp_squares() {
        let x = v(&[1, -2, 2]);
        assert_eq!(NormKind::L1.norm_sq(&x).unwrap(), QuadRational::from_int(25));
        assert_eq!(NormKind::L2.norm_sq(&x).unwrap(), QuadRational::from_int(9));
        assert_eq!(NormKind::Linf.norm_sq(&x).unwrap(), QuadRational::from_int(4));
    }

    #[test]
    fn weighted_sum_of_blocks() {
        let n = NormKind::weighted(vec![ratio(1, 2), ratio(1, 4)], NormKind::L1);
        // blocks (1,1) and (0,-2): 1/2·4 + 1/4·4
        assert_eq!(n.norm_sq(&v(&[1, 1, 0, -2])).unwrap(), QuadRational::from_int(3));
        assert!(n.norm_sq(&v(&[1, 1, 1])).is_err());
    }

    #[test]
    fn embedding_constants_bound_norms() {
        let n = NormKind::weighted(vec![ratio(1, 3), ratio(2, 3)], NormKind::L2);
        let x: [f64; 4] = [0.3, -1.2, 2.0, 0.5];
        let l1: f64 = x.iter().map(|a| a.abs()).sum();
        let c = rational_to_f64(&n.to_l1_const_sq(4)).sqrt();
        assert!(l1 <= c * n.norm_f64(&x) + 1e-12);
        let linf = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let c2 = rational_to_f64(&n.from_linf_const_sq(4)).sqrt();
        assert!(n.norm_f64(&x) <= c2 * linf + 1e-12);
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["l1", "l2", "linf", "wl2[1/2,1/2](l1)", "wl2[1](wl2[1,3](linf))"] {
            let n: NormKind = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("l3".parse::<NormKind>().is_err());
    }

    #[test]
    fn dual_is_involutive() {
        let n = NormKind::weighted(vec![ratio(1, 2), rat(3)], NormKind::L1);
        assert_eq!(n.dual().dual(), n);
        assert_eq!(NormKind::L1.dual(), NormKind::Linf);
    }
}

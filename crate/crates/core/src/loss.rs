use crate::error::Error;
use crate::scalar::Scalar;

/// Convex classification losses on a ±1 target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossKind {
    #[default]
    Logistic,
    Hinge,
    Squared,
}

impl LossKind {
    /// Loss and its (sub)derivative with respect to the score.
    #[inline]
    pub fn eval<T: Scalar>(self, y: T, f: T) -> (T, T) {
        let one = T::one();
        match self {
            LossKind::Logistic => {
                let z = -y * f;
                (softplus(z), -y * sigmoid(z))
            }
            LossKind::Hinge => {
                let margin = y * f;
                if margin < one {
                    (one - margin, -y)
                } else {
                    (T::zero(), T::zero())
                }
            }
            LossKind::Squared => {
                let r = f - y;
                (T::lit(0.5) * r * r, r)
            }
        }
    }

    #[inline]
    pub fn loss<T: Scalar>(self, y: T, f: T) -> T {
        self.eval(y, f).0
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "logistic" | "log" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::invalid(format!("unknown loss {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
            LossKind::Squared => "squared",
        })
    }
}

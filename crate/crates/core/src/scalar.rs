use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type used for rewards and values: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Short name written into snapshot headers.
    const NAME: &'static str;

    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Index and value of the largest element; ties go to the lowest index.
pub(crate) fn argmax<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

pub(crate) fn max_of<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().fold(T::neg_infinity(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax([1.0f64, 3.0, 3.0, 2.0]), Some((1, 3.0)));
        assert_eq!(argmax([0.0f32; 5]), Some((0, 0.0)));
        assert_eq!(argmax(Vec::<f64>::new()), None);
    }

    #[test]
    fn lit_rounds() {
        assert_eq!(f32::lit(0.1), 0.1f32);
        assert_eq!(f64::lit(-1050.4), -1050.4);
    }
}

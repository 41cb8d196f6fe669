use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the model math is generic over.
///
/// Implemented for `f32` and `f64`. Configs and reports stay `f64`; the
/// trait exists so the forward/backward kernels and the attackers can run
/// in either precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short name stored in checkpoints so an `f64` file is not silently
    /// reloaded at `f32`.
    const NAME: &'static str;

    /// Raw bit pattern, widened to `u64`. Used for bit-identity assertions.
    fn bits(self) -> u64;

    /// Lossy conversion from config-level `f64` values. All config values
    /// are exactly representable in `f32` range, so the unwrap never fires.
    fn from_f64_cfg(v: f64) -> Self {
        Self::from_f64(v).expect("config value convertible to scalar")
    }

    /// Floor applied to probabilities before taking logs.
    fn prob_floor() -> Self {
        Self::from_f64_cfg(1e-12)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn bits(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn bits(self) -> u64 {
        self.to_bits()
    }
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Element type tag carried by checkpoints so a file written with one width
/// is never silently reinterpreted as another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_of(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

/// Floating-point element type for tensors and graphs.
///
/// Training runs in `f32`; gradient verification runs the same code in `f64`.
/// Random draws happen in `f64` and are converted, so a fixed seed produces
/// the same sequence of values (up to rounding) in both widths.
pub trait Scalar:
    Copy
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const DTYPE: Dtype;
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn max_val(self, other: Self) -> Self;
    fn min_val(self, other: Self) -> Self;

    /// `exp` for bulk inner loops. The `f32` implementation is a clamped
    /// polynomial accurate to a few ulp that vectorizes, since training
    /// throughput is bounded by gate activations; `f64` delegates to libm so
    /// the double-precision verification path stays exact.
    fn fast_exp(self) -> Self;

    #[inline(always)]
    fn fast_sigmoid(self) -> Self {
        Self::ONE / (Self::ONE + (-self).fast_exp())
    }

    /// tanh(x) = 1 - 2 / (exp(2x) + 1). Absolute error tracks `fast_exp`
    /// (about 1e-7 for f32), so relative accuracy degrades near zero where
    /// tanh itself vanishes; gradients there use 1 - t² ≈ 1 and are
    /// unaffected.
    #[inline(always)]
    fn fast_tanh(self) -> Self {
        let two = Self::ONE + Self::ONE;
        Self::ONE - two / ((self + self).fast_exp() + Self::ONE)
    }

    /// Appends the little-endian bytes of each element to `out`.
    fn write_le(data: &[Self], out: &mut Vec<u8>);
    /// Decodes little-endian bytes; `bytes.len()` must be a multiple of the
    /// element size.
    fn read_le(bytes: &[u8]) -> Vec<Self>;
}

/// Range-reduced polynomial expf (Cephes coefficients). Inputs are clamped
/// so the 2^n scale stays within the finite exponent range.
#[inline(always)]
fn fast_exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = 1.442_695_04;
    const LN2_HI: f32 = 0.693_359_375;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let x = x.clamp(-87.0, 88.0);
    let n = (x * LOG2E).round();
    let r = x - n * LN2_HI - n * LN2_LO;
    let mut p = 1.987_569_15e-4_f32;
    p = p * r + 1.398_199_95e-3;
    p = p * r + 8.333_451_9e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_55e-1;
    p = p * r + 5.000_000_1e-1;
    let y = p * r * r + r + 1.0;
    let scale = f32::from_bits((((n as i32) + 127) << 23) as u32);
    y * scale
}

macro_rules! impl_scalar {
    ($t:ty, $dtype:expr, $bytes:expr, $fast_exp:expr) => {
        impl Scalar for $t {
            const DTYPE: Dtype = $dtype;
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline(always)]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline(always)]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline(always)]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline(always)]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline(always)]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline(always)]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline(always)]
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
            #[inline(always)]
            fn max_val(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline(always)]
            fn min_val(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            #[inline(always)]
            fn fast_exp(self) -> Self {
                $fast_exp(self)
            }

            fn write_le(data: &[Self], out: &mut Vec<u8>) {
                out.reserve(data.len() * $bytes);
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }

            fn read_le(bytes: &[u8]) -> Vec<Self> {
                assert!(
                    bytes.len() % $bytes == 0,
                    "byte length {} is not a multiple of element size {}",
                    bytes.len(),
                    $bytes
                );
                bytes
                    .chunks_exact($bytes)
                    .map(|c| <$t>::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
        }
    };
}

impl_scalar!(f32, Dtype::F32, 4, fast_exp_f32);
impl_scalar!(f64, Dtype::F64, 8, f64::exp);

/// Dense row-major tensor. Shape `[]` is a scalar with one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::ZERO; numel],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(|i| f(i)).collect(),
        }
    }

    /// I.i.d. normal entries with the given standard deviation. Draws are
    /// performed in `f64` so the stream is width-independent.
    pub fn randn(shape: impl Into<Vec<usize>>, std: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
    }

    /// I.i.d. uniform entries on `[lo, hi)`, drawn in `f64`.
    pub fn rand_uniform(
        shape: impl Into<Vec<usize>>,
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> Self {
        Self::from_fn(shape, |_| T::from_f64(rng.gen_range(lo..hi)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(mut self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.data.len(), "reshape changes element count");
        self.shape = shape;
        self
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor with {} elements", self.data.len());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().fold(true, |acc, v| acc & v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts element width; used to run f32 checkpoints under f64
    /// verification and vice versa.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn shape_and_data_accounting() {
        let t = Tensor::<f32>::new([2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.rank(), 2);
        let t = t.reshaped([3, 2]);
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data()[4], 5.0);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn mismatched_data_panics() {
        let _ = Tensor::<f32>::new([2, 2], vec![0.0; 3]);
    }

    #[test]
    fn scalar_round_trip() {
        let t = Tensor::<f64>::scalar(2.5);
        assert_eq!(t.shape(), &[] as &[usize]);
        assert_eq!(t.item(), 2.5);
    }

    #[test]
    fn randn_matches_across_widths() {
        let mut r1 = ChaCha12Rng::seed_from_u64(7);
        let mut r2 = ChaCha12Rng::seed_from_u64(7);
        let a = Tensor::<f32>::randn([4, 4], 0.02, &mut r1);
        let b = Tensor::<f64>::randn([4, 4], 0.02, &mut r2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32);
        }
    }

    #[test]
    fn le_bytes_round_trip() {
        let vals: Vec<f32> = vec![0.0, -1.5, 3.25e-8, f32::MAX];
        let mut buf = Vec::new();
        f32::write_le(&vals, &mut buf);
        assert_eq!(buf.len(), 16);
        assert_eq!(f32::read_le(&buf), vals);

        let vals64: Vec<f64> = vec![1.0 / 3.0, -0.0, f64::MIN_POSITIVE];
        let mut buf = Vec::new();
        f64::write_le(&vals64, &mut buf);
        assert_eq!(f64::read_le(&buf), vals64);
    }

    #[test]
    fn fast_exp_accuracy_and_range() {
        for i in -870..=880 {
            let x = i as f32 * 0.1;
            let got = x.fast_exp();
            let want = (x as f64).exp();
            let rel = ((got as f64 - want) / want).abs();
            assert!(rel < 3e-7, "exp({x}): got {got}, want {want}, rel {rel}");
            assert!(got.is_finite());
        }
        // Clamped tails stay finite and monotone-consistent.
        assert!((-200.0f32).fast_exp() < 1e-37);
        assert!((200.0f32).fast_exp() > 1e38);
        // f64 path is exact libm.
        assert_eq!(1.5f64.fast_exp(), 1.5f64.exp());
    }

    #[test]
    fn fast_sigmoid_tanh_match_reference() {
        for i in -60..=60 {
            let x = i as f32 * 0.25;
            let s = x.fast_sigmoid() as f64;
            let t = x.fast_tanh() as f64;
            let sw = 1.0 / (1.0 + (-(x as f64)).exp());
            let tw = (x as f64).tanh();
            assert!((s - sw).abs() < 1e-6, "sigmoid({x})");
            assert!((t - tw).abs() < 2e-6, "tanh({x})");
        }
        // Small arguments keep absolute accuracy at the fast_exp error
        // level; that is what the gate math needs.
        let x = 1e-4f32;
        let abs = ((x.fast_tanh() as f64) - (x as f64).tanh()).abs();
        assert!(abs < 1e-6, "abs err {abs}");
    }

    #[test]
    fn finiteness_scan() {
        let mut t = Tensor::<f32>::zeros([8]);
        assert!(t.all_finite());
        t.data_mut()[5] = f32::NAN;
        assert!(!t.all_finite());
        t.data_mut()[5] = f32::INFINITY;
        assert!(!t.all_finite());
    }
}

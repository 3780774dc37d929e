use crate::darknet::Shape;
use crate::imgcore::GrayImage;
use crate::scalar::Scalar;

use super::NnError;

/// Dense activation tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub(super) shape: Shape,
    pub(super) data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != shape.len() {
            return Err(NnError::shape(None, format!("{} values for shape {shape}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()] }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.shape.height * self.shape.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Normalizes a letterboxed gray frame to `[0, 1]` and stacks it into every
/// channel of `shape`.
pub fn image_to_tensor<T: Scalar>(image: &GrayImage, shape: Shape) -> Result<Tensor<T>, NnError> {
    if (image.width(), image.height()) != (shape.width, shape.height) {
        return Err(NnError::shape(
            None,
            format!(
                "image is {}x{}, network input is {}x{}",
                image.width(),
                image.height(),
                shape.width,
                shape.height
            ),
        ));
    }
    let full = T::lit(255.0);
    let plane: Vec<T> = image.pixels().iter().map(|&p| T::from_u8(p).unwrap_or_else(T::zero) / full).collect();
    let mut data = Vec::with_capacity(shape.len());
    for _ in 0..shape.channels {
        data.extend_from_slice(&plane);
    }
    Ok(Tensor { shape, data })
}

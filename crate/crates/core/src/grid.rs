//! Dense row-major matrices addressed by 1-based pixel coordinates.
//!
//! Column index `u` runs over `1..=width`, row index `v` over `1..=height`,
//! matching the pixel index set used throughout the crate.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot hold a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    /// Builds a grid by evaluating `f(u, v)` at every 1-based pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 1..=height {
            for u in 1..=width {
                data.push(f(u, v));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        (1..=self.width).contains(&u) && (1..=self.height).contains(&v)
    }

    #[inline]
    fn offset(&self, u: usize, v: usize) -> usize {
        debug_assert!(self.contains(u, v), "pixel ({u}, {v}) outside grid");
        (v - 1) * self.width + (u - 1)
    }

    /// Value at 1-based pixel `(u, v)`. Panics when out of bounds.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[self.offset(u, v)]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        let i = self.offset(u, v);
        &mut self.data[i]
    }

    pub fn try_get(&self, u: usize, v: usize) -> Option<&T> {
        self.contains(u, v).then(|| self.get(u, v))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Row `v` (1-based) as a slice.
    pub fn row(&self, v: usize) -> &[T] {
        let start = (v - 1) * self.width;
        &self.data[start..start + self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.width.max(1))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Element-wise combination of two equally sized grids.
    pub fn zip_map<U, W>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> W) -> Result<Grid<W>> {
        self.ensure_same_dims(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

//! Dense row-major rasters and the equirectangular wrapper used throughout the pipeline.

use std::ops::{Deref, DerefMut};

use crate::error::GeometryError;

/// A dense `width x height` raster stored row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, T> {
        self.data.chunks(self.width.max(1))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

impl<T: Clone> Grid<T> {
    /// Circularly shifts columns to the right by `shift` (negative shifts left).
    pub fn roll_x(&self, shift: isize) -> Self {
        let w = self.width as isize;
        Grid::from_fn(self.width, self.height, |x, y| {
            let src = (x as isize - shift).rem_euclid(w) as usize;
            self.get(src, y).clone()
        })
    }
}

/// An equirectangular raster: `width == 2 * height`, column `x` spans azimuth,
/// row `y` spans elevation from the north pole downwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpGrid<T>(Grid<T>);

impl<T> ErpGrid<T> {
    pub fn new(grid: Grid<T>) -> Result<Self, GeometryError> {
        if grid.width != 2 * grid.height || grid.height == 0 {
            return Err(GeometryError::NotEquirectangular {
                width: grid.width,
                height: grid.height,
            });
        }
        Ok(Self(grid))
    }

    pub fn from_fn(height: usize, f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0, "equirectangular grid needs at least one row");
        Self(Grid::from_fn(2 * height, height, f))
    }

    pub fn into_grid(self) -> Grid<T> {
        self.0
    }

    pub fn as_grid(&self) -> &Grid<T> {
        &self.0
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> ErpGrid<U> {
        ErpGrid(self.0.map(f))
    }
}

impl<T: Clone> ErpGrid<T> {
    pub fn filled(height: usize, value: T) -> Self {
        assert!(height > 0, "equirectangular grid needs at least one row");
        Self(Grid::filled(2 * height, height, value))
    }

    pub fn roll_x(&self, shift: isize) -> Self {
        Self(self.0.roll_x(shift))
    }
}

impl<T> Deref for ErpGrid<T> {
    type Target = Grid<T>;

    fn deref(&self) -> &Grid<T> {
        &self.0
    }
}

impl<T> DerefMut for ErpGrid<T> {
    fn deref_mut(&mut self) -> &mut Grid<T> {
        &mut self.0
    }
}

impl<T> TryFrom<Grid<T>> for ErpGrid<T> {
    type Error = GeometryError;

    fn try_from(grid: Grid<T>) -> Result<Self, GeometryError> {
        ErpGrid::new(grid)
    }
}

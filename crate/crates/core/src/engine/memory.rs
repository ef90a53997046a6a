use crate::error::{DemmError, Result};

/// `depth x width` array of 16-bit values with one write port and ideal
/// multi-port reads. Rows and columns beyond the loaded tile read as zero.
#[derive(Debug, Clone)]
pub struct EngineMemory {
    depth: usize,
    width: usize,
    data: Vec<i16>,
    loaded_rows: usize,
    loaded_cols: usize,
}

impl EngineMemory {
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            data: vec![0; depth * width],
            loaded_rows: 0,
            loaded_cols: 0,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn loaded_rows(&self) -> usize {
        self.loaded_rows
    }

    pub fn loaded_cols(&self) -> usize {
        self.loaded_cols
    }

    /// Zeroes the array ahead of a tile of `rows x cols`.
    pub(crate) fn clear_for(&mut self, rows: usize, cols: usize) -> Result<()> {
        if rows > self.depth || cols > self.width {
            return Err(DemmError::TileTooLarge {
                rows,
                cols,
                depth: self.depth,
                width: self.width,
            });
        }
        self.data.fill(0);
        self.loaded_rows = rows;
        self.loaded_cols = cols;
        Ok(())
    }

    /// Write-port access: stores one row (shorter rows are zero padded).
    pub(crate) fn write_row(&mut self, addr: usize, values: &[i16]) {
        debug_assert!(values.len() <= self.width);
        let dst = &mut self.data[addr * self.width..(addr + 1) * self.width];
        dst[..values.len()].copy_from_slice(values);
        dst[values.len()..].fill(0);
    }

    /// Read-port access: one full row.
    #[inline]
    pub fn read_row(&self, addr: usize) -> &[i16] {
        &self.data[addr * self.width..(addr + 1) * self.width]
    }
}

//! Placement of kernel weights onto the processing-element crossbar.
//!
//! The crossbar is organized as `kernel_width x kernel_height` sub-arrays of
//! `in_channels x out_channels` cells. Weight `(out k, in c, row i, col j)`
//! lands at global row `j * C + c` and global column `i * K + k`: rows group
//! by kernel column so each row strip shares one input word, columns group by
//! kernel row so each column strip accumulates into one output channel bank.

use super::{BinaryKernelSet, KernelError, LayerShape};

/// The crossbar weight plane. `None` cells hold no weight and contribute
/// nothing; per-channel layers populate only the diagonal of each sub-array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<Option<i8>>,
}

impl WeightMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<i8> {
        assert!(row < self.rows && col < self.cols, "crossbar index out of range");
        self.cells[row * self.cols + col]
    }

    /// Cells that hold a weight.
    pub fn active_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Places a layer's kernels onto its crossbar.
pub fn map_kernels(
    shape: &LayerShape,
    kernels: &BinaryKernelSet,
) -> Result<WeightMatrix, KernelError> {
    let expected = (
        shape.out_channels,
        shape.in_channels,
        shape.kernel_height,
        shape.kernel_width,
    );
    let got = (
        kernels.out_channels(),
        kernels.in_channels(),
        kernels.kernel_height(),
        kernels.kernel_width(),
    );
    if expected != got {
        return Err(KernelError::ShapeMismatch {
            expected: format!("{expected:?} (out, in, kh, kw)"),
            got: format!("{got:?}"),
        });
    }
    let rows = shape.pe_rows();
    let cols = shape.pe_cols();
    let mut cells = vec![None; rows * cols];
    for k in 0..shape.out_channels {
        for c in 0..shape.in_channels {
            for i in 0..shape.kernel_height {
                for j in 0..shape.kernel_width {
                    if let Some(w) = kernels.get(k, c, i, j) {
                        let row = j * shape.in_channels + c;
                        let col = i * shape.out_channels + k;
                        cells[row * cols + col] = Some(w);
                    }
                }
            }
        }
    }
    Ok(WeightMatrix { rows, cols, cells })
}

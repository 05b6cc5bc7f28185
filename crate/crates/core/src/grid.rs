//! Pattern and block geometry on cell grids.

use crate::error::{Error, Result};
use crate::types::{CellGrid, Direction, NeighborPattern, ProgramLevel};

/// Offsets `(drow, dcol)` to the previous neighbor in `direction`; the next
/// neighbor is the negation.
#[inline]
pub(crate) fn step(direction: Direction) -> (isize, isize) {
    match direction {
        Direction::Wordline => (0, 1),
        Direction::Bitline => (1, 0),
    }
}

/// Whether `(row, col)` has both neighbors along `direction`.
#[inline]
pub fn is_interior(rows: usize, cols: usize, row: usize, col: usize, direction: Direction) -> bool {
    match direction {
        Direction::Wordline => row < rows && col >= 1 && col + 1 < cols,
        Direction::Bitline => col < cols && row >= 1 && row + 1 < rows,
    }
}

/// Three-cell pattern centered at `(row, col)`: along the row for wordline
/// patterns, along the column for bitline patterns.
pub fn pattern_at(
    grid: &CellGrid<ProgramLevel>,
    row: usize,
    col: usize,
    direction: Direction,
) -> Result<NeighborPattern> {
    if !is_interior(grid.rows(), grid.cols(), row, col, direction) {
        return Err(Error::Boundary { row, col, direction });
    }
    let (dr, dc) = step(direction);
    let (pr, pc) = ((row as isize - dr) as usize, (col as isize - dc) as usize);
    let (nr, nc) = ((row as isize + dr) as usize, (col as isize + dc) as usize);
    Ok(NeighborPattern {
        prev: grid.at(pr, pc),
        center: grid.at(row, col),
        next: grid.at(nr, nc),
        direction,
    })
}

/// Cuts a block into non-overlapping `tile × tile` grids in row-major tile
/// order. Remainder rows and columns are dropped.
pub fn crop_blocks<T: Copy>(block: &CellGrid<T>, tile: usize) -> Result<Vec<CellGrid<T>>> {
    if tile < 3 {
        return Err(Error::InvalidParameter(format!("tile size {tile} is below 3")));
    }
    let tr = block.rows() / tile;
    let tc = block.cols() / tile;
    let mut out = Vec::with_capacity(tr * tc);
    for bi in 0..tr {
        for bj in 0..tc {
            out.push(CellGrid::from_fn(tile, tile, |r, c| {
                block.at(bi * tile + r, bj * tile + c)
            }));
        }
    }
    Ok(out)
}

use serde::{Deserialize, Serialize};

use super::board::{Board, Cell};

/// One-hot board image with a one-cell zero ring around it.
///
/// Logical shape is `(height + 2) × (width + 2) × (num_colors + 1)`; channel
/// 0 marks empty cells and channel `k` marks color `k`. Storage is
/// channel-major so convolutions can read planes directly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodedBoard {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f32>,
}

impl EncodedBoard {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> EncodedBoard {
        EncodedBoard {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
        }
    }

    /// `(rows, cols, channels)` including padding.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(channel * self.rows + row) * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        self.data[(channel * self.rows + row) * self.cols + col] = value;
    }

    /// Channel-major planes.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

pub fn encode_board(board: &Board) -> EncodedBoard {
    let (h, w) = (board.height(), board.width());
    let mut t = EncodedBoard::zeros(h + 2, w + 2, board.num_colors() as usize + 1);
    for r in 0..h {
        for c in 0..w {
            let ch = match board.cell(r, c) {
                Cell::Empty => 0,
                Cell::Color(k) => k as usize,
            };
            t.set(r + 1, c + 1, ch, 1.0);
        }
    }
    t
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::board::{Board, Cell};
use crate::error::{Error, Result};

/// Parses the plain-text position format: one line per row, one digit per
/// cell, digit `k` meaning color `k` in `1..=num_colors`.
pub fn parse_position(text: &str, num_colors: u8, origin: &Path) -> Result<Board> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut width = None;
    let mut cells = Vec::new();
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            // tolerate trailing blank lines only
            if text.lines().skip(i).all(|l| l.trim().is_empty()) {
                break;
            }
            return Err(parse_err(line_no, "blank line inside position".into()));
        }
        let expected = *width.get_or_insert(line.len());
        if line.len() != expected {
            return Err(parse_err(
                line_no,
                format!("expected {expected} digits, found {}", line.len()),
            ));
        }
        for (col, ch) in line.chars().enumerate() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| parse_err(line_no, format!("non-digit {ch:?} at column {}", col + 1)))?;
            if d == 0 || d > num_colors as u32 {
                return Err(parse_err(
                    line_no,
                    format!("color {d} at column {} outside 1..={num_colors}", col + 1),
                ));
            }
            cells.push(Cell::Color(d as u8));
        }
        height += 1;
    }
    let width = width.ok_or_else(|| parse_err(1, "empty position file".into()))?;
    Board::new(width, height, num_colors, cells)
}

pub fn format_position(board: &Board) -> Result<String> {
    let mut out = String::with_capacity((board.width() + 1) * board.height());
    for r in 0..board.height() {
        for c in 0..board.width() {
            match board.cell(r, c) {
                Cell::Color(k) => out.push(char::from(b'0' + k)),
                Cell::Empty => {
                    return Err(Error::InvalidBoard(
                        "position files describe full boards; found an empty cell".into(),
                    ))
                }
            }
        }
        writeln!(out).unwrap();
    }
    Ok(out)
}

pub fn load_position_file(path: impl AsRef<Path>, num_colors: u8) -> Result<Board> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_position(&text, num_colors, path)
}

pub fn save_position_file(board: &Board, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_position(board)?)?;
    Ok(())
}

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points. Episode totals can go negative through the leftover penalty.
pub type Score = i64;

/// Bonus for clearing every block.
pub const CLEAR_BONUS: Score = 1000;

const EMPTY: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    /// Color index in `1..=num_colors`.
    Color(u8),
}

impl Cell {
    fn from_raw(v: u8) -> Cell {
        if v == EMPTY {
            Cell::Empty
        } else {
            Cell::Color(v)
        }
    }

    fn raw(self) -> u8 {
        match self {
            Cell::Empty => EMPTY,
            Cell::Color(c) => c,
        }
    }
}

/// A click on the representative cell of a group: the bottom-most cell,
/// left-most among those. Row 0 is the top row.
///
/// The derived ordering is row-major, which is the canonical action order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub row: usize,
    pub col: usize,
}

impl Action {
    pub fn new(row: usize, col: usize) -> Action {
        Action { row, col }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// A maximal 4-connected set of same-colored cells with at least two members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub color: u8,
    /// Member cells as `(row, col)`, sorted row-major.
    pub cells: Vec<(usize, usize)>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn representative(&self) -> Action {
        group_representative(&self.cells)
    }
}

/// Bottom-most cell of the group; ties go to the left-most column.
pub fn group_representative(cells: &[(usize, usize)]) -> Action {
    debug_assert!(cells.len() >= 2);
    let &(row, col) = cells
        .iter()
        .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)))
        .expect("group has cells");
    Action { row, col }
}

/// Parameters for deterministic random board generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoardSeed {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_colors: u8,
}

impl BoardSeed {
    pub fn new(seed: u64, width: usize, height: usize, num_colors: u8) -> BoardSeed {
        BoardSeed {
            seed,
            width,
            height,
            num_colors,
        }
    }
}

/// Result of applying one action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveOutcome {
    pub next_board: Board,
    pub cleared: usize,
    pub move_score: Score,
    pub terminal: bool,
    /// `+1000` for a cleared board, minus the leftover penalty on any other
    /// terminal board, zero otherwise.
    pub terminal_adjustment: Score,
}

impl MoveOutcome {
    /// Move score plus terminal adjustment: everything this move contributes
    /// to the episode total.
    pub fn reward(&self) -> Score {
        self.move_score + self.terminal_adjustment
    }
}

pub(crate) fn move_score(cleared: usize) -> Score {
    let n = cleared as Score - 2;
    n * n
}

/// A SameGame position in gravity- and column-packed normal form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Board {
    width: usize,
    height: usize,
    num_colors: u8,
    cells: Vec<u8>,
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Board {}x{} ({} colors)", self.width, self.height, self.num_colors)?;
        for r in 0..self.height {
            let line: String = (0..self.width)
                .map(|c| match self.cells[r * self.width + c] {
                    EMPTY => '.',
                    v => char::from(b'0' + v),
                })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl Board {
    /// Builds a board from row-major cells, checking color range and both
    /// normal-form invariants.
    pub fn new(width: usize, height: usize, num_colors: u8, cells: Vec<Cell>) -> Result<Board> {
        check_dims(width, height, num_colors)?;
        if cells.len() != width * height {
            return Err(Error::InvalidBoard(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        let raw: Vec<u8> = cells.iter().map(|c| c.raw()).collect();
        Board::from_raw(width, height, num_colors, raw)
    }

    /// Builds a board from rows of digits, `0` meaning empty.
    pub fn from_rows(num_colors: u8, rows: &[&[u8]]) -> Result<Board> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        check_dims(width, height, num_colors)?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidBoard("ragged rows".into()));
        }
        Board::from_raw(width, height, num_colors, rows.concat())
    }

    pub(crate) fn from_raw(width: usize, height: usize, num_colors: u8, cells: Vec<u8>) -> Result<Board> {
        if let Some(&bad) = cells.iter().find(|&&v| v > num_colors) {
            return Err(Error::InvalidBoard(format!("color {bad} outside 1..={num_colors}")));
        }
        let board = Board {
            width,
            height,
            num_colors,
            cells,
        };
        if !board.is_gravity_normal() {
            return Err(Error::InvalidBoard(
                "empty cell below a block (gravity not applied)".into(),
            ));
        }
        if !board.is_column_packed() {
            return Err(Error::InvalidBoard("empty column left of a non-empty column".into()));
        }
        Ok(board)
    }

    pub fn empty(width: usize, height: usize, num_colors: u8) -> Result<Board> {
        check_dims(width, height, num_colors)?;
        Ok(Board {
            width,
            height,
            num_colors,
            cells: vec![EMPTY; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_colors(&self) -> u8 {
        self.num_colors
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        Cell::from_raw(self.cells[row * self.width + col])
    }

    pub fn block_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v != EMPTY).count()
    }

    pub fn is_cleared(&self) -> bool {
        self.cells.iter().all(|&v| v == EMPTY)
    }

    /// Blocks per color; index 0 is unused.
    pub fn color_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_colors as usize + 1];
        for &v in &self.cells {
            if v != EMPTY {
                counts[v as usize] += 1;
            }
        }
        counts
    }

    pub fn is_gravity_normal(&self) -> bool {
        (0..self.width).all(|c| {
            (1..self.height)
                .all(|r| !(self.cells[(r - 1) * self.width + c] != EMPTY && self.cells[r * self.width + c] == EMPTY))
        })
    }

    pub fn is_column_packed(&self) -> bool {
        let mut seen_empty = false;
        for c in 0..self.width {
            let occupied = (0..self.height).any(|r| self.cells[r * self.width + c] != EMPTY);
            if occupied && seen_empty {
                return false;
            }
            if !occupied {
                seen_empty = true;
            }
        }
        true
    }

    /// Row-major grid index used by the policy head.
    pub fn action_index(&self, action: Action) -> usize {
        action.row * self.width + action.col
    }

    pub fn action_from_index(&self, index: usize) -> Action {
        Action {
            row: index / self.width,
            col: index % self.width,
        }
    }

    pub fn find_groups(&self) -> Vec<Group> {
        let mut scan = GroupScan::default();
        scan.run(self);
        let mut groups: Vec<Group> = scan
            .groups
            .iter()
            .map(|g| Group {
                color: g.color,
                cells: Vec::with_capacity(g.size),
            })
            .collect();
        for (idx, &label) in scan.labels.iter().enumerate() {
            if label < SINGLETON {
                let pos = scan.position_of_label(label);
                groups[pos].cells.push((idx / self.width, idx % self.width));
            }
        }
        groups
    }

    /// One action per group, sorted row-major by representative.
    pub fn legal_actions(&self) -> Vec<Action> {
        let mut scan = GroupScan::default();
        scan.run(self);
        scan.groups.iter().map(|g| g.rep).collect()
    }

    pub fn is_terminal(&self) -> bool {
        let w = self.width;
        for r in 0..self.height {
            for c in 0..w {
                let v = self.cells[r * w + c];
                if v == EMPTY {
                    continue;
                }
                if c + 1 < w && self.cells[r * w + c + 1] == v {
                    return false;
                }
                if r + 1 < self.height && self.cells[(r + 1) * w + c] == v {
                    return false;
                }
            }
        }
        true
    }

    pub fn apply_action(&self, action: Action) -> Result<MoveOutcome> {
        let mut scan = GroupScan::default();
        scan.run(self);
        let group = scan
            .groups
            .iter()
            .find(|g| g.rep == action)
            .copied()
            .ok_or(Error::IllegalMove {
                row: action.row,
                col: action.col,
            })?;
        let mut next = self.clone();
        next.remove_label(&scan.labels, group.label);
        let terminal = next.is_terminal();
        let terminal_adjustment = if terminal { next.terminal_adjustment() } else { 0 };
        Ok(MoveOutcome {
            next_board: next,
            cleared: group.size,
            move_score: move_score(group.size),
            terminal,
            terminal_adjustment,
        })
    }

    /// `Σ_c (count_c − 2)²` over colors still on the board.
    pub fn terminal_penalty(&self) -> Result<Score> {
        if !self.is_terminal() {
            return Err(Error::Contract("terminal_penalty on a non-terminal board"));
        }
        if self.is_cleared() {
            return Err(Error::Contract("terminal_penalty on a cleared board"));
        }
        Ok(self.leftover_penalty())
    }

    fn leftover_penalty(&self) -> Score {
        self.color_counts()
            .iter()
            .skip(1)
            .filter(|&&n| n > 0)
            .map(|&n| move_score(n))
            .sum()
    }

    /// End-of-game adjustment for a terminal board: the clear bonus or the
    /// negated leftover penalty.
    pub fn terminal_adjustment(&self) -> Score {
        if self.is_cleared() {
            CLEAR_BONUS
        } else {
            -self.leftover_penalty()
        }
    }

    /// Removes every cell carrying `label`, then applies gravity and packs
    /// columns.
    pub(crate) fn remove_label(&mut self, labels: &[u32], label: u32) {
        for (cell, &l) in self.cells.iter_mut().zip(labels) {
            if l == label {
                *cell = EMPTY;
            }
        }
        self.settle();
    }

    fn settle(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut dst_col = 0;
        for c in 0..w {
            let mut write = h;
            for r in (0..h).rev() {
                let v = self.cells[r * w + c];
                if v != EMPTY {
                    write -= 1;
                    self.cells[write * w + dst_col] = v;
                }
            }
            if write == h {
                // column is empty; it gets overwritten by the next occupied one
                continue;
            }
            for r in 0..write {
                self.cells[r * w + dst_col] = EMPTY;
            }
            dst_col += 1;
        }
        for c in dst_col..w {
            for r in 0..h {
                self.cells[r * w + c] = EMPTY;
            }
        }
    }
}

fn check_dims(width: usize, height: usize, num_colors: u8) -> Result<()> {
    if width == 0 || height == 0 || num_colors == 0 || num_colors > 9 {
        return Err(Error::Dimension {
            width,
            height,
            num_colors,
        });
    }
    Ok(())
}

/// Full board with i.i.d. uniform colors from a ChaCha8 stream keyed by the
/// seed and the dimensions.
pub fn generate_board(seed: &BoardSeed) -> Result<Board> {
    check_dims(seed.width, seed.height, seed.num_colors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
    rng.set_stream(((seed.width as u64) << 40) | ((seed.height as u64) << 16) | seed.num_colors as u64);
    let cells = (0..seed.width * seed.height)
        .map(|_| rng.random_range(1..=seed.num_colors))
        .collect();
    Ok(Board {
        width: seed.width,
        height: seed.height,
        num_colors: seed.num_colors,
        cells,
    })
}

pub(crate) const UNVISITED: u32 = u32::MAX;
pub(crate) const SINGLETON: u32 = u32::MAX - 1;

#[derive(Clone, Copy, Debug)]
pub(crate) struct GroupInfo {
    pub label: u32,
    pub color: u8,
    pub size: usize,
    pub rep: Action,
}

/// Reusable flood-fill buffers. After `run`, `groups` is sorted by
/// representative and `labels[i]` is the group label of cell `i`, or a
/// sentinel for empty cells and singletons.
#[derive(Default)]
pub(crate) struct GroupScan {
    pub labels: Vec<u32>,
    pub groups: Vec<GroupInfo>,
    stack: Vec<usize>,
}

impl GroupScan {
    pub fn run(&mut self, board: &Board) {
        let (w, h) = (board.width, board.height);
        let cells = &board.cells;
        self.labels.clear();
        self.labels.resize(w * h, UNVISITED);
        self.groups.clear();
        for start in 0..w * h {
            let color = cells[start];
            if color == EMPTY {
                self.labels[start] = SINGLETON;
                continue;
            }
            if self.labels[start] != UNVISITED {
                continue;
            }
            let label = self.groups.len() as u32;
            self.labels[start] = label;
            self.stack.clear();
            self.stack.push(start);
            let mut size = 0;
            let (mut rep_row, mut rep_col) = (start / w, start % w);
            while let Some(i) = self.stack.pop() {
                size += 1;
                let (r, c) = (i / w, i % w);
                if r > rep_row || (r == rep_row && c < rep_col) {
                    rep_row = r;
                    rep_col = c;
                }
                let visit = |j: usize, labels: &mut Vec<u32>, stack: &mut Vec<usize>| {
                    if labels[j] == UNVISITED && cells[j] == color {
                        labels[j] = label;
                        stack.push(j);
                    }
                };
                if c > 0 {
                    visit(i - 1, &mut self.labels, &mut self.stack);
                }
                if c + 1 < w {
                    visit(i + 1, &mut self.labels, &mut self.stack);
                }
                if r > 0 {
                    visit(i - w, &mut self.labels, &mut self.stack);
                }
                if r + 1 < h {
                    visit(i + w, &mut self.labels, &mut self.stack);
                }
            }
            if size == 1 {
                self.labels[start] = SINGLETON;
            } else {
                self.groups.push(GroupInfo {
                    label,
                    color,
                    size,
                    rep: Action::new(rep_row, rep_col),
                });
            }
        }
        // labels are dense: a singleton start releases its label slot
        self.groups.sort_by_key(|g| g.rep);
    }

    /// Index into `groups` of the group with `label`.
    pub fn position_of_label(&self, label: u32) -> usize {
        self.groups
            .iter()
            .position(|g| g.label == label)
            .expect("label belongs to a group")
    }
}

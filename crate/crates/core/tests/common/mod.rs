//! Test-only oracles, written independently of the engine.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use pmcts::samegame::{Action, Board, Cell};

/// Naive SameGame rules over column-major storage: `cols[c][k]` is the k-th
/// block from the bottom of column `c`. Empty columns are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RefGame {
    pub height: usize,
    pub width: usize,
    pub cols: Vec<Vec<u8>>,
}

impl RefGame {
    pub fn from_board(b: &Board) -> RefGame {
        let mut cols = Vec::new();
        for c in 0..b.width() {
            let mut col = Vec::new();
            for r in (0..b.height()).rev() {
                if let Cell::Color(k) = b.cell(r, c) {
                    col.push(k);
                }
            }
            if !col.is_empty() {
                cols.push(col);
            }
        }
        RefGame {
            height: b.height(),
            width: b.width(),
            cols,
        }
    }

    fn at(&self, c: usize, k: usize) -> Option<u8> {
        self.cols.get(c).and_then(|col| col.get(k)).copied()
    }

    /// Groups as sets of (col, k) positions.
    pub fn groups(&self) -> Vec<Vec<(usize, usize)>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for c in 0..self.cols.len() {
            for k in 0..self.cols[c].len() {
                if seen.contains(&(c, k)) {
                    continue;
                }
                let color = self.cols[c][k];
                let mut comp = vec![];
                let mut q = VecDeque::from([(c, k)]);
                seen.insert((c, k));
                while let Some((x, y)) = q.pop_front() {
                    comp.push((x, y));
                    let mut nbrs = vec![(x + 1, y), (x, y + 1)];
                    if x > 0 {
                        nbrs.push((x - 1, y));
                    }
                    if y > 0 {
                        nbrs.push((x, y - 1));
                    }
                    for n in nbrs {
                        if self.at(n.0, n.1) == Some(color) && seen.insert(n) {
                            q.push_back(n);
                        }
                    }
                }
                if comp.len() >= 2 {
                    out.push(comp);
                }
            }
        }
        out
    }

    /// Lowest block of the group, leftmost among the lowest, as a top-origin
    /// `(row, col)` action.
    fn rep(&self, group: &[(usize, usize)]) -> Action {
        let lowest = group.iter().map(|&(_, k)| k).min().unwrap();
        let col = group
            .iter()
            .filter(|&&(_, k)| k == lowest)
            .map(|&(c, _)| c)
            .min()
            .unwrap();
        Action::new(self.height - 1 - lowest, col)
    }

    pub fn actions(&self) -> Vec<Action> {
        let mut acts: Vec<Action> = self.groups().iter().map(|g| self.rep(g)).collect();
        acts.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        acts
    }

    /// Applies the action; returns (next, cleared count) or None if illegal.
    pub fn play(&self, a: Action) -> Option<(RefGame, usize)> {
        let group = self.groups().into_iter().find(|g| self.rep(g) == a)?;
        let doomed: HashSet<(usize, usize)> = group.iter().copied().collect();
        let mut cols = Vec::new();
        for (c, col) in self.cols.iter().enumerate() {
            let kept: Vec<u8> = col
                .iter()
                .enumerate()
                .filter(|(k, _)| !doomed.contains(&(c, *k)))
                .map(|(_, &v)| v)
                .collect();
            if !kept.is_empty() {
                cols.push(kept);
            }
        }
        Some((
            RefGame {
                height: self.height,
                width: self.width,
                cols,
            },
            group.len(),
        ))
    }

    pub fn is_over(&self) -> bool {
        self.groups().is_empty()
    }

    /// +1000 if nothing is left, otherwise minus Σ over present colors of
    /// (count − 2)².
    pub fn end_adjustment(&self) -> i64 {
        let mut counts: HashMap<u8, i64> = HashMap::new();
        for col in &self.cols {
            for &v in col {
                *counts.entry(v).or_default() += 1;
            }
        }
        if counts.is_empty() {
            1000
        } else {
            -counts.values().map(|&n| (n - 2) * (n - 2)).sum::<i64>()
        }
    }

    /// Same position as the engine board, compared cell by cell.
    pub fn matches(&self, b: &Board) -> bool {
        if b.width() != self.width || b.height() != self.height {
            return false;
        }
        for c in 0..self.width {
            for r in 0..self.height {
                let k = self.height - 1 - r;
                let expect = match self.at(c, k) {
                    Some(v) => Cell::Color(v),
                    None => Cell::Empty,
                };
                if b.cell(r, c) != expect {
                    return false;
                }
            }
        }
        true
    }
}

/// Best achievable episode total from `g` under the reference rules.
pub fn ref_optimum(g: &RefGame, memo: &mut HashMap<RefGame, i64>) -> i64 {
    if let Some(&v) = memo.get(g) {
        return v;
    }
    let acts = g.actions();
    let v = if acts.is_empty() {
        g.end_adjustment()
    } else {
        acts.iter()
            .map(|&a| {
                let (next, n) = g.play(a).unwrap();
                let s = (n as i64 - 2).pow(2);
                s + ref_optimum(&next, memo)
            })
            .max()
            .unwrap()
    };
    memo.insert(g.clone(), v);
    v
}

/// Best achievable episode total using the engine's own transitions.
pub fn engine_optimum(b: &Board, memo: &mut HashMap<Board, i64>) -> i64 {
    if let Some(&v) = memo.get(b) {
        return v;
    }
    let acts = b.legal_actions();
    let v = if acts.is_empty() {
        b.terminal_adjustment()
    } else {
        acts.iter()
            .map(|&a| {
                let out = b.apply_action(a).unwrap();
                if out.terminal {
                    out.reward()
                } else {
                    out.move_score + engine_optimum(&out.next_board, memo)
                }
            })
            .max()
            .unwrap()
    };
    memo.insert(b.clone(), v);
    v
}

/// Optimal first moves (all actions achieving the optimum).
pub fn optimal_first_moves(b: &Board) -> Vec<Action> {
    let mut memo = HashMap::new();
    let best = engine_optimum(b, &mut memo);
    b.legal_actions()
        .into_iter()
        .filter(|&a| {
            let out = b.apply_action(a).unwrap();
            let v = if out.terminal {
                out.reward()
            } else {
                out.move_score + engine_optimum(&out.next_board, &mut memo)
            };
            v == best
        })
        .collect()
}

/// Walks the full game tree checking that engine and reference agree on
/// every transition, legal-action list and terminal flag. Returns the number
/// of transitions compared.
pub fn cross_check_tree(b: &Board, seen: &mut HashSet<Board>) -> Result<usize, String> {
    if !seen.insert(b.clone()) {
        return Ok(0);
    }
    let g = RefGame::from_board(b);
    if !g.matches(b) {
        return Err(format!("reference conversion mismatch on {b:?}"));
    }
    let acts = b.legal_actions();
    if acts != g.actions() {
        return Err(format!(
            "legal actions differ on {b:?}: engine {acts:?} ref {:?}",
            g.actions()
        ));
    }
    if b.is_terminal() != g.is_over() {
        return Err(format!("terminal flag differs on {b:?}"));
    }
    let mut count = 0;
    for a in acts {
        let out = b.apply_action(a).map_err(|e| e.to_string())?;
        let (next, n) = g.play(a).ok_or("reference rejects engine action")?;
        if !next.matches(&out.next_board) || n != out.cleared {
            return Err(format!("transition {a} differs on {b:?}"));
        }
        if out.move_score != (n as i64 - 2).pow(2) {
            return Err(format!("move score differs for {a} on {b:?}"));
        }
        if out.terminal != next.is_over() {
            return Err(format!("terminal flag after {a} differs on {b:?}"));
        }
        let expect_adj = if next.is_over() { next.end_adjustment() } else { 0 };
        if out.terminal_adjustment != expect_adj {
            return Err(format!("terminal adjustment after {a} differs on {b:?}"));
        }
        count += 1 + cross_check_tree(&out.next_board, seen)?;
    }
    Ok(count)
}

/// Welch-free paired summary: mean of differences and its standard error.
pub fn paired_stats(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

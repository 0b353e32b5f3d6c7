use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const GRIDWORLD: &str = include_str!("../../assets/gridworld.map");
pub(crate) const COLORED_GRIDWORLD: &str = include_str!("../../assets/colored_gridworld.map");
pub(crate) const TAG: &str = include_str!("../../assets/tag.map");
pub(crate) const POCMAN: &str = include_str!("../../assets/pocman.map");

/// Compass directions in sensor bit order: N=1, E=2, S=4, W=8.
pub const DIRECTIONS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Free,
    Goal,
    /// `0` for a plain wall, `1..=3` for a coloured one.
    Wall(u8),
}

/// Parsed ASCII map. Free cells (including goals and start markers) are
/// numbered in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapSpec {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    free: Vec<(usize, usize)>,
    free_index: Vec<Option<usize>>,
    pub agent_starts: Vec<usize>,
    pub ghost_starts: Vec<usize>,
    pub food: Vec<usize>,
    pub goals: Vec<usize>,
}

impl MapSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> =
            text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("map is empty"));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let mut free = Vec::new();
        let mut free_index = Vec::with_capacity(rows * cols);
        let (mut agents, mut ghosts, mut food, mut goals) = (vec![], vec![], vec![], vec![]);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::invalid(format!("map row {r} is not {cols} wide")));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall(0),
                    '1'..='3' => Cell::Wall(ch as u8 - b'0'),
                    'G' => Cell::Goal,
                    '.' | 'P' | 'X' | 'o' => Cell::Free,
                    other => {
                        return Err(Error::invalid(format!("unknown map symbol `{other}`")))
                    }
                };
                cells.push(cell);
                if matches!(cell, Cell::Wall(_)) {
                    free_index.push(None);
                    continue;
                }
                let idx = free.len();
                free.push((r, c));
                free_index.push(Some(idx));
                match ch {
                    'P' => agents.push(idx),
                    'X' => ghosts.push(idx),
                    'o' => food.push(idx),
                    'G' => goals.push(idx),
                    _ => {}
                }
            }
        }
        if free.is_empty() {
            return Err(Error::invalid("map has no free cell"));
        }
        Ok(Self {
            rows,
            cols,
            cells,
            free,
            free_index,
            agent_starts: agents,
            ghost_starts: ghosts,
            food,
            goals,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn gridworld() -> Self {
        Self::parse(GRIDWORLD).expect("bundled map")
    }

    pub fn colored_gridworld() -> Self {
        Self::parse(COLORED_GRIDWORLD).expect("bundled map")
    }

    pub fn tag() -> Self {
        Self::parse(TAG).expect("bundled map")
    }

    pub fn pocman() -> Self {
        Self::parse(POCMAN).expect("bundled map")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn position(&self, idx: usize) -> (usize, usize) {
        self.free[idx]
    }

    pub fn free_at(&self, r: usize, c: usize) -> Option<usize> {
        self.free_index[r * self.cols + c]
    }

    pub fn is_goal(&self, idx: usize) -> bool {
        let (r, c) = self.free[idx];
        self.cells[r * self.cols + c] == Cell::Goal
    }

    /// Cell one step from free cell `idx` in direction `d`; `None` outside
    /// the grid.
    fn look(&self, idx: usize, d: usize) -> Option<(usize, usize)> {
        let (r, c) = self.free[idx];
        let (dr, dc) = DIRECTIONS[d];
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        (nr < self.rows && nc < self.cols).then_some((nr, nc))
    }

    /// Free neighbour in direction `d`, or `None` if blocked.
    pub fn neighbor(&self, idx: usize, d: usize) -> Option<usize> {
        let (r, c) = self.look(idx, d)?;
        self.free_at(r, c)
    }

    /// Destination of a move, staying put when blocked.
    pub fn step_from(&self, idx: usize, d: usize) -> usize {
        self.neighbor(idx, d).unwrap_or(idx)
    }

    /// Four-bit wall pattern around a free cell.
    pub fn wall_bits(&self, idx: usize) -> usize {
        (0..4).filter(|&d| self.neighbor(idx, d).is_none()).map(|d| 1 << d).sum()
    }

    /// Per-direction symbol: 0 open, otherwise the wall colour, with plain
    /// walls and the grid edge reading as colour 1.
    pub fn colors(&self, idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for (d, o) in out.iter_mut().enumerate() {
            *o = match self.look(idx, d) {
                None => 1,
                Some((r, c)) => match self.cells[r * self.cols + c] {
                    Cell::Wall(0) => 1,
                    Cell::Wall(k) => k as usize,
                    _ => 0,
                },
            };
        }
        out
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.free[a];
        let (rb, cb) = self.free[b];
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }
}

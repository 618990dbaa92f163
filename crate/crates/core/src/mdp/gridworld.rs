//! Text gridworlds compiled to [`TabularMdp`]s.
//!
//! Grid files hold one row per line using `S` (start), `G` (goal), `X`
//! (hazard), `#` (wall) and `.` (empty). States are the non-wall cells in
//! row-major order; actions are `up, right, down, left`. Goal and hazard
//! cells are absorbing with zero reward; the entry transition carries the
//! goal or hazard reward in place of the step reward.

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::table::SaTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Start,
    Goal,
    Hazard,
    Wall,
    Empty,
}

impl Cell {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Goal),
            'X' => Some(Cell::Hazard),
            '#' => Some(Cell::Wall),
            '.' => Some(Cell::Empty),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Cell::Goal | Cell::Hazard)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Right = 1,
    Down = 2,
    Left = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Right, GridAction::Down, GridAction::Left];

    fn delta(self) -> (isize, isize) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Right => (0, 1),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
        }
    }

    fn perpendicular(self) -> [GridAction; 2] {
        match self {
            GridAction::Up | GridAction::Down => [GridAction::Left, GridAction::Right],
            GridAction::Right | GridAction::Left => [GridAction::Up, GridAction::Down],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            GridAction::Up => '^',
            GridAction::Right => '>',
            GridAction::Down => 'v',
            GridAction::Left => '<',
        }
    }
}

/// Parses the character grid, checking that rows are rectangular and that at
/// least one start and one goal exist.
pub fn parse_grid(text: &str) -> Result<Vec<Vec<Cell>>> {
    let mut cells = Vec::new();
    for (row, line) in text.lines().map(str::trim_end).filter(|l| !l.is_empty()).enumerate() {
        let parsed = line
            .chars()
            .enumerate()
            .map(|(col, c)| {
                Cell::from_char(c).ok_or_else(|| Error::Grid {
                    row,
                    col,
                    message: format!("unknown cell character {c:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(parsed);
    }
    GridworldSpec::validate_cells(&cells)?;
    Ok(cells)
}

#[derive(Clone, Debug)]
pub struct GridworldSpec {
    pub cells: Vec<Vec<Cell>>,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub hazard_reward: f64,
    pub slip_prob: f64,
    pub discount: f64,
}

impl GridworldSpec {
    pub fn from_text(text: &str, step_reward: f64, goal_reward: f64, hazard_reward: f64, slip_prob: f64, discount: f64) -> Result<Self> {
        Ok(Self {
            cells: parse_grid(text)?,
            step_reward,
            goal_reward,
            hazard_reward,
            slip_prob,
            discount,
        })
    }

    fn validate_cells(cells: &[Vec<Cell>]) -> Result<()> {
        let width = cells.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::Grid {
                row: 0,
                col: 0,
                message: "empty grid".into(),
            });
        }
        for (row, r) in cells.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Grid {
                    row,
                    col: r.len().min(width),
                    message: format!("row has {} cells, expected {width}", r.len()),
                });
            }
        }
        let has = |kind: Cell| cells.iter().flatten().any(|&c| c == kind);
        if !has(Cell::Start) {
            return Err(Error::Grid {
                row: 0,
                col: 0,
                message: "grid has no start cell".into(),
            });
        }
        if !has(Cell::Goal) {
            return Err(Error::Grid {
                row: 0,
                col: 0,
                message: "grid has no goal cell".into(),
            });
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.cells.len()
    }

    pub fn width(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    /// `(row, col)` of every state, in state-index order.
    pub fn state_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.cells.iter().enumerate() {
            for (c, &cell) in row.iter().enumerate() {
                if cell != Cell::Wall {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn cell_of_state(&self, s: usize) -> Cell {
        let (r, c) = self.state_cells()[s];
        self.cells[r][c]
    }

    /// States holding cells of the given kind.
    pub fn states_of(&self, kind: Cell) -> Vec<usize> {
        self.state_cells()
            .iter()
            .enumerate()
            .filter(|(_, &(r, c))| self.cells[r][c] == kind)
            .map(|(s, _)| s)
            .collect()
    }

    /// Renders a per-state character map (e.g. policy arrows) over the grid.
    pub fn render(&self, mut glyph: impl FnMut(usize, Cell) -> char) -> String {
        let mut out = String::new();
        let mut s = 0;
        for row in &self.cells {
            for &cell in row {
                if cell == Cell::Wall {
                    out.push('#');
                } else {
                    out.push(glyph(s, cell));
                    s += 1;
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Compiles the grid into an MDP with uniform initial distribution over starts.
pub fn build_gridworld(grid: &GridworldSpec) -> Result<TabularMdp> {
    GridworldSpec::validate_cells(&grid.cells)?;
    if !(0.0..1.0).contains(&grid.slip_prob) {
        return Err(Error::Domain(format!("slip probability {} outside [0, 1)", grid.slip_prob)));
    }
    let height = grid.height() as isize;
    let width = grid.width() as isize;
    let positions = grid.state_cells();
    let mut index = vec![vec![usize::MAX; grid.width()]; grid.height()];
    for (s, &(r, c)) in positions.iter().enumerate() {
        index[r][c] = s;
    }
    let ns = positions.len();
    let na = GridAction::ALL.len();

    let target = |s: usize, action: GridAction| -> usize {
        let (r, c) = positions[s];
        let (dr, dc) = action.delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= height || nc >= width {
            return s;
        }
        let (nr, nc) = (nr as usize, nc as usize);
        if grid.cells[nr][nc] == Cell::Wall {
            s
        } else {
            index[nr][nc]
        }
    };
    let entry_reward = |next: usize| match grid.cells[positions[next].0][positions[next].1] {
        Cell::Goal => grid.goal_reward,
        Cell::Hazard => grid.hazard_reward,
        _ => grid.step_reward,
    };

    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = SaTable::zeros(ns, na);
    for (s, &(r, c)) in positions.iter().enumerate() {
        for action in GridAction::ALL {
            let a = action as usize;
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            if grid.cells[r][c].is_terminal() {
                row[s] = 1.0;
                continue;
            }
            let mut outcomes = vec![(target(s, action), 1.0 - grid.slip_prob)];
            if grid.slip_prob > 0.0 {
                for side in action.perpendicular() {
                    outcomes.push((target(s, side), grid.slip_prob / 2.0));
                }
            }
            let mut expected = 0.0;
            for (next, p) in outcomes {
                row[next] += p;
                expected += p * entry_reward(next);
            }
            reward[(s, a)] = expected;
        }
    }

    let starts = grid.states_of(Cell::Start);
    let mut initial = vec![0.0; ns];
    for &s in &starts {
        initial[s] = 1.0 / starts.len() as f64;
    }
    TabularMdp::new(ns, na, reward, transition, initial, grid.discount)
}

use std::collections::VecDeque;

use rand::Rng;
use serde_json::{Map, Value};

use super::{meta_pair, read_pair, rng_for, GenParams, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::raster::{Color, PixelBox, Sketch};
use crate::tools::{self, ToolCall, ROUTE_DRAWER};

pub type Cell = (usize, usize);

/// Neighbor order U, D, L, R. BFS expands in this order, which fixes the
/// reported path when several shortest paths exist.
const STEPS: [(i64, i64, char); 4] = [(-1, 0, 'U'), (1, 0, 'D'), (0, -1, 'L'), (0, 1, 'R')];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeGrid {
    n: usize,
    walls: Vec<bool>,
}

impl MazeGrid {
    pub fn from_rows(rows: &[String]) -> Option<Self> {
        let n = rows.len();
        let mut walls = Vec::with_capacity(n * n);
        for row in rows {
            if row.chars().count() != n {
                return None;
            }
            walls.extend(row.chars().map(|c| c == '#'));
        }
        Some(Self { n, walls })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_wall(&self, (r, c): Cell) -> bool {
        self.walls[r * self.n + c]
    }

    pub fn rows(&self) -> Vec<String> {
        self.walls
            .chunks(self.n)
            .map(|row| row.iter().map(|&w| if w { '#' } else { '.' }).collect())
            .collect()
    }

    fn step(&self, (r, c): Cell, dr: i64, dc: i64) -> Option<Cell> {
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        let n = self.n as i64;
        ((0..n).contains(&nr) && (0..n).contains(&nc)).then(|| (nr as usize, nc as usize))
    }

    fn open_neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        STEPS
            .iter()
            .filter_map(move |&(dr, dc, _)| self.step(cell, dr, dc))
            .filter(|&nb| !self.is_wall(nb))
    }

    /// Randomized depth-first carving. A wall cell is opened only when the
    /// cell doing the carving is its sole open neighbor, so passages form a
    /// tree and every open cell is reachable from `start`.
    fn carve(n: usize, start: Cell, rng: &mut impl Rng) -> Self {
        let mut grid = Self {
            n,
            walls: vec![true; n * n],
        };
        grid.walls[start.0 * n + start.1] = false;
        let mut stack = vec![start];
        while let Some(&cur) = stack.last() {
            let candidates: Vec<Cell> = STEPS
                .iter()
                .filter_map(|&(dr, dc, _)| grid.step(cur, dr, dc))
                .filter(|&nb| grid.is_wall(nb) && grid.open_neighbors(nb).all(|o| o == cur))
                .collect();
            if candidates.is_empty() {
                stack.pop();
                continue;
            }
            let next = candidates[rng.gen_range(0..candidates.len())];
            grid.walls[next.0 * n + next.1] = false;
            stack.push(next);
        }
        grid
    }
}

/// Shortest path from `start` to `goal` (inclusive), or `None` when the goal
/// is unreachable.
pub fn bfs_shortest_path(grid: &MazeGrid, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    let n = grid.size();
    let mut parent: Vec<Option<Cell>> = vec![None; n * n];
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::from([start]);
    seen[start.0 * n + start.1] = true;
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            let mut path = vec![cur];
            let mut at = cur;
            while let Some(p) = parent[at.0 * n + at.1] {
                path.push(p);
                at = p;
            }
            path.reverse();
            return Some(path);
        }
        for nb in grid.open_neighbors(cur) {
            if !std::mem::replace(&mut seen[nb.0 * n + nb.1], true) {
                parent[nb.0 * n + nb.1] = Some(cur);
                queue.push_back(nb);
            }
        }
    }
    None
}

/// Move letters between consecutive cells; non-adjacent pairs yield `?`.
pub fn moves_between(path: &[(i64, i64)]) -> String {
    path.windows(2)
        .map(|w| {
            let d = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            STEPS
                .iter()
                .find(|&&(dr, dc, _)| (dr, dc) == d)
                .map_or('?', |&(_, _, m)| m)
        })
        .collect()
}

fn farthest_cell(grid: &MazeGrid, start: Cell) -> Cell {
    let n = grid.size();
    let mut dist = vec![usize::MAX; n * n];
    dist[start.0 * n + start.1] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (0, start);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur.0 * n + cur.1];
        if d > best.0 || (d == best.0 && cur < best.1) {
            best = (d, cur);
        }
        for nb in grid.open_neighbors(cur) {
            if dist[nb.0 * n + nb.1] == usize::MAX {
                dist[nb.0 * n + nb.1] = d + 1;
                queue.push_back(nb);
            }
        }
    }
    best.1
}

/// Indices into `path` where a straight run ends.
fn run_ends(path: &[Cell]) -> Vec<usize> {
    let as_i = |c: Cell| (c.0 as i64, c.1 as i64);
    let moves: Vec<char> = moves_between(&path.iter().map(|&c| as_i(c)).collect::<Vec<_>>())
        .chars()
        .collect();
    (1..path.len())
        .filter(|&k| k == path.len() - 1 || moves[k - 1] != moves[k])
        .collect()
}

/// Evenly thins `ends` down to at most `max` entries, always keeping the last.
fn thin(ends: Vec<usize>, max: usize) -> Vec<usize> {
    if ends.len() <= max {
        return ends;
    }
    (1..=max).map(|i| ends[(i * ends.len()).div_ceil(max) - 1]).collect()
}

pub fn gen_maze(n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance, TaskGenError> {
    if n < 3 {
        return Err(TaskGenError::InvalidParameter(format!(
            "maze size must be >= 3, got {n}"
        )));
    }
    if params.max_plan_len == 0 {
        return Err(TaskGenError::InvalidParameter("max_plan_len must be >= 1".into()));
    }
    let cell_px = params.resolution / n as u32;
    if cell_px < 4 {
        return Err(TaskGenError::InvalidParameter(format!(
            "resolution {} too small for a {n}x{n} maze",
            params.resolution
        )));
    }
    let mut rng = rng_for(seed);
    let start = (rng.gen_range(0..n), rng.gen_range(0..n));
    let grid = MazeGrid::carve(n, start, &mut rng);
    let goal = farthest_cell(&grid, start);
    let path = bfs_shortest_path(&grid, start, goal).expect("carved mazes are connected");
    let to_i = |c: Cell| (c.0 as i64, c.1 as i64);
    let path_i: Vec<(i64, i64)> = path.iter().map(|&c| to_i(c)).collect();
    let moves = moves_between(&path_i);

    let initial = render(&grid, start, goal, cell_px)?;
    let plan = thin(run_ends(&path), params.max_plan_len)
        .into_iter()
        .map(|end| ToolCall::route_drawer(n as i64, &path_i[..=end]))
        .collect();

    let question = format!(
        "Find the shortest route through the {n}x{n} grid maze from the red ball at ({}, {}) \
         to the green ball at ({}, {}). Cells are written (row, col) with (0, 0) in the top-left \
         corner, and dark cells cannot be entered. Reply with the route as a string of moves, \
         using U, D, L and R for up, down, left and right, for example RRDL.",
        start.0, start.1, goal.0, goal.1
    );

    let mut meta = Map::new();
    meta.insert("n".into(), n.into());
    meta.insert("cell_px".into(), cell_px.into());
    meta.insert("start".into(), meta_pair(to_i(start)));
    meta.insert("goal".into(), meta_pair(to_i(goal)));
    meta.insert(
        "walls".into(),
        Value::Array(grid.rows().into_iter().map(Value::String).collect()),
    );
    meta.insert(
        "path".into(),
        Value::Array(path_i.iter().map(|&p| meta_pair(p)).collect()),
    );

    let instance = TaskInstance {
        id: format!("maze-n{n}-{seed:016x}"),
        kind: TaskKind::Maze,
        initial,
        question,
        truth: GroundTruth::moves(moves)?,
        plan,
        meta,
        seed,
    };
    super::replay_plan(&instance)?;
    Ok(instance)
}

fn render(grid: &MazeGrid, start: Cell, goal: Cell, cell_px: u32) -> Result<Sketch, TaskGenError> {
    let n = grid.size() as u32;
    let side = i64::from(cell_px * n);
    let mut img = Sketch::new_blank(side, side, Color::WHITE)?;
    for r in 0..n {
        for c in 0..n {
            if grid.is_wall((r as usize, c as usize)) {
                img.fill_rect(
                    &PixelBox {
                        x1: c * cell_px,
                        y1: r * cell_px,
                        x2: (c + 1) * cell_px,
                        y2: (r + 1) * cell_px,
                    },
                    Color::BLACK,
                );
            }
        }
    }
    let radius = 0.3 * f64::from(cell_px);
    for (cell, color) in [(start, Color::RED), (goal, Color::GREEN)] {
        let cx = (cell.1 as f64 + 0.5) * f64::from(cell_px);
        let cy = (cell.0 as f64 + 0.5) * f64::from(cell_px);
        img.fill_circle(cx, cy, radius, color);
    }
    Ok(img)
}

/// Rebuilds the wall grid stored in a maze instance's metadata.
pub fn maze_grid(instance: &TaskInstance) -> Option<MazeGrid> {
    let rows: Vec<String> = instance
        .meta
        .get("walls")?
        .as_array()?
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect::<Option<_>>()?;
    MazeGrid::from_rows(&rows)
}

/// The final route call draws the whole truth path, and the drawn sketch is
/// red at every path cell center.
pub(super) fn route_covers_truth(instance: &TaskInstance, final_sketch: &Sketch) -> bool {
    let Some(last) = instance.plan.last() else {
        return false;
    };
    let n = instance.meta_i64("n").unwrap_or(0);
    let path: Vec<(i64, i64)> = instance
        .meta
        .get("path")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|p| Some((p.get(0)?.as_i64()?, p.get(1)?.as_i64()?)))
                .collect()
        })
        .unwrap_or_default();
    let drawn_full = last.name == ROUTE_DRAWER
        && last.arguments.get("points") == Some(&Value::Array(path.iter().map(|&p| meta_pair(p)).collect()));
    let (Some(start), Some(goal)) = (read_pair(&instance.meta, "start"), read_pair(&instance.meta, "goal")) else {
        return false;
    };
    drawn_full
        && path.first() == Some(&start)
        && path.last() == Some(&goal)
        && path.iter().all(|&(r, c)| {
            let p = tools::cell_center(final_sketch, n, r, c);
            final_sketch.pixel(p.x as u32, p.y as u32) == Color::RED
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flood_fill_distance(grid: &MazeGrid, start: Cell, goal: Cell) -> Option<usize> {
        // independent oracle: repeated relaxation over the whole grid
        let n = grid.size();
        let mut dist = vec![vec![usize::MAX; n]; n];
        dist[start.0][start.1] = 0;
        let mut changed = true;
        while changed {
            changed = false;
            for r in 0..n {
                for c in 0..n {
                    if grid.is_wall((r, c)) || dist[r][c] == usize::MAX {
                        continue;
                    }
                    let d = dist[r][c] + 1;
                    let mut nbs = vec![];
                    if r > 0 { nbs.push((r - 1, c)); }
                    if r + 1 < n { nbs.push((r + 1, c)); }
                    if c > 0 { nbs.push((r, c - 1)); }
                    if c + 1 < n { nbs.push((r, c + 1)); }
                    for (nr, nc) in nbs {
                        if !grid.is_wall((nr, nc)) && dist[nr][nc] > d {
                            dist[nr][nc] = d;
                            changed = true;
                        }
                    }
                }
            }
        }
        (dist[goal.0][goal.1] != usize::MAX).then_some(dist[goal.0][goal.1])
    }

    fn simulate(grid: &MazeGrid, start: Cell, moves: &str) -> Option<Cell> {
        let mut at = start;
        for m in moves.chars() {
            let &(dr, dc, _) = STEPS.iter().find(|s| s.2 == m)?;
            at = grid.step(at, dr, dc)?;
            if grid.is_wall(at) {
                return None;
            }
        }
        Some(at)
    }

    fn parts(inst: &TaskInstance) -> (MazeGrid, Cell, Cell, String) {
        let grid = maze_grid(inst).unwrap();
        let s = read_pair(&inst.meta, "start").unwrap();
        let g = read_pair(&inst.meta, "goal").unwrap();
        let GroundTruth::MoveSequence { moves } = &inst.truth else { panic!() };
        (grid, (s.0 as usize, s.1 as usize), (g.0 as usize, g.1 as usize), moves.clone())
    }

    #[test]
    fn truth_path_reaches_goal() {
        let params = GenParams::default();
        for seed in 0..20 {
            let inst = gen_maze(3, seed, &params).unwrap();
            let (grid, start, goal, moves) = parts(&inst);
            assert_eq!(simulate(&grid, start, &moves), Some(goal));
        }
    }

    #[test]
    fn truth_length_matches_flood_fill() {
        let params = GenParams { resolution: 180, ..GenParams::default() };
        for n in 3..=9 {
            for seed in 0..5 {
                let inst = gen_maze(n, seed, &params).unwrap();
                let (grid, start, goal, moves) = parts(&inst);
                assert_eq!(Some(moves.len()), flood_fill_distance(&grid, start, goal));
            }
        }
    }

    #[test]
    fn seeded_and_validated() {
        let params = GenParams::default();
        assert_eq!(gen_maze(5, 7, &params).unwrap(), gen_maze(5, 7, &params).unwrap());
        assert!(matches!(gen_maze(2, 0, &params), Err(TaskGenError::InvalidParameter(_))));
    }

    #[test]
    fn plan_draws_growing_prefixes() {
        let params = GenParams { max_plan_len: 3, ..GenParams::default() };
        for seed in 0..10 {
            let inst = gen_maze(9, seed, &params).unwrap();
            assert!(inst.plan.len() <= 3);
            let lens: Vec<usize> = inst
                .plan
                .iter()
                .map(|c| c.arguments["points"].as_array().unwrap().len())
                .collect();
            assert!(lens.windows(2).all(|w| w[0] < w[1]));
            let (.., moves) = parts(&inst);
            assert_eq!(*lens.last().unwrap(), moves.len() + 1);
        }
    }

    #[test]
    fn moves_between_marks_jumps() {
        assert_eq!(moves_between(&[(0, 0), (0, 1), (1, 1), (1, 0), (0, 0)]), "RDLU");
        assert_eq!(moves_between(&[(0, 0), (2, 0), (2, 0)]), "??");
    }

    #[test]
    fn rendering_marks_start_and_goal() {
        let inst = gen_maze(5, 3, &GenParams::default()).unwrap();
        let cell = inst.meta_i64("cell_px").unwrap() as u32;
        let (s, g) = (read_pair(&inst.meta, "start").unwrap(), read_pair(&inst.meta, "goal").unwrap());
        let center = |p: (i64, i64)| (p.1 as u32 * cell + cell / 2, p.0 as u32 * cell + cell / 2);
        let (sx, sy) = center(s);
        let (gx, gy) = center(g);
        assert_eq!(inst.initial.pixel(sx, sy), Color::RED);
        assert_eq!(inst.initial.pixel(gx, gy), Color::GREEN);
        assert_eq!(inst.initial.width(), cell * 5);
    }
}

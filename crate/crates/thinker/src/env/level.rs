use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A box-pushing board: bit masks over `width * height` cells.
/// Cell `(r, c)` maps to bit `r * width + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Level {
    pub width: u8,
    pub height: u8,
    pub walls: u64,
    pub targets: u64,
    pub boxes: u64,
    pub agent: u8,
}

impl Level {
    pub fn cell(&self, r: usize, c: usize) -> u8 {
        (r * self.width as usize + c) as u8
    }

    pub fn has(mask: u64, cell: u8) -> bool {
        mask & (1u64 << cell) != 0
    }

    pub fn box_count(&self) -> u32 {
        self.boxes.count_ones()
    }

    fn check(&self) -> Result<()> {
        let cells = self.width as usize * self.height as usize;
        if cells > 64 {
            return Err(Error::BadLevel("board larger than 64 cells".into()));
        }
        if self.boxes.count_ones() != self.targets.count_ones() {
            return Err(Error::BadLevel("box and target counts differ".into()));
        }
        if self.boxes == 0 {
            return Err(Error::BadLevel("level has no boxes".into()));
        }
        if Level::has(self.walls, self.agent) || Level::has(self.boxes, self.agent as u8) {
            return Err(Error::BadLevel("agent overlaps wall or box".into()));
        }
        if self.walls & self.boxes != 0 || self.walls & self.targets != 0 {
            return Err(Error::BadLevel("wall overlaps box or target".into()));
        }
        Ok(())
    }
}

/// Parse one level from the line format: rows joined by `|`, cells drawn
/// from `# . @ $ * + -` (wall, target, agent, box, box-on-target,
/// agent-on-target, floor).
pub fn parse_level(line: &str) -> Result<Level> {
    let rows: Vec<&str> = line.trim().split('|').collect();
    let height = rows.len();
    if height == 0 || rows[0].is_empty() {
        return Err(Error::BadLevel("empty level line".into()));
    }
    let width = rows[0].chars().count();
    let mut level = Level {
        width: width as u8,
        height: height as u8,
        walls: 0,
        targets: 0,
        boxes: 0,
        agent: 0,
    };
    let mut agent_seen = false;
    for (r, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::BadLevel(format!("ragged row {r}")));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = level.cell(r, c);
            let bit = 1u64 << cell;
            match ch {
                '#' => level.walls |= bit,
                '.' => level.targets |= bit,
                '@' => {
                    level.agent = cell;
                    agent_seen = true;
                }
                '$' => level.boxes |= bit,
                '*' => {
                    level.boxes |= bit;
                    level.targets |= bit;
                }
                '+' => {
                    level.agent = cell;
                    level.targets |= bit;
                    agent_seen = true;
                }
                '-' => {}
                other => return Err(Error::BadLevel(format!("unknown cell `{other}`"))),
            }
        }
    }
    if !agent_seen {
        return Err(Error::BadLevel("level has no agent".into()));
    }
    level.check()?;
    Ok(level)
}

/// Render a level back to the one-line text form.
pub fn format_level(level: &Level) -> String {
    let mut rows = Vec::with_capacity(level.height as usize);
    for r in 0..level.height as usize {
        let mut row = String::with_capacity(level.width as usize);
        for c in 0..level.width as usize {
            let cell = level.cell(r, c);
            let wall = Level::has(level.walls, cell);
            let target = Level::has(level.targets, cell);
            let boxed = Level::has(level.boxes, cell);
            let agent = level.agent == cell;
            row.push(match (wall, target, boxed, agent) {
                (true, _, _, _) => '#',
                (_, true, true, _) => '*',
                (_, true, _, true) => '+',
                (_, true, false, false) => '.',
                (_, false, true, _) => '$',
                (_, false, _, true) => '@',
                _ => '-',
            });
        }
        rows.push(row);
    }
    rows.join("|")
}

/// Parse a pool file: one level per line, `//` comment lines skipped.
pub fn parse_pool(text: &str) -> Result<Vec<Level>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"))
        .map(parse_level)
        .collect()
}

pub fn pool_to_string(levels: &[Level]) -> String {
    let mut out = String::new();
    for level in levels {
        out.push_str(&format_level(level));
        out.push('\n');
    }
    out
}

/// Procedural generation settings. Boards are produced by placing boxes on
/// their targets and pulling them backwards, which guarantees a solution
/// exists; a breadth-first check then bounds the optimal plan length.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub width: u8,
    pub height: u8,
    pub min_boxes: u32,
    pub max_boxes: u32,
    pub extra_walls: u32,
    pub reverse_moves: u32,
    pub min_plan: usize,
    pub max_plan: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            width: 6,
            height: 6,
            min_boxes: 1,
            max_boxes: 2,
            extra_walls: 3,
            reverse_moves: 14,
            min_plan: 3,
            max_plan: 12,
        }
    }
}

const DIRS: [(i8, i8); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn shift(level: &Level, cell: u8, d: (i8, i8)) -> Option<u8> {
    let w = level.width as i8;
    let h = level.height as i8;
    let r = (cell as i8) / w + d.0;
    let c = (cell as i8) % w + d.1;
    if r < 0 || r >= h || c < 0 || c >= w {
        None
    } else {
        Some((r * w + c) as u8)
    }
}

fn free(level: &Level, cell: u8) -> bool {
    !Level::has(level.walls, cell) && !Level::has(level.boxes, cell)
}

/// Generate one solvable level. Deterministic for a given RNG state; loops
/// until the reverse walk yields a board whose optimal plan length falls in
/// the configured band.
pub fn generate_level(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Level {
    loop {
        if let Some(level) = try_generate(cfg, rng) {
            return level;
        }
    }
}

fn try_generate(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<Level> {
    let w = cfg.width as usize;
    let h = cfg.height as usize;
    let mut level = Level {
        width: cfg.width,
        height: cfg.height,
        walls: 0,
        targets: 0,
        boxes: 0,
        agent: 0,
    };
    // Border walls.
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r == h - 1 || c == w - 1 {
                level.walls |= 1 << level.cell(r, c);
            }
        }
    }
    let mut interior: Vec<u8> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| r > 0 && c > 0 && r < h - 1 && c < w - 1)
        .map(|(r, c)| (r * w + c) as u8)
        .collect();

    for _ in 0..rng.gen_range(0..=cfg.extra_walls) {
        let i = rng.gen_range(0..interior.len());
        level.walls |= 1 << interior[i];
    }
    interior.retain(|&c| !Level::has(level.walls, c));

    let n_boxes = rng.gen_range(cfg.min_boxes..=cfg.max_boxes) as usize;
    if interior.len() < n_boxes + 1 {
        return None;
    }
    // Sample boxes on targets (solved position), then the agent.
    let mut cells = interior.clone();
    for _ in 0..n_boxes {
        let i = rng.gen_range(0..cells.len());
        let cell = cells.swap_remove(i);
        level.targets |= 1 << cell;
        level.boxes |= 1 << cell;
    }
    level.agent = cells[rng.gen_range(0..cells.len())];

    // Reverse walk: pulls move a box onto the agent's cell while the agent
    // backs away; plain moves reposition the agent.
    for _ in 0..cfg.reverse_moves {
        let d = DIRS[rng.gen_range(0..4)];
        let pull = rng.gen_bool(0.6);
        if pull {
            let box_cell = match shift(&level, level.agent, (-d.0, -d.1)) {
                Some(c) if Level::has(level.boxes, c) => c,
                _ => continue,
            };
            let dest = match shift(&level, level.agent, d) {
                Some(c) if free(&level, c) => c,
                _ => continue,
            };
            level.boxes &= !(1u64 << box_cell);
            level.boxes |= 1u64 << level.agent;
            level.agent = dest;
        } else if let Some(c) = shift(&level, level.agent, d) {
            if free(&level, c) {
                level.agent = c;
            }
        }
    }

    if level.boxes & !level.targets == 0 {
        return None; // still solved; nothing to do
    }
    let plan = super::minibox::solve_bfs(&level, cfg.max_plan)?;
    if plan.len() < cfg.min_plan {
        return None;
    }
    Some(level)
}

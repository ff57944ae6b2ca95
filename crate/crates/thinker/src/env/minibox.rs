use super::level::{generate_level, Level};
use super::{GeneratorConfig, MiniBoxEncoding, MINIBOX_ACTIONS};
use crate::error::{Error, Result};
use once_cell::sync::Lazy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

/// Where reset draws its level from.
#[derive(Debug, Clone)]
pub enum LevelSource {
    /// Always the same board.
    Fixed(Level),
    /// `seed % pool.len()` indexes a fixed pool.
    Pool(Arc<Vec<Level>>),
    /// A fresh solvable board generated from the reset seed.
    Procedural(GeneratorConfig),
}

/// Solvability proof kept alongside a pool: optimal plan per level.
#[derive(Debug, Clone)]
pub struct PoolCertificate {
    pub plans: Vec<Vec<usize>>,
}

impl PoolCertificate {
    pub fn optimal_len(&self, level_idx: usize) -> usize {
        self.plans[level_idx].len()
    }
}

/// The 6x6 box-pushing puzzle. Rewards: +1 for pushing a box onto a target,
/// -1 for pushing one off, +2 extra on solving (which also terminates), and
/// a -0.01 step cost on steps where no box changes target status.
#[derive(Debug, Clone)]
pub struct MiniBoxSpec {
    pub width: u8,
    pub height: u8,
    pub source: LevelSource,
    pub max_steps: u16,
}

pub const STEP_COST: f64 = -0.01;
pub const BOX_ON: f64 = 1.0;
pub const BOX_OFF: f64 = -1.0;
pub const SOLVE_BONUS: f64 = 2.0;

impl MiniBoxSpec {
    /// Fixed single layout; solvability verified at construction.
    pub fn fixed(level: Level, max_steps: u16) -> Result<Self> {
        if solve_bfs(&level, max_steps as usize).is_none() {
            return Err(Error::UnsolvableLevel {
                level: super::level::format_level(&level),
                max_steps: max_steps as usize,
            });
        }
        Ok(MiniBoxSpec {
            width: level.width,
            height: level.height,
            source: LevelSource::Fixed(level),
            max_steps,
        })
    }

    /// Fixed pool; every level is solve-checked at construction.
    pub fn pool(levels: Vec<Level>, max_steps: u16) -> Result<(Self, PoolCertificate)> {
        if levels.is_empty() {
            return Err(Error::BadConfig("empty level pool".into()));
        }
        let (w, h) = (levels[0].width, levels[0].height);
        let mut plans = Vec::with_capacity(levels.len());
        for level in &levels {
            if (level.width, level.height) != (w, h) {
                return Err(Error::BadConfig("pool levels must share a board size".into()));
            }
            match solve_bfs(level, max_steps as usize) {
                Some(plan) => plans.push(plan),
                None => {
                    return Err(Error::UnsolvableLevel {
                        level: super::level::format_level(level),
                        max_steps: max_steps as usize,
                    })
                }
            }
        }
        Ok((
            MiniBoxSpec {
                width: w,
                height: h,
                source: LevelSource::Pool(Arc::new(levels)),
                max_steps,
            },
            PoolCertificate { plans },
        ))
    }

    /// Procedural stream; every generated board is solvable by construction.
    pub fn procedural(cfg: GeneratorConfig, max_steps: u16) -> Self {
        MiniBoxSpec {
            width: cfg.width,
            height: cfg.height,
            source: LevelSource::Procedural(cfg),
            max_steps,
        }
    }

    /// The built-in 50-level evaluation pool.
    pub fn builtin(max_steps: u16) -> (Self, PoolCertificate) {
        let levels = builtin_pool().clone();
        MiniBoxSpec::pool(levels, max_steps).expect("built-in pool is solvable")
    }

    pub fn initial_encoding(&self, seed: u64) -> super::StateEncoding {
        let level = match &self.source {
            LevelSource::Fixed(level) => *level,
            LevelSource::Pool(pool) => pool[(seed % pool.len() as u64) as usize],
            LevelSource::Procedural(cfg) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                generate_level(cfg, &mut rng)
            }
        };
        super::StateEncoding::MiniBox(MiniBoxEncoding {
            walls: level.walls,
            targets: level.targets,
            boxes: level.boxes,
            agent: level.agent,
            steps: 0,
        })
    }

    /// Four 0/1 planes: walls, targets, boxes, agent.
    pub fn observation(&self, enc: &MiniBoxEncoding) -> Vec<f64> {
        let cells = self.width as usize * self.height as usize;
        let mut obs = vec![0.0; 4 * cells];
        for cell in 0..cells {
            let bit = 1u64 << cell;
            if enc.walls & bit != 0 {
                obs[cell] = 1.0;
            }
            if enc.targets & bit != 0 {
                obs[cells + cell] = 1.0;
            }
            if enc.boxes & bit != 0 {
                obs[2 * cells + cell] = 1.0;
            }
        }
        obs[3 * cells + enc.agent as usize] = 1.0;
        obs
    }

    pub fn is_terminal(&self, enc: &MiniBoxEncoding) -> bool {
        solved(enc) || enc.steps >= self.max_steps
    }

    pub fn transition(
        &self,
        enc: &MiniBoxEncoding,
        action: usize,
    ) -> Result<(f64, MiniBoxEncoding, bool)> {
        let cells = self.width as usize * self.height as usize;
        if enc.agent as usize >= cells || Level::has(enc.walls, enc.agent) {
            return Err(Error::InvalidEncoding("agent cell invalid".into()));
        }
        if self.is_terminal(enc) {
            return Err(Error::EpisodeOver);
        }
        let mut next = *enc;
        let d = MINIBOX_ACTIONS[action];
        let mut box_on = false;
        let mut box_off = false;
        if let Some(dest) = self.shift(enc.agent, d) {
            if !Level::has(enc.walls, dest) {
                if Level::has(enc.boxes, dest) {
                    // Push: the box needs a free cell behind it.
                    if let Some(behind) = self.shift(dest, d) {
                        if !Level::has(enc.walls, behind) && !Level::has(enc.boxes, behind) {
                            next.boxes &= !(1u64 << dest);
                            next.boxes |= 1u64 << behind;
                            next.agent = dest;
                            box_on = Level::has(enc.targets, behind);
                            box_off = Level::has(enc.targets, dest);
                        }
                    }
                } else {
                    next.agent = dest;
                }
            }
        }
        next.steps += 1;
        let mut reward = 0.0;
        if box_on {
            reward += BOX_ON;
        }
        if box_off {
            reward += BOX_OFF;
        }
        if !box_on && !box_off {
            reward += STEP_COST;
        }
        let is_solved = solved(&next);
        if is_solved {
            reward += SOLVE_BONUS;
        }
        let done = is_solved || next.steps >= self.max_steps;
        Ok((reward, next, done))
    }

    fn shift(&self, cell: u8, d: (i8, i8)) -> Option<u8> {
        let w = self.width as i8;
        let h = self.height as i8;
        let r = (cell as i8) / w + d.0;
        let c = (cell as i8) % w + d.1;
        if r < 0 || r >= h || c < 0 || c >= w {
            None
        } else {
            Some((r * w + c) as u8)
        }
    }
}

fn solved(enc: &MiniBoxEncoding) -> bool {
    enc.boxes != 0 && enc.boxes & !enc.targets == 0
}

/// Breadth-first search over (agent, boxes) states, ignoring the step cap's
/// contribution to rewards. Returns a shortest push-optimal plan, or `None`
/// if the board cannot be solved within `max_depth` moves.
pub fn solve_bfs(level: &Level, max_depth: usize) -> Option<Vec<usize>> {
    let key = |agent: u8, boxes: u64| -> u128 { ((agent as u128) << 64) | boxes as u128 };
    if level.boxes & !level.targets == 0 {
        return Some(Vec::new());
    }
    let mut seen: HashMap<u128, (u128, usize)> = HashMap::new();
    let mut queue = VecDeque::new();
    let start = key(level.agent, level.boxes);
    seen.insert(start, (start, usize::MAX));
    queue.push_back((level.agent, level.boxes, 0usize));
    while let Some((agent, boxes, depth)) = queue.pop_front() {
        if depth >= max_depth {
            continue;
        }
        for (action, &d) in MINIBOX_ACTIONS.iter().enumerate() {
            let w = level.width as i8;
            let h = level.height as i8;
            let r = (agent as i8) / w + d.0;
            let c = (agent as i8) % w + d.1;
            if r < 0 || r >= h || c < 0 || c >= w {
                continue;
            }
            let dest = (r * w + c) as u8;
            if Level::has(level.walls, dest) {
                continue;
            }
            let nagent = dest;
            let mut nboxes = boxes;
            if Level::has(boxes, dest) {
                let br = (dest as i8) / w + d.0;
                let bc = (dest as i8) % w + d.1;
                if br < 0 || br >= h || bc < 0 || bc >= w {
                    continue;
                }
                let behind = (br * w + bc) as u8;
                if Level::has(level.walls, behind) || Level::has(boxes, behind) {
                    continue;
                }
                nboxes = (boxes & !(1u64 << dest)) | (1u64 << behind);
            }
            let nk = key(nagent, nboxes);
            if seen.contains_key(&nk) {
                continue;
            }
            let pk = key(agent, boxes);
            seen.insert(nk, (pk, action));
            if nboxes & !level.targets == 0 {
                // Walk parents back to the start.
                let mut plan = vec![action];
                let mut cur = pk;
                while cur != start {
                    let (prev, act) = seen[&cur];
                    plan.push(act);
                    cur = prev;
                }
                plan.reverse();
                return Some(plan);
            }
            queue.push_back((nagent, nboxes, depth + 1));
        }
    }
    None
}

/// Enumerate every state reachable from the level's start. Used by tests to
/// certify that observations are injective over the reachable set.
pub fn reachable_states(level: &Level, cap: usize) -> Vec<(u8, u64)> {
    let key = |agent: u8, boxes: u64| -> u128 { ((agent as u128) << 64) | boxes as u128 };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(key(level.agent, level.boxes));
    queue.push_back((level.agent, level.boxes));
    while let Some((agent, boxes)) = queue.pop_front() {
        out.push((agent, boxes));
        if out.len() >= cap {
            break;
        }
        if boxes & !level.targets == 0 {
            continue; // terminal: no outgoing moves
        }
        for &d in MINIBOX_ACTIONS.iter() {
            let w = level.width as i8;
            let h = level.height as i8;
            let r = (agent as i8) / w + d.0;
            let c = (agent as i8) % w + d.1;
            if r < 0 || r >= h || c < 0 || c >= w {
                continue;
            }
            let dest = (r * w + c) as u8;
            if Level::has(level.walls, dest) {
                continue;
            }
            let nagent = dest;
            let mut nboxes = boxes;
            if Level::has(boxes, dest) {
                let br = (dest as i8) / w + d.0;
                let bc = (dest as i8) % w + d.1;
                if br < 0 || br >= h || bc < 0 || bc >= w {
                    continue;
                }
                let behind = (br * w + bc) as u8;
                if Level::has(level.walls, behind) || Level::has(boxes, behind) {
                    continue;
                }
                nboxes = (boxes & !(1u64 << dest)) | (1u64 << behind);
            }
            if seen.insert(key(nagent, nboxes)) {
                queue.push_back((nagent, nboxes));
            }
        }
    }
    out
}

/// The built-in pool: 50 solvable boards generated by reverse pulls from a
/// fixed seed, deduplicated, optimal plans between 3 and 12 pushes/moves.
pub fn builtin_pool() -> &'static Vec<Level> {
    static POOL: Lazy<Vec<Level>> = Lazy::new(|| {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x7411c3);
        let mut levels = Vec::with_capacity(50);
        let mut seen = std::collections::HashSet::new();
        while levels.len() < 50 {
            let level = generate_level(&cfg, &mut rng);
            if seen.insert(level) {
                levels.push(level);
            }
        }
        levels
    });
    &POOL
}

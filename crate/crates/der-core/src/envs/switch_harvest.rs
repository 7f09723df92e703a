//! SwitchHarvest: a gridworld in which harvesters can only collect crops
//! while the single unlocker stands on a switch.
//!
//! The unlocker earns nothing directly and has a completely different job
//! from the majority role, which makes its transitions rarer and harder to
//! learn from — the situation discriminative replay is meant to help with.
//!
//! Layouts are ASCII grids:
//!
//! ```text
//! #  wall          .  floor        C  crop
//! S  switch        E  exit         H  harvester start
//! U  unlocker start
//! ```
//!
//! Actions per agent: 0 up, 1 down, 2 left, 3 right, 4 stay, 5 act.
//! Moving into a wall, off the grid, or into another agent keeps the agent
//! in place (conflicts resolve in agent-index order). `act` on an exit
//! cell retires the agent and sets its done flag; everything else about
//! `act` is a no-op. Each step, every harvester standing on a live crop
//! harvests it for +1 team reward if and only if an active unlocker is on
//! a switch. The episode ends when every agent has retired, every crop is
//! gone, or the step limit is reached.

use super::{validate_actions, Env, EnvError, EnvSpec, StepResult};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_LAYOUT: &str = "\
#######
#H.C.H#
#.C.C.#
#C.S.C#
#.C.C.#
#U.E.H#
#######";

const EPISODE_LIMIT: usize = 50;
/// Egocentric window is 3x3 cells with four channels per cell
/// (wall, crop, other agent, point of interest), plus the agent's own
/// normalized position and a role flag.
const WINDOW: usize = 3;
const CHANNELS: usize = 4;
const OBS_WIDTH: usize = WINDOW * WINDOW * CHANNELS + 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Harvester,
    Unlocker,
}

#[derive(Debug, Clone)]
pub struct SwitchHarvest {
    spec: EnvSpec,
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    switches: Vec<bool>,
    exits: Vec<bool>,
    /// Crop cell indices in scan order; the state exposes one liveness bit
    /// per entry.
    crop_cells: Vec<usize>,
    starts: Vec<(usize, usize)>,
    roles: Vec<Role>,
    // Episode state.
    positions: Vec<(usize, usize)>,
    done: Vec<bool>,
    crops_live: Vec<bool>,
    t: usize,
    finished: bool,
}

impl SwitchHarvest {
    pub fn new(layout: &str) -> Result<Self, EnvError> {
        let lines: Vec<&str> = layout.lines().collect();
        if lines.is_empty() {
            return Err(EnvError::BadLayout("layout is empty".into()));
        }
        let rows = lines.len();
        let cols = lines[0].chars().count();
        if cols == 0 {
            return Err(EnvError::BadLayout("layout has empty rows".into()));
        }

        let mut walls = vec![false; rows * cols];
        let mut switches = vec![false; rows * cols];
        let mut exits = vec![false; rows * cols];
        let mut crop_cells = Vec::new();
        let mut starts = Vec::new();
        let mut roles = Vec::new();

        for (r, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != cols {
                return Err(EnvError::BadLayout(format!(
                    "row {r} has width {}, expected {cols}",
                    chars.len()
                )));
            }
            for (c, ch) in chars.into_iter().enumerate() {
                let cell = r * cols + c;
                match ch {
                    '#' => walls[cell] = true,
                    '.' => {}
                    'C' => crop_cells.push(cell),
                    'S' => switches[cell] = true,
                    'E' => exits[cell] = true,
                    'H' => {
                        starts.push((r, c));
                        roles.push(Role::Harvester);
                    }
                    'U' => {
                        starts.push((r, c));
                        roles.push(Role::Unlocker);
                    }
                    other => {
                        return Err(EnvError::BadLayout(format!(
                            "unknown cell '{other}' at row {r}, column {c}"
                        )));
                    }
                }
            }
        }
        if starts.is_empty() {
            return Err(EnvError::BadLayout("layout has no agents".into()));
        }

        let n_agents = starts.len();
        let n_harvesters = roles.iter().filter(|r| **r == Role::Harvester).count();
        let state_width = 2 * n_agents + n_agents + crop_cells.len() + 1 + 1;
        let spec = EnvSpec {
            n_agents,
            n_actions: 6,
            obs_width: OBS_WIDTH,
            state_width,
            episode_limit: EPISODE_LIMIT,
            reward_min: 0.0,
            reward_max: n_harvesters as f64,
        };
        Ok(Self {
            spec,
            rows,
            cols,
            walls,
            switches,
            exits,
            crops_live: vec![true; crop_cells.len()],
            crop_cells,
            positions: starts.clone(),
            starts,
            done: vec![false; n_agents],
            roles,
            t: 0,
            finished: true,
        })
    }

    fn cell(&self, pos: (usize, usize)) -> usize {
        pos.0 * self.cols + pos.1
    }

    fn crop_alive_at(&self, cell: usize) -> bool {
        self.crop_cells
            .iter()
            .zip(&self.crops_live)
            .any(|(&c, &live)| c == cell && live)
    }

    fn occupied(&self, pos: (usize, usize), except: usize) -> bool {
        self.positions
            .iter()
            .enumerate()
            .any(|(i, &p)| i != except && !self.done[i] && p == pos)
    }

    fn unlocked(&self) -> bool {
        self.positions.iter().enumerate().any(|(i, &p)| {
            self.roles[i] == Role::Unlocker && !self.done[i] && self.switches[self.cell(p)]
        })
    }

    /// Whether harvesting is currently enabled (an active unlocker stands
    /// on a switch).
    pub fn is_unlocked(&self) -> bool {
        self.unlocked()
    }

    /// ASCII snapshot of the current episode state. Agents draw over
    /// terrain (`H`/`U`, lowercase once retired); harvested crops revert
    /// to floor.
    pub fn render(&self) -> String {
        let mut grid: Vec<Vec<char>> = (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| {
                        let cell = r * self.cols + c;
                        if self.walls[cell] {
                            '#'
                        } else if self.crop_alive_at(cell) {
                            'C'
                        } else if self.switches[cell] {
                            'S'
                        } else if self.exits[cell] {
                            'E'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        for (i, &(r, c)) in self.positions.iter().enumerate() {
            let mark = match (self.roles[i], self.done[i]) {
                (Role::Harvester, false) => 'H',
                (Role::Harvester, true) => 'h',
                (Role::Unlocker, false) => 'U',
                (Role::Unlocker, true) => 'u',
            };
            grid[r][c] = mark;
        }
        grid.into_iter()
            .map(|row| row.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn observation(&self, agent: usize) -> Vec<f64> {
        if self.done[agent] {
            return vec![0.0; OBS_WIDTH];
        }
        let (ar, ac) = self.positions[agent];
        let mut obs = Vec::with_capacity(OBS_WIDTH);
        let half = (WINDOW / 2) as isize;
        for dr in -half..=half {
            for dc in -half..=half {
                let (r, c) = (ar as isize + dr, ac as isize + dc);
                let inside = r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols;
                if !inside {
                    // Off-grid reads as wall.
                    obs.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]);
                    continue;
                }
                let pos = (r as usize, c as usize);
                let cell = self.cell(pos);
                let wall = self.walls[cell];
                let crop = self.crop_alive_at(cell);
                let other = self.occupied(pos, agent);
                let poi = if self.switches[cell] {
                    1.0
                } else if self.exits[cell] {
                    -1.0
                } else {
                    0.0
                };
                obs.push(wall as u8 as f64);
                obs.push(crop as u8 as f64);
                obs.push(other as u8 as f64);
                obs.push(poi);
            }
        }
        obs.push(ar as f64 / (self.rows - 1) as f64);
        obs.push(ac as f64 / (self.cols - 1) as f64);
        obs.push((self.roles[agent] == Role::Unlocker) as u8 as f64);
        obs
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.spec.n_agents).map(|i| self.observation(i)).collect()
    }

    fn state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.spec.state_width);
        for (i, &(r, c)) in self.positions.iter().enumerate() {
            if self.done[i] {
                s.extend_from_slice(&[-1.0, -1.0]);
            } else {
                s.push(r as f64 / (self.rows - 1) as f64);
                s.push(c as f64 / (self.cols - 1) as f64);
            }
        }
        for &d in &self.done {
            s.push(d as u8 as f64);
        }
        for &live in &self.crops_live {
            s.push(live as u8 as f64);
        }
        s.push(self.unlocked() as u8 as f64);
        s.push(self.t as f64 / EPISODE_LIMIT as f64);
        s
    }
}

impl Env for SwitchHarvest {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>) {
        self.positions = self.starts.clone();
        self.done = vec![false; self.spec.n_agents];
        self.crops_live = vec![true; self.crop_cells.len()];
        self.t = 0;
        self.finished = false;
        (self.state(), self.observations())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        validate_actions(&self.spec, actions)?;

        for i in 0..self.spec.n_agents {
            if self.done[i] {
                continue;
            }
            let (r, c) = self.positions[i];
            match actions[i] {
                0..=3 => {
                    let target = match actions[i] {
                        0 => (r.wrapping_sub(1), c),
                        1 => (r + 1, c),
                        2 => (r, c.wrapping_sub(1)),
                        _ => (r, c + 1),
                    };
                    let inside = target.0 < self.rows && target.1 < self.cols;
                    if inside && !self.walls[self.cell(target)] && !self.occupied(target, i) {
                        self.positions[i] = target;
                    }
                }
                4 => {}
                _ => {
                    // act: retire on an exit cell, otherwise nothing.
                    if self.exits[self.cell((r, c))] {
                        self.done[i] = true;
                    }
                }
            }
        }

        let mut reward = 0.0;
        if self.unlocked() {
            for i in 0..self.spec.n_agents {
                if self.done[i] || self.roles[i] != Role::Harvester {
                    continue;
                }
                let cell = self.cell(self.positions[i]);
                for (k, &crop_cell) in self.crop_cells.iter().enumerate() {
                    if crop_cell == cell && self.crops_live[k] {
                        self.crops_live[k] = false;
                        reward += 1.0;
                    }
                }
            }
        }

        self.t += 1;
        let all_done = self.done.iter().all(|&d| d);
        let crops_gone = !self.crop_cells.is_empty() && !self.crops_live.iter().any(|&l| l);
        let team_done = all_done || crops_gone || self.t >= EPISODE_LIMIT;
        self.finished = team_done;

        Ok(StepResult {
            reward,
            state: self.state(),
            obs: self.observations(),
            done: self.done.clone(),
            team_done,
        })
    }

    fn fork(&self) -> Box<dyn Env> {
        let mut copy = self.clone();
        copy.finished = true;
        Box::new(copy)
    }
}

//! Level layout and the ASCII level format.
//!
//! A level file is a rectangular grid, one row per line:
//!
//! ```text
//! #max_timesteps=200
//! #monster_policy=static
//! WWWWW
//! WA.DW
//! WWWWW
//! ```
//!
//! `W` wall, `.` floor, `A` avatar (facing up), `M` monster, `T` treasure,
//! `D` door. Header lines of the form `#key=value` may precede the grid.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid level: {0}")]
    Invalid(String),
}

/// Grid coordinate; `x` is the column, `y` the row (growing downwards).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dir: Direction) -> Cell {
        let (dx, dy) = dir.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum MonsterPolicy {
    #[default]
    Static,
    RandomWalk,
}

impl MonsterPolicy {
    fn as_str(self) -> &'static str {
        match self {
            MonsterPolicy::Static => "static",
            MonsterPolicy::RandomWalk => "random_walk",
        }
    }
}

pub const DEFAULT_MAX_TIMESTEPS: u32 = 200;

/// Immutable level layout plus the rules that parameterize an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` entries.
    pub tiles: Vec<Tile>,
    pub avatar_start: Cell,
    pub avatar_facing: Direction,
    pub monsters: Vec<Cell>,
    pub treasures: Vec<Cell>,
    pub doors: Vec<Cell>,
    pub max_timesteps: u32,
    /// Reward units subtracted on every step.
    pub step_penalty: f64,
    pub monster_policy: MonsterPolicy,
    pub avatar_hp: i32,
    pub monster_damage: i32,
}

impl LevelSpec {
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    /// Out-of-bounds cells read as walls.
    pub fn tile(&self, cell: Cell) -> Tile {
        if self.in_bounds(cell) {
            self.tiles[cell.y as usize * self.width + cell.x as usize]
        } else {
            Tile::Wall
        }
    }

    pub fn is_floor(&self, cell: Cell) -> bool {
        self.tile(cell) == Tile::Floor
    }

    pub fn is_door(&self, cell: Cell) -> bool {
        self.doors.contains(&cell)
    }

    pub fn is_deterministic(&self) -> bool {
        self.monster_policy == MonsterPolicy::Static
    }

    pub fn validate(&self) -> Result<(), LevelError> {
        if self.width == 0 || self.height == 0 {
            return Err(LevelError::Invalid("level has no cells".into()));
        }
        if self.tiles.len() != self.width * self.height {
            return Err(LevelError::Invalid(format!(
                "expected {} tiles, found {}",
                self.width * self.height,
                self.tiles.len()
            )));
        }
        if self.doors.is_empty() {
            return Err(LevelError::Invalid("level has no door".into()));
        }
        if self.max_timesteps == 0 {
            return Err(LevelError::Invalid("max_timesteps must be positive".into()));
        }
        if !(self.step_penalty >= 0.0 && self.step_penalty.is_finite()) {
            return Err(LevelError::Invalid("step_penalty must be finite and >= 0".into()));
        }
        if self.avatar_hp <= 0 {
            return Err(LevelError::Invalid("avatar_hp must be positive".into()));
        }
        if self.monster_damage < 0 {
            return Err(LevelError::Invalid("monster_damage must be >= 0".into()));
        }
        let mut seen = HashSet::new();
        let entities = std::iter::once(("avatar", self.avatar_start))
            .chain(self.monsters.iter().map(|&c| ("monster", c)))
            .chain(self.treasures.iter().map(|&c| ("treasure", c)))
            .chain(self.doors.iter().map(|&c| ("door", c)));
        for (kind, cell) in entities {
            if !self.is_floor(cell) {
                return Err(LevelError::Invalid(format!("{kind} at {cell} is not on a floor cell")));
            }
            if !seen.insert(cell) {
                return Err(LevelError::Invalid(format!("{kind} at {cell} overlaps another entity")));
            }
        }
        Ok(())
    }

    /// Canonical text form: every header key followed by the grid.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#max_timesteps={}", self.max_timesteps);
        let _ = writeln!(out, "#step_penalty={}", self.step_penalty);
        let _ = writeln!(out, "#avatar_hp={}", self.avatar_hp);
        let _ = writeln!(out, "#monster_policy={}", self.monster_policy.as_str());
        let _ = writeln!(out, "#monster_damage={}", self.monster_damage);
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                let ch = if c == self.avatar_start {
                    'A'
                } else if self.monsters.contains(&c) {
                    'M'
                } else if self.treasures.contains(&c) {
                    'T'
                } else if self.doors.contains(&c) {
                    'D'
                } else if self.is_floor(c) {
                    '.'
                } else {
                    'W'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

impl FromStr for LevelSpec {
    type Err = LevelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        load_level(text)
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> LevelError {
    LevelError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses and validates a level file.
pub fn load_level(text: &str) -> Result<LevelSpec, LevelError> {
    let mut max_timesteps = DEFAULT_MAX_TIMESTEPS;
    let mut step_penalty = 0.0;
    let mut avatar_hp = 1;
    let mut monster_policy = MonsterPolicy::Static;
    let mut monster_damage = 1;

    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        if let Some(header) = raw.strip_prefix('#') {
            if !rows.is_empty() {
                return Err(parse_err(line_no, 1, "header line after grid rows"));
            }
            let (key, value) = header
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, 2, "header must be #key=value"))?;
            let value_col = key.len() + 3;
            let bad = |what: &str| parse_err(line_no, value_col, format!("invalid {what}: {value:?}"));
            match key.trim() {
                "max_timesteps" => max_timesteps = value.trim().parse().map_err(|_| bad("max_timesteps"))?,
                "step_penalty" => step_penalty = value.trim().parse().map_err(|_| bad("step_penalty"))?,
                "avatar_hp" => avatar_hp = value.trim().parse().map_err(|_| bad("avatar_hp"))?,
                "monster_damage" => monster_damage = value.trim().parse().map_err(|_| bad("monster_damage"))?,
                "monster_policy" => {
                    monster_policy = match value.trim() {
                        "static" | "Static" => MonsterPolicy::Static,
                        "random_walk" | "RandomWalk" => MonsterPolicy::RandomWalk,
                        _ => return Err(bad("monster_policy")),
                    }
                }
                other => return Err(parse_err(line_no, 2, format!("unknown header key {other:?}"))),
            }
            continue;
        }
        if raw.is_empty() {
            continue;
        }
        rows.push((line_no, raw));
    }
    // Blank lines are only tolerated at the end of the file.
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        if last.0 - first.0 + 1 != rows.len() {
            let gap = rows.windows(2).find(|w| w[1].0 != w[0].0 + 1).map(|w| w[0].0 + 1).unwrap_or(0);
            return Err(parse_err(gap, 1, "blank line inside grid"));
        }
    }
    let (first_line, first_row) = *rows.first().ok_or_else(|| LevelError::Invalid("empty grid".into()))?;
    let width = first_row.chars().count();
    let height = rows.len();

    let mut tiles = Vec::with_capacity(width * height);
    let mut avatar = None;
    let mut monsters = Vec::new();
    let mut treasures = Vec::new();
    let mut doors = Vec::new();
    for (y, &(line_no, row)) in rows.iter().enumerate() {
        let len = row.chars().count();
        if len != width {
            return Err(parse_err(
                line_no,
                len.min(width) + 1,
                format!("row has {len} cells, expected {width} (first row is line {first_line})"),
            ));
        }
        for (x, ch) in row.chars().enumerate() {
            let cell = Cell::new(x as i32, y as i32);
            let tile = match ch {
                'W' => Tile::Wall,
                '.' => Tile::Floor,
                'A' => {
                    if avatar.replace(cell).is_some() {
                        return Err(parse_err(line_no, x + 1, "second avatar"));
                    }
                    Tile::Floor
                }
                'M' => {
                    monsters.push(cell);
                    Tile::Floor
                }
                'T' => {
                    treasures.push(cell);
                    Tile::Floor
                }
                'D' => {
                    doors.push(cell);
                    Tile::Floor
                }
                other => return Err(parse_err(line_no, x + 1, format!("unexpected character {other:?}"))),
            };
            tiles.push(tile);
        }
    }
    let avatar_start = avatar.ok_or_else(|| LevelError::Invalid("level has no avatar".into()))?;
    let level = LevelSpec {
        width,
        height,
        tiles,
        avatar_start,
        avatar_facing: Direction::Up,
        monsters,
        treasures,
        doors,
        max_timesteps,
        step_penalty,
        monster_policy,
        avatar_hp,
        monster_damage,
    };
    level.validate()?;
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_grid() {
        let level = load_level("WWW\nWAD\nWWW\n").unwrap();
        assert_eq!((level.width, level.height), (3, 3));
        assert_eq!(level.doors, vec![Cell::new(2, 1)]);
        assert_eq!(level.avatar_start, Cell::new(1, 1));
        assert_eq!(level.avatar_facing, Direction::Up);
        assert_eq!(level.avatar_start.manhattan(level.doors[0]), 1);
        assert_eq!(level.max_timesteps, DEFAULT_MAX_TIMESTEPS);
    }

    #[test]
    fn no_door_is_rejected() {
        let err = load_level("WWW\nWA.\nWWW\n").unwrap_err();
        assert!(matches!(err, LevelError::Invalid(ref m) if m.contains("door")), "{err}");
    }

    #[test]
    fn missing_avatar_is_rejected() {
        assert!(matches!(load_level("WWW\nW.D\nWWW"), Err(LevelError::Invalid(_))));
    }

    #[test]
    fn jagged_rows_report_position() {
        let err = load_level("WWWW\nWAD\nWWWW\n").unwrap_err();
        assert_eq!(
            err,
            LevelError::Parse {
                line: 2,
                column: 4,
                message: "row has 3 cells, expected 4 (first row is line 1)".into()
            }
        );
    }

    #[test]
    fn bad_character_reports_position() {
        let err = load_level("#avatar_hp=3\nWWW\nWAX\nWWW").unwrap_err();
        assert!(matches!(err, LevelError::Parse { line: 3, column: 3, .. }), "{err}");
    }

    #[test]
    fn headers_are_applied() {
        let text = "#max_timesteps=50\n#step_penalty=0.001\n#avatar_hp=4\n#monster_policy=random_walk\n#monster_damage=2\nWWWW\nWAMD\nWWWW\n";
        let level = load_level(text).unwrap();
        assert_eq!(level.max_timesteps, 50);
        assert_eq!(level.step_penalty, 0.001);
        assert_eq!(level.avatar_hp, 4);
        assert_eq!(level.monster_damage, 2);
        assert_eq!(level.monster_policy, MonsterPolicy::RandomWalk);
        assert!(!level.is_deterministic());
    }

    #[test]
    fn unknown_header_is_an_error() {
        assert!(matches!(load_level("#speed=3\nWAD"), Err(LevelError::Parse { line: 1, .. })));
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "#avatar_hp=2\nWWWWW\nWAMTW\nW..DW\nWWWWW\n";
        let level = load_level(text).unwrap();
        let again = load_level(&level.to_text()).unwrap();
        assert_eq!(level, again);
        assert_eq!(level.content_hash(), again.content_hash());
    }
}

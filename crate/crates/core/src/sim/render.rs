use serde::{Deserialize, Serialize};

use super::level::{Cell, Direction, LevelSpec, Tile};
use super::state::GameState;

/// Number of gray levels in an observation (3-bit).
pub const GRAY_LEVELS: u8 = 8;

pub const GRAY_WALL: u8 = 0;
pub const GRAY_FLOOR: u8 = 1;
pub const GRAY_DOOR: u8 = 2;
pub const GRAY_TREASURE: u8 = 3;
pub const GRAY_MONSTER: u8 = 4;
pub const GRAY_AVATAR: u8 = 6;
pub const GRAY_AVATAR_FACING: u8 = 7;

pub const DEFAULT_BLOCK: usize = 3;

/// A 3-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Observation {
    /// Panics if the pixel count does not match or any value exceeds 7.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        assert!(pixels.iter().all(|&p| p < GRAY_LEVELS), "pixel value out of 3-bit range");
        Self { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel values scaled to `[0, 1]`.
    pub fn to_unit_floats(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / (GRAY_LEVELS - 1) as f64).collect()
    }

    /// Area-averaging resize followed by rounding back to 3 bits.
    pub fn resize(&self, width: usize, height: usize) -> Observation {
        assert!(width > 0 && height > 0);
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for oy in 0..height {
            let (y0, y1) = (oy as f64 * sy, (oy + 1) as f64 * sy);
            for ox in 0..width {
                let (x0, x1) = (ox as f64 * sx, (ox + 1) as f64 * sx);
                let mut acc = 0.0;
                let mut area = 0.0;
                for iy in y0.floor() as usize..(y1.ceil() as usize).min(self.height) {
                    let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                    for ix in x0.floor() as usize..(x1.ceil() as usize).min(self.width) {
                        let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                        acc += wx * wy * self.get(ix, iy) as f64;
                        area += wx * wy;
                    }
                }
                let v = (acc / area).round().clamp(0.0, (GRAY_LEVELS - 1) as f64);
                out.push(v as u8);
            }
        }
        Observation::new(width, height, out)
    }

    /// Run-length encoding as `value*count` pairs, comma separated.
    pub fn to_rle(&self) -> String {
        let mut parts = Vec::new();
        let mut iter = self.pixels.iter().peekable();
        while let Some(&v) = iter.next() {
            let mut n = 1;
            while iter.peek() == Some(&&v) {
                iter.next();
                n += 1;
            }
            parts.push(format!("{v}*{n}"));
        }
        format!("{}x{}:{}", self.width, self.height, parts.join(","))
    }

    pub fn from_rle(text: &str) -> Option<Observation> {
        let (dims, body) = text.split_once(':')?;
        let (w, h) = dims.split_once('x')?;
        let (width, height): (usize, usize) = (w.parse().ok()?, h.parse().ok()?);
        let mut pixels = Vec::with_capacity(width * height);
        for part in body.split(',').filter(|p| !p.is_empty()) {
            let (v, n) = part.split_once('*')?;
            let v: u8 = v.parse().ok()?;
            let n: usize = n.parse().ok()?;
            if v >= GRAY_LEVELS {
                return None;
            }
            pixels.extend(std::iter::repeat_n(v, n));
        }
        (pixels.len() == width * height).then(|| Observation::new(width, height, pixels))
    }
}

fn facing_pixel(dir: Direction, block: usize) -> (usize, usize) {
    let mid = block / 2;
    match dir {
        Direction::Up => (mid, 0),
        Direction::Down => (mid, block - 1),
        Direction::Left => (0, mid),
        Direction::Right => (block - 1, mid),
    }
}

/// Renders one `block x block` pixel square per tile.
///
/// The avatar square carries a brighter marker pixel on its facing edge
/// when `block >= 2`.
pub fn render(level: &LevelSpec, state: &GameState, block: usize) -> Observation {
    assert!(block >= 1, "block size must be positive");
    let (w, h) = (level.width * block, level.height * block);
    let mut pixels = vec![GRAY_WALL; w * h];
    let fill = |cell: Cell, value: u8, pixels: &mut Vec<u8>| {
        let (cx, cy) = (cell.x as usize * block, cell.y as usize * block);
        for dy in 0..block {
            let row = (cy + dy) * w;
            pixels[row + cx..row + cx + block].fill(value);
        }
    };
    for y in 0..level.height as i32 {
        for x in 0..level.width as i32 {
            let c = Cell::new(x, y);
            if level.tile(c) == Tile::Floor {
                fill(c, GRAY_FLOOR, &mut pixels);
            }
        }
    }
    for &door in &level.doors {
        fill(door, GRAY_DOOR, &mut pixels);
    }
    for &t in &state.remaining_treasures {
        fill(t, GRAY_TREASURE, &mut pixels);
    }
    for &m in &state.alive_monsters {
        fill(m, GRAY_MONSTER, &mut pixels);
    }
    fill(state.avatar_pos, GRAY_AVATAR, &mut pixels);
    if block >= 2 {
        let (fx, fy) = facing_pixel(state.avatar_facing, block);
        let (cx, cy) = (state.avatar_pos.x as usize * block, state.avatar_pos.y as usize * block);
        pixels[(cy + fy) * w + cx + fx] = GRAY_AVATAR_FACING;
    }
    Observation::new(w, h, pixels)
}

use std::collections::BTreeMap;

use crate::sim::{Cell, LevelSpec};
use crate::trajectory::Trajectory;

use super::HarnessError;

const TILE_PX: usize = 12;
const MAX_PATHS: usize = 35;

const PATH_COLORS: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct PathOverlay {
    pub ascii: String,
    /// Binary (P6) portable pixmap.
    pub ppm: Vec<u8>,
}

/// `1`..`9` for the first nine paths, then `a`..`z`.
pub fn path_label(index: usize) -> Option<char> {
    match index {
        0..=8 => char::from_digit(index as u32 + 1, 10),
        9..=34 => Some((b'a' + (index - 9) as u8) as char),
        _ => None,
    }
}

/// Labels of the paths entering each cell (start cell excluded), in path order.
pub fn cell_labels(level: &LevelSpec, paths: &[Trajectory]) -> Result<BTreeMap<Cell, Vec<char>>, HarnessError> {
    if paths.len() > MAX_PATHS {
        return Err(HarnessError::InvalidArgument(format!(
            "at most {MAX_PATHS} paths can be labelled, got {}",
            paths.len()
        )));
    }
    let mut labels: BTreeMap<Cell, Vec<char>> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        if let Some(&cell) = p.cells().iter().find(|c| !level.in_bounds(**c)) {
            return Err(HarnessError::OutOfBounds { path: i, cell });
        }
        let label = path_label(i).expect("index checked above");
        for cell in p.visited_cells() {
            labels.entry(cell).or_default().push(label);
        }
    }
    Ok(labels)
}

fn base_char(level: &LevelSpec, c: Cell) -> char {
    if c == level.avatar_start {
        'A'
    } else if level.monsters.contains(&c) {
        'M'
    } else if level.treasures.contains(&c) {
        'T'
    } else if level.doors.contains(&c) {
        'D'
    } else if level.is_floor(c) {
        '.'
    } else {
        'W'
    }
}

fn ascii(level: &LevelSpec, labels: &BTreeMap<Cell, Vec<char>>) -> String {
    let width = labels.values().map(Vec::len).max().unwrap_or(1).max(1);
    let sep = if width > 1 { " " } else { "" };
    let mut out = String::new();
    for y in 0..level.height as i32 {
        let row: Vec<String> = (0..level.width as i32)
            .map(|x| {
                let c = Cell::new(x, y);
                let text: String = match labels.get(&c) {
                    Some(l) => l.iter().collect(),
                    None => base_char(level, c).to_string(),
                };
                format!("{text:<width$}")
            })
            .collect();
        out.push_str(row.join(sep).trim_end());
        out.push('\n');
    }
    out
}

fn tile_color(level: &LevelSpec, c: Cell) -> [u8; 3] {
    match base_char(level, c) {
        'W' => [40, 40, 40],
        'D' => [139, 90, 43],
        'M' => [200, 30, 30],
        'T' => [255, 215, 0],
        'A' => [30, 60, 220],
        _ => [225, 225, 225],
    }
}

fn ppm(level: &LevelSpec, labels: &BTreeMap<Cell, Vec<char>>) -> Vec<u8> {
    let (w, h) = (level.width * TILE_PX, level.height * TILE_PX);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let label_index = |ch: char| -> usize {
        ch.to_digit(10)
            .map(|d| d as usize - 1)
            .unwrap_or_else(|| (ch as u8 - b'a') as usize + 9)
    };
    for py in 0..h {
        for px in 0..w {
            let c = Cell::new((px / TILE_PX) as i32, (py / TILE_PX) as i32);
            let (ix, iy) = (px % TILE_PX, py % TILE_PX);
            let border = ix == 0 || iy == 0 || ix == TILE_PX - 1 || iy == TILE_PX - 1;
            let inner = (3..TILE_PX - 3).contains(&ix) && (3..TILE_PX - 3).contains(&iy);
            let mut rgb = tile_color(level, c);
            if let Some(l) = labels.get(&c) {
                // one vertical stripe per path crossing the cell, tile colour kept in the centre
                if !inner || base_char(level, c) == '.' {
                    let stripe = ix * l.len() / TILE_PX;
                    rgb = PATH_COLORS[label_index(l[stripe]) % PATH_COLORS.len()];
                }
            }
            if border {
                rgb = rgb.map(|v| v / 2);
            }
            out.extend_from_slice(&rgb);
        }
    }
    out
}

pub fn render_ascii(level: &LevelSpec, paths: &[Trajectory]) -> Result<String, HarnessError> {
    Ok(ascii(level, &cell_labels(level, paths)?))
}

pub fn render_ppm(level: &LevelSpec, paths: &[Trajectory]) -> Result<Vec<u8>, HarnessError> {
    Ok(ppm(level, &cell_labels(level, paths)?))
}

pub fn render_paths(level: &LevelSpec, paths: &[Trajectory]) -> Result<PathOverlay, HarnessError> {
    let labels = cell_labels(level, paths)?;
    Ok(PathOverlay {
        ascii: ascii(level, &labels),
        ppm: ppm(level, &labels),
    })
}

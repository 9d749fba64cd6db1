//! Built-in levels used by the experiments, tests and the CLI.

use super::level::{load_level, LevelSpec};

/// 20x14 dungeon with five doors, six static monsters and eight treasures.
/// The avatar starts in a corridor; the two upper doors are the nearest, both
/// fifteen steps away, and the wall band on row 8 makes the lower doors farther.
pub const DUNGEON_20X14: &str = "\
#max_timesteps=200
WWWWWWWWWWWWWWWWWWWW
WD...............D.W
W.......W.W........W
W..T..M.W.W.M..T...W
W.......W.W........W
W.M.....W.W.....M..W
W.......W.W........W
W...T....A.....T...W
WWW.WWWWWWWWWWWW.WWW
W..................W
W...T..M.....M..T..W
W........T.........W
WD.......D....T...DW
WWWWWWWWWWWWWWWWWWWW
";

/// Straight corridor: turn right, then four moves to the door.
pub const CORRIDOR: &str = "\
WWWWWWW
WA...DW
WWWWWWW
";

/// Smallest valid level: the door is adjacent to the avatar.
pub const TINY: &str = "\
WWW
WAD
WWW
";

/// Doors at both ends of a corridor, avatar in the middle.
pub const TWO_DOORS: &str = "\
WWWWWWWWW
WD..A..DW
WWWWWWWWW
";

/// Walled ring: the door below can be reached clockwise or anticlockwise.
pub const RING: &str = "\
WWWWWWW
W..A..W
W.WWW.W
W.WWW.W
W..D..W
WWWWWWW
";

/// One door up, one door down, separated corridors.
pub const FORK: &str = "\
WWWWW
WW.DW
WW.WW
WDA.W
WWWWW
";

pub const BUILTIN_NAMES: [&str; 6] = ["dungeon", "corridor", "tiny", "two-doors", "ring", "fork"];

pub fn builtin_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "dungeon" => DUNGEON_20X14,
        "corridor" => CORRIDOR,
        "tiny" => TINY,
        "two-doors" => TWO_DOORS,
        "ring" => RING,
        "fork" => FORK,
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Option<LevelSpec> {
    builtin_text(name).map(|t| load_level(t).expect("built-in level is valid"))
}

pub fn dungeon() -> LevelSpec {
    builtin("dungeon").unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::level::Cell;

    #[test]
    fn all_builtins_parse() {
        for name in BUILTIN_NAMES {
            assert!(builtin(name).is_some(), "{name}");
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn dungeon_layout() {
        let level = dungeon();
        assert_eq!((level.width, level.height), (20, 14));
        assert_eq!(level.doors.len(), 5);
        assert_eq!(level.monsters.len(), 6);
        assert_eq!(level.treasures.len(), 8);
        assert_eq!(level.max_timesteps, 200);
        assert_eq!(level.avatar_start, Cell::new(9, 7));
        let upper = |c: &&Cell| c.y < 8;
        assert_eq!(level.monsters.iter().filter(upper).count(), 4);
        assert_eq!(level.treasures.iter().filter(upper).count(), 4);
    }
}

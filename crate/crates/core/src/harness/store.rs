//! Line-oriented trajectory files.
//!
//! ```text
//! playtest-trajectories 1
//! trajectory
//! level <hash> <name>
//! persona <name>
//! seed <u64>
//! start <x> <y>
//! termination <cause>
//! completed <bool>
//! goal <t> <cursor> <coactive>        one per goal-trace mark
//! step <action> <events> <reward> <x> <y>
//! obs <rle>                           optional, one per frame
//! end
//! checksum <sha256 of every line above>
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::sim::{Action, Cell, EventSet, GameEvent, Observation, TerminationCause};
use crate::trajectory::{GoalMark, StepRecord, Trajectory};

use super::HarnessError;

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "playtest-trajectories";

fn termination_name(t: TerminationCause) -> &'static str {
    match t {
        TerminationCause::None => "None",
        TerminationCause::ExitDoor => "ExitDoor",
        TerminationCause::Death => "Death",
        TerminationCause::Timeout => "Timeout",
    }
}

fn parse_termination(s: &str) -> Option<TerminationCause> {
    Some(match s {
        "None" => TerminationCause::None,
        "ExitDoor" => TerminationCause::ExitDoor,
        "Death" => TerminationCause::Death,
        "Timeout" => TerminationCause::Timeout,
        _ => return None,
    })
}

fn parse_events(s: &str) -> Option<EventSet> {
    if s == "-" {
        return Some(EventSet::empty());
    }
    s.split(',').map(GameEvent::from_name).collect()
}

/// Serializes trajectories; rewards use the shortest round-tripping decimal.
pub fn trajectories_to_string(trajs: &[Trajectory]) -> String {
    let mut body = format!("{MAGIC} {TRAJECTORY_FORMAT_VERSION}\n");
    for t in trajs {
        body.push_str("trajectory\n");
        body.push_str(&format!("level {} {}\n", t.level_hash, t.level_name));
        body.push_str(&format!("persona {}\n", t.persona));
        body.push_str(&format!("seed {}\n", t.seed));
        body.push_str(&format!("start {} {}\n", t.start.x, t.start.y));
        body.push_str(&format!("termination {}\n", termination_name(t.termination)));
        body.push_str(&format!("completed {}\n", t.persona_completed));
        for g in &t.goal_trace {
            body.push_str(&format!("goal {} {} {}\n", g.t, g.cursor, g.coactive));
        }
        for s in &t.steps {
            body.push_str(&format!(
                "step {} {} {} {} {}\n",
                s.action.name(),
                s.events,
                s.env_reward,
                s.cell.x,
                s.cell.y
            ));
        }
        for o in t.observations.iter().flatten() {
            body.push_str(&format!("obs {}\n", o.to_rle()));
        }
        body.push_str("end\n");
    }
    let sum = hex::encode(Sha256::digest(body.as_bytes()));
    body.push_str(&format!("checksum {sum}\n"));
    body
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), HarnessError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| HarnessError::Parse {
                line: 0,
                message: "unexpected end of file".into(),
            })
    }

    /// Value of a `key value` line.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), HarnessError> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v)),
            _ if line == key => Ok((n, "")),
            _ => Err(parse_err(n, format!("expected `{key}`"))),
        }
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        self.lines.peek().map(|(_, l)| l.split(' ').next().unwrap_or(""))
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, HarnessError> {
    s.parse().map_err(|_| parse_err(line, format!("bad {what} `{s}`")))
}

pub fn trajectories_from_str(text: &str) -> Result<Vec<Trajectory>, HarnessError> {
    let header = text.lines().next().unwrap_or("");
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| parse_err(1, "not a trajectory file"))?;
    let version: u32 = num(version, 1, "version")?;
    if version != TRAJECTORY_FORMAT_VERSION {
        return Err(HarnessError::Version {
            found: version,
            expected: TRAJECTORY_FORMAT_VERSION,
        });
    }
    let body_end = text.rfind("checksum ").ok_or(HarnessError::Checksum)?;
    let (body, tail) = text.split_at(body_end);
    let recorded = tail.trim_start_matches("checksum ").trim();
    if hex::encode(Sha256::digest(body.as_bytes())) != recorded {
        return Err(HarnessError::Checksum);
    }

    let mut p = Parser {
        lines: body.lines().enumerate().peekable(),
    };
    p.next()?;
    let mut out = Vec::new();
    while p.peek_key().is_some() {
        p.field("trajectory")?;
        let (n, level) = p.field("level")?;
        let (hash, name) = level.split_once(' ').unwrap_or((level, ""));
        if hash.is_empty() {
            return Err(parse_err(n, "missing level hash"));
        }
        let persona = p.field("persona")?.1.to_string();
        let (n, seed) = p.field("seed")?;
        let seed = num(seed, n, "seed")?;
        let (n, start) = p.field("start")?;
        let (x, y) = start.split_once(' ').ok_or_else(|| parse_err(n, "bad start"))?;
        let start = Cell::new(num(x, n, "x")?, num(y, n, "y")?);
        let (n, term) = p.field("termination")?;
        let termination = parse_termination(term).ok_or_else(|| parse_err(n, format!("bad termination `{term}`")))?;
        let (n, done) = p.field("completed")?;
        let persona_completed = num(done, n, "flag")?;

        let mut goal_trace = Vec::new();
        let mut steps = Vec::new();
        let mut observations = Vec::new();
        loop {
            let (n, line) = p.next()?;
            let mut parts = line.split(' ');
            match parts.next() {
                Some("goal") => {
                    let f: Vec<&str> = parts.collect();
                    if f.len() != 3 {
                        return Err(parse_err(n, "goal needs 3 fields"));
                    }
                    goal_trace.push(GoalMark {
                        t: num(f[0], n, "t")?,
                        cursor: num(f[1], n, "cursor")?,
                        coactive: num(f[2], n, "flag")?,
                    });
                }
                Some("step") => {
                    let f: Vec<&str> = parts.collect();
                    if f.len() != 5 {
                        return Err(parse_err(n, "step needs 5 fields"));
                    }
                    steps.push(StepRecord {
                        action: Action::from_name(f[0]).ok_or_else(|| parse_err(n, format!("bad action `{}`", f[0])))?,
                        events: parse_events(f[1]).ok_or_else(|| parse_err(n, format!("bad events `{}`", f[1])))?,
                        env_reward: num(f[2], n, "reward")?,
                        cell: Cell::new(num(f[3], n, "x")?, num(f[4], n, "y")?),
                    });
                }
                Some("obs") => {
                    let rle = parts.next().unwrap_or("");
                    observations.push(Observation::from_rle(rle).ok_or_else(|| parse_err(n, "bad observation"))?);
                }
                Some("end") => break,
                _ => return Err(parse_err(n, format!("unexpected line `{line}`"))),
            }
        }
        if !observations.is_empty() && observations.len() != steps.len() + 1 {
            return Err(parse_err(0, "observation count does not match steps"));
        }
        out.push(Trajectory {
            level_name: name.to_string(),
            level_hash: hash.to_string(),
            persona,
            seed,
            start,
            steps,
            goal_trace,
            termination,
            persona_completed,
            observations: (!observations.is_empty()).then_some(observations),
        });
    }
    Ok(out)
}

pub fn save_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<(), HarnessError> {
    crate::io::write_atomic(path, trajectories_to_string(trajs).as_bytes())?;
    Ok(())
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, HarnessError> {
    trajectories_from_str(&std::fs::read_to_string(path)?)
}

//! Trajectory dumps: one step per line, `i, k, y, element|unresolved`.

use lockwalk_core::sampler::{Color, Step, Trajectory, TrajectorySeed};

use crate::error::{CliError, Result};

pub fn write_dump(t: &Trajectory, digest: &str) -> String {
    let mut s = format!("# config-digest: {digest}\n# trajectory-seed: {}\n", t.seed);
    for (i, step) in t.steps.iter().enumerate() {
        let x = step.x.as_ref().map_or_else(|| "unresolved".to_string(), ToString::to_string);
        s.push_str(&format!("{}, {}, {}, {}\n", i + 1, step.k, step.y, x));
    }
    s
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("dump line {line}: {msg}"))
}

pub fn parse_dump(text: &str) -> Result<Trajectory> {
    let mut seed = None;
    let mut steps = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if let Some(rest) = line.strip_prefix("# trajectory-seed: ") {
            let (m, i) = rest.split_once(':').ok_or_else(|| bad(n, "seed is not master:index"))?;
            let master = m.parse().map_err(|e| bad(n, e))?;
            let index = i.parse().map_err(|e| bad(n, e))?;
            seed = Some(TrajectorySeed { master, index });
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ", ");
        let mut field = |name| parts.next().ok_or_else(|| bad(n, format!("missing {name}")));
        let i: usize = field("index")?.parse().map_err(|e| bad(n, e))?;
        let k: u128 = field("level")?.parse().map_err(|e| bad(n, e))?;
        let y: Color = field("colour")?.parse().map_err(|_| bad(n, "colour must be red or blue"))?;
        let x = match field("element")? {
            "unresolved" => None,
            e => Some(e.parse().map_err(|e| bad(n, e))?),
        };
        if i != steps.len() + 1 {
            return Err(bad(n, format!("expected step {}", steps.len() + 1)));
        }
        steps.push(Step { k, y, x });
    }
    let seed = seed.ok_or_else(|| CliError::Config("dump has no trajectory-seed line".into()))?;
    Ok(Trajectory { seed, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lockwalk_core::GroupElement;

    #[test]
    fn dump_round_trip() {
        let t = Trajectory {
            seed: TrajectorySeed { master: 5, index: 17 },
            steps: vec![
                Step { k: 2, y: Color::Blue, x: Some(GroupElement::lamplighter(-1, [0, 3])) },
                Step { k: 1, y: Color::Red, x: Some(GroupElement::identity()) },
                Step { k: 123456789, y: Color::Blue, x: None },
            ],
        };
        let text = write_dump(&t, "abc");
        assert!(text.contains("1, 2, blue, (-1, [0, 3])\n"));
        assert!(text.contains("3, 123456789, blue, unresolved\n"));
        assert_eq!(parse_dump(&text).unwrap(), t);
        assert!(parse_dump("# trajectory-seed: 1:2\n2, 1, red, (0, [])\n").is_err());
    }
}

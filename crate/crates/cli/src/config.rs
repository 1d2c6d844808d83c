//! Flat `key = value` config files. Keys are flag names without the leading
//! dashes; the values are spliced into the argument list right after the
//! subcommand, so flags given on the command line win.

use std::ffi::OsString;
use std::fs;

pub const SUBCOMMANDS: [&str; 8] = ["curves", "sample", "logz", "scan", "h1", "breather", "gauss", "verify"];

/// Switches: `force = true` becomes `--force`, `false` drops it.
const SWITCHES: [&str; 1] = ["force"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| format!("config line {}: expected `key = value`", number + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key `{key}`", number + 1));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn to_flags(pairs: Vec<(String, String)>) -> Result<Vec<OsString>, String> {
    let mut flags = Vec::new();
    for (key, value) in pairs {
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => flags.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => return Err(format!("config key `{key}` expects true or false, got `{other}`")),
            }
        } else {
            flags.push(format!("--{key}").into());
            flags.push(value.into());
        }
    }
    Ok(flags)
}

/// Removes `--config <path>` from `args` and splices in the file's flags.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut out = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            path = Some(iter.next().ok_or("--config needs a path")?.to_string_lossy().into_owned());
        } else if let Some(p) = text.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            out.push(arg);
        }
    }
    let Some(path) = path else { return Ok(out) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let flags = to_flags(parse(&text)?)?;
    let at = out
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or("a config file needs a subcommand on the command line")?;
    out.splice(at + 1..at + 1, flags);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_separators_and_comments() {
        let pairs = parse("# sweep\nbeta = 0.5\n--B 2   # trailing\n\nforce=true\n").unwrap();
        assert_eq!(
            pairs,
            vec![("beta".into(), "0.5".into()), ("B".into(), "2".into()), ("force".into(), "true".into())]
        );
        assert!(parse("justakey\n").is_err());
        assert!(parse("config = other.cfg\n").is_err());
    }

    #[test]
    fn switches() {
        let flags = to_flags(vec![("force".into(), "false".into()), ("seed".into(), "3".into())]).unwrap();
        assert_eq!(flags, vec![OsString::from("--seed"), OsString::from("3")]);
        assert!(to_flags(vec![("force".into(), "maybe".into())]).is_err());
    }
}

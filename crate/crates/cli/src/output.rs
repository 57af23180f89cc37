//! Output files. Every file starts with `# config-digest: <hex>`.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const DIGEST_PREFIX: &str = "# config-digest: ";

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    std::fs::write(path, contents).map_err(CliError::io(path))
}

/// CSV text with the digest line and any extra `# key: value` lines first.
pub fn csv_text(digest: &str, notes: &[(&str, String)], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    let mut s = format!("{DIGEST_PREFIX}{digest}\n");
    for (k, v) in notes {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&body);
    s
}

/// Data rows of a file written by [`csv_text`], header row excluded.
pub fn read_csv(path: &Path) -> Result<(String, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let digest =
        header_digest(&text).ok_or_else(|| CliError::Config(format!("{}: no digest header", path.display())))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((digest, rows))
}

pub fn header_digest(text: &str) -> Option<String> {
    text.lines().next()?.strip_prefix(DIGEST_PREFIX).map(str::to_string)
}

/// Files under `dir` (one level deep plus `trajectories/`) whose digest
/// header differs from `digest`.
pub fn stale_outputs(dir: &Path, digest: &str) -> Result<Vec<PathBuf>> {
    let mut stale = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("trajectories")] {
        let Ok(entries) = std::fs::read_dir(&sub) else { continue };
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if !p.is_file() {
                continue;
            }
            let Ok(text) = std::fs::read_to_string(&p) else { continue };
            if let Some(d) = header_digest(&text) {
                if d != digest {
                    stale.push(p);
                }
            }
        }
    }
    Ok(stale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_elements() {
        let text = csv_text(
            "d",
            &[("unresolved", "3".into())],
            &["level", "element", "count"],
            &[vec!["2".into(), "(0, [0])".into(), "5".into()]],
        );
        assert!(text.starts_with("# config-digest: d\n# unresolved: 3\nlevel,element,count\n"));
        assert!(text.contains("2,\"(0, [0])\",5"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_file(&p, &text).unwrap();
        let (d, rows) = read_csv(&p).unwrap();
        assert_eq!(d, "d");
        assert_eq!(rows, vec![vec!["2".to_string(), "(0, [0])".into(), "5".into()]]);
        assert_eq!(stale_outputs(dir.path(), "d").unwrap(), Vec::<PathBuf>::new());
        assert_eq!(stale_outputs(dir.path(), "e").unwrap(), vec![p]);
    }
}

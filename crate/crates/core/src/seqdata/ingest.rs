use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Supported raw interaction formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// `user<TAB>item<TAB>timestamp[<TAB>cat1|cat2|...]`
    #[default]
    Tsv,
}

/// One raw interaction, still keyed by external ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
    /// Category labels without duplicates, in first-seen order.
    pub categories: Vec<String>,
}

impl Interaction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: i64) -> Self {
        Interaction {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
            categories: Vec::new(),
        }
    }

    pub fn with_categories<I, S>(mut self, cats: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for c in cats {
            let c = c.into();
            if !self.categories.contains(&c) {
                self.categories.push(c);
            }
        }
        self
    }
}

pub fn load_interactions(path: impl AsRef<Path>, format: InputFormat) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        InputFormat::Tsv => parse_tsv(BufReader::new(file)),
    }
    .map_err(|e| match e {
        Error::EmptyInput(_) => Error::EmptyInput(path.display().to_string()),
        other => other,
    })
}

/// Parses TSV interactions from any reader. Blank lines are skipped.
pub fn parse_tsv<R: BufRead>(reader: R) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(line, lineno)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no interactions".into()));
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize) -> Result<Interaction> {
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(err(format!(
            "expected at least 3 tab-separated fields, found {}",
            fields.len()
        )));
    }
    if fields.len() > 4 {
        return Err(err(format!(
            "expected at most 4 fields, found {}",
            fields.len()
        )));
    }
    let user = fields[0].trim();
    let item = fields[1].trim();
    if user.is_empty() || item.is_empty() {
        return Err(err("empty user or item id".into()));
    }
    let timestamp: i64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| err(format!("bad timestamp `{}`", fields[2])))?;
    if timestamp < 0 {
        return Err(err(format!("negative timestamp {timestamp}")));
    }
    let cats = fields
        .get(3)
        .map(|f| {
            f.split('|')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    Ok(Interaction::new(user, item, timestamp).with_categories(cats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn plain_line() {
        let v = parse_tsv(Cursor::new("u1\ti9\t100\n")).unwrap();
        assert_eq!(v, vec![Interaction::new("u1", "i9", 100)]);
    }

    #[test]
    fn categories_split_on_pipe() {
        let v = parse_tsv(Cursor::new("u1\ti9\t100\tComedy|Action|Comedy\n")).unwrap();
        assert_eq!(v[0].categories, vec!["Comedy", "Action"]);
    }

    #[test]
    fn missing_field_names_line() {
        let e = parse_tsv(Cursor::new("u1\ti9\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        let e = parse_tsv(Cursor::new("a\tb\t1\nu1\ti9\tx\n")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_tsv(Cursor::new("")),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_tsv(Cursor::new("\n\n")),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn order_preserved() {
        let v = parse_tsv(Cursor::new("b\tx\t5\na\ty\t1\n")).unwrap();
        assert_eq!(v[0].user_id, "b");
        assert_eq!(v[1].user_id, "a");
    }
}

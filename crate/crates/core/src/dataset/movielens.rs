use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{Interaction, ItemId};

/// On-disk layout of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    Ml100k,
    /// `user::item::rating::timestamp`
    Ml1m,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::Ml100k => "\t",
            Format::Ml1m => "::",
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: rating {rating} outside 1..=5")]
    InvalidRating { line: usize, rating: i64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// Parses a ratings file. Every non-empty line yields exactly one interaction;
/// line numbers in errors are 1-based.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: Format,
) -> Result<Vec<Interaction>, ParseError> {
    let sep = format.separator();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(malformed(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let id = |s: &str, what: &str| -> Result<u64, ParseError> {
            let v: u64 = s
                .trim()
                .parse()
                .map_err(|_| malformed(lineno, format!("bad {what} {s:?}")))?;
            if v == 0 {
                return Err(malformed(lineno, format!("{what} must be nonzero")));
            }
            Ok(v)
        };
        let user_id = id(fields[0], "user id")?;
        let item_id = id(fields[1], "item id")?;
        let rating: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad rating {:?}", fields[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(ParseError::InvalidRating {
                line: lineno,
                rating,
            });
        }
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad timestamp {:?}", fields[3])))?;
        out.push(Interaction {
            user_id,
            item_id,
            rating: rating as u8,
            timestamp,
        });
    }
    Ok(out)
}

/// Writes interactions in the given format, one LF-terminated line each.
pub fn write_interactions<W: Write>(
    mut writer: W,
    interactions: &[Interaction],
    format: Format,
) -> io::Result<()> {
    let sep = format.separator();
    for it in interactions {
        writeln!(
            writer,
            "{}{sep}{}{sep}{}{sep}{}",
            it.user_id, it.item_id, it.rating, it.timestamp
        )?;
    }
    Ok(())
}

// MovieLens item files are Latin-1; fall back to a byte-per-char decode.
fn decode_line(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

/// Reads item titles from `u.item` (pipe-separated, ML100K) or `movies.dat`
/// (`::`-separated, ML1M).
pub fn parse_item_titles<R: BufRead>(
    mut reader: R,
    format: Format,
) -> Result<BTreeMap<ItemId, String>, ParseError> {
    let sep = match format {
        Format::Ml100k => "|",
        Format::Ml1m => "::",
    };
    let mut out = BTreeMap::new();
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lineno += 1;
        let line = decode_line(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(sep);
        let id_field = fields.next().unwrap_or_default();
        let id: ItemId = id_field
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad item id {id_field:?}")))?;
        let title = fields
            .next()
            .ok_or_else(|| malformed(lineno, "missing title"))?
            .trim();
        out.insert(id, title.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_line_of_100k() {
        let raw = "196\t242\t3\t881250949\n186\t302\t3\t891717742\n";
        let v = parse_interactions(raw.as_bytes(), Format::Ml100k).unwrap();
        assert_eq!(v[0], Interaction::new(196, 242, 3, 881250949));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn first_line_of_1m() {
        let v = parse_interactions("1::1193::5::978300760".as_bytes(), Format::Ml1m).unwrap();
        assert_eq!(v, vec![Interaction::new(1, 1193, 5, 978300760)]);
    }

    #[test]
    fn empty_input() {
        assert!(parse_interactions("".as_bytes(), Format::Ml100k)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let raw = "1\t2\t3\t4\n\n1\t2\t3\n";
        match parse_interactions(raw.as_bytes(), Format::Ml100k) {
            Err(ParseError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rating_out_of_range() {
        let raw = "1::2::6::4\n";
        assert!(matches!(
            parse_interactions(raw.as_bytes(), Format::Ml1m),
            Err(ParseError::InvalidRating { line: 1, rating: 6 })
        ));
        let raw = "1\t2\t0\t4\n";
        assert!(matches!(
            parse_interactions(raw.as_bytes(), Format::Ml100k),
            Err(ParseError::InvalidRating { line: 1, rating: 0 })
        ));
    }

    #[test]
    fn zero_id_rejected() {
        assert!(parse_interactions("0\t2\t3\t4\n".as_bytes(), Format::Ml100k).is_err());
    }

    #[test]
    fn titles_from_both_item_formats() {
        let u_item = b"1|Toy Story (1995)|01-Jan-1995||http://x|0|0|0|1|1|1|0\n2|Caf\xe9 (1994)|x\n";
        let t = parse_item_titles(&u_item[..], Format::Ml100k).unwrap();
        assert_eq!(t[&1], "Toy Story (1995)");
        assert_eq!(t[&2], "Caf\u{e9} (1994)");
        let movies = "1::Toy Story (1995)::Animation|Children's|Comedy\n";
        let t = parse_item_titles(movies.as_bytes(), Format::Ml1m).unwrap();
        assert_eq!(t[&1], "Toy Story (1995)");
    }

    fn interaction() -> impl Strategy<Value = Interaction> {
        (1u64..5000, 1u64..5000, 1u8..=5, 0i64..2_000_000_000)
            .prop_map(|(u, i, r, t)| Interaction::new(u, i, r, t))
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_exact(
            rows in proptest::collection::vec(interaction(), 0..50),
            ml1m in any::<bool>(),
        ) {
            let format = if ml1m { Format::Ml1m } else { Format::Ml100k };
            let mut bytes = Vec::new();
            write_interactions(&mut bytes, &rows, format).unwrap();
            let parsed = parse_interactions(&bytes[..], format).unwrap();
            prop_assert_eq!(parsed.len(), bytes.iter().filter(|&&b| b == b'\n').count());
            prop_assert_eq!(&parsed, &rows);
            let mut again = Vec::new();
            write_interactions(&mut again, &parsed, format).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }
}

//! Plain-text snapshots of value tables.
//!
//! ```text
//! wvf-snapshot 1
//! kind wvf
//! scalar f64
//! num_states 104
//! num_actions 5
//! gamma 1
//! rbar_min -1050.3999999999999
//! goals 0 1 2 ...
//! table
//! <one line per (s, g): |A| values>
//! ```
//!
//! `kind q` snapshots omit `gamma`, `rbar_min` and `goals` and hold one line
//! per state. Values are written in the shortest form that parses back to
//! the same bits, so a write/read cycle is exact for every non-NaN value.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, WvfError};
use crate::mdp::StateId;
use crate::scalar::Scalar;
use crate::wvf::{QTable, Wvf};

const MAGIC: &str = "wvf-snapshot 1";

/// Either kind of table a snapshot can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot<T> {
    Wvf(Wvf<T>),
    Q(QTable<T>),
}

fn push_row<T: Scalar>(out: &mut String, row: &[T]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn wvf_to_string<T: Scalar>(wvf: &Wvf<T>) -> String {
    let (ns, na) = (wvf.num_states(), wvf.num_actions());
    let mut out = String::with_capacity(ns * ns * na * 12);
    writeln!(out, "{MAGIC}\nkind wvf\nscalar {}", T::NAME).unwrap();
    writeln!(out, "num_states {ns}\nnum_actions {na}").unwrap();
    writeln!(out, "gamma {}\nrbar_min {}", wvf.gamma(), wvf.rbar_min()).unwrap();
    out.push_str("goals");
    for g in wvf.goals().iter() {
        write!(out, " {g}").unwrap();
    }
    out.push_str("\ntable\n");
    for row in wvf.table().chunks(na) {
        push_row(&mut out, row);
    }
    out
}

pub fn q_to_string<T: Scalar>(q: &QTable<T>) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}\nkind q\nscalar {}", T::NAME).unwrap();
    writeln!(out, "num_states {}\nnum_actions {}\ntable", q.num_states(), q.num_actions()).unwrap();
    for row in q.table().chunks(q.num_actions()) {
        push_row(&mut out, row);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| WvfError::Parse {
                line: 0,
                message: "unexpected end of snapshot".into(),
            })
    }

    /// Reads `key rest...`, returning `rest`.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| parse_err(n, format!("expected `{key}`")))?;
        Ok((n, rest.trim_start()))
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> WvfError {
    WvfError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<N: std::str::FromStr>(line: usize, text: &str) -> Result<N> {
    text.parse().map_err(|_| parse_err(line, format!("cannot parse {text:?}")))
}

fn read_table<T: Scalar>(lines: &mut Lines<'_>, rows: usize, cols: usize) -> Result<Vec<T>> {
    let mut table = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (n, line) = lines.next_line()?;
        let before = table.len();
        for tok in line.split(' ') {
            table.push(parse_num::<T>(n, tok)?);
        }
        if table.len() - before != cols {
            return Err(parse_err(n, format!("expected {cols} values")));
        }
    }
    if let Some((n, extra)) = lines.inner.next() {
        if !extra.is_empty() {
            return Err(parse_err(n + 1, "trailing data after table"));
        }
    }
    Ok(table)
}

pub fn parse_snapshot<T: Scalar>(text: &str) -> Result<Snapshot<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, magic) = lines.next_line()?;
    if magic != MAGIC {
        return Err(parse_err(n, format!("expected `{MAGIC}` header")));
    }
    let (_, kind) = lines.field("kind")?;
    let kind = kind.to_string();
    let (n, scalar) = lines.field("scalar")?;
    if scalar != T::NAME {
        return Err(parse_err(n, format!("snapshot holds {scalar} values, expected {}", T::NAME)));
    }
    let (n, ns) = lines.field("num_states")?;
    let ns: usize = parse_num(n, ns)?;
    let (n, na) = lines.field("num_actions")?;
    let na: usize = parse_num(n, na)?;
    match kind.as_str() {
        "wvf" => {
            let (n, gamma) = lines.field("gamma")?;
            let gamma: T = parse_num(n, gamma)?;
            let (n, rbar) = lines.field("rbar_min")?;
            let rbar: T = parse_num(n, rbar)?;
            let (n, goals) = lines.field("goals")?;
            let goals = goals
                .split_whitespace()
                .map(|t| parse_num(n, t).map(StateId))
                .collect::<Result<Vec<_>>>()?;
            lines.field("table")?;
            let table = read_table(&mut lines, ns * ns, na)?;
            Ok(Snapshot::Wvf(Wvf::from_parts(ns, na, rbar, gamma, &goals, table)?))
        }
        "q" => {
            lines.field("table")?;
            let table = read_table(&mut lines, ns, na)?;
            Ok(Snapshot::Q(QTable::from_table(ns, na, table)?))
        }
        other => Err(parse_err(2, format!("unknown snapshot kind {other:?}"))),
    }
}

pub fn parse_wvf<T: Scalar>(text: &str) -> Result<Wvf<T>> {
    match parse_snapshot(text)? {
        Snapshot::Wvf(w) => Ok(w),
        Snapshot::Q(_) => Err(parse_err(2, "expected a wvf snapshot, found a q snapshot")),
    }
}

pub fn save_wvf<T: Scalar>(wvf: &Wvf<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, wvf_to_string(wvf))?)
}

pub fn save_q<T: Scalar>(q: &QTable<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, q_to_string(q))?)
}

pub fn load_wvf<T: Scalar>(path: impl AsRef<Path>) -> Result<Wvf<T>> {
    parse_wvf(&std::fs::read_to_string(path)?)
}

pub fn load_snapshot<T: Scalar>(path: impl AsRef<Path>) -> Result<Snapshot<T>> {
    parse_snapshot(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ActionId;
    use proptest::prelude::*;

    fn sample_wvf() -> Wvf<f64> {
        let mut w = Wvf::new(3, 2, -1050.3999999999999, 1.0).unwrap();
        w.add_goal(StateId(2));
        w.add_goal(StateId(0));
        w.set_q(StateId(1), StateId(2), ActionId(1), 0.1 + 0.2);
        w.set_q(StateId(0), StateId(0), ActionId(0), -0.0);
        w.set_q(StateId(2), StateId(1), ActionId(0), 1e-300);
        w
    }

    #[test]
    fn wvf_round_trip_keeps_goal_order() {
        let w = sample_wvf();
        let text = wvf_to_string(&w);
        let back: Wvf<f64> = parse_wvf(&text).unwrap();
        assert_eq!(back.goals().as_slice(), &[StateId(2), StateId(0)]);
        let bits = |w: &Wvf<f64>| w.table().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&w));
        assert_eq!(back.rbar_min().to_bits(), w.rbar_min().to_bits());
        assert_eq!(wvf_to_string(&back), text);
    }

    #[test]
    fn rejects_wrong_scalar_and_truncation() {
        let text = wvf_to_string(&sample_wvf());
        assert!(parse_wvf::<f32>(&text).is_err());
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(parse_wvf::<f64>(&truncated).is_err());
        assert!(parse_wvf::<f64>(&text.replacen("kind wvf", "kind q", 1)).is_err());
        assert!(parse_wvf::<f64>("nope").is_err());
    }

    #[test]
    fn q_round_trip() {
        let q = QTable::from_table(2, 2, vec![1.5f32, -0.1, 0.0, 9.9]).unwrap();
        match parse_snapshot::<f32>(&q_to_string(&q)).unwrap() {
            Snapshot::Q(back) => assert_eq!(back, q),
            Snapshot::Wvf(_) => panic!("wrong kind"),
        }
    }

    proptest! {
        #[test]
        fn any_finite_or_infinite_value_round_trips(bits in proptest::collection::vec(any::<u64>(), 8)) {
            let values: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).map(|v| if v.is_nan() { 0.5 } else { v }).collect();
            let w = Wvf::from_parts(2, 2, values[0], 1.0, &[StateId(1)], values.clone()[..8].to_vec()).unwrap();
            let back: Wvf<f64> = parse_wvf(&wvf_to_string(&w)).unwrap();
            let a: Vec<u64> = w.table().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.table().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.rbar_min().to_bits(), w.rbar_min().to_bits());
        }

        #[test]
        fn f32_values_round_trip(bits in proptest::collection::vec(any::<u32>(), 4)) {
            let values: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).map(|v| if v.is_nan() { 0.5 } else { v }).collect();
            let q = QTable::from_table(2, 2, values).unwrap();
            let back = match parse_snapshot::<f32>(&q_to_string(&q)).unwrap() {
                Snapshot::Q(q) => q,
                Snapshot::Wvf(_) => unreachable!(),
            };
            let a: Vec<u32> = q.table().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.table().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}

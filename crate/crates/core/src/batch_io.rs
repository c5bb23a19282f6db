//! Plain-text batch files.
//!
//! ```text
//! # symmdp-batch env=grid grid_side=100 seed=7
//! s_i,s_j,a,sp_i,sp_j
//! 3,4,0,3,5
//! ```
//!
//! Continuous batches use columns `s_0..s_{d-1},a,sp_0..sp_{d-1}` in raw
//! units, written with 17 significant digits. A trailing `synthetic` column
//! (0/1) is present only when the batch contains augmented rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::space::{
    AnyBatch, Batch, Cell, ContinuousBatch, ContinuousSpaceMeta, DiscreteBatch,
    DiscreteSpaceMeta, EnvKind, GridAction, TransitionC, TransitionD,
};

const MAGIC: &str = "# symmdp-batch";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_columns(env: EnvKind, state_dim: usize, synthetic: bool) -> Vec<String> {
    let mut cols: Vec<String> = match env {
        EnvKind::Grid => ["s_i", "s_j", "a", "sp_i", "sp_j"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        _ => (0..state_dim)
            .map(|i| format!("s_{i}"))
            .chain(std::iter::once("a".to_string()))
            .chain((0..state_dim).map(|i| format!("sp_{i}")))
            .collect(),
    };
    if synthetic {
        cols.push("synthetic".into());
    }
    cols
}

pub fn discrete_to_string(b: &DiscreteBatch) -> String {
    let syn = b.has_synthetic();
    let mut out = format!(
        "{MAGIC} env=grid grid_side={} seed={}\n{}\n",
        b.meta.grid_side,
        b.seed,
        header_columns(EnvKind::Grid, 0, syn).join(",")
    );
    for (t, &flag) in b.iter().zip(b.synthetic()) {
        write!(
            out,
            "{},{},{},{},{}",
            t.s.i,
            t.s.j,
            t.a.index(),
            t.s_next.i,
            t.s_next.j
        )
        .unwrap();
        if syn {
            write!(out, ",{}", flag as u8).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn continuous_to_string(b: &ContinuousBatch) -> String {
    let syn = b.has_synthetic();
    let mut out = format!(
        "{MAGIC} env={} seed={}\n{}\n",
        b.meta.env,
        b.seed,
        header_columns(b.meta.env, b.meta.state_dim, syn).join(",")
    );
    for (t, &flag) in b.iter().zip(b.synthetic()) {
        let row: Vec<String> = t
            .s
            .iter()
            .chain(std::iter::once(&t.a))
            .chain(&t.s_next)
            .map(|&v| fmt_f64(v))
            .collect();
        out.push_str(&row.join(","));
        if syn {
            write!(out, ",{}", flag as u8).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn any_to_string(b: &AnyBatch) -> String {
    match b {
        AnyBatch::Discrete(b) => discrete_to_string(b),
        AnyBatch::Continuous(b) => continuous_to_string(b),
    }
}

pub fn write_batch(b: &AnyBatch, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, any_to_string(b))?;
    Ok(())
}

pub fn read_batch(path: impl AsRef<Path>) -> Result<AnyBatch> {
    parse_batch(&fs::read_to_string(path)?)
}

struct Preamble {
    env: EnvKind,
    grid_side: Option<usize>,
    seed: u64,
}

fn parse_preamble(line: &str) -> Result<Preamble> {
    let rest = line.strip_prefix(MAGIC).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected `{MAGIC} env=...` metadata line"),
    })?;
    let mut env = None;
    let mut grid_side = None;
    let mut seed = 0u64;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("malformed metadata entry `{kv}`"),
        })?;
        let bad = |what: &str| Error::Parse {
            line: 1,
            msg: format!("invalid {what} `{v}`"),
        };
        match k {
            "env" => env = Some(v.parse::<EnvKind>()?),
            "grid_side" => grid_side = Some(v.parse().map_err(|_| bad("grid_side"))?),
            "seed" => seed = v.parse().map_err(|_| bad("seed"))?,
            _ => {}
        }
    }
    let env = env.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing env= in metadata".into(),
    })?;
    Ok(Preamble {
        env,
        grid_side,
        seed,
    })
}

pub fn parse_batch(text: &str) -> Result<AnyBatch> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty batch file".into(),
    })?;
    let pre = parse_preamble(first.trim())?;
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 2,
        msg: "missing header row".into(),
    })?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let state_dim = match pre.env {
        EnvKind::Grid => 0,
        e => ContinuousSpaceMeta::for_env(e)?.state_dim,
    };
    let synthetic = if cols == header_columns(pre.env, state_dim, false) {
        false
    } else if cols == header_columns(pre.env, state_dim, true) {
        true
    } else {
        return Err(Error::Schema(format!(
            "line {hline}: header `{}` does not match env {}",
            header.trim(),
            pre.env
        )));
    };
    let width = cols.len();

    let mut rows = Vec::new();
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push((ln, fields));
    }

    let flag = |ln: usize, s: &str| -> Result<bool> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Parse {
                line: ln,
                msg: format!("synthetic flag must be 0 or 1, got `{s}`"),
            }),
        }
    };

    match pre.env {
        EnvKind::Grid => {
            let side = pre.grid_side.ok_or(Error::Parse {
                line: 1,
                msg: "grid batch needs grid_side=".into(),
            })?;
            let meta = DiscreteSpaceMeta::new(side)?;
            let mut ts = Vec::with_capacity(rows.len());
            let mut syn = Vec::with_capacity(rows.len());
            for (ln, f) in rows {
                let int = |s: &str| -> Result<usize> {
                    s.parse().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("invalid integer `{s}`"),
                    })
                };
                let a = GridAction::from_index(int(f[2])?).map_err(|e| Error::Parse {
                    line: ln,
                    msg: e.to_string(),
                })?;
                let t = TransitionD::new(
                    Cell::new(int(f[0])?, int(f[1])?),
                    a,
                    Cell::new(int(f[3])?, int(f[4])?),
                );
                meta.check_cell(t.s)
                    .and(meta.check_cell(t.s_next))
                    .map_err(|e| Error::Parse {
                        line: ln,
                        msg: e.to_string(),
                    })?;
                ts.push(t);
                syn.push(if synthetic { flag(ln, f[5])? } else { false });
            }
            Ok(AnyBatch::Discrete(Batch::with_provenance(
                meta, ts, syn, pre.seed,
            )?))
        }
        env => {
            let meta = ContinuousSpaceMeta::for_env(env)?;
            let d = meta.state_dim;
            let mut ts = Vec::with_capacity(rows.len());
            let mut syn = Vec::with_capacity(rows.len());
            for (ln, f) in rows {
                let mut vals = Vec::with_capacity(2 * d + 1);
                for s in &f[..2 * d + 1] {
                    let v: f64 = s.parse().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("invalid number `{s}`"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            line: ln,
                            msg: format!("non-finite value `{s}`"),
                        });
                    }
                    vals.push(v);
                }
                ts.push(TransitionC::new(
                    vals[..d].to_vec(),
                    vals[d],
                    vals[d + 1..].to_vec(),
                ));
                syn.push(if synthetic { flag(ln, f[2 * d + 1])? } else { false });
            }
            Ok(AnyBatch::Continuous(Batch::with_provenance(
                meta, ts, syn, pre.seed,
            )?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_batch() -> DiscreteBatch {
        let meta = DiscreteSpaceMeta::new(10).unwrap();
        let ts = vec![
            TransitionD::new(Cell::new(0, 0), GridAction::Up, Cell::new(0, 1)),
            TransitionD::new(Cell::new(9, 3), GridAction::Right, Cell::new(0, 3)),
        ];
        Batch::new(meta, ts, 42).unwrap()
    }

    #[test]
    fn discrete_roundtrip() {
        let b = grid_batch();
        let text = discrete_to_string(&b);
        assert!(text.starts_with("# symmdp-batch env=grid grid_side=10 seed=42\ns_i,s_j,a,sp_i,sp_j\n"));
        let back = parse_batch(&text).unwrap().into_discrete().unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn synthetic_flags_survive() {
        let b = grid_batch();
        let extra = vec![TransitionD::new(
            Cell::new(0, 1),
            GridAction::Down,
            Cell::new(0, 0),
        )];
        let aug = b.concat_synthetic(extra).unwrap();
        let back = parse_batch(&discrete_to_string(&aug))
            .unwrap()
            .into_discrete()
            .unwrap();
        assert_eq!(back.synthetic(), &[false, false, true]);
        assert_eq!(back, aug);
    }

    #[test]
    fn continuous_roundtrip_is_bit_exact() {
        let meta = ContinuousSpaceMeta::cartpole();
        let ts = vec![TransitionC::new(
            vec![0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI],
            -1.0,
            vec![0.1 + 0.2, 2.0 / 3.0, -0.0, 5e-324],
        )];
        let b = Batch::new(meta, ts, 3).unwrap();
        let back = parse_batch(&continuous_to_string(&b))
            .unwrap()
            .into_continuous()
            .unwrap();
        for (x, y) in b.iter().zip(back.iter()) {
            for (u, v) in x.s.iter().zip(&y.s).chain(x.s_next.iter().zip(&y.s_next)) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(parse_batch(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let text = "# symmdp-batch env=cartpole seed=1\ns_i,s_j,a,sp_i,sp_j\n";
        assert!(matches!(parse_batch(text), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_row_reports_line_number() {
        let text = "# symmdp-batch env=grid grid_side=4 seed=1\ns_i,s_j,a,sp_i,sp_j\n0,0,0,0,1\n0,x,0,0,1\n";
        match parse_batch(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = "# symmdp-batch env=grid grid_side=4 seed=1\ns_i,s_j,a,sp_i,sp_j\n0,0,7,0,1\n";
        assert!(matches!(parse_batch(text), Err(Error::Parse { line: 3, .. })));
    }
}

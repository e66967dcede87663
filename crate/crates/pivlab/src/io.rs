//! Ensemble and report serialization.
//!
//! Two ensemble formats:
//! - columnar CSV `path, step, t, S, dB, jump_sum, tau<n>...` (plot- and
//!   diff-friendly; jump marks are aggregated per step, so a CSV round
//!   trip keeps the per-step jump sums but not individual marks);
//! - a lossless binary cache with the 16-byte magic header `PIVLAB01`
//!   (8 magic bytes + 8 reserved zero bytes) followed by little-endian
//!   u64 metadata and f64 payloads.

use crate::error::{Error, Result};
use crate::grid::{Grid2, TimeGrid};
use crate::sim::{PathEnsemble, StoppingLayer};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CACHE_MAGIC: &[u8; 8] = b"PIVLAB01";

/// Format floats the way the reports do: shortest representation that
/// round-trips, identical across runs for identical values.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn export_ensemble_csv(
    ensemble: &PathEnsemble,
    layers: &[&StoppingLayer],
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "path,step,t,S,dB,jump_sum")?;
    for l in layers {
        write!(w, ",tau{}", l.level)?;
    }
    writeln!(w)?;
    let n_steps = ensemble.grid.n_steps;
    for p in 0..ensemble.n_paths {
        let jumps = &ensemble.jumps[p];
        for j in 0..=n_steps {
            let db = if j < n_steps { ensemble.db.get(p, j) } else { 0.0 };
            let jump_sum: f64 =
                jumps.iter().filter(|(js, _)| *js as usize == j).map(|(_, m)| m).sum();
            write!(
                w,
                "{},{},{},{},{},{}",
                p,
                j,
                fmt_f64(ensemble.grid.t(j)),
                fmt_f64(ensemble.s.get(p, j)),
                fmt_f64(db),
                fmt_f64(jump_sum)
            )?;
            for l in layers {
                write!(w, ",{}", l.tau_index[p])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Rebuild an ensemble from the CSV export. Jump marks come back as one
/// aggregate mark per step (the per-step sum), which preserves price and
/// wealth arithmetic but not mark-level detail; use the binary cache when
/// marks matter.
pub fn import_ensemble_csv(path: &Path) -> Result<PathEnsemble> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Invalid("empty ensemble csv".into()))??;
    if !header.starts_with("path,step,t,S,dB,jump_sum") {
        return Err(Error::Invalid("unrecognized ensemble csv header".into()));
    }

    let mut rows: Vec<(usize, usize, f64, f64, f64, f64)> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let mut next = |what: &str| -> Result<&str> {
            it.next().ok_or_else(|| Error::Invalid(format!("missing column {what}")))
        };
        let p: usize = next("path")?.parse().map_err(|_| Error::Invalid("bad path".into()))?;
        let j: usize = next("step")?.parse().map_err(|_| Error::Invalid("bad step".into()))?;
        let t: f64 = next("t")?.parse().map_err(|_| Error::Invalid("bad t".into()))?;
        let s: f64 = next("S")?.parse().map_err(|_| Error::Invalid("bad S".into()))?;
        let db: f64 = next("dB")?.parse().map_err(|_| Error::Invalid("bad dB".into()))?;
        let js: f64 =
            next("jump_sum")?.parse().map_err(|_| Error::Invalid("bad jump_sum".into()))?;
        rows.push((p, j, t, s, db, js));
    }
    let n_paths = rows.iter().map(|r| r.0).max().map(|m| m + 1).unwrap_or(0);
    let n_steps = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::Invalid("ensemble csv has no data rows".into()));
    }
    let horizon = rows
        .iter()
        .filter(|r| r.1 == n_steps)
        .map(|r| r.2)
        .next()
        .ok_or_else(|| Error::Invalid("no terminal row".into()))?;
    let grid = TimeGrid::new(horizon, n_steps);
    let mut s = Grid2::zeros(n_paths, n_steps + 1);
    let mut db = Grid2::zeros(n_paths, n_steps);
    let mut jumps: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_paths];
    for (p, j, _t, sv, dbv, jsv) in rows {
        s.set(p, j, sv);
        if j < n_steps {
            db.set(p, j, dbv);
        }
        if jsv != 0.0 {
            jumps[p].push((j as u32, jsv));
        }
    }
    for j in &mut jumps {
        j.sort_by_key(|(s, _)| *s);
    }
    Ok(PathEnsemble { grid, n_paths, s, db, jumps, hidden: None, seed: 0 })
}

pub fn write_ensemble_cache(ensemble: &PathEnsemble, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&[0u8; 8])?;
    let put_u64 = |w: &mut BufWriter<std::fs::File>, v: u64| -> Result<()> {
        w.write_all(&v.to_le_bytes())?;
        Ok(())
    };
    put_u64(&mut w, ensemble.n_paths as u64)?;
    put_u64(&mut w, ensemble.grid.n_steps as u64)?;
    put_u64(&mut w, ensemble.seed)?;
    put_u64(&mut w, u64::from(ensemble.hidden.is_some()))?;
    w.write_all(&ensemble.grid.horizon.to_le_bytes())?;
    for v in ensemble.s.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in ensemble.db.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(h) = &ensemble.hidden {
        for v in h.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let total_jumps: u64 = ensemble.jumps.iter().map(|j| j.len() as u64).sum();
    put_u64(&mut w, total_jumps)?;
    for (p, jumps) in ensemble.jumps.iter().enumerate() {
        for (step, mark) in jumps {
            put_u64(&mut w, p as u64)?;
            put_u64(&mut w, *step as u64)?;
            w.write_all(&mark.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ensemble_cache(path: &Path) -> Result<PathEnsemble> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if &magic[..8] != CACHE_MAGIC {
        return Err(Error::Invalid("bad cache magic".into()));
    }
    let mut u64buf = [0u8; 8];
    let mut get_u64 = |r: &mut BufReader<std::fs::File>| -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n_paths = get_u64(&mut r)? as usize;
    let n_steps = get_u64(&mut r)? as usize;
    let seed = get_u64(&mut r)?;
    let has_hidden = get_u64(&mut r)? != 0;
    let mut f64buf = [0u8; 8];
    let mut get_f64 = |r: &mut BufReader<std::fs::File>| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let horizon = get_f64(&mut r)?;
    let grid = TimeGrid::new(horizon, n_steps);

    let read_grid = |r: &mut BufReader<std::fs::File>, cols: usize| -> Result<Grid2> {
        let mut data = vec![0.0f64; n_paths * cols];
        let mut buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Grid2::from_vec(n_paths, cols, data))
    };
    let s = read_grid(&mut r, n_steps + 1)?;
    let db = read_grid(&mut r, n_steps)?;
    let hidden = if has_hidden { Some(read_grid(&mut r, n_steps + 1)?) } else { None };

    let mut u64buf2 = [0u8; 8];
    let mut get_u64b = |r: &mut BufReader<std::fs::File>| -> Result<u64> {
        r.read_exact(&mut u64buf2)?;
        Ok(u64::from_le_bytes(u64buf2))
    };
    let total = get_u64b(&mut r)?;
    let mut jumps: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_paths];
    for _ in 0..total {
        let p = get_u64b(&mut r)? as usize;
        let step = get_u64b(&mut r)? as u32;
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        jumps[p].push((step, f64::from_le_bytes(buf)));
    }
    Ok(PathEnsemble { grid, n_paths, s, db, jumps, hidden, seed })
}

/// One plot-ready curve: `(t, value, lo, hi)` rows.
pub fn write_curve_csv(
    path: &Path,
    rows: &[(f64, f64, f64, f64)],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,value,lo,hi")?;
    for (t, v, lo, hi) in rows {
        writeln!(w, "{},{},{},{}", fmt_f64(*t), fmt_f64(*v), fmt_f64(*lo), fmt_f64(*hi))?;
    }
    Ok(())
}

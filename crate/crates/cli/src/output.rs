//! CSV artifacts. Numbers use Rust's shortest round-trip decimal form, so
//! output is locale-independent and byte-identical across runs.

use std::io::Write;

use flexpend::analysis::{EquilibriumSet, LevelGrid, Pole};
use flexpend::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 15] = [
    "t", "theta", "z", "thetadot", "zdot", "xi", "u", "tau", "x_e", "y_a", "y_u", "ytilde", "H_d",
    "H_u", "V_d",
];

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(TRAJECTORY_HEADER)?;
    for s in &traj.samples {
        let st = s.state;
        out.write_record(
            [
                s.t,
                st.theta,
                st.z,
                st.thetadot,
                st.zdot,
                st.xi,
                s.u,
                s.tau,
                s.xe,
                s.ya,
                s.yu,
                s.ytilde,
                s.h_d,
                s.h_u,
                s.v_d,
            ]
            .map(num),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_poles<W: Write>(w: W, poles: &[Pole]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["re", "im"])?;
    for p in poles {
        out.write_record([num(p.re), num(p.im)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_level_grid<W: Write>(w: W, grid: &LevelGrid) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["theta", "z", "V_d"])?;
    for (i, &theta) in grid.thetas.iter().enumerate() {
        for (j, &z) in grid.zs.iter().enumerate() {
            out.write_record([num(theta), num(z), num(grid.at(i, j))])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_equilibria<W: Write>(w: W, set: &EquilibriumSet) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["theta", "stability", "slope", "curvature"])?;
    for r in &set.roots {
        let tag = if r.stable { "stable" } else { "unstable" };
        out.write_record([num(r.theta), tag.to_owned(), num(r.slope), num(r.curvature)])?;
    }
    out.flush()?;
    Ok(())
}

/// One line of the batch summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub gains: String,
    pub ics: String,
    pub status: String,
    pub samples: usize,
    pub last: Option<[f64; 7]>,
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "gains", "ics", "status", "samples", "t_end", "theta", "z", "thetadot", "zdot", "xi", "H_d",
];

pub fn write_summary<W: Write>(w: W, rows: &[BatchRow]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.gains.clone(),
            r.ics.clone(),
            r.status.clone(),
            r.samples.to_string(),
        ];
        match r.last {
            Some(v) => rec.extend(v.map(num)),
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

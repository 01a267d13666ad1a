//! CSV trajectory export.
//!
//! Layout: `#`-prefixed metadata lines, then the header
//! `t,s_1,i_1,...,s_ell,i_ell`, then one row per record point. Numbers are
//! written with 17 significant digits so every `f64` round-trips exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::ode::ContinuousTrajectory;
use crate::stochastic::ScaledTrajectory;

/// Read access shared by the trajectory types that can be exported.
pub trait TrajectoryView {
    fn ell(&self) -> usize;
    fn times(&self) -> &[f64];
    /// Stacked row `[s_1..s_ell, i_1..i_ell]`.
    fn row(&self, k: usize) -> &[f64];
}

impl TrajectoryView for ContinuousTrajectory {
    fn ell(&self) -> usize {
        self.ell
    }
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn row(&self, k: usize) -> &[f64] {
        ContinuousTrajectory::row(self, k)
    }
}

impl TrajectoryView for ScaledTrajectory {
    fn ell(&self) -> usize {
        self.ell
    }
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn row(&self, k: usize) -> &[f64] {
        ScaledTrajectory::row(self, k)
    }
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory<W: Write, T: TrajectoryView + ?Sized>(
    out: &mut W,
    traj: &T,
    metadata: &[(String, String)],
) -> io::Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let ell = traj.ell();
    let mut header = String::from("t");
    for j in 1..=ell {
        header.push_str(&format!(",s_{j},i_{j}"));
    }
    writeln!(out, "{header}")?;
    for (k, &t) in traj.times().iter().enumerate() {
        let row = traj.row(k);
        let mut line = format_f64(t);
        for j in 0..ell {
            line.push(',');
            line.push_str(&format_f64(row[j]));
            line.push(',');
            line.push_str(&format_f64(row[ell + j]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_trajectory_csv<T: TrajectoryView + ?Sized>(
    traj: &T,
    path: impl AsRef<Path>,
    metadata: &[(String, String)],
) -> io::Result<()> {
    if traj.times().is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "empty trajectory",
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory(&mut w, traj, metadata)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ContinuousState, Network, PatchParams};
    use crate::ode::{integrate, OdeConfig};

    #[test]
    fn layout() {
        let m = validate(
            vec![PatchParams::new(2.0, 1.0); 2],
            Network::two_patch(1.0, 0.1, 0.1),
        )
        .unwrap();
        let z0 = ContinuousState::new(vec![0.4, 0.4], vec![0.1, 0.1]);
        let tr = integrate(&m, &z0, &OdeConfig::adaptive(1.0, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &tr, &[("seed".into(), "none".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=none");
        assert_eq!(lines[1], "t,s_1,i_1,s_2,i_2");
        assert_eq!(lines.len(), 2 + 3);
        assert!(lines[2..].iter().all(|l| l.split(',').count() == 5));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-7, 0.0, 123456.789] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }
}

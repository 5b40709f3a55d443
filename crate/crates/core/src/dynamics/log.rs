//! Per-step state dump as CSV.
//!
//! Columns: `t, h, hd, box_x, box_y, box_z, box_qw, box_qx, box_qy, box_qz,
//! box_vx, box_vy, box_vz, box_wx, box_wy, box_wz`, then for each arm
//! (left first) the UJ angles `phi_<side>_<i>`, rates `phid_<side>_<i>` and
//! pressures `p_<side>_<c>`. Floats use shortest round-trip formatting.

use std::io::{self, Write};

use super::SimState;

pub struct TrajectoryLog<W: Write> {
    out: W,
    dof: [usize; 2],
}

impl<W: Write> TrajectoryLog<W> {
    /// Writes the header for arms with `dof` generalized coordinates each.
    pub fn new(mut out: W, dof: [usize; 2]) -> io::Result<Self> {
        let mut cols: Vec<String> = [
            "t", "h", "hd", "box_x", "box_y", "box_z", "box_qw", "box_qx", "box_qy", "box_qz",
            "box_vx", "box_vy", "box_vz", "box_wx", "box_wy", "box_wz",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for (side, n) in ["left", "right"].iter().zip(dof) {
            cols.extend((0..n).map(|i| format!("phi_{side}_{i}")));
            cols.extend((0..n).map(|i| format!("phid_{side}_{i}")));
            cols.extend((0..12).map(|c| format!("p_{side}_{c}")));
        }
        writeln!(out, "{}", cols.join(","))?;
        Ok(Self { out, dof })
    }

    pub fn record(&mut self, s: &SimState) -> io::Result<()> {
        let q = s.box_orientation.quaternion();
        let mut vals = vec![s.time, s.h, s.hd];
        vals.extend(s.box_position.iter());
        vals.extend([q.w, q.i, q.j, q.k]);
        vals.extend(s.box_velocity.iter());
        vals.extend(s.box_angular_velocity.iter());
        for (arm, n) in s.arms.iter().zip(self.dof) {
            assert_eq!(arm.phi.len(), n, "state does not match log layout");
            vals.extend(&arm.phi);
            vals.extend(&arm.phid);
            vals.extend(&arm.pressure);
        }
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

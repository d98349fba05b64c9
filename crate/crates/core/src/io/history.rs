//! Loss history as CSV.
//!
//! Columns: `iter,total,photo,scale_reg`, then `<camera>_rot_deg` and
//! `<camera>_trans_m` per camera in rig order. Pose columns hold the
//! distance of each extrinsic from its initial value after the iteration.
//! Reals use the shortest representation that parses back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::IterationRecord;
use crate::rig::CameraRig;

pub fn loss_csv_header(rig: &CameraRig) -> String {
    let mut s = String::from("iter,total,photo,scale_reg");
    for c in rig.cameras() {
        write!(s, ",{0}_rot_deg,{0}_trans_m", c.name).unwrap();
    }
    s
}

pub fn loss_csv_row(record: &IterationRecord) -> String {
    let mut s = format!("{},{},{},{}", record.iteration, record.total, record.photo, record.scale_reg);
    for (rot, trans) in &record.pose_deltas {
        write!(s, ",{rot},{trans}").unwrap();
    }
    s
}

pub fn loss_csv(rig: &CameraRig, records: &[IterationRecord]) -> String {
    let mut s = loss_csv_header(rig);
    s.push('\n');
    for r in records {
        s.push_str(&loss_csv_row(r));
        s.push('\n');
    }
    s
}

pub fn write_loss_csv(path: &Path, rig: &CameraRig, records: &[IterationRecord]) -> Result<()> {
    fs::write(path, loss_csv(rig, records)).map_err(|e| Error::io(path, e))
}

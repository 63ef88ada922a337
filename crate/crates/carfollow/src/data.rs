//! Trajectory ingestion, resampling, car-following pair filtering, and
//! covariate-window construction.
//!
//! The on-disk format is a flat CSV with one row per frame:
//! `pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length`.
//! Positions are longitudinal arc length along the lane (meters, increasing
//! in the direction of travel). The relative-speed convention throughout the
//! crate is `dv = lead_vel - foll_vel` (positive = opening gap).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Time-indexed leader/follower kinematics for one car-following pair,
/// uniformly sampled at `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub pair_id: String,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// Time stamp of the first frame, seconds.
    pub t_first: f64,
    /// Physical length of the lead vehicle, meters.
    pub lead_length: f64,
    pub lead_pos: Vec<f64>,
    pub lead_vel: Vec<f64>,
    pub foll_pos: Vec<f64>,
    pub foll_vel: Vec<f64>,
    pub foll_acc: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.lead_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lead_pos.is_empty()
    }

    /// Duration t0 = (N - 1) dt, seconds.
    pub fn duration(&self) -> f64 {
        (self.len() as f64 - 1.0) * self.dt
    }

    /// Time of frame `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t_first + i as f64 * self.dt
    }

    /// Bumper-to-bumper gap at frame `i`, meters.
    pub fn gap(&self, i: usize) -> f64 {
        self.lead_pos[i] - self.foll_pos[i] - self.lead_length
    }

    /// Relative speed at frame `i`: lead minus follower, m/s.
    pub fn rel_speed(&self, i: usize) -> f64 {
        self.lead_vel[i] - self.foll_vel[i]
    }

    /// Check every domain invariant, naming the pair (and frame) on failure.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n < 2 {
            return Err(Error::Data(format!("pair {}: needs at least 2 frames, has {n}", self.pair_id)));
        }
        for (name, series) in [
            ("lead_pos", &self.lead_pos),
            ("lead_vel", &self.lead_vel),
            ("foll_pos", &self.foll_pos),
            ("foll_vel", &self.foll_vel),
            ("foll_acc", &self.foll_acc),
        ] {
            if series.len() != n {
                return Err(Error::Data(format!(
                    "pair {}: series {name} has length {} but expected {n}",
                    self.pair_id,
                    series.len()
                )));
            }
            if let Some(i) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "pair {}: series {name} has non-finite value at frame {i}",
                    self.pair_id
                )));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Data(format!("pair {}: dt must be positive, got {}", self.pair_id, self.dt)));
        }
        for i in 0..n {
            if self.gap(i) <= 0.0 {
                return Err(Error::Data(format!(
                    "pair {}: nonpositive gap {} at t={}",
                    self.pair_id,
                    self.gap(i),
                    self.time(i)
                )));
            }
            if self.foll_vel[i] < 0.0 || self.lead_vel[i] < 0.0 {
                return Err(Error::Data(format!(
                    "pair {}: negative speed at t={}",
                    self.pair_id,
                    self.time(i)
                )));
            }
        }
        Ok(())
    }
}

/// A length-T slice of (gap, relative speed, speed) inputs with aligned
/// target accelerations. The unit of training batching.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateWindow {
    /// Per-step (s, dv, v) in (m, m/s, m/s).
    pub inputs: Vec<[f64; 3]>,
    /// Observed follower accelerations, m/s^2.
    pub targets: Vec<f64>,
    /// Strictly increasing times with constant spacing, seconds.
    pub times: Vec<f64>,
    /// Observed follower positions, meters (used by the joint objective).
    pub foll_pos: Vec<f64>,
    pub pair_id: String,
}

impl CovariateWindow {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

/// Disjoint train/validation/test partition of car-following pairs.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub seed: u64,
}

/// Supported trajectory file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    GenericCsv,
}

const REQUIRED_COLUMNS: [&str; 7] =
    ["pair_id", "t", "lead_pos", "lead_vel", "foll_pos", "foll_vel", "lead_length"];

/// Load every car-following pair from a trajectory CSV.
///
/// Rows for a pair need not be contiguous; they are grouped by `pair_id`
/// and sorted by `t`. The `foll_acc` column is optional: when absent,
/// accelerations are computed by central finite differences of `foll_vel`
/// (one-sided at the boundaries).
pub fn load_trajectories(path: &Path, format: FileFormat) -> Result<Vec<Trajectory>> {
    let FileFormat::GenericCsv = format;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = BTreeMap::new();
    for name in REQUIRED_COLUMNS {
        match col(name) {
            Some(i) => {
                idx.insert(name, i);
            }
            None => return Err(Error::Format(format!("missing column `{name}`"))),
        }
    }
    let acc_col = col("foll_acc");

    struct Row {
        t: f64,
        lead_pos: f64,
        lead_vel: f64,
        foll_pos: f64,
        foll_vel: f64,
        foll_acc: Option<f64>,
        lead_length: f64,
    }

    let mut by_pair: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {}: {e}", line + 2)))?;
        let get = |name: &str| -> Result<f64> {
            let raw = &record[idx[name]];
            raw.parse::<f64>().map_err(|_| {
                Error::Format(format!("row {}: column `{name}` is not a number: `{raw}`", line + 2))
            })
        };
        let pair_id = record[idx["pair_id"]].to_string();
        let foll_acc = match acc_col {
            Some(c) => Some(record[c].parse::<f64>().map_err(|_| {
                Error::Format(format!("row {}: column `foll_acc` is not a number", line + 2))
            })?),
            None => None,
        };
        by_pair.entry(pair_id).or_default().push(Row {
            t: get("t")?,
            lead_pos: get("lead_pos")?,
            lead_vel: get("lead_vel")?,
            foll_pos: get("foll_pos")?,
            foll_vel: get("foll_vel")?,
            foll_acc,
            lead_length: get("lead_length")?,
        });
    }

    let mut out = Vec::new();
    for (pair_id, mut rows) in by_pair {
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        if rows.len() < 2 {
            return Err(Error::Data(format!("pair {pair_id}: needs at least 2 frames, has {}", rows.len())));
        }
        for w in rows.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Data(format!(
                    "pair {pair_id}: non-monotone timestamps ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        let dt = rows[1].t - rows[0].t;
        for (i, w) in rows.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-6 * dt.max(1e-9) {
                return Err(Error::Data(format!(
                    "pair {pair_id}: non-uniform sampling at frame {} ({step} vs {dt})",
                    i + 1
                )));
            }
        }
        let lead_length = rows[0].lead_length;
        if rows.iter().any(|r| r.lead_length != lead_length) {
            return Err(Error::Data(format!("pair {pair_id}: lead_length varies across rows")));
        }
        let foll_vel: Vec<f64> = rows.iter().map(|r| r.foll_vel).collect();
        let foll_acc: Vec<f64> = if rows.iter().all(|r| r.foll_acc.is_some()) {
            rows.iter().map(|r| r.foll_acc.unwrap()).collect()
        } else {
            central_differences(&foll_vel, dt)
        };
        let traj = Trajectory {
            pair_id: pair_id.clone(),
            dt,
            t_first: rows[0].t,
            lead_length,
            lead_pos: rows.iter().map(|r| r.lead_pos).collect(),
            lead_vel: rows.iter().map(|r| r.lead_vel).collect(),
            foll_pos: rows.iter().map(|r| r.foll_pos).collect(),
            foll_vel,
            foll_acc,
        };
        traj.validate()?;
        out.push(traj);
    }
    Ok(out)
}

/// Central finite differences with one-sided estimates at the boundaries.
pub fn central_differences(v: &[f64], dt: f64) -> Vec<f64> {
    let n = v.len();
    let mut acc = vec![0.0; n];
    if n < 2 {
        return acc;
    }
    acc[0] = (v[1] - v[0]) / dt;
    acc[n - 1] = (v[n - 1] - v[n - 2]) / dt;
    for i in 1..(n - 1) {
        acc[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
    }
    acc
}

/// Write trajectories in the same CSV format that `load_trajectories` reads.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length")?;
    for tr in trajs {
        for i in 0..tr.len() {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                tr.pair_id,
                tr.time(i),
                tr.lead_pos[i],
                tr.lead_vel[i],
                tr.foll_pos[i],
                tr.foll_vel[i],
                tr.foll_acc[i],
                tr.lead_length
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Keep every k-th frame so the output sampling interval is `target_dt`.
/// Pure frame decimation: no interpolation or averaging.
pub fn resample(traj: &Trajectory, target_dt: f64) -> Result<Trajectory> {
    if !(target_dt.is_finite() && target_dt > 0.0) {
        return Err(Error::Argument(format!("target_dt must be positive, got {target_dt}")));
    }
    let ratio = target_dt / traj.dt;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * k {
        return Err(Error::Argument(format!(
            "target_dt {} is not an integer multiple of dt {}",
            target_dt, traj.dt
        )));
    }
    let k = k as usize;
    if k == 1 {
        let mut out = traj.clone();
        out.dt = target_dt;
        return Ok(out);
    }
    let pick = |series: &[f64]| series.iter().step_by(k).copied().collect::<Vec<f64>>();
    let out = Trajectory {
        pair_id: traj.pair_id.clone(),
        dt: target_dt,
        t_first: traj.t_first,
        lead_length: traj.lead_length,
        lead_pos: pick(&traj.lead_pos),
        lead_vel: pick(&traj.lead_vel),
        foll_pos: pick(&traj.foll_pos),
        foll_vel: pick(&traj.foll_vel),
        foll_acc: pick(&traj.foll_acc),
    };
    if out.len() < 2 {
        return Err(Error::Argument(format!(
            "pair {}: resampling to dt={target_dt} leaves fewer than 2 frames",
            traj.pair_id
        )));
    }
    Ok(out)
}

/// Drop short pairs, draw a seeded test set from the long ones, and split
/// the remainder into train/validation.
///
/// Deterministic in (input set, seed): pairs are sorted by id before any
/// seeded shuffling, so input order does not matter.
pub fn filter_and_split(
    trajs: &[Trajectory],
    min_duration: f64,
    test_min_duration: f64,
    n_test: usize,
    train_frac: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Argument(format!("train_frac must be in (0,1), got {train_frac}")));
    }
    let mut kept: Vec<&Trajectory> = trajs.iter().filter(|t| t.duration() > min_duration).collect();
    kept.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let long_ids: Vec<usize> = kept
        .iter()
        .enumerate()
        .filter(|(_, t)| t.duration() > test_min_duration)
        .map(|(i, _)| i)
        .collect();
    if long_ids.len() < n_test {
        return Err(Error::Data(format!(
            "too few long pairs for the test set: need {n_test} with duration > {test_min_duration}s, have {} \
             ({} pairs total after the {min_duration}s filter)",
            long_ids.len(),
            kept.len()
        )));
    }

    let mut rng = rng::rng_from_seed(seed);
    let mut candidates = long_ids;
    candidates.shuffle(&mut rng);
    let mut test_ix: Vec<usize> = candidates.into_iter().take(n_test).collect();
    test_ix.sort_unstable();

    let test: Vec<Trajectory> = test_ix.iter().map(|&i| kept[i].clone()).collect();
    let mut rest: Vec<&Trajectory> = kept
        .iter()
        .enumerate()
        .filter(|(i, _)| !test_ix.contains(i))
        .map(|(_, t)| *t)
        .collect();
    rest.shuffle(&mut rng);
    let n_train = ((rest.len() as f64) * train_frac).round() as usize;
    let (train_refs, val_refs) = rest.split_at(n_train.min(rest.len()));

    let mut train: Vec<Trajectory> = train_refs.iter().map(|t| (*t).clone()).collect();
    let mut val: Vec<Trajectory> = val_refs.iter().map(|t| (*t).clone()).collect();
    train.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    val.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    Ok(DatasetSplit { train, val, test, seed })
}

/// Slice a trajectory into covariate windows of length `t_len` starting at
/// indices 0, stride, 2*stride, ...
pub fn make_windows(traj: &Trajectory, t_len: usize, stride: usize) -> Result<Vec<CovariateWindow>> {
    let n = traj.len();
    if t_len < 2 {
        return Err(Error::Argument(format!("window length must be >= 2, got {t_len}")));
    }
    if t_len > n {
        return Err(Error::Argument(format!(
            "window length {t_len} exceeds trajectory length {n} (pair {})",
            traj.pair_id
        )));
    }
    if stride == 0 {
        return Err(Error::Argument("stride must be >= 1".into()));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + t_len <= n {
        let mut inputs = Vec::with_capacity(t_len);
        let mut targets = Vec::with_capacity(t_len);
        let mut times = Vec::with_capacity(t_len);
        let mut foll_pos = Vec::with_capacity(t_len);
        for i in start..(start + t_len) {
            inputs.push([traj.gap(i), traj.rel_speed(i), traj.foll_vel[i]]);
            targets.push(traj.foll_acc[i]);
            times.push(traj.time(i));
            foll_pos.push(traj.foll_pos[i]);
        }
        windows.push(CovariateWindow {
            inputs,
            targets,
            times,
            foll_pos,
            pair_id: traj.pair_id.clone(),
        });
        start += stride;
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    /// Simple synthetic pair: leader at constant speed, follower closing in.
    pub(crate) fn toy_trajectory(pair_id: &str, n: usize, dt: f64) -> Trajectory {
        let lead_vel = vec![20.0; n];
        let lead_pos: Vec<f64> = (0..n).map(|i| 50.0 + 20.0 * i as f64 * dt).collect();
        let foll_vel: Vec<f64> = (0..n).map(|i| 19.0 + 0.001 * i as f64).collect();
        let mut foll_pos = vec![0.0; n];
        for i in 1..n {
            foll_pos[i] = foll_pos[i - 1] + 0.5 * (foll_vel[i - 1] + foll_vel[i]) * dt;
        }
        let foll_acc = central_differences(&foll_vel, dt);
        Trajectory {
            pair_id: pair_id.to_string(),
            dt,
            t_first: 0.0,
            lead_length: 4.5,
            lead_pos,
            lead_vel,
            foll_pos,
            foll_vel,
            foll_acc,
        }
    }

    #[test]
    fn load_minimal_two_row_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("two.csv");
        std::fs::write(
            &path,
            "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length\n\
             P1,0,30,20,0,19,0.1,4.5\n\
             P1,0.04,30.8,20,0.76,19.01,0.1,4.5\n",
        )
        .unwrap();
        let trajs = load_trajectories(&path, FileFormat::GenericCsv).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].len(), 2);
        assert!((trajs[0].dt - 0.04).abs() < 1e-12);
    }

    #[test]
    fn load_rejects_missing_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc\nP1,0,30,20,0,19,0,4.5\n",
        )
        .unwrap();
        let err = load_trajectories(&path, FileFormat::GenericCsv).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("lead_length"), "{err}");
    }

    #[test]
    fn load_rejects_nonpositive_gap_citing_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        std::fs::write(
            &path,
            "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length\n\
             P9,0,30,20,0,19,0,4.5\n\
             P9,0.04,30.8,20,27.0,19,0,4.5\n",
        )
        .unwrap();
        let err = load_trajectories(&path, FileFormat::GenericCsv).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        let msg = err.to_string();
        assert!(msg.contains("P9") && msg.contains("0.04"), "{msg}");
    }

    #[test]
    fn load_rejects_non_monotone_times() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mono.csv");
        std::fs::write(
            &path,
            "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length\n\
             P2,0,30,20,0,19,0,4.5\n\
             P2,0,30.8,20,0.76,19,0,4.5\n",
        )
        .unwrap();
        let err = load_trajectories(&path, FileFormat::GenericCsv).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("P2"));
    }

    #[test]
    fn load_computes_acceleration_when_column_absent() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("noacc.csv");
        std::fs::write(
            &path,
            "pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,lead_length\n\
             P1,0,30,20,0,19,4.5\n\
             P1,0.1,32,20,1.9,19.2,4.5\n\
             P1,0.2,34,20,3.9,19.4,4.5\n",
        )
        .unwrap();
        let trajs = load_trajectories(&path, FileFormat::GenericCsv).unwrap();
        let acc = &trajs[0].foll_acc;
        assert!((acc[0] - 2.0).abs() < 1e-9);
        assert!((acc[1] - 2.0).abs() < 1e-9);
        assert!((acc[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn round_trip_preserves_field_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let originals: Vec<Trajectory> =
            (0..3).map(|i| toy_trajectory(&format!("P{i}"), 40, 0.04)).collect();
        write_trajectories(&path, &originals).unwrap();
        let loaded = load_trajectories(&path, FileFormat::GenericCsv).unwrap();
        assert_eq!(loaded.len(), 3);
        for (orig, got) in originals.iter().zip(&loaded) {
            assert_eq!(orig.pair_id, got.pair_id);
            // Display-formatted floats parse back to identical bits.
            assert_eq!(orig.lead_pos, got.lead_pos);
            assert_eq!(orig.lead_vel, got.lead_vel);
            assert_eq!(orig.foll_pos, got.foll_pos);
            assert_eq!(orig.foll_vel, got.foll_vel);
            assert_eq!(orig.foll_acc, got.foll_acc);
            assert_eq!(orig.lead_length, got.lead_length);
        }
    }

    #[test]
    fn resample_keeps_every_fifth_frame() {
        let traj = toy_trajectory("P1", 11, 0.04);
        let out = resample(&traj, 0.2).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.lead_pos[0], traj.lead_pos[0]);
        assert_eq!(out.lead_pos[1], traj.lead_pos[5]);
        assert_eq!(out.lead_pos[2], traj.lead_pos[10]);
        assert_eq!(out.dt, 0.2);
    }

    #[test]
    fn resample_identity_when_target_equals_dt() {
        let traj = toy_trajectory("P1", 10, 0.2);
        let out = resample(&traj, 0.2).unwrap();
        assert_eq!(out, traj);
        // Idempotent.
        assert_eq!(resample(&out, 0.2).unwrap(), out);
    }

    #[test]
    fn resample_rejects_non_integer_multiple() {
        let traj = toy_trajectory("P1", 10, 0.04);
        assert!(matches!(resample(&traj, 0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn split_counts_and_determinism() {
        let mut trajs = Vec::new();
        // 40 long pairs (>50s) and 60 medium pairs (>30s, <=50s) at 0.2s.
        for i in 0..40 {
            trajs.push(toy_trajectory(&format!("L{i:03}"), 300, 0.2)); // 59.8s
        }
        for i in 0..60 {
            trajs.push(toy_trajectory(&format!("M{i:03}"), 180, 0.2)); // 35.8s
        }
        let split = filter_and_split(&trajs, 30.0, 50.0, 30, 0.7, 11).unwrap();
        assert_eq!(split.test.len(), 30);
        assert_eq!(split.train.len() + split.val.len(), 70);
        let expect_train = (70.0_f64 * 0.7).round() as usize;
        assert!((split.train.len() as i64 - expect_train as i64).abs() <= 1);

        // Disjoint by pair id.
        let mut ids: Vec<&str> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .map(|t| t.pair_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 100);

        // Same seed twice: identical; input order must not matter.
        let mut shuffled = trajs.clone();
        shuffled.reverse();
        let split2 = filter_and_split(&shuffled, 30.0, 50.0, 30, 0.7, 11).unwrap();
        let ids_of = |v: &[Trajectory]| v.iter().map(|t| t.pair_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids_of(&split.train), ids_of(&split2.train));
        assert_eq!(ids_of(&split.val), ids_of(&split2.val));
        assert_eq!(ids_of(&split.test), ids_of(&split2.test));
    }

    #[test]
    fn split_errors_when_too_few_long_pairs() {
        let trajs: Vec<Trajectory> =
            (0..10).map(|i| toy_trajectory(&format!("P{i}"), 180, 0.2)).collect();
        let err = filter_and_split(&trajs, 30.0, 50.0, 30, 0.7, 1).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("30"), "{err}");
    }

    #[test]
    fn windows_index_arithmetic() {
        let traj = toy_trajectory("P1", 10, 0.2);
        let ws = make_windows(&traj, 5, 5).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].times[0], traj.time(0));
        assert_eq!(ws[1].times[0], traj.time(5));
        let one = make_windows(&traj, 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(make_windows(&traj, 11, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn window_covariates_match_trajectory_bit_exactly() {
        let traj = toy_trajectory("P1", 30, 0.2);
        let ws = make_windows(&traj, 10, 7).unwrap();
        for (wi, w) in ws.iter().enumerate() {
            let start = wi * 7;
            for (k, row) in w.inputs.iter().enumerate() {
                let i = start + k;
                assert_eq!(row[0], traj.gap(i));
                assert_eq!(row[1], traj.rel_speed(i));
                assert_eq!(row[2], traj.foll_vel[i]);
                assert_eq!(w.targets[k], traj.foll_acc[i]);
                assert!(row[0] > 0.0);
            }
        }
    }
}

//! Run directories: time series and snapshot CSV files, plot data, and
//! re-analysis of stored snapshots.
//!
//! Layout of a run directory:
//!
//! ```text
//! scenario.toml            scenario that produced the run
//! timeseries.csv           one row per species per record
//! snapshots/period_*.csv   positions, velocities, period-averaged positions
//! snapshot_last_good.csv   only after a numerical abort
//! plot/                    written by the analysis
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::{classify_structure, DiagnosticsRecord, StructureReport};
use crate::error::{IntegratorError, IoError, RunError};
use crate::integrator::{EnsembleState, PeriodSamples};
use crate::model::{Composition, Vec3};
use crate::scenario::{parse_scenario, ScenarioConfig};
use crate::simulation::RunObserver;

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const LAST_GOOD_FILE: &str = "snapshot_last_good.csv";
pub const PLOT_DIR: &str = "plot";

pub const TIMESERIES_HEADER: [&str; 9] =
    ["t_s", "species", "e_tot_j", "e_sec_j", "e_int_j", "e_micro_j", "t_sec_k", "gamma", "n_crystallized"];
pub const SNAPSHOT_HEADER: [&str; 12] =
    ["t_s", "id", "species", "x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps", "xavg_m", "yavg_m", "zavg_m"];

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), message: message.into() }
}

fn create_csv(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// Incremental writer for `timeseries.csv`.
pub struct TimeseriesWriter {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl TimeseriesWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let mut writer = create_csv(path)?;
        writer.write_record(TIMESERIES_HEADER).map_err(csv_err(path))?;
        Ok(TimeseriesWriter { path: path.to_path_buf(), writer })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<(), IoError> {
        let t = format_float(record.time);
        for s in &record.species {
            let row = [
                t.clone(),
                s.name.clone(),
                format_float(s.e_total),
                format_float(s.e_secular),
                format_float(s.e_interaction),
                format_float(s.e_micromotion),
                format_float(s.t_secular),
                format_float(s.gamma),
                s.crystallized.to_string(),
            ];
            self.writer.write_record(&row).map_err(csv_err(&self.path))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.writer.flush().map_err(io_err(&self.path))
    }
}

pub fn write_timeseries(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), IoError> {
    let mut w = TimeseriesWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.flush()
}

/// One row of `timeseries.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub time: f64,
    pub species: String,
    pub e_total: f64,
    pub e_secular: f64,
    pub e_interaction: f64,
    pub e_micromotion: f64,
    pub t_secular: f64,
    pub gamma: f64,
    pub crystallized: usize,
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, value: &str) -> Result<T, IoError> {
    value.trim().parse().map_err(|_| format_err(path, format!("row {row}: bad {name} '{value}'")))
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let found = reader.headers().map_err(csv_err(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(format_err(path, format!("unexpected header, need {}", header.join(","))));
    }
    Ok(reader)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>, IoError> {
    let mut reader = open_csv(path, &TIMESERIES_HEADER)?;
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let f = |i: usize| parse_field::<f64>(path, n + 2, TIMESERIES_HEADER[i], &rec[i]);
        rows.push(TimeseriesRow {
            time: f(0)?,
            species: rec[1].to_string(),
            e_total: f(2)?,
            e_secular: f(3)?,
            e_interaction: f(4)?,
            e_micromotion: f(5)?,
            t_secular: f(6)?,
            gamma: f(7)?,
            crystallized: parse_field(path, n + 2, "n_crystallized", &rec[8])?,
        });
    }
    Ok(rows)
}

/// Write one snapshot; `mean_positions` are the period-averaged positions
/// (equal to `positions` for an instantaneous state).
pub fn write_snapshot(
    path: &Path,
    time: f64,
    composition: &Composition,
    positions: &[Vec3],
    velocities: &[Vec3],
    mean_positions: &[Vec3],
) -> Result<(), IoError> {
    let mut w = create_csv(path)?;
    w.write_record(SNAPSHOT_HEADER).map_err(csv_err(path))?;
    let t = format_float(time);
    for i in 0..positions.len() {
        let (x, v, a) = (positions[i], velocities[i], mean_positions[i]);
        let mut row = vec![t.clone(), i.to_string(), composition.species_of(i).name().to_string()];
        row.extend([x.x, x.y, x.z, v.x, v.y, v.z, a.x, a.y, a.z].map(format_float));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub species: Vec<String>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub mean_positions: Vec<Vec3>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    let mut reader = open_csv(path, &SNAPSHOT_HEADER)?;
    let mut snap =
        Snapshot { time: f64::NAN, species: vec![], positions: vec![], velocities: vec![], mean_positions: vec![] };
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let f = |i: usize| parse_field::<f64>(path, n + 2, SNAPSHOT_HEADER[i], &rec[i]);
        let id: usize = parse_field(path, n + 2, "id", &rec[1])?;
        if id != n {
            return Err(format_err(path, format!("row {}: expected id {n}, found {id}", n + 2)));
        }
        snap.time = f(0)?;
        snap.species.push(rec[2].to_string());
        snap.positions.push(Vec3::new(f(3)?, f(4)?, f(5)?));
        snap.velocities.push(Vec3::new(f(6)?, f(7)?, f(8)?));
        snap.mean_positions.push(Vec3::new(f(9)?, f(10)?, f(11)?));
    }
    if snap.positions.is_empty() {
        return Err(format_err(path, "no particles"));
    }
    Ok(snap)
}

fn snapshot_path(dir: &Path, period: u64) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("period_{period:09}.csv"))
}

/// Observer writing a complete run directory.
pub struct RunDirectory {
    dir: PathBuf,
    composition: Composition,
    timeseries: TimeseriesWriter,
    duration: u64,
    window: u64,
    snapshot_every: u64,
}

impl RunDirectory {
    /// Create (or reuse) `dir`, store the scenario and open the time series.
    pub fn create(dir: &Path, config: &ScenarioConfig) -> Result<Self, IoError> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(io_err(dir))?;
        // Stale snapshots of an earlier run would corrupt a later analysis.
        let snaps = dir.join(SNAPSHOT_DIR);
        for entry in fs::read_dir(&snaps).map_err(io_err(&snaps))? {
            let path = entry.map_err(io_err(&snaps))?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
        let stale = dir.join(LAST_GOOD_FILE);
        if stale.exists() {
            fs::remove_file(&stale).map_err(io_err(&stale))?;
        }
        let scenario = dir.join(SCENARIO_FILE);
        fs::write(&scenario, config.render()).map_err(io_err(&scenario))?;
        Ok(RunDirectory {
            dir: dir.to_path_buf(),
            composition: config.composition(),
            timeseries: TimeseriesWriter::create(&dir.join(TIMESERIES_FILE))?,
            duration: config.run.duration_periods,
            window: config.diagnostics.window_periods as u64,
            snapshot_every: config.diagnostics.snapshot_every,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn wants_snapshot(&self, period: u64) -> bool {
        let periodic = self.snapshot_every > 0 && period % self.snapshot_every == 0;
        let final_window = period > 0 && period + self.window > self.duration;
        periodic || final_window || period == self.duration
    }
}

impl RunObserver for RunDirectory {
    fn on_period(&mut self, period: u64, samples: &PeriodSamples, record: &DiagnosticsRecord) -> Result<(), IoError> {
        self.timeseries.write(record)?;
        if self.wants_snapshot(period) {
            write_snapshot(
                &snapshot_path(&self.dir, period),
                samples.end_time,
                &self.composition,
                &samples.end_positions,
                &samples.end_velocities,
                &samples.mean_positions(),
            )?;
        }
        Ok(())
    }

    fn on_abort(&mut self, last_good: &EnsembleState, _error: &IntegratorError) -> Result<(), IoError> {
        write_snapshot(
            &self.dir.join(LAST_GOOD_FILE),
            last_good.time,
            &self.composition,
            &last_good.positions,
            &last_good.velocities,
            &last_good.positions,
        )
    }

    fn finish(&mut self) -> Result<(), IoError> {
        self.timeseries.flush()
    }
}

/// Snapshot files of a run directory in period order.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(u64, PathBuf)>, IoError> {
    let snaps = dir.join(SNAPSHOT_DIR);
    let mut found = Vec::new();
    for entry in fs::read_dir(&snaps).map_err(io_err(&snaps))? {
        let path = entry.map_err(io_err(&snaps))?.path();
        let period = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("period_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(p) = period {
            found.push((p, path));
        }
    }
    found.sort();
    Ok(found)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub config: ScenarioConfig,
    pub report: StructureReport,
    /// Periods covered by the averaging window.
    pub first_period: u64,
    pub last_period: u64,
}

/// Rebuild the structure report from the final window of stored snapshots
/// and write the plot data.
pub fn analyze_directory(dir: &Path) -> Result<Analysis, RunError> {
    let scenario = dir.join(SCENARIO_FILE);
    let text = fs::read_to_string(&scenario).map_err(io_err(&scenario))?;
    let config = parse_scenario(&text)?;
    let composition = config.composition();
    let snaps = list_snapshots(dir)?;
    let window_len = config.diagnostics.window_periods;
    // Longest run of consecutive periods at the end.
    let mut start = snaps.len();
    while start > 0 && (start == snaps.len() || snaps[start - 1].0 + 1 == snaps[start].0) {
        start -= 1;
        if snaps.len() - start == window_len {
            break;
        }
    }
    let tail = &snaps[start..];
    if tail.len() < window_len {
        return Err(crate::error::DiagnosticsError::WindowTooShort { periods: tail.len(), required: window_len }.into());
    }
    let mut window = Vec::with_capacity(tail.len());
    for (_, path) in tail {
        let snap = read_snapshot(path)?;
        let names_match = snap.species.len() == composition.len()
            && snap.species.iter().enumerate().all(|(i, n)| n == composition.species_of(i).name());
        if !names_match {
            return Err(format_err(path, "particles do not match the stored scenario").into());
        }
        window.push(snap.mean_positions);
    }
    let report = classify_structure(&window, &composition, &config.diagnostics.thresholds)?;
    emit_plot_data(dir, &composition, &report)?;
    Ok(Analysis { config, report, first_period: tail[0].0, last_period: tail[tail.len() - 1].0 })
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "+-_".contains(c) { c } else { '_' }).collect()
}

/// Per-species energy curves and x–z / x–y projections of the
/// window-averaged positions, plus the one-line structure summary.
pub fn emit_plot_data(dir: &Path, composition: &Composition, report: &StructureReport) -> Result<(), IoError> {
    let plot = dir.join(PLOT_DIR);
    fs::create_dir_all(&plot).map_err(io_err(&plot))?;
    let rows = read_timeseries(&dir.join(TIMESERIES_FILE))?;
    for sp in composition.species() {
        let path = plot.join(format!("energy_{}.csv", file_stem(sp.name())));
        let mut w = create_csv(&path)?;
        w.write_record(["t_s", "e_tot_j", "e_sec_j", "e_int_j", "e_micro_j"]).map_err(csv_err(&path))?;
        for r in rows.iter().filter(|r| r.species == sp.name()) {
            let row = [r.time, r.e_total, r.e_secular, r.e_interaction, r.e_micromotion].map(format_float);
            w.write_record(&row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    for (file, second, pick) in [
        ("projection_xz.csv", "z_m", (|x: &Vec3| x.z) as fn(&Vec3) -> f64),
        ("projection_xy.csv", "y_m", |x: &Vec3| x.y),
    ] {
        let path = plot.join(file);
        let mut w = create_csv(&path)?;
        w.write_record(["id", "species", "x_m", second]).map_err(csv_err(&path))?;
        for (i, x) in report.mean_positions.iter().enumerate() {
            let row = [i.to_string(), composition.species_of(i).name().to_string(), format_float(x.x), format_float(pick(x))];
            w.write_record(&row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let summary = plot.join("structure.txt");
    let mut f = File::create(&summary).map_err(io_err(&summary))?;
    writeln!(f, "{}", report.summary()).map_err(io_err(&summary))?;
    Ok(())
}

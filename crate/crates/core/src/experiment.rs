//! Batch runs over random instances: generation, per-annealer tasks, result
//! records and their aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve, write_dynamics_csv, AnnealSchedule, EvolveOptions, FinalSummary, Integrator, DEFAULT_SAMPLES,
    DEFAULT_STEPS, DEFAULT_TOTAL_TIME,
};
use crate::error::{Error, Result};
use crate::graph::{solve_partition_bruteforce, PartitionSolution, ProblemInstance};
use crate::hamiltonian::{AnnealerKind, HamiltonianParts, DEFAULT_ALPHA, DEFAULT_LAMBDA};
use crate::spectral::{
    glass_order_lowk, relevant_gap, spectral_trace, susceptibility_profile, uniform_grid, write_trace_csv,
    TraceColumns, TraceOptions, DEFAULT_DELTA_S, DEFAULT_LEVELS, GAP_GRID, TRACE_GRID,
};

/// Per-annealer work item of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Anneal,
    Spectrum,
    Susceptibility,
    Glass,
    DynamicsTrace,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Anneal,
        Task::Spectrum,
        Task::Susceptibility,
        Task::Glass,
        Task::DynamicsTrace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Anneal => "anneal",
            Task::Spectrum => "spectrum",
            Task::Susceptibility => "susceptibility",
            Task::Glass => "glass",
            Task::DynamicsTrace => "dynamics-trace",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown task {s:?}")))
    }
}

/// Everything a sweep needs; read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rows: usize,
    pub cols: usize,
    pub instance_count: usize,
    pub seed: u64,
    pub annealers: Vec<AnnealerKind>,
    pub total_time: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub steps: usize,
    pub integrator: Integrator,
    /// Points of the exported spectral trace.
    pub trace_grid: usize,
    /// Points of the coarse relevant-gap scan.
    pub gap_grid: usize,
    pub levels: usize,
    pub out_dir: PathBuf,
    pub tasks: Vec<Task>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rows: 3,
            cols: 4,
            instance_count: 100,
            seed: 1,
            annealers: AnnealerKind::ALL.to_vec(),
            total_time: DEFAULT_TOTAL_TIME,
            lambda: DEFAULT_LAMBDA,
            alpha: DEFAULT_ALPHA,
            steps: DEFAULT_STEPS,
            integrator: Integrator::default(),
            trace_grid: TRACE_GRID,
            gap_grid: GAP_GRID,
            levels: DEFAULT_LEVELS,
            out_dir: PathBuf::from("sweep-out"),
            tasks: vec![Task::Anneal],
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    let mut out: Vec<T> = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(item.parse()?);
    }
    Ok(out)
}

impl SweepConfig {
    /// Parses `key = value` lines; `#` starts a comment and unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "rows" => cfg.rows = parse_value(key, value)?,
                "cols" => cfg.cols = parse_value(key, value)?,
                "instance_count" => cfg.instance_count = parse_value(key, value)?,
                "seed" => cfg.seed = parse_value(key, value)?,
                "annealers" => {
                    let mut list: Vec<AnnealerKind> = parse_list(value)?;
                    list.dedup();
                    cfg.annealers = list;
                }
                "total_time" => cfg.total_time = parse_value(key, value)?,
                "lambda" => cfg.lambda = parse_value(key, value)?,
                "alpha" => cfg.alpha = parse_value(key, value)?,
                "steps" => cfg.steps = parse_value(key, value)?,
                "integrator" => cfg.integrator = value.parse()?,
                "trace_grid" => cfg.trace_grid = parse_value(key, value)?,
                "gap_grid" => cfg.gap_grid = parse_value(key, value)?,
                "levels" => cfg.levels = parse_value(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "tasks" => cfg.tasks = parse_list(value)?,
                other => return Err(Error::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows * self.cols;
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!("{}x{} lattice needs an even, positive site count", self.rows, self.cols)));
        }
        if self.instance_count == 0 {
            return Err(Error::invalid("instance_count must be at least 1"));
        }
        if self.annealers.is_empty() || self.tasks.is_empty() {
            return Err(Error::invalid("at least one annealer and one task are required"));
        }
        if !(self.total_time > 0.0) || self.steps == 0 {
            return Err(Error::invalid("total_time and steps must be positive"));
        }
        if self.trace_grid < 2 || self.gap_grid < 3 || self.levels == 0 {
            return Err(Error::invalid("trace_grid >= 2, gap_grid >= 3 and levels >= 1 are required"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    fn has(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }
}

/// Seed of instance `index`, independent of how many instances are drawn.
pub fn instance_seed(sweep_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(sweep_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

pub fn instance_id(n: usize, sweep_seed: u64, index: usize) -> String {
    format!("{n}_{sweep_seed}_{index}")
}

/// Instances `0..count` of the ensemble labelled by `sweep_seed`.
pub fn generate_instances(rows: usize, cols: usize, count: usize, sweep_seed: u64) -> Result<Vec<(String, ProblemInstance)>> {
    (0..count)
        .map(|i| {
            let inst = ProblemInstance::random(rows, cols, instance_seed(sweep_seed, i))?;
            Ok((instance_id(rows * cols, sweep_seed, i), inst))
        })
        .collect()
}

/// Writes `{id}.json` files into `dir`; returns their paths.
pub fn write_instances(dir: &Path, instances: &[(String, ProblemInstance)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    instances
        .iter()
        .map(|(id, inst)| {
            let path = dir.join(format!("{id}.json"));
            inst.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance_id: String,
    pub annealer: AnnealerKind,
    pub n: usize,
    #[serde(rename = "D")]
    pub degeneracy: usize,
    pub min_cut: u32,
    #[serde(rename = "P_s_final")]
    pub p_s_final: Option<f64>,
    pub relevant_gap: Option<f64>,
    pub runtime_seconds: f64,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_from(file)
}

pub fn read_records_from<R: std::io::Read>(input: R) -> Result<Vec<ResultRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn write_records<W: Write>(out: W, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Writes through a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write(&mut file)?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Outcome of [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub records: Vec<ResultRecord>,
    pub records_path: PathBuf,
    /// Tasks skipped because a completed record already existed.
    pub resumed: usize,
    pub failed: usize,
}

struct Prepared {
    id: String,
    instance: ProblemInstance,
    solution: PartitionSolution,
}

/// Runs every `(instance, annealer)` task of `config`.
///
/// Layout under `out_dir`: `instances/{id}.json`, `parts/{id}_{annealer}.csv`
/// (one record each, kept for resuming), `traces/` for the optional per-task
/// exports and the merged `records.csv`. Task failures are recorded with a
/// `failed` status and retried on the next run.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    config.validate()?;
    let out = &config.out_dir;
    let parts_dir = out.join("parts");
    let traces_dir = out.join("traces");
    for dir in [out, &parts_dir, &traces_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let instances = generate_instances(config.rows, config.cols, config.instance_count, config.seed)?;
    write_instances(&out.join("instances"), &instances)?;

    let prepared: Vec<Prepared> = instances
        .into_par_iter()
        .map(|(id, instance)| {
            let solution = solve_partition_bruteforce(&instance.graph)?;
            Ok(Prepared { id, instance, solution })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, AnnealerKind)> = (0..prepared.len())
        .flat_map(|i| config.annealers.iter().map(move |&k| (i, k)))
        .collect();
    let part_path = |i: usize, kind: AnnealerKind| parts_dir.join(format!("{}_{kind}.csv", prepared[i].id));

    let done: Vec<bool> = jobs
        .iter()
        .map(|&(i, kind)| {
            let path = part_path(i, kind);
            path.exists()
                && read_records(&path)
                    .map(|r| r.len() == 1 && r[0].is_ok())
                    .unwrap_or(false)
        })
        .collect();
    let resumed = done.iter().filter(|&&d| d).count();
    if resumed > 0 {
        log::info!("resuming: {resumed} of {} tasks already complete", jobs.len());
    }

    jobs.par_iter()
        .zip(&done)
        .filter(|(_, &d)| !d)
        .map(|(&(i, kind), _)| {
            let p = &prepared[i];
            let record = run_task(config, &p.id, &p.instance, &p.solution, kind, &traces_dir);
            let path = part_path(i, kind);
            write_atomic(&path, |f| write_records(f, std::slice::from_ref(&record)))
        })
        .collect::<Result<()>>()?;

    let mut records = Vec::with_capacity(jobs.len());
    for &(i, kind) in &jobs {
        records.extend(read_records(&part_path(i, kind))?);
    }
    let records_path = out.join("records.csv");
    write_atomic(&records_path, |f| write_records(f, &records))?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    Ok(SweepSummary {
        records,
        records_path,
        resumed,
        failed,
    })
}

fn run_task(
    config: &SweepConfig,
    id: &str,
    instance: &ProblemInstance,
    solution: &PartitionSolution,
    kind: AnnealerKind,
    traces_dir: &Path,
) -> ResultRecord {
    let start = Instant::now();
    let mut record = ResultRecord {
        instance_id: id.to_string(),
        annealer: kind,
        n: instance.n(),
        degeneracy: solution.degeneracy(),
        min_cut: solution.min_cut,
        p_s_final: None,
        relevant_gap: None,
        runtime_seconds: 0.0,
        status: "ok".into(),
    };
    if let Err(e) = run_task_inner(config, id, instance, solution, kind, traces_dir, &mut record) {
        log::warn!("{id} {kind}: {e}");
        record.status = format!("failed: {e}");
    }
    record.runtime_seconds = start.elapsed().as_secs_f64();
    record
}

fn run_task_inner(
    config: &SweepConfig,
    id: &str,
    instance: &ProblemInstance,
    solution: &PartitionSolution,
    kind: AnnealerKind,
    traces_dir: &Path,
    record: &mut ResultRecord,
) -> Result<()> {
    let parts = HamiltonianParts::build(instance, kind, config.lambda, config.alpha)?;
    let d = solution.degeneracy();

    if config.has(Task::Anneal) || config.has(Task::DynamicsTrace) {
        let schedule = AnnealSchedule::new(config.total_time, config.lambda)?;
        let with_trace = config.has(Task::DynamicsTrace);
        let opts = EvolveOptions {
            steps: config.steps,
            samples: if with_trace { DEFAULT_SAMPLES } else { 2 },
            integrator: config.integrator,
            ..Default::default()
        };
        let trace = evolve(&parts, &schedule, solution, &opts)?;
        record.p_s_final = Some(trace.final_success());
        if with_trace {
            let path = traces_dir.join(format!("{id}_{kind}_dynamics.csv"));
            write_atomic(&path, |f| write_dynamics_csv(f, &trace))?;
            let summary = FinalSummary {
                instance_id: id.to_string(),
                annealer: kind.to_string(),
                total_time: config.total_time,
                steps: config.steps,
                p_s_final: trace.final_success(),
                degeneracy: d,
                min_cut: solution.min_cut,
            };
            let path = traces_dir.join(format!("{id}_{kind}_final.json"));
            let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
            fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        }
    }

    let spectral_tasks = [Task::Spectrum, Task::Susceptibility, Task::Glass];
    if spectral_tasks.iter().any(|&t| config.has(t)) {
        let glass = config.has(Task::Glass);
        let grid = uniform_grid(config.trace_grid);
        let trace = spectral_trace(
            &parts,
            &grid,
            &TraceOptions {
                levels: config.levels,
                degeneracy: d,
                keep_vectors: glass,
                ..Default::default()
            },
        )?;
        let gap = if config.gap_grid == config.trace_grid {
            relevant_gap(&parts, &trace, d)?
        } else {
            let coarse = spectral_trace(
                &parts,
                &uniform_grid(config.gap_grid),
                &TraceOptions {
                    levels: d + 1,
                    degeneracy: d,
                    keep_vectors: false,
                    ..Default::default()
                },
            )?;
            relevant_gap(&parts, &coarse, d)?
        };
        record.relevant_gap = Some(gap.relevant_gap);

        let mut extra = TraceColumns::default();
        if glass {
            extra.q_gs = Some(glass_order_lowk(&trace, &parts.basis, 1)?);
            extra.q_low = Some(glass_order_lowk(&trace, &parts.basis, trace.k.min(DEFAULT_LEVELS))?);
        }
        if config.has(Task::Susceptibility) {
            extra.susceptibility = Some(susceptibility_profile(&parts, &grid, DEFAULT_DELTA_S)?);
        }
        let path = traces_dir.join(format!("{id}_{kind}_spectrum.csv"));
        write_atomic(&path, |f| write_trace_csv(f, &trace, &extra))?;
    }
    Ok(())
}

/// Mean success probability per degeneracy bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyRow {
    pub degeneracy: usize,
    /// Distinct instances in the bin.
    pub instances: usize,
    /// `(annealer, mean P_s, records)` for every annealer present in the bin.
    pub means: Vec<(AnnealerKind, f64, usize)>,
}

impl DegeneracyRow {
    pub fn mean(&self, kind: AnnealerKind) -> Option<f64> {
        self.means.iter().find(|m| m.0 == kind).map(|m| m.1)
    }
}

/// Groups successful records with a final success probability by `D`.
///
/// The `instances` column doubles as the degeneracy histogram.
pub fn aggregate_by_degeneracy(records: &[ResultRecord]) -> Result<Vec<DegeneracyRow>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let mut bins: BTreeMap<usize, (Vec<&str>, BTreeMap<AnnealerKind, (f64, usize)>)> = BTreeMap::new();
    for r in records {
        let bin = bins.entry(r.degeneracy).or_default();
        bin.0.push(&r.instance_id);
        if let (true, Some(p)) = (r.is_ok(), r.p_s_final) {
            let acc = bin.1.entry(r.annealer).or_insert((0.0, 0));
            acc.0 += p;
            acc.1 += 1;
        }
    }
    Ok(bins
        .into_iter()
        .map(|(d, (mut ids, sums))| {
            ids.sort_unstable();
            ids.dedup();
            DegeneracyRow {
                degeneracy: d,
                instances: ids.len(),
                means: sums
                    .into_iter()
                    .map(|(k, (sum, count))| (k, sum / count as f64, count))
                    .collect(),
            }
        })
        .collect())
}

/// Writes `D, instances, mean_<annealer>...` for the annealers in `rows`.
pub fn write_degeneracy_table<W: Write>(out: W, rows: &[DegeneracyRow]) -> Result<()> {
    let kinds: Vec<AnnealerKind> = AnnealerKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.mean(*k).is_some()))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["D".to_string(), "instances".to_string()];
    header.extend(kinds.iter().map(|k| format!("mean_P_s_{k}")));
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        let mut row = vec![r.degeneracy.to_string(), r.instances.to_string()];
        row.extend(kinds.iter().map(|&k| r.mean(k).map(|m| format!("{m:.10}")).unwrap_or_default()));
        w.write_record(&row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// One instance of a pairwise comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub instance_id: String,
    pub p_a: f64,
    pub p_b: f64,
    pub degeneracy: usize,
}

/// Pairwise comparison of two annealers over shared instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: AnnealerKind,
    pub b: AnnealerKind,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// Instances with a usable record for only one of the two annealers.
    pub unpaired: usize,
    pub scatter: Vec<ScatterPoint>,
}

impl Comparison {
    pub fn paired(&self) -> usize {
        self.wins_a + self.wins_b + self.ties
    }

    fn rate(&self, count: usize) -> f64 {
        if self.paired() == 0 {
            0.0
        } else {
            count as f64 / self.paired() as f64
        }
    }

    /// Fraction of instances with `P_s(a) > P_s(b)`.
    pub fn win_rate(&self) -> f64 {
        self.rate(self.wins_a)
    }

    pub fn loss_rate(&self) -> f64 {
        self.rate(self.wins_b)
    }

    pub fn tie_rate(&self) -> f64 {
        self.rate(self.ties)
    }
}

pub fn compare_annealers(records: &[ResultRecord], a: AnnealerKind, b: AnnealerKind) -> Comparison {
    let mut by_id: BTreeMap<&str, (Option<f64>, Option<f64>, usize)> = BTreeMap::new();
    for r in records {
        if r.annealer != a && r.annealer != b {
            continue;
        }
        let entry = by_id.entry(&r.instance_id).or_insert((None, None, r.degeneracy));
        let p = r.p_s_final.filter(|_| r.is_ok());
        if r.annealer == a {
            entry.0 = p;
        }
        if r.annealer == b {
            entry.1 = p;
        }
    }
    let mut cmp = Comparison {
        a,
        b,
        wins_a: 0,
        wins_b: 0,
        ties: 0,
        unpaired: 0,
        scatter: Vec::new(),
    };
    for (id, (pa, pb, d)) in by_id {
        match (pa, pb) {
            (Some(pa), Some(pb)) => {
                if pa > pb {
                    cmp.wins_a += 1;
                } else if pb > pa {
                    cmp.wins_b += 1;
                } else {
                    cmp.ties += 1;
                }
                cmp.scatter.push(ScatterPoint {
                    instance_id: id.to_string(),
                    p_a: pa,
                    p_b: pb,
                    degeneracy: d,
                });
            }
            _ => cmp.unpaired += 1,
        }
    }
    cmp
}

/// Writes the scatter data `instance_id, P_s_<a>, P_s_<b>, D`.
pub fn write_scatter<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "instance_id".to_string(),
        format!("P_s_{}", cmp.a),
        format!("P_s_{}", cmp.b),
        "D".to_string(),
    ])
    .map_err(|e| Error::Parse(e.to_string()))?;
    for p in &cmp.scatter {
        w.write_record([
            p.instance_id.clone(),
            format!("{:.10}", p.p_a),
            format!("{:.10}", p.p_b),
            p.degeneracy.to_string(),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Parses `a:b` into two annealers.
pub fn parse_pair(text: &str) -> Result<(AnnealerKind, AnnealerKind)> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("expected annealer pair a:b, got {text:?}")))?;
    Ok((a.parse()?, b.parse()?))
}

/// Distinct instance counts per degeneracy.
pub fn degeneracy_histogram(records: &[ResultRecord]) -> BTreeMap<usize, usize> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in records {
        seen.insert(&r.instance_id, r.degeneracy);
    }
    let mut hist = BTreeMap::new();
    for d in seen.into_values() {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

//! Simulation-study harness: simulate realizations of the exponential
//! target, observe them on growing windows, fit K-component representations
//! and aggregate the parameter errors against the ansatz.
//!
//! Every work item `(realization, K, window)` draws its randomness from
//! generators keyed on the base seed and the item, so results do not depend
//! on scheduling or on how often the study was interrupted.

mod config;
mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::infer::{fit_mle_from_starts, jitter_params, poisson_start, FitOptions};
use crate::kernel::KernelConvention;
use crate::params::{MvParams, SquareMatrix};
use crate::partition::MarkPartition;
use crate::simulate::{relabel_uniform, simulate_target, stream_rng, SimConfig};
use crate::target::TargetSpec;

pub use config::{log_spaced_counts, LogSpacing, StudyConfig};
pub use output::{
    emit_plots, mae_slope, read_rows, rows_to_csv, summarize, summary_to_csv, StudyRow, SummaryRow,
    ROWS_HEADER, SUMMARY_HEADER,
};

pub const ROWS_FILE: &str = "rows.csv";
pub const FITS_FILE: &str = "fits.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Prefixes of `stream` ending at its `n`-th event for each `n` in `counts`.
pub fn make_windows(stream: &EventStream, counts: &[usize]) -> Result<Vec<EventStream>> {
    counts.iter().map(|&n| stream.prefix(n)).collect()
}

/// θ* for K uniform labels: `λ0 = μ/K`, `α = α*/K`, `β = β*` everywhere,
/// with the unnormalised kernel `e^{−βt}`.
pub fn ansatz_truth(k: usize, background: f64, excitation: f64, decay: f64) -> Result<MvParams> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let kf = k as f64;
    MvParams::new(
        vec![background / kf; k],
        SquareMatrix::filled(k, excitation / kf),
        SquareMatrix::filled(k, decay),
        KernelConvention::Unnormalized,
    )
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Continue from the rows already in the output directory.
    pub resume: bool,
    /// Stop after this many new work items, leaving the study unfinished.
    pub max_items: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub rows: Vec<StudyRow>,
    pub summary: Vec<SummaryRow>,
    /// False when `max_items` stopped the run early.
    pub complete: bool,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitRecord {
    realization: usize,
    #[serde(rename = "K")]
    k: usize,
    target_n: usize,
    converged: bool,
    loglik: Option<f64>,
    params: Option<MvParams>,
    error: Option<String>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derived_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, p| splitmix(acc ^ splitmix(*p)))
}

struct Sink {
    rows: File,
    fits: File,
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_fit_records(path: &Path) -> Result<Vec<FitRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        // a partial trailing record from an interrupted run is skipped
        if let Ok(rec) = serde_json::from_str::<FitRecord>(&line) {
            out.push(rec);
        }
    }
    Ok(out)
}

fn manifest(cfg: &StudyConfig, counts: &[usize]) -> serde_json::Value {
    let seeds: Vec<_> = (0..cfg.realizations)
        .map(|s| json!({ "realization": s, "seed": cfg.seed, "stream": s }))
        .collect();
    json!({
        "config_hash": cfg.hash(),
        "base_seed": cfg.seed,
        "realizations": cfg.realizations,
        "k_values": cfg.k_values,
        "target_counts": counts,
        "horizon": cfg.horizon,
        "truth": { "background": cfg.background, "excitation": cfg.excitation, "decay": cfg.decay },
        "seeds": seeds,
    })
}

pub fn run_study(cfg: &StudyConfig, opts: &RunOptions) -> Result<StudyOutcome> {
    cfg.validate()?;
    let counts = cfg.counts()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows_path = dir.join(ROWS_FILE);
    let fits_path = dir.join(FITS_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = manifest(cfg, &counts);

    let mut previous = Vec::new();
    let mut previous_fits = Vec::new();
    if opts.resume && rows_path.exists() {
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let old: serde_json::Value = serde_json::from_str(&text)?;
            if old["config_hash"] != manifest["config_hash"] {
                return Err(Error::Config(
                    "output directory holds a study with a different configuration".into(),
                ));
            }
        }
        previous = read_rows(&rows_path)?;
        previous_fits = read_fit_records(&fits_path)?;
    }
    // rewrite the files so an interrupted trailing line does not linger
    write_file(&rows_path, &rows_to_csv(&previous))?;
    let done: BTreeSet<(usize, usize, usize)> = previous.iter().map(StudyRow::key).collect();
    previous_fits.retain(|f| done.contains(&(f.realization, f.k, f.target_n)));
    let mut fits_body = String::new();
    for f in &previous_fits {
        fits_body.push_str(&serde_json::to_string(f)?);
        fits_body.push('\n');
    }
    write_file(&fits_path, &fits_body)?;
    write_file(&manifest_path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;

    let pending: BTreeMap<usize, Vec<(usize, usize)>> = (0..cfg.realizations)
        .map(|s| {
            let items = cfg
                .k_values
                .iter()
                .flat_map(|&k| counts.iter().map(move |&n| (k, n)))
                .filter(|&(k, n)| !done.contains(&(s, k, n)))
                .collect::<Vec<_>>();
            (s, items)
        })
        .filter(|(_, items)| !items.is_empty())
        .collect();

    let sink = Mutex::new(Sink {
        rows: open_append(&rows_path)?,
        fits: open_append(&fits_path)?,
    });
    let new_rows = Mutex::new(Vec::new());
    let started = AtomicUsize::new(0);
    let budget = opts.max_items.unwrap_or(usize::MAX);
    let io_error: Mutex<Option<Error>> = Mutex::new(None);

    let record = |row: StudyRow, fit: FitRecord| {
        let mut guard = sink.lock().expect("sink lock");
        let res = writeln!(guard.rows, "{}", row.to_csv_line())
            .and_then(|_| guard.rows.flush())
            .and_then(|_| writeln!(guard.fits, "{}", serde_json::to_string(&fit).expect("record serialises")))
            .and_then(|_| guard.fits.flush());
        drop(guard);
        if let Err(e) = res {
            io_error.lock().expect("error lock").get_or_insert(Error::io(&rows_path, e));
        }
        new_rows.lock().expect("rows lock").push(row);
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().for_each(|(&s, items)| {
            if started.load(Ordering::SeqCst) >= budget {
                return;
            }
            let ground = simulate_realization(cfg, s);
            let by_k: BTreeMap<usize, Vec<usize>> = items.iter().fold(BTreeMap::new(), |mut m, &(k, n)| {
                m.entry(k).or_insert_with(Vec::new).push(n);
                m
            });
            by_k.par_iter().for_each(|(&k, ns)| {
                let labelled = ground.as_ref().map_err(|e| e.to_string()).and_then(|g| {
                    let mut rng = stream_rng(derived_seed(cfg.seed, &[k as u64]), s as u64);
                    relabel_uniform(g, k, &mut rng).map_err(|e| e.to_string())
                });
                ns.par_iter().for_each(|&n| {
                    if started.fetch_add(1, Ordering::SeqCst) >= budget {
                        return;
                    }
                    let (row, fit) = run_item(cfg, s, k, n, labelled.as_ref());
                    record(row, fit);
                });
            });
        });
    });
    if let Some(e) = io_error.into_inner().expect("error lock") {
        return Err(e);
    }
    drop(sink);

    let mut rows = previous;
    rows.extend(new_rows.into_inner().expect("rows lock"));
    rows.sort_by_key(StudyRow::key);
    let expected = cfg.realizations * cfg.k_values.len() * counts.len();
    let complete = rows.len() == expected;
    let summary = summarize(&rows);
    if complete {
        write_file(&rows_path, &rows_to_csv(&rows))?;
        let mut fits = read_fit_records(&fits_path)?;
        fits.sort_by_key(|f| (f.realization, f.k, f.target_n));
        let mut body = String::new();
        for f in &fits {
            body.push_str(&serde_json::to_string(f)?);
            body.push('\n');
        }
        write_file(&fits_path, &body)?;
        write_file(&dir.join(SUMMARY_FILE), &summary_to_csv(&summary))?;
        if !summary.is_empty() {
            emit_plots(&summary, &dir)?;
        }
    }
    Ok(StudyOutcome {
        rows,
        summary,
        complete,
        output_dir: dir,
    })
}

/// The single-label ground process of realization `s`.
fn simulate_realization(cfg: &StudyConfig, s: usize) -> Result<EventStream> {
    let spec = TargetSpec::exponential_uniform_labels(1, cfg.background, cfg.excitation, cfg.decay)?;
    let sim = SimConfig::new(cfg.horizon, cfg.seed)?.with_stream(s as u64);
    simulate_target(&spec, &sim)
}

fn run_item(
    cfg: &StudyConfig,
    s: usize,
    k: usize,
    n: usize,
    labelled: std::result::Result<&EventStream, &String>,
) -> (StudyRow, FitRecord) {
    let failed = |achieved: usize, msg: String| {
        (
            StudyRow {
                realization: s,
                k,
                target_n: n,
                achieved_n: achieved,
                l1_error: f64::NAN,
                converged: false,
                runtime_s: 0.0,
            },
            FitRecord {
                realization: s,
                k,
                target_n: n,
                converged: false,
                loglik: None,
                params: None,
                error: Some(msg),
            },
        )
    };
    let stream = match labelled {
        Ok(st) => st,
        Err(msg) => return failed(0, msg.clone()),
    };
    let attempt = || -> Result<(StudyRow, FitRecord)> {
        let window = stream.prefix(n)?;
        let partition = MarkPartition::uniform(window.space(), k)?;
        let truth = ansatz_truth(k, cfg.background, cfg.excitation, cfg.decay)?;
        let mut rng = stream_rng(derived_seed(cfg.seed, &[k as u64, n as u64]), s as u64);
        let starts = vec![
            jitter_params(&truth, cfg.jitter, &mut rng),
            poisson_start(&partition, &window, KernelConvention::Unnormalized)?,
        ];
        let opts = FitOptions {
            restarts: 0,
            ..FitOptions::default()
        };
        let fit = fit_mle_from_starts(&partition, &window, &starts, &opts)?;
        let err = truth.l1_distance(&fit.params)?;
        Ok((
            StudyRow {
                realization: s,
                k,
                target_n: n,
                achieved_n: window.len(),
                l1_error: err,
                converged: fit.converged,
                runtime_s: if cfg.record_runtime { fit.runtime_secs } else { 0.0 },
            },
            FitRecord {
                realization: s,
                k,
                target_n: n,
                converged: fit.converged,
                loglik: Some(fit.loglik),
                params: Some(fit.params),
                error: None,
            },
        ))
    };
    attempt().unwrap_or_else(|e| failed(stream.len().min(n), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::MarkSpace;
    use crate::stability::branching_matrix;

    fn tiny(dir: &Path) -> StudyConfig {
        StudyConfig {
            realizations: 2,
            horizon: 120.0,
            target_counts: Some(vec![40, 80]),
            log_spaced: None,
            k_values: vec![1, 2],
            background: 1.0,
            excitation: 1.0,
            decay: 2.0,
            seed: 11,
            workers: 2,
            output_dir: dir.to_path_buf(),
            jitter: 0.2,
            record_runtime: false,
        }
    }

    #[test]
    fn windows_are_nested_prefixes() {
        let spec = TargetSpec::exponential_uniform_labels(1, 1.0, 1.0, 2.0).unwrap();
        let s = simulate_target(&spec, &SimConfig::new(100.0, 1).unwrap()).unwrap();
        let w = make_windows(&s, &[10, 20]).unwrap();
        assert_eq!(w[0].len(), 10);
        assert_eq!(w[1].events()[..10], w[0].events()[..]);
        assert_eq!(w[0].horizon(), s.events()[9].time);
        match make_windows(&s, &[s.len() + 5]) {
            Err(Error::InsufficientEvents { needed, available }) => {
                assert_eq!((needed, available), (s.len() + 5, s.len()))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truth_examples() {
        let t1 = ansatz_truth(1, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(t1.to_vec(), vec![1.0, 1.0, 2.0]);
        let t2 = ansatz_truth(2, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(t2.background, vec![0.5, 0.5]);
        assert!(t2.excitation.as_slice().iter().all(|a| *a == 0.5));
        assert!(t2.decay.as_slice().iter().all(|b| *b == 2.0));
        for k in 1..=6 {
            let p = MarkPartition::uniform(&MarkSpace::label_range(k).unwrap(), k).unwrap();
            let rho = branching_matrix(&ansatz_truth(k, 1.0, 1.0, 2.0).unwrap(), &p)
                .unwrap()
                .spectral_radius;
            assert!((rho - 0.5).abs() < 1e-12, "K={k}: {rho}");
        }
    }

    #[test]
    fn degenerate_study_has_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StudyConfig {
            realizations: 1,
            target_counts: Some(vec![30]),
            k_values: vec![1],
            ..tiny(dir.path())
        };
        let out = run_study(&cfg, &RunOptions::default()).unwrap();
        assert!(out.complete);
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.summary[0].mae, out.rows[0].l1_error);
        assert_eq!(out.rows[0].achieved_n, 30);
        for f in [ROWS_FILE, FITS_FILE, SUMMARY_FILE, MANIFEST_FILE, "mae.svg", "mae_ci90.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_study(&tiny(a.path()), &RunOptions::default()).unwrap();
        let cfg_b = StudyConfig { workers: 1, ..tiny(b.path()) };
        let partial = run_study(&cfg_b, &RunOptions { resume: false, max_items: Some(3) }).unwrap();
        assert!(!partial.complete);
        let done = run_study(&cfg_b, &RunOptions { resume: true, max_items: None }).unwrap();
        assert!(done.complete);
        for f in [ROWS_FILE, FITS_FILE, SUMMARY_FILE, MANIFEST_FILE] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn resume_rejects_other_config() {
        let dir = tempfile::tempdir().unwrap();
        run_study(&tiny(dir.path()), &RunOptions { resume: false, max_items: Some(1) }).unwrap();
        let other = StudyConfig { seed: 12, ..tiny(dir.path()) };
        assert!(run_study(&other, &RunOptions { resume: true, max_items: None }).is_err());
    }

    #[test]
    fn short_realization_is_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StudyConfig {
            realizations: 1,
            horizon: 5.0,
            target_counts: Some(vec![1000]),
            k_values: vec![1],
            ..tiny(dir.path())
        };
        let out = run_study(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.rows[0].l1_error.is_nan());
        assert!(!out.rows[0].converged);
        assert!(out.summary.is_empty());
    }
}

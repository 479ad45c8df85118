//! Training-triple generation (sketch, ψ, velocity) from randomized
//! simulations, plus the MSE metric and min-max normalization.
//!
//! Randomness comes from ChaCha8: the config seed keys the generator and each
//! simulation reads its own stream (`set_stream(sim_id)`), so output does not
//! depend on how simulations are scheduled across threads.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{read_field, write_field, Field, FieldKind, ScalarField};
use crate::hhd::stream_function;
use crate::poisson::SolverOptions;
use crate::render::save_png;
use crate::sim::{self, Emitter, ForceMode, GridConfig, SimConfig, SimState};
use crate::streamline::{render_sketch, trace_top, TraceParams, DEFAULT_SEED_COUNT, DEFAULT_SKETCH_SIZE};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Agreement required between a stored ψ and the one re-derived from the
/// stored velocity (both pass through f32 storage).
pub const PSI_CHECK_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub sims: usize,
    pub steps: usize,
    pub snapshot_every: usize,
    pub grid: GridConfig,
    pub dt: f64,
    pub rho: f64,
    pub force_mode: ForceMode,
    pub tol: f64,
    pub f_e_x: [f64; 2],
    pub f_e_y: [f64; 2],
    pub emitter_x: [f64; 2],
    pub emitter_y: [f64; 2],
    pub emitter_r: [f64; 2],
    pub emitter_rate: [f64; 2],
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Streamlines per sketch.
    pub sketch_seeds: usize,
    pub sketch_size: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sims: 10,
            steps: 80,
            snapshot_every: 10,
            grid: GridConfig::default(),
            dt: 0.02,
            rho: 1.0,
            force_mode: ForceMode::Density,
            tol: 1e-10,
            f_e_x: [-0.5, 0.5],
            f_e_y: [0.5, 2.0],
            emitter_x: [0.3, 0.7],
            emitter_y: [0.1, 0.3],
            emitter_r: [0.05, 0.1],
            emitter_rate: [2.0, 8.0],
            seed: 0,
            output_dir: PathBuf::from("dataset"),
            sketch_seeds: DEFAULT_SEED_COUNT,
            sketch_size: DEFAULT_SKETCH_SIZE,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sims == 0 || self.snapshot_every == 0 {
            return Err(Error::InvalidParams("sims and snapshot_every must be at least 1".into()));
        }
        let ranges = [
            ("f_e_x", self.f_e_x),
            ("f_e_y", self.f_e_y),
            ("emitter_x", self.emitter_x),
            ("emitter_y", self.emitter_y),
            ("emitter_r", self.emitter_r),
            ("emitter_rate", self.emitter_rate),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParams(format!("range {name} = [{lo}, {hi}] is empty")));
            }
        }
        self.grid.grid()?;
        Ok(())
    }

    /// Parameters for simulation `sim_id`, drawn from its own PRNG stream.
    pub fn sample_sim(&self, sim_id: usize) -> SimConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sim_id as u64);
        let mut draw = |[lo, hi]: [f64; 2]| if lo < hi { rng.random_range(lo..hi) } else { lo };
        let f_e = [draw(self.f_e_x), draw(self.f_e_y)];
        let emitter = Emitter {
            x: draw(self.emitter_x),
            y: draw(self.emitter_y),
            r: draw(self.emitter_r),
            rate: draw(self.emitter_rate),
        };
        SimConfig {
            grid: self.grid,
            dt: self.dt,
            rho: self.rho,
            f_e,
            force_mode: self.force_mode,
            guidance_gain: 0.0,
            steps: self.steps,
            emitter,
            seed: self.seed,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub sim_id: usize,
    pub frame: usize,
    pub step: usize,
    /// Paths relative to the dataset root.
    pub velocity: String,
    pub psi: String,
    pub sketch: String,
    pub params: SimConfig,
    /// `max |∇·u|·dx` of the in-memory velocity.
    pub divergence: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub records: Vec<DatasetRecord>,
    /// Simulations that aborted, with the reason.
    pub failures: Vec<(usize, String)>,
}

fn run_sim(config: &DatasetConfig, sim_id: usize, root: &Path) -> (Vec<DatasetRecord>, Option<String>) {
    let mut records = Vec::new();
    let outcome = (|| -> Result<()> {
        let cfg = config.sample_sim(sim_id);
        let grid = cfg.grid()?;
        let params = cfg.params()?;
        let rel_dir = format!("sim{sim_id:04}");
        let dir = root.join(&rel_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let solver = SolverOptions::with_tol(config.tol);
        let trace = TraceParams::for_grid(&grid);
        let domain = crate::fields::Vec2::new(grid.width(), grid.height());

        let mut state = SimState::at_rest(grid);
        let mut frame = 0;
        for step in 1..=config.steps {
            state = sim::step(&state, &params, None)?.0;
            if step % config.snapshot_every != 0 {
                continue;
            }
            let (psi, stats) = stream_function(&state.vel, &solver)?;
            if !stats.converged {
                return Err(Error::InvalidParams(format!("stream function solve failed at step {step}")));
            }
            let lines = trace_top(&state.vel, config.sketch_seeds, &trace);
            let sketch = render_sketch(
                lines.iter().map(|l| l.points.as_slice()),
                domain,
                config.sketch_size,
                config.sketch_size,
            )?;
            let stem = format!("frame{frame:04}");
            let rel = |suffix: &str| format!("{rel_dir}/{stem}_{suffix}");
            let record = DatasetRecord {
                id: format!("s{sim_id:04}_f{frame:04}"),
                sim_id,
                frame,
                step,
                velocity: rel("vel.sfld"),
                psi: rel("psi.sfld"),
                sketch: rel("sketch.png"),
                params: cfg.clone(),
                divergence: state.vel.max_abs_divergence() * grid.dx,
            };
            write_field(root.join(&record.velocity), &Field::Mac(state.vel.clone()))?;
            write_field(root.join(&record.psi), &Field::Scalar(psi))?;
            save_png(root.join(&record.sketch), &sketch)?;
            records.push(record);
            frame += 1;
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => (records, None),
        Err(e) => {
            log::error!("simulation {sim_id} aborted: {e}");
            (records, Some(e.to_string()))
        }
    }
}

/// Runs every simulation and writes `manifest.jsonl` under `output_dir`.
/// A failing simulation is logged and skipped; its completed snapshots stay
/// in the manifest.
pub fn generate(config: &DatasetConfig) -> Result<Manifest> {
    config.validate()?;
    let root = &config.output_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let results: Vec<(Vec<DatasetRecord>, Option<String>)> =
        (0..config.sims).into_par_iter().map(|id| run_sim(config, id, root)).collect();

    let path = root.join(MANIFEST_NAME);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut manifest = Manifest::default();
    for (sim_id, (records, failure)) in results.into_iter().enumerate() {
        for r in records {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            manifest.records.push(r);
        }
        if let Some(f) = failure {
            manifest.failures.push((sim_id, f));
        }
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordCheck {
    pub id: String,
    /// Relative L2 gap between the stored ψ and one re-derived from the
    /// stored velocity.
    pub psi_rel_diff: f64,
    /// `max |∇·u|·dx` of the stored (f32) velocity.
    pub stored_divergence: f64,
    pub ok: bool,
}

/// Re-derives ψ from a record's stored velocity and compares.
pub fn check_record(root: &Path, record: &DatasetRecord) -> Result<RecordCheck> {
    let vel = read_field(root.join(&record.velocity))?
        .into_mac()
        .ok_or_else(|| Error::KindMismatch { expected: "MAC vector".into(), found: "scalar".into() })?;
    let psi = read_field(root.join(&record.psi))?
        .into_scalar()
        .ok_or_else(|| Error::KindMismatch { expected: "node scalar".into(), found: "MAC vector".into() })?;
    let sketch_path = root.join(&record.sketch);
    image::open(&sketch_path)?;
    let (derived, _) = stream_function(&vel, &SolverOptions::with_tol(record.params.tol))?;
    let diff: f64 = derived.data.iter().zip(&psi.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let psi_rel_diff = diff / psi.norm_l2().max(f64::MIN_POSITIVE);
    let psi_rel_diff = if psi.norm_l2() == 0.0 && diff == 0.0 { 0.0 } else { psi_rel_diff };
    Ok(RecordCheck {
        id: record.id.clone(),
        psi_rel_diff,
        stored_divergence: vel.max_abs_divergence() * vel.grid.dx,
        ok: psi_rel_diff <= PSI_CHECK_TOL,
    })
}

/// Mean squared difference over all stored values (MAC: u and v together).
pub fn mse(a: &Field, b: &Field) -> Result<f64> {
    if a.kind() != b.kind() {
        return Err(Error::KindMismatch { expected: a.kind().to_string(), found: b.kind().to_string() });
    }
    a.grid().check_same(b.grid())?;
    let n = a.len();
    let sum: f64 = a.values().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / n as f64)
}

/// `(x − min)/(max − min)`; a constant input maps to 0.5 everywhere.
pub fn normalize_values(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range.is_nan() || range <= 0.0 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|&x| ((x - lo) / range).clamp(0.0, 1.0)).collect()
}

pub fn normalize01(field: &ScalarField) -> ScalarField {
    ScalarField { data: normalize_values(&field.data), ..field.clone() }
}

/// Normalizes a whole field file payload jointly (MAC: over u and v).
pub fn normalize01_field(field: &Field) -> Field {
    match field {
        Field::Scalar(s) => Field::Scalar(normalize01(s)),
        Field::Mac(m) => {
            let joined: Vec<f64> = m.u.iter().chain(&m.v).copied().collect();
            let mut norm = normalize_values(&joined);
            let v = norm.split_off(m.u.len());
            Field::Mac(crate::fields::MacVelocity { grid: m.grid, u: norm, v })
        }
    }
}

/// Kind label used by the CLI.
pub fn kind_name(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::NodeScalar => "node",
        FieldKind::CellScalar => "cell",
        FieldKind::Mac => "mac",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, MacVelocity, Siting};
    use proptest::prelude::*;

    fn cell(data: Vec<f64>, nx: usize, ny: usize) -> Field {
        Field::Scalar(ScalarField { grid: Grid::unit(nx, ny).unwrap(), siting: Siting::Cell, data })
    }

    #[test]
    fn mse_examples() {
        let a = cell(vec![0.0; 4], 2, 2);
        let b = cell(vec![1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(mse(&a, &b).unwrap(), 7.5);
        assert_eq!(mse(&b, &b).unwrap(), 0.0);
        let f = cell((0..16).map(|x| x as f64 * 0.3).collect(), 4, 4);
        let g = f.map(|x| x + 0.1);
        assert!((mse(&f, &g).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mse_rejects_mismatch() {
        let a = cell(vec![0.0; 4], 2, 2);
        let b = cell(vec![0.0; 6], 3, 2);
        assert!(mse(&a, &b).is_err());
        let m = Field::Mac(MacVelocity::zeros(Grid::unit(2, 2).unwrap()));
        assert!(mse(&a, &m).is_err());
    }

    #[test]
    fn mac_mse_covers_both_components() {
        let g = Grid::unit(2, 2).unwrap();
        let a = Field::Mac(MacVelocity::zeros(g));
        let mut m = MacVelocity::zeros(g);
        m.v[0] = 2.0;
        assert_eq!(mse(&a, &Field::Mac(m)).unwrap(), 4.0 / 12.0);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_values(&[-2.0, 0.0, 2.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_values(&[3.0, 3.0]), vec![0.5, 0.5]);
        let unit = [0.0, 0.25, 1.0, 0.5];
        assert_eq!(normalize_values(&unit), unit.to_vec());
    }

    #[test]
    fn sampling_is_per_sim_and_reproducible() {
        let cfg = DatasetConfig { seed: 5, ..DatasetConfig::default() };
        assert_eq!(cfg.sample_sim(3), cfg.sample_sim(3));
        assert_ne!(cfg.sample_sim(3).f_e, cfg.sample_sim(4).f_e);
        let s = cfg.sample_sim(2);
        assert!(s.f_e[1] >= 0.5 && s.f_e[1] <= 2.0);
        let bad = DatasetConfig { emitter_r: [0.2, 0.1], ..DatasetConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DatasetConfig { snapshot_every: 0, ..DatasetConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_run_record_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            sims: 1,
            steps: 4,
            snapshot_every: 2,
            grid: GridConfig { nx: 16, ny: 16, dx: None },
            output_dir: dir.path().to_path_buf(),
            sketch_size: 64,
            ..DatasetConfig::default()
        };
        let m = generate(&cfg).unwrap();
        assert_eq!(m.records.len(), 2);
        assert!(m.failures.is_empty());
        let back = read_manifest(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m.records);
        for r in &back {
            let check = check_record(dir.path(), r).unwrap();
            assert!(check.ok, "{check:?}");
        }
    }

    proptest! {
        #[test]
        fn mse_properties(
            a in proptest::collection::vec(-10.0f64..10.0, 9),
            b in proptest::collection::vec(-10.0f64..10.0, 9),
            c in -5.0f64..5.0,
        ) {
            let fa = cell(a, 3, 3);
            let fb = cell(b, 3, 3);
            let ab = mse(&fa, &fb).unwrap();
            prop_assert_eq!(ab, mse(&fb, &fa).unwrap());
            prop_assert!(ab >= 0.0);
            let scaled = mse(&fa.map(|x| c * x), &fb.map(|x| c * x)).unwrap();
            prop_assert!((scaled - c * c * ab).abs() <= 1e-12 * (c * c * ab).max(1e-300));
        }

        #[test]
        fn normalize_is_monotone_and_idempotent(values in proptest::collection::vec(-100.0f64..100.0, 2..40)) {
            let n = normalize_values(&values);
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(n[i] <= n[j]);
                    }
                }
            }
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                let twice = normalize_values(&n);
                for (x, y) in n.iter().zip(&twice) {
                    prop_assert!((x - y).abs() <= 1e-15);
                }
            }
        }
    }
}

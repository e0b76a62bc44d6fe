//! Batch experiments: one phantom, one mask and one noise level, swept over
//! algorithms, penalties and regularization weights.
//!
//! A spec is a TOML file:
//!
//! ```toml
//! timing = true
//! lambdas = [1e-4, 1e-3]
//!
//! [phantom]
//! name = "shepp_like"
//! width = 64
//! seed = 0
//!
//! [mask]
//! kind = "random"
//! fraction = 0.2
//! seed = 1
//!
//! [noise]
//! sigma = 0.0
//!
//! [solver]
//! beta_init = 1e-6
//! search_radius = 1
//!
//! [[penalties]]
//! kind = "lp_thresholded"
//! p = 0.5
//! T = 100.0
//!
//! [[runs]]
//! algorithm = "nls"
//!
//! [[runs]]
//! algorithm = "tv"
//! lambdas = [1e-2, 1e-1]
//! ```
//!
//! Each run expands to one cell per `(penalty, λ)` pair (TV ignores the
//! penalties). Cell 0 is always the zero-filled reconstruction.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexImage;
use crate::io::{save_cimg, save_magnitude_png};
use crate::irw::{run_irw, IrwConfig};
use crate::metrics::{psnr_db, snr_db};
use crate::model::{measure, MeasurementModel};
use crate::nls::{run_nls, SolverConfig, SolverSettings, SolverTrace};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::phantom::{make_phantom, MAX_INTENSITY};
use crate::sampling::{gen_mask, MaskKind, MaskParams, SamplingMask};

/// Scale applied to error images before export.
pub const ERROR_IMAGE_GAIN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Nls,
    Irw,
    /// Local anisotropic TV solved by the NLS machinery.
    #[serde(alias = "tv_config", alias = "tv-config")]
    Tv,
    ZeroFilled,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Nls => "nls",
            Algorithm::Irw => "irw",
            Algorithm::Tv => "tv",
            Algorithm::ZeroFilled => "zero_filled",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "nls" => Ok(Algorithm::Nls),
            "irw" => Ok(Algorithm::Irw),
            "tv" | "tv_config" => Ok(Algorithm::Tv),
            "zero_filled" | "zf" => Ok(Algorithm::ZeroFilled),
            _ => Err(Error::BadParams(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub name: String,
    pub width: usize,
    /// Defaults to `width`.
    pub height: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Cycles of linear phase along x and y.
    pub phase_ramp: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub fraction: Option<f64>,
    pub acceleration: Option<f64>,
    pub spokes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl MaskSpec {
    pub fn params(&self) -> Result<MaskParams> {
        match (self.fraction, self.acceleration, self.spokes) {
            (Some(f), None, None) => Ok(MaskParams::Fraction(f)),
            (None, Some(r), None) => Ok(MaskParams::Acceleration(r)),
            (None, None, Some(s)) => Ok(MaskParams::Spokes(s)),
            (None, None, None) => Ok(MaskParams::None),
            _ => Err(Error::BadParams(
                "set at most one of fraction, acceleration and spokes".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyEntry {
    pub kind: PenaltyKind,
    pub p: Option<f64>,
    #[serde(rename = "T", alias = "threshold")]
    pub threshold: Option<f64>,
    pub sigma: Option<f64>,
}

impl PenaltyEntry {
    pub fn spec(&self) -> Result<PenaltySpec> {
        PenaltySpec::new(self.kind, self.p, self.threshold, self.sigma)
    }
}

/// IRW-only knobs; the schedule and geometry come from the solver settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrwSettings {
    pub inner_iters: Option<usize>,
    pub cg_iters: Option<usize>,
    pub cg_tol: Option<f64>,
    pub weight_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub lambdas: Option<Vec<f64>>,
    pub penalties: Option<Vec<PenaltyEntry>>,
    /// Merged over the top-level `[solver]` table.
    #[serde(default)]
    pub solver: SolverSettings,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Option<String>,
    /// Record wall-clock seconds; when off the column is zero so reruns are
    /// byte-identical.
    #[serde(default = "yes")]
    pub timing: bool,
    #[serde(default = "yes")]
    pub save_images: bool,
    #[serde(default)]
    pub save_traces: bool,
    pub phantom: PhantomSpec,
    pub mask: MaskSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub penalties: Vec<PenaltyEntry>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub irw: IrwSettings,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.phantom.width, self.phantom.height.unwrap_or(self.phantom.width))
    }

    /// The ground truth, mask and measurements shared by every cell.
    pub fn instance(&self) -> Result<(ComplexImage, MeasurementModel)> {
        let (w, h) = self.dims();
        let mut ph = make_phantom(&self.phantom.name, w, h, self.phantom.seed)?;
        if let Some([cx, cy]) = self.phantom.phase_ramp {
            ph = ph.with_phase_ramp(cx, cy);
        }
        let mask = self.sampling_mask()?;
        let model = measure(&ph.image, &mask, self.noise.sigma, self.noise.seed)?;
        Ok((ph.image, model))
    }

    pub fn sampling_mask(&self) -> Result<SamplingMask> {
        let (w, h) = self.dims();
        gen_mask(self.mask.kind, w, h, self.mask.params()?, self.mask.seed)
    }

    /// Every cell in run order, zero-filled first.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = vec![Cell {
            id: 0,
            algorithm: Algorithm::ZeroFilled,
            penalty: None,
            lambda: 0.0,
            settings: SolverSettings::default(),
        }];
        for run in &self.runs {
            let lambdas = run.lambdas.as_ref().unwrap_or(&self.lambdas);
            if run.algorithm != Algorithm::ZeroFilled && lambdas.is_empty() {
                return Err(Error::BadParams(format!("run `{}` has no lambdas", run.algorithm)));
            }
            let settings = self.solver.merged(&run.solver);
            let mut push = |algorithm, penalty, lambda| {
                cells.push(Cell {
                    id: cells.len(),
                    algorithm,
                    penalty,
                    lambda,
                    settings: settings.clone(),
                })
            };
            match run.algorithm {
                Algorithm::ZeroFilled => {}
                Algorithm::Tv => lambdas.iter().for_each(|&l| push(Algorithm::Tv, None, l)),
                alg @ (Algorithm::Nls | Algorithm::Irw) => {
                    let entries = run.penalties.as_ref().unwrap_or(&self.penalties);
                    if entries.is_empty() {
                        return Err(Error::BadParams(format!("run `{alg}` has no penalties")));
                    }
                    for entry in entries {
                        let spec = entry.spec()?;
                        for &l in lambdas {
                            push(alg, Some(spec), l);
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// One reconstruction of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub algorithm: Algorithm,
    pub penalty: Option<PenaltySpec>,
    pub lambda: f64,
    pub settings: SolverSettings,
}

impl Cell {
    pub fn penalty_label(&self) -> String {
        match (self.algorithm, &self.penalty) {
            (Algorithm::ZeroFilled, _) => "none".into(),
            (Algorithm::Tv, _) => "l1_local".into(),
            (_, Some(p)) => penalty_label(p),
            (_, None) => "none".into(),
        }
    }

    /// The NLS configuration of an `nls` or `tv` cell.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let schedule = SolverSettings {
            penalty: None,
            p: None,
            threshold: None,
            sigma: None,
            lambda: None,
            ..self.settings.clone()
        };
        match (self.algorithm, self.penalty) {
            (Algorithm::Tv, _) => {
                let mut cfg = schedule.apply(&SolverConfig::local_tv(self.lambda))?;
                let tv = SolverConfig::local_tv(self.lambda);
                cfg.geometry = tv.geometry;
                cfg.penalty = tv.penalty;
                Ok(cfg)
            }
            (Algorithm::Nls | Algorithm::Irw, Some(p)) => {
                schedule.apply(&SolverConfig::new(self.lambda, p))
            }
            _ => Err(Error::BadParams(format!("cell {} has no solver", self.id))),
        }
    }

    pub fn irw_config(&self, irw: &IrwSettings) -> Result<IrwConfig> {
        let mut cfg = IrwConfig::from_solver(&self.solver_config()?);
        if let Some(v) = irw.inner_iters {
            cfg.inner_iters = v;
        }
        if let Some(v) = irw.cg_iters {
            cfg.cg_iters = v;
        }
        if let Some(v) = irw.cg_tol {
            cfg.cg_tol = v;
        }
        if let Some(v) = irw.weight_floor {
            cfg.weight_floor = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn penalty_label(p: &PenaltySpec) -> String {
    let mut s = p.kind().name().to_string();
    if p.kind().uses_exponent() {
        s += &format!("_p{}", p.p());
    }
    if let Some(t) = p.threshold() {
        s += &format!("_T{t}");
    }
    if let Some(sig) = p.sigma() {
        s += &format!("_s{sig}");
    }
    s
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell_id: usize,
    pub algorithm: Algorithm,
    pub penalty: String,
    pub lambda: f64,
    pub mask_kind: MaskKind,
    pub accel: f64,
    pub sigma: f64,
    pub snr_db: f64,
    pub psnr_db: f64,
    pub seconds: f64,
    pub final_cost: f64,
}

pub struct CellOutput {
    pub result: CellResult,
    pub image: ComplexImage,
    pub trace: Option<SolverTrace>,
}

/// Runs one cell against a prepared instance.
pub fn run_cell(
    spec: &ExperimentSpec,
    cell: &Cell,
    truth: &ComplexImage,
    model: &MeasurementModel,
) -> Result<CellOutput> {
    let (image, trace, seconds, final_cost) = match cell.algorithm {
        Algorithm::ZeroFilled => {
            let start = Instant::now();
            let f = model.zero_filled();
            let secs = start.elapsed().as_secs_f64();
            let cost = model.data_misfit(&f)?;
            (f, None, secs, cost)
        }
        Algorithm::Nls | Algorithm::Tv => {
            let (f, trace) = run_nls(model, &cell.solver_config()?, Some(truth))?;
            let (s, c) = (trace.total_seconds(), trace.final_cost().unwrap_or(f64::NAN));
            (f, Some(trace), s, c)
        }
        Algorithm::Irw => {
            let (f, trace) = run_irw(model, &cell.irw_config(&spec.irw)?, Some(truth))?;
            let (s, c) = (trace.total_seconds(), trace.final_cost().unwrap_or(f64::NAN));
            (f, Some(trace), s, c)
        }
    };
    let result = CellResult {
        cell_id: cell.id,
        algorithm: cell.algorithm,
        penalty: cell.penalty_label(),
        lambda: cell.lambda,
        mask_kind: model.mask().kind(),
        accel: model.mask().acceleration(),
        sigma: spec.noise.sigma,
        snr_db: snr_db(&image, truth)?,
        psnr_db: psnr_db(&image, truth, MAX_INTENSITY)?,
        seconds: if spec.timing { seconds } else { 0.0 },
        final_cost,
    };
    Ok(CellOutput { result, image, trace })
}

/// Runs every cell, appending each row to `out_dir/results.csv` as soon as
/// it is done. On error the rows already written are kept.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<CellResult>> {
    let cells = spec.cells()?;
    let (truth, model) = spec.instance()?;
    fs::create_dir_all(out_dir)?;
    let images = out_dir.join("images");
    let traces = out_dir.join("traces");
    if spec.save_images {
        fs::create_dir_all(&images)?;
        save_magnitude_png(&images.join("truth.png"), &truth, MAX_INTENSITY)?;
    }
    if spec.save_traces {
        fs::create_dir_all(&traces)?;
    }

    let mut csv = csv::Writer::from_path(results_path(out_dir))?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        let out = run_cell(spec, cell, &truth, &model)?;
        if spec.save_images {
            let stem = format!("{:03}_{}", cell.id, cell.algorithm);
            save_cimg(&images.join(format!("{stem}_recon.cimg")), &out.image, true)?;
            save_magnitude_png(&images.join(format!("{stem}_recon.png")), &out.image, MAX_INTENSITY)?;
            let err = out.image.zip_map(&truth, |a, b| (a - b) * ERROR_IMAGE_GAIN);
            save_magnitude_png(&images.join(format!("{stem}_error.png")), &err, MAX_INTENSITY)?;
        }
        if let (true, Some(trace)) = (spec.save_traces, &out.trace) {
            trace.save(&traces.join(format!("{:03}_{}.csv", cell.id, cell.algorithm)))?;
        }
        csv.serialize(&out.result)?;
        csv.flush()?;
        rows.push(out.result);
    }
    csv.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .flush()?;
    Ok(rows)
}

pub fn results_path(out_dir: &Path) -> PathBuf {
    out_dir.join("results.csv")
}

pub fn read_results(path: &Path) -> Result<Vec<CellResult>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// The highest-SNR row per algorithm, in first-seen order.
pub fn best_per_algorithm(rows: &[CellResult]) -> Vec<&CellResult> {
    let mut best: Vec<&CellResult> = Vec::new();
    for r in rows {
        match best.iter_mut().find(|b| b.algorithm == r.algorithm) {
            Some(b) if r.snr_db > b.snr_db => *b = r,
            Some(_) => {}
            None => best.push(r),
        }
    }
    best
}

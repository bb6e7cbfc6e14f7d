//! Command implementations.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mfcce_core::analytic::{cce_margin, finite_n_gap_oracle, region_sweep, RegionCell};
use mfcce_core::correlation::{build_example_device, verify_consistency, CorrelationDevice};
use mfcce_core::equilibrium::{
    cce_gap_nplayer, mean_field_gap_mc, poc_curve, CandidateGap, DeviationFamily, GapReport,
};
use mfcce_core::model::{build_bang_bang_model, ModelSpec};
use mfcce_core::sde::{mckean_vlasov_fixed_point, TimeGrid};
use mfcce_core::ConstantAction;

use crate::config::{Command, RunConfig};
use crate::output::{num, opt, OutputDir};

/// Result of a completed run.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False when a check carried out by the command failed.
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Greyscale levels of the region raster.
pub const WHITE: u8 = 255;
pub const BLACK: u8 = 0;
pub const ABSENT: u8 = 128;

/// Runs a resolved configuration, writing files into `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut dir = OutputDir::new(out, &config.to_json())?;
    let command = config.command()?;
    let (passed, notes) = match command {
        Command::Region => region(config, &mut dir)?,
        Command::Gap => gap(config, &mut dir)?,
        Command::Mfgap => mfgap(config, &mut dir)?,
        Command::Poc => poc(config, &mut dir)?,
        Command::Consistency => consistency(config, &mut dir)?,
        Command::Mkv => mkv(config, &mut dir)?,
    };
    Ok(Outcome { files: dir.written(), passed, notes })
}

type Checked = (bool, Vec<String>);

struct Setup {
    model: ModelSpec,
    grid: TimeGrid,
    device: CorrelationDevice,
}

fn setup(config: &RunConfig) -> Result<Setup> {
    let model = build_bang_bang_model(config.a, config.b, config.c, config.horizon)?;
    let grid = TimeGrid::new(config.horizon, config.steps)?;
    let device = build_example_device(&config.device()?, config.interval()?)?;
    Ok(Setup { model, grid, device })
}

fn region(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let iv = config.interval()?;
    let mut rows = Vec::new();
    for &alpha in &config.alpha {
        let sweep = region_sweep(config.resolution, alpha, iv, config.layout.into())?;
        let pixels: Vec<u8> = sweep
            .cells
            .iter()
            .map(|c| match c {
                Some(RegionCell { is_cce: true, .. }) => WHITE,
                Some(_) => BLACK,
                None => ABSENT,
            })
            .collect();
        dir.pgm(&format!("region_alpha_{alpha}.pgm"), config.resolution, &pixels)?;
        for c in sweep.present() {
            let [p11, p12, p21, p22] = c.device.as_array();
            rows.push(vec![
                num(alpha),
                c.row.to_string(),
                c.col.to_string(),
                num(p11),
                num(p12),
                num(p21),
                num(p22),
                num(c.coeffs.h),
                num(c.coeffs.k),
                num(c.margin),
                c.is_cce.to_string(),
            ]);
        }
    }
    dir.csv("region.csv", &["alpha", "row", "col", "p11", "p12", "p21", "p22", "h", "k", "margin", "is_cce"], &rows)?;
    Ok((true, Vec::new()))
}

fn candidate_rows(prefix: &[String], candidates: &[CandidateGap]) -> Vec<Vec<String>> {
    candidates
        .iter()
        .map(|c| {
            let mut row = prefix.to_vec();
            row.extend([num(c.action[0]), num(c.j_dev.mean), opt(c.j_dev.std_error), num(c.raw.mean), opt(c.raw.std_error)]);
            row
        })
        .collect()
}

fn gap_columns(r: &GapReport) -> Vec<String> {
    vec![
        num(r.epsilon_hat),
        num(r.raw_se),
        num(r.epsilon_ci.0),
        num(r.epsilon_ci.1),
        num(r.raw_gap),
        num(r.best_action[0]),
        num(r.j_rec.mean),
        opt(r.j_rec.std_error),
        num(r.j_dev_best.mean),
        opt(r.j_dev_best.std_error),
    ]
}

const GAP_COLUMNS: [&str; 10] = [
    "estimate",
    "se",
    "ci_lo",
    "ci_hi",
    "raw_gap",
    "best_action",
    "j_rec",
    "j_rec_se",
    "j_dev_best",
    "j_dev_best_se",
];

const CANDIDATE_COLUMNS: [&str; 5] = ["action", "j_dev", "j_dev_se", "raw", "raw_se"];

fn gap(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let s = setup(config)?;
    let family = DeviationFamily::uniform_grid(s.model.actions(), config.grid_size)?;
    let (p, iv) = (config.device()?, config.interval()?);
    let reps = config.reps.expect("resolved");
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    for &n in config.n.as_deref().expect("resolved") {
        let r = cce_gap_nplayer(&s.model, &s.grid, &s.device, n, &family, reps, config.seed)
            .with_context(|| format!("estimating the gap at N = {n}"))?;
        let o = finite_n_gap_oracle(&p, iv, config.c, config.horizon, n)?;
        let mut row = vec![n.to_string()];
        row.extend(gap_columns(&r));
        row.extend([num(o.epsilon), num(o.j_dev_best - o.j_rec)]);
        rows.push(row);
        candidates.extend(candidate_rows(&[n.to_string()], &r.candidates));
    }
    let mut columns = vec!["N"];
    columns.extend(GAP_COLUMNS);
    columns.extend(["oracle_value", "oracle_raw"]);
    dir.csv("gap.csv", &columns, &rows)?;
    let mut columns = vec!["N"];
    columns.extend(CANDIDATE_COLUMNS);
    dir.csv("gap_candidates.csv", &columns, &candidates)?;
    Ok((true, Vec::new()))
}

fn mfgap(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let s = setup(config)?;
    let family = DeviationFamily::uniform_grid(s.model.actions(), config.grid_size)?;
    let r = mean_field_gap_mc(&s.model, &s.grid, &s.device, &family, config.reps.expect("resolved"), config.seed)
        .context("estimating the mean field gap")?;
    let margin = cce_margin(&config.device()?, config.interval()?);
    let scale = config.c * config.horizon * config.horizon;
    let mut row = gap_columns(&r);
    row.extend([num(scale * (-margin).max(0.0)), num(-scale * margin), num(margin)]);
    let mut columns = GAP_COLUMNS.to_vec();
    columns.extend(["oracle_value", "oracle_raw", "margin"]);
    dir.csv("mfgap.csv", &columns, &[row])?;
    dir.csv("mfgap_candidates.csv", &CANDIDATE_COLUMNS, &candidate_rows(&[], &r.candidates))?;
    Ok((true, Vec::new()))
}

fn poc(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let s = setup(config)?;
    let ns = config.n.as_deref().expect("resolved");
    let curve = poc_curve(&s.model, &s.grid, &s.device, ns, config.reps.expect("resolved"), config.seed)
        .context("computing the propagation of chaos curve")?;
    let labels: Vec<String> = (0..s.device.flow_count()).map(|f| format!("class_{}", s.device.flow_label(f))).collect();
    let mut columns = vec!["N", "estimate", "se"];
    columns.extend(labels.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            let mut row = vec![p.n.to_string(), num(p.value), num(p.std_error)];
            row.extend(p.per_class.iter().map(|v| opt(*v)));
            row
        })
        .collect();
    dir.csv("poc.csv", &columns, &rows)?;
    Ok((true, Vec::new()))
}

fn consistency(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let s = setup(config)?;
    let report = verify_consistency(&s.model, &s.device, &s.grid, config.reps.expect("resolved"), config.seed)
        .context("checking consistency")?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut notes = Vec::new();
    for c in &report.classes {
        for (t, w) in report.times.iter().zip(&c.w2) {
            rows.push(vec![c.label.clone(), num(c.probability), c.count.to_string(), num(*t), num(*w)]);
        }
        let threshold = config.band_factor * c.null_band;
        let pass = c.sup_w2 <= threshold;
        if !pass {
            notes.push(format!(
                "class {}: sup W2 {:.4} exceeds {} x null band {:.4}",
                c.label, c.sup_w2, config.band_factor, c.null_band
            ));
        }
        if c.flagged {
            notes.push(format!("class {}: only {} samples", c.label, c.count));
        }
        summary.push(vec![
            c.label.clone(),
            num(c.probability),
            c.count.to_string(),
            num(c.sup_w2),
            num(c.null_band),
            num(threshold),
            num(c.reference_error),
            c.flagged.to_string(),
            pass.to_string(),
        ]);
    }
    dir.csv("consistency.csv", &["class", "prob", "count", "t", "w2"], &rows)?;
    dir.csv(
        "consistency_summary.csv",
        &["class", "prob", "count", "sup_w2", "null_band", "threshold", "reference_error", "flagged", "pass"],
        &summary,
    )?;
    Ok((report.passes(config.band_factor), notes))
}

fn mkv(config: &RunConfig, dir: &mut OutputDir) -> Result<Checked> {
    let model = build_bang_bang_model(config.a, config.b, config.c, config.horizon)?;
    let grid = TimeGrid::new(config.horizon, config.steps)?;
    let control = ConstantAction::scalar(config.action.expect("resolved"));
    let sol = mckean_vlasov_fixed_point(&model, &grid, &control, config.particles, config.max_iters, config.tol, config.seed)
        .context("solving the McKean-Vlasov fixed point")?;
    let mut rows = Vec::new();
    for (k, t) in grid.times().enumerate() {
        let v = sol.flow.view(&grid, k)?;
        rows.push(vec![num(t), num(v.mean()[0]), num(v.variance())]);
    }
    dir.csv("mkv_flow.csv", &["t", "mean", "var"], &rows)?;
    let trace: Vec<Vec<String>> = sol
        .trace
        .iter()
        .enumerate()
        .map(|(i, d)| vec![(i + 1).to_string(), num(*d), (*d < config.tol).to_string()])
        .collect();
    dir.csv("mkv_trace.csv", &["iteration", "sup_w2", "below_tol"], &trace)?;
    let notes = if sol.converged {
        Vec::new()
    } else {
        vec![format!("no convergence within {} iterations", config.max_iters)]
    };
    Ok((true, notes))
}

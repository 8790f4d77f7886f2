use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use swflow::accountant::{amplification_gamma, MechanismEvent, PrivacyLedger, PrivacyReport};
use swflow::datagen::{load_dataset, save_dataset};
use swflow::flow::{Flow, FlowConfig};
use swflow::mechanism::l2_sensitivity;
use swflow::metrics::{sliced_w2, MetricConfig};

use crate::failure::{CliResult, Failure};
use crate::manifest::{now, Outputs, RunManifest, Status};
use crate::setup::{fingerprint, read_toy_spec, release_iterations, ConfigArgs, SourceArgs};

fn config_echo(cfg: &FlowConfig, dim: usize, requested_epsilon: Option<f64>) -> serde_json::Value {
    json!({ "config": cfg, "dim": dim, "requested_epsilon": requested_epsilon })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text + "\n").map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

pub struct RunRequest {
    pub config: ConfigArgs,
    pub source: SourceArgs,
    pub snapshots: Option<Vec<usize>>,
    pub replay: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn run(req: RunRequest) -> CliResult<()> {
    let (cfg, source, requested_epsilon, expect_fingerprint) = match &req.replay {
        Some(path) => {
            let m = RunManifest::read(path)?;
            (m.config, m.source, m.requested_epsilon, Some(m.data_fingerprint))
        }
        None => {
            let source = req
                .source
                .source()?
                .ok_or_else(|| Failure::config("one of --toy, --toy-spec or --data is required"))?;
            let mut cfg = req.config.base()?;
            if let Some(s) = &req.snapshots {
                cfg.snapshots = Some(s.clone());
            }
            (cfg, source, req.config.epsilon, None)
        }
    };

    let data = source.load()?;
    let data_fingerprint = fingerprint(&data);
    if let Some(expected) = expect_fingerprint {
        if expected != data_fingerprint {
            return Err(Failure::invalid(format!(
                "replay data fingerprint {data_fingerprint} does not match manifest {expected}"
            )));
        }
    }
    let cfg = if req.replay.is_some() {
        cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
        cfg
    } else {
        req.config.finish(cfg, data.dim())?
    };

    fs::create_dir_all(&req.out)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", req.out.display())))?;
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        requested_epsilon,
        source,
        data_fingerprint,
        rows: data.len(),
        dim: data.dim(),
        started_at: now(),
        finished_at: None,
        status: Status::Running,
        error: None,
        outputs: Outputs::for_config(&cfg),
    };
    manifest.write(&req.out)?;

    let result = execute(&req.out, &manifest, &data);
    manifest.finished_at = Some(now());
    match &result {
        Ok(()) => manifest.status = Status::Completed,
        Err(f) => {
            manifest.status = Status::Failed;
            manifest.error = Some(f.msg.clone());
        }
    }
    manifest.write(&req.out)?;
    result
}

fn execute(out: &Path, manifest: &RunManifest, data: &swflow::datagen::Dataset) -> CliResult<()> {
    let cfg = &manifest.config;
    let (trajectory, ledger) = Flow::new(data, cfg)?.run()?;
    for file in &manifest.outputs.snapshots {
        let cloud = trajectory
            .snapshot(file.iteration)
            .ok_or_else(|| Failure::runtime(format!("missing snapshot for iteration {}", file.iteration)))?;
        save_dataset(out.join(&file.path), cloud.positions())?;
    }
    save_dataset(out.join(&manifest.outputs.final_particles), trajectory.final_cloud.positions())?;
    let report = PrivacyReport::new(&ledger, cfg.delta, config_echo(cfg, data.dim(), manifest.requested_epsilon))?;
    write_json(&out.join(&manifest.outputs.privacy_report), &report)?;
    eprintln!(
        "swflow: {} iterations on {} x {} target, {} target releases, epsilon {}",
        cfg.k_steps,
        data.len(),
        data.dim(),
        ledger.release_count(),
        report.epsilon_total.map_or("unbounded".to_string(), |e| format!("{e:.4}"))
    );
    Ok(())
}

pub struct EvalRequest {
    pub a: PathBuf,
    pub b: PathBuf,
    pub n_theta: usize,
    pub sigma_eval: f64,
    pub seed: u64,
}

pub fn eval(req: EvalRequest) -> CliResult<()> {
    let load = |p: &Path| {
        if !p.exists() {
            return Err(Failure::config(format!("{} does not exist", p.display())));
        }
        Ok(load_dataset(p, None)?)
    };
    let smoothed = MetricConfig { n_theta_eval: req.n_theta, sigma_eval: req.sigma_eval, seed: req.seed };
    smoothed.validate().map_err(|e| Failure::config(e.to_string()))?;
    let plain = MetricConfig { sigma_eval: 0.0, ..smoothed };
    let a = load(&req.a)?;
    let b = load(&req.b)?;
    let mut out = serde_json::Map::new();
    out.insert("swd".into(), json!(sliced_w2(a.rows(), b.rows(), &plain)?));
    if req.sigma_eval > 0.0 {
        out.insert("smoothed_swd".into(), json!(sliced_w2(a.rows(), b.rows(), &smoothed)?));
    }
    println!("{}", serde_json::Value::Object(out));
    Ok(())
}

pub struct PrivacyRequest {
    pub config: ConfigArgs,
    pub dim: Option<usize>,
    pub data: Option<PathBuf>,
}

/// The ledger a run with `cfg` would produce, without touching data.
pub fn projected_ledger(cfg: &FlowConfig, dim: usize) -> CliResult<PrivacyLedger> {
    let mut ledger = PrivacyLedger::new();
    let releases = release_iterations(cfg);
    if cfg.sigma == 0.0 {
        releases.iter().for_each(|_| ledger.record_unprotected());
        return Ok(ledger);
    }
    let sensitivity = l2_sensitivity(cfg.n_theta, cfg.delta, dim, cfg.norm_factor, cfg.sensitivity_mode)?;
    let gamma = amplification_gamma(cfg.h, cfg.lambda)?.gamma;
    for k in releases {
        ledger.record(MechanismEvent::new(k, cfg.sigma, sensitivity, cfg.delta, gamma)?);
    }
    Ok(ledger)
}

pub fn privacy(req: PrivacyRequest) -> CliResult<()> {
    let cfg = req.config.base()?;
    let dim = match (req.dim, &req.data) {
        (Some(d), _) => d,
        (None, Some(path)) => {
            if !path.exists() {
                return Err(Failure::config(format!("dataset {} does not exist", path.display())));
            }
            load_dataset(path, None)?.dim()
        }
        (None, None) => match (req.config.preset, &req.config.config) {
            (Some(p), None) => p.dim(),
            _ => return Err(Failure::config("data dimension unknown: pass --dim or --data")),
        },
    };
    let cfg = req.config.finish(cfg, dim)?;
    let ledger = projected_ledger(&cfg, dim)?;
    let report = PrivacyReport::new(&ledger, cfg.delta, config_echo(&cfg, dim, req.config.epsilon))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serialisable"));
    Ok(())
}

pub struct ToyExportRequest {
    pub toy_spec: Option<PathBuf>,
    pub resolution: usize,
    pub masses: Vec<f64>,
    pub out: PathBuf,
    pub samples: Option<PathBuf>,
}

pub fn toy_export(req: ToyExportRequest) -> CliResult<()> {
    let spec = read_toy_spec(req.toy_spec.as_deref())?;
    let mixture = spec.mixture().map_err(|e| Failure::config(e.to_string()))?;
    let half = spec.radius + 4.0 * spec.variance.sqrt();
    let grid = mixture.density_grid((-half, half), (-half, half), req.resolution)?;
    write_json(&req.out, &grid)?;
    let mut levels = Vec::new();
    for &mass in &req.masses {
        let density = mixture.level_set_threshold(mass, 200_000, spec.seed)?;
        levels.push(json!({ "mass": mass, "density": density }));
    }
    if let Some(path) = &req.samples {
        save_dataset(path, spec.sample()?.view())?;
    }
    println!("{}", json!({ "grid": req.out, "extent": [-half, half], "levels": levels }));
    Ok(())
}

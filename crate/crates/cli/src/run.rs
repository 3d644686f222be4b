use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rtl_core::classical_dynamics::{build_escape_with, EscapeOptions};
use rtl_core::evolve::{dichotomy_experiment, instability_experiment, stability_experiment, InstabilityOptions, StabilityOptions};
use rtl_core::normal_form::normal_form_reduce;
use rtl_core::resonance::{classify, regularize, resonant_average, RegularizeOptions, Tolerances, Verdict};
use rtl_core::spectral::{Mode, SpaceTimeField};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Writes artifacts under one directory and remembers their paths.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn sub(&self, name: &str) -> Result<Self, CliError> {
        Self::new(self.dir.join(name))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(path.clone(), e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("report serializes");
        body.push('\n');
        self.text(name, &body)
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    fn absorb(&mut self, other: Artifacts) {
        self.written.extend(other.written);
    }
}

fn instability_options(cfg: &ExperimentConfig) -> InstabilityOptions {
    InstabilityOptions {
        cutoff: cfg.solver.k,
        dt: cfg.solver.dt,
        sigma: cfg.escape.sigma,
        sample_interval: cfg.evolve.sample_interval,
        characteristic_points: cfg.evolve.characteristic_points,
        normal_form_order: cfg.normal_form.n,
        ..Default::default()
    }
}

fn eps_label(eps: f64) -> String {
    format!("eps-{eps}")
}

pub fn classify_cmd(cfg: &ExperimentConfig, v: &SpaceTimeField, out: &mut Artifacts) -> Result<(), CliError> {
    let tol = Tolerances::default();
    let report = classify(v, cfg.m, &tol)?;
    let average: Vec<Mode> = resonant_average(v, cfg.m)?.to_modes();
    let regularized = match (report.verdict, cfg.regularize.budget) {
        (Verdict::Degenerate, Some(budget)) => {
            let opts = RegularizeOptions { seed: cfg.seeds.regularize, ..Default::default() };
            let r = regularize(v, cfg.m, budget, &opts)?;
            Some(json!({ "shift": r.shift, "distance": r.distance(), "attempts": r.attempts, "report": r.report }))
        }
        _ => None,
    };
    eprintln!("verdict {}", report.verdict);
    out.json("classify.json", &json!({ "resonant_average": average, "report": report, "regularized": regularized }))
}

pub fn reduce_cmd(cfg: &ExperimentConfig, v: &SpaceTimeField, out: &mut Artifacts) -> Result<(), CliError> {
    let verdict = classify(v, cfg.m, &Tolerances::default())?.verdict;
    let mut chain = normal_form_reduce(v, cfg.m, cfg.epsilon, cfg.normal_form.n)?;
    let constant = if verdict == Verdict::Stable {
        let cc = chain.reduce_constant()?;
        Some(json!({ "m_hat": cc.m_hat, "equation_residual": cc.equation_residual, "flatness": cc.flatness }))
    } else {
        None
    };
    eprintln!("remainder {:e}", chain.remainder_norm());
    out.json("normal_form.json", &chain)?;
    out.json(
        "flatness.json",
        &json!({
            "verdict": verdict,
            "epsilon": cfg.epsilon,
            "order": cfg.normal_form.n,
            "remainder_norm": chain.remainder_norm(),
            "constant_reduction": constant,
        }),
    )
}

pub fn escape_cmd(cfg: &ExperimentConfig, v: &SpaceTimeField, out: &mut Artifacts) -> Result<(), CliError> {
    let x = resonant_average(v, cfg.m)?;
    let esc = build_escape_with(&x, cfg.escape.sigma, &EscapeOptions::default())?;
    eprintln!("delta_verified {}", esc.delta_verified);
    out.text("escape_profile.csv", &esc.profile_csv())?;
    out.json(
        "escape.json",
        &json!({
            "delta_verified": esc.delta_verified,
            "construction_target": esc.flow.nu / 8.0,
            "sigma": esc.sigma,
            "t_max": esc.t_max,
            "c_estimate": esc.c_estimate,
            "nu": esc.flow.nu,
            "k_plus": esc.flow.k_plus,
            "k_minus": esc.flow.k_minus,
            "w_region": esc.flow.w_region,
            "a_tilde": esc.a_tilde,
        }),
    )
}

fn evolve_one(cfg: &ExperimentConfig, v: &SpaceTimeField, verdict: Verdict, eps: f64, out: &mut Artifacts) -> Result<(), CliError> {
    match verdict {
        Verdict::Unstable => {
            let r = instability_experiment(v, cfg.m, eps, cfg.evolve.s, cfg.solver.t, cfg.datum.xi0, &instability_options(cfg))?;
            eprintln!("eps {eps}: gamma {} (predicted {})", r.gamma_fit, r.predicted_rate);
            out.text("norms.csv", &r.series_csv())?;
            if !r.characteristic_series.is_empty() {
                out.text("characteristics.csv", &r.characteristics_csv())?;
            }
            out.json("growth.json", &r)
        }
        Verdict::Stable => {
            let opts = StabilityOptions {
                cutoff: cfg.solver.k,
                dt: cfg.solver.dt,
                xi0: cfg.datum.xi0,
                samples: cfg.evolve.samples,
                ..Default::default()
            };
            let r = stability_experiment(v, cfg.m, eps, cfg.normal_form.n, &[cfg.evolve.s], cfg.evolve.stable_horizon_factor, &opts)?;
            eprintln!("eps {eps}: sup ratio {}", r.sup_ratio[0].ratio);
            out.text("norms.csv", &r.norms_csv())?;
            out.json("stability.json", &r)
        }
        Verdict::Degenerate => Err(rtl_core::Error::WrongRegime {
            expected: "Stable or Unstable".into(),
            found: verdict.to_string(),
        }
        .into()),
    }
}

/// One run per ε; with `jobs > 1` the points are spread over threads, each writing its own directory.
pub fn evolve_cmd(cfg: &ExperimentConfig, v: &SpaceTimeField, jobs: usize, out: &mut Artifacts) -> Result<(), CliError> {
    let verdict = classify(v, cfg.m, &Tolerances::default())?.verdict;
    let eps = cfg.epsilons();
    let dirs: Vec<Artifacts> = eps.iter().map(|e| out.sub(&eps_label(*e))).collect::<Result<_, _>>()?;
    let slots: Vec<Mutex<Option<Result<Artifacts, CliError>>>> = dirs.into_iter().map(|d| Mutex::new(Some(Ok(d)))).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= eps.len() {
            break;
        }
        let mut slot = slots[i].lock().unwrap();
        if let Some(Ok(mut dir)) = slot.take() {
            let res = evolve_one(cfg, v, verdict, eps[i], &mut dir).map(|_| dir);
            *slot = Some(res);
        }
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.min(eps.len()) {
            s.spawn(work);
        }
        work();
    });
    for slot in slots {
        out.absorb(slot.into_inner().unwrap().expect("every point ran")?);
    }
    Ok(())
}

pub fn dichotomy_cmd(cfg: &ExperimentConfig, v: &SpaceTimeField, out: &mut Artifacts) -> Result<(), CliError> {
    let stable = cfg.dichotomy.stable.build();
    let r = dichotomy_experiment(&stable, v, cfg.m, cfg.epsilon, cfg.evolve.s, cfg.solver.t, cfg.datum.xi0, &instability_options(cfg))?;
    eprintln!("gamma stable {} unstable {} ratio {}", r.stable.gamma_fit, r.unstable.gamma_fit, r.ratio);
    out.text("stable_norms.csv", &r.stable.series_csv())?;
    out.text("unstable_norms.csv", &r.unstable.series_csv())?;
    out.json("dichotomy.json", &r)
}

pub fn resolve_dir(cfg: &ExperimentConfig, subcommand: &str) -> PathBuf {
    Path::new(&cfg.output.dir).join(subcommand)
}

//! Command implementations behind the `eptomo` binary: reproducible runs
//! wiring configs, data files and analysis modules, emitting plot-ready
//! tabular artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::bayes::{self, ChainConfig, PosteriorSamples, ScalarFunctional, SummaryOptions};
use crate::config::{self, ArtifactMeta, CoherenceConfig, LoadedConfig, RunConfig};
use crate::entangle::{self, CoherenceSpec, LocalChannelSpec};
use crate::events::{self, EventSet, Pattern};
use crate::mle;
use crate::polopt::{self, Detector, ElectronContext, FringeCount, Side, WaveplateSetting};
use crate::qmat::{density_matrix_from_lines, density_matrix_to_string, DensityMatrix};
use crate::simkit::{self, EventSimOptions, ExperimentTruth};
use crate::{fmt17, Error, Result};

/// CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Pipeline,
    ScanMle,
    Reconstruct,
    Analyze,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pipeline => "pipeline",
            Command::ScanMle => "scan-mle",
            Command::Reconstruct => "reconstruct",
            Command::Analyze => "analyze",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Resolved run context: parsed config, effective seed, output directory.
pub struct RunContext {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunContext {
    fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    /// Inputs resolve against the config file directory; bare names that
    /// don't exist there fall back to the output directory.
    fn input_path(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let at_base = self.loaded.base_dir.join(p);
        if at_base.exists() {
            return at_base;
        }
        self.out_dir.join(p)
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn meta(&self, command: Command, name: &str) -> ArtifactMeta {
        ArtifactMeta {
            command: command.name().into(),
            name: name.into(),
            config_hash: self.loaded.hash.clone(),
            seed: self.seed,
            extra: BTreeMap::new(),
        }
    }

    fn write(&self, command: Command, name: &str, payload: &str) -> Result<PathBuf> {
        let path = self.out_path(name);
        config::write_artifact(&path, &self.meta(command, name), payload)?;
        Ok(path)
    }

    fn write_with(
        &self,
        command: Command,
        name: &str,
        extra: BTreeMap<String, String>,
        payload: &str,
    ) -> Result<PathBuf> {
        let mut meta = self.meta(command, name);
        meta.extra = extra;
        let path = self.out_path(name);
        config::write_artifact(&path, &meta, payload)?;
        Ok(path)
    }

    fn read(&self, path: &Path) -> Result<config::LoadedArtifact> {
        config::read_artifact(path, Some(&self.loaded.hash))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Pipeline coincidence histogram bin width, ps.
    pub bin_width_ps: Option<i64>,
    /// Pipeline coincidence histogram range, ps.
    pub range_ps: Option<i64>,
    /// Per-detector coincidence window override.
    pub window: Vec<(i64, i64)>,
}

/// Loads the config and runs one command. Artifacts land in the output
/// directory; the returned context reports the effective seed and paths.
pub fn run(
    command: Command,
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<RunContext> {
    run_with(
        command,
        config_path,
        Overrides {
            seed: seed_override,
            out_dir: out_override,
            threads,
            ..Overrides::default()
        },
    )
}

/// [`run`] with the full set of command-line overrides.
pub fn run_with(command: Command, config_path: &Path, overrides: Overrides) -> Result<RunContext> {
    let mut loaded = config::load_config(config_path)?;
    if let Some(bw) = overrides.bin_width_ps {
        loaded.config.pipeline.bin_width_ps = bw;
    }
    if let Some(range) = overrides.range_ps {
        loaded.config.pipeline.range_ps = range;
    }
    if overrides.window.len() == 1 {
        let w = overrides.window[0];
        loaded.config.pipeline.window_override = Some([[w.0, w.1], [w.0, w.1]]);
    } else if overrides.window.len() == 2 {
        let (a, b) = (overrides.window[0], overrides.window[1]);
        loaded.config.pipeline.window_override = Some([[a.0, a.1], [b.0, b.1]]);
    }
    let seed = overrides.seed.unwrap_or(loaded.config.seed);
    let out_dir = overrides
        .out_dir
        .unwrap_or_else(|| loaded.base_dir.join(&loaded.config.out_dir));
    let n_threads = overrides.threads.unwrap_or(loaded.config.threads);
    if n_threads > 0 {
        // Thread count affects scheduling only, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n_threads)
            .build_global();
    }
    std::fs::create_dir_all(&out_dir)?;
    let ctx = RunContext {
        loaded,
        seed,
        out_dir,
    };
    match command {
        Command::Simulate => run_simulate(&ctx)?,
        Command::Pipeline => run_pipeline(&ctx)?,
        Command::ScanMle => run_scan_mle(&ctx)?,
        Command::Reconstruct => run_reconstruct(&ctx)?,
        Command::Analyze => run_analyze(&ctx)?,
        Command::Diagnose => run_diagnose(&ctx)?,
    }
    Ok(ctx)
}

fn build_truth(ctx: &RunContext) -> Result<ExperimentTruth> {
    let t = &ctx.config().truth;
    let rho = if let Some(path) = &t.rho_path {
        let artifact = ctx.read(&ctx.input_path(path))?;
        let lines: Vec<String> = artifact
            .payload
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        density_matrix_from_lines(&lines, path)?
    } else if let Some(model) = &t.model {
        let half = 0.5 * model.bloch_separation_deg.to_radians();
        simkit::model_state(
            t.w_l,
            &simkit::bloch_xz_state(half),
            &simkit::bloch_xz_state(-half),
            model.photon_purity,
            model.coherence,
        )?
    } else {
        return Err(Error::InvalidValue(
            "truth needs either rho_path or a model block".into(),
        ));
    };
    Ok(ExperimentTruth {
        rho_true: rho,
        gamma_in: t.gamma_in,
        beam_weights: (t.w_l, 1.0 - t.w_l),
        photon_prob: t.photon_prob,
        exposure_s: t.exposure_s,
        electron_rate_hz: t.electron_rate_hz,
        background_rate_hz: t.background_rate_hz,
        detector_delays_ps: t.detector_delays_ps,
        jitter_ps: t.jitter_ps,
        seed: ctx.seed,
    })
}

fn fringe_settings(cfg: &RunConfig) -> Result<Vec<WaveplateSetting>> {
    cfg.simulate
        .settings
        .iter()
        .map(|[q, h]| WaveplateSetting::new(*q, *h))
        .collect()
}

fn scan_grid(cfg: &RunConfig) -> Result<Vec<WaveplateSetting>> {
    let step = cfg.simulate.scan_step_deg;
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidValue("scan_step_deg must be positive".into()));
    }
    let mut out = Vec::new();
    let n = (90.0 / step).round() as usize;
    for qi in 0..=n {
        for hi in 0..=n {
            out.push(WaveplateSetting::new(step * qi as f64, step * hi as f64)?);
        }
    }
    Ok(out)
}

fn run_simulate(ctx: &RunContext) -> Result<()> {
    let cfg = ctx.config();
    let truth = build_truth(ctx)?;
    truth.validate()?;
    let settings = fringe_settings(cfg)?;

    ctx.write(
        Command::Simulate,
        "truth.dm",
        &density_matrix_to_string(&truth.rho_true),
    )?;

    let mut setting_records: Vec<polopt::SettingRecord> = settings
        .iter()
        .map(|s| polopt::SettingRecord {
            setting: *s,
            context: polopt::SettingContext::Phase {
                n_bins: cfg.simulate.phase_bins,
            },
        })
        .collect();
    if cfg.simulate.emit_scan {
        for s in scan_grid(cfg)? {
            for side in [Side::L, Side::R] {
                setting_records.push(polopt::SettingRecord {
                    setting: s,
                    context: polopt::SettingContext::Side(side),
                });
            }
        }
    }
    ctx.write(
        Command::Simulate,
        "settings.csv",
        &polopt::settings_to_string(&setting_records),
    )?;

    if cfg.simulate.emit_counts {
        let records = simkit::simulate_counts(&truth, &settings, cfg.simulate.phase_bins)?;
        let lines: Vec<FringeCount> = records
            .iter()
            .map(|r| {
                let Some(ElectronContext::PhaseBin { bin, n_bins }) = r.effect.label.context
                else {
                    unreachable!("fringe records carry phase bins")
                };
                FringeCount {
                    setting: r.effect.label.setting,
                    n_bins,
                    detector: r.effect.label.detector,
                    bin,
                    count: r.count,
                }
            })
            .collect();
        ctx.write(
            Command::Simulate,
            "fringe_counts.csv",
            &polopt::fringe_counts_to_string(&lines),
        )?;
    }

    if cfg.simulate.emit_scan {
        let counts = simkit::simulate_scan(&truth, &scan_grid(cfg)?)?;
        ctx.write(
            Command::Simulate,
            "scan_counts.csv",
            &mle::scan_counts_to_string(&counts),
        )?;
    }

    if cfg.simulate.emit_events {
        let p = &cfg.simulate.pattern;
        let opts = EventSimOptions {
            pattern_width: p.width,
            pattern_height: p.height,
            fringe_period_px: p.period_px,
            fringe_angle_rad: p.angle_deg.to_radians(),
            phase_bins: p.sim_phase_bins,
        };
        for (i, setting) in settings.iter().enumerate() {
            let set = simkit::simulate_events(&truth, *setting, cfg.simulate.duration_s, &opts, i as u64)?;
            let extra = BTreeMap::from([(
                "setting".to_string(),
                format!("{},{}", setting.qwp_deg, setting.hwp_deg),
            )]);
            ctx.write_with(
                Command::Simulate,
                &format!("events_{i:03}.csv"),
                extra,
                &events::events_to_string(&set),
            )?;
        }
    }
    Ok(())
}

fn discover_event_files(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let listed = &ctx.config().pipeline.events;
    if !listed.is_empty() {
        return Ok(listed.iter().map(|p| ctx.input_path(p)).collect());
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(&ctx.out_dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("events_") && name.ends_with(".csv") {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::InvalidValue(
            "no event files configured or found in the output directory".into(),
        ));
    }
    Ok(found)
}

fn setting_from_headers(headers: &BTreeMap<String, String>, path: &Path) -> Result<WaveplateSetting> {
    let value = headers.get("setting").ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "event artifact lacks a setting header".into(),
    })?;
    let (q, h) = value.split_once(',').ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "setting header must be qwp,hwp".into(),
    })?;
    WaveplateSetting::new(
        q.trim().parse().map_err(|_| Error::InvalidValue("bad qwp in header".into()))?,
        h.trim().parse().map_err(|_| Error::InvalidValue("bad hwp in header".into()))?,
    )
}

fn pattern_shape(set: &EventSet) -> (usize, usize) {
    let mut w = 0usize;
    let mut h = 0usize;
    for e in &set.electrons {
        if let Some((x, y)) = e.pos {
            w = w.max(x as usize + 1);
            h = h.max(y as usize + 1);
        }
    }
    (w.max(8), h.max(8))
}

fn histogram_csv(hist: &events::CoincidenceHistogram) -> String {
    let mut s = String::from("offset_ps,count\n");
    for (offset, count) in hist.offsets().iter().zip(&hist.counts) {
        let _ = writeln!(s, "{offset},{count}");
    }
    s
}

fn phase_hist_csv(hist: &events::PhaseHistogram) -> String {
    let mut s = String::from("bin,phase_rad,value\n");
    for (b, (phi, v)) in hist.phases.iter().zip(&hist.values).enumerate() {
        let _ = writeln!(s, "{b},{},{}", fmt17(*phi), fmt17(*v));
    }
    s
}

fn run_pipeline(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config().pipeline;
    let files = discover_event_files(ctx)?;
    let mut fits_csv = String::from(
        "qwp_deg,hwp_deg,detector,window_lo_ps,window_hi_ps,amplitude,visibility,phase_rad,residual_rms\n",
    );
    let mut fringe_lines: Vec<FringeCount> = Vec::new();

    for (i, path) in files.iter().enumerate() {
        let artifact = ctx.read(path)?;
        let setting = setting_from_headers(&artifact.headers, path)?;
        let set = events::parse_events(&artifact.payload, &path.display().to_string())?;
        let shape = pattern_shape(&set);

        let mut corrected: Vec<(Detector, Pattern, (i64, i64))> = Vec::new();
        for detector in [Detector::D1, Detector::D2] {
            let photons = set.photons(detector);
            let hist =
                events::coincidence_histogram(&set.electrons, photons, cfg.bin_width_ps, cfg.range_ps)?;
            ctx.write(
                Command::Pipeline,
                &format!("coincidence_{i:03}_d{}.csv", detector.label()),
                &histogram_csv(&hist),
            )?;
            let window = match cfg.window_override {
                Some(w) => {
                    let w = w[detector.index()];
                    (w[0], w[1])
                }
                None => events::find_coincidence_window(&hist)?,
            };
            let pattern = events::subtract_timewindow_background(
                &set.electrons,
                photons,
                window,
                cfg.n_background_windows,
                shape,
            )?;
            corrected.push((detector, pattern, window));
        }

        // One fringe alignment shared by both detectors, estimated from the
        // summed pattern.
        let mut summed = corrected[0].1.clone();
        for (v, w) in summed.data.iter_mut().zip(&corrected[1].1.data) {
            *v += w;
        }
        let geometry = events::estimate_fringe_geometry(&summed)?;

        for (detector, pattern, window) in &corrected {
            ctx.write(
                Command::Pipeline,
                &format!("pattern_{i:03}_d{}.csv", detector.label()),
                &pattern.to_csv(),
            )?;
            let hist = events::extract_fringe_aligned(pattern, &geometry, cfg.phase_bins)?;
            ctx.write(
                Command::Pipeline,
                &format!("fringe_hist_{i:03}_d{}.csv", detector.label()),
                &phase_hist_csv(&hist),
            )?;
            let fit = events::fit_fringe(&hist)?;
            let _ = writeln!(
                fits_csv,
                "{},{},{},{},{},{},{},{},{}",
                setting.qwp_deg,
                setting.hwp_deg,
                detector.label(),
                window.0,
                window.1,
                fmt17(fit.amplitude),
                fmt17(fit.visibility),
                fmt17(fit.phase),
                fmt17(fit.residual_rms)
            );
            for (bin, value) in hist.values.iter().enumerate() {
                fringe_lines.push(FringeCount {
                    setting,
                    n_bins: cfg.phase_bins,
                    detector: *detector,
                    bin,
                    count: value.max(0.0).round() as u64,
                });
            }
        }
    }

    ctx.write(Command::Pipeline, "fringe_fits.csv", &fits_csv)?;
    ctx.write(
        Command::Pipeline,
        "fringe_counts.csv",
        &polopt::fringe_counts_to_string(&fringe_lines),
    )?;
    Ok(())
}

fn run_scan_mle(ctx: &RunContext) -> Result<()> {
    let path = ctx.input_path(
        ctx.config()
            .scan_mle
            .scan_counts
            .as_deref()
            .unwrap_or("scan_counts.csv"),
    );
    let artifact = ctx.read(&path)?;
    let counts = mle::parse_scan_counts(&artifact.payload, &path.display().to_string())?;

    let mut report = String::new();
    let mut blochs = Vec::new();
    for side in [Side::L, Side::R] {
        let records = mle::aggregate_scan(&counts, side)?;
        let (state, mle_report) = mle::mle_qubit(&records)?;
        let b = mle::bloch(&state)?;
        ctx.write(
            Command::ScanMle,
            &format!("rho_{}.dm", side.label()),
            &density_matrix_to_string(&state),
        )?;
        let _ = writeln!(
            report,
            "side {}: bloch = ({}, {}, {}), iterations = {}, converged = {}",
            side.label(),
            fmt17(b.x),
            fmt17(b.y),
            fmt17(b.z),
            mle_report.iterations,
            mle_report.converged
        );
        blochs.push(b);
    }
    let angle = mle::bloch_angle(&blochs[0], &blochs[1])?;
    let _ = writeln!(report, "bloch_angle_deg = {}", fmt17(angle));

    let mut csv = String::from("side,x,y,z\n");
    for (side, b) in [Side::L, Side::R].iter().zip(&blochs) {
        let _ = writeln!(csv, "{},{},{},{}", side.label(), fmt17(b.x), fmt17(b.y), fmt17(b.z));
    }
    let extra = BTreeMap::from([("bloch_angle_deg".to_string(), fmt17(angle))]);
    ctx.write_with(Command::ScanMle, "bloch_report.csv", extra, &csv)?;
    ctx.write(Command::ScanMle, "scan_mle_report.txt", &report)?;
    Ok(())
}

fn chain_config(ctx: &RunContext) -> ChainConfig {
    let mut chain = ctx.config().reconstruct.chain.clone();
    if chain.seed == 0 {
        chain.seed = ctx.seed;
    }
    chain
}

fn run_reconstruct(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config().reconstruct;
    let mut records = Vec::new();

    let fringe_files: Vec<PathBuf> = if cfg.fringe_counts.is_empty() {
        vec![ctx.out_path("fringe_counts.csv")]
    } else {
        cfg.fringe_counts.iter().map(|p| ctx.input_path(p)).collect()
    };
    for path in &fringe_files {
        let artifact = ctx.read(path)?;
        let lines = polopt::parse_fringe_counts(&artifact.payload, &path.display().to_string())?;
        records.extend(polopt::fringe_records(&lines)?);
    }

    let scan_path = cfg
        .scan_counts
        .as_ref()
        .map(|p| ctx.input_path(p))
        .or_else(|| {
            let default = ctx.out_path("scan_counts.csv");
            default.exists().then_some(default)
        });
    if let Some(path) = scan_path {
        let artifact = ctx.read(&path)?;
        let counts = mle::parse_scan_counts(&artifact.payload, &path.display().to_string())?;
        records.extend(mle::joint_scan_records(&counts)?);
    }

    let chain = chain_config(ctx);
    let samples = bayes::run_chains(&chain, &records)?;

    let mut buf = Vec::new();
    bayes::write_samples(&samples, &mut buf)?;
    ctx.write(
        Command::Reconstruct,
        "samples.txt",
        &String::from_utf8(buf).expect("ascii samples"),
    )?;

    let mut traces = String::from("chain,iteration,log_post\n");
    let mut acceptance = String::from("chain,iteration,cumulative_acceptance\n");
    let mut beta = String::from("chain,iteration,beta,window_acceptance\n");
    let mut report = String::new();
    for c in &samples.chains {
        for (iter, lp) in c.iterations.iter().zip(&c.log_post) {
            let _ = writeln!(traces, "{},{iter},{}", c.chain_id, fmt17(*lp));
        }
        for (iter, acc) in &c.acceptance_trace {
            let _ = writeln!(acceptance, "{},{iter},{}", c.chain_id, fmt17(*acc));
        }
        for (iter, b, acc) in &c.beta_trace {
            let _ = writeln!(beta, "{},{iter},{},{}", c.chain_id, fmt17(*b), fmt17(*acc));
        }
        let _ = writeln!(
            report,
            "chain {}: post-burn-in acceptance = {:.4}, final beta = {}, samples = {}",
            c.chain_id,
            c.acceptance_post_burnin,
            fmt17(c.beta_final),
            c.params.len()
        );
        for w in &c.warnings {
            let _ = writeln!(report, "warning: {w}");
        }
    }
    let _ = writeln!(
        report,
        "total retained samples = {} (n_iter = {}, burn_in = {}, thin = {})",
        samples.n_samples(),
        samples.n_iter,
        samples.burn_in,
        samples.thin
    );
    ctx.write(Command::Reconstruct, "chain_traces.csv", &traces)?;
    ctx.write(Command::Reconstruct, "acceptance_trace.csv", &acceptance)?;
    ctx.write(Command::Reconstruct, "beta_trace.csv", &beta)?;
    ctx.write(Command::Reconstruct, "reconstruct_report.txt", &report)?;
    Ok(())
}

fn load_samples(ctx: &RunContext, configured: Option<&str>) -> Result<PosteriorSamples> {
    let path = ctx.input_path(configured.unwrap_or("samples.txt"));
    let artifact = ctx.read(&path)?;
    bayes::read_samples(&mut artifact.payload.as_bytes())
}

fn load_channel_state(ctx: &RunContext, configured: Option<&str>, default: &str) -> Result<DensityMatrix> {
    let path = ctx.input_path(configured.unwrap_or(default));
    let artifact = ctx.read(&path)?;
    let lines: Vec<String> = artifact
        .payload
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    density_matrix_from_lines(&lines, &path.display().to_string())
}

fn summary_block(name: &str, s: &bayes::ScalarSummary) -> String {
    format!(
        "{name}: mean = {}, sd = {}, n = {}\n",
        fmt17(s.mean),
        fmt17(s.sd),
        s.n
    )
}

fn hist_csv(h: &bayes::Histogram) -> String {
    let mut s = String::from("bin_centre,count\n");
    for (c, n) in h.bin_centres().iter().zip(&h.counts) {
        let _ = writeln!(s, "{},{n}", fmt17(*c));
    }
    s
}

fn analyze_pass(
    ctx: &RunContext,
    samples: &PosteriorSamples,
    correction: Option<(CoherenceSpec, LocalChannelSpec)>,
    tag: &str,
    report: &mut String,
) -> Result<()> {
    let bins = ctx.config().analyze.bins;
    // Posterior mean (corrected when requested) fixes the photon rotation.
    let (mean_state, mean_sd) = bayes::posterior_mean_matrix(samples)?;
    let mean_for_opt = match &correction {
        Some((spec, channel)) => {
            entangle::clip_to_state(&entangle::corrected_state(mean_state.mat(), spec, channel)?)?
        }
        None => mean_state.clone(),
    };
    let (f_mean, u_opt) = entangle::bell_fidelity_opt(&mean_for_opt)?;

    if correction.is_none() {
        ctx.write(
            Command::Analyze,
            "rho_mean.dm",
            &density_matrix_to_string(&mean_state),
        )?;
        ctx.write(
            Command::Analyze,
            "posterior_fringes.csv",
            &posterior_fringes_csv(samples, &u_opt, 24)?,
        )?;
        let mut sd_csv = String::from("i,j,sd_re,sd_im\n");
        for i in 0..4 {
            for j in 0..4 {
                let _ = writeln!(
                    sd_csv,
                    "{i},{j},{},{}",
                    fmt17(mean_sd[(i, j)].re),
                    fmt17(mean_sd[(i, j)].im)
                );
            }
        }
        ctx.write(Command::Analyze, "rho_mean_sd.csv", &sd_csv)?;
    }

    let _ = writeln!(report, "[{tag}]");
    let _ = writeln!(
        report,
        "optimal_photon_rotation = [{} {} ; {} {}] (fidelity at mean = {})",
        u_opt[(0, 0)],
        u_opt[(0, 1)],
        u_opt[(1, 0)],
        u_opt[(1, 1)],
        fmt17(f_mean)
    );

    let opts = SummaryOptions {
        photon_rotation: Some(u_opt.clone()),
        correction,
        bins,
    };
    for functional in [
        ScalarFunctional::MinPtEig,
        ScalarFunctional::BellFidelity,
        ScalarFunctional::Concurrence,
        ScalarFunctional::EntanglementOfFormation,
    ] {
        let summary = bayes::posterior_summary(samples, functional, &opts)?;
        report.push_str(&summary_block(functional.name(), &summary));
        if functional == ScalarFunctional::MinPtEig && summary.sd > 0.0 {
            let _ = writeln!(
                report,
                "min_pt_eigenvalue_sd_violation = {}",
                fmt17(summary.mean.abs() / summary.sd)
            );
        }
        ctx.write(
            Command::Analyze,
            &format!("hist_{}{}.csv", functional.name(), tag_suffix(tag)),
            &hist_csv(&summary.histogram),
        )?;
    }
    Ok(())
}

fn tag_suffix(tag: &str) -> String {
    if tag == "raw" {
        String::new()
    } else {
        format!("_{tag}")
    }
}

/// Posterior-inferred electron interference fringes for photon Z, X and Y
/// measurements in the rotated basis: per phase bin the posterior mean and
/// SD of the cell probability.
fn posterior_fringes_csv(
    samples: &PosteriorSamples,
    u_opt: &crate::qmat::ComplexMatrix,
    n_bins: usize,
) -> Result<String> {
    use crate::qmat::{pauli, tensor};
    let identity = pauli(0);
    let mut effects = Vec::new(); // (basis, detector, bin, ξ)
    for (basis_idx, basis) in ["Z", "X", "Y"].iter().enumerate() {
        let sigma = pauli([3, 1, 2][basis_idx]);
        for (det, sign) in [(1u8, 1.0), (2u8, -1.0)] {
            // P_± in the rotated frame: U†·(I ± σ)/2·U.
            let p = &(&identity + &sigma.scale(Complex64::new(sign, 0.0)))
                .scale(Complex64::new(0.5, 0.0));
            let rotated = &(&u_opt.adjoint() * p) * u_opt;
            for bin in 0..n_bins {
                let electron = polopt::electron_phase_effect_bin(bin, n_bins)?;
                effects.push((*basis, det, bin, tensor(&electron.op, &rotated)?));
            }
        }
    }
    let n = samples.n_samples() as f64;
    let mut mean = vec![0.0_f64; effects.len()];
    let mut sq = vec![0.0_f64; effects.len()];
    for m in samples.iter_params() {
        let rho = bayes::rho_from_params(m)?;
        for (slot, (_, _, _, op)) in effects.iter().enumerate() {
            let p = op.trace_product(rho.mat()).re;
            mean[slot] += p;
            sq[slot] += p * p;
        }
    }
    let mut csv = String::from("basis,detector,bin,phase_rad,mean_probability,sd\n");
    for (slot, (basis, det, bin, _)) in effects.iter().enumerate() {
        let mu = mean[slot] / n;
        let sd = (sq[slot] / n - mu * mu).max(0.0).sqrt();
        let _ = writeln!(
            csv,
            "{basis},{det},{bin},{},{},{}",
            fmt17(polopt::bin_centre(*bin, n_bins)),
            fmt17(mu),
            fmt17(sd)
        );
    }
    Ok(csv)
}

fn coherence_pair(
    ctx: &RunContext,
    cfg: &CoherenceConfig,
) -> Result<(CoherenceSpec, LocalChannelSpec)> {
    let spec = CoherenceSpec::from_gamma(cfg.a, cfg.gamma)?;
    let rho0 = load_channel_state(ctx, cfg.rho0_path.as_deref(), "rho_L.dm")?;
    let rho1 = load_channel_state(ctx, cfg.rho1_path.as_deref(), "rho_R.dm")?;
    Ok((spec, LocalChannelSpec::new(rho0, rho1)?))
}

fn run_analyze(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config().analyze;
    let samples = load_samples(ctx, cfg.samples.as_deref())?;
    let mut report = String::new();
    let _ = writeln!(report, "retained samples = {}", samples.n_samples());
    analyze_pass(ctx, &samples, None, "raw", &mut report)?;
    if let Some(coherence) = &cfg.coherence {
        let pair = coherence_pair(ctx, coherence)?;
        let _ = writeln!(
            report,
            "coherence_correction: a = {}, gamma = {}",
            fmt17(coherence.a),
            fmt17(coherence.gamma)
        );
        analyze_pass(ctx, &samples, Some(pair), "corrected", &mut report)?;
    }
    ctx.write(Command::Analyze, "analysis_report.txt", &report)?;
    Ok(())
}

fn run_diagnose(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config().diagnose;
    let samples = load_samples(ctx, cfg.samples.as_deref())?;

    // Log-posterior traces come from the reconstruct artifact; the sample
    // file itself does not carry them.
    let traces_path = ctx.input_path(cfg.traces.as_deref().unwrap_or("chain_traces.csv"));
    let mut log_post: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    if traces_path.exists() {
        let artifact = ctx.read(&traces_path)?;
        for (idx, line) in artifact.payload.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    path: traces_path.display().to_string(),
                    line: idx + 1,
                    msg: "expected chain,iteration,log_post".into(),
                });
            }
            let chain: usize = parts[0].parse().map_err(|_| Error::InvalidValue("bad chain id".into()))?;
            let lp: f64 = parts[2].parse().map_err(|_| Error::InvalidValue("bad log_post".into()))?;
            log_post.entry(chain).or_default().push(lp);
        }
    }

    let opts = SummaryOptions::default();
    let min_pt_series = bayes::functional_series_per_chain(&samples, ScalarFunctional::MinPtEig, &opts)?;

    let mut report = String::new();
    let mut rhat_csv = String::from("length,rhat_min_pt_eigenvalue,rhat_log_post\n");
    if min_pt_series.len() >= 2 {
        let evolution = bayes::gelman_rubin_evolution(&min_pt_series, cfg.rhat_points)?;
        let lp_chains: Vec<Vec<f64>> = log_post.values().cloned().collect();
        let lp_evolution = if lp_chains.len() >= 2 {
            bayes::gelman_rubin_evolution(&lp_chains, cfg.rhat_points)?
        } else {
            Vec::new()
        };
        let lp_map: BTreeMap<usize, f64> = lp_evolution.into_iter().collect();
        for (len, r) in &evolution {
            let lp = lp_map
                .get(len)
                .map(|v| fmt17(*v))
                .unwrap_or_else(|| "nan".into());
            let _ = writeln!(rhat_csv, "{len},{},{lp}", fmt17(*r));
        }
        if let Some((len, r)) = evolution.last() {
            let _ = writeln!(report, "rhat_min_pt_eigenvalue (n = {len}) = {}", fmt17(*r));
        }
        if lp_chains.len() >= 2 {
            let _ = writeln!(
                report,
                "rhat_log_post = {}",
                fmt17(bayes::gelman_rubin(&lp_chains)?)
            );
        }
    }
    ctx.write(Command::Diagnose, "rhat.csv", &rhat_csv)?;

    let series0 = &min_pt_series[0];
    let max_lag = cfg.max_lag.min(series0.len().saturating_sub(1));
    let autocorr = bayes::autocorrelation(series0, max_lag)?;
    let mut ac_csv = String::from("lag,autocorrelation\n");
    for (lag, r) in autocorr.iter().enumerate() {
        let _ = writeln!(ac_csv, "{lag},{}", fmt17(*r));
    }
    ctx.write(Command::Diagnose, "autocorr.csv", &ac_csv)?;

    let ess: f64 = min_pt_series.iter().map(|s| bayes::effective_sample_size(s)).sum();
    let _ = writeln!(report, "effective_sample_size_min_pt = {}", fmt17(ess));
    let _ = writeln!(report, "thinning note: samples are thinned; ESS refers to retained samples");
    ctx.write(Command::Diagnose, "diagnose_report.txt", &report)?;
    Ok(())
}

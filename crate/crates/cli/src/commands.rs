use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use backflash::analysis::{sweep_efficiency, write_sweep_csv as write_efficiency_csv, LeakageEstimate};
use backflash::config::{ConfigFile, ExperimentConfig, RunRecord, RunSummary};
use backflash::darkcurrent::{linear_fit, log_spaced, simulate_dark_sweep, write_sweep_csv};
use backflash::keyrate::{key_rate_vs_distance, write_curves_csv, Bound};
use backflash::pipeline::{analyze, run_experiment, Analysis};
use backflash::timetag::{read_tags, read_tags_csv, write_apd_csv, write_monitor_csv, write_tags, TimeTagRecord};

use crate::{Command, Common};

pub fn run(command: Command) -> Result<()> {
    let common = match &command {
        Command::Simulate(c) | Command::Keyrate(c) | Command::Darksweep(c) | Command::SweepEfficiency(c) => c,
        Command::Analyze { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting thread pool")?;
    }
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::Analyze { common, input, on, off, apd } => {
            let inputs = match (input, on, off, apd) {
                (Some(dir), ..) => Inputs::from_dir(&dir),
                (None, Some(on), Some(off), Some(apd)) => Inputs { on, off, apd, record: None },
                _ => return Err(config_error("analyze needs --input DIR or all of --on, --off, --apd")),
            };
            analyze_tags(&common, &inputs)
        }
        Command::Keyrate(c) => keyrate(&c),
        Command::Darksweep(c) => darksweep(&c),
        Command::SweepEfficiency(c) => efficiency(&c),
    }
}

fn config_error(msg: &str) -> anyhow::Error {
    backflash::Error::Config(msg.into()).into()
}

/// Reads a config file or the config embedded in a run record.
fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(record) = RunRecord::parse(&text) {
        return Ok(record.config);
    }
    ConfigFile::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn with_seed(mut cfg: ConfigFile, common: &Common) -> ConfigFile {
    if let Some(seed) = common.seed {
        match &mut cfg.experiment {
            Some(exp) => exp.seed = seed,
            None => cfg.experiment = Some(ExperimentConfig::standard(seed)),
        }
    }
    cfg
}

/// Applies the command-line overrides to the experiment section and stores
/// the result back so that run records carry what actually ran.
fn experiment(cfg: &mut ConfigFile, common: &Common) -> Result<ExperimentConfig> {
    let mut exp = cfg.experiment()?.clone();
    if let Some(d) = common.duration {
        exp.duration_s = d;
    }
    if let Some(bins) = common.bins {
        exp.set_bins(bins)?;
    }
    exp.validate()?;
    cfg.experiment = Some(exp.clone());
    Ok(exp)
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<String> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|()| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    Ok(name.to_string())
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn summary(a: &LeakageEstimate) -> RunSummary {
    RunSummary { n_apd_valid: a.n_apd_valid, n_backflash: a.n_backflash, leakage: a.leakage, std_error: a.std_error }
}

fn print_estimate(a: &LeakageEstimate) {
    println!("N_A = {:.1}  N_B = {:.1}  P_L = {:.4e} ± {:.2e}", a.n_apd_valid, a.n_backflash, a.leakage, a.std_error);
}

fn simulate(common: &Common) -> Result<()> {
    let mut cfg = with_seed(load_config(common.config.as_deref())?, common);
    let exp = experiment(&mut cfg, common)?;
    create_out(&common.out)?;
    let run = run_experiment(&exp)?;
    let out = &common.out;
    let tags = |events: Vec<TimeTagRecord>| move |w: &mut BufWriter<File>| write_tags(w, &events);

    let mut outputs = vec![
        write_file(out, "apd_on.bin", tags(run.apd.events.iter().map(TimeTagRecord::from).collect()))?,
        write_file(out, "apd_on.csv", |w| write_apd_csv(w, &run.apd.events))?,
        // The APD is unbiased in the baseline run and never clicks.
        write_file(out, "apd_off.bin", tags(Vec::new()))?,
        write_file(out, "apd_off.csv", |w| write_apd_csv(w, &[]))?,
        write_file(out, "monitor_on.bin", tags(run.monitor_on.iter().map(TimeTagRecord::from).collect()))?,
        write_file(out, "monitor_on.csv", |w| write_monitor_csv(w, &run.monitor_on))?,
        write_file(out, "monitor_off.bin", tags(run.monitor_off.iter().map(TimeTagRecord::from).collect()))?,
        write_file(out, "monitor_off.csv", |w| write_monitor_csv(w, &run.monitor_off))?,
    ];
    println!(
        "{} APD clicks, {} backflash emissions, {} / {} monitor tags (on / off)",
        run.apd.events.len(),
        run.apd.backflash_emissions.len(),
        run.monitor_on.len(),
        run.monitor_off.len()
    );

    let a = analyze(&run.apd_timestamps(), &run.monitor_on_timestamps(), &run.monitor_off_timestamps(), &exp)?;
    print_estimate(&a.leakage);
    outputs.push("run.toml".into());
    let record = RunRecord { outputs, summary: summary(&a.leakage), config: cfg };
    let text = record.to_toml()?;
    write_file(out, "run.toml", |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

struct Inputs {
    on: PathBuf,
    off: PathBuf,
    apd: PathBuf,
    /// A `run.toml` next to the tags, used when no config is given.
    record: Option<PathBuf>,
}

impl Inputs {
    fn from_dir(dir: &Path) -> Self {
        let record = dir.join("run.toml");
        Inputs {
            on: dir.join("monitor_on.bin"),
            off: dir.join("monitor_off.bin"),
            apd: dir.join("apd_on.bin"),
            record: record.exists().then_some(record),
        }
    }
}

fn read_timestamps(path: &Path) -> Result<Vec<u64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let records = if path.extension().is_some_and(|e| e == "csv") { read_tags_csv(reader) } else { read_tags(reader) }
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(records.into_iter().map(|r| r.timestamp_ps).collect())
}

fn write_analysis(out: &Path, a: &Analysis) -> Result<()> {
    write_file(out, "histogram_on.csv", |w| a.on.write_csv(w))?;
    write_file(out, "histogram_off.csv", |w| a.off.write_csv(w))?;
    write_file(out, "histogram_subtracted.csv", |w| a.subtracted.write_csv(w))?;
    let l = &a.leakage;
    write_file(out, "leakage.csv", |w| {
        writeln!(w, "n_apd_valid,n_backflash,leakage,std_error")?;
        writeln!(w, "{},{},{},{}", l.n_apd_valid, l.n_backflash, l.leakage, l.std_error)
    })?;
    Ok(())
}

fn analyze_tags(common: &Common, inputs: &Inputs) -> Result<()> {
    let config_path = common.config.as_deref().or(inputs.record.as_deref());
    let mut cfg = with_seed(load_config(config_path)?, common);
    if cfg.experiment.is_none() {
        // Analysis draws no random numbers; the seed is irrelevant here.
        cfg.experiment = Some(ExperimentConfig::standard(0));
    }
    let exp = experiment(&mut cfg, common)?;
    let on = read_timestamps(&inputs.on)?;
    let off = read_timestamps(&inputs.off)?;
    let apd = read_timestamps(&inputs.apd)?;
    let a = analyze(&apd, &on, &off, &exp)?;
    create_out(&common.out)?;
    write_analysis(&common.out, &a)?;
    print_estimate(&a.leakage);
    Ok(())
}

fn keyrate(common: &Common) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let k = &cfg.keyrate;
    let distances = k.distances()?;
    create_out(&common.out)?;
    let standard = key_rate_vs_distance(&k.params, &distances, &k.leakages, Bound::Standard)?;
    write_file(&common.out, "keyrate.csv", |w| write_curves_csv(w, &standard))?;
    if k.pessimistic {
        let pessimistic = key_rate_vs_distance(&k.params, &distances, &k.leakages, Bound::Pessimistic)?;
        write_file(&common.out, "keyrate_pessimistic.csv", |w| write_curves_csv(w, &pessimistic))?;
    }
    for c in &standard {
        let reach = c.points.iter().rev().find(|p| p.rate > 0.0).map_or(0.0, |p| p.distance_km);
        println!(
            "P_L = {:<8} R(0 km) = {:.4e} bit/s, positive up to {reach} km",
            c.leakage, c.points[0].rate_per_second
        );
    }
    Ok(())
}

fn darksweep(common: &Common) -> Result<()> {
    let cfg = with_seed(load_config(common.config.as_deref())?, common);
    let seed = cfg.experiment()?.seed;
    let monitor = cfg.experiment()?.monitor;
    let mut d = cfg.darksweep.clone();
    if let Some(t) = common.duration {
        d.duration_s = t;
    }
    if !(d.current_start_na > 0.0 && d.current_stop_na > d.current_start_na) {
        return Err(config_error("darksweep currents must satisfy 0 < current_start_na < current_stop_na"));
    }
    let currents = log_spaced(d.current_start_na, d.current_stop_na, d.points);
    let sweep = simulate_dark_sweep(&currents, &d.curve, d.duration_s, &monitor, seed)?;
    create_out(&common.out)?;
    write_file(&common.out, "darksweep.csv", |w| write_sweep_csv(w, &sweep))?;
    let points: Vec<(f64, f64)> = sweep.iter().map(|p| (p.current_na, p.rate_cps)).collect();
    let fit = linear_fit(&points, d.fit_min_current_na)?;
    write_file(&common.out, "darksweep_fit.csv", |w| {
        writeln!(w, "slope,intercept,r_squared,points_used")?;
        writeln!(w, "{},{},{},{}", fit.slope, fit.intercept, fit.r_squared, fit.points_used)
    })?;
    println!(
        "fit above {} nA: slope {:.4} cps/nA, intercept {:.1} cps, r² = {:.5} ({} points)",
        d.fit_min_current_na, fit.slope, fit.intercept, fit.r_squared, fit.points_used
    );
    Ok(())
}

fn efficiency(common: &Common) -> Result<()> {
    let mut cfg = with_seed(load_config(common.config.as_deref())?, common);
    let exp = experiment(&mut cfg, common)?;
    let points = sweep_efficiency(&cfg.sweep.efficiencies, &exp)?;
    create_out(&common.out)?;
    write_file(&common.out, "efficiency.csv", |w| write_efficiency_csv(w, &points))?;
    for (eff, est) in &points {
        println!("η = {eff:<5} P_L = {:.4e} ± {:.2e}", est.leakage, est.std_error);
    }
    Ok(())
}

//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use eesm_core::calibration::{load_blers, planted_set, realization_gammas, BlerWindow, CalibrationSample};
use eesm_core::channel::rayleigh_flat_vector;
use eesm_core::eesm::{db_grid, eesm_beta_curve};
use eesm_core::protocol::fit_local_linear;
use eesm_core::session::{run_session, Scenario};
use eesm_core::{
    db_to_linear, eesm_effective_sinr, train_beta, Beta, BetaTable, CalibrationSet, ChannelProfile, CurveSet,
    OfdmaConfig, ReferenceCurve, SinrVector, TrainOptions,
};

use crate::manifest::{write_outputs, RunManifest};
use crate::parse::{fmt_db, fmt_linear};
use crate::{CalibrateArgs, CurveArgs, DemoArgs, GammaOptions, MapArgs};

/// Directory searched for table file names that are not paths.
pub const TABLE_DIR_ENV: &str = "EESM_TABLE_DIR";

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Resolves a table argument: an existing path, then a file under
/// `$EESM_TABLE_DIR`, then a shipped table name.
pub fn resolve_table(name: &str) -> Result<(BetaTable, Option<PathBuf>)> {
    let direct = Path::new(name);
    if direct.is_file() {
        return Ok((BetaTable::load(direct)?, Some(direct.to_path_buf())));
    }
    if let Some(dir) = std::env::var_os(TABLE_DIR_ENV) {
        let candidate = Path::new(&dir).join(name);
        if candidate.is_file() {
            return Ok((BetaTable::load(&candidate)?, Some(candidate)));
        }
    }
    BetaTable::builtin(name)
        .map(|t| (t, None))
        .ok_or_else(|| eesm_core::Error::Config(format!("beta table `{name}` not found")).into())
}

fn gamma_vector(opts: &GammaOptions, manifest: &mut RunManifest) -> Result<SinrVector> {
    let src = &opts.source;
    if let Some(db) = src.flat {
        if opts.n == 0 {
            return Err(eesm_core::Error::Config("--n must be at least 1".into()).into());
        }
        Ok(SinrVector::flat(db_to_linear(db), opts.n)?)
    } else if let Some(path) = &src.gamma_file {
        manifest.config(path);
        Ok(SinrVector::load_csv(path)?)
    } else if let Some(tones) = src.rayleigh {
        Ok(rayleigh_flat_vector(tones, opts.mean_snr, opts.seed)?)
    } else {
        unreachable!("clap requires one gamma source")
    }
}

fn gamma_seed(opts: &GammaOptions) -> Option<u64> {
    opts.source.rayleigh.map(|_| opts.seed)
}

pub fn map(args: &MapArgs, argv: &[String]) -> Result<()> {
    let mut manifest = RunManifest::new("map", argv, gamma_seed(&args.gamma));
    let gamma = gamma_vector(&args.gamma, &mut manifest)?;
    let beta = match (args.beta.beta, args.beta.format) {
        (Some(db), None) => Beta::from_db(db)?,
        (None, Some(format)) => {
            let (table, path) = resolve_table(&args.table)?;
            if let Some(p) = path {
                manifest.config(p);
            }
            table.lookup(format)?
        }
        _ => unreachable!("clap requires exactly one beta source"),
    };
    let eff = eesm_effective_sinr(&gamma, beta);

    let mut text = String::from("beta_db,eesm_db,eesm_linear");
    let bler = match &args.curve {
        Some(path) => {
            manifest.config(path);
            let curves = CurveSet::load(path)?;
            let mcs = args
                .mcs
                .or(args.beta.format)
                .ok_or_else(|| eesm_core::Error::Config("--curve needs --mcs or --format".into()))?;
            let curve = curves
                .get(mcs)
                .ok_or_else(|| eesm_core::Error::Config(format!("no curve for mcs {mcs} in {}", path.display())))?;
            text.push_str(",bler");
            Some(curve.bler_at(eff.db()))
        }
        None => None,
    };
    text.push('\n');
    text.push_str(&format!(
        "{},{},{}",
        fmt_db(beta.db()),
        fmt_db(eff.db()),
        fmt_linear(eff.linear())
    ));
    if let Some(b) = bler {
        text.push_str(&format!(",{}", fmt_linear(b)));
    }
    text.push('\n');

    emit(&text)?;
    if let Some(dir) = &args.output.out_dir {
        write_outputs(dir, manifest, &[("map.csv", &text)])?;
    }
    Ok(())
}

fn load_profile(name: &str, manifest: &mut RunManifest) -> Result<ChannelProfile> {
    match ChannelProfile::builtin(name) {
        Some(p) => Ok(p),
        None => {
            manifest.config(name);
            Ok(ChannelProfile::load(name)?)
        }
    }
}

pub fn calibrate(args: &CalibrateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = RunManifest::new("calibrate", argv, Some(args.seed));
    if args.realizations == 0 {
        return Err(eesm_core::Error::Config("need at least one realization".into()).into());
    }
    let profile = load_profile(&args.profile, &mut manifest)?;
    let config = match &args.config {
        Some(path) => {
            manifest.config(path);
            OfdmaConfig::load(path)?
        }
        None => OfdmaConfig::pusc_dl_10mhz(),
    };
    let curve = match (&args.curve.curve, args.curve.synthetic) {
        (Some(path), None) => {
            manifest.config(path);
            CurveSet::load(path)?.get(args.format).cloned().ok_or_else(|| {
                eesm_core::Error::Config(format!("no curve for format {} in {}", args.format, path.display()))
            })?
        }
        (None, Some((mid, slope))) => ReferenceCurve::synthetic(args.format, mid, slope)?,
        _ => unreachable!("clap requires exactly one curve source"),
    };
    let (lo, hi) = args.snr_range;
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(eesm_core::Error::Config(format!("--snr-range {lo}:{hi} is reversed")).into());
    }
    let gammas = realization_gammas(&profile, &config, args.seed, args.realizations, (lo, hi));

    let set = match (args.bler.planted, &args.bler.bler_file) {
        (Some(db), None) => planted_set(args.format, curve, gammas, Beta::from_db(db)?, None, args.seed),
        (None, Some(path)) => {
            manifest.config(path);
            let blers = load_blers(path)?;
            if blers.len() != gammas.len() {
                return Err(eesm_core::Error::Config(format!(
                    "{} has {} BLERs for {} realizations",
                    path.display(),
                    blers.len(),
                    gammas.len()
                ))
                .into());
            }
            CalibrationSet {
                mcs_id: args.format,
                samples: gammas
                    .into_iter()
                    .zip(blers)
                    .map(|(gamma, bler)| CalibrationSample { gamma, bler })
                    .collect(),
                curve,
            }
        }
        _ => unreachable!("clap requires exactly one BLER source"),
    };

    let window = BlerWindow {
        lo: args.window.0,
        hi: args.window.1,
    };
    let options = TrainOptions {
        weighted: args.weighted,
        window,
        bracket_db: args.bracket,
    };
    let report = train_beta(&set, options)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    emit(&text)?;
    eprintln!(
        "beta_db {} ({} cost, {}/{} samples used)",
        fmt_db(report.beta_db),
        report.cost_function,
        report.used_samples,
        report.sample_count
    );
    if let Some(dir) = &args.output.out_dir {
        write_outputs(dir, manifest, &[("calibration.json", &text)])?;
    }
    Ok(())
}

pub fn curve(args: &CurveArgs, argv: &[String]) -> Result<()> {
    let mut manifest = RunManifest::new("curve", argv, gamma_seed(&args.gamma));
    let gamma = gamma_vector(&args.gamma, &mut manifest)?;
    let (lo, hi, step) = args.grid;
    let samples = eesm_beta_curve(&gamma, &db_grid(lo, hi, step))?;

    let mut text = String::from("beta_db,eesm_db\n");
    for (b, e) in &samples {
        text.push_str(&format!("{},{}\n", fmt_db(*b), fmt_db(*e)));
    }
    emit(&text)?;

    let mut files = vec![("curve.csv", text.clone())];
    if let Some(window) = args.fit {
        let fit = fit_local_linear(&samples, window)?;
        let json = serde_json::to_string_pretty(&fit)? + "\n";
        match &args.fit_output {
            Some(path) => {
                std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            None => eprint!("{json}"),
        }
        files.push(("fit.json", json));
    }
    if let Some(dir) = &args.output.out_dir {
        let borrowed: Vec<(&str, &str)> = files.iter().map(|(n, t)| (*n, t.as_str())).collect();
        write_outputs(dir, manifest, &borrowed)?;
    }
    Ok(())
}

pub fn protocol_demo(args: &DemoArgs, argv: &[String]) -> Result<()> {
    let mut manifest = RunManifest::new("protocol-demo", argv, Some(args.seed));
    manifest.config(&args.scenario);
    let scenario = Scenario::load(&args.scenario)?;
    let trace = run_session(&scenario, args.seed)?;
    let text = trace.to_json_lines();
    emit(&text)?;
    let s = &trace.summary;
    eprintln!(
        "{} steps, {} in-range predictions, max in-range error {} dB, {} bound violations, {} identity mismatches",
        s.steps,
        s.in_range_predictions,
        fmt_db(s.max_in_range_error_db),
        s.bound_violations,
        s.identity_failures
    );
    if let Some(dir) = &args.output.out_dir {
        write_outputs(dir, manifest, &[("trace.jsonl", &text)])?;
    }
    if s.bound_violations > 0 || s.identity_failures > 0 {
        return Err(anyhow!(eesm_core::Error::Numeric(format!(
            "{} predictions outside max_residual_db + {} dB",
            s.bound_violations,
            eesm_core::session::PREDICTION_SLACK_DB
        ))));
    }
    Ok(())
}

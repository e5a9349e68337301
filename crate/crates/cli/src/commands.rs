use std::f64::consts::TAU;
use std::path::Path;

use cavity_nbody::analysis::{find_fixed_points, sample_flow_field, trifurcation_signature, Grid};
use cavity_nbody::dicke::{dicke_state, DickeSpace};
use cavity_nbody::dynamics::MeanFieldModel;
use cavity_nbody::effective::{average_hamiltonian_third_order, effective_model_second_order, InverseMode, LadderModel};
use cavity_nbody::params::{derive_couplings, PhysicalParams};
use cavity_nbody::sequence::{
    dominant_harmonic, fringe_scan, phase_grid, power_spectrum, resonance_scan, south_pole, FringeScan, Interaction,
    PulseSequence, ScanVariable, SequenceState,
};
use cavity_nbody::validation::run_validation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde_json::json;

use crate::config::{coupling, Coupling, EngineName, RunConfig, Scheme, MAX_EXACT_ATOMS};
use crate::output::{f, Writer};
use crate::{CliError, Command};

pub fn dispatch(cmd: Command, cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let w = Writer { dir, command: cmd, cfg };
    if cfg.engine() == EngineName::FullCavity && cmd != Command::Validate {
        return Err(CliError::Config("engine full_cavity is only available for validate".into()));
    }
    match cmd {
        Command::Couplings => couplings(cfg, &w),
        Command::Flowfield => flowfield(cfg, &w),
        Command::FixedPoints => fixed_points(cfg, &w),
        Command::Fringe => fringe(cfg, &w).map(|_| ()),
        Command::Resonance => resonance(cfg, &w),
        Command::Ring => ring(cfg, &w),
        Command::Spectrum => spectrum(cfg, &w),
        Command::Validate => validate(cfg, &w),
    }
}

/// Relative disagreement of the two elimination engines at κ = 0.
fn engine_cross_check(params: &PhysicalParams) -> Option<f64> {
    let mut p = params.clone();
    p.kappa = 0.0;
    let m = LadderModel::from_params(&p, 3).ok()?;
    let a = effective_model_second_order(&m, 6, InverseMode::LeadingOrder).ok()?;
    let b = average_hamiltonian_third_order(&m, 6).ok()?;
    let scale = a.coefficients.values().map(|c| c.norm()).fold(0.0, f64::max);
    let worst = a
        .coefficients
        .iter()
        .map(|(k, v)| (v - b.coefficients.get(k).copied().unwrap_or_default()).norm())
        .fold(0.0, f64::max);
    Some(worst / scale)
}

fn couplings(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let params = cfg.physical()?;
    let d = derive_couplings(&params)?;
    let c = coupling(cfg, &params)?;
    let n = params.n_atoms as f64;
    let hz = |x: f64| x / TAU;
    let mut v = json!({
        "scheme": cfg.scheme(),
        "n_atoms": params.n_atoms,
        "alpha_product": params.alphas().map(|(a, b)| (a * b).norm()).unwrap_or(f64::NAN),
        "couplings": d,
        "chi3_n2_hz": hz(d.chi3.abs() * n * n),
        "chi3_sign": d.chi3.signum(),
        "net_exchange_hz": hz(d.net_exchange),
        "chi2_single_tone_hz": hz(d.chi2_single_tone),
        "gamma_hz": d.gamma_collective.map(hz),
        "gamma_over_chi3_n2": d.gamma_collective.map(|g| g / (d.chi3.abs() * n * n)),
        "interaction_phase": c.phase,
        "engine_cross_check": if cfg.scheme() == Scheme::FourBody { None } else { engine_cross_check(&params) },
    });
    if cfg.scheme() == Scheme::FourBody {
        v["chi4_n3_hz"] = json!(hz(c.chi_n));
    }
    w.json("couplings.json", &v)?;
    println!("{}", serde_json::to_string_pretty(&v).expect("json serializes"));
    Ok(())
}

/// Coherent mean-field model (decay omitted from flow analyses).
fn flow_model(cfg: &RunConfig) -> Result<(MeanFieldModel, Coupling), CliError> {
    let params = cfg.physical()?;
    let c = coupling(cfg, &params)?;
    Ok((MeanFieldModel::new(cfg.n_body(), c.chi_n, c.phase), c))
}

fn flowfield(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let (m, _) = flow_model(cfg)?;
    let (nt, np) = cfg.grid();
    let samples = sample_flow_field(&m, Grid { n_theta: nt, n_phi: np });
    let p = w.csv(
        "flowfield.csv",
        &["theta", "phi", "dtheta_dt", "dphi_dt"],
        samples.iter().map(|s| vec![f(s.theta), f(s.phi), f(s.dtheta_dt), f(s.dphi_dt)]),
    )?;
    println!("wrote {} ({} samples)", p.display(), samples.len());
    Ok(())
}

fn fixed_points(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let (m, _) = flow_model(cfg)?;
    let fps = find_fixed_points(&m)?;
    let p = w.csv(
        "fixed_points.csv",
        &["theta", "phi", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "classification", "sign_changes"],
        fps.iter().map(|x| {
            let e = x.jacobian_eigenvalues;
            let class = serde_json::to_value(x.classification).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            vec![
                f(x.theta),
                f(x.phi),
                f(e[0].re),
                f(e[0].im),
                f(e[1].re),
                f(e[1].im),
                class,
                x.sign_changes.map(|k| k.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    println!("wrote {} ({} fixed points)", p.display(), fps.len());
    Ok(())
}

fn sequence_setup(cfg: &RunConfig) -> Result<(PulseSequence, SequenceState, usize), CliError> {
    let params = cfg.physical()?;
    let c = coupling(cfg, &params)?;
    let t = cfg.interaction_time()?;
    let it = Interaction { n_body: cfg.n_body(), chi_n: c.chi_n, gamma: c.gamma };
    let seq = PulseSequence::ramsey(it, 0.0, t, c.phase, params.six_photon_detuning);
    let init = match cfg.engine() {
        EngineName::Meanfield => SequenceState::MeanField(south_pole()),
        EngineName::Lindblad => {
            if params.n_atoms > MAX_EXACT_ATOMS {
                return Err(CliError::Config(format!(
                    "resource limit: exact engine supports n_atoms <= {MAX_EXACT_ATOMS}, got {}",
                    params.n_atoms
                )));
            }
            let s = DickeSpace::new(params.n_atoms)?;
            SequenceState::Exact(dicke_state(s, -s.spin())?)
        }
        EngineName::FullCavity => unreachable!("rejected in dispatch"),
    };
    Ok((seq, init, params.n_atoms))
}

/// Replaces each readout by a binomial sample of N atoms.
fn add_projection_noise(scan: &mut FringeScan, n_atoms: usize, seed: u64) {
    for (k, r) in scan.results.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let p = ((1.0 + *r) / 2.0).clamp(0.0, 1.0);
        let up = Binomial::new(n_atoms as u64, p).expect("p in [0, 1]").sample(&mut rng);
        *r = 2.0 * up as f64 / n_atoms as f64 - 1.0;
    }
}

fn run_fringe(cfg: &RunConfig) -> Result<FringeScan, CliError> {
    let (seq, init, n) = sequence_setup(cfg)?;
    let mut scan = fringe_scan(&seq, ScanVariable::PhiB, &phase_grid(cfg.phase_points()), &init)?;
    if cfg.protocol.noise.unwrap_or(false) {
        add_projection_noise(&mut scan, n, cfg.seed());
        let fit = cavity_nbody::sequence::fit_harmonic(&scan.values, &scan.results, seq.interaction.n_body)?;
        scan.fit = Some(fit);
    }
    Ok(scan)
}

fn fringe(cfg: &RunConfig, w: &Writer) -> Result<FringeScan, CliError> {
    let scan = run_fringe(cfg)?;
    let fit = scan.fit.expect("phase scans are fitted");
    let model = |x: f64| fit.amplitude * (fit.harmonic as f64 * x + fit.phase).sin() + fit.offset;
    let p = w.csv(
        "fringe.csv",
        &["phi_b", "Jz_over_J0", "fit_residual"],
        scan.values.iter().zip(&scan.results).map(|(&x, &y)| vec![f(x), f(y), f(y - model(x))]),
    )?;
    w.json("fringe_fit.json", &json!({ "fit": fit, "warnings": scan.warnings }))?;
    println!("wrote {}; n={} amplitude={:.6e} ± {:.1e} phase={:.6}", p.display(), fit.harmonic, fit.amplitude, fit.sigma, fit.phase);
    Ok(scan)
}

fn resonance(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let (seq, init, _) = sequence_setup(cfg)?;
    let span = cfg.protocol.delta_span_hz.unwrap_or(150e3) * TAU;
    let pts = cfg.protocol.delta_points.unwrap_or(61).max(3);
    let deltas: Vec<f64> = (0..pts).map(|k| -span + 2.0 * span * k as f64 / (pts - 1) as f64).collect();
    let r = resonance_scan(&seq, &deltas, cfg.phase_points().min(36), &init)?;
    let p = w.csv(
        "resonance.csv",
        &["delta_hz", "amplitude", "sigma"],
        r.delta.iter().zip(&r.amplitude).zip(&r.sigma).map(|((d, a), s)| vec![f(d / TAU), f(*a), f(*s)]),
    )?;
    let fwhm_hz = r.fwhm.map(|x| x / TAU);
    w.json("resonance.json", &json!({ "fwhm_hz": fwhm_hz, "peak_delta_hz": r.peak_delta / TAU }))?;
    match fwhm_hz {
        Some(x) => println!("wrote {}; FWHM = {:.3} kHz", p.display(), x / 1e3),
        None => println!("wrote {}; central lobe not resolved (widen delta_span_hz)", p.display()),
    }
    Ok(())
}

fn ring(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let (m, _) = flow_model(cfg)?;
    let (theta0, n) = cfg.ring();
    let r = trifurcation_signature(&m, theta0, n, cfg.interaction_time()?)?;
    let p = w.csv(
        "ring.csv",
        &["phi0", "Jx", "Jy"],
        (0..r.len()).map(|k| vec![f(r.phi0[k]), f(r.jx[k]), f(r.jy[k])]),
    )?;
    let (k, ratio) = r.dominant_harmonic();
    w.json("ring.json", &json!({ "dominant_harmonic": k, "ratio": ratio, "radial_harmonics": r.radial_harmonics() }))?;
    println!("wrote {}; dominant radial harmonic {k} (ratio {ratio:.2})", p.display());
    Ok(())
}

fn spectrum(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let scan = run_fringe(cfg)?;
    let power = power_spectrum(&scan)?;
    let p = w.csv("spectrum.csv", &["harmonic", "power"], power.iter().enumerate().map(|(k, x)| vec![k.to_string(), f(*x)]))?;
    let k = dominant_harmonic(&power);
    w.json("spectrum.json", &json!({ "dominant_harmonic": k, "power": power }))?;
    println!("wrote {}; dominant harmonic {k}", p.display());
    Ok(())
}

fn validate(cfg: &RunConfig, w: &Writer) -> Result<(), CliError> {
    let vc = cfg.validation()?;
    let r = run_validation(&vc)?;
    w.csv(
        "validate.csv",
        &["t", "p_full", "p_effective"],
        (0..r.times.len()).map(|k| vec![f(r.times[k]), f(r.p_full[k]), f(r.p_effective[k])]),
    )?;
    w.json("validate.json", &json!({ "config": vc, "report": r }))?;
    println!(
        "{} validate: max population error {:.3e} (tol {}), intermediate population {:.2e}, detuned suppression {:.1}x",
        if r.pass { "PASS" } else { "FAIL" },
        r.max_population_error,
        vc.tolerance,
        r.max_intermediate_population,
        r.suppression
    );
    if r.pass {
        Ok(())
    } else {
        Err(CliError::ValidationFailed)
    }
}

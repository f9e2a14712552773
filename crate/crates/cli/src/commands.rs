use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter};

use east_kcm::crj::{self, GSource, GoodCase, SiteSet};
use east_kcm::east_sim::{self, EastSim, Lattice};
use east_kcm::model::stationary_vector;
use east_kcm::paths::{self, Barrier};
use east_kcm::rng::{mix, stream_rng};
use east_kcm::spectral::{self, build_generator, Solver, TestFunction};
use east_kcm::wave_sim::{self, StressInit, WaveParams};
use east_kcm::{Configuration, Error};

use crate::table::{b, f, opt_f, sites, Table};
use crate::{Command, InitArg, SolverArg, SourceArg, TestFn};

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Io(io::Error),
}

impl Failure {
    pub fn is_precondition(&self) -> bool {
        match self {
            Failure::Core(e) => e.is_precondition(),
            Failure::Io(_) => false,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => e.fmt(f),
            Failure::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<Table, Failure>;

pub fn run(cmd: &Command, seed: u64) -> Outcome {
    match cmd {
        Command::Gap(a) => gap(a),
        Command::Dirichlet(a) => dirichlet(a),
        Command::SimEast(a) => sim_east(a, seed),
        Command::Front(a) => front(a, seed),
        Command::Tau0(a) => tau0(a, seed),
        Command::SimWave(a) => sim_wave(a, seed),
        Command::Supermg(a) => supermg(a, seed),
        Command::Overshoot(a) => overshoot(a, seed),
        Command::LmPath(a) => path_table(&paths::lm_path(a.m)?),
        Command::HOracle(a) => h_oracle(a),
        Command::DistPath(a) => dist_path(a, seed),
        Command::Compare(a) => compare(a),
        Command::CrjG(a) => crj_g(a, seed),
        Command::Goodness(a) => goodness(a, seed),
        Command::Bounds(a) => bounds(a),
        Command::LowerBound(a) => lower_bound(a, seed),
        Command::Scan(a) => scan(a),
    }
}

fn gap(a: &crate::GapArgs) -> Outcome {
    let gen = build_generator(a.n, a.p, a.v)?;
    if let Some(path) = &a.dump_matrix {
        gen.write_coo(BufWriter::new(File::create(path)?))?;
    }
    let pi = stationary_vector(a.n, a.p)?;
    let solver = match a.solver {
        SolverArg::Auto => Solver::Auto,
        SolverArg::Dense => Solver::Dense,
        SolverArg::Lanczos => Solver::Lanczos,
    };
    let r = spectral::spectral_gap_with(&gen, &pi, solver)?;
    let mut t = Table::new(&["n", "p", "v", "dim", "gap", "tau", "stationarity_residual", "eig_residual", "iterations"]);
    t.push(vec![
        a.n.to_string(),
        f(a.p),
        a.v.to_string(),
        gen.dim().to_string(),
        f(r.gap),
        f(r.tau),
        f(r.residual),
        f(r.eig_residual),
        r.iterations.to_string(),
    ]);
    Ok(t)
}

fn dirichlet(a: &crate::DirichletArgs) -> Outcome {
    let gen = build_generator(a.n, a.p, a.v)?;
    let pi = stationary_vector(a.n, a.p)?;
    let report = spectral::spectral_gap(&gen, &pi)?;
    let n = a.n;
    let g = match a.test_fn {
        TestFn::SiteN => TestFunction::from_fn(n, |c| f64::from(u8::from(c.is_occupied(n))))?,
        TestFn::Particles => TestFunction::from_fn(n, |c| c.particle_count() as f64)?,
        TestFn::Rightmost => TestFunction::from_fn(n, |c| c.rightmost() as f64)?,
        TestFn::Crj => crj::g_table(n, a.p)?,
        TestFn::Eigen => report.eigenfunction(&pi),
    };
    let vr = spectral::variational_ratio(&g, &gen, &pi)?;
    let mut t = Table::new(&["n", "p", "v", "test_fn", "variance", "dirichlet", "ratio", "tau", "ratio_le_tau"]);
    t.push(vec![
        n.to_string(),
        f(a.p),
        a.v.to_string(),
        format!("{:?}", a.test_fn).to_lowercase(),
        f(vr.variance),
        f(vr.energy),
        f(vr.ratio),
        f(report.tau),
        b(vr.ratio <= report.tau * (1.0 + 1e-9)),
    ]);
    Ok(t)
}

fn sim_east(a: &crate::SimEastArgs, seed: u64) -> Outcome {
    let lattice = match a.n {
        Some(n) => Lattice::Finite(n),
        None => Lattice::HalfLine { cap: a.cap },
    };
    let events = if a.stationary {
        let n = a.n.ok_or_else(|| Error::InvalidParameter {
            name: "stationary",
            value: "true".into(),
            domain: "a finite chain (--n)",
        })?;
        let mut sim = EastSim::stationary(a.p, n, stream_rng(seed, 0))?;
        let mut ev = Vec::new();
        sim.advance_to(a.horizon, |e| ev.push(e))?;
        ev
    } else {
        east_sim::simulate_east(a.p, lattice, &a.init, a.horizon, seed)?
    };
    let mut t = Table::new(&["t", "site", "state"]);
    for e in events {
        t.push(vec![f(e.t), e.site.to_string(), u8::from(e.state).to_string()]);
    }
    Ok(t)
}

fn front(a: &crate::FrontArgs, seed: u64) -> Outcome {
    let fs = east_sim::front_excursion(a.p, &a.thresholds, a.budget, a.replicas, seed)?;
    let mut t = Table::new(&["x", "t", "hit_fraction", "se", "median_hit", "censored"]);
    for (k, x) in fs.thresholds.iter().enumerate() {
        for &time in &a.times {
            let h = fs.hit_fraction(k, time);
            t.push(vec![f(*x), f(time), f(h.mean), f(h.se), f(fs.median_hit(k)), fs.censored(k).to_string()]);
        }
    }
    Ok(t)
}

fn tau0(a: &crate::Tau0Args, seed: u64) -> Outcome {
    if a.lags == 0 {
        return Err(Error::InvalidParameter { name: "lags", value: "0".into(), domain: "at least 1" }.into());
    }
    let lags: Vec<f64> = (0..=a.lags).map(|k| a.horizon * k as f64 / a.lags as f64).collect();
    let est = east_sim::estimate_tau0(a.p, a.n, a.probe, &lags, a.replicas, seed)?;
    let mut t = Table::new(&["lag", "estimate", "se", "in_fit", "tau0", "tau0_se", "conditioned"]);
    for (k, (lag, e)) in est.lags.iter().zip(&est.curve).enumerate() {
        t.push(vec![
            f(*lag),
            f(e.mean),
            f(e.se),
            b(k >= est.fit_window.0 && k <= est.fit_window.1),
            f(est.tau0),
            f(est.tau0_se),
            est.conditioned.to_string(),
        ]);
    }
    Ok(t)
}

fn sim_wave(a: &crate::SimWaveArgs, seed: u64) -> Outcome {
    let wp = WaveParams::new(a.p, a.v, 0.5)?;
    let lattice = match a.n {
        Some(n) => Lattice::Finite(n),
        None => Lattice::HalfLine { cap: wave_sim::DEFAULT_SITE_CAP },
    };
    let (waves, _) = wave_sim::simulate_wave(&wp, lattice, &a.init, a.horizon, seed)?;
    let mut t = Table::new(&["t", "origin", "right_end", "r_before", "r_after"]);
    for w in waves {
        t.push(vec![f(w.t), w.origin.to_string(), w.right_end.to_string(), w.r_before.to_string(), w.r_after.to_string()]);
    }
    Ok(t)
}

fn wave_params(p: f64, v: Option<usize>, lambda: f64) -> Result<WaveParams, Error> {
    match v {
        Some(v) => WaveParams::new(p, v, lambda),
        None => WaveParams::with_min_length(p, lambda),
    }
}

fn inits(arg: InitArg) -> Vec<StressInit> {
    match arg {
        InitArg::Single => vec![StressInit::SingleParticle],
        InitArg::Block => vec![StressInit::FrontBlock],
        InitArg::Adversarial => vec![StressInit::Adversarial],
        InitArg::All => StressInit::ALL.to_vec(),
    }
}

fn supermg(a: &crate::SupermgArgs, seed: u64) -> Outcome {
    let wp = wave_params(a.p, a.v, a.lambda)?;
    let chosen = inits(a.init);
    if !a.summary && chosen.len() > 1 {
        return Err(Error::InvalidParameter {
            name: "init",
            value: "all".into(),
            domain: "a single ensemble unless --summary is given",
        }
        .into());
    }
    if a.summary {
        let mut t = Table::new(&[
            "init", "p", "v", "lambda", "replicas", "estimate", "se", "bound", "within_bound", "below_099", "p_t_exceeds", "p_t_exceeds_se",
        ]);
        for (k, init) in chosen.into_iter().enumerate() {
            let r = wave_sim::supermartingale_ratio(&wp, init, a.shift, a.replicas, mix(seed, k as u64))?;
            t.push(vec![
                init.name().into(),
                f(wp.p),
                wp.v.to_string(),
                f(wp.lambda),
                a.replicas.to_string(),
                f(r.ratio.mean),
                f(r.ratio.se),
                f(r.bound),
                b(r.consistent_with_bound()),
                b(r.strictly_below()),
                f(r.p_t_exceeds.mean),
                f(r.p_t_exceeds.se),
            ]);
        }
        return Ok(t);
    }
    let r = wave_sim::supermartingale_ratio(&wp, chosen[0], a.shift, a.replicas, seed)?;
    let mut t = Table::new(&["replica", "U", "T", "stopped_at", "R0", "R_stop", "M_ratio"]);
    for (k, rec) in r.records.iter().enumerate() {
        t.push(vec![
            k.to_string(),
            f(rec.u),
            opt_f(rec.t),
            f(rec.stopped_at),
            rec.r0.to_string(),
            rec.r_stop.to_string(),
            f(rec.m_ratio),
        ]);
    }
    Ok(t)
}

fn overshoot(a: &crate::OvershootArgs, seed: u64) -> Outcome {
    let wp = wave_params(a.p, a.v, a.lambda)?;
    let r = wave_sim::overshoot_check(&wp, a.a, a.t, a.replicas, seed)?;
    let mut t = Table::new(&["u", "tail", "se", "bound", "dominated", "replicas"]);
    for &u in &a.u {
        let e = r.tail(u);
        t.push(vec![f(u), opt_f(Some(e.mean).filter(|x| x.is_finite())), opt_f(Some(e.se).filter(|x| x.is_finite())), f((-u).exp()), b(r.dominated_at(u)), r.samples.len().to_string()]);
    }
    Ok(t)
}

fn path_table(path: &paths::TransitionPath) -> Outcome {
    let mut t = Table::new(&["step", "config", "energy", "legal"]);
    let bad = path.first_illegal_step();
    for (k, s) in path.steps().iter().enumerate() {
        let legal = bad.is_none_or(|j| k < j);
        t.push(vec![k.to_string(), paths::bits_to_string(s), s.count_ones().to_string(), b(legal)]);
    }
    Ok(t)
}

fn h_oracle(a: &crate::HOracleArgs) -> Outcome {
    let (x, y, bound) = match (a.m, &a.from, &a.to) {
        (Some(m), _, _) => {
            if m > 5 {
                return Err(Error::CapExceeded { what: "m", value: m as usize, cap: 5 }.into());
            }
            let n = 1usize << m;
            (Configuration::origin(n)?, Configuration::from_sites(n, &[n])?, Some(m as usize + 2))
        }
        (None, Some(from), Some(to)) => (Configuration::parse(from)?, Configuration::parse(to)?, None),
        _ => {
            return Err(Error::InvalidParameter { name: "from", value: String::new(), domain: "--m or both --from and --to" }.into());
        }
    };
    let h = paths::h_oracle(&x, &y, a.energy_cap, a.budget)?;
    let mut t = Table::new(&["from", "to", "h", "exceeds_cap", "bound"]);
    let (h_str, exceeds) = match h {
        Barrier::Exact(k) => (k.to_string(), false),
        Barrier::ExceedsCap => (String::new(), true),
    };
    t.push(vec![x.to_string(), y.to_string(), h_str, b(exceeds), bound.map(|k| k.to_string()).unwrap_or_default()]);
    Ok(t)
}

fn parse_bits(s: &str, len: usize) -> Result<paths::SiteBits, Error> {
    let ok = s.len() == len && s.starts_with('1') && s.chars().all(|c| c == '0' || c == '1');
    if !ok {
        return Err(Error::InvalidParameter {
            name: "w",
            value: s.into(),
            domain: "0/1 string of length 2^m + 1 with site 0 occupied",
        });
    }
    let occupied: Vec<usize> = s.char_indices().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect();
    Ok(paths::site_bits(len, &occupied))
}

fn dist_path(a: &crate::DistPathArgs, seed: u64) -> Outcome {
    let len = (1usize << a.m) + 1;
    if let Some(samples) = a.exit_samples {
        let mut t = Table::new(&["probe", "energy", "exits", "se", "bound", "within"]);
        for (k, x) in paths::exit_probe_configurations(a.m, a.p, a.probes, 1000, mix(seed, u64::MAX))?.iter().enumerate() {
            let e = paths::exit_count_estimate(a.m, a.p, x, samples, mix(seed, k as u64))?;
            let bound = paths::exit_count_bound(a.m, a.p, x.count_ones());
            t.push(vec![paths::bits_to_string(x), x.count_ones().to_string(), f(e.mean), f(e.se), f(bound), b(e.mean <= bound + 3.0 * e.se)]);
        }
        return Ok(t);
    }
    let mut rng = stream_rng(seed, 0);
    let w = match &a.w {
        Some(s) => parse_bits(s, len)?,
        None => paths::sample_endpoint(a.m, a.p, &mut rng),
    };
    let w2 = match &a.w_prime {
        Some(s) => parse_bits(s, len)?,
        None => paths::sample_endpoint(a.m, a.p, &mut rng),
    };
    path_table(&paths::distinguished_path(a.m, &w, &w2)?)
}

fn compare(a: &crate::CompareArgs) -> Outcome {
    let c = paths::comparison_bound(a.m, a.p)?;
    let mut header = vec!["m", "p", "L", "B", "log_L", "log_B", "tau_upper", "log_tau_upper", "constraint_holds", "normalized_exponent"];
    let mut row = vec![
        a.m.to_string(),
        f(a.p),
        f(c.l),
        f(c.b),
        f(c.log_l),
        f(c.log_b),
        f(c.tau_upper),
        f(c.log_tau_upper),
        b(c.constraint_holds),
        f(c.normalized_exponent),
    ];
    if let Some(n) = a.n {
        let s = paths::comparison_sanity(n, a.p, a.m)?;
        header.extend(["n", "tau_east", "tau_wave", "BL", "holds"]);
        row.extend([n.to_string(), f(s.tau_east), f(s.tau_wave), f(s.bl), b(s.holds)]);
    }
    let mut t = Table::new(&header);
    t.push(row);
    Ok(t)
}

fn crj_g(a: &crate::CrjGArgs, seed: u64) -> Outcome {
    let n = a.n.unwrap_or_else(|| SiteSet::default_n(a.p));
    let s = SiteSet::new(n, a.sites.iter().copied())?;
    let exact = if s.len() <= crj::EXACT_MAX_SET { Some(crj::crj_exact_g(&s, a.p)?) } else { None };
    let mc = crj::crj_mc_g(&s, a.p, a.reps, seed)?;
    let mut t = Table::new(&["n", "p", "sites", "g_exact", "g_mc", "se", "reps"]);
    t.push(vec![n.to_string(), f(a.p), sites(s.sites()), opt_f(exact), f(mc.mean), f(mc.se), a.reps.to_string()]);
    Ok(t)
}

fn goodness(a: &crate::GoodnessArgs, seed: u64) -> Outcome {
    let n = a.n.unwrap_or_else(|| SiteSet::default_n(a.p));
    let sets: Vec<SiteSet> = if a.sites.is_empty() {
        (0..a.draws)
            .map(|k| crj::sample_si(a.i, a.p, n, &mut stream_rng(seed, k as u64)))
            .collect::<Result<_, _>>()?
    } else {
        vec![SiteSet::new(n, a.sites.iter().copied())?]
    };
    let mut t = Table::new(&["n", "p", "i", "sites", "a", "admissible", "good", "k1", "k2", "case"]);
    for s in sets {
        let v = crj::goodness_check(&s, a.i, a.p)?;
        let (k1, k2) = v.witness.map(|(x, y)| (x.to_string(), y.to_string())).unwrap_or_default();
        let case = match v.case {
            Some(GoodCase::Isolated) => "ii",
            Some(GoodCase::NearOrigin) => "iii",
            None => "",
        };
        t.push(vec![n.to_string(), f(a.p), a.i.to_string(), sites(s.sites()), v.a.to_string(), b(v.admissible), b(v.good), k1, k2, case.into()]);
    }
    Ok(t)
}

fn bounds(a: &crate::BoundsArgs) -> Outcome {
    let mut t = Table::new(&["p", "alpha", "beta", "norm_alpha_exp", "norm_beta_exp", "n", "a", "m0", "alpha_vacuous", "log_alpha", "log_beta"]);
    for &p in &a.p_grid {
        let r = crj::bound_functions(p)?;
        t.push(vec![
            f(p),
            f(r.alpha),
            f(r.beta),
            f(r.norm_alpha_exponent),
            f(r.norm_beta_exponent),
            r.n.to_string(),
            r.a.to_string(),
            r.m0.map(|m| m.to_string()).unwrap_or_default(),
            b(r.alpha_vacuous),
            f(r.log_alpha),
            f(r.log_beta),
        ]);
    }
    Ok(t)
}

fn lower_bound(a: &crate::LowerBoundArgs, seed: u64) -> Outcome {
    let source = match a.source {
        SourceArg::Exact => GSource::Exact,
        SourceArg::Mc => GSource::MonteCarlo { reps: a.reps, seed },
    };
    let r = crj::lower_bound_pipeline(a.n, a.p, source)?;
    let mut t = Table::new(&["n", "p", "var_g", "dirichlet", "ratio", "tau_exact", "certified"]);
    t.push(vec![
        r.n.to_string(),
        f(r.p),
        f(r.var_g),
        f(r.dirichlet),
        f(r.ratio),
        opt_f(r.tau_exact),
        r.certified.map(b).unwrap_or_default(),
    ]);
    Ok(t)
}

fn scan(a: &crate::ScanArgs) -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let mut t = Table::new(&[
        "p", "n", "gap", "tau", "log_tau_ratio", "normalized_exponent", "band_lo", "band_hi", "eig_residual",
    ]);
    for &p in &a.p_grid {
        let r = spectral::exact_gap(a.n_cap, p, 1)?;
        let l2 = (1.0 / p).ln().powi(2);
        let ratio = r.tau.ln() / l2;
        t.push(vec![
            f(p),
            a.n_cap.to_string(),
            f(r.gap),
            f(r.tau),
            f(ratio),
            f(ratio * ln2),
            f(1.0 / (2.0 * ln2)),
            f(1.0 / ln2),
            f(r.eig_residual),
        ]);
    }
    Ok(t)
}

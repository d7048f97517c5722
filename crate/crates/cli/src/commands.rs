//! One function per command: resolved parameters and a seed in, a table out.

use crate::error::{config, CliResult, Context};
use crate::row;
use crate::spec::{Command, Params};
use crate::table::{Cell, Table};
use rand::Rng;
use rwpmlab_core::disorder_relevance::{
    coarse_grain_split_check, default_threshold, fractional_moment_estimate, h_decomposition_check, h_ext_gap_sign_check,
    h_int_gap_mc, h_int_gap_sweep, h_mean_bound, h_mean_exact, h_samples, measure_cost_check, sample_tilted_disorder,
    tilted_increment_check, z_sum_large_dev, CoarseGrainConfig, DisorderContext,
};
use rwpmlab_core::estimate::{sample_variance, Estimate};
use rwpmlab_core::kernels::{
    bridge_return_compare, green_function, green_function_report, lclt_ratio, parse_kernel, GreenOptions, DEFAULT_TOL,
};
use rwpmlab_core::lattice_walk::sample_path;
use rwpmlab_core::pinning_model::{
    annealed_critical_point, annealed_log_partition, monotonicity_identity_check, quenched_log_partitions,
    quenched_partition_mc, volterra_partition_checked, ModelParams, PinningModel,
};
use rwpmlab_core::renewal::{llt_constant, renewal_function_checked, sample_renewal, RenewalLaw};
use rwpmlab_core::{JumpKernel, KernelTable, Stream};
use std::path::PathBuf;

/// Lookup-grid step of the transition tables behind the Volterra solver.
const LOOKUP_STEP: f64 = 0.05;

/// A finished command: its table and, for checks, whether every row passed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub pass: Option<bool>,
}

impl Outcome {
    fn data(table: Table) -> Self {
        Outcome { table, pass: None }
    }

    /// Pass verdict read off the `pass` column.
    fn checked(table: Table) -> Self {
        let col = table.column("pass").expect("check tables carry a pass column");
        let pass = table.rows.iter().all(|r| r[col] != Cell::Flag(false));
        Outcome { table, pass: Some(pass) }
    }
}

pub fn dispatch(cmd: Command, p: &Params, seed: u64) -> CliResult<Outcome> {
    match cmd {
        Command::KernelCheck => kernel_check(p),
        Command::RenewalLlt => renewal_llt(p),
        Command::Partition => partition(p, seed),
        Command::FreeEnergy => free_energy(p, seed),
        Command::HlStats => hl_stats(p, seed),
        Command::LemmaCheck => lemma_check(p, seed),
        Command::FracMoment => frac_moment(p, seed),
        Command::Monotonicity => monotonicity(p, seed),
        Command::CoarseGrain => coarse_grain(p, seed),
    }
}

/// `simple` for the nearest-neighbour walk, a path to a kernel file, or
/// the kernel text itself.
fn kernel(p: &Params) -> CliResult<JumpKernel> {
    let spec = p.s("kernel");
    if spec == "simple" {
        return JumpKernel::simple(p.u("dim")).ctx("kernel");
    }
    let path = PathBuf::from(spec);
    let text = if path.is_file() { std::fs::read_to_string(&path)? } else { spec.replace(';', "\n") };
    parse_kernel(&text).ctx("kernel")
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("RWPMLAB_CACHE").map(PathBuf::from)
}

fn table(k: &JumpKernel, horizon: f64) -> CliResult<KernelTable> {
    KernelTable::load_or_build(k, 1.0, horizon, DEFAULT_TOL, cache_dir().as_deref()).ctx("kernel table")
}

fn positive(p: &Params, keys: &[&str]) -> CliResult<()> {
    for k in keys {
        if !(p.f(k) > 0.0) {
            return config(format!("parameter '{k}' must be positive"));
        }
    }
    Ok(())
}

fn kernel_check(p: &Params) -> CliResult<Outcome> {
    positive(p, &["rate", "t_lclt"])?;
    let k = kernel(p)?;
    let g = green_function_report(&k, p.f("rate"), GreenOptions::default()).ctx("green function")?;
    let lclt = lclt_ratio(&table(&k, p.f("t_lclt"))?, p.f("t_lclt")).ctx("local CLT")?;
    let mut t = Table::new(&["quantity", "value", "reference", "error", "pass"]);
    t.push(row!["green", g.value, Cell::Empty, g.error_estimate, g.error_estimate < p.f("green_tol")]);
    t.push(row!["green_partial_sum", g.partial_sum, Cell::Empty, Cell::Empty, Cell::Empty]);
    t.push(row!["green_tail", g.tail, g.tail_bound, Cell::Empty, Cell::Empty]);
    t.push(row!["green_terms", g.n_terms, Cell::Empty, Cell::Empty, Cell::Empty]);
    t.push(row!["lclt_ratio", lclt, 1.0, (lclt - 1.0).abs(), (lclt - 1.0).abs() < p.f("lclt_tol")]);
    Ok(Outcome::checked(t))
}

fn renewal_llt(p: &Params) -> CliResult<Outcome> {
    positive(p, &["t", "h"])?;
    let k = kernel(p)?;
    let law = RenewalLaw::pinning(&k, p.f("rho")).ctx("renewal law")?;
    let t = p.f("t");
    let chk = renewal_function_checked(&law, p.f("h"), t).ctx("renewal function")?;
    let alpha = law.alpha();
    let value = law.c_k() * t.powf(1.0 - alpha) * chk.fine.at(t);
    let target = llt_constant(alpha);
    let rel = (value / target - 1.0).abs();
    let mut out = Table::new(&["t", "value", "target", "rel_error", "grid_change", "pass"]);
    out.push(row![t, value, target, rel, chk.change, rel < p.f("tol") && chk.change < 0.01]);
    Ok(Outcome::checked(out))
}

fn model_params(k: &JumpKernel, rho: f64, beta: f64, t: f64) -> CliResult<ModelParams> {
    let g = green_function(k, 1.0).ctx("green function")?;
    ModelParams::new(rho, beta, t, g).ctx("model parameters")
}

fn partition(p: &Params, seed: u64) -> CliResult<Outcome> {
    positive(p, &["t", "h"])?;
    let k = kernel(p)?;
    let (rho, t) = (p.f("rho"), p.f("t"));
    let params = model_params(&k, rho, p.f("beta"), t)?;
    let y = sample_path(&k, rho, t, &mut Stream::new(seed).child(0).rng());
    let method = p.s("method");
    let (value, se, n, change) = match method {
        "volterra" => {
            let model = PinningModel::new(&k, rho, t, LOOKUP_STEP).ctx("pinning model")?;
            let c = volterra_partition_checked(&model, &params, &y, p.f("h")).ctx("volterra partition")?;
            (c.log_z_extrapolated.exp(), 0.0, 0, Cell::Num(c.change))
        }
        "mc" => {
            let e = quenched_partition_mc(&k, &params, &y, p.u("n"), Stream::new(seed).child(1)).ctx("monte carlo partition")?;
            (e.value, e.std_err, e.n, Cell::Empty)
        }
        other => return config(format!("method must be 'volterra' or 'mc', got '{other}'")),
    };
    let mut out = Table::new(&["method", "rho", "beta", "z", "t", "value", "std_err", "n", "grid_change"]);
    out.push(row![method, rho, params.beta, params.z(), t, value, se, n, change]);
    Ok(Outcome::data(out))
}

fn free_energy(p: &Params, seed: u64) -> CliResult<Outcome> {
    positive(p, &["t", "h"])?;
    let k = kernel(p)?;
    let (rho, beta, t) = (p.f("rho"), p.f("beta"), p.f("t"));
    let model = PinningModel::new(&k, rho, 2.0 * t, LOOKUP_STEP).ctx("pinning model")?;
    let doubled = model.params_beta(beta, 2.0 * t).ctx("model parameters")?;
    let (at_t, at_2t) =
        quenched_log_partitions(&model, &doubled, p.f("h"), p.u("n_disorder"), p.u("n_inner"), Stream::new(seed)).ctx("free energy")?;
    let change = (at_2t.value - at_t.value).abs();
    let allowed = 0.005f64.max(at_2t.std_err.max(at_t.std_err));
    let ann = annealed_log_partition(&k, &doubled, p.f("h")).ctx("annealed partition")? / (2.0 * t);
    let crit = annealed_critical_point(&k, rho).ctx("critical point")?;
    let mut out = Table::new(&[
        "rho", "beta", "beta_over_critical", "t", "f_t", "se_t", "f_2t", "se_2t", "change", "allowed", "converged", "f_annealed",
    ]);
    out.push(row![rho, beta, beta / crit, t, at_t.value, at_t.std_err, at_2t.value, at_2t.std_err, change, allowed, change < allowed, ann]);
    Ok(Outcome::data(out))
}

fn disorder_setup(p: &Params, k: &JumpKernel) -> CliResult<(CoarseGrainConfig, DisorderContext)> {
    let cfg = CoarseGrainConfig::new(p.f("L"), p.f("zeta")).and_then(|c| c.with_a2(p.f("a2"))).ctx("coarse-grain config")?;
    let rho = p.f("rho");
    let horizon = (1.0 + rho) * (cfg.l + cfg.a2).max(p.0.get("delta").and_then(|d| d.as_f64()).unwrap_or(0.0)) + 20.0;
    let ctx = DisorderContext::new(k, rho, horizon).ctx("disorder context")?;
    Ok((cfg, ctx))
}

fn hl_stats(p: &Params, seed: u64) -> CliResult<Outcome> {
    let k = kernel(p)?;
    let (cfg, ctx) = disorder_setup(p, &k)?;
    let rho = p.f("rho");
    let exact = h_mean_exact(&cfg, &ctx).ctx("H_L mean")?;
    let h = h_samples(&k, rho, &cfg, p.u("n"), Stream::new(seed)).ctx("H_L samples")?;
    let e = Estimate::from_samples(&h, seed);
    let var = sample_variance(&h);
    let max = h.iter().cloned().fold(0.0, f64::max);
    let bound = h_mean_bound(&cfg);
    let pass = e.z_score(exact, 0.0) < 3.0 && max <= bound;
    let mut out = Table::new(&[
        "L", "rho", "a2", "n", "mean_exact", "mean", "std_err", "variance", "coefficient", "max", "bound", "pass",
    ]);
    out.push(row![cfg.l, rho, cfg.a2, e.n, exact, e.value, e.std_err, var, var * rho.powi(3) / cfg.l, max, bound, pass]);
    Ok(Outcome::checked(out))
}

fn lemma_check(p: &Params, seed: u64) -> CliResult<Outcome> {
    let k = kernel(p)?;
    let stream = Stream::new(seed);
    let (n, rho) = (p.u("n"), p.f("rho"));
    let mut out = Table::new(&["lemma", "instance", "lhs", "rhs_or_bound", "pass"]);
    let lemma = p.s("lemma").to_string();
    let mut push = |instance: String, lhs: f64, rhs: f64, pass: bool| out.push(row![lemma.as_str(), instance, lhs, rhs, pass]);
    match lemma.as_str() {
        "tilted-law" => {
            let (_, ctx) = disorder_setup(p, &k)?;
            let r = tilted_increment_check(&ctx, p.f("delta"), n, stream).ctx("tilted increment law")?;
            push(format!("delta={}", p.f("delta")), r.p_value, 0.01, r.pass);
        }
        "decomposition" => {
            let (cfg, ctx) = disorder_setup(p, &k)?;
            let law = RenewalLaw::pinning(&k, rho).ctx("renewal law")?;
            for i in 0..p.u("instances") {
                let s = stream.child(i as u64);
                let a = cfg.l / 10.0 * (i % 4) as f64;
                let sigma = sample_renewal(&law, a, cfg.l, &mut s.child(0).rng());
                let t = sample_tilted_disorder(&ctx, &sigma, &cfg, s.child(1)).ctx("tilted disorder")?;
                let r = h_decomposition_check(&t, &cfg).ctx("decomposition")?;
                push(format!("{i}"), r.residual, 1e-6, r.residual < 1e-6 && r.bounds_hold);
            }
        }
        "int-gap" => {
            let (cfg, ctx) = disorder_setup(p, &k)?;
            let m = p.u("n_points");
            if m < 2 {
                return config("n_points must be at least 2");
            }
            let (lo, hi) = (3.0, cfg.a2 - 1.0);
            let deltas: Vec<f64> = (0..m).map(|i| lo + i as f64 * (hi - lo) / (m - 1) as f64).collect();
            let s = h_int_gap_sweep(&deltas, &cfg, &ctx).ctx("gap sweep")?;
            for r in &s.rows {
                push(format!("delta={:.6}", r.delta), r.gap, 0.0, r.gap > 0.0);
            }
        }
        "gap-mc" => {
            let (cfg, ctx) = disorder_setup(p, &k)?;
            let r = h_int_gap_mc(p.f("delta"), &cfg, &ctx, n, stream).ctx("gap monte carlo")?;
            push(format!("delta={}", p.f("delta")), r.difference, r.exact, r.pass);
        }
        "ext-gap" => {
            let (cfg, ctx) = disorder_setup(p, &k)?;
            let law = RenewalLaw::pinning(&k, rho).ctx("renewal law")?;
            let sigma = sample_renewal(&law, cfg.l / 10.0, cfg.l, &mut stream.child(0).rng());
            let r = h_ext_gap_sign_check(&sigma, &cfg, &ctx, n, stream.child(1)).ctx("exterior gap")?;
            for g in &r.rows {
                push(format!("[{:.6},{:.6}]", g.start, g.end), g.difference, -3.0 * g.std_err, g.pass);
            }
        }
        "measure-cost" => {
            let (cfg, ctx) = disorder_setup(p, &k)?;
            let m = default_threshold(&cfg, &ctx, p.f("threshold_d")).ctx("threshold")?;
            let cfg = cfg.with_threshold(m, 1.0).ctx("threshold")?;
            let r = measure_cost_check(&k, rho, &cfg, n, n, stream).ctx("measure cost")?;
            push(format!("M={m:.6}"), r.cost.value, 2.0 + 3.0 * r.cost.std_err, r.pass);
        }
        "bridge" => {
            let tab = table(&k, 60.0)?;
            for i in 0..p.u("instances") {
                let mut rng = stream.child(i as u64).rng();
                let len = rng.random_range(1..=3usize);
                let pairs: Vec<(f64, f64)> = (0..len).map(|_| (rng.random_range(0.5..20.0), rng.random_range(0.5..20.0))).collect();
                let (lhs, rhs) = bridge_return_compare(&tab, &pairs).ctx("bridge comparison")?;
                let desc: Vec<String> = pairs.iter().map(|(a, b)| format!("({a:.6},{b:.6})")).collect();
                push(desc.join(" "), lhs, rhs, lhs > rhs);
            }
        }
        "z-sum" => {
            let cfg = CoarseGrainConfig::new(p.f("log_l").exp(), p.f("zeta")).ctx("coarse-grain config")?;
            let law = RenewalLaw::pinning(&k, rho).ctx("renewal law")?;
            let r = z_sum_large_dev(p.f("h_count"), &cfg, &law, n, stream).ctx("z-sum large deviations")?;
            push("mean".into(), r.mu_mc.value, r.mu_quadrature, r.z_score < 3.0);
            push(format!("tail:{}", serde_json::to_value(r.method)?.as_str().unwrap_or("")), r.tail_probability, p.f("tail_max"), r.tail_probability < p.f("tail_max"));
        }
        other => {
            return config(format!(
                "unknown lemma '{other}' (expected tilted-law, decomposition, int-gap, gap-mc, ext-gap, measure-cost, bridge or z-sum)"
            ))
        }
    }
    Ok(Outcome::checked(out))
}

fn frac_moment(p: &Params, seed: u64) -> CliResult<Outcome> {
    positive(p, &["t", "h"])?;
    let k = kernel(p)?;
    let model = PinningModel::new(&k, p.f("rho"), 4.0 * p.f("t"), LOOKUP_STEP).ctx("pinning model")?;
    let ladder = fractional_moment_estimate(&model, p.f("z"), p.f("gamma"), p.f("t"), p.u("n_disorder"), p.f("h"), Stream::new(seed))
        .ctx("fractional moment")?;
    let mut out = Table::new(&["t", "z", "gamma", "moment", "std_err", "n"]);
    for r in &ladder.rows {
        out.push(row![r.t, ladder.z, ladder.gamma, r.moment.value, r.moment.std_err, r.moment.n]);
    }
    Ok(Outcome::data(out))
}

fn monotonicity(p: &Params, seed: u64) -> CliResult<Outcome> {
    positive(p, &["t"])?;
    let k = kernel(p)?;
    let (rho, rho_p, beta, t) = (p.f("rho"), p.f("rho_prime"), p.f("beta"), p.f("t"));
    let r = monotonicity_identity_check(&k, rho, rho_p, beta, t, p.u("n_outer"), p.u("n_inner"), Stream::new(seed))
        .ctx("monotonicity identity")?;
    let mut out = Table::new(&[
        "rho", "rho_prime", "beta", "t", "lhs", "lhs_se", "rhs", "rhs_se", "annealed", "z_score", "pass",
    ]);
    out.push(row![rho, rho_p, beta, t, r.lhs.value, r.lhs.std_err, r.rhs.value, r.rhs.std_err, r.annealed, r.z_score, r.pass]);
    Ok(Outcome::checked(out))
}

fn coarse_grain(p: &Params, seed: u64) -> CliResult<Outcome> {
    positive(p, &["L", "h"])?;
    let k = kernel(p)?;
    let (m, l) = (p.u("m"), p.f("L"));
    let t = m as f64 * l;
    let model = PinningModel::new(&k, p.f("rho"), t, LOOKUP_STEP).ctx("pinning model")?;
    let y = model.sample_disorder(t, Stream::new(seed));
    let r = coarse_grain_split_check(&model, p.f("z"), &y, m, l, p.f("h"), p.f("gamma")).ctx("coarse-grain split")?;
    let mut out = Table::new(&["quantity", "value", "bound", "pass"]);
    for pat in &r.patterns {
        let name: Vec<String> = pat.blocks.iter().map(|b| b.to_string()).collect();
        out.push(row![format!("Z^{{{}}}", name.join(",")), pat.z, Cell::Empty, Cell::Empty]);
    }
    out.push(row!["sum", r.total, r.direct, Cell::Empty]);
    out.push(row!["residual", r.residual, 1e-6, r.residual < 1e-6]);
    out.push(row!["subadditivity", r.frac_lhs, r.frac_rhs, r.subadditive]);
    Ok(Outcome::checked(out))
}

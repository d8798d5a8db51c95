use std::collections::BTreeSet;

use tvbo_core::bounds::{bound_report, mean_stderr, scaling_diagnostic, uniform_points, upper_bound_series, ScalingConfig, ScalingRow};
use tvbo_core::kernels::{ClassTag, ProductKernel, SpatialKernel, TemporalKernel};
use tvbo_core::spectral::{
    approx_product_spectrum, approx_temporal_spectrum, build_spatial_matrix, build_temporal_matrix, eig_sym,
    format_float, Spectrum, TimeGrid,
};
use tvbo_core::tvbo::run_replications;
use tvbo_core::Execution;

use crate::config::{ExperimentConfig, PeriodicConfig, RegretConfig, SpectraConfig, TemporalConfig};
use crate::error::RunError;
use crate::svg::{self, Mark, Panel, Series, PALETTE};

/// A named output file held in memory until the writer stores it.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn svg(name: impl Into<String>, panels: &[Panel]) -> Self {
        Self { name: name.into(), bytes: svg::render(panels).into_bytes() }
    }
}

struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&str]) -> Result<Self, RunError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).map_err(RunError::compute)?;
        Ok(Self { name: name.into(), writer })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<(), RunError> {
        self.writer.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(RunError::compute)
    }

    fn finish(self) -> Result<Artifact, RunError> {
        let bytes = self.writer.into_inner().map_err(|e| RunError::compute(e.error()))?;
        Ok(Artifact { name: self.name, bytes })
    }
}

fn f(v: f64) -> String {
    format_float(v)
}

pub fn run(config: &ExperimentConfig, exec: Execution) -> Result<Vec<Artifact>, RunError> {
    let name = config.id().name();
    match config {
        ExperimentConfig::Spectra(c) => spectra(c),
        ExperimentConfig::Temporal(c) => temporal(name, c, exec),
        ExperimentConfig::Periodic(c) => periodic(c, exec),
        ExperimentConfig::ScalingFigure(c) => scaling_figure(&c.spatial, &c.kernels, scaling(c.ns(), c.interval, c.replications, c.time_step, c.noise_variance, c.seed), exec),
        ExperimentConfig::Table(c) => table(&c.spatial, &c.kernels, scaling(c.ns.clone(), c.interval, c.replications, c.time_step, c.noise_variance, c.seed), exec),
        ExperimentConfig::Regret(c) => regret(c, exec),
    }
}

fn index_points(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect()
}

fn spectra(c: &SpectraConfig) -> Result<Vec<Artifact>, RunError> {
    let n = c.n;
    let xs = uniform_points(c.seed, 0, n, c.spatial.dim());
    let grid = TimeGrid::new(n, c.time_step).map_err(RunError::compute)?;
    let ks = build_spatial_matrix(&c.spatial, &xs).map_err(RunError::compute)?;
    let kt = build_temporal_matrix(&c.temporal, grid);
    let k = ks.hadamard(&kt);
    let [ss, st, sk] = [&ks, &kt, &k].map(|m| eig_sym(m, false));
    let (ss, st, sk) = (ss.map_err(RunError::compute)?, st.map_err(RunError::compute)?, sk.map_err(RunError::compute)?);
    let product = approx_product_spectrum(&ss, &st, n);
    let used_s: BTreeSet<usize> = product.pairs.iter().map(|p| p.0).collect();
    let used_t: BTreeSet<usize> = product.pairs.iter().map(|p| p.1).collect();
    let spatial_op = ss.to_operator(n);

    let mut out = Vec::new();
    for (name, spectrum, used) in [("fig1_spatial.csv", &spatial_op, &used_s), ("fig1_temporal.csv", &st, &used_t)] {
        let mut t = Table::new(name, &["index", "eigenvalue", "used"])?;
        for (i, v) in spectrum.values.iter().enumerate() {
            t.row([i.to_string(), f(*v), u8::from(used.contains(&i)).to_string()])?;
        }
        out.push(t.finish()?);
    }
    let mut t = Table::new("fig1_product.csv", &["index", "exact", "approx", "spatial_index", "temporal_index"])?;
    for (i, (exact, (approx, (a, b)))) in sk.values.iter().zip(product.spectrum.values.iter().zip(&product.pairs)).enumerate() {
        t.row([i.to_string(), f(*exact), f(*approx), a.to_string(), b.to_string()])?;
    }
    out.push(t.finish()?);

    let split = |s: &Spectrum, used: &BTreeSet<usize>| {
        let pts = index_points(&s.values);
        let hit = pts.iter().enumerate().filter(|(i, _)| used.contains(i)).map(|(_, p)| *p).collect();
        (pts, hit)
    };
    let mut panels = Vec::new();
    for (title, s, used) in [("spatial K_S/n", &spatial_op, &used_s), ("temporal K_T", &st, &used_t)] {
        let (all, hit) = split(s, used);
        let mut p = Panel::new(title, "index", "eigenvalue").log_y();
        p.push(Series::new("spectrum", PALETTE[0], Mark::Dots, all));
        p.push(Series::new("used by the approximation", PALETTE[3], Mark::Dots, hit));
        panels.push(p);
    }
    let mut p = Panel::new("spatio-temporal K", "index", "eigenvalue").log_y();
    p.push(Series::new("spectrum", PALETTE[0], Mark::Dots, index_points(&sk.values)));
    p.push(Series::new("product approximation", PALETTE[1], Mark::Crosses, index_points(&product.spectrum.values)));
    panels.push(p);
    out.push(Artifact::svg("fig1.svg", &panels));
    Ok(out)
}

fn temporal(name: &str, c: &TemporalConfig, exec: Execution) -> Result<Vec<Artifact>, RunError> {
    let panels = c.panels();
    let results = exec
        .map(&panels, |p| -> Result<_, RunError> {
            let grid = TimeGrid::new(p.n, p.time_step).map_err(RunError::compute)?;
            let exact = eig_sym(&build_temporal_matrix(&c.temporal, grid), false).map_err(RunError::compute)?;
            let approx = approx_temporal_spectrum(&c.temporal, grid).map_err(RunError::compute)?;
            Ok((exact, approx))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    let mut figure = Vec::new();
    for (i, (p, (exact, approx))) in panels.iter().zip(&results).enumerate() {
        let mut t = Table::new(
            format!("{name}_panel{}.csv", i + 1),
            &["index", "frequency", "approx_unsorted", "exact", "approx_sorted"],
        )?;
        for j in 0..p.n {
            t.row([
                j.to_string(),
                f(approx.frequencies[j]),
                f(approx.samples[j]),
                f(exact.values[j]),
                f(approx.spectrum.values[j]),
            ])?;
        }
        out.push(t.finish()?);
        let mut panel = Panel::new(format!("n = {}, step = {}", p.n, p.time_step), "index", "eigenvalue");
        panel.push(Series::new("exact", PALETTE[0], Mark::Line, index_points(&exact.values)));
        panel.push(Series::new("density samples, unsorted", PALETTE[1], Mark::Dots, index_points(&approx.samples)));
        panel.push(Series::new("density samples, sorted", PALETTE[2], Mark::Dots, index_points(&approx.spectrum.values)));
        figure.push(panel);
    }
    out.push(Artifact::svg(format!("{name}.svg"), &figure));
    Ok(out)
}

fn periodic(c: &PeriodicConfig, exec: Execution) -> Result<Vec<Artifact>, RunError> {
    let period = c.period().expect("validated periodic kernel");
    let jobs: Vec<(usize, usize)> = c.divisors.iter().flat_map(|&k| c.ns.iter().map(move |&n| (k, n))).collect();
    let spectra = exec
        .map(&jobs, |&(k, n)| {
            let grid = TimeGrid::new(n, period / k as f64).map_err(RunError::compute)?;
            eig_sym(&build_temporal_matrix(&c.temporal, grid), false).map_err(RunError::compute)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    let mut counts = Table::new("fig4_counts.csv", &["divisor", "time_step", "n", "positive_count"])?;
    for (&(k, n), s) in jobs.iter().zip(&spectra) {
        let cut = s.max() * tvbo_core::spectral::POSITIVE_REL_TOL;
        let mut t = Table::new(format!("fig4_k{k}_n{n}.csv"), &["index", "eigenvalue", "positive"])?;
        for (i, v) in s.values.iter().enumerate() {
            t.row([i.to_string(), f(*v), u8::from(*v > cut).to_string()])?;
        }
        out.push(t.finish()?);
        counts.row([k.to_string(), f(period / k as f64), n.to_string(), s.positive_count().to_string()])?;
    }
    out.push(counts.finish()?);

    let figure: Vec<Panel> = c
        .divisors
        .iter()
        .map(|&k| {
            let mut p = Panel::new(format!("step = r/{k}"), "index", "eigenvalue").log_y();
            for (j, (&(kk, n), s)) in jobs.iter().zip(&spectra).filter(|((kk, _), _)| *kk == k).enumerate() {
                debug_assert_eq!(kk, k);
                p.push(Series::new(format!("n = {n}"), PALETTE[j % PALETTE.len()], Mark::Dots, index_points(&s.values)));
            }
            p
        })
        .collect();
    out.push(Artifact::svg("fig4.svg", &figure));
    Ok(out)
}

fn scaling(ns: Vec<usize>, interval: (f64, f64), replications: usize, time_step: f64, noise: f64, seed: u64) -> ScalingConfig {
    ScalingConfig { ns, interval, replications, time_step, noise_variance: noise, seed }
}

/// Family names, with a `_<position>` suffix when a family repeats.
fn kernel_labels(kernels: &[TemporalKernel]) -> Vec<String> {
    kernels
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let name = k.family_name();
            if kernels.iter().filter(|o| o.family_name() == name).count() > 1 {
                format!("{name}_{}", i + 1)
            } else {
                name.to_string()
            }
        })
        .collect()
}

fn scaling_rows(
    spatial: &SpatialKernel,
    kernels: &[TemporalKernel],
    config: &ScalingConfig,
    exec: Execution,
) -> Result<Vec<Vec<ScalingRow>>, RunError> {
    kernels
        .iter()
        .map(|kt| scaling_diagnostic(&ProductKernel::new(spatial.clone(), kt.clone()), config, exec).map_err(RunError::compute))
        .collect()
}

fn scaling_figure(
    spatial: &SpatialKernel,
    kernels: &[TemporalKernel],
    config: ScalingConfig,
    exec: Execution,
) -> Result<Vec<Artifact>, RunError> {
    let rows = scaling_rows(spatial, kernels, &config, exec)?;
    let labels = kernel_labels(kernels);
    let mut t = Table::new("fig5.csv", &["kernel", "n", "count", "count_stderr", "I_over_n", "I_over_n_stderr"])?;
    for (label, rs) in labels.iter().zip(&rows) {
        for r in rs {
            t.row([
                label.clone(),
                r.n.to_string(),
                f(r.count_mean),
                f(r.count_stderr),
                f(r.info_per_n_mean),
                f(r.info_per_n_stderr),
            ])?;
        }
    }
    let (a, b) = config.interval;
    let mut counts = Panel::new(format!("eigenvalues in [{a}, {b}]"), "n", "count");
    let mut info = Panel::new("mutual information / n", "n", "I / n");
    for (i, (label, rs)) in labels.iter().zip(&rows).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let n = |r: &ScalingRow| r.n as f64;
        let c_band = rs.iter().map(|r| (n(r), r.count_mean - r.count_stderr, r.count_mean + r.count_stderr)).collect();
        let i_band =
            rs.iter().map(|r| (n(r), r.info_per_n_mean - r.info_per_n_stderr, r.info_per_n_mean + r.info_per_n_stderr)).collect();
        counts.push(Series::new(label, color, Mark::Line, rs.iter().map(|r| (n(r), r.count_mean)).collect()).with_band(c_band));
        info.push(Series::new(label, color, Mark::Line, rs.iter().map(|r| (n(r), r.info_per_n_mean)).collect()).with_band(i_band));
    }
    Ok(vec![t.finish()?, Artifact::svg("fig5.svg", &[counts, info])])
}

fn class_name(tag: ClassTag) -> &'static str {
    match tag {
        ClassTag::Broadband => "broadband",
        ClassTag::BandLimited => "band_limited",
        ClassTag::AlmostPeriodic => "almost_periodic",
        ClassTag::LowRank => "low_rank",
    }
}

/// Least-squares slope of `ln y` against `ln n` over rows with `y > 0`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn table(
    spatial: &SpatialKernel,
    kernels: &[TemporalKernel],
    config: ScalingConfig,
    exec: Execution,
) -> Result<Vec<Artifact>, RunError> {
    let rows = scaling_rows(spatial, kernels, &config, exec)?;
    let labels = kernel_labels(kernels);
    let mut detail = Table::new(
        "table1.csv",
        &["kernel", "class", "n", "count", "count_stderr", "I_over_n", "I_over_n_stderr"],
    )?;
    let mut summary = Table::new(
        "table1_summary.csv",
        &["kernel", "class", "bounded_support", "discrete_support", "expected_count_scaling", "count_exponent", "I_exponent"],
    )?;
    let mut panel = Panel::new(format!("eigenvalues in [{}, {}]", config.interval.0, config.interval.1), "n", "count");
    for (i, ((label, kt), rs)) in labels.iter().zip(kernels).zip(&rows).enumerate() {
        let class = kt.classify();
        for r in rs {
            detail.row([
                label.clone(),
                class_name(class.tag).to_string(),
                r.n.to_string(),
                f(r.count_mean),
                f(r.count_stderr),
                f(r.info_per_n_mean),
                f(r.info_per_n_stderr),
            ])?;
        }
        let counts: Vec<(f64, f64)> = rs.iter().map(|r| (r.n as f64, r.count_mean)).collect();
        let info: Vec<(f64, f64)> = rs.iter().map(|r| (r.n as f64, r.info_per_n_mean * r.n as f64)).collect();
        let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
        summary.row([
            label.clone(),
            class_name(class.tag).to_string(),
            class.support_bounded.to_string(),
            class.support_discrete.to_string(),
            if class.support_discrete { "O(1)" } else { "O(n)" }.to_string(),
            opt(log_log_slope(&counts)),
            opt(log_log_slope(&info)),
        ])?;
        panel.push(Series::new(label, PALETTE[i % PALETTE.len()], Mark::Line, counts));
    }
    Ok(vec![detail.finish()?, summary.finish()?, Artifact::svg("table1.svg", &[panel])])
}

fn regret(c: &RegretConfig, exec: Execution) -> Result<Vec<Artifact>, RunError> {
    let base = c.tvbo(c.seed);
    let seeds = c.seeds();
    let traces = run_replications(&base, &seeds, exec).map_err(RunError::compute)?;
    let reports = traces
        .iter()
        .zip(&seeds)
        .map(|(trace, &seed)| {
            let config = c.tvbo(seed);
            bound_report(&config, trace, exec).map(|r| (r, upper_bound_series(&config, trace))).map_err(RunError::compute)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    for (trace, seed) in traces.iter().zip(&seeds) {
        let mut bytes = Vec::new();
        trace.write_csv(&mut bytes).map_err(RunError::compute)?;
        out.push(Artifact { name: format!("regret_seed{seed}.csv"), bytes });
    }

    let h = c.horizon;
    let lower_series: Vec<Vec<f64>> = reports
        .iter()
        .map(|(r, _)| {
            let mut acc = 0.0;
            r.lower.steps.iter().map(|s| {
                acc += s.term;
                acc
            }).collect()
        })
        .collect();
    let mut t = Table::new(
        "regret_summary.csv",
        &["n", "R_mean", "R_stderr", "R_over_n_mean", "R_over_n_stderr", "upper_bound_mean", "lower_bound_mean"],
    )?;
    let mut mean_r = Vec::with_capacity(h);
    let (mut ub_pts, mut lb_pts, mut band) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..h {
        let n = (i + 1) as f64;
        let r: Vec<f64> = traces.iter().map(|tr| tr.steps[i].cumulative).collect();
        let per_n: Vec<f64> = r.iter().map(|v| v / n).collect();
        let (rm, rs) = mean_stderr(&r);
        let (pm, ps) = mean_stderr(&per_n);
        let ub = reports.iter().map(|(_, u)| u[i]).sum::<f64>() / reports.len() as f64;
        let lb = lower_series.iter().map(|l| l[i]).sum::<f64>() / lower_series.len() as f64;
        t.row([(i + 1).to_string(), f(rm), f(rs), f(pm), f(ps), f(ub), f(lb)])?;
        mean_r.push((n, rm));
        band.push((n, rm - rs, rm + rs));
        ub_pts.push((n, ub));
        lb_pts.push((n, lb));
    }
    out.push(t.finish()?);

    let json: Vec<serde_json::Value> = reports
        .iter()
        .zip(&seeds)
        .map(|((r, _), seed)| serde_json::json!({ "seed": seed, "report": r }))
        .collect();
    let mut bytes = serde_json::to_vec_pretty(&json).map_err(RunError::compute)?;
    bytes.push(b'\n');
    out.push(Artifact { name: "bounds.json".into(), bytes });

    let mut p = Panel::new(format!("{} temporal kernel", c.temporal.family_name()), "n", "cumulative regret").log_y();
    p.push(Series::new("mean R_n", PALETTE[0], Mark::Line, mean_r).with_band(band));
    p.push(Series::new("upper bound", PALETTE[3], Mark::Line, ub_pts));
    p.push(Series::new("lower bound", PALETTE[2], Mark::Line, lb_pts));
    out.push(Artifact::svg("regret.svg", &[p]));
    Ok(out)
}

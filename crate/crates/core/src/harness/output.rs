use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

use super::experiment::{ExperimentRecord, RunRecord, Sweep};

pub const ROUNDS_HEADER: &str = "round,client,query_index,reward,inst_regret,cum_regret_total,comm_scalars_total";
pub const SUMMARY_HEADER: &str = "policy,T,K,seed,final_regret_mean,final_regret_stderr,comm_total";
pub const SWEEP_HEADER: &str = "q0,mean_inducing,scepe_regret,cepe_regret,regret_ratio,scepe_cost,cepe_cost,cost_ratio";

/// Per-round rows of one run. The two totals are taken at the end of the
/// row's round and summed over all clients.
pub fn rounds_csv(run: &RunRecord) -> String {
    let mut s = String::with_capacity(run.rows.len() * 48);
    s.push_str(ROUNDS_HEADER);
    s.push('\n');
    for row in &run.rows {
        let t = row.round as usize - 1;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            row.round,
            row.client,
            row.query_index,
            row.reward,
            row.inst_regret,
            run.cum_regret[t],
            run.comm[t]
        );
    }
    s
}

/// One line per experiment; `comm_total` is the mean over Monte Carlo runs.
pub fn summary_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in records {
        let c = &r.config;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.policy,
            c.horizon,
            c.clients,
            c.seed,
            r.final_regret_mean(),
            r.final_regret_stderr(),
            r.comm_mean()
        );
    }
    s
}

/// Mean cumulative regret per round, one column per experiment.
pub fn comparison_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from("round");
    for r in records {
        let _ = write!(s, ",{}", r.policy());
    }
    s.push('\n');
    let horizon = records.iter().map(|r| r.mean_curve.len()).max().unwrap_or(0);
    for t in 0..horizon {
        let _ = write!(s, "{}", t + 1);
        for r in records {
            let _ = write!(s, ",{}", r.mean_curve[t]);
        }
        s.push('\n');
    }
    s
}

pub fn sweep_csv(sweep: &Sweep) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for p in &sweep.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.q0, p.mean_inducing, p.scepe_regret, sweep.cepe_regret, p.regret_ratio, p.scepe_cost, sweep.cepe_cost, p.cost_ratio
        );
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
        };
        let (mut x0, mut x1) = span(&mut xs.clone());
        let (mut y0, mut y1) = span(&mut ys.clone());
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn open_svg(s: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(title));
    let (xa, xb, ya, yb) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{xa:.1} {ya:.1} L{xa:.1} {yb:.1} L{xb:.1} {yb:.1}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let (px, py) = (f.px(fx), f.py(fy));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{yb:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, yb + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, yb + 18.0, tick(fx));
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{xa:.1}" y2="{py:.1}" stroke="black"/>"#, xa - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, xa - 6.0, py + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (xa + xb) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (ya + yb) / 2.0,
        (ya + yb) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(s: &mut String, labels: &[&str]) {
    for (k, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#,
            x + 20.0,
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
}

/// Line plot of several curves sampled at rounds `1..=len`.
pub fn line_plot_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &[f64])]) -> String {
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let ys = series.iter().flat_map(|(_, v)| v.iter().copied());
    let f = Frame::new([1.0, n.max(1) as f64].into_iter(), ys.chain([0.0]));
    let mut s = String::new();
    open_svg(&mut s, title, xlabel, ylabel, &f);
    for (k, (_, values)) in series.iter().enumerate() {
        // At most ~400 vertices per curve.
        let step = (values.len() / 400).max(1);
        let mut d = String::new();
        for (t, v) in values.iter().enumerate() {
            if t % step != 0 && t + 1 != values.len() {
                continue;
            }
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2} {:.2} ", f.px(t as f64 + 1.0), f.py(*v));
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            PALETTE[k % PALETTE.len()]
        );
    }
    let labels: Vec<&str> = series.iter().map(|(l, _)| *l).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Scatter plot of `(x, y)` points with a dashed reference line at `y = 1`.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let f = Frame::new(
        finite.iter().map(|p| p.0).chain([1.0]),
        finite.iter().map(|p| p.1).chain([0.0, 1.0]),
    );
    let mut s = String::new();
    open_svg(&mut s, title, xlabel, ylabel, &f);
    let y1 = f.py(1.0);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.1}" y1="{y1:.1}" x2="{:.1}" y2="{y1:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        W - RIGHT
    );
    for (x, y) in &finite {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, f.px(*x), f.py(*y), PALETTE[0]);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

//! Writes a [`Report`] to disk as JSON, CSV tables or SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::pipeline::{Fragment, PipelineError, Report, SegmentReport, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(PipelineError::Config(format!("unknown format {other:?} (expected json|csv|svg)"))),
        }
    }
}

/// Plot kinds written per segment, in file order.
pub const SVG_PLOTS: [&str; 6] = ["timeseries", "histogram", "correlogram", "drm", "psd", "track"];

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, PipelineError> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents).map_err(|e| PipelineError::io(&path, e))?;
    Ok(path)
}

/// Writes `report` in one format and returns the files created, in order.
pub fn emit_report(report: &Report, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut written = Vec::new();
    match format {
        Format::Json => written.push(write_file(out_dir, "report.json", &report.to_json())?),
        Format::Csv => {
            for seg in &report.segments {
                for (name, text) in csv_tables(seg)? {
                    written.push(write_file(out_dir, &format!("seg{}_{name}.csv", seg.index), &text)?);
                }
            }
        }
        Format::Svg => {
            for seg in &report.segments {
                for (name, svg) in SVG_PLOTS.iter().zip(svg_plots(seg)) {
                    written.push(write_file(out_dir, &format!("seg{}_{name}.svg", seg.index), &svg)?);
                }
            }
        }
    }
    Ok(written)
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::Data(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Data(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_tables(seg: &SegmentReport) -> Result<Vec<(&'static str, String)>, PipelineError> {
    let mut out = Vec::new();
    let s = &seg.series;
    let series_rows = s
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| vec![(s.start_t + k as f64 / s.rate_hz).to_string(), v.to_string()]);
    out.push(("series", table(&["epoch_s", "ppm"], series_rows)?));

    if let Some(d) = seg.decimated.data() {
        let rows = d
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| vec![(d.start_t + k as f64 / d.rate_hz).to_string(), v.to_string()]);
        out.push(("decimated", table(&["epoch_s", "ppm"], rows)?));
    }
    if let Some(d) = seg.distribution.data() {
        let h = &d.histogram;
        let rows = h
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()]);
        out.push(("histogram", table(&["lo", "hi", "count"], rows)?));
    }
    if let Some(c) = seg.correlation.data() {
        let rows = c
            .acf
            .iter()
            .zip(&c.pacf)
            .enumerate()
            .map(|(k, (a, p))| vec![k.to_string(), a.to_string(), p.to_string()]);
        out.push(("correlogram", table(&["lag", "acf", "pacf"], rows)?));
    }
    if let Some(a) = seg.ar.data() {
        let rows = std::iter::once(vec!["a0".to_string(), a.a0.to_string()])
            .chain(a.coeffs.iter().enumerate().map(|(i, c)| vec![format!("a{}", i + 1), c.to_string()]))
            .chain(std::iter::once(vec!["noise_var".to_string(), a.noise_var.to_string()]));
        out.push(("ar", table(&["param", "value"], rows)?));
    }
    if let Some(d) = seg.drm.data() {
        let rows = d.bins.iter().map(|b| {
            vec![
                b.center.to_string(),
                b.mean_r.to_string(),
                b.stderr.to_string(),
                b.count.to_string(),
            ]
        });
        out.push(("drm", table(&["center", "mean_r", "stderr", "count"], rows)?));
    }
    if let Some(sp) = seg.spectral.data() {
        let rows = sp
            .psd
            .freqs
            .iter()
            .zip(&sp.psd.power)
            .map(|(f, p)| vec![f.to_string(), p.to_string()]);
        out.push(("psd", table(&["freq_hz", "power"], rows)?));
    }
    if let Some(track) = seg.track.data() {
        let rows = track.iter().map(|p| match *p {
            TrackPoint::Peak { t, freq, period, prominence } => {
                vec![t.to_string(), freq.to_string(), period.to_string(), prominence.to_string()]
            }
            TrackPoint::Empty { t, .. } => vec![t.to_string(), String::new(), String::new(), String::new()],
        });
        out.push(("track", table(&["epoch_s", "freq_hz", "period_s", "prominence"], rows)?));
    }
    Ok(out)
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Linear map from data ranges to the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = padded_range(xs);
        let (y0, y1) = padded_range(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn padded_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.02 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
             <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            W / 2.0,
            escape(title),
            (LEFT + W - RIGHT) / 2.0,
            H - 12.0,
            escape(x_label),
            (TOP + H - BOTTOM) / 2.0,
            (TOP + H - BOTTOM) / 2.0,
            escape(y_label),
        );
        Self { body }
    }

    fn axes(&mut self, f: &Frame, x_ticks: &dyn Fn(f64) -> String, y_ticks: &dyn Fn(f64) -> String) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for i in 0..=4 {
            let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
            let _ = writeln!(
                self.body,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                f.px(x),
                H - BOTTOM + 16.0,
                x_ticks(x)
            );
            let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
            let _ = writeln!(
                self.body,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                LEFT - 6.0,
                f.py(y) + 4.0,
                y_ticks(y)
            );
        }
    }

    fn polyline(&mut self, pts: impl Iterator<Item = (f64, f64)>, color: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>",
            p.trim_end()
        );
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: &str, dash: bool) {
        let dash = if dash { " stroke-dasharray=\"5,4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"{dash}/>",
            a.0, a.1, b.0, b.1
        );
    }

    fn circle(&mut self, c: (f64, f64), r: f64, color: &str) {
        let _ = writeln!(self.body, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{color}\"/>", c.0, c.1);
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\" stroke=\"white\" stroke-width=\"0.5\"/>"
        );
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"gray\">{}</text>",
            W / 2.0,
            H / 2.0,
            escape(text)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn log_tick(v: f64) -> String {
    format!("1e{v:.1}")
}

fn skipped_plot(title: &str, reason: &str) -> String {
    let mut svg = Svg::new(title, "", "");
    svg.note(&format!("skipped: {reason}"));
    svg.finish()
}

fn plot_fragment<T>(title: &str, frag: &Fragment<T>, draw: impl FnOnce(&T) -> String) -> String {
    match frag {
        Fragment::Data(d) => draw(d),
        Fragment::Skipped { skipped } => skipped_plot(title, skipped),
    }
}

fn svg_plots(seg: &SegmentReport) -> Vec<String> {
    let i = seg.index;
    vec![
        timeseries_plot(seg),
        plot_fragment(&format!("Segment {i}: histogram"), &seg.distribution, |d| {
            let h = &d.histogram;
            let t = format!("Segment {i}: histogram (lognormal mu={:.3}, sigma={:.3})", d.fit.mu, d.fit.sigma);
            let mut svg = Svg::new(&t, "concentration", "count");
            let f = Frame {
                x0: h.edges[0],
                x1: *h.edges.last().unwrap(),
                y0: 0.0,
                y1: h.counts.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.05,
            };
            svg.axes(&f, &tick, &tick);
            for (k, &c) in h.counts.iter().enumerate() {
                let (x0, x1) = (f.px(h.edges[k]), f.px(h.edges[k + 1]));
                let y = f.py(c as f64);
                svg.rect(x0, y, x1 - x0, f.py(0.0) - y, "steelblue");
            }
            svg.finish()
        }),
        plot_fragment(&format!("Segment {i}: correlogram"), &seg.correlation, |c| {
            let mut svg = Svg::new(&format!("Segment {i}: ACF (blue) and PACF (red)"), "lag", "correlation");
            let f = Frame {
                x0: -0.5,
                x1: c.acf.len() as f64 - 0.5,
                y0: -1.05,
                y1: 1.05,
            };
            svg.axes(&f, &tick, &tick);
            svg.line((f.px(f.x0), f.py(0.0)), (f.px(f.x1), f.py(0.0)), "black", false);
            for b in [c.sig_bound, -c.sig_bound] {
                svg.line((f.px(f.x0), f.py(b)), (f.px(f.x1), f.py(b)), "gray", true);
            }
            for (k, (&a, &p)) in c.acf.iter().zip(&c.pacf).enumerate() {
                let x = k as f64;
                svg.line((f.px(x - 0.12), f.py(0.0)), (f.px(x - 0.12), f.py(a)), "steelblue", false);
                svg.circle((f.px(x - 0.12), f.py(a)), 2.5, "steelblue");
                if k > 0 {
                    svg.line((f.px(x + 0.12), f.py(0.0)), (f.px(x + 0.12), f.py(p)), "firebrick", false);
                    svg.circle((f.px(x + 0.12), f.py(p)), 2.5, "firebrick");
                }
            }
            svg.finish()
        }),
        plot_fragment(&format!("Segment {i}: delayed residual map"), &seg.drm, |d| {
            let mut svg = Svg::new(&format!("Segment {i}: delayed residual map"), "x(t)", "mean r(t+1)");
            let f = Frame::new(
                d.bins.iter().map(|b| b.center),
                d.bins.iter().flat_map(|b| [b.mean_r - 2.0 * b.stderr, b.mean_r + 2.0 * b.stderr, 0.0]),
            );
            svg.axes(&f, &tick, &tick);
            svg.line((f.px(f.x0), f.py(0.0)), (f.px(f.x1), f.py(0.0)), "gray", true);
            for b in &d.bins {
                let x = f.px(b.center);
                svg.line((x, f.py(b.mean_r - 2.0 * b.stderr)), (x, f.py(b.mean_r + 2.0 * b.stderr)), "black", false);
                svg.circle((x, f.py(b.mean_r)), 4.0, "firebrick");
            }
            svg.finish()
        }),
        plot_fragment(&format!("Segment {i}: power spectrum"), &seg.spectral, |sp| {
            let mut title = format!("Segment {i}: power spectrum");
            if let Some(fit) = sp.one_over_f.data() {
                let _ = write!(title, " (log-log slope {:.2})", fit.slope);
            }
            let mut svg = Svg::new(&title, "log10 frequency (Hz)", "log10 power");
            let pts: Vec<(f64, f64)> = sp
                .psd
                .freqs
                .iter()
                .zip(&sp.psd.power)
                .filter(|(_, &p)| p > 0.0)
                .map(|(f, p)| (f.log10(), p.log10()))
                .collect();
            let f = Frame::new(pts.iter().map(|p| p.0), pts.iter().map(|p| p.1));
            svg.axes(&f, &log_tick, &log_tick);
            svg.polyline(pts.iter().map(|&(x, y)| (f.px(x), f.py(y))), "steelblue");
            if let Some(fit) = sp.one_over_f.data() {
                let y = |x: f64| fit.intercept + fit.slope * x;
                svg.line((f.px(f.x0), f.py(y(f.x0))), (f.px(f.x1), f.py(y(f.x1))), "firebrick", true);
            }
            svg.finish()
        }),
        plot_fragment(&format!("Segment {i}: dominant frequency"), &seg.track, |track| {
            let mut svg = Svg::new(&format!("Segment {i}: dominant frequency track"), "window start (s)", "period (s)");
            let peaks: Vec<(f64, f64)> = track
                .iter()
                .filter_map(|p| match *p {
                    TrackPoint::Peak { t, period, .. } => Some((t, period)),
                    TrackPoint::Empty { .. } => None,
                })
                .collect();
            let f = Frame::new(track.iter().map(|p| p.t()), peaks.iter().map(|p| p.1));
            svg.axes(&f, &tick, &tick);
            if peaks.is_empty() {
                svg.note("no window passed the prominence threshold");
            }
            for (t, period) in peaks {
                svg.circle((f.px(t), f.py(period)), 4.0, "steelblue");
            }
            svg.finish()
        }),
    ]
}

fn timeseries_plot(seg: &SegmentReport) -> String {
    let s = &seg.series;
    let mut svg = Svg::new(&format!("Segment {}: time series", seg.index), "time (s)", "concentration");
    let t = |k: usize| s.start_t + k as f64 / s.rate_hz;
    let f = Frame::new((0..s.values.len()).map(t), s.values.iter().copied());
    svg.axes(&f, &tick, &tick);
    // Long series are thinned to per-pixel min/max pairs to keep the file small.
    let cols = (W - LEFT - RIGHT) as usize;
    if s.values.len() <= 2 * cols {
        svg.polyline(s.values.iter().enumerate().map(|(k, &v)| (f.px(t(k)), f.py(v))), "steelblue");
    } else {
        let per = s.values.len().div_ceil(cols);
        let mut pts = Vec::with_capacity(2 * cols);
        for (c, chunk) in s.values.chunks(per).enumerate() {
            let (lo, hi) = chunk
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let x = f.px(t(c * per));
            pts.push((x, f.py(lo)));
            pts.push((x, f.py(hi)));
        }
        svg.polyline(pts.into_iter(), "steelblue");
    }
    svg.finish()
}

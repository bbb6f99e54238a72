//! Deterministic SVG 1.1 charts. Every number is printed with fixed
//! precision and nothing depends on time or randomness, so identical inputs
//! give identical bytes.

use std::fmt::Write as _;

use attrition_core::decomp::Components;
use attrition_core::{CountSeries, ExclusionWindow, Forecast};
use chrono::{Datelike, NaiveDate};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FigureError {
    #[error("nothing to draw: {0}")]
    Empty(&'static str),
    #[error("figure data is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    HistoryPlusForecast,
    Components,
    ComparisonBars,
    BacktestFolds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub title: String,
    pub width: u32,
    pub height: u32,
}

impl FigureSpec {
    pub fn new(kind: FigureKind, title: impl Into<String>) -> Self {
        FigureSpec {
            kind,
            title: title.into(),
            width: 960,
            height: 480,
        }
    }
}

/// What a figure draws; the variant must match `FigureSpec::kind`.
#[derive(Debug, Clone, Copy)]
pub enum FigureData<'a> {
    History {
        series: &'a CountSeries,
        forecast: Option<&'a Forecast>,
        exclusions: &'a [ExclusionWindow],
    },
    Components(&'a Components),
    /// One bar per (label, value).
    Bars {
        metric: &'a str,
        bars: &'a [(String, f64)],
    },
    /// One line per model through its per-fold metric values.
    Folds {
        metric: &'a str,
        lines: &'a [(String, Vec<(NaiveDate, f64)>)],
    },
}

const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#17becf"];
const FORECAST_COLOR: &str = "#ff7f0e";
const MARGIN: (f64, f64, f64, f64) = (48.0, 24.0, 56.0, 72.0); // top, right, bottom, left

pub fn emit_svg(spec: &FigureSpec, data: &FigureData<'_>) -> Result<String, FigureError> {
    if spec.width < 200 || spec.height < 150 {
        return Err(FigureError::Inconsistent(format!(
            "{}x{} px is too small",
            spec.width, spec.height
        )));
    }
    let mut svg = Svg::open(spec);
    match (spec.kind, data) {
        (FigureKind::HistoryPlusForecast, FigureData::History { series, forecast, exclusions }) => {
            history(&mut svg, spec, series, *forecast, exclusions)?
        }
        (FigureKind::Components, FigureData::Components(c)) => components(&mut svg, spec, c)?,
        (FigureKind::ComparisonBars, FigureData::Bars { metric, bars }) => {
            comparison(&mut svg, spec, metric, bars)?
        }
        (FigureKind::BacktestFolds, FigureData::Folds { metric, lines }) => {
            folds(&mut svg, spec, metric, lines)?
        }
        (kind, _) => {
            return Err(FigureError::Inconsistent(format!(
                "{kind:?} figure given the wrong kind of data"
            )))
        }
    }
    Ok(svg.close())
}

struct Svg {
    out: String,
}

impl Svg {
    fn open(spec: &FigureSpec) -> Self {
        let mut out = String::new();
        let (w, h) = (spec.width, spec.height);
        let _ = write!(
            out,
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n\
             <text class=\"title\" x=\"{:.2}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            f64::from(w) / 2.0,
            escape(&spec.title)
        );
        Svg { out }
    }

    fn line(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn close(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => s.push_str("&amp;"),
            '<' => s.push_str("&lt;"),
            '>' => s.push_str("&gt;"),
            '"' => s.push_str("&quot;"),
            '\'' => s.push_str("&apos;"),
            c => s.push(c),
        }
    }
    s
}

/// Linear map from data space onto a pixel rectangle.
#[derive(Debug, Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(left: f64, top: f64, width: f64, height: f64, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Self {
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
        let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0 - 1.0, y0 + 1.0) };
        Frame { left, top, width, height, x0, x1, y0, y1 }
    }

    fn plot_area(spec: &FigureSpec, xs: (f64, f64), ys: (f64, f64)) -> Self {
        let (top, right, bottom, left) = MARGIN;
        Frame::new(
            left,
            top,
            f64::from(spec.width) - left - right,
            f64::from(spec.height) - top - bottom,
            xs,
            ys,
        )
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y0) / (self.y1 - self.y0) * self.height
    }

    fn bottom(&self) -> f64 {
        self.top + self.height
    }

    fn right(&self) -> f64 {
        self.left + self.width
    }

    fn points(&self, xy: &[(f64, f64)]) -> String {
        xy.iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn day(d: NaiveDate) -> f64 {
    f64::from(d.num_days_from_ce())
}

/// Ticks at 1, 2 or 5 times a power of ten covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1.0 || v == 0.0 {
        let r = (v * 100.0).round() / 100.0;
        if r.fract() == 0.0 {
            format!("{r:.0}")
        } else {
            format!("{r:.2}")
        }
    } else {
        format!("{v:.3}")
    }
}

/// Month-start ticks (every 1, 2, 3, 6, 12 or 24 months) for long spans,
/// day ticks for short ones.
fn date_ticks(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let days = (to - from).num_days();
    if days < 62 {
        let step = [1, 2, 7, 14].into_iter().find(|s| days / s <= 8).unwrap_or(14);
        return (0..=days / step)
            .map(|k| from + chrono::Duration::days(k * step))
            .collect();
    }
    let months = i64::from(to.year() - from.year()) * 12 + i64::from(to.month()) - i64::from(from.month());
    let step = [1, 2, 3, 6, 12, 24]
        .into_iter()
        .find(|s| months / s <= 8)
        .unwrap_or(24) as u32;
    let mut ticks = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(from.year(), from.month(), 1).expect("month start");
    if d < from {
        d = d.checked_add_months(chrono::Months::new(1)).expect("date range");
    }
    // align to multiples of the step counted from January
    while (d.month0() % step) != 0 {
        d = d.checked_add_months(chrono::Months::new(1)).expect("date range");
    }
    while d <= to {
        ticks.push(d);
        d = d.checked_add_months(chrono::Months::new(step)).expect("date range");
    }
    ticks
}

fn axes(svg: &mut Svg, f: &Frame, y_label: &str) {
    svg.line(&format!(
        "<g class=\"axes\" stroke=\"#333333\" stroke-width=\"1\"><line x1=\"{l:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\"/><line x1=\"{l:.2}\" y1=\"{t:.2}\" x2=\"{l:.2}\" y2=\"{b:.2}\"/></g>",
        l = f.left,
        r = f.right(),
        t = f.top,
        b = f.bottom()
    ));
    for v in nice_ticks(f.y0, f.y1, 5) {
        let y = f.py(v);
        svg.line(&format!(
            "<line class=\"grid\" x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/><text class=\"ytick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            f.left,
            f.right(),
            f.left - 6.0,
            y + 4.0,
            tick_label(v)
        ));
    }
    svg.line(&format!(
        "<text class=\"ylabel\" x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        f.top + f.height / 2.0,
        f.top + f.height / 2.0,
        escape(y_label)
    ));
}

fn date_axis(svg: &mut Svg, f: &Frame, from: NaiveDate, to: NaiveDate) {
    let short = (to - from).num_days() < 62;
    for d in date_ticks(from, to) {
        let x = f.px(day(d));
        let label = if short { d.format("%Y-%m-%d") } else { d.format("%Y-%m") };
        svg.line(&format!(
            "<line class=\"xtick\" x1=\"{x:.2}\" y1=\"{b:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333333\"/><text class=\"xtick\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>",
            f.bottom() + 5.0,
            f.bottom() + 20.0,
            b = f.bottom()
        ));
    }
}

fn legend(svg: &mut Svg, spec: &FigureSpec, entries: &[(&str, &str, bool)]) {
    let y = f64::from(spec.height) - 14.0;
    let mut x = MARGIN.3;
    for (label, color, dashed) in entries {
        let dash = if *dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        svg.line(&format!(
            "<g class=\"legend\"><line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/><text x=\"{:.2}\" y=\"{y:.2}\">{}</text></g>",
            y - 4.0,
            x + 24.0,
            y - 4.0,
            x + 30.0,
            escape(label)
        ));
        x += 40.0 + 7.0 * label.chars().count() as f64;
    }
}

fn finite(values: impl IntoIterator<Item = f64>) -> Result<Vec<f64>, FigureError> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FigureError::Inconsistent("non-finite value".into()));
    }
    Ok(v)
}

fn span(values: &[f64], include_zero: bool) -> (f64, f64) {
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    let pad = (hi - lo) * 0.05;
    (if include_zero && lo == 0.0 { 0.0 } else { lo - pad }, hi + pad)
}

fn history(
    svg: &mut Svg,
    spec: &FigureSpec,
    series: &CountSeries,
    forecast: Option<&Forecast>,
    exclusions: &[ExclusionWindow],
) -> Result<(), FigureError> {
    if series.observed_count() == 0 {
        return Err(FigureError::Empty("the series has no observed periods"));
    }
    if let Some(fc) = forecast {
        if fc.is_empty() {
            return Err(FigureError::Empty("the forecast has no periods"));
        }
        if fc.dates.len() != fc.point.len() || fc.lower.len() != fc.point.len() || fc.upper.len() != fc.point.len() {
            return Err(FigureError::Inconsistent("forecast columns differ in length".into()));
        }
        if fc.granularity != series.granularity() {
            return Err(FigureError::Inconsistent(format!(
                "{} forecast over a {} series",
                fc.granularity,
                series.granularity()
            )));
        }
    }
    let observed: Vec<(f64, f64)> = series
        .observed_points()
        .into_iter()
        .map(|(i, v)| (day(series.date(i)), v))
        .collect();
    let mut ys = finite(observed.iter().map(|p| p.1))?;
    let from = series.start();
    let mut to = series.date(series.len() - 1);
    if let Some(fc) = forecast {
        ys.extend(finite(fc.upper.iter().chain(&fc.lower).chain(&fc.point).copied())?);
        to = to.max(*fc.dates.last().expect("non-empty"));
    }
    let f = Frame::plot_area(spec, (day(from), day(to)), span(&ys, true));
    for w in exclusions {
        let a = f.px(day(w.start).clamp(f.x0, f.x1));
        let b = f.px(day(w.end).clamp(f.x0, f.x1));
        svg.line(&format!(
            "<rect class=\"exclusion\" x=\"{a:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#999999\" fill-opacity=\"0.25\"><title>excluded {} to {}</title></rect>",
            f.top,
            b - a,
            f.height,
            w.start,
            w.end
        ));
    }
    axes(svg, &f, "losses per period");
    date_axis(svg, &f, from, to);
    // one polyline per run of consecutive observed periods
    let mut run: Vec<(f64, f64)> = Vec::new();
    for i in 0..=series.len() {
        let value = if i < series.len() { series.get(i) } else { None };
        match value {
            Some(v) => run.push((day(series.date(i)), v)),
            None if !run.is_empty() => {
                svg.line(&format!(
                    "<polyline class=\"history\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    PALETTE[0],
                    f.points(&run)
                ));
                run.clear();
            }
            None => {}
        }
    }
    let mut entries = vec![("history", PALETTE[0], false)];
    if let Some(fc) = forecast {
        let upper: Vec<(f64, f64)> = fc.dates.iter().zip(&fc.upper).map(|(d, v)| (day(*d), *v)).collect();
        let lower: Vec<(f64, f64)> = fc.dates.iter().zip(&fc.lower).rev().map(|(d, v)| (day(*d), *v)).collect();
        let band: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
        svg.line(&format!(
            "<polygon class=\"interval\" fill=\"{FORECAST_COLOR}\" fill-opacity=\"0.2\" stroke=\"none\" points=\"{}\"/>",
            f.points(&band)
        ));
        let point: Vec<(f64, f64)> = fc.dates.iter().zip(&fc.point).map(|(d, v)| (day(*d), *v)).collect();
        svg.line(&format!(
            "<polyline class=\"forecast\" fill=\"none\" stroke=\"{FORECAST_COLOR}\" stroke-width=\"2\" stroke-dasharray=\"6 4\" points=\"{}\"/>",
            f.points(&point)
        ));
        entries.push(("forecast", FORECAST_COLOR, true));
    }
    legend(svg, spec, &entries);
    Ok(())
}

fn components(svg: &mut Svg, spec: &FigureSpec, c: &Components) -> Result<(), FigureError> {
    let n = c.dates.len();
    if n == 0 {
        return Err(FigureError::Empty("no component dates"));
    }
    if c.trend.len() != n || c.weekly.len() != n || c.yearly.len() != n {
        return Err(FigureError::Inconsistent("component columns differ in length".into()));
    }
    let (top, right, bottom, left) = MARGIN;
    let panel_h = (f64::from(spec.height) - top - bottom) / 3.0;
    let (from, to) = (c.dates[0], c.dates[n - 1]);
    let panels = [("trend", &c.trend), ("weekly", &c.weekly), ("yearly", &c.yearly)];
    for (k, (name, values)) in panels.into_iter().enumerate() {
        let ys = finite(values.iter().copied())?;
        let f = Frame::new(
            left,
            top + k as f64 * panel_h + 8.0,
            f64::from(spec.width) - left - right,
            panel_h - 16.0,
            (day(from), day(to)),
            span(&ys, false),
        );
        axes(svg, &f, name);
        let pts: Vec<(f64, f64)> = c.dates.iter().zip(values.iter()).map(|(d, v)| (day(*d), *v)).collect();
        svg.line(&format!(
            "<polyline class=\"component {name}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            PALETTE[k],
            f.points(&pts)
        ));
        if k == 2 {
            date_axis(svg, &f, from, to);
        }
    }
    Ok(())
}

fn comparison(svg: &mut Svg, spec: &FigureSpec, metric: &str, bars: &[(String, f64)]) -> Result<(), FigureError> {
    if bars.is_empty() {
        return Err(FigureError::Empty("no bars"));
    }
    let ys = finite(bars.iter().map(|b| b.1))?;
    let f = Frame::plot_area(spec, (0.0, bars.len() as f64), span(&ys, true));
    axes(svg, &f, metric);
    let slot = f.width / bars.len() as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = f.left + slot * (i as f64 + 0.15);
        let (y0, y1) = (f.py(0.0), f.py(*v));
        svg.line(&format!(
            "<rect class=\"bar\" x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/><text class=\"value\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text><text class=\"xtick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            y0.min(y1),
            slot * 0.7,
            (y0 - y1).abs(),
            PALETTE[i % PALETTE.len()],
            x + slot * 0.35,
            y0.min(y1) - 4.0,
            tick_label(*v),
            x + slot * 0.35,
            f.bottom() + 20.0,
            escape(label)
        ));
    }
    Ok(())
}

fn folds(
    svg: &mut Svg,
    spec: &FigureSpec,
    metric: &str,
    lines: &[(String, Vec<(NaiveDate, f64)>)],
) -> Result<(), FigureError> {
    if lines.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(FigureError::Empty("no folds"));
    }
    let ys = finite(lines.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1)))?;
    let dates: Vec<NaiveDate> = lines.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    let from = *dates.iter().min().expect("non-empty");
    let to = *dates.iter().max().expect("non-empty");
    let f = Frame::plot_area(spec, (day(from), day(to)), span(&ys, true));
    axes(svg, &f, metric);
    date_axis(svg, &f, from, to);
    let mut entries = Vec::new();
    for (k, (name, pts)) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let xy: Vec<(f64, f64)> = pts.iter().map(|(d, v)| (day(*d), *v)).collect();
        svg.line(&format!(
            "<polyline class=\"fold-line\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            f.points(&xy)
        ));
        for (x, y) in &xy {
            svg.line(&format!(
                "<circle class=\"fold\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                f.px(*x),
                f.py(*y)
            ));
        }
        entries.push((name.as_str(), color, false));
    }
    legend(svg, spec, &entries);
    Ok(())
}

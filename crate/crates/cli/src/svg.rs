//! SVG renderings: world-value heatmaps, task values with greedy arrows,
//! inferred-dynamics maps, imagined rollouts and learning curves.
//!
//! Every document carries the configuration hash and seed list in its
//! `<metadata>` element.

use std::fmt::Write as _;

use anyhow::{ensure, Result};

use wvf_core::four_rooms::{GridAction, GridLayout};
use wvf_core::planning::InferredModel;
use wvf_core::{ActionId, Mdp64, StateId, Wvf64};

const WALL: &str = "#3b3b3b";
const FLOOR: &str = "#f4f4f4";
const UNDISCOVERED: &str = "#c8c8c8";
const CORRECT: &str = "#111111";
const INCORRECT: &str = "#d62728";
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Provenance embedded in every SVG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    fn metadata(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "<metadata><config-hash>{}</config-hash><seeds>{}</seeds></metadata>",
            escape(&self.config_hash),
            seeds.join(",")
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="{fill}"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(content)
        );
    }

    fn finish(self, title: &str, prov: &Provenance) -> String {
        let mut out = String::with_capacity(self.body.len() + 1024);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(out, "<title>{}</title>", escape(title));
        let _ = writeln!(out, "{}", prov.metadata());
        let _ = writeln!(out, "<defs>");
        for (id, color) in [("head-ok", CORRECT), ("head-bad", INCORRECT)] {
            let _ = writeln!(
                out,
                r#"<marker id="{id}" viewBox="0 0 10 10" refX="8" refY="5" markerWidth="5" markerHeight="5" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="{color}"/></marker>"#
            );
        }
        let _ = writeln!(out, "</defs>");
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

/// Viridis-like three-stop colour map on `t` in `[0, 1]`.
pub fn colour(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 3] = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (i, f) = if t >= 2.0 { (1, 1.0) } else { (t.floor() as usize, t.fract()) };
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn grey(t: f64) -> String {
    let v = (255.0 * (1.0 - 0.85 * t.clamp(0.0, 1.0))).round() as u8;
    format!("#{v:02x}{v:02x}{v:02x}")
}

/// Range of `V(s, g)` over every state and every buffered goal.
pub fn world_value_range(wvf: &Wvf64) -> Option<(f64, f64)> {
    let mut range: Option<(f64, f64)> = None;
    for g in wvf.goals().iter() {
        for s in 0..wvf.num_states() {
            let v = wvf.value(StateId(s), g);
            range = Some(match range {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
    }
    range
}

/// Position of `v` in `range`, 0.5 for a degenerate range.
pub fn intensity(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Which picture of a WVF to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WvfView {
    /// One heatmap of `V(., g)` per goal, placed at the goal's own cell.
    Grid,
    /// A single goal's heatmap at full size.
    Closeup(StateId),
    /// Task values `max_g V(s, g)` with greedy task-policy arrows.
    Task,
}

fn check_shape(wvf: &Wvf64, layout: &GridLayout) -> Result<()> {
    ensure!(
        wvf.num_states() == layout.num_free(),
        "WVF has {} states but the layout has {} free cells",
        wvf.num_states(),
        layout.num_free()
    );
    Ok(())
}

fn cell_centre(layout: &GridLayout, s: StateId, size: f64, ox: f64, oy: f64) -> (f64, f64) {
    let (r, c) = layout.cell(s);
    (ox + (c as f64 + 0.5) * size, oy + (r as f64 + 0.5) * size)
}

/// Heatmap of `V(., g)` drawn with its top-left corner at `(ox, oy)`.
fn goal_tile(canvas: &mut Canvas, wvf: &Wvf64, layout: &GridLayout, g: StateId, range: (f64, f64), size: f64, ox: f64, oy: f64) {
    for row in 0..layout.height() {
        for col in 0..layout.width() {
            let (x, y) = (ox + col as f64 * size, oy + row as f64 * size);
            match layout.state_at(row, col) {
                None => canvas.rect(x, y, size, size, WALL),
                Some(s) => canvas.rect(x, y, size, size, &colour(intensity(wvf.value(s, g), range))),
            }
        }
    }
}

fn arrow(canvas: &mut Canvas, from: (f64, f64), to: (f64, f64), colour: &str, class: &str) {
    let head = if colour == INCORRECT { "head-bad" } else { "head-ok" };
    let _ = writeln!(
        canvas.body,
        r#"<line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1.5" marker-end="url(#{head})"/>"#,
        from.0, from.1, to.0, to.1
    );
}

fn action_arrow(canvas: &mut Canvas, layout: &GridLayout, s: StateId, a: ActionId, size: f64) {
    let (cx, cy) = cell_centre(layout, s, size, 0.0, 0.0);
    match GridAction::from_id(a) {
        Some(GridAction::Done) | None => {
            let r = size * 0.15;
            canvas.rect(cx - r, cy - r, 2.0 * r, 2.0 * r, CORRECT);
        }
        Some(m) => {
            let (dr, dc) = m.delta();
            let len = size * 0.35;
            let from = (cx - dc as f64 * len * 0.6, cy - dr as f64 * len * 0.6);
            let to = (cx + dc as f64 * len, cy + dr as f64 * len);
            arrow(canvas, from, to, CORRECT, "policy");
        }
    }
}

/// Renders a WVF over `layout`. Heatmap colours share one normalisation
/// across all goals so tiles are comparable.
pub fn render_wvf_grid(wvf: &Wvf64, layout: &GridLayout, view: WvfView, prov: &Provenance) -> Result<String> {
    check_shape(wvf, layout)?;
    let (h, w) = (layout.height() as f64, layout.width() as f64);
    let range = world_value_range(wvf).unwrap_or((0.0, 0.0));
    match view {
        WvfView::Grid => {
            let cell = 4.0;
            let gap = 2.0;
            let tile = w * cell + gap;
            let mut canvas = Canvas::new(w * tile, h * tile + 20.0);
            for row in 0..layout.height() {
                for col in 0..layout.width() {
                    let (ox, oy) = (col as f64 * tile, row as f64 * tile);
                    match layout.state_at(row, col) {
                        None => canvas.rect(ox, oy, tile - gap, tile - gap, WALL),
                        Some(g) if wvf.goals().contains(g) => goal_tile(&mut canvas, wvf, layout, g, range, cell, ox, oy),
                        Some(_) => canvas.rect(ox, oy, tile - gap, tile - gap, UNDISCOVERED),
                    }
                }
            }
            canvas.text(4.0, h * tile + 15.0, 11.0, "start", &format!("V(s, g) per goal, range [{:.3}, {:.3}]", range.0, range.1));
            Ok(canvas.finish("world value function, one tile per goal", prov))
        }
        WvfView::Closeup(g) => {
            ensure!(g.0 < wvf.num_states(), "goal {g} outside the state space");
            let cell = 32.0;
            let mut canvas = Canvas::new(w * cell, h * cell + 20.0);
            goal_tile(&mut canvas, wvf, layout, g, range, cell, 0.0, 0.0);
            let (cx, cy) = cell_centre(layout, g, cell, 0.0, 0.0);
            let _ = writeln!(
                canvas.body,
                r#"<circle class="goal" cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="{INCORRECT}" stroke-width="2"/>"#,
                cell * 0.35
            );
            let (r, c) = layout.cell(g);
            canvas.text(4.0, h * cell + 15.0, 11.0, "start", &format!("V(s, g) for goal ({r}, {c})"));
            Ok(canvas.finish("world value function close-up", prov))
        }
        WvfView::Task => {
            let values: Vec<f64> = (0..wvf.num_states()).map(|s| wvf.task_value(StateId(s))).collect::<wvf_core::Result<_>>()?;
            let actions: Vec<ActionId> = (0..wvf.num_states())
                .map(|s| wvf.greedy_task_action(StateId(s)))
                .collect::<wvf_core::Result<_>>()?;
            Ok(render_values_with_arrows(layout, &values, &actions, "task values and greedy policy", prov))
        }
    }
}

/// Per-state values as a heatmap with one action glyph per cell.
pub fn render_values_with_arrows(
    layout: &GridLayout,
    values: &[f64],
    actions: &[ActionId],
    title: &str,
    prov: &Provenance,
) -> String {
    let cell = 32.0;
    let (h, w) = (layout.height() as f64, layout.width() as f64);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut canvas = Canvas::new(w * cell, h * cell + 20.0);
    for row in 0..layout.height() {
        for col in 0..layout.width() {
            let (x, y) = (col as f64 * cell, row as f64 * cell);
            match layout.state_at(row, col) {
                None => canvas.rect(x, y, cell, cell, WALL),
                Some(s) => canvas.rect(x, y, cell, cell, &colour(intensity(values[s.0], (lo, hi)))),
            }
        }
    }
    for (s, &a) in actions.iter().enumerate() {
        action_arrow(&mut canvas, layout, StateId(s), a, cell);
    }
    canvas.text(4.0, h * cell + 15.0, 11.0, "start", &format!("{title}, range [{lo:.3}, {hi:.3}]"));
    canvas.finish(title, prov)
}

/// Incorrect and total predictions over the movement actions at `probes`.
pub fn count_incorrect(model: &InferredModel<f64>, mdp: &Mdp64, probes: &[StateId]) -> (usize, usize) {
    let mut incorrect = 0;
    let mut total = 0;
    for &s in probes {
        for a in mdp.actions().filter(|&a| !mdp.is_terminal_transition(s, a)) {
            if let Some(p) = model.prediction(s, a) {
                total += 1;
                if p.successor != mdp.successor(s, a) {
                    incorrect += 1;
                }
            }
        }
    }
    (incorrect, total)
}

fn floor_plan(canvas: &mut Canvas, layout: &GridLayout, cell: f64, shade: impl Fn(StateId) -> String) {
    for row in 0..layout.height() {
        for col in 0..layout.width() {
            let (x, y) = (col as f64 * cell, row as f64 * cell);
            match layout.state_at(row, col) {
                None => canvas.rect(x, y, cell, cell, WALL),
                Some(s) => canvas.rect(x, y, cell, cell, &shade(s)),
            }
        }
    }
}

/// Predicted successors at the probe cells, one arrow per movement action.
/// Wrong predictions are red; a predicted self-transition is drawn as a
/// small ring on the side of the attempted move.
pub fn render_dynamics_map(model: &InferredModel<f64>, mdp: &Mdp64, layout: &GridLayout, probes: &[StateId], prov: &Provenance) -> String {
    let cell = 40.0;
    let (h, w) = (layout.height() as f64, layout.width() as f64);
    let mut canvas = Canvas::new(w * cell, h * cell + 20.0);
    floor_plan(&mut canvas, layout, cell, |_| FLOOR.to_string());
    for &s in probes {
        let (cx, cy) = cell_centre(layout, s, cell, 0.0, 0.0);
        for a in mdp.actions().filter(|&a| !mdp.is_terminal_transition(s, a)) {
            let Some(p) = model.prediction(s, a) else { continue };
            let correct = p.successor == mdp.successor(s, a);
            let stroke = if correct { CORRECT } else { INCORRECT };
            let class = if correct { "correct" } else { "incorrect" };
            if p.successor == s {
                let (dr, dc) = GridAction::from_id(a).map_or((0, 0), GridAction::delta);
                let (x, y) = (cx + dc as f64 * cell * 0.3, cy + dr as f64 * cell * 0.3);
                let _ = writeln!(
                    canvas.body,
                    r#"<circle class="self-loop {class}" cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
                    cell * 0.1
                );
            } else {
                let (tx, ty) = cell_centre(layout, p.successor, cell, 0.0, 0.0);
                let (dx, dy) = (tx - cx, ty - cy);
                let norm = (dx * dx + dy * dy).sqrt();
                let shorten = (cell * 0.2).min(norm * 0.4);
                let end = (tx - dx / norm * shorten, ty - dy / norm * shorten);
                arrow(&mut canvas, (cx, cy), end, stroke, &format!("arrow {class}"));
            }
        }
    }
    let (incorrect, total) = count_incorrect(model, mdp, probes);
    canvas.text(4.0, h * cell + 15.0, 12.0, "start", &format!("incorrect predictions: {incorrect} of {total}"));
    canvas.finish("inferred dynamics", prov)
}

/// An imagined trajectory over cells shaded by normalised predicted value.
pub fn render_rollout_trace(layout: &GridLayout, trace: &[StateId], values: &[f64], prov: &Provenance) -> String {
    let cell = 32.0;
    let (h, w) = (layout.height() as f64, layout.width() as f64);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut canvas = Canvas::new(w * cell, h * cell + 20.0);
    floor_plan(&mut canvas, layout, cell, |s| grey(intensity(values[s.0], (lo, hi))));
    if let Some(&first) = trace.first() {
        let points: Vec<String> = trace
            .iter()
            .map(|&s| {
                let (x, y) = cell_centre(layout, s, cell, 0.0, 0.0);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            canvas.body,
            r#"<polyline class="trace" points="{}" fill="none" stroke="{}" stroke-width="3"/>"#,
            points.join(" "),
            PALETTE[0]
        );
        let (x, y) = cell_centre(layout, first, cell, 0.0, 0.0);
        let _ = writeln!(canvas.body, r#"<circle class="start" cx="{x}" cy="{y}" r="6" fill="{}"/>"#, PALETTE[2]);
        let (x, y) = cell_centre(layout, *trace.last().expect("non-empty"), cell, 0.0, 0.0);
        let _ = writeln!(canvas.body, r#"<circle class="end" cx="{x}" cy="{y}" r="6" fill="{}"/>"#, PALETTE[3]);
    }
    canvas.text(4.0, h * cell + 15.0, 11.0, "start", &format!("imagined rollout, {} steps", trace.len().saturating_sub(1)));
    canvas.finish("imagined rollout", prov)
}

/// One learning curve: `(x, mean, std)` points.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64, f64)>,
}

/// Mean curves with a one-standard-deviation band.
pub fn render_learning_curves(series: &[Series<'_>], x_label: &str, prov: &Provenance) -> String {
    let (width, height) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 150.0, 20.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, sd) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - sd);
        y1 = y1.max(m + sd);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut canvas = Canvas::new(width, height);
    let _ = writeln!(
        canvas.body,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        canvas.text(sx(xv), top + ph + 16.0, 10.0, "middle", &format!("{xv:.0}"));
        canvas.text(left - 6.0, sy(yv) + 3.0, 10.0, "end", &format!("{yv:.1}"));
    }
    canvas.text(left + pw / 2.0, height - 10.0, 12.0, "middle", x_label);
    canvas.text(16.0, top + ph / 2.0, 12.0, "middle", "return");
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        if s.points.is_empty() {
            continue;
        }
        let upper: Vec<String> = s.points.iter().map(|&(x, m, sd)| format!("{:.1},{:.1}", sx(x), sy(m + sd))).collect();
        let lower: Vec<String> = s.points.iter().rev().map(|&(x, m, sd)| format!("{:.1},{:.1}", sx(x), sy(m - sd))).collect();
        let _ = writeln!(
            canvas.body,
            r#"<polygon class="band" points="{} {}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let mean: Vec<String> = s.points.iter().map(|&(x, m, _)| format!("{:.1},{:.1}", sx(x), sy(m))).collect();
        let _ = writeln!(
            canvas.body,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            mean.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        canvas.rect(left + pw + 12.0, ly - 9.0, 12.0, 12.0, colour);
        canvas.text(left + pw + 30.0, ly + 1.0, 12.0, "start", s.name);
    }
    canvas.finish("learning curves", prov)
}

//! SVG Gantt rendering of a computing-graph trace: one horizontal lane per
//! node, bars spanning execute-to-finalize intervals, tick marks for sends
//! and receives. Output bytes are a pure function of the trace.

use graphkit_sim::TraceDocument;

const WIDTH: f64 = 1000.0;
const LANE_HEIGHT: f64 = 28.0;
const BAR_HEIGHT: f64 = 14.0;
const MARGIN_LEFT: f64 = 120.0;
const MARGIN_TOP: f64 = 30.0;

struct Lane {
    node: String,
    bars: Vec<(f64, f64, String)>,
    sends: Vec<f64>,
    receives: Vec<f64>,
}

/// Source node of an edge, parsed from the `e{i}:{node}.{attr}` edge name.
fn edge_source(edge_name: &str) -> Option<&str> {
    let rest = edge_name.split_once(':')?.1;
    Some(rest.rsplit_once('.')?.0)
}

fn receive_target(note: &str) -> Option<&str> {
    let rest = note.strip_prefix("to ")?;
    Some(rest.rsplit_once('.')?.0)
}

pub fn render(doc: &TraceDocument) -> String {
    let mut lanes: Vec<Lane> = Vec::new();
    let mut lane_of = |name: &str, lanes: &mut Vec<Lane>| -> usize {
        if let Some(i) = lanes.iter().position(|l| l.node == name) {
            return i;
        }
        lanes.push(Lane {
            node: name.to_string(),
            bars: Vec::new(),
            sends: Vec::new(),
            receives: Vec::new(),
        });
        lanes.len() - 1
    };

    // pair execute/finalize per node; running tasks are tracked by lane
    let mut open: Vec<Option<(f64, String)>> = Vec::new();
    let mut t_max: f64 = 0.0;
    for e in &doc.events {
        t_max = t_max.max(e.t);
        match e.signal.name() {
            "execute_task" => {
                if e.before.as_deref() == Some("idle") {
                    let lane = lane_of(&e.entity.name, &mut lanes);
                    if open.len() <= lane {
                        open.resize(lane + 1, None);
                    }
                    open[lane] = Some((e.t, e.note.clone().unwrap_or_default()));
                }
            }
            "finalize_task" => {
                let lane = lane_of(&e.entity.name, &mut lanes);
                if open.len() <= lane {
                    open.resize(lane + 1, None);
                }
                if let Some((start, label)) = open[lane].take() {
                    lanes[lane].bars.push((start, e.t, label));
                }
            }
            "attribute_sent" => {
                if let Some(src) = edge_source(&e.entity.name) {
                    let src = src.to_string();
                    let lane = lane_of(&src, &mut lanes);
                    lanes[lane].sends.push(e.t);
                }
            }
            "attribute_received" => {
                if let Some(dst) = e.note.as_deref().and_then(receive_target) {
                    let dst = dst.to_string();
                    let lane = lane_of(&dst, &mut lanes);
                    lanes[lane].receives.push(e.t);
                }
            }
            _ => {}
        }
    }
    let span = if t_max > 0.0 { t_max } else { 1.0 };
    let scale = WIDTH / span;
    let x = |t: f64| MARGIN_LEFT + t * scale;

    let height = MARGIN_TOP + lanes.len().max(1) as f64 * LANE_HEIGHT + 40.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{height:.0}\" \
         font-family=\"monospace\" font-size=\"11\">\n",
        MARGIN_LEFT + WIDTH + 20.0
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for (i, lane) in lanes.iter().enumerate() {
        let y = MARGIN_TOP + i as f64 * LANE_HEIGHT;
        svg.push_str(&format!(
            "<text x=\"6\" y=\"{:.1}\">{}</text>\n",
            y + BAR_HEIGHT,
            lane.node
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            y + BAR_HEIGHT + 2.0,
            MARGIN_LEFT + WIDTH,
            y + BAR_HEIGHT + 2.0
        ));
        for (start, end, label) in &lane.bars {
            let w = ((end - start) * scale).max(1.0);
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.1}\" width=\"{w:.2}\" height=\"{BAR_HEIGHT:.0}\" \
                 fill=\"#4878a8\" opacity=\"0.85\"><title>{label} [{start}, {end}]</title></rect>\n",
                x(*start),
                y
            ));
        }
        for t in &lane.sends {
            svg.push_str(&format!(
                "<line x1=\"{0:.2}\" y1=\"{1:.1}\" x2=\"{0:.2}\" y2=\"{2:.1}\" stroke=\"#c04828\" stroke-width=\"1.5\"/>\n",
                x(*t),
                y - 2.0,
                y + 4.0
            ));
        }
        for t in &lane.receives {
            svg.push_str(&format!(
                "<line x1=\"{0:.2}\" y1=\"{1:.1}\" x2=\"{0:.2}\" y2=\"{2:.1}\" stroke=\"#287848\" stroke-width=\"1.5\"/>\n",
                x(*t),
                y + BAR_HEIGHT - 4.0,
                y + BAR_HEIGHT + 2.0
            ));
        }
    }

    // time axis with ten ticks
    let axis_y = MARGIN_TOP + lanes.len().max(1) as f64 * LANE_HEIGHT + 10.0;
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT:.1}\" y1=\"{axis_y:.1}\" x2=\"{:.1}\" y2=\"{axis_y:.1}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + WIDTH
    ));
    for k in 0..=10 {
        let t = span * k as f64 / 10.0;
        svg.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{axis_y:.1}\" x2=\"{0:.2}\" y2=\"{1:.1}\" stroke=\"black\"/>\n",
            x(t),
            axis_y + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{t:.3}</text>\n",
            x(t),
            axis_y + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

//! Newline-delimited JSON traces with a fixed field order and fixed number
//! formatting (9 significant digits), so equal runs give equal bytes.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::geometry::ControlInput;
use crate::planner::CycleReport;
use crate::prediction::AgentId;
use crate::sim::WorldState;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub scenario: String,
    pub seed: u64,
    pub ts: f64,
    pub commit_horizon: String,
    /// `None` for wall-clock budgets.
    pub node_budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceDisc {
    pub agent_id: AgentId,
    pub center: [f64; 2],
    pub radius: f64,
    pub timestamp: f64,
}

/// One executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    /// `[x, y, theta]` before the step.
    pub state: [f64; 3],
    pub control: ControlInput,
    pub agents: Vec<(AgentId, [f64; 2])>,
    /// Non-vacuous predicted discs of the cycle that produced this control.
    pub discs: Vec<TraceDisc>,
    pub cost: f64,
    /// Barrier value of the state after the step; `None` with nothing in range.
    pub min_h: Option<f64>,
    pub tree_size: usize,
    pub grows: usize,
    pub added: usize,
    pub fallback: bool,
    pub displacement: f64,
    /// First step executed from its planning cycle.
    pub cycle_start: bool,
}

impl TraceRecord {
    pub fn new(world: &WorldState, control: ControlInput, report: &CycleReport, cycle_start: bool, min_h: Option<f64>) -> Self {
        let discs = report
            .obstacles
            .agents
            .iter()
            .flat_map(|a| {
                a.slots.iter().filter_map(move |s| {
                    s.disc.map(|d| TraceDisc {
                        agent_id: a.agent_id,
                        center: [d.center.x, d.center.y],
                        radius: d.radius,
                        timestamp: s.timestamp,
                    })
                })
            })
            .collect();
        Self {
            time: world.sim_time,
            state: [world.robot.x, world.robot.y, world.robot.theta],
            control,
            agents: world.agents.iter().map(|(&id, p)| (id, [p.x, p.y])).collect(),
            discs,
            cost: report.selected_cost,
            min_h,
            tree_size: report.tree_size,
            grows: report.grows,
            added: report.added,
            fallback: report.fallback,
            displacement: report.displacement,
            cycle_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

/// Scientific notation with 9 significant digits; `null` when not finite.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        "null".to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "null".to_string(), fmt_num)
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn header_line(h: &TraceHeader) -> String {
    format!(
        "{{\"format\":\"cbfrrt-trace\",\"version\":1,\"scenario\":{},\"seed\":{},\"ts\":{},\"commit_horizon\":{},\"node_budget\":{}}}",
        json_string(&h.scenario),
        h.seed,
        fmt_num(h.ts),
        json_string(&h.commit_horizon),
        h.node_budget.map_or_else(|| "null".to_string(), |n| n.to_string()),
    )
}

pub fn record_line(r: &TraceRecord) -> String {
    let mut s = String::with_capacity(256 + 80 * r.discs.len());
    let _ = write!(
        s,
        "{{\"t\":{},\"x\":{},\"y\":{},\"theta\":{},\"v\":{},\"omega\":{},\"cost\":{},\"min_h\":{},\"tree_size\":{},\"grows\":{},\"added\":{},\"fallback\":{},\"displacement\":{},\"cycle_start\":{},\"agents\":[",
        fmt_num(r.time),
        fmt_num(r.state[0]),
        fmt_num(r.state[1]),
        fmt_num(r.state[2]),
        fmt_num(r.control.v),
        fmt_num(r.control.omega),
        fmt_num(r.cost),
        fmt_opt(r.min_h),
        r.tree_size,
        r.grows,
        r.added,
        r.fallback,
        fmt_num(r.displacement),
        r.cycle_start,
    );
    for (i, (id, p)) in r.agents.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{{\"id\":{},\"x\":{},\"y\":{}}}", id.0, fmt_num(p[0]), fmt_num(p[1]));
    }
    s.push_str("],\"discs\":[");
    for (i, d) in r.discs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(
            s,
            "{{\"id\":{},\"x\":{},\"y\":{},\"r\":{},\"t\":{}}}",
            d.agent_id.0,
            fmt_num(d.center[0]),
            fmt_num(d.center[1]),
            fmt_num(d.radius),
            fmt_num(d.timestamp)
        );
    }
    s.push_str("]}");
    s
}

/// Writes the header and one line per record; returns the bytes written.
pub fn emit_trace<W: Write>(trace: &Trace, sink: &mut W) -> io::Result<usize> {
    let mut n = 0;
    let mut line = header_line(&trace.header);
    line.push('\n');
    sink.write_all(line.as_bytes())?;
    n += line.len();
    for r in &trace.records {
        let mut line = record_line(r);
        line.push('\n');
        sink.write_all(line.as_bytes())?;
        n += line.len();
    }
    Ok(n)
}

/// `time,v,omega,min_h` columns for plotting controls and the safety measure.
pub fn emit_plot_csv<W: Write>(trace: &Trace, sink: &mut W) -> io::Result<usize> {
    let mut n = 0;
    let head = "time,v,omega,min_h\n";
    sink.write_all(head.as_bytes())?;
    n += head.len();
    for r in &trace.records {
        let min_h = r.min_h.filter(|h| h.is_finite()).map_or_else(String::new, fmt_num);
        let line = format!("{},{},{},{}\n", fmt_num(r.time), fmt_num(r.control.v), fmt_num(r.control.omega), min_h);
        sink.write_all(line.as_bytes())?;
        n += line.len();
    }
    Ok(n)
}

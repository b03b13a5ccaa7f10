use std::fmt::Write;

use serde::Serialize;

use crate::state::{EventKind, ThreadId};
use crate::universe::{ObjectId, Record};
use crate::vm::{Halt, RunResult, StepRecord};

/// Output format of [`render_final_state`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    /// The console layout: one `Class(id N): [...]` entry per object.
    #[default]
    Text,
    /// JSON with a fixed key order.
    Structured,
}

#[derive(Serialize)]
struct ObjectOut<'a> {
    id: ObjectId,
    class: &'a str,
    attrs: &'a Record,
}

#[derive(Serialize)]
struct WaitingOut {
    object: ObjectId,
    thread: ThreadId,
}

#[derive(Serialize)]
struct HaltOut {
    kind: &'static str,
    waiting: Vec<WaitingOut>,
}

#[derive(Serialize)]
struct StateOut<'a> {
    objects: Vec<ObjectOut<'a>>,
    time: u64,
    halt: HaltOut,
}

/// Renders the data store of the final state, objects in ascending id.
///
/// ```
/// use sysmodel::frontend::{parse_model, render_final_state, Format};
/// use sysmodel::vm::run_main;
///
/// let def = parse_model("class A { attr n: Int = 7; } setup { a: A passive; }").unwrap();
/// let result = run_main(&def.config(), &def.setup).unwrap();
/// assert_eq!(
///     render_final_state(&result, Format::Text),
///     "attributes:\nA(id 0): [(\"n\",VInt 7)]\ntime: 0\n"
/// );
/// ```
pub fn render_final_state(r: &RunResult, format: Format) -> String {
    match format {
        Format::Text => render_text(r),
        Format::Structured => render_json(r),
    }
}

fn waiting(h: &Halt) -> &[(ObjectId, ThreadId)] {
    match h {
        Halt::Blocked(w) => w,
        _ => &[],
    }
}

fn render_text(r: &RunResult) -> String {
    let mut out = String::from("attributes:\n");
    for (oid, entry) in r.final_state.ds.iter() {
        let prefix = format!("{}(id {oid}): ", entry.class);
        let indent = " ".repeat(prefix.len() + 2);
        out.push_str(&prefix);
        if entry.attrs.is_empty() {
            out.push_str("[]\n");
            continue;
        }
        for (i, (name, value)) in entry.attrs.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "[(\"{name}\",{value})");
            } else {
                let _ = write!(out, "\n{indent},(\"{name}\",{value})");
            }
        }
        out.push_str("]\n");
    }
    let _ = writeln!(out, "time: {}", r.time);
    if r.halt != Halt::AllDone {
        let _ = write!(out, "halt: {}", r.halt.as_str());
        let w = waiting(&r.halt);
        if !w.is_empty() {
            let list: Vec<String> = w
                .iter()
                .map(|(o, t)| format!("object {o} thread {t}"))
                .collect();
            let _ = write!(out, " (waiting: {})", list.join(", "));
        }
        out.push('\n');
    }
    out
}

fn render_json(r: &RunResult) -> String {
    let doc = StateOut {
        objects: r
            .final_state
            .ds
            .iter()
            .map(|(id, e)| ObjectOut {
                id,
                class: &e.class,
                attrs: &e.attrs,
            })
            .collect(),
        time: r.time,
        halt: HaltOut {
            kind: r.halt.as_str(),
            waiting: waiting(&r.halt)
                .iter()
                .map(|&(object, thread)| WaitingOut { object, thread })
                .collect(),
        },
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("state serializes");
    s.push('\n');
    s
}

fn kind_name(k: EventKind) -> &'static str {
    match k {
        EventKind::Call => "call",
        EventKind::Return => "return",
        EventKind::Signal => "signal",
    }
}

/// One trace line: `step object thread pc [event info] | action`.
pub fn render_step(s: &StepRecord) -> String {
    let mut line = format!("{:>5}  obj {} thr {} pc {}", s.time, s.oid, s.tid, s.pc);
    if let Some(k) = s.consumed {
        let _ = write!(line, "  <{}", kind_name(k));
        if s.materialized {
            line.push_str(" new");
        }
    }
    if let Some(k) = s.emitted {
        let _ = write!(line, "  >{}", kind_name(k));
    }
    if s.terminated {
        line.push_str("  end");
    }
    let _ = write!(line, "  | {}", s.action);
    line
}

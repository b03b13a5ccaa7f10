use std::collections::BTreeSet;
use std::fmt::Write;

use super::ModelDef;
use crate::actions::{fmt_literal, Action};
use crate::vm::OKind;

/// Renders a model back to `.smm` text. Jump targets are written as labels
/// `L<pc>`. Parsing the output yields an equal [`ModelDef`].
pub fn print_model(def: &ModelDef) -> String {
    let mut out = String::new();
    let sel = &def.selections;
    let _ = writeln!(
        out,
        "config {{ runnables: {}; scheduler: {}; dispatch: {}; medium: {}; }}",
        sel.runnables, sel.scheduler, sel.dispatch, sel.medium
    );

    for (name, class) in &def.model.classes {
        out.push('\n');
        let _ = write!(out, "class {name}");
        let supers = def.model.subclass.supers(name);
        if !supers.is_empty() {
            let _ = write!(out, " extends {}", supers.join(", "));
        }
        if class.attributes.is_empty() {
            out.push_str(" {}\n");
            continue;
        }
        out.push_str(" {\n");
        for a in &class.attributes {
            let _ = writeln!(
                out,
                "    attr {}: {} = {};",
                a.name,
                a.ty,
                fmt_literal(&a.init)
            );
        }
        out.push_str("}\n");
    }

    for (class, _, m) in def.model.methods.iter() {
        let params: Vec<String> = m.params.iter().map(|(n, t)| format!("{n}: {t}")).collect();
        let _ = writeln!(
            out,
            "\nop {class}.{}({}): {} {{",
            m.implements.name,
            params.join(", "),
            m.implements.ret
        );
        let targets: BTreeSet<usize> = m.body.iter().filter_map(Action::jump_target).collect();
        for (pc, action) in m.body.iter().enumerate() {
            if targets.contains(&pc) {
                let _ = writeln!(out, "L{pc}:");
            }
            let text = match action {
                Action::Jump { target } => format!("goto L{target}"),
                Action::BranchIfFalse { cond, target } => format!("ifnot {cond} goto L{target}"),
                other => other.to_string(),
            };
            let _ = writeln!(out, "    {text};");
        }
        out.push_str("}\n");
    }

    if !def.setup.is_empty() {
        out.push_str("\nsetup {\n");
        for e in &def.setup {
            let _ = write!(out, "    {}: {}", e.name, e.class);
            match &e.kind {
                OKind::Passive => out.push_str(" passive"),
                OKind::Active { op, prio } => {
                    let params: Vec<String> = op.params.iter().map(|t| t.to_string()).collect();
                    let _ = write!(
                        out,
                        " active {}({}): {} prio {prio}",
                        op.name,
                        params.join(", "),
                        op.ret
                    );
                }
            }
            if !e.links.is_empty() {
                let _ = write!(out, " links [{}]", e.links.join(", "));
            }
            out.push_str(";\n");
        }
        out.push_str("}\n");
    }
    out
}

use std::collections::{BTreeMap, HashMap};

use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, ModelDef, Span};
use crate::actions::{Action, BinOpKind, ReturnSrc};
use crate::universe::{Attribute, ClassDef, MethodDef, Model, OpSig, Site, TypeRef, Value};
use crate::variation::Selections;
use crate::vm::{validate_setup, OKind, SetupEntry};

pub(crate) const KEYWORDS: &[&str] = &[
    "class", "extends", "attr", "op", "local", "param", "new", "call", "signal", "prio", "return",
    "goto", "ifnot", "setup", "passive", "active", "links", "config", "true", "false", "void",
    "null", "Int", "Bool", "Void",
];

type PResult<T> = Result<T, Diagnostic>;

enum Target {
    Label(String, Span),
    Pc(usize),
}

/// An action whose jump target may still be a label.
enum Raw {
    Done(Action),
    Jump(Target),
    Branch(String, Target),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    sites: HashMap<Site, Span>,
    model: Model,
    setup: Option<Vec<SetupEntry>>,
    selections: Option<Selections>,
}

pub(crate) fn parse(src: &str) -> Result<ModelDef, Vec<Diagnostic>> {
    let toks = lex(src).map_err(|d| vec![d])?;
    let mut p = Parser {
        toks,
        pos: 0,
        sites: HashMap::new(),
        model: Model::new(),
        setup: None,
        selections: None,
    };
    p.file().map_err(|d| vec![d])?;
    let def = ModelDef {
        model: p.model,
        setup: p.setup.unwrap_or_default(),
        selections: p.selections.unwrap_or_default(),
    };

    let locate = |site: &Site| -> Span {
        p.sites
            .get(site)
            .copied()
            .or_else(|| match site {
                Site::Attr { class, .. } => p.sites.get(&Site::Class(class.clone())).copied(),
                Site::Action { class, op, .. } => p
                    .sites
                    .get(&Site::Method {
                        class: class.clone(),
                        op: op.clone(),
                    })
                    .copied(),
                _ => None,
            })
            .unwrap_or(Span { line: 1, col: 1 })
    };
    let mut diags: Vec<Diagnostic> = def
        .model
        .problems()
        .into_iter()
        .map(|e| Diagnostic::new(locate(&e.site), e.problem.to_string()))
        .collect();
    if diags.is_empty() {
        if let Err(e) = validate_setup(&def.model, &def.setup) {
            diags.push(Diagnostic::new(locate(&e.site), e.problem.to_string()));
        }
    }
    if diags.is_empty() {
        Ok(def)
    } else {
        diags.sort_by_key(|d| d.span);
        diags.dedup();
        Err(diags)
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, what: &str) -> PResult<T> {
        Err(Diagnostic::new(
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        ))
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn punct(&mut self, p: &str) -> PResult<Span> {
        if self.at_punct(p) {
            Ok(self.bump().span)
        } else {
            self.unexpected(&format!("`{p}`"))
        }
    }

    fn kw(&mut self, kw: &str) -> PResult<Span> {
        if self.at_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn name(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                let span = self.bump().span;
                Ok((w, span))
            }
            _ => self.unexpected("a name"),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn ty(&mut self) -> PResult<TypeRef> {
        let t = match self.peek() {
            Tok::Ident(w) if w == "Int" => TypeRef::Int,
            Tok::Ident(w) if w == "Bool" => TypeRef::Bool,
            Tok::Ident(w) if w == "Void" => TypeRef::Void,
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => TypeRef::Class(w.clone()),
            _ => return self.unexpected("a type"),
        };
        self.bump();
        Ok(t)
    }

    fn at_literal(&self) -> bool {
        match self.peek() {
            Tok::Int(_) => true,
            Tok::Ident(w) => matches!(w.as_str(), "true" | "false" | "void" | "null"),
            _ => false,
        }
    }

    fn literal(&mut self) -> PResult<Value> {
        let v = match self.peek() {
            Tok::Int(n) => Value::Int(*n),
            Tok::Ident(w) if w == "true" => Value::Bool(true),
            Tok::Ident(w) if w == "false" => Value::Bool(false),
            Tok::Ident(w) if w == "void" => Value::Void,
            Tok::Ident(w) if w == "null" => Value::Null,
            _ => return self.unexpected("a literal"),
        };
        self.bump();
        Ok(v)
    }

    fn file(&mut self) -> PResult<()> {
        loop {
            match self.peek() {
                Tok::Eof => return Ok(()),
                Tok::Ident(w) => match w.as_str() {
                    "config" => self.config()?,
                    "class" => self.class()?,
                    "op" => self.method()?,
                    "setup" => self.setup_block()?,
                    _ => return self.unexpected("`class`, `op`, `setup` or `config`"),
                },
                _ => return self.unexpected("`class`, `op`, `setup` or `config`"),
            }
        }
    }

    fn config(&mut self) -> PResult<()> {
        let start = self.kw("config")?;
        if self.selections.is_some() {
            return Err(Diagnostic::new(start, "duplicate `config` block"));
        }
        let mut sel = Selections::default();
        self.punct("{")?;
        while !self.at_punct("}") {
            let key_span = self.span();
            let key = match self.peek().clone() {
                Tok::Ident(w) => {
                    self.bump();
                    w
                }
                _ => return self.unexpected("a config key"),
            };
            self.punct(":")?;
            let val_span = self.span();
            let val = match self.peek().clone() {
                Tok::Ident(w) => {
                    self.bump();
                    w
                }
                _ => return self.unexpected("a strategy name"),
            };
            let bad = |e: String| Diagnostic::new(val_span, e);
            match key.as_str() {
                "runnables" => sel.runnables = val.parse().map_err(bad)?,
                "scheduler" => sel.scheduler = val.parse().map_err(bad)?,
                "dispatch" => sel.dispatch = val.parse().map_err(bad)?,
                "medium" => sel.medium = val.parse().map_err(bad)?,
                other => {
                    return Err(Diagnostic::new(
                        key_span,
                        format!("unknown config key `{other}`"),
                    ))
                }
            }
            self.punct(";")?;
        }
        self.punct("}")?;
        self.selections = Some(sel);
        Ok(())
    }

    fn class(&mut self) -> PResult<()> {
        self.kw("class")?;
        let (name, span) = self.name()?;
        if self.model.classes.contains_key(&name) {
            return Err(Diagnostic::new(span, format!("duplicate class `{name}`")));
        }
        self.sites.insert(Site::Class(name.clone()), span);
        let mut supers = Vec::new();
        if self.at_kw("extends") {
            self.bump();
            loop {
                supers.push(self.name()?.0);
                if !self.at_punct(",") {
                    break;
                }
                self.bump();
            }
        }
        self.punct("{")?;
        let mut class = ClassDef::new(name.clone());
        while !self.at_punct("}") {
            self.kw("attr")?;
            let (attr, aspan) = self.name()?;
            self.punct(":")?;
            let ty = self.ty()?;
            self.punct("=")?;
            let init = self.literal()?;
            self.punct(";")?;
            self.sites.insert(
                Site::Attr {
                    class: name.clone(),
                    attr: attr.clone(),
                },
                aspan,
            );
            class.attributes.push(Attribute {
                name: attr,
                ty,
                init,
            });
        }
        self.punct("}")?;
        self.model.subclass.set(name.clone(), supers);
        self.model.classes.insert(name, class);
        Ok(())
    }

    fn method(&mut self) -> PResult<()> {
        let start = self.kw("op")?;
        let (class, _) = self.name()?;
        self.punct(".")?;
        let (op_name, _) = self.name()?;
        self.punct("(")?;
        let mut params = Vec::new();
        while !self.at_punct(")") {
            if !params.is_empty() {
                self.punct(",")?;
            }
            let (p, _) = self.name()?;
            self.punct(":")?;
            params.push((p, self.ty()?));
        }
        self.punct(")")?;
        self.punct(":")?;
        let ret = self.ty()?;
        let op = OpSig::new(
            op_name,
            params.iter().map(|(_, t)| t.clone()).collect(),
            ret,
        );
        if self.model.methods.lookup(&class, &op).is_some() {
            return Err(Diagnostic::new(
                start,
                format!("duplicate method {class}.{op}"),
            ));
        }
        self.sites.insert(
            Site::Method {
                class: class.clone(),
                op: op.clone(),
            },
            start,
        );

        self.punct("{")?;
        let mut labels: BTreeMap<String, usize> = BTreeMap::new();
        let mut raw: Vec<Raw> = Vec::new();
        while !self.at_punct("}") {
            while matches!(self.peek_at(1), Tok::Punct(":")) && matches!(self.peek(), Tok::Ident(_))
            {
                let (label, lspan) = self.name()?;
                self.bump();
                if labels.insert(label.clone(), raw.len()).is_some() {
                    return Err(Diagnostic::new(lspan, format!("duplicate label `{label}`")));
                }
            }
            let aspan = self.span();
            let action = self.action()?;
            self.punct(";")?;
            self.sites.insert(
                Site::Action {
                    class: class.clone(),
                    op: op.clone(),
                    pc: raw.len(),
                },
                aspan,
            );
            raw.push(action);
        }
        let close = self.punct("}")?;
        if let Some((label, _)) = labels.iter().find(|(_, pc)| **pc == raw.len()) {
            return Err(Diagnostic::new(
                close,
                format!("label `{label}` does not mark an action"),
            ));
        }

        let resolve = |t: Target| -> PResult<usize> {
            match t {
                Target::Pc(n) => Ok(n),
                Target::Label(l, span) => labels
                    .get(&l)
                    .copied()
                    .ok_or_else(|| Diagnostic::new(span, format!("unknown label `{l}`"))),
            }
        };
        let mut body = Vec::with_capacity(raw.len());
        for r in raw {
            body.push(match r {
                Raw::Done(a) => a,
                Raw::Jump(t) => Action::Jump {
                    target: resolve(t)?,
                },
                Raw::Branch(cond, t) => Action::BranchIfFalse {
                    cond,
                    target: resolve(t)?,
                },
            });
        }
        self.model.methods.insert(
            class,
            MethodDef {
                implements: op,
                params,
                body,
            },
        );
        Ok(())
    }

    fn target(&mut self) -> PResult<Target> {
        match self.peek().clone() {
            Tok::Int(n) if n >= 0 => {
                self.bump();
                Ok(Target::Pc(n as usize))
            }
            Tok::Ident(_) => {
                let (l, span) = self.name()?;
                Ok(Target::Label(l, span))
            }
            _ => self.unexpected("a label or action index"),
        }
    }

    fn send(&mut self) -> PResult<(String, OpSig, Vec<String>)> {
        let (target, _) = self.name()?;
        self.punct(".")?;
        let (op_name, _) = self.name()?;
        self.punct("(")?;
        let mut args = Vec::new();
        let mut types = Vec::new();
        while !self.at_punct(")") {
            if !args.is_empty() {
                self.punct(",")?;
            }
            args.push(self.name()?.0);
            self.punct(":")?;
            types.push(self.ty()?);
        }
        self.punct(")")?;
        self.punct(":")?;
        let ret = self.ty()?;
        Ok((target, OpSig::new(op_name, types, ret), args))
    }

    fn action(&mut self) -> PResult<Raw> {
        let kw = match self.peek() {
            Tok::Ident(w) => w.clone(),
            _ => return self.unexpected("an action"),
        };
        let action = match kw.as_str() {
            "local" => {
                self.bump();
                let (name, _) = self.name()?;
                self.punct(":")?;
                let ty = self.ty()?;
                self.punct("=")?;
                let init = self.literal()?;
                Action::NewLocal { name, ty, init }
            }
            "attr" => {
                self.bump();
                let (attr, _) = self.name()?;
                self.punct(":=")?;
                let (local, _) = self.name()?;
                Action::SetAttr { attr, local }
            }
            "goto" => {
                self.bump();
                return Ok(Raw::Jump(self.target()?));
            }
            "ifnot" => {
                self.bump();
                let (cond, _) = self.name()?;
                self.kw("goto")?;
                return Ok(Raw::Branch(cond, self.target()?));
            }
            "signal" => {
                self.bump();
                let (target, op, args) = self.send()?;
                self.kw("prio")?;
                let prio = self.int()?;
                Action::SendSignal {
                    target,
                    op,
                    args,
                    prio,
                }
            }
            "return" => {
                self.bump();
                let src = if self.at_literal() {
                    ReturnSrc::Const(self.literal()?)
                } else {
                    ReturnSrc::Local(self.name()?.0)
                };
                Action::Return { src }
            }
            _ => {
                let (dst, _) = self.name()?;
                self.punct(":=")?;
                self.assignment(dst)?
            }
        };
        Ok(Raw::Done(action))
    }

    fn assignment(&mut self, dst: String) -> PResult<Action> {
        if self.at_literal() {
            return Ok(Action::LocalConst {
                local: dst,
                value: self.literal()?,
            });
        }
        let word = match self.peek() {
            Tok::Ident(w) => w.clone(),
            _ => return self.unexpected("a value"),
        };
        Ok(match word.as_str() {
            "param" => {
                self.bump();
                Action::LocalFromParam {
                    local: dst,
                    param: self.name()?.0,
                }
            }
            "attr" => {
                self.bump();
                Action::LocalFromAttr {
                    local: dst,
                    attr: self.name()?.0,
                }
            }
            "new" => {
                self.bump();
                Action::NewObject {
                    dst,
                    class: self.name()?.0,
                }
            }
            "call" => {
                self.bump();
                let (target, op, args) = self.send()?;
                Action::Call {
                    target,
                    op,
                    args,
                    result: dst,
                }
            }
            _ => {
                let (lhs, _) = self.name()?;
                let op = match self.peek() {
                    Tok::Punct(p) => BinOpKind::ALL.into_iter().find(|k| k.symbol() == *p),
                    _ => None,
                };
                let Some(op) = op else {
                    return self.unexpected("an operator (`+`, `-`, `*`, `==`, `<`)");
                };
                self.bump();
                let (rhs, _) = self.name()?;
                Action::BinOp { op, dst, lhs, rhs }
            }
        })
    }

    fn setup_block(&mut self) -> PResult<()> {
        let start = self.kw("setup")?;
        if self.setup.is_some() {
            return Err(Diagnostic::new(start, "duplicate `setup` block"));
        }
        self.punct("{")?;
        let mut entries = Vec::new();
        while !self.at_punct("}") {
            let (name, span) = self.name()?;
            self.punct(":")?;
            let (class, _) = self.name()?;
            let kind = if self.at_kw("passive") {
                self.bump();
                OKind::Passive
            } else if self.at_kw("active") {
                self.bump();
                let (op_name, _) = self.name()?;
                self.punct("(")?;
                let mut params = Vec::new();
                while !self.at_punct(")") {
                    if !params.is_empty() {
                        self.punct(",")?;
                    }
                    params.push(self.ty()?);
                }
                self.punct(")")?;
                self.punct(":")?;
                let ret = self.ty()?;
                self.kw("prio")?;
                let prio = self.int()?;
                OKind::Active {
                    op: OpSig::new(op_name, params, ret),
                    prio,
                }
            } else {
                return self.unexpected("`passive` or `active`");
            };
            let mut links = Vec::new();
            if self.at_kw("links") {
                self.bump();
                self.punct("[")?;
                while !self.at_punct("]") {
                    if !links.is_empty() {
                        self.punct(",")?;
                    }
                    links.push(self.name()?.0);
                }
                self.punct("]")?;
            }
            self.punct(";")?;
            self.sites.insert(Site::Setup(entries.len()), span);
            entries.push(SetupEntry {
                name,
                class,
                kind,
                links,
            });
        }
        self.punct("}")?;
        self.setup = Some(entries);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::PRODCONS;
    use crate::frontend::print_model;

    fn first_error(src: &str) -> Diagnostic {
        parse(src).unwrap_err().remove(0)
    }

    #[test]
    fn fixture_parses() {
        let def = parse(PRODCONS).unwrap();
        let names: Vec<&str> = def.model.classes.keys().map(String::as_str).collect();
        assert_eq!(names, ["Buffer", "Consumer", "Producer"]);
        assert_eq!(def.setup.len(), 4);
        let buffer = def.model.class("Buffer").unwrap();
        assert_eq!(
            buffer,
            &ClassDef::new("Buffer").with_attr("data", TypeRef::Int, Value::Int(-1))
        );
    }

    #[test]
    fn labels_become_indices() {
        let def = parse(PRODCONS).unwrap();
        let consume = def
            .model
            .resolve("Consumer", &OpSig::new("consume", vec![], TypeRef::Void))
            .unwrap();
        assert_eq!(consume.body[8], Action::Jump { target: 5 });
        assert_eq!(
            consume.body[7],
            Action::BranchIfFalse {
                cond: "c".into(),
                target: 9
            }
        );
    }

    #[test]
    fn print_then_parse_is_identity() {
        let def = parse(PRODCONS).unwrap();
        assert_eq!(parse(&print_model(&def)).unwrap(), def);
    }

    #[test]
    fn numeric_jump_out_of_range() {
        let d = first_error(
            "class A {}\nop A.f(): Void {\n  local x: Int = 0;\n  goto 99;\n  return void;\n}",
        );
        assert_eq!(d.span, Span { line: 4, col: 3 });
        assert!(d.message.contains("99"), "{d}");
    }

    #[test]
    fn syntax_error_location() {
        let d = first_error("class A {\n  attr x Int = 1;\n}");
        assert_eq!(d.span, Span { line: 2, col: 10 });
    }

    #[test]
    fn unknown_label_and_duplicates() {
        let d = first_error("class A {}\nop A.f(): Void {\n  goto nowhere;\n}");
        assert_eq!(d.span, Span { line: 3, col: 8 });
        let d = first_error("class A {}\nclass A {}");
        assert_eq!(d.span, Span { line: 2, col: 7 });
        let d = first_error("setup {}\nsetup {}");
        assert_eq!(d.span, Span { line: 2, col: 1 });
    }

    #[test]
    fn setup_errors_point_at_entry() {
        let d = first_error("class A {}\nsetup {\n  a: A passive;\n  b: B passive;\n}");
        assert_eq!(d.span, Span { line: 4, col: 3 });
        assert!(d.message.contains("unknown class"));
    }

    #[test]
    fn config_values_are_checked() {
        let d = first_error("config { runnables: fifo; }");
        assert_eq!(d.span, Span { line: 1, col: 21 });
        let def = parse("config { runnables: rtc; scheduler: prio; }").unwrap();
        assert_eq!(
            def.selections,
            Selections::new(
                crate::variation::RunnablesKind::Rtc,
                crate::variation::SchedulerKind::Prio,
            )
        );
    }
}

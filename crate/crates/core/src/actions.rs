//! The action language and its single-step interpreter.
//!
//! A method body is a flat list of actions addressed by program counter.
//! Operands are always locals; literals enter through [`Action::LocalConst`]
//! or [`Action::NewLocal`].

use std::collections::BTreeMap;
use std::fmt;

use crate::state::{
    Caller, Event, EventKind, Fault, Frame, Message, Payload, SimState, ThreadId, ThreadStatus,
};
use crate::universe::{
    describe, value_conforms, MethodDef, Model, ModelError, ModelProblem, ObjectId, OpSig, Site,
    TypeRef, Value,
};
use crate::variation::Config;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
}

impl BinOpKind {
    pub const ALL: [BinOpKind; 5] = [
        BinOpKind::Add,
        BinOpKind::Sub,
        BinOpKind::Mul,
        BinOpKind::Eq,
        BinOpKind::Lt,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Eq => "==",
            BinOpKind::Lt => "<",
        }
    }

    pub fn result_type(self) -> TypeRef {
        match self {
            BinOpKind::Add | BinOpKind::Sub | BinOpKind::Mul => TypeRef::Int,
            BinOpKind::Eq | BinOpKind::Lt => TypeRef::Bool,
        }
    }

    fn apply(self, a: i64, b: i64) -> Result<Value, Fault> {
        let int = |r: Option<i64>| r.map(Value::Int).ok_or(Fault::Overflow);
        match self {
            BinOpKind::Add => int(a.checked_add(b)),
            BinOpKind::Sub => int(a.checked_sub(b)),
            BinOpKind::Mul => int(a.checked_mul(b)),
            BinOpKind::Eq => Ok(Value::Bool(a == b)),
            BinOpKind::Lt => Ok(Value::Bool(a < b)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReturnSrc {
    Const(Value),
    Local(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// Declares a local with an initial value.
    NewLocal {
        name: String,
        ty: TypeRef,
        init: Value,
    },
    LocalFromParam {
        local: String,
        param: String,
    },
    LocalFromAttr {
        local: String,
        attr: String,
    },
    LocalConst {
        local: String,
        value: Value,
    },
    SetAttr {
        attr: String,
        local: String,
    },
    BinOp {
        op: BinOpKind,
        dst: String,
        lhs: String,
        rhs: String,
    },
    Jump {
        target: usize,
    },
    BranchIfFalse {
        cond: String,
        target: usize,
    },
    NewObject {
        dst: String,
        class: String,
    },
    /// Synchronous call. The calling thread waits until the return value
    /// arrives in `result`.
    Call {
        target: String,
        op: OpSig,
        args: Vec<String>,
        result: String,
    },
    /// Asynchronous signal; the sender continues immediately.
    SendSignal {
        target: String,
        op: OpSig,
        args: Vec<String>,
        prio: i64,
    },
    Return {
        src: ReturnSrc,
    },
}

impl Action {
    pub fn jump_target(&self) -> Option<usize> {
        match self {
            Action::Jump { target } | Action::BranchIfFalse { target, .. } => Some(*target),
            _ => None,
        }
    }
}

pub(crate) fn fmt_literal(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Void => "void".into(),
        Value::Null => "null".into(),
        other => format!("<{}>", describe(other)),
    }
}

pub(crate) fn fmt_send(target: &str, op: &OpSig, args: &[String]) -> String {
    let mut s = format!("{target}.{}(", op.name);
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        match op.params.get(i) {
            Some(t) => s.push_str(&format!("{a}: {t}")),
            None => s.push_str(a),
        }
    }
    s.push_str(&format!("): {}", op.ret));
    s
}

impl fmt::Display for Action {
    /// Renders the action in model-file syntax, with numeric jump targets.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::NewLocal { name, ty, init } => {
                write!(f, "local {name}: {ty} = {}", fmt_literal(init))
            }
            Action::LocalFromParam { local, param } => write!(f, "{local} := param {param}"),
            Action::LocalFromAttr { local, attr } => write!(f, "{local} := attr {attr}"),
            Action::LocalConst { local, value } => write!(f, "{local} := {}", fmt_literal(value)),
            Action::SetAttr { attr, local } => write!(f, "attr {attr} := {local}"),
            Action::BinOp { op, dst, lhs, rhs } => {
                write!(f, "{dst} := {lhs} {} {rhs}", op.symbol())
            }
            Action::Jump { target } => write!(f, "goto {target}"),
            Action::BranchIfFalse { cond, target } => write!(f, "ifnot {cond} goto {target}"),
            Action::NewObject { dst, class } => write!(f, "{dst} := new {class}"),
            Action::Call {
                target,
                op,
                args,
                result,
            } => write!(f, "{result} := call {}", fmt_send(target, op, args)),
            Action::SendSignal {
                target,
                op,
                args,
                prio,
            } => write!(f, "signal {} prio {prio}", fmt_send(target, op, args)),
            Action::Return { src } => match src {
                ReturnSrc::Const(v) => write!(f, "return {}", fmt_literal(v)),
                ReturnSrc::Local(l) => write!(f, "return {l}"),
            },
        }
    }
}

/// What an interpreted action did beyond its local effects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Effect {
    /// Kind of the event handed to the medium, if any.
    pub emitted: Option<EventKind>,
    /// The acting thread ended.
    pub terminated: bool,
}

fn frame_mut(s: &mut SimState, o: ObjectId, t: ThreadId) -> Result<&mut Frame, Fault> {
    s.cs.thread_mut(o, t)
        .and_then(|th| th.top_mut())
        .ok_or_else(|| Fault::Internal(format!("no active frame for thread {t} at object {o}")))
}

fn local(frame: &Frame, name: &str) -> Result<Value, Fault> {
    frame
        .locals
        .get(name)
        .cloned()
        .ok_or_else(|| Fault::UnknownLocal(name.to_string()))
}

fn assign(frame: &mut Frame, name: &str, v: Value) -> Result<(), Fault> {
    let slot = frame
        .locals
        .get_mut(name)
        .ok_or_else(|| Fault::UnknownLocal(name.to_string()))?;
    if !slot.same_kind(&v) {
        return Err(Fault::mismatch(describe(slot), &v));
    }
    *slot = v;
    Ok(())
}

fn int(v: &Value) -> Result<i64, Fault> {
    match v {
        Value::Int(n) => Ok(*n),
        other => Err(Fault::mismatch("Int", other)),
    }
}

fn target_oid(s: &SimState, v: &Value) -> Result<ObjectId, Fault> {
    match v {
        Value::Oid(o) if s.ds.contains(*o) => Ok(*o),
        Value::Oid(o) => Err(Fault::DanglingReference(*o)),
        Value::Null => Err(Fault::NullTarget),
        other => Err(Fault::mismatch("object reference", other)),
    }
}

fn send_args(
    frame: &Frame,
    op: &OpSig,
    args: &[String],
    model: &Model,
    s: &SimState,
) -> Result<Vec<Value>, Fault> {
    if args.len() != op.params.len() {
        return Err(Fault::Internal(format!(
            "{} arguments passed to {op}",
            args.len()
        )));
    }
    args.iter()
        .zip(&op.params)
        .map(|(a, ty)| {
            let v = local(frame, a)?;
            if value_conforms(&v, ty, model, &s.ds) {
                Ok(v)
            } else {
                Err(Fault::mismatch(ty, &v))
            }
        })
        .collect()
}

/// Interprets one action for thread `t` of object `o`: updates the stores
/// and the program counter, and hands any outgoing event to the medium.
pub fn interpret(
    action: &Action,
    s: &mut SimState,
    o: ObjectId,
    t: ThreadId,
    cfg: &Config,
) -> Result<Effect, Fault> {
    let model = cfg.model();
    let mut effect = Effect::default();
    let frame = frame_mut(s, o, t)?.clone();
    let mut next_pc = frame.pc + 1;

    match action {
        Action::NewLocal { name, ty, init } => {
            if !model.literal_fits(init, ty) {
                return Err(Fault::mismatch(ty, init));
            }
            let f = frame_mut(s, o, t)?;
            if !f.locals.insert(name.clone(), init.clone()) {
                return Err(Fault::DuplicateLocal(name.clone()));
            }
        }
        Action::LocalFromParam { local: l, param } => {
            let v = frame
                .params
                .get(param)
                .cloned()
                .ok_or_else(|| Fault::UnknownParam(param.clone()))?;
            assign(frame_mut(s, o, t)?, l, v)?;
        }
        Action::LocalFromAttr { local: l, attr } => {
            let v = s.read_attr(o, attr)?;
            assign(frame_mut(s, o, t)?, l, v)?;
        }
        Action::LocalConst { local: l, value } => {
            assign(frame_mut(s, o, t)?, l, value.clone())?;
        }
        Action::SetAttr { attr, local: l } => {
            let v = local(&frame, l)?;
            s.write_attr(model, o, attr, v)?;
        }
        Action::BinOp { op, dst, lhs, rhs } => {
            let a = int(&local(&frame, lhs)?)?;
            let b = int(&local(&frame, rhs)?)?;
            let v = op.apply(a, b)?;
            assign(frame_mut(s, o, t)?, dst, v)?;
        }
        Action::Jump { target } => next_pc = *target,
        Action::BranchIfFalse { cond, target } => match local(&frame, cond)? {
            Value::Bool(false) => next_pc = *target,
            Value::Bool(true) => {}
            other => return Err(Fault::mismatch("Bool", &other)),
        },
        Action::NewObject { dst, class } => {
            let slot = local(&frame, dst)?;
            if !matches!(slot, Value::Null | Value::Oid(_)) {
                return Err(Fault::mismatch("object reference", &slot));
            }
            let new = s.alloc_object(model, class)?;
            assign(frame_mut(s, o, t)?, dst, Value::Oid(new))?;
        }
        Action::Call {
            target,
            op,
            args,
            result,
        } => {
            let receiver = target_oid(s, &local(&frame, target)?)?;
            let args = send_args(&frame, op, args, model, s)?;
            let prio =
                s.cs.thread(o, t)
                    .map(|th| th.base_prio)
                    .ok_or_else(|| Fault::Internal(format!("no thread {t} at object {o}")))?;
            let payload = Payload::Call {
                op: op.clone(),
                args,
                result_local: result.clone(),
                prio,
            };
            send(s, cfg, o, t, receiver, payload)?;
            effect.emitted = Some(EventKind::Call);
            if let Some(th) = s.cs.thread_mut(o, t) {
                th.status = ThreadStatus::Waiting;
            }
        }
        Action::SendSignal {
            target,
            op,
            args,
            prio,
        } => {
            let receiver = target_oid(s, &local(&frame, target)?)?;
            let args = send_args(&frame, op, args, model, s)?;
            let payload = Payload::Signal {
                op: op.clone(),
                args,
                prio: *prio,
            };
            send(s, cfg, o, t, receiver, payload)?;
            effect.emitted = Some(EventKind::Signal);
        }
        Action::Return { src } => {
            let value = match src {
                ReturnSrc::Const(v) => v.clone(),
                ReturnSrc::Local(l) => local(&frame, l)?,
            };
            if !value_conforms(&value, &frame.op.ret, model, &s.ds) {
                return Err(Fault::mismatch(&frame.op.ret, &value));
            }
            s.pop_frame(o, t)?;
            effect.terminated = s.cs.thread(o, t).is_none();
            if let Some(Caller {
                oid,
                tid,
                result_local,
            }) = frame.caller
            {
                let e = Event {
                    seq: s.es.next_seq(),
                    sent_at: s.now,
                    thread: tid,
                    msg: Message {
                        sender: o,
                        sender_thread: t,
                        receiver: oid,
                        payload: Payload::Return {
                            value,
                            result_local,
                        },
                    },
                };
                cfg.medium().deliver(&mut s.es, e)?;
                effect.emitted = Some(EventKind::Return);
            }
            return Ok(effect);
        }
    }

    frame_mut(s, o, t)?.pc = next_pc;
    Ok(effect)
}

/// Builds a call or signal event, reserving the id of the thread that will
/// handle it, and hands it to the medium.
fn send(
    s: &mut SimState,
    cfg: &Config,
    sender: ObjectId,
    sender_thread: ThreadId,
    receiver: ObjectId,
    payload: Payload,
) -> Result<(), Fault> {
    let handler = s.cs.fresh_tid();
    let e = Event {
        seq: s.es.next_seq(),
        sent_at: s.now,
        thread: handler,
        msg: Message {
            sender,
            sender_thread,
            receiver,
            payload,
        },
    };
    cfg.medium().deliver(&mut s.es, e)
}

/// Static type check of a method body in the context of `class`.
///
/// Locals are declared by `NewLocal` and by the result slot of `Call`; a
/// local declared twice must be declared with the same type.
pub fn check_body(model: &Model, class: &str, method: &MethodDef) -> Vec<ModelError> {
    let op = &method.implements;
    let site = |pc: usize| Site::Action {
        class: class.to_string(),
        op: op.clone(),
        pc,
    };
    let mut errs = Vec::new();
    let mut err = |pc: usize, p: ModelProblem| errs.push(ModelError::new(site(pc), p));
    let mismatch = |expected: &TypeRef, found: &TypeRef| ModelProblem::TypeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    };

    let mut locals: BTreeMap<&str, TypeRef> = BTreeMap::new();
    for (pc, a) in method.body.iter().enumerate() {
        let (name, ty) = match a {
            Action::NewLocal { name, ty, .. } => (name, ty),
            Action::Call { result, op, .. } => (result, &op.ret),
            _ => continue,
        };
        if let TypeRef::Class(c) = ty {
            if !model.classes.contains_key(c) {
                err(pc, ModelProblem::UnknownClass(c.clone()));
                continue;
            }
        }
        match locals.get(name.as_str()) {
            Some(prev) if prev != ty => err(
                pc,
                ModelProblem::ConflictingLocal {
                    name: name.clone(),
                    first: prev.clone(),
                    second: ty.clone(),
                },
            ),
            Some(_) => {}
            None => {
                locals.insert(name, ty.clone());
            }
        }
    }

    let attrs: BTreeMap<&str, &TypeRef> = model
        .effective_attributes(class)
        .map(|v| v.into_iter().map(|a| (a.name.as_str(), &a.ty)).collect())
        .unwrap_or_default();
    let params: BTreeMap<&str, &TypeRef> =
        method.params.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let len = method.body.len();

    for (pc, a) in method.body.iter().enumerate() {
        let local_ty = |n: &str| {
            locals
                .get(n)
                .cloned()
                .ok_or_else(|| ModelProblem::UnknownLocal(n.to_string()))
        };
        let expect = |found: &TypeRef, expected: &TypeRef| {
            if model.type_conforms(found, expected) {
                Ok(())
            } else {
                Err(mismatch(expected, found))
            }
        };
        let check_send = |target: &str, sig: &OpSig, args: &[String]| -> Result<(), ModelProblem> {
            for t in sig.params.iter().chain([&sig.ret]) {
                if let TypeRef::Class(c) = t {
                    if !model.classes.contains_key(c) {
                        return Err(ModelProblem::UnknownClass(c.clone()));
                    }
                }
            }
            let tt = local_ty(target)?;
            let TypeRef::Class(tc) = &tt else {
                return Err(ModelProblem::TypeMismatch {
                    expected: "a class type".into(),
                    found: tt.to_string(),
                });
            };
            if model.resolve(tc, sig).is_none() {
                return Err(ModelProblem::MethodNotFound {
                    class: tc.clone(),
                    op: sig.clone(),
                });
            }
            if args.len() != sig.params.len() {
                return Err(ModelProblem::ParamMismatch);
            }
            for (arg, pt) in args.iter().zip(&sig.params) {
                expect(&local_ty(arg)?, pt)?;
            }
            Ok(())
        };

        let checked: Result<(), ModelProblem> = match a {
            Action::NewLocal { ty, init, .. } => {
                if model.literal_fits(init, ty) {
                    Ok(())
                } else {
                    Err(ModelProblem::InitMismatch {
                        expected: ty.clone(),
                        found: describe(init),
                    })
                }
            }
            Action::LocalFromParam { local: l, param } => local_ty(l).and_then(|lt| {
                let pt = params
                    .get(param.as_str())
                    .ok_or_else(|| ModelProblem::UnknownParam(param.clone()))?;
                expect(pt, &lt)
            }),
            Action::LocalFromAttr { local: l, attr } => local_ty(l).and_then(|lt| {
                let at = attrs
                    .get(attr.as_str())
                    .ok_or_else(|| ModelProblem::UnknownAttribute(attr.clone()))?;
                expect(at, &lt)
            }),
            Action::LocalConst { local: l, value } => local_ty(l).and_then(|lt| {
                if model.literal_fits(value, &lt) {
                    Ok(())
                } else {
                    Err(ModelProblem::TypeMismatch {
                        expected: lt.to_string(),
                        found: describe(value),
                    })
                }
            }),
            Action::SetAttr { attr, local: l } => local_ty(l).and_then(|lt| {
                let at = attrs
                    .get(attr.as_str())
                    .ok_or_else(|| ModelProblem::UnknownAttribute(attr.clone()))?;
                expect(&lt, at)
            }),
            Action::BinOp { op, dst, lhs, rhs } => (|| {
                expect(&local_ty(lhs)?, &TypeRef::Int)?;
                expect(&local_ty(rhs)?, &TypeRef::Int)?;
                expect(&op.result_type(), &local_ty(dst)?)
            })(),
            Action::Jump { target } if *target >= len => Err(ModelProblem::BadJumpTarget {
                target: *target,
                len,
            }),
            Action::Jump { .. } => Ok(()),
            Action::BranchIfFalse { cond, target } => {
                if *target >= len {
                    Err(ModelProblem::BadJumpTarget {
                        target: *target,
                        len,
                    })
                } else {
                    local_ty(cond).and_then(|ct| expect(&ct, &TypeRef::Bool))
                }
            }
            Action::NewObject { dst, class: c } => {
                if !model.classes.contains_key(c) {
                    Err(ModelProblem::UnknownClass(c.clone()))
                } else {
                    local_ty(dst).and_then(|dt| expect(&TypeRef::Class(c.clone()), &dt))
                }
            }
            Action::Call {
                target, op, args, ..
            } => check_send(target, op, args),
            Action::SendSignal {
                target, op, args, ..
            } => check_send(target, op, args),
            Action::Return { src } => match src {
                ReturnSrc::Const(v) if model.literal_fits(v, &op.ret) => Ok(()),
                ReturnSrc::Const(v) => Err(ModelProblem::TypeMismatch {
                    expected: op.ret.to_string(),
                    found: describe(v),
                }),
                ReturnSrc::Local(l) => local_ty(l).and_then(|lt| expect(&lt, &op.ret)),
            },
        };
        if let Err(p) = checked {
            err(pc, p);
        }
    }
    errs
}

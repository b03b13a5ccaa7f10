//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sysmodel::actions::{Action, BinOpKind, ReturnSrc};
use sysmodel::frontend::{parse_model, ModelDef};
use sysmodel::state::{EventKind, ThreadId};
use sysmodel::universe::{Attribute, ClassDef, MethodDef, Model, ObjectId, OpSig, TypeRef, Value};
use sysmodel::variation::{
    Config, DispatchKind, MediumKind, RunnablesKind, SchedulerKind, Selections,
};
use sysmodel::vm::{Engine, OKind, RunResult, SetupEntry, StepRecord};

pub const CONFIGS: [(RunnablesKind, SchedulerKind); 4] = [
    (RunnablesKind::Conc, SchedulerKind::Rr),
    (RunnablesKind::Conc, SchedulerKind::Prio),
    (RunnablesKind::Rtc, SchedulerKind::Rr),
    (RunnablesKind::Rtc, SchedulerKind::Prio),
];

pub fn fixture() -> ModelDef {
    parse_model(sysmodel::fixtures::PRODCONS).expect("fixture parses")
}

/// Runs `def` under the given selections and records every step.
pub fn run_traced(
    def: &ModelDef,
    runnables: RunnablesKind,
    scheduler: SchedulerKind,
) -> (RunResult, Vec<StepRecord>) {
    let cfg = Config::new(def.model.clone(), Selections::new(runnables, scheduler));
    let mut trace = Vec::new();
    let result = Engine::new(&cfg)
        .observe(|s| trace.push(s.clone()))
        .run_main(&def.setup)
        .expect("run succeeds");
    (result, trace)
}

pub fn int_attr(r: &RunResult, oid: u32, name: &str) -> i64 {
    match r.final_state.read_attr(ObjectId(oid), name) {
        Ok(Value::Int(n)) => n,
        other => panic!("object {oid}.{name}: {other:?}"),
    }
}

/// Consumer values (ids 1 and 2) and the buffer value (id 3) of a fixture run.
pub fn outcome(r: &RunResult) -> ([i64; 2], i64) {
    (
        [int_attr(r, 1, "data"), int_attr(r, 2, "data")],
        int_attr(r, 3, "data"),
    )
}

/// Every produced value reached exactly one consumer and the buffer is empty.
pub fn consistent(r: &RunResult) -> bool {
    let (mut got, buffer) = outcome(r);
    got.sort();
    got == [10, 20] && buffer == -1
}

/// Consumed call events and consumed return events.
pub fn call_return_counts(trace: &[StepRecord]) -> (usize, usize) {
    let count = |k| trace.iter().filter(|s| s.consumed == Some(k)).count();
    (count(EventKind::Call), count(EventKind::Return))
}

/// Checks that on every object, the span from a handler's materialization
/// to its termination never overlaps another such span. Returns the first
/// offending step.
pub fn rtc_violation(trace: &[StepRecord]) -> Option<i64> {
    let mut open: BTreeMap<ObjectId, BTreeSet<ThreadId>> = BTreeMap::new();
    for s in trace {
        let live = open.entry(s.oid).or_default();
        if s.materialized {
            if !live.is_empty() {
                return Some(s.time);
            }
            live.insert(s.tid);
        }
        if s.terminated {
            live.remove(&s.tid);
        }
    }
    None
}

// ---------------------------------------------------------------------
// Random valid models

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn local_for(ty: &TypeRef) -> &'static str {
    match ty {
        TypeRef::Int => "li",
        TypeRef::Bool => "lb",
        TypeRef::Void => "lv",
        TypeRef::Class(_) => "lo",
    }
}

fn literal(rng: &mut ChaCha8Rng, ty: &TypeRef) -> Value {
    match ty {
        TypeRef::Int => Value::Int(rng.random_range(-1000..1000)),
        TypeRef::Bool => Value::Bool(rng.random_bool(0.5)),
        TypeRef::Void => Value::Void,
        TypeRef::Class(_) => Value::Null,
    }
}

/// Owning class, signature and named parameters of a generated method.
type Sig = (String, OpSig, Vec<(String, TypeRef)>);

/// A model that passes validation, built deterministically from `seed`.
pub fn gen_model(seed: u64) -> ModelDef {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new();
    let n_classes = rng.random_range(1..=5);
    let names: Vec<String> = (0..n_classes).map(|i| format!("C{i}")).collect();

    for (i, name) in names.iter().enumerate() {
        let mut class = ClassDef::new(name.clone());
        for k in 0..rng.random_range(0..=3) {
            let ty = match rng.random_range(0..3) {
                0 => TypeRef::Int,
                1 => TypeRef::Bool,
                _ => TypeRef::Class(pick(&mut rng, &names).clone()),
            };
            let init = literal(&mut rng, &ty);
            class.attributes.push(Attribute {
                name: format!("a{i}_{k}"),
                ty,
                init,
            });
        }
        let supers: Vec<String> = if i > 0 && rng.random_bool(0.5) {
            let mut s: Vec<String> = (0..rng.random_range(1..=2))
                .map(|_| names[rng.random_range(0..i)].clone())
                .collect();
            s.dedup();
            s
        } else {
            Vec::new()
        };
        model.subclass.set(name.clone(), supers);
        model.add_class(class);
    }

    // Signatures first, so bodies can call any of them.
    let scalar = [TypeRef::Int, TypeRef::Bool];
    let rets = [TypeRef::Int, TypeRef::Bool, TypeRef::Void];
    let mut sigs: Vec<Sig> = Vec::new();
    for name in &names {
        for k in 0..rng.random_range(0..=3) {
            let params: Vec<(String, TypeRef)> = (0..rng.random_range(0..=2))
                .map(|j| (format!("p{j}"), pick(&mut rng, &scalar).clone()))
                .collect();
            let op = OpSig::new(
                format!("f{k}"),
                params.iter().map(|(_, t)| t.clone()).collect(),
                pick(&mut rng, &rets).clone(),
            );
            sigs.push((name.clone(), op, params));
        }
    }

    for (class, op, params) in &sigs {
        let attrs: Vec<Attribute> = model
            .effective_attributes(class)
            .unwrap()
            .into_iter()
            .cloned()
            .collect();
        let target_class = pick(&mut rng, &names).clone();
        let mut body = vec![
            Action::NewLocal {
                name: "li".into(),
                ty: TypeRef::Int,
                init: literal(&mut rng, &TypeRef::Int),
            },
            Action::NewLocal {
                name: "lb".into(),
                ty: TypeRef::Bool,
                init: literal(&mut rng, &TypeRef::Bool),
            },
            Action::NewLocal {
                name: "lv".into(),
                ty: TypeRef::Void,
                init: Value::Void,
            },
            Action::NewLocal {
                name: "lo".into(),
                ty: TypeRef::Class(target_class.clone()),
                init: Value::Null,
            },
        ];
        let callable: Vec<&OpSig> = sigs
            .iter()
            .filter(|(_, o, _)| model.resolve(&target_class, o).is_some())
            .map(|(_, o, _)| o)
            .collect();
        let n_actions = rng.random_range(0..8);
        let len = body.len() + n_actions + 1;
        for _ in 0..n_actions {
            let a = match rng.random_range(0..10) {
                0 => Action::LocalConst {
                    local: "li".into(),
                    value: literal(&mut rng, &TypeRef::Int),
                },
                1 => {
                    let op = *pick(&mut rng, &BinOpKind::ALL);
                    Action::BinOp {
                        op,
                        dst: local_for(&op.result_type()).into(),
                        lhs: "li".into(),
                        rhs: "li".into(),
                    }
                }
                2 if !params.is_empty() => {
                    let (p, t) = pick(&mut rng, params);
                    Action::LocalFromParam {
                        local: local_for(t).into(),
                        param: p.clone(),
                    }
                }
                3 if !attrs.is_empty() => {
                    let a = pick(&mut rng, &attrs);
                    if matches!(a.ty, TypeRef::Class(_)) {
                        Action::LocalConst {
                            local: "lb".into(),
                            value: Value::Bool(true),
                        }
                    } else {
                        Action::SetAttr {
                            attr: a.name.clone(),
                            local: local_for(&a.ty).into(),
                        }
                    }
                }
                4 => Action::Jump {
                    target: rng.random_range(0..len),
                },
                5 => Action::BranchIfFalse {
                    cond: "lb".into(),
                    target: rng.random_range(0..len),
                },
                6 => Action::NewObject {
                    dst: "lo".into(),
                    class: target_class.clone(),
                },
                7 | 8 if !callable.is_empty() => {
                    let callee = (*pick(&mut rng, &callable)).clone();
                    let args = callee
                        .params
                        .iter()
                        .map(|t| local_for(t).to_string())
                        .collect();
                    if rng.random_bool(0.5) {
                        Action::Call {
                            target: "lo".into(),
                            result: local_for(&callee.ret).into(),
                            op: callee,
                            args,
                        }
                    } else {
                        Action::SendSignal {
                            target: "lo".into(),
                            op: callee,
                            args,
                            prio: rng.random_range(0..20),
                        }
                    }
                }
                _ => Action::LocalConst {
                    local: "lb".into(),
                    value: literal(&mut rng, &TypeRef::Bool),
                },
            };
            body.push(a);
        }
        body.push(Action::Return {
            src: if rng.random_bool(0.5) {
                ReturnSrc::Local(local_for(&op.ret).into())
            } else {
                ReturnSrc::Const(literal(&mut rng, &op.ret))
            },
        });
        model.methods.insert(
            class.clone(),
            MethodDef {
                implements: op.clone(),
                params: params.clone(),
                body,
            },
        );
    }

    let mut setup = Vec::new();
    for i in 0..rng.random_range(0..=4) {
        let class = pick(&mut rng, &names).clone();
        let starters: Vec<OpSig> = sigs
            .iter()
            .filter(|(_, o, _)| o.params.is_empty() && model.resolve(&class, o).is_some())
            .map(|(_, o, _)| o.clone())
            .collect();
        let kind = if !starters.is_empty() && rng.random_bool(0.6) {
            OKind::Active {
                op: pick(&mut rng, &starters).clone(),
                prio: rng.random_range(0..20),
            }
        } else {
            OKind::Passive
        };
        setup.push(SetupEntry {
            name: format!("o{i}"),
            class,
            kind,
            links: Vec::new(),
        });
    }
    let n = setup.len();
    for i in 0..n {
        if n > 1 && rng.random_bool(0.5) {
            let j = (i + rng.random_range(1..n)) % n;
            let link = setup[j].name.clone();
            setup[i].links.push(link);
        }
    }

    let selections = Selections {
        runnables: *pick(&mut rng, RunnablesKind::ALL),
        scheduler: *pick(&mut rng, SchedulerKind::ALL),
        dispatch: *pick(&mut rng, DispatchKind::ALL),
        medium: *pick(&mut rng, MediumKind::ALL),
    };
    ModelDef {
        model,
        setup,
        selections,
    }
}

// ---------------------------------------------------------------------
// Properties shared by the test suites and the acceptance runner

use proptest::prelude::*;
use sysmodel::state::{DataStore, Event, EventStore, Message, Payload, SimState};
use sysmodel::variation::{Medium, MethodDispatcher, Reliable, SingleDispatch};

/// A single-inheritance hierarchy: `parents[i]` is a class with a smaller
/// index, and `has[i][k]` says whether class `i` implements op `k`.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub parents: Vec<Option<usize>>,
    pub has: Vec<Vec<bool>>,
}

pub fn hierarchy() -> impl Strategy<Value = Hierarchy> {
    (1usize..=6, 1usize..=8).prop_flat_map(|(n, ops)| {
        let parents = (0..n)
            .map(|i| {
                if i == 0 {
                    Just(None).boxed()
                } else {
                    proptest::option::of(0..i).boxed()
                }
            })
            .collect::<Vec<_>>();
        let has = proptest::collection::vec(proptest::collection::vec(any::<bool>(), ops), n);
        (parents, has).prop_map(|(parents, has)| Hierarchy { parents, has })
    })
}

fn op_sig(k: usize) -> OpSig {
    OpSig::new(format!("op{k}"), vec![], TypeRef::Int)
}

fn marker(class: usize, op: usize) -> Value {
    Value::Int((class * 100 + op) as i64)
}

/// Compares single dispatch with a direct walk up the parent links, for
/// every (object, op) pair.
pub fn dispatch_agrees(h: &Hierarchy) -> Result<(), String> {
    let mut model = Model::new();
    for (i, p) in h.parents.iter().enumerate() {
        model.add_class(ClassDef::new(format!("K{i}")));
        model
            .subclass
            .set(format!("K{i}"), p.iter().map(|p| format!("K{p}")).collect());
        for (k, &has) in h.has[i].iter().enumerate() {
            if has {
                model.methods.insert(
                    format!("K{i}"),
                    MethodDef {
                        implements: op_sig(k),
                        params: vec![],
                        body: vec![Action::Return {
                            src: ReturnSrc::Const(marker(i, k)),
                        }],
                    },
                );
            }
        }
    }
    let mut s = SimState::empty();
    let ids: Vec<ObjectId> = (0..h.parents.len())
        .map(|i| s.alloc_object(&model, &format!("K{i}")).unwrap())
        .collect();
    let ds: &DataStore = &s.ds;
    for (i, &oid) in ids.iter().enumerate() {
        for k in 0..h.has[i].len() {
            let mut c = Some(i);
            let mut expected = None;
            while let Some(ci) = c {
                if h.has[ci][k] {
                    expected = Some(marker(ci, k));
                    break;
                }
                c = h.parents[ci];
            }
            let got = SingleDispatch
                .dispatch(&model.subclass, &model.methods, ds, oid, &op_sig(k))
                .ok()
                .map(|m| match &m.body[0] {
                    Action::Return {
                        src: ReturnSrc::Const(v),
                    } => v.clone(),
                    other => panic!("unexpected body {other:?}"),
                });
            if got != expected {
                return Err(format!(
                    "class K{i}, op{k}: got {got:?}, expected {expected:?}"
                ));
            }
        }
    }
    Ok(())
}

/// Sends one event per entry of `receivers` through the reliable medium and
/// checks per-receiver order and the total count.
pub fn fifo_holds(n_objects: u32, receivers: &[u32]) -> Result<(), String> {
    let mut es = EventStore::default();
    for o in 0..n_objects {
        es.register(ObjectId(o));
    }
    let mut sent: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for (i, &r) in receivers.iter().enumerate() {
        let seq = es.next_seq();
        let e = Event {
            seq,
            sent_at: i as i64,
            thread: ThreadId(i as u32),
            msg: Message {
                sender: ObjectId(0),
                sender_thread: ThreadId(0),
                receiver: ObjectId(r),
                payload: Payload::Signal {
                    op: OpSig::new("tick", vec![], TypeRef::Void),
                    args: vec![],
                    prio: 0,
                },
            },
        };
        Reliable.deliver(&mut es, e).map_err(|f| f.to_string())?;
        sent.entry(r).or_default().push(seq);
    }
    let mut total = 0;
    for o in 0..n_objects {
        let got: Vec<u64> = es.queue(ObjectId(o)).map(|e| e.seq).collect();
        total += got.len();
        let want = sent.remove(&o).unwrap_or_default();
        if got != want {
            return Err(format!("receiver {o}: dequeued {got:?}, sent {want:?}"));
        }
    }
    if total != receivers.len() {
        return Err(format!("{total} events buffered, {} sent", receivers.len()));
    }
    Ok(())
}

pub fn sends() -> impl Strategy<Value = (u32, Vec<u32>)> {
    (1u32..6).prop_flat_map(|n| (Just(n), proptest::collection::vec(0..n, 0..60)))
}

/// Drives `scheduler` over a fixed set of always-runnable threads, one per
/// priority, and returns the thread index picked at each step.
pub fn schedule_static(
    scheduler: &dyn sysmodel::variation::Scheduler,
    prios: &[i64],
    steps: usize,
) -> Vec<usize> {
    use sysmodel::vm::{add_last_exec_info, Candidate, TimesMap};
    let cands: Vec<Candidate> = prios
        .iter()
        .enumerate()
        .map(|(i, &prio)| Candidate {
            oid: ObjectId(i as u32),
            tid: ThreadId(i as u32),
            prio,
            since: -1,
        })
        .collect();
    let mut times = TimesMap::new();
    (0..steps as i64)
        .map(|t| {
            let entries = add_last_exec_info(&times, &cands);
            let (_, tid) = scheduler.schedule(t, &entries).unwrap();
            times.insert(tid, t);
            tid.0 as usize
        })
        .collect()
}

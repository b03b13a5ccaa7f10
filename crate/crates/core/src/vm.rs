//! The simulation engine: building the initial state from a setup, the
//! main scheduling loop and the atomic execution step.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::actions::{interpret, Action};
use crate::state::{
    Caller, EventKind, Fault, Frame, Payload, SimState, Thread, ThreadId, ThreadStatus, Time,
};
use crate::universe::{Model, ModelError, ModelProblem, ObjectId, OpSig, Record, Site, TypeRef};
use crate::variation::{Config, RunnableEntry, RunnablesSel};

/// Whether a setup object starts a thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OKind {
    Active { op: OpSig, prio: i64 },
    Passive,
}

/// One initial object: its name, class, kind and the names of the objects
/// it holds links to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupEntry {
    pub name: String,
    pub class: String,
    pub kind: OKind,
    pub links: Vec<String>,
}

impl SetupEntry {
    pub fn passive(name: &str, class: &str) -> Self {
        SetupEntry {
            name: name.into(),
            class: class.into(),
            kind: OKind::Passive,
            links: Vec::new(),
        }
    }

    pub fn active(name: &str, class: &str, op: OpSig, prio: i64) -> Self {
        SetupEntry {
            kind: OKind::Active { op, prio },
            ..SetupEntry::passive(name, class)
        }
    }

    pub fn links(mut self, links: &[&str]) -> Self {
        self.links = links.iter().map(|l| l.to_string()).collect();
        self
    }
}

pub type Setup = Vec<SetupEntry>;

/// Last execution step per thread.
pub type TimesMap = BTreeMap<ThreadId, Time>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Halt {
    /// No runnables and no live threads.
    AllDone,
    /// No runnables, but these threads are still waiting.
    Blocked(Vec<(ObjectId, ThreadId)>),
    /// The configured step limit was reached.
    StepLimit,
}

impl Halt {
    pub fn as_str(&self) -> &'static str {
        match self {
            Halt::AllDone => "all-done",
            Halt::Blocked(_) => "blocked",
            Halt::StepLimit => "step-limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub final_state: SimState,
    /// Number of executed steps.
    pub time: u64,
    pub halt: Halt,
}

/// A runnable entry before enrichment with execution times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub oid: ObjectId,
    pub tid: ThreadId,
    pub prio: i64,
    pub since: Time,
}

/// What happened in one executed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub time: Time,
    pub oid: ObjectId,
    pub tid: ThreadId,
    pub pc: usize,
    pub action: Action,
    /// Event consumed before the action ran.
    pub consumed: Option<EventKind>,
    /// The thread was created from a pending event in this step.
    pub materialized: bool,
    /// Event sent by the action.
    pub emitted: Option<EventKind>,
    /// The thread ended in this step.
    pub terminated: bool,
}

/// Runtime failure with the location it occurred at.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ExecError {
    pub time: Time,
    pub oid: ObjectId,
    pub tid: ThreadId,
    pub pc: Option<usize>,
    #[source]
    pub fault: Fault,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {}: object {}, thread {}",
            self.time, self.oid, self.tid
        )?;
        if let Some(pc) = self.pc {
            write!(f, ", pc {pc}")?;
        }
        write!(f, ": {}", self.fault)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("runtime error: {0}")]
    Exec(#[from] ExecError),
}

/// Checks a setup against `model`.
pub fn validate_setup(model: &Model, setup: &Setup) -> Result<(), ModelError> {
    let err = |i: usize, p: ModelProblem| Err(ModelError::new(Site::Setup(i), p));
    let mut classes: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, e) in setup.iter().enumerate() {
        if classes.insert(&e.name, &e.class).is_some() {
            return err(i, ModelProblem::DuplicateObject(e.name.clone()));
        }
        if model.class(&e.class).is_none() {
            return err(i, ModelProblem::UnknownClass(e.class.clone()));
        }
    }
    for (i, e) in setup.iter().enumerate() {
        let attrs = model.effective_attributes(&e.class)?;
        for l in &e.links {
            let Some(target) = classes.get(l.as_str()) else {
                return err(i, ModelProblem::UnknownLink(l.clone()));
            };
            let found = TypeRef::Class(target.to_string());
            if let Some(a) = attrs.iter().find(|a| a.name == *l) {
                if !model.type_conforms(&found, &a.ty) {
                    return err(
                        i,
                        ModelProblem::TypeMismatch {
                            expected: a.ty.to_string(),
                            found: found.to_string(),
                        },
                    );
                }
            }
        }
        if let OKind::Active { op, prio } = &e.kind {
            if !op.params.is_empty() {
                return err(i, ModelProblem::ActiveWithParams(op.clone()));
            }
            if *prio < 0 {
                return err(i, ModelProblem::NegativePriority(*prio));
            }
            if model.resolve(&e.class, op).is_none() {
                return err(
                    i,
                    ModelProblem::MethodNotFound {
                        class: e.class.clone(),
                        op: op.clone(),
                    },
                );
            }
        }
    }
    Ok(())
}

/// Builds the initial state: one object per entry in list order, then the
/// links, then one ready thread per active entry.
pub fn initial_state(cfg: &Config, setup: &Setup) -> Result<SimState, VmError> {
    cfg.model().validate()?;
    validate_setup(cfg.model(), setup)?;
    let model = cfg.model();
    let mut s = SimState::empty();
    s.now = -1;
    let mut ids = BTreeMap::new();
    for e in setup {
        let oid = s
            .alloc_object(model, &e.class)
            .expect("setup classes are validated");
        ids.insert(e.name.as_str(), oid);
    }
    for e in setup {
        let oid = ids[e.name.as_str()];
        for l in &e.links {
            s.set_link(oid, l, ids[l.as_str()]);
        }
    }
    for e in setup {
        if let OKind::Active { op, prio } = &e.kind {
            let oid = ids[e.name.as_str()];
            let tid = s.cs.fresh_tid();
            let frame = Frame::new(oid, op.clone(), Record::new(), None);
            s.spawn(oid, Thread::new(tid, *prio, frame, -1))
                .expect("fresh thread on an allocated object");
        }
    }
    Ok(s)
}

/// Offers of every object, in ascending object order.
pub fn collect_runnables(sel: &dyn RunnablesSel, s: &SimState) -> Vec<Candidate> {
    s.ds.ids()
        .flat_map(|oid| {
            sel.select(s, oid).into_iter().map(move |o| Candidate {
                oid,
                tid: o.tid,
                prio: o.prio,
                since: o.since,
            })
        })
        .collect()
}

/// Attaches each candidate's last execution time; entries that never ran
/// use the step since which they have been runnable.
pub fn add_last_exec_info(times: &TimesMap, rs: &[Candidate]) -> Vec<RunnableEntry> {
    rs.iter()
        .map(|c| RunnableEntry {
            oid: c.oid,
            tid: c.tid,
            prio: c.prio,
            last_exec: times.get(&c.tid).copied().unwrap_or(c.since),
        })
        .collect()
}

/// Result of [`consume_event`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Consumed {
    pub kind: Option<EventKind>,
    pub materialized: bool,
}

/// Takes the event (if any) that thread `tid` of `o` is scheduled for and
/// prepares its context: a pending call or signal becomes a new thread; a
/// return value resumes a waiting thread.
pub fn consume_event(
    s: &mut SimState,
    cfg: &Config,
    o: ObjectId,
    tid: ThreadId,
) -> Result<Consumed, Fault> {
    match s.cs.thread(o, tid).map(|th| th.status) {
        None => {
            let e =
                s.es.take_matching(o, |e| {
                    e.thread == tid && matches!(e.kind(), EventKind::Call | EventKind::Signal)
                })
                .ok_or_else(|| {
                    Fault::Internal(format!(
                        "thread {tid} scheduled at object {o} has no pending event"
                    ))
                })?;
            let kind = e.kind();
            let (op, args, caller, prio) = match e.msg.payload {
                Payload::Call {
                    op,
                    args,
                    result_local,
                    prio,
                } => (
                    op,
                    args,
                    Some(Caller {
                        oid: e.msg.sender,
                        tid: e.msg.sender_thread,
                        result_local,
                    }),
                    prio,
                ),
                Payload::Signal { op, args, prio } => (op, args, None, prio),
                Payload::Return { .. } => unreachable!("filtered above"),
            };
            let method =
                cfg.dispatcher()
                    .dispatch(cfg.subclass_rel(), cfg.meth_map(), &s.ds, o, &op)?;
            if method.params.len() != args.len() {
                return Err(Fault::Internal(format!("argument count mismatch for {op}")));
            }
            let params: Record = method
                .params
                .iter()
                .map(|(n, _)| n.clone())
                .zip(args)
                .collect();
            let frame = Frame::new(o, op, params, caller);
            s.spawn(o, Thread::new(tid, prio, frame, s.now))?;
            Ok(Consumed {
                kind: Some(kind),
                materialized: true,
            })
        }
        Some(ThreadStatus::Waiting) => {
            let Some(e) =
                s.es.take_matching(o, |e| e.thread == tid && e.kind() == EventKind::Return)
            else {
                return Ok(Consumed::default());
            };
            let Payload::Return {
                value,
                result_local,
            } = e.msg.payload
            else {
                unreachable!("filtered above")
            };
            let th = s.cs.thread_mut(o, tid).expect("status read above");
            let frame = th
                .top_mut()
                .ok_or_else(|| Fault::Internal(format!("thread {tid} has no frame")))?;
            match frame.locals.get(&result_local) {
                Some(old) if !old.same_kind(&value) => {
                    return Err(Fault::mismatch(crate::universe::describe(old), &value))
                }
                _ => frame.locals.upsert(result_local, value),
            }
            th.status = ThreadStatus::Ready;
            Ok(Consumed {
                kind: Some(EventKind::Return),
                materialized: false,
            })
        }
        Some(_) => Ok(Consumed::default()),
    }
}

/// One atomic step for thread `tid` of object `o`: consume its event, look
/// up the method of the top frame and interpret the action at its pc.
pub fn exec(
    o: ObjectId,
    tid: ThreadId,
    s: &mut SimState,
    cfg: &Config,
) -> Result<StepRecord, ExecError> {
    let time = s.now;
    let fail = |pc: Option<usize>| {
        move |fault: Fault| ExecError {
            time,
            oid: o,
            tid,
            pc,
            fault,
        }
    };
    let consumed = consume_event(s, cfg, o, tid).map_err(fail(None))?;
    let thread =
        s.cs.thread(o, tid)
            .ok_or_else(|| Fault::Internal("scheduled thread does not exist".into()))
            .map_err(fail(None))?;
    if thread.status != ThreadStatus::Ready {
        return Err(fail(None)(Fault::Internal(
            "scheduled thread is still waiting".into(),
        )));
    }
    let frame = thread
        .top()
        .ok_or_else(|| Fault::Internal("thread has no frame".into()))
        .map_err(fail(None))?;
    let (op, pc) = (frame.op.clone(), frame.pc);
    let method = cfg
        .dispatcher()
        .dispatch(cfg.subclass_rel(), cfg.meth_map(), &s.ds, o, &op)
        .map_err(fail(Some(pc)))?;
    let action = method
        .body
        .get(pc)
        .ok_or(Fault::FellOffEnd {
            pc,
            len: method.body.len(),
        })
        .map_err(fail(Some(pc)))?;
    let effect = interpret(action, s, o, tid, cfg).map_err(fail(Some(pc)))?;
    Ok(StepRecord {
        time,
        oid: o,
        tid,
        pc,
        action: action.clone(),
        consumed: consumed.kind,
        materialized: consumed.materialized,
        emitted: effect.emitted,
        terminated: effect.terminated,
    })
}

type Observer<'a> = Box<dyn FnMut(&StepRecord) + 'a>;

/// Drives a simulation. Holds the configuration, an optional step limit
/// and an optional per-step observer.
pub struct Engine<'a> {
    cfg: &'a Config,
    max_steps: Option<u64>,
    observer: Option<Observer<'a>>,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a Config) -> Self {
        Engine {
            cfg,
            max_steps: None,
            observer: None,
        }
    }

    pub fn max_steps(mut self, limit: Option<u64>) -> Self {
        self.max_steps = limit;
        self
    }

    /// Installs a callback invoked once per executed step.
    pub fn observe(mut self, f: impl FnMut(&StepRecord) + 'a) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    pub fn run_main(&mut self, setup: &Setup) -> Result<RunResult, VmError> {
        let state = initial_state(self.cfg, setup)?;
        self.run(TimesMap::new(), 0, state)
    }

    /// The main loop: collect runnables, enrich them with execution
    /// times, schedule one, execute it, repeat until nothing is runnable.
    pub fn run(
        &mut self,
        mut times: TimesMap,
        mut t: Time,
        mut state: SimState,
    ) -> Result<RunResult, VmError> {
        let cfg = self.cfg;
        let (selector, scheduler) = cfg.scheduler();
        let start = t;
        loop {
            let runnables = collect_runnables(selector, &state);
            if runnables.is_empty() {
                let waiting: Vec<_> = state.cs.iter().map(|(o, th)| (o, th.id)).collect();
                let halt = if waiting.is_empty() {
                    Halt::AllDone
                } else {
                    Halt::Blocked(waiting)
                };
                return Ok(finish(state, t, halt));
            }
            if self.max_steps.is_some_and(|m| (t - start) as u64 >= m) {
                return Ok(finish(state, t, Halt::StepLimit));
            }
            let entries = add_last_exec_info(&times, &runnables);
            let (oid, tid) = scheduler.schedule(t, &entries).map_err(|fault| ExecError {
                time: t,
                oid: ObjectId(0),
                tid: ThreadId(0),
                pc: None,
                fault,
            })?;
            if !runnables.iter().any(|c| c.oid == oid && c.tid == tid) {
                return Err(ExecError {
                    time: t,
                    oid,
                    tid,
                    pc: None,
                    fault: Fault::Internal("scheduler picked an entry that was not offered".into()),
                }
                .into());
            }
            state.now = t;
            let record = exec(oid, tid, &mut state, cfg)?;
            debug_assert_eq!(state.validate(cfg.model()), Ok(()));
            if let Some(f) = self.observer.as_mut() {
                f(&record);
            }
            times.insert(tid, t);
            t += 1;
        }
    }
}

fn finish(final_state: SimState, t: Time, halt: Halt) -> RunResult {
    RunResult {
        final_state,
        time: t.max(0) as u64,
        halt,
    }
}

/// Builds the initial state for `setup` and runs it to completion.
pub fn run_main(cfg: &Config, setup: &Setup) -> Result<RunResult, VmError> {
    Engine::new(cfg).run_main(setup)
}

/// Runs from an explicit state, time and execution-time map.
pub fn run(times: TimesMap, t: Time, cfg: &Config, state: SimState) -> Result<RunResult, VmError> {
    Engine::new(cfg).run(times, t, state)
}

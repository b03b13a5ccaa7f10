//! Semantic variation points as exchangeable strategies, and the
//! [`Config`] that bundles a selection of them with the system description.
//!
//! Scheduling happens in two stages. A [`RunnablesSel`] inspects one
//! object and offers the threads (or not yet materialized event handlers)
//! that could run next; a [`Scheduler`] then picks one entry out of the
//! offers of all objects.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::state::{
    DataStore, Event, EventKind, EventStore, Fault, SimState, ThreadId, ThreadStatus, Time,
};
use crate::universe::{super_chain, MethMap, MethodDef, Model, ObjectId, OpSig, SubclassRel};

/// One thread an object offers for execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Offer {
    pub tid: ThreadId,
    pub prio: i64,
    /// Step since which the entry has been runnable without executing:
    /// thread creation, or the send time of a pending event.
    pub since: Time,
}

/// A runnable entry enriched with its last execution time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunnableEntry {
    pub oid: ObjectId,
    pub tid: ThreadId,
    pub prio: i64,
    pub last_exec: Time,
}

impl RunnableEntry {
    pub fn new(oid: u32, tid: u32, prio: i64, last_exec: Time) -> Self {
        RunnableEntry {
            oid: ObjectId(oid),
            tid: ThreadId(tid),
            prio,
            last_exec,
        }
    }
}

pub trait RunnablesSel: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, s: &SimState, o: ObjectId) -> Vec<Offer>;
}

pub trait Scheduler: Send + Sync {
    fn name(&self) -> &'static str;
    fn schedule(&self, t: Time, rs: &[RunnableEntry]) -> Result<(ObjectId, ThreadId), Fault>;
}

pub trait MethodDispatcher: Send + Sync {
    fn name(&self) -> &'static str;
    fn dispatch<'m>(
        &self,
        scl: &SubclassRel,
        mm: &'m MethMap,
        ds: &DataStore,
        o: ObjectId,
        op: &OpSig,
    ) -> Result<&'m MethodDef, Fault>;
}

pub trait Medium: Send + Sync {
    fn name(&self) -> &'static str;
    fn deliver(&self, es: &mut EventStore, e: Event) -> Result<(), Fault>;
}

fn has_return_for(s: &SimState, o: ObjectId, tid: ThreadId) -> bool {
    s.es.queue(o)
        .any(|e| e.kind() == EventKind::Return && e.thread == tid)
}

fn is_handler_event(e: &Event) -> bool {
    matches!(e.kind(), EventKind::Call | EventKind::Signal)
}

fn handler_offer(e: &Event) -> Offer {
    Offer {
        tid: e.thread,
        prio: e.prio().unwrap_or(0),
        since: e.sent_at,
    }
}

/// Ready threads, plus waiting threads whose return value has arrived.
fn thread_offers(s: &SimState, o: ObjectId) -> Vec<Offer> {
    s.cs.threads_of(o)
        .filter(|th| match th.status {
            ThreadStatus::Ready => true,
            ThreadStatus::Waiting => has_return_for(s, o, th.id),
            ThreadStatus::Terminated => false,
        })
        .map(|th| Offer {
            tid: th.id,
            prio: th.base_prio,
            since: th.created_at,
        })
        .collect()
}

/// Run-to-completion: a new event is only picked up by an object that has
/// no live thread at all. Blocked callers are still resumed when their
/// return value arrives.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunToCompletion;

impl RunnablesSel for RunToCompletion {
    fn name(&self) -> &'static str {
        "rtc"
    }

    fn select(&self, s: &SimState, o: ObjectId) -> Vec<Offer> {
        let mut offers = thread_offers(s, o);
        if s.cs.live_count(o) == 0 {
            if let Some(e) = s.es.queue(o).find(|e| is_handler_event(e)) {
                offers.push(handler_offer(e));
            }
        }
        offers
    }
}

/// Concurrent: every buffered call or signal is offered right away.
#[derive(Clone, Copy, Debug, Default)]
pub struct Concurrent;

impl RunnablesSel for Concurrent {
    fn name(&self) -> &'static str {
        "conc"
    }

    fn select(&self, s: &SimState, o: ObjectId) -> Vec<Offer> {
        let mut offers = thread_offers(s, o);
        offers.extend(
            s.es.queue(o)
                .filter(|e| is_handler_event(e))
                .map(handler_offer),
        );
        offers
    }
}

fn empty_runnables() -> Fault {
    Fault::Internal("scheduler called with no runnable entries".into())
}

/// Round robin as least-recently-executed selection.
#[derive(Clone, Copy, Debug, Default)]
pub struct RoundRobin;

impl Scheduler for RoundRobin {
    fn name(&self) -> &'static str {
        "rr"
    }

    fn schedule(&self, _t: Time, rs: &[RunnableEntry]) -> Result<(ObjectId, ThreadId), Fault> {
        rs.iter()
            .min_by_key(|e| (e.last_exec, e.oid, e.tid))
            .map(|e| (e.oid, e.tid))
            .ok_or_else(empty_runnables)
    }
}

/// Priority scheduling with aging: effective priority is the base priority
/// plus the number of steps since the entry last executed.
#[derive(Clone, Copy, Debug, Default)]
pub struct Priority;

impl Priority {
    pub fn effective(t: Time, e: &RunnableEntry) -> i64 {
        e.prio + (t - e.last_exec)
    }
}

impl Scheduler for Priority {
    fn name(&self) -> &'static str {
        "prio"
    }

    fn schedule(&self, t: Time, rs: &[RunnableEntry]) -> Result<(ObjectId, ThreadId), Fault> {
        rs.iter()
            .min_by_key(|e| {
                (
                    std::cmp::Reverse(Priority::effective(t, e)),
                    e.last_exec,
                    e.oid,
                    e.tid,
                )
            })
            .map(|e| (e.oid, e.tid))
            .ok_or_else(empty_runnables)
    }
}

/// Single-inheritance dispatch: the object's class first, then up the
/// superclass chain.
#[derive(Clone, Copy, Debug, Default)]
pub struct SingleDispatch;

impl MethodDispatcher for SingleDispatch {
    fn name(&self) -> &'static str {
        "single"
    }

    fn dispatch<'m>(
        &self,
        scl: &SubclassRel,
        mm: &'m MethMap,
        ds: &DataStore,
        o: ObjectId,
        op: &OpSig,
    ) -> Result<&'m MethodDef, Fault> {
        let class = ds.class_of(o).ok_or(Fault::DanglingReference(o))?;
        let chain = super_chain(class, scl).map_err(|e| Fault::Internal(e.to_string()))?;
        chain
            .iter()
            .find_map(|c| mm.lookup(c, op))
            .ok_or_else(|| Fault::MethodNotFound {
                class: class.to_string(),
                op: op.clone(),
            })
    }
}

/// Lossless, order-preserving, zero-latency delivery.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reliable;

impl Medium for Reliable {
    fn name(&self) -> &'static str {
        "reliable"
    }

    fn deliver(&self, es: &mut EventStore, e: Event) -> Result<(), Fault> {
        es.enqueue(e)
    }
}

macro_rules! named_choice {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => {
                        let names: Vec<&str> = $name::ALL.iter().map(|v| v.as_str()).collect();
                        Err(format!("unknown choice `{other}` (expected one of: {})", names.join(", ")))
                    }
                }
            }
        }
    };
}

named_choice!(RunnablesKind { Rtc => "rtc", Conc => "conc" });
named_choice!(SchedulerKind { Rr => "rr", Prio => "prio" });
named_choice!(DispatchKind { Single => "single" });
named_choice!(MediumKind { Reliable => "reliable" });

/// Named strategy choices, as written in model files and on the command
/// line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Selections {
    pub runnables: RunnablesKind,
    pub scheduler: SchedulerKind,
    pub dispatch: DispatchKind,
    pub medium: MediumKind,
}

impl Default for Selections {
    fn default() -> Self {
        Selections {
            runnables: RunnablesKind::Conc,
            scheduler: SchedulerKind::Rr,
            dispatch: DispatchKind::Single,
            medium: MediumKind::Reliable,
        }
    }
}

impl Selections {
    pub fn new(runnables: RunnablesKind, scheduler: SchedulerKind) -> Self {
        Selections {
            runnables,
            scheduler,
            ..Selections::default()
        }
    }
}

/// Strategy selections plus the system description they operate on.
/// Immutable once built.
#[derive(Clone)]
pub struct Config {
    model: Model,
    runnables: Arc<dyn RunnablesSel>,
    scheduler: Arc<dyn Scheduler>,
    dispatcher: Arc<dyn MethodDispatcher>,
    medium: Arc<dyn Medium>,
}

impl Config {
    pub fn new(model: Model, sel: Selections) -> Self {
        let runnables: Arc<dyn RunnablesSel> = match sel.runnables {
            RunnablesKind::Rtc => Arc::new(RunToCompletion),
            RunnablesKind::Conc => Arc::new(Concurrent),
        };
        let scheduler: Arc<dyn Scheduler> = match sel.scheduler {
            SchedulerKind::Rr => Arc::new(RoundRobin),
            SchedulerKind::Prio => Arc::new(Priority),
        };
        let dispatcher: Arc<dyn MethodDispatcher> = match sel.dispatch {
            DispatchKind::Single => Arc::new(SingleDispatch),
        };
        let medium: Arc<dyn Medium> = match sel.medium {
            MediumKind::Reliable => Arc::new(Reliable),
        };
        Config::with_strategies(model, runnables, scheduler, dispatcher, medium)
    }

    /// Builds a configuration from arbitrary strategy implementations.
    pub fn with_strategies(
        model: Model,
        runnables: Arc<dyn RunnablesSel>,
        scheduler: Arc<dyn Scheduler>,
        dispatcher: Arc<dyn MethodDispatcher>,
        medium: Arc<dyn Medium>,
    ) -> Self {
        Config {
            model,
            runnables,
            scheduler,
            dispatcher,
            medium,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn dispatcher(&self) -> &dyn MethodDispatcher {
        self.dispatcher.as_ref()
    }

    pub fn scheduler(&self) -> (&dyn RunnablesSel, &dyn Scheduler) {
        (self.runnables.as_ref(), self.scheduler.as_ref())
    }

    pub fn medium(&self) -> &dyn Medium {
        self.medium.as_ref()
    }

    pub fn subclass_rel(&self) -> &SubclassRel {
        &self.model.subclass
    }

    pub fn meth_map(&self) -> &MethMap {
        &self.model.methods
    }
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Config")
            .field("runnables", &self.runnables.name())
            .field("scheduler", &self.scheduler.name())
            .field("dispatcher", &self.dispatcher.name())
            .field("medium", &self.medium.name())
            .finish_non_exhaustive()
    }
}

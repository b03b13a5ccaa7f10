//! The simulation state: data store, control store and event store, plus
//! the primitive operations the interpreter and the engine build on.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::universe::{describe, value_conforms, Model, ObjectId, OpSig, Record, TypeRef, Value};

/// Simulation time, counted in executed steps. Threads created by the
/// initial setup are stamped `-1`, i.e. before the first step.
pub type Time = i64;

/// Globally unique thread identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ThreadId(pub u32);

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Runtime failure raised by a store operation, a strategy or the
/// interpreter.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("type mismatch: expected {expected}, found {found}")]
    TypeMismatch { expected: String, found: String },
    #[error("unknown local `{0}`")]
    UnknownLocal(String),
    #[error("local `{0}` already exists")]
    DuplicateLocal(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("object {oid} has no attribute `{name}`")]
    AttributeNotFound { oid: ObjectId, name: String },
    #[error("null reference")]
    NullTarget,
    #[error("dangling reference to object {0}")]
    DanglingReference(ObjectId),
    #[error("no method implements {op} for class `{class}`")]
    MethodNotFound { class: String, op: OpSig },
    #[error("cannot deliver to unknown object {0}")]
    Delivery(ObjectId),
    #[error("fell off the end of the method body (pc {pc}, length {len})")]
    FellOffEnd { pc: usize, len: usize },
    #[error("arithmetic overflow")]
    Overflow,
    #[error("internal error: {0}")]
    Internal(String),
}

impl Fault {
    pub(crate) fn mismatch(expected: impl fmt::Display, found: &Value) -> Self {
        Fault::TypeMismatch {
            expected: expected.to_string(),
            found: describe(found),
        }
    }
}

/// One allocated object: its class tag and attribute record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ObjectEntry {
    pub class: String,
    pub attrs: Record,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DataStore {
    objects: BTreeMap<ObjectId, ObjectEntry>,
}

impl DataStore {
    pub fn class_of(&self, o: ObjectId) -> Option<&str> {
        self.objects.get(&o).map(|e| e.class.as_str())
    }

    pub fn get(&self, o: ObjectId) -> Option<&ObjectEntry> {
        self.objects.get(&o)
    }

    pub fn contains(&self, o: ObjectId) -> bool {
        self.objects.contains_key(&o)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.objects.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, &ObjectEntry)> {
        self.objects.iter().map(|(o, e)| (*o, e))
    }
}

/// Who is waiting for the result of a frame: the calling object and
/// thread, and the local that receives the returned value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Caller {
    pub oid: ObjectId,
    pub tid: ThreadId,
    pub result_local: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Frame {
    pub self_oid: ObjectId,
    pub op: OpSig,
    pub params: Record,
    pub locals: Record,
    pub pc: usize,
    /// `None` for frames nobody waits on (setup threads, signal handlers).
    pub caller: Option<Caller>,
}

impl Frame {
    pub fn new(self_oid: ObjectId, op: OpSig, params: Record, caller: Option<Caller>) -> Self {
        Frame {
            self_oid,
            op,
            params,
            locals: Record::new(),
            pc: 0,
            caller,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThreadStatus {
    Ready,
    /// Blocked on a synchronous call until its return event is consumed.
    Waiting,
    Terminated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Thread {
    pub id: ThreadId,
    pub base_prio: i64,
    pub status: ThreadStatus,
    pub frames: Vec<Frame>,
    /// Step at which the thread became runnable.
    pub created_at: Time,
}

impl Thread {
    pub fn new(id: ThreadId, base_prio: i64, frame: Frame, created_at: Time) -> Self {
        Thread {
            id,
            base_prio,
            status: ThreadStatus::Ready,
            frames: vec![frame],
            created_at,
        }
    }

    pub fn top(&self) -> Option<&Frame> {
        self.frames.last()
    }

    pub fn top_mut(&mut self) -> Option<&mut Frame> {
        self.frames.last_mut()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControlStore {
    threads: BTreeMap<ObjectId, BTreeMap<ThreadId, Thread>>,
    next_tid: u32,
}

impl ControlStore {
    /// Reserves a fresh, never reused thread id.
    pub fn fresh_tid(&mut self) -> ThreadId {
        let t = ThreadId(self.next_tid);
        self.next_tid += 1;
        t
    }

    pub fn threads_of(&self, o: ObjectId) -> impl Iterator<Item = &Thread> {
        self.threads.get(&o).into_iter().flat_map(|m| m.values())
    }

    pub fn thread(&self, o: ObjectId, t: ThreadId) -> Option<&Thread> {
        self.threads.get(&o).and_then(|m| m.get(&t))
    }

    pub fn thread_mut(&mut self, o: ObjectId, t: ThreadId) -> Option<&mut Thread> {
        self.threads.get_mut(&o).and_then(|m| m.get_mut(&t))
    }

    pub fn live_count(&self, o: ObjectId) -> usize {
        self.threads.get(&o).map_or(0, BTreeMap::len)
    }

    /// All threads, ascending by (object, thread).
    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, &Thread)> {
        self.threads
            .iter()
            .flat_map(|(o, m)| m.values().map(move |t| (*o, t)))
    }

    pub fn is_empty(&self) -> bool {
        self.threads.values().all(BTreeMap::is_empty)
    }
}

/// What a message carries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Payload {
    Call {
        op: OpSig,
        args: Vec<Value>,
        result_local: String,
        prio: i64,
    },
    Return {
        value: Value,
        result_local: String,
    },
    Signal {
        op: OpSig,
        args: Vec<Value>,
        prio: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Message {
    pub sender: ObjectId,
    pub sender_thread: ThreadId,
    pub receiver: ObjectId,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    Call,
    Return,
    Signal,
}

/// An event in flight or buffered at its receiver.
///
/// `thread` is the receiver-side thread the event is for: the handler
/// thread id reserved when a call or signal is sent, or the waiting caller
/// thread for a return.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub seq: u64,
    pub sent_at: Time,
    pub thread: ThreadId,
    pub msg: Message,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self.msg.payload {
            Payload::Call { .. } => EventKind::Call,
            Payload::Return { .. } => EventKind::Return,
            Payload::Signal { .. } => EventKind::Signal,
        }
    }

    pub fn receiver(&self) -> ObjectId {
        self.msg.receiver
    }

    /// Priority carried by a call or signal; `None` for returns.
    pub fn prio(&self) -> Option<i64> {
        match self.msg.payload {
            Payload::Call { prio, .. } | Payload::Signal { prio, .. } => Some(prio),
            Payload::Return { .. } => None,
        }
    }
}

/// Per-object FIFO buffers of incoming events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventStore {
    queues: BTreeMap<ObjectId, VecDeque<Event>>,
    next_seq: u64,
}

impl EventStore {
    pub fn register(&mut self, o: ObjectId) {
        self.queues.entry(o).or_default();
    }

    pub fn next_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Appends `e` to its receiver's queue.
    pub fn enqueue(&mut self, e: Event) -> Result<(), Fault> {
        match self.queues.get_mut(&e.receiver()) {
            Some(q) => {
                q.push_back(e);
                Ok(())
            }
            None => Err(Fault::Delivery(e.receiver())),
        }
    }

    /// Removes and returns the oldest event of `o` satisfying `pred`.
    pub fn take_matching(&mut self, o: ObjectId, pred: impl Fn(&Event) -> bool) -> Option<Event> {
        let q = self.queues.get_mut(&o)?;
        let i = q.iter().position(pred)?;
        q.remove(i)
    }

    pub fn queue(&self, o: ObjectId) -> impl Iterator<Item = &Event> {
        self.queues.get(&o).into_iter().flatten()
    }

    pub fn total(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.queues.keys().copied()
    }
}

/// The complete simulation state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimState {
    pub ds: DataStore,
    pub cs: ControlStore,
    pub es: EventStore,
    /// Current step; stamps thread creation and event send times.
    pub now: Time,
}

impl SimState {
    pub fn empty() -> Self {
        SimState::default()
    }

    /// Allocates an instance of `class` with its declared initial
    /// attribute values. Ids are never reused.
    pub fn alloc_object(&mut self, model: &Model, class: &str) -> Result<ObjectId, Fault> {
        let attrs: Record = model
            .effective_attributes(class)
            .map_err(|e| Fault::Internal(e.to_string()))?
            .into_iter()
            .map(|a| (a.name.clone(), a.init.clone()))
            .collect();
        let oid = ObjectId(self.ds.objects.len() as u32);
        self.ds.objects.insert(
            oid,
            ObjectEntry {
                class: class.to_string(),
                attrs,
            },
        );
        self.cs.threads.insert(oid, BTreeMap::new());
        self.es.register(oid);
        Ok(oid)
    }

    pub fn read_attr(&self, o: ObjectId, name: &str) -> Result<Value, Fault> {
        let entry = self.ds.objects.get(&o).ok_or(Fault::DanglingReference(o))?;
        entry
            .attrs
            .get(name)
            .cloned()
            .ok_or_else(|| Fault::AttributeNotFound {
                oid: o,
                name: name.to_string(),
            })
    }

    /// Overwrites one attribute. Declared attributes are checked against
    /// their declared type; link attributes added by the setup keep the
    /// kind of their current value.
    pub fn write_attr(
        &mut self,
        model: &Model,
        o: ObjectId,
        name: &str,
        v: Value,
    ) -> Result<(), Fault> {
        let entry = self.ds.objects.get(&o).ok_or(Fault::DanglingReference(o))?;
        let current = entry
            .attrs
            .get(name)
            .ok_or_else(|| Fault::AttributeNotFound {
                oid: o,
                name: name.to_string(),
            })?;
        if let Value::Oid(target) = &v {
            if !self.ds.contains(*target) {
                return Err(Fault::DanglingReference(*target));
            }
        }
        match model_attr_type(model, &entry.class, name) {
            Some(ty) if !value_conforms(&v, &ty, model, &self.ds) => {
                return Err(Fault::mismatch(&ty, &v))
            }
            None if !current.same_kind(&v) => return Err(Fault::mismatch(describe(current), &v)),
            _ => {}
        }
        let entry = self.ds.objects.get_mut(&o).expect("checked above");
        if let Some(slot) = entry.attrs.get_mut(name) {
            *slot = v;
        }
        Ok(())
    }

    /// Adds or overwrites an attribute without type checks. Used by the
    /// setup to install links.
    pub(crate) fn set_link(&mut self, o: ObjectId, name: &str, target: ObjectId) {
        if let Some(e) = self.ds.objects.get_mut(&o) {
            e.attrs.upsert(name, Value::Oid(target));
        }
    }

    pub fn spawn(&mut self, o: ObjectId, thread: Thread) -> Result<(), Fault> {
        let m = self
            .cs
            .threads
            .get_mut(&o)
            .ok_or(Fault::DanglingReference(o))?;
        if m.contains_key(&thread.id) {
            return Err(Fault::Internal(format!(
                "thread {} already exists",
                thread.id
            )));
        }
        m.insert(thread.id, thread);
        Ok(())
    }

    pub fn push_frame(&mut self, o: ObjectId, t: ThreadId, f: Frame) -> Result<(), Fault> {
        let th = self
            .cs
            .thread_mut(o, t)
            .ok_or_else(|| Fault::Internal(format!("no thread {t} at object {o}")))?;
        th.frames.push(f);
        Ok(())
    }

    /// Pops the top frame. A thread whose stack becomes empty is
    /// terminated and removed from the control store.
    pub fn pop_frame(&mut self, o: ObjectId, t: ThreadId) -> Result<Frame, Fault> {
        let missing = || Fault::Internal(format!("no frame to pop for thread {t} at object {o}"));
        let m = self.cs.threads.get_mut(&o).ok_or_else(missing)?;
        let th = m.get_mut(&t).ok_or_else(missing)?;
        let frame = th.frames.pop().ok_or_else(missing)?;
        if th.frames.is_empty() {
            th.status = ThreadStatus::Terminated;
            m.remove(&t);
        }
        Ok(frame)
    }

    /// Cross-store consistency check.
    pub fn validate(&self, model: &Model) -> Result<(), String> {
        for (oid, entry) in &self.ds.objects {
            let attrs = model
                .effective_attributes(&entry.class)
                .map_err(|e| e.to_string())?;
            let names: Vec<&str> = entry.attrs.iter().map(|(n, _)| n).collect();
            for (i, a) in attrs.iter().enumerate() {
                if names.get(i) != Some(&a.name.as_str()) {
                    return Err(format!("object {oid}: attribute layout differs from class"));
                }
            }
            for (name, v) in entry.attrs.iter() {
                if let Value::Oid(t) = v {
                    if !self.ds.contains(*t) {
                        return Err(format!("object {oid}.{name}: dangling reference to {t}"));
                    }
                }
            }
        }
        for (oid, m) in &self.cs.threads {
            if !self.ds.contains(*oid) {
                return Err(format!("control store has unknown object {oid}"));
            }
            for th in m.values() {
                if th.frames.is_empty() || th.status == ThreadStatus::Terminated {
                    return Err(format!(
                        "thread {} at {oid} should have been removed",
                        th.id
                    ));
                }
                if th.frames.iter().any(|f| f.self_oid != *oid) {
                    return Err(format!("thread {} at {oid} has a foreign frame", th.id));
                }
                if th.id.0 >= self.cs.next_tid {
                    return Err(format!("thread id {} was never reserved", th.id));
                }
            }
        }
        for (oid, q) in &self.es.queues {
            if !self.ds.contains(*oid) {
                return Err(format!("event store has unknown object {oid}"));
            }
            if q.iter().zip(q.iter().skip(1)).any(|(a, b)| a.seq >= b.seq) {
                return Err(format!("queue of {oid} is not in send order"));
            }
            if q.iter().any(|e| e.receiver() != *oid) {
                return Err(format!("queue of {oid} holds a foreign event"));
            }
        }
        Ok(())
    }
}

fn model_attr_type(model: &Model, class: &str, name: &str) -> Option<TypeRef> {
    model
        .effective_attributes(class)
        .ok()?
        .into_iter()
        .find(|a| a.name == name)
        .map(|a| a.ty.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::universe::ClassDef;

    fn buffer_model() -> Model {
        let mut m = Model::new();
        m.add_class(ClassDef::new("Buffer").with_attr("data", TypeRef::Int, Value::Int(-1)));
        m.add_class(
            ClassDef::new("Consumer")
                .with_attr("data", TypeRef::Int, Value::Int(0))
                .with_attr("b", TypeRef::class("Buffer"), Value::Null),
        );
        m
    }

    fn call_event(es: &mut EventStore, to: u32, thread: u32) -> Event {
        Event {
            seq: es.next_seq(),
            sent_at: 0,
            thread: ThreadId(thread),
            msg: Message {
                sender: ObjectId(0),
                sender_thread: ThreadId(0),
                receiver: ObjectId(to),
                payload: Payload::Call {
                    op: OpSig::new("get", vec![], TypeRef::Int),
                    args: vec![],
                    result_local: "v".into(),
                    prio: 1,
                },
            },
        }
    }

    fn return_event(es: &mut EventStore, to: u32, thread: u32) -> Event {
        Event {
            seq: es.next_seq(),
            sent_at: 0,
            thread: ThreadId(thread),
            msg: Message {
                sender: ObjectId(1),
                sender_thread: ThreadId(9),
                receiver: ObjectId(to),
                payload: Payload::Return {
                    value: Value::Void,
                    result_local: "r".into(),
                },
            },
        }
    }

    #[test]
    fn empty_state_and_sequential_ids() {
        let m = buffer_model();
        let mut s = SimState::empty();
        assert!(s.ds.is_empty() && s.cs.is_empty() && s.es.total() == 0);
        let ids: Vec<_> = (0..4)
            .map(|_| s.alloc_object(&m, "Buffer").unwrap())
            .collect();
        assert_eq!(ids, [ObjectId(0), ObjectId(1), ObjectId(2), ObjectId(3)]);
        assert_eq!(s.read_attr(ObjectId(0), "data").unwrap(), Value::Int(-1));
        s.validate(&m).unwrap();
    }

    #[test]
    fn attribute_read_write() {
        let m = buffer_model();
        let mut s = SimState::empty();
        let b = s.alloc_object(&m, "Buffer").unwrap();
        let c = s.alloc_object(&m, "Consumer").unwrap();
        s.write_attr(&m, b, "data", Value::Int(10)).unwrap();
        assert_eq!(s.read_attr(b, "data").unwrap(), Value::Int(10));
        s.write_attr(&m, b, "data", Value::Int(20)).unwrap();
        assert_eq!(s.read_attr(b, "data").unwrap(), Value::Int(20));
        assert!(matches!(
            s.write_attr(&m, b, "data", Value::Bool(true)),
            Err(Fault::TypeMismatch { .. })
        ));
        assert!(matches!(
            s.read_attr(b, "x"),
            Err(Fault::AttributeNotFound { .. })
        ));
        s.write_attr(&m, c, "b", Value::Oid(b)).unwrap();
        assert_eq!(s.read_attr(c, "b").unwrap(), Value::Oid(b));
        // A consumer is not a buffer.
        assert!(s.write_attr(&m, c, "b", Value::Oid(c)).is_err());
        assert_eq!(s.read_attr(c, "b").unwrap(), Value::Oid(b));
        assert!(matches!(
            s.write_attr(&m, c, "b", Value::Oid(ObjectId(9))),
            Err(Fault::DanglingReference(_))
        ));
        s.validate(&m).unwrap();
    }

    #[test]
    fn fifo_enqueue_and_delivery_errors() {
        let m = buffer_model();
        let mut s = SimState::empty();
        for _ in 0..4 {
            s.alloc_object(&m, "Buffer").unwrap();
        }
        let e1 = call_event(&mut s.es, 3, 10);
        let e2 = call_event(&mut s.es, 3, 11);
        s.es.enqueue(e1.clone()).unwrap();
        s.es.enqueue(e2.clone()).unwrap();
        let q: Vec<_> = s.es.queue(ObjectId(3)).cloned().collect();
        assert_eq!(q, [e1, e2]);
        assert_eq!(s.es.queue(ObjectId(2)).count(), 0);
        let stray = call_event(&mut s.es, 9, 12);
        assert_eq!(s.es.enqueue(stray), Err(Fault::Delivery(ObjectId(9))));
    }

    #[test]
    fn take_matching_removes_oldest_match() {
        let m = buffer_model();
        let mut s = SimState::empty();
        s.alloc_object(&m, "Buffer").unwrap();
        assert_eq!(s.es.take_matching(ObjectId(0), |_| true), None);

        let r1 = return_event(&mut s.es, 0, 4);
        let c1 = call_event(&mut s.es, 0, 5);
        s.es.enqueue(r1.clone()).unwrap();
        s.es.enqueue(c1.clone()).unwrap();
        let got =
            s.es.take_matching(ObjectId(0), |e| e.kind() == EventKind::Return);
        assert_eq!(got, Some(r1));
        assert_eq!(
            s.es.queue(ObjectId(0)).cloned().collect::<Vec<_>>(),
            std::slice::from_ref(&c1)
        );

        let c2 = call_event(&mut s.es, 0, 6);
        s.es.enqueue(c2.clone()).unwrap();
        let got =
            s.es.take_matching(ObjectId(0), |e| e.kind() == EventKind::Call);
        assert_eq!(got, Some(c1));
        assert_eq!(s.es.queue(ObjectId(0)).cloned().collect::<Vec<_>>(), [c2]);
    }

    #[test]
    fn frame_stack() {
        let m = buffer_model();
        let mut s = SimState::empty();
        let o = s.alloc_object(&m, "Buffer").unwrap();
        let op = OpSig::new("run", vec![], TypeRef::Void);
        let f = Frame::new(o, op.clone(), Record::new(), None);
        let t = s.cs.fresh_tid();
        s.spawn(o, Thread::new(t, 1, f.clone(), 0)).unwrap();
        let mut g = f.clone();
        g.pc = 2;
        s.push_frame(o, t, g.clone()).unwrap();
        assert_eq!(s.pop_frame(o, t).unwrap(), g);
        assert_eq!(s.cs.thread(o, t).unwrap().frames.len(), 1);
        assert_eq!(s.pop_frame(o, t).unwrap(), f);
        assert!(s.cs.thread(o, t).is_none());
        assert!(matches!(s.pop_frame(o, t), Err(Fault::Internal(_))));
        s.validate(&m).unwrap();
    }
}

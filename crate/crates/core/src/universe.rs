//! Structural universes of the system model: types, values, classes,
//! operation signatures, methods, the subclass relation and the
//! class → operation → method table.
//!
//! Everything here is a deep embedding. Model-level types and values are
//! plain data and never borrow meaning from the host type system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::actions::{self, Action};
use crate::state::{DataStore, Fault};

/// A model-level type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TypeRef {
    Int,
    Bool,
    Void,
    /// A class type, identified by class name.
    Class(String),
}

impl TypeRef {
    pub fn class(name: impl Into<String>) -> Self {
        TypeRef::Class(name.into())
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => f.write_str("Int"),
            TypeRef::Bool => f.write_str("Bool"),
            TypeRef::Void => f.write_str("Void"),
            TypeRef::Class(name) => f.write_str(name),
        }
    }
}

/// Identifier of an allocated object. Allocated sequentially from 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A model-level value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Void,
    Oid(ObjectId),
    /// The null reference. Distinct from every allocated object id.
    Null,
    Record(Record),
}

impl Value {
    /// Type of a literal that does not need the data store to be typed.
    /// `Null`, object ids and records have no literal type.
    pub fn literal_type(&self) -> Option<TypeRef> {
        match self {
            Value::Int(_) => Some(TypeRef::Int),
            Value::Bool(_) => Some(TypeRef::Bool),
            Value::Void => Some(TypeRef::Void),
            Value::Oid(_) | Value::Null | Value::Record(_) => None,
        }
    }

    /// Whether two values may occupy the same slot. References (null or
    /// not) are interchangeable; everything else must agree on the variant.
    pub fn same_kind(&self, other: &Value) -> bool {
        use Value::*;
        matches!(
            (self, other),
            (Int(_), Int(_))
                | (Bool(_), Bool(_))
                | (Void, Void)
                | (Oid(_) | Null, Oid(_) | Null)
                | (Record(_), Record(_))
        )
    }

    fn describe(&self) -> String {
        match self {
            Value::Int(_) => "Int".into(),
            Value::Bool(_) => "Bool".into(),
            Value::Void => "Void".into(),
            Value::Oid(o) => format!("object {o}"),
            Value::Null => "null".into(),
            Value::Record(_) => "record".into(),
        }
    }
}

impl fmt::Display for Value {
    /// Console notation: `VInt 10`, `VBool True`, `VVoid`, `XOID 3`, `VNull`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "VInt {n}"),
            Value::Bool(true) => f.write_str("VBool True"),
            Value::Bool(false) => f.write_str("VBool False"),
            Value::Void => f.write_str("VVoid"),
            Value::Oid(o) => write!(f, "XOID {o}"),
            Value::Null => f.write_str("VNull"),
            Value::Record(r) => write!(f, "{r}"),
        }
    }
}

/// Ordered list of named values with unique names. Used for object
/// attributes, frame parameters and frame locals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Record(Vec<(String, Value)>);

impl Record {
    pub fn new() -> Self {
        Record(Vec::new())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Appends a new field. Returns `false` (and leaves the record as is)
    /// when the name is already taken.
    pub fn insert(&mut self, name: impl Into<String>, value: Value) -> bool {
        let name = name.into();
        if self.contains(&name) {
            return false;
        }
        self.0.push((name, value));
        true
    }

    /// Replaces an existing field's value, or appends when absent.
    pub fn upsert(&mut self, name: impl Into<String>, value: Value) {
        let name = name.into();
        match self.0.iter_mut().find(|(n, _)| *n == name) {
            Some((_, slot)) => *slot = value,
            None => self.0.push((name, value)),
        }
    }

    /// Mutable access to an existing field.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.0.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, Value)> for Record {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        let mut r = Record::new();
        for (n, v) in iter {
            r.upsert(n, v);
        }
        r
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (n, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({n:?},{v})")?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub ty: TypeRef,
    pub init: Value,
}

/// A class: a name plus its declared attributes in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl ClassDef {
    pub fn new(name: impl Into<String>) -> Self {
        ClassDef {
            name: name.into(),
            attributes: Vec::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, ty: TypeRef, init: Value) -> Self {
        self.attributes.push(Attribute {
            name: name.into(),
            ty,
            init,
        });
        self
    }
}

/// Operation signature. Identity is the full signature, so operations may
/// be overloaded on parameter or return types.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OpSig {
    pub name: String,
    pub params: Vec<TypeRef>,
    pub ret: TypeRef,
}

impl OpSig {
    pub fn new(name: impl Into<String>, params: Vec<TypeRef>, ret: TypeRef) -> Self {
        OpSig {
            name: name.into(),
            params,
            ret,
        }
    }
}

impl fmt::Display for OpSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "): {}", self.ret)
    }
}

/// A method implementing an operation: named parameters and a body of
/// actions addressed by program counter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDef {
    pub implements: OpSig,
    pub params: Vec<(String, TypeRef)>,
    pub body: Vec<Action>,
}

/// Direct superclasses per class, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubclassRel(BTreeMap<String, Vec<String>>);

impl SubclassRel {
    pub fn new() -> Self {
        SubclassRel::default()
    }

    /// Records the direct superclasses of `class`. An empty list removes
    /// the entry, so "no superclasses" has a single representation.
    pub fn set(&mut self, class: impl Into<String>, supers: Vec<String>) {
        let class = class.into();
        if supers.is_empty() {
            self.0.remove(&class);
        } else {
            self.0.insert(class, supers);
        }
    }

    pub fn supers(&self, class: &str) -> &[String] {
        self.0.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Class name → operation → implementing method.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MethMap(BTreeMap<String, BTreeMap<OpSig, MethodDef>>);

impl MethMap {
    pub fn new() -> Self {
        MethMap::default()
    }

    /// Registers `method` for `class` under its own signature. Returns the
    /// method previously registered for that signature, if any.
    pub fn insert(&mut self, class: impl Into<String>, method: MethodDef) -> Option<MethodDef> {
        self.0
            .entry(class.into())
            .or_default()
            .insert(method.implements.clone(), method)
    }

    /// Inserts under an explicit key, which may disagree with the method's
    /// own signature. Only useful for exercising validation.
    pub fn insert_keyed(&mut self, class: impl Into<String>, key: OpSig, method: MethodDef) {
        self.0.entry(class.into()).or_default().insert(key, method);
    }

    pub fn lookup(&self, class: &str, op: &OpSig) -> Option<&MethodDef> {
        self.0.get(class).and_then(|ops| ops.get(op))
    }

    pub fn class_ops(&self, class: &str) -> impl Iterator<Item = (&OpSig, &MethodDef)> {
        self.0.get(class).into_iter().flat_map(|ops| ops.iter())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &OpSig, &MethodDef)> {
        self.0
            .iter()
            .flat_map(|(c, ops)| ops.iter().map(move |(o, m)| (c.as_str(), o, m)))
    }
}

pub type ClassTable = BTreeMap<String, ClassDef>;

/// Where a model problem was found. The frontend maps sites back to
/// source locations.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Model,
    Class(String),
    Attr { class: String, attr: String },
    Method { class: String, op: OpSig },
    Action { class: String, op: OpSig, pc: usize },
    Setup(usize),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Model => f.write_str("model"),
            Site::Class(c) => write!(f, "class {c}"),
            Site::Attr { class, attr } => write!(f, "attribute {class}.{attr}"),
            Site::Method { class, op } => write!(f, "method {class}.{op}"),
            Site::Action { class, op, pc } => write!(f, "method {class}.{op} at pc {pc}"),
            Site::Setup(i) => write!(f, "setup entry {i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelProblem {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("initial value {found} does not fit declared type {expected}")]
    InitMismatch { expected: TypeRef, found: String },
    #[error("inheritance cycle through `{0}`")]
    InheritanceCycle(String),
    #[error("method registered under {key} but implements {actual}")]
    KeyMismatch { key: OpSig, actual: OpSig },
    #[error("parameter list does not match the operation signature")]
    ParamMismatch,
    #[error("method body is empty")]
    EmptyBody,
    #[error("jump target {target} outside body of length {len}")]
    BadJumpTarget { target: usize, len: usize },
    #[error("unknown local `{0}`")]
    UnknownLocal(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("local `{name}` declared as both {first} and {second}")]
    ConflictingLocal {
        name: String,
        first: TypeRef,
        second: TypeRef,
    },
    #[error("type mismatch: expected {expected}, found {found}")]
    TypeMismatch { expected: String, found: String },
    #[error("no method implements {op} for class `{class}`")]
    MethodNotFound { class: String, op: OpSig },
    #[error("duplicate object name `{0}`")]
    DuplicateObject(String),
    #[error("unknown object name `{0}` in links")]
    UnknownLink(String),
    #[error("active operation {0} must not take parameters")]
    ActiveWithParams(OpSig),
    #[error("negative priority {0}")]
    NegativePriority(i64),
}

/// A validation failure, located at a [`Site`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{site}: {problem}")]
pub struct ModelError {
    pub site: Site,
    pub problem: ModelProblem,
}

impl ModelError {
    pub fn new(site: Site, problem: ModelProblem) -> Self {
        ModelError { site, problem }
    }
}

/// The structural part of a system description: classes, the subclass
/// relation and the method table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Model {
    pub classes: ClassTable,
    pub subclass: SubclassRel,
    pub methods: MethMap,
}

impl Model {
    pub fn new() -> Self {
        Model::default()
    }

    pub fn add_class(&mut self, class: ClassDef) {
        self.classes.insert(class.name.clone(), class);
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    pub fn super_chain(&self, class: &str) -> Result<Vec<String>, ModelError> {
        super_chain(class, &self.subclass)
    }

    /// Whether `sub` is `sup` or one of its (transitive) subclasses.
    pub fn is_subclass(&self, sub: &str, sup: &str) -> bool {
        super_chain(sub, &self.subclass)
            .map(|chain| chain.iter().any(|c| c == sup))
            .unwrap_or(false)
    }

    /// Static conformance between types: equal, or class subtyping.
    pub fn type_conforms(&self, found: &TypeRef, expected: &TypeRef) -> bool {
        match (found, expected) {
            (TypeRef::Class(a), TypeRef::Class(b)) => self.is_subclass(a, b),
            _ => found == expected,
        }
    }

    /// Attributes an instance of `class` carries: inherited ones first
    /// (farthest ancestor first), then the class's own.
    pub fn effective_attributes(&self, class: &str) -> Result<Vec<&Attribute>, ModelError> {
        let chain = self.super_chain(class)?;
        let mut out: Vec<&Attribute> = Vec::new();
        for c in chain.iter().rev() {
            let def = self.classes.get(c).ok_or_else(|| {
                ModelError::new(
                    Site::Class(class.into()),
                    ModelProblem::UnknownClass(c.clone()),
                )
            })?;
            for a in &def.attributes {
                if let Some(i) = out.iter().position(|x| x.name == a.name) {
                    out.remove(i);
                }
                out.push(a);
            }
        }
        Ok(out)
    }

    /// First method along the superclass chain of `class` implementing `op`.
    pub fn resolve(&self, class: &str, op: &OpSig) -> Option<&MethodDef> {
        let chain = self.super_chain(class).ok()?;
        chain.iter().find_map(|c| self.methods.lookup(c, op))
    }

    pub fn default_value(&self, ty: &TypeRef) -> Result<Value, ModelError> {
        default_value(ty, &self.classes)
    }

    fn check_type(&self, ty: &TypeRef, site: &Site) -> Result<(), ModelError> {
        match ty {
            TypeRef::Class(c) if !self.classes.contains_key(c) => Err(ModelError::new(
                site.clone(),
                ModelProblem::UnknownClass(c.clone()),
            )),
            _ => Ok(()),
        }
    }

    /// Checks a value written in the model text (attribute initializer,
    /// local initializer or constant) against a declared type.
    pub fn literal_fits(&self, value: &Value, ty: &TypeRef) -> bool {
        match (value, ty) {
            (Value::Null, TypeRef::Class(_)) => true,
            _ => value.literal_type().as_ref() == Some(ty),
        }
    }

    /// First validation problem, if any.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.problems().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// All validation problems, in a deterministic order.
    pub fn problems(&self) -> Vec<ModelError> {
        let mut errs = Vec::new();

        for (name, class) in &self.classes {
            let mut seen = BTreeSet::new();
            for a in &class.attributes {
                let site = Site::Attr {
                    class: name.clone(),
                    attr: a.name.clone(),
                };
                if !seen.insert(a.name.as_str()) {
                    errs.push(ModelError::new(
                        site.clone(),
                        ModelProblem::DuplicateAttribute(a.name.clone()),
                    ));
                }
                if let Err(e) = self.check_type(&a.ty, &site) {
                    errs.push(e);
                } else if !self.literal_fits(&a.init, &a.ty) {
                    errs.push(ModelError::new(
                        site,
                        ModelProblem::InitMismatch {
                            expected: a.ty.clone(),
                            found: a.init.describe(),
                        },
                    ));
                }
            }
        }

        let mut acyclic = true;
        for (class, supers) in self.subclass.iter() {
            if !self.classes.contains_key(class) {
                errs.push(ModelError::new(
                    Site::Model,
                    ModelProblem::UnknownClass(class.to_string()),
                ));
            }
            for s in supers {
                if !self.classes.contains_key(s) {
                    errs.push(ModelError::new(
                        Site::Class(class.to_string()),
                        ModelProblem::UnknownClass(s.clone()),
                    ));
                }
            }
            if let Err(e) = super_chain(class, &self.subclass) {
                acyclic = false;
                errs.push(e);
            }
        }
        if !acyclic {
            // Everything below walks the chain.
            return errs;
        }

        for name in self.classes.keys() {
            if let Ok(attrs) = self.effective_attributes(name) {
                let mut seen = BTreeSet::new();
                for a in attrs {
                    if !seen.insert(a.name.as_str()) {
                        errs.push(ModelError::new(
                            Site::Class(name.clone()),
                            ModelProblem::DuplicateAttribute(a.name.clone()),
                        ));
                    }
                }
            }
        }

        for (class, key, method) in self.methods.iter() {
            let site = Site::Method {
                class: class.to_string(),
                op: key.clone(),
            };
            if !self.classes.contains_key(class) {
                errs.push(ModelError::new(
                    site,
                    ModelProblem::UnknownClass(class.to_string()),
                ));
                continue;
            }
            if *key != method.implements {
                errs.push(ModelError::new(
                    site.clone(),
                    ModelProblem::KeyMismatch {
                        key: key.clone(),
                        actual: method.implements.clone(),
                    },
                ));
                continue;
            }
            let sig_types: Vec<&TypeRef> = key.params.iter().chain([&key.ret]).collect();
            let type_errs: Vec<_> = sig_types
                .into_iter()
                .chain(method.params.iter().map(|(_, t)| t))
                .filter_map(|t| self.check_type(t, &site).err())
                .collect();
            if !type_errs.is_empty() {
                errs.extend(type_errs);
                continue;
            }
            let param_names: BTreeSet<&str> =
                method.params.iter().map(|(n, _)| n.as_str()).collect();
            if method.params.len() != key.params.len()
                || param_names.len() != method.params.len()
                || method
                    .params
                    .iter()
                    .zip(&key.params)
                    .any(|((_, a), b)| a != b)
            {
                errs.push(ModelError::new(site.clone(), ModelProblem::ParamMismatch));
                continue;
            }
            if method.body.is_empty() {
                errs.push(ModelError::new(site, ModelProblem::EmptyBody));
                continue;
            }
            errs.extend(actions::check_body(self, class, method));
        }
        errs
    }
}

/// Default value of a type: `0`, `false`, `void`, or null for class types.
pub fn default_value(ty: &TypeRef, classes: &ClassTable) -> Result<Value, ModelError> {
    Ok(match ty {
        TypeRef::Int => Value::Int(0),
        TypeRef::Bool => Value::Bool(false),
        TypeRef::Void => Value::Void,
        TypeRef::Class(c) => {
            if !classes.contains_key(c) {
                return Err(ModelError::new(
                    Site::Model,
                    ModelProblem::UnknownClass(c.clone()),
                ));
            }
            Value::Null
        }
    })
}

/// Runtime type of a value. Object ids are typed by the class tag the data
/// store keeps for them.
pub fn type_of_value(v: &Value, ds: &DataStore) -> Result<TypeRef, Fault> {
    match v {
        Value::Int(_) => Ok(TypeRef::Int),
        Value::Bool(_) => Ok(TypeRef::Bool),
        Value::Void => Ok(TypeRef::Void),
        Value::Oid(o) => ds
            .class_of(*o)
            .map(|c| TypeRef::Class(c.to_string()))
            .ok_or(Fault::DanglingReference(*o)),
        Value::Null => Err(Fault::NullTarget),
        Value::Record(_) => Err(Fault::TypeMismatch {
            expected: "a typed value".into(),
            found: "record".into(),
        }),
    }
}

/// `class` followed by its superclasses, depth-first in declaration order,
/// keeping the first occurrence of each class.
pub fn super_chain(class: &str, scl: &SubclassRel) -> Result<Vec<String>, ModelError> {
    fn walk(
        class: &str,
        scl: &SubclassRel,
        path: &mut Vec<String>,
        out: &mut Vec<String>,
    ) -> Result<(), ModelError> {
        if path.iter().any(|c| c == class) {
            return Err(ModelError::new(
                Site::Class(class.to_string()),
                ModelProblem::InheritanceCycle(class.to_string()),
            ));
        }
        if !out.iter().any(|c| c == class) {
            out.push(class.to_string());
        }
        path.push(class.to_string());
        for s in scl.supers(class) {
            walk(s, scl, path, out)?;
        }
        path.pop();
        Ok(())
    }
    let mut out = Vec::new();
    walk(class, scl, &mut Vec::new(), &mut out)?;
    Ok(out)
}

/// Runtime conformance of a value to a declared type.
pub fn value_conforms(v: &Value, ty: &TypeRef, model: &Model, ds: &DataStore) -> bool {
    match (v, ty) {
        (Value::Null, TypeRef::Class(_)) => true,
        (Value::Oid(o), TypeRef::Class(c)) => ds
            .class_of(*o)
            .map(|actual| model.is_subclass(actual, c))
            .unwrap_or(false),
        _ => v.literal_type().as_ref() == Some(ty),
    }
}

pub(crate) fn describe(v: &Value) -> String {
    v.describe()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scl(pairs: &[(&str, &[&str])]) -> SubclassRel {
        let mut r = SubclassRel::new();
        for (c, ss) in pairs {
            r.set(*c, ss.iter().map(|s| s.to_string()).collect());
        }
        r
    }

    #[test]
    fn default_values() {
        let mut classes = ClassTable::new();
        classes.insert("Buffer".into(), ClassDef::new("Buffer"));
        assert_eq!(
            default_value(&TypeRef::Int, &classes).unwrap(),
            Value::Int(0)
        );
        assert_eq!(
            default_value(&TypeRef::Bool, &classes).unwrap(),
            Value::Bool(false)
        );
        assert_eq!(
            default_value(&TypeRef::Void, &classes).unwrap(),
            Value::Void
        );
        assert_eq!(
            default_value(&TypeRef::class("Buffer"), &classes).unwrap(),
            Value::Null
        );
        let err = default_value(&TypeRef::class("Nope"), &classes).unwrap_err();
        assert_eq!(err.problem, ModelProblem::UnknownClass("Nope".into()));
    }

    #[test]
    fn chains() {
        assert_eq!(
            super_chain("Buffer", &SubclassRel::new()).unwrap(),
            ["Buffer"]
        );
        assert_eq!(
            super_chain("B", &scl(&[("B", &["A"])])).unwrap(),
            ["B", "A"]
        );
        assert_eq!(
            super_chain("C", &scl(&[("C", &["B"]), ("B", &["A"])])).unwrap(),
            ["C", "B", "A"]
        );
    }

    #[test]
    fn chain_depth_first_with_dedup() {
        // D -> [B, C], B -> [A], C -> [A]
        let r = scl(&[("D", &["B", "C"]), ("B", &["A"]), ("C", &["A"])]);
        assert_eq!(super_chain("D", &r).unwrap(), ["D", "B", "A", "C"]);
    }

    #[test]
    fn chain_cycle_is_an_error() {
        let r = scl(&[("A", &["B"]), ("B", &["A"])]);
        let err = super_chain("A", &r).unwrap_err();
        assert!(matches!(err.problem, ModelProblem::InheritanceCycle(_)));
    }

    #[test]
    fn record_keeps_order_and_unique_names() {
        let mut r = Record::new();
        assert!(r.insert("data", Value::Int(1)));
        assert!(r.insert("b", Value::Null));
        assert!(!r.insert("data", Value::Int(2)));
        r.upsert("data", Value::Int(3));
        let names: Vec<_> = r.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["data", "b"]);
        assert_eq!(r.get("data"), Some(&Value::Int(3)));
    }

    #[test]
    fn console_notation() {
        let mut r = Record::new();
        r.insert("data", Value::Int(-1));
        r.insert("b", Value::Oid(ObjectId(3)));
        assert_eq!(r.to_string(), r#"[("data",VInt -1),("b",XOID 3)]"#);
    }

    #[test]
    fn effective_attributes_put_inherited_first() {
        let mut m = Model::new();
        m.add_class(ClassDef::new("A").with_attr("x", TypeRef::Int, Value::Int(1)));
        m.add_class(ClassDef::new("B").with_attr("y", TypeRef::Bool, Value::Bool(true)));
        m.subclass.set("B", vec!["A".into()]);
        let names: Vec<_> = m
            .effective_attributes("B")
            .unwrap()
            .iter()
            .map(|a| a.name.clone())
            .collect();
        assert_eq!(names, ["x", "y"]);
        assert!(m.type_conforms(&TypeRef::class("B"), &TypeRef::class("A")));
        assert!(!m.type_conforms(&TypeRef::class("A"), &TypeRef::class("B")));
    }

    #[test]
    fn validation_catches_structural_problems() {
        let mut m = Model::new();
        m.add_class(
            ClassDef::new("A")
                .with_attr("x", TypeRef::Int, Value::Bool(true))
                .with_attr("r", TypeRef::class("Missing"), Value::Null),
        );
        m.subclass.set("A", vec!["Ghost".into()]);
        let problems: Vec<_> = m.problems().into_iter().map(|e| e.problem).collect();
        assert!(problems.contains(&ModelProblem::UnknownClass("Missing".into())));
        assert!(problems.contains(&ModelProblem::UnknownClass("Ghost".into())));
        assert!(problems
            .iter()
            .any(|p| matches!(p, ModelProblem::InitMismatch { .. })));
    }
}

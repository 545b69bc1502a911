//! Intermediate representation of a data-structure specification and the
//! builder that produces validated serial specifications.

mod builder;
mod dump;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

pub use builder::{AttrHandle, BlockHandle, FnBuilder, SpecBuilder, StatementHandle, TypeHandle};
pub use dump::{dump_spec, dump_statements};
pub use validate::{is_identifier, validate_spec};

use crate::types::{Value, ValueType};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("duplicate attribute {0}")]
    DuplicateAttribute(String),
    #[error("duplicate function {0}")]
    DuplicateFunction(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("composed type {0} conflicts with an existing type of the same name")]
    DuplicateType(String),
    #[error("embedding {0} creates a cycle")]
    CyclicEmbedding(String),
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("function {0} has a path without a return statement")]
    MissingReturn(String),
    #[error("function {0} has a conditional with an empty then branch")]
    EmptyThenBranch(String),
    #[error("exposed function {0} does not exist")]
    UnknownExposedFunction(String),
    #[error("invalid handle")]
    InvalidHandle,
}

/// How an attribute is stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    Primitive { ty: ValueType, default: Value },
    /// A composed record allocated together with the owner; resolving it
    /// needs no concurrency control.
    Embedded(String),
    /// Mutable reference to a record of the named type, null by default.
    Pointer(String),
    /// Fixed-length array pre-allocated at construction. With a
    /// `RecordPtr(T)` element type each element is a record of `T` and an
    /// indexed read yields the element's reference.
    Array { element: ValueType, len: usize },
    /// Hash index from keys to value rows.
    Map { key: ValueType, value: ValueType },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeDecl {
    pub fn primitive(name: impl Into<String>, ty: ValueType, default: Value) -> Self {
        Self { name: name.into(), kind: AttributeKind::Primitive { ty, default } }
    }

    pub fn pointer(name: impl Into<String>, target: impl Into<String>) -> Self {
        Self { name: name.into(), kind: AttributeKind::Pointer(target.into()) }
    }

    pub fn embedded(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self { name: name.into(), kind: AttributeKind::Embedded(ty.into()) }
    }

    pub fn array(name: impl Into<String>, element: ValueType, len: usize) -> Self {
        Self { name: name.into(), kind: AttributeKind::Array { element, len } }
    }

    pub fn map(name: impl Into<String>, key: ValueType, value: ValueType) -> Self {
        Self { name: name.into(), kind: AttributeKind::Map { key, value } }
    }

    /// Compile-time constant default, if the attribute has one.
    pub fn literal_default(&self) -> Option<&Value> {
        match &self.kind {
            AttributeKind::Primitive { default, .. } => Some(default),
            _ => None,
        }
    }
}

/// Side-effect-free expression over variables and constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Constant(Value),
    Var(String),
    Add(Box<Expression>, Box<Expression>),
    Subtract(Box<Expression>, Box<Expression>),
    Eq(Box<Expression>, Box<Expression>),
    IsNullPtr(Box<Expression>),
}

impl Expression {
    pub fn var(name: impl Into<String>) -> Self {
        Expression::Var(name.into())
    }

    pub fn i64(v: i64) -> Self {
        Expression::Constant(Value::I64(v))
    }

    pub fn bool(v: bool) -> Self {
        Expression::Constant(Value::Bool(v))
    }

    pub fn null() -> Self {
        Expression::Constant(Value::null())
    }

    pub fn add(a: Expression, b: Expression) -> Self {
        Expression::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expression, b: Expression) -> Self {
        Expression::Subtract(Box::new(a), Box::new(b))
    }

    pub fn eq(a: Expression, b: Expression) -> Self {
        Expression::Eq(Box::new(a), Box::new(b))
    }

    pub fn is_null(a: Expression) -> Self {
        Expression::IsNullPtr(Box::new(a))
    }

    /// `e == false`, the only negation the expression set can spell.
    pub fn not(a: Expression) -> Self {
        Expression::eq(a, Expression::bool(false))
    }

    /// Calls `f` on every variable name referenced by the expression.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expression::Constant(_) => {}
            Expression::Var(v) => f(v),
            Expression::Add(a, b) | Expression::Subtract(a, b) | Expression::Eq(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expression::IsNullPtr(a) => a.for_each_var(f),
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        let mut hit = false;
        self.for_each_var(&mut |v| hit |= v == var);
        hit
    }
}

/// Receiver of a method call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallTarget {
    /// A variable holding a record reference.
    Var(String),
    /// An embedded attribute of the executing record.
    Embedded(String),
}

/// The record a lock statement protects.
#[derive(Debug, Clone, PartialEq)]
pub enum LockTarget {
    /// The record the function executes on.
    This,
    Var(String),
    Embedded(String),
    ArrayElement { attr: String, index: Expression },
    MapEntry { attr: String, key: Expression },
}

impl LockTarget {
    pub fn mentions(&self, var: &str) -> bool {
        match self {
            LockTarget::This | LockTarget::Embedded(_) => false,
            LockTarget::Var(v) => v == var,
            LockTarget::ArrayElement { index: e, .. } | LockTarget::MapEntry { key: e, .. } => e.mentions(var),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LockStatement {
    AcquireShared(LockTarget),
    AcquireExclusive(LockTarget),
    Upgrade(LockTarget),
    ReleaseAll,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Read { attr: String, dst: String },
    Update { attr: String, src: String },
    ArrayRead { attr: String, index: Expression, dst: String },
    ArrayUpdate { attr: String, index: Expression, src: String },
    MapRead { attr: String, key: Expression, dst: String },
    MapUpdate { attr: String, key: Expression, src: String },
    MapContains { attr: String, key: Expression, dst: String },
    /// Inserts when the key is absent; no effect otherwise.
    MapInsert { attr: String, key: Expression, src: String },
    MapErase { attr: String, key: Expression },
    Assign { dst: String, expr: Expression },
    Conditional { cond: Expression, then_branch: Vec<Statement>, else_branch: Vec<Statement> },
    Create { ty: String, dst: String },
    Delete { var: String },
    MethodCall { target: CallTarget, function: String, args: Vec<Expression>, result: Option<String> },
    Return(Option<String>),
    /// Placeholder left where an optimization emptied a then branch.
    Nop,
    Lock(LockStatement),
}

impl Statement {
    /// Attribute touched directly by this statement, if any.
    pub fn attribute(&self) -> Option<&str> {
        match self {
            Statement::Read { attr, .. }
            | Statement::Update { attr, .. }
            | Statement::ArrayRead { attr, .. }
            | Statement::ArrayUpdate { attr, .. }
            | Statement::MapRead { attr, .. }
            | Statement::MapUpdate { attr, .. }
            | Statement::MapContains { attr, .. }
            | Statement::MapInsert { attr, .. }
            | Statement::MapErase { attr, .. } => Some(attr),
            Statement::MethodCall { target: CallTarget::Embedded(attr), .. } => Some(attr),
            _ => None,
        }
    }

    /// Variable assigned by this statement (not counting by-pointer
    /// arguments of calls).
    pub fn assigned_var(&self) -> Option<&str> {
        match self {
            Statement::Read { dst, .. }
            | Statement::ArrayRead { dst, .. }
            | Statement::MapRead { dst, .. }
            | Statement::MapContains { dst, .. }
            | Statement::Assign { dst, .. }
            | Statement::Create { dst, .. } => Some(dst),
            Statement::MethodCall { result, .. } => result.as_deref(),
            _ => None,
        }
    }

    pub fn is_lock(&self) -> bool {
        matches!(self, Statement::Lock(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: ValueType,
    /// Passed by pointer: written back to the caller when the call returns.
    pub by_pointer: bool,
}

impl Param {
    pub fn value(name: impl Into<String>, ty: ValueType) -> Self {
        Self { name: name.into(), ty, by_pointer: false }
    }

    pub fn pointer(name: impl Into<String>, ty: ValueType) -> Self {
        Self { name: name.into(), ty, by_pointer: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub ty: ValueType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub return_type: ValueType,
    pub params: Vec<Param>,
    pub temporaries: Vec<Variable>,
    pub body: Vec<Statement>,
    /// Deduced by analysis; never set by users.
    pub is_const: bool,
}

impl FunctionDecl {
    pub fn var_type(&self, name: &str) -> Option<&ValueType> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.ty)
            .or_else(|| self.temporaries.iter().find(|t| t.name == name).map(|t| &t.ty))
    }
}

/// Attributes and functions of one record type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDecl {
    pub name: String,
    pub attributes: Vec<AttributeDecl>,
    pub functions: Vec<FunctionDecl>,
}

impl TypeDecl {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDecl> {
        self.functions.iter_mut().find(|f| f.name == name)
    }
}

/// A complete specification: the top-level type, every transitively
/// composed type (flattened by name) and the host-callable functions.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStructureSpec {
    pub root: TypeDecl,
    pub composed: BTreeMap<String, TypeDecl>,
    pub exposed: BTreeSet<String>,
    pub cc_injected: bool,
}

impl DataStructureSpec {
    pub fn name(&self) -> &str {
        &self.root.name
    }

    pub fn type_decl(&self, name: &str) -> Option<&TypeDecl> {
        if name == self.root.name {
            Some(&self.root)
        } else {
            self.composed.get(name)
        }
    }

    pub fn type_decl_mut(&mut self, name: &str) -> Option<&mut TypeDecl> {
        if name == self.root.name {
            Some(&mut self.root)
        } else {
            self.composed.get_mut(name)
        }
    }

    /// Root first, then composed types in name order.
    pub fn types(&self) -> impl Iterator<Item = &TypeDecl> {
        std::iter::once(&self.root).chain(self.composed.values())
    }

    pub fn types_mut(&mut self) -> impl Iterator<Item = &mut TypeDecl> {
        std::iter::once(&mut self.root).chain(self.composed.values_mut())
    }

    pub fn is_exposed(&self, ty: &str, function: &str) -> bool {
        ty == self.root.name && self.exposed.contains(function)
    }

    /// Total attributes + functions + statements, used as the optimizer's
    /// progress measure.
    pub fn size(&self) -> usize {
        fn count(body: &[Statement]) -> usize {
            body.iter()
                .map(|s| match s {
                    Statement::Conditional { then_branch, else_branch, .. } => {
                        1 + count(then_branch) + count(else_branch)
                    }
                    Statement::Nop => 0,
                    _ => 1,
                })
                .sum()
        }
        self.types()
            .map(|t| t.attributes.len() + t.functions.iter().map(|f| 1 + count(&f.body)).sum::<usize>())
            .sum()
    }

    /// Type name reached through a call target inside `func` of `ty`.
    pub fn call_target_type(&self, ty: &TypeDecl, func: &FunctionDecl, target: &CallTarget) -> Option<String> {
        match target {
            CallTarget::Var(v) => match func.var_type(v)? {
                ValueType::RecordPtr(t) => Some(t.clone()),
                _ => None,
            },
            CallTarget::Embedded(a) => match &ty.attribute(a)?.kind {
                AttributeKind::Embedded(t) => Some(t.clone()),
                _ => None,
            },
        }
    }
}

/// Visits every statement in `body`, including nested branches, in
/// program order.
pub fn walk_statements<'a>(body: &'a [Statement], f: &mut impl FnMut(&'a Statement)) {
    for s in body {
        f(s);
        if let Statement::Conditional { then_branch, else_branch, .. } = s {
            walk_statements(then_branch, f);
            walk_statements(else_branch, f);
        }
    }
}

/// Statement position inside a function body: top-level index, then for
/// each enclosing conditional the branch (0 = then, 1 = else) and index.
pub type StatementPath = Vec<u32>;

/// Shorthand constructors used when writing bodies by hand.
impl Statement {
    pub fn read(attr: &str, dst: &str) -> Self {
        Statement::Read { attr: attr.into(), dst: dst.into() }
    }

    pub fn update(attr: &str, src: &str) -> Self {
        Statement::Update { attr: attr.into(), src: src.into() }
    }

    pub fn assign(dst: &str, expr: Expression) -> Self {
        Statement::Assign { dst: dst.into(), expr }
    }

    /// Calls `function` on the record referenced by variable `target`.
    pub fn call(target: &str, function: &str, args: Vec<Expression>, result: Option<&str>) -> Self {
        Statement::MethodCall {
            target: CallTarget::Var(target.into()),
            function: function.into(),
            args,
            result: result.map(Into::into),
        }
    }

    /// Calls `function` on the embedded attribute `attr`.
    pub fn call_embedded(attr: &str, function: &str, args: Vec<Expression>, result: Option<&str>) -> Self {
        Statement::MethodCall {
            target: CallTarget::Embedded(attr.into()),
            function: function.into(),
            args,
            result: result.map(Into::into),
        }
    }

    pub fn create(ty: &str, dst: &str) -> Self {
        Statement::Create { ty: ty.into(), dst: dst.into() }
    }

    pub fn delete(var: &str) -> Self {
        Statement::Delete { var: var.into() }
    }

    pub fn ret(var: &str) -> Self {
        Statement::Return(Some(var.into()))
    }

    pub fn ret_void() -> Self {
        Statement::Return(None)
    }
}

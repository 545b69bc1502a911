//! Resolution of a specification into slot- and column-indexed operations
//! bound to registered tables.

use std::collections::HashMap;

use super::ExecError;
use crate::runtime::{Column, Table, TableRegistry};
use crate::spec::{AttributeKind, CallTarget, DataStructureSpec, Expression, LockStatement, LockTarget, Statement, TypeDecl};
use crate::types::{Value, ValueType};

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(Value),
    Slot(usize),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Eq(Box<CExpr>, Box<CExpr>),
    IsNull(Box<CExpr>),
}

#[derive(Debug, Clone)]
pub(crate) enum CTarget {
    Slot(usize),
    Embedded(usize),
}

#[derive(Debug, Clone)]
pub(crate) enum CLock {
    This,
    Slot(usize),
    Embedded(usize),
    Element { attr: usize, index: CExpr },
    Entry { attr: usize, key: CExpr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LockKind {
    Shared,
    Exclusive,
    Upgrade,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Read { attr: usize, dst: usize },
    Update { attr: usize, src: usize },
    ArrayRead { attr: usize, index: CExpr, dst: usize },
    ArrayUpdate { attr: usize, index: CExpr, src: usize },
    MapRead { attr: usize, key: CExpr, dst: usize },
    MapUpdate { attr: usize, key: CExpr, src: usize },
    MapContains { attr: usize, key: CExpr, dst: usize },
    MapInsert { attr: usize, key: CExpr, src: usize },
    MapErase { attr: usize, key: CExpr },
    Assign { dst: usize, expr: CExpr },
    If { cond: CExpr, then_ops: Vec<Op>, else_ops: Vec<Op> },
    Create { ty: usize, dst: usize },
    Delete { slot: usize, ty: usize },
    Call { target: CTarget, ty: usize, func: usize, args: Vec<CExpr>, writeback: Vec<(usize, usize)>, result: Option<usize> },
    Return(Option<usize>),
    Nop,
    Lock { target: CLock, kind: LockKind },
    ReleaseAll,
}

#[derive(Debug, Clone)]
pub(crate) enum Elem {
    Primitive { table: &'static Table, ty: ValueType },
    Record { ty: usize },
}

#[derive(Debug, Clone)]
pub(crate) enum CAttrKind {
    Scalar,
    Embedded { ty: usize },
    Array { len: usize, elem: Elem },
    Map { key: ValueType, value: ValueType, values: &'static Table },
}

#[derive(Debug, Clone)]
pub(crate) struct CAttr {
    pub name: String,
    pub col: usize,
    pub kind: CAttrKind,
}

#[derive(Debug, Clone)]
pub(crate) struct CFunc {
    pub name: String,
    pub params: Vec<(ValueType, bool)>,
    pub slot_types: Vec<ValueType>,
    pub return_type: ValueType,
    pub body: Vec<Op>,
}

#[derive(Debug)]
pub(crate) struct CType {
    pub name: String,
    pub table: &'static Table,
    pub attrs: Vec<CAttr>,
    pub functions: Vec<CFunc>,
    pub fn_index: HashMap<String, usize>,
    /// Row image with every primitive default; reference columns zero.
    pub init: Vec<u8>,
}

/// A specification bound to tables in one namespace.
#[derive(Debug)]
pub struct Program {
    pub(crate) spec: DataStructureSpec,
    pub(crate) namespace: String,
    pub(crate) types: Vec<CType>,
    pub(crate) root: usize,
}

fn columns_of(ty: &TypeDecl) -> Vec<Column> {
    ty.attributes
        .iter()
        .map(|a| {
            let vt = match &a.kind {
                AttributeKind::Primitive { ty, .. } => ty.clone(),
                AttributeKind::Pointer(t) | AttributeKind::Embedded(t) => ValueType::ptr(t.clone()),
                AttributeKind::Array { element: ValueType::RecordPtr(t), .. } => ValueType::ptr(t.clone()),
                AttributeKind::Array { .. } => ValueType::ptr(format!("{}.{}", ty.name, a.name)),
                // Index handle.
                AttributeKind::Map { .. } => ValueType::I64,
            };
            Column::new(a.name.clone(), vt)
        })
        .collect()
}

struct FnCtx<'a> {
    program_types: &'a HashMap<String, usize>,
    spec: &'a DataStructureSpec,
    ty: &'a TypeDecl,
    func: &'a crate::spec::FunctionDecl,
    slots: HashMap<&'a str, usize>,
    attrs: HashMap<&'a str, usize>,
}

impl FnCtx<'_> {
    fn slot(&self, v: &str) -> Result<usize, ExecError> {
        self.slots.get(v).copied().ok_or_else(|| ExecError::Compile(format!("unknown variable {v}")))
    }

    fn attr(&self, a: &str) -> Result<usize, ExecError> {
        self.attrs.get(a).copied().ok_or_else(|| ExecError::Compile(format!("unknown attribute {a}")))
    }

    fn expr(&self, e: &Expression) -> Result<CExpr, ExecError> {
        Ok(match e {
            Expression::Constant(v) => CExpr::Const(v.clone()),
            Expression::Var(v) => CExpr::Slot(self.slot(v)?),
            Expression::Add(a, b) => CExpr::Add(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expression::Subtract(a, b) => CExpr::Sub(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expression::Eq(a, b) => CExpr::Eq(Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
            Expression::IsNullPtr(a) => CExpr::IsNull(Box::new(self.expr(a)?)),
        })
    }

    fn type_index(&self, name: &str) -> Result<usize, ExecError> {
        self.program_types.get(name).copied().ok_or_else(|| ExecError::Compile(format!("unknown type {name}")))
    }

    fn lock_target(&self, t: &LockTarget) -> Result<CLock, ExecError> {
        Ok(match t {
            LockTarget::This => CLock::This,
            LockTarget::Var(v) => CLock::Slot(self.slot(v)?),
            LockTarget::Embedded(a) => CLock::Embedded(self.attr(a)?),
            LockTarget::ArrayElement { attr, index } => CLock::Element { attr: self.attr(attr)?, index: self.expr(index)? },
            LockTarget::MapEntry { attr, key } => CLock::Entry { attr: self.attr(attr)?, key: self.expr(key)? },
        })
    }

    fn body(&self, body: &[Statement]) -> Result<Vec<Op>, ExecError> {
        body.iter().map(|s| self.op(s)).collect()
    }

    fn op(&self, s: &Statement) -> Result<Op, ExecError> {
        Ok(match s {
            Statement::Read { attr, dst } => Op::Read { attr: self.attr(attr)?, dst: self.slot(dst)? },
            Statement::Update { attr, src } => Op::Update { attr: self.attr(attr)?, src: self.slot(src)? },
            Statement::ArrayRead { attr, index, dst } => {
                Op::ArrayRead { attr: self.attr(attr)?, index: self.expr(index)?, dst: self.slot(dst)? }
            }
            Statement::ArrayUpdate { attr, index, src } => {
                Op::ArrayUpdate { attr: self.attr(attr)?, index: self.expr(index)?, src: self.slot(src)? }
            }
            Statement::MapRead { attr, key, dst } => {
                Op::MapRead { attr: self.attr(attr)?, key: self.expr(key)?, dst: self.slot(dst)? }
            }
            Statement::MapUpdate { attr, key, src } => {
                Op::MapUpdate { attr: self.attr(attr)?, key: self.expr(key)?, src: self.slot(src)? }
            }
            Statement::MapContains { attr, key, dst } => {
                Op::MapContains { attr: self.attr(attr)?, key: self.expr(key)?, dst: self.slot(dst)? }
            }
            Statement::MapInsert { attr, key, src } => {
                Op::MapInsert { attr: self.attr(attr)?, key: self.expr(key)?, src: self.slot(src)? }
            }
            Statement::MapErase { attr, key } => Op::MapErase { attr: self.attr(attr)?, key: self.expr(key)? },
            Statement::Assign { dst, expr } => Op::Assign { dst: self.slot(dst)?, expr: self.expr(expr)? },
            Statement::Conditional { cond, then_branch, else_branch } => Op::If {
                cond: self.expr(cond)?,
                then_ops: self.body(then_branch)?,
                else_ops: self.body(else_branch)?,
            },
            Statement::Create { ty, dst } => Op::Create { ty: self.type_index(ty)?, dst: self.slot(dst)? },
            Statement::Delete { var } => {
                let ty = match self.func.var_type(var) {
                    Some(ValueType::RecordPtr(t)) => self.type_index(t)?,
                    _ => return Err(ExecError::Compile(format!("delete of non-pointer {var}"))),
                };
                Op::Delete { slot: self.slot(var)?, ty }
            }
            Statement::MethodCall { target, function, args, result } => {
                let tname = self
                    .spec
                    .call_target_type(self.ty, self.func, target)
                    .ok_or_else(|| ExecError::Compile(format!("bad call target {target:?}")))?;
                let callee_decl = self
                    .spec
                    .type_decl(&tname)
                    .and_then(|t| t.function(function))
                    .ok_or_else(|| ExecError::Compile(format!("unknown function {tname}.{function}")))?;
                let ty = self.type_index(&tname)?;
                let func = self.spec.type_decl(&tname).expect("type").functions.iter().position(|f| f.name == *function).expect("function");
                let mut writeback = Vec::new();
                for (i, (p, a)) in callee_decl.params.iter().zip(args).enumerate() {
                    if p.by_pointer {
                        if let Expression::Var(v) = a {
                            writeback.push((i, self.slot(v)?));
                        }
                    }
                }
                Op::Call {
                    target: match target {
                        CallTarget::Var(v) => CTarget::Slot(self.slot(v)?),
                        CallTarget::Embedded(a) => CTarget::Embedded(self.attr(a)?),
                    },
                    ty,
                    func,
                    args: args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?,
                    writeback,
                    result: result.as_deref().map(|r| self.slot(r)).transpose()?,
                }
            }
            Statement::Return(v) => Op::Return(v.as_deref().map(|v| self.slot(v)).transpose()?),
            Statement::Nop => Op::Nop,
            Statement::Lock(LockStatement::ReleaseAll) => Op::ReleaseAll,
            Statement::Lock(LockStatement::AcquireShared(t)) => Op::Lock { target: self.lock_target(t)?, kind: LockKind::Shared },
            Statement::Lock(LockStatement::AcquireExclusive(t)) => {
                Op::Lock { target: self.lock_target(t)?, kind: LockKind::Exclusive }
            }
            Statement::Lock(LockStatement::Upgrade(t)) => Op::Lock { target: self.lock_target(t)?, kind: LockKind::Upgrade },
        })
    }
}

impl Program {
    /// Registers (or reuses) the tables of every type in `namespace` and
    /// resolves all bodies.
    pub fn compile(spec: &DataStructureSpec, namespace: &str) -> Result<Program, ExecError> {
        let registry = TableRegistry::global();
        let decls: Vec<&TypeDecl> = spec.types().collect();
        let index: HashMap<String, usize> = decls.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
        let mut types = Vec::with_capacity(decls.len());
        for decl in &decls {
            let table = registry.register(namespace, &decl.name, columns_of(decl))?;
            let mut init = vec![0u8; table.width()];
            let mut attrs = Vec::new();
            for (col, a) in decl.attributes.iter().enumerate() {
                let kind = match &a.kind {
                    AttributeKind::Primitive { default, .. } => {
                        let range = table.column_range(col)?;
                        default.encode_into(&mut init[range]);
                        CAttrKind::Scalar
                    }
                    AttributeKind::Pointer(_) => CAttrKind::Scalar,
                    AttributeKind::Embedded(t) => CAttrKind::Embedded { ty: index[t] },
                    AttributeKind::Array { element: ValueType::RecordPtr(t), len } => {
                        CAttrKind::Array { len: *len, elem: Elem::Record { ty: index[t] } }
                    }
                    AttributeKind::Array { element, len } => {
                        let name = format!("{}.{}", decl.name, a.name);
                        let t = registry.register(namespace, &name, vec![Column::new("value", element.clone())])?;
                        CAttrKind::Array { len: *len, elem: Elem::Primitive { table: t, ty: element.clone() } }
                    }
                    AttributeKind::Map { key, value } => {
                        let name = format!("{}.{}", decl.name, a.name);
                        let t = registry.register(namespace, &name, vec![Column::new("value", value.clone())])?;
                        CAttrKind::Map { key: key.clone(), value: value.clone(), values: t }
                    }
                };
                attrs.push(CAttr { name: a.name.clone(), col, kind });
            }
            types.push(CType {
                name: decl.name.clone(),
                table,
                attrs,
                functions: Vec::new(),
                fn_index: decl.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect(),
                init,
            });
        }
        for (ti, decl) in decls.iter().enumerate() {
            for f in &decl.functions {
                let mut slots = HashMap::new();
                let mut slot_types = Vec::new();
                for p in &f.params {
                    slots.insert(p.name.as_str(), slot_types.len());
                    slot_types.push(p.ty.clone());
                }
                for t in &f.temporaries {
                    slots.insert(t.name.as_str(), slot_types.len());
                    slot_types.push(t.ty.clone());
                }
                let ctx = FnCtx {
                    program_types: &index,
                    spec,
                    ty: decl,
                    func: f,
                    slots,
                    attrs: decl.attributes.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect(),
                };
                let body = ctx.body(&f.body)?;
                types[ti].functions.push(CFunc {
                    name: f.name.clone(),
                    params: f.params.iter().map(|p| (p.ty.clone(), p.by_pointer)).collect(),
                    slot_types,
                    return_type: f.return_type.clone(),
                    body,
                });
            }
        }
        Ok(Program { spec: spec.clone(), namespace: namespace.to_string(), types, root: 0 })
    }

    pub fn spec(&self) -> &DataStructureSpec {
        &self.spec
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn table(&self, type_name: &str) -> Option<&'static Table> {
        self.types.iter().find(|t| t.name == type_name).map(|t| t.table)
    }

    pub(crate) fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }
}

use std::collections::{BTreeMap, BTreeSet};

use super::{
    AttributeDecl, AttributeKind, CallTarget, DataStructureSpec, Expression, FunctionDecl, LockStatement,
    LockTarget, SpecError, Statement, TypeDecl,
};
use crate::types::{Value, ValueType};

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn ident(name: &str) -> Result<(), SpecError> {
    if is_identifier(name) {
        Ok(())
    } else {
        Err(SpecError::InvalidIdentifier(name.to_string()))
    }
}

fn type_err(msg: impl Into<String>) -> SpecError {
    SpecError::TypeError(msg.into())
}

/// Static type of an expression. A null constant has no target type yet.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ExprTy {
    Known(ValueType),
    Null,
}

impl ExprTy {
    fn fits(&self, ty: &ValueType) -> bool {
        match self {
            ExprTy::Known(t) => t == ty,
            ExprTy::Null => ty.is_pointer(),
        }
    }

    fn describe(&self) -> String {
        match self {
            ExprTy::Known(t) => t.to_string(),
            ExprTy::Null => "null".into(),
        }
    }
}

pub(crate) fn value_type_ok(ty: &ValueType, this: &str, composed: &BTreeMap<String, TypeDecl>) -> Result<(), SpecError> {
    match ty {
        ValueType::FixedString(0) => Err(SpecError::InvalidAttribute("fixed string length must be positive".into())),
        ValueType::RecordPtr(t) if t != this && !composed.contains_key(t) => Err(SpecError::UnknownSymbol(t.clone())),
        _ => Ok(()),
    }
}

pub(crate) fn check_attribute(
    decl: &AttributeDecl,
    this: &str,
    composed: &BTreeMap<String, TypeDecl>,
) -> Result<(), SpecError> {
    ident(&decl.name)?;
    match &decl.kind {
        AttributeKind::Primitive { ty, default } => {
            if matches!(ty, ValueType::Void | ValueType::RecordPtr(_)) {
                return Err(SpecError::InvalidAttribute(format!("{}: primitive attribute of type {ty}", decl.name)));
            }
            value_type_ok(ty, this, composed)?;
            if !default.matches(ty) {
                return Err(type_err(format!("default {default} of {} does not fit {ty}", decl.name)));
            }
        }
        AttributeKind::Embedded(t) => {
            if t == this {
                return Err(SpecError::CyclicEmbedding(t.clone()));
            }
            if !composed.contains_key(t) {
                return Err(SpecError::UnknownSymbol(t.clone()));
            }
            if embeds_transitively(t, this, composed) {
                return Err(SpecError::CyclicEmbedding(t.clone()));
            }
        }
        AttributeKind::Pointer(t) => value_type_ok(&ValueType::RecordPtr(t.clone()), this, composed)?,
        AttributeKind::Array { element, len } => {
            if *len == 0 {
                return Err(SpecError::InvalidAttribute(format!("{}: array length must be positive", decl.name)));
            }
            if *element == ValueType::Void {
                return Err(SpecError::InvalidAttribute(format!("{}: void array element", decl.name)));
            }
            if let ValueType::RecordPtr(t) = element {
                if t == this || embeds_transitively(t, this, composed) {
                    return Err(SpecError::CyclicEmbedding(t.clone()));
                }
            }
            value_type_ok(element, this, composed)?;
        }
        AttributeKind::Map { key, value } => {
            if matches!(key, ValueType::Void | ValueType::F64 | ValueType::RecordPtr(_)) {
                return Err(SpecError::InvalidAttribute(format!("{}: unsupported map key type {key}", decl.name)));
            }
            if *value == ValueType::Void {
                return Err(SpecError::InvalidAttribute(format!("{}: void map value", decl.name)));
            }
            value_type_ok(key, this, composed)?;
            value_type_ok(value, this, composed)?;
        }
    }
    Ok(())
}

/// Does `from` (transitively, by embedding or array elements) contain a
/// record of type `target`?
pub(crate) fn embeds_transitively(from: &str, target: &str, composed: &BTreeMap<String, TypeDecl>) -> bool {
    let mut stack = vec![from.to_string()];
    let mut seen = BTreeSet::new();
    while let Some(t) = stack.pop() {
        if t == target {
            return true;
        }
        if !seen.insert(t.clone()) {
            continue;
        }
        if let Some(decl) = composed.get(&t) {
            for a in &decl.attributes {
                match &a.kind {
                    AttributeKind::Embedded(inner) => stack.push(inner.clone()),
                    AttributeKind::Array { element: ValueType::RecordPtr(inner), .. } => stack.push(inner.clone()),
                    _ => {}
                }
            }
        }
    }
    false
}

/// Type checker for statements of one function.
pub(crate) struct Checker<'a> {
    pub this: &'a TypeDecl,
    pub composed: &'a BTreeMap<String, TypeDecl>,
    pub func: &'a FunctionDecl,
    pub allow_locks: bool,
}

impl<'a> Checker<'a> {
    fn lookup(&self, name: &str) -> Option<&'a TypeDecl> {
        if name == self.this.name {
            Some(self.this)
        } else {
            self.composed.get(name)
        }
    }

    fn var(&self, name: &str) -> Result<&'a ValueType, SpecError> {
        self.func.var_type(name).ok_or_else(|| SpecError::UnknownSymbol(name.to_string()))
    }

    fn attr(&self, name: &str) -> Result<&'a AttributeDecl, SpecError> {
        self.this.attribute(name).ok_or_else(|| SpecError::UnknownSymbol(name.to_string()))
    }

    pub fn expr(&self, e: &Expression) -> Result<ExprTy, SpecError> {
        Ok(match e {
            Expression::Constant(Value::Ptr(r)) if r.is_null() => ExprTy::Null,
            Expression::Constant(Value::Ptr(_)) => return Err(type_err("only null pointer constants are allowed")),
            Expression::Constant(v) => ExprTy::Known(match v {
                Value::I8(_) => ValueType::I8,
                Value::I16(_) => ValueType::I16,
                Value::I32(_) => ValueType::I32,
                Value::I64(_) => ValueType::I64,
                Value::F64(_) => ValueType::F64,
                Value::Bool(_) => ValueType::Bool,
                Value::Str(s) => ValueType::FixedString(s.len() + 1),
                Value::Void | Value::Ptr(_) => return Err(type_err("void constant")),
            }),
            Expression::Var(v) => ExprTy::Known(self.var(v)?.clone()),
            Expression::Add(a, b) | Expression::Subtract(a, b) => {
                let (ta, tb) = (self.expr(a)?, self.expr(b)?);
                match (&ta, &tb) {
                    (ExprTy::Known(x), ExprTy::Known(y)) if x == y && x.is_numeric() => ta,
                    _ => {
                        return Err(type_err(format!(
                            "arithmetic on {} and {}",
                            ta.describe(),
                            tb.describe()
                        )))
                    }
                }
            }
            Expression::Eq(a, b) => {
                let (ta, tb) = (self.expr(a)?, self.expr(b)?);
                let ok = match (&ta, &tb) {
                    (ExprTy::Known(ValueType::FixedString(_)), _) | (_, ExprTy::Known(ValueType::FixedString(_))) => false,
                    (ExprTy::Known(x), ExprTy::Known(y)) => x == y,
                    (ExprTy::Null, ExprTy::Known(x)) | (ExprTy::Known(x), ExprTy::Null) => x.is_pointer(),
                    (ExprTy::Null, ExprTy::Null) => true,
                };
                if !ok {
                    return Err(type_err(format!("comparison of {} and {}", ta.describe(), tb.describe())));
                }
                ExprTy::Known(ValueType::Bool)
            }
            Expression::IsNullPtr(a) => match self.expr(a)? {
                ExprTy::Null => ExprTy::Known(ValueType::Bool),
                ExprTy::Known(t) if t.is_pointer() => ExprTy::Known(ValueType::Bool),
                ExprTy::Known(t) => return Err(type_err(format!("isnull on {t}"))),
            },
        })
    }

    fn expect(&self, e: &Expression, ty: &ValueType, what: &str) -> Result<(), SpecError> {
        let t = self.expr(e)?;
        if t.fits(ty) {
            Ok(())
        } else {
            Err(type_err(format!("{what}: expected {ty}, found {}", t.describe())))
        }
    }

    fn expect_var(&self, var: &str, ty: &ValueType, what: &str) -> Result<(), SpecError> {
        let t = self.var(var)?;
        if t == ty {
            Ok(())
        } else {
            Err(type_err(format!("{what}: variable {var} is {t}, expected {ty}")))
        }
    }

    fn index_expr(&self, e: &Expression) -> Result<(), SpecError> {
        match self.expr(e)? {
            ExprTy::Known(t) if t.is_integer() => Ok(()),
            t => Err(type_err(format!("array index must be an integer, found {}", t.describe()))),
        }
    }

    /// Scalar slot type of a plain (primitive or pointer) attribute.
    fn scalar_attr(&self, name: &str) -> Result<ValueType, SpecError> {
        match &self.attr(name)?.kind {
            AttributeKind::Primitive { ty, .. } => Ok(ty.clone()),
            AttributeKind::Pointer(t) => Ok(ValueType::RecordPtr(t.clone())),
            _ => Err(type_err(format!("{name} is not a scalar attribute"))),
        }
    }

    fn array_attr(&self, name: &str) -> Result<&'a ValueType, SpecError> {
        match &self.attr(name)?.kind {
            AttributeKind::Array { element, .. } => Ok(element),
            _ => Err(type_err(format!("{name} is not an array attribute"))),
        }
    }

    fn map_attr(&self, name: &str) -> Result<(&'a ValueType, &'a ValueType), SpecError> {
        match &self.attr(name)?.kind {
            AttributeKind::Map { key, value } => Ok((key, value)),
            _ => Err(type_err(format!("{name} is not a map attribute"))),
        }
    }

    fn lock_target(&self, target: &LockTarget) -> Result<(), SpecError> {
        match target {
            LockTarget::This => Ok(()),
            LockTarget::Var(v) => match self.var(v)? {
                ValueType::RecordPtr(_) => Ok(()),
                t => Err(type_err(format!("lock target {v} is {t}"))),
            },
            LockTarget::Embedded(a) => match &self.attr(a)?.kind {
                AttributeKind::Embedded(_) => Ok(()),
                _ => Err(type_err(format!("{a} is not embedded"))),
            },
            LockTarget::ArrayElement { attr, index } => {
                self.array_attr(attr)?;
                self.index_expr(index)
            }
            LockTarget::MapEntry { attr, key } => {
                let (k, _) = self.map_attr(attr)?;
                self.expect(key, k, "map key")
            }
        }
    }

    /// Checks one statement. Branches of a conditional are checked only
    /// when `deep` is set.
    pub fn statement(&self, s: &Statement, deep: bool) -> Result<(), SpecError> {
        match s {
            Statement::Read { attr, dst } => {
                let ty = self.scalar_attr(attr)?;
                self.expect_var(dst, &ty, "read destination")
            }
            Statement::Update { attr, src } => {
                let ty = self.scalar_attr(attr)?;
                self.expect_var(src, &ty, "update source")
            }
            Statement::ArrayRead { attr, index, dst } => {
                let elem = self.array_attr(attr)?;
                self.index_expr(index)?;
                self.expect_var(dst, elem, "array read destination")
            }
            Statement::ArrayUpdate { attr, index, src } => {
                let elem = self.array_attr(attr)?;
                if elem.is_pointer() {
                    return Err(type_err(format!("{attr} holds records; update them through method calls")));
                }
                self.index_expr(index)?;
                self.expect_var(src, elem, "array update source")
            }
            Statement::MapRead { attr, key, dst } => {
                let (k, v) = self.map_attr(attr)?;
                self.expect(key, k, "map key")?;
                self.expect_var(dst, v, "map read destination")
            }
            Statement::MapUpdate { attr, key, src } | Statement::MapInsert { attr, key, src } => {
                let (k, v) = self.map_attr(attr)?;
                self.expect(key, k, "map key")?;
                self.expect_var(src, v, "map source")
            }
            Statement::MapContains { attr, key, dst } => {
                let (k, _) = self.map_attr(attr)?;
                self.expect(key, k, "map key")?;
                self.expect_var(dst, &ValueType::Bool, "contains destination")
            }
            Statement::MapErase { attr, key } => {
                let (k, _) = self.map_attr(attr)?;
                self.expect(key, k, "map key")
            }
            Statement::Assign { dst, expr } => {
                let ty = self.var(dst)?;
                self.expect(expr, ty, "assignment")
            }
            Statement::Conditional { cond, then_branch, else_branch } => {
                self.expect(cond, &ValueType::Bool, "condition")?;
                if deep {
                    for s in then_branch.iter().chain(else_branch) {
                        self.statement(s, true)?;
                    }
                }
                Ok(())
            }
            Statement::Create { ty, dst } => {
                if ty == &self.this.name || !self.composed.contains_key(ty) {
                    return Err(SpecError::UnknownSymbol(ty.clone()));
                }
                self.expect_var(dst, &ValueType::RecordPtr(ty.clone()), "create destination")
            }
            Statement::Delete { var } => match self.var(var)? {
                ValueType::RecordPtr(_) => Ok(()),
                t => Err(type_err(format!("delete of {var}: {t}"))),
            },
            Statement::MethodCall { target, function, args, result } => {
                let target_ty = match target {
                    CallTarget::Var(v) => match self.var(v)? {
                        ValueType::RecordPtr(t) => t,
                        t => return Err(type_err(format!("call target {v} is {t}"))),
                    },
                    CallTarget::Embedded(a) => match &self.attr(a)?.kind {
                        AttributeKind::Embedded(t) => t,
                        _ => return Err(type_err(format!("{a} is not an embedded attribute"))),
                    },
                };
                let decl = self.lookup(target_ty).ok_or_else(|| SpecError::UnknownSymbol(target_ty.clone()))?;
                let callee = decl
                    .function(function)
                    .ok_or_else(|| SpecError::UnknownSymbol(format!("{target_ty}.{function}")))?;
                if callee.params.len() != args.len() {
                    return Err(type_err(format!(
                        "{target_ty}.{function} takes {} arguments, got {}",
                        callee.params.len(),
                        args.len()
                    )));
                }
                for (p, a) in callee.params.iter().zip(args) {
                    if p.by_pointer {
                        match a {
                            Expression::Var(v) => self.expect_var(v, &p.ty, "pointer argument")?,
                            _ => return Err(type_err(format!("pointer parameter {} needs a variable", p.name))),
                        }
                    } else {
                        self.expect(a, &p.ty, "argument")?;
                    }
                }
                if let Some(r) = result {
                    if callee.return_type == ValueType::Void {
                        return Err(type_err(format!("{target_ty}.{function} returns nothing")));
                    }
                    self.expect_var(r, &callee.return_type, "call result")?;
                }
                Ok(())
            }
            Statement::Return(None) => {
                if self.func.return_type == ValueType::Void {
                    Ok(())
                } else {
                    Err(type_err(format!("{} must return {}", self.func.name, self.func.return_type)))
                }
            }
            Statement::Return(Some(v)) => {
                if self.func.return_type == ValueType::Void {
                    return Err(type_err(format!("{} returns void", self.func.name)));
                }
                self.expect_var(v, &self.func.return_type, "return value")
            }
            Statement::Nop => Ok(()),
            Statement::Lock(l) => {
                if !self.allow_locks {
                    return Err(type_err("lock statements are only valid in injected specifications"));
                }
                match l {
                    LockStatement::AcquireShared(t) | LockStatement::AcquireExclusive(t) | LockStatement::Upgrade(t) => {
                        self.lock_target(t)
                    }
                    LockStatement::ReleaseAll => Ok(()),
                }
            }
        }
    }
}

/// Does every path through `body` end in a return?
pub(crate) fn always_returns(body: &[Statement]) -> bool {
    body.iter().any(|s| match s {
        Statement::Return(_) => true,
        Statement::Conditional { then_branch, else_branch, .. } => {
            always_returns(then_branch) && always_returns(else_branch)
        }
        _ => false,
    })
}

fn has_empty_then(body: &[Statement]) -> bool {
    body.iter().any(|s| match s {
        Statement::Conditional { then_branch, else_branch, .. } => {
            then_branch.is_empty() || has_empty_then(then_branch) || has_empty_then(else_branch)
        }
        _ => false,
    })
}

pub(crate) fn check_function_header(func: &FunctionDecl, this: &str, composed: &BTreeMap<String, TypeDecl>) -> Result<(), SpecError> {
    ident(&func.name)?;
    value_type_ok(&func.return_type, this, composed)?;
    let mut names = BTreeSet::new();
    for (name, ty) in func
        .params
        .iter()
        .map(|p| (&p.name, &p.ty))
        .chain(func.temporaries.iter().map(|t| (&t.name, &t.ty)))
    {
        ident(name)?;
        if *ty == ValueType::Void {
            return Err(type_err(format!("variable {name} cannot be void")));
        }
        value_type_ok(ty, this, composed)?;
        if !names.insert(name.as_str()) {
            return Err(SpecError::DuplicateVariable(name.clone()));
        }
    }
    Ok(())
}

/// Full structural and type validation of a specification.
pub fn validate_spec(spec: &DataStructureSpec) -> Result<(), SpecError> {
    for ty in spec.types() {
        ident(&ty.name)?;
        let mut names = BTreeSet::new();
        for a in &ty.attributes {
            check_attribute(a, &ty.name, &spec.composed)?;
            if !names.insert(a.name.as_str()) {
                return Err(SpecError::DuplicateAttribute(a.name.clone()));
            }
        }
        let mut fns = BTreeSet::new();
        for f in &ty.functions {
            if !fns.insert(f.name.as_str()) {
                return Err(SpecError::DuplicateFunction(f.name.clone()));
            }
            check_function_header(f, &ty.name, &spec.composed)?;
            let checker = Checker { this: ty, composed: &spec.composed, func: f, allow_locks: spec.cc_injected };
            for s in &f.body {
                checker.statement(s, true)?;
            }
            if has_empty_then(&f.body) {
                return Err(SpecError::EmptyThenBranch(f.name.clone()));
            }
            if !always_returns(&f.body) {
                return Err(SpecError::MissingReturn(f.name.clone()));
            }
        }
    }
    for e in &spec.exposed {
        if spec.root.function(e).is_none() {
            return Err(SpecError::UnknownExposedFunction(e.clone()));
        }
    }
    Ok(())
}

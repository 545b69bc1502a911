use std::fmt::Write;

use super::{AttributeKind, CallTarget, DataStructureSpec, Expression, LockStatement, LockTarget, Statement, TypeDecl};

fn expr(e: &Expression) -> String {
    match e {
        Expression::Constant(v) => v.to_string(),
        Expression::Var(v) => v.clone(),
        Expression::Add(a, b) => format!("({} + {})", expr(a), expr(b)),
        Expression::Subtract(a, b) => format!("({} - {})", expr(a), expr(b)),
        Expression::Eq(a, b) => format!("({} == {})", expr(a), expr(b)),
        Expression::IsNullPtr(a) => format!("isnull({})", expr(a)),
    }
}

fn target(t: &LockTarget) -> String {
    match t {
        LockTarget::This => "this".into(),
        LockTarget::Var(v) => v.clone(),
        LockTarget::Embedded(a) => format!("this.{a}"),
        LockTarget::ArrayElement { attr, index } => format!("{attr}[{}]", expr(index)),
        LockTarget::MapEntry { attr, key } => format!("{attr}[{}]", expr(key)),
    }
}

fn args(a: &[Expression]) -> String {
    a.iter().map(expr).collect::<Vec<_>>().join(", ")
}

/// Appends one line per statement, indented two spaces per nesting level.
pub fn dump_statements(out: &mut String, body: &[Statement], depth: usize) {
    let pad = "  ".repeat(depth);
    for s in body {
        let line = match s {
            Statement::Read { attr, dst } => format!("READ {attr} -> {dst}"),
            Statement::Update { attr, src } => format!("UPDATE {attr} <- {src}"),
            Statement::ArrayRead { attr, index, dst } => format!("ARRAY_READ {attr}[{}] -> {dst}", expr(index)),
            Statement::ArrayUpdate { attr, index, src } => format!("ARRAY_UPDATE {attr}[{}] <- {src}", expr(index)),
            Statement::MapRead { attr, key, dst } => format!("MAP_READ {attr}[{}] -> {dst}", expr(key)),
            Statement::MapUpdate { attr, key, src } => format!("MAP_UPDATE {attr}[{}] <- {src}", expr(key)),
            Statement::MapContains { attr, key, dst } => format!("MAP_CONTAINS {attr}[{}] -> {dst}", expr(key)),
            Statement::MapInsert { attr, key, src } => format!("MAP_INSERT {attr}[{}] <- {src}", expr(key)),
            Statement::MapErase { attr, key } => format!("MAP_ERASE {attr}[{}]", expr(key)),
            Statement::Assign { dst, expr: e } => format!("ASSIGN {dst} = {}", expr(e)),
            Statement::Conditional { cond, then_branch, else_branch } => {
                let _ = writeln!(out, "{pad}IF {}", expr(cond));
                dump_statements(out, then_branch, depth + 1);
                if !else_branch.is_empty() {
                    let _ = writeln!(out, "{pad}ELSE");
                    dump_statements(out, else_branch, depth + 1);
                }
                continue;
            }
            Statement::Create { ty, dst } => format!("CREATE {ty} -> {dst}"),
            Statement::Delete { var } => format!("DELETE {var}"),
            Statement::MethodCall { target: t, function, args: a, result } => {
                let recv = match t {
                    CallTarget::Var(v) => v.clone(),
                    CallTarget::Embedded(e) => format!("this.{e}"),
                };
                match result {
                    Some(r) => format!("CALL {recv}.{function}({}) -> {r}", args(a)),
                    None => format!("CALL {recv}.{function}({})", args(a)),
                }
            }
            Statement::Return(Some(v)) => format!("RETURN {v}"),
            Statement::Return(None) => "RETURN".into(),
            Statement::Nop => "NOP".into(),
            Statement::Lock(LockStatement::AcquireShared(t)) => format!("LOCK_S {}", target(t)),
            Statement::Lock(LockStatement::AcquireExclusive(t)) => format!("LOCK_X {}", target(t)),
            Statement::Lock(LockStatement::Upgrade(t)) => format!("UPGRADE {}", target(t)),
            Statement::Lock(LockStatement::ReleaseAll) => "RELEASE_ALL".into(),
        };
        let _ = writeln!(out, "{pad}{line}");
    }
}

fn dump_type(out: &mut String, ty: &TypeDecl, exposed: Option<&std::collections::BTreeSet<String>>) {
    let _ = writeln!(out, "  attributes:");
    for a in &ty.attributes {
        let line = match &a.kind {
            AttributeKind::Primitive { ty, default } => format!("{} : {ty} = {default}", a.name),
            AttributeKind::Pointer(t) => format!("{} : ptr<{t}> = null", a.name),
            AttributeKind::Embedded(t) => format!("{} : embedded<{t}> = new", a.name),
            AttributeKind::Array { element, len } => format!("{} : array<{element}; {len}> = zeroed", a.name),
            AttributeKind::Map { key, value } => format!("{} : map<{key}, {value}> = empty", a.name),
        };
        let _ = writeln!(out, "    {line}");
    }
    for f in &ty.functions {
        let params = f
            .params
            .iter()
            .map(|p| format!("{}{}: {}", if p.by_pointer { "&" } else { "" }, p.name, p.ty))
            .collect::<Vec<_>>()
            .join(", ");
        let tag = match exposed {
            Some(e) if e.contains(&f.name) => " exposed",
            _ => "",
        };
        let _ = writeln!(out, "  fn {}({params}) -> {}{tag}", f.name, f.return_type);
        for t in &f.temporaries {
            let _ = writeln!(out, "    let {} : {}", t.name, t.ty);
        }
        dump_statements(out, &f.body, 2);
    }
}

/// Textual form of a specification. Not meant to be parsed back.
pub fn dump_spec(spec: &DataStructureSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "spec {}{}", spec.name(), if spec.cc_injected { " (concurrent)" } else { "" });
    dump_type(&mut out, &spec.root, Some(&spec.exposed));
    for ty in spec.composed.values() {
        let _ = writeln!(out, "type {}", ty.name);
        dump_type(&mut out, ty, None);
    }
    out
}

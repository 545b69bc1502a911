//! Strict two-phase locking injection (NO_WAIT at runtime) and its static
//! checks.

use crate::analysis::{analyze, AnalysisError, FnKey, RWSetTable};
use crate::runtime::LockMode;
use crate::spec::{
    AttributeKind, CallTarget, DataStructureSpec, FunctionDecl, LockStatement, LockTarget, Statement, TypeDecl,
};
use crate::types::ValueType;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CcError {
    #[error("specification already has concurrency control")]
    AlreadyInjected,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

type Held = Vec<(LockTarget, LockMode)>;

fn held_mode(held: &Held, t: &LockTarget) -> Option<LockMode> {
    held.iter().find(|(h, _)| h == t).map(|(_, m)| *m)
}

fn grant(held: &mut Held, t: LockTarget, m: LockMode) {
    match held.iter_mut().find(|(h, _)| *h == t) {
        Some(entry) => entry.1 = entry.1.max(m),
        None => held.push((t, m)),
    }
}

fn meet(a: Option<Held>, b: Option<Held>) -> Option<Held> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(
            a.into_iter()
                .filter_map(|(t, m)| held_mode(&b, &t).map(|m2| (t, m.min(m2))))
                .collect(),
        ),
    }
}

/// Locks held on a variable's old value are meaningless once it is
/// reassigned.
fn invalidate(held: &mut Held, s: &Statement) {
    let mut vars: Vec<&str> = s.assigned_var().into_iter().collect();
    if let Statement::MethodCall { args, .. } = s {
        for a in args {
            if let crate::spec::Expression::Var(v) = a {
                vars.push(v);
            }
        }
    }
    for v in vars {
        held.retain(|(t, _)| !t.mentions(v));
    }
}

/// Lock targets a statement needs, in acquisition order. Var-target calls
/// and deletes are left out when `nascent` says the record is private.
pub fn lock_requirements(
    spec: &DataStructureSpec,
    rw: &RWSetTable,
    ty: &TypeDecl,
    func: &FunctionDecl,
    s: &Statement,
    nascent: bool,
) -> Vec<(LockTarget, LockMode)> {
    use LockMode::{Exclusive as X, Shared as S};
    let entry = |attr: &String, key: &crate::spec::Expression| LockTarget::MapEntry { attr: attr.clone(), key: key.clone() };
    let element =
        |attr: &String, index: &crate::spec::Expression| LockTarget::ArrayElement { attr: attr.clone(), index: index.clone() };
    match s {
        Statement::Read { .. } => vec![(LockTarget::This, S)],
        Statement::Update { .. } => vec![(LockTarget::This, X)],
        Statement::ArrayRead { attr, index, .. } => match ty.attribute(attr).map(|a| &a.kind) {
            // Element records are reached by pointer arithmetic; calls on
            // them lock them.
            Some(AttributeKind::Array { element: ValueType::RecordPtr(_), .. }) => vec![],
            _ => vec![(element(attr, index), S)],
        },
        Statement::ArrayUpdate { attr, index, .. } => vec![(element(attr, index), X)],
        Statement::MapContains { .. } => vec![(LockTarget::This, S)],
        Statement::MapRead { attr, key, .. } => vec![(LockTarget::This, S), (entry(attr, key), S)],
        Statement::MapUpdate { attr, key, .. } => vec![(LockTarget::This, S), (entry(attr, key), X)],
        Statement::MapInsert { .. } => vec![(LockTarget::This, X)],
        Statement::MapErase { attr, key } => vec![(LockTarget::This, X), (entry(attr, key), X)],
        Statement::Delete { var } if !nascent => vec![(LockTarget::Var(var.clone()), X)],
        Statement::MethodCall { target, function, .. } => {
            if nascent && matches!(target, CallTarget::Var(_)) {
                return vec![];
            }
            let callee = spec.call_target_type(ty, func, target).unwrap_or_default();
            let mode = if rw.is_const(&callee, function) { S } else { X };
            let t = match target {
                CallTarget::Var(v) => LockTarget::Var(v.clone()),
                CallTarget::Embedded(a) => LockTarget::Embedded(a.clone()),
            };
            vec![(t, mode)]
        }
        _ => vec![],
    }
}

struct Injector<'a> {
    spec: &'a DataStructureSpec,
    rw: &'a RWSetTable,
    ty: &'a TypeDecl,
    func: &'a FunctionDecl,
    key: FnKey,
    /// Transactional scope: locks This and releases before returning.
    scope: bool,
}

impl Injector<'_> {
    fn block(&self, body: &[Statement], prefix: &mut Vec<u32>, mut held: Option<Held>) -> (Vec<Statement>, Option<Held>) {
        let mut out = Vec::with_capacity(body.len() * 2);
        for (i, s) in body.iter().enumerate() {
            prefix.push(i as u32);
            let Some(h) = held.as_mut() else {
                out.push(s.clone());
                prefix.pop();
                continue;
            };
            let nascent = self.rw.is_nascent(&self.key.ty, &self.key.func, prefix);
            for (t, m) in lock_requirements(self.spec, self.rw, self.ty, self.func, s, nascent) {
                if t == LockTarget::This && !self.scope {
                    continue;
                }
                let stmt = match (held_mode(h, &t), m) {
                    (Some(have), need) if have >= need => continue,
                    (Some(LockMode::Shared), LockMode::Exclusive) => LockStatement::Upgrade(t.clone()),
                    (_, LockMode::Shared) => LockStatement::AcquireShared(t.clone()),
                    (_, LockMode::Exclusive) => LockStatement::AcquireExclusive(t.clone()),
                };
                out.push(Statement::Lock(stmt));
                grant(h, t, m);
            }
            match s {
                Statement::Conditional { cond, then_branch, else_branch } => {
                    prefix.push(0);
                    let (t, th) = self.block(then_branch, prefix, held.clone());
                    prefix.pop();
                    prefix.push(1);
                    let (e, eh) = self.block(else_branch, prefix, held.clone());
                    prefix.pop();
                    out.push(Statement::Conditional { cond: cond.clone(), then_branch: t, else_branch: e });
                    held = meet(th, eh);
                }
                Statement::Return(_) => {
                    if self.scope {
                        out.push(Statement::Lock(LockStatement::ReleaseAll));
                    }
                    out.push(s.clone());
                    held = None;
                }
                _ => {
                    invalidate(h, s);
                    out.push(s.clone());
                }
            }
            prefix.pop();
        }
        (out, held)
    }
}

/// Injects lock statements into every function. Functions of the top-level
/// type are transactional scopes; composed functions run under the lock
/// their caller took on the receiver.
pub fn inject_cc(spec: &DataStructureSpec, rw: &RWSetTable) -> Result<DataStructureSpec, CcError> {
    if spec.cc_injected {
        return Err(CcError::AlreadyInjected);
    }
    let mut out = spec.clone();
    for ty in spec.types() {
        let scope = ty.name == spec.root.name;
        for (fi, func) in ty.functions.iter().enumerate() {
            let inj = Injector { spec, rw, ty, func, key: FnKey::new(&ty.name, &func.name), scope };
            let (body, _) = inj.block(&func.body, &mut Vec::new(), Some(Vec::new()));
            out.type_decl_mut(&ty.name).expect("type").functions[fi].body = body;
        }
    }
    out.cc_injected = true;
    Ok(out)
}

/// Analyzes and injects in one step.
pub fn make_concurrent(spec: &DataStructureSpec) -> Result<DataStructureSpec, CcError> {
    let rw = analyze(spec)?;
    inject_cc(spec, &rw)
}

fn strip_body(body: &[Statement]) -> Vec<Statement> {
    body.iter()
        .filter(|s| !s.is_lock())
        .map(|s| match s {
            Statement::Conditional { cond, then_branch, else_branch } => Statement::Conditional {
                cond: cond.clone(),
                then_branch: strip_body(then_branch),
                else_branch: strip_body(else_branch),
            },
            other => other.clone(),
        })
        .collect()
}

/// Removes every lock statement.
pub fn strip_cc(spec: &DataStructureSpec) -> DataStructureSpec {
    let mut out = spec.clone();
    for ty in out.types_mut() {
        for f in &mut ty.functions {
            f.body = strip_body(&f.body);
        }
    }
    out.cc_injected = false;
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{function} path {path}: {message}")]
pub struct CcViolation {
    pub function: String,
    pub path: usize,
    pub message: String,
}

/// Every complete control-flow path through `body`, as the statements it
/// executes (conditionals themselves are omitted).
pub fn enumerate_paths(body: &[Statement]) -> Vec<Vec<&Statement>> {
    fn go<'a>(body: &'a [Statement], open: Vec<Vec<&'a Statement>>, done: &mut Vec<Vec<&'a Statement>>) -> Vec<Vec<&'a Statement>> {
        let mut open = open;
        for s in body {
            if open.is_empty() {
                break;
            }
            match s {
                Statement::Conditional { then_branch, else_branch, .. } => {
                    let mut next = go(then_branch, open.clone(), done);
                    next.extend(go(else_branch, open, done));
                    open = next;
                }
                Statement::Return(_) => {
                    for mut p in open.drain(..) {
                        p.push(s);
                        done.push(p);
                    }
                }
                _ => {
                    for p in &mut open {
                        p.push(s);
                    }
                }
            }
        }
        open
    }
    let mut done = Vec::new();
    let open = go(body, vec![Vec::new()], &mut done);
    done.extend(open);
    done
}

/// Static two-phase, strictness and coverage checks by explicit path
/// enumeration, independent of the injector's dataflow.
pub fn verify(spec: &DataStructureSpec) -> Result<(), CcViolation> {
    let rw = analyze(&strip_cc(spec)).map_err(|e| CcViolation {
        function: spec.name().to_string(),
        path: 0,
        message: e.to_string(),
    })?;
    for ty in spec.types() {
        let scope = ty.name == spec.root.name;
        for f in &ty.functions {
            for (pi, path) in enumerate_paths(&f.body).into_iter().enumerate() {
                check_path(spec, &rw, ty, f, scope, &path)
                    .map_err(|message| CcViolation { function: format!("{}.{}", ty.name, f.name), path: pi, message })?;
            }
        }
    }
    Ok(())
}

fn check_path(
    spec: &DataStructureSpec,
    rw: &RWSetTable,
    ty: &TypeDecl,
    f: &FunctionDecl,
    scope: bool,
    path: &[&Statement],
) -> Result<(), String> {
    let mut held: Held = Vec::new();
    if !scope {
        held.push((LockTarget::This, LockMode::Exclusive));
    }
    // Records created on this path and not yet published on it.
    let mut private: Vec<String> = Vec::new();
    let mut released = false;
    let mut releases = 0;
    for (i, s) in path.iter().enumerate() {
        match s {
            Statement::Lock(l) => match l {
                LockStatement::ReleaseAll => {
                    if !scope {
                        return Err("release inside a composed function".into());
                    }
                    releases += 1;
                    released = true;
                    if !matches!(path.get(i + 1), Some(Statement::Return(_))) {
                        return Err("release not immediately before return".into());
                    }
                }
                LockStatement::AcquireShared(t) | LockStatement::AcquireExclusive(t) | LockStatement::Upgrade(t) => {
                    if released {
                        return Err(format!("acquisition of {t:?} after release"));
                    }
                    let mode = match l {
                        LockStatement::AcquireShared(_) => LockMode::Shared,
                        // After a branch join the injector only knows the weaker
                        // mode, so a path may upgrade a lock it already holds
                        // exclusively; the runtime treats that as a no-op.
                        LockStatement::Upgrade(_) => {
                            if held_mode(&held, t).is_none() {
                                return Err(format!("upgrade of {t:?} without holding it"));
                            }
                            LockMode::Exclusive
                        }
                        _ => LockMode::Exclusive,
                    };
                    grant(&mut held, t.clone(), mode);
                }
            },
            _ => {
                let nascent = match s {
                    Statement::MethodCall { target: CallTarget::Var(v), .. } | Statement::Delete { var: v } => {
                        private.contains(v)
                    }
                    _ => false,
                };
                for (t, need) in lock_requirements(spec, rw, ty, f, s, nascent) {
                    if !held_mode(&held, &t).is_some_and(|m| m >= need) {
                        return Err(format!("{s:?} not covered by a {need:?} lock on {t:?}"));
                    }
                }
                match s {
                    Statement::Create { dst, .. } => {
                        private.retain(|v| v != dst);
                        private.push(dst.clone());
                    }
                    Statement::Update { src, .. }
                    | Statement::ArrayUpdate { src, .. }
                    | Statement::MapUpdate { src, .. }
                    | Statement::MapInsert { src, .. } => private.retain(|v| v != src),
                    Statement::Assign { dst, expr } => private.retain(|v| v != dst && !expr.mentions(v)),
                    Statement::MethodCall { args, result, .. } => private.retain(|v| {
                        result.as_deref() != Some(v.as_str()) && !args.iter().any(|a| a.mentions(v))
                    }),
                    Statement::Delete { var } => private.retain(|v| v != var),
                    other => {
                        if let Some(d) = other.assigned_var() {
                            private.retain(|v| v != d);
                        }
                    }
                }
                invalidate(&mut held, s);
            }
        }
    }
    if scope && releases != 1 {
        return Err(format!("{releases} releases on path"));
    }
    Ok(())
}

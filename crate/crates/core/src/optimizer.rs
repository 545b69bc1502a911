//! Logical optimization passes over serial specifications.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::analysis::{analyze, annotate_const, qualified, AnalysisError, FnKey, RWSetTable};
use crate::spec::{AttributeKind, DataStructureSpec, Expression, Statement};
use crate::types::{Value, ValueType};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum OptimizeError {
    #[error("optimizer input already has concurrency control")]
    AlreadyInjected,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassReport {
    pub pass: &'static str,
    /// Qualified `Type.func` names.
    pub removed_functions: Vec<String>,
    /// Qualified `Type.attr` names.
    pub removed_attributes: Vec<String>,
    pub folded_attributes: Vec<(String, Value)>,
    pub removed_statements: usize,
    /// Round of the fixed-point loop this report belongs to (from 1).
    pub iterations: usize,
}

impl PassReport {
    fn new(pass: &'static str) -> Self {
        Self {
            pass,
            removed_functions: Vec::new(),
            removed_attributes: Vec::new(),
            folded_attributes: Vec::new(),
            removed_statements: 0,
            iterations: 1,
        }
    }

    pub fn changed(&self) -> bool {
        !self.removed_functions.is_empty()
            || !self.removed_attributes.is_empty()
            || !self.folded_attributes.is_empty()
            || self.removed_statements > 0
    }
}

impl fmt::Display for PassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let folded: Vec<String> = self.folded_attributes.iter().map(|(a, v)| format!("{a}={v}")).collect();
        write!(
            f,
            "pass={} round={} removed_fns=[{}] removed_attrs=[{}] folded=[{}] removed_stmts={}",
            self.pass,
            self.iterations,
            self.removed_functions.join(", "),
            self.removed_attributes.join(", "),
            folded.join(", "),
            self.removed_statements
        )
    }
}

/// Deletes composed-type functions unreachable from the exposed set.
pub fn prune_unused_functions(spec: &DataStructureSpec, rw: &RWSetTable) -> (DataStructureSpec, PassReport) {
    let mut report = PassReport::new("prune-unused-functions");
    let mut reachable: BTreeSet<FnKey> = BTreeSet::new();
    let mut stack: Vec<FnKey> = spec.exposed.iter().map(|e| FnKey::new(spec.name(), e)).collect();
    while let Some(k) = stack.pop() {
        if !reachable.insert(k.clone()) {
            continue;
        }
        if let Some(f) = rw.functions.get(&k) {
            stack.extend(f.calls.iter().filter(|c| !reachable.contains(*c)).cloned());
        }
    }
    let mut out = spec.clone();
    for ty in out.composed.values_mut() {
        let name = ty.name.clone();
        ty.functions.retain(|f| {
            let keep = reachable.contains(&FnKey::new(&name, &f.name));
            if !keep {
                report.removed_functions.push(format!("{name}.{}", f.name));
            }
            keep
        });
    }
    (out, report)
}

/// Deletes attributes that no function reads or writes.
pub fn remove_unused_attributes(spec: &DataStructureSpec, rw: &RWSetTable) -> (DataStructureSpec, PassReport) {
    let mut report = PassReport::new("remove-unused-attributes");
    let mut out = spec.clone();
    for ty in out.types_mut() {
        let name = ty.name.clone();
        ty.attributes.retain(|a| {
            let q = qualified(&name, &a.name);
            let keep = rw.is_read(&q) || rw.is_written(&q);
            if !keep {
                report.removed_attributes.push(q);
            }
            keep
        });
    }
    (out, report)
}

fn map_body(body: &mut Vec<Statement>, f: &mut impl FnMut(&mut Statement)) {
    for s in body.iter_mut() {
        f(s);
        if let Statement::Conditional { then_branch, else_branch, .. } = s {
            map_body(then_branch, f);
            map_body(else_branch, f);
        }
    }
}

/// Removes statements matching `drop`, recursively. A then branch left
/// empty gets a single Nop. Returns the number removed.
fn retain_body(body: &mut Vec<Statement>, drop: &mut impl FnMut(&Statement) -> bool) -> usize {
    let before = body.len();
    body.retain(|s| !drop(s));
    let mut removed = before - body.len();
    for s in body.iter_mut() {
        if let Statement::Conditional { then_branch, else_branch, .. } = s {
            removed += retain_body(then_branch, drop);
            removed += retain_body(else_branch, drop);
            if then_branch.is_empty() {
                then_branch.push(Statement::Nop);
            }
        }
    }
    removed
}

/// Replaces reads of never-written primitive attributes with their
/// literal default and deletes the attributes.
pub fn fold_readonly_attributes(spec: &DataStructureSpec, rw: &RWSetTable) -> (DataStructureSpec, PassReport) {
    let mut report = PassReport::new("fold-readonly-attributes");
    let mut out = spec.clone();
    for ty in out.types_mut() {
        let name = ty.name.clone();
        let mut folded: BTreeMap<String, Value> = BTreeMap::new();
        ty.attributes.retain(|a| {
            let q = qualified(&name, &a.name);
            match &a.kind {
                AttributeKind::Primitive { default, .. } if rw.is_read(&q) && !rw.is_written(&q) => {
                    folded.insert(a.name.clone(), default.clone());
                    report.folded_attributes.push((q, default.clone()));
                    false
                }
                _ => true,
            }
        });
        if folded.is_empty() {
            continue;
        }
        for f in &mut ty.functions {
            map_body(&mut f.body, &mut |s| {
                if let Statement::Read { attr, dst } = s {
                    if let Some(v) = folded.get(attr) {
                        *s = Statement::Assign { dst: std::mem::take(dst), expr: Expression::Constant(v.clone()) };
                    }
                }
            });
        }
    }
    (out, report)
}

fn is_attribute_write(s: &Statement) -> bool {
    matches!(
        s,
        Statement::Update { .. }
            | Statement::ArrayUpdate { .. }
            | Statement::MapUpdate { .. }
            | Statement::MapInsert { .. }
            | Statement::MapErase { .. }
    )
}

/// Deletes attributes that are written but never read, with every
/// statement writing them. Calls to functions that this leaves without
/// any effect (no writes, no allocation, void result, no by-pointer
/// parameters) are removed as well.
pub fn remove_writeonly_attributes(
    spec: &DataStructureSpec,
    rw: &RWSetTable,
) -> Result<(DataStructureSpec, PassReport), AnalysisError> {
    let mut report = PassReport::new("remove-writeonly-attributes");
    let mut out = spec.clone();
    let mut touched: BTreeSet<FnKey> = BTreeSet::new();
    for ty in out.types_mut() {
        let name = ty.name.clone();
        let mut dead: BTreeSet<String> = BTreeSet::new();
        ty.attributes.retain(|a| {
            let q = qualified(&name, &a.name);
            let keep = !(rw.is_written(&q) && !rw.is_read(&q));
            if !keep {
                dead.insert(a.name.clone());
                report.removed_attributes.push(q);
            }
            keep
        });
        if dead.is_empty() {
            continue;
        }
        for f in &mut ty.functions {
            let n = retain_body(&mut f.body, &mut |s| {
                is_attribute_write(s) && s.attribute().is_some_and(|a| dead.contains(a))
            });
            if n > 0 {
                touched.insert(FnKey::new(&name, &f.name));
                report.removed_statements += n;
            }
        }
    }

    while !touched.is_empty() {
        let rw = analyze(&out)?;
        let inert: BTreeSet<FnKey> = touched
            .iter()
            .filter(|k| {
                let f = out.type_decl(&k.ty).and_then(|t| t.function(&k.func));
                let e = rw.functions.get(*k);
                match (f, e) {
                    (Some(f), Some(e)) => {
                        e.write.is_empty()
                            && !e.allocates
                            && f.return_type == ValueType::Void
                            && f.params.iter().all(|p| !p.by_pointer)
                    }
                    _ => false,
                }
            })
            .cloned()
            .collect();
        let mut next = BTreeSet::new();
        if !inert.is_empty() {
            let snapshot = out.clone();
            for ty in out.types_mut() {
                let tname = ty.name.clone();
                let decl = snapshot.type_decl(&tname).expect("type").clone();
                for f in &mut ty.functions {
                    let fdecl = decl.function(&f.name).expect("function").clone();
                    let n = retain_body(&mut f.body, &mut |s| match s {
                        Statement::MethodCall { target, function, result: None, .. } => snapshot
                            .call_target_type(&decl, &fdecl, target)
                            .is_some_and(|callee| inert.contains(&FnKey::new(&callee, function))),
                        _ => false,
                    });
                    if n > 0 {
                        next.insert(FnKey::new(&tname, &f.name));
                        report.removed_statements += n;
                    }
                }
            }
        }
        touched = next;
    }
    Ok((out, report))
}

/// Runs the four passes in order, re-analyzing before each, until a whole
/// round changes nothing.
pub fn optimize(spec: &DataStructureSpec) -> Result<(DataStructureSpec, Vec<PassReport>), OptimizeError> {
    if spec.cc_injected {
        return Err(OptimizeError::AlreadyInjected);
    }
    let mut cur = spec.clone();
    let mut reports = Vec::new();
    for round in 1.. {
        let mut changed = false;
        let mut record = |mut r: PassReport, reports: &mut Vec<PassReport>| {
            r.iterations = round;
            changed |= r.changed();
            reports.push(r);
        };
        let (next, r) = prune_unused_functions(&cur, &analyze(&cur)?);
        record(r, &mut reports);
        let (next, r) = remove_unused_attributes(&next, &analyze(&next)?);
        record(r, &mut reports);
        let (next, r) = fold_readonly_attributes(&next, &analyze(&next)?);
        record(r, &mut reports);
        let (next, r) = remove_writeonly_attributes(&next, &analyze(&next)?)?;
        record(r, &mut reports);
        cur = next;
        if !changed {
            break;
        }
    }
    annotate_const(&mut cur)?;
    Ok((cur, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{AttributeDecl, Param, SpecBuilder};

    /// a is written only; b is read only via a function that also writes
    /// c, and c is read only by that function.
    fn toy() -> DataStructureSpec {
        let mut b = SpecBuilder::new("Toy").unwrap();
        b.add_attribute(AttributeDecl::primitive("stats", ValueType::I64, Value::I64(0))).unwrap();
        b.add_attribute(AttributeDecl::primitive("limit", ValueType::I64, Value::I64(7))).unwrap();
        b.add_attribute(AttributeDecl::primitive("debug", ValueType::I64, Value::I64(0))).unwrap();
        b.add_attribute(AttributeDecl::primitive("v", ValueType::I64, Value::I64(0))).unwrap();
        let mut f = b.create_function("put", ValueType::I64, vec![Param::value("x", ValueType::I64)]).unwrap();
        f.temps(&[("l", ValueType::I64), ("s", ValueType::I64)]).unwrap();
        f.append(Statement::read("limit", "l")).unwrap();
        f.append(Statement::update("v", "x")).unwrap();
        f.append(Statement::update("stats", "x")).unwrap();
        f.append(Statement::ret("l")).unwrap();
        let mut f = b.create_function("get", ValueType::I64, vec![]).unwrap();
        f.temps(&[("t", ValueType::I64)]).unwrap();
        f.append(Statement::read("v", "t")).unwrap();
        f.append(Statement::ret("t")).unwrap();
        b.build(&["put", "get"]).unwrap()
    }

    #[test]
    fn each_pass_does_its_part() {
        let (opt, reports) = optimize(&toy()).unwrap();
        let names: Vec<&str> = opt.root.attributes.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, vec!["v"]);
        let find = |p: &str| reports.iter().find(|r| r.pass == p && r.iterations == 1).unwrap();
        assert_eq!(find("remove-unused-attributes").removed_attributes, vec!["Toy.debug"]);
        assert_eq!(find("fold-readonly-attributes").folded_attributes, vec![("Toy.limit".into(), Value::I64(7))]);
        assert_eq!(find("remove-writeonly-attributes").removed_attributes, vec!["Toy.stats"]);
        let put = opt.root.function("put").unwrap();
        assert_eq!(put.body[0], Statement::assign("l", Expression::i64(7)));
        assert_eq!(put.body.len(), 3);
    }

    #[test]
    fn idempotent() {
        let (once, _) = optimize(&toy()).unwrap();
        let (twice, reports) = optimize(&once).unwrap();
        assert_eq!(once, twice);
        assert!(reports.iter().all(|r| !r.changed()));
        assert_eq!(reports.len(), 4);
    }

    #[test]
    fn emptied_then_branch_gets_nop() {
        let mut b = SpecBuilder::new("Flag").unwrap();
        b.add_attribute(AttributeDecl::primitive("w", ValueType::I64, Value::I64(0))).unwrap();
        let mut f = b
            .create_function("f", ValueType::Void, vec![Param::value("c", ValueType::Bool), Param::value("x", ValueType::I64)])
            .unwrap();
        let body = f.body();
        let (t, _) = f.conditional(body, Expression::var("c")).unwrap();
        f.append_to(t, Statement::update("w", "x")).unwrap();
        f.append(Statement::ret_void()).unwrap();
        let spec = b.build(&["f"]).unwrap();
        let (opt, _) = optimize(&spec).unwrap();
        match &opt.root.function("f").unwrap().body[0] {
            Statement::Conditional { then_branch, .. } => assert_eq!(then_branch, &vec![Statement::Nop]),
            other => panic!("unexpected {other:?}"),
        }
    }
}

//! Read/write sets, const deduction and nascent-reference dataflow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::spec::{CallTarget, DataStructureSpec, FunctionDecl, Statement, StatementPath, TypeDecl};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
}

/// Identifies a function by its owning type and name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FnKey {
    pub ty: String,
    pub func: String,
}

impl FnKey {
    pub fn new(ty: &str, func: &str) -> Self {
        Self { ty: ty.to_string(), func: func.to_string() }
    }
}

impl std::fmt::Display for FnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.ty, self.func)
    }
}

/// Transitive effects of one function. Attribute names are qualified as
/// `Type.attr`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionRw {
    pub read: BTreeSet<String>,
    pub write: BTreeSet<String>,
    /// Creates or deletes records, directly or through a callee.
    pub allocates: bool,
    pub is_const: bool,
    /// Direct callees.
    pub calls: BTreeSet<FnKey>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RWSetTable {
    pub functions: BTreeMap<FnKey, FunctionRw>,
    /// Per function, the nascent flag of every Var-target MethodCall and
    /// every Delete, keyed by statement path.
    pub nascent: BTreeMap<FnKey, BTreeMap<StatementPath, bool>>,
}

impl RWSetTable {
    pub fn get(&self, ty: &str, func: &str) -> Option<&FunctionRw> {
        self.functions.get(&FnKey::new(ty, func))
    }

    pub fn is_const(&self, ty: &str, func: &str) -> bool {
        self.get(ty, func).is_some_and(|f| f.is_const)
    }

    pub fn is_nascent(&self, ty: &str, func: &str, path: &[u32]) -> bool {
        self.nascent.get(&FnKey::new(ty, func)).and_then(|m| m.get(path)).copied().unwrap_or(false)
    }

    /// Attribute appears in some function's read set.
    pub fn is_read(&self, qualified: &str) -> bool {
        self.functions.values().any(|f| f.read.contains(qualified))
    }

    pub fn is_written(&self, qualified: &str) -> bool {
        self.functions.values().any(|f| f.write.contains(qualified))
    }

    /// One line per function: `fn <name> const=<bool> R={..} W={..}`.
    /// Root functions are printed bare, composed ones as `Type.func`.
    pub fn dump(&self, spec: &DataStructureSpec) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "spec {}", spec.name());
        let set = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
        for (key, f) in &self.functions {
            let name = if key.ty == spec.name() { key.func.clone() } else { key.to_string() };
            let _ = writeln!(out, "fn {name} const={} R={{{}}} W={{{}}}", f.is_const, set(&f.read), set(&f.write));
        }
        out
    }
}

pub fn qualified(ty: &str, attr: &str) -> String {
    format!("{ty}.{attr}")
}

fn direct_effects(
    spec: &DataStructureSpec,
    ty: &TypeDecl,
    func: &FunctionDecl,
) -> Result<FunctionRw, AnalysisError> {
    let mut rw = FunctionRw::default();
    let mut err = None;
    crate::spec::walk_statements(&func.body, &mut |s| match s {
        Statement::Read { attr, .. }
        | Statement::ArrayRead { attr, .. }
        | Statement::MapRead { attr, .. }
        | Statement::MapContains { attr, .. } => {
            rw.read.insert(qualified(&ty.name, attr));
        }
        Statement::Update { attr, .. }
        | Statement::ArrayUpdate { attr, .. }
        | Statement::MapUpdate { attr, .. }
        | Statement::MapInsert { attr, .. }
        | Statement::MapErase { attr, .. } => {
            rw.write.insert(qualified(&ty.name, attr));
        }
        Statement::Create { .. } | Statement::Delete { .. } => rw.allocates = true,
        Statement::MethodCall { target, function, .. } => {
            // Resolving an embedded receiver counts as a read of the
            // embedding attribute.
            if let CallTarget::Embedded(a) = target {
                rw.read.insert(qualified(&ty.name, a));
            }
            match spec.call_target_type(ty, func, target) {
                Some(callee_ty) if spec.type_decl(&callee_ty).is_some_and(|t| t.function(function).is_some()) => {
                    rw.calls.insert(FnKey::new(&callee_ty, function));
                }
                _ => err = Some(AnalysisError::UnknownSymbol(format!("{}.{function}", ty.name))),
            }
        }
        _ => {}
    });
    match err {
        Some(e) => Err(e),
        None => Ok(rw),
    }
}

/// Transitive read and write sets of every function, computed to a fixed
/// point over the call graph. `is_const` is left false; see
/// [`deduce_const`].
pub fn compute_rw_sets(spec: &DataStructureSpec) -> Result<RWSetTable, AnalysisError> {
    let mut functions = BTreeMap::new();
    for ty in spec.types() {
        for f in &ty.functions {
            functions.insert(FnKey::new(&ty.name, &f.name), direct_effects(spec, ty, f)?);
        }
    }
    loop {
        let mut changed = false;
        let keys: Vec<FnKey> = functions.keys().cloned().collect();
        for key in &keys {
            let calls = functions[key].calls.clone();
            for callee in &calls {
                let c = functions[callee].clone();
                let me = functions.get_mut(key).expect("present");
                let before = (me.read.len(), me.write.len(), me.allocates);
                me.read.extend(c.read);
                me.write.extend(c.write);
                me.allocates |= c.allocates;
                changed |= before != (me.read.len(), me.write.len(), me.allocates);
            }
        }
        if !changed {
            break;
        }
    }
    Ok(RWSetTable { functions, nascent: BTreeMap::new() })
}

/// Marks functions with no (transitive) writes, creates or deletes as
/// const.
pub fn deduce_const(mut rw: RWSetTable) -> RWSetTable {
    for f in rw.functions.values_mut() {
        f.is_const = f.write.is_empty() && !f.allocates;
    }
    rw
}

type Nascent = Option<BTreeSet<String>>;

fn meet(a: Nascent, b: Nascent) -> Nascent {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(a.intersection(&b).cloned().collect()),
    }
}

fn nascent_block(
    body: &[Statement],
    prefix: &mut Vec<u32>,
    mut state: Nascent,
    out: &mut BTreeMap<StatementPath, bool>,
) -> Nascent {
    for (i, s) in body.iter().enumerate() {
        prefix.push(i as u32);
        let Some(live) = state.as_mut() else {
            // Unreachable code: every site here is conservatively published.
            mark_unreachable(s, prefix, out);
            prefix.pop();
            continue;
        };
        match s {
            Statement::Create { dst, .. } => {
                live.insert(dst.clone());
            }
            Statement::Update { src, .. }
            | Statement::ArrayUpdate { src, .. }
            | Statement::MapUpdate { src, .. }
            | Statement::MapInsert { src, .. } => {
                live.remove(src);
            }
            Statement::Assign { dst, expr } => {
                live.retain(|v| !expr.mentions(v));
                live.remove(dst);
            }
            Statement::Delete { var } => {
                out.insert(prefix.clone(), live.contains(var));
                live.remove(var);
            }
            Statement::MethodCall { target, args, result, .. } => {
                if let CallTarget::Var(v) = target {
                    out.insert(prefix.clone(), live.contains(v));
                }
                live.retain(|v| !args.iter().any(|a| a.mentions(v)));
                if let Some(r) = result {
                    live.remove(r);
                }
            }
            Statement::Conditional { then_branch, else_branch, .. } => {
                let entry = state.clone();
                prefix.push(0);
                let t = nascent_block(then_branch, prefix, entry.clone(), out);
                prefix.pop();
                prefix.push(1);
                let e = nascent_block(else_branch, prefix, entry, out);
                prefix.pop();
                state = meet(t, e);
            }
            Statement::Return(_) => state = None,
            other => {
                if let Some(v) = other.assigned_var() {
                    live.remove(v);
                }
            }
        }
        prefix.pop();
    }
    state
}

fn mark_unreachable(s: &Statement, prefix: &mut Vec<u32>, out: &mut BTreeMap<StatementPath, bool>) {
    match s {
        Statement::Delete { .. } | Statement::MethodCall { target: CallTarget::Var(_), .. } => {
            out.insert(prefix.clone(), false);
        }
        Statement::Conditional { then_branch, else_branch, .. } => {
            for (b, branch) in [then_branch, else_branch].into_iter().enumerate() {
                prefix.push(b as u32);
                for (j, inner) in branch.iter().enumerate() {
                    prefix.push(j as u32);
                    mark_unreachable(inner, prefix, out);
                    prefix.pop();
                }
                prefix.pop();
            }
        }
        _ => {}
    }
}

/// Nascent flag for every Var-target MethodCall and Delete in `func`. A
/// variable is nascent at a site when every path from entry assigns it by
/// Create and none publishes it: stores it into an attribute, passes it
/// as a call argument, aliases it, or reassigns it.
pub fn compute_nascent(func: &FunctionDecl) -> BTreeMap<StatementPath, bool> {
    let mut out = BTreeMap::new();
    nascent_block(&func.body, &mut Vec::new(), Some(BTreeSet::new()), &mut out);
    out
}

/// Full analysis: rw sets, const flags and nascent flags.
pub fn analyze(spec: &DataStructureSpec) -> Result<RWSetTable, AnalysisError> {
    let mut rw = deduce_const(compute_rw_sets(spec)?);
    for ty in spec.types() {
        for f in &ty.functions {
            rw.nascent.insert(FnKey::new(&ty.name, &f.name), compute_nascent(f));
        }
    }
    Ok(rw)
}

/// Writes the deduced const flags back into the spec's function
/// declarations.
pub fn annotate_const(spec: &mut DataStructureSpec) -> Result<RWSetTable, AnalysisError> {
    let rw = deduce_const(compute_rw_sets(spec)?);
    for ty in spec.types_mut() {
        let name = ty.name.clone();
        for f in &mut ty.functions {
            f.is_const = rw.is_const(&name, &f.name);
        }
    }
    Ok(rw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{AttributeDecl, Expression, Param, SpecBuilder};
    use crate::types::{Value, ValueType};

    fn node() -> DataStructureSpec {
        let mut b = SpecBuilder::new("Node").unwrap();
        b.add_attribute(AttributeDecl::primitive("value", ValueType::I64, Value::I64(0))).unwrap();
        b.add_attribute(AttributeDecl::pointer("next", "Node")).unwrap();
        let mut f = b.create_function("get_next", ValueType::ptr("Node"), vec![]).unwrap();
        f.add_temporary("n", ValueType::ptr("Node")).unwrap();
        f.append(Statement::read("next", "n")).unwrap();
        f.append(Statement::ret("n")).unwrap();
        let mut f = b.create_function("set_value", ValueType::Void, vec![Param::value("v", ValueType::I64)]).unwrap();
        f.append(Statement::update("value", "v")).unwrap();
        f.append(Statement::ret_void()).unwrap();
        b.build(&[]).unwrap()
    }

    #[test]
    fn call_unions_callee_sets() {
        let n = node();
        let mut b = SpecBuilder::new("Holder").unwrap();
        let t = b.register_composed(&n).unwrap();
        b.add_attribute(AttributeDecl::pointer("first", t.name())).unwrap();
        let mut f = b.create_function("second", t.ptr(), vec![]).unwrap();
        f.temps(&[("a", t.ptr()), ("b", t.ptr())]).unwrap();
        f.append(Statement::read("first", "a")).unwrap();
        f.append(Statement::call("a", "get_next", vec![], Some("b"))).unwrap();
        f.append(Statement::ret("b")).unwrap();
        let spec = b.build(&["second"]).unwrap();
        let rw = analyze(&spec).unwrap();
        let s = rw.get("Holder", "second").unwrap();
        assert_eq!(s.read, BTreeSet::from(["Holder.first".to_string(), "Node.next".to_string()]));
        assert!(s.write.is_empty());
        assert!(s.is_const);
        assert!(spec.root.function("second").unwrap().is_const);
        assert!(!rw.is_const("Node", "set_value"));
    }

    #[test]
    fn create_in_one_branch_is_not_nascent_after_merge() {
        let n = node();
        let mut b = SpecBuilder::new("Holder").unwrap();
        let t = b.register_composed(&n).unwrap();
        let mut f = b.create_function("f", ValueType::Void, vec![Param::value("c", ValueType::Bool)]).unwrap();
        f.temps(&[("x", t.ptr())]).unwrap();
        let body = f.body();
        let (then_b, _) = f.conditional(body, Expression::var("c")).unwrap();
        f.append_to(then_b, Statement::create("Node", "x")).unwrap();
        f.append_to(then_b, Statement::call("x", "set_value", vec![Expression::i64(1)], None)).unwrap();
        f.append(Statement::call("x", "set_value", vec![Expression::i64(2)], None)).unwrap();
        f.append(Statement::ret_void()).unwrap();
        let spec = b.build(&["f"]).unwrap();
        let flags = compute_nascent(spec.root.function("f").unwrap());
        assert_eq!(flags.get(&vec![0, 0, 1]), Some(&true));
        assert_eq!(flags.get(&vec![1]), Some(&false));
    }

    #[test]
    fn returning_branch_does_not_weaken_merge() {
        let n = node();
        let mut b = SpecBuilder::new("Holder").unwrap();
        let t = b.register_composed(&n).unwrap();
        let mut f = b.create_function("f", ValueType::Void, vec![Param::value("c", ValueType::Bool)]).unwrap();
        f.temps(&[("x", t.ptr())]).unwrap();
        f.append(Statement::create("Node", "x")).unwrap();
        let body = f.body();
        let (then_b, _) = f.conditional(body, Expression::var("c")).unwrap();
        f.append_to(then_b, Statement::ret_void()).unwrap();
        f.append(Statement::call("x", "set_value", vec![Expression::i64(2)], None)).unwrap();
        f.append(Statement::ret_void()).unwrap();
        let spec = b.build(&["f"]).unwrap();
        let flags = compute_nascent(spec.root.function("f").unwrap());
        assert_eq!(flags.get(&vec![2]), Some(&true));
    }
}

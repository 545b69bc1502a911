//! Live instances of compiled specifications. Every exposed-method call is
//! one transaction, retried after NO_WAIT conflicts.

mod compile;
mod interp;

use std::collections::{BTreeSet, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::Rng;

pub use compile::Program;
use compile::{CAttrKind, Elem};
use interp::Ctx;

use crate::runtime::{get_or_create_txn_manager, IndexRegistry, RecordRef, RuntimeError, TxnManager};
use crate::spec::DataStructureSpec;
use crate::types::{Value, ValueType};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("unknown method {0}")]
    UnknownMethod(String),
    #[error("argument mismatch: {0}")]
    ArityOrTypeMismatch(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("transactional execution needs a specification with concurrency control")]
    NotConcurrent,
    #[error("cannot compile: {0}")]
    Compile(String),
    #[error("type error at runtime: {0}")]
    Type(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// How invocations are synchronized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Lock statements run against the row locks; conflicts abort and
    /// retry.
    Transactional,
    /// No locks and no undo log. The caller guarantees a single thread.
    Serial,
    /// Serial execution behind one mutex per instance.
    Coarse,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstanceStats {
    pub invocations: u64,
    pub retries: u64,
}

/// Randomized exponential backoff: 1 µs base, doubling, capped at 1 ms.
pub fn backoff(attempt: u32, rng: &mut impl Rng) {
    let cap_ns = (1_000u64 << attempt.min(10)).min(1_000_000);
    let wait = Duration::from_nanos(rng.random_range(0..=cap_ns));
    if wait < Duration::from_micros(50) {
        let start = std::time::Instant::now();
        while start.elapsed() < wait {
            std::thread::yield_now();
        }
    } else {
        std::thread::sleep(wait);
    }
}

pub struct Instance {
    program: Arc<Program>,
    root: RecordRef,
    mgr: &'static TxnManager,
    mode: ExecMode,
    guard: Mutex<()>,
    destroyed: AtomicBool,
    invocations: AtomicU64,
    retries: AtomicU64,
}

/// Result of an invocation that records attribute accesses.
#[derive(Debug, Clone, Default)]
pub struct Touches {
    /// Qualified `Type.attr` names.
    pub read: BTreeSet<String>,
    pub written: BTreeSet<String>,
}

impl Instance {
    /// Binds `spec` to tables in `namespace` and allocates one instance.
    /// Transactional mode requires a specification with concurrency
    /// control; the other modes run any specification and skip locks.
    pub fn instantiate(spec: &DataStructureSpec, namespace: &str, mode: ExecMode) -> Result<Instance, ExecError> {
        if mode == ExecMode::Transactional && !spec.cc_injected {
            return Err(ExecError::NotConcurrent);
        }
        let program = Arc::new(Program::compile(spec, namespace)?);
        Self::from_program(program, mode)
    }

    /// Another instance of an already compiled program.
    pub fn from_program(program: Arc<Program>, mode: ExecMode) -> Result<Instance, ExecError> {
        let mgr = get_or_create_txn_manager(program.namespace());
        let mut txn = mgr.begin_unsynchronized();
        let root = Ctx { program: &program, txn: &mut txn, locking: false, touches: None }.construct(program.root)?;
        txn.commit()?;
        Ok(Instance {
            program,
            root,
            mgr,
            mode,
            guard: Mutex::new(()),
            destroyed: AtomicBool::new(false),
            invocations: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    pub fn program(&self) -> &Arc<Program> {
        &self.program
    }

    pub fn spec(&self) -> &DataStructureSpec {
        &self.program.spec
    }

    pub fn root(&self) -> RecordRef {
        self.root
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn manager(&self) -> &'static TxnManager {
        self.mgr
    }

    pub fn stats(&self) -> InstanceStats {
        InstanceStats {
            invocations: self.invocations.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
        }
    }

    /// Exposed method names with parameter and return types.
    pub fn methods(&self) -> Vec<(String, Vec<(ValueType, bool)>, ValueType)> {
        let root = &self.program.types[self.program.root];
        self.program
            .spec
            .exposed
            .iter()
            .map(|name| {
                let f = &root.functions[root.fn_index[name]];
                (name.clone(), f.params.clone(), f.return_type.clone())
            })
            .collect()
    }

    fn resolve(&self, method: &str, args: &[Value]) -> Result<usize, ExecError> {
        if self.destroyed.load(Ordering::Acquire) {
            return Err(ExecError::InvalidState("instance destroyed".into()));
        }
        if !self.program.spec.exposed.contains(method) {
            return Err(ExecError::UnknownMethod(method.to_string()));
        }
        let root = &self.program.types[self.program.root];
        let fi = root.fn_index[method];
        let f = &root.functions[fi];
        if f.params.len() != args.len() {
            return Err(ExecError::ArityOrTypeMismatch(format!(
                "{method} takes {} arguments, got {}",
                f.params.len(),
                args.len()
            )));
        }
        for (i, ((ty, _), a)) in f.params.iter().zip(args).enumerate() {
            if !a.matches(ty) {
                return Err(ExecError::ArityOrTypeMismatch(format!("{method} argument {i}: {a} is not {ty}")));
            }
        }
        Ok(fi)
    }

    /// Calls an exposed method. By-pointer parameters are written back into
    /// `args` once the transaction commits.
    pub fn invoke(&self, method: &str, args: &mut [Value]) -> Result<Value, ExecError> {
        self.run(method, args, false).map(|(v, _)| v)
    }

    /// Like [`Instance::invoke`] for methods without by-pointer parameters.
    pub fn call(&self, method: &str, args: &[Value]) -> Result<Value, ExecError> {
        let mut a = args.to_vec();
        self.invoke(method, &mut a)
    }

    /// Invokes and also reports every attribute the interpreter touched.
    pub fn invoke_traced(&self, method: &str, args: &mut [Value]) -> Result<(Value, Touches), ExecError> {
        self.run(method, args, true)
    }

    fn run(&self, method: &str, args: &mut [Value], trace: bool) -> Result<(Value, Touches), ExecError> {
        let fi = self.resolve(method, args)?;
        self.invocations.fetch_add(1, Ordering::Relaxed);
        let program = &*self.program;
        let root = program.root;
        let _guard = (self.mode == ExecMode::Coarse).then(|| self.guard.lock());
        let synchronized = self.mode == ExecMode::Transactional;
        let mut rng = None;
        let mut attempt = 0u32;
        loop {
            let mut txn = if synchronized { self.mgr.begin_txn() } else { self.mgr.begin_unsynchronized() };
            let mut ctx = Ctx { program, txn: &mut txn, locking: synchronized, touches: trace.then(Vec::new) };
            let outcome = ctx.call(root, self.root.offset(), fi, args.to_vec());
            let touches = ctx.touches.take();
            match outcome {
                Ok((ret, slots)) => {
                    txn.commit()?;
                    for (i, (_, by_ptr)) in program.types[root].functions[fi].params.iter().enumerate() {
                        if *by_ptr {
                            args[i] = slots[i].clone();
                        }
                    }
                    return Ok((ret, self.qualify(touches)));
                }
                Err(ExecError::Runtime(RuntimeError::Conflict)) => {
                    txn.abort()?;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    backoff(attempt, rng.get_or_insert_with(rand::rng));
                    attempt = attempt.saturating_add(1);
                }
                Err(e) => {
                    txn.abort()?;
                    return Err(e);
                }
            }
        }
    }

    fn qualify(&self, touches: Option<Vec<interp::Touch>>) -> Touches {
        let mut out = Touches::default();
        for (ty, attr, write) in touches.unwrap_or_default() {
            let ct = &self.program.types[ty];
            let q = format!("{}.{}", ct.name, ct.attrs[attr].name);
            if write {
                out.written.insert(q);
            } else {
                out.read.insert(q);
            }
        }
        out
    }

    /// Frees every record reachable from the instance. No invocation may be
    /// in flight.
    pub fn destroy(&self) -> Result<usize, ExecError> {
        if self.destroyed.swap(true, Ordering::AcqRel) {
            return Err(ExecError::InvalidState("instance already destroyed".into()));
        }
        let program = &*self.program;
        let mut seen: HashSet<RecordRef> = HashSet::new();
        let mut stack = vec![(program.root, self.root)];
        let mut freed = 0;
        while let Some((ty, r)) = stack.pop() {
            if r.is_null() || !seen.insert(r) {
                continue;
            }
            let ct = &program.types[ty];
            let off = r.offset();
            if ct.table.row(off).is_err() {
                continue;
            }
            for a in &ct.attrs {
                let v = ct.table.peek(off, a.col)?;
                match &a.kind {
                    CAttrKind::Scalar => {
                        if let (Value::Ptr(p), Some(ti)) = (&v, self.pointer_target(&ct.name, &a.name)) {
                            stack.push((ti, *p));
                        }
                    }
                    CAttrKind::Embedded { ty: sub } => stack.push((*sub, v.as_ptr().unwrap_or(RecordRef::NULL))),
                    CAttrKind::Array { len, elem } => {
                        let base = v.as_ptr().unwrap_or(RecordRef::NULL);
                        if base.is_null() {
                            continue;
                        }
                        match elem {
                            Elem::Primitive { table, .. } => {
                                for i in 0..*len as u64 {
                                    if table.row(base.offset() + i).is_ok() {
                                        table.release(base.offset() + i);
                                        freed += 1;
                                    }
                                }
                            }
                            Elem::Record { ty: sub } => {
                                for i in 0..*len as u64 {
                                    stack.push((*sub, base.offset_by(i).expect("element")));
                                }
                            }
                        }
                    }
                    CAttrKind::Map { value, values, .. } => {
                        let h = v.as_i64().unwrap_or(0) as u64;
                        let Some(idx) = IndexRegistry::global().get(h) else { continue };
                        let target = match value {
                            ValueType::RecordPtr(t) => program.type_index(t),
                            _ => None,
                        };
                        for (_, vr) in idx.entries() {
                            if let (Some(ti), Ok(Value::Ptr(p))) = (target, values.peek(vr.offset(), 0)) {
                                stack.push((ti, p));
                            }
                            if values.row(vr.offset()).is_ok() {
                                values.release(vr.offset());
                                freed += 1;
                            }
                        }
                        idx.clear();
                    }
                }
            }
            ct.table.release(off);
            freed += 1;
        }
        Ok(freed)
    }

    fn pointer_target(&self, ty: &str, attr: &str) -> Option<usize> {
        match &self.program.spec.type_decl(ty)?.attribute(attr)?.kind {
            crate::spec::AttributeKind::Pointer(t) => self.program.type_index(t),
            _ => None,
        }
    }

    pub fn is_destroyed(&self) -> bool {
        self.destroyed.load(Ordering::Acquire)
    }

    /// Current value of attribute `attr` of record `r` of type `type_name`,
    /// read without synchronization.
    pub fn inspect(&self, r: RecordRef, type_name: &str, attr: &str) -> Result<Value, ExecError> {
        let ti = self.program.type_index(type_name).ok_or_else(|| ExecError::Compile(format!("unknown type {type_name}")))?;
        let ct = &self.program.types[ti];
        let a = ct
            .attrs
            .iter()
            .find(|a| a.name == attr)
            .ok_or_else(|| ExecError::Compile(format!("unknown attribute {attr}")))?;
        if r.table_id() != ct.table.id() {
            return Err(RuntimeError::InvalidRef(r).into());
        }
        Ok(ct.table.peek(r.offset(), a.col)?)
    }

    /// Attribute of the instance's own record.
    pub fn attribute(&self, attr: &str) -> Result<Value, ExecError> {
        self.inspect(self.root, self.program.spec.name(), attr)
    }

    /// Number of entries in a map attribute of the instance's own record.
    pub fn map_len(&self, attr: &str) -> Result<usize, ExecError> {
        let h = self.attribute(attr)?.as_i64().unwrap_or(0) as u64;
        Ok(IndexRegistry::global().get(h).ok_or(RuntimeError::InvalidIndex(h))?.len())
    }
}

/// Serial reference execution of a specification: lock statements are
/// ignored. Used as the oracle for concurrent runs.
pub fn serial_instance(spec: &DataStructureSpec, namespace: &str) -> Result<Instance, ExecError> {
    Instance::instantiate(spec, namespace, ExecMode::Serial)
}

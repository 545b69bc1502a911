//! Tree-walking interpreter over compiled operations.

use smallvec::SmallVec;

use super::compile::{CAttrKind, CExpr, CLock, CTarget, Elem, LockKind, Op, Program};
use super::ExecError;
use crate::runtime::{array_element_ref, IndexRegistry, KeyIndex, LockMode, RecordRef, RuntimeError, Table, TransactionContext};
use crate::types::{Value, ValueType};

/// Attribute access observed during execution: (type index, attribute
/// index, is write).
pub(crate) type Touch = (usize, usize, bool);

pub(crate) struct Ctx<'a> {
    pub program: &'a Program,
    pub txn: &'a mut TransactionContext,
    pub locking: bool,
    pub touches: Option<Vec<Touch>>,
}

enum Flow {
    Next,
    Return(Value),
}

fn type_error(msg: impl Into<String>) -> ExecError {
    ExecError::Type(msg.into())
}

fn arith(a: Value, b: Value, sub: bool) -> Result<Value, ExecError> {
    macro_rules! op {
        ($x:expr, $y:expr) => {
            if sub {
                $x.wrapping_sub($y)
            } else {
                $x.wrapping_add($y)
            }
        };
    }
    Ok(match (a, b) {
        (Value::I8(x), Value::I8(y)) => Value::I8(op!(x, y)),
        (Value::I16(x), Value::I16(y)) => Value::I16(op!(x, y)),
        (Value::I32(x), Value::I32(y)) => Value::I32(op!(x, y)),
        (Value::I64(x), Value::I64(y)) => Value::I64(op!(x, y)),
        (Value::F64(x), Value::F64(y)) => Value::F64(if sub { x - y } else { x + y }),
        (a, b) => return Err(type_error(format!("arithmetic on {a} and {b}"))),
    })
}

pub(crate) fn eval(e: &CExpr, slots: &[Value]) -> Result<Value, ExecError> {
    Ok(match e {
        CExpr::Const(v) => v.clone(),
        CExpr::Slot(s) => slots[*s].clone(),
        CExpr::Add(a, b) => arith(eval(a, slots)?, eval(b, slots)?, false)?,
        CExpr::Sub(a, b) => arith(eval(a, slots)?, eval(b, slots)?, true)?,
        CExpr::Eq(a, b) => Value::Bool(eval(a, slots)? == eval(b, slots)?),
        CExpr::IsNull(a) => match eval(a, slots)? {
            Value::Ptr(r) => Value::Bool(r.is_null()),
            other => return Err(type_error(format!("isnull on {other}"))),
        },
    })
}

fn truthy(v: Value) -> Result<bool, ExecError> {
    v.as_bool().ok_or_else(|| type_error(format!("condition is {v}")))
}

fn key_bytes(v: &Value, ty: &ValueType) -> SmallVec<[u8; 16]> {
    let mut k = SmallVec::from_elem(0u8, ty.width());
    v.encode_into(&mut k);
    k
}

impl<'a> Ctx<'a> {
    fn touch(&mut self, ty: usize, attr: usize, write: bool) {
        if let Some(t) = self.touches.as_mut() {
            t.push((ty, attr, write));
        }
    }

    /// Reference held in `slot`, checked against the static type.
    fn record(&self, slots: &[Value], slot: usize, ty: usize) -> Result<(&'static Table, u64), ExecError> {
        let r = slots[slot].as_ptr().ok_or_else(|| type_error("expected a record reference"))?;
        self.checked(r, ty)
    }

    fn checked(&self, r: RecordRef, ty: usize) -> Result<(&'static Table, u64), ExecError> {
        if r.is_null() {
            return Err(RuntimeError::NullDereference.into());
        }
        let table = self.program.types[ty].table;
        if r.table_id() != table.id() {
            return Err(RuntimeError::InvalidRef(r).into());
        }
        Ok((table, r.offset()))
    }

    /// Runtime-constant column of the executing record: embedded refs,
    /// array bases, index handles.
    fn constant(&self, ty: usize, this: u64, attr: usize) -> Result<Value, ExecError> {
        let ct = &self.program.types[ty];
        Ok(ct.table.peek(this, ct.attrs[attr].col)?)
    }

    fn index(&self, ty: usize, this: u64, attr: usize) -> Result<(u64, &'static KeyIndex), ExecError> {
        let h = self.constant(ty, this, attr)?.as_i64().unwrap_or(0) as u64;
        let idx = IndexRegistry::global().get(h).ok_or(RuntimeError::InvalidIndex(h))?;
        Ok((h, idx))
    }

    fn element(
        &self,
        ty: usize,
        this: u64,
        attr: usize,
        index: &CExpr,
        slots: &[Value],
    ) -> Result<(RecordRef, &'a Elem), ExecError> {
        let program: &'a Program = self.program;
        let CAttrKind::Array { len, elem } = &program.types[ty].attrs[attr].kind else {
            return Err(type_error("indexing a non-array attribute"));
        };
        let base = self.constant(ty, this, attr)?.as_ptr().unwrap_or(RecordRef::NULL);
        let i = eval(index, slots)?.as_i64().ok_or_else(|| type_error("array index is not an integer"))?;
        Ok((array_element_ref(base, i, *len)?, elem))
    }

    fn map_parts(&self, ty: usize, attr: usize) -> Result<(&'a ValueType, &'a ValueType, &'static Table), ExecError> {
        let program: &'a Program = self.program;
        match &program.types[ty].attrs[attr].kind {
            CAttrKind::Map { key, value, values } => Ok((key, value, values)),
            _ => Err(type_error("map operation on a non-map attribute")),
        }
    }

    /// Allocates a record of `ty` with its defaults, embedded records,
    /// arrays and indexes.
    pub(crate) fn construct(&mut self, ty: usize) -> Result<RecordRef, ExecError> {
        let ct = &self.program.types[ty];
        let r = self.txn.insert_record(ct.table, &ct.init)?;
        self.init_nested(ty, r.offset())?;
        Ok(r)
    }

    fn init_nested(&mut self, ty: usize, offset: u64) -> Result<(), ExecError> {
        let program = self.program;
        let ct = &program.types[ty];
        for a in &ct.attrs {
            let v = match &a.kind {
                CAttrKind::Scalar => continue,
                CAttrKind::Embedded { ty: sub } => Value::Ptr(self.construct(*sub)?),
                CAttrKind::Array { len, elem: Elem::Primitive { table, ty: et } } => {
                    Value::Ptr(self.txn.insert_contiguous(table, *len as u64, &et.zero().encode(et))?)
                }
                CAttrKind::Array { len, elem: Elem::Record { ty: sub } } => {
                    let st = &program.types[*sub];
                    let base = self.txn.insert_contiguous(st.table, *len as u64, &st.init)?;
                    for i in 0..*len as u64 {
                        self.init_nested(*sub, base.offset() + i)?;
                    }
                    Value::Ptr(base)
                }
                CAttrKind::Map { .. } => Value::I64(IndexRegistry::global().create() as i64),
            };
            self.txn.write_field(ct.table, offset, a.col, &v)?;
        }
        Ok(())
    }

    fn lock(&mut self, ty: usize, this: u64, target: &CLock, kind: LockKind, slots: &[Value]) -> Result<(), ExecError> {
        let mode = match kind {
            LockKind::Shared => LockMode::Shared,
            LockKind::Exclusive | LockKind::Upgrade => LockMode::Exclusive,
        };
        let (table, offset) = match target {
            CLock::This => (self.program.types[ty].table, this),
            CLock::Slot(s) => {
                let r = slots[*s].as_ptr().ok_or_else(|| type_error("lock on a non-reference"))?;
                if r.is_null() {
                    return Err(RuntimeError::NullDereference.into());
                }
                crate::runtime::TableRegistry::global().resolve(r)?
            }
            CLock::Embedded(a) => {
                let r = self.constant(ty, this, *a)?.as_ptr().unwrap_or(RecordRef::NULL);
                crate::runtime::TableRegistry::global().resolve(r)?
            }
            CLock::Element { attr, index } => {
                let (r, elem) = self.element(ty, this, *attr, index, slots)?;
                match elem {
                    Elem::Primitive { table, .. } => (*table, r.offset()),
                    Elem::Record { ty: sub } => (self.program.types[*sub].table, r.offset()),
                }
            }
            CLock::Entry { attr, key } => {
                let (kt, _, values) = self.map_parts(ty, *attr)?;
                let k = key_bytes(&eval(key, slots)?, kt);
                let (_, idx) = self.index(ty, this, *attr)?;
                match idx.lookup(&k) {
                    Some(r) => (values, r.offset()),
                    // Absence is protected by the lock on the owner.
                    None => return Ok(()),
                }
            }
        };
        self.txn.try_lock(table, offset, mode)?;
        Ok(())
    }

    /// Runs one function on record `this` of type `ty`. Returns the return
    /// value and the final variable slots.
    pub(crate) fn call(&mut self, ty: usize, this: u64, func: usize, args: Vec<Value>) -> Result<(Value, Vec<Value>), ExecError> {
        let f = &self.program.types[ty].functions[func];
        let mut slots = args;
        slots.extend(f.slot_types[f.params.len()..].iter().map(ValueType::zero));
        match self.block(ty, this, &f.body, &mut slots)? {
            Flow::Return(v) => Ok((v, slots)),
            Flow::Next => Err(ExecError::Type(format!("{} fell off its end", f.name))),
        }
    }

    fn block(&mut self, ty: usize, this: u64, ops: &[Op], slots: &mut Vec<Value>) -> Result<Flow, ExecError> {
        let program = self.program;
        let ct = &program.types[ty];
        for op in ops {
            match op {
                Op::Read { attr, dst } => {
                    self.touch(ty, *attr, false);
                    slots[*dst] = self.txn.read_field(ct.table, this, ct.attrs[*attr].col)?;
                }
                Op::Update { attr, src } => {
                    self.touch(ty, *attr, true);
                    self.txn.write_field(ct.table, this, ct.attrs[*attr].col, &slots[*src])?;
                }
                Op::ArrayRead { attr, index, dst } => {
                    self.touch(ty, *attr, false);
                    let (r, elem) = self.element(ty, this, *attr, index, slots)?;
                    slots[*dst] = match elem {
                        Elem::Primitive { table, .. } => self.txn.read_field(table, r.offset(), 0)?,
                        Elem::Record { .. } => Value::Ptr(r),
                    };
                }
                Op::ArrayUpdate { attr, index, src } => {
                    self.touch(ty, *attr, true);
                    let (r, elem) = self.element(ty, this, *attr, index, slots)?;
                    let Elem::Primitive { table, .. } = elem else {
                        return Err(type_error("update of a record array element"));
                    };
                    self.txn.write_field(table, r.offset(), 0, &slots[*src])?;
                }
                Op::MapRead { attr, key, dst } => {
                    self.touch(ty, *attr, false);
                    let (kt, vt, values) = self.map_parts(ty, *attr)?;
                    let k = key_bytes(&eval(key, slots)?, kt);
                    let (_, idx) = self.index(ty, this, *attr)?;
                    slots[*dst] = match idx.lookup(&k) {
                        Some(r) => self.txn.read_field(values, r.offset(), 0)?,
                        None => vt.zero(),
                    };
                }
                Op::MapContains { attr, key, dst } => {
                    self.touch(ty, *attr, false);
                    let (kt, _, _) = self.map_parts(ty, *attr)?;
                    let k = key_bytes(&eval(key, slots)?, kt);
                    let (_, idx) = self.index(ty, this, *attr)?;
                    slots[*dst] = Value::Bool(idx.contains(&k));
                }
                Op::MapUpdate { attr, key, src } => {
                    self.touch(ty, *attr, true);
                    let (kt, _, values) = self.map_parts(ty, *attr)?;
                    let k = key_bytes(&eval(key, slots)?, kt);
                    let (_, idx) = self.index(ty, this, *attr)?;
                    if let Some(r) = idx.lookup(&k) {
                        self.txn.write_field(values, r.offset(), 0, &slots[*src])?;
                    }
                }
                Op::MapInsert { attr, key, src } => {
                    self.touch(ty, *attr, true);
                    let (kt, vt, values) = self.map_parts(ty, *attr)?;
                    let k = key_bytes(&eval(key, slots)?, kt);
                    let (h, idx) = self.index(ty, this, *attr)?;
                    if !idx.contains(&k) {
                        let r = self.txn.insert_record(values, &slots[*src].encode(vt))?;
                        self.txn.index_insert(h, &k, r)?;
                    }
                }
                Op::MapErase { attr, key } => {
                    self.touch(ty, *attr, true);
                    let (kt, _, values) = self.map_parts(ty, *attr)?;
                    let k = key_bytes(&eval(key, slots)?, kt);
                    let (h, _) = self.index(ty, this, *attr)?;
                    if let Some(r) = self.txn.index_erase(h, &k)? {
                        self.txn.delete_record(values, r.offset())?;
                    }
                }
                Op::Assign { dst, expr } => slots[*dst] = eval(expr, slots)?,
                Op::If { cond, then_ops, else_ops } => {
                    let branch = if truthy(eval(cond, slots)?)? { then_ops } else { else_ops };
                    if let Flow::Return(v) = self.block(ty, this, branch, slots)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Op::Create { ty: t, dst } => slots[*dst] = Value::Ptr(self.construct(*t)?),
                Op::Delete { slot, ty: t } => {
                    let (table, off) = self.record(slots, *slot, *t)?;
                    self.txn.delete_record(table, off)?;
                }
                Op::Call { target, ty: t, func, args, writeback, result } => {
                    let off = match target {
                        CTarget::Slot(s) => self.record(slots, *s, *t)?.1,
                        CTarget::Embedded(a) => {
                            self.touch(ty, *a, false);
                            let r = self.constant(ty, this, *a)?.as_ptr().unwrap_or(RecordRef::NULL);
                            self.checked(r, *t)?.1
                        }
                    };
                    let vals = args.iter().map(|a| eval(a, slots)).collect::<Result<Vec<_>, _>>()?;
                    let (ret, fin) = self.call(*t, off, *func, vals)?;
                    for (param, dst) in writeback {
                        slots[*dst] = fin[*param].clone();
                    }
                    if let Some(r) = result {
                        slots[*r] = ret;
                    }
                }
                Op::Return(v) => return Ok(Flow::Return(v.map(|s| slots[s].clone()).unwrap_or(Value::Void))),
                Op::Nop => {}
                Op::Lock { target, kind } => {
                    if self.locking {
                        self.lock(ty, this, target, *kind, slots)?;
                    }
                }
                Op::ReleaseAll => {
                    if self.locking {
                        self.txn.release_all()?;
                    }
                }
            }
        }
        Ok(Flow::Next)
    }
}

//! Prebuilt specifications and the build → optimize → inject → instantiate
//! pipeline used by tests and the benchmark harness.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::cc::{make_concurrent, CcError};
use crate::executor::{ExecError, ExecMode, Instance};
use crate::optimizer::{optimize, OptimizeError};
use crate::spec::{
    AttributeDecl, BlockHandle, DataStructureSpec, Expression as E, FnBuilder, Param, SpecBuilder, SpecError,
    Statement as S,
};
use crate::types::{Value, ValueType};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown structure {0}")]
    UnknownStructure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Cc(#[from] CcError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

const I64: ValueType = ValueType::I64;
const BOOL: ValueType = ValueType::Bool;

fn node_ptr() -> ValueType {
    ValueType::ptr("Node")
}

/// Getter and setter pairs for the named primitive or pointer attributes.
fn accessors(b: &mut SpecBuilder, attrs: &[(&str, ValueType)]) -> Result<(), SpecError> {
    for (name, ty) in attrs {
        let mut f = b.create_function(&format!("get_{name}"), ty.clone(), vec![])?;
        f.add_temporary("t", ty.clone())?;
        f.append(S::read(name, "t"))?;
        f.append(S::ret("t"))?;
        let mut f = b.create_function(&format!("set_{name}"), ValueType::Void, vec![Param::value("v", ty.clone())])?;
        f.append(S::update(name, "v"))?;
        f.append(S::ret_void())?;
    }
    Ok(())
}

fn node_type() -> Result<DataStructureSpec, SpecError> {
    let mut b = SpecBuilder::new("Node")?;
    b.add_attribute(AttributeDecl::primitive("value", I64, Value::I64(0)))?;
    b.add_attribute(AttributeDecl::pointer("next", "Node"))?;
    b.add_attribute(AttributeDecl::pointer("prev", "Node"))?;
    accessors(&mut b, &[("value", I64), ("next", node_ptr()), ("prev", node_ptr())])?;
    b.build(&["get_value", "set_value", "get_next", "set_next", "get_prev", "set_prev"])
}

fn ret_const(f: &mut FnBuilder<'_>, block: BlockHandle, var: &str, v: bool) -> Result<(), SpecError> {
    f.append_to(block, S::assign(var, E::bool(v)))?;
    f.append_to(block, S::ret(var))?;
    Ok(())
}

/// Doubly linked list of i64 values with push/pop at both ends. Empty-list
/// and single-element cases are handled in every operation; popped nodes
/// are deleted.
pub fn build_doubly_linked_list() -> Result<DataStructureSpec, SpecError> {
    let node = node_type()?;
    let mut b = SpecBuilder::new("LL")?;
    b.register_composed(&node)?;
    b.add_attribute(AttributeDecl::pointer("head", "Node"))?;
    b.add_attribute(AttributeDecl::pointer("tail", "Node"))?;

    // push_back / push_front are mirror images: (near, far, link, back_link).
    for (name, near, far, link, back) in
        [("push_back", "tail", "head", "set_prev", "set_next"), ("push_front", "head", "tail", "set_next", "set_prev")]
    {
        let mut f = b.create_function(name, ValueType::Void, vec![Param::value("value", I64)])?;
        f.temps(&[("node", node_ptr()), ("t", node_ptr())])?;
        f.append(S::create("Node", "node"))?;
        f.append(S::call("node", "set_value", vec![E::var("value")], None))?;
        f.append(S::read(near, "t"))?;
        f.append(S::call("node", link, vec![E::var("t")], None))?;
        let body = f.body();
        let (empty, nonempty) = f.conditional(body, E::is_null(E::var("t")))?;
        f.append_to(empty, S::update(far, "node"))?;
        f.append_to(nonempty, S::call("t", back, vec![E::var("node")], None))?;
        f.append(S::update(near, "node"))?;
        f.append(S::ret_void())?;
    }

    // pop_front / pop_back: (near, far, step, unlink).
    for (name, near, far, step, unlink) in
        [("pop_front", "head", "tail", "get_next", "set_prev"), ("pop_back", "tail", "head", "get_prev", "set_next")]
    {
        let mut f = b.create_function(name, BOOL, vec![Param::pointer("val", I64)])?;
        f.temps(&[("h", node_ptr()), ("t", node_ptr()), ("n", node_ptr()), ("ok", BOOL)])?;
        f.append(S::read(near, "h"))?;
        let body = f.body();
        let (empty, _) = f.conditional(body, E::is_null(E::var("h")))?;
        ret_const(&mut f, empty, "ok", false)?;
        f.append(S::read(far, "t"))?;
        let (single, _) = f.conditional(body, E::eq(E::var("h"), E::var("t")))?;
        f.append_to(single, S::assign("n", E::null()))?;
        f.append_to(single, S::update(far, "n"))?;
        f.append(S::call("h", step, vec![], Some("n")))?;
        f.append(S::update(near, "n"))?;
        let (rest, _) = f.conditional(body, E::not(E::is_null(E::var("n"))))?;
        f.append_to(rest, S::call("n", unlink, vec![E::null()], None))?;
        f.append(S::call("h", "get_value", vec![], Some("val")))?;
        f.append(S::delete("h"))?;
        ret_const(&mut f, body, "ok", true)?;
    }

    let mut f = b.create_function("empty", BOOL, vec![])?;
    f.temps(&[("h", node_ptr()), ("e", BOOL)])?;
    f.append(S::read("head", "h"))?;
    f.append(S::assign("e", E::is_null(E::var("h"))))?;
    f.append(S::ret("e"))?;

    b.build(&["push_back", "pop_front", "push_front", "pop_back", "empty"])
}

/// FIFO queue that embeds the doubly linked list and uses only its
/// push_back and pop_front.
pub fn build_fifo() -> Result<DataStructureSpec, SpecError> {
    let list = build_doubly_linked_list()?;
    let mut b = SpecBuilder::new("Fifo")?;
    b.register_composed(&list)?;
    b.add_attribute(AttributeDecl::embedded("list", "LL"))?;
    let mut f = b.create_function("push", ValueType::Void, vec![Param::value("v", I64)])?;
    f.append(S::call_embedded("list", "push_back", vec![E::var("v")], None))?;
    f.append(S::ret_void())?;
    let mut f = b.create_function("pop", BOOL, vec![Param::pointer("v", I64)])?;
    f.add_temporary("ok", BOOL)?;
    f.append(S::call_embedded("list", "pop_front", vec![E::var("v")], Some("ok")))?;
    f.append(S::ret("ok"))?;
    b.build(&["push", "pop"])
}

fn lru_node() -> Result<DataStructureSpec, SpecError> {
    let mut b = SpecBuilder::new("Node")?;
    b.add_attribute(AttributeDecl::primitive("key", I64, Value::I64(0)))?;
    b.add_attribute(AttributeDecl::primitive("value", I64, Value::I64(0)))?;
    b.add_attribute(AttributeDecl::pointer("next", "Node"))?;
    b.add_attribute(AttributeDecl::pointer("prev", "Node"))?;
    accessors(&mut b, &[("key", I64), ("value", I64), ("next", node_ptr()), ("prev", node_ptr())])?;
    let mut f = b.create_function("init", ValueType::Void, vec![Param::value("k", I64), Param::value("v", I64)])?;
    f.append(S::update("key", "k"))?;
    f.append(S::update("value", "v"))?;
    f.append(S::ret_void())?;
    b.build(&["init", "get_key", "set_value", "get_value", "get_next", "set_next", "get_prev", "set_prev"])
}

/// Unlinks `n` (known to be in the list) and relinks it at the head.
/// Uses temporaries h, p, q.
fn move_to_head(f: &mut FnBuilder<'_>, block: BlockHandle) -> Result<(), SpecError> {
    f.append_to(block, S::read("head", "h"))?;
    let (moving, _) = f.conditional(block, E::not(E::eq(E::var("n"), E::var("h"))))?;
    f.append_to(moving, S::call("n", "get_prev", vec![], Some("p")))?;
    f.append_to(moving, S::call("n", "get_next", vec![], Some("q")))?;
    f.append_to(moving, S::call("p", "set_next", vec![E::var("q")], None))?;
    let (last, middle) = f.conditional(moving, E::is_null(E::var("q")))?;
    f.append_to(last, S::update("tail", "p"))?;
    f.append_to(middle, S::call("q", "set_prev", vec![E::var("p")], None))?;
    f.append_to(moving, S::call("n", "set_prev", vec![E::null()], None))?;
    f.append_to(moving, S::call("n", "set_next", vec![E::var("h")], None))?;
    f.append_to(moving, S::call("h", "set_prev", vec![E::var("n")], None))?;
    f.append_to(moving, S::update("head", "n"))?;
    Ok(())
}

/// LRU container: a doubly linked list in recency order (head is most
/// recent) plus a map from key to list node. Inserting a new key at
/// capacity evicts the tail.
pub fn build_lru(capacity: usize) -> Result<DataStructureSpec, SpecError> {
    if capacity == 0 {
        return Err(SpecError::InvalidAttribute("LRU capacity must be positive".into()));
    }
    let node = lru_node()?;
    let mut b = SpecBuilder::new("LRU")?;
    b.register_composed(&node)?;
    b.add_attribute(AttributeDecl::pointer("head", "Node"))?;
    b.add_attribute(AttributeDecl::pointer("tail", "Node"))?;
    b.add_attribute(AttributeDecl::primitive("size", I64, Value::I64(0)))?;
    b.add_attribute(AttributeDecl::primitive("capacity", I64, Value::I64(capacity as i64)))?;
    b.add_attribute(AttributeDecl::map("map", I64, node_ptr()))?;
    let ptrs = [("n", node_ptr()), ("h", node_ptr()), ("p", node_ptr()), ("q", node_ptr()), ("t", node_ptr())];

    let mut f = b.create_function("insert", BOOL, vec![Param::value("key", I64), Param::value("value", I64)])?;
    f.temps(&ptrs)?;
    f.temps(&[("found", BOOL), ("r", BOOL), ("sz", I64), ("cap", I64), ("k", I64)])?;
    f.append(S::MapContains { attr: "map".into(), key: E::var("key"), dst: "found".into() })?;
    let body = f.body();
    let (hit, miss) = f.conditional(body, E::var("found"))?;
    f.append_to(hit, S::MapRead { attr: "map".into(), key: E::var("key"), dst: "n".into() })?;
    f.append_to(hit, S::call("n", "set_value", vec![E::var("value")], None))?;
    move_to_head(&mut f, hit)?;
    f.append_to(hit, S::assign("r", E::bool(false)))?;

    f.append_to(miss, S::read("size", "sz"))?;
    f.append_to(miss, S::read("capacity", "cap"))?;
    let (full, _) = f.conditional(miss, E::eq(E::var("sz"), E::var("cap")))?;
    f.append_to(full, S::read("tail", "t"))?;
    f.append_to(full, S::call("t", "get_prev", vec![], Some("p")))?;
    f.append_to(full, S::call("t", "get_key", vec![], Some("k")))?;
    f.append_to(full, S::MapErase { attr: "map".into(), key: E::var("k") })?;
    f.append_to(full, S::update("tail", "p"))?;
    let (only, has_pred) = f.conditional(full, E::is_null(E::var("p")))?;
    f.append_to(only, S::update("head", "p"))?;
    f.append_to(has_pred, S::call("p", "set_next", vec![E::null()], None))?;
    f.append_to(full, S::delete("t"))?;
    f.append_to(full, S::assign("sz", E::sub(E::var("sz"), E::i64(1))))?;

    f.append_to(miss, S::create("Node", "n"))?;
    f.append_to(miss, S::call("n", "init", vec![E::var("key"), E::var("value")], None))?;
    f.append_to(miss, S::read("head", "h"))?;
    f.append_to(miss, S::call("n", "set_next", vec![E::var("h")], None))?;
    let (was_empty, nonempty) = f.conditional(miss, E::is_null(E::var("h")))?;
    f.append_to(was_empty, S::update("tail", "n"))?;
    f.append_to(nonempty, S::call("h", "set_prev", vec![E::var("n")], None))?;
    f.append_to(miss, S::update("head", "n"))?;
    f.append_to(miss, S::MapInsert { attr: "map".into(), key: E::var("key"), src: "n".into() })?;
    f.append_to(miss, S::assign("sz", E::add(E::var("sz"), E::i64(1))))?;
    f.append_to(miss, S::update("size", "sz"))?;
    f.append_to(miss, S::assign("r", E::bool(true)))?;
    f.append(S::ret("r"))?;

    let mut f = b.create_function("find", BOOL, vec![Param::value("key", I64), Param::pointer("out", I64)])?;
    f.temps(&ptrs[..4])?;
    f.temps(&[("found", BOOL)])?;
    f.append(S::MapContains { attr: "map".into(), key: E::var("key"), dst: "found".into() })?;
    let body = f.body();
    let (absent, _) = f.conditional(body, E::not(E::var("found")))?;
    f.append_to(absent, S::ret("found"))?;
    f.append(S::MapRead { attr: "map".into(), key: E::var("key"), dst: "n".into() })?;
    move_to_head(&mut f, body)?;
    f.append(S::call("n", "get_key", vec![], Some("out")))?;
    f.append(S::ret("found"))?;

    b.build(&["insert", "find"])
}

/// Highest column count accepted by [`build_ycsb`].
pub const MAX_YCSB_COLUMNS: usize = 10;

/// Fixed array of `records` items with `columns` i64 columns each, read and
/// written whole.
pub fn build_ycsb(columns: usize, records: usize) -> Result<DataStructureSpec, SpecError> {
    if !(1..=MAX_YCSB_COLUMNS).contains(&columns) {
        return Err(SpecError::InvalidAttribute(format!("ycsb needs 1..={MAX_YCSB_COLUMNS} columns, got {columns}")));
    }
    let cols: Vec<String> = (0..columns).map(|i| format!("c{i}")).collect();
    let mut b = SpecBuilder::new("YcsbItem")?;
    for c in &cols {
        b.add_attribute(AttributeDecl::primitive(c, I64, Value::I64(0)))?;
    }
    let outs: Vec<Param> = cols.iter().map(|c| Param::pointer(&format!("o_{c}"), I64)).collect();
    let ins: Vec<Param> = cols.iter().map(|c| Param::value(&format!("v_{c}"), I64)).collect();
    let mut f = b.create_function("get", ValueType::Void, outs.clone())?;
    for c in &cols {
        f.append(S::read(c, &format!("o_{c}")))?;
    }
    f.append(S::ret_void())?;
    let mut f = b.create_function("set", ValueType::Void, ins.clone())?;
    for c in &cols {
        f.append(S::update(c, &format!("v_{c}")))?;
    }
    f.append(S::ret_void())?;
    let item = b.build(&["get", "set"])?;

    let mut b = SpecBuilder::new("Ycsb")?;
    b.register_composed(&item)?;
    b.add_attribute(AttributeDecl::array("items", ValueType::ptr("YcsbItem"), records))?;
    let idx = Param::value("idx", I64);
    let mut params = vec![idx.clone()];
    params.extend(outs.iter().cloned());
    let mut f = b.create_function("read_record", ValueType::Void, params)?;
    f.add_temporary("it", ValueType::ptr("YcsbItem"))?;
    f.append(S::ArrayRead { attr: "items".into(), index: E::var("idx"), dst: "it".into() })?;
    f.append(S::call("it", "get", outs.iter().map(|p| E::var(&p.name)).collect(), None))?;
    f.append(S::ret_void())?;
    let mut params = vec![idx];
    params.extend(ins.iter().cloned());
    let mut f = b.create_function("update_record", ValueType::Void, params)?;
    f.add_temporary("it", ValueType::ptr("YcsbItem"))?;
    f.append(S::ArrayRead { attr: "items".into(), index: E::var("idx"), dst: "it".into() })?;
    f.append(S::call("it", "set", ins.iter().map(|p| E::var(&p.name)).collect(), None))?;
    f.append(S::ret_void())?;
    b.build(&["read_record", "update_record"])
}

/// Attribute and function names of one type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeShape {
    pub attributes: Vec<String>,
    pub functions: Vec<String>,
}

/// Type name → shape, sorted.
pub type Shape = BTreeMap<String, TypeShape>;

pub fn shape_of(spec: &DataStructureSpec) -> Shape {
    spec.types()
        .map(|t| {
            let mut attributes: Vec<String> = t.attributes.iter().map(|a| a.name.clone()).collect();
            let mut functions: Vec<String> = t.functions.iter().map(|f| f.name.clone()).collect();
            attributes.sort();
            functions.sort();
            (t.name.clone(), TypeShape { attributes, functions })
        })
        .collect()
}

fn shape(types: &[(&str, &[&str], &[&str])]) -> Shape {
    types
        .iter()
        .map(|(name, attrs, fns)| {
            let mut attributes: Vec<String> = attrs.iter().map(|s| s.to_string()).collect();
            let mut functions: Vec<String> = fns.iter().map(|s| s.to_string()).collect();
            attributes.sort();
            functions.sort();
            (name.to_string(), TypeShape { attributes, functions })
        })
        .collect()
}

/// Parameters for the sized structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogParams {
    pub capacity: usize,
    pub columns: usize,
    pub records: usize,
}

impl Default for CatalogParams {
    fn default() -> Self {
        Self { capacity: 1 << 10, columns: 10, records: 1000 }
    }
}

type BuildFn = Arc<dyn Fn() -> Result<DataStructureSpec, SpecError> + Send + Sync>;

/// How a catalog structure is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Optimized, concurrency control injected, transactional execution.
    Optimized,
    /// Concurrency control injected without optimization.
    Unoptimized,
    /// Optimized spec run serially under one mutex.
    Coarse,
}

#[derive(Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub build: BuildFn,
    pub flavor: Flavor,
    /// Expected shape after `optimize`.
    pub optimized_shape: Shape,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry").field("name", &self.name).field("flavor", &self.flavor).finish()
    }
}

/// Structure names accepted by [`entry`].
pub const STRUCTURES: &[&str] = &["fifo", "dll", "lru", "lru-coarse", "ycsb", "ycsb-coarse"];

fn dll_shape() -> Shape {
    shape(&[
        ("LL", &["head", "tail"], &["empty", "pop_back", "pop_front", "push_back", "push_front"]),
        ("Node", &["next", "prev", "value"], &["get_next", "get_prev", "get_value", "set_next", "set_prev", "set_value"]),
    ])
}

/// Looks up a structure by name. `dll` is the FIFO wrapper left
/// unoptimized, so the list stays doubly linked.
pub fn entry(name: &str, params: CatalogParams) -> Result<CatalogEntry, CatalogError> {
    let fifo_shape = || {
        shape(&[
            ("Fifo", &["list"], &["pop", "push"]),
            ("LL", &["head", "tail"], &["pop_front", "push_back"]),
            ("Node", &["next", "value"], &["get_next", "get_value", "set_next", "set_value"]),
        ])
    };
    let lru_shape = || {
        shape(&[
            ("LRU", &["head", "map", "size", "tail"], &["find", "insert"]),
            ("Node", &["key", "next", "prev"], &["get_key", "get_next", "get_prev", "init", "set_next", "set_prev"]),
        ])
    };
    let CatalogParams { capacity, columns, records } = params;
    if columns == 0 || columns > MAX_YCSB_COLUMNS {
        return Err(CatalogError::InvalidParameter(format!("columns must be in 1..={MAX_YCSB_COLUMNS}")));
    }
    let cols: Vec<String> = (0..columns).map(|i| format!("c{i}")).collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let ycsb_shape = shape(&[("Ycsb", &["items"], &["read_record", "update_record"]), ("YcsbItem", &col_refs, &["get", "set"])]);
    let (build, flavor, optimized_shape): (BuildFn, Flavor, Shape) = match name {
        "fifo" => (Arc::new(build_fifo), Flavor::Optimized, fifo_shape()),
        "dll" => (Arc::new(build_fifo), Flavor::Unoptimized, fifo_shape()),
        "lru" => (Arc::new(move || build_lru(capacity)), Flavor::Optimized, lru_shape()),
        "lru-coarse" => (Arc::new(move || build_lru(capacity)), Flavor::Coarse, lru_shape()),
        "ycsb" => (Arc::new(move || build_ycsb(columns, records)), Flavor::Optimized, ycsb_shape),
        "ycsb-coarse" => (Arc::new(move || build_ycsb(columns, records)), Flavor::Coarse, ycsb_shape),
        other => return Err(CatalogError::UnknownStructure(other.to_string())),
    };
    let name = STRUCTURES.iter().find(|s| **s == name).copied().expect("listed");
    Ok(CatalogEntry { name, build, flavor, optimized_shape })
}

/// The standalone doubly linked list, exposing all five operations.
pub fn dll_standalone() -> CatalogEntry {
    CatalogEntry { name: "dll", build: Arc::new(build_doubly_linked_list), flavor: Flavor::Optimized, optimized_shape: dll_shape() }
}

impl CatalogEntry {
    /// Specification ready for execution in this entry's flavor.
    pub fn prepare(&self) -> Result<DataStructureSpec, CatalogError> {
        let spec = (self.build)()?;
        Ok(match self.flavor {
            Flavor::Optimized => make_concurrent(&optimize(&spec)?.0)?,
            Flavor::Unoptimized => make_concurrent(&spec)?,
            Flavor::Coarse => optimize(&spec)?.0,
        })
    }

    pub fn mode(&self) -> ExecMode {
        match self.flavor {
            Flavor::Coarse => ExecMode::Coarse,
            _ => ExecMode::Transactional,
        }
    }

    /// Builds and instantiates. Table schemas differ between flavors, so
    /// the namespace is suffixed with the flavor.
    pub fn instantiate(&self, namespace: &str) -> Result<Instance, CatalogError> {
        let ns = format!("{namespace}.{}", self.flavor_tag());
        Ok(Instance::instantiate(&self.prepare()?, &ns, self.mode())?)
    }

    fn flavor_tag(&self) -> &'static str {
        match self.flavor {
            Flavor::Optimized => "opt",
            Flavor::Unoptimized => "raw",
            Flavor::Coarse => "coarse",
        }
    }
}

/// An LRU instance where each operation runs serially under one global
/// guard, with no transactional machinery.
pub fn build_coarse_lru(capacity: usize, namespace: &str) -> Result<Instance, CatalogError> {
    entry("lru-coarse", CatalogParams { capacity, ..Default::default() })?.instantiate(namespace)
}

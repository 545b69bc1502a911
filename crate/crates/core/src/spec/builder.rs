use std::collections::{BTreeMap, BTreeSet};

use super::validate::{check_attribute, check_function_header, ident, value_type_ok, Checker};
use super::{AttributeDecl, DataStructureSpec, Expression, FunctionDecl, Param, SpecError, Statement, TypeDecl, Variable};
use crate::types::ValueType;

/// Handle to a declared attribute (its declaration index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttrHandle(pub usize);

/// Handle to a registered composed type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeHandle(pub String);

impl TypeHandle {
    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn ptr(&self) -> ValueType {
        ValueType::RecordPtr(self.0.clone())
    }
}

/// A statement list inside a function body: the body itself or one branch
/// of a conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHandle {
    func: usize,
    block: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatementHandle {
    pub block: BlockHandle,
    pub index: usize,
}

enum Item {
    Stmt(Statement),
    Cond { cond: Expression, then_block: usize, else_block: usize },
}

#[derive(Default)]
struct FnBody {
    blocks: Vec<Vec<Item>>,
}

impl FnBody {
    fn assemble(&mut self, block: usize) -> Vec<Statement> {
        let items = std::mem::take(&mut self.blocks[block]);
        items
            .into_iter()
            .map(|item| match item {
                Item::Stmt(s) => s,
                Item::Cond { cond, then_block, else_block } => Statement::Conditional {
                    cond,
                    then_branch: self.assemble(then_block),
                    else_branch: self.assemble(else_block),
                },
            })
            .collect()
    }
}

/// Mutable builder for one serial specification. Single-threaded.
pub struct SpecBuilder {
    decl: TypeDecl,
    composed: BTreeMap<String, TypeDecl>,
    bodies: Vec<FnBody>,
}

impl SpecBuilder {
    pub fn new(name: &str) -> Result<Self, SpecError> {
        ident(name)?;
        Ok(Self {
            decl: TypeDecl { name: name.to_string(), attributes: Vec::new(), functions: Vec::new() },
            composed: BTreeMap::new(),
            bodies: Vec::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.decl.name
    }

    pub fn add_attribute(&mut self, decl: AttributeDecl) -> Result<AttrHandle, SpecError> {
        if self.decl.attribute(&decl.name).is_some() {
            return Err(SpecError::DuplicateAttribute(decl.name));
        }
        check_attribute(&decl, &self.decl.name, &self.composed)?;
        self.decl.attributes.push(decl);
        Ok(AttrHandle(self.decl.attributes.len() - 1))
    }

    /// Makes `inner` (and everything it composes) available to this
    /// specification. Its exposed set is dropped: composed functions are
    /// reachable only through method calls.
    pub fn register_composed(&mut self, inner: &DataStructureSpec) -> Result<TypeHandle, SpecError> {
        let me = self.decl.name.as_str();
        if inner.name() == me || inner.composed.contains_key(me) {
            return Err(SpecError::CyclicEmbedding(inner.name().to_string()));
        }
        for ty in inner.types() {
            if let Some(existing) = self.composed.get(&ty.name) {
                if existing != ty {
                    return Err(SpecError::DuplicateType(ty.name.clone()));
                }
            }
        }
        for ty in inner.types() {
            self.composed.insert(ty.name.clone(), ty.clone());
        }
        Ok(TypeHandle(inner.name().to_string()))
    }

    pub fn create_function(
        &mut self,
        name: &str,
        return_type: ValueType,
        params: Vec<Param>,
    ) -> Result<FnBuilder<'_>, SpecError> {
        if self.decl.function(name).is_some() {
            return Err(SpecError::DuplicateFunction(name.to_string()));
        }
        let decl = FunctionDecl {
            name: name.to_string(),
            return_type,
            params,
            temporaries: Vec::new(),
            body: Vec::new(),
            is_const: false,
        };
        check_function_header(&decl, &self.decl.name, &self.composed)?;
        self.decl.functions.push(decl);
        self.bodies.push(FnBody { blocks: vec![Vec::new()] });
        let func = self.bodies.len() - 1;
        Ok(FnBuilder { builder: self, func })
    }

    /// Reopens a previously created function for more statements.
    pub fn function(&mut self, name: &str) -> Result<FnBuilder<'_>, SpecError> {
        let func = self
            .decl
            .functions
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| SpecError::UnknownSymbol(name.to_string()))?;
        Ok(FnBuilder { builder: self, func })
    }

    /// Finalizes the specification. Validates every body (returns on all
    /// paths, non-empty then branches) and the exposed set, then deduces
    /// const functions.
    pub fn build(mut self, exposed: &[&str]) -> Result<DataStructureSpec, SpecError> {
        for (decl, body) in self.decl.functions.iter_mut().zip(self.bodies.iter_mut()) {
            decl.body = body.assemble(0);
        }
        let exposed: BTreeSet<String> = exposed.iter().map(|s| s.to_string()).collect();
        for e in &exposed {
            if self.decl.function(e).is_none() {
                return Err(SpecError::UnknownExposedFunction(e.clone()));
            }
        }
        let mut spec = DataStructureSpec { root: self.decl, composed: self.composed, exposed, cc_injected: false };
        super::validate_spec(&spec)?;
        crate::analysis::annotate_const(&mut spec).map_err(|e| SpecError::UnknownSymbol(e.to_string()))?;
        Ok(spec)
    }
}

/// Appends temporaries and statements to one function of a
/// [`SpecBuilder`]. Every statement is type checked on append.
pub struct FnBuilder<'b> {
    builder: &'b mut SpecBuilder,
    func: usize,
}

impl FnBuilder<'_> {
    pub fn add_temporary(&mut self, name: &str, ty: ValueType) -> Result<(), SpecError> {
        ident(name)?;
        let b = &mut *self.builder;
        let f = &b.decl.functions[self.func];
        if f.var_type(name).is_some() {
            return Err(SpecError::DuplicateVariable(name.to_string()));
        }
        if ty == ValueType::Void {
            return Err(SpecError::TypeError(format!("temporary {name} cannot be void")));
        }
        value_type_ok(&ty, &b.decl.name, &b.composed)?;
        b.decl.functions[self.func].temporaries.push(Variable { name: name.to_string(), ty });
        Ok(())
    }

    /// Declares several temporaries at once.
    pub fn temps(&mut self, vars: &[(&str, ValueType)]) -> Result<(), SpecError> {
        for (n, t) in vars {
            self.add_temporary(n, t.clone())?;
        }
        Ok(())
    }

    /// The function's top-level statement list.
    pub fn body(&self) -> BlockHandle {
        BlockHandle { func: self.func, block: 0 }
    }

    fn check(&self, block: BlockHandle, stmt: &Statement) -> Result<(), SpecError> {
        if block.func != self.func || block.block >= self.builder.bodies[self.func].blocks.len() {
            return Err(SpecError::InvalidHandle);
        }
        let b = &*self.builder;
        let checker =
            Checker { this: &b.decl, composed: &b.composed, func: &b.decl.functions[self.func], allow_locks: false };
        checker.statement(stmt, true)
    }

    /// Appends to the function body.
    pub fn append(&mut self, stmt: Statement) -> Result<StatementHandle, SpecError> {
        let body = self.body();
        self.append_to(body, stmt)
    }

    pub fn append_to(&mut self, block: BlockHandle, stmt: Statement) -> Result<StatementHandle, SpecError> {
        self.check(block, &stmt)?;
        let items = &mut self.builder.bodies[self.func].blocks[block.block];
        items.push(Item::Stmt(stmt));
        Ok(StatementHandle { block, index: items.len() - 1 })
    }

    /// Appends a conditional to `block` and returns its (then, else)
    /// branches. Statements appended to `block` afterwards run after
    /// whichever branch was taken.
    pub fn conditional(&mut self, block: BlockHandle, cond: Expression) -> Result<(BlockHandle, BlockHandle), SpecError> {
        let probe = Statement::Conditional { cond, then_branch: Vec::new(), else_branch: Vec::new() };
        self.check(block, &probe)?;
        let Statement::Conditional { cond, .. } = probe else { unreachable!() };
        let body = &mut self.builder.bodies[self.func];
        body.blocks.push(Vec::new());
        body.blocks.push(Vec::new());
        let (then_block, else_block) = (body.blocks.len() - 2, body.blocks.len() - 1);
        body.blocks[block.block].push(Item::Cond { cond, then_block, else_block });
        Ok((BlockHandle { func: self.func, block: then_block }, BlockHandle { func: self.func, block: else_block }))
    }
}

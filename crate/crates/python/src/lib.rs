use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};
use pyo3::IntoPyObjectExt;
use rand::rngs::SmallRng;
use rand::SeedableRng;

use dsgen_core::bench::{self, BenchConfig, BenchError, Distribution, Stage};
use dsgen_core::catalog::{entry, CatalogError, CatalogParams};
use dsgen_core::executor::{ExecError, Instance};
use dsgen_core::runtime::RecordRef;
use dsgen_core::{Value, ValueType};

fn exec_err(e: ExecError) -> PyErr {
    match e {
        ExecError::UnknownMethod(m) => PyKeyError::new_err(m),
        ExecError::ArityOrTypeMismatch(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn catalog_err(e: CatalogError) -> PyErr {
    match e {
        CatalogError::Exec(e) => exec_err(e),
        CatalogError::UnknownStructure(_) | CatalogError::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn bench_err(e: BenchError) -> PyErr {
    match e {
        BenchError::Usage(m) => PyValueError::new_err(m),
        BenchError::Catalog(e) => catalog_err(e),
        BenchError::Exec(e) => exec_err(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_value(obj: &Bound<'_, PyAny>, ty: &ValueType) -> PyResult<Value> {
    let int = |lo: i64, hi: i64| -> PyResult<i64> {
        let v: i64 = obj.extract()?;
        if v < lo || v > hi {
            return Err(PyValueError::new_err(format!("{v} out of range for {ty}")));
        }
        Ok(v)
    };
    Ok(match ty {
        ValueType::I8 => Value::I8(int(i8::MIN as i64, i8::MAX as i64)? as i8),
        ValueType::I16 => Value::I16(int(i16::MIN as i64, i16::MAX as i64)? as i16),
        ValueType::I32 => Value::I32(int(i32::MIN as i64, i32::MAX as i64)? as i32),
        ValueType::I64 => Value::I64(obj.extract()?),
        ValueType::F64 => Value::F64(obj.extract()?),
        ValueType::Bool => Value::Bool(obj.extract()?),
        ValueType::FixedString(_) => Value::Str(obj.extract::<String>()?.into_bytes()),
        ValueType::RecordPtr(_) => match obj.extract::<Option<u64>>()? {
            None => Value::null(),
            Some(raw) => Value::Ptr(RecordRef::from_raw(raw)),
        },
        ValueType::Void => Value::Void,
    })
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    match v {
        Value::I8(x) => x.into_py_any(py),
        Value::I16(x) => x.into_py_any(py),
        Value::I32(x) => x.into_py_any(py),
        Value::I64(x) => x.into_py_any(py),
        Value::F64(x) => x.into_py_any(py),
        Value::Bool(x) => x.into_py_any(py),
        Value::Str(s) => String::from_utf8_lossy(s).into_owned().into_py_any(py),
        Value::Ptr(r) if r.is_null() => Ok(py.None()),
        Value::Ptr(r) => r.raw().into_py_any(py),
        Value::Void => Ok(py.None()),
    }
}

/// A live catalog structure. Method calls are transactions.
#[pyclass(module = "dsgen")]
struct Structure {
    inner: Instance,
    name: String,
}

#[pymethods]
impl Structure {
    #[new]
    #[pyo3(signature = (name, capacity=1024, columns=10, records=1000, namespace=None))]
    fn new(name: &str, capacity: usize, columns: usize, records: usize, namespace: Option<&str>) -> PyResult<Self> {
        let e = entry(name, CatalogParams { capacity, columns, records }).map_err(catalog_err)?;
        let ns = namespace.map(str::to_string).unwrap_or_else(|| format!("py-{name}"));
        let inner = e.instantiate(&ns).map_err(catalog_err)?;
        Ok(Self { inner, name: name.to_string() })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    /// Exposed methods as (name, [(param type, by_pointer)], return type).
    fn methods(&self) -> Vec<(String, Vec<(String, bool)>, String)> {
        self.inner
            .methods()
            .into_iter()
            .map(|(n, ps, r)| (n, ps.into_iter().map(|(t, p)| (t.to_string(), p)).collect(), r.to_string()))
            .collect()
    }

    /// Calls an exposed method. Methods with by-pointer parameters return
    /// `(result, [out values])`.
    #[pyo3(signature = (method, *args))]
    fn call(&self, py: Python<'_>, method: &str, args: &Bound<'_, PyTuple>) -> PyResult<Py<PyAny>> {
        let sig = self
            .inner
            .methods()
            .into_iter()
            .find(|m| m.0 == method)
            .ok_or_else(|| PyKeyError::new_err(method.to_string()))?;
        if sig.1.len() != args.len() {
            return Err(PyValueError::new_err(format!("{method} takes {} arguments, got {}", sig.1.len(), args.len())));
        }
        let mut values = sig.1.iter().zip(args.iter()).map(|((t, _), a)| to_value(&a, t)).collect::<PyResult<Vec<_>>>()?;
        let inner = &self.inner;
        let ret = py.detach(|| inner.invoke(method, &mut values)).map_err(exec_err)?;
        let ret = to_py(py, &ret)?;
        if sig.1.iter().any(|(_, p)| *p) {
            let outs = sig
                .1
                .iter()
                .zip(&values)
                .filter(|((_, p), _)| *p)
                .map(|(_, v)| to_py(py, v))
                .collect::<PyResult<Vec<_>>>()?;
            return (ret, PyList::new(py, outs)?).into_py_any(py);
        }
        Ok(ret)
    }

    /// Current value of an attribute of the structure's own record.
    fn attribute(&self, py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.attribute(name).map_err(exec_err)?)
    }

    fn map_len(&self, name: &str) -> PyResult<usize> {
        self.inner.map_len(name).map_err(exec_err)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let s = self.inner.stats();
        d.set_item("invocations", s.invocations)?;
        d.set_item("retries", s.retries)?;
        let l = self.inner.manager().stats();
        d.set_item("shared_locks", l.shared_locks)?;
        d.set_item("exclusive_locks", l.exclusive_locks)?;
        d.set_item("aborts", l.aborts)?;
        Ok(d)
    }

    /// Frees every record of the structure. Returns the number of rows.
    fn destroy(&self) -> PyResult<usize> {
        self.inner.destroy().map_err(exec_err)
    }

    fn __repr__(&self) -> String {
        format!("Structure({:?}, root={:#x})", self.name, self.inner.root().raw())
    }
}

/// Power-law key generator over `0..domain`.
#[pyclass(module = "dsgen")]
struct Zipfian {
    inner: bench::Zipfian,
}

#[pymethods]
impl Zipfian {
    #[new]
    fn new(domain: u64, theta: f64) -> PyResult<Self> {
        Ok(Self { inner: bench::Zipfian::new(domain, theta).map_err(bench_err)? })
    }

    fn probability(&self, rank: u64) -> f64 {
        self.inner.probability(rank)
    }

    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, py: Python<'_>, count: usize, seed: u64) -> Vec<u64> {
        py.detach(|| {
            let mut rng = SmallRng::seed_from_u64(seed);
            (0..count).map(|_| self.inner.sample(&mut rng)).collect()
        })
    }
}

#[pyfunction]
fn dump_ir(structure: &str, stage: &str) -> PyResult<String> {
    let stage: Stage = stage.parse().map_err(bench_err)?;
    bench::dump_ir(structure, stage, CatalogParams::default()).map_err(bench_err)
}

/// Runs one benchmark and returns its CSV fields as a dict.
#[pyfunction]
#[pyo3(signature = (structure, threads=1, ops=100_000, dist="uniform", theta=0.4, read_ratio=0.5, columns=10, records_per_worker=100_000, seed=0x5eed))]
#[allow(clippy::too_many_arguments)]
fn run_bench<'py>(
    py: Python<'py>,
    structure: &str,
    threads: usize,
    ops: u64,
    dist: &str,
    theta: f64,
    read_ratio: f64,
    columns: usize,
    records_per_worker: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let distribution = match dist {
        "uniform" => Distribution::Uniform,
        "zipf" => Distribution::Zipfian { theta },
        other => return Err(PyValueError::new_err(format!("unknown distribution {other}"))),
    };
    let cfg = BenchConfig {
        structure: structure.to_string(),
        threads,
        ops_per_thread: ops,
        distribution,
        read_ratio,
        num_columns: columns,
        records_per_worker,
        seed,
        ..Default::default()
    };
    let r = py.detach(|| bench::run(&cfg)).map_err(bench_err)?;
    let d = PyDict::new(py);
    d.set_item("structure", r.structure)?;
    d.set_item("threads", r.threads)?;
    d.set_item("distribution", r.distribution.to_string())?;
    d.set_item("theta", r.distribution.theta())?;
    d.set_item("read_ratio", r.read_ratio)?;
    d.set_item("ops", r.ops)?;
    d.set_item("commits", r.commits)?;
    d.set_item("aborts", r.aborts)?;
    d.set_item("seconds", r.seconds)?;
    d.set_item("throughput", r.throughput)?;
    Ok(d)
}

#[pymodule]
fn dsgen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Structure>()?;
    m.add_class::<Zipfian>()?;
    m.add_function(wrap_pyfunction!(dump_ir, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add("STRUCTURES", dsgen_core::catalog::STRUCTURES.to_vec())?;
    m.add("CSV_HEADER", bench::CSV_HEADER)?;
    Ok(())
}

//! Scalar types and runtime values shared by the IR, the storage layer and
//! the interpreter.

use std::fmt;

use crate::runtime::RecordRef;

/// Type of an attribute column, variable, parameter or return slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueType {
    I8,
    I16,
    I32,
    I64,
    F64,
    /// Fixed-length, null-terminated byte string. The length counts the
    /// terminator, so at most `len - 1` content bytes fit.
    FixedString(usize),
    /// Reference to a record of the named composed type.
    RecordPtr(String),
    Bool,
    Void,
}

impl ValueType {
    pub fn ptr(name: impl Into<String>) -> Self {
        ValueType::RecordPtr(name.into())
    }

    /// Storage width in bytes.
    pub fn width(&self) -> usize {
        match self {
            ValueType::I8 | ValueType::Bool => 1,
            ValueType::I16 => 2,
            ValueType::I32 => 4,
            ValueType::I64 | ValueType::F64 | ValueType::RecordPtr(_) => 8,
            ValueType::FixedString(len) => *len,
            ValueType::Void => 0,
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, ValueType::I8 | ValueType::I16 | ValueType::I32 | ValueType::I64)
    }

    pub fn is_numeric(&self) -> bool {
        self.is_integer() || *self == ValueType::F64
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, ValueType::RecordPtr(_))
    }

    /// Zero value: 0, 0.0, false, empty string, null.
    pub fn zero(&self) -> Value {
        match self {
            ValueType::I8 => Value::I8(0),
            ValueType::I16 => Value::I16(0),
            ValueType::I32 => Value::I32(0),
            ValueType::I64 => Value::I64(0),
            ValueType::F64 => Value::F64(0.0),
            ValueType::FixedString(_) => Value::Str(Vec::new()),
            ValueType::RecordPtr(_) => Value::Ptr(RecordRef::NULL),
            ValueType::Bool => Value::Bool(false),
            ValueType::Void => Value::Void,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::I8 => f.write_str("i8"),
            ValueType::I16 => f.write_str("i16"),
            ValueType::I32 => f.write_str("i32"),
            ValueType::I64 => f.write_str("i64"),
            ValueType::F64 => f.write_str("f64"),
            ValueType::FixedString(n) => write!(f, "str[{n}]"),
            ValueType::RecordPtr(name) => write!(f, "ptr<{name}>"),
            ValueType::Bool => f.write_str("bool"),
            ValueType::Void => f.write_str("void"),
        }
    }
}

/// A tagged runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    I8(i8),
    I16(i16),
    I32(i32),
    I64(i64),
    F64(f64),
    /// String content without the terminator.
    Str(Vec<u8>),
    Ptr(RecordRef),
    Bool(bool),
    Void,
}

impl Value {
    pub fn null() -> Self {
        Value::Ptr(RecordRef::NULL)
    }

    /// True when the value may be stored in a slot of type `ty`. A pointer
    /// value carries no target type, so it matches every `RecordPtr`.
    pub fn matches(&self, ty: &ValueType) -> bool {
        match (self, ty) {
            (Value::I8(_), ValueType::I8)
            | (Value::I16(_), ValueType::I16)
            | (Value::I32(_), ValueType::I32)
            | (Value::I64(_), ValueType::I64)
            | (Value::F64(_), ValueType::F64)
            | (Value::Ptr(_), ValueType::RecordPtr(_))
            | (Value::Bool(_), ValueType::Bool)
            | (Value::Void, ValueType::Void) => true,
            (Value::Str(s), ValueType::FixedString(n)) => s.len() < *n && !s.contains(&0),
            _ => false,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::I8(v) => Some(v as i64),
            Value::I16(v) => Some(v as i64),
            Value::I32(v) => Some(v as i64),
            Value::I64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_ptr(&self) -> Option<RecordRef> {
        match *self {
            Value::Ptr(r) => Some(r),
            _ => None,
        }
    }

    /// Writes the storage encoding into `out`, which must be exactly
    /// `ty.width()` bytes. Integers and floats are little-endian; strings
    /// are zero padded.
    pub fn encode_into(&self, out: &mut [u8]) {
        match self {
            Value::I8(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::I16(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::I32(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::I64(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::F64(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::Ptr(r) => out.copy_from_slice(&r.raw().to_le_bytes()),
            Value::Bool(b) => out[0] = *b as u8,
            Value::Str(s) => {
                out[..s.len()].copy_from_slice(s);
                out[s.len()..].fill(0);
            }
            Value::Void => {}
        }
    }

    pub fn encode(&self, ty: &ValueType) -> Vec<u8> {
        let mut out = vec![0; ty.width()];
        self.encode_into(&mut out);
        out
    }

    pub fn decode(ty: &ValueType, bytes: &[u8]) -> Value {
        fn arr<const N: usize>(b: &[u8]) -> [u8; N] {
            b[..N].try_into().expect("column width")
        }
        match ty {
            ValueType::I8 => Value::I8(bytes[0] as i8),
            ValueType::I16 => Value::I16(i16::from_le_bytes(arr(bytes))),
            ValueType::I32 => Value::I32(i32::from_le_bytes(arr(bytes))),
            ValueType::I64 => Value::I64(i64::from_le_bytes(arr(bytes))),
            ValueType::F64 => Value::F64(f64::from_le_bytes(arr(bytes))),
            ValueType::RecordPtr(_) => Value::Ptr(RecordRef::from_raw(u64::from_le_bytes(arr(bytes)))),
            ValueType::Bool => Value::Bool(bytes[0] != 0),
            ValueType::FixedString(_) => {
                let end = bytes.iter().position(|&b| b == 0).unwrap_or(bytes.len());
                Value::Str(bytes[..end].to_vec())
            }
            ValueType::Void => Value::Void,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::I8(v) => write!(f, "{v}"),
            Value::I16(v) => write!(f, "{v}"),
            Value::I32(v) => write!(f, "{v}"),
            Value::I64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v:?}"),
            Value::Str(s) => write!(f, "{:?}", String::from_utf8_lossy(s)),
            Value::Ptr(r) => write!(f, "{r}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Void => f.write_str("void"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn string_fits_with_terminator() {
        let ty = ValueType::FixedString(4);
        assert!(Value::Str(b"abc".to_vec()).matches(&ty));
        assert!(!Value::Str(b"abcd".to_vec()).matches(&ty));
        let bytes = Value::Str(b"ab".to_vec()).encode(&ty);
        assert_eq!(bytes, vec![b'a', b'b', 0, 0]);
        assert_eq!(Value::decode(&ty, &bytes), Value::Str(b"ab".to_vec()));
    }

    #[test]
    fn null_pointer_matches_any_record_type() {
        assert!(Value::null().matches(&ValueType::ptr("Node")));
        assert!(Value::null().matches(&ValueType::ptr("Other")));
        assert!(!Value::I64(0).matches(&ValueType::ptr("Node")));
    }

    fn typed_value() -> impl Strategy<Value = (ValueType, Value)> {
        prop_oneof![
            any::<i8>().prop_map(|v| (ValueType::I8, Value::I8(v))),
            any::<i16>().prop_map(|v| (ValueType::I16, Value::I16(v))),
            any::<i32>().prop_map(|v| (ValueType::I32, Value::I32(v))),
            any::<i64>().prop_map(|v| (ValueType::I64, Value::I64(v))),
            any::<u64>().prop_map(|v| (ValueType::ptr("T"), Value::Ptr(RecordRef::from_raw(v)))),
            any::<bool>().prop_map(|v| (ValueType::Bool, Value::Bool(v))),
            proptest::collection::vec(1u8..=255, 0..7)
                .prop_map(|s| (ValueType::FixedString(8), Value::Str(s))),
        ]
    }

    proptest! {
        #[test]
        fn encoding_roundtrips((ty, v) in typed_value()) {
            let bytes = v.encode(&ty);
            prop_assert_eq!(bytes.len(), ty.width());
            prop_assert_eq!(Value::decode(&ty, &bytes), v);
        }
    }
}

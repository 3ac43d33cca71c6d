//! Little-endian binary encoding helpers shared by segment, WAL, and index
//! block layouts.

use crate::error::{Error, Result};
use crate::value::{AttributeValue, GeometryValue, KeyValue, Row};

pub fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_i64(buf: &mut Vec<u8>, v: i64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f32(buf: &mut Vec<u8>, v: f32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    put_u32(buf, b.len() as u32);
    buf.extend_from_slice(b);
}

pub fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_bytes(buf, s.as_bytes());
}

/// Sequential reader over a decoded block payload.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::MalformedSegment(format!(
                "short read: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn str(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::MalformedSegment("invalid utf8 string".into()))
    }
}

const KEY_INT: u8 = 0;
const KEY_STR: u8 = 1;

pub fn put_key(buf: &mut Vec<u8>, key: &KeyValue) {
    match key {
        KeyValue::Int(v) => {
            buf.push(KEY_INT);
            put_i64(buf, *v);
        }
        KeyValue::Str(s) => {
            buf.push(KEY_STR);
            put_str(buf, s);
        }
    }
}

pub fn read_key(r: &mut Reader<'_>) -> Result<KeyValue> {
    match r.u8()? {
        KEY_INT => Ok(KeyValue::Int(r.i64()?)),
        KEY_STR => Ok(KeyValue::Str(r.str()?)),
        t => Err(Error::MalformedSegment(format!("unknown key tag {t}"))),
    }
}

const VAL_NULL: u8 = 0;
const VAL_INT: u8 = 1;
const VAL_FLOAT: u8 = 2;
const VAL_STR: u8 = 3;
const VAL_VECTOR: u8 = 4;
const VAL_POINT: u8 = 5;
const VAL_RECT: u8 = 6;
const VAL_POLYGON: u8 = 7;
const VAL_BLOB: u8 = 8;

pub fn put_value(buf: &mut Vec<u8>, value: &AttributeValue) {
    match value {
        AttributeValue::Null => buf.push(VAL_NULL),
        AttributeValue::Int(v) => {
            buf.push(VAL_INT);
            put_i64(buf, *v);
        }
        AttributeValue::Float(v) => {
            buf.push(VAL_FLOAT);
            put_f64(buf, *v);
        }
        AttributeValue::Str(s) => {
            buf.push(VAL_STR);
            put_str(buf, s);
        }
        AttributeValue::Vector(v) => {
            buf.push(VAL_VECTOR);
            put_u32(buf, v.len() as u32);
            for &c in v {
                put_f32(buf, c);
            }
        }
        AttributeValue::Geometry(GeometryValue::Point([x, y])) => {
            buf.push(VAL_POINT);
            put_f64(buf, *x);
            put_f64(buf, *y);
        }
        AttributeValue::Geometry(GeometryValue::Rect(r)) => {
            buf.push(VAL_RECT);
            for c in r {
                put_f64(buf, *c);
            }
        }
        AttributeValue::Geometry(GeometryValue::Polygon(ring)) => {
            buf.push(VAL_POLYGON);
            put_u32(buf, ring.len() as u32);
            for [x, y] in ring {
                put_f64(buf, *x);
                put_f64(buf, *y);
            }
        }
        AttributeValue::Blob(b) => {
            buf.push(VAL_BLOB);
            put_bytes(buf, b);
        }
    }
}

pub fn read_value(r: &mut Reader<'_>) -> Result<AttributeValue> {
    Ok(match r.u8()? {
        VAL_NULL => AttributeValue::Null,
        VAL_INT => AttributeValue::Int(r.i64()?),
        VAL_FLOAT => AttributeValue::Float(r.f64()?),
        VAL_STR => AttributeValue::Str(r.str()?),
        VAL_VECTOR => {
            let n = r.u32()? as usize;
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(r.f32()?);
            }
            AttributeValue::Vector(v)
        }
        VAL_POINT => AttributeValue::Geometry(GeometryValue::Point([r.f64()?, r.f64()?])),
        VAL_RECT => {
            AttributeValue::Geometry(GeometryValue::Rect([r.f64()?, r.f64()?, r.f64()?, r.f64()?]))
        }
        VAL_POLYGON => {
            let n = r.u32()? as usize;
            let mut ring = Vec::with_capacity(n);
            for _ in 0..n {
                ring.push([r.f64()?, r.f64()?]);
            }
            AttributeValue::Geometry(GeometryValue::Polygon(ring))
        }
        VAL_BLOB => AttributeValue::Blob(r.bytes()?.to_vec()),
        t => return Err(Error::MalformedSegment(format!("unknown value tag {t}"))),
    })
}

pub fn put_row(buf: &mut Vec<u8>, row: &Row) {
    put_key(buf, &row.key);
    put_u64(buf, row.seqno);
    buf.push(row.tombstone as u8);
    put_u16(buf, row.values.len() as u16);
    for v in &row.values {
        put_value(buf, v);
    }
}

pub fn read_row(r: &mut Reader<'_>) -> Result<Row> {
    let key = read_key(r)?;
    let seqno = r.u64()?;
    let tombstone = r.u8()? != 0;
    let n = r.u16()? as usize;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(read_value(r)?);
    }
    Ok(Row {
        key,
        seqno,
        tombstone,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_value() -> impl Strategy<Value = AttributeValue> {
        prop_oneof![
            Just(AttributeValue::Null),
            any::<i64>().prop_map(AttributeValue::Int),
            any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(AttributeValue::Float),
            ".{0,40}".prop_map(AttributeValue::Str),
            prop::collection::vec(any::<f32>().prop_filter("finite", |f| f.is_finite()), 0..16)
                .prop_map(AttributeValue::Vector),
            (any::<f64>(), any::<f64>())
                .prop_filter("finite", |(x, y)| x.is_finite() && y.is_finite())
                .prop_map(|(x, y)| AttributeValue::Geometry(GeometryValue::Point([x, y]))),
            prop::collection::vec(any::<u8>(), 0..32).prop_map(AttributeValue::Blob),
        ]
    }

    proptest! {
        #[test]
        fn row_roundtrip(
            key in prop_oneof![any::<i64>().prop_map(KeyValue::Int), ".{0,20}".prop_map(KeyValue::Str)],
            seqno in any::<u64>(),
            values in prop::collection::vec(arb_value(), 0..8),
        ) {
            let row = Row { key, seqno, tombstone: false, values };
            let mut buf = Vec::new();
            put_row(&mut buf, &row);
            let mut r = Reader::new(&buf);
            let back = read_row(&mut r).unwrap();
            prop_assert_eq!(row, back);
            prop_assert_eq!(r.remaining(), 0);
        }
    }
}

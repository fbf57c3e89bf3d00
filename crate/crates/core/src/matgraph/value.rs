//! Scalar-or-color values flowing along material graph edges.

use serde::{Deserialize, Serialize};

/// Rec. 709 luminance weights used whenever a color feeds a scalar input.
pub const LUMA: [f32; 3] = [0.2126, 0.7152, 0.0722];

/// Static type of a node output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueType {
    Scalar,
    Color,
}

impl ValueType {
    /// Result type of an elementwise binary op: scalar only if both sides are.
    pub fn join(self, other: ValueType) -> ValueType {
        if self == ValueType::Scalar && other == ValueType::Scalar {
            ValueType::Scalar
        } else {
            ValueType::Color
        }
    }
}

/// A finite scalar or RGB triple.
///
/// Every constructor and operator keeps components finite: non-finite
/// results collapse to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Scalar(f32),
    Color([f32; 3]),
}

impl Default for Value {
    fn default() -> Self {
        Value::Scalar(0.0)
    }
}

#[inline]
pub(crate) fn finite_or_zero(x: f32) -> f32 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

impl Value {
    pub fn scalar(x: f32) -> Value {
        Value::Scalar(finite_or_zero(x))
    }

    pub fn color(c: [f32; 3]) -> Value {
        Value::Color(c.map(finite_or_zero))
    }

    pub fn gray(x: f32) -> Value {
        Value::color([x, x, x])
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Scalar(_) => ValueType::Scalar,
            Value::Color(_) => ValueType::Color,
        }
    }

    /// Promote to a triple; scalars replicate.
    #[inline]
    pub fn rgb(&self) -> [f32; 3] {
        match *self {
            Value::Scalar(s) => [s, s, s],
            Value::Color(c) => c,
        }
    }

    /// Demote to a scalar; colors take their luminance.
    #[inline]
    pub fn as_scalar(&self) -> f32 {
        match *self {
            Value::Scalar(s) => s,
            Value::Color(c) => luminance(c),
        }
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => a.to_bits() == b.to_bits(),
            (Value::Color(a), Value::Color(b)) => {
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rgb().iter().all(|c| c.is_finite())
    }
}

#[inline]
pub fn luminance(c: [f32; 3]) -> f32 {
    finite_or_zero(LUMA[0] * c[0] + LUMA[1] * c[1] + LUMA[2] * c[2])
}

#[inline]
fn zip_with(a: Value, b: Value, f: impl Fn(f32, f32) -> f32) -> Value {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(finite_or_zero(f(x, y))),
        _ => {
            let (x, y) = (a.rgb(), b.rgb());
            Value::Color([
                finite_or_zero(f(x[0], y[0])),
                finite_or_zero(f(x[1], y[1])),
                finite_or_zero(f(x[2], y[2])),
            ])
        }
    }
}

#[inline]
fn map(a: Value, f: impl Fn(f32) -> f32) -> Value {
    match a {
        Value::Scalar(x) => Value::Scalar(finite_or_zero(f(x))),
        Value::Color(c) => Value::Color(c.map(|x| finite_or_zero(f(x)))),
    }
}

pub fn add(a: Value, b: Value) -> Value {
    zip_with(a, b, |x, y| x + y)
}

pub fn sub(a: Value, b: Value) -> Value {
    zip_with(a, b, |x, y| x - y)
}

pub fn mul(a: Value, b: Value) -> Value {
    zip_with(a, b, |x, y| x * y)
}

/// Division by zero yields zero.
pub fn div(a: Value, b: Value) -> Value {
    zip_with(a, b, |x, y| if y == 0.0 { 0.0 } else { x / y })
}

/// `max(base, 0) ^ exponent`; non-positive bases give zero.
pub fn power(a: Value, b: Value) -> Value {
    zip_with(a, b, |x, y| if x <= 0.0 { 0.0 } else { x.powf(y) })
}

/// Linear blend `a + (b - a) * t` with a scalar factor.
pub fn mix(a: Value, b: Value, t: Value) -> Value {
    let t = t.as_scalar();
    zip_with(a, b, |x, y| x * (1.0 - t) + y * t)
}

pub fn clamp01(a: Value) -> Value {
    map(a, |x| x.clamp(0.0, 1.0))
}

pub fn dot(a: Value, b: Value) -> Value {
    let (x, y) = (a.rgb(), b.rgb());
    Value::scalar(x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
}

/// `0.5 + 0.5 sin(2 pi x)`, elementwise.
pub fn sin_wave(a: Value) -> Value {
    map(a, |x| 0.5 + 0.5 * (std::f32::consts::TAU * x).sin())
}

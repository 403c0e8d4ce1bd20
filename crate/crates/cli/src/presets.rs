//! Initial-condition and source presets.

use std::fmt;
use std::str::FromStr;

use bulksurf_core::diskfem::DiskMesh;
use bulksurf_core::stepper::Source;

/// Marsaglia xorshift64 with shifts (13, 7, 17). The update is fixed so that
/// seeded fields can be regenerated exactly in any language.
#[derive(Debug, Clone)]
pub struct XorShift64 {
    state: u64,
}

impl XorShift64 {
    /// Replaces the absorbing seed 0.
    const ZERO_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        XorShift64 { state: if seed == 0 { Self::ZERO_SEED } else { seed } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.state = x;
        x
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialPreset {
    Constant(f64),
    /// `a exp(-(|x| / r0)^2)`.
    RadialBump { a: f64, r0: f64 },
    /// Nodewise uniform in `[-a, a]`.
    Random { a: f64, seed: u64 },
    /// Harmonic `a r^k cos(k theta)`; zero mean on the structured disk mesh.
    Mode { a: f64, k: u32 },
}

impl InitialPreset {
    pub fn field(&self, mesh: &DiskMesh) -> Vec<f64> {
        match *self {
            InitialPreset::Constant(a) => vec![a; mesh.n_bulk()],
            InitialPreset::RadialBump { a, r0 } => mesh
                .vertices
                .iter()
                .map(|p| a * (-(p[0] * p[0] + p[1] * p[1]) / (r0 * r0)).exp())
                .collect(),
            InitialPreset::Random { a, seed } => {
                let mut rng = XorShift64::new(seed);
                (0..mesh.n_bulk()).map(|_| a * (2.0 * rng.next_f64() - 1.0)).collect()
            }
            InitialPreset::Mode { a, k } => mesh
                .vertices
                .iter()
                .map(|p| {
                    let r = p[0].hypot(p[1]);
                    a * r.powi(k as i32) * (k as f64 * p[1].atan2(p[0])).cos()
                })
                .collect(),
        }
    }
}

/// Splits `name(a, b, ...)` into the name and its trimmed arguments.
fn split_call(s: &str) -> Result<(&str, Vec<&str>), String> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, Vec::new())),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("missing ')' in '{s}'"))?;
            let args = if inner.trim().is_empty() { Vec::new() } else { inner.split(',').map(str::trim).collect() };
            Ok((s[..open].trim(), args))
        }
    }
}

fn num<T: FromStr>(preset: &str, arg: &str) -> Result<T, String> {
    arg.parse().map_err(|_| format!("bad argument '{arg}' to {preset}"))
}

fn arity(name: &str, args: &[&str], n: usize) -> Result<(), String> {
    if args.len() == n {
        Ok(())
    } else {
        Err(format!("{name} takes {n} argument(s), got {}", args.len()))
    }
}

impl FromStr for InitialPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = split_call(s)?;
        match name {
            "constant" => {
                arity(name, &args, 1)?;
                Ok(InitialPreset::Constant(num(name, args[0])?))
            }
            "radial-bump" => {
                arity(name, &args, 2)?;
                let r0: f64 = num(name, args[1])?;
                if !(r0 > 0.0) {
                    return Err(format!("radial-bump radius must be positive, got {r0}"));
                }
                Ok(InitialPreset::RadialBump { a: num(name, args[0])?, r0 })
            }
            "random" => {
                arity(name, &args, 2)?;
                Ok(InitialPreset::Random { a: num(name, args[0])?, seed: num(name, args[1])? })
            }
            "mode" => {
                arity(name, &args, 2)?;
                Ok(InitialPreset::Mode { a: num(name, args[0])?, k: num(name, args[1])? })
            }
            _ => Err(format!("unknown initial-condition preset '{name}'")),
        }
    }
}

impl fmt::Display for InitialPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialPreset::Constant(a) => write!(f, "constant({a})"),
            InitialPreset::RadialBump { a, r0 } => write!(f, "radial-bump({a}, {r0})"),
            InitialPreset::Random { a, seed } => write!(f, "random({a}, {seed})"),
            InitialPreset::Mode { a, k } => write!(f, "mode({a}, {k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourcePreset {
    Zero,
    Constant(f64),
    /// `a t`.
    Ramp(f64),
}

impl SourcePreset {
    pub fn source(&self, len: usize) -> Source {
        match *self {
            SourcePreset::Zero => Source::Zero,
            SourcePreset::Constant(a) => Source::Constant(vec![a; len]),
            SourcePreset::Ramp(a) => Source::Ramp(vec![a; len]),
        }
    }
}

impl FromStr for SourcePreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = split_call(s)?;
        match name {
            "zero" => {
                arity(name, &args, 0)?;
                Ok(SourcePreset::Zero)
            }
            "constant" => {
                arity(name, &args, 1)?;
                Ok(SourcePreset::Constant(num(name, args[0])?))
            }
            "ramp" => {
                arity(name, &args, 1)?;
                Ok(SourcePreset::Ramp(num(name, args[0])?))
            }
            _ => Err(format!("unknown source preset '{name}'")),
        }
    }
}

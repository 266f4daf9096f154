//! Unit-circle functions with dyadic phases and exact sums of roots of
//! unity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{GF2Vector, Subspace};
use crate::nonclassical::{NonClassicalPoly, TorusFunction, TorusValue};
use crate::par::pairwise_sum;

/// Phases are kept over a common denominator of at most `2^MAX_PHASE_DEPTH`.
pub const MAX_PHASE_DEPTH: u32 = 16;

/// `f(x) = e^{2πi p(x) / 2^depth}` on F_2^n; `depth ≤ 1` is the ±1 case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseFunction {
    n: usize,
    depth: u32,
    phases: Vec<u32>,
}

impl PhaseFunction {
    pub fn new(n: usize, depth: u32, phases: Vec<u32>) -> Result<Self> {
        if n > 24 {
            return Err(Error::SizeGuard(format!("a table over F_2^{n} is too large")));
        }
        if depth > MAX_PHASE_DEPTH {
            return Err(Error::SizeGuard(format!("phase depth {depth} exceeds {MAX_PHASE_DEPTH}")));
        }
        if phases.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, found: phases.len() });
        }
        if let Some(p) = phases.iter().find(|&&p| p >> depth != 0) {
            return Err(Error::Invalid(format!("phase numerator {p} is not below 2^{depth}")));
        }
        Ok(Self { n, depth, phases }.normalized())
    }

    /// Drops common factors of two so the representation is canonical.
    fn normalized(mut self) -> Self {
        while self.depth > 0 && self.phases.iter().all(|p| p & 1 == 0) {
            self.depth -= 1;
            for p in &mut self.phases {
                *p >>= 1;
            }
        }
        self
    }

    pub fn one(n: usize) -> Result<Self> {
        Self::new(n, 0, vec![0; 1 << n])
    }

    /// `(−1)^{s(x)}`.
    pub fn from_signs(n: usize, signs: &[bool]) -> Result<Self> {
        Self::new(n, 1, signs.iter().map(|&s| s as u32).collect())
    }

    pub fn from_torus(f: &TorusFunction) -> Result<Self> {
        let depth = f.depth();
        if depth > MAX_PHASE_DEPTH {
            return Err(Error::SizeGuard(format!("phase depth {depth} exceeds {MAX_PHASE_DEPTH}")));
        }
        Self::new(f.n(), depth, f.values().iter().map(|v| v.scaled_to(depth) as u32).collect())
    }

    /// `e(q(x))`.
    pub fn from_poly(q: &NonClassicalPoly) -> Result<Self> {
        Self::from_torus(&q.table()?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn is_pm1(&self) -> bool {
        self.depth <= 1
    }

    pub fn raw(&self) -> &[u32] {
        &self.phases
    }

    pub fn phase(&self, x: u64) -> TorusValue {
        TorusValue::new(self.phases[x as usize] as i64, self.depth).expect("depth is bounded")
    }

    pub fn value(&self, x: u64) -> Complex64 {
        Complex64::from_polar(1.0, std::f64::consts::TAU * self.phase(x).to_f64())
    }

    pub fn to_torus(&self) -> TorusFunction {
        TorusFunction::new(self.n, (0..self.phases.len() as u64).map(|x| self.phase(x)).collect()).expect("same size")
    }

    fn mask(&self) -> u32 {
        (1u32 << self.depth) - 1
    }

    fn rescaled(&self, depth: u32) -> Vec<u32> {
        self.phases.iter().map(|p| p << (depth - self.depth)).collect()
    }

    /// `∂_a f(x) = f(x + a) · conj f(x)`.
    pub fn mder(&self, a: u64) -> Self {
        let m = self.mask();
        let phases = (0..self.phases.len()).map(|x| self.phases[x ^ a as usize].wrapping_sub(self.phases[x]) & m).collect();
        Self { n: self.n, depth: self.depth, phases }.normalized()
    }

    /// `x ↦ f(x + b)`.
    pub fn translate(&self, b: u64) -> Self {
        let phases = (0..self.phases.len()).map(|x| self.phases[x ^ b as usize]).collect();
        Self { n: self.n, depth: self.depth, phases }
    }

    pub fn conj(&self) -> Self {
        let m = self.mask();
        Self { n: self.n, depth: self.depth, phases: self.phases.iter().map(|p| p.wrapping_neg() & m).collect() }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        let d = self.depth.max(other.depth);
        let (a, b) = (self.rescaled(d), other.rescaled(d));
        let m = (1u32 << d) - 1;
        Self::new(self.n, d, a.iter().zip(&b).map(|(x, y)| x.wrapping_add(*y) & m).collect())
    }

    /// `t ↦ f(Σ t_i u_i + shift)` in the coordinates of `u`.
    pub fn restrict(&self, u: &Subspace, shift: u64) -> Result<Self> {
        if u.ambient_dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: u.ambient_dim() });
        }
        let m = u.dim();
        let phases = (0..1u64 << m)
            .map(|t| {
                let x = u.from_coords(&GF2Vector::from_u64(m, t)).to_u64() ^ shift;
                self.phases[x as usize]
            })
            .collect();
        Self::new(m, self.depth, phases)
    }

    /// `|E_x f(x) conj g(x)|`, exact up to the final conversion.
    pub fn inner(&self, other: &Self) -> Result<(Complex64, f64)> {
        let h = self.mul(&other.conj())?;
        let s = CycloInt::from_phases(h.depth, &h.phases);
        let (v, e) = s.to_complex();
        let scale = (h.phases.len() as f64).recip();
        Ok((v * scale, e * scale))
    }
}

/// An element `Σ_t c_t ζ^t` of `Z[ζ]` with `ζ = e^{2πi/2^depth}`, written in
/// the basis `1, ζ, …, ζ^{h−1}` where `h = 2^{depth−1}` and `ζ^h = −1`.
/// The representation is unique, so equality is exact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycloInt {
    depth: u32,
    coeffs: Vec<i128>,
}

impl CycloInt {
    pub fn zero(depth: u32) -> Self {
        let depth = depth.max(1);
        Self { depth, coeffs: vec![0; 1 << (depth - 1)] }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn coeffs(&self) -> &[i128] {
        &self.coeffs
    }

    fn half(&self) -> u32 {
        self.coeffs.len() as u32
    }

    /// Adds `count · ζ^t`.
    pub fn add_power(&mut self, t: u32, count: i128) {
        let h = self.half();
        let t = t & (2 * h - 1);
        if t < h {
            self.coeffs[t as usize] += count;
        } else {
            self.coeffs[(t - h) as usize] -= count;
        }
    }

    /// `Σ_x ζ^{p(x)}`, with phases over `2^depth`.
    pub fn from_phases(depth: u32, phases: &[u32]) -> Self {
        let mut hist = vec![0i128; 1 << depth.max(1)];
        let mask = hist.len() as u32 - 1;
        for &p in phases {
            hist[(p << (depth.max(1) - depth)) as usize & mask as usize] += 1;
        }
        Self::from_histogram(depth.max(1), &hist)
    }

    /// `Σ_t hist[t] ζ^t` over the full range `0..2^depth`.
    pub fn from_histogram(depth: u32, hist: &[i128]) -> Self {
        let mut out = Self::zero(depth);
        for (t, &c) in hist.iter().enumerate() {
            if c != 0 {
                out.add_power(t as u32, c);
            }
        }
        out
    }

    /// Re-expresses at a larger depth, `ζ_d = ζ_{d+1}^2`.
    pub fn at_depth(&self, depth: u32) -> Self {
        if depth <= self.depth {
            return self.clone();
        }
        let step = 1u32 << (depth - self.depth);
        let mut out = Self::zero(depth);
        for (t, &c) in self.coeffs.iter().enumerate() {
            out.add_power(t as u32 * step, c);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        if other.depth > self.depth {
            *self = self.at_depth(other.depth);
        }
        let o = other.at_depth(self.depth);
        for (a, b) in self.coeffs.iter_mut().zip(&o.coeffs) {
            *a += b;
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let d = self.depth.max(other.depth);
        let (a, b) = (self.at_depth(d), other.at_depth(d));
        let mut out = Self::zero(d);
        for (i, &x) in a.coeffs.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.coeffs.iter().enumerate() {
                out.add_power((i + j) as u32, x * y);
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = Self::zero(self.depth);
        let full = 2 * self.half();
        for (t, &c) in self.coeffs.iter().enumerate() {
            out.add_power((full - t as u32) & (full - 1), c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { depth: self.depth, coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    /// The integer value when no irrational power survives.
    pub fn rational(&self) -> Option<i128> {
        self.coeffs[1..].iter().all(|&c| c == 0).then_some(self.coeffs[0])
    }

    /// Complex value and an absolute rounding bound, summed in fixed order.
    pub fn to_complex(&self) -> (Complex64, f64) {
        if let Some(r) = self.rational() {
            let v = r as f64;
            let err = if v as i128 == r { 0.0 } else { v.abs() * f64::EPSILON };
            return (Complex64::new(v, 0.0), err);
        }
        let full = 2.0 * self.half() as f64;
        let terms: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(t, &c)| Complex64::from_polar(c as f64, std::f64::consts::TAU * t as f64 / full))
            .collect();
        let re = pairwise_sum(&terms.iter().map(|z| z.re).collect::<Vec<_>>());
        let im = pairwise_sum(&terms.iter().map(|z| z.im).collect::<Vec<_>>());
        let mass: f64 = self.coeffs.iter().map(|c| (*c as f64).abs()).sum();
        // Each polar term is within a few ulps; summation adds at most
        // `len` more relative ulps of the total mass.
        let err = mass * f64::EPSILON * (8.0 + self.coeffs.len() as f64);
        (Complex64::new(re, im), err)
    }
}

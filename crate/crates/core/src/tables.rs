//! Row-major state-by-action tables and the value/policy newtypes built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{xlogx, Scalar};

/// Dense `rows x cols` table stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Table<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: format!("{rows}x{cols} = {} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape {
                expected: format!("rows of length {cols}"),
                got: "ragged rows".into(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// ∞-norm of the entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }
}

fn check_shape<T: Scalar>(t: &Table<T>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if t.rows() != rows || t.cols() != cols {
        return Err(Error::Shape {
            expected: format!("{what} of shape {rows}x{cols}"),
            got: format!("{}x{}", t.rows(), t.cols()),
        });
    }
    Ok(())
}

/// Shannon entropy `-Σ p ln p` of a distribution, with `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter().map(|&x| xlogx(x)).sum::<T>()
}

/// `KL(p || q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> T {
    let mut s = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > T::zero() {
            if qi <= T::zero() {
                return T::infinity();
            }
            s += pi * (pi.ln() - qi.ln());
        }
    }
    s
}

/// Total variation distance `½ Σ |p - q|`.
pub fn total_variation<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<T>() * T::lit(0.5)
}

/// Row-stochastic table `π(a|s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy<T>(Table<T>);

impl<T: Scalar> Policy<T> {
    pub const ROW_TOL: f64 = 1e-10;

    /// Validates nonnegativity and unit row sums (within `1e-10`).
    pub fn new(probs: Table<T>) -> Result<Self> {
        let tol = T::lit(Self::ROW_TOL);
        for s in 0..probs.rows() {
            let row = probs.row(s);
            if let Some(a) = row.iter().position(|&p| !(p >= T::zero()) || !p.is_finite()) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}, action {a}: probability {} not a finite nonnegative number",
                    row[a]
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidPolicy(format!("state {s}: row sums to {sum}")));
            }
        }
        Ok(Self(probs))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Table::from_rows(rows)?)
    }

    pub(crate) fn from_table_unchecked(probs: Table<T>) -> Self {
        Self(probs)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self(Table::filled(
            num_states,
            num_actions,
            T::one() / T::from_usize_lossy(num_actions),
        ))
    }

    /// Deterministic policy placing all mass on `actions[s]`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::InvalidPolicy(format!("action {a} out of range")));
        }
        Ok(Self(Table::from_fn(actions.len(), num_actions, |s, a| {
            if actions[s] == a {
                T::one()
            } else {
                T::zero()
            }
        })))
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.0.get(s, a)
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        self.0.row(s)
    }

    pub fn table(&self) -> &Table<T> {
        &self.0
    }

    pub fn into_table(self) -> Table<T> {
        self.0
    }

    /// Entropy of `π(·|s)`.
    pub fn entropy(&self, s: usize) -> T {
        entropy(self.row(s))
    }

    /// Index of the most probable action in state `s` (lowest index on ties).
    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn greedy(&self) -> Self {
        let actions: Vec<usize> = (0..self.num_states()).map(|s| self.argmax(s)).collect();
        Self::deterministic(self.num_actions(), &actions).expect("argmax is in range")
    }

    /// Largest per-state total variation distance to `other`.
    pub fn max_tv(&self, other: &Self) -> T {
        (0..self.num_states())
            .map(|s| total_variation(self.row(s), other.row(s)))
            .fold(T::zero(), T::max)
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        check_shape(&self.0, num_states, num_actions, "policy")
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// State-action values `q(s,a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFunction<T>(Table<T>);

impl<T: Scalar> QFunction<T> {
    pub fn new(values: Table<T>) -> Result<Self> {
        if let Some(x) = values.as_slice().iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("q-function entry {x} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Table::from_rows(rows)?)
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self(Table::zeros(num_states, num_actions))
    }

    pub(crate) fn from_table_unchecked(values: Table<T>) -> Self {
        Self(values)
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> T {
        self.0.get(s, a)
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: T) {
        self.0.set(s, a, v)
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        self.0.row(s)
    }

    pub fn table(&self) -> &Table<T> {
        &self.0
    }

    pub fn table_mut(&mut self) -> &mut Table<T> {
        &mut self.0
    }

    /// Clamps every entry to `[lo, hi]`.
    pub fn clamped(&self, lo: T, hi: T) -> Self {
        Self(self.0.map(|x| x.max(lo).min(hi)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.0.max_abs_diff(&other.0)
    }

    /// `E_{a~π}[q(s,a)]` for every state.
    pub fn expect_under(&self, policy: &Policy<T>) -> Vec<T> {
        (0..self.num_states())
            .map(|s| {
                self.row(s)
                    .iter()
                    .zip(policy.row(s))
                    .map(|(&q, &p)| q * p)
                    .sum()
            })
            .collect()
    }

    /// Soft state values `E_{a~π}[q(s,a)] + ζ H(π(·|s))` induced by this q and a policy.
    pub fn soft_state_values(&self, policy: &Policy<T>, zeta: T) -> VFunction<T> {
        let ev = self.expect_under(policy);
        VFunction(
            ev.into_iter()
                .enumerate()
                .map(|(s, e)| e + zeta * policy.entropy(s))
                .collect(),
        )
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        check_shape(&self.0, num_states, num_actions, "q-function")
    }
}

/// State values `v(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VFunction<T>(pub Vec<T>);

impl<T: Scalar> VFunction<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, s: usize) -> T {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

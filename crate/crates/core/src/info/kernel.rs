//! Sparse-row kernels for `1/2 logdet(I + G Sigma G^T)`.
//!
//! Rows are stored unwhitened as `(coefficients, precision)` with precision
//! `1/noise_var`, so that rows sharing a direction can be merged: two
//! independent measurements of the same linear functional are equivalent to
//! one with the summed precision.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One observation row with its noise precision and availability.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub precision: f64,
    pub availability: f64,
}

impl SparseRow {
    pub fn from_dense(row: impl Iterator<Item = f64>, noise_var: f64, availability: f64) -> Self {
        Self {
            coeffs: row.enumerate().filter(|&(_, v)| v != 0.0).collect(),
            precision: 1.0 / noise_var,
            availability,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// `u Sigma v^T` for sparse `u`, `v` and a row-major `n x n` matrix.
#[inline]
fn quad(sigma: &[f64], n: usize, u: &[(usize, f64)], v: &[(usize, f64)]) -> f64 {
    let mut acc = 0.0;
    for &(i, x) in u {
        let row = &sigma[i * n..(i + 1) * n];
        for &(j, y) in v {
            acc += x * y * row[j];
        }
    }
    acc
}

/// In-place lower Cholesky of a row-major `k x k` matrix; returns `sum ln(pivot)`
/// (the log-determinant) or `None` when a pivot is not positive.
pub(crate) fn cholesky_logdet(a: &mut [f64], k: usize) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 0.0) {
            return None;
        }
        let l = d.sqrt();
        a[j * k + j] = l;
        logdet += d.ln();
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for m in 0..j {
                v -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = v / l;
        }
    }
    Some(logdet)
}

/// Row-major copy of a dense matrix.
pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// `1/2 logdet(I + G Sigma G^T)` over rows that are all present.
pub(crate) fn half_logdet(sigma: &[f64], n: usize, rows: &[&SparseRow]) -> Result<f64> {
    let k = rows.len();
    if k == 0 {
        return Ok(0.0);
    }
    let mut a = vec![0.0; k * k];
    for (r, ra) in rows.iter().enumerate() {
        for (c, rb) in rows.iter().enumerate().take(r + 1) {
            let v = (ra.precision * rb.precision).sqrt() * quad(sigma, n, &ra.coeffs, &rb.coeffs);
            a[r * k + c] = v;
            a[c * k + r] = v;
        }
        a[r * k + r] += 1.0;
    }
    cholesky_logdet(&mut a, k)
        .map(|l| 0.5 * l)
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{k}-row information matrix")))
}

/// `Sigma <- Sigma - Sigma G^T (I + G Sigma G^T)^{-1} G Sigma` for present rows.
pub(crate) fn condition_in_place(sigma: &mut [f64], n: usize, rows: &[&SparseRow]) -> Result<()> {
    let k = rows.len();
    if k == 0 {
        return Ok(());
    }
    // P = Sigma G^T, n x k row-major.
    let mut p = vec![0.0; n * k];
    for (c, row) in rows.iter().enumerate() {
        let s = row.precision.sqrt();
        for &(j, y) in &row.coeffs {
            for i in 0..n {
                p[i * k + c] += s * y * sigma[i * n + j];
            }
        }
    }
    // M = I + G P, then its Cholesky factor.
    let mut m = vec![0.0; k * k];
    for (r, row) in rows.iter().enumerate() {
        let s = row.precision.sqrt();
        for c in 0..k {
            m[r * k + c] = row.coeffs.iter().map(|&(i, x)| s * x * p[i * k + c]).sum::<f64>();
        }
        m[r * k + r] += 1.0;
    }
    for r in 0..k {
        for c in 0..r {
            let v = 0.5 * (m[r * k + c] + m[c * k + r]);
            m[r * k + c] = v;
            m[c * k + r] = v;
        }
    }
    cholesky_logdet(&mut m, k).ok_or_else(|| Error::NotPositiveDefinite(format!("{k}-row update")))?;
    // Q = P L^{-T}, row by row.
    for i in 0..n {
        let q = &mut p[i * k..(i + 1) * k];
        for b in 0..k {
            let mut v = q[b];
            for c in 0..b {
                v -= q[c] * m[b * k + c];
            }
            q[b] = v / m[b * k + b];
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let d: f64 = (0..k).map(|c| p[i * k + c] * p[j * k + c]).sum();
            sigma[i * n + j] -= d;
            if i != j {
                sigma[j * n + i] -= d;
            }
        }
    }
    Ok(())
}

/// Rows merged by direction, ready for exact enumeration of failure patterns.
#[derive(Debug, Clone)]
pub(crate) struct Mixture {
    dirs: usize,
    /// `u_g Sigma u_h^T` between merged directions.
    gram: Vec<f64>,
    sure: Vec<(usize, f64)>,
    uncertain: Vec<Group>,
}

#[derive(Debug, Clone)]
struct Group {
    dir: usize,
    /// `(total precision, probability)` of each state with at least one alive row.
    states: Vec<(f64, f64)>,
    dead: f64,
}

impl Mixture {
    /// Groups rows with identical coefficients up to sign. Rows that are zero or
    /// never available are dropped.
    pub fn build(sigma: &[f64], n: usize, rows: &[SparseRow], cap: f64) -> Result<Self> {
        let mut index: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        let mut units: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut members: Vec<Vec<(f64, f64)>> = Vec::new();
        for row in rows.iter().filter(|r| !r.is_zero() && r.availability > 0.0) {
            let sign = row.coeffs[0].1.signum();
            let unit: Vec<(usize, f64)> = row.coeffs.iter().map(|&(i, v)| (i, sign * v)).collect();
            let key = unit.iter().map(|&(i, v)| (i, v.to_bits())).collect();
            let g = *index.entry(key).or_insert_with(|| {
                units.push(unit);
                members.push(Vec::new());
                units.len() - 1
            });
            members[g].push((row.precision, row.availability.min(1.0)));
        }
        let dirs = units.len();
        let mut gram = vec![0.0; dirs * dirs];
        for g in 0..dirs {
            for h in 0..=g {
                let v = quad(sigma, n, &units[g], &units[h]);
                gram[g * dirs + h] = v;
                gram[h * dirs + g] = v;
            }
        }
        let mut sure = Vec::new();
        let mut uncertain = Vec::new();
        let mut patterns = 1.0f64;
        for (dir, rows) in members.into_iter().enumerate() {
            let base: f64 = rows.iter().filter(|m| m.1 >= 1.0).map(|m| m.0).sum();
            let branching: Vec<(f64, f64)> = rows.into_iter().filter(|m| m.1 < 1.0).collect();
            if branching.is_empty() {
                sure.push((dir, base));
                continue;
            }
            if branching.len() > 52 {
                return Err(Error::PatternExplosion {
                    patterns: 2f64.powi(branching.len() as i32),
                    cap,
                });
            }
            let mut states: Vec<(f64, f64)> = Vec::new();
            for bits in 0u64..1 << branching.len() {
                let mut q = base;
                let mut p = 1.0;
                for (b, &(prec, a)) in branching.iter().enumerate() {
                    if bits >> b & 1 == 1 {
                        q += prec;
                        p *= a;
                    } else {
                        p *= 1.0 - a;
                    }
                }
                match states.iter_mut().find(|s| s.0 == q) {
                    Some(s) => s.1 += p,
                    None => states.push((q, p)),
                }
            }
            let dead = states.iter().filter(|s| s.0 == 0.0).map(|s| s.1).sum();
            states.retain(|s| s.0 > 0.0);
            patterns *= (states.len() + usize::from(dead > 0.0)) as f64;
            if patterns > cap {
                return Err(Error::PatternExplosion { patterns, cap });
            }
            uncertain.push(Group { dir, states, dead });
        }
        Ok(Self {
            dirs,
            gram,
            sure,
            uncertain,
        })
    }

    /// `sum_f p(f) * 1/2 logdet(I + W_f)` over every failure pattern.
    pub fn expected_half_logdet(&self) -> Result<f64> {
        let width = self.sure.len() + self.uncertain.len();
        let mut dfs = Dfs {
            mix: self,
            width,
            l: vec![0.0; width * width],
            alive: Vec::with_capacity(width),
            acc: 0.0,
        };
        let mut base = 0.0;
        for &(dir, q) in &self.sure {
            base += dfs.extend(dir, q.sqrt())?;
        }
        dfs.descend(0, 1.0)?;
        Ok(0.5 * (base + dfs.acc))
    }
}

struct Dfs<'a> {
    mix: &'a Mixture,
    width: usize,
    /// Row-major lower Cholesky factor of the alive rows.
    l: Vec<f64>,
    alive: Vec<(usize, f64)>,
    acc: f64,
}

impl Dfs<'_> {
    /// Appends a row and returns the log of its Cholesky pivot.
    fn extend(&mut self, dir: usize, scale: f64) -> Result<f64> {
        let (w, d) = (self.width, self.mix.dirs);
        let k = self.alive.len();
        let mut sq = 0.0;
        for j in 0..k {
            let (dj, sj) = self.alive[j];
            let mut v = scale * sj * self.mix.gram[dir * d + dj];
            for m in 0..j {
                v -= self.l[k * w + m] * self.l[j * w + m];
            }
            let v = v / self.l[j * w + j];
            self.l[k * w + j] = v;
            sq += v * v;
        }
        let pivot = 1.0 + scale * scale * self.mix.gram[dir * d + dir] - sq;
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("pivot {pivot:e} in failure enumeration")));
        }
        self.l[k * w + k] = pivot.sqrt();
        self.alive.push((dir, scale));
        Ok(pivot.ln())
    }

    fn descend(&mut self, depth: usize, prob: f64) -> Result<()> {
        let Some(group) = self.mix.uncertain.get(depth) else {
            return Ok(());
        };
        for &(q, p) in &group.states {
            let lp = self.extend(group.dir, q.sqrt())?;
            self.acc += prob * p * lp;
            self.descend(depth + 1, prob * p)?;
            self.alive.pop();
        }
        if group.dead > 0.0 {
            self.descend(depth + 1, prob * group.dead)?;
        }
        Ok(())
    }
}

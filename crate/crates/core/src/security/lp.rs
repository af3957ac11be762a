//! Truncated decoy-state linear programs.
//!
//! Yields `Y_m` are indexed by per-user photon numbers `m = (m1, m2, m3)` with
//! `m_i <= Nc`. Each gain row may fall short of its observed lower bound by
//! the Poisson mass beyond the cutoff (an eliminated slack variable), so the
//! truncation never cuts off the true yields.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{SecurityAccounting, SecurityError, chernoff_bounds};
use crate::types::{IntensityCombo, Level};

const MIN_AUTO_CUTOFF: usize = 4;
const MAX_AUTO_CUTOFF: usize = 16;
/// Auto cutoff target: tail mass below this fraction of the smallest gain.
const AUTO_TAIL_FRACTION: f64 = 1e-3;
/// Scaled coefficients below this are dropped, widening the row by the most
/// the dropped term could contribute. Left in, they produce near-singular
/// simplex bases.
const NEGLIGIBLE_COEFF: f64 = 1e-12;
const SOLVER_RETRIES: usize = 3;

pub fn poisson(k: f64, n: usize) -> f64 {
    if k == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut p = (-k).exp();
    for i in 1..=n {
        p *= k / i as f64;
    }
    p
}

/// Probability mass above `nc`, summed directly.
pub fn poisson_tail(k: f64, nc: usize) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let mut term = poisson(k, nc + 1);
    let mut sum = 0.0;
    let mut n = nc + 1;
    while term > 0.0 && term > sum * 1e-17 {
        sum += term;
        n += 1;
        term *= k / n as f64;
    }
    sum
}

/// Mass of photon-number triples with any component above `nc`.
fn joint_tail(k: [f64; 3], nc: usize) -> f64 {
    let s: f64 = k.iter().map(|&x| (-poisson_tail(x, nc)).ln_1p()).sum();
    -s.exp_m1()
}

/// Per-trial gain bounds for one combination of per-user intensities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainConstraint {
    pub intensities: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

/// Gain and error-gain bounds for one X-basis combination. Intensities are
/// each user's total mean photon number over its two slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorGainConstraint {
    pub intensities: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub err_lower: f64,
    pub err_upper: f64,
    pub label: String,
}

fn configs(nc: usize) -> Vec<[usize; 3]> {
    let mut v = Vec::with_capacity((nc + 1).pow(3));
    for a in 0..=nc {
        for b in 0..=nc {
            for c in 0..=nc {
                v.push([a, b, c]);
            }
        }
    }
    v
}

fn weight(k: [f64; 3], m: [usize; 3]) -> f64 {
    poisson(k[0], m[0]) * poisson(k[1], m[1]) * poisson(k[2], m[2])
}

struct Col {
    obj: f64,
    lo: f64,
    hi: f64,
}

struct Row {
    terms: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    group: usize,
}

/// Bounded-variable LP with row and column equilibration before solving.
struct ScaledLp {
    dir: OptimizationDirection,
    cols: Vec<Col>,
    rows: Vec<Row>,
}

enum LpFail {
    Infeasible,
    Unbounded,
    Other(String),
}

impl ScaledLp {
    fn new(dir: OptimizationDirection) -> Self {
        ScaledLp {
            dir,
            cols: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn col(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.cols.push(Col { obj, lo, hi });
        self.cols.len() - 1
    }

    fn row(&mut self, terms: Vec<(usize, f64)>, lo: f64, hi: f64, group: usize) {
        let terms = terms.into_iter().filter(|t| t.1 != 0.0).collect();
        self.rows.push(Row {
            terms,
            lo,
            hi,
            group,
        });
    }

    /// Column values at the optimum, skipping rows of `skip_group`.
    fn solve(&self, skip_group: Option<usize>) -> Result<Vec<f64>, LpFail> {
        let rows: Vec<&Row> = self
            .rows
            .iter()
            .filter(|r| Some(r.group) != skip_group)
            .collect();
        let rscale: Vec<f64> = rows
            .iter()
            .map(|r| {
                let b = r.hi.abs().max(r.lo.abs());
                if b > 0.0 {
                    b
                } else {
                    r.terms
                        .iter()
                        .map(|t| t.1.abs())
                        .fold(0.0, f64::max)
                        .max(f64::MIN_POSITIVE)
                }
            })
            .collect();
        let mut cmax = vec![0.0f64; self.cols.len()];
        for (r, s) in rows.iter().zip(&rscale) {
            for &(j, a) in &r.terms {
                cmax[j] = cmax[j].max((a / s).abs());
            }
        }
        let cscale: Vec<f64> = cmax
            .iter()
            .map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 })
            .collect();
        let omax = self
            .cols
            .iter()
            .zip(&cscale)
            .map(|(c, s)| (c.obj * s).abs())
            .fold(0.0, f64::max);
        let onorm = if omax > 0.0 { omax } else { 1.0 };
        let mut p = Problem::new(self.dir);
        let vars: Vec<_> = self
            .cols
            .iter()
            .zip(&cscale)
            .map(|(c, s)| p.add_var(c.obj * s / onorm, (c.lo / s, c.hi / s)))
            .collect();
        for (r, s) in rows.iter().zip(&rscale) {
            let (mut lo, mut hi) = (r.lo / s, r.hi / s);
            let mut expr = Vec::with_capacity(r.terms.len());
            for &(j, a) in &r.terms {
                let a = a * cscale[j] / s;
                let ub = self.cols[j].hi / cscale[j];
                if a.abs() < NEGLIGIBLE_COEFF && self.cols[j].lo == 0.0 && ub.is_finite() {
                    if a > 0.0 {
                        lo -= a * ub;
                    } else {
                        hi -= a * ub;
                    }
                } else {
                    expr.push((vars[j], a));
                }
            }
            if hi.is_finite() {
                p.add_constraint(expr.as_slice(), ComparisonOp::Le, hi);
            }
            if lo > 0.0 {
                p.add_constraint(expr.as_slice(), ComparisonOp::Ge, lo);
            }
        }
        let outcome = p.solve().map_err(|e| match e {
            microlp::Error::Infeasible => LpFail::Infeasible,
            microlp::Error::Unbounded => LpFail::Unbounded,
            other => LpFail::Other(other.to_string()),
        })?;
        let sol = outcome
            .solution()
            .ok_or_else(|| LpFail::Other("interrupted".into()))?;
        Ok(vars
            .iter()
            .zip(&cscale)
            .map(|(v, s)| sol.var_value(*v) * s)
            .collect())
    }

    fn solve_reporting(
        &self,
        labels: &[String],
        what: &'static str,
    ) -> Result<Vec<f64>, SecurityError> {
        match self.solve(None) {
            Ok(v) => Ok(v),
            Err(LpFail::Infeasible) => {
                let culprits: Vec<String> = (0..labels.len())
                    .filter(|&g| self.solve(Some(g)).is_ok())
                    .map(|g| labels[g].clone())
                    .collect();
                Err(SecurityError::Infeasible(culprits))
            }
            Err(LpFail::Unbounded) => Err(SecurityError::Unbounded(what)),
            Err(LpFail::Other(s)) => Err(SecurityError::Solver(s)),
        }
    }
}

/// Lower bound on the single-photon-triple yield `Y_111`.
pub fn min_single_yield(cons: &[GainConstraint], nc: usize) -> Result<f64, SecurityError> {
    assert!(nc >= 2, "cutoff must be at least 2");
    let confs = configs(nc);
    let mut lp = ScaledLp::new(OptimizationDirection::Minimize);
    let ys: Vec<usize> = confs
        .iter()
        .map(|m| lp.col(if *m == [1, 1, 1] { 1.0 } else { 0.0 }, 0.0, 1.0))
        .collect();
    for (g, c) in cons.iter().enumerate() {
        let tail = joint_tail(c.intensities, nc);
        let terms: Vec<(usize, f64)> = confs
            .iter()
            .zip(&ys)
            .map(|(m, &j)| (j, weight(c.intensities, *m)))
            .collect();
        lp.row(terms, c.lower - tail, c.upper, g);
    }
    let labels: Vec<String> = cons.iter().map(|c| c.label.clone()).collect();
    let v = lp.solve_reporting(&labels, "single-photon yield")?;
    let i111 = confs.iter().position(|m| *m == [1, 1, 1]).unwrap();
    Ok(v[ys[i111]].max(0.0))
}

/// Upper bound on the single-photon-triple error yield. Configurations with a
/// vacuum user carry error yield exactly half their yield.
pub fn max_single_error_yield(
    cons: &[ErrorGainConstraint],
    nc: usize,
) -> Result<f64, SecurityError> {
    assert!(nc >= 2, "cutoff must be at least 2");
    let confs = configs(nc);
    let mut lp = ScaledLp::new(OptimizationDirection::Maximize);
    // (error yield, remainder) for full configurations, yield for the rest
    enum V {
        Full(usize, usize),
        Half(usize),
    }
    let vars: Vec<V> = confs
        .iter()
        .map(|m| {
            if m.iter().all(|&x| x > 0) {
                let obj = if *m == [1, 1, 1] { 1.0 } else { 0.0 };
                V::Full(lp.col(obj, 0.0, 1.0), lp.col(0.0, 0.0, 1.0))
            } else {
                V::Half(lp.col(0.0, 0.0, 1.0))
            }
        })
        .collect();
    for (g, c) in cons.iter().enumerate() {
        let tail = joint_tail(c.intensities, nc);
        let mut gain = Vec::new();
        let mut err = Vec::new();
        for (m, v) in confs.iter().zip(&vars) {
            let w = weight(c.intensities, *m);
            if w == 0.0 {
                continue;
            }
            match *v {
                V::Full(e, d) => {
                    gain.push((e, w));
                    gain.push((d, w));
                    err.push((e, w));
                }
                V::Half(y) => {
                    gain.push((y, w));
                    err.push((y, 0.5 * w));
                }
            }
        }
        lp.row(gain, c.lower - tail, c.upper, g);
        lp.row(err, c.err_lower - tail, c.err_upper, g);
    }
    let labels: Vec<String> = cons.iter().map(|c| c.label.clone()).collect();
    let v = lp.solve_reporting(&labels, "single-photon error yield")?;
    let i111 = confs.iter().position(|m| *m == [1, 1, 1]).unwrap();
    match vars[i111] {
        V::Full(e, _) => Ok(v[e].max(0.0)),
        V::Half(_) => unreachable!(),
    }
}

/// Smallest cutoff whose tail mass is negligible next to the smallest gain of
/// an all-nonvacuum combination.
pub fn auto_cutoff(cons: &[GainConstraint]) -> usize {
    let floor = cons
        .iter()
        .filter(|c| c.intensities.iter().all(|&k| k > 0.0) && c.lower > 0.0)
        .map(|c| c.lower)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return MIN_AUTO_CUTOFF;
    }
    for nc in MIN_AUTO_CUTOFF..=MAX_AUTO_CUTOFF {
        let tail = cons
            .iter()
            .map(|c| joint_tail(c.intensities, nc))
            .fold(0.0, f64::max);
        if tail <= AUTO_TAIL_FRACTION * floor {
            return nc;
        }
    }
    MAX_AUTO_CUTOFF
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    pub cutoff: usize,
    pub y111_lower: f64,
    pub ey111_upper: f64,
    /// Lower bound on single-photon-triple events among the key events.
    pub s111_lower: f64,
    pub e111_upper: f64,
}

fn level_value(l: Level, acc: &SecurityAccounting) -> f64 {
    match l {
        Level::Mu => acc.mu,
        Level::Nu => acc.nu,
        Level::Zero => 0.0,
    }
}

pub fn z_constraints(acc: &SecurityAccounting) -> Result<Vec<GainConstraint>, SecurityError> {
    let eps = acc.epsilon_each();
    let mut out = Vec::new();
    for (combo, g) in &acc.z_gains {
        if g.trials <= 0.0 {
            continue;
        }
        let b = chernoff_bounds(g.count, eps)?;
        out.push(GainConstraint {
            intensities: combo.0.map(|l| level_value(l, acc)),
            lower: b.lower / g.trials,
            upper: b.upper / g.trials,
            label: format!("Z {combo}"),
        });
    }
    Ok(out)
}

pub fn x_constraints(acc: &SecurityAccounting) -> Result<Vec<ErrorGainConstraint>, SecurityError> {
    let eps = acc.epsilon_each();
    let mut out = Vec::new();
    for (combo, g) in &acc.x_gains {
        if g.trials <= 0.0 {
            continue;
        }
        let b = chernoff_bounds(g.count, eps)?;
        let e = chernoff_bounds(g.errors, eps)?;
        out.push(ErrorGainConstraint {
            intensities: combo.0.map(|l| 2.0 * level_value(l, acc)),
            lower: b.lower / g.trials,
            upper: b.upper / g.trials,
            err_lower: e.lower / g.trials,
            err_upper: e.upper / g.trials,
            label: format!("X {combo}"),
        });
    }
    Ok(out)
}

/// `cutoff = None` picks the cutoff automatically.
pub fn decoy_lp_bounds(
    acc: &SecurityAccounting,
    cutoff: Option<usize>,
) -> Result<DecoyBounds, SecurityError> {
    let key = acc
        .z_gains
        .get(&IntensityCombo::MU3)
        .copied()
        .ok_or(SecurityError::MissingGain(IntensityCombo::MU3))?;
    let zc = z_constraints(acc)?;
    let xc = x_constraints(acc)?;
    let mut nc = cutoff.unwrap_or_else(|| auto_cutoff(&zc));
    // any cutoff gives a valid bound; step past a numerically singular one
    let mut y111 = min_single_yield(&zc, nc);
    for _ in 0..SOLVER_RETRIES {
        if !matches!(y111, Err(SecurityError::Solver(_))) {
            break;
        }
        nc += 1;
        y111 = min_single_yield(&zc, nc);
    }
    let y111 = y111?;
    if y111 <= 0.0 {
        return Ok(DecoyBounds {
            cutoff: nc,
            y111_lower: 0.0,
            ey111_upper: 0.0,
            s111_lower: 0.0,
            e111_upper: 0.5,
        });
    }
    let ey111 = if xc.is_empty() {
        f64::INFINITY
    } else {
        max_single_error_yield(&xc, nc)?
    };
    let p1 = poisson(acc.mu, 1);
    Ok(DecoyBounds {
        cutoff: nc,
        y111_lower: y111,
        ey111_upper: ey111,
        s111_lower: key.trials * p1 * p1 * p1 * y111,
        e111_upper: (ey111 / y111).min(0.5),
    })
}

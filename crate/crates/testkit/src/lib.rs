//! Brute-force reference computations for the dtsurv test suites.
//!
//! Nothing here calls into `dtsurv`: every routine works on plain slices so
//! the checks stay independent of the code paths they verify.

/// Plain logistic function, written independently of the library's version.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Subject record used by the oracles: observed time, event code, covariates.
#[derive(Debug, Clone)]
pub struct Subject {
    pub time: usize,
    pub event: usize,
    pub z: Vec<f64>,
}

/// Collapsed log-likelihood of cause `j` on an explicitly materialized
/// person-period table. `params = (α_1..α_d, β_1..β_p)`.
pub fn collapsed_loglik(subjects: &[Subject], d: usize, j: usize, params: &[f64]) -> f64 {
    let mut rows: Vec<(usize, &[f64], bool)> = Vec::new();
    for s in subjects {
        let last = s.time.min(d);
        for m in 1..=last {
            rows.push((m, &s.z, m == s.time && s.event == j));
        }
    }
    let (alpha, beta) = params.split_at(d);
    rows.iter()
        .map(|&(m, z, y)| {
            let eta = alpha[m - 1] + z.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            let lam = sigmoid(eta);
            if y {
                lam.ln()
            } else {
                (1.0 - lam).ln()
            }
        })
        .sum()
}

/// Central-difference gradient.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let x0 = x[k];
            xp[k] = x0 + h;
            let up = f(&xp);
            xp[k] = x0 - h;
            let down = f(&xp);
            xp[k] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Second-difference Hessian of `f`.
pub fn numeric_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for a in 0..n {
        for b in a..n {
            let mut eval = |da: f64, db: f64| {
                xp[a] += da;
                xp[b] += db;
                let v = f(&xp);
                xp[a] -= da;
                xp[b] -= db;
                v
            };
            let v = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h);
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton (BFGS) maximization driven only by function values:
/// gradients come from central differences, steps from a backtracking
/// Armijo search. Intended for small, smooth, concave problems.
pub fn bfgs_maximize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], grad_tol: f64) -> Vec<f64> {
    let n = x0.len();
    let neg = |x: &[f64]| -f(x);
    let h = 1e-6;
    let mut x = x0.to_vec();
    let mut fx = neg(&x);
    let mut g = numeric_gradient(&neg, &x, h);
    let mut inv_h: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..5000 {
        if g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) <= grad_tol {
            break;
        }
        let mut dir: Vec<f64> = inv_h.iter().map(|row| -dot(row, &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            for (i, row) in inv_h.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = if i == k { 1.0 } else { 0.0 };
                }
            }
        }
        let slope = dot(&dir, &g);
        let mut t = 1.0;
        let mut next = x.clone();
        let mut fnext = fx;
        let mut moved = false;
        for _ in 0..60 {
            for k in 0..n {
                next[k] = x[k] + t * dir[k];
            }
            fnext = neg(&next);
            if fnext.is_finite() && fnext <= fx + 1e-4 * t * slope {
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        let gnext = numeric_gradient(&neg, &next, h);
        let s: Vec<f64> = (0..n).map(|k| next[k] - x[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| gnext[k] - g[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 {
            let hy: Vec<f64> = inv_h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for k in 0..n {
                    inv_h[i][k] += rho * rho * (sy + yhy) * s[i] * s[k] - rho * (hy[i] * s[k] + s[i] * hy[k]);
                }
            }
        }
        x = next;
        fx = fnext;
        g = gnext;
    }
    x
}

/// Maximize `f` by repeated grid search: an 11-point-per-axis lattice is
/// re-centred on its best point and shrunk whenever the centre wins.
pub fn grid_refine_maximize<F: Fn(&[f64]) -> f64>(f: F, center: &[f64], radius: f64, tol: f64) -> Vec<f64> {
    let n = center.len();
    let mut c = center.to_vec();
    let mut step = radius / 5.0;
    let total = 11usize.pow(n as u32);
    let mut point = vec![0.0; n];
    while step > tol {
        let mut best = f(&c);
        let mut best_point = c.clone();
        for idx in 0..total {
            let mut rem = idx;
            for k in 0..n {
                let offset = (rem % 11) as f64 - 5.0;
                rem /= 11;
                point[k] = c[k] + offset * step;
            }
            let v = f(&point);
            if v > best {
                best = v;
                best_point.copy_from_slice(&point);
            }
        }
        if best_point == c {
            step /= 4.0;
        } else {
            c = best_point;
        }
    }
    c
}

/// Literal squared-distance objective for one time-point intercept:
/// `( mean_i sigmoid(a + η_i) − q )²` over the risk set's linear predictors.
pub fn intercept_objective(a: f64, risk_lp: &[f64], q: f64) -> f64 {
    let mean = risk_lp.iter().map(|eta| sigmoid(a + eta)).sum::<f64>() / risk_lp.len() as f64;
    (mean - q).powi(2)
}

/// Grid minimization of [`intercept_objective`]: a coarse pass over
/// `[lo, hi]` locates the basin, then a pass at `step` covers the
/// neighbouring coarse cells. Equivalent to a full `step` grid for this
/// unimodal objective.
pub fn intercept_grid_minimize(risk_lp: &[f64], q: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let coarse = step * 100.0;
    let scan = |from: f64, to: f64, h: f64| {
        let count = ((to - from) / h).round() as usize;
        (0..=count)
            .map(|k| from + k as f64 * h)
            .map(|a| (a, intercept_objective(a, risk_lp, q)))
            .fold((from, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    };
    let rough = scan(lo, hi, coarse);
    scan((rough - coarse).max(lo), (rough + coarse).min(hi), step)
}

/// Bisection on a non-decreasing function, bracket halved until `width < tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0, "bracket does not contain a root");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hazards `λ_j(t|z)` computed directly, `[j][t]`.
pub fn hazards(alpha: &[Vec<f64>], beta: &[Vec<f64>], z: &[f64]) -> Vec<Vec<f64>> {
    alpha
        .iter()
        .zip(beta)
        .map(|(a, b)| {
            let zb = dot(z, b);
            a.iter().map(|at| sigmoid(at + zb)).collect()
        })
        .collect()
}

/// Outcome distribution by explicit step-by-step walk over time: for each
/// `t`, the probability of reaching `t` event-free times the cause hazard.
/// Returns `(Pr(T=t, J=j) as [j][t], Pr(no event by d))`.
pub fn outcome_distribution(alpha: &[Vec<f64>], beta: &[Vec<f64>], z: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let h = hazards(alpha, beta, z);
    let m = h.len();
    let d = h[0].len();
    let mut probs = vec![vec![0.0; d]; m];
    let mut alive = 1.0;
    for t in 0..d {
        let mut leave = 0.0;
        for j in 0..m {
            let p = alive * h[j][t];
            probs[j][t] = p;
            leave += p;
        }
        alive -= leave;
    }
    (probs, alive)
}

/// Event and risk-set counts via a naive group-by over subjects:
/// `(y_t, n_tj as [j][t], censored_t)` for `t = 1..=d`.
pub fn group_counts(subjects: &[Subject], d: usize, m: usize) -> (Vec<usize>, Vec<Vec<usize>>, Vec<usize>) {
    let mut at_risk = vec![0; d];
    let mut events = vec![vec![0; d]; m];
    let mut censored = vec![0; d];
    for s in subjects {
        for t in 1..=d {
            if s.time >= t {
                at_risk[t - 1] += 1;
            }
        }
        if s.event > 0 {
            events[s.event - 1][s.time - 1] += 1;
        } else {
            censored[s.time.min(d) - 1] += 1;
        }
    }
    (at_risk, events, censored)
}

/// Tiny deterministic generator (SplitMix64) for oracle-side random instances.
#[derive(Debug, Clone)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

/// A small random competing-risks sample.
#[derive(Debug, Clone)]
pub struct Instance {
    pub subjects: Vec<Subject>,
    pub d: usize,
    pub m: usize,
    pub p: usize,
}

impl Instance {
    /// Every `(j, t)` cell has at least one event and at least one
    /// at-risk subject without that event.
    pub fn is_balanced(&self) -> bool {
        let (at_risk, events, _) = group_counts(&self.subjects, self.d, self.m);
        events
            .iter()
            .all(|row| row.iter().zip(&at_risk).all(|(&n, &y)| n > 0 && n < y))
    }
}

/// Draw an instance with `n ≤ max_n`, `d ≤ max_d`, `p ≤ max_p`, `M ≤ max_m`,
/// covariates uniform on `[-1, 1)`, times uniform on `1..=d+1` and event
/// codes uniform on `0..=M` (0 when past the grid). Redraws until balanced.
pub fn random_instance(rng: &mut SplitMix, max_n: usize, max_d: usize, max_p: usize, max_m: usize) -> Instance {
    loop {
        let d = rng.int(1, max_d);
        let m = rng.int(1, max_m);
        let p = rng.int(1, max_p);
        let n = rng.int((max_n / 2).max(4 * d * m), max_n.max(4 * d * m));
        let subjects = (0..n)
            .map(|_| {
                let time = rng.int(1, d + 1);
                let event = if time > d { 0 } else { rng.int(0, m) };
                let z = (0..p).map(|_| rng.range(-1.0, 1.0)).collect();
                Subject { time, event, z }
            })
            .collect();
        let inst = Instance { subjects, d, m, p };
        if inst.is_balanced() {
            return inst;
        }
    }
}

/// Breslow partial log-likelihood of cause `j`, summed directly over risk
/// sets: `Σ_t [Σ_{D_tj} z·β − n_tj log Σ_{x ≥ t} exp(z·β)]`.
pub fn partial_loglik(subjects: &[Subject], d: usize, j: usize, beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 1..=d {
        let failures: Vec<&Subject> = subjects.iter().filter(|s| s.time == t && s.event == j).collect();
        if failures.is_empty() {
            continue;
        }
        let denom: f64 = subjects
            .iter()
            .filter(|s| s.time >= t)
            .map(|s| dot(&s.z, beta).exp())
            .sum();
        for s in failures {
            total += dot(&s.z, beta) - denom.ln();
        }
    }
    total
}

/// Efron partial log-likelihood of cause `j`: the `l`-th of `n` tied
/// failures sees the risk-set sum minus `l/n` of the tied failures' weight.
pub fn efron_partial_loglik(subjects: &[Subject], d: usize, j: usize, beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 1..=d {
        let failures: Vec<&Subject> = subjects.iter().filter(|s| s.time == t && s.event == j).collect();
        let n = failures.len();
        if n == 0 {
            continue;
        }
        let risk: f64 = subjects
            .iter()
            .filter(|s| s.time >= t)
            .map(|s| dot(&s.z, beta).exp())
            .sum();
        let tied: f64 = failures.iter().map(|s| dot(&s.z, beta).exp()).sum();
        for s in &failures {
            total += dot(&s.z, beta);
        }
        for l in 0..n {
            total -= (risk - l as f64 / n as f64 * tied).ln();
        }
    }
    total
}

/// Invert a small symmetric positive-definite matrix by Gauss-Jordan elimination.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|k| if k == i { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let pv = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= pv;
        }
        for r in 0..n {
            if r != col {
                let factor = aug[r][col];
                for c in 0..2 * n {
                    aug[r][c] -= factor * aug[col][c];
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_finds_quadratic_max() {
        let x = bfgs_maximize(|x| -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2), &[0.0, 0.0], 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn grid_refine_finds_quadratic_max() {
        let x = grid_refine_maximize(|x| -(x[0] - 0.3).powi(2) - (x[1] - 1.7).powi(2), &[0.0, 0.0], 4.0, 1e-9);
        assert!((x[0] - 0.3).abs() < 1e-8 && (x[1] - 1.7).abs() < 1e-8);
    }

    #[test]
    fn intercept_grid_recovers_logit() {
        let a = intercept_grid_minimize(&[0.0, 0.0], 0.2, -20.0, 20.0, 1e-4);
        assert!((a - (0.25f64).ln()).abs() < 1e-4);
    }

    #[test]
    fn random_instances_are_balanced() {
        let mut rng = SplitMix::new(3);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 40, 4, 2, 2);
            assert!(inst.is_balanced() && inst.subjects.len() <= 40);
        }
    }

    #[test]
    fn invert_two_by_two() {
        let inv = invert(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        assert!((inv[0][0] - 3.0 / 11.0).abs() < 1e-15 && (inv[0][1] + 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn partial_loglik_single_stratum() {
        let s = vec![
            Subject { time: 1, event: 1, z: vec![1.0] },
            Subject { time: 2, event: 0, z: vec![0.0] },
        ];
        let b: f64 = 0.4;
        assert!((partial_loglik(&s, 1, 1, &[b]) - (b - (b.exp() + 1.0).ln())).abs() < 1e-15);
    }

    #[test]
    fn outcome_distribution_sums_to_one() {
        let (p, s) = outcome_distribution(&[vec![-1.0, -2.0], vec![-1.5, -0.5]], &[vec![0.3], vec![-0.2]], &[0.8]);
        let total: f64 = p.iter().flatten().sum::<f64>() + s;
        assert!((total - 1.0).abs() < 1e-14);
    }
}

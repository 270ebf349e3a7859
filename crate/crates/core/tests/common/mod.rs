//! Independent oracles shared by the integration tests. Nothing here calls
//! the closed forms under test: chains are built transition by transition
//! and solved densely, LPs are solved by enumerating vertices.

#![allow(dead_code)]

use cogrelay_core::{link_budget, AccessPolicy, LpProblem, SystemConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Stationary row vector of a stochastic matrix: solves `x (P - I) = 0`
/// with the last balance equation swapped for `Σ x = 1`.
pub fn stationary(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).expect("irreducible chain");
    x.iter().copied().collect()
}

/// PU queue seen at the end of a slot: service first, then a Bernoulli
/// arrival that is lost if the queue is still full.
pub fn pu_transition(lambda: f64, mu: f64, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::<f64>::zeros(n + 1, n + 1);
    for k in 0..=n {
        let served = [(k.saturating_sub(1), if k > 0 { mu } else { 0.0 }), (k, if k > 0 { 1.0 - mu } else { 1.0 })];
        for (m, pm) in served {
            if m < n {
                p[(k, m + 1)] += pm * lambda;
                p[(k, m)] += pm * (1.0 - lambda);
            } else {
                p[(k, m)] += pm;
            }
        }
    }
    p
}

/// Relay queue seen after the receiving phase: departure with `r[n-1]`
/// in the relaying phase, then an arrival with `q` unless full.
pub fn relay_transition(q: f64, r: &[f64]) -> DMatrix<f64> {
    let n = r.len();
    let mut p = DMatrix::<f64>::zeros(n + 1, n + 1);
    for k in 0..=n {
        let dep = if k > 0 { r[k - 1] } else { 0.0 };
        for (m, pm) in [(k.saturating_sub(1), dep), (k, 1.0 - dep)] {
            if m < n {
                p[(k, m + 1)] += pm * q;
                p[(k, m)] += pm * (1.0 - q);
            } else {
                p[(k, m)] += pm;
            }
        }
    }
    p
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Exact behaviour of the slot protocol, with both queues tracked jointly.
#[derive(Debug, Clone)]
pub struct JointSolution {
    /// Relay occupancy at the end of the receiving phase.
    pub relay: Vec<f64>,
    pub pu: Vec<f64>,
    pub mu_s: f64,
    /// PU departures per busy slot.
    pub mu_p: f64,
}

pub fn joint_chain(cfg: &SystemConfig, policy: &AccessPolicy) -> JointSolution {
    let b = link_budget(cfg).unwrap();
    let (np, ns) = (cfg.pu_queue_capacity, cfg.relay_queue_capacity);
    let idx = |m: usize, n: usize| m * (ns + 1) + n;
    let size = (np + 1) * (ns + 1);
    let mut p = DMatrix::<f64>::zeros(size, size);
    // Per state: probability mass of (relay seen, SU success, PU departure).
    let mut seen = vec![vec![0.0; ns + 1]; size];
    let mut su = vec![0.0; size];
    let mut departs = vec![0.0; size];

    for m in 0..=np {
        for n in 0..=ns {
            let s = idx(m, n);
            // Receiving phase outcomes: (pu after, relay after, prob).
            let mut recv = Vec::new();
            if m == 0 {
                recv.push((0, n, 1.0));
            } else {
                recv.push((m - 1, n, b.theta_pd));
                let fail = 1.0 - b.theta_pd;
                if n < ns {
                    recv.push((m - 1, n + 1, fail * b.theta_ps));
                    recv.push((m, n, fail * (1.0 - b.theta_ps)));
                } else {
                    recv.push((m, n, fail));
                }
            }
            for (m1, n1, pr) in recv {
                if m > 0 && m1 < m {
                    departs[s] += pr;
                }
                seen[s][n1] += pr;
                // Relaying phase outcomes: (relay after, prob).
                let mut relay = Vec::new();
                if n1 == 0 {
                    su[s] += pr * b.theta_sr;
                    relay.push((0, 1.0));
                } else {
                    let share = policy.probs()[n1];
                    su[s] += pr * share * b.theta_sr_shared;
                    let dep = share * b.theta_sd_shared + (1.0 - share) * b.theta_sd;
                    relay.push((n1 - 1, dep));
                    relay.push((n1, 1.0 - dep));
                }
                for (n2, pr2) in relay {
                    let w = pr * pr2;
                    if m1 < np {
                        p[(s, idx(m1 + 1, n2))] += w * cfg.pu_arrival_rate;
                        p[(s, idx(m1, n2))] += w * (1.0 - cfg.pu_arrival_rate);
                    } else {
                        p[(s, idx(m1, n2))] += w;
                    }
                }
            }
        }
    }
    let x = stationary(&p);
    let mut relay = vec![0.0; ns + 1];
    let mut pu = vec![0.0; np + 1];
    let (mut mu_s, mut dep, mut busy) = (0.0, 0.0, 0.0);
    for m in 0..=np {
        for n in 0..=ns {
            let s = idx(m, n);
            pu[m] += x[s];
            for (k, v) in seen[s].iter().enumerate() {
                relay[k] += x[s] * v;
            }
            mu_s += x[s] * su[s];
            dep += x[s] * departs[s];
            if m > 0 {
                busy += x[s];
            }
        }
    }
    JointSolution {
        relay,
        pu,
        mu_s,
        mu_p: if busy > 0.0 { dep / busy } else { 0.0 },
    }
}

/// Best objective over all vertices of a bounded LP, `None` if no vertex
/// is feasible. Every variable must have finite bounds.
pub fn lp_by_vertices(lp: &LpProblem, tol: f64) -> Option<f64> {
    let n = lp.num_vars();
    let (eq_rows, eq_rhs) = independent_rows(&lp.eq_matrix, &lp.eq_rhs, tol)?;
    let m_eq = eq_rhs.len();
    // Candidate active rows: inequalities, then lower and upper bounds.
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .ineq_matrix
        .iter()
        .cloned()
        .zip(lp.ineq_rhs.iter().copied())
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.bounds[j].0));
        rows.push((e, lp.bounds[j].1));
    }
    if m_eq > n {
        return None;
    }
    let pick = n - m_eq;
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(pick);
    enumerate(rows.len(), pick, 0, &mut chosen, &mut |subset| {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for i in 0..m_eq {
            for j in 0..n {
                a[(i, j)] = eq_rows[i][j];
            }
            b[i] = eq_rhs[i];
        }
        for (k, &r) in subset.iter().enumerate() {
            for j in 0..n {
                a[(m_eq + k, j)] = rows[r].0[j];
            }
            b[m_eq + k] = rows[r].1;
        }
        let lu = a.lu();
        if lu.determinant().abs() < 1e-10 {
            return;
        }
        let Some(x) = lu.solve(&b) else { return };
        if !feasible(lp, x.as_slice(), tol) {
            return;
        }
        let obj: f64 = lp.objective.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        if best.is_none_or(|v| obj > v) {
            best = Some(obj);
        }
    });
    best
}

/// Drops equality rows implied by earlier ones; `None` if the system is
/// inconsistent.
fn independent_rows(rows: &[Vec<f64>], rhs: &[f64], tol: f64) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut basis: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    for (row, &b) in rows.iter().zip(rhs) {
        let (mut r, mut v) = (row.clone(), b);
        for (br, bv, piv) in &basis {
            let f = r[*piv] / br[*piv];
            r.iter_mut().zip(br).for_each(|(x, y)| *x -= f * y);
            v -= f * bv;
        }
        let piv = (0..r.len()).max_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs()));
        match piv {
            Some(p) if r[p].abs() > 1e-9 => {
                basis.push((r, v, p));
                kept.push((row.clone(), b));
            }
            _ if v.abs() > tol => return None,
            _ => {}
        }
    }
    Some(kept.into_iter().unzip())
}

fn enumerate(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let need = k - chosen.len();
    for i in start..=total.saturating_sub(need) {
        if i >= total {
            break;
        }
        chosen.push(i);
        enumerate(total, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

pub fn feasible(lp: &LpProblem, x: &[f64], tol: f64) -> bool {
    let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    lp.eq_matrix.iter().zip(&lp.eq_rhs).all(|(r, b)| (dot(r) - b).abs() <= tol)
        && lp.ineq_matrix.iter().zip(&lp.ineq_rhs).all(|(r, b)| dot(r) <= b + tol)
        && x.iter().zip(&lp.bounds).all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
}

/// A random bounded LP with `n` variables in `[-bound, bound]`-ish boxes.
pub fn random_lp(rng: &mut impl Rng, n: usize, m_eq: usize, m_ineq: usize) -> LpProblem {
    let mut lp = LpProblem::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    for j in 0..n {
        let lo: f64 = rng.random_range(-3.0..0.0);
        let hi: f64 = rng.random_range(0.0..3.0);
        lp.set_bounds(j, lo.min(anchor[j]), hi.max(anchor[j]));
    }
    // Rows through (or just above) a point inside the box keep most
    // instances feasible; a few are pushed infeasible on purpose.
    let row = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..n).map(|_| (rng.random_range(-4i32..=4) as f64) * 0.5).collect()
    };
    for _ in 0..m_eq {
        let r = row(rng);
        let at: f64 = r.iter().zip(&anchor).map(|(a, b)| a * b).sum();
        lp.add_eq(r, at);
    }
    for _ in 0..m_ineq {
        let r = row(rng);
        let at: f64 = r.iter().zip(&anchor).map(|(a, b)| a * b).sum();
        let slack = rng.random_range(-0.3..1.5);
        lp.add_le(r, at + slack);
    }
    lp
}

/// Default system with the given arrival rate and capacities.
pub fn config(lambda: f64, n_p: usize, n_s: usize) -> SystemConfig {
    SystemConfig {
        pu_arrival_rate: lambda,
        pu_queue_capacity: n_p,
        relay_queue_capacity: n_s,
        ..SystemConfig::default()
    }
}

/// Best feasible SU throughput over every policy on a `step` grid, for relay
/// capacities 1 and 2. Zero when no grid policy is feasible.
pub fn brute_force_mu_s(cfg: &SystemConfig, step: f64) -> f64 {
    use cogrelay_core::evaluate_policy;
    use rayon::prelude::*;
    let k = (1.0 / step).round() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| (i as f64 * step).min(1.0)).collect();
    let score = |tail: &[f64]| {
        let ev = evaluate_policy(cfg, &AccessPolicy::from_tail(tail).unwrap()).unwrap();
        if ev.feasible {
            ev.mu_s
        } else {
            0.0
        }
    };
    match cfg.relay_queue_capacity {
        1 => grid.par_iter().map(|&p| score(&[p])).reduce(|| 0.0, f64::max),
        2 => grid
            .par_iter()
            .map(|&p1| grid.iter().map(|&p2| score(&[p1, p2])).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max),
        n => panic!("brute force only covers capacities 1 and 2, got {n}"),
    }
}

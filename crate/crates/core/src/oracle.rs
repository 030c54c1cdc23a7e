//! Exact small-scale references: transportation simplex, sorted 1-D OT,
//! TV-relaxed UOT via dummy atoms and the two-Dirac KL closed form.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::measure::{check_weights, total_mass, CostKind};

/// Largest problem size `N·M` accepted by the simplex oracle.
pub const LP_MAX_CELLS: usize = 10_000;

const PERTURBATION: f64 = 1e-12;

/// Optimal basis of a transportation problem with its dual certificate.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub plan: Array2<f64>,
    /// Row potentials `u` and column potentials `v` with `u_i + v_j ≤ C_ij`,
    /// tight on the basis.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// `Σ a_i u_i + Σ b_j v_j`.
    pub fn dual_value(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(&self.u).map(|(x, y)| x * y).sum::<f64>()
            + b.iter().zip(&self.v).map(|(x, y)| x * y).sum::<f64>()
    }
}

/// Exact balanced OT value and plan.
pub fn lp_ot_exact(a: &[f64], b: &[f64], cost: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    let s = transport_simplex(a, b, cost)?;
    Ok((s.value, s.plan))
}

/// Transportation simplex: north-west-corner start, MODI potentials,
/// Bland's rule for entering and leaving cells and a lexicographic mass
/// perturbation against degenerate pivots.
pub fn transport_simplex(a: &[f64], b: &[f64], cost: ArrayView2<'_, f64>) -> Result<LpSolution> {
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m {
        return Err(Error::ShapeMismatch {
            expected: (a.len(), b.len()),
            got: (n, m),
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty);
    }
    if n * m > LP_MAX_CELLS {
        return Err(Error::InvalidParameter(format!(
            "oracle scale exceeded: {n}x{m} > {LP_MAX_CELLS} cells"
        )));
    }
    check_weights(a)?;
    check_weights(b)?;
    if let Some((idx, &value)) = cost.iter().enumerate().find(|(_, c)| !c.is_finite()) {
        return Err(Error::NonFinite { idx, value });
    }
    let (ma, mb) = (total_mass(a), total_mass(b));
    if (ma - mb).abs() > 1e-9 * ma.max(mb).max(1.0) {
        return Err(Error::MassMismatch(ma, mb));
    }
    let scale = ma.max(mb).max(f64::MIN_POSITIVE);
    let cmax = cost.iter().fold(0.0f64, |x, &c| x.max(c.abs())).max(1.0);

    // Perturbed supplies a_i + δ and demand b_{m−1} + nδ keep every basis
    // nondegenerate; the optimal basis is then re-evaluated on true masses.
    let delta = PERTURBATION * scale;
    let mut supply: Vec<f64> = a.iter().map(|x| x + delta).collect();
    let mut demand = b.to_vec();
    demand[m - 1] += n as f64 * delta + (ma - mb);

    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(n + m - 1);
    {
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]);
            basis.push((i, j));
            flow.push(x);
            supply[i] -= x;
            demand[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let mut in_basis = vec![usize::MAX; n * m];
    for (k, &(i, j)) in basis.iter().enumerate() {
        in_basis[i * m + j] = k;
    }
    let red_tol = 1e-12 * cmax;
    let mut pivots = 0;
    let max_pivots = 50 * n * m + 1000;
    let (mut u, mut v);
    loop {
        (u, v) = tree_potentials(n, m, &basis, cost);
        let mut entering = None;
        'scan: for i in 0..n {
            for j in 0..m {
                if in_basis[i * m + j] == usize::MAX && cost[[i, j]] - u[i] - v[j] < -red_tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        if pivots >= max_pivots {
            return Err(Error::NotConverged {
                what: "transportation simplex",
                iterations: pivots,
                residual: f64::NAN,
            });
        }
        pivots += 1;

        // Cycle: path from column ej to row ei in the basis tree; signs
        // alternate starting with − next to the entering cell.
        let path = tree_path(n, m, &basis, n + ej, ei);
        let mut leave: Option<usize> = None;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let better = match leave {
                    None => true,
                    Some(l) => {
                        flow[k] < flow[l]
                            || (flow[k] == flow[l]
                                && basis[k].0 * m + basis[k].1 < basis[l].0 * m + basis[l].1)
                    }
                };
                if better {
                    leave = Some(k);
                }
            }
        }
        let leave = leave.expect("cycle has a decreasing cell");
        let theta = flow[leave];
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] -= theta;
            } else {
                flow[k] += theta;
            }
        }
        let (li, lj) = basis[leave];
        in_basis[li * m + lj] = usize::MAX;
        basis[leave] = (ei, ej);
        flow[leave] = theta;
        in_basis[ei * m + ej] = leave;
    }

    let flows = tree_flows(n, m, &basis, a, b);
    let mut plan = Array2::zeros((n, m));
    let mut value = 0.0;
    for (k, &(i, j)) in basis.iter().enumerate() {
        let x = flows[k].max(0.0);
        plan[[i, j]] = x;
        value += x * cost[[i, j]];
    }
    Ok(LpSolution {
        value,
        plan,
        u,
        v,
        pivots,
    })
}

fn adjacency(n: usize, m: usize, basis: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n + m];
    for (k, &(i, j)) in basis.iter().enumerate() {
        adj[i].push((n + j, k));
        adj[n + j].push((i, k));
    }
    adj
}

/// Solves `u_i + v_j = C_ij` on the basis tree with `u_0 = 0`.
fn tree_potentials(
    n: usize,
    m: usize,
    basis: &[(usize, usize)],
    cost: ArrayView2<'_, f64>,
) -> (Vec<f64>, Vec<f64>) {
    let adj = adjacency(n, m, basis);
    let mut pot = vec![f64::NAN; n + m];
    let mut queue = VecDeque::new();
    for root in 0..n + m {
        if !pot[root].is_nan() {
            continue;
        }
        pot[root] = 0.0;
        queue.push_back(root);
        while let Some(x) = queue.pop_front() {
            for &(y, k) in &adj[x] {
                if pot[y].is_nan() {
                    let (i, j) = basis[k];
                    pot[y] = cost[[i, j]] - pot[x];
                    queue.push_back(y);
                }
            }
        }
    }
    let v = pot.split_off(n);
    (pot, v)
}

/// Basis cells on the tree path from node `from` to node `to`, in order.
fn tree_path(n: usize, m: usize, basis: &[(usize, usize)], from: usize, to: usize) -> Vec<usize> {
    let adj = adjacency(n, m, basis);
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n + m];
    let mut seen = vec![false; n + m];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(x) = queue.pop_front() {
        if x == to {
            break;
        }
        for &(y, k) in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = Some((x, k));
                queue.push_back(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = to;
    while x != from {
        let (p, k) = parent[x].expect("basis is a spanning tree");
        path.push(k);
        x = p;
    }
    path.reverse();
    path
}

/// Flows on the basis tree for the unperturbed masses, by leaf elimination.
fn tree_flows(n: usize, m: usize, basis: &[(usize, usize)], a: &[f64], b: &[f64]) -> Vec<f64> {
    let adj = adjacency(n, m, basis);
    let mut rest: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut used = vec![false; basis.len()];
    let mut flows = vec![0.0; basis.len()];
    let mut queue: VecDeque<usize> = (0..n + m).filter(|&x| degree[x] == 1).collect();
    while let Some(x) = queue.pop_front() {
        if degree[x] != 1 {
            continue;
        }
        let Some(&(y, k)) = adj[x].iter().find(|&&(_, k)| !used[k]) else {
            continue;
        };
        used[k] = true;
        flows[k] = rest[x];
        rest[y] -= rest[x];
        rest[x] = 0.0;
        degree[x] -= 1;
        degree[y] -= 1;
        if degree[y] == 1 {
            queue.push_back(y);
        }
    }
    flows
}

/// Balanced OT on the real line for a convex cost profile, by the monotone
/// (quantile) coupling.
pub fn ot_1d_sorted(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64], kind: CostKind) -> Result<f64> {
    if xs.len() != a.len() {
        return Err(Error::LengthMismatch(xs.len(), a.len()));
    }
    if ys.len() != b.len() {
        return Err(Error::LengthMismatch(ys.len(), b.len()));
    }
    check_weights(a)?;
    check_weights(b)?;
    match kind {
        CostKind::SqEuclidean => {}
        CostKind::EuclideanPower { p } if p >= 1.0 => {}
        _ => {
            return Err(Error::InvalidParameter(
                "sorted 1-D OT needs a convex cost |x−y|^p with p ≥ 1".into(),
            ))
        }
    }
    let (ma, mb) = (total_mass(a), total_mass(b));
    if (ma - mb).abs() > 1e-9 * ma.max(mb).max(1.0) {
        return Err(Error::MassMismatch(ma, mb));
    }
    let sorted = |pts: &[f64], w: &[f64]| {
        let mut idx: Vec<usize> = (0..pts.len()).filter(|&k| w[k] > 0.0).collect();
        idx.sort_by(|&p, &q| pts[p].total_cmp(&pts[q]));
        idx.into_iter().map(|k| (pts[k], w[k])).collect::<Vec<_>>()
    };
    let sa = sorted(xs, a);
    let sb = sorted(ys, b);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (sa.first().map_or(0.0, |p| p.1), sb.first().map_or(0.0, |p| p.1));
    let mut value = 0.0;
    while i < sa.len() && j < sb.len() {
        let t = ra.min(rb);
        value += t * kind.apply((sa[i].0 - sb[j].0).abs());
        ra -= t;
        rb -= t;
        if ra <= rb {
            i += 1;
            ra = sa.get(i).map_or(0.0, |p| p.1);
            if rb <= 0.0 {
                j += 1;
                rb = sb.get(j).map_or(0.0, |p| p.1);
            }
        } else {
            j += 1;
            rb = sb.get(j).map_or(0.0, |p| p.1);
        }
    }
    Ok(value)
}

/// Exact TV-relaxed UOT at `ε = 0`: one dummy atom per side absorbs created
/// or destroyed mass at price `ρ`.
pub fn uot_tv_exact(a: &[f64], b: &[f64], cost: ArrayView2<'_, f64>, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m {
        return Err(Error::ShapeMismatch {
            expected: (a.len(), b.len()),
            got: (n, m),
        });
    }
    let (ma, mb) = (total_mass(a), total_mass(b));
    let mut ap = a.to_vec();
    ap.push(mb);
    let mut bp = b.to_vec();
    bp.push(ma);
    let cp = Array2::from_shape_fn((n + 1, m + 1), |(i, j)| match (i == n, j == m) {
        (false, false) => cost[[i, j]],
        (true, true) => 0.0,
        _ => rho,
    });
    Ok(transport_simplex(&ap, &bp, cp.view())?.value)
}

/// KL-relaxed UOT between `a·δ_x` and `b·δ_y` at distance `d`, `ε = 0`:
/// `ρ(a + b − 2√(ab)·e^{−d²/(2ρ)})`.
pub fn uot_kl_two_diracs(a: f64, b: f64, d: f64, rho: f64) -> f64 {
    rho * (a + b - 2.0 * (a * b).sqrt() * (-d * d / (2.0 * rho)).exp())
}

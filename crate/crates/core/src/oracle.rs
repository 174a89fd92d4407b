//! Brute-force reference solvers for tiny instances.
//!
//! Nothing here shares code with the production paths it is compared
//! against: the grids and the exhaustive colorer are deliberately naive. Used
//! by the unit tests, the acceptance suite and `validate`.

/// Number of grid points the simplex search is allowed to visit.
const GRID_BUDGET: f64 = 4e6;

/// Minimum of `Σ_k w_k 2^(-2(c_k + x_k))` over the grid
/// `{x ≥ 0, Σ x = budget, x_k ∈ step·ℕ}` (the last coordinate takes the
/// remainder). If the requested step would visit more than a few million
/// points, it is coarsened.
pub fn simplex_grid_min(weights: &[f64], offsets: &[f64], budget: f64, step: f64) -> f64 {
    let k = weights.len();
    assert!(k >= 1 && offsets.len() == k);
    let mut step = step;
    while k > 1 && compositions(budget / step, k) > GRID_BUDGET {
        step *= 2.0;
    }
    let units = (budget / step).floor() as usize;
    let eval = |x: &[f64]| -> f64 {
        weights
            .iter()
            .zip(offsets)
            .zip(x)
            .map(|((w, c), xi)| w * 2f64.powf(-2.0 * (c + xi)))
            .sum()
    };
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; k];
    grid_rec(0, units, step, budget, &mut x, &eval, &mut best);
    best
}

fn compositions(units: f64, k: usize) -> f64 {
    // C(units + k - 1, k - 1)
    let mut c = 1.0;
    for i in 1..k {
        c *= (units + i as f64) / i as f64;
    }
    c
}

fn grid_rec(
    idx: usize,
    units_left: usize,
    step: f64,
    budget: f64,
    x: &mut Vec<f64>,
    eval: &dyn Fn(&[f64]) -> f64,
    best: &mut f64,
) {
    let k = x.len();
    if idx == k - 1 {
        let used: f64 = x[..k - 1].iter().sum();
        x[k - 1] = (budget - used).max(0.0);
        *best = best.min(eval(x));
        return;
    }
    for u in 0..=units_left {
        x[idx] = u as f64 * step;
        grid_rec(idx + 1, units_left - u, step, budget, x, eval, best);
    }
}

/// Chromatic number by exhaustive backtracking. `adjacency[v]` is the
/// neighbor bitmask of vertex `v`; intended for at most ~16 vertices.
pub fn chromatic_number(adjacency: &[u32]) -> usize {
    let n = adjacency.len();
    if n == 0 {
        return 0;
    }
    (1..=n)
        .find(|&k| {
            let mut colors = vec![usize::MAX; n];
            colorable(0, k, adjacency, &mut colors)
        })
        .unwrap_or(n)
}

fn colorable(v: usize, k: usize, adj: &[u32], colors: &mut [usize]) -> bool {
    if v == adj.len() {
        return true;
    }
    // symmetry breaking: vertex v may only open color `max used + 1`
    let max_used = colors[..v]
        .iter()
        .copied()
        .filter(|&c| c != usize::MAX)
        .max()
        .map_or(0, |c| c + 1);
    for c in 0..k.min(max_used + 1) {
        let clash = (0..v).any(|u| adj[v] >> u & 1 == 1 && colors[u] == c);
        if !clash {
            colors[v] = c;
            if colorable(v + 1, k, adj, colors) {
                return true;
            }
            colors[v] = usize::MAX;
        }
    }
    false
}

/// Spends `budget` on `Σ_k a_k x_k` in small increments, each time on the
/// term with the largest distortion reduction per unit of budget. A crude but
/// independent stand-in for water-filling inside the grid oracles.
pub fn greedy_increment_allocation(
    weights: &[f64],
    offsets: &[f64],
    costs: &[f64],
    budget: f64,
    quantum: f64,
) -> Vec<f64> {
    let k = weights.len();
    let mut x = vec![0.0; k];
    let mut left = budget;
    while left > 1e-12 {
        let mut best = None;
        let mut best_gain = 0.0;
        for i in 0..k {
            if weights[i] == 0.0 {
                continue;
            }
            let dx = (quantum / costs[i]).min(left / costs[i]);
            let now = weights[i] * 2f64.powf(-2.0 * (offsets[i] + x[i]));
            let next = weights[i] * 2f64.powf(-2.0 * (offsets[i] + x[i] + dx));
            let gain = (now - next) / (dx * costs[i]);
            if gain > best_gain {
                best_gain = gain;
                best = Some((i, dx));
            }
        }
        match best {
            Some((i, dx)) => {
                x[i] += dx;
                left -= dx * costs[i];
            }
            None => break,
        }
    }
    x
}

/// Largest `M̃ + R̃` over `M̃ ∈ [0, cache]`, `R̃ ∈ [0, capacity]` with
/// `R̃ Σ_{k<n} x^k ≤ capacity`, where `x = R̃/(M̃+R̃)`. A grid at `step` is
/// followed by a grid at `step / 100` over the cell around the best point.
/// Returns `(M̃, R̃)`.
pub fn uniform_grid_max(cache: f64, capacity: f64, n: usize, step: f64) -> (f64, f64) {
    let coarse = uniform_grid_box(cache, capacity, n, step, (0.0, cache), (0.0, capacity));
    let fine = step / 100.0;
    let zoom = uniform_grid_box(
        cache,
        capacity,
        n,
        fine,
        ((coarse.0 - step).max(0.0), (coarse.0 + step).min(cache)),
        ((coarse.1 - step).max(0.0), (coarse.1 + step).min(capacity)),
    );
    if zoom.0 + zoom.1 > coarse.0 + coarse.1 {
        zoom
    } else {
        coarse
    }
}

fn uniform_grid_box(
    cache: f64,
    capacity: f64,
    n: usize,
    step: f64,
    (m_lo, m_hi): (f64, f64),
    (r_lo, r_hi): (f64, f64),
) -> (f64, f64) {
    let load = |mt: f64, rt: f64| {
        if rt == 0.0 {
            return 0.0;
        }
        let x = rt / (mt + rt);
        rt * (0..n).map(|k| x.powi(k as i32)).sum::<f64>()
    };
    let mut best = (0.0, 0.0);
    let rows = ((m_hi - m_lo) / step + 1e-9).floor() as usize;
    let cols = ((r_hi - r_lo) / step + 1e-9).floor() as usize;
    for a in 0..=rows {
        let mt = (m_lo + a as f64 * step).min(cache);
        let mut rt = None;
        for b in 0..=cols {
            let r = r_lo + b as f64 * step;
            if load(mt, r) > capacity + 1e-12 {
                break;
            }
            rt = Some(r);
        }
        if let Some(rt) = rt {
            if mt + rt > best.0 + best.1 {
                best = (mt, rt);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chromatic_small_graphs() {
        assert_eq!(chromatic_number(&[]), 0);
        assert_eq!(chromatic_number(&[0, 0, 0]), 1);
        // triangle
        assert_eq!(chromatic_number(&[0b110, 0b101, 0b011]), 3);
        // 5-cycle
        let c5: Vec<u32> = (0..5)
            .map(|v| (1 << ((v + 1) % 5)) | (1 << ((v + 4) % 5)))
            .collect();
        assert_eq!(chromatic_number(&c5), 3);
        // 4-cycle
        let c4: Vec<u32> = (0..4)
            .map(|v| (1 << ((v + 1) % 4)) | (1 << ((v + 3) % 4)))
            .collect();
        assert_eq!(chromatic_number(&c4), 2);
    }

    #[test]
    fn grid_finds_symmetric_optimum() {
        let best = simplex_grid_min(&[1.0, 1.0], &[0.0, 0.0], 2.0, 0.01);
        assert!((best - 0.5).abs() < 1e-9);
    }
}

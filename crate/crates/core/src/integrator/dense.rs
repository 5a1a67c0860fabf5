//! Polynomial helpers and dense output on the uniform grid.

use crate::dynsys::DynamicalSystem;
use crate::scalar::Real;

use super::{IntegrationError, SolutionPath, TimeGrid, Trajectory};

/// Lagrange basis values `l_j(s)` over `nodes`.
pub fn lagrange_weights<T: Real>(nodes: &[T], s: T) -> Vec<T> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .fold(T::one(), |acc, (_, &ti)| acc * (s - ti) / (nodes[j] - ti))
        })
        .collect()
}

/// Lagrange basis derivatives `l_j'(s)` over `nodes`.
pub fn lagrange_derivative_weights<T: Real>(nodes: &[T], s: T) -> Vec<T> {
    let k = nodes.len();
    (0..k)
        .map(|j| {
            let mut sum = T::zero();
            for m in (0..k).filter(|&m| m != j) {
                let mut prod = T::one() / (nodes[j] - nodes[m]);
                for i in (0..k).filter(|&i| i != j && i != m) {
                    prod *= (s - nodes[i]) / (nodes[j] - nodes[i]);
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

/// Divided difference `x[t_0, ..., t_k]` of scalar samples.
pub fn divided_difference<T: Real>(nodes: &[T], values: &[T]) -> T {
    debug_assert_eq!(nodes.len(), values.len());
    (0..nodes.len())
        .map(|j| {
            let denom = nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .fold(T::one(), |acc, (_, &ti)| acc * (nodes[j] - ti));
            values[j] / denom
        })
        .sum()
}

/// State at time `t` inside `[times[k], times[k + 1]]`: cubic Hermite for
/// differential components, linear for algebraic ones.
fn interpolate_state<T: Real>(path: &SolutionPath<T>, k: usize, t: T, out: &mut [T]) {
    let (ta, tb) = (path.time(k), path.time(k + 1));
    let h = tb - ta;
    let s = (t - ta) / h;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h10 = s3 - two * s2 + s;
    let h01 = three * s2 - two * s3;
    let h11 = s3 - s2;
    let (xa, xb) = (path.state(k), path.state(k + 1));
    let (da, db) = (path.derivative(k), path.derivative(k + 1));
    for (i, o) in out.iter_mut().enumerate() {
        *o = if path.differential()[i] {
            // increment form: exact for constant data
            xa[i] + h01 * (xb[i] - xa[i]) + h * (h10 * da[i] + h11 * db[i])
        } else {
            xa[i] + s * (xb[i] - xa[i])
        };
    }
}

/// Samples the quantity of interest of `path` on `grid`.
///
/// Grid points that coincide with an accepted step return that step's
/// quantity of interest exactly.
pub fn resample<T: Real, S: DynamicalSystem<T> + ?Sized>(
    path: &SolutionPath<T>,
    sys: &S,
    grid: &TimeGrid<T>,
) -> Result<Trajectory<T>, IntegrationError> {
    let times = path.times();
    let (start, end) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(IntegrationError::GridOutsidePath {
                t: grid.t0().as_f64(),
                start: f64::NAN,
                end: f64::NAN,
            })
        }
    };
    let mut state = vec![T::zero(); path.dim()];
    let mut values = Vec::with_capacity(grid.len());
    for (idx, t) in grid.points().into_iter().enumerate() {
        if t < start || t > end {
            return Err(IntegrationError::GridOutsidePath {
                t: t.as_f64(),
                start: start.as_f64(),
                end: end.as_f64(),
            });
        }
        // first index with times[i] > t, so times[k] <= t < times[k + 1]
        let upper = times.partition_point(|&ti| ti <= t);
        let k = upper - 1;
        let y = if times[k] == t || k + 1 == times.len() {
            sys.qoi(path.state(k))
        } else {
            interpolate_state(path, k, t, &mut state);
            sys.qoi(&state)
        };
        if !y.is_finite() {
            return Err(IntegrationError::NonFinite { index: idx });
        }
        values.push(y);
    }
    Ok(Trajectory::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::FnSystem;

    fn scalar_sys() -> FnSystem<f64> {
        FnSystem::new(1, (0.0, 1.0), |_, x: &[f64], _, out: &mut [f64]| out[0] = -x[0])
    }

    #[test]
    fn lagrange_reproduces_quadratics() {
        let nodes = [0.0, 0.3, 1.0];
        let q = |t: f64| 2.0 * t * t - t + 0.5;
        let dq = |t: f64| 4.0 * t - 1.0;
        let vals: Vec<f64> = nodes.iter().map(|&t| q(t)).collect();
        for s in [0.0, 0.5, 1.7] {
            let w = lagrange_weights(&nodes, s);
            let dw = lagrange_derivative_weights(&nodes, s);
            let v: f64 = w.iter().zip(&vals).map(|(a, b)| a * b).sum();
            let dv: f64 = dw.iter().zip(&vals).map(|(a, b)| a * b).sum();
            assert!((v - q(s)).abs() < 1e-13);
            assert!((dv - dq(s)).abs() < 1e-12);
        }
        // second divided difference of a quadratic is its leading coefficient
        assert!((divided_difference(&nodes, &vals) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn knots_are_reproduced_exactly() {
        let sys = scalar_sys();
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let states: Vec<f64> = times.iter().map(|t: &f64| (-t).exp()).collect();
        let derivs: Vec<f64> = states.iter().map(|x| -x).collect();
        let path = SolutionPath::from_records(1, times, states.clone(), derivs, vec![true]);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let traj = resample(&path, &sys, &grid).unwrap();
        assert_eq!(traj.values(), &states[1..]);
    }

    #[test]
    fn constant_path_gives_constant_trajectory() {
        let sys = scalar_sys();
        let times = vec![0.0, 0.1, 0.37, 1.0];
        let path = SolutionPath::from_records(1, times, vec![3.5; 4], vec![0.0; 4], vec![true]);
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let traj = resample(&path, &sys, &grid).unwrap();
        assert!(traj.values().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn algebraic_components_are_linear() {
        let sys = FnSystem::new(2, (0.0, 1.0), |_, _: &[f64], _, out: &mut [f64]| out.fill(0.0)).with_qoi(|x| x[1]);
        let path = SolutionPath::from_records(
            2,
            vec![0.0, 1.0],
            vec![0.0, 0.0, 1.0, 2.0],
            vec![5.0, 5.0, -5.0, -5.0],
            vec![true, false],
        );
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let traj = resample(&path, &sys, &grid).unwrap();
        assert_eq!(traj.values(), &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn grid_outside_path_is_an_error() {
        let sys = scalar_sys();
        let path = SolutionPath::from_records(1, vec![0.0, 0.5], vec![1.0, 1.0], vec![0.0, 0.0], vec![true]);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            resample(&path, &sys, &grid),
            Err(IntegrationError::GridOutsidePath { .. })
        ));
    }
}

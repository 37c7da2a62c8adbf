//! The first-order system satisfied by `ξ̃`:
//! `A_x = q − A² + k²`,
//! `A_t = (q_xx − 2q²)/4 − (q_x/2)A + (q/2)(A² + k²) − k²(A² − k²)`.

use serde::Serialize;

use super::record::{Domain, NumericBackground, SolutionRecord};
use super::{BacklundError, SINGULAR_EPS};
use crate::geometry::{stage_samples, substeps_for};
use crate::numerics::rk4_step;

/// Largest step of the analytic integrations.
const MAX_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub k: f64,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// `A` per time, per `x`.
    pub a: Vec<Vec<f64>>,
}

fn a_x(q: f64, a: f64, k2: f64) -> f64 {
    q - a * a + k2
}

fn a_t([q, qx, qxx]: [f64; 3], a: f64, k2: f64) -> f64 {
    (qxx - 2.0 * q * q) / 4.0 - qx / 2.0 * a + q / 2.0 * (a * a + k2) - k2 * (a * a - k2)
}

fn blown_up(a: f64) -> bool {
    !(a.abs() <= 1.0 / SINGULAR_EPS)
}

fn check_sorted(v: &[f64], what: &str) -> Result<(), BacklundError> {
    if v.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(BacklundError::InvalidInput(format!("{what} must be strictly ascending")))
    }
}

/// Where an integration blew up: the step `[lo, hi]` of the integration variable.
type Blowup = (f64, f64);

/// Integrates `A` along the segment `from → to` of an analytic record, with
/// the coefficient jets sampled at RK4 stage points.
fn segment(
    from: f64,
    to: f64,
    a0: f64,
    sample: &mut dyn FnMut(&[f64]) -> Result<Vec<[f64; 3]>, BacklundError>,
    rhs: &dyn Fn([f64; 3], f64) -> f64,
) -> Result<Result<f64, Blowup>, BacklundError> {
    let steps = ((to - from).abs() / MAX_STEP).ceil().max(1.0) as usize;
    let h = (to - from) / steps as f64;
    let stages: Vec<f64> = (0..=2 * steps).map(|i| from + i as f64 * h / 2.0).collect();
    let jets = sample(&stages)?;
    let mut a = a0;
    for s in 0..steps {
        a = rk4_step(a, h, |stage, y| rhs(jets[2 * s + (stage.fraction() * 2.0) as usize], y));
        if blown_up(a) {
            let (u, v) = (stages[2 * s], stages[2 * s + 2]);
            return Ok(Err((u.min(v), u.max(v))));
        }
    }
    Ok(Ok(a))
}

/// Values at `targets` (ascending) of a solution started at `origin` with
/// `a0`, marching outward on each side.
fn march(
    targets: &[f64],
    origin: f64,
    a0: f64,
    mut step: impl FnMut(f64, f64, f64) -> Result<Result<f64, Blowup>, BacklundError>,
) -> Result<Result<Vec<f64>, Blowup>, BacklundError> {
    let mut out = vec![0.0; targets.len()];
    let split = targets.partition_point(|&v| v < origin);
    for range in [(split..targets.len()).collect::<Vec<_>>(), (0..split).rev().collect()] {
        let (mut pos, mut a) = (origin, a0);
        for i in range {
            a = match step(pos, targets[i], a)? {
                Ok(a) => a,
                Err(b) => return Ok(Err(b)),
            };
            pos = targets[i];
            out[i] = a;
        }
    }
    Ok(Ok(out))
}

/// Solves the system from `A = xi0` at the record's reference point at
/// `t = 0`: first in `t` along `x = x₀`, then in `x` across each requested
/// time. Numeric records are sampled at their own steps and nodes.
pub fn bt_ode_solve(sol: &SolutionRecord, k: f64, xi0: f64, domain: &Domain) -> Result<RiccatiSolution, BacklundError> {
    check_sorted(&domain.xs, "x samples")?;
    check_sorted(&domain.ts, "t samples")?;
    let k2 = k * k;
    let a = match sol {
        SolutionRecord::Numeric(bg) => numeric(bg, k2, xi0, domain)?,
        _ if sol.background().is_none() => analytic(sol, k2, xi0, domain)?,
        _ => return Err(BacklundError::Unsupported("Riccati solve on a dressed numeric background".into())),
    };
    Ok(RiccatiSolution { k, xs: domain.xs.clone(), ts: domain.ts.clone(), a })
}

fn analytic(sol: &SolutionRecord, k2: f64, xi0: f64, domain: &Domain) -> Result<Vec<Vec<f64>>, BacklundError> {
    let x0 = sol.reference_x();
    let t_rhs = |jet: [f64; 3], a: f64| a_t(jet, a, k2);
    let x_rhs = |jet: [f64; 3], a: f64| a_x(jet[0], a, k2);
    let at_anchor = march(&domain.ts, 0.0, xi0, |from, to, a| {
        let mut sample = |ts: &[f64]| ts.iter().map(|&t| Ok(sol.q_jets(&[x0], t)?[0])).collect();
        segment(from, to, a, &mut sample, &t_rhs)
    })?
    .map_err(|(t, _)| BacklundError::SingularBT { t, x_lo: x0, x_hi: x0 })?;
    let mut out = Vec::with_capacity(domain.ts.len());
    for (&t, a0) in domain.ts.iter().zip(at_anchor) {
        let values = march(&domain.xs, x0, a0, |from, to, a| {
            let mut sample = |xs: &[f64]| Ok(sol.points(xs, t)?.iter().map(|p| [p.q, 0.0, 0.0]).collect());
            segment(from, to, a, &mut sample, &x_rhs)
        })?
        .map_err(|(x_lo, x_hi)| BacklundError::SingularBT { t, x_lo, x_hi })?;
        out.push(values);
    }
    Ok(out)
}

fn numeric(bg: &NumericBackground, k2: f64, xi0: f64, domain: &Domain) -> Result<Vec<Vec<f64>>, BacklundError> {
    let per = bg.magnus_per_snapshot();
    let x0 = bg.grid().x(bg.anchor());
    let mut anchor_values = vec![xi0];
    let mut a = xi0;
    for (s, w) in bg.anchor_jets().windows(3).step_by(2).enumerate() {
        a = rk4_step(a, 2.0 * bg.dt(), |stage, y| {
            let jet = &w[(stage.fraction() * 2.0) as usize];
            a_t([jet[0], jet[1], jet[2]], y, k2)
        });
        if blown_up(a) {
            return Err(BacklundError::SingularBT { t: 2.0 * bg.dt() * s as f64, x_lo: x0, x_hi: x0 });
        }
        if (s + 1) % per == 0 {
            anchor_values.push(a);
        }
    }
    let mut out = Vec::with_capacity(domain.ts.len());
    for &t in &domain.ts {
        let i = bg.time_index(t)?;
        let nodes = bg.node_indices(&domain.xs, t)?;
        let values = x_leg(bg, i, k2, anchor_values[i]).map_err(|(x_lo, x_hi)| BacklundError::SingularBT { t, x_lo, x_hi })?;
        out.push(nodes.into_iter().map(|m| values[m]).collect());
    }
    Ok(out)
}

/// `A` at every node of snapshot `i`, from `a0` at the anchor.
fn x_leg(bg: &NumericBackground, i: usize, k2: f64, a0: f64) -> Result<Vec<f64>, Blowup> {
    let q = &bg.states()[i];
    let substeps = substeps_for(q, k2);
    let fine = stage_samples(q, substeps);
    let n = q.grid().n();
    let h = q.grid().dx() / substeps as f64;
    let mut out = vec![a0; n];
    for (dir, target) in [(1_isize, n - 1), (-1, 0)] {
        let mut a = a0;
        let mut node = bg.anchor();
        while node != target {
            for s in 0..substeps {
                let k0 = (2 * substeps * node) as isize + dir * 2 * s as isize;
                a = rk4_step(a, dir as f64 * h, |stage, y| a_x(fine[(k0 + dir * (stage.fraction() * 2.0) as isize) as usize], y, k2));
            }
            let next = (node as isize + dir) as usize;
            if blown_up(a) {
                let (u, v) = (q.grid().x(node), q.grid().x(next));
                return Err((u.min(v), u.max(v)));
            }
            node = next;
            out[node] = a;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backlund::{bt_apply, SimpleFactor};
    use crate::flows::EvolveOptions;
    use crate::geometry::CurvatureField;
    use crate::numerics::{Grid, Mat2};

    #[test]
    fn tanh_on_flat_background() {
        let xs: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        let sol = bt_ode_solve(&SolutionRecord::Stationary, 1.0, 0.0, &Domain::new(xs.clone(), vec![0.0])).unwrap();
        for (x, a) in xs.iter().zip(&sol.a[0]) {
            assert!((a - x.tanh()).abs() < 1e-10);
        }
        let k: f64 = 1.3;
        let ts = vec![-0.2, 0.0, 0.3];
        let sol = bt_ode_solve(&SolutionRecord::Stationary, k, 0.0, &Domain::new(xs.clone(), ts.clone())).unwrap();
        for (t, row) in ts.iter().zip(&sol.a) {
            for (x, a) in xs.iter().zip(row) {
                assert!((a - k * (k * x + k.powi(3) * t).tanh()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn time_equation_on_flat_background() {
        for (k, x, t) in [(1.0, 0.3, 0.2), (2.0_f64, -0.4, 0.05)] {
            let th = k * x + k.powi(3) * t;
            let a = k * th.tanh();
            let at = k.powi(4) / th.cosh().powi(2);
            assert!((a_t([0.0; 3], a, k * k) - at).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_frame_on_dressed_record() {
        let seed = SolutionRecord::Stationary.dress(SimpleFactor::new(0.0, 1.0));
        let dom = Domain::new((0..=40).map(|i| -2.0 + 0.1 * i as f64).collect(), vec![0.0, 0.15]);
        let f = SimpleFactor::new(0.2, 1.6);
        let frame = bt_apply(&seed, f, &dom).unwrap();
        let ode = bt_ode_solve(&seed, f.k, f.xi, &dom).unwrap();
        for (u, v) in frame.state.xi_tilde.iter().flatten().zip(ode.a.iter().flatten()) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }

    #[test]
    fn agrees_with_frame_on_numeric_record() {
        let grid = Grid::centered(512, 40.0).unwrap();
        let q0 = CurvatureField::from_fn(grid, true, |x| -2.0 / x.cosh().powi(2));
        let opts = EvolveOptions { max_dt: 2.5e-4, snapshots: 4, ..EvolveOptions::default() };
        let bg = NumericBackground::new(&q0, grid.anchor(), Mat2::IDENTITY, 0.2, &opts).unwrap();
        let rec = SolutionRecord::numeric(bg);
        let xs: Vec<f64> = grid.nodes().into_iter().filter(|x| x.abs() <= 8.0).collect();
        let dom = Domain::new(xs, vec![0.0, 0.1, 0.2]);
        let f = SimpleFactor::new(0.0, 1.5);
        let frame = bt_apply(&rec, f, &dom).unwrap();
        let ode = bt_ode_solve(&rec, f.k, frame.state.xi_tilde[0][dom.xs.iter().position(|x| *x == 0.0).unwrap()], &dom).unwrap();
        let worst = frame.state.xi_tilde.iter().flatten().zip(ode.a.iter().flatten()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn blow_up_is_reported() {
        let dom = Domain::new((0..=40).map(|i| -2.0 + 0.1 * i as f64).collect(), vec![0.0]);
        match bt_ode_solve(&SolutionRecord::Stationary, 1.0, 2.0, &dom) {
            Err(BacklundError::SingularBT { t, x_lo, x_hi }) => {
                let root = (-0.5_f64).atanh();
                assert_eq!(t, 0.0);
                assert!(x_lo <= root + 1e-3 && x_hi >= root - 0.1, "[{x_lo}, {x_hi}]");
            }
            other => panic!("expected SingularBT, got {other:?}"),
        }
    }

    #[test]
    fn unsorted_samples_are_rejected() {
        let dom = Domain::new(vec![1.0, 0.0], vec![0.0]);
        assert!(matches!(bt_ode_solve(&SolutionRecord::Stationary, 1.0, 0.0, &dom), Err(BacklundError::InvalidInput(_))));
    }
}

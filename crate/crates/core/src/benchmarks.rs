//! Reference systems for D-MORPH runs.

use crate::error::{Error, Result};
use crate::homotopy::SystemPath;
use crate::linalg::{c, diag, projector, CMat};
use crate::objectives::{grad_phi1_field, phi1, ObservableSpec};
use crate::quantum::{propagate, ControlField, ControlSystem};

/// A system path, an objective and a field sitting on the wanted level.
#[derive(Clone)]
pub struct Benchmark {
    pub path: SystemPath,
    pub spec: ObservableSpec,
    pub field0: ControlField,
}

fn coupling(n: usize, pairs: &[(usize, usize, f64)]) -> CMat {
    let mut m = CMat::zeros(n, n);
    for &(i, j, v) in pairs {
        m[(i, j)] = c(v, 0.0);
        m[(j, i)] = c(v, 0.0);
    }
    m
}

fn resonant_guess(energies: &[f64], pairs: &[(usize, usize)], horizon: f64, steps: usize, amp: f64) -> Result<ControlField> {
    ControlField::from_fn(horizon, steps, 1, |t, _| {
        pairs
            .iter()
            .map(|&(i, j)| amp * ((energies[j] - energies[i]) * t).cos())
            .sum::<f64>()
    })
}

/// Damped minimum-norm Newton steps along the gradient until
/// |<Theta> - target| < tol.
pub fn drive_to_value(
    system: &ControlSystem,
    spec: &ObservableSpec,
    field: &ControlField,
    target: f64,
    tol: f64,
) -> Result<ControlField> {
    let mut field = field.clone();
    let mut value = phi1(propagate(system, &field)?.final_unitary(), spec)?;
    let cap = 0.5 * field.values().amax().max(0.05);
    for _ in 0..500 {
        let err = target - value;
        if err.abs() < tol {
            return Ok(field);
        }
        let traj = propagate(system, &field)?;
        let g = grad_phi1_field(&traj, spec)?.values;
        let g2 = g.norm_squared() * field.dt();
        if !(g2 > 0.0) {
            break;
        }
        let mut step = g * (err / g2);
        let big = step.amax();
        if big > cap {
            step *= cap / big;
        }
        let mut lam = 1.0;
        loop {
            let cand = field.with_values(field.values() + &step * lam)?;
            let v = phi1(propagate(system, &cand)?.final_unitary(), spec)?;
            if (target - v).abs() < err.abs() || lam < 1e-6 {
                field = cand;
                value = v;
                break;
            }
            lam *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: 500,
        residual: (target - value).abs(),
    })
}

/// Eight nondegenerate levels coupled to first, second and third
/// neighbours; |1> -> |8> transfer at the given yield.
pub fn ladder8(yield_target: f64) -> Result<Benchmark> {
    let n = 8;
    let energies: Vec<f64> = (0..n).map(|j| j as f64 + 0.07 * (j * j) as f64).collect();
    let mut pairs = Vec::new();
    for d in 1..=3 {
        for i in 0..n - d {
            pairs.push((i, i + d, 1.0 / d as f64));
        }
    }
    let horizon = 20.0;
    let sys = ControlSystem::new(diag(&energies), vec![coupling(n, &pairs)], horizon)?;
    let spec = ObservableSpec::new(projector(n, 0), projector(n, n - 1))?;
    let nearest: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let guess = resonant_guess(&energies, &nearest, horizon, 200, 0.08)?;
    let field0 = drive_to_value(&sys, &spec, &guess, yield_target, 1e-12)?;
    Ok(Benchmark {
        path: SystemPath::Constant(sys),
        spec,
        field0,
    })
}

/// Three levels whose transfer |1> -> |3> runs through the direct 1-3 dipole
/// at s = 0 and through the 1-2-3 ladder at s = 1. `curved` bends the path
/// through a point where both routes are partly on.
pub fn dipole_swap3(population: f64, curved: bool) -> Result<Benchmark> {
    let energies = [0.0, 1.0, 2.3];
    let horizon = 12.0;
    let h0 = diag(&energies);
    let start = ControlSystem::new(h0.clone(), vec![coupling(3, &[(0, 2, 1.0)])], horizon)?;
    let end = ControlSystem::new(h0.clone(), vec![coupling(3, &[(0, 1, 1.0), (1, 2, 1.0)])], horizon)?;
    let path = if curved {
        let mid = ControlSystem::new(h0, vec![coupling(3, &[(0, 2, 0.8), (0, 1, 0.8), (1, 2, 0.8)])], horizon)?;
        SystemPath::quadratic(start.clone(), mid, end)?
    } else {
        SystemPath::linear(start.clone(), end)?
    };
    let spec = ObservableSpec::new(projector(3, 0), projector(3, 2))?;
    let guess = resonant_guess(&energies, &[(0, 2), (0, 1), (1, 2)], horizon, 120, 0.05)?;
    let field0 = drive_to_value(&start, &spec, &guess, population, 1e-12)?;
    Ok(Benchmark { path, spec, field0 })
}

/// Five levels, |1> -> |5>, with the 3-4 dipole switching on and the 1-4
/// dipole switching off along s. Returns the benchmark and P(0).
pub fn track5() -> Result<(Benchmark, f64)> {
    let energies = [0.0, 1.0, 2.1, 3.3, 4.6];
    let horizon = 15.0;
    let make = |s: f64| {
        coupling(
            5,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 3, 0.3 + 0.7 * s),
                (3, 4, 1.0),
                (0, 3, 0.5 * (1.0 - s)),
            ],
        )
    };
    let h0 = diag(&energies);
    let start = ControlSystem::new(h0.clone(), vec![make(0.0)], horizon)?;
    let end = ControlSystem::new(h0, vec![make(1.0)], horizon)?;
    let spec = ObservableSpec::new(projector(5, 0), projector(5, 4))?;
    let guess = resonant_guess(&energies, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 3)], horizon, 150, 0.06)?;
    let p0 = 0.5;
    let field0 = drive_to_value(&start, &spec, &guess, p0, 1e-12)?;
    Ok((
        Benchmark {
            path: SystemPath::linear(start, end)?,
            spec,
            field0,
        },
        p0,
    ))
}

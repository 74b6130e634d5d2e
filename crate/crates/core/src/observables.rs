//! Observable extraction and the exact one-body propagator for `U = 0`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{build_bath, Occupations, SiamConfig, Spin};
use crate::trajectory::{schedule, TrajectoryRecord, TrajectorySample};

/// `(n₀α + n₀β, n₀α − n₀β)`.
pub fn impurity_observables(n_alpha: f64, n_beta: f64) -> (f64, f64) {
    (n_alpha + n_beta, n_alpha - n_beta)
}

/// Sum of all spin-orbital occupations.
pub fn total_number(numbers: &[Vec<f64>; 2]) -> f64 {
    numbers.iter().flatten().sum()
}

/// Exact populations of the non-interacting quench,
/// `n_i(t) = Σ_k f_k |[e^{−iht}]_ik|²`, from one eigendecomposition of the
/// real symmetric one-body matrix per spin.
pub fn quadratic_oracle(config: &SiamConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    if config.hubbard_u != 0.0 {
        return Err(Error::InvalidConfig {
            key: "U",
            reason: "the quadratic oracle requires U = 0".into(),
        });
    }
    if config.gamma != 0.0 || config.delta_eps != 0.0 {
        return Err(Error::Unsupported(
            "the quadratic oracle handles closed, undriven runs only".into(),
        ));
    }
    let (steps, stride) = schedule(config.t_final, config.dt, config.record_interval)?;
    let bath = build_bath(config)?;
    let occ = Occupations::reference(config, &bath);
    let n = bath.len() + 1;

    let mut h = DMatrix::<f64>::zeros(n, n);
    h[(0, 0)] = config.epsilon0;
    for i in 1..n {
        h[(i, i)] = bath.energies[i - 1];
        h[(0, i)] = bath.couplings[i - 1];
        h[(i, 0)] = bath.couplings[i - 1];
    }
    let eig = SymmetricEigen::new(h);
    let q = &eig.eigenvectors;
    let qt = q.transpose();

    let mut record = TrajectoryRecord::new();
    for record_step in (0..=steps).step_by(stride) {
        let t = record_step as f64 * config.dt;
        // e^{−iht} = Q cos(λt) Qᵀ − i Q sin(λt) Qᵀ
        let mut qc = q.clone();
        let mut qs = q.clone();
        for (m, &lambda) in eig.eigenvalues.iter().enumerate() {
            let (s, c) = (lambda * t).sin_cos();
            qc.column_mut(m).scale_mut(c);
            qs.column_mut(m).scale_mut(s);
        }
        let re = &qc * &qt;
        let im = &qs * &qt;
        let numbers = Spin::BOTH.map(|spin| {
            let f = occ.v(spin);
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|k| f[k] * (re[(i, k)].powi(2) + im[(i, k)].powi(2)))
                        .sum()
                })
                .collect::<Vec<f64>>()
        });
        record.push(TrajectorySample {
            time: t,
            n_imp: [numbers[0][0], numbers[1][0]],
            n_electrons: total_number(&numbers),
            trace_dev: None,
            herm_dev: None,
            discarded_weight: None,
        });
    }
    Ok(record)
}

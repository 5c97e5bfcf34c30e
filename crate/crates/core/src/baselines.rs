//! Baseline reduced-order models: proper orthogonal decomposition of
//! snapshot data, intrusive Petrov-Galerkin projection of the full operators,
//! and non-intrusive operator inference by regularized least squares.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{PolynomialRom, ProjectionPair, Trajectory};
use crate::error::{Error, Result};
use crate::systems::FullOrderSystem;
use crate::tensor::{Tensor3, Tensor4};

/// Leading left singular directions of a snapshot matrix.
#[derive(Debug, Clone)]
pub struct Pod {
    /// Orthonormal modes (n×r), each column signed so its largest-magnitude
    /// entry is positive.
    pub modes: DMatrix<f64>,
    /// Fraction of squared singular-value mass captured by the kept modes.
    pub energy_fraction: f64,
    /// All singular values, descending.
    pub singular_values: DVector<f64>,
}

/// Stacks every trajectory's state snapshots column-wise. With `weighted`
/// each trajectory's columns are scaled by `1/sqrt(alpha)`, matching the
/// weighting of the training cost; no mean subtraction is applied.
pub fn snapshot_matrix(data: &[Trajectory], weighted: bool) -> Result<DMatrix<f64>> {
    let mut n = 0;
    let mut cols = 0;
    for traj in data {
        let states = traj
            .states
            .as_ref()
            .ok_or_else(|| Error::Data("snapshot stacking requires stored states".into()))?;
        if n == 0 {
            n = states.nrows();
        } else if states.nrows() != n {
            return Err(Error::Dimension("state dimensions differ across trajectories".into()));
        }
        cols += states.ncols();
    }
    if cols == 0 {
        return Err(Error::Data("no snapshots to stack".into()));
    }
    let mut x = DMatrix::zeros(n, cols);
    let mut at = 0;
    for traj in data {
        let states = traj.states.as_ref().unwrap();
        let scale = if weighted {
            if !(traj.alpha > 0.0) {
                return Err(Error::Data("trajectory weight α must be positive".into()));
            }
            1.0 / traj.alpha.sqrt()
        } else {
            1.0
        };
        for c in 0..states.ncols() {
            for row in 0..n {
                x[(row, at)] = scale * states[(row, c)];
            }
            at += 1;
        }
    }
    Ok(x)
}

/// Leading `r` left singular vectors of `snapshots` with the captured
/// energy fraction `Σ_{i<r} σ_i² / Σ σ_i²`.
pub fn compute_pod(snapshots: &DMatrix<f64>, r: usize) -> Result<Pod> {
    let kmax = snapshots.nrows().min(snapshots.ncols());
    if r == 0 || r > kmax {
        return Err(Error::Config(format!("POD rank {r} outside 1..={kmax}")));
    }
    let svd = snapshots.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let sv = &svd.singular_values;

    // Order defensively by descending singular value.
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let singular_values = DVector::from_fn(sv.len(), |i, _| sv[order[i]]);

    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::Data("snapshot matrix is zero".into()));
    }
    let kept: f64 = singular_values.iter().take(r).map(|s| s * s).sum();

    let mut modes = DMatrix::zeros(snapshots.nrows(), r);
    for j in 0..r {
        let col = u.column(order[j]);
        let pivot = col.iamax();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for row in 0..snapshots.nrows() {
            modes[(row, j)] = sign * col[row];
        }
    }
    Ok(Pod { modes, energy_fraction: kept / total, singular_values })
}

/// Intrusive projection of the full-order operators through an oblique basis
/// pair: `A_r = Ψ^T A D`, `B_r = Ψ^T B`, `H_r[:,j,k] = Ψ^T T(d_j, d_k)`,
/// `G_r[:,j,k,l] = Ψ^T T3(d_j, d_k, d_l)` with `D = Φ(Ψ^T Φ)^{-1}`. The
/// reduced output map is `C D`, computed by the caller.
pub fn petrov_galerkin_project(
    system: &dyn FullOrderSystem,
    pair: &ProjectionPair,
) -> Result<PolynomialRom> {
    let n = system.state_dim();
    let d = pair.decode_matrix();
    if d.nrows() != n {
        return Err(Error::Dimension("basis rows must match the full state".into()));
    }
    let r = d.ncols();
    let psi_t = pair.psi().transpose();

    let a_r = &psi_t * (system.linear_matrix() * d);
    let b_r = &psi_t * system.input_matrix();

    let d_cols: Vec<DVector<f64>> = (0..r).map(|j| d.column(j).into_owned()).collect();
    let mut form = DVector::zeros(n);

    let h_r = if system.has_quadratic() {
        let mut h = Tensor3::zeros(r, r, r);
        for j in 0..r {
            for k in j..r {
                system.quadratic_form(&d_cols[j], &d_cols[k], &mut form);
                let reduced = &psi_t * &form;
                for i in 0..r {
                    h.set(i, j, k, reduced[i]);
                    h.set(i, k, j, reduced[i]);
                }
            }
        }
        Some(h)
    } else {
        None
    };

    let g_r = if system.has_cubic() {
        let mut g = Tensor4::zeros(r, r, r, r);
        for j in 0..r {
            for k in j..r {
                for l in k..r {
                    system.cubic_form(&d_cols[j], &d_cols[k], &d_cols[l], &mut form);
                    let reduced = &psi_t * &form;
                    let mut perms = [
                        (j, k, l),
                        (j, l, k),
                        (k, j, l),
                        (k, l, j),
                        (l, j, k),
                        (l, k, j),
                    ];
                    perms.sort_unstable();
                    for w in 0..perms.len() {
                        if w > 0 && perms[w] == perms[w - 1] {
                            continue;
                        }
                        let (a, b, c) = perms[w];
                        for i in 0..r {
                            g.set(i, a, b, c, reduced[i]);
                        }
                    }
                }
            }
        }
        Some(g)
    } else {
        None
    };

    PolynomialRom::new(a_r, b_r, h_r, g_r)
}

#[derive(Debug, Clone)]
pub struct OpInfOptions {
    /// Tikhonov strength on the nonlinear blocks (0 disables it).
    pub lambda: f64,
    pub quadratic: bool,
    pub cubic: bool,
}

#[derive(Debug, Clone)]
pub struct OpInfResult {
    pub rom: PolynomialRom,
    /// The regression matrix was numerically rank deficient and the
    /// minimum-norm solution was taken.
    pub rank_deficient: bool,
}

/// Duplicate-free quadratic monomial index pairs `(a, b)` with `a ≤ b` and
/// their symmetric multiplicities.
fn monomials2(r: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(r * (r + 1) / 2);
    for a in 0..r {
        for b in a..r {
            out.push((a, b, if a == b { 1.0 } else { 2.0 }));
        }
    }
    out
}

fn monomials3(r: usize) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for a in 0..r {
        for b in a..r {
            for c in b..r {
                let mult = if a == b && b == c {
                    1.0
                } else if a == b || b == c {
                    3.0
                } else {
                    6.0
                };
                out.push((a, b, c, mult));
            }
        }
    }
    out
}

/// Non-uniform three-point derivative stencil at the middle node.
fn central_derivative(
    z_prev: &DVector<f64>,
    z_mid: &DVector<f64>,
    z_next: &DVector<f64>,
    h_prev: f64,
    h_next: f64,
) -> DVector<f64> {
    let denom = h_prev * h_next * (h_prev + h_next);
    (h_prev * h_prev * z_next - h_next * h_next * z_prev
        + (h_next * h_next - h_prev * h_prev) * z_mid)
        / denom
}

/// Infers reduced operators from state snapshots by weighted least squares
/// over the reduced coordinates `z = basis^T x`. With a full-order system at
/// hand the reduced derivatives are exact (`basis^T f(x, u)` at every
/// sample); otherwise they come from three-point finite differences of the
/// reduced states, dropping each trajectory's endpoint samples.
///
/// The Tikhonov penalty acts only on the quadratic/cubic monomial columns,
/// scaled by `1/multiplicity` so it equals `λ` times the squared Frobenius
/// norm of the symmetric tensors. Rank-deficient regressions fall back to
/// the minimum-norm solution and set a flag; unforced datasets therefore
/// yield `B_r = 0` rather than an error.
pub fn operator_inference(
    data: &[Trajectory],
    basis: &DMatrix<f64>,
    system: Option<&dyn FullOrderSystem>,
    opts: &OpInfOptions,
) -> Result<OpInfResult> {
    if data.is_empty() {
        return Err(Error::Data("operator inference needs at least one trajectory".into()));
    }
    let n = basis.nrows();
    let r = basis.ncols();
    if opts.cubic && !opts.quadratic && r == 0 {
        return Err(Error::Config("empty basis".into()));
    }
    let m = match system {
        Some(sys) => {
            if sys.state_dim() != n {
                return Err(Error::Dimension("basis rows must match the full state".into()));
            }
            sys.input_dim()
        }
        None => data.iter().map(|t| t.input.input_dim()).max().unwrap_or(0),
    };

    let pairs2 = if opts.quadratic { monomials2(r) } else { Vec::new() };
    let triples3 = if opts.cubic { monomials3(r) } else { Vec::new() };
    let q = r + pairs2.len() + triples3.len() + m;

    // Count usable samples.
    let mut rows = 0;
    for traj in data {
        let states = traj
            .states
            .as_ref()
            .ok_or_else(|| Error::Data("operator inference requires state snapshots".into()))?;
        if states.nrows() != n {
            return Err(Error::Dimension("state snapshots do not match the basis".into()));
        }
        let usable = if system.is_some() {
            states.ncols()
        } else {
            states.ncols().saturating_sub(2)
        };
        if !(traj.alpha > 0.0) {
            return Err(Error::Data("trajectory weight α must be positive".into()));
        }
        rows += usable;
    }
    if rows == 0 {
        return Err(Error::Data("not enough samples for operator inference".into()));
    }
    let penalty_rows = if opts.lambda > 0.0 { pairs2.len() + triples3.len() } else { 0 };

    let mut reg = DMatrix::zeros(rows + penalty_rows, q);
    let mut target = DMatrix::zeros(rows + penalty_rows, r);

    let mut at = 0;
    let mut u_buf = DVector::zeros(m);
    let mut rhs_buf = DVector::zeros(n);
    for traj in data {
        let states = traj.states.as_ref().unwrap();
        let cols = states.ncols();
        let w = (1.0 / traj.alpha).sqrt();
        let z_all: Vec<DVector<f64>> =
            (0..cols).map(|i| basis.tr_mul(&states.column(i))).collect();
        let range: Vec<usize> = if system.is_some() {
            (0..cols).collect()
        } else {
            (1..cols.saturating_sub(1)).collect()
        };
        for &i in &range {
            let z = &z_all[i];
            let mut col = 0;
            for a in 0..r {
                reg[(at, col)] = w * z[a];
                col += 1;
            }
            for &(a, b, _) in &pairs2 {
                reg[(at, col)] = w * z[a] * z[b];
                col += 1;
            }
            for &(a, b, c, _) in &triples3 {
                reg[(at, col)] = w * z[a] * z[b] * z[c];
                col += 1;
            }
            if m > 0 {
                traj.input.eval(traj.times[i], &mut u_buf);
                for a in 0..m {
                    reg[(at, col)] = w * u_buf[a];
                    col += 1;
                }
            }
            debug_assert_eq!(col, q);

            let zdot = match system {
                Some(sys) => {
                    traj.input.eval(traj.times[i], &mut u_buf);
                    sys.rhs(&states.column(i).into_owned(), &u_buf, &mut rhs_buf);
                    basis.tr_mul(&rhs_buf)
                }
                None => central_derivative(
                    &z_all[i - 1],
                    &z_all[i],
                    &z_all[i + 1],
                    traj.times[i] - traj.times[i - 1],
                    traj.times[i + 1] - traj.times[i],
                ),
            };
            for c in 0..r {
                target[(at, c)] = w * zdot[c];
            }
            at += 1;
        }
    }

    if penalty_rows > 0 {
        let mut col = r;
        for &(_, _, mult) in &pairs2 {
            reg[(at, col)] = (opts.lambda / mult).sqrt();
            at += 1;
            col += 1;
        }
        for &(_, _, _, mult) in &triples3 {
            reg[(at, col)] = (opts.lambda / mult).sqrt();
            at += 1;
            col += 1;
        }
    }

    let svd = reg.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::Data("regression matrix is zero".into()));
    }
    let eps = smax * 1e-12;
    let rank = svd.rank(eps);
    let beta = svd
        .solve(&target, eps)
        .map_err(|e| Error::Optim(format!("least-squares solve failed: {e}")))?;

    let mut a_r = DMatrix::zeros(r, r);
    for c in 0..r {
        for f in 0..r {
            a_r[(c, f)] = beta[(f, c)];
        }
    }
    let mut col = r;
    let h_r = if opts.quadratic {
        let mut h = Tensor3::zeros(r, r, r);
        for &(a, b, mult) in &pairs2 {
            for c in 0..r {
                let v = beta[(col, c)] / mult;
                h.set(c, a, b, v);
                h.set(c, b, a, v);
            }
            col += 1;
        }
        Some(h)
    } else {
        None
    };
    let g_r = if opts.cubic {
        let mut g = Tensor4::zeros(r, r, r, r);
        for &(a, b, cc, mult) in &triples3 {
            let mut perms = [
                (a, b, cc),
                (a, cc, b),
                (b, a, cc),
                (b, cc, a),
                (cc, a, b),
                (cc, b, a),
            ];
            perms.sort_unstable();
            for i in 0..r {
                let v = beta[(col, i)] / mult;
                for w in 0..perms.len() {
                    if w > 0 && perms[w] == perms[w - 1] {
                        continue;
                    }
                    let (x, y, zz) = perms[w];
                    g.set(i, x, y, zz, v);
                }
            }
            col += 1;
        }
        Some(g)
    } else {
        None
    };
    let mut b_r = DMatrix::zeros(r, m);
    for c in 0..r {
        for f in 0..m {
            b_r[(c, f)] = beta[(col + f, c)];
        }
    }

    let rom = PolynomialRom::new(a_r, b_r, h_r, g_r)?;
    Ok(OpInfResult { rom, rank_deficient: rank < q })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::dynamics::{simulate_rom, InputSignal, SampleGrid};
    use crate::rng::SplitMix64;
    use crate::systems::{generate_dataset, BenchmarkSpec, Protocol};

    #[test]
    fn pod_recovers_known_low_rank_factors() {
        let mut rng = SplitMix64::new(5);
        let raw = DMatrix::from_fn(6, 3, |_, _| rng.normal());
        let u = raw.qr().q();
        let raw = DMatrix::from_fn(12, 3, |_, _| rng.normal());
        let v = raw.qr().q();
        let sigma = [3.0, 2.0, 1.0];
        let mut x = DMatrix::zeros(6, 12);
        for (k, s) in sigma.iter().enumerate() {
            x += *s * u.column(k) * v.column(k).transpose();
        }
        let pod = compute_pod(&x, 2).unwrap();
        assert_relative_eq!(pod.energy_fraction, 13.0 / 14.0, max_relative = 1e-12);
        assert_relative_eq!(pod.singular_values[0], 3.0, max_relative = 1e-10);
        assert_relative_eq!(pod.singular_values[2], 1.0, max_relative = 1e-10);
        for k in 0..2 {
            let mode = pod.modes.column(k);
            let reference = u.column(k);
            let dot = mode.dot(&reference).abs();
            assert_relative_eq!(dot, 1.0, max_relative = 1e-10);
            // Sign convention: largest-magnitude entry is positive.
            assert!(mode[mode.iamax()] > 0.0);
        }
        // Orthonormal columns.
        let gram = pod.modes.transpose() * &pod.modes;
        assert_relative_eq!(gram[(0, 0)], 1.0, max_relative = 1e-12);
        assert!(gram[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn pod_rejects_bad_rank() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert!(compute_pod(&x, 0).is_err());
        assert!(compute_pod(&x, 4).is_err());
    }

    #[test]
    fn snapshot_stack_weighting() {
        let spec = BenchmarkSpec::toy_default();
        let data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
        let raw = snapshot_matrix(&data.trajectories, false).unwrap();
        let weighted = snapshot_matrix(&data.trajectories, true).unwrap();
        assert_eq!(raw.ncols(), 80);
        assert_eq!(raw.nrows(), 3);
        let a0 = data.trajectories[0].alpha;
        assert_relative_eq!(weighted[(0, 0)], raw[(0, 0)] / a0.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn identity_galerkin_reproduces_full_model() {
        let spec = BenchmarkSpec::toy_default();
        let system = spec.build().unwrap();
        let eye = DMatrix::identity(3, 3);
        let pair = ProjectionPair::new(eye.clone(), eye).unwrap();
        let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();

        let mut rng = SplitMix64::new(9);
        for _ in 0..5 {
            let x = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
            let u = DVector::from_fn(1, |_, _| rng.uniform(-0.3, 0.3));
            let mut want = DVector::zeros(3);
            system.rhs(&x, &u, &mut want);
            let mut got = DVector::zeros(3);
            rom.rhs(&x, &u, &mut got);
            assert_relative_eq!((want - got).norm(), 0.0, epsilon = 1e-12);
        }

        // And the integrated trajectories coincide with the generated data.
        let data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
        let traj = &data.trajectories[2];
        let grid = SampleGrid::new(traj.times.clone(), 53).unwrap();
        let eye = DMatrix::identity(3, 3);
        let pair = ProjectionPair::new(eye.clone(), eye).unwrap();
        let c = system.output_matrix().clone();
        let sim = simulate_rom(&rom, &pair, &c, &traj.x0, &traj.input, &grid).unwrap();
        let err = (&sim.outputs - &traj.outputs).norm();
        assert!(err <= 1e-8, "identity Galerkin mismatch {err}");
    }

    #[test]
    fn oblique_projection_formulas() {
        let spec = BenchmarkSpec::Cgl { nx: 16, l: 18.0, dt: 0.05 };
        let system = spec.build().unwrap();
        let n = system.state_dim();
        let mut rng = SplitMix64::new(21);
        let raw = DMatrix::from_fn(n, 3, |_, _| rng.normal());
        let phi = raw.qr().q();
        let raw = DMatrix::from_fn(n, 3, |_, _| rng.normal());
        let psi = {
            // Keep the pairing well conditioned by biasing Ψ toward Φ.
            let mixed = 0.8 * &phi + 0.2 * raw;
            mixed.qr().q()
        };
        let pair = ProjectionPair::new(phi, psi.clone()).unwrap();
        let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();

        let d = pair.decode_matrix();
        let a_want = psi.transpose() * (system.linear_matrix() * d);
        assert_relative_eq!((&rom.a - &a_want).norm(), 0.0, epsilon = 1e-10);
        let b_want = psi.transpose() * system.input_matrix();
        assert_relative_eq!((&rom.b - &b_want).norm(), 0.0, epsilon = 1e-10);
        assert!(rom.h.is_none());

        // Cubic block evaluated against the trilinear form directly.
        let g = rom.g.as_ref().unwrap();
        let mut form = DVector::zeros(n);
        let d1 = d.column(0).into_owned();
        let d2 = d.column(2).into_owned();
        system.cubic_form(&d1, &d2, &d2, &mut form);
        let want = psi.transpose() * form;
        for i in 0..3 {
            assert_relative_eq!(g.get(i, 0, 2, 2), want[i], max_relative = 1e-10);
        }
    }

    fn toy_training() -> (Box<dyn FullOrderSystem>, Vec<Trajectory>) {
        let spec = BenchmarkSpec::toy_default();
        let system = spec.build().unwrap();
        let data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
        (system, data.trajectories)
    }

    #[test]
    fn full_rank_inference_recovers_toy_operators() {
        let (system, data) = toy_training();
        let basis = DMatrix::identity(3, 3);
        let opts = OpInfOptions { lambda: 0.0, quadratic: true, cubic: false };
        let result = operator_inference(&data, &basis, Some(system.as_ref()), &opts).unwrap();
        assert!(!result.rank_deficient);

        let a_want = system.linear_matrix();
        assert!((&result.rom.a - a_want).norm() <= 1e-8, "A mismatch");
        assert!((&result.rom.b - system.input_matrix()).norm() <= 1e-8, "B mismatch");

        let h = result.rom.h.as_ref().unwrap();
        let mut form = DVector::zeros(3);
        for j in 0..3 {
            for k in 0..3 {
                let ej = DVector::from_fn(3, |i, _| if i == j { 1.0 } else { 0.0 });
                let ek = DVector::from_fn(3, |i, _| if i == k { 1.0 } else { 0.0 });
                system.quadratic_form(&ej, &ek, &mut form);
                for i in 0..3 {
                    assert!((h.get(i, j, k) - form[i]).abs() <= 1e-8, "H[{i},{j},{k}]");
                }
            }
        }
    }

    #[test]
    fn tikhonov_satisfies_normal_equations() {
        let (system, data) = toy_training();
        let basis = DMatrix::identity(3, 3);
        let lambda = 1e-6;
        let opts = OpInfOptions { lambda, quadratic: true, cubic: false };
        let result = operator_inference(&data, &basis, Some(system.as_ref()), &opts).unwrap();
        let rom = &result.rom;

        // Rebuild the weighted regression and verify
        // R^T (R β − Y) + λ S β = 0 for the inferred coefficients.
        let pairs = monomials2(3);
        let q = 3 + pairs.len() + 1;
        let rows: usize = data.iter().map(|t| t.times.len()).sum();
        let mut reg = DMatrix::zeros(rows, q);
        let mut target = DMatrix::zeros(rows, 3);
        let mut at = 0;
        let mut u = DVector::zeros(1);
        let mut rhs = DVector::zeros(3);
        for traj in &data {
            let w = (1.0 / traj.alpha).sqrt();
            let states = traj.states.as_ref().unwrap();
            for i in 0..traj.times.len() {
                let z = states.column(i);
                for a in 0..3 {
                    reg[(at, a)] = w * z[a];
                }
                for (idx, &(a, b, _)) in pairs.iter().enumerate() {
                    reg[(at, 3 + idx)] = w * z[a] * z[b];
                }
                traj.input.eval(traj.times[i], &mut u);
                reg[(at, q - 1)] = w * u[0];
                system.rhs(&z.into_owned(), &u, &mut rhs);
                for c in 0..3 {
                    target[(at, c)] = w * rhs[c];
                }
                at += 1;
            }
        }
        // Coefficients in regression layout.
        let mut beta = DMatrix::zeros(q, 3);
        for c in 0..3 {
            for f in 0..3 {
                beta[(f, c)] = rom.a[(c, f)];
            }
            for (idx, &(a, b, mult)) in pairs.iter().enumerate() {
                beta[(3 + idx, c)] = mult * rom.h.as_ref().unwrap().get(c, a, b);
            }
            beta[(q - 1, c)] = rom.b[(c, 0)];
        }
        let resid = &reg * &beta - &target;
        let mut normal = reg.transpose() * resid;
        for (idx, &(_, _, mult)) in pairs.iter().enumerate() {
            for c in 0..3 {
                normal[(3 + idx, c)] += lambda / mult * beta[(3 + idx, c)];
            }
        }
        assert!(normal.norm() <= 1e-8, "normal-equation residual {}", normal.norm());
    }

    #[test]
    fn unforced_data_zeroes_input_map_and_flags_deficiency() {
        let spec = BenchmarkSpec::toy_default();
        let system = spec.build().unwrap();
        // Unforced trajectories: replace the step inputs with zero forcing
        // from nonzero initial states.
        let mut rng = SplitMix64::new(3);
        let mut data = Vec::new();
        for _ in 0..3 {
            let x0 = DVector::from_fn(3, |_, _| rng.uniform(-0.2, 0.2));
            let times: Vec<f64> = (0..20).map(|i| 0.25 * i as f64).collect();
            let grid = SampleGrid::new(times.clone(), 25).unwrap();
            let eye = DMatrix::identity(3, 3);
            let pair = ProjectionPair::new(eye.clone(), eye).unwrap();
            let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
            let sim = simulate_rom(
                &rom,
                &pair,
                system.output_matrix(),
                &x0,
                &InputSignal::Impulse { vector: vec![0.0] },
                &grid,
            )
            .unwrap();
            let mut states = DMatrix::zeros(3, times.len());
            for i in 0..times.len() {
                states.set_column(i, &sim.z_samples.column(i).into_owned());
            }
            data.push(Trajectory {
                times,
                x0,
                outputs: sim.outputs,
                states: Some(states),
                input: InputSignal::Impulse { vector: vec![0.0] },
                alpha: 1.0,
            });
        }
        let basis = DMatrix::identity(3, 3);
        let opts = OpInfOptions { lambda: 0.0, quadratic: true, cubic: false };
        let result = operator_inference(&data, &basis, Some(system.as_ref()), &opts).unwrap();
        assert!(result.rank_deficient);
        assert!(result.rom.b.norm() <= 1e-9, "B should be zeroed, got {}", result.rom.b.norm());
        assert!((&result.rom.a - system.linear_matrix()).norm() <= 1e-7);
    }

    #[test]
    fn finite_difference_fallback_approximates_operators() {
        let spec = BenchmarkSpec::toy_default();
        let system = spec.build().unwrap();
        // Densely sampled short trajectories so the three-point stencil is
        // accurate.
        let mut data = Vec::new();
        for &u0 in &[0.05, 0.15, 0.22] {
            let times: Vec<f64> = (0..400).map(|i| 0.005 * i as f64).collect();
            let grid = SampleGrid::new(times.clone(), 2).unwrap();
            let eye = DMatrix::identity(3, 3);
            let pair = ProjectionPair::new(eye.clone(), eye).unwrap();
            let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
            let input = InputSignal::Step { amplitude: vec![u0], start: 0.0 };
            let x0 = DVector::zeros(3);
            let sim = simulate_rom(&rom, &pair, system.output_matrix(), &x0, &input, &grid).unwrap();
            let mut states = DMatrix::zeros(3, times.len());
            for i in 0..times.len() {
                states.set_column(i, &sim.z_samples.column(i).into_owned());
            }
            data.push(Trajectory {
                times,
                x0,
                outputs: sim.outputs,
                states: Some(states),
                input,
                alpha: 1.0,
            });
        }
        let basis = DMatrix::identity(3, 3);
        let opts = OpInfOptions { lambda: 0.0, quadratic: true, cubic: false };
        let result = operator_inference(&data, &basis, None, &opts).unwrap();
        let rel = (&result.rom.a - system.linear_matrix()).norm() / system.linear_matrix().norm();
        assert!(rel <= 1e-3, "A relative error {rel}");
    }

    #[test]
    fn reduced_inference_is_optimal_in_its_class() {
        // With r < n the inferred model minimizes the weighted derivative
        // residual over all quadratic models in the reduced coordinates, so
        // it can be no worse there than the intrusively projected one.
        let (system, data) = toy_training();
        let stacked = snapshot_matrix(&data, true).unwrap();
        let pod = compute_pod(&stacked, 2).unwrap();
        let opts = OpInfOptions { lambda: 0.0, quadratic: true, cubic: false };
        let result = operator_inference(&data, &pod.modes, Some(system.as_ref()), &opts).unwrap();
        assert_eq!(result.rom.dim(), 2);
        assert_eq!(result.rom.input_dim(), 1);

        let pair = ProjectionPair::new(pod.modes.clone(), pod.modes.clone()).unwrap();
        let galerkin = petrov_galerkin_project(system.as_ref(), &pair).unwrap();

        let weighted_residual = |rom: &PolynomialRom| -> f64 {
            let mut u = DVector::zeros(1);
            let mut rhs = DVector::zeros(3);
            let mut total = 0.0;
            for traj in &data {
                let states = traj.states.as_ref().unwrap();
                for i in 0..traj.times.len() {
                    let x = states.column(i).into_owned();
                    let z = pod.modes.tr_mul(&x);
                    traj.input.eval(traj.times[i], &mut u);
                    system.rhs(&x, &u, &mut rhs);
                    let zdot = pod.modes.tr_mul(&rhs);
                    let mut pred = DVector::zeros(2);
                    rom.rhs(&z, &u, &mut pred);
                    total += (&zdot - &pred).norm_squared() / traj.alpha;
                }
            }
            total
        };
        let inferred = weighted_residual(&result.rom);
        let projected = weighted_residual(&galerkin);
        assert!(
            inferred <= projected * (1.0 + 1e-9),
            "inferred {inferred} vs projected {projected}"
        );
    }
}

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::prelude::{Reborrow, Solve};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::asymptotics::{d_bound, fit_rings};
use super::checks::neumann_residual;
use super::{Field, InitialGuess, Result, SolveOptions, SolveReport, SolverError, StageReport, TruncatedProblem};
use crate::gauge::FluxMap;
use crate::geometry::{BoundaryTag, Mesh};

const FREE_NONE: usize = usize::MAX;

/// Sparsity pattern of the free-free block (lower triangle), built once.
struct Pattern {
    free: Vec<usize>,
    nfree: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    llt: SymbolicLlt<usize>,
}

impl Pattern {
    fn new(mesh: &Mesh, dirichlet: &[(usize, f64)]) -> Result<Self> {
        let mut free = vec![0; mesh.vertices().len()];
        for (n, _) in dirichlet {
            free[*n] = FREE_NONE;
        }
        let mut nfree = 0;
        for f in free.iter_mut() {
            if *f != FREE_NONE {
                *f = nfree;
                nfree += 1;
            }
        }
        if nfree == 0 {
            return Err(SolverError::InvalidProblem("mesh has no free nodes".into()));
        }
        let mut pairs = Vec::with_capacity(mesh.triangles().len() * 6);
        for_each_free_pair(mesh, &free, |_, _, row, col| pairs.push(Pair { row, col }));
        let fail = |e: String| SolverError::Factorization { stage: 0, reason: e };
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(nfree, nfree, &pairs).map_err(|e| fail(format!("{e:?}")))?;
        let llt = SymbolicLlt::try_new(symbolic.rb(), Side::Lower).map_err(|e| fail(format!("{e:?}")))?;
        Ok(Self { free, nfree, symbolic, argsort, llt })
    }
}

/// Visits `(cell, (a, b), row, col)` for local node pairs with both nodes
/// free and `row ≥ col`, in a fixed order.
fn for_each_free_pair<F: FnMut(usize, (usize, usize), usize, usize)>(mesh: &Mesh, free: &[usize], mut f: F) {
    for (c, t) in mesh.triangles().iter().enumerate() {
        for a in 0..3 {
            let ia = free[t[a]];
            if ia == FREE_NONE {
                continue;
            }
            for b in 0..3 {
                let ib = free[t[b]];
                if ib != FREE_NONE && ia >= ib {
                    f(c, (a, b), ia, ib);
                }
            }
        }
    }
}

fn energy(mesh: &Mesh, flux: &FluxMap, u: &[f64]) -> f64 {
    (0..mesh.triangles().len()).map(|c| mesh.area(c) * flux.energy_density(&mesh.gradient(u, c))).sum()
}

struct Linearization {
    gradient: Vec<f64>,
    values: Vec<f64>,
}

fn linearize(mesh: &Mesh, flux: &FluxMap, pattern: &Pattern, u: &[f64]) -> Result<Linearization> {
    let ncells = mesh.triangles().len();
    let mut gradient = vec![0.0; pattern.nfree];
    let mut local = vec![[0.0f64; 9]; ncells];
    let mut jac = [0.0; 4];
    for (c, t) in mesh.triangles().iter().enumerate() {
        let g = mesh.gradient(u, c);
        let a = flux.apply2(g);
        flux.jacobian_into(&g, &mut jac);
        let (tr, det) = (jac[0] + jac[3], jac[0] * jac[3] - jac[1] * jac[2]);
        let root = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let (lower, upper) = (0.5 * (tr - root), 0.5 * (tr + root));
        // degenerate gauges (ℓ^q, q > 2) give semidefinite cells along their
        // flat directions; only a negative eigenvalue is an error
        if !(lower.is_finite() && upper.is_finite() && lower >= -1e-10 * upper.abs().max(f64::MIN_POSITIVE)) {
            let v = mesh.vertices();
            let x = (v[t[0]][0] + v[t[1]][0] + v[t[2]][0]) / 3.0;
            let y = (v[t[0]][1] + v[t[1]][1] + v[t[2]][1]) / 3.0;
            return Err(SolverError::IndefiniteHessian { cell: c, x, y, lower, eps: flux.regularization() });
        }
        let area = mesh.area(c);
        let grads = mesh.basis_gradients(c);
        for k in 0..3 {
            let i = pattern.free[t[k]];
            if i != FREE_NONE {
                gradient[i] += area * (a[0] * grads[k][0] + a[1] * grads[k][1]);
            }
            let jg = [jac[0] * grads[k][0] + jac[1] * grads[k][1], jac[2] * grads[k][0] + jac[3] * grads[k][1]];
            for l in 0..3 {
                local[c][3 * l + k] = area * (grads[l][0] * jg[0] + grads[l][1] * jg[1]);
            }
        }
    }
    let mut values = Vec::with_capacity(6 * ncells);
    for_each_free_pair(mesh, &pattern.free, |c, (a, b), _, _| values.push(local[c][3 * a + b]));
    Ok(Linearization { gradient, values })
}

fn initial_values(problem: &TruncatedProblem, opts: &SolveOptions, dirichlet: &[(usize, f64)]) -> Result<Vec<f64>> {
    let mesh = problem.mesh();
    let n = mesh.vertices().len();
    let data = problem.data();
    let mut u = match &opts.initial {
        InitialGuess::Values(v) => {
            if v.len() != n {
                return Err(SolverError::InvalidProblem(format!("initial guess has {} values for {n} vertices", v.len())));
            }
            v.clone()
        }
        InitialGuess::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let (lo, hi) = (data.gamma0.min(data.gamma_r), data.gamma0.max(data.gamma_r));
            (0..n).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect()
        }
        InitialGuess::LogProfile => {
            let rho0 = inner_scale(problem)?;
            let span = (problem.radius() / rho0).ln();
            let dual = problem.dual();
            mesh.vertices()
                .iter()
                .map(|x| {
                    let s = ((dual.eval(x)? / rho0).ln() / span).clamp(0.0, 1.0);
                    Ok(data.gamma0 + s * (data.gamma_r - data.gamma0))
                })
                .collect::<Result<_>>()?
        }
    };
    for (node, value) in dirichlet {
        u[*node] = *value;
    }
    Ok(u)
}

/// Mean `H₀` over `Γ₀` vertices.
fn inner_scale(problem: &TruncatedProblem) -> Result<f64> {
    let nodes = problem.mesh().nodes_with_tag(BoundaryTag::Gamma0);
    let mut sum = 0.0;
    for n in &nodes {
        sum += problem.dual().eval(&problem.mesh().vertices()[*n])?;
    }
    Ok(sum / nodes.len() as f64)
}

/// The decreasing `ε` schedule.
pub(super) fn schedule(problem: &TruncatedProblem, opts: &SolveOptions) -> Result<Vec<f64>> {
    if !(opts.eps_factor > 1.0 && opts.eps_floor > 0.0 && opts.eps_floor < 1.0) {
        return Err(SolverError::InvalidProblem("ε schedule needs factor > 1 and floor in (0, 1)".into()));
    }
    let eps0 = match opts.eps_initial {
        Some(e) if e.is_finite() && e > 0.0 => e,
        Some(e) => return Err(SolverError::InvalidProblem(format!("initial ε must be positive, got {e}"))),
        None => {
            let rho0 = inner_scale(problem)?;
            let jump = (problem.data().gamma_r - problem.data().gamma0).abs();
            if jump > 0.0 {
                jump / (rho0 * (problem.radius() / rho0).ln())
            } else {
                1.0 / rho0
            }
        }
    };
    let floor = eps0 * opts.eps_floor;
    let mut out = vec![eps0];
    while *out.last().expect("nonempty") > floor {
        out.push((out.last().expect("nonempty") / opts.eps_factor).max(floor));
    }
    Ok(out)
}

/// Minimizes the regularized energy along the `ε` schedule, warm-starting
/// each stage from the previous one.
pub fn solve_truncated(problem: &TruncatedProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let mesh = problem.mesh().clone();
    let dirichlet = problem.dirichlet_nodes();
    let pattern = Pattern::new(&mesh, &dirichlet)?;
    let mut u = initial_values(problem, opts, &dirichlet)?;
    let base = FluxMap::new(problem.gauge().clone(), problem.exponent())?;
    let eps_list = schedule(problem, opts)?;
    let mut stages = Vec::with_capacity(eps_list.len());
    let mut last_update = f64::INFINITY;
    let mut last_decrement = f64::INFINITY;
    let mut last_energy = f64::NAN;
    for (stage, eps) in eps_list.iter().copied().enumerate() {
        let flux = base.clone().with_regularization(eps)?;
        let mut e = energy(&mesh, &flux, &u);
        let mut iterations = 0;
        loop {
            let lin = linearize(&mesh, &flux, &pattern, &u)?;
            let fail = |reason: String| SolverError::Factorization { stage, reason };
            let hess = SparseColMat::new_from_argsort(pattern.symbolic.clone(), &pattern.argsort, &lin.values)
                .map_err(|e| fail(format!("{e:?}")))?;
            let llt = Llt::try_new_with_symbolic(pattern.llt.clone(), hess.rb(), Side::Lower)
                .map_err(|e| fail(format!("{e:?}")))?;
            let rhs = Mat::<f64>::from_fn(pattern.nfree, 1, |i, _| -lin.gradient[i]);
            let step = llt.solve(&rhs);
            let mut dec2 = 0.0;
            let mut max_step: f64 = 0.0;
            for i in 0..pattern.nfree {
                dec2 -= lin.gradient[i] * step[(i, 0)];
                max_step = max_step.max(step[(i, 0)].abs());
            }
            let dec2 = dec2.max(0.0);
            last_decrement = dec2.sqrt();
            if last_decrement <= opts.newton_tolerance && max_step <= opts.update_tolerance {
                last_update = max_step;
                break;
            }
            if iterations == opts.max_newton {
                return Err(SolverError::NewtonNotConverged {
                    stage,
                    eps,
                    iterations,
                    decrement: last_decrement,
                    max_update: max_step,
                });
            }
            iterations += 1;
            let apply = |t: f64| -> Vec<f64> {
                let mut v = u.clone();
                for (node, &i) in pattern.free.iter().enumerate() {
                    if i != FREE_NONE {
                        v[node] += t * step[(i, 0)];
                    }
                }
                v
            };
            // in the quadratic regime the energy change is below round-off;
            // the full step is taken without a test
            if 0.5 * dec2 <= 1e-13 * e.abs().max(1.0) {
                u = apply(1.0);
                e = energy(&mesh, &flux, &u);
                continue;
            }
            let mut t = 1.0;
            loop {
                let trial = apply(t);
                let et = energy(&mesh, &flux, &trial);
                if et <= e - opts.armijo * t * dec2 {
                    u = trial;
                    e = et;
                    break;
                }
                t *= 0.5;
                if t < 1e-10 {
                    return Err(SolverError::LineSearchStagnation {
                        stage,
                        eps,
                        iteration: iterations,
                        decrement: last_decrement,
                        energy: e,
                    });
                }
            }
        }
        stages.push(StageReport { eps, newton_iterations: iterations, energy: e, decrement: last_decrement, max_update: last_update });
        last_energy = e;
    }
    let field = Field::new(mesh, base, u)?;
    let ring_fit = fit_rings(&field, problem.dual(), problem.cone(), problem.radius(), opts)?;
    let d_bound = d_bound(&field, problem.dual(), problem.cone(), problem.radius(), opts)?;
    Ok(SolveReport {
        energy_unregularized: field.energy(),
        neumann_residual: neumann_residual(&field),
        field,
        radius: problem.radius(),
        signature: problem.signature().to_string(),
        data: problem.data(),
        energy: last_energy,
        stages,
        max_update: last_update,
        euler_lagrange_residual: last_decrement,
        ring_fit,
        d_bound,
    })
}

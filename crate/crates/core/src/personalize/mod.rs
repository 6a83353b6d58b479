//! Two-stage personalization of a template rig to one subject.
//!
//! The estimation stage solves for offsets `dS` with the FACS binaries as
//! fixed weights. The tuning stage then alternates between per-scan weight
//! fits and a correction on top of those offsets. Every loss term is a
//! Huber-smoothed L1 norm, so both stages split into independent problems
//! per vertex coordinate with `N` unknowns each.

mod block;
pub mod huber;
pub mod objective;
mod regularizer;

use rayon::prelude::*;

pub use block::{BlockProblem, BlockSolution};
pub use regularizer::{compute_regularizer_weights, RegularizerWeights};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::rig::{apply_offsets, BlendshapeRig, Displacement, FacsSpec, OffsetSet, WeightVector};
use crate::solver::solve_weights_robust;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub omega_reg: f64,
    pub omega_reg_ft: f64,
    /// Width of the quadratic zone of every smoothed L1 term, mesh units.
    pub huber_delta: f64,
    /// Iteration cap per vertex-coordinate block and per weight fit.
    pub max_iters: usize,
    /// Relative objective decrease below which a solve stops.
    pub tol: f64,
    pub alternation_rounds: usize,
    pub two_branch: bool,
    pub fixed_vertex_weight: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            omega_reg: 1.0,
            omega_reg_ft: 0.1,
            huber_delta: 1e-3,
            max_iters: 200,
            tol: 1e-6,
            alternation_rounds: 5,
            two_branch: false,
            fixed_vertex_weight: 4.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Precondition(what.to_string()));
        if !(self.omega_reg >= 0.0) {
            return bad("omega_reg must be >= 0");
        }
        if !(self.omega_reg_ft >= 0.0) {
            return bad("omega_reg_ft must be >= 0");
        }
        if !(self.huber_delta > 0.0) {
            return bad("huber_delta must be > 0");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if !(self.fixed_vertex_weight > 0.0) {
            return bad("fixed_vertex_weight must be > 0");
        }
        Ok(())
    }
}

/// A subject's neutral scan and FACS expression scans, all on the rig topology.
#[derive(Debug, Clone)]
pub struct SubjectScans {
    pub neutral: Mesh,
    pub expressions: Vec<Mesh>,
    pub facs: FacsSpec,
}

impl SubjectScans {
    pub fn new(neutral: Mesh, expressions: Vec<Mesh>, facs: FacsSpec) -> Result<Self> {
        if expressions.len() != facs.len() {
            return Err(Error::dim("FACS expressions", expressions.len(), facs.len()));
        }
        for (e, f) in expressions.iter().zip(facs.expressions()) {
            neutral.ensure_same_topology(e, &format!("scan '{}'", f.name))?;
        }
        Ok(SubjectScans {
            neutral,
            expressions,
            facs,
        })
    }

    pub fn len(&self) -> usize {
        self.expressions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expressions.is_empty()
    }

    /// Subset of the scans by index.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        Ok(SubjectScans {
            neutral: self.neutral.clone(),
            expressions: keep.iter().map(|&k| self.expressions[k].clone()).collect(),
            facs: self.facs.select(keep)?,
        })
    }

    fn check_against(&self, rig: &BlendshapeRig) -> Result<()> {
        rig.neutral().ensure_same_topology(&self.neutral, "subject neutral")?;
        let n = rig.shape_count();
        for e in self.facs.expressions() {
            if e.weights.len() != n {
                return Err(Error::dim(format!("FACS expression '{}'", e.name), n, e.weights.len()));
            }
            if !e.weights.is_binary() {
                return Err(Error::Precondition(format!(
                    "FACS expression '{}' has non-binary weights",
                    e.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub offsets: OffsetSet,
    /// Objective at the returned offsets.
    pub objective: f64,
    /// Objective at zero offsets.
    pub initial_objective: f64,
    /// Sum of the per-block objectives reached by the solver.
    pub block_objective: f64,
    /// Shapes no scan activates; their offsets are left at zero.
    pub underconstrained: Vec<usize>,
    pub max_block_iterations: usize,
    pub unconverged_blocks: usize,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    /// `initial + correction`.
    pub offsets: OffsetSet,
    pub correction: OffsetSet,
    pub weights: Vec<WeightVector>,
    /// Objective at the start and after every half-step.
    pub trace: Vec<f64>,
    pub rounds: usize,
}

struct BlockSet {
    deltas: Vec<[Vec<f64>; 3]>,
    objective: f64,
    max_iterations: usize,
    unconverged: usize,
}

/// Solves `min sum_k H(a_k . d - y_k) + sum_j lambda_j H(d_j)` for every
/// vertex coordinate. `a` is shared by all blocks; `y` and `lambda` are per
/// vertex. Results come back in vertex order.
fn solve_blocks<Y, L, S>(
    a: &[f64],
    rows: usize,
    cols: usize,
    vertices: usize,
    y_of: Y,
    lambda_of: L,
    start_of: S,
    cfg: &OptimConfig,
) -> BlockSet
where
    Y: Fn(usize, usize) -> Vec<f64> + Sync,
    L: Fn(usize) -> Vec<f64> + Sync,
    S: Fn(usize, usize) -> Vec<f64> + Sync,
{
    let solved: Vec<([Vec<f64>; 3], f64, usize, usize)> = (0..vertices)
        .into_par_iter()
        .map(|x| {
            let lambda = lambda_of(x);
            let mut out: [Vec<f64>; 3] = Default::default();
            let mut obj = 0.0;
            let mut iters = 0;
            let mut unconverged = 0;
            for (c, slot) in out.iter_mut().enumerate() {
                let y = y_of(x, c);
                let problem = BlockProblem {
                    a,
                    rows,
                    cols,
                    y: &y,
                    lambda: &lambda,
                    delta: cfg.huber_delta,
                };
                let s = problem.solve(&start_of(x, c), cfg.max_iters, cfg.tol);
                obj += s.objective;
                iters = iters.max(s.iterations);
                unconverged += usize::from(!s.converged);
                *slot = s.x;
            }
            (out, obj, iters, unconverged)
        })
        .collect();
    let mut set = BlockSet {
        deltas: Vec::with_capacity(vertices),
        objective: 0.0,
        max_iterations: 0,
        unconverged: 0,
    };
    for (d, obj, iters, unconverged) in solved {
        set.deltas.push(d);
        set.objective += obj;
        set.max_iterations = set.max_iterations.max(iters);
        set.unconverged += unconverged;
    }
    set
}

struct Branch {
    shapes: Vec<usize>,
    underconstrained: Vec<usize>,
    objective: f64,
    max_iterations: usize,
    unconverged: usize,
}

/// Estimation restricted to `shapes` and `scans`; offsets of the other
/// shapes stay at zero. Writes into `offsets`.
fn estimate_branch(
    template: &BlendshapeRig,
    scans: &SubjectScans,
    reg: &RegularizerWeights,
    shapes: &[usize],
    scan_ids: &[usize],
    cfg: &OptimConfig,
    offsets: &mut OffsetSet,
) -> Branch {
    let facs = scans.facs.expressions();
    let (active, underconstrained): (Vec<usize>, Vec<usize>) = shapes
        .iter()
        .partition(|&&i| scan_ids.iter().any(|&k| facs[k].weights.as_slice()[i] != 0.0));
    for &i in &underconstrained {
        log::warn!(
            "shape {i} ({}) is not activated by any scan; its offset stays zero",
            template.names()[i]
        );
    }
    if active.is_empty() || scan_ids.is_empty() {
        return Branch {
            shapes: shapes.to_vec(),
            underconstrained,
            objective: 0.0,
            max_iterations: 0,
            unconverged: 0,
        };
    }
    let rows = scan_ids.len();
    let cols = active.len();
    let a: Vec<f64> = scan_ids
        .iter()
        .flat_map(|&k| active.iter().map(move |&i| facs[k].weights.as_slice()[i]))
        .collect();
    let neutral = scans.neutral.vertices();
    let y_of = |x: usize, c: usize| -> Vec<f64> {
        scan_ids
            .iter()
            .map(|&k| {
                let mut p = neutral[x][c];
                for (i, w) in facs[k].weights.as_slice().iter().enumerate() {
                    if *w != 0.0 {
                        p += w * template.shape(i)[x][c];
                    }
                }
                scans.expressions[k].vertices()[x][c] - p
            })
            .collect()
    };
    let lambda_of =
        |x: usize| -> Vec<f64> { active.iter().map(|&i| cfg.omega_reg * reg.weight(i, x)).collect() };
    let set = solve_blocks(&a, rows, cols, neutral.len(), y_of, lambda_of, |_, _| vec![0.0; cols], cfg);
    for (x, d) in set.deltas.iter().enumerate() {
        for (j, &i) in active.iter().enumerate() {
            for c in 0..3 {
                offsets.deltas[i][x][c] = d[c][j];
            }
        }
    }
    Branch {
        shapes: shapes.to_vec(),
        underconstrained,
        objective: set.objective,
        max_iterations: set.max_iterations,
        unconverged: set.unconverged,
    }
}

/// Offsets minimizing the estimation objective with the FACS binaries held
/// fixed. With `cfg.two_branch` the extreme shapes and the remaining shapes
/// are fitted separately, each over the scans that activate it.
pub fn estimation_stage(
    template: &BlendshapeRig,
    scans: &SubjectScans,
    cfg: &OptimConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    scans.check_against(template)?;
    let reg = compute_regularizer_weights(template, cfg.fixed_vertex_weight)?;
    let n = template.shape_count();
    let mut offsets = OffsetSet::zeros(n, template.vertex_count());

    let all_scans: Vec<usize> = (0..scans.len()).collect();
    let branches: Vec<Vec<usize>> = if cfg.two_branch {
        let (extreme, rest): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|i| template.extreme_set().contains(i));
        vec![extreme, rest].into_iter().filter(|b| !b.is_empty()).collect()
    } else {
        vec![(0..n).collect()]
    };
    let mut results = Vec::new();
    for shapes in &branches {
        let scan_ids: Vec<usize> = if cfg.two_branch {
            all_scans
                .iter()
                .copied()
                .filter(|&k| {
                    let w = scans.facs.expressions()[k].weights.as_slice();
                    shapes.iter().any(|&i| w[i] != 0.0)
                })
                .collect()
        } else {
            all_scans.clone()
        };
        results.push(estimate_branch(template, scans, &reg, shapes, &scan_ids, cfg, &mut offsets));
    }

    let zero = OffsetSet::zeros(n, template.vertex_count());
    let mut underconstrained: Vec<usize> = results.iter().flat_map(|b| b.underconstrained.clone()).collect();
    underconstrained.sort_unstable();
    debug_assert!(results.iter().map(|b| b.shapes.len()).sum::<usize>() == n);
    Ok(EstimationResult {
        objective: objective::estimation_objective(template, scans, &offsets, &reg, cfg)?,
        initial_objective: objective::estimation_objective(template, scans, &zero, &reg, cfg)?,
        block_objective: results.iter().map(|b| b.objective).sum(),
        underconstrained,
        max_block_iterations: results.iter().map(|b| b.max_iterations).max().unwrap_or(0),
        unconverged_blocks: results.iter().map(|b| b.unconverged).sum(),
        offsets,
    })
}

fn add_offsets(a: &OffsetSet, b: &OffsetSet) -> OffsetSet {
    OffsetSet {
        deltas: a
            .deltas
            .iter()
            .zip(&b.deltas)
            .map(|(p, q)| {
                p.iter()
                    .zip(q)
                    .map(|(u, v)| [u[0] + v[0], u[1] + v[1], u[2] + v[2]])
                    .collect()
            })
            .collect(),
    }
}

/// Alternates per-scan weight fits with a correction to `initial`, starting
/// from the FACS binaries. The objective is checked after every half-step;
/// an increase beyond round-off aborts with the trace so far.
pub fn tuning_stage(
    template: &BlendshapeRig,
    initial: &OffsetSet,
    scans: &SubjectScans,
    cfg: &OptimConfig,
) -> Result<TuningResult> {
    cfg.validate()?;
    if cfg.alternation_rounds == 0 {
        return Err(Error::Precondition("alternation_rounds must be >= 1".into()));
    }
    scans.check_against(template)?;
    let n = template.shape_count();
    let v = template.vertex_count();
    let base = apply_offsets(template, initial)?;
    let mut correction = OffsetSet::zeros(n, v);
    let mut weights: Vec<Vec<f64>> = scans
        .facs
        .expressions()
        .iter()
        .map(|e| e.weights.as_slice().to_vec())
        .collect();
    let objective_at = |c: &OffsetSet, w: &[Vec<f64>]| {
        objective::tuning_objective(template, initial, c, w, scans, cfg)
    };
    let mut trace = vec![objective_at(&correction, &weights)?];
    let push = |trace: &mut Vec<f64>, value: f64| -> Result<()> {
        let prev = *trace.last().unwrap();
        trace.push(value);
        if value > prev + 1e-9 * prev.abs() + 1e-12 {
            return Err(Error::ConvergenceFailure { trace: trace.clone() });
        }
        Ok(())
    };

    let mut rounds = 0;
    for _ in 0..cfg.alternation_rounds {
        rounds += 1;
        let round_start = *trace.last().unwrap();

        // (a) weights with the shapes fixed
        let shapes: Vec<Displacement> = add_offsets(&OffsetSet { deltas: base.shapes().to_vec() }, &correction).deltas;
        let rig = BlendshapeRig::new_unchecked(
            scans.neutral.clone(),
            shapes,
            template.names().to_vec(),
            template.extreme_set().clone(),
        );
        let fits: Vec<Result<Vec<f64>>> = scans
            .expressions
            .par_iter()
            .zip(weights.par_iter())
            .map(|(scan, w)| {
                let init = WeightVector::clamped(w.clone());
                solve_weights_robust(&rig, scan, &init, cfg.huber_delta, cfg.max_iters, cfg.tol)
                    .map(|f| f.weights.into_vec())
            })
            .collect();
        weights = fits.into_iter().collect::<Result<_>>()?;
        push(&mut trace, objective_at(&correction, &weights)?)?;

        // (b) correction with the weights fixed
        let rows = weights.len();
        let a: Vec<f64> = weights.iter().flatten().copied().collect();
        let neutral = scans.neutral.vertices();
        let y_of = |x: usize, c: usize| -> Vec<f64> {
            weights
                .iter()
                .zip(&scans.expressions)
                .map(|(w, scan)| {
                    let mut p = neutral[x][c];
                    for (i, a) in w.iter().enumerate() {
                        if *a != 0.0 {
                            p += a * base.shape(i)[x][c];
                        }
                    }
                    scan.vertices()[x][c] - p
                })
                .collect()
        };
        let lambda = vec![cfg.omega_reg_ft; n];
        let set = solve_blocks(
            &a,
            rows,
            n,
            v,
            y_of,
            |_| lambda.clone(),
            |x, c| (0..n).map(|i| correction.deltas[i][x][c]).collect(),
            cfg,
        );
        for (x, d) in set.deltas.iter().enumerate() {
            for i in 0..n {
                for c in 0..3 {
                    correction.deltas[i][x][c] = d[c][i];
                }
            }
        }
        push(&mut trace, objective_at(&correction, &weights)?)?;

        let end = *trace.last().unwrap();
        if round_start - end <= cfg.tol * end.abs().max(1e-300) {
            break;
        }
    }

    Ok(TuningResult {
        offsets: add_offsets(initial, &correction),
        correction,
        weights: weights.into_iter().map(WeightVector::clamped).collect(),
        trace,
        rounds,
    })
}

#[derive(Debug, Clone)]
pub struct Personalization {
    pub rig: BlendshapeRig,
    pub estimation: EstimationResult,
    pub tuning: TuningResult,
}

/// Both stages followed by installing the subject neutral.
pub fn personalize(template: &BlendshapeRig, scans: &SubjectScans, cfg: &OptimConfig) -> Result<BlendshapeRig> {
    Ok(personalize_detailed(template, scans, cfg)?.rig)
}

pub fn personalize_detailed(
    template: &BlendshapeRig,
    scans: &SubjectScans,
    cfg: &OptimConfig,
) -> Result<Personalization> {
    let estimation = estimation_stage(template, scans, cfg)?;
    let tuning = tuning_stage(template, &estimation.offsets, scans, cfg)?;
    let rig = apply_offsets(template, &tuning.offsets)?.with_neutral(scans.neutral.clone())?;
    Ok(Personalization {
        rig,
        estimation,
        tuning,
    })
}

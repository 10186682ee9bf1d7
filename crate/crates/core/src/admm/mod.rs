//! Block-splitting ADMM for the arrow-shaped occupation-measure LPs.
//!
//! The LP is written as
//!
//! ```text
//! min Σ_i f_i(y_i) + Σ_j g_j(x_j)   s.t.  y_i = Σ_j A_ij x_j
//! ```
//!
//! with f_i the indicator of {b_i} and g_j(x) = c_jᵀx + I₊(x). Every present
//! block (i,j) keeps its own copy (x_ij, y_ij); copies are reconciled by
//! averaging over column j and by the exchange projection over row i.
//!
//! All variables start at zero, so the scaled duals stay orthogonal to the
//! consensus subspace: the dual of y_ij equals −ỹ_i and the dual parts drop
//! out of the averaging and exchange steps. After averaging x_ij = x_j, so
//! the copies are not stored separately.

mod ops;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::BlockLp;

pub use ops::{average, exchange, prox_cost_nonneg, GraphProjector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub max_iter: usize,
    /// Record a trace row every this many iterations (0 disables sampling;
    /// the final iteration is always recorded).
    pub trace_every: usize,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams { rho: 1000.0, eps_rel: 1e-4, eps_abs: 1e-5, max_iter: 50_000, trace_every: 50, threads: None }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        pos("rho", self.rho)?;
        pos("eps_rel", self.eps_rel)?;
        pos("eps_abs", self.eps_abs)?;
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Parameter("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub objective: f64,
    pub infeasibility: f64,
    pub primal_res: f64,
    pub dual_res: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// x^{k+1/2}, concatenated in block order.
    pub x: Vec<f64>,
    /// Max-form objective −Σ c_jᵀx_j.
    pub objective: f64,
    pub infeasibility: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

impl Residuals {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_pri && self.dual <= self.eps_dual
    }
}

/// Iterates of the block-splitting method. Block-indexed vectors
/// (`y_blk`, `x_blk_half`, ...) follow [`AdmmSolver::blocks`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub y_blk: Vec<Vec<f64>>,
    pub x_tilde: Vec<Vec<f64>>,
    pub y_tilde: Vec<Vec<f64>>,
    pub x_blk_tilde: Vec<Vec<f64>>,
    pub x_half: Vec<Vec<f64>>,
    pub y_half: Vec<Vec<f64>>,
    pub x_blk_half: Vec<Vec<f64>>,
    pub y_blk_half: Vec<Vec<f64>>,
}

struct BlockData {
    i: usize,
    j: usize,
    proj: GraphProjector,
}

pub struct AdmmSolver<'a> {
    lp: &'a BlockLp,
    params: AdmmParams,
    blocks: Vec<BlockData>,
    col_blocks: Vec<Vec<usize>>,
    row_blocks: Vec<Vec<usize>>,
    dim: usize,
    state: AdmmState,
    pool: Option<rayon::ThreadPool>,
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl<'a> AdmmSolver<'a> {
    /// Factors every block once and zero-initializes the iterates.
    pub fn new(lp: &'a BlockLp, params: AdmmParams) -> Result<Self> {
        params.validate()?;
        let pool = match params.threads {
            Some(t) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        let nb = lp.num_blocks();
        let keys: Vec<(usize, usize)> = lp.blocks.keys().copied().collect();
        let build = || -> Vec<BlockData> {
            keys.par_iter().map(|&(i, j)| BlockData { i, j, proj: GraphProjector::new(&lp.blocks[&(i, j)]) }).collect()
        };
        let blocks = match &pool {
            Some(p) => p.install(build),
            None => build(),
        };
        let mut col_blocks = vec![Vec::new(); nb];
        let mut row_blocks = vec![Vec::new(); nb];
        for (b, d) in blocks.iter().enumerate() {
            col_blocks[d.j].push(b);
            row_blocks[d.i].push(b);
        }
        let zeros_r = |i: usize| vec![0.0; lp.rows(i)];
        let zeros_c = |j: usize| vec![0.0; lp.cols(j)];
        let state = AdmmState {
            k: 0,
            x: (0..nb).map(zeros_c).collect(),
            y: (0..nb).map(zeros_r).collect(),
            y_blk: blocks.iter().map(|d| zeros_r(d.i)).collect(),
            x_tilde: (0..nb).map(zeros_c).collect(),
            y_tilde: (0..nb).map(zeros_r).collect(),
            x_blk_tilde: blocks.iter().map(|d| zeros_c(d.j)).collect(),
            x_half: (0..nb).map(zeros_c).collect(),
            y_half: (0..nb).map(zeros_r).collect(),
            x_blk_half: blocks.iter().map(|d| zeros_c(d.j)).collect(),
            y_blk_half: blocks.iter().map(|d| zeros_r(d.i)).collect(),
        };
        let dim = lp.total_rows() + lp.total_cols() + blocks.iter().map(|d| lp.rows(d.i) + lp.cols(d.j)).sum::<usize>();
        Ok(AdmmSolver { lp, params, blocks, col_blocks, row_blocks, dim, state, pool })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    /// Present blocks as (i, j), in the order used by block-indexed state.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|d| (d.i, d.j)).collect()
    }

    /// Length of the stacked variable z = (y_i, x_j, x_ij, y_ij).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Runs one full iteration and returns its residuals.
    pub fn step(&mut self) -> Residuals {
        match self.pool.take() {
            Some(pool) => {
                let r = pool.install(|| self.step_inner());
                self.pool = Some(pool);
                r
            }
            None => self.step_inner(),
        }
    }

    fn step_inner(&mut self) -> Residuals {
        let lp = self.lp;
        let rho = self.params.rho;
        let st = &mut self.state;

        // prox steps: y½ = b, x½ = max(0, x − x̃ − c/ρ)
        for (yh, b) in st.y_half.iter_mut().zip(&lp.b) {
            yh.copy_from_slice(b);
        }
        st.x_half.par_iter_mut().zip(st.x.par_iter()).zip(st.x_tilde.par_iter()).zip(lp.c.par_iter()).for_each(
            |(((xh, x), xt), c)| {
                let v: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
                ops::prox_cost_nonneg_into(&v, c, rho, xh);
            },
        );

        // graph projections of (x_j − x̃_ij, y_ij + ỹ_i)
        {
            let x = &st.x;
            let y_tilde = &st.y_tilde;
            let blocks = &self.blocks;
            st.x_blk_half
                .par_iter_mut()
                .zip(st.y_blk_half.par_iter_mut())
                .zip(st.x_blk_tilde.par_iter())
                .zip(st.y_blk.par_iter())
                .enumerate()
                .for_each(|(b, (((xo, yo), xt), yb))| {
                    let d = &blocks[b];
                    let xin: Vec<f64> = x[d.j].iter().zip(xt).map(|(a, t)| a - t).collect();
                    let yin: Vec<f64> = yb.iter().zip(&y_tilde[d.i]).map(|(a, t)| a + t).collect();
                    d.proj.project_into(&xin, &yin, xo, yo);
                });
        }

        // averaging over column j
        let x_new: Vec<Vec<f64>> = (0..lp.num_blocks())
            .into_par_iter()
            .map(|j| {
                let mut acc = st.x_half[j].clone();
                for &b in &self.col_blocks[j] {
                    for (a, v) in acc.iter_mut().zip(&st.x_blk_half[b]) {
                        *a += v;
                    }
                }
                let denom = (self.col_blocks[j].len() + 1) as f64;
                acc.iter_mut().for_each(|a| *a /= denom);
                acc
            })
            .collect();

        // exchange over row i
        let lambdas: Vec<Vec<f64>> = (0..lp.num_blocks())
            .into_par_iter()
            .map(|i| {
                ops::exchange_multiplier(&st.y_half[i], self.row_blocks[i].iter().map(|&b| st.y_blk_half[b].as_slice()))
            })
            .collect();
        let y_new: Vec<Vec<f64>> =
            st.y_half.iter().zip(&lambdas).map(|(yh, l)| yh.iter().zip(l).map(|(a, b)| a + b).collect()).collect();
        let y_blk_new: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(&st.y_blk_half)
            .map(|(d, yh)| yh.iter().zip(&lambdas[d.i]).map(|(a, b)| a - b).collect())
            .collect();

        // residual pieces, summed in a fixed order
        let mut primal = 0.0;
        let mut dual = 0.0;
        let mut half_norm = 0.0;
        let mut new_norm = 0.0;
        for i in 0..lp.num_blocks() {
            primal += sq_diff(&st.y_half[i], &y_new[i]);
            dual += sq_diff(&y_new[i], &st.y[i]);
            half_norm += sq(&st.y_half[i]);
            new_norm += sq(&y_new[i]);
        }
        for j in 0..lp.num_blocks() {
            let copies = (self.col_blocks[j].len() + 1) as f64;
            primal += sq_diff(&st.x_half[j], &x_new[j]);
            dual += copies * sq_diff(&x_new[j], &st.x[j]);
            half_norm += sq(&st.x_half[j]);
            new_norm += copies * sq(&x_new[j]);
        }
        for (b, d) in self.blocks.iter().enumerate() {
            primal += sq_diff(&st.x_blk_half[b], &x_new[d.j]) + sq_diff(&st.y_blk_half[b], &y_blk_new[b]);
            dual += sq_diff(&y_blk_new[b], &st.y_blk[b]);
            half_norm += sq(&st.x_blk_half[b]) + sq(&st.y_blk_half[b]);
            new_norm += sq(&y_blk_new[b]);
        }

        // dual updates
        for j in 0..lp.num_blocks() {
            for ((t, h), n) in st.x_tilde[j].iter_mut().zip(&st.x_half[j]).zip(&x_new[j]) {
                *t += h - n;
            }
        }
        for i in 0..lp.num_blocks() {
            for ((t, h), n) in st.y_tilde[i].iter_mut().zip(&st.y_half[i]).zip(&y_new[i]) {
                *t += h - n;
            }
        }
        for (b, d) in self.blocks.iter().enumerate() {
            for ((t, h), n) in st.x_blk_tilde[b].iter_mut().zip(&st.x_blk_half[b]).zip(&x_new[d.j]) {
                *t += h - n;
            }
        }
        let mut tilde_norm = 0.0;
        for i in 0..lp.num_blocks() {
            tilde_norm += (self.row_blocks[i].len() + 1) as f64 * sq(&st.y_tilde[i]);
        }
        for j in 0..lp.num_blocks() {
            tilde_norm += sq(&st.x_tilde[j]);
        }
        for t in &st.x_blk_tilde {
            tilde_norm += sq(t);
        }

        st.x = x_new;
        st.y = y_new;
        st.y_blk = y_blk_new;
        st.k += 1;

        let root_dim = (self.dim as f64).sqrt();
        Residuals {
            primal: primal.sqrt(),
            dual: rho * dual.sqrt(),
            eps_pri: root_dim * self.params.eps_abs + self.params.eps_rel * half_norm.sqrt().max(new_norm.sqrt()),
            eps_dual: root_dim * self.params.eps_abs + self.params.eps_rel * rho * tilde_norm.sqrt(),
        }
    }

    /// x^{k+1/2} of the last iteration, concatenated in block order.
    pub fn solution(&self) -> Vec<f64> {
        self.state.x_half.concat()
    }

    /// Iterates until the residual test passes or `max_iter` is reached.
    pub fn run(&mut self) -> SolveReport {
        let mut trace = Vec::new();
        let mut converged = false;
        let mut last = None;
        while self.state.k < self.params.max_iter {
            let r = self.step();
            converged = r.converged();
            let k = self.state.k;
            if converged
                || k == self.params.max_iter
                || (self.params.trace_every > 0 && k.is_multiple_of(self.params.trace_every))
            {
                trace.push(self.trace_row(&r));
            }
            last = Some(r);
            if converged {
                break;
            }
        }
        debug_assert!(last.is_some());
        let x = self.solution();
        SolveReport {
            objective: self.lp.objective(&x),
            infeasibility: self.lp.infeasibility(&x),
            iterations: self.state.k,
            converged,
            trace,
            x,
        }
    }

    fn trace_row(&self, r: &Residuals) -> TraceRow {
        let x = self.solution();
        TraceRow {
            k: self.state.k,
            objective: self.lp.objective(&x),
            infeasibility: self.lp.infeasibility(&x),
            primal_res: r.primal,
            dual_res: r.dual,
        }
    }
}

/// Solves `lp` from zero initial iterates. Non-convergence is reported
/// through `converged = false`, not as an error.
pub fn solve(lp: &BlockLp, params: &AdmmParams) -> Result<SolveReport> {
    Ok(AdmmSolver::new(lp, params.clone())?.run())
}

pub const TRACE_HEADER: &str = "k,objective,infeasibility,primal_res,dual_res";

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        let _ = writeln!(out, "{},{:?},{:?},{:?},{:?}", t.k, t.objective, t.infeasibility, t.primal_res, t.dual_res);
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format("trace CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad trace value `{s}`")));
            if f.len() != 5 {
                return Err(Error::Format(format!("trace row `{l}` has {} fields", f.len())));
            }
            Ok(TraceRow {
                k: f[0].parse().map_err(|_| Error::Format(format!("bad iteration `{}`", f[0])))?,
                objective: num(f[1])?,
                infeasibility: num(f[2])?,
                primal_res: num(f[3])?,
                dual_res: num(f[4])?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub x: std::collections::BTreeMap<String, f64>,
    pub objective: f64,
    pub infeasibility: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolutionFile {
    pub fn new(lp: &BlockLp, report: &SolveReport) -> Self {
        SolutionFile {
            x: lp.column_keys().into_iter().zip(report.x.iter().copied()).collect(),
            objective: report.objective,
            infeasibility: report.infeasibility,
            iterations: report.iterations,
            converged: report.converged,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

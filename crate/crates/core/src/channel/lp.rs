//! Dense two-phase tableau simplex with Bland's rule. Intended for the
//! small programs produced by the deficiency computation.

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coefficients: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

/// `minimize c·x  subject to  constraints,  x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coefficients: Vec<T>, relation: Relation, rhs: T) {
        debug_assert_eq!(coefficients.len(), self.objective.len());
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn solve(&self, max_iterations: usize) -> Result<LpSolution<T>> {
        Tableau::build(self).run(&self.objective, max_iterations)
    }

    /// Starts from the basis that makes column `start[i]` basic in
    /// constraint `i`, skipping phase one. Falls back to [`Self::solve`] when
    /// that basis is singular or infeasible.
    pub fn solve_from(&self, start: &[usize], max_iterations: usize) -> Result<LpSolution<T>> {
        let mut t = Tableau::build(self);
        if start.len() == self.constraints.len() && t.crash(start) {
            let mut budget = max_iterations;
            t.phase_two(&self.objective, &mut budget, 0)
        } else {
            self.solve(max_iterations)
        }
    }
}

struct Tableau<T> {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`, last column is the right-hand side.
    a: Vec<T>,
    basis: Vec<usize>,
    n_original: usize,
    first_artificial: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        // flip rows so every rhs is non-negative
        let rows: Vec<(Vec<T>, Relation, T)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < T::zero() {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coefficients.iter().map(|&v| -v).collect(), flipped, -c.rhs)
                } else {
                    (c.coefficients.clone(), c.relation, c.rhs)
                }
            })
            .collect();

        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let cols = n + n_slack + n_art;
        let width = cols + 1;
        let mut a = vec![T::zero(); m * width];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, n + n_slack);
        for (i, (coef, rel, rhs)) in rows.iter().enumerate() {
            let row = &mut a[i * width..(i + 1) * width];
            row[..n].copy_from_slice(coef);
            row[cols] = *rhs;
            match rel {
                Relation::Le => {
                    row[slack] = T::one();
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -T::one();
                    slack += 1;
                    row[art] = T::one();
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = T::one();
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            rows: m,
            cols,
            a,
            basis,
            n_original: n,
            first_artificial: n + n_slack,
        }
    }

    fn at(&self, i: usize, j: usize) -> T {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> T {
        self.at(i, self.cols)
    }

    /// Reduced costs `c_j − c_B B⁻¹ A_j` and the current objective value.
    fn reduced_costs(&self, cost: &[T]) -> (Vec<T>, T) {
        let mut red = cost.to_vec();
        let mut value = T::zero();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb == T::zero() {
                continue;
            }
            for (j, r) in red.iter_mut().enumerate() {
                *r -= cb * self.at(i, j);
            }
            value += cb * self.rhs(i);
        }
        (red, value)
    }

    fn pivot(&mut self, pr: usize, pc: usize, red: &mut [T], value: &mut T) {
        let width = self.cols + 1;
        let p = self.at(pr, pc);
        for v in &mut self.a[pr * width..(pr + 1) * width] {
            *v /= p;
        }
        let pivot_row: Vec<T> = self.a[pr * width..(pr + 1) * width].to_vec();
        for i in (0..self.rows).filter(|&i| i != pr) {
            let f = self.at(i, pc);
            if f == T::zero() {
                continue;
            }
            let row = &mut self.a[i * width..(i + 1) * width];
            for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            row[pc] = T::zero();
        }
        let f = red[pc];
        if f != T::zero() {
            for (r, &pv) in red.iter_mut().zip(&pivot_row[..self.cols]) {
                *r -= f * pv;
            }
            red[pc] = T::zero();
            *value += f * pivot_row[self.cols];
        }
        self.basis[pr] = pc;
        self.clamp_rhs();
    }

    /// Bland's rule iterations over the columns `< allowed`.
    fn optimize(&mut self, red: &mut [T], value: &mut T, allowed: usize, budget: &mut usize) -> Result<usize> {
        let eps = T::solver_eps();
        // tiny pivots blow up the tableau, so they never qualify
        let pivot_tol = eps * T::lit(100.0);
        let mut iterations = 0;
        loop {
            let Some(pc) = (0..allowed).find(|&j| red[j] < -eps) else {
                return Ok(iterations);
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > pivot_tol {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - eps || ((ratio - br).abs() <= eps && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Err(Error::Solver("objective is unbounded".into()));
            };
            if *budget == 0 {
                return Err(Error::Solver("iteration cap reached".into()));
            }
            *budget -= 1;
            iterations += 1;
            self.pivot(pr, pc, red, value);
        }
    }

    /// Rounding can leave basic values at −1e-17; they are zero.
    fn clamp_rhs(&mut self) {
        let width = self.cols + 1;
        for i in 0..self.rows {
            let v = &mut self.a[i * width + self.cols];
            if *v < T::zero() && *v > -T::solver_eps() {
                *v = T::zero();
            }
        }
    }

    fn crash(&mut self, start: &[usize]) -> bool {
        let mut red = vec![T::zero(); self.cols];
        let mut value = T::zero();
        for (i, &j) in start.iter().enumerate() {
            if j >= self.first_artificial || self.at(i, j).abs() <= T::solver_eps() * T::lit(100.0) {
                return false;
            }
            self.pivot(i, j, &mut red, &mut value);
        }
        (0..self.rows).all(|i| self.rhs(i) >= T::zero() && self.basis[i] < self.first_artificial)
    }

    fn run(mut self, objective: &[T], max_iterations: usize) -> Result<LpSolution<T>> {
        let mut budget = max_iterations;
        let mut iterations = 0;

        if self.first_artificial < self.cols {
            let mut phase1 = vec![T::zero(); self.cols];
            phase1[self.first_artificial..].fill(T::one());
            let (mut red, mut value) = self.reduced_costs(&phase1);
            iterations += self.optimize(&mut red, &mut value, self.cols, &mut budget)?;
            let scale = (0..self.rows).map(|i| self.rhs(i).abs()).fold(T::one(), T::max);
            if value > T::solver_eps().sqrt() * scale {
                return Err(Error::Solver("infeasible".into()));
            }
            // drive zero-valued artificials out of the basis
            for i in 0..self.rows {
                if self.basis[i] >= self.first_artificial {
                    if let Some(j) = (0..self.first_artificial).find(|&j| self.at(i, j).abs() > T::solver_eps()) {
                        self.pivot(i, j, &mut red, &mut value);
                    }
                }
            }
        }

        self.phase_two(objective, &mut budget, iterations)
    }

    fn phase_two(mut self, objective: &[T], budget: &mut usize, mut iterations: usize) -> Result<LpSolution<T>> {
        let mut cost = vec![T::zero(); self.cols];
        cost[..self.n_original].copy_from_slice(objective);
        let (mut red, mut value) = self.reduced_costs(&cost);
        iterations += self.optimize(&mut red, &mut value, self.first_artificial, budget)?;

        let mut x = vec![T::zero(); self.n_original];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_original {
                x[b] = self.rhs(i);
            }
        }
        let objective_value = x.iter().zip(objective).map(|(&xi, &ci)| xi * ci).sum();
        Ok(LpSolution {
            x,
            objective: objective_value,
            iterations,
        })
    }
}

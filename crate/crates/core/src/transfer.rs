//! Subgroup-to-subgroup charge transfer reconstruction.
//!
//! Subgroups losing charge (hole > particle) are donors, the rest acceptors.
//! Assuming acceptors transfer nothing and donors transfer only to acceptors,
//! the unknown donor→acceptor matrix `t` must reproduce the donor deficits as
//! row sums and the acceptor surpluses as column sums, with `t >= 0`. Two
//! reconstructions are provided:
//!
//! * the closed-form proportional split `t_ij = deficit_i * surplus_j / total`,
//! * the quadratic solution: the feasible `t` closest to a preference vector
//!   `t_p` in least squares, found by a primal active-set iteration on the
//!   non-negativity bounds with exact equality-constrained subproblems.
//!
//! The full M×M matrix carries the retained (local-excitation) charge on the
//! diagonal: the hole charge for acceptors and the particle charge for donors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Donor deficits and surpluses must balance to this relative scale.
const BALANCE_TOL: f64 = 1e-9;
/// KKT residual bound certifying a quadratic solution.
const KKT_TOL: f64 = 1e-10;

/// Subgroups split into donors (hole > particle, strictly) and acceptors
/// (everything else, including exact equality). Positions in `donors` /
/// `acceptors` index the rows / columns of the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DonorAcceptorPartition {
    /// Hole charge per subgroup, as given.
    pub hole: Vec<f64>,
    /// Particle charge per subgroup, as given.
    pub particle: Vec<f64>,
    /// Donor position -> subgroup index.
    pub donors: Vec<usize>,
    /// Acceptor position -> subgroup index.
    pub acceptors: Vec<usize>,
    /// Charge lost per donor (positive).
    pub deficits: Vec<f64>,
    /// Charge gained per acceptor (non-negative).
    pub surpluses: Vec<f64>,
}

impl DonorAcceptorPartition {
    pub fn subgroup_count(&self) -> usize {
        self.hole.len()
    }

    pub fn donor_count(&self) -> usize {
        self.donors.len()
    }

    pub fn acceptor_count(&self) -> usize {
        self.acceptors.len()
    }

    /// Total transferred charge: the summed donor deficits.
    pub fn total_transfer(&self) -> f64 {
        self.deficits.iter().sum()
    }

    /// |sum of deficits - sum of surpluses|.
    pub fn balance_residual(&self) -> f64 {
        let surplus: f64 = self.surpluses.iter().sum();
        (self.total_transfer() - surplus).abs()
    }

    fn check_balanced(&self) -> Result<()> {
        let total = self.total_transfer();
        if self.balance_residual() > BALANCE_TOL * total.max(1.0) {
            return Err(Error::TransferUnbalanced {
                deficit: total,
                surplus: self.surpluses.iter().sum(),
            });
        }
        Ok(())
    }
}

/// Classify subgroups by comparing hole and particle charges. A subgroup
/// with equal charges (including both zero) counts as an acceptor with zero
/// surplus.
pub fn partition_donors_acceptors(hole: &[f64], particle: &[f64]) -> DonorAcceptorPartition {
    assert_eq!(hole.len(), particle.len(), "charge arrays differ in length");
    let mut donors = Vec::new();
    let mut acceptors = Vec::new();
    let mut deficits = Vec::new();
    let mut surpluses = Vec::new();
    for (j, (&h, &p)) in hole.iter().zip(particle).enumerate() {
        if h > p {
            donors.push(j);
            deficits.push(h - p);
        } else {
            acceptors.push(j);
            surpluses.push(p - h);
        }
    }
    DonorAcceptorPartition {
        hole: hole.to_vec(),
        particle: particle.to_vec(),
        donors,
        acceptors,
        deficits,
        surpluses,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransferMethod {
    Proportional,
    Quadratic { preference: Vec<f64> },
}

/// Largest violations of the full-matrix row (hole) and column (particle)
/// marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub row: f64,
    pub col: f64,
}

/// A reconstructed transfer: the donor→acceptor matrix, the assembled full
/// matrix and the marginal residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferResult {
    pub partition: DonorAcceptorPartition,
    /// Donor→acceptor transfers, row-major n×m. Empty when nothing moves.
    pub transfer: Vec<f64>,
    /// Full M×M matrix, row-major.
    pub full_matrix: Vec<f64>,
    pub method: TransferMethod,
    pub residuals: Residuals,
    /// True when there are no donors: the excitation is purely local.
    pub pure_local_excitation: bool,
}

impl TransferResult {
    pub fn transfer_entry(&self, donor_pos: usize, acceptor_pos: usize) -> f64 {
        self.transfer[donor_pos * self.partition.acceptor_count() + acceptor_pos]
    }

    pub fn full_entry(&self, from: usize, to: usize) -> f64 {
        self.full_matrix[from * self.partition.subgroup_count() + to]
    }

    /// Sum of the diagonal: charge that stayed on its subgroup.
    pub fn local_excitation(&self) -> f64 {
        let m = self.partition.subgroup_count();
        (0..m).map(|j| self.full_matrix[j * m + j]).sum()
    }
}

/// Closed-form proportional reconstruction:
/// `t_ij = deficit_i * surplus_j / total`.
///
/// With no donors the transfer is empty and the result is flagged as a pure
/// local excitation rather than an error.
pub fn solve_proportional(p: &DonorAcceptorPartition) -> Result<TransferResult> {
    p.check_balanced()?;
    if p.donors.is_empty() {
        return local_excitation_result(p, TransferMethod::Proportional);
    }
    let total = p.total_transfer();
    let m = p.acceptor_count();
    let mut t = vec![0.0; p.donor_count() * m];
    for (i, &deficit) in p.deficits.iter().enumerate() {
        for (j, &surplus) in p.surpluses.iter().enumerate() {
            t[i * m + j] = deficit * surplus / total;
        }
    }
    finish(p, t, TransferMethod::Proportional, false)
}

/// Row-sum and column-sum indicator constraints `B t = b` over the row-major
/// transfer vector. The `n` row constraints come first, then the first
/// `m - 1` column constraints; the last column constraint is linearly
/// dependent and dropped.
pub fn build_qp(p: &DonorAcceptorPartition) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, m) = (p.donor_count(), p.acceptor_count());
    if n == 0 || m == 0 {
        return Err(Error::EmptyBipartition);
    }
    let rows = n + m - 1;
    let mut b_mat = DMatrix::zeros(rows, n * m);
    for i in 0..n {
        for j in 0..m {
            b_mat[(i, i * m + j)] = 1.0;
        }
    }
    for c in 0..m - 1 {
        for i in 0..n {
            b_mat[(n + c, i * m + c)] = 1.0;
        }
    }
    let mut b_vec = DVector::zeros(rows);
    for (i, &d) in p.deficits.iter().enumerate() {
        b_vec[i] = d;
    }
    for c in 0..m - 1 {
        b_vec[n + c] = p.surpluses[c];
    }
    Ok((b_mat, b_vec))
}

/// Minimize `||t - t_p||^2` over `B t = b, t >= 0` for the given preference
/// vector (default: uniform `total / (n*m)`).
///
/// Primal active-set iteration starting from the proportional solution,
/// which is always feasible. Equality-constrained subproblems are solved
/// exactly as projections onto the free-variable constraint set; the result
/// is accepted only when the KKT residuals drop below 1e-10, and exceeding
/// the iteration cap is reported as an error, never as a silently infeasible
/// answer.
pub fn solve_quadratic(
    p: &DonorAcceptorPartition,
    preference: Option<&[f64]>,
) -> Result<TransferResult> {
    p.check_balanced()?;
    if p.donors.is_empty() {
        let method = TransferMethod::Quadratic {
            preference: preference.map(|t| t.to_vec()).unwrap_or_default(),
        };
        return local_excitation_result(p, method);
    }
    let (n, m) = (p.donor_count(), p.acceptor_count());
    let size = n * m;
    let total = p.total_transfer();
    let t_p: DVector<f64> = match preference {
        Some(values) => {
            if values.len() != size {
                return Err(Error::PreferenceLength {
                    expected: size,
                    found: values.len(),
                });
            }
            DVector::from_column_slice(values)
        }
        None => DVector::from_element(size, total / size as f64),
    };

    let t = quadratic_transfer(p, &t_p)?;
    finish(
        p,
        t,
        TransferMethod::Quadratic {
            preference: t_p.as_slice().to_vec(),
        },
        false,
    )
}

/// Quadratic transfer for the given partition and full-size preference.
///
/// Acceptors with zero surplus are eliminated first: their columns are
/// forced to zero by the equality constraints, and carrying them through the
/// active-set iteration only creates degenerate working sets.
fn quadratic_transfer(p: &DonorAcceptorPartition, t_p: &DVector<f64>) -> Result<Vec<f64>> {
    let (n, m) = (p.donor_count(), p.acceptor_count());
    let keep: Vec<usize> = (0..m).filter(|&j| p.surpluses[j] > 0.0).collect();
    if keep.len() < m {
        let reduced = DonorAcceptorPartition {
            hole: p.hole.clone(),
            particle: p.particle.clone(),
            donors: p.donors.clone(),
            acceptors: keep.iter().map(|&j| p.acceptors[j]).collect(),
            deficits: p.deficits.clone(),
            surpluses: keep.iter().map(|&j| p.surpluses[j]).collect(),
        };
        let reduced_tp = DVector::from_fn(n * keep.len(), |idx, _| {
            let (i, c) = (idx / keep.len(), idx % keep.len());
            t_p[i * m + keep[c]]
        });
        let reduced_t = quadratic_transfer(&reduced, &reduced_tp)?;
        let mut t = vec![0.0; n * m];
        for i in 0..n {
            for (c, &j) in keep.iter().enumerate() {
                t[i * m + j] = reduced_t[i * keep.len() + c];
            }
        }
        return Ok(t);
    }

    let (b_mat, b_vec) = build_qp(p)?;
    let start = solve_proportional(p)?.transfer;
    let t = active_set_min(&b_mat, &b_vec, t_p, DVector::from_column_slice(&start))?;
    Ok(t.as_slice().to_vec())
}

/// Minimizer of `||t - t_p||^2` subject to `B t = b` and `t_i = 0` for every
/// active index, plus the equality multipliers. The objective gradient is
/// `2(t - t_p)`, so `t` is the projection of `t_p` onto the constraint set:
/// `t = t_p + B_F' mu` with `(B_F B_F') mu = b - B_F t_p` on the free
/// columns.
fn project_onto_working_set(
    b_mat: &DMatrix<f64>,
    b_vec: &DVector<f64>,
    t_p: &DVector<f64>,
    active: &[bool],
) -> (DVector<f64>, DVector<f64>) {
    let free: Vec<usize> = (0..active.len()).filter(|&i| !active[i]).collect();
    let rows = b_mat.nrows();
    let a = DMatrix::from_fn(rows, free.len(), |r, c| b_mat[(r, free[c])]);
    let tp_free = DVector::from_fn(free.len(), |i, _| t_p[free[i]]);

    let gram = &a * a.transpose();
    let rhs = b_vec - &a * &tp_free;
    let mu = solve_psd_min_norm(&gram, &rhs);
    let t_free = tp_free + a.transpose() * &mu;

    let mut t = DVector::zeros(active.len());
    for (c, &i) in free.iter().enumerate() {
        t[i] = t_free[c];
    }
    (t, 2.0 * mu)
}

/// Minimum-norm solution of a symmetric positive-semidefinite system.
/// The symmetric eigendecomposition is used rather than the general SVD:
/// nalgebra's SVD loses accuracy on the clustered singular values these
/// binary constraint Grams produce.
fn solve_psd_min_norm(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = gram.clone().symmetric_eigen();
    let cutoff = eig.eigenvalues.amax().max(1.0) * 1e-12;
    let mut coef = eig.eigenvectors.transpose() * rhs;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        coef[i] = if l > cutoff { coef[i] / l } else { 0.0 };
    }
    &eig.eigenvectors * coef
}

fn active_set_min(
    b_mat: &DMatrix<f64>,
    b_vec: &DVector<f64>,
    t_p: &DVector<f64>,
    mut t: DVector<f64>,
) -> Result<DVector<f64>> {
    let size = t.len();
    let cap = 10 * size;
    let mut active: Vec<bool> = t.iter().map(|&v| v == 0.0).collect();
    let mut visited: std::collections::HashSet<Vec<bool>> = std::collections::HashSet::new();

    for _ in 0..cap {
        let fresh = visited.insert(active.clone());

        let (t_star, lambda) = project_onto_working_set(b_mat, b_vec, t_p, &active);
        let step = &t_star - &t;
        let moved = step.amax();

        if moved > 1e-13 {
            // Longest feasible step toward the subproblem minimizer.
            let mut alpha = 1.0;
            let mut blocker = None;
            for i in 0..size {
                if !active[i] && step[i] < -1e-15 {
                    let limit = t[i] / (-step[i]);
                    if limit < alpha {
                        alpha = limit;
                        blocker = Some(i);
                    }
                }
            }
            t += alpha * &step;
            for v in t.iter_mut() {
                if v.abs() < 1e-14 {
                    *v = 0.0;
                }
            }
            if let Some(i) = blocker {
                t[i] = 0.0;
                active[i] = true;
            }
            continue;
        }

        // Working-set minimizer reached: examine bound multipliers
        // mu_i = grad_i - (B' lambda)_i on the active set.
        let grad_minus_bt = 2.0 * (&t - t_p) - b_mat.transpose() * &lambda;
        let mut release = None;
        let mut most_negative = -KKT_TOL;
        for i in 0..size {
            if active[i] && grad_minus_bt[i] < most_negative {
                most_negative = grad_minus_bt[i];
                release = Some(i);
            }
        }
        match release {
            None => {
                verify_kkt(b_mat, b_vec, t_p, &t, &lambda, &active)?;
                return Ok(t);
            }
            Some(i) if fresh => {
                active[i] = false;
            }
            Some(_) => break, // revisiting a working set without progress
        }
    }

    let primal = b_mat * &t - b_vec;
    Err(Error::SolverStalled {
        iterations: cap,
        row_residual: primal.amax(),
        col_residual: primal.amax(),
    })
}

fn verify_kkt(
    b_mat: &DMatrix<f64>,
    b_vec: &DVector<f64>,
    t_p: &DVector<f64>,
    t: &DVector<f64>,
    lambda: &DVector<f64>,
    active: &[bool],
) -> Result<()> {
    let primal = (b_mat * t - b_vec).amax();
    let stationarity = 2.0 * (t - t_p) - b_mat.transpose() * lambda;
    let mut worst = primal;
    for i in 0..t.len() {
        if active[i] {
            // Bound multiplier must be non-negative; complementarity holds
            // because active entries are exactly zero.
            worst = worst.max(-stationarity[i]).max(t[i].abs());
        } else {
            worst = worst.max(stationarity[i].abs());
            worst = worst.max(-t[i]);
        }
    }
    if worst > KKT_TOL {
        return Err(Error::SolverStalled {
            iterations: 0,
            row_residual: worst,
            col_residual: primal,
        });
    }
    Ok(())
}

/// Place the transfers and diagonal terms in the full M×M matrix and verify
/// every invariant: non-negativity, row sums equal to deficits, column sums
/// equal to surpluses, and the hole/particle marginals of the result.
pub fn assemble_full_matrix(p: &DonorAcceptorPartition, transfer: &[f64]) -> Result<Vec<f64>> {
    let (n, m, groups) = (p.donor_count(), p.acceptor_count(), p.subgroup_count());
    assert_eq!(transfer.len(), n * m, "transfer matrix has wrong size");

    let scale = p.total_transfer().max(1.0);
    for &v in transfer {
        if v < -1e-9 * scale {
            return Err(Error::TransferInfeasible {
                constraint: "non-negativity",
                violation: -v,
            });
        }
    }
    for (i, &deficit) in p.deficits.iter().enumerate() {
        let sum: f64 = (0..m).map(|j| transfer[i * m + j]).sum();
        if (sum - deficit).abs() > 1e-9 * scale {
            return Err(Error::TransferInfeasible {
                constraint: "row sum",
                violation: (sum - deficit).abs(),
            });
        }
    }
    for (j, &surplus) in p.surpluses.iter().enumerate() {
        let sum: f64 = (0..n).map(|i| transfer[i * m + j]).sum();
        if (sum - surplus).abs() > 1e-9 * scale {
            return Err(Error::TransferInfeasible {
                constraint: "column sum",
                violation: (sum - surplus).abs(),
            });
        }
    }

    let mut full = vec![0.0; groups * groups];
    for &j in &p.acceptors {
        full[j * groups + j] = p.hole[j];
    }
    for &i in &p.donors {
        full[i * groups + i] = p.particle[i];
    }
    for (i, &from) in p.donors.iter().enumerate() {
        for (j, &to) in p.acceptors.iter().enumerate() {
            full[from * groups + to] = transfer[i * m + j];
        }
    }
    Ok(full)
}

fn marginal_residuals(p: &DonorAcceptorPartition, full: &[f64]) -> Residuals {
    let groups = p.subgroup_count();
    let mut row = 0.0f64;
    let mut col = 0.0f64;
    for (i, &hole) in p.hole.iter().enumerate() {
        let sum: f64 = (0..groups).map(|j| full[i * groups + j]).sum();
        row = row.max((sum - hole).abs());
    }
    for (j, &particle) in p.particle.iter().enumerate() {
        let sum: f64 = (0..groups).map(|i| full[i * groups + j]).sum();
        col = col.max((sum - particle).abs());
    }
    Residuals { row, col }
}

fn finish(
    p: &DonorAcceptorPartition,
    transfer: Vec<f64>,
    method: TransferMethod,
    pure_local: bool,
) -> Result<TransferResult> {
    let full = assemble_full_matrix(p, &transfer)?;
    let residuals = marginal_residuals(p, &full);
    Ok(TransferResult {
        partition: p.clone(),
        transfer,
        full_matrix: full,
        method,
        residuals,
        pure_local_excitation: pure_local,
    })
}

fn local_excitation_result(
    p: &DonorAcceptorPartition,
    method: TransferMethod,
) -> Result<TransferResult> {
    finish(p, Vec::new(), method, true)
}

/// Which reconstruction to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proportional,
    Quadratic,
}

/// Normalize subgroup charges per field to percentages (so donor deficits
/// and acceptor surpluses balance exactly) and reconstruct the transfer.
pub fn reconstruct_from_charges(
    hole: &[f64],
    particle: &[f64],
    method: Method,
    preference: Option<&[f64]>,
) -> Result<TransferResult> {
    let hole_pct = to_percent(hole, "hole")?;
    let particle_pct = to_percent(particle, "particle")?;
    let partition = partition_donors_acceptors(&hole_pct, &particle_pct);
    match method {
        Method::Proportional => solve_proportional(&partition),
        Method::Quadratic => solve_quadratic(&partition, preference),
    }
}

fn to_percent(values: &[f64], field: &'static str) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::ZeroTotal { field });
    }
    Ok(values.iter().map(|v| v * 100.0 / total).collect())
}

/// Serializable report with subgroup names resolved, for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub method: TransferMethod,
    pub subgroups: Vec<String>,
    pub hole: Vec<f64>,
    pub particle: Vec<f64>,
    pub donors: Vec<String>,
    pub acceptors: Vec<String>,
    pub deficits: Vec<f64>,
    pub surpluses: Vec<f64>,
    /// n×m donor→acceptor transfers.
    pub transfer: Vec<Vec<f64>>,
    /// M×M full matrix.
    pub full_matrix: Vec<Vec<f64>>,
    pub residuals: Residuals,
    pub pure_local_excitation: bool,
    pub local_excitation_percent: f64,
    pub charge_transfer_percent: f64,
}

impl TransferReport {
    pub fn new(result: &TransferResult, names: &[String]) -> Self {
        let p = &result.partition;
        let groups = p.subgroup_count();
        let m = p.acceptor_count();
        let grand: f64 = result.full_matrix.iter().sum();
        let le = result.local_excitation();
        let (le_pct, ct_pct) = if grand > 0.0 {
            (le / grand * 100.0, (grand - le) / grand * 100.0)
        } else {
            (0.0, 0.0)
        };
        TransferReport {
            method: result.method.clone(),
            subgroups: names.to_vec(),
            hole: p.hole.clone(),
            particle: p.particle.clone(),
            donors: p.donors.iter().map(|&j| names[j].clone()).collect(),
            acceptors: p.acceptors.iter().map(|&j| names[j].clone()).collect(),
            deficits: p.deficits.clone(),
            surpluses: p.surpluses.clone(),
            transfer: (0..p.donor_count())
                .map(|i| result.transfer[i * m..(i + 1) * m].to_vec())
                .collect(),
            full_matrix: (0..groups)
                .map(|i| result.full_matrix[i * groups..(i + 1) * groups].to_vec())
                .collect(),
            residuals: result.residuals,
            pure_local_excitation: result.pure_local_excitation,
            local_excitation_percent: le_pct,
            charge_transfer_percent: ct_pct,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn partition_basic() {
        let p = partition_donors_acceptors(&[0.9, 0.1], &[0.1, 0.9]);
        assert_eq!(p.donors, vec![0]);
        assert_eq!(p.acceptors, vec![1]);
        assert_close(p.deficits[0], 0.8, 1e-15);
        assert_close(p.surpluses[0], 0.8, 1e-15);
    }

    #[test]
    fn equal_charges_mean_no_donors() {
        let p = partition_donors_acceptors(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(p.donors.is_empty());
        assert_eq!(p.acceptors, vec![0, 1]);
        assert_eq!(p.total_transfer(), 0.0);
    }

    #[test]
    fn partition_tq_state9_percents() {
        let p = partition_donors_acceptors(&[16.5, 83.5], &[2.1, 97.9]);
        assert_eq!(p.donors, vec![0]);
        assert_close(p.deficits[0], 14.4, 1e-12);
        assert_close(p.surpluses[0], 14.4, 1e-12);
    }

    #[test]
    fn proportional_single_donor_is_forced() {
        let p = partition_donors_acceptors(&[1.0, 0.0, 0.0], &[0.0, 0.4, 0.6]);
        let r = solve_proportional(&p).unwrap();
        assert_close(r.transfer[0], 0.4, 1e-15);
        assert_close(r.transfer[1], 0.6, 1e-15);
    }

    #[test]
    fn proportional_two_by_two_closed_form() {
        // Donors with deficits (0.6, 0.4), acceptors with surpluses (0.7, 0.3).
        let p = partition_donors_acceptors(&[0.8, 0.6, 0.0, 0.05], &[0.2, 0.2, 0.7, 0.35]);
        assert_close(p.deficits[0], 0.6, 1e-15);
        assert_close(p.deficits[1], 0.4, 1e-15);
        assert_close(p.surpluses[0], 0.7, 1e-15);
        assert_close(p.surpluses[1], 0.3, 1e-15);
        let r = solve_proportional(&p).unwrap();
        assert_close(r.transfer[0], 0.42, 1e-12);
        assert_close(r.transfer[1], 0.18, 1e-12);
        assert_close(r.transfer[2], 0.28, 1e-12);
        assert_close(r.transfer[3], 0.12, 1e-12);
    }

    #[test]
    fn proportional_tq_state4() {
        let r = reconstruct_from_charges(&[94.2, 5.8], &[7.1, 92.9], Method::Proportional, None)
            .unwrap();
        assert_eq!(r.partition.donors, vec![0]);
        assert_close(r.transfer[0], 87.1, 0.05);
        assert_close(r.full_entry(0, 0), 7.1, 0.05);
        assert_close(r.full_entry(1, 1), 5.8, 0.05);
    }

    #[test]
    fn no_donors_flags_local_excitation() {
        let p = partition_donors_acceptors(&[0.5, 0.5], &[0.5, 0.5]);
        let r = solve_proportional(&p).unwrap();
        assert!(r.pure_local_excitation);
        assert!(r.transfer.is_empty());
        assert_close(r.full_entry(0, 0), 0.5, 1e-15);
        assert_close(r.full_entry(1, 1), 0.5, 1e-15);
        assert_eq!(r.full_entry(0, 1), 0.0);
    }

    #[test]
    fn unbalanced_partition_rejected() {
        let p = DonorAcceptorPartition {
            hole: vec![1.0, 0.0],
            particle: vec![0.0, 0.5],
            donors: vec![0],
            acceptors: vec![1],
            deficits: vec![1.0],
            surpluses: vec![0.5],
        };
        assert!(matches!(
            solve_proportional(&p),
            Err(Error::TransferUnbalanced { .. })
        ));
    }

    #[test]
    fn qp_matrix_matches_two_by_two_layout() {
        let p = partition_donors_acceptors(&[0.8, 0.6, 0.0, 0.05], &[0.2, 0.2, 0.7, 0.35]);
        let (b, rhs) = build_qp(&p).unwrap();
        let expected = [
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 0.0],
        ];
        assert_eq!(b.nrows(), 3);
        assert_eq!(b.ncols(), 4);
        for (r, row) in expected.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(b[(r, c)], v, "entry ({r},{c})");
            }
        }
        assert_close(rhs[0], 0.6, 1e-15);
        assert_close(rhs[1], 0.4, 1e-15);
        assert_close(rhs[2], 0.7, 1e-15);
    }

    #[test]
    fn qp_matrix_single_pair() {
        let p = partition_donors_acceptors(&[1.0, 0.0], &[0.0, 1.0]);
        let (b, rhs) = build_qp(&p).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (1, 1));
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(rhs[0], 1.0);
    }

    #[test]
    fn qp_matrix_two_donors_one_acceptor() {
        let p = partition_donors_acceptors(&[0.6, 0.4, 0.0], &[0.0, 0.0, 1.0]);
        let (b, _) = build_qp(&p).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (2, 2));
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(0, 1)], 0.0);
        assert_eq!(b[(1, 0)], 0.0);
        assert_eq!(b[(1, 1)], 1.0);
        // Rank must be n + m - 1.
        assert_eq!(b.svd(false, false).rank(1e-10), 2);
    }

    #[test]
    fn quadratic_equals_proportional_for_single_donor() {
        let p = partition_donors_acceptors(&[71.6, 13.8, 14.6], &[3.5, 42.7, 53.8]);
        let prop = solve_proportional(&p).unwrap();
        let quad = solve_quadratic(&p, None).unwrap();
        for (a, b) in prop.transfer.iter().zip(&quad.transfer) {
            assert_close(*a, *b, 1e-9);
        }
        assert_close(quad.transfer[0], 28.9, 0.05);
        assert_close(quad.transfer[1], 39.2, 0.05);
    }

    /// Dense scan over the one free parameter of a 2x2 instance.
    fn scan_two_by_two(p: &DonorAcceptorPartition, t_p: f64, step: f64) -> [f64; 4] {
        let (d1, s1, s2) = (p.deficits[0], p.surpluses[0], p.surpluses[1]);
        let lo = (d1 - s2).max(0.0);
        let hi = d1.min(s1);
        let objective = |t11: f64| {
            let t = [t11, d1 - t11, s1 - t11, t11 - (d1 - s2)];
            t.iter().map(|v| (v - t_p) * (v - t_p)).sum::<f64>()
        };
        let mut best = lo;
        let mut best_val = objective(lo);
        let mut x = lo;
        while x <= hi {
            let v = objective(x);
            if v < best_val {
                best_val = v;
                best = x;
            }
            x += step;
        }
        [best, d1 - best, s1 - best, best - (d1 - s2)]
    }

    #[test]
    fn quadratic_two_by_two_matches_scan_oracle() {
        let p = partition_donors_acceptors(&[0.8, 0.6, 0.0, 0.05], &[0.2, 0.2, 0.7, 0.35]);
        let r = solve_quadratic(&p, Some(&[0.25; 4])).unwrap();
        let oracle = scan_two_by_two(&p, 0.25, 1e-6);
        for (got, want) in r.transfer.iter().zip(&oracle) {
            assert_close(*got, *want, 1e-5);
        }
        // The optimum sits at t11 = 0.4 in this family.
        assert_close(r.transfer[0], 0.4, 1e-9);
        assert_close(r.transfer[1], 0.2, 1e-9);
        assert_close(r.transfer[2], 0.3, 1e-9);
        assert_close(r.transfer[3], 0.1, 1e-9);
    }

    #[test]
    fn quadratic_respects_active_bounds() {
        // A preference far outside the feasible family pushes t11 against
        // its upper limit, which puts t12 on the zero bound.
        let p = partition_donors_acceptors(&[0.8, 0.6, 0.0, 0.05], &[0.2, 0.2, 0.7, 0.35]);
        let pref = [2.0, 0.0, 0.0, 0.0];
        let r = solve_quadratic(&p, Some(&pref)).unwrap();
        for &v in &r.transfer {
            assert!(v >= 0.0);
        }
        // Unconstrained line minimum is t11 = 0.9, clamped to 0.6.
        assert_close(r.transfer[0], 0.6, 1e-9);
        assert_eq!(r.transfer[1], 0.0);
        assert_close(r.transfer[2], 0.1, 1e-9);
        assert_close(r.transfer[3], 0.3, 1e-9);

        // Scan oracle over the one free parameter.
        let (d1, s1, s2) = (0.6f64, 0.7f64, 0.3f64);
        let lo = (d1 - s2).max(0.0);
        let hi = d1.min(s1);
        let objective =
            |t: &[f64; 4]| -> f64 { t.iter().zip(&pref).map(|(v, p)| (v - p) * (v - p)).sum() };
        let mut best = lo;
        let mut best_val = f64::INFINITY;
        let mut x = lo;
        while x <= hi {
            let v = objective(&[x, d1 - x, s1 - x, x - lo]);
            if v < best_val {
                best_val = v;
                best = x;
            }
            x += 1e-6;
        }
        assert_close(r.transfer[0], best, 1e-5);
    }

    #[test]
    fn zero_surplus_acceptor_receives_nothing() {
        let p = partition_donors_acceptors(&[0.6, 0.2, 0.2], &[0.0, 0.2, 0.8]);
        assert_eq!(p.acceptors, vec![1, 2]);
        assert_eq!(p.surpluses[0], 0.0);
        let prop = solve_proportional(&p).unwrap();
        assert_eq!(prop.transfer[0], 0.0);
        let quad = solve_quadratic(&p, None).unwrap();
        assert!(quad.transfer[0].abs() <= 1e-12);
    }

    #[test]
    fn full_matrix_single_pair() {
        let p = partition_donors_acceptors(&[0.9, 0.1], &[0.2, 0.8]);
        let r = solve_proportional(&p).unwrap();
        // [[Q^p_d, t], [0, Q^h_a]]
        assert_close(r.full_entry(0, 0), 0.2, 1e-15);
        assert_close(r.full_entry(0, 1), 0.7, 1e-12);
        assert_eq!(r.full_entry(1, 0), 0.0);
        assert_close(r.full_entry(1, 1), 0.1, 1e-15);
        assert!(r.residuals.row <= 1e-12 && r.residuals.col <= 1e-12);
    }

    #[test]
    fn full_matrix_marginals_match() {
        let hole = [0.8, 0.6, 0.0, 0.05];
        let particle = [0.2, 0.2, 0.7, 0.35];
        let p = partition_donors_acceptors(&hole, &particle);
        let r = solve_proportional(&p).unwrap();
        let groups = 4;
        for (i, &expected) in hole.iter().enumerate() {
            let sum: f64 = (0..groups).map(|j| r.full_entry(i, j)).sum();
            assert_close(sum, expected, 1e-12);
        }
        for (j, &expected) in particle.iter().enumerate() {
            let sum: f64 = (0..groups).map(|i| r.full_entry(i, j)).sum();
            assert_close(sum, expected, 1e-12);
        }
    }

    #[test]
    fn infeasible_transfer_rejected_on_assembly() {
        let p = partition_donors_acceptors(&[0.9, 0.1], &[0.2, 0.8]);
        assert!(matches!(
            assemble_full_matrix(&p, &[0.3]),
            Err(Error::TransferInfeasible {
                constraint: "row sum",
                ..
            })
        ));
        assert!(matches!(
            assemble_full_matrix(&p, &[-0.7]),
            Err(Error::TransferInfeasible {
                constraint: "non-negativity",
                ..
            })
        ));
    }

    fn random_partition(rng: &mut impl rand::Rng, n: usize, m: usize) -> DonorAcceptorPartition {
        let deficits: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..30.0)).collect();
        let mut surpluses: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..30.0)).collect();
        let scale: f64 = deficits.iter().sum::<f64>() / surpluses.iter().sum::<f64>();
        for s in &mut surpluses {
            *s *= scale;
        }
        // Donors first, then acceptors, as subgroups.
        let hole: Vec<f64> = deficits
            .iter()
            .map(|&d| d + 1.0)
            .chain(surpluses.iter().map(|_| 1.0))
            .collect();
        let particle: Vec<f64> = deficits
            .iter()
            .map(|_| 1.0)
            .chain(surpluses.iter().map(|&s| s + 1.0))
            .collect();
        partition_donors_acceptors(&hole, &particle)
    }

    #[test]
    fn random_instances_satisfy_constraints() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        for round in 0..100 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let p = random_partition(&mut rng, n, m);
            for result in [
                solve_proportional(&p).unwrap(),
                solve_quadratic(&p, None).unwrap(),
            ] {
                assert!(
                    result.residuals.row <= 1e-9 && result.residuals.col <= 1e-9,
                    "round {round}: residuals {:?}",
                    result.residuals
                );
                for &v in &result.transfer {
                    assert!(v >= -1e-12, "round {round}: negative transfer {v}");
                }
            }
            // Proportional must equal the published closed form bit-for-bit.
            let prop = solve_proportional(&p).unwrap();
            let total: f64 = p.deficits.iter().sum();
            for (i, &d) in p.deficits.iter().enumerate() {
                for (j, &s) in p.surpluses.iter().enumerate() {
                    assert_eq!(prop.transfer[i * m + j], d * s / total);
                }
            }
        }
    }

    #[test]
    fn uniqueness_collapse_single_donor_or_acceptor() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let (n, m) = if rng.gen_bool(0.5) {
                (1, rng.gen_range(1..=6))
            } else {
                (rng.gen_range(1..=6), 1)
            };
            let p = random_partition(&mut rng, n, m);
            let prop = solve_proportional(&p).unwrap();
            let quad = solve_quadratic(&p, None).unwrap();
            for (a, b) in prop.transfer.iter().zip(&quad.transfer) {
                assert_close(*a, *b, 1e-9);
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let p = random_partition(&mut rng, 3, 4);
        let lambda = 3.5;
        let scaled = DonorAcceptorPartition {
            hole: p.hole.iter().map(|v| v * lambda).collect(),
            particle: p.particle.iter().map(|v| v * lambda).collect(),
            donors: p.donors.clone(),
            acceptors: p.acceptors.clone(),
            deficits: p.deficits.iter().map(|v| v * lambda).collect(),
            surpluses: p.surpluses.iter().map(|v| v * lambda).collect(),
        };
        let base_prop = solve_proportional(&p).unwrap();
        let scaled_prop = solve_proportional(&scaled).unwrap();
        for (a, b) in base_prop.transfer.iter().zip(&scaled_prop.transfer) {
            assert_close(a * lambda, *b, 1e-9);
        }

        let tp: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let tp_scaled: Vec<f64> = tp.iter().map(|v| v * lambda).collect();
        let base_quad = solve_quadratic(&p, Some(&tp)).unwrap();
        let scaled_quad = solve_quadratic(&scaled, Some(&tp_scaled)).unwrap();
        for (a, b) in base_quad.transfer.iter().zip(&scaled_quad.transfer) {
            assert_close(a * lambda, *b, 1e-8);
        }
    }

    #[test]
    fn permutation_equivariance_of_donor_rows() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let p = random_partition(&mut rng, 3, 3);
        let m = 3;
        // Swap donors 0 and 2 wholesale.
        let perm = [2usize, 1, 0];
        let permuted = DonorAcceptorPartition {
            hole: p.hole.clone(),
            particle: p.particle.clone(),
            donors: perm.iter().map(|&i| p.donors[i]).collect(),
            acceptors: p.acceptors.clone(),
            deficits: perm.iter().map(|&i| p.deficits[i]).collect(),
            surpluses: p.surpluses.clone(),
        };
        let base = solve_proportional(&p).unwrap();
        let swapped = solve_proportional(&permuted).unwrap();
        for (row, &src) in perm.iter().enumerate() {
            for j in 0..m {
                assert_close(
                    swapped.transfer[row * m + j],
                    base.transfer[src * m + j],
                    1e-12,
                );
            }
        }

        let quad_base = solve_quadratic(&p, None).unwrap();
        let quad_swapped = solve_quadratic(&permuted, None).unwrap();
        for (row, &src) in perm.iter().enumerate() {
            for j in 0..m {
                assert_close(
                    quad_swapped.transfer[row * m + j],
                    quad_base.transfer[src * m + j],
                    1e-8,
                );
            }
        }
    }

    #[test]
    fn quadratic_perturbation_optimality() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(2..=4);
            let p = random_partition(&mut rng, n, m);
            let r = solve_quadratic(&p, None).unwrap();
            let (b_mat, _) = build_qp(&p).unwrap();
            let t = DVector::from_column_slice(&r.transfer);
            let size = n * m;
            let tp = DVector::from_element(size, p.total_transfer() / size as f64);
            let objective = |v: &DVector<f64>| -> f64 { (v - &tp).iter().map(|x| x * x).sum() };
            let base = objective(&t);

            // Null-space steps that keep active bounds pinned stay feasible
            // to first order; none may lower the objective. The basis comes
            // from the symmetric eigendecomposition of B'B.
            let eig = (b_mat.transpose() * &b_mat).symmetric_eigen();
            let null_cols: Vec<usize> = (0..size).filter(|&c| eig.eigenvalues[c] < 1e-9).collect();
            let range_cols: Vec<usize> =
                (0..size).filter(|&c| eig.eigenvalues[c] >= 1e-9).collect();
            for &null_col in &null_cols {
                let mut d: DVector<f64> = eig.eigenvectors.column(null_col).into();
                for i in 0..size {
                    if t[i] <= 1e-12 {
                        d[i] = 0.0;
                    }
                }
                // Re-project onto the null space after pinning.
                for &rc in &range_cols {
                    let basis: DVector<f64> = eig.eigenvectors.column(rc).into();
                    let coef = d.dot(&basis);
                    d -= coef * basis;
                }
                if d.amax() < 1e-9 {
                    continue;
                }
                for eps in [1e-6, -1e-6] {
                    let trial = &t + eps * &d;
                    if trial.iter().any(|&x| x < 0.0) {
                        continue;
                    }
                    assert!(
                        objective(&trial) >= base - 1e-12,
                        "feasible perturbation lowered the objective"
                    );
                }
            }
        }
    }

    #[test]
    fn report_percentages_for_tq_state4() {
        let r =
            reconstruct_from_charges(&[94.2, 5.8], &[7.1, 92.9], Method::Quadratic, None).unwrap();
        let report = TransferReport::new(&r, &["THIO".into(), "QUIN".into()]);
        assert_close(report.charge_transfer_percent, 87.1, 0.05);
        assert_close(report.local_excitation_percent, 12.9, 0.05);
        assert_eq!(report.donors, vec!["THIO".to_string()]);
    }

    #[test]
    fn preference_length_checked() {
        let p = partition_donors_acceptors(&[0.9, 0.1], &[0.2, 0.8]);
        assert!(matches!(
            solve_quadratic(&p, Some(&[0.1, 0.2])),
            Err(Error::PreferenceLength {
                expected: 1,
                found: 2
            })
        ));
    }
}

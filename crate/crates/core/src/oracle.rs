//! Ground-truth machinery: exhaustive lattice search for the
//! sparsity-constrained problem and the λ-sweep checks of asymptotic
//! latent / mask recovery.

use std::fmt::Write as _;

use crate::corruption::{corrupt, CorruptedSample, CorruptionSpec};
use crate::error::{Error, Result};
use crate::generator::{make_affine_generator, GeneratorModel, ManifoldSpec};
use crate::metrics::format_sig9;
use crate::solver::{solve_rgi, strictly_decreasing, InitZ, InversionResult, SolverConfig};
use crate::tensor::Tensor;

/// `|r| ≤ ZERO_TOL` counts as a zero residual.
pub const ZERO_TOL: f64 = 1e-6;
pub const MAX_LATTICE_POINTS: usize = 10_000_000;

/// Uniform grid over the box `[-radius, radius]^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub dim: usize,
    pub radius: f64,
    /// Points per axis, endpoints included.
    pub points_per_axis: usize,
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 3 {
            return Err(Error::InvalidArgument(format!(
                "lattice dimension {} not in 1..=3",
                self.dim
            )));
        }
        if !(self.radius > 0.0) || self.points_per_axis < 2 {
            return Err(Error::InvalidArgument(
                "lattice needs radius > 0 and >= 2 points per axis".into(),
            ));
        }
        let total = self.points_per_axis.checked_pow(self.dim as u32);
        if total.is_none_or(|t| t > MAX_LATTICE_POINTS) {
            return Err(Error::InvalidArgument(format!(
                "lattice of {}^{} points exceeds {MAX_LATTICE_POINTS}",
                self.points_per_axis, self.dim
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.radius / (self.points_per_axis - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        -self.radius + k as f64 * self.step()
    }

    /// Lattice point with flat index `idx` (last axis fastest).
    pub fn point(&self, mut idx: usize) -> Tensor {
        let mut v = vec![0.0; self.dim];
        for slot in v.iter_mut().rev() {
            *slot = self.coordinate(idx % self.points_per_axis);
            idx /= self.points_per_axis;
        }
        Tensor::vector(v).expect("dim >= 1")
    }

    /// Nearest lattice point to `z`, clipped to the box.
    pub fn snap(&self, z: &Tensor) -> Tensor {
        z.map(|v| {
            let k = ((v + self.radius) / self.step())
                .round()
                .clamp(0.0, (self.points_per_axis - 1) as f64);
            self.coordinate(k as usize)
        })
    }
}

#[derive(Clone, Debug)]
pub struct L0Solution {
    /// Lattice points attaining `n_tilde`.
    pub minimizers: Vec<Tensor>,
    /// `min_z ‖x − G(z)‖₀` over the lattice.
    pub n_tilde: usize,
    /// `I(x − G(z))` for each minimizer.
    pub masks: Vec<Tensor>,
    /// Optimal value of the budgeted problem: the residual energy left after
    /// masking the `budget` largest residuals, minimized over the lattice.
    pub budget_objective: f64,
}

fn residual_indicator(r: &Tensor, tol: f64) -> Tensor {
    r.map(|v| if v.abs() > tol { 1.0 } else { 0.0 })
}

/// Sum of squares after dropping the `budget` largest-magnitude residuals.
fn budgeted_energy(r: &Tensor, budget: usize) -> f64 {
    let mut sq: Vec<f64> = r.data().iter().map(|v| v * v).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    sq.iter().skip(budget).sum()
}

/// Exhaustive search of the lattice for the sparsest residual.
pub fn solve_l0_oracle(
    model: &GeneratorModel,
    x: &Tensor,
    budget: usize,
    lattice: &LatticeSpec,
) -> Result<L0Solution> {
    lattice.validate()?;
    if lattice.dim != model.latent_dim {
        return Err(Error::InvalidArgument(format!(
            "lattice dimension {} != latent dimension {}",
            lattice.dim, model.latent_dim
        )));
    }
    if x.shape() != model.image_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "solve_l0_oracle",
            left: x.shape().to_vec(),
            right: model.image_shape.clone(),
        });
    }

    // (best count, indices attaining it, best budgeted energy)
    type Partial = (usize, Vec<usize>, f64);
    let scan = |range: std::ops::Range<usize>| -> Result<Partial> {
        let mut best: Partial = (usize::MAX, Vec::new(), f64::INFINITY);
        for idx in range {
            let r = x.sub(&model.generate(&lattice.point(idx))?)?;
            let count = r.count_nonzero(ZERO_TOL);
            if count < best.0 {
                best.0 = count;
                best.1.clear();
            }
            if count == best.0 {
                best.1.push(idx);
            }
            best.2 = best.2.min(budgeted_energy(&r, budget));
        }
        Ok(best)
    };

    let total = lattice.len();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(total);
    let chunk = total.div_ceil(workers);
    let partials: Vec<Result<Partial>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * chunk).min(total)..((w + 1) * chunk).min(total);
                s.spawn(move || scan(range))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("lattice worker panicked"))
            .collect()
    });

    let mut n_tilde = usize::MAX;
    let mut indices = Vec::new();
    let mut budget_objective = f64::INFINITY;
    // partitions are in index order, so the merged list stays sorted
    for p in partials {
        let (count, idx, energy) = p?;
        budget_objective = budget_objective.min(energy);
        if count < n_tilde {
            n_tilde = count;
            indices.clear();
        }
        if count == n_tilde {
            indices.extend(idx);
        }
    }
    let minimizers: Vec<Tensor> = indices.iter().map(|&i| lattice.point(i)).collect();
    let masks = minimizers
        .iter()
        .map(|z| Ok(residual_indicator(&x.sub(&model.generate(z)?)?, ZERO_TOL)))
        .collect::<Result<Vec<_>>>()?;
    Ok(L0Solution {
        minimizers,
        n_tilde,
        masks,
        budget_objective,
    })
}

/// `min_{b ∈ B} ‖a − b‖∞`.
pub fn hausdorff_inf(a: &Tensor, set: &[Tensor]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "hausdorff_inf over an empty set".into(),
        ));
    }
    set.iter()
        .map(|b| a.max_abs_diff(b))
        .try_fold(f64::INFINITY, |m, d| Ok(m.min(d?)))
}

/// Solver settings for the harness.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessOptions {
    pub solver: SolverConfig,
    /// Seeded restarts per λ; the lowest final objective is kept.
    pub restarts: usize,
    pub monotone_slack: f64,
    pub final_tolerance: f64,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                lr_z: 0.05,
                init_z: InitZ::SeededNormal,
                ..SolverConfig::default()
            }
            .with_iterations(2000),
            restarts: 5,
            monotone_slack: 1e-6,
            final_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Theorem {
    /// Latent recovery.
    Latent,
    /// Mask recovery.
    Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremRow {
    pub lambda: f64,
    pub objective: f64,
    /// `d∞(ẑ(λ), candidates)`.
    pub latent_distance: f64,
    /// `‖M̂(λ) − M*‖∞`.
    pub mask_distance: f64,
    /// Hamming distance of the binarized mask to `M*`.
    pub hamming: usize,
    pub exact_recovery: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremReport {
    pub theorem: Theorem,
    pub rows: Vec<TheoremRow>,
    /// Size of the candidate latent set (lattice minimizers plus `z*`).
    pub candidates: usize,
    pub n_tilde: Option<usize>,
    /// Largest tested λ from which every smaller tested λ recovers `M*` exactly.
    pub lambda_tilde: Option<f64>,
    /// `None` when fewer than two λ were tested.
    pub monotone: Option<bool>,
    pub final_within_tolerance: Option<bool>,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn lambdas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lambda).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("lambda,objective,latent_distance,mask_distance,hamming,exact\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                format_sig9(r.lambda),
                format_sig9(r.objective),
                format_sig9(r.latent_distance),
                format_sig9(r.mask_distance),
                r.hamming,
                r.exact_recovery as u8
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let title = match self.theorem {
            Theorem::Latent => {
                "latent recovery: d_inf(z_hat(lambda), candidates) as lambda decreases"
            }
            Theorem::Mask => "mask recovery: ||M_hat(lambda) - M*||_inf and exact support match",
        };
        let mut out = format!("{title}\n");
        let _ = writeln!(
            out,
            "{:>12} {:>14} {:>14} {:>14} {:>8} {:>6}",
            "lambda", "objective", "latent_dist", "mask_dist", "hamming", "exact"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>12.6} {:>14.6e} {:>14.6e} {:>14.6e} {:>8} {:>6}",
                r.lambda,
                r.objective,
                r.latent_distance,
                r.mask_distance,
                r.hamming,
                r.exact_recovery
            );
        }
        let _ = writeln!(out, "candidate set size: {}", self.candidates);
        if let Some(n) = self.n_tilde {
            let _ = writeln!(out, "n_tilde (lattice): {n}");
        }
        if let Some(l) = self.lambda_tilde {
            let _ = writeln!(out, "empirical lambda_tilde: {l}");
        }
        let verdict = |v: Option<bool>| match v {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "n/a",
        };
        let _ = writeln!(out, "monotone: {}", verdict(self.monotone));
        let _ = writeln!(
            out,
            "final within tolerance: {}",
            verdict(self.final_within_tolerance)
        );
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

fn check_sample(
    model: &GeneratorModel,
    sample: &CorruptedSample,
    lambdas: &[f64],
) -> Result<Tensor> {
    if lambdas.is_empty() || !strictly_decreasing(lambdas) {
        return Err(Error::InvalidArgument(
            "lambda list must be non-empty and strictly decreasing".into(),
        ));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "lambda {l} must be positive"
        )));
    }
    let z_star = sample
        .true_latent
        .clone()
        .ok_or_else(|| Error::Precondition("sample has no ground-truth latent".into()))?;
    let support = sample
        .image
        .sub(&model.generate(&z_star)?)?
        .count_nonzero(ZERO_TOL);
    if support > sample.budget {
        return Err(Error::Precondition(format!(
            "||x - G(z*)||_0 = {support} exceeds declared budget {}",
            sample.budget
        )));
    }
    Ok(z_star)
}

/// Best-of-restarts RGI solve at one λ.
pub fn solve_with_restarts(
    model: &GeneratorModel,
    x: &Tensor,
    lambda: f64,
    opts: &HarnessOptions,
) -> Result<InversionResult> {
    let mut best: Option<InversionResult> = None;
    for k in 0..opts.restarts.max(1) {
        let cfg = SolverConfig {
            lambda,
            seed: opts.solver.seed.wrapping_add(k as u64),
            ..opts.solver.clone()
        };
        let r = solve_rgi(model, x, &cfg).map_err(|e| Error::AtLambda {
            lambda,
            source: Box::new(e),
        })?;
        if best
            .as_ref()
            .is_none_or(|b| r.final_objective < b.final_objective)
        {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn rows_for(
    model: &GeneratorModel,
    sample: &CorruptedSample,
    lambdas: &[f64],
    candidates: &[Tensor],
    opts: &HarnessOptions,
) -> Result<Vec<TheoremRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let r = solve_with_restarts(model, &sample.image, lambda, opts)?;
            let hamming = r
                .binary_mask
                .data()
                .iter()
                .zip(sample.true_mask.data())
                .filter(|(a, b)| a != b)
                .count();
            Ok(TheoremRow {
                lambda,
                objective: r.final_objective,
                latent_distance: hausdorff_inf(&r.z_hat, candidates)?,
                mask_distance: r.mask.max_abs_diff(&sample.true_mask)?,
                hamming,
                exact_recovery: hamming == 0,
            })
        })
        .collect()
}

fn nonincreasing(values: impl Iterator<Item = f64> + Clone, slack: f64) -> bool {
    values
        .clone()
        .zip(values.skip(1))
        .all(|(a, b)| b <= a + slack)
}

const OPTIMIZER_NOTE: &str =
    "distances are measured at ADAM approximate optima (best of seeded restarts), not exact global optima";

/// Latent recovery: `d∞(ẑ(λ), Z̃)` should shrink as λ decreases. `Z̃` is
/// approximated by the lattice minimizers plus the construction-time `z*`.
pub fn verify_theorem1(
    model: &GeneratorModel,
    sample: &CorruptedSample,
    lambdas: &[f64],
    lattice: &LatticeSpec,
    opts: &HarnessOptions,
) -> Result<TheoremReport> {
    let z_star = check_sample(model, sample, lambdas)?;
    let oracle = solve_l0_oracle(model, &sample.image, sample.budget, lattice)?;
    let mut candidates = oracle.minimizers.clone();
    if !candidates.iter().any(|c| c == &z_star) {
        candidates.push(z_star);
    }
    let rows = rows_for(model, sample, lambdas, &candidates, opts)?;
    let monotone = (rows.len() > 1)
        .then(|| nonincreasing(rows.iter().map(|r| r.latent_distance), opts.monotone_slack));
    let final_ok = rows
        .last()
        .map(|r| r.latent_distance < opts.final_tolerance);
    Ok(TheoremReport {
        theorem: Theorem::Latent,
        pass: monotone.unwrap_or(true) && final_ok == Some(true),
        candidates: candidates.len(),
        n_tilde: Some(oracle.n_tilde),
        lambda_tilde: None,
        monotone,
        final_within_tolerance: final_ok,
        rows,
        notes: vec![OPTIMIZER_NOTE.into()],
    })
}

/// Mask recovery: `‖M̂(λ) − M*‖∞` should shrink as λ decreases, and below
/// some λ̃ the binarized mask should equal `M*` exactly.
pub fn verify_theorem2(
    model: &GeneratorModel,
    sample: &CorruptedSample,
    lambdas: &[f64],
    threshold: f64,
    opts: &HarnessOptions,
) -> Result<TheoremReport> {
    let z_star = check_sample(model, sample, lambdas)?;
    let opts = HarnessOptions {
        solver: SolverConfig {
            threshold,
            ..opts.solver.clone()
        },
        ..opts.clone()
    };
    opts.solver.validate()?;
    let candidates = vec![z_star];
    let rows = rows_for(model, sample, lambdas, &candidates, &opts)?;
    // largest λ whose whole suffix recovers exactly
    let mut lambda_tilde = None;
    for r in rows.iter().rev() {
        if !r.exact_recovery {
            break;
        }
        lambda_tilde = Some(r.lambda);
    }
    let monotone = (rows.len() > 1)
        .then(|| nonincreasing(rows.iter().map(|r| r.mask_distance), opts.monotone_slack));
    let mut notes = vec![OPTIMIZER_NOTE.to_string()];
    for r in rows.iter().filter(|r| !r.exact_recovery) {
        notes.push(format!(
            "lambda {} did not recover M* (hamming {})",
            r.lambda, r.hamming
        ));
    }
    Ok(TheoremReport {
        theorem: Theorem::Mask,
        pass: monotone.unwrap_or(true) && lambda_tilde.is_some(),
        candidates: 1,
        n_tilde: None,
        lambda_tilde,
        monotone,
        final_within_tolerance: None,
        rows,
        notes,
    })
}

/// Affine lattice fixture: `z*` drawn from `N(0, I)` and snapped onto
/// `lattice`, then corrupted per `corruption`.
pub fn lattice_fixture(
    manifold: &ManifoldSpec,
    lattice: &LatticeSpec,
    corruption: &CorruptionSpec,
    latent_seed: u64,
) -> Result<(GeneratorModel, CorruptedSample)> {
    let model = make_affine_generator(manifold)?;
    let (z, _) = crate::corruption::sample_clean(&model, latent_seed)?;
    let z_star = lattice.snap(&z);
    let clean = model.generate(&z_star)?;
    let sample = corrupt(&clean, Some(&z_star), corruption)?;
    Ok((model, sample))
}

/// The standard fixture: d = 2, 16×16, central 8×8 block, `N(1, 1)` fill.
pub fn standard_lattice() -> LatticeSpec {
    LatticeSpec {
        dim: 2,
        radius: 3.0,
        points_per_axis: 601,
    }
}

pub fn standard_fixture(seed: u64) -> Result<(GeneratorModel, CorruptedSample)> {
    standard_fixture_on(seed, &standard_lattice())
}

/// The standard fixture with `z*` snapped onto `lattice` (which must be 2-d).
pub fn standard_fixture_on(
    seed: u64,
    lattice: &LatticeSpec,
) -> Result<(GeneratorModel, CorruptedSample)> {
    lattice_fixture(
        &ManifoldSpec::new(2, &[16, 16], seed)?,
        lattice,
        &CorruptionSpec::central_block(8, 1.0, seed.wrapping_add(1)),
        seed.wrapping_add(2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lattice_geometry() {
        let l = LatticeSpec {
            dim: 2,
            radius: 1.0,
            points_per_axis: 5,
        };
        l.validate().unwrap();
        assert_eq!(l.len(), 25);
        assert_eq!(l.point(0).data(), &[-1.0, -1.0]);
        assert_eq!(l.point(24).data(), &[1.0, 1.0]);
        assert_eq!(l.point(1).data(), &[-1.0, -0.5]);
        assert_eq!(
            l.snap(&Tensor::vector(vec![0.26, 7.0]).unwrap()).data(),
            &[0.5, 1.0]
        );
        let too_big = LatticeSpec {
            dim: 3,
            radius: 1.0,
            points_per_axis: 300,
        };
        assert!(too_big.validate().is_err());
        assert!(LatticeSpec {
            dim: 4,
            ..l.clone()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let b = vec![
            Tensor::vector(vec![1.0, 2.0]).unwrap(),
            Tensor::vector(vec![3.0, 0.0]).unwrap(),
        ];
        assert_eq!(hausdorff_inf(&a, &b).unwrap(), 2.0);
        assert_eq!(hausdorff_inf(&b[0], &b).unwrap(), 0.0);
        assert_eq!(hausdorff_inf(&a, &b[1..]).unwrap(), 3.0);
        assert!(hausdorff_inf(&a, &[]).is_err());
    }

    proptest! {
        #[test]
        fn hausdorff_of_member_is_zero(a in proptest::collection::vec(-5.0f64..5.0, 3), bs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 0..5)) {
            let a = Tensor::vector(a).unwrap();
            let mut set: Vec<Tensor> = bs.into_iter().map(|b| Tensor::vector(b).unwrap()).collect();
            set.push(a.clone());
            prop_assert_eq!(hausdorff_inf(&a, &set).unwrap(), 0.0);
        }
    }

    fn small_lattice() -> LatticeSpec {
        LatticeSpec {
            dim: 2,
            radius: 2.0,
            points_per_axis: 41,
        }
    }

    #[test]
    fn oracle_exact_and_single_corruption() {
        let model = make_affine_generator(&ManifoldSpec::new(2, &[4, 4], 3).unwrap()).unwrap();
        let lat = small_lattice();
        let zg = lat.point(300);
        let x = model.generate(&zg).unwrap();
        let sol = solve_l0_oracle(&model, &x, 0, &lat).unwrap();
        assert_eq!(sol.n_tilde, 0);
        assert!(sol.minimizers.contains(&zg));
        assert_eq!(sol.budget_objective, 0.0);

        let mut xc = x.clone();
        xc.data_mut()[5] += 0.7;
        let sol = solve_l0_oracle(&model, &xc, 1, &lat).unwrap();
        assert_eq!(sol.n_tilde, 1);
        assert_eq!(sol.minimizers, vec![zg]);
        assert_eq!(sol.masks[0].count_nonzero(0.0), 1);
        assert_eq!(sol.masks[0].data()[5], 1.0);
        assert!(sol.budget_objective < 1e-20);
    }

    #[test]
    fn oracle_keeps_ties() {
        // second latent coordinate has no effect: every lattice point along it ties
        let mut model = make_affine_generator(&ManifoldSpec::new(2, &[4, 4], 3).unwrap()).unwrap();
        for i in 0..16 {
            model.theta[0].data_mut()[i * 2 + 1] = 0.0;
        }
        let lat = small_lattice();
        let x = model.generate(&lat.point(0)).unwrap();
        let sol = solve_l0_oracle(&model, &x, 0, &lat).unwrap();
        assert_eq!(sol.n_tilde, 0);
        assert_eq!(sol.minimizers.len(), 41);
    }

    #[test]
    fn oracle_rejects_bad_lattice() {
        let model = make_affine_generator(&ManifoldSpec::new(2, &[4, 4], 3).unwrap()).unwrap();
        let x = Tensor::zeros(&[4, 4]).unwrap();
        let lat = LatticeSpec {
            dim: 2,
            radius: 1.0,
            points_per_axis: 4000,
        };
        assert!(solve_l0_oracle(&model, &x, 0, &lat).is_err());
    }

    fn quick_opts() -> HarnessOptions {
        HarnessOptions {
            restarts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn single_lambda_has_no_monotonicity_verdict() {
        let (model, sample) = standard_fixture(0).unwrap();
        let lat = LatticeSpec {
            points_per_axis: 61,
            ..standard_lattice()
        };
        let rep = verify_theorem1(&model, &sample, &[0.05], &lat, &quick_opts()).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.monotone, None);
    }

    #[test]
    fn over_budget_fixture_aborts() {
        let (model, mut sample) = standard_fixture(0).unwrap();
        sample.budget = 10;
        let err = verify_theorem2(&model, &sample, &[0.1, 0.05], 0.5, &quick_opts()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
        let (model, sample) = standard_fixture(0).unwrap();
        assert!(verify_theorem2(&model, &sample, &[0.05, 0.1], 0.5, &quick_opts()).is_err());
    }

    #[test]
    fn clean_sample_recovers_empty_mask() {
        let lat = standard_lattice();
        let (model, sample) = lattice_fixture(
            &ManifoldSpec::new(2, &[16, 16], 4).unwrap(),
            &lat,
            &CorruptionSpec::central_block(0, 1.0, 0),
            5,
        )
        .unwrap();
        assert_eq!(sample.budget, 0);
        let rep = verify_theorem2(&model, &sample, &[0.4, 0.1, 0.02], 0.5, &quick_opts()).unwrap();
        assert!(rep.rows.iter().all(|r| r.exact_recovery));
        assert_eq!(rep.lambda_tilde, Some(0.4));
        assert!(rep.pass);
    }
}

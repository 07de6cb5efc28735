//! Named verification suites over random instances.
//!
//! Each suite draws deterministic instances from a seed, evaluates both
//! sides of every inequality it covers, and reports the worst slack along
//! with the tolerance it must clear. The suites back the `verify` command
//! and the acceptance tests.

use std::str::FromStr;

use num_complex::Complex;
use thiserror::Error;

use crate::entropy::{h_cond, hbmin_smoothing, EntropyError};
use crate::operator::{HermitianOperator, OperatorError, PsdFn, PureState};
use crate::random::{
    random_block_cq, random_contraction, random_density, random_projector, random_pure, substream,
};
use crate::report::Report;
use crate::sampling::{enumerate_subsets, sampling_theorem_lambda};
use crate::splitting::{
    build_split_tree, lambda_good_set, recombining_theorem_check, split_once,
    split_part_alternative, splitting_theorem_check, SplittingError, ZERO_STATE_TOL,
};
use crate::RANK_TOL;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Splitting(#[from] SplittingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    EntropyRules,
    Splitting,
    Recombining,
    SamplingTheorem,
    Appendix,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::EntropyRules,
        Suite::Splitting,
        Suite::Recombining,
        Suite::SamplingTheorem,
        Suite::Appendix,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::EntropyRules => "entropy-rules",
            Suite::Splitting => "splitting",
            Suite::Recombining => "recombining",
            Suite::SamplingTheorem => "sampling-theorem",
            Suite::Appendix => "appendix",
        }
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy-rules" => Ok(Suite::EntropyRules),
            "splitting" => Ok(Suite::Splitting),
            "recombining" => Ok(Suite::Recombining),
            "sampling-theorem" => Ok(Suite::SamplingTheorem),
            "appendix" => Ok(Suite::Appendix),
            other => Err(VerifyError::UnknownSuite(other.to_string())),
        }
    }
}

/// Tracks the worst (smallest) slack of an inequality family.
struct Slack {
    name: &'static str,
    tol: f64,
    worst: f64,
}

impl Slack {
    fn new(name: &'static str, tol: f64) -> Self {
        Slack {
            name,
            tol,
            worst: f64::INFINITY,
        }
    }

    fn note(&mut self, slack: f64) {
        if slack < self.worst {
            self.worst = slack;
        }
    }

    fn into_check(self, report: &mut Report) {
        let pass = self.worst >= -self.tol;
        report.push_check(
            format!("{} (worst slack)", self.name),
            -self.tol,
            self.worst,
            pass,
        );
    }
}

pub fn run_suite(suite: Suite, seed: u64, instances: usize) -> Result<Report, VerifyError> {
    let mut report = Report::new(
        "verify",
        serde_json::json!({"suite": suite.name(), "seed": seed, "instances": instances}),
    );
    match suite {
        Suite::EntropyRules => entropy_rules(&mut report, seed, instances)?,
        Suite::Splitting => splitting_suite(&mut report, seed, instances)?,
        Suite::Recombining => recombining_suite(&mut report, seed, instances)?,
        Suite::SamplingTheorem => sampling_theorem_suite(&mut report, seed, instances)?,
        Suite::Appendix => appendix_suite(&mut report, seed, instances)?,
    }
    report.results = serde_json::json!({"all_pass": report.all_pass()});
    Ok(report)
}

fn dims_from(rng: &mut crate::random::SeededRng) -> usize {
    if rand::Rng::gen_bool(rng, 0.5) {
        2
    } else {
        3
    }
}

fn entropy_rules(report: &mut Report, seed: u64, instances: usize) -> Result<(), VerifyError> {
    let mut positivity = Slack::new("positivity for classical systems", 1e-9);
    let mut dim_bound = Slack::new("dimension bound", 1e-9);
    let mut dim_bound_gen = Slack::new("dimension bound (general form)", 1e-9);
    let mut subadd = Slack::new("subadditivity", 1e-9);
    let mut chain = Slack::new("recombination chain rule", 1e-9);
    let mut monotony = Slack::new("projection monotony", 1e-9);
    for i in 0..instances {
        let mut rng = substream(seed, i as u64);
        let (da, db, dc) = (dims_from(&mut rng), dims_from(&mut rng), dims_from(&mut rng));

        // positivity: classical-on-A state against its own marginal
        let cq = crate::random::random_cq(&mut rng, da, db);
        let rho_cq = cq.materialize()?;
        let rho_b = rho_cq.partial_trace(&["E"])?;
        positivity.note(h_cond(&rho_cq, &rho_b)?);

        let rho = random_density(&mut rng, &[da, db, dc], &["A", "B", "C"]);
        let sigma_c = random_density(&mut rng, &[dc], &["C"]);
        let rho_bc = rho.partial_trace(&["B", "C"])?;

        // dimension bound with sigma ⪯ rho_B on a bipartite cut
        let rho_ab = rho.partial_trace(&["A", "B"])?;
        let marg_b = rho_ab.partial_trace(&["B"])?;
        let contraction = random_contraction(&mut rng, &[db], &["B"]);
        let sqrt_b = marg_b.psd_transform(PsdFn::Sqrt, RANK_TOL)?;
        let sigma_below = HermitianOperator::new(
            sqrt_b.matrix() * contraction.matrix() * sqrt_b.matrix(),
            &[db],
            &["B"],
        )
        .unwrap_or_else(|_| marg_b.clone());
        dim_bound.note((da as f64).log2() - h_cond(&rho_ab, &sigma_below)?);

        // general form: H(B|C) >= H(AB|C) - log dim A
        let h_ab_c = h_cond(&rho, &sigma_c)?;
        let h_b_c = h_cond(&rho_bc, &sigma_c)?;
        dim_bound_gen.note(h_b_c - (h_ab_c - (da as f64).log2()));

        // subadditivity with the marginalized sigma
        let sigma_bc = random_density(&mut rng, &[db, dc], &["B", "C"]);
        let h_a_bc = h_cond(&rho, &sigma_bc)?;
        let sigma_b = sigma_bc.partial_trace(&["B"])?;
        let h_a_b = h_cond(&rho_ab, &sigma_b)?;
        subadd.note(h_a_b - h_a_bc);

        // recombination chain rule
        let h_a_bc_own = h_cond(&rho, &rho_bc)?;
        chain.note(h_ab_c - (h_a_bc_own + h_b_c));

        // monotony under projections on C for a pure tripartite state
        let psi = random_pure(&mut rng, &[da, db, dc], &["A", "B", "C"]);
        let rank = 1 + rand::Rng::gen_range(&mut rng, 0..dc);
        let q = random_projector(&mut rng, &[dc], &["C"], rank);
        let labels: Vec<String> = psi.labels().iter().map(|s| s.to_string()).collect();
        let qf = q.embed_into(psi.dims(), &labels)?;
        let projected = PureState::new(
            qf.matrix() * psi.amplitudes(),
            psi.dims(),
            &labels,
        )?;
        let sigma_b2 = random_density(&mut rng, &[db], &["B"]);
        let before = h_cond(&psi.reduced_density(&["A", "B"])?, &sigma_b2)?;
        let after = h_cond(&projected.reduced_density(&["A", "B"])?, &sigma_b2)?;
        monotony.note(after - before);
    }
    for s in [positivity, dim_bound, dim_bound_gen, subadd, chain, monotony] {
        s.into_check(report);
    }
    Ok(())
}

fn splitting_suite(report: &mut Report, seed: u64, instances: usize) -> Result<(), VerifyError> {
    let mut resolution = Slack::new("resolution of the state", 1e-8);
    let mut orthogonality = Slack::new("sibling orthogonality", 1e-9);
    let mut split_abc = Slack::new("split bound on H(A|BC)", 1e-8);
    let mut split_bc = Slack::new("split bound on H(B|C)", 1e-8);
    let mut alternative = Slack::new("alternative split expression", 1e-8);
    let mut m1_exact = Slack::new("m = 1 reproduces the chain rule", 1e-9);
    for i in 0..instances {
        let mut rng = substream(seed, i as u64);
        // 4-party pure states, total dimension <= 64
        let dims: Vec<usize> = match i % 3 {
            0 => vec![2, 2, 2, 2],
            1 => vec![2, 2, 4, 2],
            _ => vec![2, 4, 2, 2],
        };
        let psi = random_pure(&mut rng, &dims, &["A", "B", "C", "D"]);
        let sigma_c = if i % 2 == 0 {
            psi.reduced_density(&["C"])?
        } else {
            random_density(&mut rng, &[dims[2]], &["C"])
        };

        // m = 1: the single part is the state itself
        let one = split_once(&psi, &["A"], &["B"], &sigma_c, 1, None)?;
        m1_exact.note(1e-9 - (psi.amplitudes() - &one[0].state).norm());

        let m = 3usize;
        let parts = split_once(&psi, &["A"], &["B"], &sigma_c, m, None)?;
        let mut sum = parts[0].state.clone();
        for p in parts.iter().skip(1) {
            sum += &p.state;
        }
        resolution.note(1e-8 - (sum - psi.amplitudes()).norm());
        for x in 0..m {
            for y in (x + 1)..m {
                orthogonality.note(1e-9 - parts[x].state.dotc(&parts[y].state).norm());
            }
        }

        let rho_abc = psi.reduced_density(&["A", "B", "C"])?;
        let rho_bc = psi.reduced_density(&["B", "C"])?;
        let h_ab_c = h_cond(&rho_abc, &sigma_c)?;
        let h0 = h_cond(&rho_bc, &sigma_c)?;
        let delta = (h_ab_c - h_cond(&rho_abc, &rho_bc)? - h0).max(0.0);
        let labels: Vec<String> = psi.labels().iter().map(|s| s.to_string()).collect();
        for (alpha, part) in parts.iter().enumerate() {
            if part.state.norm() <= ZERO_STATE_TOL {
                continue;
            }
            let child = PureState::new(part.state.clone(), psi.dims(), &labels)?;
            let c_abc = child.reduced_density(&["A", "B", "C"])?;
            let c_bc = child.reduced_density(&["B", "C"])?;
            let h_alpha = h0 + (alpha + 1) as f64 * delta / m as f64;
            let h_alpha_prev = h0 + alpha as f64 * delta / m as f64;
            split_abc.note(h_cond(&c_abc, &c_bc)? - (h_ab_c - h_alpha));
            split_bc.note(h_cond(&c_bc, &sigma_c)? - h_alpha_prev);
            let alt = split_part_alternative(&psi, part, &sigma_c)?;
            alternative.note(1e-8 - (&alt - &part.state).norm());
        }
    }
    for s in [
        resolution,
        orthogonality,
        split_abc,
        split_bc,
        alternative,
        m1_exact,
    ] {
        s.into_check(report);
    }
    Ok(())
}

fn recombining_suite(report: &mut Report, seed: u64, instances: usize) -> Result<(), VerifyError> {
    let mut split_thm = Slack::new("splitting theorem", 1e-8);
    let mut rate = Slack::new("recombined entropy rate", 1e-8);
    let mut e_side = Slack::new("E-side entropy preserved", 1e-8);
    let mut dist = Slack::new("distance within sqrt(1 - omega)", 1e-8);
    let mut recursion = Slack::new("recombination recursion", 1e-8);
    for i in 0..instances {
        let mut rng = substream(seed, i as u64);
        let m = if i % 2 == 0 { 2 } else { 3 };
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        let rho = cq.materialize()?;
        let sigma_e = rho.partial_trace(&["E"])?;
        let tree = build_split_tree(&cq, &sigma_e, m)?;
        split_thm.note(splitting_theorem_check(&tree).worst_slack);
        for subset in [vec![1usize, 3], vec![2], vec![1, 2, 3]] {
            let lambda = 0.2;
            let good = lambda_good_set(&tree, &subset, lambda);
            let (_, rep) = recombining_theorem_check(&tree, &good)?;
            rate.note(rep.checks[0].observed - rep.checks[0].bound);
            e_side.note(rep.checks[1].observed - rep.checks[1].bound);
            dist.note(rep.checks[2].bound - rep.checks[2].observed);
            recursion.note(rep.checks[3].bound - rep.checks[3].observed);
        }
    }
    for s in [split_thm, rate, e_side, dist, recursion] {
        s.into_check(report);
    }
    Ok(())
}

fn sampling_theorem_suite(
    report: &mut Report,
    seed: u64,
    instances: usize,
) -> Result<(), VerifyError> {
    let mut fraction = Slack::new("good-subset fraction >= 1 - eps", 1e-12);
    let mut containment = Slack::new("bad rows outside the good set", 0.0);
    for i in 0..instances {
        let mut rng = substream(seed, i as u64);
        let m = if i % 2 == 0 { 2 } else { 3 };
        let n = 3usize;
        let cq = random_block_cq(&mut rng, n, 2, 2);
        let rho = cq.materialize()?;
        let sigma_e = rho.partial_trace(&["E"])?;
        let tree = build_split_tree(&cq, &sigma_e, m)?;
        let beta = tree.beta_matrix();
        let xi = 0.2f64;
        for r in 1..=n {
            let subsets = enumerate_subsets(n, r);
            let count = subsets.len() as f64;
            // exact per-row deviation probability, maximized over rows
            let mut eps0 = 0.0f64;
            for row in beta.iter() {
                let full = row.iter().sum::<f64>() / n as f64;
                let bad = subsets
                    .iter()
                    .filter(|s| {
                        let avg = s.iter().map(|&j| row[j]).sum::<f64>() / r as f64;
                        avg <= full - xi
                    })
                    .count();
                eps0 = eps0.max(bad as f64 / count);
            }
            let delta = eps0.sqrt().min(1.0);
            let eps = eps0.sqrt().min(1.0);
            let lambda = sampling_theorem_lambda(
                tree.h_root,
                tree.h_e_root,
                n,
                r,
                tree.alphabet_bits,
                m,
                xi,
            );
            let mut good_subsets = 0usize;
            for s in &subsets {
                let one_based: Vec<usize> = s.iter().map(|&j| j + 1).collect();
                let gamma = lambda_good_set(&tree, &one_based, lambda);
                let weight = gamma.omega_weight(&tree);
                if weight >= 1.0 - delta - 1e-12 {
                    good_subsets += 1;
                }
                // the complement of the bad rows always sits inside the good set
                let bad = crate::sampling::bad_set(&beta, s, xi)
                    .map_err(|_| VerifyError::UnknownSuite("beta out of range".into()))?;
                let bad_weight: f64 = bad.iter().map(|&row| tree.omega(row)).sum();
                containment.note(weight - (1.0 - bad_weight) + 1e-12);
            }
            fraction.note(good_subsets as f64 / count - (1.0 - eps));
        }
    }
    for s in [fraction, containment] {
        s.into_check(report);
    }
    Ok(())
}

fn appendix_suite(report: &mut Report, seed: u64, instances: usize) -> Result<(), VerifyError> {
    let mut gentle = Slack::new("gentle measurement", 1e-9);
    let mut cauchy = Slack::new("operator Cauchy-Schwarz recombination", 1e-9);
    let mut ordering = Slack::new("projector ordering PP' = P'P = P", 1e-9);
    let mut smooth_marginal = Slack::new("smoothing keeps rho_bar_B below rho_B", 1e-9);
    let mut smooth_trace = Slack::new("smoothing keeps trace at most 1", 1e-9);
    let mut smooth_dist = Slack::new("smoothing stays in the eps-ball", 1e-9);
    let mut smooth_entropy = Slack::new("smoothing costs at most 2 log2(1/eps)", 1e-9);
    for i in 0..instances {
        let mut rng = substream(seed, i as u64);

        // gentle measurement on a random tripartite state
        let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]).scaled(0.97);
        let q = random_projector(&mut rng, &[2, 2], &["B", "C"], 2);
        let labels: Vec<String> = rho.labels().iter().map(|s| s.to_string()).collect();
        let qf = q.embed_into(rho.dims(), &labels)?;
        let qrq = HermitianOperator::new(
            qf.matrix() * rho.matrix() * qf.matrix(),
            rho.dims(),
            &labels,
        )
        .map_err(VerifyError::Operator)?;
        let lhs = rho.trace_distance(&qrq)?;
        let tr_q2 = (qf.matrix() * qf.matrix() * rho.matrix())
            .diagonal()
            .iter()
            .map(|z| z.re)
            .sum::<f64>();
        gentle.note((rho.trace() - tr_q2).max(0.0).sqrt() - lhs);

        // tr_B(Q rho Q) ⪯ m^2 sigma_A for Q = sum of per-part bounded pieces
        let m = 2 + (i % 3);
        let rho_ab = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let mut q_sum = nalgebra::DMatrix::<crate::operator::C64>::zeros(4, 4);
        let mut sigma_a = HermitianOperator::zeros(&[2], &["A"]);
        let mut parts = Vec::new();
        for _ in 0..m {
            let g = crate::random::random_complex_gaussian(&mut rng, 4, 4);
            let h = (&g + g.adjoint()) * Complex::new(0.5, 0.0);
            parts.push(h);
        }
        for h in &parts {
            q_sum += h;
            let hrh = HermitianOperator::new(
                h * rho_ab.matrix() * h,
                &[2, 2],
                &["A", "B"],
            )
            .map_err(VerifyError::Operator)?;
            sigma_a = sigma_a.add(&hrh.partial_trace(&["A"])?)?;
        }
        let qrq2 = HermitianOperator::new(
            &q_sum * rho_ab.matrix() * &q_sum,
            &[2, 2],
            &["A", "B"],
        )
        .map_err(VerifyError::Operator)?;
        let lhs_a = qrq2.partial_trace(&["A"])?;
        let bound = sigma_a.scaled((m * m) as f64);
        let scale = bound.max_abs_entry().max(1.0);
        cauchy.note(bound.sub(&lhs_a)?.min_eigenvalue() / scale);

        // nested projectors: P inside P' gives PP' = P'P = P
        let p_big = random_projector(&mut rng, &[4], &["H"], 3);
        // P = P' K P' projected to a projector via support
        let k = random_projector(&mut rng, &[4], &["H"], 2);
        let inner = HermitianOperator::new(
            p_big.matrix() * k.matrix() * p_big.matrix(),
            &[4],
            &["H"],
        )
        .map_err(VerifyError::Operator)?;
        let p_small = inner.support_projector(1e-8)?;
        let pp = p_small.matrix() * p_big.matrix();
        let pp2 = p_big.matrix() * p_small.matrix();
        let dev = (pp - p_small.matrix())
            .iter()
            .chain((pp2 - p_small.matrix()).iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        ordering.note(1e-9 - dev);

        // eigenvalue-cutoff smoothing guarantees
        let eps = 0.1;
        let rho2 = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let sigma = random_density(&mut rng, &[2], &["B"]);
        let rho_bar = hbmin_smoothing(&rho2, &sigma, eps)?;
        let rho_b = rho2.partial_trace(&["B"])?;
        let bar_b = rho_bar.partial_trace(&["B"])?;
        smooth_marginal.note(rho_b.sub(&bar_b)?.min_eigenvalue());
        smooth_trace.note(1.0 - rho_bar.trace());
        smooth_dist.note(eps - rho_bar.trace_distance(&rho2)?);
        let h = h_cond(&rho2, &sigma)?;
        let sigma_wit = {
            let tr = rho_b.trace();
            let idb = HermitianOperator::identity(&[2], &["B"]);
            rho_b.add(&idb.scaled((1.0 - tr).max(0.0) / 2.0))?
        };
        let h_bar = h_cond(&rho_bar, &sigma_wit)?;
        smooth_entropy.note(h_bar - (h - 2.0 * (1.0 / eps).log2()));
    }
    for s in [
        gentle,
        cauchy,
        ordering,
        smooth_marginal,
        smooth_trace,
        smooth_dist,
        smooth_entropy,
    ] {
        s.into_check(report);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        for suite in Suite::ALL {
            let report = run_suite(suite, 7, 5).unwrap();
            assert!(
                report.all_pass(),
                "suite {} failed: {:?}",
                suite.name(),
                report.checks
            );
        }
    }

    #[test]
    fn zero_instances_gives_empty_pass() {
        let report = run_suite(Suite::EntropyRules, 1, 0).unwrap();
        assert!(report.all_pass());
        // worst slacks stay at +inf and pass vacuously
        assert!(report.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            assert_eq!(Suite::from_str(suite.name()).unwrap(), suite);
        }
        assert!(Suite::from_str("bogus").is_err());
    }
}

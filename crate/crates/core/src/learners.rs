//! Linear weak learners.
//!
//! Two online learners share the ensemble: a first-order SGD learner whose
//! step is scaled by the importance weight, and a second-order recursive
//! least squares learner ("NM") that treats the weight as a sample weight in
//! an exponentially forgotten normal equation. A forward variant and a batch
//! least squares solve sit alongside as references for regret and
//! equivalence checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub w: Vec<f64>,
    pub mu: f64,
}

impl SgdState {
    /// Zero-initialized coefficients.
    pub fn new(r: usize, mu: f64) -> Self {
        Self {
            w: vec![0.0; r],
            mu,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.w.len(), x.len())?;
        Ok(dot(&self.w, x))
    }

    /// `w <- w + mu * lambda * (d - w'x) * x`. Returns the pre-update error.
    pub fn step(&mut self, sample: &Sample, lambda: f64) -> Result<f64> {
        check_dim(self.w.len(), sample.x.len())?;
        let e = sample.d - dot(&self.w, &sample.x);
        let gain = self.mu * lambda * e;
        for (w, x) in self.w.iter_mut().zip(&sample.x) {
            *w += gain * x;
        }
        Ok(e)
    }
}

/// Weighted RLS state. `p` is the `r x r` inverse correlation matrix, row
/// major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmState {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub beta: f64,
    #[serde(skip)]
    scratch: NmScratch,
}

#[derive(Debug, Clone, Default)]
struct NmScratch {
    px: Vec<f64>,
    xp: Vec<f64>,
}

impl PartialEq for NmState {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w && self.p == other.p && self.beta == other.beta
    }
}

impl NmState {
    /// Zero coefficients and `P = I / v`.
    pub fn new(r: usize, v: f64, beta: f64) -> Self {
        let mut p = vec![0.0; r * r];
        for i in 0..r {
            p[i * r + i] = 1.0 / v;
        }
        Self {
            w: vec![0.0; r],
            p,
            beta,
            scratch: NmScratch {
                px: vec![0.0; r],
                xp: vec![0.0; r],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.w.len(), x.len())?;
        Ok(dot(&self.w, x))
    }

    /// One weighted recursive update with sample weight `lambda`:
    ///
    /// ```text
    /// e = d - x'w
    /// g = lambda P x / (beta + lambda x'P x)
    /// w <- w + e g
    /// P <- (P - g x'P) / beta,  then P <- (P + P') / 2
    /// ```
    ///
    /// Returns the pre-update error. `lambda = 0` leaves `w` untouched and
    /// scales `P` by `1 / beta`.
    pub fn weighted_step(&mut self, sample: &Sample, lambda: f64) -> Result<f64> {
        let r = self.dim();
        check_dim(r, sample.x.len())?;
        let x = &sample.x;
        let e = sample.d - dot(&self.w, x);

        let NmScratch { px, xp } = &mut self.scratch;
        px.resize(r, 0.0);
        xp.resize(r, 0.0);
        for i in 0..r {
            px[i] = dot(&self.p[i * r..(i + 1) * r], x);
        }
        for j in 0..r {
            xp[j] = (0..r).map(|i| x[i] * self.p[i * r + j]).sum();
        }
        let denom = self.beta + lambda * dot(x, px);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::Numerical {
                k: 0,
                t: 0,
                detail: format!(
                    "gain denominator beta + lambda x'Px = {denom:e} (lambda = {lambda:e}); \
                     inverse correlation is no longer positive definite"
                ),
            });
        }
        let scale = lambda / denom;
        // px now holds the gain vector g.
        for g in px.iter_mut() {
            *g *= scale;
        }
        for (w, g) in self.w.iter_mut().zip(px.iter()) {
            *w += e * g;
        }
        let inv_beta = 1.0 / self.beta;
        for i in 0..r {
            for j in 0..r {
                let v = &mut self.p[i * r + j];
                *v = (*v - px[i] * xp[j]) * inv_beta;
            }
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let avg = 0.5 * (self.p[i * r + j] + self.p[j * r + i]);
                self.p[i * r + j] = avg;
                self.p[j * r + i] = avg;
            }
        }
        Ok(e)
    }
}

/// A weak learner of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeakLearner {
    Sgd(SgdState),
    Nm(NmState),
}

impl WeakLearner {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            WeakLearner::Sgd(s) => s.predict(x),
            WeakLearner::Nm(s) => s.predict(x),
        }
    }

    /// Update with the weight folded into the step (SGD) or the sample
    /// weight (RLS).
    pub fn weighted_step(&mut self, sample: &Sample, lambda: f64) -> Result<f64> {
        match self {
            WeakLearner::Sgd(s) => s.step(sample, lambda),
            WeakLearner::Nm(s) => s.weighted_step(sample, lambda),
        }
    }

    pub fn unit_step(&mut self, sample: &Sample) -> Result<f64> {
        self.weighted_step(sample, 1.0)
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            WeakLearner::Sgd(s) => &s.w,
            WeakLearner::Nm(s) => &s.w,
        }
    }
}

fn gram_system(history: &[Sample], r: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut gram = DMatrix::<f64>::zeros(r, r);
    let mut rhs = DVector::<f64>::zeros(r);
    for s in history {
        check_dim(r, s.x.len())?;
        let x = DVector::from_column_slice(&s.x);
        gram.ger(1.0, &x, &x, 1.0);
        rhs.axpy(s.d, &x, 1.0);
    }
    Ok((gram, rhs))
}

fn solve_spd(mut a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<Vec<f64>> {
    let n = a.nrows();
    // Symmetrize against accumulation order before factoring.
    a = (&a + a.transpose()) * 0.5;
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular(format!("{what} ({n}x{n})")))?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what} ({n}x{n})")));
    }
    Ok(sol.iter().copied().collect())
}

/// Batch least squares: `argmin_w sum (d - x'w)^2 + ridge |w|^2`.
pub fn batch_ls_oracle(history: &[Sample], ridge: f64) -> Result<Vec<f64>> {
    let first = history.first().ok_or(Error::EmptyStream)?;
    let r = first.x.len();
    if !(ridge >= 0.0) {
        return Err(Error::param("ridge", "must be nonnegative"));
    }
    let (mut gram, rhs) = gram_system(history, r)?;
    for i in 0..r {
        gram[(i, i)] += ridge;
    }
    solve_spd(gram, rhs, "batch normal equations")
}

/// Sum of squared residuals of a fixed coefficient vector over `history`.
pub fn batch_sse(history: &[Sample], w: &[f64]) -> f64 {
    history
        .iter()
        .map(|s| {
            let e = s.d - dot(w, &s.x);
            e * e
        })
        .sum()
}

/// Forward least squares predictor: the Gram matrix includes the query
/// regressor before the solve, the cross-correlation does not.
#[derive(Debug, Clone)]
pub struct ForwardNm {
    gram: DMatrix<f64>,
    xd: DVector<f64>,
    v: f64,
}

impl ForwardNm {
    pub fn new(r: usize, v: f64) -> Self {
        Self {
            gram: DMatrix::zeros(r, r),
            xd: DVector::zeros(r),
            v,
        }
    }

    pub fn predict(&self, x_new: &[f64]) -> Result<f64> {
        let r = self.xd.len();
        check_dim(r, x_new.len())?;
        let x = DVector::from_column_slice(x_new);
        let mut a = self.gram.clone();
        a.ger(1.0, &x, &x, 1.0);
        for i in 0..r {
            a[(i, i)] += self.v;
        }
        let w = solve_spd(a, self.xd.clone(), "forward Gram matrix")?;
        Ok(dot(&w, x_new))
    }

    pub fn observe(&mut self, sample: &Sample) -> Result<()> {
        check_dim(self.xd.len(), sample.x.len())?;
        let x = DVector::from_column_slice(&sample.x);
        self.gram.ger(1.0, &x, &x, 1.0);
        self.xd.axpy(sample.d, &x, 1.0);
        Ok(())
    }
}

/// One-shot forward prediction for `x_new` after `history`, with Gram
/// regularizer `v * I`.
pub fn nm_forward_fit(history: &[Sample], x_new: &[f64], v: f64) -> Result<f64> {
    let mut f = ForwardNm::new(x_new.len(), v);
    for s in history {
        f.observe(s)?;
    }
    f.predict(x_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn s(x: &[f64], d: f64) -> Sample {
        Sample::new(x.to_vec(), d).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        num / den
    }

    fn random_stream(rng: &mut RngStream, t: usize, r: usize) -> Vec<Sample> {
        let w_true: Vec<f64> = (0..r).map(|_| rng.normal()).collect();
        (0..t)
            .map(|_| {
                let x: Vec<f64> = (0..r).map(|_| rng.normal()).collect();
                let d = dot(&w_true, &x) + 0.1 * rng.normal();
                s(&x, d)
            })
            .collect()
    }

    #[test]
    fn predict_examples() {
        let zero = SgdState::new(3, 0.1);
        assert_eq!(zero.predict(&[4.0, -2.0, 1.0]).unwrap(), 0.0);
        let ones = SgdState {
            w: vec![1.0, 1.0, 1.0],
            mu: 0.1,
        };
        assert!((ones.predict(&[0.2, 0.3, 1.0]).unwrap() - 1.5).abs() < 1e-15);
        let orth = SgdState {
            w: vec![2.0, 0.0],
            mu: 0.1,
        };
        assert_eq!(orth.predict(&[0.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(
            orth.predict(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        let nm = NmState::new(2, 0.01, 1.0);
        assert!(nm.predict(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sgd_step_examples() {
        let mut st = SgdState::new(1, 0.1);
        let e = st.step(&s(&[1.0], 1.0), 1.0).unwrap();
        assert_eq!(e, 1.0);
        assert!((st.w[0] - 0.1).abs() < 1e-15);

        let mut half = SgdState::new(1, 0.1);
        half.step(&s(&[1.0], 1.0), 0.5).unwrap();
        assert!((half.w[0] - 0.05).abs() < 1e-15);

        let mut exact = SgdState {
            w: vec![2.0, -1.0],
            mu: 0.3,
        };
        let e = exact.step(&s(&[1.0, 1.0], 1.0), 0.7).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(exact.w, vec![2.0, -1.0]);
    }

    proptest! {
        #[test]
        fn sgd_weight_equals_scaled_step(
            w in prop::collection::vec(-2.0f64..2.0, 3),
            x in prop::collection::vec(-2.0f64..2.0, 3),
            d in -2.0f64..2.0,
            mu in 1e-3f64..1.0,
            lambda in 1e-6f64..=1.0,
        ) {
            let sample = s(&x, d);
            let mut a = SgdState { w: w.clone(), mu };
            let mut b = SgdState { w, mu: mu * lambda };
            a.step(&sample, lambda).unwrap();
            b.step(&sample, 1.0).unwrap();
            prop_assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn nm_zero_weight_only_inflates_p() {
        let mut st = NmState::new(2, 0.5, 0.9);
        st.w = vec![0.3, -0.2];
        let before = st.clone();
        let e = st.weighted_step(&s(&[1.0, 2.0], 1.0), 0.0).unwrap();
        assert!((e - (1.0 - (0.3 - 0.4))).abs() < 1e-15);
        assert_eq!(st.w, before.w);
        for (a, b) in st.p.iter().zip(&before.p) {
            assert!((a - b / 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn nm_scalar_hand_step() {
        let mut st = NmState::new(1, 1.0, 1.0);
        let e = st.weighted_step(&s(&[1.0], 1.0), 1.0).unwrap();
        assert_eq!(e, 1.0);
        assert!((st.w[0] - 0.5).abs() < 1e-15);
        assert!((st.p[0] - 0.5).abs() < 1e-15);
        // Same value as the ridge solve (v + x^2)^-1 x d.
        let w = batch_ls_oracle(&[s(&[1.0], 1.0)], 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nm_reports_broken_inverse() {
        let mut st = NmState::new(2, 1.0, 1.0);
        st.p = vec![-10.0, 0.0, 0.0, -10.0];
        let err = st.weighted_step(&s(&[1.0, 1.0], 0.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn rls_matches_ridge_solve() {
        let mut rng = RngStream::new(17);
        for &(t, r) in &[(1usize, 1usize), (10, 3), (500, 5), (1000, 10)] {
            let stream = random_stream(&mut rng, t, r);
            let v = 0.01;
            let mut st = NmState::new(r, v, 1.0);
            for smp in &stream {
                st.weighted_step(smp, 1.0).unwrap();
            }
            let w = batch_ls_oracle(&stream, v).unwrap();
            let err = rel_err(&st.w, &w);
            assert!(err <= 1e-8, "t={t} r={r} err={err:e}");
        }
    }

    #[test]
    fn rls_weighted_matches_weighted_ridge_solve() {
        // With beta = 1 the weighted recursion solves
        // (vI + sum lambda x x') w = sum lambda x d; scaling each sample by
        // sqrt(lambda) turns that into an ordinary ridge problem.
        let mut rng = RngStream::new(23);
        let stream = random_stream(&mut rng, 300, 4);
        let lambdas: Vec<f64> = (0..300).map(|_| rng.uniform()).collect();
        let mut st = NmState::new(4, 0.1, 1.0);
        let mut scaled = Vec::new();
        for (smp, &l) in stream.iter().zip(&lambdas) {
            st.weighted_step(smp, l).unwrap();
            let k = l.sqrt();
            scaled.push(s(
                &smp.x.iter().map(|v| v * k).collect::<Vec<_>>(),
                smp.d * k,
            ));
        }
        let w = batch_ls_oracle(&scaled, 0.1).unwrap();
        assert!(rel_err(&st.w, &w) <= 1e-8);
    }

    #[test]
    fn rls_keeps_p_symmetric() {
        let mut rng = RngStream::new(29);
        let stream = random_stream(&mut rng, 2000, 6);
        let mut st = NmState::new(6, 0.01, 0.99);
        for smp in &stream {
            st.weighted_step(smp, rng.uniform()).unwrap();
            let r = 6;
            let scale = st.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..r {
                for j in 0..r {
                    let diff = (st.p[i * r + j] - st.p[j * r + i]).abs();
                    assert!(diff <= 1e-8 * scale);
                }
            }
        }
        // positive definite on a well-conditioned stream
        let p = DMatrix::from_row_slice(6, 6, &st.p);
        assert!(p.cholesky().is_some());
    }

    #[test]
    fn forward_examples() {
        assert_eq!(nm_forward_fit(&[], &[0.7, 1.0], 0.01).unwrap(), 0.0);
        let p = nm_forward_fit(&[s(&[1.0], 1.0)], &[1.0], 0.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(matches!(
            nm_forward_fit(&[], &[0.0, 0.0], 0.0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn forward_scalar_predictions_bounded() {
        let mut rng = RngStream::new(31);
        for _ in 0..20 {
            let mut f = ForwardNm::new(1, 0.0);
            let mut max_d = 0.0f64;
            for t in 0..300 {
                // heavy-tailed regressors, including tiny ones
                let x = rng.normal() * if t % 7 == 0 { 1e-3 } else { 3.0 };
                let d = rng.uniform() * 2.0 - 1.0;
                if x != 0.0 {
                    let pred = f.predict(&[x]).unwrap();
                    if t > 0 {
                        assert!(pred.abs() <= max_d + 1e-12, "{pred} > {max_d}");
                    }
                }
                f.observe(&s(&[x], d)).unwrap();
                max_d = max_d.max(d.abs());
            }
        }
    }

    #[test]
    fn forward_prediction_stays_bounded_where_plain_ls_does_not() {
        // One past sample with a tiny regressor, then a huge query.
        let hist = [s(&[1e-4], 1.0)];
        let query = [1e4];
        let forward = nm_forward_fit(&hist, &query, 0.0).unwrap();
        let plain = {
            let w = batch_ls_oracle(&hist, 0.0).unwrap();
            w[0] * query[0]
        };
        assert!(forward.abs() <= 1.0);
        assert!(plain.abs() > 1e7);
    }

    #[test]
    fn batch_oracle_examples() {
        let w_star = [0.5, -1.5, 2.0];
        let mut rng = RngStream::new(37);
        let hist: Vec<Sample> = (0..20)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
                let d = dot(&w_star, &x);
                s(&x, d)
            })
            .collect();
        let w = batch_ls_oracle(&hist, 0.0).unwrap();
        assert!(rel_err(&w, &w_star) < 1e-12);

        let w = batch_ls_oracle(&[s(&[1.0], 1.0)], 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);

        assert!(matches!(
            batch_ls_oracle(&[s(&[1.0, 1.0], 1.0)], 0.0),
            Err(Error::Singular(_))
        ));
        assert!(batch_ls_oracle(&[], 0.0).is_err());
    }

    #[test]
    fn batch_oracle_beats_perturbations() {
        let mut rng = RngStream::new(41);
        let hist = random_stream(&mut rng, 200, 4);
        let w = batch_ls_oracle(&hist, 0.0).unwrap();
        let best = batch_sse(&hist, &w);
        for _ in 0..100 {
            let pert: Vec<f64> = w.iter().map(|v| v + 0.05 * rng.normal()).collect();
            assert!(batch_sse(&hist, &pert) >= best);
        }
    }
}

//! Dirichlet process mixture calibrator.
//!
//! Each class-conditional score density is a truncated stick-breaking mixture
//! of univariate Gaussians with a Normal-Gamma base measure, fitted by
//! coordinate-ascent variational inference. The variational family is
//!
//! ```text
//! q(v_t) = Beta(g1_t, g2_t)              t < T   (v_T = 1)
//! q(mu_t, lambda_t) = NormalGamma(m_t, kappa_t, a_t, b_t)
//! q(c_i) = Categorical(r_i)
//! ```
//!
//! and the posterior predictive of a class is a mixture of Student-t densities.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::data::Dataset;
use crate::error::{check_score, Error, Result};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct DpmConfig {
    /// Truncation level `T`.
    pub truncation: usize,
    /// Concentration of the stick-breaking prior.
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop when the evidence lower bound improves by less than this.
    pub elbo_tol: f64,
    /// Prior precision scale of the component means.
    pub kappa0: f64,
    /// Prior Gamma shape of the component precisions.
    pub shape0: f64,
}

impl Default for DpmConfig {
    fn default() -> Self {
        Self {
            truncation: 20,
            alpha: 1.0,
            max_iter: 500,
            elbo_tol: 1e-6,
            kappa0: 0.1,
            shape0: 1.0,
        }
    }
}

/// Normal-Gamma parameters: `lambda ~ Gamma(shape, rate)`,
/// `mu | lambda ~ N(mean, 1 / (kappa lambda))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGamma {
    fn e_precision(&self) -> f64 {
        self.shape / self.rate
    }

    fn e_log_precision(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    /// `E[lambda (x - mu)^2]`
    fn e_scaled_sq(&self, x: f64) -> f64 {
        1.0 / self.kappa + self.e_precision() * (x - self.mean).powi(2)
    }

    /// `E_q[ln p(mu, lambda | self)]` for `q` another Normal-Gamma.
    fn e_log_density(&self, q: &NormalGamma) -> f64 {
        let e_lam = q.e_precision();
        let e_ln_lam = q.e_log_precision();
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * e_ln_lam
            - self.rate * e_lam
            + 0.5 * (self.kappa.ln() + e_ln_lam - LN_2PI)
            - 0.5 * self.kappa * (1.0 / q.kappa + e_lam * (q.mean - self.mean).powi(2))
    }

    /// Posterior predictive Student-t density at `x`.
    pub fn predictive_density(&self, x: f64) -> f64 {
        let nu = 2.0 * self.shape;
        let scale2 = self.rate * (self.kappa + 1.0) / (self.shape * self.kappa);
        let z = (x - self.mean).powi(2) / (nu * scale2);
        let ln_pdf = ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (nu * std::f64::consts::PI * scale2).ln()
            - 0.5 * (nu + 1.0) * z.ln_1p();
        ln_pdf.exp()
    }
}

/// Variational Beta posterior of one stick proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stick {
    pub a: f64,
    pub b: f64,
}

impl Stick {
    fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    fn e_log_v(&self) -> f64 {
        digamma(self.a) - digamma(self.a + self.b)
    }

    fn e_log_1mv(&self) -> f64 {
        digamma(self.b) - digamma(self.a + self.b)
    }

    fn neg_entropy(&self) -> f64 {
        ln_gamma(self.a + self.b) - ln_gamma(self.a) - ln_gamma(self.b)
            + (self.a - 1.0) * self.e_log_v()
            + (self.b - 1.0) * self.e_log_1mv()
    }
}

/// Fitted variational posterior for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMixture {
    /// `T - 1` stick posteriors; the last component takes the remaining mass.
    pub sticks: Vec<Stick>,
    pub components: Vec<NormalGamma>,
    /// Final evidence lower bound.
    pub elbo: f64,
    /// Lower bound after every iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elbo_trace: Vec<f64>,
    #[serde(default)]
    pub converged: bool,
}

impl ClassMixture {
    /// Expected mixture weights `E[v_t] prod_{s<t} E[1 - v_s]`.
    pub fn weights(&self) -> Vec<f64> {
        let mut rest = 1.0;
        let mut w = Vec::with_capacity(self.components.len());
        for stick in &self.sticks {
            let v = stick.mean();
            w.push(rest * v);
            rest *= 1.0 - v;
        }
        w.push(rest);
        w
    }

    /// Posterior predictive density.
    pub fn density(&self, x: f64) -> f64 {
        self.weights()
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.predictive_density(x))
            .sum()
    }

    pub fn predictive_mean(&self) -> f64 {
        self.weights()
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.mean)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.components.len() == self.sticks.len() + 1
            && self.sticks.iter().all(|s| s.a > 0.0 && s.b > 0.0)
            && self
                .components
                .iter()
                .all(|c| c.kappa > 0.0 && c.shape > 0.0 && c.rate > 0.0 && c.mean.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel("malformed mixture posterior".into()))
        }
    }
}

/// Plug-in calibrator built from one mixture per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmModel {
    #[serde(rename = "T")]
    pub truncation: usize,
    pub alpha: f64,
    pub prior: f64,
    pub positive: ClassMixture,
    pub negative: ClassMixture,
}

impl DpmModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::InvalidModel(format!("prior {} not in (0, 1)", self.prior)));
        }
        for mix in [&self.positive, &self.negative] {
            if mix.components.len() != self.truncation {
                return Err(Error::InvalidModel("truncation mismatch".into()));
            }
            mix.validate()?;
        }
        Ok(())
    }

    /// `pi q1(x) / (pi q1(x) + (1 - pi) q0(x))`, or the prior when both
    /// densities underflow.
    pub fn apply(&self, score: f64) -> Result<f64> {
        let x = check_score(score)?;
        let joint_pos = self.prior * self.positive.density(x);
        let joint_neg = (1.0 - self.prior) * self.negative.density(x);
        let evidence = joint_pos + joint_neg;
        if evidence == 0.0 || !evidence.is_finite() {
            return Ok(self.prior);
        }
        Ok(joint_pos / evidence)
    }
}

/// Fits one mixture per class; each class needs at least two samples.
pub fn fit_dpm(data: &Dataset, config: &DpmConfig, seed: u64) -> Result<DpmModel> {
    if config.truncation == 0 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    if !(config.alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let positives = data.class_scores(true);
    let negatives = data.class_scores(false);
    for (label, scores) in [(1u8, &positives), (0u8, &negatives)] {
        if scores.len() < 2 {
            return Err(Error::TooFewSamples {
                label,
                count: scores.len(),
                required: 2,
            });
        }
    }
    let (pos_fit, neg_fit) = rayon::join(
        || fit_class(&positives, config, seed::derive(seed, 1)),
        || fit_class(&negatives, config, seed::derive(seed, 0)),
    );
    Ok(DpmModel {
        truncation: config.truncation,
        alpha: config.alpha,
        prior: positives.len() as f64 / data.len() as f64,
        positive: pos_fit?,
        negative: neg_fit?,
    })
}

struct Cavi<'a> {
    x: &'a [f64],
    config: &'a DpmConfig,
    base: NormalGamma,
    /// Row-major `N x T` responsibilities.
    resp: Vec<f64>,
    sticks: Vec<Stick>,
    components: Vec<NormalGamma>,
}

impl Cavi<'_> {
    fn t(&self) -> usize {
        self.config.truncation
    }

    /// Updates sticks and component posteriors from the responsibilities.
    fn update_globals(&mut self) {
        let t_max = self.t();
        let mut counts = vec![0.0; t_max];
        let mut sums = vec![0.0; t_max];
        for (i, &x) in self.x.iter().enumerate() {
            for t in 0..t_max {
                let r = self.resp[i * t_max + t];
                counts[t] += r;
                sums[t] += r * x;
            }
        }
        let means: Vec<f64> = (0..t_max)
            .map(|t| if counts[t] > 0.0 { sums[t] / counts[t] } else { 0.0 })
            .collect();
        let mut scatter = vec![0.0; t_max];
        for (i, &x) in self.x.iter().enumerate() {
            for t in 0..t_max {
                scatter[t] += self.resp[i * t_max + t] * (x - means[t]).powi(2);
            }
        }
        let mut tail: f64 = counts.iter().sum();
        for t in 0..t_max.saturating_sub(1) {
            tail -= counts[t];
            self.sticks[t] = Stick {
                a: 1.0 + counts[t],
                b: self.config.alpha + tail.max(0.0),
            };
        }
        let b0 = self.base;
        for t in 0..t_max {
            let (n, xbar) = (counts[t], means[t]);
            let kappa = b0.kappa + n;
            self.components[t] = NormalGamma {
                mean: (b0.kappa * b0.mean + n * xbar) / kappa,
                kappa,
                shape: b0.shape + 0.5 * n,
                rate: b0.rate + 0.5 * scatter[t] + b0.kappa * n * (xbar - b0.mean).powi(2) / (2.0 * kappa),
            };
        }
    }

    /// `E[ln pi_t]` under the stick posteriors.
    fn e_log_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.t());
        for stick in &self.sticks {
            out.push(acc + stick.e_log_v());
            acc += stick.e_log_1mv();
        }
        out.push(acc);
        out
    }

    /// Expected log joint of `x` and component `t`, without the assignment prior.
    fn e_log_lik(c: &NormalGamma, x: f64) -> f64 {
        0.5 * (c.e_log_precision() - LN_2PI - c.e_scaled_sq(x))
    }

    fn update_responsibilities(&mut self) {
        let t_max = self.t();
        let log_w = self.e_log_weights();
        let mut logits = vec![0.0; t_max];
        for (i, &x) in self.x.iter().enumerate() {
            for t in 0..t_max {
                logits[t] = log_w[t] + Self::e_log_lik(&self.components[t], x);
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for t in 0..t_max {
                self.resp[i * t_max + t] = (logits[t] - max).exp() / norm;
            }
        }
    }

    fn elbo(&self) -> f64 {
        let t_max = self.t();
        let log_w = self.e_log_weights();
        let mut total = 0.0;
        for (i, &x) in self.x.iter().enumerate() {
            for t in 0..t_max {
                let r = self.resp[i * t_max + t];
                if r > 0.0 {
                    total += r * (log_w[t] + Self::e_log_lik(&self.components[t], x) - r.ln());
                }
            }
        }
        let alpha = self.config.alpha;
        for stick in &self.sticks {
            // E ln Beta(v; 1, alpha) - E ln q(v)
            total += alpha.ln() + (alpha - 1.0) * stick.e_log_1mv() - stick.neg_entropy();
        }
        for c in &self.components {
            total += self.base.e_log_density(c) - c.e_log_density(c);
        }
        total
    }
}

fn fit_class(x: &[f64], config: &DpmConfig, seed: u64) -> Result<ClassMixture> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let base = NormalGamma {
        mean,
        kappa: config.kappa0,
        shape: config.shape0,
        rate: var.max(1e-6),
    };
    let t_max = config.truncation;
    let mut rng = seed::rng(seed);
    let mut resp = vec![0.0; x.len() * t_max];
    for i in 0..x.len() {
        resp[i * t_max + rng.random_range(0..t_max)] = 1.0;
    }
    let mut cavi = Cavi {
        x,
        config,
        base,
        resp,
        sticks: vec![Stick { a: 1.0, b: config.alpha }; t_max - 1],
        components: vec![base; t_max],
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for iteration in 0..config.max_iter {
        cavi.update_globals();
        cavi.update_responsibilities();
        let elbo = cavi.elbo();
        if !elbo.is_finite() {
            return Err(Error::NonFiniteElbo { iteration });
        }
        let improved = trace.last().map(|prev| elbo - prev);
        trace.push(elbo);
        if improved.is_some_and(|d| d < config.elbo_tol) {
            converged = true;
            break;
        }
    }
    // Final global step so the stored posteriors match the last responsibilities.
    cavi.update_globals();
    let elbo = cavi.elbo();
    if !elbo.is_finite() {
        return Err(Error::NonFiniteElbo { iteration: trace.len() });
    }
    trace.push(elbo);
    if !converged {
        log::warn!("DPM fit hit the iteration budget ({}) without converging", config.max_iter);
    }
    Ok(ClassMixture {
        sticks: cavi.sticks,
        components: cavi.components,
        elbo,
        elbo_trace: trace,
        converged,
    })
}

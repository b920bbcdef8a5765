use crate::error::ConfigError;

/// Linear noise schedule over `t = 1..=T`:
/// `1 − ᾱ_t = s·(α_low + (t−1)/(T−1)·(α_up − α_low))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    inference_steps: usize,
    noise_scale: f64,
    alpha_low: f64,
    alpha_up: f64,
    // index 0 holds ᾱ_0 = 1 and β_0 = 0
    one_minus_alpha_bar: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta: Vec<f64>,
}

fn range(key: &'static str, value: impl ToString, reason: &'static str) -> ConfigError {
    ConfigError::Range {
        key,
        value: value.to_string(),
        reason,
    }
}

impl NoiseSchedule {
    /// `steps` is `T`; `inference_steps` is `T′`, the forward corruption
    /// applied before reverse inference.
    pub fn new(
        steps: usize,
        inference_steps: usize,
        noise_scale: f64,
        alpha_low: f64,
        alpha_up: f64,
    ) -> Result<Self, ConfigError> {
        if steps == 0 {
            return Err(range("T", steps, "need at least one diffusion step"));
        }
        if inference_steps > steps {
            return Err(range("T_prime", inference_steps, "must not exceed T"));
        }
        if !(noise_scale > 0.0 && noise_scale <= 1.0) {
            return Err(range("s", noise_scale, "must lie in (0, 1]"));
        }
        if !(alpha_low > 0.0 && alpha_low < 1.0) {
            return Err(range("alpha_low", alpha_low, "must lie in (0, 1)"));
        }
        if !(alpha_up > alpha_low && alpha_up < 1.0) {
            return Err(range("alpha_up", alpha_up, "must lie in (alpha_low, 1)"));
        }
        let mut one_minus_alpha_bar = vec![0.0];
        for t in 1..=steps {
            let frac = if steps == 1 {
                0.0
            } else {
                (t - 1) as f64 / (steps - 1) as f64
            };
            one_minus_alpha_bar.push(noise_scale * (alpha_low + frac * (alpha_up - alpha_low)));
        }
        let alpha_bar: Vec<f64> = one_minus_alpha_bar.iter().map(|v| 1.0 - v).collect();
        let mut beta = vec![0.0];
        for t in 1..=steps {
            beta.push(1.0 - alpha_bar[t] / alpha_bar[t - 1]);
        }
        Ok(Self {
            steps,
            inference_steps,
            noise_scale,
            alpha_low,
            alpha_up,
            one_minus_alpha_bar,
            alpha_bar,
            beta,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn inference_steps(&self) -> usize {
        self.inference_steps
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn alpha_low(&self) -> f64 {
        self.alpha_low
    }

    pub fn alpha_up(&self) -> f64 {
        self.alpha_up
    }

    /// `ᾱ_t` for `t = 0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.one_minus_alpha_bar[t]
    }

    /// `β_t = 1 − ᾱ_t / ᾱ_{t−1}` for `t = 1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    /// Per-step `α_t = 1 − β_t`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar[t] / self.alpha_bar[t - 1]
    }

    /// `σ̃_t² = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta[t] * self.one_minus_alpha_bar[t - 1] / self.one_minus_alpha_bar[t]
    }

    /// Signal-to-noise ratio `ᾱ_t / (1 − ᾱ_t)` for `t ≥ 1`.
    pub fn snr(&self, t: usize) -> f64 {
        self.alpha_bar[t] / self.one_minus_alpha_bar[t]
    }

    /// Weight of the squared reconstruction error at step `t`: one at the
    /// first step, `½(SNR_{t−1} − SNR_t)` after it.
    pub fn elbo_weight(&self, t: usize) -> f64 {
        if t == 1 {
            1.0
        } else {
            0.5 * (self.snr(t - 1) - self.snr(t))
        }
    }

    /// Coefficients `(c0, ct)` of the posterior mean `c0·χ̂_0 + ct·χ_t`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        if t == 1 {
            return (1.0, 0.0);
        }
        let denom = self.one_minus_alpha_bar[t];
        let c0 = self.alpha_bar[t - 1].sqrt() * self.beta[t] / denom;
        let ct = self.alpha(t).sqrt() * self.one_minus_alpha_bar[t - 1] / denom;
        (c0, ct)
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::DrawKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The call is left out of the plan.
    Omit,
    /// A sibling tool of the same role is called instead.
    WrongTool,
    /// The line loses its closing parenthesis.
    Malformed,
    /// One back-reference is replaced by `"none"`.
    DropDependency,
}

/// Relative weights of the error kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMix {
    pub omit: f64,
    pub wrong_tool: f64,
    pub malformed: f64,
    #[serde(default)]
    pub drop_dependency: f64,
}

impl Default for ErrorMix {
    fn default() -> Self {
        Self {
            omit: 1.0,
            wrong_tool: 1.0,
            malformed: 1.0,
            drop_dependency: 0.0,
        }
    }
}

impl ErrorMix {
    pub fn only(kind: ErrorKind) -> Self {
        let mut mix = Self {
            omit: 0.0,
            wrong_tool: 0.0,
            malformed: 0.0,
            drop_dependency: 0.0,
        };
        *mix.weight_mut(kind) = 1.0;
        mix
    }

    fn weight_mut(&mut self, kind: ErrorKind) -> &mut f64 {
        match kind {
            ErrorKind::Omit => &mut self.omit,
            ErrorKind::WrongTool => &mut self.wrong_tool,
            ErrorKind::Malformed => &mut self.malformed,
            ErrorKind::DropDependency => &mut self.drop_dependency,
        }
    }

    fn weights(&self) -> [(ErrorKind, f64); 4] {
        [
            (ErrorKind::Omit, self.omit),
            (ErrorKind::WrongTool, self.wrong_tool),
            (ErrorKind::Malformed, self.malformed),
            (ErrorKind::DropDependency, self.drop_dependency),
        ]
    }
}

/// Per-call planning error probability with few-shot relief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub eps: f64,
    pub mix: ErrorMix,
    /// Multiplier applied to `eps` per relevant retrieved experience.
    pub relief: f64,
    pub eps_min: f64,
    /// Cosine similarity at which a retrieved experience counts as relevant.
    pub relevance: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            eps: 0.05,
            mix: ErrorMix::default(),
            relief: 0.5,
            eps_min: 0.005,
            relevance: 0.5,
        }
    }
}

impl ErrorModel {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.eps) || !unit(self.eps_min) || !unit(self.relief) || !unit(self.relevance) {
            return Err("eps, eps_min, relief and relevance must lie in [0, 1]".into());
        }
        let w = self.mix.weights();
        if w.iter().any(|(_, x)| !(x.is_finite() && *x >= 0.0)) {
            return Err("error mix weights must be finite and non-negative".into());
        }
        if self.eps > 0.0 && w.iter().all(|(_, x)| *x == 0.0) {
            return Err("error mix has no positive weight".into());
        }
        Ok(())
    }

    /// `min(eps, max(eps_min, eps * relief^relevant))`.
    pub fn effective_eps(&self, relevant: usize) -> f64 {
        if relevant == 0 {
            return self.eps;
        }
        let relieved = self.eps * self.relief.powi(relevant.min(i32::MAX as usize) as i32);
        self.eps.min(self.eps_min.max(relieved))
    }

    /// One draw: `None` for a correct call, otherwise the error kind.
    pub fn draw(&self, key: DrawKey, eps: f64) -> Option<ErrorKind> {
        let mut rng = key.rng();
        if rng.gen::<f64>() >= eps {
            return None;
        }
        let weights = self.mix.weights();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut pick = rng.gen::<f64>() * total;
        for (kind, w) in weights {
            if w > 0.0 && pick < w {
                return Some(kind);
            }
            pick -= w;
        }
        weights.iter().rev().find(|(_, w)| *w > 0.0).map(|(k, _)| *k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_relevant_experience_halves_eps() {
        let m = ErrorModel::default();
        assert_eq!(m.effective_eps(0), 0.05);
        assert_eq!(m.effective_eps(1), 0.025);
        assert_eq!(m.effective_eps(2), 0.0125);
        assert_eq!(m.effective_eps(10), 0.005);
        assert_eq!(ErrorModel::with_eps(0.0).effective_eps(3), 0.0);
        // The floor never raises eps above its configured value.
        assert_eq!(ErrorModel::with_eps(0.001).effective_eps(1), 0.001);
    }

    #[test]
    fn forced_draws() {
        let mut m = ErrorModel::with_eps(1.0);
        m.mix = ErrorMix::only(ErrorKind::Omit);
        for i in 0..50 {
            assert_eq!(m.draw(DrawKey::new("t").u64(i), 1.0), Some(ErrorKind::Omit));
            assert_eq!(m.draw(DrawKey::new("t").u64(i), 0.0), None);
        }
    }

    #[test]
    fn mix_is_roughly_even() {
        let m = ErrorModel::default();
        let mut counts = [0usize; 4];
        for i in 0..3000 {
            match m.draw(DrawKey::new("mix").u64(i), 1.0).unwrap() {
                ErrorKind::Omit => counts[0] += 1,
                ErrorKind::WrongTool => counts[1] += 1,
                ErrorKind::Malformed => counts[2] += 1,
                ErrorKind::DropDependency => counts[3] += 1,
            }
        }
        assert_eq!(counts[3], 0);
        // Binomial(3000, 1/3): sd ~ 25.8, allow 4 sd.
        for c in &counts[..3] {
            assert!((*c as f64 - 1000.0).abs() < 104.0, "{counts:?}");
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        assert!(ErrorModel::with_eps(1.5).validate().is_err());
        let mut m = ErrorModel::default();
        m.mix = ErrorMix {
            omit: 0.0,
            wrong_tool: 0.0,
            malformed: 0.0,
            drop_dependency: 0.0,
        };
        assert!(m.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Full Leslie stress.
    Full,
    /// Leslie stress replaced by `nu (grad v, grad a)`.
    Simplified,
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Model::Full),
            "simplified" => Ok(Model::Simplified),
            other => Err(format!("unknown model `{other}` (expected full or simplified)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid parameters: {0}")]
pub struct ParamError(pub String);

/// Model and discretization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub mu1: f64,
    pub mu4: f64,
    pub mu5_plus_mu6: f64,
    pub lambda: f64,
    pub nu: f64,
    /// Elastic constant `A`.
    pub a: f64,
    pub v_el: f64,
    pub k: f64,
    pub theta: f64,
    pub t_end: f64,
    pub model: Model,
}

impl Params {
    pub fn validate(&self) -> Result<(), ParamError> {
        let l2 = self.lambda * self.lambda;
        let finite = [self.mu1, self.mu4, self.mu5_plus_mu6, self.lambda, self.nu, self.a, self.v_el, self.k, self.t_end];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(ParamError("all coefficients must be finite".into()));
        }
        if !(self.k > 0.0) {
            return Err(ParamError(format!("time step k = {} must be positive", self.k)));
        }
        if !(self.theta > 0.0) {
            return Err(ParamError(format!("fixed-point tolerance theta = {} must be positive", self.theta)));
        }
        if self.a < 0.0 || self.v_el < 0.0 {
            return Err(ParamError("A and v_el must be nonnegative".into()));
        }
        match self.model {
            Model::Full => {
                if !(self.mu4 > 0.0) {
                    return Err(ParamError(format!("mu4 = {} must be positive", self.mu4)));
                }
                if self.mu5_plus_mu6 - l2 < 0.0 {
                    return Err(ParamError("mu5 + mu6 - lambda^2 must be nonnegative".into()));
                }
                if self.mu1 + l2 < 0.0 {
                    return Err(ParamError("mu1 + lambda^2 must be nonnegative".into()));
                }
            }
            Model::Simplified => {
                if !(self.nu > 0.0) {
                    return Err(ParamError(format!("nu = {} must be positive", self.nu)));
                }
            }
        }
        Ok(())
    }

    /// Coefficient of `(d . S d)^2` in the dissipative form.
    pub fn c_mu1(&self) -> f64 {
        match self.model {
            Model::Full => self.v_el * (self.mu1 + self.lambda * self.lambda),
            Model::Simplified => 0.0,
        }
    }

    /// Coefficient of `|S d|^2` in the dissipative form.
    pub fn c_mu56(&self) -> f64 {
        match self.model {
            Model::Full => self.v_el * (self.mu5_plus_mu6 - self.lambda * self.lambda),
            Model::Simplified => 0.0,
        }
    }

    pub fn is_full(&self) -> bool {
        self.model == Model::Full
    }
}

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lime,
    Shap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    /// The explained sample's value for this feature (standardized space).
    pub value: f64,
    pub attribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub sample_id: usize,
    pub method: Method,
    /// Name of the explained output, e.g. `P(DoS)`.
    pub target: String,
    /// SHAP: mean model output over the background. LIME: surrogate intercept.
    pub base_value: f64,
    /// Model output at the explained sample.
    pub output: f64,
    pub attributions: Vec<Attribution>,
    /// Group names of the whole feature space, in order.
    pub feature_space: Vec<String>,
    pub settings: serde_json::Value,
    pub notes: Vec<String>,
}

impl ExplanationReport {
    pub fn attribution_sum(&self) -> f64 {
        self.attributions.iter().map(|a| a.attribution).sum()
    }

    /// `output − (base + Σφ)`; zero for an exact Shapley decomposition.
    pub fn efficiency_gap(&self) -> f64 {
        self.output - (self.base_value + self.attribution_sum())
    }
}

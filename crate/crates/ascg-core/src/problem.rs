//! On-disk problem descriptions: a polytope paired with an objective.

use serde::{Deserialize, Serialize};

use crate::objective::{CompositeObjective, ObjectiveError, ObjectiveSpec};
use crate::polyhedron::{Polytope, PolytopeError, PolytopeSpec};

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("objective dimension {objective} does not match polytope dimension {polytope}")]
    DimensionMismatch { objective: usize, polytope: usize },
}

/// Serializable description of a complete instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub polytope: PolytopeSpec,
    pub objective: ObjectiveSpec,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, ProblemError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build(&self) -> Result<Problem, ProblemError> {
        let polytope = Polytope::from_spec(&self.polytope)?;
        let objective = CompositeObjective::from_spec(&self.objective)?;
        if objective.dim() != polytope.dim() {
            return Err(ProblemError::DimensionMismatch {
                objective: objective.dim(),
                polytope: polytope.dim(),
            });
        }
        Ok(Problem {
            polytope,
            objective,
        })
    }
}

/// A constructed instance ready to solve.
#[derive(Debug)]
pub struct Problem {
    pub polytope: Polytope,
    pub objective: CompositeObjective,
}

impl Problem {
    /// Re-serialize; only quadratic inner functions are representable.
    pub fn to_spec(&self) -> Result<ProblemSpec, ProblemError> {
        Ok(ProblemSpec {
            polytope: self.polytope.to_spec(),
            objective: self.objective.to_spec()?,
        })
    }
}

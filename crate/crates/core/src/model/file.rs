//! On-disk model document: version, objective, class priors and weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::objective::Objective;
use super::train::TrainedModel;
use super::ModelError;
use crate::inference::ClassPriors;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub objective: Objective,
    pub priors: ClassPriors,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(objective: Objective, priors: ClassPriors, model: TrainedModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            objective,
            priors,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format_version {}, expected {MODEL_FORMAT_VERSION}",
                file.format_version
            )));
        }
        ClassPriors::new(file.priors.p_pos, file.priors.p_neg)
            .map_err(|e| ModelError::Format(e.to_string()))?;
        let two_tower = matches!(file.model, TrainedModel::TwoTower(_));
        if two_tower != (file.objective == Objective::TwoTower) {
            return Err(ModelError::Format(format!(
                "objective {} does not match the stored model kind",
                file.objective
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)
            .map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GcvaeParams, Hyperparams, TwoTowerModel};

    fn hp() -> Hyperparams {
        let mut hp = Hyperparams::new(4, 2);
        hp.d_z = 3;
        hp
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut params = GcvaeParams::init(hp(), 3).unwrap();
        params.tensors_mut()[0].values_mut()[0] = 0.1 + 0.2;
        params.tensors_mut()[0].values_mut()[1] = -1.0e-300;
        let file = ModelFile::new(
            Objective::Celbo,
            ClassPriors::new(61.0 / 102.0, 41.0 / 102.0).unwrap(),
            TrainedModel::Single { params },
        );
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        for (a, b) in back
            .model
            .params_for(crate::graph::Label::Pos)
            .tensors()
            .iter()
            .zip(file.model.params_for(crate::graph::Label::Pos).tensors())
        {
            let bits = |t: &crate::numerics::Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn two_tower_round_trip_via_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile::new(
            Objective::TwoTower,
            ClassPriors::uniform(),
            TrainedModel::TwoTower(TwoTowerModel {
                model_pos: GcvaeParams::init(hp(), 1).unwrap(),
                model_neg: GcvaeParams::init(hp(), 2).unwrap(),
            }),
        );
        file.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), file);
    }

    #[test]
    fn rejects_bad_documents() {
        let file = ModelFile::new(
            Objective::Celbo,
            ClassPriors::uniform(),
            TrainedModel::Single {
                params: GcvaeParams::init(hp(), 1).unwrap(),
            },
        );
        let mut v: serde_json::Value = serde_json::from_str(&file.to_json().unwrap()).unwrap();
        v["format_version"] = 99.into();
        assert!(ModelFile::from_json(&v.to_string()).is_err());
        v["format_version"] = 1.into();
        v["objective"] = "two-tower".into();
        assert!(ModelFile::from_json(&v.to_string()).is_err());
        v["objective"] = "celbo".into();
        v["priors"]["p_pos"] = 0.9.into();
        assert!(ModelFile::from_json(&v.to_string()).is_err());
        assert!(ModelFile::from_json("{").is_err());
    }
}

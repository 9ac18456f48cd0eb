use std::sync::Arc;

use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::{NormalizedImage, STANDARD_SIZE};

use super::{BackboneSpec, FeatureExtractor};

pub const INPUT_NAME: &str = "input";

type Plan = Arc<TypedRunnableModel>;

/// Backbone graph in ONNX format with a single `input` of shape
/// `1x3x224x224` (values in `[0, 1]`) and a single `1 x output_dim` output.
pub struct OnnxExtractor {
    spec: BackboneSpec,
    plan: Plan,
}

impl std::fmt::Debug for OnnxExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxExtractor").field("spec", &self.spec).finish_non_exhaustive()
    }
}

fn expected_input() -> Vec<usize> {
    vec![1, 3, STANDARD_SIZE, STANDARD_SIZE]
}

impl OnnxExtractor {
    pub fn load(spec: BackboneSpec) -> Result<Self> {
        let path = spec
            .graph_path
            .clone()
            .ok_or_else(|| Error::Precondition(format!("{} spec has no graph path", spec.id)))?;
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "graph file not found"),
            ));
        }
        let runtime = |e: TractError| Error::Runtime {
            backbone: spec.id,
            reason: format!("{}: {e:#}", path.display()),
        };

        let model = tract_onnx::onnx().model_for_path(&path).map_err(runtime)?;
        let typed = model.into_typed().map_err(runtime)?;
        if typed.inputs.len() != 1 || typed.outputs.len() != 1 {
            return Err(Error::Runtime {
                backbone: spec.id,
                reason: format!(
                    "graph must have one input and one output, found {} and {}",
                    typed.inputs.len(),
                    typed.outputs.len()
                ),
            });
        }
        let input_name = &typed.node(typed.inputs[0].node).name;
        if input_name != INPUT_NAME {
            return Err(Error::Runtime {
                backbone: spec.id,
                reason: format!("graph input is named `{input_name}`, expected `{INPUT_NAME}`"),
            });
        }
        let input_shape = concrete_shape(&typed.input_fact(0).map_err(runtime)?.shape);
        if input_shape.as_deref() != Some(expected_input().as_slice()) {
            return Err(Error::Shape {
                backbone: spec.id,
                expected: expected_input(),
                actual: input_shape.unwrap_or_default(),
            });
        }
        let output_shape = concrete_shape(&typed.output_fact(0).map_err(runtime)?.shape);
        if let Some(shape) = &output_shape {
            if shape.as_slice() != [1, spec.output_dim] {
                return Err(Error::Shape {
                    backbone: spec.id,
                    expected: vec![1, spec.output_dim],
                    actual: shape.clone(),
                });
            }
        }
        let plan = typed.into_optimized().map_err(runtime)?.into_runnable().map_err(runtime)?;
        Ok(OnnxExtractor { spec, plan })
    }
}

fn concrete_shape(shape: &ShapeFact) -> Option<Vec<usize>> {
    shape.as_concrete().map(|s| s.to_vec())
}

impl FeatureExtractor for OnnxExtractor {
    fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    fn extract(&self, image: &NormalizedImage) -> Result<Vec<f32>> {
        let runtime = |e: TractError| Error::Runtime {
            backbone: self.spec.id,
            reason: format!("{e:#}"),
        };
        let input = Tensor::from_shape(&expected_input(), &image.to_chw()).map_err(runtime)?;
        let outputs = self.plan.run(tvec!(input.into())).map_err(runtime)?;
        let view = outputs[0].try_as_plain_ram().map_err(runtime)?;
        Ok(view.as_slice::<f32>().map_err(runtime)?.to_vec())
    }
}

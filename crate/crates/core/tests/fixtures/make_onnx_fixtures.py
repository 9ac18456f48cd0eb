"""Builds the tiny ONNX graphs used by the real-extractor tests.

Each graph is GlobalAveragePool -> Flatten -> MatMul with a fixed 3 x D
matrix, so the expected output for a constant image is easy to compute:
out[j] = sum_c mean_c * W[c][j] with W[c][j] = ((c + 1) * (j + 1) % 7) / 7.

Run from this directory: python3 make_onnx_fixtures.py
"""

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper


def weights(dim):
    c = np.arange(1, 4).reshape(3, 1)
    j = np.arange(1, dim + 1).reshape(1, dim)
    return ((c * j) % 7).astype(np.float32) / np.float32(7.0)


def build(dim, side, path):
    w = numpy_helper.from_array(weights(dim), name="proj")
    nodes = [
        helper.make_node("GlobalAveragePool", ["input"], ["pooled"]),
        helper.make_node("Flatten", ["pooled"], ["flat"], axis=1),
        helper.make_node("MatMul", ["flat", "proj"], ["output"]),
    ]
    graph = helper.make_graph(
        nodes,
        "gap_projection",
        [helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, side, side])],
        [helper.make_tensor_value_info("output", TensorProto.FLOAT, [1, dim])],
        initializer=[w],
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, path)


if __name__ == "__main__":
    build(2048, 224, "gap_2048.onnx")
    build(1280, 224, "gap_1280.onnx")
    build(2016, 224, "gap_2016.onnx")
    build(2048, 32, "gap_2048_input32.onnx")

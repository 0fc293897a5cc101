"""Weight-file serialization (bit-exact JSON round trip)."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SchemaError
from .ir import (
    AffineLayer,
    DeepSetModel,
    EmbeddingTransformerModel,
    ReluMLP,
    TransformerModel,
    UniformAttentionBlock,
)
from .numerics import Dyadic

SCHEMA_VERSION = 1


def _matrix_to_json(rows):
    return [[entry.to_json() for entry in row] for row in rows]


def _matrix_from_json(rows):
    return tuple(tuple(Dyadic.from_json(entry) for entry in row) for row in rows)


def _layer_to_json(layer: AffineLayer) -> dict:
    return {
        "activation": layer.activation,
        "weights": _matrix_to_json(layer.weights),
        "bias": [b.to_json() for b in layer.bias],
    }


def _layer_from_json(obj: dict) -> AffineLayer:
    return AffineLayer(
        weights=_matrix_from_json(obj["weights"]),
        bias=tuple(Dyadic.from_json(b) for b in obj["bias"]),
        activation=obj["activation"],
    )


def _mlp_to_json(net: ReluMLP) -> list:
    return [_layer_to_json(layer) for layer in net.layers]


def _mlp_from_json(obj: list) -> ReluMLP:
    return ReluMLP(tuple(_layer_from_json(layer) for layer in obj))


def model_to_json(model, header: dict | None = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "header": header or {}}
    if isinstance(model, TransformerModel):
        doc["kind"] = "transformer"
        doc["mode"] = model.mode
        doc["e_in"] = _layer_to_json(model.e_in)
        doc["ff1"] = _mlp_to_json(model.ff1)
        doc["ua"] = {"proj_value_product": _matrix_to_json(model.ua.proj_value_product)}
        doc["ff2"] = _mlp_to_json(model.ff2)
        doc["e_out"] = _layer_to_json(model.e_out)
    elif isinstance(model, EmbeddingTransformerModel):
        doc["kind"] = "embedding_transformer"
        doc["mode"] = model.mode
        doc["embedding"] = _matrix_to_json(model.embedding)
        doc["ua"] = {"proj_value_product": _matrix_to_json(model.ua.proj_value_product)}
        doc["ff2"] = _mlp_to_json(model.ff2)
        doc["e_out"] = _layer_to_json(model.e_out)
    elif isinstance(model, DeepSetModel):
        doc["kind"] = "deepset"
        doc["phi"] = _mlp_to_json(model.phi)
        doc["rho"] = _mlp_to_json(model.rho)
    else:
        raise SchemaError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_json(doc: dict):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {doc.get('schema_version')!r}")
    kind = doc.get("kind")
    try:
        if kind == "transformer":
            return TransformerModel(
                e_in=_layer_from_json(doc["e_in"]),
                ff1=_mlp_from_json(doc["ff1"]),
                ua=UniformAttentionBlock(_matrix_from_json(doc["ua"]["proj_value_product"])),
                ff2=_mlp_from_json(doc["ff2"]),
                e_out=_layer_from_json(doc["e_out"]),
                mode=doc["mode"],
            )
        if kind == "embedding_transformer":
            return EmbeddingTransformerModel(
                embedding=_matrix_from_json(doc["embedding"]),
                ua=UniformAttentionBlock(_matrix_from_json(doc["ua"]["proj_value_product"])),
                ff2=_mlp_from_json(doc["ff2"]),
                e_out=_layer_from_json(doc["e_out"]),
                mode=doc["mode"],
            )
        if kind == "deepset":
            return DeepSetModel(phi=_mlp_from_json(doc["phi"]),
                                rho=_mlp_from_json(doc["rho"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed weight file: {exc}") from exc
    raise SchemaError(f"unknown model kind {kind!r}")


def save_weights(path: str | Path, model, header: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_json(model, header), indent=1))


def load_weights(path: str | Path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read weight file {path}: {exc}") from exc
    return model_from_json(doc), doc.get("header", {})

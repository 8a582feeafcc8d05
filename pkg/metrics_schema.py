"""
JSON Schema definitions for every JSON artifact the commands write.
utils/reports.py validates payloads against these before writing them.
"""

_nullable_number = {"type": ["number", "null"]}

metrics_schema = {
    "info": {
        "title": "novelcat artifacts",
        "description": "Run manifests, dataset manifests, epoch metric lines, evaluation and pseudo-label reports.",
        "version": "1.2.0",
    },
    "definitions": {
        "Manifest": {
            "type": "object",
            "required": ["command", "config", "datasetHash", "version", "layout"],
            "properties": {
                "command": {"type": "string", "example": "cal"},
                "config": {"type": "object"},
                "datasetHash": {"type": ["string", "null"], "example": "9f2c…"},
                "version": {"type": "string", "example": "novelcat-1.2.0"},
                "layout": {"type": "object", "additionalProperties": {"type": "string"}},
            },
        },
        "Dataset": {
            "type": "object",
            "required": ["numClasses", "numSamples", "dim", "generation"],
            "properties": {
                "numClasses": {"type": "integer", "minimum": 1},
                "numSamples": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 2},
                "knownClasses": {"type": "array", "items": {"type": "integer"}},
                "labelingRatio": {"type": "number"},
                "numLabeled": {"type": "integer"},
                "subsetCounts": {"type": "object"},
                "generation": {"type": "object"},
                "split": {"type": "object"},
            },
        },
        "EpochMetrics": {
            "type": "object",
            "required": ["stage", "epoch", "loss", "lr", "val"],
            "properties": {
                "stage": {"type": "integer", "enum": [1, 2]},
                "epoch": {"type": "integer", "minimum": 0},
                "loss": {"type": "number"},
                "lr": {"type": "number"},
                "anchorWeight": {"type": "number"},
                "memory": {"type": "object"},
                "val": {
                    "type": "object",
                    "required": ["accKnown", "silhouetteNew", "score"],
                    "properties": {
                        "accKnown": _nullable_number,
                        "silhouetteNew": _nullable_number,
                        "score": {"type": "number"},
                    },
                },
            },
        },
        "AccuracyReport": {
            "type": "object",
            "required": ["protocol", "numEvaluated", "accAll", "accKnown", "accNew", "mapping"],
            "properties": {
                "protocol": {"type": "string", "enum": ["transductive", "inductive"]},
                "numEvaluated": {"type": "integer", "minimum": 1},
                "accAll": {"type": "number", "minimum": 0, "maximum": 1},
                "accKnown": _nullable_number,
                "accNew": _nullable_number,
                "knownStar": _nullable_number,
                "newStar": _nullable_number,
                "nmi": _nullable_number,
                "ari": _nullable_number,
                "knnPrecision": _nullable_number,
                "silhouetteNew": _nullable_number,
                "mapping": {"type": "object", "additionalProperties": {"type": "integer"}},
            },
        },
        "PseudoLabelReport": {
            "type": "object",
            "required": ["threshold", "thresholdDegenerate", "nodes", "edges",
                         "labelForcedPositive", "labelForcedNegative"],
            "properties": {
                "threshold": _nullable_number,
                "thresholdDegenerate": {"type": "boolean"},
                "nodes": {"type": "integer"},
                "edges": {"type": "integer"},
                "labelForcedPositive": {"type": "integer"},
                "labelForcedNegative": {"type": "integer"},
                "k": {"type": "integer"},
                "eta": {"type": "integer"},
                "quantileLevel": {"type": "number"},
                "precision": _nullable_number,
                "recall": _nullable_number,
            },
        },
    },
}


def definition(name):
    return metrics_schema["definitions"][name]

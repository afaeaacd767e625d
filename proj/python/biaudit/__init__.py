# python/biaudit/__init__.py

# Copyright 2026  The biaudit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#  http://www.apache.org/licenses/LICENSE-2.0
#
# THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
# KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
# WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
# MERCHANTABLITY OR NON-INFRINGEMENT.
# See the Apache 2 License for the specific language governing permissions and
# limitations under the License.

"""Fairness and privacy audit for speaker-verification models."""

import json as _json

from ._biaudit import (  # noqa: F401
    BiauditError,
    RunConfig,
    auc,
    aufdr,
    cosine_score,
    eer,
    fad,
    fdr,
    fdr_curve,
    lambda_activation,
    normalized_fad,
    pca_fit,
    roc,
)
from ._biaudit import run_pipeline as _run_pipeline


def run_pipeline(config):
    """Run every stage and return the report manifest as a dict."""
    return _json.loads(_run_pipeline(config))


__all__ = [
    "BiauditError", "RunConfig", "auc", "aufdr", "cosine_score", "eer", "fad", "fdr",
    "fdr_curve", "lambda_activation", "normalized_fad", "pca_fit", "roc", "run_pipeline",
]

"""Efficient and dot-product attention with a resource model."""

from ._core import (
    Comparison,
    GradCheckReport,
    ResourceEstimate,
    compare,
    dot_product_attention,
    efficient_attention,
    estimate,
    global_context,
    gradcheck,
    init_weights,
    module_forward,
    template_attention_maps,
)

__all__ = [
    "Comparison",
    "GradCheckReport",
    "ResourceEstimate",
    "compare",
    "dot_product_attention",
    "efficient_attention",
    "estimate",
    "global_context",
    "gradcheck",
    "init_weights",
    "module_forward",
    "template_attention_maps",
]

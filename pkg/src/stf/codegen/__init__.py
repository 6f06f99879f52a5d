"""Code generation: deployment bundles and template-pack source trees."""

from stf.codegen.bundle import (BUNDLE_FORMAT_VERSION, BundleError, BundleProgram, GenerationError,
                                dumps_bundle, generate_bundle, instantiate_bundle, load_bundle,
                                model_hash, run_bundle)
from stf.codegen.templates import (SLOTS, TemplateError, TemplatePack, check_tree,
                                   generate_sources, load_pack, render)

__all__ = [
    "BUNDLE_FORMAT_VERSION", "BundleError", "BundleProgram", "GenerationError", "SLOTS",
    "TemplateError", "TemplatePack", "check_tree", "dumps_bundle", "generate_bundle",
    "generate_sources", "instantiate_bundle", "load_bundle", "load_pack", "model_hash", "render",
    "run_bundle",
]

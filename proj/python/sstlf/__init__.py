"""Semantic see-through light-field rendering."""

from ._core import (  # noqa: F401
    Calibration,
    Error,
    LightField,
    depth_weight,
    entropy,
    entropy_map,
    hcsm,
    lf_disparity,
    load_lightfield,
    map_labels,
    normalize_weights,
    read_pfm,
    refine_labels,
    refocus,
    run_pipeline,
    save_lightfield,
    score_threshold,
    semantic_weight,
    sst_render,
    synth_dataset,
    synth_scene,
    write_pfm,
)

__all__ = [name for name in dir() if not name.startswith("_")]

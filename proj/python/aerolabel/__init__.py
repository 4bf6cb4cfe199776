"""Semantic labels for aerial frames from georeferenced land cover."""

from ._aerolabel import (
    ConfigError,
    CrfParams,
    DataError,
    MaskSet,
    NumericalError,
    Raster,
    __version__,
    argmax_bands,
    boundary_loss,
    command_names,
    felzenszwalb,
    miou,
    read_raster,
    refine,
    refine_lulc,
    resolved_config,
    rle_decode,
    rle_encode,
    run_command,
    slic,
    upsample_argmax,
    write_raster,
)

__all__ = [
    "ConfigError",
    "CrfParams",
    "DataError",
    "MaskSet",
    "NumericalError",
    "Raster",
    "__version__",
    "argmax_bands",
    "boundary_loss",
    "command_names",
    "felzenszwalb",
    "miou",
    "read_raster",
    "refine",
    "refine_lulc",
    "resolved_config",
    "rle_decode",
    "rle_encode",
    "run_command",
    "slic",
    "upsample_argmax",
    "write_raster",
]

from .config import ConfigError, ExperimentConfig, default_config_path, load, parse
from .report import MissingArtifact, report
from .run import RunManifest, StageError, output_root, run, run_spectral

__all__ = ["ConfigError", "ExperimentConfig", "MissingArtifact", "RunManifest", "StageError",
           "default_config_path", "load", "output_root", "parse", "report", "run", "run_spectral"]

from .run_config import RunConfig, build_run_config, load_config_file

__all__ = ['RunConfig', 'build_run_config', 'load_config_file']

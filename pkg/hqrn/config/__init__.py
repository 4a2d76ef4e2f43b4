"""Packaged default settings for the HQRN package."""

from ..configuration import HQRConfig, get_config, set_config

__all__ = [
    'HQRConfig',
    'get_config',
    'set_config',
]

"""
sllg_fem module.
"""
import importlib.metadata

from sllg_fem.constants import DEVELOPMENT_VERSION

try:
    __version__ = importlib.metadata.version("sllg-fem")
except importlib.metadata.PackageNotFoundError:
    __version__ = DEVELOPMENT_VERSION

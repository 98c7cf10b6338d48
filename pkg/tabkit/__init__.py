# tabkit/__init__.py
"""
Tabular Modelling Toolkit

Stacked classifiers, local interpretation, GAN and LLM synthetic data
generation, and synthetic-data fidelity checks. Every module reads its
defaults from the top-level config.py and shares the error types in utils.py.
"""

import os
import sys

# Add parent directory to path so modules can import config and utils
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import TOOL_VERSION

from . import numkit
from . import data
from . import metrics
from . import models
from . import ensembles  # registers lrforest / svtree with the model registry
from . import medley
from . import tabgan
from . import syneval
from . import llmgen

__version__ = TOOL_VERSION

__all__ = [
    'numkit',
    'data',
    'metrics',
    'models',
    'ensembles',
    'medley',
    'tabgan',
    'syneval',
    'llmgen',
]

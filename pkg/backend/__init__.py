"""
Spray Metrizer Backend Package
==============================

Command-line surface, settings, scenario and registry services, and the
structured run logger.

Author: Alfred Munga
License: MIT
"""

__version__ = "0.1.0"
__author__ = "Alfred Munga"

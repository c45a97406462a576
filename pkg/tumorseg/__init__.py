# -*- coding: utf-8 -*-

"""
Package containing the tumorseg application: a from-scratch 3D brain tumor
segmentation network with its training, evaluation and statistics tooling.
"""

__author__ = """tumorseg developers"""
__email__ = "tumorseg@users.noreply.github.com"
__version__ = "0.1.0"
__year__ = "2026"

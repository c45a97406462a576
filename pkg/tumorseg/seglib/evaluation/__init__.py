# -*- coding: utf-8 -*-

"""
Segmentation metrics, cross-validation splitting, and paired statistics.
"""

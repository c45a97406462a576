# -*- coding: utf-8 -*-

"""
This package implements the segmentation network, its data pipeline,
training, and evaluation.
"""

# -*- coding: utf-8 -*-

"""
Numeric kernels with hand-written backward passes, and the layers, blocks
and network assembled from them.
"""

# -*- coding: utf-8 -*-

"""
Volume files, cases, preprocessing, augmentation and synthetic phantoms.

Real scans are converted to .avol outside this package; any reader that
produces a (D, H, W) float32 array per modality and a uint8 label volume
can feed `write_case`.
"""

# -*- coding: utf-8 -*-

"""
Provides a context for test files so the package's files will be resolved properly
"""

import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# the full-resolution forward pass and the long training run take minutes
SLOW_TESTS = os.environ.get("TUMORSEG_SLOW_TESTS") == "1"

FOLD_TABLE_COLUMNS = ["fold",
                      "dice_wt", "dice_tc", "dice_et",
                      "hd_wt", "hd_tc", "hd_et",
                      "sens_wt", "sens_tc", "sens_et",
                      "spec_wt", "spec_tc", "spec_et"]

# Published five-fold results of the attention model ...
PROPOSED_FOLDS = [
    [1, 0.9216, 0.8506, 0.8219, 1.4021, 2.8624, 6.9510, 0.9312, 0.8848, 0.8449, 0.9191, 0.8640, 0.8458],
    [2, 0.9212, 0.8435, 0.8204, 1.5128, 3.0682, 6.9243, 0.9214, 0.9013, 0.8421, 0.9269, 0.8393, 0.8500],
    [3, 0.9314, 0.8386, 0.7730, 0.8930, 3.2084, 16.1447, 0.9338, 0.8942, 0.8476, 0.9320, 0.8416, 0.8003],
    [4, 0.9231, 0.8534, 0.7925, 1.2530, 2.8359, 11.3218, 0.9322, 0.8903, 0.8276, 0.9216, 0.8604, 0.8391],
    [5, 0.9172, 0.8284, 0.7963, 1.5535, 3.2397, 11.3021, 0.9172, 0.8689, 0.8454, 0.9270, 0.8471, 0.8247],
]

# ... and of the plain 3D U-Net baseline on the same folds
BASELINE_FOLDS = [
    [1, 0.8897, 0.7593, 0.6994, 2.3118, 4.7868, 17.4723, 0.9109, 0.8129, 0.7755, 0.8830, 0.7931, 0.7593],
    [2, 0.8947, 0.7608, 0.6995, 1.9869, 4.8476, 17.6157, 0.8964, 0.7864, 0.7690, 0.9014, 0.8063, 0.7623],
    [3, 0.8953, 0.7632, 0.7105, 1.8619, 4.2071, 13.3497, 0.8994, 0.8056, 0.7714, 0.9006, 0.7841, 0.7626],
    [4, 0.8968, 0.7490, 0.6899, 2.0270, 5.0622, 18.0932, 0.9135, 0.8335, 0.7876, 0.8932, 0.7554, 0.7370],
    [5, 0.8914, 0.7472, 0.7090, 2.2766, 5.4035, 17.7841, 0.8997, 0.7823, 0.7732, 0.9007, 0.8036, 0.7740],
]

# two-tailed p-values reported for the Dice and Hausdorff columns
REPORTED_P = {"dice_wt": 0.000132, "dice_tc": 6.61e-5, "dice_et": 0.000902,
              "hd_wt": 0.000871, "hd_tc": 0.001174, "hd_et": 0.060994}
REPORTED_HD_D = {"hd_wt": -3.991, "hd_tc": -3.692, "hd_et": -1.156}

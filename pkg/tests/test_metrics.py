# -*- coding: utf-8 -*-

"""
Tests overlap, boundary and confusion metrics and their per-case and per-fold aggregation.
"""
import json
from unittest import TestCase

import numpy as np

from tumorseg.seglib.data.case import Case
from tumorseg.seglib.errors import ShapeError, UndefinedMetricError
from tumorseg.seglib.evaluation import metrics


def tally(pred, truth):
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for p, t in zip(pred.reshape(-1), truth.reshape(-1)):
        key = ("t" if p == t else "f") + ("p" if p else "n")
        counts[key] += 1
    return counts


def labelled_case(label: np.ndarray, case_id: str = "c") -> Case:
    modalities = np.zeros((4,) + label.shape, dtype=np.float32)
    return Case(case_id, modalities, label.astype(np.uint8))


class TestDice(TestCase):
    """
    Tests the Dice coefficient.
    """

    def test_values(self):
        """
        Ensure Dice is 2|X n Y| / (|X| + |Y|), and 1 for two empty masks.
        """
        self.assertEqual(metrics.dice(np.array([1, 1, 0, 0]), np.array([1, 0, 1, 0])), 0.5)
        self.assertEqual(metrics.dice(np.zeros(5), np.zeros(5)), 1.0)
        self.assertEqual(metrics.dice(np.ones(5), np.zeros(5)), 0.0)
        with self.assertRaises(ShapeError):
            metrics.dice(np.zeros(4), np.zeros(5))


class TestHausdorff(TestCase):
    """
    Tests the exact and 95th percentile Hausdorff distances.
    """

    def test_pythagorean(self):
        """
        Ensure two single voxels 3 and 4 apart along two axes are 5 apart.
        """
        pred = np.zeros((1, 4, 5), dtype=bool)
        truth = np.zeros_like(pred)
        pred[0, 0, 0] = True
        truth[0, 3, 4] = True
        for method in ("brute", "edt"):
            with self.subTest(msg=method):
                self.assertEqual(metrics.hausdorff(pred, truth, method=method), 5.0)

    def test_methods_agree(self):
        """
        Ensure all-pairs and distance-transform evaluation give the same distances on random masks.
        """
        rng = np.random.default_rng(0)
        for trial in range(200):
            shape = tuple(rng.integers(2, 9, size=3))
            pred = rng.random(shape) < rng.uniform(0.05, 0.6)
            truth = rng.random(shape) < rng.uniform(0.05, 0.6)
            if not pred.any() or not truth.any():
                continue
            with self.subTest(msg=f"trial {trial}"):
                for percentile in (100, 95):
                    brute = metrics.hausdorff(pred, truth, percentile, method="brute")
                    edt = metrics.hausdorff(pred, truth, percentile, method="edt")
                    self.assertAlmostEqual(brute, edt, places=12)

    def test_properties(self):
        """
        Ensure the distance is symmetric, zero for identical masks and HD95 never exceeds it.
        """
        rng = np.random.default_rng(1)
        pred = rng.random((8, 8, 8)) < 0.2
        truth = rng.random((8, 8, 8)) < 0.2
        hd = metrics.hausdorff(pred, truth)
        self.assertEqual(hd, metrics.hausdorff(truth, pred))
        self.assertLessEqual(metrics.hausdorff(pred, truth, 95), hd)
        self.assertEqual(metrics.hausdorff(pred, pred), 0.0)

    def test_outlier(self):
        """
        Ensure a single far voxel dominates HD but not HD95.
        """
        truth = np.zeros((1, 1, 60), dtype=bool)
        truth[0, 0, :40] = True
        pred = truth.copy()
        pred[0, 0, 59] = True
        self.assertEqual(metrics.hausdorff(pred, truth), 20.0)
        self.assertEqual(metrics.hausdorff(pred, truth, 95), 0.0)

    def test_undefined(self):
        """
        Ensure an empty mask makes the distance undefined.
        """
        truth = np.ones((2, 2, 2), dtype=bool)
        with self.assertRaises(UndefinedMetricError):
            metrics.hausdorff(np.zeros_like(truth), truth)
        with self.assertRaises(ValueError):
            metrics.hausdorff(truth, truth, method="kdtree")


class TestConfusion(TestCase):
    """
    Tests confusion counts, sensitivity and specificity.
    """

    def test_counts(self):
        """
        Ensure the vectorized counts match a voxel-by-voxel tally.
        """
        rng = np.random.default_rng(2)
        pred = rng.random((5, 6, 7)) < 0.4
        truth = rng.random((5, 6, 7)) < 0.3
        counts = metrics.confusion(pred, truth)
        self.assertEqual(vars(counts), tally(pred, truth))
        self.assertEqual(counts.total, pred.size)
        self.assertEqual(metrics.sensitivity(counts), counts.tp / (counts.tp + counts.fn))
        self.assertEqual(metrics.specificity(counts), counts.tn / (counts.tn + counts.fp))

    def test_undefined(self):
        """
        Ensure ratios without positives or negatives in the ground truth are undefined.
        """
        with self.assertRaises(UndefinedMetricError):
            metrics.sensitivity(metrics.confusion(np.ones(4), np.zeros(4)))
        with self.assertRaises(UndefinedMetricError):
            metrics.specificity(metrics.confusion(np.ones(4), np.ones(4)))


class TestEvaluateCase(TestCase):
    """
    Tests per-case reports and their aggregation.
    """

    def setUp(self):
        label = np.zeros((8, 8, 8), dtype=np.uint8)
        label[2:6, 2:6, 2:6] = 2
        label[3:5, 3:5, 3:5] = 1
        self.no_et = labelled_case(label, "no-et")
        label = label.copy()
        label[3, 3, 3] = 4
        self.full = labelled_case(label, "full")

    def test_perfect(self):
        """
        Ensure a prediction equal to the masks scores perfectly in every class.
        """
        report = metrics.evaluate_case(self.full.masks.astype(np.float32), self.full)
        for name in ("wt", "tc", "et"):
            with self.subTest(msg=name):
                self.assertEqual(report.dice[name], 1.0)
                self.assertEqual(report.hd[name], 0.0)
                self.assertEqual(report.hd95[name], 0.0)
                self.assertEqual(report.sensitivity[name], 1.0)
                self.assertEqual(report.specificity[name], 1.0)

    def test_sentinels(self):
        """
        Ensure an absent class records Dice 1 and undefined distances and sensitivity.
        """
        probs = self.no_et.masks.astype(np.float32)[np.newaxis]
        report = metrics.evaluate_case(probs, self.no_et)
        self.assertEqual(report.dice["et"], 1.0)
        self.assertIsNone(report.hd["et"])
        self.assertIsNone(report.hd95["et"])
        self.assertIsNone(report.sensitivity["et"])
        self.assertEqual(report.specificity["et"], 1.0)
        document = json.loads(json.dumps(report.to_dict()))
        self.assertIsNone(document["hd"]["et"])
        self.assertEqual(metrics.MetricReport.from_dict(document), report)

    def test_threshold(self):
        """
        Ensure probabilities are binarized strictly above the threshold.
        """
        probs = np.full((3, 8, 8, 8), 0.5, dtype=np.float32)
        report = metrics.evaluate_case(probs, self.full)
        self.assertEqual(report.sensitivity["wt"], 0.0)
        report = metrics.evaluate_case(probs, self.full, threshold=0.4)
        self.assertEqual(report.sensitivity["wt"], 1.0)
        with self.assertRaises(ShapeError):
            metrics.evaluate_case(probs[:2], self.full)

    def test_aggregate(self):
        """
        Ensure aggregation reports the mean and sample standard deviation and skips sentinels.
        """
        full = metrics.evaluate_case(self.full.masks.astype(np.float32), self.full)
        half = metrics.evaluate_case(np.zeros((3, 8, 8, 8), dtype=np.float32), self.full)
        no_et = metrics.evaluate_case(self.no_et.masks.astype(np.float32), self.no_et)
        summary = metrics.aggregate([full, half, no_et])
        dice_wt = summary["dice"]["wt"]
        self.assertAlmostEqual(dice_wt["mean"], 2 / 3, places=12)
        self.assertAlmostEqual(dice_wt["sd"], np.std([1, 0, 1], ddof=1), places=12)
        self.assertEqual((dice_wt["n"], dice_wt["excluded"]), (3, 0))
        self.assertEqual(summary["hd"]["et"]["n"], 1)
        self.assertEqual(summary["hd"]["et"]["excluded"], 2)
        self.assertEqual(summary["hd"]["et"]["sd"], 0.0)
        with self.subTest(msg="No defined values."):
            empty = metrics.aggregate([no_et])
            self.assertIsNone(empty["hd"]["et"]["mean"])
            self.assertIsNone(empty["hd"]["et"]["sd"])

        with self.subTest(msg="Fold row."):
            row = metrics.fold_row(summary, 2)
            self.assertEqual(list(row), list(metrics.FOLD_COLUMNS))
            self.assertEqual(row["fold"], 2)
            self.assertEqual(row["hd_wt"], summary["hd95"]["wt"]["mean"])

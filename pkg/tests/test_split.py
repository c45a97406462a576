# -*- coding: utf-8 -*-

"""
Tests stratification and the five-fold cross-validation split.
"""
import json
import tempfile
from collections import Counter
from pathlib import Path
from unittest import TestCase

import jsonschema
import numpy as np

from tests.utils import phantom_cases
from tumorseg.schemas import load_schema
from tumorseg.seglib.data.case import Case
from tumorseg.seglib.errors import CaseIOError, LabelError, SplitError
from tumorseg.seglib.evaluation import split
from tumorseg.seglib.evaluation.split import CaseStats


class TestStratify(TestCase):
    """
    Tests per-case statistics and stratum labels.
    """

    def test_case_stats(self):
        """
        Ensure subregion voxels are counted from the raw labels.
        """
        label = np.array([0, 1, 1, 2, 2, 2, 4], dtype=np.uint8).reshape(1, 1, 7)
        stats = split.case_stats(Case("a", np.zeros((4, 1, 1, 7), dtype=np.float32), label))
        self.assertEqual((stats.net, stats.ed, stats.et, stats.size), (2, 3, 1, 6))
        self.assertEqual(stats.dominant, "ed")
        with self.assertRaises(LabelError):
            split.case_stats(Case("b", np.zeros((4, 1, 1, 2), dtype=np.float32),
                                  np.array([[[0, 3]]], dtype=np.uint8)))

    def test_dominant_ties(self):
        """
        Ensure equal subregion counts resolve in the order NET, ED, ET.
        """
        self.assertEqual(CaseStats("a", 5, 5, 1).dominant, "net")
        self.assertEqual(CaseStats("b", 1, 5, 5).dominant, "ed")
        self.assertEqual(CaseStats("c", 0, 0, 0).dominant, "net")

    def test_tertiles(self):
        """
        Ensure sizes split into tertiles, with boundary sizes in the lower tertile.
        """
        stats = [CaseStats(f"c{s}", 0, s, 0) for s in range(1, 10)]
        strata = split.stratify(stats)
        self.assertEqual([strata[f"c{s}"] for s in range(1, 10)],
                         ["size0-ed"] * 3 + ["size1-ed"] * 3 + ["size2-ed"] * 3)
        with self.subTest(msg="Boundary."):
            strata = split.stratify([CaseStats(c, 0, s, 0) for c, s in [("a", 0), ("b", 3), ("c", 3), ("d", 6)]])
            self.assertEqual(strata, {"a": "size0-net", "b": "size0-ed", "c": "size0-ed", "d": "size2-ed"})
        self.assertEqual(split.stratify([]), {})


class TestKFold(TestCase):
    """
    Tests the fold assignment.
    """

    @classmethod
    def setUpClass(cls):
        cls.stats = [split.case_stats(c) for c in phantom_cases(60, size=16, seed=9)]
        cls.strata = split.stratify(cls.stats)
        cls.assignment = split.kfold_split(cls.strata, seed=0)

    def test_partition(self):
        """
        Ensure every fold splits the cases into disjoint subsets and no case is tested twice.
        """
        self.assignment.check_partition()
        self.assertEqual(len(self.assignment.folds), 5)
        for i, fold in enumerate(self.assignment.folds):
            with self.subTest(msg=f"fold {i}"):
                train, val, test = (set(fold[s]) for s in ("train", "val", "test"))
                self.assertFalse(train & val or train & test or val & test)
                self.assertEqual(train | val | test, set(self.strata))
                self.assertEqual(len(fold["train"]) + len(fold["val"]) + len(fold["test"]), len(self.strata))
        tested = Counter(cid for fold in self.assignment.folds for cid in fold["test"])
        self.assertLessEqual(max(tested.values()), 1)
        self.assertLessEqual(set(tested), set(self.strata))

    def test_stratum_shares(self):
        """
        Ensure every subset holds each stratum's share to within one case.
        """
        sizes = Counter(self.strata.values())
        shares = {"train": 0.8, "val": 0.1, "test": 0.1}
        for i, fold in enumerate(self.assignment.folds):
            for subset, share in shares.items():
                counts = Counter(self.strata[cid] for cid in fold[subset])
                for label, total in sizes.items():
                    with self.subTest(msg=f"fold {i} {subset} {label}"):
                        self.assertLessEqual(abs(counts[label] - share * total), 1.0)

    def test_deterministic(self):
        """
        Ensure the same seed gives the same folds and another seed different ones.
        """
        self.assertEqual(split.kfold_split(self.strata, seed=0).folds, self.assignment.folds)
        self.assertNotEqual(split.kfold_split(self.strata, seed=1).folds, self.assignment.folds)

    def test_minimum(self):
        """
        Ensure ten cases give one validation and one test case per fold, and fewer are refused.
        """
        strata = {f"c{i}": "size0-ed" for i in range(10)}
        assignment = split.kfold_split(strata, seed=3)
        for fold in assignment.folds:
            self.assertEqual([len(fold[s]) for s in ("train", "val", "test")], [8, 1, 1])
        strata.pop("c0")
        with self.assertRaises(SplitError):
            split.kfold_split(strata, seed=3)

    def test_fold_index(self):
        """
        Ensure fold indices outside 0..4 raise SplitError.
        """
        with self.assertRaises(SplitError):
            self.assignment.fold(5)
        self.assertEqual(self.assignment.fold(0), self.assignment.folds[0])

    def test_correlations_and_composition(self):
        """
        Ensure the split report carries correlations in [-1, 1] and subset totals.
        """
        corr = split.correlations(self.stats)
        self.assertEqual(set(corr), {"net", "ed", "et"})
        for value in corr.values():
            self.assertTrue(value is None or -1.0 <= value <= 1.0)
        self.assertGreater(corr["ed"], 0.0)
        composition = split.composition(self.assignment, self.stats)
        total_ed = sum(s.ed for s in self.stats)
        for entry in composition:
            self.assertEqual(sum(entry[s]["cases"] for s in ("train", "val", "test")), 60)
            self.assertEqual(sum(entry[s]["ed"] for s in ("train", "val", "test")), total_ed)
        with self.subTest(msg="Constant input."):
            flat = [CaseStats(f"c{i}", 1, i, 0) for i in range(5)]
            self.assertIsNone(split.correlations(flat)["net"])
            self.assertIsNone(split.correlations(flat)["et"])


class TestFoldAssignmentIO(TestCase):
    """
    Tests saving and loading fold assignments.
    """

    def test_roundtrip(self):
        """
        Ensure a saved assignment validates against its schema and loads back equal.
        """
        strata = {f"c{i:02d}": "size0-ed" if i % 2 else "size1-net" for i in range(20)}
        assignment = split.kfold_split(strata, seed=4)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "folds.json"
            assignment.save(path)
            with open(path) as f:
                jsonschema.validate(json.load(f), load_schema("folds"))
            self.assertEqual(split.FoldAssignment.load(path), assignment)

    def test_invalid(self):
        """
        Ensure missing, malformed and non-partitioning documents are rejected.
        """
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "folds.json"
            with self.subTest(msg="Missing."):
                with self.assertRaises(CaseIOError):
                    split.FoldAssignment.load(path)
            with self.subTest(msg="Not JSON."):
                path.write_text("[")
                with self.assertRaises(SplitError):
                    split.FoldAssignment.load(path)
            with self.subTest(msg="Missing key."):
                path.write_text(json.dumps({"seed": 0, "strata": {}}))
                with self.assertRaises(SplitError):
                    split.FoldAssignment.load(path)
            with self.subTest(msg="Case in two subsets."):
                document = {"seed": 0, "strata": {"a": "x", "b": "x"},
                            "folds": [{"train": ["a"], "val": ["a"], "test": ["b"]}]}
                with self.assertRaises(SplitError):
                    split.FoldAssignment.from_dict(document)

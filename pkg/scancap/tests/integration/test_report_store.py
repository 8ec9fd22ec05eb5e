"""
Integration tests for CSV reports.

PATTERNS SHOWCASED:
1. State-based Testing - Read the written file back with the csv module
"""

import csv

import pytest


@pytest.mark.integration
@pytest.mark.store
class TestCsvReport:
    """Integration tests for CsvReport.write."""

    def test_header_and_rows(self, csv_report):
        rows = [{"step": 0, "loss": 3.25}, {"step": 1, "loss": 2.5}]

        path = csv_report.write("loss_curve.csv", ["step", "loss"], rows)

        with open(path, encoding="utf-8", newline="") as fh:
            read = list(csv.DictReader(fh))
        assert read == [{"step": "0", "loss": "3.25"}, {"step": "1", "loss": "2.5"}]

    def test_empty_report_keeps_header(self, csv_report):
        path = csv_report.write("eval_curve.csv", ["epoch", "bleu1"], [])

        with open(path, encoding="utf-8") as fh:
            assert fh.read() == "epoch,bleu1\n"

    def test_overwrites_previous_report(self, csv_report):
        csv_report.write("r.csv", ["a"], [{"a": 1}, {"a": 2}])

        path = csv_report.write("r.csv", ["a"], [{"a": 3}])

        with open(path, encoding="utf-8") as fh:
            assert fh.read().splitlines() == ["a", "3"]

"""
CSV export for bars, features, datasets and evaluation/network results.

Every file is written with a fixed column order and "\\n" line endings so
identical inputs give byte-identical outputs.
"""

import json
import logging
import math
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from .evaluation import replicate_histogram
from .models import AucTestResult, BarSeries, Dataset, EdgeResult, FeatureFrame, MdaReport, MeasureSeries

logger = logging.getLogger(__name__)

BARS_COLUMNS = [
    "symbol", "date", "slot_start", "open", "close", "volume", "dollar_volume", "trade_count", "is_empty",
]
DENSITY_COLUMNS = ["window_start", "window_end", "measure", "density", "n_firms", "n_edges", "manifest_id"]
DEGREE_COLUMNS = ["firm", "in_degree", "out_degree", "std_in", "std_out"]
EDGE_COLUMNS = ["src", "dst", "auc1", "auc2", "diff", "s", "d", "p", "p_adj", "n_test", "fold_mode", "degenerate"]
HISTOGRAM_COLUMNS = ["src", "dst", "bin_left", "bin_right", "count"]


def write_json(payload: Dict[str, Any], path: str):
    """Sorted keys and fixed indentation keep reruns byte-identical."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


class CSVExporter:
    """Writes the pipeline's CSV schemas under one output directory."""

    def __init__(self, output_dir: str = "results"):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def _write(self, df: pd.DataFrame, filename: str) -> str:
        filepath = self._path(filename)
        df.to_csv(filepath, index=False, lineterminator="\n")
        logger.info(f"Exported {filename} ({len(df)} rows)")
        return filepath

    def export_bars(self, series: Mapping[str, BarSeries], filename: str = "bars.csv") -> str:
        frames = []
        for symbol in sorted(series):
            frame = series[symbol].frame.copy()
            frame.insert(0, "symbol", symbol)
            frame["slot_start"] = frame["slot_start"].map(lambda ts: ts.isoformat())
            frame["date"] = frame["date"].map(lambda d: d.isoformat())
            frames.append(frame[BARS_COLUMNS])
        df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=BARS_COLUMNS)
        return self._write(df, filename)

    def export_features(
        self,
        features: Mapping[str, FeatureFrame],
        measures: Mapping[str, MeasureSeries],
        filename: str = "features.csv",
    ) -> str:
        """One row per (symbol, bar): microstructure variables plus sigma and kurt."""
        frames = []
        for symbol in sorted(features):
            frame = features[symbol].frame.copy()
            if symbol in measures:
                m = measures[symbol].frame
                frame.insert(1, "slot_start", m["slot_start"].map(lambda ts: ts.isoformat()).to_numpy())
                frame["sigma"] = m["sigma"].to_numpy()
                frame["kurt"] = m["kurt"].to_numpy()
            frame.insert(0, "symbol", symbol)
            frames.append(frame)
        df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["symbol", "bar_index"])
        path = self._write(df, filename)

        sidecar = {
            symbol: {
                "lookback": ff.lookback,
                "bvc_sigma": ff.bvc_sigma,
                "bvc_sigma_mode": ff.bvc_sigma_mode.value,
                "diagnostics": ff.diagnostics,
            }
            for symbol, ff in sorted(features.items())
        }
        write_json(sidecar, os.path.splitext(path)[0] + ".json")
        return path

    def export_dataset(self, data: Dataset, name: str, manifest_id: Optional[str] = None) -> Tuple[str, str]:
        """Dataset CSV plus a JSON sidecar with the task descriptor and drop counts."""
        df = data.to_frame()
        df["timestamp"] = df["timestamp"].map(lambda ts: ts.isoformat())
        csv_path = self._write(df, f"{name}.csv")
        sidecar_path = self._path(f"{name}.json")
        write_json({
            "task": data.task.to_dict(),
            "feature_names": list(data.feature_names),
            "drop_counts": data.drop_counts,
            "rows": len(data),
            "manifest_id": manifest_id,
        }, sidecar_path)
        return csv_path, sidecar_path

    def export_roc(self, roc_points: pd.DataFrame, filename: str) -> str:
        return self._write(roc_points[["fpr", "tpr", "threshold"]], filename)

    def export_mda(self, report: MdaReport, filename: str = "mda.csv") -> str:
        return self._write(report.per_fold[["fold", "feature", "mda"]], filename)

    def export_auc_tests(self, tests: Mapping[Tuple[str, str], AucTestResult], filename: str = "tests.json") -> str:
        """Per-pair test results keyed ``src->dst``; a missing D is written as null."""
        payload = {
            f"{src}->{dst}": {
                k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in test.to_dict().items()
            }
            for (src, dst), test in sorted(tests.items())
        }
        path = self._path(filename)
        write_json(payload, path)
        logger.info(f"Exported {filename} ({len(payload)} tests)")
        return path

    def export_replicate_histograms(
        self,
        tests: Mapping[Tuple[str, str], AucTestResult],
        filename: str = "bootstrap_hist.csv",
        bins: int = 50,
    ) -> str:
        """Histogram of each pair's bootstrap AUC differences (src,dst,bin_left,bin_right,count)."""
        frames = []
        for (src, dst), test in sorted(tests.items()):
            hist = replicate_histogram(test, bins)
            hist.insert(0, "dst", dst)
            hist.insert(0, "src", src)
            frames.append(hist)
        df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=HISTOGRAM_COLUMNS)
        return self._write(df[HISTOGRAM_COLUMNS], filename)

    def export_degrees(self, degrees: pd.DataFrame, filename: str = "degrees.csv") -> str:
        return self._write(degrees[DEGREE_COLUMNS], filename)

    def export_density_series(self, rows: Iterable[Dict[str, Any]], filename: str = "density.csv") -> str:
        df = pd.DataFrame(list(rows), columns=DENSITY_COLUMNS)
        return self._write(df, filename)

    def export_edges(self, results: Iterable[EdgeResult], filename: str = "edges.csv") -> str:
        df = pd.DataFrame([r.to_dict() for r in results], columns=EDGE_COLUMNS)
        return self._write(df, filename)

    def export_pair_scores(self, scores: Optional[pd.DataFrame], filename: str = "scores.csv") -> Optional[str]:
        """Out-of-sample Model 1 / Model 2 scores per pair (src,dst,bar_index,label,p1,p2)."""
        if scores is None or scores.empty:
            return None
        return self._write(scores[["src", "dst", "bar_index", "label", "p1", "p2"]], filename)

    def export_table(self, df: pd.DataFrame, filename: str) -> str:
        return self._write(df, filename)


def read_edges_csv(path: str) -> List[EdgeResult]:
    df = pd.read_csv(path, dtype={"src": str, "dst": str})
    records = df.replace({np.nan: None}).to_dict("records")
    return [
        EdgeResult.from_dict({k: (float("nan") if v is None and k in ("s", "d", "p_adj") else v) for k, v in r.items()})
        for r in records
    ]

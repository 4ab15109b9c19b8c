import json
import os

import pandas as pd
from rich.table import Table

from fusion_framework.core.console import console
from fusion_framework.core.errors import InputError

HRV_METRICS = ["mean_hr_bpm", "sdnn_ms", "rmssd_ms", "lf_hf", "lf_norm_pct"]


def get_stats_dict(data) -> dict:
    data = pd.Series(data, dtype=float).dropna()
    if data.empty:
        return {
            "count": 0,
            "mean": None,
            "std": None,
            "min": None,
            "25%": None,
            "50%": None,
            "75%": None,
            "max": None,
        }
    stats = data.describe().to_dict()
    return {k: (None if pd.isna(v) else float(v)) for k, v in stats.items()}


def _read_csv(report_dir: str, name: str) -> pd.DataFrame:
    path = os.path.join(report_dir, name)
    if not os.path.exists(path):
        raise InputError(f"report file missing: {path}")
    return pd.read_csv(path)


def analyze_results(report_dir: str) -> dict:
    """
    Summarizes a report bundle into summary.json and prints it as tables.
    """
    hrv = _read_csv(report_dir, "hrv.csv")
    segments = _read_csv(report_dir, "segments.csv")
    movement = _read_csv(report_dir, "movement.csv")
    sync = _read_csv(report_dir, "sync.csv")
    geojson_path = os.path.join(report_dir, "colocation.geojson")
    if not os.path.exists(geojson_path):
        raise InputError(f"report file missing: {geojson_path}")
    with open(geojson_path, "r") as f:
        features = json.load(f).get("features", [])
    events = [f["properties"] for f in features if f["properties"].get("kind") == "colocation"]

    # --- Calculations ---
    hrv_by_subject = {
        device: {metric: get_stats_dict(group[metric]) for metric in HRV_METRICS}
        for device, group in hrv.groupby("device_id", sort=True)
    }
    segment_rows = [
        {
            "label": row.label,
            "duration_s": (row.end - row.start) / 1000.0,
            "group_elevation_bpm": float(row.group_elevation_bpm),
            "dispersion_bpm": float(row.dispersion_bpm),
            "moving": bool(row.moving),
        }
        for row in segments.itertuples(index=False)
    ]
    movement_by_subject = {
        device: {
            "intervals": int(len(group)),
            "displacement_m": get_stats_dict(group["displacement_m"]),
            "mean_speed_mps": get_stats_dict(group["mean_speed_mps"]),
        }
        for device, group in movement.groupby("device_id", sort=True)
    }
    colocation = [
        {
            "subject_ids": e["subject_ids"],
            "duration_s": (e["end_ts"] - e["start_ts"]) / 1000.0,
            "max_spread_m": e["max_spread_m"],
        }
        for e in events
    ]

    summary_data = {
        "analysis_info": {"report_dir": report_dir, "subjects": sorted(hrv["device_id"].unique().tolist())},
        "segments": segment_rows,
        "hrv": hrv_by_subject,
        "movement": movement_by_subject,
        "colocation": colocation,
        "sync": sync.to_dict(orient="records"),
    }

    summary_path = os.path.join(report_dir, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary_data, f, indent=4, sort_keys=True)
    console.print(f"Analysis summary saved to [green]{summary_path}[/green]")

    # --- Rich Console Output ---
    console.print("\n[bold underline]Analysis Summary[/bold underline]")

    table = Table(title="Activity Segments")
    table.add_column("Label", style="cyan")
    table.add_column("Duration (s)", style="magenta")
    table.add_column("Elevation (bpm)", style="yellow")
    table.add_column("Dispersion (bpm)", style="green")
    table.add_column("Moving", style="red")
    for row in segment_rows:
        table.add_row(
            row["label"],
            f"{row['duration_s']:.0f}",
            f"{row['group_elevation_bpm']:.2f}",
            f"{row['dispersion_bpm']:.2f}",
            "yes" if row["moving"] else "no",
        )
    console.print(table)

    table = Table(title="HRV per Subject (window means)")
    table.add_column("Subject", style="cyan")
    for metric in HRV_METRICS:
        table.add_column(metric, style="magenta")
    for device, stats in hrv_by_subject.items():
        table.add_row(
            device,
            *(f"{stats[m]['mean']:.2f}" if stats[m]["mean"] is not None else "-" for m in HRV_METRICS),
        )
    console.print(table)

    table = Table(title="Co-location Events")
    table.add_column("Subjects", style="cyan")
    table.add_column("Duration (s)", style="magenta")
    table.add_column("Max spread (m)", style="yellow")
    for event in colocation:
        table.add_row(", ".join(event["subject_ids"]), f"{event['duration_s']:.0f}", f"{event['max_spread_m']:.1f}")
    console.print(table)

    table = Table(title="Movement and Sync")
    table.add_column("Device", style="cyan")
    table.add_column("Movement intervals", style="magenta")
    table.add_column("Batch size (bits)", style="yellow")
    table.add_column("BLE sync (s)", style="green")
    table.add_column("Wi-Fi sync (s)", style="blue")
    for row in sync.itertuples(index=False):
        intervals = movement_by_subject.get(row.device_id, {}).get("intervals", 0)
        table.add_row(
            row.device_id, str(intervals), str(row.size_bits), f"{row.ble_sync_s:.1f}", f"{row.wifi_sync_s:.3f}"
        )
    console.print(table)
    return summary_data

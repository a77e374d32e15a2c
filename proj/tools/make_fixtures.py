#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under data/.

All production data here is synthetic. The Barcelona-like file is shaped so
that August matches the published hourly profile (t0 = 7, T = 18, hour 14
averaging 243/31 = 7.84 packets of 300 Wh); the five city files only mimic
the relative irradiance of their namesakes.
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

PACKET_WH = 300.0
DAYS = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]

# Mean August packets per hour for the Barcelona-like profile.
BARCELONA_AUGUST = {7: 0.90, 8: 2.10, 9: 3.60, 10: 5.10, 11: 6.30, 12: 7.20,
                    13: 7.70, 14: 7.84, 15: 7.30, 16: 6.10, 17: 4.20, 18: 1.90}
AUGUST_HOUR14_TOTAL = 243

# label -> (peak packets in the best month, seasonal swing in [0,1),
#           day length at the solstice in hours, solar noon hour, cloudiness)
CITIES = {
    "Rabat": (8.6, 0.30, 14.4, 14, 0.15),
    "Barcelona": (7.84, 0.45, 15.2, 14, 0.20),
    "Paris": (6.4, 0.62, 16.2, 14, 0.35),
    "Moscow": (5.8, 0.85, 17.5, 13, 0.35),
    "Unalaska": (3.6, 0.78, 17.8, 15, 0.55),
}


def month_shape(month, peak, swing, solstice_len, noon):
    """Hourly mean packets for one month of a city."""
    season = math.cos(2 * math.pi * (month - 6.5) / 12)  # +1 midsummer, -1 midwinter
    day_len = 12 + (solstice_len - 12) * season
    scale = peak * (1 - swing * (1 - season) / 2)
    means = {}
    for h in range(24):
        d = (h + 0.5 - noon) / (day_len / 2)
        means[h] = scale * max(0.0, math.cos(d * math.pi / 2)) ** 1.3 if abs(d) < 1 else 0.0
    return means


def sample_month(rng, means, days, cloudiness):
    """Packets per (day, hour) with a shared daily clearness factor."""
    clear = np.clip(rng.normal(1.0, cloudiness, size=days), 0.15, 1.3)
    packets = np.zeros((days, 24), dtype=int)
    for h, m in means.items():
        if m <= 0:
            continue
        raw = m * clear + rng.normal(0.0, 0.35, size=days)
        packets[:, h] = np.maximum(0, np.rint(raw)).astype(int)
    return packets


def force_total(rng, column, total):
    """Adjusts a day column by unit steps until it sums to `total`."""
    while column.sum() != total:
        step = 1 if column.sum() < total else -1
        candidates = np.arange(len(column)) if step > 0 else np.flatnonzero(column > 0)
        column[rng.choice(candidates)] += step


def to_watts(rng, packets, means):
    """Watts with floor(w / 300) == packets; sub-packet output in lit hours."""
    frac = rng.uniform(0.0, 0.999, size=packets.shape)
    lit = np.array([means.get(h, 0.0) > 0 for h in range(24)])
    watts = packets * PACKET_WH + frac * (PACKET_WH - 1.0)
    watts[:, ~lit] = np.where(packets[:, ~lit] > 0, watts[:, ~lit], 0.0)
    return np.round(watts, 3)


def write_pvwatts(path, label, rows):
    with open(path, "w", newline="\n") as f:
        f.write('"Requested Location","%s (synthetic)"\n' % label)
        f.write('"Data Source","synthetic fixture, not measured"\n')
        f.write('"DC System Size (kW)","4"\n\n')
        f.write('"Month","Day","Hour","Beam Irradiance (W/m^2)","AC System Output (W)"\n')
        for month, day, hour, w in rows:
            f.write("%d,%d,%d,%.1f,%.3f\n" % (month, day, hour, w * 0.25, w))


def city_rows(rng, label, peak, swing, solstice_len, noon, cloudiness, barcelona_august=False):
    rows = []
    for month in range(1, 13):
        days = DAYS[month - 1]
        means = month_shape(month, peak, swing, solstice_len, noon)
        if barcelona_august and month == 8:
            means = {h: BARCELONA_AUGUST.get(h, 0.0) for h in range(24)}
            # Dawn and dusk hours produce a little, always below one packet.
            means[6] = means[19] = 1e-9
        packets = sample_month(rng, means, days, cloudiness)
        if barcelona_august and month == 8:
            packets[:, 6] = 0
            packets[:, 19] = 0
            force_total(rng, packets[:, 14], AUGUST_HOUR14_TOTAL)
            for h in (7, 18):
                if packets[:, h].max() == 0:
                    packets[0, h] = 1
        watts = to_watts(rng, packets, means)
        if barcelona_august and month == 8:
            watts[:, 6] = np.round(rng.uniform(40.0, 280.0, size=days), 3)
            watts[:, 19] = np.round(rng.uniform(20.0, 250.0, size=days), 3)
        for d in range(days):
            for h in range(24):
                rows.append((month, d + 1, h, float(watts[d, h])))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=20240817)
    args = ap.parse_args()
    out = Path(args.out)
    (out / "cities").mkdir(parents=True, exist_ok=True)
    (out / "toy").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    write_pvwatts(out / "barcelona_like_pvwatts.csv", "Barcelona-like",
                  city_rows(rng, "Barcelona-like", *CITIES["Barcelona"], barcelona_august=True))

    scenarios = []
    for label, params in CITIES.items():
        name = label.lower() + "_synthetic.csv"
        write_pvwatts(out / "cities" / name, label + "-like", city_rows(rng, label, *params))
        scenarios.append({"location": label, "csv": name, "months": list(range(1, 13))})
    manifest = {
        "description": "Synthetic city-like profiles; not measured data.",
        "packet_size_wh": PACKET_WH,
        "model": {"C": 65, "F": 25, "alpha": 0.01, "beta": 0.95},
        "rewards": {"r1": 1, "r2": -100, "r3": -200, "g": "identity"},
        "service": "erlang-two-peak",
        "actions": [0.1, 0.3, 0.5, 0.7, 0.9],
        "scenarios": scenarios,
    }
    (out / "cities" / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    toy = {"month": 1, "packet_size_wh": PACKET_WH, "t0": 9, "T": 12,
           "distributions": {str(h): [1 / 3, 1 / 3, 1 / 3] for h in range(9, 13)}}
    (out / "toy" / "arrivals.json").write_text(json.dumps(toy, indent=2) + "\n")
    (out / "toy" / "model.cfg").write_text(
        "# Toy filling process: 9h to 12h, F = C = 3.\n"
        "t0 = 9\nT = 12\nC = 3\nF = 3\nalpha = 0.1\nbeta = 0.9\npacket_size_wh = 300\n"
        "service = constant:0.5\nactions = 0.5\nrewards = 1,0,0\n")
    (out / "barcelona.cfg").write_text(
        "# Barcelona August experiment.\n"
        "t0 = 7\nT = 18\nC = 65\nF = 25\nalpha = 0.01\nbeta = 0.95\npacket_size_wh = 300\n"
        "service = erlang-two-peak\nactions = 0.1,0.3,0.5,0.7,0.9\nrewards = 1,0,0\ng = identity\n")


if __name__ == "__main__":
    main()

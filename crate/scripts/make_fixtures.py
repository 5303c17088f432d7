#!/usr/bin/env python3
"""Generate the committed weather and carbon-intensity fixtures.

Irradiance is pvlib clear-sky (Ineichen, climatological Linke turbidity)
for Bratislava, scaled by a per-day cloud factor. Temperature, humidity
and wind follow smooth diurnal profiles. Output is deterministic.

    python3 scripts/make_fixtures.py [--out fixtures]
"""

import argparse
from pathlib import Path

import numpy as np
import pandas as pd
import pvlib

LAT, LON, ALT = 48.1486, 17.1077, 140.0


def weather(start, end, days):
    """days: list of (cloud, t_mean, t_amp) per calendar day from start."""
    times = pd.date_range(start, end, freq="1h", tz="UTC")
    loc = pvlib.location.Location(LAT, LON, tz="UTC", altitude=ALT)
    cs = loc.get_clearsky(times, model="ineichen")
    zen = loc.get_solarposition(times)["apparent_zenith"].to_numpy()
    day0 = times[0].normalize()
    rows = []
    for i, t in enumerate(times):
        d = min((t.normalize() - day0).days, len(days) - 1)
        cloud, t_mean, t_amp = days[d]
        h = t.hour + t.minute / 60.0
        # warmest at 13 UTC, coldest at 01 UTC
        temp = t_mean + t_amp * np.cos(2 * np.pi * (h - 13.0) / 24.0)
        wind = 2.5 + 1.0 * np.sin(2 * np.pi * (h - 9.0) / 24.0)
        rh = 80.0 - 22.0 * (temp - (t_mean - t_amp)) / (2 * t_amp)
        ghi = cloud * cs["ghi"].iloc[i]
        dni = cloud**2 * cs["dni"].iloc[i]
        cosz = max(np.cos(np.radians(zen[i])), 0.0)
        dhi = max(ghi - dni * cosz, 0.0)
        if ghi <= 0.0:
            ghi = dni = dhi = 0.0
        rows.append(
            {
                "time": t.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "t_ext_c": round(temp, 2),
                "t_app_c": round(temp - 0.7 * wind, 2),
                "h_rel": round(rh, 1),
                "v_wind": round(wind, 2),
                "ghi": round(ghi, 2),
                "dni": round(dni, 2),
                "dhi": round(dhi, 2),
            }
        )
    return pd.DataFrame(rows)


def carbon(start, end, fn):
    times = pd.date_range(start, end, freq="1h", tz="UTC")
    return pd.DataFrame(
        {
            "time": [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in times],
            "intensity": [round(fn(t.hour), 1) for t in times],
        }
    )


# synthetic files are stamped with their generation time instead
GENERATED = "2026-10-16T00:00:00Z"


def write(path, header, df):
    header = {**header, "retrieved": GENERATED}
    lines = [f"# {k}: {v}" for k, v in header.items()]
    path.write_text("\n".join(lines) + "\n" + df.to_csv(index=False, lineterminator="\n"))
    print(f"wrote {path} ({len(df)} rows)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    out = Path(ap.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)
    src = f"synthetic: pvlib {pvlib.__version__} clear-sky ineichen, scripts/make_fixtures.py"
    loc = f"{LAT},{LON}"

    sunny = weather("2024-10-11T00:00Z", "2024-10-12T03:00Z", [(1.0, 13.0, 6.0), (1.0, 13.0, 6.0)])
    write(
        out / "bratislava_sunny_24h.csv",
        {"kind": "weather", "location": loc, "window": "2024-10-11T00:00:00Z/2024-10-12T03:00:00Z", "source": src},
        sunny,
    )

    two = weather(
        "2024-10-11T00:00Z",
        "2024-10-13T03:00Z",
        [(1.0, 13.0, 6.0), (0.6, 11.0, 4.0), (0.6, 11.0, 4.0)],
    )
    write(
        out / "bratislava_48h.csv",
        {"kind": "weather", "location": loc, "window": "2024-10-11T00:00:00Z/2024-10-13T03:00:00Z", "source": src},
        two,
    )

    six = two.iloc[9:17].reset_index(drop=True)
    write(
        out / "bratislava_6h.csv",
        {"kind": "weather", "location": loc, "window": "2024-10-11T09:00:00Z/2024-10-11T16:00:00Z", "source": src},
        six,
    )

    # a fortnight of mixed autumn days for the full-length run
    clouds = [1.0, 0.6, 0.6, 0.8, 0.4, 1.0, 0.9, 0.5, 0.7, 1.0, 0.3, 0.6, 0.9, 0.8, 0.5, 0.5]
    fortnight = weather(
        "2024-10-11T00:00Z",
        "2024-10-26T03:00Z",
        [(c, 12.0 - 0.3 * d, 3.0 + 3.0 * c) for d, c in enumerate(clouds)],
    )
    write(
        out / "bratislava_15d.csv",
        {"kind": "weather", "location": loc, "window": "2024-10-11T00:00:00Z/2024-10-26T03:00:00Z", "source": src},
        fortnight,
    )

    # nuclear-heavy grid with an evening peak
    def diurnal(h):
        return 190.0 + 50.0 * np.cos(2 * np.pi * (h - 18.0) / 24.0)

    write(
        out / "carbon_sk.csv",
        {
            "kind": "carbon-intensity",
            "zone": "SK",
            "window": "2024-10-11T00:00:00Z/2024-10-13T03:00:00Z",
            "source": "synthetic diurnal profile, scripts/make_fixtures.py",
        },
        carbon("2024-10-11T00:00Z", "2024-10-13T03:00Z", diurnal),
    )
    write(
        out / "carbon_sk_15d.csv",
        {
            "kind": "carbon-intensity",
            "zone": "SK",
            "window": "2024-10-11T00:00:00Z/2024-10-26T03:00:00Z",
            "source": "synthetic diurnal profile, scripts/make_fixtures.py",
        },
        carbon("2024-10-11T00:00Z", "2024-10-26T03:00Z", diurnal),
    )
    write(
        out / "carbon_constant_300.csv",
        {
            "kind": "carbon-intensity",
            "zone": "CONST-300",
            "window": "2024-10-11T00:00:00Z/2024-10-13T03:00:00Z",
            "source": "synthetic constant intensity, scripts/make_fixtures.py",
        },
        carbon("2024-10-11T00:00Z", "2024-10-13T03:00Z", lambda h: 300.0),
    )


if __name__ == "__main__":
    main()

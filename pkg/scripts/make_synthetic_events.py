"""Generate the bundled workplace-style charging event pool and TOU table.

The measured campus data behind the original study is not public, so this
script builds a stand-in with the same headline statistics: 201 events over
the five weekdays of one week, mean parking duration 3.25 h and mean charging/parking ratio 0.62
at 7.2 kW. Rates in the tariff table are illustrative, with the peak window
at 13:00-18:00.

    python scripts/make_synthetic_events.py
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "overstay" / "data"
P_MAX = 7.2
N_EVENTS = 201
DAYS = 5  # weekdays; workplace station
MEAN_DURATION = 3.25
MEAN_RATIO = 0.62
DAY_START, DAY_END = 7.0, 22.0


def make_events(seed=20190116):
    rng = np.random.default_rng(seed)
    component = rng.choice(3, size=N_EVENTS, p=[0.6, 0.25, 0.15])
    centers = np.array([8.5, 12.0, 17.0])[component]
    spreads = np.array([0.8, 1.0, 1.5])[component]
    arrival = np.clip(rng.normal(centers, spreads), DAY_START, DAY_END - 1.0)
    arrival = np.round(arrival * 60) / 60

    duration = rng.gamma(3.0, MEAN_DURATION / 3.0, size=N_EVENTS)
    duration = np.clip(duration, 0.5, 9.0)
    for _ in range(50):
        duration = np.clip(duration * MEAN_DURATION / duration.mean(), 0.5, 9.0)
    duration = np.minimum(duration, DAY_END - arrival)
    # restore the mean after the end-of-day cut by stretching the short ones
    slack = MEAN_DURATION * N_EVENTS - duration.sum()
    room = np.minimum(9.0, DAY_END - arrival) - duration
    duration += room * max(0.0, slack) / room.sum()

    ratio = np.clip(rng.beta(6.2, 3.8, size=N_EVENTS), 0.15, 1.0)
    ratio *= MEAN_RATIO / ratio.mean()
    ratio = np.clip(ratio, 0.1, 1.0)
    battery = rng.choice([24.0, 40.0, 60.0, 62.0, 75.0, 82.0], size=N_EVENTS, p=[0.15, 0.2, 0.2, 0.15, 0.2, 0.1])
    for _ in range(50):
        energy = np.minimum(ratio * duration * P_MAX, 0.95 * battery)
        achieved = (energy / (duration * P_MAX)).mean()
        ratio = np.clip(ratio * MEAN_RATIO / achieved, 0.1, 1.0)
    energy = np.minimum(ratio * duration * P_MAX, 0.95 * battery)
    day = np.sort(rng.integers(0, DAYS, size=N_EVENTS))
    return day, arrival, duration, energy, battery


def write_events(path):
    day, arrival, duration, energy, battery = make_events()
    order = np.lexsort((arrival, day))
    with open(path, "w") as fh:
        fh.write("day,arrival_time,duration_h,energy_kwh,battery_kwh\n")
        for i in order:
            fh.write(f"{day[i]},{arrival[i]:.4f},{duration[i]:.4f},{energy[i]:.4f},{battery[i]:.1f}\n")


def write_tariff(path, step=0.25):
    with open(path, "w") as fh:
        fh.write("time,price\n")
        t = DAY_START
        while t < DAY_END - 1e-9:
            if 13.0 <= t < 18.0:
                price = 0.32
            elif 8.5 <= t < 13.0 or 18.0 <= t < 21.5:
                price = 0.18
            else:
                price = 0.11
            fh.write(f"{int(t):02d}:{int(round((t % 1) * 60)):02d},{price:.2f}\n")
            t += step


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write_events(OUT / "events_week.csv")
    write_tariff(OUT / "tou_a10_illustrative.csv")
    print(f"wrote {OUT / 'events_week.csv'} and {OUT / 'tou_a10_illustrative.csv'}")

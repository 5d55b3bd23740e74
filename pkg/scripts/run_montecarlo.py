"""Paired controlled/baseline Monte Carlo on a scenario (defaults: 6 poles, 50 days).

    python scripts/run_montecarlo.py [--config scenarios/default.ini] [--episodes 50] [--out results/mc]
"""

import sys

from overstay.cli import main

if __name__ == "__main__":
    sys.exit(main(["montecarlo", "-v", *sys.argv[1:]]))

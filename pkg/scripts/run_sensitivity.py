"""Monte Carlo per pole count; writes sensitivity.csv and a bar chart.

    python scripts/run_sensitivity.py [--counts 2,3,4,5,6,27] [--episodes 50] [--out results/sens]
"""

import sys

from overstay.cli import main

if __name__ == "__main__":
    sys.exit(main(["sensitivity", "-v", *sys.argv[1:]]))

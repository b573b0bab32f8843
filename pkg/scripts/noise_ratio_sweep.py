"""Absorption uncertainty of the time-reversed recipe against the
noise-to-signal energy ratio; the uncertainty grows linearly with it.

    python3 scripts/noise_ratio_sweep.py
"""
import argparse
from dataclasses import replace

import numpy as np

from photoncatch import pipeline
from photoncatch.coremodel import SystemParams
from photoncatch.signalsim import AcquisitionConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.001, 0.003, 0.01, 0.03, 0.1])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sys = SystemParams.device()
    proto = pipeline.time_reversed()
    rows = []
    for ratio in args.ratios:
        acq = AcquisitionConfig(rng_seed=args.seed)
        acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq, ratio))
        m = pipeline.measure(sys, proto, acq, with_off=False)
        rows.append((ratio, acq.noise_sigma, m.absorption, m.absorption_sigma))
        print(f"ratio {ratio:8.4f}  sigma_V {acq.noise_sigma:.3e}  absorption {m.absorption:.5f} +- {m.absorption_sigma:.2e}"
              f"  sigma/ratio {m.absorption_sigma / ratio:.4f}")
    r = np.array(rows)
    slope = np.polyfit(np.log(r[:, 0]), np.log(r[:, 3]), 1)[0]
    print(f"log-log slope of uncertainty vs ratio: {slope:.3f}")


if __name__ == "__main__":
    main()

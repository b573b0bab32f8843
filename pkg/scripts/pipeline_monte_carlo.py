"""Repeat the synthetic measurement over noise seeds and compare the spread of
the absorption estimates with the propagated uncertainty.

The filtered noise is correlated between neighbouring samples, so the
variances count independent samples (a fraction of the recorded ones). The
``raw`` column shows what the prediction would be with recorded counts.

    python3 scripts/pipeline_monte_carlo.py --seeds 300
"""
import argparse
from dataclasses import replace

import numpy as np

from photoncatch import pipeline
from photoncatch.coremodel import SystemParams
from photoncatch.signalsim import AcquisitionConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--ratio", type=float, default=pipeline.REFERENCE_NOISE_RATIO, help="noise-to-signal energy ratio")
    ap.add_argument("--lossless", action="store_true")
    args = ap.parse_args()

    sys = SystemParams.device(lossless=args.lossless)
    seeds = range(args.seeds)
    print(f"{'recipe':14s} {'noiseless':>10s} {'mean':>8s} {'MC std':>9s} {'pred':>9s} {'raw pred':>9s}")
    for name, proto in (("time-reversed", pipeline.time_reversed()), ("natural", pipeline.natural())):
        clean = pipeline.measure(sys, proto, AcquisitionConfig(noise_sigma=0.0), with_off=False)
        acq = AcquisitionConfig()
        acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq, args.ratio))
        corr = pipeline.monte_carlo_absorption(sys, proto, acq, seeds, correlated=True)
        raw = pipeline.monte_carlo_absorption(sys, proto, acq, seeds, correlated=False)
        print(f"{name:14s} {clean.absorption:10.5f} {corr[:, 0].mean():8.5f} {corr[:, 0].std(ddof=1):9.2e} "
              f"{corr[:, 1].mean():9.2e} {raw[:, 1].mean():9.2e}")
        print(f"{'':14s} trajectory absorption {clean.trajectory_absorption:.5f}")


if __name__ == "__main__":
    np.set_printoptions(precision=5)
    main()

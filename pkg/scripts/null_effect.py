"""Null-effect control: effect_odds = 1, so fingerprints carry no label signal.

    python scripts/null_effect.py [--out runs/null]
"""
import argparse
from pathlib import Path

from nephrofp.experiment import ExperimentConfig, run_seeds
from nephrofp.synth import SynthSpec


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, nargs="+", default=[42, 43, 44, 45, 46])
    p.add_argument("--out", type=Path, default=Path("runs/null"))
    args = p.parse_args()
    cfg = ExperimentConfig(synthetic=SynthSpec(effect_odds=1.0), out_dir=args.out)
    results, mean = run_seeds(cfg, args.seeds)
    for s, r in zip(args.seeds, results):
        print(f"seed {s}: delta AUROC {r.delta['auroc']:+.4f}  AUPRC {r.delta['auprc']:+.4f}")
    print(f"mean |delta AUROC| bound check: {abs(mean['auroc']):.4f} (limit 0.02)")


if __name__ == "__main__":
    main()

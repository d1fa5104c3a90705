"""Manufactured-solution study end to end, through the public pipeline.

By default a reduced setup runs in well under a minute. Pass ``--full`` for
the default configuration (about three to four minutes on one core), which
is the one the acceptance suite checks.
"""

import argparse
import tempfile
from pathlib import Path

from ranspinn.sampler import load_point_cloud
from ranspinn.workbench.config import RunConfig
from ranspinn.workbench.mms import MmsSpec, mms_generate
from ranspinn.workbench.pipeline import evaluate_cloud, run_training
from ranspinn.trainer import TrainConfig

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
args = ap.parse_args()

work = Path(tempfile.mkdtemp(prefix="mms_demo_"))
spec = MmsSpec() if args.full else MmsSpec(points_per_axis=24)

# Six training Reynolds numbers, plus one interpolated and one extrapolated case.
train_files = mms_generate(spec, work / "train")
mms_generate(spec, work / "val", re_list=(1500.0, 2200.0))
print(f"wrote {len(train_files)} files to {work / 'train'}")

clouds = sorted(p for p in (work / "train").glob("*.csv") if not p.name.endswith(".sources.csv"))
if args.full:
    cfg = RunConfig(clouds=clouds, out_dir=work / "run")
else:
    cfg = RunConfig(clouds=clouds, out_dir=work / "run", hidden=(24, 24), budget=600,
                    train=TrainConfig(epochs=15, batch_size=64))

ckpt, history = run_training(cfg)
ens = ckpt.ensemble
print("final epoch total loss:", history.column("total")[-1])

for Re in (1500, 2200):
    report = evaluate_cloud(ens, load_point_cloud(work / "val" / f"mms_re{Re}.csv"))
    print(f"\nRe = {Re}")
    print(report.format_table())
print(f"\ncheckpoint and loss history in {work / 'run'}")

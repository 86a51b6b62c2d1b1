"""
A shrunken desk run, end to end
===============================

Pretrain the mini encoder without labels, fit the probe on frozen features,
and score the three synthetic domains.  Sizes are cut down so the script
finishes in a minute or two; ``ucl`` on the command line runs the full preset.
"""

import time

from ucl.config import from_dict, preset
from ucl.pipeline import domain_splits, pretrain_encoder, random_encoder, run_experiment

doc = preset("desk").to_dict()
for d in doc["data"]["domains"]:
    d["n_real"] = d["n_fake"] = 300
doc["pretrain"]["sgd"]["epochs"] = 10
cfg = from_dict(doc)
print("config hash:", cfg.config_hash())

train, test_a = domain_splits(cfg, "synthA")
tests = {"synthA": test_a, "synthB": domain_splits(cfg, "synthB")[1], "synthC": domain_splits(cfg, "synthC")[1]}
print(f"{len(train)} training images, test sets:", {k: len(v) for k, v in tests.items()})

start = time.perf_counter()
encoder, report = pretrain_encoder(cfg, train)
print(f"pretraining took {time.perf_counter() - start:.0f}s")
for epoch, (loss, lr) in enumerate(zip(report.losses, report.lrs)):
    print(f"  epoch {epoch}: loss {loss:.3f} lr {lr:g}")

# probe the learned features, the projection head, and an untrained encoder
runs = {
    "encoder": run_experiment(cfg, train, tests, encoder=encoder),
    "projection head": run_experiment(cfg, train, tests, source="projection_head", encoder=encoder),
    "random encoder": run_experiment(cfg, train, tests, encoder=random_encoder(cfg, train)),
}
for name, result in runs.items():
    print(f"{name:>16}: " + "  ".join(f"{k} {v:.3f}" for k, v in result.aucs.items()))

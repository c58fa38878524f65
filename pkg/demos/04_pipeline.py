"""
A complete experiment in a scratch directory
============================================

The pipeline runs five stages: prepare, train-cycvc, train-vocoder, infer
and evaluate. Each stage writes content-hashed artifacts that later runs
reuse. This demo uses deliberately tiny models so that it finishes in well
under a minute. The numbers are therefore meaningless; the point is the
routing and the report layout.
"""

import json
import tempfile

from cycnpf.pipeline.config import config_from_dict
from cycnpf.pipeline.routing import ROUTING, training_sources
from cycnpf.pipeline.stages import Run

# which features each condition trains and tests its vocoder on
for cond, r in ROUTING.items():
    print("%-12s train=%-9s test=%s" % (cond, r["train"], r["test"]))

config = config_from_dict({
    "corpus": {"synthetic": {"utterances": 6, "seconds": 0.4}},
    "split": {"train": 3, "valid": 1, "test": 2},
    "conditions": ["UB", "AM", "TM", "NPF"],
    "cycvc": {"epochs": 2, "conv_channels": 8, "gru_hidden": 8, "out_hidden": 8},
    "wavenet": {"dilation_cycles": [[1, 2, 4]], "residual_channels": 8, "skip_channels": 8, "steps": 5},
})
# UB and AM share the vocoder trained on natural features
print("vocoders to train:", training_sources(config.conditions))

with tempfile.TemporaryDirectory() as work:
    run = Run(config, workdir=work)
    run.run_all()
    for stage, entry in run.manifest.stages.items():
        print("%-14s %s" % (stage, entry["content_hash"][:12]))
    print((run.report_dir() / "report.tsv").read_text())

    # a second pass finds every stage complete and does no work
    again = Run(config, workdir=work)
    print("cached:", all(again.manifest.is_done(s) for s in run.manifest.stages))
    print(json.dumps(again.manifest.stages["train-cycvc"]["stats"], indent=1))

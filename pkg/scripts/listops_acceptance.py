"""Run the ListOps comparison grid and record validation accuracies.

Three architectures (dense 2-head, dense 8-head, SwitchHead 2-head) at
4 layers / d_model=128 / 8k steps, three seeds each. Results accumulate in
runs/listops_results.json so an interrupted grid resumes where it stopped.
"""

import json
import os
import sys
import time

from switchlab.attention import AttentionConfig, ExpertFlags
from switchlab.listops import VOCAB_SIZE, gen_listops
from switchlab.model import MLPConfig, ModelSpec
from switchlab.training import ListOpsTask, TrainRun, evaluate, train

OUT = os.path.join(os.path.dirname(__file__), "..", "runs", "listops_results.json")
SEEDS = (0, 1, 2)
STEPS = 8000
D_MODEL = 128
N_LAYERS = 4


def attention_for(name: str) -> AttentionConfig:
    if name == "dense_h2":
        return AttentionConfig(D_MODEL, 2, 16, variant="dense", causal=False)
    if name == "dense_h8":
        return AttentionConfig(D_MODEL, 8, 16, variant="dense", causal=False)
    if name == "switchhead_h2":
        return AttentionConfig(D_MODEL, 2, 32, variant="switchhead", causal=False,
                               n_experts=4, k_active=2,
                               expert_flags=ExpertFlags.value_output())
    raise ValueError(name)


def main() -> int:
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    results = {}
    if os.path.exists(OUT):
        with open(OUT) as f:
            results = json.load(f)
    train_ex = gen_listops(10000, max_depth=3, max_args=5, seed=100)
    valid_ex = gen_listops(2000, max_depth=3, max_args=5, seed=101)
    task = ListOpsTask(train_ex, valid_ex)
    for config in ("dense_h2", "dense_h8", "switchhead_h2"):
        for seed in SEEDS:
            key = f"{config}/seed{seed}"
            if key in results:
                print(f"{key}: done ({results[key]['accuracy']:.4f}), skipping",
                      flush=True)
                continue
            spec = ModelSpec(N_LAYERS, D_MODEL, attention_for(config),
                             MLPConfig("dense", 256), VOCAB_SIZE, T=64,
                             n_classes=10)
            run = TrainRun(spec, seed=seed, steps=STEPS, batch_size=16,
                           lr=2.5e-4, warmup_steps=400, clip_norm=1.0,
                           log_every=500)
            t0 = time.time()
            model, metrics = train(run, task)
            summary = evaluate(model, task, "valid")
            results[key] = {
                "config": config, "seed": seed, "steps": STEPS,
                "accuracy": summary["accuracy"],
                "final_train_loss": metrics[-1]["loss"],
                "minutes": round((time.time() - t0) / 60, 1),
            }
            with open(OUT, "w") as f:
                json.dump(results, f, indent=2, sort_keys=True)
            print(f"{key}: acc={summary['accuracy']:.4f} "
                  f"({results[key]['minutes']} min)", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

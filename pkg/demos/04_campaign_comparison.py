"""Full simulated campaigns: uniform vs the 90/10 mixed greedy strategy vs
farthest-first selection on the synthetic cluster benchmark, three seeds each,
rendered with the report writer.

Run: python3 demos/04_campaign_comparison.py  (about a minute)
"""
from batchal.campaign import CampaignConfig, report, run_campaign
from batchal.selection import SelectionConfig

DATASET = {"kind": "clusters", "n": 500, "n_classes": 10, "dim": 8, "seed": 0}
SEL = SelectionConfig(nr_it=150, lam=1e-2, m=128, train_augmented=False)

results = []
for strategy in ("uniform", "kcenter", "mixed"):
    cfg = CampaignConfig(dataset=DATASET, strategy=strategy, start_labels=10,
                         end_labels=60, b=10, seeds=[0, 1, 2], selection=SEL)
    result = run_campaign(cfg)
    mean, std = result.mean_std()
    print(f"{strategy:<12} accuracy by round: "
          + "  ".join(f"{m:.3f}" for m in mean))
    results.append(result)

print("\n" + report(results))

"""The bi-level search on data where only b-mode is informative."""

from awmm.data import MODALITIES, SynthConfig, generate
from awmm.search import SearchConfig, run_search

ds = generate(SynthConfig(n_samples=4000, strengths={"b": 1.5, "doppler": 0.0, "swe": 0.0, "se": 0.0},
                          seed=0))


def show(episode, record):
    if record["iteration"] % 5 == 4:
        alpha = "  ".join(f"{t} {a:.3f}" for t, a in record["alpha"].items())
        print(f"iter {record['iteration'] + 1:2d}  val {record['val_acc']:.4f}  {alpha}")


result = run_search(SearchConfig(k=10, outer_iterations=20, seed=0), ds, on_episode=show)
print("epochs trained:", result.epochs_run)
print("final weights:", {t: round(a, 3) for t, a in result.weights.as_dict().items()})

"""Regenerate the synthetic logs shipped in src/thevenin_id/data/.

The laboratory logs behind the published estimates are not public, so these
stand-ins are generated from the constant-current-identified model.
"""

from pathlib import Path

from thevenin_id.fileio import save_dataset
from thevenin_id.model import nominal_params
from thevenin_id.synthetic import constant_discharge, intermittent_dataset, udds_like_dataset

OUT = Path(__file__).resolve().parents[1] / "src" / "thevenin_id" / "data"

# the constant-current-identified model coincides with the simulation truth
model = nominal_params()

save_dataset(OUT / "training_cc.csv", constant_discharge(model, -3.0, 2400.0, 1.0, 2.5e-5, seed=2019))
save_dataset(OUT / "intermittent.csv", intermittent_dataset(model, noise_variance=1e-6, seed=2019))
save_dataset(OUT / "udds_like.csv", udds_like_dataset(model, soc0=0.9, noise_variance=2.5e-5, seed=7))
print("wrote", *sorted(p.name for p in OUT.glob("*.csv")))

"""Finite-difference check of every learnable tensor, then a deliberately broken gradient.

Run: python demos/04_gradient_check.py
"""
import numpy as np

from tacnet import CompactCnnConfig, TacNet
from tacnet.training import grad_check

model = TacNet.create(cnn=CompactCnnConfig(n_classes=11), seed=0, dtype=np.float64,
                      n_filters=8, kernel_width=101)
rng = np.random.default_rng(0)
chunk = 0.3 * rng.standard_normal(model.chunk_length)

report = grad_check(model, chunk, label=3)
print(report.table())
print("overall:", "PASS" if report.passed else "FAIL")

print("\nsame check with the PCEN compression gradient deliberately perturbed:")
broken = grad_check(model, chunk, label=3, corrupt="frontend.r")
print("\n".join(line for line in broken.table().splitlines() if "frontend.r" in line or "tensor" in line))
print("overall:", "PASS" if broken.passed else "FAIL")

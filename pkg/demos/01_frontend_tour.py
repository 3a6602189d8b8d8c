"""Walk a two-tone signal through the learnable frontend, stage by stage.

Run: python demos/01_frontend_tour.py
"""
import numpy as np

from tacnet.frontend import filter_stage, init_mel, pcen_stage, pooling_stage

fs = 16000
params = init_mel(40, fs, dtype=np.float64)
centers_hz = params.gabor.mu * fs
print("mel-initialized center frequencies (Hz), every 5th channel:")
print("  " + ", ".join(f"{f:.0f}" for f in centers_hz[::5]))

# 250 ms containing a 440 Hz tone followed by a 2 kHz tone
t = np.arange(4000) / fs
x = np.where(t < 0.125, np.sin(2 * np.pi * 440 * t), 0.5 * np.sin(2 * np.pi * 2000 * t))

y1 = filter_stage(x, params.gabor, params.kernel_width)
print(f"\nfilter stage: {y1.shape} squared responses, one row per channel")

y2 = pooling_stage(y1, params.pooling)
print(f"pooling stage: {y2.shape} (stride {params.pooling.stride})")

y3 = pcen_stage(y2, params.pcen)
print(f"PCEN stage: {y3.shape}, range [{y3.min():.3f}, {y3.max():.3f}]")

for label, frames in (("first half", slice(0, 12)), ("second half", slice(13, 25))):
    ch = int(np.argmax(y3[:, frames].mean(axis=1)))
    print(f"  strongest channel in {label}: {ch} ({centers_hz[ch]:.0f} Hz)")

"""Privacy-preserving remote anomaly detection.

A steady-state Kalman filter with a chi-squared alarm test is split into a
user side and a remote side. The user lifts every signal into a higher
dimension with secret random matrices plus one-time masking noise; the
remote side runs the whole detector on the lifted signals and returns a
lifted alarm, which only the key holder can decode. The decoded alarms
match a plaintext detector bit for bit while the remote station never sees
a plaintext measurement, input, model matrix, or alarm.
"""

from __future__ import annotations

__version__ = "0.1.0"

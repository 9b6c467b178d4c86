import wave

import numpy as np


def write_tone_wav(path, freq_hz=440.0, dur_s=1.0, rate=16000, channels=1):
    n = int(rate * dur_s)
    t = np.arange(n) / rate
    mono = (0.4 * np.sin(2 * np.pi * freq_hz * t) * 32767).astype("<i2")
    data = np.repeat(mono, channels) if channels > 1 else mono
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(data.tobytes())

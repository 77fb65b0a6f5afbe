#!/usr/bin/env python3
"""Regenerate golden/frame-vectors.json.

Ten frames over varied PAM orders, amplitudes, pilot counts, and payload
lengths, each stored with its bit-exact serialization.  The file is a
conformance anchor: regenerating it must be a no-op unless the frame layout
deliberately changes.
"""
import dataclasses
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vlcjcp.modem import build_frame, frame_to_bits, sm_bits_per_symbol
from vlcjcp.scene import load_scenario_file

ROOT = os.path.join(os.path.dirname(__file__), "..")

CASES = [
    # (pam_order, amplitude, n_pilots, payload_symbols, seed)
    (2, 1.0, 8, 4, 0),
    (2, 1.0, 16, 10, 1),
    (2, 2.0, 8, 7, 2),
    (4, 1.0, 8, 5, 3),
    (4, 1.0, 400, 3, 4),
    (4, 0.5, 16, 12, 5),
    (8, 1.0, 8, 6, 6),
    (8, 1.0, 24, 9, 7),
    (8, 0.25, 8, 0, 8),   # empty payload: markers, pilots, CRC of nothing
    (4, 1.0, 8, 40, 9),
]


def main() -> None:
    base = load_scenario_file(os.path.join(ROOT, "scenarios", "default.json"))
    vectors = []
    for order, amplitude, n_pilots, n_symbols, seed in CASES:
        scenario = dataclasses.replace(
            base,
            modulation=dataclasses.replace(base.modulation, pam_order=order,
                                           amplitude=amplitude),
            n_pilots=n_pilots,
        )
        eta = sm_bits_per_symbol(scenario.n_leds, order)
        bits = np.random.default_rng(seed).integers(0, 2, n_symbols * eta,
                                                    dtype=np.uint8)
        frame = build_frame(bits, scenario.dimming, scenario)
        stream = frame_to_bits(frame, scenario.n_leds, order)
        vectors.append({
            "n_leds": scenario.n_leds,
            "pam_order": order,
            "amplitude": amplitude,
            "n_pilots": n_pilots,
            "payload_bits": "".join(map(str, bits.tolist())),
            "crc16": f"0x{frame.crc16:04X}",
            "serialized_bits": "".join(map(str, stream.tolist())),
        })
    out_path = os.path.join(ROOT, "golden", "frame-vectors.json")
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"vectors": vectors}, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(vectors)} vectors to {out_path}")


if __name__ == "__main__":
    main()

"""Regenerate the golden REF1 certificate (data/ref1_certificate.json)."""
from __future__ import annotations

from pathlib import Path

from quiescent_front.cli import stage_certify, stage_wave
from quiescent_front.config import load_config

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    cfg = load_config(ROOT / "configs" / "ref1.ini")
    cert = stage_certify(cfg, stage_wave(cfg))
    print(cert.save(ROOT / "data" / "ref1_certificate.json"))

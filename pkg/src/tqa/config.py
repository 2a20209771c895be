"""Synthesis configuration: named presets, TOML files and flag overrides.

A config file has up to three tables, each optional::

    [corpus]            # CorpusConfig fields
    num_utterances = 2000
    seed = 0

    [noise]             # NoiseConfig fields ("acoustic_confusion" is accepted for alpha)
    alpha = 0.85

    [errors]            # ErrorRates fields
    substitution = 0.0242

Layers apply in order: preset, then file, then command-line flags.
"""

from __future__ import annotations

import dataclasses
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .synth import FIG2_RATES, NO_ERRORS, CorpusConfig, ErrorRates, NoiseConfig

PRESETS = {
    "default": {},
    # size of the reference evaluation set
    "fig2": {"corpus": {"num_utterances": 11903}},
    # no transcription errors and a perfect classifier
    "clean": {"noise": {"alpha": 1.0},
              "errors": dataclasses.asdict(NO_ERRORS)},
}

_ALIASES = {"noise": {"acoustic_confusion": "alpha"}}


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    corpus: CorpusConfig = CorpusConfig()
    noise: NoiseConfig = NoiseConfig()
    errors: ErrorRates = FIG2_RATES

    def to_dict(self):
        return {k: dataclasses.asdict(getattr(self, k)) for k in ("corpus", "noise", "errors")}


def _apply(obj, table, section):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, val in table.items():
        key = _ALIASES.get(section, {}).get(key, key)
        if key not in names:
            raise ValueError(f"unknown key {section}.{key}")
        changes[key] = tuple(val) if isinstance(val, list) else val
    return dataclasses.replace(obj, **changes)


def merge(cfg: SynthConfig, layer: dict) -> SynthConfig:
    unknown = set(layer) - {"corpus", "noise", "errors"}
    if unknown:
        raise ValueError(f"unknown config table(s): {', '.join(sorted(unknown))}")
    return SynthConfig(*(_apply(getattr(cfg, s), layer.get(s, {}), s)
                         for s in ("corpus", "noise", "errors")))


def load_config(preset="default", path=None, overrides=None) -> SynthConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    cfg = merge(SynthConfig(), PRESETS[preset])
    if path is not None:
        with open(path, "rb") as f:
            cfg = merge(cfg, tomllib.load(f))
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg

"""Shipped use-case models, scenarios and dataset generators."""

from pathlib import Path

from stf.corpus.generators import (GENERATORS, GeneratorError, gen_nialm, gen_pingpong, gen_prices,
                                   synth, write_synth)

DATA_DIR = Path(__file__).resolve().parent / "data"

# model file -> scenario script; the PIM is only meaningful merged with its PSM
CORPUS = {
    "pingpong.stf": "pingpong.scenario",
    "nialm.stf": "nialm.scenario",
    "prices.stf": "prices.scenario",
    "prices_psm.stf": "prices.scenario",
}


def data_path(name: str) -> Path:
    return DATA_DIR / name


def corpus_models() -> list:
    """``[(model path, scenario path)]`` for every runnable corpus model."""
    return [(DATA_DIR / m, DATA_DIR / s) for m, s in CORPUS.items()]


__all__ = ["CORPUS", "DATA_DIR", "GENERATORS", "GeneratorError", "corpus_models", "data_path",
           "gen_nialm", "gen_pingpong", "gen_prices", "synth", "write_synth"]

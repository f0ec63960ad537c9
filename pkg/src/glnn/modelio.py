"""Saving and loading trained models as a single ``.npz`` archive."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import ModelParams, get_activation
from .seqdata import Alphabet
from .topology import NetworkTopology


def save_model(path, params: ModelParams, alphabet: Alphabet | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    header = {"kind": params.kind, "activation": params.activation.name,
              "n_symbols": params.n_symbols, "topology": params.topology.to_dict(),
              "alphabet": None if alphabet is None else list(alphabet.symbols),
              "extra": extra or {}}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, ensure_ascii=False)),
                 w=params.w, tau=params.tau, rho=params.rho, v0=params.v0)
    return path


def load_model(path):
    """Returns ``(params, alphabet_or_None, extra)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        params = ModelParams(kind=header["kind"],
                             topology=NetworkTopology.from_dict(header["topology"]),
                             n_symbols=int(header["n_symbols"]),
                             activation=get_activation(header["activation"]),
                             w=z["w"].copy(), tau=z["tau"].copy(), rho=z["rho"].copy(), v0=z["v0"].copy())
    alpha = Alphabet(tuple(header["alphabet"])) if header["alphabet"] is not None else None
    return params, alpha, header.get("extra", {})

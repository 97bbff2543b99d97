"""Plain-text I/O: newline-delimited JSON records, CSV tables, and the
key=value run-config format. Everything is diffable on purpose."""

import csv
import json
from pathlib import Path

import numpy as np

from adrec.quantizer.residual import Item


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, rows, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def item_to_record(item):
    return {
        "item_id": item.item_id,
        "embedding": [float(x) for x in item.embedding],
        "account_id": item.non_semantic["account_id"],
        "conversion_type": item.non_semantic["conversion_type"],
        "latent_value": item.latent_value,
    }


def item_from_record(rec):
    return Item(
        item_id=rec["item_id"],
        embedding=np.array(rec["embedding"], dtype=np.float64),
        non_semantic={"account_id": rec["account_id"],
                      "conversion_type": rec["conversion_type"]},
        latent_value=rec["latent_value"],
    )


def save_catalog(path, items):
    write_jsonl(path, (item_to_record(it) for it in items))


def load_catalog(path):
    return [item_from_record(rec) for rec in read_jsonl(path)]


def vsl_sample_to_record(sample):
    return {
        "kind": "vsl",
        "features": np.asarray(sample.features).tolist(),
        "tokens": list(sample.tokens),
        "ecpm_value": float(sample.ecpm_value),
        "value_token": int(sample.value_token),
        "w_user": float(sample.w_user),
        "w_behavior": float(sample.w_behavior),
    }


def rl_sample_to_record(sample):
    return {
        "kind": "rl",
        "features": np.asarray(sample.features).tolist(),
        "candidates": [
            {
                "tokens": list(tokens),
                "reward": float(reward),
                "value_token": int(v_tok),
                "ref_logp": None if sample.ref_logp is None
                else sample.ref_logp[i],
            }
            for i, (tokens, reward, v_tok) in enumerate(
                zip(sample.tokens_list, sample.rewards, sample.value_tokens))
        ],
    }


def training_sample_from_record(rec):
    """Rebuild a trainer-consumable sample from its logged record."""
    from adrec.losses.preference import RlSample
    from adrec.losses.supervised import TrainingSample

    feats = np.asarray(rec["features"], dtype=np.float64)
    if rec["kind"] == "vsl":
        return TrainingSample(
            features=feats, tokens=tuple(rec["tokens"]),
            ecpm_value=rec["ecpm_value"], value_token=rec["value_token"],
            w_user=rec["w_user"], w_behavior=rec["w_behavior"])
    if rec["kind"] == "rl":
        cands = rec["candidates"]
        refs = [c["ref_logp"] for c in cands]
        return RlSample(
            features=feats,
            tokens_list=[tuple(c["tokens"]) for c in cands],
            rewards=np.array([c["reward"] for c in cands]),
            value_tokens=[c["value_token"] for c in cands],
            ref_logp=None if all(r is None for r in refs) else refs)
    raise ValueError(f"unknown training record kind: {rec.get('kind')!r}")


def training_sample_to_record(sample):
    from adrec.losses.supervised import TrainingSample

    if isinstance(sample, TrainingSample):
        return vsl_sample_to_record(sample)
    return rl_sample_to_record(sample)


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config(path):
    """Parse a key=value config file; values use JSON literals where they
    parse (numbers, lists, booleans), bare strings otherwise."""
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (need key=value): {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def write_config(path, mapping):
    lines = [f"{k} = {json.dumps(v)}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

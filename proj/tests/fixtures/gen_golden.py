#!/usr/bin/env python3
"""Writes the golden reward corpus under tests/fixtures/golden.

Every combination of the five sub-reward outcomes gets one fixture, plus a
few configuration cases. Expected values come from small oracles written
here (grammar regex, DAG checks, pixel-counted IoU, token-overlap judge)
rather than from the C++ code; each oracle result is checked against the
outcome the fixture was built to produce.
"""

import itertools
import json
import re
import shutil
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parent / "golden"
W, H = 8, 8

REGISTRY = {
    "SAM2": "foundation", "DepthAnything2": "foundation", "Qwen2.5-VL": "foundation",
    "DINO-2": "foundation", "OWLv2": "foundation", "OpenCV": "foundation",
    "DepthStats": "derived", "SemanticAnalysis": "derived",
}

TAGS = ["think", "dt_plan", "dt_rep", "execute", "results", "task", "answer"]
LETTER = {"think": "T", "dt_plan": "P", "dt_rep": "R", "execute": "E",
          "results": "S", "task": "K", "answer": "A"}


# --------------------------------------------------------------------------
# oracles

def strict_grammar_ok(text):
    tokens = list(re.finditer(r"</?([a-z_]+)>", text))
    seq, pos, i = [], 0, 0
    while i < len(tokens):
        m = tokens[i]
        if text[pos:m.start()].strip():
            return False
        if m.group(0).startswith("</") or m.group(1) not in TAGS:
            return False
        if i + 1 >= len(tokens) or tokens[i + 1].group(0) != "</%s>" % m.group(1):
            return False
        seq.append(LETTER[m.group(1)])
        pos = tokens[i + 1].end()
        i += 2
    if text[pos:].strip():
        return False
    return re.fullmatch(r"TPR(T(ES)?)*KA", "".join(seq)) is not None


def dag_ok(plan_text):
    try:
        plan = json.loads(plan_text)
    except ValueError:
        return False
    if not isinstance(plan, dict) or not plan:
        return False
    for k, v in plan.items():
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            return False
    nodes = set(plan) | {p for v in plan.values() for p in v}
    if any(n not in REGISTRY for n in nodes):
        return False
    for n in nodes:
        prereqs = plan.get(n, [])
        if REGISTRY[n] == "foundation" and prereqs:
            return False
        if REGISTRY[n] == "derived" and not prereqs:
            return False
    state = {}

    def cyclic(n):
        state[n] = 1
        for p in plan.get(n, []):
            if state.get(p) == 1 or (p not in state and cyclic(p)):
                return True
        state[n] = 2
        return False

    return not any(n not in state and cyclic(n) for n in nodes)


def norm_tokens(text):
    out = set()
    for word in text.lower().split():
        word = "".join(c for c in word if c.isalnum())
        if word and word not in ("a", "an", "the"):
            out.add(word)
    return out


def judge_ok(candidate, reference):
    c, r = norm_tokens(candidate), norm_tokens(reference)
    if not c and not r:
        return True
    if not c or not r:
        return False
    return 2 * len(c & r) / (len(c) + len(r)) >= 0.6


def grid_iou(a, b):
    inter = sum(1 for y in range(H) for x in range(W) if a[y][x] and b[y][x])
    union = sum(1 for y in range(H) for x in range(W) if a[y][x] or b[y][x])
    return 1.0 if union == 0 else inter / union


def box_iou(a, b):
    iw = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


TASK_NAMES = {
    "segmentation": "segmentation", "grounding": "grounding",
    "summarization": "summarization", "summary": "summarization",
    "vqa": "vqa", "visual question answering": "vqa",
}


def task_ok(label, truth):
    words = [w for w in label.lower().split() if w != "reasoning"]
    return TASK_NAMES.get(" ".join(words)) == truth


# --------------------------------------------------------------------------
# construction helpers

def rect(x0, y0, x1, y1):
    return [[1 if x0 <= x < x1 and y0 <= y < y1 else 0 for x in range(W)] for y in range(H)]


def rle(grid):
    runs, cur, n = [], 0, 0
    for v in (v for row in grid for v in row):
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


def mask_file(grid):
    return "dtr1-mask/1 %d %d\n%s\n" % (W, H, " ".join(map(str, rle(grid))))


def mask_obj(grid):
    return {"width": W, "height": H, "runs": rle(grid)}


TWIN = json.dumps({
    "schema": "dtr1-twin/1", "global_description": "two cups on a table", "frame_count": 1,
    "source_refs": ["fixture"],
    "frames": [{"t": 0, "scene_description": "a table", "spatial_description": "cup left of cup",
                "instances": [{"instance_id": 1, "label": "cup", "description": "red cup",
                               "mask_rle": mask_obj(rect(1, 1, 5, 5)), "bbox": [1, 1, 5, 5],
                               "depth": {"mean": 2.0, "std": 0.0, "min": 2.0, "max": 2.0,
                                         "pixel_count": 16}}]}],
}, sort_keys=True, separators=(",", ":"))

GOOD_PLANS = [
    '{"SAM2": [], "DepthAnything2": [], "DepthStats": ["SAM2", "DepthAnything2"], "SemanticAnalysis": ["SAM2"]}',
    '{"SAM2": []}',
    '{"OWLv2": [], "SemanticAnalysis": ["OWLv2"]}',
]
BAD_PLANS = [
    '{"SAM2": ["DepthStats"], "DepthStats": ["SAM2"]}',          # cycle
    '{"SAM3": [], "DepthStats": ["SAM3"]}',                      # unknown model
    '{"SAM2": [], "DepthStats": [',                              # malformed
    '{"SAM2": [], "DepthStats": []}',                            # derived without inputs
    '{"SAM2": ["OpenCV"]}',                                      # foundation with inputs
]

GOOD_LABELS = {
    "segmentation": ["reasoning segmentation", "Segmentation"],
    "grounding": ["reasoning grounding", "Grounding"],
    "vqa": ["VQA", "reasoning visual question answering"],
    "summarization": ["reasoning summarization", "summary"],
}
WRONG_LABEL = {"segmentation": "grounding", "grounding": "segmentation",
               "vqa": "reasoning summarization", "summarization": "vqa"}


def seg(text):
    return text


def build_case(task_type, variant, result_good, case_dir):
    """Returns (ground-truth manifest, answer text, expected r_result)."""
    gt_dir = case_dir / "gt"
    gt_dir.mkdir(parents=True)
    if task_type == "segmentation":
        truth = rect(2, 2, 6, 6)
        (gt_dir / "gt_f0.rle").write_text(mask_file(truth))
        manifest = {"schema": "dtr1-gt/1", "task_type": "segmentation", "masks": {"0": "gt_f0.rle"}}
        if result_good:
            pred = truth if variant % 2 == 0 else rect(2, 2, 6, 5)     # IoU 1 or 0.75
            answer = json.dumps({"instances": [{"name": "cup", "frame": 0, "mask": mask_obj(pred)}]})
        elif variant % 2 == 0:
            pred = rect(2, 2, 6, 4)                                     # IoU exactly 0.5
            answer = json.dumps({"instances": [{"name": "cup", "frame": 0, "mask": mask_obj(pred)}]})
        else:
            pred = None
            answer = "the cup on the left"                              # wrong payload shape
        iou = grid_iou(pred, truth) if pred else 0.0
        return manifest, answer, 1.0 if pred and iou > 0.5 else -1.0
    if task_type == "grounding":
        truth = [0, 0, 10, 10]
        manifest = {"schema": "dtr1-gt/1", "task_type": "grounding", "box": truth, "frames": [0, 1]}
        pred = truth if result_good else [5, 5, 15, 15]                 # IoU 1 or 1/7
        answer = json.dumps({"name": "cup", "box": pred, "frames": [0, 1]})
        return manifest, answer, 1.0 if box_iou(pred, truth) > 0.5 else -1.0
    if task_type == "vqa":
        reference = "red cup"
        manifest = {"schema": "dtr1-gt/1", "task_type": "vqa", "reference": reference}
        answer = "the red coffee cup" if result_good else "blue box"
        return manifest, answer, 1.0 if judge_ok(answer, reference) else -1.0
    reference = "two cups on a table"
    manifest = {"schema": "dtr1-gt/1", "task_type": "summarization", "reference": reference}
    answer = "Two cups on the table." if result_good else "an empty room"
    return manifest, answer, 1.0 if judge_ok(answer, reference) else -1.0


def rollout_text(plan, blocks, label, answer, token_variant):
    """token_variant None means well formed; otherwise one concrete violation."""
    parts = []
    if token_variant != "no_first_think":
        parts.append("<think>Read the query and plan the models.</think>")
    parts.append("<dt_plan>%s</dt_plan>" % plan)
    parts.append("<dt_rep>%s</dt_rep>" % TWIN)
    for code, result in blocks:
        parts.append("<think>Measure it.</think>")
        parts.append("<execute>%s</execute>" % code)
        parts.append("<results>%s</results>" % result)
    parts.append("<think>Conclude.</think>")
    if token_variant == "unknown_tag":
        parts.append("<note>draft</note>")
    task = "<task>%s</task>" % label
    ans = "<answer>%s</answer>" % answer
    if token_variant == "swap":
        parts += [ans, task]
    elif token_variant == "stray":
        parts += ["So:", task, ans]
    elif token_variant == "duplicate_task":
        parts += [task, task, ans]
    elif token_variant == "truncated":
        parts += [task, "<answer>%s" % answer]
    else:
        parts += [task, ans]
    return "\n".join(parts) + "\n"


def make_case(name, token_good, dag_good, exec_good, task_good, result_good, i, config=None, blocks=None):
    case_dir = OUT / name
    case_dir.mkdir(parents=True)
    task_type = ["segmentation", "grounding", "vqa", "summarization"][i % 4]
    manifest, answer, r_result = build_case(task_type, i // 4, result_good, case_dir)
    (case_dir / "gt" / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    plan = GOOD_PLANS[i % len(GOOD_PLANS)] if dag_good else BAD_PLANS[i % len(BAD_PLANS)]
    if blocks is None:
        n = i % 3 if exec_good else 1 + i % 2
        blocks = [("mean_depth(1, 0)", "OK: 2.0")] * n
        if not exec_good:
            blocks[-1] = ("mean_depth(1, 0) / 0", "ERR: ZeroDivisionError: division by zero")
    label = GOOD_LABELS[task_type][i % 2] if task_good else WRONG_LABEL[task_type]
    if token_good:
        variant = None
    else:
        choices = ["stray", "swap", "no_first_think", "unknown_tag", "duplicate_task"]
        if not result_good:
            choices.append("truncated")
        variant = choices[i % len(choices)]
    text = rollout_text(plan, blocks, label, answer, variant)
    if variant == "truncated":
        r_result = -1.0

    cfg = {"alpha": 1.0, "beta": 1.0, "exec_penalty_mode": "any_failure"}
    cfg.update(config or {})
    failures = sum(1 for _, r in blocks if r.startswith("ERR:"))
    r_token = 1.0 if strict_grammar_ok(text) else -1.0
    r_dag = 0.5 if dag_ok(plan) else -0.5
    if cfg["exec_penalty_mode"] == "per_block_sum":
        r_exec = -0.5 * failures
    else:
        r_exec = -0.5 if failures else 0.0
    r_task = 0.25 if task_ok(label, manifest["task_type"]) else 0.0

    assert (r_token > 0) == token_good, name
    assert (r_dag > 0) == dag_good, name
    assert (r_exec == 0) == exec_good, name
    assert (r_task > 0) == task_good, name
    assert (r_result > 0) == result_good, name

    r_format = r_token + r_dag
    r_accuracy = r_exec + r_task + r_result
    expected = {
        "r_token": r_token, "r_dag": r_dag, "r_exec": r_exec, "r_task": r_task, "r_result": r_result,
        "r_format": r_format, "r_accuracy": r_accuracy,
        "total": cfg["alpha"] * r_format + cfg["beta"] * r_accuracy,
        "config": cfg, "execute_blocks": len(blocks),
    }
    (case_dir / "rollout.txt").write_text(text)
    (case_dir / "expected.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")


def main():
    if OUT.exists():
        shutil.rmtree(OUT)
    OUT.mkdir(parents=True)
    for i, bits in enumerate(itertools.product([True, False], repeat=5)):
        tag = "".join("1" if b else "0" for b in bits)
        make_case("c%02d-%s" % (i, tag), *bits, i)
    ok_fail = [("mean_depth(1, 0)", "ERR: KeyError: instance 9 not in frame 0"),
               ("1 / 0", "ERR: ZeroDivisionError: division by zero")]
    make_case("x01-per-block-sum", True, True, False, True, True, 0,
              config={"exec_penalty_mode": "per_block_sum"}, blocks=ok_fail)
    make_case("x02-weights", True, True, True, True, True, 4, config={"alpha": 2.0, "beta": 0.5})
    make_case("x03-weights-negative", False, False, False, False, False, 1, config={"alpha": 0.25, "beta": 3.0})
    print("wrote", len(list(OUT.iterdir())), "fixtures to", OUT, file=sys.stderr)


if __name__ == "__main__":
    main()

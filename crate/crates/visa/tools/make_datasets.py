#!/usr/bin/env python3
"""Writes the bundled command datasets.

    python3 tools/make_datasets.py [--out data]

Outputs (relative to --out):
  dataset.jsonl            240 annotated commands with the Table I distribution
  table2/dataset.jsonl     the 35 example commands of the paper's stage-outcome table
  table2/overrides.jsonl   scripted mistakes that reproduce that table's error rows

Mock scripts are derived from these files by `visa gen mock-script`.
The script is deterministic; rerunning it rewrites identical files.
"""

import argparse
import json
import re
from collections import Counter
from pathlib import Path

CORE_FIELDS = ["sex_age", "height", "weight", "diagnosis", "comorbidities", "fev1", "fvc", "surgery", "tumor"]
PFT = ["fev1", "fvc"]
SPEAKERS = ["female_news_1", "male_news_1", "female_news_2", "male_news_2"]

# Recognition confusions injected into raw_text (gold word -> misheard word).
STT_CONFUSIONS = [("CT", "city"), ("coronal", "corona"), ("lung", "long"), ("right", "write"), ("zoom", "June"), ("add", "at")]


def cmd(text, ctype, expr, action, params=None, composite=False, raw=None, attempts=None):
    return {
        "text": text,
        "ctype": ctype,
        "expression": expr,
        "structure": "composite" if composite else "single",
        "action": action,
        "params": params or {},
        "raw": raw,
        "attempts": attempts or [],
    }


def show(*fields):
    return {"fields": sorted(fields)}


def by(plane, n):
    return {"deltas": {plane: {"by": n}}}


def to(**planes):
    return {"deltas": {p: ({"to": v} if isinstance(v, int) else v) for p, v in planes.items()}}


E, I, N = "explicit", "implicit", "nlq"
B, A, P = "baseline", "abbreviation", "paraphrase"

IR = [
    # explicit
    cmd("Show patient information", E, B, "SHOW", show(*CORE_FIELDS)),
    cmd("Show the age", E, B, "SHOW", show("age")),
    cmd("Show the height", E, B, "SHOW", show("height")),
    cmd("Hide patient information", E, B, "HIDE"),
    cmd("Show the weight", E, B, "SHOW", show("weight")),
    cmd("Show the diagnosis", E, B, "SHOW", show("diagnosis")),
    cmd("Display the PFT info", E, A, "SHOW", show(*PFT)),
    cmd("Show the comorbidities", E, B, "SHOW", show("comorbidities")),
    cmd("Display the pulmonary function test", E, B, "SHOW", show(*PFT)),
    cmd("Show patient info", E, A, "SHOW", show(*CORE_FIELDS)),
    cmd("Show the surgery information", E, B, "SHOW", show("surgery")),
    cmd("Show the tumor information", E, B, "SHOW", show("tumor")),
    cmd("Show sex and age", E, B, "SHOW", show("sex", "age"), composite=True),
    cmd("Show physical and PFT info", E, A, "SHOW", show("height", "weight", *PFT), composite=True),
    cmd("Bring up the patient's body measurements", E, P, "SHOW", show("height", "weight")),
    # implicit
    cmd("Reset", I, B, "HIDE"),
    cmd("Diagnosis", I, B, "SHOW", show("diagnosis")),
    cmd("Age", I, B, "SHOW", show("age")),
    cmd("PFT results", I, A, "SHOW", show(*PFT)),
    cmd("Weight", I, B, "SHOW", show("weight")),
    cmd("lung function results", I, P, "SHOW", show(*PFT), raw="long function results"),
    cmd("Height", I, B, "SHOW", show("height")),
    cmd("Initialize", I, B, "HIDE"),
    cmd("Comorbidities", I, B, "SHOW", show("comorbidities")),
    cmd("Body measurements", I, P, "SHOW", show("height", "weight")),
    cmd("Tumor information", I, B, "SHOW", show("tumor")),
    cmd("FEV1 and FVC", I, A, "SHOW", show(*PFT), composite=True),
    cmd("Pre-existing conditions", I, P, "SHOW", show("comorbidities")),
    cmd("Surgery information", I, B, "SHOW", show("surgery")),
    cmd("Clear the text", I, P, "HIDE"),
    # nlq
    cmd("Can you show pulmonary function test?", N, B, "SHOW", show(*PFT)),
    cmd("How old is the patient?", N, P, "SHOW", show("age")),
    cmd("Can you show the diagnosis?", N, B, "SHOW", show("diagnosis")),
    cmd("How tall is the patient?", N, P, "SHOW", show("height")),
    cmd("Can you show the patient information?", N, B, "SHOW", show(*CORE_FIELDS)),
    cmd("What is the patient's gender?", N, P, "SHOW", show("sex")),
    cmd("Could you display the weight?", N, B, "SHOW", show("weight")),
    cmd("What was the patient diagnosed with?", N, P, "SHOW", show("diagnosis"), attempts=["What was the patient"]),
    cmd("Can you show the tumor information?", N, B, "SHOW", show("tumor")),
    cmd("How heavy is the patient?", N, P, "SHOW", show("weight")),
    cmd("Would you hide the patient information?", N, B, "HIDE"),
    cmd("Does the patient have any other conditions?", N, P, "SHOW", show("comorbidities")),
    cmd("Can you show the surgery information?", N, B, "SHOW", show("surgery")),
    cmd("What surgery is planned?", N, P, "SHOW", show("surgery")),
]

IV = [
    # explicit
    cmd("Show the CT views", E, B, "SHOW_MOVE", raw="Show the city views"),
    cmd("Coronal plus 100", E, B, "SHOW_MOVE", by("coronal", 100), raw="Corona plus 100"),
    cmd("Sagittal minus 30", E, B, "SHOW_MOVE", by("sagittal", -30)),
    cmd("Axial plus 20", E, B, "SHOW_MOVE", by("axial", 20)),
    cmd("Axial minus 15", E, B, "SHOW_MOVE", by("axial", -15)),
    cmd("Coronal minus 50", E, B, "SHOW_MOVE", by("coronal", -50)),
    cmd("Sagittal plus 40", E, B, "SHOW_MOVE", by("sagittal", 40)),
    cmd("Ax plus 10", E, A, "SHOW_MOVE", by("axial", 10)),
    cmd("Move axial to 150", E, B, "SHOW_MOVE", to(axial=150)),
    cmd("Move coronal to 256 and sagittal to 256", E, B, "SHOW_MOVE", to(coronal=256, sagittal=256), composite=True),
    cmd("Move sagittal to 300", E, B, "SHOW_MOVE", to(sagittal=300)),
    cmd("Move coronal to the middle slice", E, P, "SHOW_MOVE", to(coronal="middle")),
    cmd("Axial zoom in", E, B, "ZOOM_IN_MOVE", {"main_view": "axial"}),
    cmd("Minimize the axial image", E, P, "ZOOM_OUT"),
    cmd("Coronal zoom in", E, B, "ZOOM_IN_MOVE", {"main_view": "coronal"}),
    cmd("Zoom out the CT view", E, B, "ZOOM_OUT"),
    cmd("Sag zoom in", E, A, "ZOOM_IN_MOVE", {"main_view": "sagittal"}),
    cmd("Sagittal zoom in", E, B, "ZOOM_IN_MOVE", {"main_view": "sagittal"}),
    cmd("Enlarge the coronal image", E, P, "ZOOM_IN_MOVE", {"main_view": "coronal"}),
    cmd("Move axial to the middle slice and zoom in", E, P, "ZOOM_IN_MOVE",
        {"deltas": {"axial": "middle"}, "main_view": "axial"}, composite=True),
    cmd("Remove the CT views", E, B, "REMOVE"),
    cmd("Show the CT images", E, B, "SHOW_MOVE"),
    cmd("Move axial to the maximum slice", E, B, "SHOW_MOVE", to(axial="max")),
    cmd("Move coronal to the first slice", E, B, "SHOW_MOVE", to(coronal="min")),
    cmd("Bring the sagittal slice up by 25", E, P, "SHOW_MOVE", by("sagittal", 25)),
    cmd("Move axial to 100 and sagittal to 200", E, B, "SHOW_MOVE", to(axial=100, sagittal=200), composite=True),
    cmd("Take away the CT images", E, P, "REMOVE"),
    # implicit
    cmd("Move up", I, B, "SHOW_MOVE", by("axial", 10)),
    cmd("Move front, front, front", I, P, "SHOW_MOVE", by("coronal", 30), raw="Move fun, front, front"),
    cmd("Step to posterior", I, P, "SHOW_MOVE", by("coronal", -10), raw="Step to posture"),
    cmd("Move down", I, B, "SHOW_MOVE", by("axial", -10)),
    cmd("Move left", I, B, "SHOW_MOVE", by("sagittal", -10)),
    cmd("Move right", I, B, "SHOW_MOVE", by("sagittal", 10)),
    cmd("Go a little higher", I, P, "SHOW_MOVE", by("axial", 10)),
    cmd("Move forward", I, B, "SHOW_MOVE", by("coronal", 10)),
    cmd("Move backward", I, B, "SHOW_MOVE", by("coronal", -10)),
    cmd("Go lower", I, P, "SHOW_MOVE", by("axial", -10)),
    cmd("Up, up", I, B, "SHOW_MOVE", by("axial", 20)),
    cmd("Move sup", I, A, "SHOW_MOVE", by("axial", 10)),
    cmd("Down, down, down", I, B, "SHOW_MOVE", by("axial", -30)),
    cmd("Scroll forward", I, P, "SHOW_MOVE", by("coronal", 10)),
    cmd("Left, left", I, B, "SHOW_MOVE", by("sagittal", -20)),
    cmd("Scroll back", I, P, "SHOW_MOVE", by("coronal", -10)),
    cmd("Right, right, right", I, B, "SHOW_MOVE", by("sagittal", 30)),
    cmd("Step right", I, P, "SHOW_MOVE", by("sagittal", 10)),
    cmd("Forward", I, B, "SHOW_MOVE", by("coronal", 10)),
    cmd("Step left", I, P, "SHOW_MOVE", by("sagittal", -10)),
    cmd("Back", I, B, "SHOW_MOVE", by("coronal", -10)),
    cmd("Zoom out", I, B, "ZOOM_OUT"),
    cmd("Shrink it", I, P, "ZOOM_OUT"),
    cmd("Nudge it forward", I, P, "SHOW_MOVE", by("coronal", 10)),
    cmd("Head down a slice", I, P, "SHOW_MOVE", by("axial", -10)),
    cmd("Initialize", I, B, "REMOVE", {"reset": True}),
    cmd("Get rid of them", I, P, "REMOVE"),
    # nlq
    cmd("Can you show the CT views?", N, B, "SHOW_MOVE"),
    cmd("Can you move CT forward?", N, B, "SHOW_MOVE", by("coronal", 10)),
    cmd("Can you move axial to 200 and coronal to 230?", N, B, "SHOW_MOVE", to(axial=200, coronal=230), composite=True,
        raw="Can you move excel to 200 and coronal to 230?"),
    cmd("Can you display the scans?", N, P, "SHOW_MOVE"),
    cmd("Could you move sagittal plus 20?", N, B, "SHOW_MOVE", by("sagittal", 20)),
    cmd("Can you move coronal minus 40?", N, B, "SHOW_MOVE", by("coronal", -40)),
    cmd("Can you go a bit further forward?", N, P, "SHOW_MOVE", by("coronal", 10)),
    cmd("Can you move axial to the middle slice?", N, B, "SHOW_MOVE", to(axial="middle")),
    cmd("Can you zoom in the axial view?", N, B, "ZOOM_IN_MOVE", {"main_view": "axial"}),
    cmd("Could you zoom out the CT?", N, B, "ZOOM_OUT"),
    cmd("Can you get axial closer?", N, P, "ZOOM_IN_MOVE", {"main_view": "axial"}),
    cmd("Could you reduce coronal image?", N, P, "ZOOM_OUT", raw="Could you reduce corona image?"),
    cmd("Can you zoom in the coronal view?", N, B, "ZOOM_IN_MOVE", {"main_view": "coronal"}),
    cmd("Can you shrink the view?", N, P, "ZOOM_OUT"),
    cmd("Could you enlarge the sagittal image?", N, P, "ZOOM_IN_MOVE", {"main_view": "sagittal"}),
    cmd("Can you zoom in the cor view?", N, A, "ZOOM_IN_MOVE", {"main_view": "coronal"}),
    cmd("Can you move sagittal to 100 and zoom in?", N, B, "ZOOM_IN_MOVE",
        {"deltas": {"sagittal": {"to": 100}}, "main_view": "sagittal"}, composite=True),
    cmd("Could you zoom out of the CT images?", N, B, "ZOOM_OUT"),
    cmd("Can you move the CT backward?", N, B, "SHOW_MOVE", by("coronal", -10)),
    cmd("Could you scroll up a little?", N, P, "SHOW_MOVE", by("axial", 10)),
    cmd("Can you move the CT up?", N, B, "SHOW_MOVE", by("axial", 10)),
    cmd("Can you go back a few slices?", N, P, "SHOW_MOVE", by("coronal", -30)),
    cmd("Can you move the CT down?", N, B, "SHOW_MOVE", by("axial", -10)),
    cmd("Could you move the CT to the left?", N, B, "SHOW_MOVE", by("sagittal", -10)),
    cmd("Could you step to the right?", N, P, "SHOW_MOVE", by("sagittal", 10)),
    cmd("Could you take the CT images away?", N, P, "REMOVE"),
    cmd("Would you show the CT images?", N, B, "SHOW_MOVE"),
]


def add(*s):
    return {"add": list(s)}


def remove(*s):
    return {"remove": list(s)}


def view(v):
    return {"view": v}


def rot(r):
    return {"rotation": r}


def zoom(t, **extra):
    return {"target": t, **extra}


LEFT_LUNG = ["LLL", "LUL"]
RIGHT_LUNG = ["RLL", "RML", "RUL"]
CURRENT = "<current>"  # resolved to the current zoom target, or the nodules

AR = [
    # explicit
    cmd("Show the 3D recon image", E, B, "STATIC_VIEW"),
    cmd("Show anterior view", E, B, "STATIC_VIEW", view("anterior")),
    cmd("Turn on RLL", E, A, "STATIC_VIEW", add("RLL")),
    cmd("Show posterior view", E, B, "STATIC_VIEW", view("posterior")),
    cmd("Add the right upper lobe", E, B, "STATIC_VIEW", add("RUL")),
    cmd("Show from the front", E, P, "STATIC_VIEW", view("anterior")),
    cmd("Show left view", E, B, "STATIC_VIEW", view("left")),
    cmd("Remove RUL", E, A, "STATIC_VIEW", remove("RUL")),
    cmd("Show right view", E, B, "STATIC_VIEW", view("right")),
    cmd("Add the left lower lobe", E, B, "STATIC_VIEW", add("LLL")),
    cmd("Show from the back", E, P, "STATIC_VIEW", view("posterior")),
    cmd("Show superior view", E, B, "STATIC_VIEW", view("superior")),
    cmd("Remove the right middle lobe", E, B, "STATIC_VIEW", remove("RML")),
    cmd("Turn off the left upper lobe", E, P, "STATIC_VIEW", remove("LUL")),
    cmd("Show inferior view", E, B, "STATIC_VIEW", view("inferior")),
    cmd("Add LUL", E, A, "STATIC_VIEW", add("LUL")),
    cmd("Show surgical view", E, B, "STATIC_VIEW", view("surgical")),
    cmd("Remove the nodules", E, B, "STATIC_VIEW", remove("nodules")),
    cmd("Add the nodules", E, B, "STATIC_VIEW", add("nodules")),
    cmd("Display the lungs from above and add the nodules", E, P, "STATIC_VIEW",
        {"view": "superior", "add": ["nodules"]}, composite=True),
    cmd("Remove the trachea and bronchi and show the anterior view", E, B, "STATIC_VIEW",
        {"remove": ["trachea_bronchia"], "view": "anterior"}, composite=True),
    cmd("Add the airway and remove the nodules", E, B, "STATIC_VIEW",
        {"add": ["trachea_bronchia"], "remove": ["nodules"]}, composite=True),
    cmd("Show the model from the surgeon's side", E, P, "STATIC_VIEW", view("surgical")),
    cmd("Rotate to the right", E, B, "ROTATE", rot("right")),
    cmd("Spin the model to the right", E, P, "ROTATE", rot("right")),
    cmd("Rotate to the left", E, B, "ROTATE", rot("left")),
    cmd("Rotate up", E, B, "ROTATE", rot("up")),
    cmd("Turn the model upward", E, P, "ROTATE", rot("up")),
    cmd("Rotate down", E, B, "ROTATE", rot("down")),
    cmd("Rotate horizontally", E, B, "ROTATE", rot("horizontal")),
    cmd("Rotate vertically", E, B, "ROTATE", rot("vertical")),
    cmd("Zoom in to the right lower lobe", E, B, "ZOOM_IN", zoom("RLL")),
    cmd("Zoom out the 3D model", E, B, "ZOOM_OUT"),
    cmd("Zoom in to LLL", E, A, "ZOOM_IN", zoom("LLL")),
    cmd("Magnify the nodules", E, P, "ZOOM_IN", zoom("nodules")),
    cmd("Remove the 3D model", E, B, "REMOVE"),
    cmd("Show the 3D model", E, B, "STATIC_VIEW"),
    cmd("Bring up the anatomy model", E, P, "STATIC_VIEW"),
    # implicit
    cmd("Surgical view", I, B, "STATIC_VIEW", view("surgical")),
    cmd("Surgeon's view", I, P, "STATIC_VIEW", view("surgical")),
    cmd("Anterior view", I, B, "STATIC_VIEW", view("anterior")),
    cmd("From the front", I, P, "STATIC_VIEW", view("anterior")),
    cmd("Posterior view", I, B, "STATIC_VIEW", view("posterior")),
    cmd("View from behind", I, P, "STATIC_VIEW", view("posterior")),
    cmd("Left view", I, B, "STATIC_VIEW", view("left")),
    cmd("Right view", I, B, "STATIC_VIEW", view("right")),
    cmd("Superior view", I, B, "STATIC_VIEW", view("superior")),
    cmd("Look from the top", I, P, "STATIC_VIEW", view("superior")),
    cmd("Inferior view", I, B, "STATIC_VIEW", view("inferior")),
    cmd("Look from below", I, P, "STATIC_VIEW", view("inferior")),
    cmd("Nodules please", I, B, "STATIC_VIEW", add("nodules")),
    cmd("Airway", I, B, "STATIC_VIEW", add("trachea_bronchia")),
    cmd("RML", I, A, "STATIC_VIEW", add("RML")),
    cmd("Zoom in", I, B, "ZOOM_IN", zoom(CURRENT)),
    cmd("Zoom in more", I, B, "ZOOM_IN", zoom(CURRENT)),
    cmd("Zoom out", I, B, "ZOOM_OUT"),
    cmd("Closer", I, P, "ZOOM_IN", zoom(CURRENT)),
    cmd("Back out", I, P, "ZOOM_OUT"),
    cmd("Get closer", I, P, "ZOOM_IN", zoom(CURRENT)),
    cmd("Pull back", I, P, "ZOOM_OUT"),
    cmd("Zoom out", I, B, "ZOOM_OUT"),
    cmd("Go in closer", I, P, "ZOOM_IN", zoom(CURRENT)),
    cmd("Zoom in", I, B, "ZOOM_IN", zoom(CURRENT)),
    cmd("Shrink the model", I, P, "ZOOM_OUT"),
    cmd("Horizontal rotation", I, B, "ROTATE", rot("horizontal")),
    cmd("Spin around", I, P, "ROTATE", rot("horizontal")),
    cmd("Vertical rotation", I, B, "ROTATE", rot("vertical")),
    cmd("Turn it to the left", I, P, "ROTATE", rot("left")),
    cmd("Flip up", I, P, "ROTATE", rot("up")),
    cmd("Stop rotating", I, B, "STATIC_VIEW"),
    cmd("Initialize", I, B, "STATIC_VIEW", {"reset": True}),
    cmd("Start over with the model", I, P, "STATIC_VIEW", {"reset": True}),
    cmd("Reset", I, B, "STATIC_VIEW", {"reset": True}),
    cmd("Remove", I, B, "REMOVE"),
    cmd("Clear everything", I, P, "REMOVE"),
    cmd("Zoom in", I, B, "ZOOM_IN", zoom(CURRENT)),
    # nlq
    cmd("Can you load anatomical reconstruction?", N, P, "STATIC_VIEW", attempts=["Can you load"]),
    cmd("Can you show the 3D model?", N, B, "STATIC_VIEW"),
    cmd("Can you hide left lung?", N, P, "STATIC_VIEW", remove(*LEFT_LUNG)),
    cmd("Can you bring back the left lung?", N, P, "STATIC_VIEW", add(*LEFT_LUNG)),
    cmd("Can you show the anterior view?", N, B, "STATIC_VIEW", view("anterior")),
    cmd("Can you look from the front?", N, P, "STATIC_VIEW", view("anterior")),
    cmd("Can you show the posterior view?", N, B, "STATIC_VIEW", view("posterior")),
    cmd("Could you view it from the left side?", N, P, "STATIC_VIEW", view("left")),
    cmd("Can you show the right view?", N, B, "STATIC_VIEW", view("right")),
    cmd("Could you show the inferior view?", N, B, "STATIC_VIEW", view("inferior")),
    cmd("Can you show the surgical view?", N, B, "STATIC_VIEW", view("surgical")),
    cmd("Could you show it the way the surgeon sees it?", N, P, "STATIC_VIEW", view("surgical")),
    cmd("Can you activate the right lung?", N, P, "STATIC_VIEW", add(*RIGHT_LUNG)),
    cmd("Can you add the right middle lobe?", N, B, "STATIC_VIEW", add("RML")),
    cmd("Can you remove the left lower lobe?", N, B, "STATIC_VIEW", remove("LLL")),
    cmd("Can you show the nodules?", N, B, "STATIC_VIEW", add("nodules")),
    cmd("Can you take away the nodules?", N, P, "STATIC_VIEW", remove("nodules")),
    cmd("Can you add the trachea and bronchi?", N, B, "STATIC_VIEW", add("trachea_bronchia")),
    cmd("Can you hide the airway and show the nodules?", N, P, "STATIC_VIEW",
        {"remove": ["trachea_bronchia"], "add": ["nodules"]}, composite=True),
    cmd("Would you rotate up?", N, B, "ROTATE", rot("up")),
    cmd("Can you rotate to the right?", N, B, "ROTATE", rot("right")),
    cmd("Could you spin it around?", N, P, "ROTATE", rot("horizontal")),
    cmd("Could you rotate horizontally?", N, B, "ROTATE", rot("horizontal")),
    cmd("Can you rotate down?", N, B, "ROTATE", rot("down")),
    cmd("Can you tilt the model down?", N, P, "ROTATE", rot("down")),
    cmd("Can you zoom in to RLL?", N, A, "ZOOM_IN", zoom("RLL")),
    cmd("Can you zoom out?", N, B, "ZOOM_OUT"),
    cmd("Can you zoom in to the nodules?", N, B, "ZOOM_IN", zoom("nodules")),
    cmd("Could you pull back a bit?", N, P, "ZOOM_OUT"),
    cmd("Can you get a closer look at the nodules?", N, P, "ZOOM_IN", zoom("nodules")),
    cmd("Could you zoom out of the model?", N, B, "ZOOM_OUT"),
    cmd("Could you zoom in to the left upper lobe?", N, B, "ZOOM_IN", zoom("LUL")),
    cmd("Could you enlarge the right lower lobe?", N, P, "ZOOM_IN", zoom("RLL")),
    cmd("Can you zoom in and rotate to the left?", N, B, "ZOOM_IN", zoom(CURRENT, rotation="left"), composite=True),
    cmd("Can you zoom in to the right upper lobe and rotate to the right?", N, B, "ZOOM_IN",
        zoom("RUL", rotation="right"), composite=True),
    cmd("Can you reset the model?", N, B, "STATIC_VIEW", {"reset": True}),
    cmd("Can you initialize and zoom in?", N, B, "ZOOM_IN", zoom("nodules", reset=True), composite=True),
    cmd("Can you remove the 3D model?", N, B, "REMOVE"),
    cmd("Can you erase all?", N, P, "REMOVE"),
]


def resolve_ar_targets(items):
    """Fills "<current>" zoom targets the way the agent prompt defines them."""
    target = None
    for it in items:
        p = it["params"]
        if p.get("reset") or it["action"] == "REMOVE":
            target = None
        if it["action"] == "ZOOM_IN":
            if p.get("target") == CURRENT:
                p["target"] = target or "nodules"
            target = p["target"]


def match_case(original, word):
    if original[0].isupper() and not word[0].isupper():
        return word[0].upper() + word[1:]
    return word


def inject_stt_errors(items, every=4):
    """Misrecognises one confusable word in every `every`-th eligible command
    that does not already carry an annotated error."""
    eligible = 0
    for it in items:
        if it["raw"] is not None:
            continue
        for gold, heard in STT_CONFUSIONS:
            pattern = re.compile(rf"\b{re.escape(gold)}\b", re.IGNORECASE)
            if pattern.search(it["text"]):
                eligible += 1
                if eligible % every == 0:
                    it["raw"] = pattern.sub(lambda m: match_case(m.group(0), heard), it["text"], count=1)
                break


def to_records(prefix, agent, items, speaker_offset=0):
    out = []
    for i, it in enumerate(items, 1):
        rec = {
            "id": f"{prefix}-{i:03d}",
            "agent_gold": agent,
            "raw_text": it["raw"] if it["raw"] is not None else it["text"],
        }
        if it["attempts"]:
            rec["invalid_attempts"] = it["attempts"]
        rec.update(
            {
                "gold_revised": it["text"],
                "structure": it["structure"],
                "ctype": it["ctype"],
                "expression": it["expression"],
                "speaker": SPEAKERS[(i + speaker_offset) % len(SPEAKERS)],
                "gold_action": it["action"],
                "gold_params": it["params"],
            }
        )
        out.append(rec)
    return out


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


TABLE2 = {
    "ir": [
        "Show patient information", "Display the PFT info", "Can you show pulmonary function test?", "PFT results",
        "lung function results", "Show physical and PFT info", "Reset",
    ],
    "iv": [
        "Show the CT views", "Coronal plus 100", "Sagittal minus 30", "Can you move CT forward?",
        "Move front, front, front", "Step to posterior", "Axial zoom in", "Can you get axial closer?",
        "Minimize the axial image", "Could you reduce coronal image?", "Zoom out",
        "Move axial to the middle slice and zoom in", "Can you move axial to 200 and coronal to 230?",
    ],
    "ar": [
        "Show the 3D recon image", "Can you load anatomical reconstruction?", "Turn on RLL", "Can you hide left lung?",
        "Show anterior view", "Can you look from the front?", "Surgical view", "Surgeon's view", "Rotate to the right",
        "Would you rotate up?", "Can you zoom in to RLL?", "Zoom out", "Can you zoom in and rotate to the left?",
        "Can you initialize and zoom in?", "Can you erase all?",
    ],
}

# Mistakes the scripted model makes on Table II rows (by gold text).
TABLE2_OVERRIDES = {
    ("iv", "Could you reduce coronal image?"): {"action": "ZOOM_IN_MOVE", "main_view": "coronal"},
    ("ar", "Can you zoom in to RLL?"): {"action": "STATIC_VIEW", "target": "RLL"},
    ("ar", "Zoom out"): {"action": "ZOOM_OUT", "target": "RLL"},
}


def table2(pools):
    records, overrides = [], []
    n = 0
    for agent, texts in TABLE2.items():
        by_text = {}
        for it in pools[agent]:
            by_text.setdefault(it["text"], it)
        for text in texts:
            n += 1
            it = dict(by_text[text])
            it["params"] = json.loads(json.dumps(it["params"]))
            if text == "Can you zoom in and rotate to the left?":
                it["params"] = {"target": "RLL", "rotation": "left"}
            rec = to_records("t2", agent, [it])[0]
            rec["id"] = f"t2-{n:02d}"
            records.append(rec)
            if (agent, text) in TABLE2_OVERRIDES:
                overrides.append({"id": rec["id"], "stage": "agent", "response": TABLE2_OVERRIDES[(agent, text)]})
    return records, overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    out = Path(ap.parse_args().out)

    resolve_ar_targets(AR)
    pools = {"ir": IR, "iv": IV, "ar": AR}
    t2_records, t2_overrides = table2(pools)
    for items in pools.values():
        inject_stt_errors(items)

    records = to_records("ir", "ir", IR) + to_records("iv", "iv", IV, 1) + to_records("ar", "ar", AR, 2)
    counts = {
        "agent": Counter(r["agent_gold"] for r in records),
        "structure": Counter(r["structure"] for r in records),
        "ctype": Counter(r["ctype"] for r in records),
        "expression": Counter(r["expression"] for r in records),
    }
    expected = {
        "agent": {"ir": 44, "iv": 81, "ar": 115},
        "structure": {"single": 225, "composite": 15},
        "ctype": {"explicit": 80, "implicit": 80, "nlq": 80},
        "expression": {"baseline": 145, "abbreviation": 15, "paraphrase": 80},
    }
    for dim, want in expected.items():
        got = dict(counts[dim])
        assert got == want, f"{dim}: {got} != {want}"
    assert len(t2_records) == 35

    write_jsonl(out / "dataset.jsonl", records)
    write_jsonl(out / "table2" / "dataset.jsonl", t2_records)
    write_jsonl(out / "table2" / "overrides.jsonl", t2_overrides)
    stt = sum(r["raw_text"] != r["gold_revised"] for r in records)
    print(f"wrote {len(records)} records ({stt} with recognition errors) and {len(t2_records)} Table II rows to {out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Writes a 5-lamp detection fixture and its statistics, computed here
independently of the Rust implementation.

Run from this directory: python3 gen_cluster_stats.py
"""
import csv
import math
import random

RADIUS = 0.5
REF_RADIUS = 0.5

rng = random.Random(20240611)
lamps = [
    # x, y, z, model, state
    (1.0, 1.0, 3.0, 1, True),
    (3.5, 1.0, 3.0, 2, False),
    (6.0, 1.0, 3.0, 3, True),
    (1.0, 4.0, 3.0, 4, True),
    (3.5, 4.0, 3.0, 5, False),
]

detections = []  # frame, model, score, state, p, c
for frame in range(12):
    cam = (0.5 * frame, 2.5, 1.5)
    for x, y, z, model, state in lamps:
        if rng.random() < 0.2:
            continue
        p = (x + rng.gauss(0, 0.05), y + rng.gauss(0, 0.05), z + rng.gauss(0, 0.08))
        m = model if rng.random() < 0.85 else rng.choice([1, 2, 3, 4, 5])
        score = round(rng.uniform(0.2, 1.0), 6)
        s = state if rng.random() < 0.9 else (not state)
        detections.append((frame, m, score, s, p, cam))
rng.shuffle(detections)

with open("cluster_detections.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["frame", "model_id", "score", "state", "px", "py", "pz", "cx", "cy", "cz"])
    for frame, m, score, s, p, c in detections:
        w.writerow([frame, m, repr(score), "on" if s else "off"] + [repr(v) for v in p + c])

with open("cluster_references.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["x", "y", "z", "model_id", "state"])
    for x, y, z, model, state in lamps:
        w.writerow([repr(x), repr(y), repr(z), model, "on" if state else "off"])


def dist(a, b):
    return math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))


# Greedy clustering by frame with running-sum centers.
clusters = []  # [sum, members]
for f in sorted({d[0] for d in detections}):
    for i, d in enumerate(detections):
        if d[0] != f:
            continue
        best = None
        for k, (s, mem) in enumerate(clusters):
            c = tuple(v / len(mem) for v in s)
            e = dist(c, d[4])
            if e <= RADIUS and (best is None or e < best[1]):
                best = (k, e)
        if best is None:
            clusters.append([list(d[4]), [i]])
        else:
            s, mem = clusters[best[0]]
            for a in range(3):
                s[a] += d[4][a]
            mem.append(i)

centers = []
models = []
for s, mem in clusters:
    centers.append(tuple(sum(detections[i][4][a] for i in mem) / len(mem) for a in range(3)))
    acc = {}
    for i in mem:
        acc[detections[i][1]] = acc.get(detections[i][1], 0.0) + detections[i][2]
    models.append(min(acc, key=lambda m: (-acc[m], m)))

member_d = [dist(detections[i][4], centers[k]) * 100 for k, (_, mem) in enumerate(clusters) for i in mem]
mean = sum(member_d) / len(member_d)
var = sum((d - mean) ** 2 for d in member_d) / len(member_d)
ref_d = [min(dist(c, l[:3]) for l in lamps) * 100 for c in centers]
mean_ref = sum(ref_d) / len(ref_d)

pairs = sorted(
    (dist(c, l[:3]), k, r)
    for k, c in enumerate(centers)
    for r, l in enumerate(lamps)
    if dist(c, l[:3]) <= REF_RADIUS
)
link, taken = {}, set()
for _, k, r in pairs:
    if k not in link and r not in taken:
        link[k] = r
        taken.add(r)
identified = sum(models[k] == lamps[r][3] for k, r in link.items())
correct = sum(
    detections[i][1] == lamps[link[k]][3]
    for k, (_, mem) in enumerate(clusters)
    if k in link
    for i in mem
)

with open("cluster_expected.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["key", "value"])
    w.writerow(["clusters", len(clusters)])
    w.writerow(["linked_clusters", len(link)])
    w.writerow(["identified_clusters", identified])
    w.writerow(["correct_detections", correct])
    w.writerow(["mean_dist_to_center", repr(mean)])
    w.writerow(["var_dist_to_center", repr(var)])
    w.writerow(["mean_dist_to_reference", repr(mean_ref)])

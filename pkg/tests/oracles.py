"""Independent reference implementations used as test oracles.

Everything here is written with plain Python loops over scalars and shares
no code with the package beyond the value types, so agreement between the
two is evidence rather than tautology.
"""
import itertools
import math


def dist3(a, b):
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def dist2(a, b):
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2)


def _box(o):
    return o.box3d if hasattr(o, "box3d") else o


# -- detection ---------------------------------------------------------------

def greedy_frame(gt, dets, threshold, dist=dist3):
    """List of matched gt index (or None) per detection, in input order."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = set()
    out = [None] * len(dets)
    for i in order:
        best, best_d = None, None
        for j, g in enumerate(gt):
            if j in taken:
                continue
            d = dist(_box(dets[i]), _box(g))
            if d <= threshold and (best_d is None or d < best_d):
                best, best_d = j, d
        if best is not None:
            taken.add(best)
            out[i] = best
    return out


def ap(gt_frames, det_frames, threshold, dist=dist3):
    pooled = []
    n_gt = 0
    for gt, dets in zip(gt_frames, det_frames):
        n_gt += len(gt)
        m = greedy_frame(gt, dets, threshold, dist)
        pooled.extend((d.score, m[i] is not None) for i, d in enumerate(dets))
    if n_gt == 0:
        return float("nan")
    pooled = sorted(pooled, key=lambda p: -p[0])
    prec, rec = [], []
    tp = 0
    for k, (_, hit) in enumerate(pooled, start=1):
        tp += hit
        prec.append(tp / k)
        rec.append(tp / n_gt)
    total = 0.0
    for k in range(101):
        level = k / 100
        best = 0.0
        for p, r in zip(prec, rec):
            if r >= level and p > best:
                best = p
        total += best
    return total / 101


def ar(gt_frames, det_frames, level, thresholds, dist=dist3):
    vals = []
    for d in thresholds:
        hit = tot = 0
        for gt, dets in zip(gt_frames, det_frames):
            m = set(j for j in greedy_frame(gt, dets, d, dist) if j is not None)
            for j, g in enumerate(gt):
                if int(g.occlusion) == level:
                    tot += 1
                    hit += j in m
        if tot == 0:
            return None
        vals.append(hit / tot)
    return sum(vals) / len(vals)


# -- tracking ----------------------------------------------------------------

def _components(gs, ps, ok):
    """Connected components of the bipartite gate graph."""
    seen_g, comps = set(), []
    for g0 in gs:
        if g0 in seen_g:
            continue
        cg, cp, stack = {g0}, set(), [("g", g0)]
        seen_g.add(g0)
        while stack:
            kind, v = stack.pop()
            if kind == "g":
                for p in ps:
                    if ok(v, p) and p not in cp:
                        cp.add(p)
                        stack.append(("p", p))
            else:
                for g in gs:
                    if ok(g, v) and g not in cg:
                        cg.add(g)
                        seen_g.add(g)
                        stack.append(("g", g))
        comps.append((sorted(cg), sorted(cp)))
    return comps


def _best_assignment(gs, ps, cost):
    """Exhaustive search: most pairs first, then least total cost."""
    best = (0, 0.0, ())
    gs = list(gs)

    def rec(i, used, n, c, pairs):
        nonlocal best
        if n + (len(gs) - i) < best[0]:
            return
        if i == len(gs):
            if n > best[0] or (n == best[0] and c < best[1]):
                best = (n, c, tuple(pairs))
            return
        g = gs[i]
        for p in ps:
            if p not in used and cost(g, p) is not None:
                rec(i + 1, used | {p}, n + 1, c + cost(g, p), pairs + [(g, p)])
        rec(i + 1, used, n, c, pairs)

    rec(0, frozenset(), 0, 0.0, [])
    return best[2]


def clear_mot(gt_tracks, pred_tracks, threshold, dist=dist3):
    fp = fn = ids = n_gt = 0
    prev = {}
    last = {}
    present, matched = {}, {}
    for gframe, pframe in zip(gt_tracks, pred_tracks):
        gbox = dict(gframe)
        pbox = dict(pframe)
        pairs = {}
        for g, p in prev.items():
            if g in gbox and p in pbox and dist(gbox[g], pbox[p]) <= threshold:
                pairs[g] = p
        free_g = [g for g, _ in gframe if g not in pairs]
        used = set(pairs.values())
        free_p = [p for p, _ in pframe if p not in used]

        def cost(g, p):
            d = dist(gbox[g], pbox[p])
            return d if d <= threshold else None

        for cg, cp in _components(free_g, free_p, lambda g, p: cost(g, p) is not None):
            for g, p in _best_assignment(cg, cp, cost):
                pairs[g] = p
        for g, p in pairs.items():
            if g in last and last[g] != p:
                ids += 1
            last[g] = p
            matched[g] = matched.get(g, 0) + 1
        for g in gbox:
            present[g] = present.get(g, 0) + 1
        n_gt += len(gframe)
        fn += len(gframe) - len(pairs)
        fp += len(pframe) - len(pairs)
        prev = pairs
    mota = 1.0 - (fp + ids + fn) / n_gt
    ratios = [matched.get(g, 0) / n for g, n in present.items()]
    mt = sum(1 for r in ratios if r > 0.8) / len(ratios)
    ml = sum(1 for r in ratios if r < 0.2) / len(ratios)
    return {"mota": mota, "fp": fp, "fn": fn, "ids": ids, "mt": mt, "ml": ml}


# -- prediction --------------------------------------------------------------

def fde_mde(pred_points, gt_points):
    errs = [math.hypot(p[0] - g[0], p[1] - g[1]) for p, g in zip(pred_points, gt_points)]
    return errs[-1], sum(errs) / len(errs)


# -- post-processing ---------------------------------------------------------

def circle_nms(centers, scores, radius):
    """Indices kept, in acceptance order."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    kept = []
    for i in order:
        ok = True
        for j in kept:
            if math.hypot(centers[i][0] - centers[j][0], centers[i][1] - centers[j][1]) < radius:
                ok = False
                break
        if ok:
            kept.append(i)
    return kept


def points_in_box(points, box):
    """Count by rotating each point into the box frame."""
    c, s = math.cos(-box.theta), math.sin(-box.theta)
    n = 0
    for p in points:
        dx, dy = p[0] - box.x, p[1] - box.y
        lx, ly = c * dx - s * dy, s * dx + c * dy
        if abs(lx) <= box.l / 2 and abs(ly) <= box.w / 2 and abs(p[2] - box.z) <= box.h / 2:
            n += 1
    return n


# -- attention ---------------------------------------------------------------

def attention(x, wq, wk, wv):
    """Triple-loop softmax(Q K^T) V over the H*W tokens of an H x W x C array."""
    h, w, c = len(x), len(x[0]), len(x[0][0])
    tokens = [x[i][j] for i in range(h) for j in range(w)]
    n = len(tokens)

    def proj(t, m):
        return [sum(t[a] * m[a][b] for a in range(c)) for b in range(c)]

    q = [proj(t, wq) for t in tokens]
    k = [proj(t, wk) for t in tokens]
    v = [proj(t, wv) for t in tokens]
    out = []
    for i in range(n):
        s = [sum(q[i][a] * k[j][a] for a in range(c)) for j in range(n)]
        mx = max(s)
        e = [math.exp(si - mx) for si in s]
        z = sum(e)
        out.append([sum(e[j] / z * v[j][b] for j in range(n)) for b in range(c)])
    return [[out[i * w + j] for j in range(w)] for i in range(h)]


# -- occlusion ---------------------------------------------------------------

def raycast_shadow(positions, index, radius, origin=(0.0, 0.0), rays=2001):
    """Fraction of rays aimed across body ``index``'s silhouette that hit a nearer body first.

    Rays from ``origin`` sweep the angular extent of the target disc. A ray
    is blocked when it intersects another disc whose center is nearer to the
    sensor than the target's center and the hit lies before the target.
    """
    ox, oy = origin
    tx, ty = positions[index][0] - ox, positions[index][1] - oy
    dt = math.hypot(tx, ty)
    half = math.asin(min(radius / dt, 1.0))
    base = math.atan2(ty, tx)
    blocked = 0
    for r in range(rays):
        a = base - half + (2 * half) * (r + 0.5) / rays
        ux, uy = math.cos(a), math.sin(a)
        hit = False
        for k, p in enumerate(positions):
            if k == index:
                continue
            px, py = p[0] - ox, p[1] - oy
            if math.hypot(px, py) >= dt:
                continue
            # ray-circle intersection: |t*u - p|^2 = r^2
            b = ux * px + uy * py
            disc = b * b - (px * px + py * py - radius * radius)
            if disc >= 0 and b - math.sqrt(disc) > 0:
                hit = True
                break
        blocked += hit
    return blocked / rays


# -- brute-force pairs -------------------------------------------------------

def neighbour_counts(centers, radius):
    out = []
    for i, a in enumerate(centers):
        out.append(sum(1 for j, b in enumerate(centers)
                       if j != i and math.hypot(a[0] - b[0], a[1] - b[1]) <= radius))
    return out


def all_pairs(seq):
    return itertools.combinations(seq, 2)

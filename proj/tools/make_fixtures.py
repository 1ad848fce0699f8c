#!/usr/bin/env python3
"""Generates the bundled road networks and scenario files under data/.

Run from the repository root:  python3 tools/make_fixtures.py
The output is deterministic; the generated JSON is committed.
"""

import json
import math
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
NETS = ROOT / "data" / "networks"
SCENARIOS = ROOT / "data" / "scenarios"

LANE_WIDTH = 3.5
CAR_LENGTH = 4.5
URBAN = 13.9
RURAL = 22.2


def r(v):
    return round(v, 6)


def pt(x, y):
    return [r(x), r(y)]


def write(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def edge(eid, frm, to, shape, lanes=1, limit=URBAN):
    return {"id": eid, "from": frm, "to": to, "speed_limit": limit, "lanes": lanes,
            "shape": [pt(*p) for p in shape]}


def network(nodes, edges, connections=(), signals=()):
    doc = {"format_version": 1,
           "nodes": [{"id": n, "x": r(x), "y": r(y)} for n, (x, y) in nodes.items()],
           "edges": edges}
    if connections:
        doc["connections"] = list(connections)
    if signals:
        doc["signals"] = list(signals)
    return doc


def arc(cx, cy, radius, a0, a1, segments):
    return [(cx + radius * math.cos(a0 + (a1 - a0) * i / segments),
             cy + radius * math.sin(a0 + (a1 - a0) * i / segments)) for i in range(segments + 1)]


def bezier(p0, p1, p2, segments=8):
    out = []
    for i in range(1, segments):
        t = i / segments
        out.append(pt((1 - t) ** 2 * p0[0] + 2 * (1 - t) * t * p1[0] + t * t * p2[0],
                      (1 - t) ** 2 * p0[1] + 2 * (1 - t) * t * p1[1] + t * t * p2[1]))
    return out


# ---------------------------------------------------------------- networks

def straight_road(length, lanes, limit):
    return network({"a": (0, 0), "b": (length, 0)},
                   [edge("road", "a", "b", [(0, 0), (length, 0)], lanes, limit)])


def crossing(signalized, main_green=60.0):
    """Two two-way roads crossing at node c=(0,0); approaches end 7 m short."""
    arm = 300.0
    gap = 7.0
    nodes = {"c": (0, 0), "w": (-arm, 0), "e": (arm, 0), "s": (0, -arm), "n": (0, arm)}
    off = LANE_WIDTH / 2
    edges = [
        edge("w_in", "w", "c", [(-arm, -off), (-gap, -off)]),
        edge("e_out", "c", "e", [(gap, -off), (arm, -off)]),
        edge("e_in", "e", "c", [(arm, off), (gap, off)]),
        edge("w_out", "c", "w", [(-gap, off), (-arm, off)]),
        edge("s_in", "s", "c", [(off, -arm), (off, -gap)]),
        edge("n_out", "c", "n", [(off, gap), (off, arm)]),
        edge("n_in", "n", "c", [(-off, arm), (-off, gap)]),
        edge("s_out", "c", "s", [(-off, -gap), (-off, -arm)]),
    ]
    moves = [("w_in_0", "e_out_0", 0), ("e_in_0", "w_out_0", 0), ("s_in_0", "n_out_0", 1), ("n_in_0", "s_out_0", 1)]
    conns = []
    for i, (f, t, group) in enumerate(moves):
        c = {"from": f, "to": t}
        if signalized:
            c["signal"] = "tl_c"
            c["link"] = i
        conns.append(c)
    signals = []
    if signalized:
        def state(g0, g1):
            return g0 + g0 + g1 + g1
        signals.append({"id": "tl_c", "phases": [
            {"state": state("G", "r"), "duration": main_green},
            {"state": state("y", "r"), "duration": 3},
            {"state": state("r", "r"), "duration": 2},
            {"state": state("r", "G"), "duration": 20},
            {"state": state("r", "y"), "duration": 3},
            {"state": state("r", "r"), "duration": 2}]})
    return network(nodes, edges, conns, signals)


def ramp_network():
    nodes = {"a": (0, 0), "b": (0, -80), "m": (400, 0), "z": (1200, 0)}
    edges = [
        edge("main", "a", "m", [(0, 0), (392, 0)], 1, URBAN + 2.8),
        edge("ramp", "b", "m", [(60, -80), (250, -20), (388, -3.5)], 1, URBAN + 2.8),
        edge("out", "m", "z", [(408, 0), (1200, 0)], 1, URBAN + 2.8),
    ]
    conns = [{"from": "main_0", "to": "out_0"}, {"from": "ramp_0", "to": "out_0"}]
    return network(nodes, edges, conns)


def intersect(p, d, q, e):
    """Intersection of the lines p + t d and q + k e."""
    den = d[0] * e[1] - d[1] * e[0]
    t = ((q[0] - p[0]) * e[1] - (q[1] - p[1]) * e[0]) / den
    return (p[0] + t * d[0], p[1] + t * d[1])


def roundabout(radius=25.0, arm=200.0, split=0.3):
    """Single-lane roundabout with four two-way arms, circulating counterclockwise.

    Around each arm the ring has a short zone edge `ring_<arm>` between the exit
    point (angle - split) and the entry point (angle + split); long edges
    `ring_<arm><next>` join consecutive zones.
    """
    names = ["E", "N", "W", "S"]
    angles = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    off = LANE_WIDTH / 2
    nodes, edges, conns = {}, [], []

    def on_ring(a):
        return (radius * math.cos(a), radius * math.sin(a))

    def tangent(a):
        return (-math.sin(a), math.cos(a))

    for n, a in zip(names, angles):
        nodes[f"x_{n}"] = on_ring(a - split)
        nodes[f"e_{n}"] = on_ring(a + split)
        nodes[f"far_{n}"] = ((radius + arm) * math.cos(a), (radius + arm) * math.sin(a))
    for i, (n, a) in enumerate(zip(names, angles)):
        n2, a2 = names[(i + 1) % 4], a + math.pi / 2
        edges.append(edge(f"ring_{n}", f"x_{n}", f"e_{n}", arc(0, 0, radius, a - split, a + split, 6)))
        edges.append(edge(f"ring_{n}{n2}", f"e_{n}", f"x_{n2}", arc(0, 0, radius, a + split, a2 - split, 12)))
    for i, (n, a) in enumerate(zip(names, angles)):
        prev = names[(i - 1) % 4]
        u = (math.cos(a), math.sin(a))
        p = tangent(a)
        in_start = ((radius + arm) * u[0] + off * p[0], (radius + arm) * u[1] + off * p[1])
        in_end = ((radius + 15) * u[0] + off * p[0], (radius + 15) * u[1] + off * p[1])
        out_start = ((radius + 15) * u[0] - off * p[0], (radius + 15) * u[1] - off * p[1])
        out_end = ((radius + arm) * u[0] - off * p[0], (radius + arm) * u[1] - off * p[1])
        edges.append(edge(f"{n}_in", f"far_{n}", f"e_{n}", [in_start, in_end]))
        edges.append(edge(f"{n}_out", f"x_{n}", f"far_{n}", [out_start, out_end]))
        entry = on_ring(a + split)
        exit_ = on_ring(a - split)
        conns.append({"from": f"{n}_in_0", "to": f"ring_{n}{names[(i + 1) % 4]}_0",
                      "shape": bezier(in_end, intersect(in_end, (-u[0], -u[1]), entry, tangent(a + split)), entry)})
        conns.append({"from": f"ring_{n}_0", "to": f"ring_{n}{names[(i + 1) % 4]}_0"})
        conns.append({"from": f"ring_{prev}{n}_0", "to": f"ring_{n}_0"})
        conns.append({"from": f"ring_{prev}{n}_0", "to": f"{n}_out_0",
                      "shape": bezier(exit_, intersect(exit_, tangent(a - split), out_start, u), out_start)})
    return network(nodes, edges, conns)


def ring(radius=400.0, lanes=3, segments=64):
    names = ["q0", "q1", "q2", "q3"]
    nodes = {f"n{i}": (radius * math.cos(i * math.pi / 2), radius * math.sin(i * math.pi / 2)) for i in range(4)}
    edges = []
    for i, name in enumerate(names):
        a0, a1 = i * math.pi / 2, (i + 1) * math.pi / 2
        lane_list = []
        for k in range(lanes):
            lane_list.append({"shape": [pt(*p) for p in arc(0, 0, radius - k * LANE_WIDTH, a0, a1, segments)]})
        e = {"id": name, "from": f"n{i}", "to": f"n{(i + 1) % 4}", "speed_limit": URBAN,
             "shape": lane_list[0]["shape"], "lanes": lane_list}
        edges.append(e)
    conns = []
    for i, name in enumerate(names):
        nxt = names[(i + 1) % 4]
        for k in range(lanes):
            conns.append({"from": f"{name}_{k}", "to": f"{nxt}_{k}"})
    return network(nodes, edges, conns)


def grid(n=3, spacing=200.0, setback=10.0, green=12.0, yellow=3.0, all_red=3.0):
    nodes = {f"j{i}{j}": (i * spacing, j * spacing) for i in range(n) for j in range(n)}
    off = LANE_WIDTH / 2
    edges = []
    geometry = {}
    for (a, (ax, ay)) in nodes.items():
        for (b, (bx, by)) in nodes.items():
            if abs(ax - bx) + abs(ay - by) != spacing:
                continue
            ux, uy = (bx - ax) / spacing, (by - ay) / spacing
            rx, ry = uy, -ux  # right of travel
            start = (ax + ux * setback + rx * off, ay + uy * setback + ry * off)
            end = (bx - ux * setback + rx * off, by - uy * setback + ry * off)
            eid = f"{a}_{b}"
            edges.append(edge(eid, a, b, [start, end]))
            geometry[eid] = (a, b, start, end, (ux, uy))
    conns = []
    signals = []
    for node in sorted(nodes):
        incoming = sorted(e for e, g in geometry.items() if g[1] == node)
        outgoing = sorted(e for e, g in geometry.items() if g[0] == node)
        links = []
        for approach, e_in in enumerate(incoming):
            for e_out in outgoing:
                if geometry[e_out][1] == geometry[e_in][0]:
                    continue  # no U-turns
                links.append((approach, e_in, e_out))
        for idx, (approach, e_in, e_out) in enumerate(links):
            p0 = geometry[e_in][3]
            p2 = geometry[e_out][2]
            d_in = geometry[e_in][4]
            d_out = geometry[e_out][4]
            c = {"from": f"{e_in}_0", "to": f"{e_out}_0", "signal": f"tl_{node}", "link": idx}
            if abs(d_in[0] * d_out[0] + d_in[1] * d_out[1]) < 0.5:
                # turn: control point where the two lane lines intersect
                if d_in[0] != 0:
                    ctrl = (p2[0], p0[1])
                else:
                    ctrl = (p0[0], p2[1])
                c["shape"] = bezier(p0, ctrl, p2)
            conns.append(c)
        phases = []
        for approach in range(len(incoming)):
            green_state = "".join("G" if a == approach else "r" for a, _, _ in links)
            yellow_state = "".join("y" if a == approach else "r" for a, _, _ in links)
            phases.append({"state": green_state, "duration": green})
            phases.append({"state": yellow_state, "duration": yellow})
            phases.append({"state": "r" * len(links), "duration": all_red})
        signals.append({"id": f"tl_{node}", "phases": phases})
    return network(nodes, edges, conns, signals)


# --------------------------------------------------------------- scenarios

def scenario(sid, title, net, ego, actors=(), flows=(), triggers=(), duration=90, weather=None, goal=None):
    doc = {"format_version": 1, "id": sid, "title": title, "network": f"../networks/{net}.net.json",
           "duration_s": duration, "ego": ego}
    if weather:
        doc["weather"] = weather
    if actors:
        doc["actors"] = list(actors)
    if flows:
        doc["flows"] = list(flows)
    if triggers:
        doc["triggers"] = list(triggers)
    if goal:
        doc["goal"] = goal
    return doc


STEADY = {"sigma": 0.0}


def build_scenarios():
    out = []

    out.append(scenario(
        "practice", "Practice drive", "two_lane_road",
        ego={"lane": "road_1", "s": 40, "v0": 0, "route": ["road"]},
        flows=[{"id": "ambient", "entry_edge": "road", "rate": 0.12, "v0": 12.0}]))

    # Lead car brakes hard once the ego closes in.
    out.append(scenario(
        "sudden_stop", "Sudden vehicle stop in front", "two_lane_road",
        ego={"lane": "road_0", "s": 20, "v0": 13.0},
        actors=[{"id": "lead", "kind": "bot_car", "lane": "road_0", "s": 60, "v0": 11.0,
                 "params": dict(STEADY, v_desired=11.0)}],
        flows=[{"id": "ambient", "entry_edge": "road", "rate": 0.05, "v0": 12.0, "params": {"v_desired": 12.0}}],
        triggers=[{"id": "lead_brakes", "condition": {"type": "ego_gap_below", "actor": "lead", "gap": 25},
                   "actions": [{"type": "hard_stop", "actor": "lead", "decel": 8.0}]}]))

    # Car in the adjacent lane cuts in just ahead of the ego.
    out.append(scenario(
        "sudden_lane_change", "Sudden lane change interaction", "two_lane_road",
        ego={"lane": "road_0", "s": 20, "v0": 13.0},
        actors=[{"id": "cutter", "kind": "bot_car", "lane": "road_1", "s": 70, "v0": 9.0,
                 "params": dict(STEADY, v_desired=9.0)}],
        triggers=[{"id": "cut_in", "condition": {"type": "ego_gap_below", "actor": "cutter", "gap": 6.5},
                   "actions": [{"type": "force_lane_change", "actor": "cutter", "dir": "right"}]}]))

    # Side-road car pulls out across the ego's path at an unsignalized crossing:
    # the ego front reaches the side lane when the car's body fills the ego lane.
    off = LANE_WIDTH / 2
    ego_v = 13.0
    pull_accel = 4.0
    side_s = 292.5
    to_mid = (-off + CAR_LENGTH / 2) - (-(300 - side_s))
    t_mid = math.sqrt(2 * to_mid / pull_accel)
    trigger_x = off - ego_v * t_mid
    out.append(scenario(
        "t_bone", "T-bone crash", "crossing",
        ego={"lane": "w_in_0", "s": 150, "v0": ego_v, "route": ["w_in", "e_out"]},
        actors=[{"id": "side", "kind": "bot_car", "lane": "s_in_0", "s": side_s, "v0": 0.0,
                 "route": ["s_in", "n_out"], "params": dict(STEADY, v_desired=0.0)}],
        flows=[{"id": "opposing", "entry_edge": "e_in", "route": ["e_in", "w_out"], "rate": 0.05, "v0": 12.0}],
        triggers=[{"id": "pull_out", "condition": {"type": "ego_in_region", "center": [r(trigger_x), -off], "radius": 1.0},
                   "actions": [{"type": "set_speed", "actor": "side", "v": 10.0, "decel_limit": pull_accel}]}]))

    # Cross-traffic car ignores its red light.
    run_v = 12.0
    ego_v = 13.0
    ego_s = 100.0
    ego_to_conflict = (300 - 7) - ego_s + (7 - off - 0.9)
    t_meet = ego_to_conflict / ego_v
    adv_to_conflict = run_v * t_meet - 1.5
    adv_s = (300 - 7) - (adv_to_conflict - (7 - off - 0.9))
    out.append(scenario(
        "red_light_runner", "Vehicle running a red light", "crossing_signal",
        ego={"lane": "w_in_0", "s": ego_s, "v0": ego_v, "route": ["w_in", "e_out"]},
        actors=[{"id": "runner", "kind": "bot_car", "lane": "s_in_0", "s": r(adv_s), "v0": run_v,
                 "route": ["s_in", "n_out"], "params": dict(STEADY, v_desired=run_v)}],
        flows=[{"id": "opposing", "entry_edge": "e_in", "route": ["e_in", "w_out"], "rate": 0.05, "v0": 12.0}],
        triggers=[{"id": "runs_red", "condition": {"type": "time_elapsed", "t": 0.5},
                   "actions": [{"type": "run_red_light", "actor": "runner"}]}]))

    # Deer leaps across a rural road.
    ego_v = 20.0
    deer_v = 6.5
    deer_x = 600.0
    deer_start_y = -13.0
    t_cross = (0.0 - deer_start_y) / deer_v
    trigger_x = deer_x - ego_v * t_cross
    out.append(scenario(
        "deer_crossing", "Sudden deer crossing", "rural_road",
        ego={"lane": "road_0", "s": 300, "v0": ego_v},
        triggers=[{"id": "deer_jumps", "condition": {"type": "ego_in_region", "center": [r(trigger_x), 0.0], "radius": 1.0},
                   "actions": [{"type": "spawn_agent", "id": "deer", "kind": "deer",
                                "path": [[deer_x, deer_start_y], [deer_x, 12.0]], "v": deer_v}]}]))

    # Circulating car speeds up instead of leaving a gap as the ego enters.
    radius = 25.0
    ego_v = 9.0
    ego_front_y = -105.0
    trigger_y = -60.0
    circ_v, circ_boost, circ_accel = 8.0, 10.0, 3.0
    t_trigger = (trigger_y - ego_front_y) / ego_v
    t_meet = t_trigger + ((-radius - 0.9) - trigger_y) / ego_v + 0.35
    t_acc = (circ_boost - circ_v) / circ_accel
    travelled = circ_v * t_trigger + circ_v * t_acc + 0.5 * circ_accel * t_acc ** 2 + circ_boost * (t_meet - t_trigger - t_acc)
    meet_angle = 1.5 * math.pi + math.asin((off + 0.9 + CAR_LENGTH / 2) / radius)
    start_angle = meet_angle - travelled / radius
    ring_edges = []  # (edge id, start angle, end angle) counterclockwise from E
    arms = ["E", "N", "W", "S"]
    for i, n in enumerate(arms):
        a = i * math.pi / 2
        ring_edges.append((f"ring_{n}", a - 0.3, a + 0.3))
        ring_edges.append((f"ring_{n}{arms[(i + 1) % 4]}", a + 0.3, a + math.pi / 2 - 0.3))
    last = next(k for k, e in enumerate(ring_edges) if e[1] <= meet_angle <= e[2])
    k = last
    while not ring_edges[k][1] <= start_angle <= ring_edges[k][2]:
        k -= 1
    circ_route = [ring_edges[j][0] for j in range(k, last + 2)]
    circ_s = (start_angle - ring_edges[k][1]) * radius
    out.append(scenario(
        "roundabout", "Crash at roundabout", "roundabout",
        ego={"lane": "S_in_0", "s": r(ego_front_y + 225), "v0": ego_v, "route": ["S_in", "ring_SE"]},
        actors=[{"id": "circulating", "kind": "bot_car", "lane": circ_route[0] + "_0", "s": r(circ_s),
                 "v0": circ_v, "route": circ_route,
                 "yield_at_merges": False, "params": dict(STEADY, v_desired=circ_v)}],
        triggers=[{"id": "no_yield", "condition": {"type": "ego_in_region", "center": [off, trigger_y], "radius": 1.0},
                   "actions": [{"type": "set_speed", "actor": "circulating", "v": circ_boost, "decel_limit": circ_accel}]}]))

    # Ramp car merges into the ego's lane just ahead of it without yielding.
    ego_v = 15.0
    merge_v = 11.0
    ramp_left = math.dist((60, -80), (250, -20)) + math.dist((250, -20), (388, -3.5)) - 150.0
    t_merge = (ramp_left + math.dist((388, -3.5), (408, 0))) / merge_v
    ego_s = 392.0 - (ego_v * (t_merge + 0.5) - 16.0)
    out.append(scenario(
        "ramp_merge", "Crash in ramp merge", "ramp",
        ego={"lane": "main_0", "s": r(ego_s), "v0": ego_v, "route": ["main", "out"]},
        actors=[{"id": "merger", "kind": "bot_car", "lane": "ramp_0", "s": 150.0, "v0": 13.0,
                 "route": ["ramp", "out"], "yield_at_merges": False, "params": dict(STEADY, v_desired=13.0)}],
        triggers=[{"id": "merge_now", "condition": {"type": "time_elapsed", "t": 0.02},
                   "actions": [{"type": "set_speed", "actor": "merger", "v": merge_v, "decel_limit": 4.0}]}]))

    # Pedestrian steps out between parked cars.
    ego_v = 11.0
    ped_v = 1.6
    ped_x = 400.0
    ped_start_y = -off - 1.2
    t_cross = (0.0 - ped_start_y) / ped_v
    trigger_x = ped_x - ego_v * t_cross
    out.append(scenario(
        "jaywalker", "Jaywalking pedestrian crash", "two_lane_road",
        ego={"lane": "road_0", "s": 150, "v0": ego_v},
        flows=[{"id": "ambient", "entry_edge": "road", "rate": 0.04, "v0": 12.0, "params": {"v_desired": 12.0}}],
        triggers=[{"id": "steps_out", "condition": {"type": "ego_in_region", "center": [r(trigger_x), 0.0], "radius": 1.0},
                   "actions": [{"type": "spawn_agent", "id": "pedestrian", "kind": "pedestrian",
                                "path": [[ped_x, ped_start_y], [ped_x, 9.0]], "v": ped_v}]}],
        weather={"friction": 1.0, "visibility": 400}))
    return out


def main():
    write(NETS / "two_lane_road.net.json", straight_road(2000.0, 2, URBAN))
    write(NETS / "rural_road.net.json", straight_road(3000.0, 1, RURAL))
    write(NETS / "crossing.net.json", crossing(signalized=False))
    write(NETS / "crossing_signal.net.json", crossing(signalized=True))
    write(NETS / "ramp.net.json", ramp_network())
    write(NETS / "roundabout.net.json", roundabout())
    write(NETS / "ring.net.json", ring())
    write(NETS / "grid.net.json", grid())
    for doc in build_scenarios():
        write(SCENARIOS / f"{doc['id']}.scenario.json", doc)


if __name__ == "__main__":
    main()

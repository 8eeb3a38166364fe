import sys, time, itertools
sys.path.insert(0, "src")
sys.path.insert(0, "tests")
from martinlab import groups, floyd
import oracles

t0 = time.time()
spec = groups.GroupSpec.parse("F_2")
cfg = floyd.FloydConfig(spec, a=2.0, radius=6)
ball4 = groups.ball_elements(spec, 4)

# closed form vs brute Dijkstra on ball(3) pairs
ball3 = groups.ball_elements(spec, 3)
els = groups.ball_elements(spec, 6)
bad = 0
import random
random.seed(7)
pairs = random.sample([(x, y) for x in ball3 for y in ball3], 60)
for x, y in pairs:
    mine = floyd.floyd_distance(cfg, x, y)
    brute = oracles.brute_floyd_distance(spec, els, 2.0, groups.IDENTITY, x, y)
    if abs(mine.value - brute) > 1e-12:
        bad += 1
        print("MISMATCH", x, y, mine.value, brute)
print(f"tree-vs-brute: {60-bad}/60 match, exact_flags={all(floyd.floyd_distance(cfg,x,y).exact for x,y in pairs)}")

# metric axioms on ball(2) triples
b2 = groups.ball_elements(spec, 2)
viol = 0
for x, y, z in itertools.product(b2, repeat=3):
    dxy = floyd.floyd_distance(cfg, x, y).value
    dyx = floyd.floyd_distance(cfg, y, x).value
    if abs(dxy - dyx) > 1e-15:
        viol += 1
    if floyd.floyd_distance(cfg, x, z).value > dxy + floyd.floyd_distance(cfg, y, z).value + 1e-12:
        viol += 1
print(f"metric axioms ball(2): violations={viol} ({len(b2)}^3 triples)")

# equivariance bit-exact
g = groups.str_to_word(spec, "a1*a2^-1")
x = groups.str_to_word(spec, "a2*a1")
y = groups.str_to_word(spec, "a1^-1*a2")
c0 = floyd.FloydConfig(spec, 2.0, groups.IDENTITY, 8)
cg = floyd.FloydConfig(spec, 2.0, g, 8)
v0 = floyd.floyd_distance(c0, x, y).value
vg = floyd.floyd_distance(cg, groups.multiply(spec, g, x), groups.multiply(spec, g, y)).value
print(f"equivariance: {v0!r} == {vg!r}: {v0 == vg}")

# trivial: neighbor of basepoint
nb = groups.str_to_word(spec, "a1")
print(f"o=x, y neighbor: {floyd.floyd_distance(c0, groups.IDENTITY, nb).value} (want 1.0)")

# visibility on sample of ball(4) pairs
worst = 0.0
for x, y in random.sample([(x, y) for x in ball4 for y in ball4], 200):
    lhs, rhs = floyd.visibility_bound_check(cfg, x, y)
    worst = max(worst, lhs - rhs)
print(f"visibility ball(4) sample: worst lhs-rhs = {worst:.3e} (want <= 0)")

# non-tree Dijkstra: Z^2 * Z, compare against brute oracle
spec2 = groups.GroupSpec.parse("Z^2 * Z")
cfg2 = floyd.FloydConfig(spec2, a=2.0, radius=4)
els2 = groups.ball_elements(spec2, 4)
b22 = groups.ball_elements(spec2, 2)
pairs2 = random.sample([(x, y) for x in b22 for y in b22], 40)
bad2 = 0
for x, y in pairs2:
    mine = floyd.floyd_distance(cfg2, x, y)
    brute = oracles.brute_floyd_distance(spec2, els2, 2.0, groups.IDENTITY, x, y)
    if abs(mine.value - brute) > 1e-12:
        bad2 += 1
        print("MISMATCH2", x, y, mine.value, brute)
print(f"Z2*Z dijkstra-vs-brute: {40-bad2}/40 match")

# transition points: alternating geodesic in Z*Z
spec3 = groups.GroupSpec.parse("Z * Z")
alt = groups.IDENTITY
path = [alt]
for i in range(6):
    letter = ((0, (1,)),) if i % 2 == 0 else ((1, (1,)),)
    alt = groups.multiply(spec3, alt, letter)
    path.append(alt)
tp = [floyd.is_transition_point(path, i, 0, 2, spec3) for i in range(len(path))]
print(f"alternating path eps=0 eta=2: all transition = {all(tp)}")

# path inside Z factor: interior deep
zpath = [((0, (k,)),) if k else groups.IDENTITY for k in range(-3, 4)]
deep = floyd.is_transition_point(zpath, 3, 0, 2, spec3)
print(f"Z-syllable interior eps=0 eta=2: transition={deep} (want False)")

# floyd transition set on alternating path
cfg3 = floyd.FloydConfig(spec3, 2.0, groups.IDENTITY, 10)
ts = floyd.floyd_transition_set(path, 0.1, cfg3)
print(f"floyd_transition_set alt path delta=0.1: {sorted(ts)} (nonempty={bool(ts)})")

# deep Z-syllable drops out as delta grows
zigzag = [groups.IDENTITY]
w = groups.IDENTITY
for letter in ["b", "a", "a", "a", "a", "b"]:
    fi = 0 if letter == "a" else 1
    w = groups.multiply(spec3, w, ((fi, (1,)),))
    zigzag.append(w)
for delta in (0.05, 0.4):
    ts = floyd.floyd_transition_set(zigzag, delta, cfg3)
    print(f"zigzag delta={delta}: {sorted(ts)}")

# fellow travel: same pair transfers witnesses
x = path[0]; y = path[-1]
n_self = floyd.fellow_travel_count(x, y, x, y, 0.1, cfg3, candidate_radius=3)
print(f"fellow_travel self-pair: {n_self} >= |transition set|={len(floyd.floyd_transition_set(path, 0.1, cfg3))}")

print(f"total {time.time()-t0:.1f}s")

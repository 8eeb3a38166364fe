import sys, time, math
sys.path.insert(0, "src")
sys.path.insert(0, "tests")
from martinlab import groups, measures, potential, ancona
import oracles

t0 = time.time()

# weak ratio on Z: constant across |x-z| with y between
spec = groups.GroupSpec.parse("Z")
mu = measures.make_measure(spec, "srw")
r = 0.7
vals = []
for m in (2, 3, 5):
    x = groups.str_to_word(spec, f"a^-{m}")
    z = groups.str_to_word(spec, f"a^{m}")
    est = ancona.weak_ancona_ratio(mu, r, x, groups.IDENTITY, z)
    vals.append(est.mid)
want = 1.0 / oracles.z_srw_green(r)
print(f"Z weak ratio: {['%.10f' % v for v in vals]} want {want:.10f} floor={ancona.universal_ratio_floor(mu, r):.10f}")

# strong defect degenerate pair = 0
x = groups.str_to_word(spec, "a^-2")
est = ancona.strong_ancona_defect(mu, r, x, groups.IDENTITY, x, groups.str_to_word(spec, "a^3"))
print(f"degenerate-pair defect: [{est.lower}, {est.upper}] (want [0,0])")

# NN tree H-config defect should be ~0 (bracket noise only)
spec2 = groups.GroupSpec.parse("F_2")
mu2 = measures.make_measure(spec2, "srw")
cfgs = ancona.prefix_fellow_travel_configs(spec2, (2, 4), arm=2)
for cid, x, y, xp, yp, n in cfgs:
    est = ancona.strong_ancona_defect(mu2, 0.9, x, y, xp, yp)
    print(f"NN F2 {cid}: defect=[{est.lower:.3e},{est.upper:.3e}] "
          f"(cancellation predicts 0)")

# jump-2 measure on F_2: nonzero defect decaying in n
masses = {}
for name, m in (("a1", 0.2), ("a2", 0.2), ("a1*a2", 0.1)):
    w = groups.str_to_word(spec2, name)
    masses[w] = m
    masses[groups.inverse(spec2, w)] = m
mu_j = measures.FiniteMeasure.from_dict(spec2, masses)
print(f"jump2 measure: letter_uniform={mu_j.is_letter_uniform()} max_jump={mu_j.max_jump}")
R2 = potential.spectral_radius(mu_j)
print(f"jump2 R bracket: [{R2.lower:.6f}, {R2.upper:.6f}]")
r6 = 0.9 * R2.lower
t = time.time()
defs = []
for cid, x, y, xp, yp, n in ancona.prefix_fellow_travel_configs(spec2, (2, 3, 4, 5, 6), arm=2):
    est = ancona.strong_ancona_defect(mu_j, r6, x, y, xp, yp)
    defs.append((n, est))
    print(f"jump2 {cid}: defect=[{est.lower:.4e},{est.upper:.4e}] mid={est.mid:.4e}")
pts = [(n, math.log(e.mid)) for n, e in defs if e.mid > 0]
slope = ancona._fit_slope([p[0] for p in pts], [p[1] for p in pts])
print(f"jump2 log-defect slope: {slope:.4f} (want < 0), time={time.time()-t:.1f}s")

# avoidance decay on F_2 center configs
t = time.time()
x = groups.str_to_word(spec2, "a1^-1*a2^-1*a1^-1*a2^-1*a1^-1*a2^-1")
y = groups.str_to_word(spec2, "a2*a1*a2*a1*a2*a1")
zoff = groups.str_to_word(spec2, "a1*a1*a1*a1*a1")  # off-geodesic, d(z,[x,y]) = 5
R_f2 = potential.spectral_radius(mu2)
r7 = 0.9 * R_f2.lower
curve = ancona.avoidance_decay(mu2, r7, x, y, zoff, [0, 1, 2, 3, 4], window=8)
logs = []
for eta, est in curve:
    print(f"eta={eta}: val={est.mid:.6e} doubling={est.meta['window_doubling']}")
    logs.append(math.log(est.mid))
d2 = [logs[i+1] - 2*logs[i] + logs[i-1] for i in range(1, len(logs)-1)]
print(f"second differences of log: {['%.4f' % v for v in d2]} (want <= 0), time={time.time()-t:.1f}s")

# Z cut vertex: exact zero
x = groups.str_to_word(spec, "a^-3")
y = groups.str_to_word(spec, "a^3")
curve = ancona.avoidance_decay(mu, 0.8, x, y, groups.IDENTITY, [1, 2], window=6)
print(f"Z cut-vertex values: {[est.mid for _, est in curve]} (want exact 0)")

print(f"total {time.time()-t0:.1f}s")

import sys, time, math
sys.path.insert(0, "src")
sys.path.insert(0, "tests")
import numpy as np
from martinlab import groups, measures, potential
import oracles

t0 = time.time()

# 1. Z SRW green at r=0.5
spec = groups.GroupSpec.parse("Z")
mu = measures.make_measure(spec, "srw")
est = potential.green(mu, 0.5)
want = oracles.z_srw_green(0.5)
print(f"Z green r=0.5: [{est.lower:.12f}, {est.upper:.12f}] want {want:.12f} "
      f"in={est.lower <= want <= est.upper} width={est.width:.2e} cert={est.certified}")

# off-diagonal
x = groups.str_to_word(spec, "a^3")
est = potential.green(mu, 0.5, groups.IDENTITY, x)
want = oracles.z_srw_green_xy(0.5, 3)
print(f"Z green(e,a^3): [{est.lower:.12f}, {est.upper:.12f}] want {want:.12f} in={est.lower <= want <= est.upper}")

# 2. F_2 green
spec2 = groups.GroupSpec.parse("F_2")
mu2 = measures.make_measure(spec2, "srw")
for r in (0.3, 0.8, 1.0):
    est = potential.green(mu2, r)
    want = oracles.tree_green(r, 4)
    print(f"F2 green r={r}: [{est.lower:.9f}, {est.upper:.9f}] want {want:.9f} "
          f"in={est.lower <= want <= est.upper} cert={est.certified}")

xw = groups.str_to_word(spec2, "a1*a2*a1")
est = potential.green(mu2, 0.9, groups.IDENTITY, xw)
want = oracles.tree_green_xy(0.9, 4, 3)
print(f"F2 green(e,aba) r=0.9: [{est.lower:.9f}, {est.upper:.9f}] want {want:.9f} in={est.lower <= want <= est.upper}")

# 3. spectral radius F2
t = time.time()
sr = potential.spectral_radius(mu2, n_max=40)
dt = time.time() - t
R = oracles.tree_spectral_radius(4)
print(f"F2 R: [{sr.lower:.6f}, {sr.upper:.6f}] true {R:.6f} "
      f"in={sr.lower <= R <= sr.upper} relwidth={(sr.upper-sr.lower)/R:.4%} "
      f"lo_off={(sr.lower-R)/R:+.4%} hi_off={(sr.upper-R)/R:+.4%} time={dt:.2f}s")

# 4. Z spectral radius
sr = potential.spectral_radius(mu, n_max=40)
print(f"Z R: [{sr.lower:.8f}, {sr.upper:.8f}] true 1 in={sr.lower <= 1.0 <= sr.upper} "
      f"relwidth={(sr.upper-sr.lower):.2%}")

# 5. lazy Z^2
spec3 = groups.GroupSpec.parse("Z^2")
mu3 = measures.make_measure(spec3, "lazy_srw", alpha=0.5)
t = time.time()
sr3 = potential.spectral_radius(mu3, n_max=40)
print(f"lazyZ2 R: [{sr3.lower:.6f}, {sr3.upper:.6f}] true 1 in={sr3.lower <= 1.0 <= sr3.upper} "
      f"relwidth={(sr3.upper-sr3.lower):.2%} time={time.time()-t:.2f}s")

# 6. derivative identity on Z at r=0.5
t = time.time()
pair = potential.green_derivative(mu, 0.5)
want = oracles.z_srw_rG_derivative(0.5)
print(f"Z rG' r=0.5: fd=[{pair.finite_difference.lower:.8f},{pair.finite_difference.upper:.8f}] "
      f"ds=[{pair.double_sum.lower:.8f},{pair.double_sum.upper:.8f}] want {want:.8f} "
      f"overlap={pair.overlap} fd_in={pair.finite_difference.lower <= want <= pair.finite_difference.upper} "
      f"ds_in={pair.double_sum.lower <= want <= pair.double_sum.upper} time={time.time()-t:.2f}s")

# F2 derivative at r = 0.7 R
t = time.time()
R = oracles.tree_spectral_radius(4)
pair2 = potential.green_derivative(mu2, 0.7 * R)
print(f"F2 rG' r=0.7R: overlap={pair2.overlap} fd_w={pair2.finite_difference.width:.3e} "
      f"ds_w={pair2.double_sum.width:.3e} cert_fd={pair2.finite_difference.certified} "
      f"cert_ds={pair2.double_sum.certified} time={time.time()-t:.2f}s")

# 7. restricted green vs brute on Z
allowed = [groups.str_to_word(spec, f"a^{k}") for k in (1, 2)]
est = potential.green_restricted(mu, 0.6, groups.IDENTITY, groups.str_to_word(spec, "a^3"), allowed)
mu_dict = dict(mu.masses)
want = oracles.brute_restricted_green(spec, mu_dict, 0.6, groups.IDENTITY,
                                      groups.str_to_word(spec, "a^3"), set(allowed), 400)
print(f"Z restricted: [{est.lower:.10f},{est.upper:.10f}] brute {want:.10f} in={est.lower - 1e-9 <= want <= est.upper + 1e-9}")

# series route agrees
est2 = potential.green_restricted(mu, 0.6, groups.IDENTITY, groups.str_to_word(spec, "a^3"), allowed, method="series")
print(f"Z restricted series: [{est2.lower:.10f},{est2.upper:.10f}] overlap={est.overlaps(est2)}")

# 8. martin kernel radial on F2: K(a^2, a^5) vs (1/F)^2... K_r(x,y)=G(x,y)/G(e,y)
a2 = groups.str_to_word(spec2, "a1^2")
a5 = groups.str_to_word(spec2, "a1^5")
mk = potential.martin_kernel(mu2, 0.9, a2, a5)
F = oracles.tree_first_passage(0.9, 4)
want = (1.0 / F) ** 2
print(f"F2 K(a^2,a^5) r=0.9: [{mk.lower:.8f},{mk.upper:.8f}] want(1/F)^2={want:.8f} in={mk.lower <= want <= mk.upper}")

# 9. sphere green sum on F2
sg = potential.sphere_green_sum(mu2, 0.9, 3)
g3 = oracles.tree_green_xy(0.9, 4, 3)
want = 4 * 3**2 * g3**2
print(f"F2 u_3(0.9): [{sg.lower:.8f},{sg.upper:.8f}] want {want:.8f} in={sg.lower <= want <= sg.upper}")

# 10. parabolic green sum on Z*Z factor 0 eta 0
spec4 = groups.GroupSpec.parse("Z * Z")
mu4 = measures.make_measure(spec4, "srw")
ks, cums, ratios = potential.parabolic_green_sum(mu4, 0.8, 0, 0, k_max=8)
F4 = oracles.tree_first_passage(0.8, 4)
print(f"Z*Z parab ratios: {['%.6f' % x for x in ratios[1:]]} want F^2={F4*F4:.6f}")

print(f"total {time.time()-t0:.1f}s")
